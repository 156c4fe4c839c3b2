use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use smc2_core::{BuiltinModel, IbisConfig, PmmhConfig, ResampleScheme, Smc2Config, StateSpaceModel};

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Smc2,
    Ibis,
    Pmmh,
    Pf,
    Kalman,
    Simulate,
}

/// Settings for a single particle filter at fixed theta.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PfSection {
    pub n_x: usize,
    pub scheme: ResampleScheme,
}

impl Default for PfSection {
    fn default() -> Self {
        Self {
            n_x: 1000,
            scheme: ResampleScheme::Multinomial,
        }
    }
}

/// Thresholds for the athletics record probabilities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AthleticsSection {
    pub record: f64,
    pub previous_best: f64,
}

impl Default for AthleticsSection {
    fn default() -> Self {
        Self {
            record: 486.11,
            previous_best: 502.62,
        }
    }
}

/// One experiment, read from a TOML or JSON file.
///
/// Relative paths are resolved against the directory of the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    pub model: BuiltinModel,
    #[serde(default)]
    pub seed: u64,
    /// Input series for `run`; output file for `simulate`.
    #[serde(default)]
    pub data: Option<PathBuf>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// Data holds prices; observations are scaled log-returns.
    #[serde(default)]
    pub raw_prices: bool,
    /// Times at which to dump the particle cloud.
    #[serde(default)]
    pub checkpoints: Vec<usize>,
    /// Fixed parameter for `pf`, `kalman` and `simulate`.
    #[serde(default)]
    pub theta: Option<Vec<f64>>,
    /// Series length for `simulate`.
    #[serde(default)]
    pub t_len: Option<usize>,
    #[serde(default)]
    pub smc2: Smc2Config,
    #[serde(default)]
    pub ibis: IbisConfig,
    #[serde(default)]
    pub pmmh: PmmhConfig,
    #[serde(default)]
    pub pf: PfSection,
    #[serde(default)]
    pub athletics: AthleticsSection,
}

fn default_output() -> PathBuf {
    PathBuf::from("output")
}

impl ExperimentConfig {
    /// Reads a config; the format follows the extension (`.json`, else TOML).
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        let mut cfg = Self::parse(&text, path.extension().is_some_and(|e| e == "json"))?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        let base = if base.as_os_str().is_empty() { PathBuf::from(".") } else { base };
        cfg.resolve_paths(&base);
        Ok(cfg)
    }

    pub fn parse(text: &str, json: bool) -> CliResult<Self> {
        let cfg: Self = if json {
            serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?
        };
        Ok(Self {
            model: cfg.model.clone().normalized(),
            ..cfg
        })
    }

    fn resolve_paths(&mut self, base: &Path) {
        let abs = |p: &Path| {
            let joined = if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
            std::path::absolute(&joined).unwrap_or(joined)
        };
        self.data = self.data.as_deref().map(abs);
        self.output = abs(&self.output);
    }

    /// Where `simulate` writes the series.
    pub fn simulate_target(&self) -> PathBuf {
        self.data.clone().unwrap_or_else(|| self.output.join("data.csv"))
    }

    /// Checks ranges and, for inference runs, that the data file exists.
    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        self.model.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let n_theta = StateSpaceModel::<f64>::theta_names(&self.model).len();
        if let Some(theta) = &self.theta {
            if theta.len() != n_theta {
                return bad(format!("theta has {} components, model {} expects {n_theta}", theta.len(), self.model_name()));
            }
        }
        if self.checkpoints.contains(&0) {
            return bad("checkpoint times start at 1".into());
        }
        match self.algorithm {
            Algorithm::Simulate => {
                if self.t_len.is_none() {
                    return bad("simulate needs t_len".into());
                }
                return Ok(());
            }
            Algorithm::Smc2 => self.smc2.validate().map_err(|e| CliError::Config(e.to_string()))?,
            Algorithm::Ibis => {
                if self.ibis.n_theta < 2 {
                    return bad("ibis.n_theta must be at least 2".into());
                }
                if !(self.ibis.gamma > 0.0 && self.ibis.gamma < 1.0) {
                    return bad("ibis.gamma must lie in (0, 1)".into());
                }
                if self.ibis.n_moves < 1 {
                    return bad("ibis.n_moves must be at least 1".into());
                }
            }
            Algorithm::Pmmh => self.pmmh.validate().map_err(|e| CliError::Config(e.to_string()))?,
            Algorithm::Pf | Algorithm::Kalman => {
                if self.theta.is_none() {
                    return bad(format!("{:?} needs a fixed theta", self.algorithm).to_lowercase());
                }
                if self.algorithm == Algorithm::Pf && self.pf.n_x < 1 {
                    return bad("pf.n_x must be at least 1".into());
                }
            }
        }
        match &self.data {
            None => bad("data path is required".into()),
            Some(p) if !p.is_file() => bad(format!("data file {} does not exist", p.display())),
            Some(_) => Ok(()),
        }
    }

    pub fn model_name(&self) -> &'static str {
        StateSpaceModel::<f64>::name(&self.model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_toml_uses_defaults() {
        let cfg = ExperimentConfig::parse("algorithm = \"smc2\"\n[model]\nname = \"sv1\"\n", false).unwrap();
        assert_eq!(cfg.smc2, Smc2Config::default());
        assert_eq!(cfg.model, BuiltinModel::default_for("sv1").unwrap());
        assert_eq!(cfg.output, PathBuf::from("output"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::parse("algorithm = \"smc2\"\nfoo = 1\n[model]\nname = \"lg\"\n", false).is_err());
        assert!(ExperimentConfig::parse("algorithm = \"smc2\"\n[model]\nname = \"lg\"\nfoo = 1\n", false).is_err());
        assert!(ExperimentConfig::parse("algorithm = \"bogus\"\n[model]\nname = \"lg\"\n", false).is_err());
    }

    #[test]
    fn json_round_trip() {
        let text = "algorithm = \"pmmh\"\nseed = 3\ncheckpoints = [2, 5]\n[model]\nname = \"sv2-leverage\"\n[pmmh]\nn_x = 7\n";
        let cfg = ExperimentConfig::parse(text, false).unwrap();
        let back = ExperimentConfig::parse(&serde_json::to_string(&cfg).unwrap(), true).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(back.pmmh.n_x, 7);
    }

    #[test]
    fn ranges_are_validated() {
        let mut cfg = ExperimentConfig::parse("algorithm = \"smc2\"\n[model]\nname = \"lg\"\n[smc2]\ngamma = 1.5\n", false).unwrap();
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
        cfg.smc2.gamma = 0.5;
        cfg.data = Some(PathBuf::from("/definitely/not/here.csv"));
        assert!(matches!(cfg.validate(), Err(CliError::Config(m)) if m.contains("does not exist")));
        cfg.algorithm = Algorithm::Pf;
        cfg.theta = Some(vec![0.1, 0.2]);
        assert!(cfg.validate().is_err());
    }
}
