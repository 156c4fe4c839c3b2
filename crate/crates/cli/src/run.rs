use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use serde::Serialize;
use serde_json::json;
use smc2_core::ibis::weighted_moments;
use smc2_core::kalman::{kalman_step, KalmanState};
use smc2_core::models::beat_probability;
use smc2_core::pf::PfConfig;
use smc2_core::pmmh::pmmh_run;
use smc2_core::rng::tags;
use smc2_core::smc2::Smc2Sampler;
use smc2_core::{simulate, BuiltinModel, Ibis, Obs, PfState, RngStream, StateSpaceModel, StepDiagnostics};

use crate::config::{Algorithm, ExperimentConfig};
use crate::data::{read_prices, read_series, truth_path, write_series, Truth};
use crate::error::{CliError, CliResult};

/// One line of `diagnostics.jsonl`. Fields an algorithm does not produce
/// are omitted.
#[derive(Debug, Default, Serialize)]
pub struct Record {
    pub t: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ess: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ess_post: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resampled: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acceptance_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_x: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exchanged: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub degenerate: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub filtered_mean: Option<Vec<f64>>,
    #[serde(rename = "log_Lhat_t")]
    pub log_lhat_t: f64,
    pub cum_log_evidence: f64,
    pub wall_ms: f64,
}

impl Record {
    fn smc2(d: &StepDiagnostics, wall_ms: f64) -> Self {
        Self {
            t: d.t,
            ess: Some(d.ess),
            ess_post: Some(d.ess_post),
            resampled: Some(d.resampled),
            acceptance_rate: d.acceptance_rate,
            n_x: Some(d.n_x),
            exchanged: Some(d.exchanged),
            log_lhat_t: d.log_lhat_t,
            cum_log_evidence: d.cum_log_evidence,
            wall_ms,
            ..Self::default()
        }
    }
}

struct Jsonl {
    path: PathBuf,
    out: BufWriter<File>,
}

impl Jsonl {
    fn create(path: PathBuf) -> CliResult<Self> {
        let f = File::create(&path).map_err(CliError::io(&path))?;
        Ok(Self {
            out: BufWriter::new(f),
            path,
        })
    }

    fn write(&mut self, r: &Record) -> CliResult<()> {
        let line = serde_json::to_string(r).expect("records serialize");
        writeln!(self.out, "{line}").map_err(CliError::io(&self.path))?;
        self.out.flush().map_err(CliError::io(&self.path))
    }
}

fn ms_since(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

fn write_csv(path: &Path, header: &[String], rows: impl IntoIterator<Item = Vec<f64>>) -> CliResult<()> {
    let io = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(source) => CliError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => CliError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::other(format!("{other:?}")),
        },
    };
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(io)?;
    }
    w.flush().map_err(CliError::io(path))
}

fn write_json(path: &Path, value: &serde_json::Value) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("json values serialize");
    std::fs::write(path, text + "\n").map_err(CliError::io(path))
}

fn create_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path).map_err(CliError::io(path))
}

fn moments_json(names: &[String], moments: &[(f64, f64)]) -> serde_json::Value {
    names
        .iter()
        .zip(moments)
        .map(|(n, (m, v))| json!({ "name": n, "mean": m, "var": v }))
        .collect()
}

/// Simulates `t_len` observations and writes them with a truth sidecar.
/// Returns the data path.
pub fn simulate_data(cfg: &ExperimentConfig) -> CliResult<PathBuf> {
    let t_len = cfg.t_len.ok_or_else(|| CliError::Config("simulate needs t_len".into()))?;
    let model = &cfg.model;
    let root = RngStream::new(cfg.seed);
    let theta = match &cfg.theta {
        Some(th) => th.clone(),
        None => model.prior_sample(&mut root.split(tags::PRIOR)),
    };
    let (states, ys) = simulate(model, &theta, t_len, &mut root.split(tags::PROPAGATE));
    let path = cfg.simulate_target();
    write_series(&path, &ys, StateSpaceModel::<f64>::obs_dim(model))?;
    let truth = Truth {
        model: cfg.model_name(),
        seed: cfg.seed,
        theta_names: StateSpaceModel::<f64>::theta_names(model),
        theta: &theta,
        state_names: StateSpaceModel::<f64>::state_names(model),
        states: &states,
    };
    let tp = truth_path(&path);
    let text = serde_json::to_string_pretty(&truth).expect("truth serializes");
    std::fs::write(&tp, text + "\n").map_err(CliError::io(&tp))?;
    info!("wrote {} observations to {}", ys.len(), path.display());
    Ok(path)
}

pub fn load_data(cfg: &ExperimentConfig) -> CliResult<Vec<Obs>> {
    let path = cfg
        .data
        .as_deref()
        .ok_or_else(|| CliError::Config("data path is required".into()))?;
    let ys = if cfg.raw_prices {
        read_prices(path)?
    } else {
        read_series(path, StateSpaceModel::<f64>::obs_dim(&cfg.model))?
    };
    if ys.is_empty() {
        return Err(CliError::Data {
            path: path.to_path_buf(),
            reason: "no observations".into(),
        });
    }
    Ok(ys)
}

/// Runs the configured algorithm and writes every output into
/// `cfg.output`.
pub fn run(cfg: &ExperimentConfig) -> CliResult<()> {
    cfg.validate()?;
    if cfg.algorithm == Algorithm::Simulate {
        simulate_data(cfg)?;
        return Ok(());
    }
    let ys = load_data(cfg)?;
    create_dir(&cfg.output)?;
    if !cfg.checkpoints.is_empty() && matches!(cfg.algorithm, Algorithm::Smc2 | Algorithm::Ibis | Algorithm::Pf) {
        create_dir(&cfg.output.join("checkpoints"))?;
    }
    let start = Instant::now();
    let details = match cfg.algorithm {
        Algorithm::Smc2 => run_smc2(cfg, &ys)?,
        Algorithm::Ibis => run_ibis(cfg, &ys)?,
        Algorithm::Pmmh => run_pmmh(cfg, &ys)?,
        Algorithm::Pf => run_pf(cfg, &ys)?,
        Algorithm::Kalman => run_kalman(cfg, &ys)?,
        Algorithm::Simulate => unreachable!("handled above"),
    };
    let mut summary = json!({
        "algorithm": cfg.algorithm,
        "model": cfg.model_name(),
        "seed": cfg.seed,
        "t": ys.len(),
        "runtime_s": start.elapsed().as_secs_f64(),
        "config": cfg,
    });
    summary.as_object_mut().unwrap().extend(details);
    write_json(&cfg.output.join("summary.json"), &summary)
}

type Details = serde_json::Map<String, serde_json::Value>;

fn details(v: serde_json::Value) -> Details {
    match v {
        serde_json::Value::Object(m) => m,
        _ => unreachable!("details are objects"),
    }
}

fn checkpoint_path(cfg: &ExperimentConfig, t: usize) -> PathBuf {
    cfg.output.join("checkpoints").join(format!("particles_t{t}.csv"))
}

fn run_smc2(cfg: &ExperimentConfig, ys: &[Obs]) -> CliResult<Details> {
    let model = &cfg.model;
    let theta_names = StateSpaceModel::<f64>::theta_names(model);
    let state_names = StateSpaceModel::<f64>::state_names(model);
    let mut s = Smc2Sampler::<f64, BuiltinModel>::new(model, cfg.smc2.clone(), cfg.seed)?;
    let mut diag = Jsonl::create(cfg.output.join("diagnostics.jsonl"))?;
    for y in ys {
        let t0 = Instant::now();
        let d = s.step(y.clone())?.clone();
        diag.write(&Record::smc2(&d, ms_since(t0)))?;
        if cfg.checkpoints.contains(&d.t) {
            let sample = s.select_trajectories(&s.selection_stream(), false)?;
            let mut header = vec!["log_weight".to_string()];
            header.extend(theta_names.iter().cloned());
            header.extend(state_names.iter().cloned());
            let rows = (0..sample.thetas.len()).map(|m| {
                let mut row = vec![sample.log_weights[m]];
                row.extend(&sample.thetas[m]);
                row.extend(&sample.states[m]);
                row
            });
            write_csv(&checkpoint_path(cfg, d.t), &header, rows)?;
        }
    }
    let moments = (0..theta_names.len()).map(|i| s.moments(i)).collect::<smc2_core::Result<Vec<_>>>()?;
    let mut out = details(json!({
        "log_evidence": s.log_evidence(),
        "final_n_x": s.n_x(),
        "final_ess": s.ess()?,
        "rejuvenations": s.diagnostics().iter().filter(|d| d.resampled).count(),
        "moments": moments_json(&theta_names, &moments),
    }));
    if let BuiltinModel::Athletics(_) = model {
        if cfg.smc2.store_trajectories {
            out.insert("athletics".into(), athletics_probabilities(cfg, &s)?);
        } else {
            warn!("record probabilities need smc2.store_trajectories = true; skipped");
        }
    }
    Ok(out)
}

/// Writes `athletics.csv` with smoothed `P(y_t <= record)`,
/// `P(y_t <= previous_best)` and their ratio for every year.
fn athletics_probabilities(cfg: &ExperimentConfig, s: &Smc2Sampler<f64, BuiltinModel>) -> CliResult<serde_json::Value> {
    let sample = s.select_trajectories(&s.selection_stream(), true)?;
    let paths = sample.trajectories.as_ref().expect("paths requested");
    let (rec, prev) = (cfg.athletics.record, cfg.athletics.previous_best);
    let mut rows = Vec::with_capacity(s.t());
    for t in 0..s.t() {
        let mu: Vec<f64> = paths.iter().map(|p| p[t][0]).collect();
        let p_rec = beat_probability(&sample.log_weights, &sample.thetas, &mu, rec)?;
        let p_prev = beat_probability(&sample.log_weights, &sample.thetas, &mu, prev)?;
        let cond = if p_prev > 0.0 { p_rec / p_prev } else { f64::NAN };
        rows.push(vec![(t + 1) as f64, p_rec, p_prev, cond]);
    }
    let header = ["t".to_string(), format!("p_{rec}"), format!("p_{prev}"), "p_cond".to_string()];
    write_csv(&cfg.output.join("athletics.csv"), &header, rows.clone())?;
    let last = rows.last().expect("nonempty data");
    Ok(json!({ "record": rec, "previous_best": prev, "final_p_record": last[1], "final_p_previous_best": last[2], "final_p_cond": last[3] }))
}

fn run_ibis(cfg: &ExperimentConfig, ys: &[Obs]) -> CliResult<Details> {
    let model = &cfg.model;
    if StateSpaceModel::<f64>::linear_gaussian(model, &model.prior_sample(&mut RngStream::new(0))).is_none() {
        return Err(CliError::Config(format!("ibis needs an exact likelihood; model {} has none", cfg.model_name())));
    }
    let theta_names = StateSpaceModel::<f64>::theta_names(model);
    let state_names = StateSpaceModel::<f64>::state_names(model);
    let mut ibis = Ibis::new(model, cfg.ibis, cfg.seed);
    let mut diag = Jsonl::create(cfg.output.join("diagnostics.jsonl"))?;
    for y in ys {
        let t0 = Instant::now();
        ibis.step(y.clone())?;
        let h = ibis.history.last().expect("just stepped");
        diag.write(&Record {
            t: h.t,
            ess: Some(h.ess),
            resampled: Some(h.resampled),
            acceptance_rate: h.acceptance_rate,
            log_lhat_t: h.log_increment,
            cum_log_evidence: h.log_evidence,
            wall_ms: ms_since(t0),
            ..Record::default()
        })?;
        if cfg.checkpoints.contains(&h.t) {
            let cloud = &ibis.cloud;
            let mut header = vec!["log_weight".to_string()];
            header.extend(theta_names.iter().cloned());
            header.extend(state_names.iter().map(|n| format!("mean_{n}")));
            let rows = (0..cloud.len()).map(|m| {
                let mut row = vec![cloud.log_weights[m]];
                row.extend(&cloud.thetas[m]);
                row.extend(cloud.attachments[m].as_ref().map_or(&[][..], |k| &k.mean[..]));
                row
            });
            write_csv(&checkpoint_path(cfg, h.t), &header, rows)?;
        }
    }
    let moments = (0..theta_names.len()).map(|i| ibis.cloud.moments(i)).collect::<smc2_core::Result<Vec<_>>>()?;
    Ok(details(json!({
        "log_evidence": ibis.log_evidence,
        "rejuvenations": ibis.history.iter().filter(|h| h.resampled).count(),
        "moments": moments_json(&theta_names, &moments),
    })))
}

fn run_pmmh(cfg: &ExperimentConfig, ys: &[Obs]) -> CliResult<Details> {
    let model = &cfg.model;
    let theta_names = StateSpaceModel::<f64>::theta_names(model);
    let chain = pmmh_run(model, ys, &cfg.pmmh, cfg.seed)?;
    let mut header = vec!["iteration".to_string()];
    header.extend(theta_names.iter().cloned());
    header.extend(["log_zhat".to_string(), "accepted".to_string()]);
    let rows = (0..chain.len()).map(|i| {
        let mut row = vec![i as f64];
        row.extend(&chain.samples[i]);
        row.push(chain.log_zhats[i]);
        row.push(if chain.accepted[i] { 1.0 } else { 0.0 });
        row
    });
    write_csv(&cfg.output.join("chain.csv"), &header, rows)?;
    let kept = chain.kept();
    let zeros = vec![0.0; kept.len()];
    let moments = (0..theta_names.len())
        .map(|i| weighted_moments(&kept.iter().map(|s| s[i]).collect::<Vec<_>>(), &zeros))
        .collect::<smc2_core::Result<Vec<_>>>()?;
    Ok(details(json!({
        "iterations": chain.len(),
        "burn_in": chain.burn_in,
        "acceptance_rate": chain.acceptance_rate(),
        "moments": moments_json(&theta_names, &moments),
    })))
}

fn run_pf(cfg: &ExperimentConfig, ys: &[Obs]) -> CliResult<Details> {
    let model = &cfg.model;
    let theta = cfg.theta.clone().expect("validated");
    let state_names = StateSpaceModel::<f64>::state_names(model);
    let pf_config = PfConfig::new(cfg.pf.n_x).with_scheme(cfg.pf.scheme);
    let base = RngStream::new(cfg.seed).split(tags::PROPAGATE);
    let mut diag = Jsonl::create(cfg.output.join("diagnostics.jsonl"))?;
    let mut pf: Option<PfState> = None;
    for (k, y) in ys.iter().enumerate() {
        let t = k + 1;
        let t0 = Instant::now();
        let mut rng = base.split(t as u64);
        let state = match pf.take() {
            None => PfState::init(model, &theta, y, pf_config, &mut rng),
            Some(mut p) => {
                p.step(model, y, &mut rng);
                p
            }
        };
        let ess = 1.0 / state.norm_weights().iter().map(|w| w * w).sum::<f64>();
        diag.write(&Record {
            t,
            ess: Some(ess),
            n_x: Some(cfg.pf.n_x),
            degenerate: Some(state.degenerate),
            filtered_mean: Some(state.filtered_mean()),
            log_lhat_t: state.last_log_increment,
            cum_log_evidence: state.log_zhat,
            wall_ms: ms_since(t0),
            ..Record::default()
        })?;
        if cfg.checkpoints.contains(&t) {
            let mut header = vec!["log_weight".to_string()];
            header.extend(state_names.iter().cloned());
            let rows = (0..state.n_x()).map(|n| {
                let mut row = vec![state.norm_weights()[n].ln()];
                row.extend(state.particle(n));
                row
            });
            write_csv(&checkpoint_path(cfg, t), &header, rows)?;
        }
        pf = Some(state);
    }
    let pf = pf.expect("nonempty data");
    Ok(details(json!({
        "log_zhat": pf.log_zhat,
        "degenerate": pf.degenerate,
        "filtered_mean": pf.filtered_mean(),
    })))
}

fn run_kalman(cfg: &ExperimentConfig, ys: &[Obs]) -> CliResult<Details> {
    let model = &cfg.model;
    let theta = cfg.theta.clone().expect("validated");
    let sys = StateSpaceModel::<f64>::linear_gaussian(model, &theta)
        .ok_or_else(|| CliError::Config(format!("kalman needs a linear-Gaussian model; {} is not", cfg.model_name())))?;
    let mut diag = Jsonl::create(cfg.output.join("diagnostics.jsonl"))?;
    let mut state = KalmanState::prior(&sys);
    for y in ys {
        let t0 = Instant::now();
        state = kalman_step(&state, y.as_option(), &sys)?;
        diag.write(&Record {
            t: state.t,
            filtered_mean: Some(state.mean.clone()),
            log_lhat_t: state.last_increment,
            cum_log_evidence: state.loglik,
            wall_ms: ms_since(t0),
            ..Record::default()
        })?;
    }
    Ok(details(json!({
        "log_likelihood": state.loglik,
        "filtered_mean": state.mean,
    })))
}
