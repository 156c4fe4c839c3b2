use std::path::{Path, PathBuf};

use serde::Serialize;
use smc2_core::Obs;

use crate::error::{CliError, CliResult};

/// Scale applied to log-returns built from prices.
pub const RETURN_SCALE: f64 = 316.227_766_016_837_94;

/// Truth written next to simulated data.
#[derive(Debug, Serialize)]
pub struct Truth<'a> {
    pub model: &'a str,
    pub seed: u64,
    pub theta_names: Vec<String>,
    pub theta: &'a [f64],
    pub state_names: Vec<String>,
    pub states: &'a [Vec<f64>],
}

/// `data.csv` -> `data.truth.json`.
pub fn truth_path(data: &Path) -> PathBuf {
    data.with_extension("truth.json")
}

fn is_missing(cell: &str) -> bool {
    let c = cell.trim();
    c.is_empty() || c.eq_ignore_ascii_case("na") || c.eq_ignore_ascii_case("nan")
}

/// Writes `t, y1, ..., yd`; missing observations are empty cells.
pub fn write_series(path: &Path, ys: &[Obs], obs_dim: usize) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=obs_dim).map(|i| format!("y{i}")));
    w.write_record(&header).map_err(|e| csv_io(path, e))?;
    for (k, y) in ys.iter().enumerate() {
        let mut row = vec![(k + 1).to_string()];
        match y.as_option() {
            Some(v) => row.extend(v.iter().map(|x| x.to_string())),
            None => row.extend(std::iter::repeat_n(String::new(), obs_dim)),
        }
        w.write_record(&row).map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(CliError::io(path))
}

/// Reads a series written by [`write_series`] (or by hand). A row with
/// every value missing is a missing observation.
pub fn read_series(path: &Path, obs_dim: usize) -> CliResult<Vec<Obs>> {
    let rows = read_rows(path)?;
    rows.into_iter()
        .map(|(line, cells)| {
            if cells.len() != obs_dim {
                return Err(data_err(path, format!("line {line}: expected {obs_dim} values, found {}", cells.len())));
            }
            if cells.iter().all(|c| c.is_none()) {
                return Ok(Obs::missing(obs_dim));
            }
            let values = cells
                .into_iter()
                .collect::<Option<Vec<f64>>>()
                .ok_or_else(|| data_err(path, format!("line {line}: partially missing observation")))?;
            Ok(Obs::new(values))
        })
        .collect()
}

/// Reads `t, price` and returns `y_t = RETURN_SCALE * log(s_t / s_{t-1})`.
pub fn read_prices(path: &Path) -> CliResult<Vec<Obs>> {
    let rows = read_rows(path)?;
    let mut prices = Vec::with_capacity(rows.len());
    for (line, cells) in rows {
        match cells.as_slice() {
            [Some(p)] if *p > 0.0 => prices.push(*p),
            _ => return Err(data_err(path, format!("line {line}: expected one positive price"))),
        }
    }
    Ok(prices.windows(2).map(|w| Obs::scalar(RETURN_SCALE * (w[1] / w[0]).ln())).collect())
}

fn read_rows(path: &Path) -> CliResult<Vec<(usize, Vec<Option<f64>>)>> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_io(path, e))?;
    let mut out = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| data_err(path, e.to_string()))?;
        let cells = rec
            .iter()
            .skip(1)
            .map(|c| {
                if is_missing(c) {
                    Ok(None)
                } else {
                    c.parse::<f64>()
                        .map(Some)
                        .map_err(|_| data_err(path, format!("line {line}: cannot parse {c:?}")))
                }
            })
            .collect::<CliResult<Vec<_>>>()?;
        out.push((line, cells));
    }
    Ok(out)
}

fn data_err(path: &Path, reason: String) -> CliError {
    CliError::Data {
        path: path.to_path_buf(),
        reason,
    }
}

fn csv_io(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => CliError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => data_err(path, format!("{other:?}")),
    }
}
