use std::fs;
use std::path::Path;

use serde_json::json;

use crate::experiment::{ExperimentResult, MAX_FAILURE_RATE};
use crate::HarnessError;

pub const TRIALS_HEADER: [&str; 14] = [
    "family",
    "method",
    "rho",
    "p0",
    "N",
    "rep",
    "fdp",
    "power",
    "n_selected",
    "tau",
    "lambda_cv",
    "seed",
    "wall_ms",
    "status",
];

pub const SUMMARY_HEADER: [&str; 11] =
    ["family", "method", "rho", "p0", "N", "mean_fdp", "se_fdp", "mean_power", "se_power", "n_ok", "n_trials"];

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> HarnessError + '_ {
    move |e| HarnessError::Io(path.display().to_string(), e)
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> HarnessError + '_ {
    move |e| HarnessError::Io(path.display().to_string(), e.into())
}

fn num(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        x.to_string()
    }
}

/// Writes `trials.csv`, `summary.csv` and `run.json` into `dir`.
pub fn emit_results(result: &ExperimentResult, dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let config = &result.config;
    // HMM studies have no correlation parameter.
    let rho = |r: f64| if config.family == crate::config::Family::Hmm { String::new() } else { num(r) };

    let path = dir.join("trials.csv");
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    w.write_record(TRIALS_HEADER).map_err(csv_err(&path))?;
    for r in &result.records {
        let mut row = vec![
            config.family.to_string(),
            config.method.to_string(),
            rho(r.point.rho),
            num(r.point.p0),
            r.point.n.to_string(),
            r.rep.to_string(),
        ];
        match &r.outcome {
            Ok(s) => row.extend([
                num(s.fdp),
                num(s.power),
                s.n_selected.to_string(),
                num(s.tau),
                num(s.lambda_cv),
            ]),
            Err(_) => row.extend(std::iter::repeat_n(String::new(), 5)),
        }
        row.push(r.seed.to_string());
        row.push(r.wall_ms.map(num).unwrap_or_default());
        row.push(match &r.outcome {
            Ok(_) => "ok".into(),
            Err(e) => format!("error: {e}"),
        });
        w.write_record(&row).map_err(csv_err(&path))?;
    }
    w.flush().map_err(io_err(&path))?;

    let path = dir.join("summary.csv");
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    w.write_record(SUMMARY_HEADER).map_err(csv_err(&path))?;
    for s in &result.summary {
        w.write_record([
            config.family.to_string(),
            config.method.to_string(),
            rho(s.point.rho),
            num(s.point.p0),
            s.point.n.to_string(),
            num(s.mean_fdp),
            num(s.se_fdp),
            num(s.mean_power),
            num(s.se_power),
            s.n_ok.to_string(),
            config.replicates.to_string(),
        ])
        .map_err(csv_err(&path))?;
    }
    w.flush().map_err(io_err(&path))?;

    let path = dir.join("run.json");
    let run = json!({
        "config": config,
        "code_version": env!("CARGO_PKG_VERSION"),
        "master_seed": config.master_seed,
        "support": result.support,
        "trials": result.records.len(),
        "failed_trials": result.failures(),
        "max_failure_rate": MAX_FAILURE_RATE,
        "aborted": result.aborted(),
    });
    let text = serde_json::to_string_pretty(&run).map_err(|e| HarnessError::Config(e.to_string()))?;
    fs::write(&path, text + "\n").map_err(io_err(&path))?;
    Ok(())
}
