use std::fs;
use std::path::Path;

use missknock_core::linalg::Matrix;
use missknock_core::mvn::build_gaussian_knockoff_sampler;
use missknock_core::pipeline::{
    posterior_knockoffs, univariate_knockoffs, Mechanism, MvnObservedKnockoffs, MvnPosterior,
};
use missknock_core::random::trial_rng;
use missknock_core::{KnockoffPair, MaskedSample, MvnModel};
use serde::{Deserialize, Serialize};

use crate::config::Method;
use crate::HarnessError;

/// A table with NaN marking missing cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

/// JSON form of a Gaussian model: `{"mean": [...], "covariance": [[...], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MvnSpec {
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
}

impl MvnSpec {
    pub fn to_model(&self) -> Result<MvnModel, HarnessError> {
        let p = self.mean.len();
        if self.covariance.len() != p || self.covariance.iter().any(|r| r.len() != p) {
            return Err(HarnessError::Data(format!("covariance must be {p}×{p}")));
        }
        Ok(MvnModel::new(self.mean.clone(), Matrix::from_fn(p, p, |i, j| self.covariance[i][j]))?)
    }

    pub fn from_model(model: &MvnModel) -> Self {
        let p = model.dim();
        let cov = model.covariance();
        Self { mean: model.mean().to_vec(), covariance: (0..p).map(|i| (0..p).map(|j| cov[(i, j)]).collect()).collect() }
    }
}

fn is_missing_token(cell: &str) -> bool {
    matches!(cell.trim().to_ascii_lowercase().as_str(), "" | "nan" | "na")
}

pub fn read_dataset(path: &Path) -> Result<Dataset, HarnessError> {
    let data_err = |e: csv::Error| HarnessError::Data(format!("{}: {e}", path.display()));
    let mut reader = csv::Reader::from_path(path).map_err(data_err)?;
    let header: Vec<String> = reader.headers().map_err(data_err)?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(data_err)?;
        let row = record
            .iter()
            .map(|cell| {
                if is_missing_token(cell) {
                    Ok(f64::NAN)
                } else {
                    cell.trim().parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                        HarnessError::Data(format!("row {}: `{cell}` is not a number", line + 1))
                    })
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok(Dataset { header, rows })
}

/// Column means and pairwise-complete covariances. If the pairwise matrix is
/// not positive definite, off-diagonal entries are shrunk toward zero in
/// steps of 0.05 until it is.
pub fn estimate_mvn(data: &Dataset) -> Result<MvnModel, HarnessError> {
    let p = data.header.len();
    let observed = |j: usize| data.rows.iter().map(move |r| r[j]).filter(|v| !v.is_nan());
    let mut mean = vec![0.0; p];
    for (j, m) in mean.iter_mut().enumerate() {
        let count = observed(j).count();
        if count < 2 {
            return Err(HarnessError::Data(format!("column `{}` has fewer than two observed values", data.header[j])));
        }
        *m = observed(j).sum::<f64>() / count as f64;
    }
    let mut cov = Matrix::from_fn(p, p, |_, _| 0.0);
    for i in 0..p {
        for j in 0..=i {
            let pairs: Vec<(f64, f64)> =
                data.rows.iter().map(|r| (r[i], r[j])).filter(|(a, b)| !a.is_nan() && !b.is_nan()).collect();
            let c = if pairs.len() < 2 {
                0.0
            } else {
                let (mi, mj) = (
                    pairs.iter().map(|x| x.0).sum::<f64>() / pairs.len() as f64,
                    pairs.iter().map(|x| x.1).sum::<f64>() / pairs.len() as f64,
                );
                pairs.iter().map(|(a, b)| (a - mi) * (b - mj)).sum::<f64>() / (pairs.len() - 1) as f64
            };
            cov[(i, j)] = c;
            cov[(j, i)] = c;
        }
    }
    if (0..p).any(|j| cov[(j, j)] <= 0.0) {
        return Err(HarnessError::Data("a column has zero observed variance".into()));
    }
    for step in 0..=20 {
        let keep = 1.0 - 0.05 * step as f64;
        let shrunk = Matrix::from_fn(p, p, |i, j| if i == j { cov[(i, j)] } else { keep * cov[(i, j)] });
        if let Ok(model) = MvnModel::new(mean.clone(), shrunk) {
            if missknock_core::linalg::cholesky(model.covariance()).is_some() {
                return Ok(model);
            }
        }
    }
    Err(HarnessError::Data("could not obtain a positive definite covariance".into()))
}

/// Imputed rows and their knockoffs.
pub fn impute_dataset(
    data: &Dataset,
    model: &MvnModel,
    method: Method,
    seed: u64,
) -> Result<Vec<KnockoffPair<f64>>, HarnessError> {
    if model.dim() != data.header.len() {
        return Err(HarnessError::Data(format!(
            "model has {} coordinates but the data has {} columns",
            model.dim(),
            data.header.len()
        )));
    }
    let rows = data
        .rows
        .iter()
        .map(|r| {
            let mask: Vec<bool> = r.iter().map(|v| v.is_nan()).collect();
            MaskedSample::new(r, &mask)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut rng = trial_rng(seed, 0, 0);
    Ok(match method {
        Method::Posterior => {
            let mut sampler = build_gaussian_knockoff_sampler(model)?;
            posterior_knockoffs(&rows, &mut MvnPosterior::new(model.clone()), &mut sampler, &mut rng)?
        }
        Method::Univariate => univariate_knockoffs(
            &rows,
            model,
            &mut MvnObservedKnockoffs::new(model.clone()),
            Mechanism::Mcar,
            &mut rng,
        )?,
        other => return Err(HarnessError::Config(format!("method {other} needs an hmm model"))),
    })
}

pub fn write_matrix(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<f64>>) -> Result<(), HarnessError> {
    let io = |e: csv::Error| HarnessError::Io(path.display().to_string(), e.into());
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| HarnessError::Io(dir.display().to_string(), e))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(io)?;
    }
    w.flush().map_err(|e| HarnessError::Io(path.display().to_string(), e))
}
