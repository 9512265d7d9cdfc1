//! Exact Gaussian machinery: conditioning, posterior imputation and the
//! equicorrelated model-X knockoff sampler.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, cholesky_psd, cholesky_solve, cholesky_solve_matrix, min_eigenvalue, Matrix};
use crate::model::{MaskedSample, MvnModel};

const PSD_TOL: f64 = 1e-10;

/// `P(X_m | X_o = x_o)` for one missingness pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianConditional {
    missing: Vec<usize>,
    mean: Vec<f64>,
    covariance: Matrix,
}

impl GaussianConditional {
    pub fn missing(&self) -> &[usize] {
        &self.missing
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn covariance(&self) -> &Matrix {
        &self.covariance
    }
}

/// Everything about conditioning that depends only on the mask: the
/// regression matrix `Σ_mo Σ_oo⁻¹`, the conditional covariance and its factor.
#[derive(Debug, Clone)]
pub struct ConditioningPlan {
    observed: Vec<usize>,
    missing: Vec<usize>,
    regression: Matrix,
    covariance: Matrix,
    factor: Matrix,
}

fn factor_observed_block(block: &Matrix) -> Result<Matrix> {
    if let Some(l) = cholesky(block) {
        return Ok(l);
    }
    let n = block.rows();
    let jitter = 1e-10 * block.trace() / n as f64;
    let mut bumped = block.clone();
    for i in 0..n {
        bumped[(i, i)] += jitter;
    }
    cholesky(&bumped).ok_or(Error::SingularObservedBlock)
}

impl ConditioningPlan {
    pub fn new(model: &MvnModel, mask: &[bool]) -> Result<Self> {
        if mask.len() != model.dim() {
            return Err(Error::DimensionMismatch { expected: model.dim(), found: mask.len() });
        }
        let observed: Vec<usize> = (0..mask.len()).filter(|&j| !mask[j]).collect();
        let missing: Vec<usize> = (0..mask.len()).filter(|&j| mask[j]).collect();
        let sigma = model.covariance();
        let s_mm = sigma.select(&missing, &missing);
        let (regression, covariance) = if observed.is_empty() || missing.is_empty() {
            (Matrix::zeros(missing.len(), observed.len()), s_mm)
        } else {
            let l = factor_observed_block(&sigma.select(&observed, &observed))?;
            let s_om = sigma.select(&observed, &missing);
            // Σ_oo⁻¹ Σ_om, transposed gives Σ_mo Σ_oo⁻¹.
            let solved = cholesky_solve_matrix(&l, &s_om);
            let regression = solved.transpose();
            let reduction = regression.matmul(&s_om);
            let mut cov = s_mm.sub(&reduction);
            symmetrize(&mut cov);
            (regression, cov)
        };
        let factor = cholesky_psd(&covariance, PSD_TOL).ok_or(Error::NotPositiveDefinite)?;
        Ok(Self { observed, missing, regression, covariance, factor })
    }

    pub fn missing(&self) -> &[usize] {
        &self.missing
    }

    pub fn conditional(&self, model: &MvnModel, sample: &MaskedSample<f64>) -> GaussianConditional {
        let mu = model.mean();
        let centered: Vec<f64> = self.observed.iter().map(|&j| sample.values()[j] - mu[j]).collect();
        let shift = self.regression.matvec(&centered);
        let mean = self.missing.iter().zip(shift).map(|(&j, s)| mu[j] + s).collect();
        GaussianConditional { missing: self.missing.clone(), mean, covariance: self.covariance.clone() }
    }

    /// Draws `x_m` and returns the completed vector.
    pub fn impute<R: Rng + ?Sized>(&self, model: &MvnModel, sample: &MaskedSample<f64>, rng: &mut R) -> Vec<f64> {
        let mu = model.mean();
        let centered: Vec<f64> = self.observed.iter().map(|&j| sample.values()[j] - mu[j]).collect();
        let shift = self.regression.matvec(&centered);
        let noise = gaussian_noise(&self.factor, rng);
        let mut out = sample.values().to_vec();
        for (k, &j) in self.missing.iter().enumerate() {
            out[j] = mu[j] + shift[k] + noise[k];
        }
        out
    }
}

fn symmetrize(m: &mut Matrix) {
    let n = m.rows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

fn gaussian_noise<R: Rng + ?Sized>(factor: &Matrix, rng: &mut R) -> Vec<f64> {
    let z: Vec<f64> = (0..factor.cols()).map(|_| StandardNormal.sample(rng)).collect();
    factor.matvec(&z)
}

/// `mean = μ_m + Σ_mo Σ_oo⁻¹ (x_o − μ_o)`, `cov = Σ_mm − Σ_mo Σ_oo⁻¹ Σ_om`.
pub fn mvn_condition(model: &MvnModel, sample: &MaskedSample<f64>) -> Result<GaussianConditional> {
    let plan = ConditioningPlan::new(model, sample.mask())?;
    Ok(plan.conditional(model, sample))
}

/// One draw from `N(mean, covariance)`.
pub fn sample_conditional<R: Rng + ?Sized>(cond: &GaussianConditional, rng: &mut R) -> Result<Vec<f64>> {
    let factor = cholesky_psd(&cond.covariance, PSD_TOL).ok_or(Error::NotPositiveDefinite)?;
    let noise = gaussian_noise(&factor, rng);
    Ok(cond.mean.iter().zip(noise).map(|(m, e)| m + e).collect())
}

/// `(μ_j, Σ_jj)`.
pub fn mvn_marginal(model: &MvnModel, j: usize) -> Result<(f64, f64)> {
    if j >= model.dim() {
        return Err(Error::IndexOutOfRange { index: j, len: model.dim() });
    }
    Ok((model.mean()[j], model.covariance()[(j, j)]))
}

/// Marginal model over the given coordinates.
pub fn mvn_submodel(model: &MvnModel, idx: &[usize]) -> Result<MvnModel> {
    let mean = idx.iter().map(|&j| model.mean()[j]).collect();
    MvnModel::new(mean, model.covariance().select(idx, idx))
}

/// Gaussian knockoffs `X̃ | X ~ N(μ + (I − DΣ⁻¹)(x − μ), 2D − DΣ⁻¹D)`.
#[derive(Debug, Clone)]
pub struct GaussianKnockoffSampler {
    mean: Vec<f64>,
    s_vector: Vec<f64>,
    conditional_mean_map: Matrix,
    conditional_cov: Matrix,
    factor: Matrix,
}

impl GaussianKnockoffSampler {
    /// Sampler for an explicit `s` vector; fails if the joint covariance
    /// would not be PSD.
    pub fn with_s(model: &MvnModel, s_vector: Vec<f64>) -> Result<Self> {
        let p = model.dim();
        if s_vector.len() != p {
            return Err(Error::DimensionMismatch { expected: p, found: s_vector.len() });
        }
        let sigma = model.covariance();
        let l = cholesky(sigma).ok_or(Error::NotPositiveDefinite)?;
        let d = Matrix::from_diag(&s_vector);
        // Σ⁻¹ D, so D Σ⁻¹ is its transpose.
        let inv_d = cholesky_solve_matrix(&l, &d);
        let d_inv = inv_d.transpose();
        let conditional_mean_map = Matrix::identity(p).sub(&d_inv);
        let mut conditional_cov = d.scale(2.0).sub(&d_inv.matmul(&d));
        symmetrize(&mut conditional_cov);
        let factor = cholesky_psd(&conditional_cov, PSD_TOL).ok_or(Error::NotPositiveDefinite)?;
        Ok(Self { mean: model.mean().to_vec(), s_vector, conditional_mean_map, conditional_cov, factor })
    }

    pub fn s_vector(&self) -> &[f64] {
        &self.s_vector
    }

    pub fn conditional_mean_map(&self) -> &Matrix {
        &self.conditional_mean_map
    }

    pub fn conditional_cov(&self) -> &Matrix {
        &self.conditional_cov
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn sample<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: x.len() });
        }
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        let shift = self.conditional_mean_map.matvec(&centered);
        let noise = gaussian_noise(&self.factor, rng);
        Ok(self.mean.iter().zip(shift).zip(noise).map(|((m, s), e)| m + s + e).collect())
    }
}

/// Equicorrelated choice: on the correlation scale `s = min(2 λ_min, 1)`,
/// then rescaled by each variance.
pub fn equicorrelated_s(model: &MvnModel) -> Result<Vec<f64>> {
    let sigma = model.covariance();
    let sd: Vec<f64> = sigma.diag().iter().map(|v| libm::sqrt(*v)).collect();
    if sd.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::NotPositiveDefinite);
    }
    let corr = Matrix::from_fn(sigma.rows(), sigma.cols(), |i, j| sigma[(i, j)] / (sd[i] * sd[j]));
    let lambda = min_eigenvalue(&corr);
    if !(lambda > 0.0) {
        return Err(Error::NotPositiveDefinite);
    }
    let s = (2.0 * lambda).min(1.0);
    Ok(sd.iter().map(|v| s * v * v).collect())
}

pub fn build_gaussian_knockoff_sampler(model: &MvnModel) -> Result<GaussianKnockoffSampler> {
    GaussianKnockoffSampler::with_s(model, equicorrelated_s(model)?)
}

pub fn sample_gaussian_knockoff<R: Rng + ?Sized>(
    sampler: &GaussianKnockoffSampler,
    x: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    sampler.sample(x, rng)
}

/// Solves `Σ x = b` for a PD matrix; used by analytic MSE formulas.
pub(crate) fn spd_solve(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    let l = factor_observed_block(a)?;
    Ok(cholesky_solve(&l, b))
}

/// Joint covariance `[[Σ, Σ − D], [Σ − D, Σ]]` of `(X, X̃)`.
pub fn knockoff_joint_covariance(model: &MvnModel, s_vector: &[f64]) -> Matrix {
    let p = model.dim();
    let sigma = model.covariance();
    Matrix::from_fn(2 * p, 2 * p, |i, j| {
        let v = sigma[(i % p, j % p)];
        if (i < p) != (j < p) && i % p == j % p {
            v - s_vector[i % p]
        } else {
            v
        }
    })
}
