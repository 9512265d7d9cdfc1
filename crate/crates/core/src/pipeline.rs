//! The two generic missing-value knockoff pipelines and the MSE comparison
//! between posterior and univariate imputation.
//!
//! * Posterior pipeline: draw `x̂_m ~ P(X_m | X_o)`, complete the row, then
//!   call any knockoff sampler that is valid for `P_X`. Valid under MCAR and MAR.
//! * Univariate pipeline: knockoff the observed block with a sampler valid for
//!   the marginal `P_{X_o}`, then draw both `x̂_j` and `x̃_j` independently from
//!   `P_{X_j}` for every missing `j`. Valid under MCAR only.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::hmm;
use crate::linalg::Matrix;
use crate::model::{HmmModel, MaskedSample, MissingValue, MvnModel};
use crate::mvn::{self, ConditioningPlan, GaussianKnockoffSampler};
use crate::random::Chooser;

/// Completed row `x̂` and its knockoff `x̃`.
#[derive(Debug, Clone, PartialEq)]
pub struct KnockoffPair<V> {
    imputed: Vec<V>,
    knockoff: Vec<V>,
    mask: Vec<bool>,
}

impl<V> KnockoffPair<V> {
    pub fn new(imputed: Vec<V>, knockoff: Vec<V>, mask: Vec<bool>) -> Self {
        debug_assert_eq!(imputed.len(), knockoff.len());
        Self { imputed, knockoff, mask }
    }

    pub fn imputed(&self) -> &[V] {
        &self.imputed
    }

    pub fn knockoff(&self) -> &[V] {
        &self.knockoff
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn into_parts(self) -> (Vec<V>, Vec<V>) {
        (self.imputed, self.knockoff)
    }
}

/// Draws `x̂ = (x_o, x̂_m)` with `x̂_m ~ P(X_m | X_o = x_o)`.
pub trait PosteriorImputer<V, R: ?Sized> {
    fn impute(&mut self, sample: &MaskedSample<V>, rng: &mut R) -> Result<Vec<V>>;
}

/// A conditional law `P(X̃ | X)` pairwise exchangeable with respect to `P_X`.
pub trait KnockoffSampler<V, R: ?Sized> {
    fn knockoff(&mut self, x: &[V], rng: &mut R) -> Result<Vec<V>>;
}

/// Produces knockoffs of the observed block, valid for the marginal `P_{X_o}`
/// of each row's own observed set. Entries at missing positions are ignored.
pub trait ObservedKnockoffFactory<V, R: ?Sized> {
    fn knockoff_observed(&mut self, sample: &MaskedSample<V>, rng: &mut R) -> Result<Vec<V>>;
}

/// Univariate marginals `P_{X_j}`.
pub trait MarginalSampler<V, R: ?Sized> {
    fn sample_marginal(&self, j: usize, rng: &mut R) -> V;
}

/// Posterior pipeline over i.i.d. rows. The first failing row aborts the run.
pub fn posterior_knockoffs<V, R, I, K>(
    rows: &[MaskedSample<V>],
    imputer: &mut I,
    sampler: &mut K,
    rng: &mut R,
) -> Result<Vec<KnockoffPair<V>>>
where
    V: MissingValue,
    R: ?Sized,
    I: PosteriorImputer<V, R>,
    K: KnockoffSampler<V, R>,
{
    rows.iter()
        .enumerate()
        .map(|(row, sample)| {
            posterior_pair(sample, imputer, sampler, rng)
                .map_err(|e| Error::RowFailed { row, source: Box::new(e) })
        })
        .collect()
}

pub fn posterior_pair<V, R, I, K>(
    sample: &MaskedSample<V>,
    imputer: &mut I,
    sampler: &mut K,
    rng: &mut R,
) -> Result<KnockoffPair<V>>
where
    V: MissingValue,
    R: ?Sized,
    I: PosteriorImputer<V, R>,
    K: KnockoffSampler<V, R>,
{
    let imputed = imputer.impute(sample, rng)?;
    let knockoff = sampler.knockoff(&imputed, rng)?;
    Ok(KnockoffPair::new(imputed, knockoff, sample.mask().to_vec()))
}

/// Declared missingness mechanism of the data being processed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mechanism {
    Mcar,
    /// MAR data; the univariate pipeline refuses it unless `allow` is set.
    Mar { allow: bool },
}

/// Univariate pipeline over i.i.d. rows.
pub fn univariate_knockoffs<V, R, M, F>(
    rows: &[MaskedSample<V>],
    marginals: &M,
    factory: &mut F,
    mechanism: Mechanism,
    rng: &mut R,
) -> Result<Vec<KnockoffPair<V>>>
where
    V: MissingValue,
    R: ?Sized,
    M: MarginalSampler<V, R>,
    F: ObservedKnockoffFactory<V, R>,
{
    if mechanism == (Mechanism::Mar { allow: false }) {
        return Err(Error::RequiresMcar);
    }
    rows.iter()
        .enumerate()
        .map(|(row, sample)| {
            univariate_pair(sample, marginals, factory, rng).map_err(|e| match e {
                e @ Error::PatternFailed { .. } => e,
                e => Error::RowFailed { row, source: Box::new(e) },
            })
        })
        .collect()
}

fn pattern_string(mask: &[bool]) -> String {
    mask.iter().map(|&m| if m { '1' } else { '0' }).collect()
}

pub fn univariate_pair<V, R, M, F>(
    sample: &MaskedSample<V>,
    marginals: &M,
    factory: &mut F,
    rng: &mut R,
) -> Result<KnockoffPair<V>>
where
    V: MissingValue,
    R: ?Sized,
    M: MarginalSampler<V, R>,
    F: ObservedKnockoffFactory<V, R>,
{
    let mut knockoff = if sample.observed_indices().is_empty() {
        sample.values().to_vec()
    } else {
        factory.knockoff_observed(sample, rng).map_err(|e| Error::PatternFailed {
            pattern: pattern_string(sample.mask()),
            source: Box::new(e),
        })?
    };
    let mut imputed = sample.values().to_vec();
    for j in sample.missing_indices() {
        imputed[j] = marginals.sample_marginal(j, rng);
        knockoff[j] = marginals.sample_marginal(j, rng);
    }
    Ok(KnockoffPair::new(imputed, knockoff, sample.mask().to_vec()))
}

/// Gaussian posterior imputation with per-pattern conditioning plans.
#[derive(Debug, Clone)]
pub struct MvnPosterior {
    model: MvnModel,
    plans: BTreeMap<Vec<bool>, ConditioningPlan>,
}

impl MvnPosterior {
    pub fn new(model: MvnModel) -> Self {
        Self { model, plans: BTreeMap::new() }
    }

    pub fn cached_patterns(&self) -> usize {
        self.plans.len()
    }
}

impl<R: Rng + ?Sized> PosteriorImputer<f64, R> for MvnPosterior {
    fn impute(&mut self, sample: &MaskedSample<f64>, rng: &mut R) -> Result<Vec<f64>> {
        if !sample.mask().contains(&true) {
            return Ok(sample.values().to_vec());
        }
        if !self.plans.contains_key(sample.mask()) {
            let plan = ConditioningPlan::new(&self.model, sample.mask())?;
            self.plans.insert(sample.mask().to_vec(), plan);
        }
        let plan = &self.plans[sample.mask()];
        Ok(plan.impute(&self.model, sample, rng))
    }
}

impl<R: Rng + ?Sized> KnockoffSampler<f64, R> for GaussianKnockoffSampler {
    fn knockoff(&mut self, x: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        self.sample(x, rng)
    }
}

impl<R: Rng + ?Sized> MarginalSampler<f64, R> for MvnModel {
    fn sample_marginal(&self, j: usize, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.mean()[j] + libm::sqrt(self.covariance()[(j, j)]) * z
    }
}

/// Equicorrelated Gaussian knockoffs for each observed block, cached by mask.
#[derive(Debug, Clone)]
pub struct MvnObservedKnockoffs {
    model: MvnModel,
    samplers: BTreeMap<Vec<bool>, GaussianKnockoffSampler>,
}

impl MvnObservedKnockoffs {
    pub fn new(model: MvnModel) -> Self {
        Self { model, samplers: BTreeMap::new() }
    }

    pub fn cached_patterns(&self) -> usize {
        self.samplers.len()
    }
}

impl<R: Rng + ?Sized> ObservedKnockoffFactory<f64, R> for MvnObservedKnockoffs {
    fn knockoff_observed(&mut self, sample: &MaskedSample<f64>, rng: &mut R) -> Result<Vec<f64>> {
        let observed = sample.observed_indices();
        if !self.samplers.contains_key(sample.mask()) {
            let sub = mvn::mvn_submodel(&self.model, &observed)?;
            let sampler = mvn::build_gaussian_knockoff_sampler(&sub)?;
            self.samplers.insert(sample.mask().to_vec(), sampler);
        }
        let sampler = &self.samplers[sample.mask()];
        let x_o = sample.observed_values();
        let xt_o = sampler.sample(&x_o, rng)?;
        let mut out = sample.values().to_vec();
        for (&j, v) in observed.iter().zip(xt_o) {
            out[j] = v;
        }
        Ok(out)
    }
}

/// HMM posterior imputation through the latent chain.
#[derive(Debug, Clone, Copy)]
pub struct HmmPosterior<'a>(pub &'a HmmModel);

impl<C: Chooser + ?Sized> PosteriorImputer<usize, C> for HmmPosterior<'_> {
    fn impute(&mut self, sample: &MaskedSample<usize>, rng: &mut C) -> Result<Vec<usize>> {
        hmm::posterior_impute(self.0, sample, rng)
    }
}

/// The plain HMM knockoff sampler for complete sequences.
#[derive(Debug, Clone, Copy)]
pub struct SesiaSampler<'a>(pub &'a HmmModel);

impl<C: Chooser + ?Sized> KnockoffSampler<usize, C> for SesiaSampler<'_> {
    fn knockoff(&mut self, x: &[usize], rng: &mut C) -> Result<Vec<usize>> {
        hmm::sesia_knockoff(self.0, x, rng)
    }
}

/// HMM knockoffs of the observed positions, valid for `P_{X_o}`.
#[derive(Debug, Clone, Copy)]
pub struct HmmObservedKnockoffs<'a>(pub &'a HmmModel);

impl<C: Chooser + ?Sized> ObservedKnockoffFactory<usize, C> for HmmObservedKnockoffs<'_> {
    fn knockoff_observed(&mut self, sample: &MaskedSample<usize>, rng: &mut C) -> Result<Vec<usize>> {
        hmm::observed_knockoff(self.0, sample, rng)
    }
}

/// Precomputed per-position symbol marginals of an HMM.
#[derive(Debug, Clone)]
pub struct HmmMarginals(Vec<Vec<f64>>);

impl HmmMarginals {
    pub fn new(model: &HmmModel) -> Self {
        let k = model.num_states();
        let mut states = model.initial().to_vec();
        let mut out = Vec::with_capacity(model.length());
        for t in 0..model.length() {
            if t > 0 {
                let trans = model.transition(t);
                let mut next = alloc::vec![0.0; k];
                for (from, &a) in states.iter().enumerate() {
                    for (slot, &q) in next.iter_mut().zip(trans.row(from)) {
                        *slot += a * q;
                    }
                }
                states = next;
            }
            let emission = model.emission(t);
            let mut symbols = alloc::vec![0.0; model.num_symbols()];
            for (z, &pz) in states.iter().enumerate() {
                for (slot, &q) in symbols.iter_mut().zip(emission.row(z)) {
                    *slot += pz * q;
                }
            }
            out.push(symbols);
        }
        Self(out)
    }

    pub fn marginal(&self, t: usize) -> &[f64] {
        &self.0[t]
    }
}

impl<C: Chooser + ?Sized> MarginalSampler<usize, C> for HmmMarginals {
    fn sample_marginal(&self, j: usize, rng: &mut C) -> usize {
        rng.choose(&self.0[j])
    }
}

/// A model that can draw a complete vector, resample one coordinate from its
/// full conditional or its marginal, and report the two variances that fix
/// the analytic MSEs.
pub trait CoordinateModel<R: ?Sized> {
    fn dim(&self) -> usize;
    fn sample_joint(&self, rng: &mut R) -> Vec<f64>;
    fn sample_conditional(&self, j: usize, x: &[f64], rng: &mut R) -> Result<f64>;
    fn sample_marginal(&self, j: usize, rng: &mut R) -> f64;
    /// `(Var(X_j), Var(E[X_j | X_{−j}]))`.
    fn variance_decomposition(&self, j: usize) -> Result<(f64, f64)>;
}

impl<R: Rng + ?Sized> CoordinateModel<R> for MvnModel {
    fn dim(&self) -> usize {
        MvnModel::dim(self)
    }

    fn sample_joint(&self, rng: &mut R) -> Vec<f64> {
        self.sample(rng)
    }

    fn sample_conditional(&self, j: usize, x: &[f64], rng: &mut R) -> Result<f64> {
        let mut mask = alloc::vec![false; x.len()];
        mask[j] = true;
        let sample = MaskedSample::new(x, &mask)?;
        let cond = mvn::mvn_condition(self, &sample)?;
        Ok(mvn::sample_conditional(&cond, rng)?[0])
    }

    fn sample_marginal(&self, j: usize, rng: &mut R) -> f64 {
        MarginalSampler::<f64, R>::sample_marginal(self, j, rng)
    }

    fn variance_decomposition(&self, j: usize) -> Result<(f64, f64)> {
        let p = MvnModel::dim(self);
        if j >= p {
            return Err(Error::IndexOutOfRange { index: j, len: p });
        }
        let sigma = self.covariance();
        let var_y = sigma[(j, j)];
        if p == 1 {
            return Ok((var_y, 0.0));
        }
        let rest: Vec<usize> = (0..p).filter(|&i| i != j).collect();
        let s_oo = sigma.select(&rest, &rest);
        let s_oj: Vec<f64> = rest.iter().map(|&i| sigma[(i, j)]).collect();
        let solved = mvn::spd_solve(&s_oo, &s_oj)?;
        let explained: f64 = solved.iter().zip(&s_oj).map(|(a, b)| a * b).sum();
        Ok((var_y, explained))
    }
}

/// Monte Carlo and analytic MSEs of posterior and univariate imputation of
/// one coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct MseReport {
    pub mse_posterior: f64,
    pub se_posterior: f64,
    pub mse_univariate: f64,
    pub se_univariate: f64,
    /// `2 (Var(Y) − Var(E[Y | X]))`.
    pub analytic_posterior: f64,
    /// `2 Var(Y)`.
    pub analytic_univariate: f64,
}

impl MseReport {
    pub fn combined_se(&self) -> f64 {
        libm::sqrt(self.se_posterior * self.se_posterior + self.se_univariate * self.se_univariate)
    }
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, libm::sqrt(var / n))
}

pub fn mse_compare<R, M>(model: &M, target: usize, num_samples: usize, rng: &mut R) -> Result<MseReport>
where
    R: ?Sized,
    M: CoordinateModel<R>,
{
    if target >= model.dim() {
        return Err(Error::IndexOutOfRange { index: target, len: model.dim() });
    }
    if num_samples < 2 {
        return Err(Error::InvalidParameter("need at least two Monte Carlo samples".into()));
    }
    let mut post = Vec::with_capacity(num_samples);
    let mut uni = Vec::with_capacity(num_samples);
    for _ in 0..num_samples {
        let x = model.sample_joint(rng);
        let y = x[target];
        let y_hat = model.sample_conditional(target, &x, rng)?;
        let y_prime = model.sample_marginal(target, rng);
        post.push((y - y_hat) * (y - y_hat));
        uni.push((y - y_prime) * (y - y_prime));
    }
    let (mse_posterior, se_posterior) = mean_and_se(&post);
    let (mse_univariate, se_univariate) = mean_and_se(&uni);
    let (var_y, var_cond_mean) = model.variance_decomposition(target)?;
    Ok(MseReport {
        mse_posterior,
        se_posterior,
        mse_univariate,
        se_univariate,
        analytic_posterior: 2.0 * (var_y - var_cond_mean).max(0.0),
        analytic_univariate: 2.0 * var_y,
    })
}

/// Stacks pairs into the `N × 2p` design `[X̂, X̃]`.
pub fn stack_design(pairs: &[KnockoffPair<f64>]) -> Matrix {
    let p = pairs.first().map_or(0, |pair| pair.imputed.len());
    let mut data = Vec::with_capacity(pairs.len() * 2 * p);
    for pair in pairs {
        data.extend_from_slice(&pair.imputed);
        data.extend_from_slice(&pair.knockoff);
    }
    Matrix::from_row_major(pairs.len(), 2 * p, data)
}
