//! Desk-scale certification suites built on the exact oracle.
//!
//! Every discrete check enumerates the complete law of a pipeline's output on
//! a small random model, so the reported statistic is a total variation
//! distance up to floating point rounding. The MSE suite is Monte Carlo and
//! reports z-scores against analytic values.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::gz::gz_knockoffs;
use crate::hmm::{
    backward_sample_posterior, forward_alpha, hmm_univariate_marginal, modified_sesia_knockoffs, sample_markov_knockoff,
    LatentPath,
};
use crate::linalg::Matrix;
use crate::model::{HmmModel, LatentFactorModel, MaskedSample, MvnModel};
use crate::oracle::{
    check_distribution_preserved, check_pairwise_exchangeable, enumerate, hmm_emission_law, latent_emission_law,
    markov_blanket_bruteforce, pairwise_dependence_set, random_finite_joint, random_hmm, random_latent_model,
    random_response_joint, total_variation, ExactChooser, FiniteJoint, FiniteObservedKnockoffs, JointTable,
    DEFAULT_PATH_LIMIT,
};
use crate::pipeline::{
    mse_compare, posterior_pair, univariate_pair, HmmMarginals, HmmObservedKnockoffs, HmmPosterior, MarginalSampler,
    PosteriorImputer, SesiaSampler,
};
use crate::random::{trial_rng, Chooser};

pub const EXCHANGEABILITY_TOL: f64 = 1e-10;
pub const PRESERVATION_TOL: f64 = 1e-12;
pub const ALPHA_TOL: f64 = 1e-12;
pub const MSE_Z_TOL: f64 = 4.0;
pub const CI_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Suite {
    Exchangeability,
    Mar,
    Posterior,
    Mse,
    Mb,
}

impl Suite {
    pub const ALL: [Suite; 5] = [Suite::Exchangeability, Suite::Mar, Suite::Posterior, Suite::Mse, Suite::Mb];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Exchangeability => "exchangeability",
            Suite::Mar => "mar",
            Suite::Posterior => "posterior",
            Suite::Mse => "mse",
            Suite::Mb => "mb",
        }
    }

    pub fn parse(name: &str) -> Option<Suite> {
        Suite::ALL.into_iter().find(|s| s.name() == name)
    }
}

/// One certified statement: `statistic ≤ tolerance` passes.
#[derive(Debug, Clone, PartialEq)]
pub struct Certification {
    pub suite: Suite,
    pub name: String,
    pub statistic: f64,
    pub tolerance: f64,
}

impl Certification {
    fn new(suite: Suite, name: impl Into<String>, statistic: f64, tolerance: f64) -> Self {
        Self { suite, name: name.into(), statistic, tolerance }
    }

    pub fn passed(&self) -> bool {
        self.statistic <= self.tolerance
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CertifyOptions {
    pub seed: u64,
    /// Replaces posterior imputation by independent marginal draws.
    pub broken: bool,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self { seed: 20240521, broken: false }
    }
}

pub fn run_suite(suite: Suite, options: CertifyOptions) -> Result<Vec<Certification>> {
    match suite {
        Suite::Exchangeability => certify_exchangeability(options),
        Suite::Mar => certify_mar(options),
        Suite::Posterior => certify_posterior(options),
        Suite::Mse => certify_mse(options),
        Suite::Mb => certify_mb(options),
    }
}

/// Law of the missingness mask given the complete vector.
#[derive(Debug, Clone, PartialEq)]
pub enum MaskLaw {
    /// Coordinate `j` missing independently with the given probability.
    Mcar(Vec<f64>),
    /// Coordinate 0 always observed; every other coordinate missing with
    /// probability `base`, or `base + lift` when `x_0` is odd.
    Mar { base: f64, lift: f64 },
}

impl MaskLaw {
    pub fn random_mcar<R: Rng + ?Sized>(p: usize, rng: &mut R) -> Self {
        MaskLaw::Mcar((0..p).map(|_| rng.random_range(0.2..0.6)).collect())
    }

    pub fn prob(&self, x: &[usize], mask: &[bool]) -> f64 {
        let rates: Vec<f64> = match self {
            MaskLaw::Mcar(rates) => rates.clone(),
            MaskLaw::Mar { base, lift } => {
                let r = if x[0] % 2 == 1 { base + lift } else { *base };
                (0..x.len()).map(|j| if j == 0 { 0.0 } else { r }).collect()
            }
        };
        rates.iter().zip(mask).map(|(&r, &m)| if m { r } else { 1.0 - r }).product()
    }

    /// Joint law of `(X, mask)`.
    pub fn with_data(&self, law_of_x: &JointTable<Vec<usize>>) -> JointTable<(Vec<usize>, Vec<bool>)> {
        let mut out = JointTable::new();
        for (x, px) in law_of_x.iter() {
            let p = x.len();
            for bits in 0u64..(1u64 << p) {
                let mask: Vec<bool> = (0..p).map(|j| bits >> j & 1 == 1).collect();
                let pm = self.prob(x, &mask);
                out.add((x.clone(), mask), px * pm);
            }
        }
        out
    }
}

/// Exact law of `program(sample)` with `(x, mask)` drawn from `inputs`.
pub fn exact_over_inputs<O, F>(inputs: &JointTable<(Vec<usize>, Vec<bool>)>, mut program: F) -> Result<JointTable<O>>
where
    O: Ord + Clone,
    F: FnMut(&MaskedSample<usize>, &mut ExactChooser) -> Result<O>,
{
    let mut out = JointTable::new();
    for ((x, mask), weight) in inputs.iter() {
        let sample = MaskedSample::new(x, mask)?;
        let law = enumerate(DEFAULT_PATH_LIMIT, |c| program(&sample, c))?;
        out.add_scaled(&law, weight);
    }
    Ok(out)
}

/// Independent marginal draws in place of the posterior (mutation testing).
struct MarginalImputer<M>(M);

impl<M: MarginalSampler<usize, C>, C: Chooser + ?Sized> PosteriorImputer<usize, C> for MarginalImputer<M> {
    fn impute(&mut self, sample: &MaskedSample<usize>, rng: &mut C) -> Result<Vec<usize>> {
        let mut x = sample.values().to_vec();
        for j in sample.missing_indices() {
            x[j] = self.0.sample_marginal(j, rng);
        }
        Ok(x)
    }
}

fn generic_models(seed: u64) -> Vec<(String, FiniteJoint)> {
    let mut rng = trial_rng(seed, 1, 0);
    vec![
        ("binary3".into(), random_finite_joint(vec![2, 2, 2], 0.05, &mut rng)),
        ("ternary-binary".into(), random_finite_joint(vec![3, 2], 0.05, &mut rng)),
    ]
}

fn small_hmm(seed: u64) -> HmmModel {
    random_hmm(3, 2, 2, &mut trial_rng(seed, 2, 0))
}

fn small_latent(seed: u64) -> LatentFactorModel {
    random_latent_model(vec![2, 2], &[2, 2, 2], &mut trial_rng(seed, 3, 0))
}

fn generic_posterior_joint(
    joint: &FiniteJoint,
    law: &MaskLaw,
    broken: bool,
) -> Result<JointTable<(Vec<usize>, Vec<usize>)>> {
    let inputs = law.with_data(&joint.to_table());
    let mut sampler = joint.clone();
    if broken {
        let mut imputer = MarginalImputer(joint.clone());
        exact_over_inputs(&inputs, |s, c| Ok(posterior_pair(s, &mut imputer, &mut sampler, c)?.into_parts()))
    } else {
        let mut imputer = joint.clone();
        exact_over_inputs(&inputs, |s, c| Ok(posterior_pair(s, &mut imputer, &mut sampler, c)?.into_parts()))
    }
}

fn hmm_posterior_joint(model: &HmmModel, law: &MaskLaw, broken: bool) -> Result<JointTable<(Vec<usize>, Vec<usize>)>> {
    let inputs = law.with_data(&hmm_emission_law(model)?);
    let mut sampler = SesiaSampler(model);
    if broken {
        let mut imputer = MarginalImputer(HmmMarginals::new(model));
        exact_over_inputs(&inputs, |s, c| Ok(posterior_pair(s, &mut imputer, &mut sampler, c)?.into_parts()))
    } else {
        let mut imputer = HmmPosterior(model);
        exact_over_inputs(&inputs, |s, c| Ok(posterior_pair(s, &mut imputer, &mut sampler, c)?.into_parts()))
    }
}

pub fn certify_exchangeability(options: CertifyOptions) -> Result<Vec<Certification>> {
    let suite = Suite::Exchangeability;
    let mut rng = trial_rng(options.seed, 0, 0);
    let mut out = Vec::new();
    let mar = MaskLaw::Mar { base: 0.2, lift: 0.5 };

    for (name, joint) in generic_models(options.seed) {
        let p = joint.dim();
        let mcar = MaskLaw::random_mcar(p, &mut rng);
        for (law_name, law) in [("mcar", &mcar), ("mar", &mar)] {
            let table = generic_posterior_joint(&joint, law, options.broken)?;
            out.push(Certification::new(
                suite,
                format!("posterior pipeline, {name}, {law_name}"),
                check_pairwise_exchangeable(&table, p),
                EXCHANGEABILITY_TOL,
            ));
        }
        let inputs = mcar.with_data(&joint.to_table());
        let mut factory = FiniteObservedKnockoffs(&joint);
        let table = exact_over_inputs(&inputs, |s, c| Ok(univariate_pair(s, &joint, &mut factory, c)?.into_parts()))?;
        out.push(Certification::new(
            suite,
            format!("univariate pipeline, {name}, mcar"),
            check_pairwise_exchangeable(&table, p),
            EXCHANGEABILITY_TOL,
        ));
    }

    let hmm = small_hmm(options.seed);
    let t = hmm.length();
    let mcar = MaskLaw::random_mcar(t, &mut rng);
    for (law_name, law) in [("mcar", &mcar), ("mar", &mar)] {
        let table = hmm_posterior_joint(&hmm, law, options.broken)?;
        out.push(Certification::new(
            suite,
            format!("posterior pipeline, hmm, {law_name}"),
            check_pairwise_exchangeable(&table, t),
            EXCHANGEABILITY_TOL,
        ));
    }
    let inputs = mcar.with_data(&hmm_emission_law(&hmm)?);
    let marginals = HmmMarginals::new(&hmm);
    let mut factory = HmmObservedKnockoffs(&hmm);
    let table = exact_over_inputs(&inputs, |s, c| Ok(univariate_pair(s, &marginals, &mut factory, c)?.into_parts()))?;
    out.push(Certification::new(
        suite,
        "univariate pipeline, hmm, mcar",
        check_pairwise_exchangeable(&table, t),
        EXCHANGEABILITY_TOL,
    ));
    let table = exact_over_inputs(&inputs, |s, c| Ok(modified_sesia_knockoffs(&hmm, s, c)?.into_parts()))?;
    out.push(Certification::new(
        suite,
        "modified sesia, hmm, mcar",
        check_pairwise_exchangeable(&table, t),
        EXCHANGEABILITY_TOL,
    ));
    let chain = enumerate(DEFAULT_PATH_LIMIT, |c| {
        let z = LatentPath(hmm.sample(c).0);
        let zt = sample_markov_knockoff(&hmm, &z, c);
        Ok((z.0, zt.0))
    })?;
    out.push(Certification::new(
        suite,
        "markov chain knockoff, latent path",
        check_pairwise_exchangeable(&chain, t),
        EXCHANGEABILITY_TOL,
    ));

    let latent = small_latent(options.seed);
    let p = latent.num_coords();
    let mcar = MaskLaw::random_mcar(p, &mut rng);
    let inputs = mcar.with_data(&latent_emission_law(&latent));
    let table = exact_over_inputs(&inputs, |s, c| Ok(gz_knockoffs(&latent, s, c)?.into_parts()))?;
    out.push(Certification::new(
        suite,
        "gz sampler, latent factor, mcar",
        check_pairwise_exchangeable(&table, p),
        EXCHANGEABILITY_TOL,
    ));
    Ok(out)
}

fn imputation_law<I>(inputs: &JointTable<(Vec<usize>, Vec<bool>)>, imputer: &mut I) -> Result<JointTable<Vec<usize>>>
where
    I: PosteriorImputer<usize, ExactChooser>,
{
    exact_over_inputs(inputs, |s, c| imputer.impute(s, c))
}

pub fn certify_mar(options: CertifyOptions) -> Result<Vec<Certification>> {
    let suite = Suite::Mar;
    let mut rng = trial_rng(options.seed, 0, 1);
    let mut out = Vec::new();
    let mar = MaskLaw::Mar { base: 0.3, lift: 0.6 };

    let joint = random_finite_joint(vec![2, 2, 2], 0.05, &mut rng);
    let law_x = joint.to_table();
    let mcar = MaskLaw::random_mcar(3, &mut rng);
    for (law_name, law) in [("mcar", &mcar), ("mar", &mar)] {
        let inputs = law.with_data(&law_x);
        let law_hat = if options.broken {
            imputation_law(&inputs, &mut MarginalImputer(joint.clone()))?
        } else {
            imputation_law(&inputs, &mut joint.clone())?
        };
        out.push(Certification::new(
            suite,
            format!("posterior imputation, binary3, {law_name}"),
            check_distribution_preserved(&law_x, &law_hat)?,
            PRESERVATION_TOL,
        ));
    }

    let hmm = small_hmm(options.seed);
    let law_x = hmm_emission_law(&hmm)?;
    let mcar = MaskLaw::random_mcar(hmm.length(), &mut rng);
    for (law_name, law) in [("mcar", &mcar), ("mar", &mar)] {
        let inputs = law.with_data(&law_x);
        let law_hat = if options.broken {
            imputation_law(&inputs, &mut MarginalImputer(HmmMarginals::new(&hmm)))?
        } else {
            imputation_law(&inputs, &mut HmmPosterior(&hmm))?
        };
        out.push(Certification::new(
            suite,
            format!("posterior imputation, hmm, {law_name}"),
            check_distribution_preserved(&law_x, &law_hat)?,
            PRESERVATION_TOL,
        ));
    }

    // Joint law of (latent, emissions) is preserved as well.
    let law_zx = enumerate(DEFAULT_PATH_LIMIT, |c| Ok(hmm.sample(c)))?;
    let inputs = mcar.with_data(&law_x);
    let law_hat = exact_over_inputs(&inputs, |s, c| {
        let alpha = forward_alpha(&hmm, s)?;
        let z = backward_sample_posterior(&hmm, &alpha, c);
        let filled: Vec<usize> = s
            .missing_indices()
            .iter()
            .map(|&t| {
                if options.broken {
                    hmm_univariate_marginal(&hmm, t).map(|m| c.choose(&m))
                } else {
                    Ok(c.choose(hmm.emission(t).row(z.0[t])))
                }
            })
            .collect::<Result<_>>()?;
        Ok((z.0, s.fill(&filled)))
    })?;
    out.push(Certification::new(
        suite,
        "latent and emission imputation, hmm, mcar",
        total_variation(&law_zx, &law_hat),
        PRESERVATION_TOL,
    ));

    let latent = small_latent(options.seed);
    let law_x = latent_emission_law(&latent);
    let mcar = MaskLaw::random_mcar(latent.num_coords(), &mut rng);
    let inputs = mcar.with_data(&law_x);
    let law_hat = exact_over_inputs(&inputs, |s, c| {
        if options.broken {
            let mut x = s.values().to_vec();
            for i in s.missing_indices() {
                let z = c.choose(latent.latent_joint());
                x[i] = c.choose(latent.emission_row(i, z));
            }
            Ok(x)
        } else {
            Ok(crate::gz::gz_impute(&latent, s, c)?.imputed_x().to_vec())
        }
    })?;
    out.push(Certification::new(
        suite,
        "gz imputation, latent factor, mcar",
        check_distribution_preserved(&law_x, &law_hat)?,
        PRESERVATION_TOL,
    ));
    Ok(out)
}

/// `P(Z = z, X_o = x_o)` for one full path.
fn path_weight(model: &HmmModel, z: &[usize], sample: &MaskedSample<usize>, upto: usize) -> f64 {
    let mut w = model.initial()[z[0]];
    for t in 0..=upto {
        if t > 0 {
            w *= model.transition(t)[(z[t - 1], z[t])];
        }
        if !sample.is_missing(t) {
            w *= model.emission(t)[(z[t], sample.values()[t])];
        }
    }
    w
}

fn all_paths(len: usize, states: usize) -> Vec<Vec<usize>> {
    let count = states.pow(len as u32);
    (0..count)
        .map(|mut i| {
            let mut z = vec![0; len];
            for slot in z.iter_mut().rev() {
                *slot = i % states;
                i /= states;
            }
            z
        })
        .collect()
}

pub fn certify_posterior(options: CertifyOptions) -> Result<Vec<Certification>> {
    let suite = Suite::Posterior;
    let mut rng = trial_rng(options.seed, 0, 2);
    let mut models: Vec<(String, HmmModel)> = Vec::new();
    for &(t, k, kp) in &[(1, 2, 2), (2, 3, 2), (3, 2, 2), (4, 3, 3), (5, 2, 3), (5, 3, 2)] {
        models.push((format!("T={t} K={k} K'={kp}"), random_hmm(t, k, kp, &mut rng)));
    }
    models.push(("paper model T=3".into(), crate::model::make_paper_hmm(3)?));
    let mut alpha_err = 0.0f64;
    let mut path_tv = 0.0f64;
    for (_, model) in &models {
        let len = model.length();
        let paths = all_paths(len, model.num_states());
        let (_, x) = model.sample(&mut rng);
        for bits in 0u64..(1u64 << len) {
            let mask: Vec<bool> = (0..len).map(|t| bits >> t & 1 == 1).collect();
            let sample = MaskedSample::new(&x, &mask)?;
            let alpha = forward_alpha(model, &sample)?;
            // α_t(z) = Σ over prefixes ending in z of P(z_{≤t}, x_{o ≤ t}).
            for t in 0..len {
                let mut brute = vec![0.0; model.num_states()];
                for prefix in all_paths(t + 1, model.num_states()) {
                    brute[prefix[t]] += path_weight(model, &prefix, &sample, t);
                }
                for (z, &b) in brute.iter().enumerate() {
                    alpha_err = alpha_err.max((alpha.value(t, z) - b).abs());
                }
            }
            let mut exact = JointTable::new();
            let weights: Vec<f64> = paths.iter().map(|z| path_weight(model, z, &sample, len - 1)).collect();
            let evidence: f64 = weights.iter().sum();
            for (z, w) in paths.iter().zip(&weights) {
                exact.add(z.clone(), w / evidence);
            }
            let sampled = enumerate(DEFAULT_PATH_LIMIT, |c| {
                if options.broken {
                    Ok(model.sample(c).0)
                } else {
                    Ok(backward_sample_posterior(model, &alpha, c).0)
                }
            })?;
            path_tv = path_tv.max(total_variation(&exact, &sampled));
        }
    }
    Ok(vec![
        Certification::new(suite, "forward table vs path enumeration", alpha_err, ALPHA_TOL),
        Certification::new(suite, "backward path law vs exact posterior", path_tv, EXCHANGEABILITY_TOL),
    ])
}

/// Random positive definite covariance `A Aᵀ / p + 0.2 I` with Gaussian `A`.
pub fn random_covariance<R: Rng + ?Sized>(p: usize, rng: &mut R) -> Matrix {
    use rand_distr::{Distribution, StandardNormal};
    let a = Matrix::from_fn(p, p, |_, _| StandardNormal.sample(rng));
    let mut sigma = a.matmul(&a.transpose()).scale(1.0 / p as f64);
    for i in 0..p {
        sigma[(i, i)] += 0.2;
    }
    // Exact symmetry after rounding.
    Matrix::from_fn(p, p, |i, j| 0.5 * (sigma[(i, j)] + sigma[(j, i)]))
}

pub fn certify_mse(options: CertifyOptions) -> Result<Vec<Certification>> {
    let suite = Suite::Mse;
    let mut rng = trial_rng(options.seed, 0, 3);
    let samples = 20_000;
    let mut ordering = f64::NEG_INFINITY;
    let mut posterior_fit = 0.0f64;
    let mut univariate_fit = 0.0f64;
    let mut record = |r: &crate::pipeline::MseReport| {
        ordering = ordering.max((r.mse_posterior - r.mse_univariate) / r.combined_se());
        posterior_fit = posterior_fit.max((r.mse_posterior - r.analytic_posterior).abs() / r.se_posterior);
        univariate_fit = univariate_fit.max((r.mse_univariate - r.analytic_univariate).abs() / r.se_univariate);
    };
    for m in 0..20 {
        let p = 2 + m % 4;
        let mean: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
        let model = MvnModel::new(mean, random_covariance(p, &mut rng))?;
        let target = rng.random_range(0..p);
        record(&mse_compare(&model, target, samples, &mut rng)?);
    }
    for _ in 0..5 {
        let joint = random_finite_joint(vec![3, 2, 2], 0.05, &mut rng);
        let target = rng.random_range(0..3);
        record(&mse_compare(&joint, target, samples, &mut rng)?);
    }
    if ordering.is_nan() || posterior_fit.is_nan() || univariate_fit.is_nan() {
        return Err(Error::NonFiniteInput);
    }
    Ok(vec![
        Certification::new(suite, "posterior mse ≤ univariate mse (z-score)", ordering, MSE_Z_TOL),
        Certification::new(suite, "posterior mse vs analytic (z-score)", posterior_fit, MSE_Z_TOL),
        Certification::new(suite, "univariate mse vs analytic (z-score)", univariate_fit, MSE_Z_TOL),
    ])
}

pub fn certify_mb(options: CertifyOptions) -> Result<Vec<Certification>> {
    let suite = Suite::Mb;
    let mut rng = trial_rng(options.seed, 0, 4);
    let mut mismatches = 0usize;
    for i in 0..50 {
        let p = 1 + i % 4;
        let joint = if i % 2 == 0 {
            let parents: Vec<usize> = (0..p).filter(|_| rng.random::<bool>()).collect();
            random_response_joint(p, &parents, &mut rng)
        } else {
            random_finite_joint(vec![2; p + 1], 0.05, &mut rng)
        };
        if markov_blanket_bruteforce(&joint, CI_TOL)? != pairwise_dependence_set(&joint, CI_TOL)? {
            mismatches += 1;
        }
    }
    Ok(vec![Certification::new(suite, "blanket equals pairwise dependence set (mismatches)", mismatches as f64, 0.0)])
}
