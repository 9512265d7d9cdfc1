//! Discrete HMM machinery with missing emissions.
//!
//! The forward pass skips the emission factor at missing positions, so
//! `α_t(z) = P(Z_t = z, X_{o(t)} = x_{o(t)})` where `o(t)` are the observed
//! positions up to `t`. Backward sampling from these tables draws latent
//! paths from `P(Z | X_o)` exactly. Rows are renormalized as they are built;
//! every sampling step uses ratios within one row so the scale cancels.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{HmmModel, MaskedSample};
use crate::pipeline::KnockoffPair;
use crate::random::Chooser;

/// Forward table stored as normalized rows plus the cumulative log scale.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaTable {
    rows: Vec<Vec<f64>>,
    log_scale: Vec<f64>,
}

impl AlphaTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Row `t` rescaled to sum to one.
    pub fn normalized(&self, t: usize) -> &[f64] {
        &self.rows[t]
    }

    /// Unscaled `α_t(z)`.
    pub fn value(&self, t: usize, z: usize) -> f64 {
        self.rows[t][z] * libm::exp(self.log_scale[t])
    }

    /// `log P(X_{o(t)} = x_{o(t)})`.
    pub fn log_evidence(&self, t: usize) -> f64 {
        self.log_scale[t]
    }
}

/// Latent state sequence.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LatentPath(pub Vec<usize>);

impl LatentPath {
    pub fn states(&self) -> &[usize] {
        &self.0
    }
}

fn check_sample(model: &HmmModel, sample: &MaskedSample<usize>) -> Result<()> {
    if sample.len() != model.length() {
        return Err(Error::DimensionMismatch { expected: model.length(), found: sample.len() });
    }
    for (t, (&x, &m)) in sample.values().iter().zip(sample.mask()).enumerate() {
        if !m && x >= model.num_symbols() {
            return Err(Error::InvalidParameter(alloc::format!(
                "symbol {x} at position {t} outside emission support"
            )));
        }
    }
    Ok(())
}

pub fn forward_alpha(model: &HmmModel, sample: &MaskedSample<usize>) -> Result<AlphaTable> {
    check_sample(model, sample)?;
    let k = model.num_states();
    let len = model.length();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(len);
    let mut log_scale = Vec::with_capacity(len);
    let mut running = 0.0;
    for t in 0..len {
        let mut row = if t == 0 {
            model.initial().to_vec()
        } else {
            let prev = &rows[t - 1];
            let trans = model.transition(t);
            let mut next = vec![0.0; k];
            for (from, &a) in prev.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (slot, &q) in next.iter_mut().zip(trans.row(from)) {
                    *slot += q * a;
                }
            }
            next
        };
        if !sample.is_missing(t) {
            let x = sample.values()[t];
            let emission = model.emission(t);
            for (z, slot) in row.iter_mut().enumerate() {
                *slot *= emission[(z, x)];
            }
        }
        let total: f64 = row.iter().sum();
        if !(total > 0.0) {
            return Err(Error::ZeroEvidence);
        }
        for v in &mut row {
            *v /= total;
        }
        running += libm::log(total);
        rows.push(row);
        log_scale.push(running);
    }
    Ok(AlphaTable { rows, log_scale })
}

/// Draws `ẑ_T ∝ α_T`, then `ẑ_t ∝ P(ẑ_{t+1} | z_t) α_t(z_t)` backwards.
pub fn backward_sample_posterior<C: Chooser + ?Sized>(
    model: &HmmModel,
    alpha: &AlphaTable,
    chooser: &mut C,
) -> LatentPath {
    let len = alpha.len();
    let k = model.num_states();
    let mut path = vec![0; len];
    path[len - 1] = chooser.choose(alpha.normalized(len - 1));
    let mut weights = vec![0.0; k];
    for t in (0..len - 1).rev() {
        let trans = model.transition(t + 1);
        let next = path[t + 1];
        for (z, w) in weights.iter_mut().enumerate() {
            *w = trans[(z, next)] * alpha.normalized(t)[z];
        }
        path[t] = chooser.choose(&weights);
    }
    LatentPath(path)
}

/// `ẑ ~ P(Z | X_o)`.
pub fn sample_latent_posterior<C: Chooser + ?Sized>(
    model: &HmmModel,
    sample: &MaskedSample<usize>,
    chooser: &mut C,
) -> Result<LatentPath> {
    let alpha = forward_alpha(model, sample)?;
    Ok(backward_sample_posterior(model, &alpha, chooser))
}

/// Draws each `x_t`, `t ∈ missing`, from the emission row of `path[t]`.
pub fn impute_emissions<C: Chooser + ?Sized>(
    model: &HmmModel,
    path: &LatentPath,
    missing: &[usize],
    chooser: &mut C,
) -> Vec<usize> {
    missing.iter().map(|&t| chooser.choose(model.emission(t).row(path.0[t]))).collect()
}

fn emit_all<C: Chooser + ?Sized>(model: &HmmModel, path: &LatentPath, chooser: &mut C) -> Vec<usize> {
    path.0.iter().enumerate().map(|(t, &z)| chooser.choose(model.emission(t).row(z))).collect()
}

/// Pairwise exchangeable knockoff of a Markov chain path by sequential
/// conditional independent pairs.
///
/// At step `t` the new state is drawn from the law of `Z_t` given the rest of
/// the original path and the knockoff states already drawn. For a chain this
/// law only involves `z_{t−1}`, `z_{t+1}`, `z̃_{t−1}` and a normalizer table
/// `N_{t−1}` carried forward, giving `O(T K²)` work per path.
pub fn sample_markov_knockoff<C: Chooser + ?Sized>(
    model: &HmmModel,
    z: &LatentPath,
    chooser: &mut C,
) -> LatentPath {
    let len = model.length();
    let k = model.num_states();
    let z = &z.0;
    let mut out = vec![0usize; len];
    let mut normalizer = vec![1.0; k];
    let mut base = vec![0.0; k];
    let mut weights = vec![0.0; k];
    for t in 0..len {
        for j in 0..k {
            let num = if t == 0 {
                model.initial()[j]
            } else {
                let trans = model.transition(t);
                trans[(z[t - 1], j)] * trans[(out[t - 1], j)]
            };
            base[j] = if num == 0.0 { 0.0 } else { num / normalizer[j] };
        }
        for j in 0..k {
            let forward = if t + 1 < len { model.transition(t + 1)[(j, z[t + 1])] } else { 1.0 };
            weights[j] = base[j] * forward;
        }
        out[t] = chooser.choose(&weights);
        if t + 1 < len {
            let trans = model.transition(t + 1);
            let mut next = vec![0.0; k];
            for (j, &b) in base.iter().enumerate() {
                if b == 0.0 {
                    continue;
                }
                for (slot, &q) in next.iter_mut().zip(trans.row(j)) {
                    *slot += b * q;
                }
            }
            let total: f64 = next.iter().sum();
            for v in &mut next {
                *v /= total;
            }
            normalizer = next;
        }
    }
    LatentPath(out)
}

/// Knockoffs for an HMM sample with missing positions: posterior latent
/// draw, emission imputation, latent knockoff, fresh emissions everywhere.
pub fn modified_sesia_knockoffs<C: Chooser + ?Sized>(
    model: &HmmModel,
    sample: &MaskedSample<usize>,
    chooser: &mut C,
) -> Result<KnockoffPair<usize>> {
    let latent = sample_latent_posterior(model, sample, chooser)?;
    let imputed_missing = impute_emissions(model, &latent, &sample.missing_indices(), chooser);
    let imputed = sample.fill(&imputed_missing);
    let knock_latent = sample_markov_knockoff(model, &latent, chooser);
    let knockoff = emit_all(model, &knock_latent, chooser);
    Ok(KnockoffPair::new(imputed, knockoff, sample.mask().to_vec()))
}

/// Plain HMM knockoff of a fully observed sequence.
pub fn sesia_knockoff<C: Chooser + ?Sized>(model: &HmmModel, x: &[usize], chooser: &mut C) -> Result<Vec<usize>> {
    let latent = sample_latent_posterior(model, &MaskedSample::complete(x), chooser)?;
    let knock_latent = sample_markov_knockoff(model, &latent, chooser);
    Ok(emit_all(model, &knock_latent, chooser))
}

/// Knockoff of the observed positions only, valid for the marginal law of
/// `X_o`; missing slots of the result hold the sentinel.
pub fn observed_knockoff<C: Chooser + ?Sized>(
    model: &HmmModel,
    sample: &MaskedSample<usize>,
    chooser: &mut C,
) -> Result<Vec<usize>> {
    let latent = sample_latent_posterior(model, sample, chooser)?;
    let knock_latent = sample_markov_knockoff(model, &latent, chooser);
    Ok((0..model.length())
        .map(|t| {
            if sample.is_missing(t) {
                usize::MAX
            } else {
                chooser.choose(model.emission(t).row(knock_latent.0[t]))
            }
        })
        .collect())
}

/// Posterior imputation `x̂_m ~ P(X_m | X_o)` through the latent chain.
pub fn posterior_impute<C: Chooser + ?Sized>(
    model: &HmmModel,
    sample: &MaskedSample<usize>,
    chooser: &mut C,
) -> Result<Vec<usize>> {
    let latent = sample_latent_posterior(model, sample, chooser)?;
    let missing = impute_emissions(model, &latent, &sample.missing_indices(), chooser);
    Ok(sample.fill(&missing))
}

/// `P(Z_t = ·)` by forward propagation of the chain.
pub fn state_marginal(model: &HmmModel, t: usize) -> Result<Vec<f64>> {
    if t >= model.length() {
        return Err(Error::IndexOutOfRange { index: t, len: model.length() });
    }
    let k = model.num_states();
    let mut dist = model.initial().to_vec();
    for step in 1..=t {
        let trans = model.transition(step);
        let mut next = vec![0.0; k];
        for (from, &a) in dist.iter().enumerate() {
            for (slot, &q) in next.iter_mut().zip(trans.row(from)) {
                *slot += a * q;
            }
        }
        dist = next;
    }
    Ok(dist)
}

/// `P(X_t = ·) = Σ_z P(X_t = · | Z_t = z) P(Z_t = z)`.
pub fn hmm_univariate_marginal(model: &HmmModel, t: usize) -> Result<Vec<f64>> {
    let states = state_marginal(model, t)?;
    let emission = model.emission(t);
    let mut out = vec![0.0; model.num_symbols()];
    for (z, &pz) in states.iter().enumerate() {
        for (slot, &q) in out.iter_mut().zip(emission.row(z)) {
            *slot += pz * q;
        }
    }
    Ok(out)
}
