//! Knockoffs for conditionally independent latent-variable models with
//! missing coordinates.
//!
//! The sampler runs four stages:
//!
//! 1. `ẑ ~ P(Z | X_o)`;
//! 2. `x̂_m ~ P(X_m | Z = ẑ)`, one coordinate at a time;
//! 3. for `i = 1..L` in order, `z′_i ~ P(Z_i | X = x̂, Z_{<i} = z′_{<i}, Z_{>i} = ẑ_{>i})`;
//! 4. `x̃_i ~ P(X_i | Z = z′)` independently for every coordinate.
//!
//! Stage 3 is a single ordered Gibbs sweep started from `(ẑ, x̂)`, which is a
//! draw from the model joint; after every step the mixed latent vector
//! `(z′_{≤i}, ẑ_{>i})` together with `x̂` is again distributed as `P_{Z,X}`.
//! Hence `(z′, x̂)` has law `P_{Z,X}` and `(x̂, x̃)` factor as
//! `P(z′) ∏_i P(x̂_i | z′) P(x̃_i | z′)`, which is swap invariant.
//! All conditionals are computed by direct enumeration over one latent
//! coordinate, so this is meant for small latent supports.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{LatentFactorModel, MaskedSample};
use crate::pipeline::KnockoffPair;
use crate::random::Chooser;

fn check_sample(model: &LatentFactorModel, sample: &MaskedSample<usize>) -> Result<()> {
    if sample.len() != model.num_coords() {
        return Err(Error::DimensionMismatch { expected: model.num_coords(), found: sample.len() });
    }
    for i in sample.observed_indices() {
        if sample.values()[i] >= model.num_symbols(i) {
            return Err(Error::InvalidParameter(alloc::format!("symbol out of range at coordinate {i}")));
        }
    }
    Ok(())
}

/// `P(Z = z | X_o = x_o) ∝ P(z) ∏_{i ∈ o} P(x_i | z)`, over latent indices.
pub fn latent_posterior(model: &LatentFactorModel, sample: &MaskedSample<usize>) -> Result<Vec<f64>> {
    check_sample(model, sample)?;
    let observed = sample.observed_indices();
    let mut table: Vec<f64> = (0..model.latent_support())
        .map(|z| {
            observed
                .iter()
                .fold(model.latent_joint()[z], |acc, &i| acc * model.emission_prob(i, z, sample.values()[i]))
        })
        .collect();
    let total: f64 = table.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ZeroEvidence);
    }
    for v in &mut table {
        *v /= total;
    }
    Ok(table)
}

/// Intermediate state of the latent resampling sweep.
#[derive(Debug, Clone)]
pub struct GzSamplerState<'a> {
    model: &'a LatentFactorModel,
    imputed_x: Vec<usize>,
    imputed_latent: Vec<usize>,
    resampled_latent: Vec<usize>,
}

impl<'a> GzSamplerState<'a> {
    /// Starts the sweep from a completed vector and its latent draw.
    pub fn new(model: &'a LatentFactorModel, imputed_latent: Vec<usize>, imputed_x: Vec<usize>) -> Self {
        Self { model, imputed_x, imputed_latent, resampled_latent: Vec::new() }
    }

    pub fn imputed_latent(&self) -> &[usize] {
        &self.imputed_latent
    }

    pub fn resampled_latent(&self) -> &[usize] {
        &self.resampled_latent
    }

    pub fn imputed_x(&self) -> &[usize] {
        &self.imputed_x
    }

    pub fn is_done(&self) -> bool {
        self.resampled_latent.len() == self.model.latent_len()
    }

    /// Current mixed latent vector `(z′_{≤i}, ẑ_{>i})`.
    pub fn mixed_latent(&self) -> Vec<usize> {
        let mut z = self.imputed_latent.clone();
        z[..self.resampled_latent.len()].copy_from_slice(&self.resampled_latent);
        z
    }

    /// Resamples the next latent coordinate from its full conditional.
    pub fn step<C: Chooser + ?Sized>(&mut self, chooser: &mut C) {
        let i = self.resampled_latent.len();
        assert!(i < self.model.latent_len(), "sweep already finished");
        let mut z = self.mixed_latent();
        let weights: Vec<f64> = (0..self.model.latent_sizes()[i])
            .map(|v| {
                z[i] = v;
                let idx = self.model.encode(&z);
                self.imputed_x
                    .iter()
                    .enumerate()
                    .fold(self.model.latent_joint()[idx], |acc, (j, &x)| acc * self.model.emission_prob(j, idx, x))
            })
            .collect();
        self.resampled_latent.push(chooser.choose(&weights));
    }

    /// Finishes the sweep and emits the knockoff vector.
    pub fn finish<C: Chooser + ?Sized>(mut self, chooser: &mut C) -> KnockoffPair<usize> {
        while !self.is_done() {
            self.step(chooser);
        }
        let idx = self.model.encode(&self.resampled_latent);
        let knockoff = (0..self.model.num_coords()).map(|i| chooser.choose(self.model.emission_row(i, idx))).collect();
        let mask = vec![false; self.imputed_x.len()];
        KnockoffPair::new(self.imputed_x, knockoff, mask)
    }
}

/// Stages 1 and 2: latent posterior draw and emission imputation.
pub fn gz_impute<'a, C: Chooser + ?Sized>(
    model: &'a LatentFactorModel,
    sample: &MaskedSample<usize>,
    chooser: &mut C,
) -> Result<GzSamplerState<'a>> {
    let posterior = latent_posterior(model, sample)?;
    let z = chooser.choose(&posterior);
    let mut x = sample.values().to_vec();
    for i in sample.missing_indices() {
        x[i] = chooser.choose(model.emission_row(i, z));
    }
    Ok(GzSamplerState::new(model, model.decode(z), x))
}

pub fn gz_knockoffs<C: Chooser + ?Sized>(
    model: &LatentFactorModel,
    sample: &MaskedSample<usize>,
    chooser: &mut C,
) -> Result<KnockoffPair<usize>> {
    let state = gz_impute(model, sample, chooser)?;
    let pair = state.finish(chooser);
    let (imputed, knockoff) = pair.into_parts();
    Ok(KnockoffPair::new(imputed, knockoff, sample.mask().to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;

    fn point_mass_model() -> LatentFactorModel {
        // Z ∈ {0,1,2,3}; X_0 reveals the first latent bit, X_1 the second.
        let e0 = Matrix::from_fn(4, 2, |z, x| if (z >> 1) == x { 1.0 } else { 0.0 });
        let e1 = Matrix::from_fn(4, 2, |z, x| if (z & 1) == x { 1.0 } else { 0.0 });
        LatentFactorModel::new(vec![2, 2], vec![0.1, 0.2, 0.3, 0.4], vec![e0, e1]).unwrap()
    }

    #[test]
    fn no_observations_give_prior() {
        let m = point_mass_model();
        let post = latent_posterior(&m, &MaskedSample::from_values(vec![usize::MAX; 2])).unwrap();
        assert_eq!(post, m.latent_joint().to_vec());
    }

    #[test]
    fn point_mass_emissions_pin_the_latent() {
        let m = point_mass_model();
        let post = latent_posterior(&m, &MaskedSample::complete(&[1usize, 0])).unwrap();
        assert_eq!(post, vec![0.0, 0.0, 1.0, 0.0]);
        let partial = latent_posterior(&m, &MaskedSample::from_values(vec![1usize, usize::MAX])).unwrap();
        assert!((partial[2] - 3.0 / 7.0).abs() < 1e-15 && (partial[3] - 4.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn zero_evidence() {
        let e = Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0]]);
        let m = LatentFactorModel::new(vec![2], vec![0.5, 0.5], vec![e]).unwrap();
        assert_eq!(latent_posterior(&m, &MaskedSample::complete(&[1usize])).unwrap_err(), Error::ZeroEvidence);
    }
}
