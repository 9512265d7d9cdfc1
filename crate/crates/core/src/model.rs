//! Probability models, data generators and the swap operator.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_psd, min_eigenvalue, Matrix};
use crate::random::Chooser;

const STOCHASTIC_TOL: f64 = 1e-12;

/// Multivariate normal `N(mean, covariance)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MvnModel {
    mean: Vec<f64>,
    covariance: Matrix,
    factor: Matrix,
}

impl MvnModel {
    pub fn new(mean: Vec<f64>, covariance: Matrix) -> Result<Self> {
        if covariance.rows() != mean.len() || !covariance.is_square() {
            return Err(Error::DimensionMismatch { expected: mean.len(), found: covariance.rows() });
        }
        if !covariance.is_symmetric(1e-12) {
            return Err(Error::InvalidModel("covariance is not symmetric".into()));
        }
        if mean.is_empty() {
            return Err(Error::InvalidModel("empty model".into()));
        }
        if min_eigenvalue(&covariance) < -1e-10 {
            return Err(Error::NotPositiveDefinite);
        }
        let factor = cholesky_psd(&covariance, 1e-10).ok_or(Error::NotPositiveDefinite)?;
        Ok(Self { mean, covariance, factor })
    }

    pub fn centered(covariance: Matrix) -> Result<Self> {
        Self::new(vec![0.0; covariance.rows()], covariance)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn covariance(&self) -> &Matrix {
        &self.covariance
    }

    /// `F` with `F Fᵀ = Σ`, from a pivoted semidefinite Cholesky.
    pub fn factor(&self) -> &Matrix {
        &self.factor
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z: Vec<f64> = (0..self.dim()).map(|_| StandardNormal.sample(rng)).collect();
        let mut x = self.factor.matvec(&z);
        for (xi, mi) in x.iter_mut().zip(&self.mean) {
            *xi += mi;
        }
        x
    }
}

/// `Σ_ij = rho^|i−j|`.
pub fn make_ar1_covariance(p: usize, rho: f64) -> Result<Matrix> {
    if p == 0 {
        return Err(Error::InvalidParameter("p must be positive".into()));
    }
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::InvalidParameter(format!("rho = {rho} outside [0, 1)")));
    }
    Ok(Matrix::from_fn(p, p, |i, j| libm::pow(rho, i.abs_diff(j) as f64)))
}

fn check_stochastic_rows(m: &Matrix, what: &str) -> Result<()> {
    for i in 0..m.rows() {
        let row = m.row(i);
        if row.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidModel(format!("{what} row {i} has a negative or non-finite entry")));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::InvalidModel(format!("{what} row {i} sums to {s}")));
        }
    }
    Ok(())
}

fn check_distribution(v: &[f64], what: &str) -> Result<()> {
    if v.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::InvalidModel(format!("{what} has a negative or non-finite entry")));
    }
    let s: f64 = v.iter().sum();
    if (s - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::InvalidModel(format!("{what} sums to {s}")));
    }
    Ok(())
}

/// Discrete hidden Markov model over `length` positions with `num_states`
/// hidden states and `num_symbols` emitted symbols.
///
/// Transition and emission tables are either shared across positions (one
/// table) or given per position (`length − 1` transitions, `length` emissions).
/// Transition rows are indexed by the previous state.
#[derive(Debug, Clone, PartialEq)]
pub struct HmmModel {
    length: usize,
    num_states: usize,
    num_symbols: usize,
    initial: Vec<f64>,
    transitions: Vec<Matrix>,
    emissions: Vec<Matrix>,
}

impl HmmModel {
    pub fn new(
        length: usize,
        initial: Vec<f64>,
        transitions: Vec<Matrix>,
        emissions: Vec<Matrix>,
    ) -> Result<Self> {
        if length == 0 {
            return Err(Error::InvalidParameter("HMM length must be positive".into()));
        }
        let k = initial.len();
        if k == 0 {
            return Err(Error::InvalidModel("HMM needs at least one state".into()));
        }
        check_distribution(&initial, "initial distribution")?;
        let shared_or = |n: usize, want: usize| n == 1 || n == want;
        if !shared_or(transitions.len(), length.saturating_sub(1).max(1)) {
            return Err(Error::InvalidModel(format!("expected 1 or {} transition tables", length - 1)));
        }
        if !shared_or(emissions.len(), length) {
            return Err(Error::InvalidModel(format!("expected 1 or {length} emission tables")));
        }
        for t in &transitions {
            if t.rows() != k || t.cols() != k {
                return Err(Error::DimensionMismatch { expected: k, found: t.rows().max(t.cols()) });
            }
            check_stochastic_rows(t, "transition")?;
        }
        let num_symbols = emissions[0].cols();
        for e in &emissions {
            if e.rows() != k || e.cols() != num_symbols || num_symbols == 0 {
                return Err(Error::InvalidModel("emission tables have inconsistent shapes".into()));
            }
            check_stochastic_rows(e, "emission")?;
        }
        Ok(Self { length, num_states: k, num_symbols, initial, transitions, emissions })
    }

    /// Time-homogeneous model with one transition and one emission table.
    pub fn homogeneous(length: usize, initial: Vec<f64>, transition: Matrix, emission: Matrix) -> Result<Self> {
        Self::new(length, initial, vec![transition], vec![emission])
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_symbols(&self) -> usize {
        self.num_symbols
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    /// Table for the step into position `t` (`1 ≤ t < length`).
    pub fn transition(&self, t: usize) -> &Matrix {
        debug_assert!(t >= 1 && t < self.length);
        if self.transitions.len() == 1 {
            &self.transitions[0]
        } else {
            &self.transitions[t - 1]
        }
    }

    pub fn emission(&self, t: usize) -> &Matrix {
        if self.emissions.len() == 1 {
            &self.emissions[0]
        } else {
            &self.emissions[t]
        }
    }

    /// Draws a latent path and its emissions.
    pub fn sample<C: Chooser + ?Sized>(&self, chooser: &mut C) -> (Vec<usize>, Vec<usize>) {
        let mut z = Vec::with_capacity(self.length);
        let mut x = Vec::with_capacity(self.length);
        for t in 0..self.length {
            let state = if t == 0 {
                chooser.choose(&self.initial)
            } else {
                chooser.choose(self.transition(t).row(z[t - 1]))
            };
            z.push(state);
            x.push(chooser.choose(self.emission(t).row(state)));
        }
        (z, x)
    }
}

/// The nine-state benchmark chain: start in state 1, stay with 0.9 or advance
/// cyclically with 0.1; emit the state or its cyclic successor with 0.175
/// each and any other symbol with 0.65/7.
pub fn make_paper_hmm(length: usize) -> Result<HmmModel> {
    const K: usize = 9;
    let mut initial = vec![0.0; K];
    initial[1] = 1.0;
    let transition = Matrix::from_fn(K, K, |from, to| {
        if to == from {
            0.9
        } else if to == (from + 1) % K {
            0.1
        } else {
            0.0
        }
    });
    let emission = Matrix::from_fn(K, K, |z, x| {
        if x == z || x == (z + 1) % K {
            0.35 / 2.0
        } else {
            0.65 / 7.0
        }
    });
    HmmModel::homogeneous(length, initial, transition, emission)
}

/// Latent-variable model with an explicit joint table over a discrete latent
/// vector and conditionally independent emissions `P(X_i | Z)`.
///
/// Latent configurations are indexed in mixed radix with the first latent
/// coordinate most significant. Emission `i` is a table with one row per
/// latent configuration and one column per symbol of `X_i`, so the product
/// form `P(x | z) = ∏ P(x_i | z)` holds by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentFactorModel {
    latent_sizes: Vec<usize>,
    latent_joint: Vec<f64>,
    emissions: Vec<Matrix>,
}

impl LatentFactorModel {
    pub fn new(latent_sizes: Vec<usize>, latent_joint: Vec<f64>, emissions: Vec<Matrix>) -> Result<Self> {
        if latent_sizes.is_empty() || latent_sizes.contains(&0) {
            return Err(Error::InvalidModel("latent coordinates need nonempty supports".into()));
        }
        let support: usize = latent_sizes.iter().product();
        if latent_joint.len() != support {
            return Err(Error::DimensionMismatch { expected: support, found: latent_joint.len() });
        }
        check_distribution(&latent_joint, "latent joint")?;
        if emissions.is_empty() {
            return Err(Error::InvalidModel("model needs at least one observed coordinate".into()));
        }
        for e in &emissions {
            if e.rows() != support || e.cols() == 0 {
                return Err(Error::DimensionMismatch { expected: support, found: e.rows() });
            }
            check_stochastic_rows(e, "emission")?;
        }
        Ok(Self { latent_sizes, latent_joint, emissions })
    }

    pub fn latent_sizes(&self) -> &[usize] {
        &self.latent_sizes
    }

    pub fn latent_len(&self) -> usize {
        self.latent_sizes.len()
    }

    pub fn latent_support(&self) -> usize {
        self.latent_joint.len()
    }

    pub fn latent_joint(&self) -> &[f64] {
        &self.latent_joint
    }

    pub fn num_coords(&self) -> usize {
        self.emissions.len()
    }

    pub fn num_symbols(&self, i: usize) -> usize {
        self.emissions[i].cols()
    }

    /// `P(X_i = x | Z = z)` for latent configuration index `z`.
    pub fn emission_prob(&self, i: usize, z: usize, x: usize) -> f64 {
        self.emissions[i][(z, x)]
    }

    pub fn emission_row(&self, i: usize, z: usize) -> &[f64] {
        self.emissions[i].row(z)
    }

    pub fn encode(&self, latent: &[usize]) -> usize {
        latent.iter().zip(&self.latent_sizes).fold(0, |acc, (&v, &n)| acc * n + v)
    }

    pub fn decode(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.latent_sizes.len()];
        for (slot, &n) in out.iter_mut().zip(&self.latent_sizes).rev() {
            *slot = index % n;
            index /= n;
        }
        out
    }

    pub fn sample<C: Chooser + ?Sized>(&self, chooser: &mut C) -> (usize, Vec<usize>) {
        let z = chooser.choose(&self.latent_joint);
        let x = (0..self.num_coords()).map(|i| chooser.choose(self.emission_row(i, z))).collect();
        (z, x)
    }
}

/// Value types that can be marked missing.
pub trait MissingValue: Copy + PartialEq {
    fn sentinel() -> Self;
    fn is_sentinel(&self) -> bool;
}

impl MissingValue for f64 {
    fn sentinel() -> Self {
        f64::NAN
    }

    fn is_sentinel(&self) -> bool {
        self.is_nan()
    }
}

/// Categorical codes; `usize::MAX` is reserved for missing.
impl MissingValue for usize {
    fn sentinel() -> Self {
        usize::MAX
    }

    fn is_sentinel(&self) -> bool {
        *self == usize::MAX
    }
}

/// One observation with its missingness indicator (`true` = missing).
/// The mask is authoritative; missing slots always hold the sentinel.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedSample<V> {
    values: Vec<V>,
    mask: Vec<bool>,
}

impl<V: MissingValue> MaskedSample<V> {
    /// Hides the masked coordinates of a complete vector.
    pub fn new(full: &[V], mask: &[bool]) -> Result<Self> {
        if full.len() != mask.len() {
            return Err(Error::DimensionMismatch { expected: full.len(), found: mask.len() });
        }
        let values = full
            .iter()
            .zip(mask)
            .map(|(&v, &m)| if m { V::sentinel() } else { v })
            .collect::<Vec<_>>();
        if values.iter().zip(mask).any(|(v, &m)| !m && v.is_sentinel()) {
            return Err(Error::InvalidParameter("observed value equals the missing sentinel".into()));
        }
        Ok(Self { values, mask: mask.to_vec() })
    }

    /// Derives the mask from sentinel entries.
    pub fn from_values(values: Vec<V>) -> Self {
        let mask = values.iter().map(MissingValue::is_sentinel).collect();
        Self { values, mask }
    }

    pub fn complete(full: &[V]) -> Self {
        Self { values: full.to_vec(), mask: vec![false; full.len()] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[V] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn is_missing(&self, j: usize) -> bool {
        self.mask[j]
    }

    pub fn missing_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&j| self.mask[j]).collect()
    }

    pub fn observed_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&j| !self.mask[j]).collect()
    }

    pub fn observed_values(&self) -> Vec<V> {
        self.values.iter().zip(&self.mask).filter(|(_, &m)| !m).map(|(&v, _)| v).collect()
    }

    /// Fills missing slots with `imputed` (in missing-index order).
    pub fn fill(&self, imputed: &[V]) -> Vec<V> {
        let mut out = self.values.clone();
        let mut it = imputed.iter();
        for (slot, &m) in out.iter_mut().zip(&self.mask) {
            if m {
                *slot = *it.next().expect("one imputed value per missing slot");
            }
        }
        out
    }
}

/// Logistic response with `β_j = amplitude` on the support and 0 elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseModel {
    coefficients: Vec<f64>,
    amplitude: f64,
    support: Vec<usize>,
}

impl ResponseModel {
    pub fn new(p: usize, mut support: Vec<usize>, amplitude: f64) -> Result<Self> {
        support.sort_unstable();
        support.dedup();
        if let Some(&bad) = support.iter().find(|&&j| j >= p) {
            return Err(Error::IndexOutOfRange { index: bad, len: p });
        }
        let mut coefficients = vec![0.0; p];
        for &j in &support {
            coefficients[j] = amplitude;
        }
        Ok(Self { coefficients, amplitude, support })
    }

    /// Support of the given size drawn uniformly without replacement.
    pub fn random<R: Rng + ?Sized>(p: usize, size: usize, amplitude: f64, rng: &mut R) -> Result<Self> {
        if size > p {
            return Err(Error::InvalidParameter(format!("support size {size} exceeds p = {p}")));
        }
        let support = rand::seq::index::sample(rng, p, size).into_vec();
        Self::new(p, support, amplitude)
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn dim(&self) -> usize {
        self.coefficients.len()
    }

    /// `σ((x − shift)ᵀ β)`.
    pub fn probability(&self, x: &[f64], shift: f64) -> f64 {
        let eta: f64 = x.iter().zip(&self.coefficients).map(|(xi, b)| (xi - shift) * b).sum();
        sigmoid(eta)
    }
}

pub fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + libm::exp(-eta))
    } else {
        let e = libm::exp(eta);
        e / (1.0 + e)
    }
}

/// Draws `Y ~ Bernoulli(σ((x − shift)ᵀ β))`. HMM covariates use `shift = 4`.
pub fn simulate_response<C: Chooser + ?Sized>(
    x: &[f64],
    model: &ResponseModel,
    shift: f64,
    chooser: &mut C,
) -> Result<bool> {
    if x.len() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), found: x.len() });
    }
    Ok(chooser.bernoulli(model.probability(x, shift)))
}

/// Which coordinates may go missing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CandidateSet {
    TrueFeatures,
    NullFeatures,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MissingnessSpec {
    p0: f64,
    candidates: CandidateSet,
}

impl MissingnessSpec {
    pub fn new(p0: f64, candidates: CandidateSet) -> Result<Self> {
        if !(0.0..=1.0).contains(&p0) {
            return Err(Error::InvalidParameter(format!("p0 = {p0} outside [0, 1]")));
        }
        Ok(Self { p0, candidates })
    }

    pub fn p0(&self) -> f64 {
        self.p0
    }

    pub fn candidates(&self) -> CandidateSet {
        self.candidates
    }

    /// Resolves the candidate set against the response support.
    pub fn candidate_indices(&self, p: usize, support: &[usize]) -> Vec<usize> {
        let in_support = |j: &usize| support.contains(j);
        match self.candidates {
            CandidateSet::TrueFeatures => (0..p).filter(in_support).collect(),
            CandidateSet::NullFeatures => (0..p).filter(|j| !in_support(j)).collect(),
            CandidateSet::All => (0..p).collect(),
        }
    }
}

/// MCAR mask: each candidate coordinate is missing independently with
/// probability `p0`; every other coordinate is observed. Never looks at X.
pub fn generate_mcar_mask<C: Chooser + ?Sized>(
    p: usize,
    spec: &MissingnessSpec,
    support: &[usize],
    chooser: &mut C,
) -> Vec<bool> {
    let mut mask = vec![false; p];
    if spec.p0 == 0.0 {
        return mask;
    }
    for j in spec.candidate_indices(p, support) {
        mask[j] = spec.p0 >= 1.0 || chooser.bernoulli(spec.p0);
    }
    mask
}

/// Exchanges the coordinates in `set` between `x` and `x_tilde`.
pub fn swap<T: Clone>(x: &[T], x_tilde: &[T], set: &[usize]) -> Result<(Vec<T>, Vec<T>)> {
    if x.len() != x_tilde.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), found: x_tilde.len() });
    }
    let mut a = x.to_vec();
    let mut b = x_tilde.to_vec();
    for &j in set {
        if j >= a.len() {
            return Err(Error::IndexOutOfRange { index: j, len: a.len() });
        }
        core::mem::swap(&mut a[j], &mut b[j]);
    }
    Ok((a, b))
}

/// Swap where the set is given as a bitmask over coordinates.
pub fn swap_by_bits<T: Clone>(x: &[T], x_tilde: &[T], bits: u64) -> (Vec<T>, Vec<T>) {
    let mut a = x.to_vec();
    let mut b = x_tilde.to_vec();
    for j in 0..a.len() {
        if bits >> j & 1 == 1 {
            core::mem::swap(&mut a[j], &mut b[j]);
        }
    }
    (a, b)
}
