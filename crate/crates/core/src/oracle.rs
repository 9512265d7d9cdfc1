//! Exact brute-force machinery for small discrete models.
//!
//! [`enumerate`] runs a randomized program once per complete branch of its
//! discrete choices (depth first, replaying the shared prefix) and returns the
//! exact law of its output. Together with [`FiniteJoint`] and the total
//! variation helpers this certifies exchangeability and distribution
//! preservation without Monte Carlo error.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{swap_by_bits, HmmModel, LatentFactorModel, MaskedSample};
use crate::pipeline::{CoordinateModel, KnockoffSampler, MarginalSampler, ObservedKnockoffFactory, PosteriorImputer};
use crate::random::Chooser;

/// Default cap on the number of enumerated branches.
pub const DEFAULT_PATH_LIMIT: usize = 1_000_000;

/// Exact law over a finite set of outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTable<O: Ord> {
    probabilities: BTreeMap<O, f64>,
}

impl<O: Ord + Clone> JointTable<O> {
    pub fn new() -> Self {
        Self { probabilities: BTreeMap::new() }
    }

    pub fn point_mass(outcome: O) -> Self {
        let mut t = Self::new();
        t.add(outcome, 1.0);
        t
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (O, f64)>) -> Self {
        let mut t = Self::new();
        for (o, p) in pairs {
            t.add(o, p);
        }
        t
    }

    pub fn add(&mut self, outcome: O, probability: f64) {
        if probability != 0.0 {
            *self.probabilities.entry(outcome).or_insert(0.0) += probability;
        }
    }

    /// Adds every entry of `other` scaled by `weight`.
    pub fn add_scaled(&mut self, other: &JointTable<O>, weight: f64) {
        for (o, &p) in &other.probabilities {
            self.add(o.clone(), weight * p);
        }
    }

    pub fn prob(&self, outcome: &O) -> f64 {
        self.probabilities.get(outcome).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.probabilities.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&O, f64)> {
        self.probabilities.iter().map(|(o, &p)| (o, p))
    }

    pub fn support(&self) -> impl Iterator<Item = &O> {
        self.probabilities.keys()
    }

    pub fn map<P: Ord + Clone>(&self, mut f: impl FnMut(&O) -> P) -> JointTable<P> {
        let mut out = JointTable::new();
        for (o, &p) in &self.probabilities {
            out.add(f(o), p);
        }
        out
    }
}

impl<O: Ord + Clone> Default for JointTable<O> {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone)]
struct Branch {
    options: Vec<(usize, f64)>,
    position: usize,
}

/// Chooser that follows a scripted prefix and opens new branches on the
/// first nonzero option, tracking the probability of the current path.
#[derive(Debug, Default)]
pub struct ExactChooser {
    script: Vec<Branch>,
    depth: usize,
    probability: f64,
}

impl Chooser for ExactChooser {
    fn choose(&mut self, weights: &[f64]) -> usize {
        if self.depth == self.script.len() {
            let total: f64 = weights.iter().sum();
            assert!(total > 0.0, "categorical weights sum to zero");
            let options = weights
                .iter()
                .enumerate()
                .filter(|(_, &w)| w > 0.0)
                .map(|(i, &w)| (i, w / total))
                .collect();
            self.script.push(Branch { options, position: 0 });
        }
        let branch = &self.script[self.depth];
        let (index, p) = branch.options[branch.position];
        self.probability *= p;
        self.depth += 1;
        index
    }
}

/// Exact output law of a randomized program whose randomness flows through
/// the supplied chooser. Fails once more than `limit` branches are visited.
pub fn enumerate<O, F>(limit: usize, mut program: F) -> Result<JointTable<O>>
where
    O: Ord + Clone,
    F: FnMut(&mut ExactChooser) -> Result<O>,
{
    let mut chooser = ExactChooser::default();
    let mut table = JointTable::new();
    let mut paths = 0usize;
    loop {
        chooser.depth = 0;
        chooser.probability = 1.0;
        let outcome = program(&mut chooser)?;
        debug_assert_eq!(chooser.depth, chooser.script.len(), "program is not deterministic given its choices");
        chooser.script.truncate(chooser.depth);
        table.add(outcome, chooser.probability);
        paths += 1;
        if paths > limit {
            return Err(Error::SupportTooLarge { limit });
        }
        loop {
            match chooser.script.last_mut() {
                Some(branch) if branch.position + 1 < branch.options.len() => {
                    branch.position += 1;
                    break;
                }
                Some(_) => {
                    chooser.script.pop();
                }
                None => return Ok(table),
            }
        }
    }
}

/// Alias used when driving pipelines: the exact joint of a sampler composition.
pub fn enumerate_pipeline_joint<O, F>(program: F) -> Result<JointTable<O>>
where
    O: Ord + Clone,
    F: FnMut(&mut ExactChooser) -> Result<O>,
{
    enumerate(DEFAULT_PATH_LIMIT, program)
}

/// Half the L1 distance between two tables.
pub fn total_variation<O: Ord + Clone>(a: &JointTable<O>, b: &JointTable<O>) -> f64 {
    let mut sum = 0.0;
    for (o, p) in a.iter() {
        sum += (p - b.prob(o)).abs();
    }
    for (o, q) in b.iter() {
        if a.prob(o) == 0.0 {
            sum += q;
        }
    }
    0.5 * sum
}

/// Largest TV distance between the law of `(x̂, x̃)` and its swap over all
/// `S ⊆ {0..p−1}`.
pub fn check_pairwise_exchangeable<V: Ord + Clone>(joint: &JointTable<(Vec<V>, Vec<V>)>, p: usize) -> f64 {
    assert!(p < 32, "swap sets are enumerated as bitmasks");
    let mut worst = 0.0f64;
    for bits in 1u64..(1u64 << p) {
        let mut sum = 0.0;
        for ((x, xt), prob) in joint.iter() {
            let swapped = joint.prob(&swap_by_bits(x, xt, bits));
            sum += (prob - swapped).abs();
            if swapped == 0.0 {
                // the term at the swapped outcome, which lies off the support
                sum += prob;
            }
        }
        worst = worst.max(0.5 * sum);
    }
    worst
}

/// TV distance between the law of `X` and the law of `X̂`.
pub fn check_distribution_preserved<V: Ord + Clone>(
    law_of_x: &JointTable<Vec<V>>,
    law_of_xhat: &JointTable<Vec<V>>,
) -> Result<f64> {
    let mut lengths = law_of_x.support().chain(law_of_xhat.support()).map(Vec::len);
    if let Some(first) = lengths.next() {
        if lengths.any(|l| l != first) {
            return Err(Error::SupportMismatch);
        }
    }
    Ok(total_variation(law_of_x, law_of_xhat))
}

/// Dense probability table over a product of finite supports, indexed in
/// mixed radix with the first coordinate most significant.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteJoint {
    sizes: Vec<usize>,
    probs: Vec<f64>,
}

impl FiniteJoint {
    pub fn new(sizes: Vec<usize>, probs: Vec<f64>) -> Result<Self> {
        let total_size: usize = sizes.iter().product();
        if sizes.is_empty() || sizes.contains(&0) {
            return Err(Error::InvalidModel("empty support".into()));
        }
        if probs.len() != total_size {
            return Err(Error::DimensionMismatch { expected: total_size, found: probs.len() });
        }
        if probs.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::InvalidModel("negative probability".into()));
        }
        let s: f64 = probs.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidModel(alloc::format!("table sums to {s}")));
        }
        Ok(Self { sizes, probs })
    }

    pub fn from_table(sizes: Vec<usize>, table: &JointTable<Vec<usize>>) -> Result<Self> {
        let total_size: usize = sizes.iter().product();
        let mut probs = vec![0.0; total_size];
        let proto = Self { sizes: sizes.clone(), probs: Vec::new() };
        for (x, p) in table.iter() {
            probs[proto.encode(x)] += p;
        }
        Self::new(sizes, probs)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn dim(&self) -> usize {
        self.sizes.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn encode(&self, x: &[usize]) -> usize {
        x.iter().zip(&self.sizes).fold(0, |acc, (&v, &n)| acc * n + v)
    }

    pub fn decode(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.sizes.len()];
        for (slot, &n) in out.iter_mut().zip(&self.sizes).rev() {
            *slot = index % n;
            index /= n;
        }
        out
    }

    pub fn prob(&self, x: &[usize]) -> f64 {
        self.probs[self.encode(x)]
    }

    pub fn to_table(&self) -> JointTable<Vec<usize>> {
        JointTable::from_pairs(self.probs.iter().enumerate().map(|(i, &p)| (self.decode(i), p)))
    }

    /// Marginal over the listed coordinates (in that order).
    pub fn marginalize(&self, keep: &[usize]) -> FiniteJoint {
        let sizes: Vec<usize> = keep.iter().map(|&j| self.sizes[j]).collect();
        let total: usize = sizes.iter().product();
        let mut probs = vec![0.0; total];
        for (i, &p) in self.probs.iter().enumerate() {
            let x = self.decode(i);
            let idx = keep.iter().zip(&sizes).fold(0, |acc, (&j, &n)| acc * n + x[j]);
            probs[idx] += p;
        }
        FiniteJoint { sizes, probs }
    }

    pub fn univariate(&self, j: usize) -> Vec<f64> {
        self.marginalize(&[j]).probs
    }

    pub fn sample<C: Chooser + ?Sized>(&self, chooser: &mut C) -> Vec<usize> {
        self.decode(chooser.choose(&self.probs))
    }

    /// All completions of `sample` with their joint probabilities.
    fn completions(&self, sample: &MaskedSample<usize>) -> (Vec<Vec<usize>>, Vec<f64>) {
        let missing = sample.missing_indices();
        let count: usize = missing.iter().map(|&j| self.sizes[j]).product();
        let mut configs = Vec::with_capacity(count);
        let mut weights = Vec::with_capacity(count);
        for mut idx in 0..count {
            let mut x = sample.values().to_vec();
            for &j in missing.iter().rev() {
                x[j] = idx % self.sizes[j];
                idx /= self.sizes[j];
            }
            weights.push(self.prob(&x));
            configs.push(x);
        }
        (configs, weights)
    }

    /// Draws `x_m ~ P(X_m | X_o = x_o)` and returns the completed vector.
    pub fn posterior_impute<C: Chooser + ?Sized>(&self, sample: &MaskedSample<usize>, chooser: &mut C) -> Result<Vec<usize>> {
        if sample.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: sample.len() });
        }
        let (configs, weights) = self.completions(sample);
        if !(weights.iter().sum::<f64>() > 0.0) {
            return Err(Error::ZeroEvidence);
        }
        Ok(configs[chooser.choose(&weights)].clone())
    }

    /// Joint weight of `(X, X̃_{<k})` under sequential conditional
    /// independent pairs, evaluated at `x` and the knockoff prefix.
    fn scip_weight(&self, x: &mut [usize], prefix: &[usize]) -> f64 {
        let Some((&last, head)) = prefix.split_last() else {
            return self.prob(x);
        };
        let k = head.len();
        let original = x[k];
        let base = self.scip_weight(x, head);
        if base == 0.0 {
            return 0.0;
        }
        x[k] = last;
        let numerator = self.scip_weight(x, head);
        let mut denominator = 0.0;
        for v in 0..self.sizes[k] {
            x[k] = v;
            denominator += self.scip_weight(x, head);
        }
        x[k] = original;
        base * numerator / denominator
    }

    /// Exact knockoff by sequential conditional independent pairs; cost grows
    /// like `(K + 2)^p`, so only for tiny models.
    pub fn scip_knockoff<C: Chooser + ?Sized>(&self, x: &[usize], chooser: &mut C) -> Vec<usize> {
        let mut work = x.to_vec();
        let mut knockoff: Vec<usize> = Vec::with_capacity(x.len());
        for j in 0..x.len() {
            let original = work[j];
            let weights: Vec<f64> = (0..self.sizes[j])
                .map(|v| {
                    work[j] = v;
                    self.scip_weight(&mut work, &knockoff)
                })
                .collect();
            work[j] = original;
            knockoff.push(chooser.choose(&weights));
        }
        knockoff
    }

    /// `P(Y | ·)` lookups for the last coordinate treated as the response.
    fn response_deviation(&self, conditioning: u64) -> f64 {
        let p = self.dim() - 1;
        let y_size = self.sizes[p];
        // Marginal over (X_M, Y) where M = bits of `conditioning`.
        let keep: Vec<usize> = (0..p).filter(|&i| conditioning >> i & 1 == 1).chain(core::iter::once(p)).collect();
        let reduced = self.marginalize(&keep);
        let mut worst = 0.0f64;
        let x_configs: usize = self.sizes[..p].iter().product();
        for xi in 0..x_configs {
            let mut full = self.decode(xi * y_size);
            let full_total: f64 = (0..y_size)
                .map(|y| {
                    full[p] = y;
                    self.prob(&full)
                })
                .sum();
            let mut key: Vec<usize> = keep.iter().map(|&j| full[j]).collect();
            let last = key.len() - 1;
            let reduced_total: f64 = (0..y_size)
                .map(|y| {
                    key[last] = y;
                    reduced.prob(&key)
                })
                .sum();
            for y in 0..y_size {
                full[p] = y;
                key[last] = y;
                let a = self.prob(&full) / full_total;
                let b = reduced.prob(&key) / reduced_total;
                worst = worst.max((a - b).abs());
            }
        }
        worst
    }
}

impl<C: Chooser + ?Sized> PosteriorImputer<usize, C> for FiniteJoint {
    fn impute(&mut self, sample: &MaskedSample<usize>, rng: &mut C) -> Result<Vec<usize>> {
        self.posterior_impute(sample, rng)
    }
}

impl<C: Chooser + ?Sized> KnockoffSampler<usize, C> for FiniteJoint {
    fn knockoff(&mut self, x: &[usize], rng: &mut C) -> Result<Vec<usize>> {
        Ok(self.scip_knockoff(x, rng))
    }
}

impl<C: Chooser + ?Sized> MarginalSampler<usize, C> for FiniteJoint {
    fn sample_marginal(&self, j: usize, rng: &mut C) -> usize {
        rng.choose(&self.univariate(j))
    }
}

/// SCIP knockoffs on the marginal of each row's observed block.
#[derive(Debug, Clone)]
pub struct FiniteObservedKnockoffs<'a>(pub &'a FiniteJoint);

impl<C: Chooser + ?Sized> ObservedKnockoffFactory<usize, C> for FiniteObservedKnockoffs<'_> {
    fn knockoff_observed(&mut self, sample: &MaskedSample<usize>, rng: &mut C) -> Result<Vec<usize>> {
        let observed = sample.observed_indices();
        let marginal = self.0.marginalize(&observed);
        let knock = marginal.scip_knockoff(&sample.observed_values(), rng);
        let mut out = sample.values().to_vec();
        for (&j, v) in observed.iter().zip(knock) {
            out[j] = v;
        }
        Ok(out)
    }
}

impl<R: Rng + ?Sized> CoordinateModel<R> for FiniteJoint {
    fn dim(&self) -> usize {
        FiniteJoint::dim(self)
    }

    fn sample_joint(&self, rng: &mut R) -> Vec<f64> {
        self.sample(rng).into_iter().map(|v| v as f64).collect()
    }

    fn sample_conditional(&self, j: usize, x: &[f64], rng: &mut R) -> Result<f64> {
        let codes: Vec<usize> = x.iter().map(|&v| v as usize).collect();
        let mut mask = vec![false; codes.len()];
        mask[j] = true;
        let sample = MaskedSample::new(&codes, &mask)?;
        Ok(self.posterior_impute(&sample, rng)?[j] as f64)
    }

    fn sample_marginal(&self, j: usize, rng: &mut R) -> f64 {
        rng.choose(&self.univariate(j)) as f64
    }

    fn variance_decomposition(&self, j: usize) -> Result<(f64, f64)> {
        if j >= self.dim() {
            return Err(Error::IndexOutOfRange { index: j, len: self.dim() });
        }
        let mean: f64 = self.univariate(j).iter().enumerate().map(|(v, p)| v as f64 * p).sum();
        let var_y: f64 = self.univariate(j).iter().enumerate().map(|(v, p)| (v as f64 - mean) * (v as f64 - mean) * p).sum();
        // E[Y | X_{−j}] for every configuration of the others.
        let rest: Vec<usize> = (0..self.dim()).filter(|&i| i != j).collect();
        let mut sums: BTreeMap<Vec<usize>, (f64, f64)> = BTreeMap::new();
        for (i, &p) in self.probs.iter().enumerate() {
            let x = self.decode(i);
            let key: Vec<usize> = rest.iter().map(|&r| x[r]).collect();
            let e = sums.entry(key).or_insert((0.0, 0.0));
            e.0 += p;
            e.1 += p * x[j] as f64;
        }
        let var_cond_mean = sums
            .values()
            .filter(|(p, _)| *p > 0.0)
            .map(|&(p, s)| p * (s / p - mean) * (s / p - mean))
            .sum();
        Ok((var_y, var_cond_mean))
    }
}

/// Smallest `M` with `Y ⊥ X_{−M} | X_M`, by exhaustive search over subsets
/// in order of size. The last coordinate of `joint` is `Y`.
pub fn markov_blanket_bruteforce(joint: &FiniteJoint, tol: f64) -> Result<Vec<usize>> {
    if joint.dim() < 2 {
        return Err(Error::InvalidParameter("need at least one covariate and a response".into()));
    }
    if joint.probs.iter().any(|&p| !(p > 0.0)) {
        return Err(Error::NotStrictlyPositive);
    }
    let p = joint.dim() - 1;
    if p > 16 {
        return Err(Error::InvalidParameter("too many covariates for exhaustive search".into()));
    }
    let mut subsets: Vec<u64> = (0..(1u64 << p)).collect();
    subsets.sort_by_key(|s| (s.count_ones(), *s));
    for subset in subsets {
        if joint.response_deviation(subset) <= tol {
            return Ok((0..p).filter(|&i| subset >> i & 1 == 1).collect());
        }
    }
    unreachable!("the full covariate set always blankets Y")
}

/// `{i : Y and X_i are dependent given X_{−i}}`.
pub fn pairwise_dependence_set(joint: &FiniteJoint, tol: f64) -> Result<Vec<usize>> {
    if joint.probs.iter().any(|&p| !(p > 0.0)) {
        return Err(Error::NotStrictlyPositive);
    }
    let p = joint.dim() - 1;
    let all = (1u64 << p) - 1;
    Ok((0..p).filter(|&i| joint.response_deviation(all & !(1u64 << i)) > tol).collect())
}

fn random_distribution<R: Rng + ?Sized>(n: usize, floor: f64, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| floor + rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

fn random_stochastic<R: Rng + ?Sized>(rows: usize, cols: usize, floor: f64, rng: &mut R) -> Matrix {
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        data.extend(random_distribution(cols, floor, rng));
    }
    Matrix::from_row_major(rows, cols, data)
}

/// Strictly positive table with entries `∝ floor + U(0,1)`.
pub fn random_finite_joint<R: Rng + ?Sized>(sizes: Vec<usize>, floor: f64, rng: &mut R) -> FiniteJoint {
    let n = sizes.iter().product();
    FiniteJoint { sizes, probs: random_distribution(n, floor, rng) }
}

/// Binary `(X_1..X_p, Y)` joint, strictly positive, in which `Y` depends on
/// the covariates only through `parents`.
pub fn random_response_joint<R: Rng + ?Sized>(p: usize, parents: &[usize], rng: &mut R) -> FiniteJoint {
    let x_law = random_distribution(1 << p, 0.05, rng);
    let cond = random_stochastic(1 << parents.len(), 2, 0.05, rng);
    let sizes = vec![2; p + 1];
    let mut probs = vec![0.0; 1 << (p + 1)];
    for (xi, &px) in x_law.iter().enumerate() {
        // Mixed radix: x_0 is the most significant bit.
        let bit = |j: usize| (xi >> (p - 1 - j)) & 1;
        let key = parents.iter().fold(0, |acc, &j| acc * 2 + bit(j));
        for y in 0..2 {
            probs[xi * 2 + y] = px * cond[(key, y)];
        }
    }
    FiniteJoint { sizes, probs }
}

pub fn random_hmm<R: Rng + ?Sized>(length: usize, states: usize, symbols: usize, rng: &mut R) -> HmmModel {
    HmmModel::homogeneous(
        length,
        random_distribution(states, 0.05, rng),
        random_stochastic(states, states, 0.05, rng),
        random_stochastic(states, symbols, 0.05, rng),
    )
    .expect("random tables are stochastic")
}

pub fn random_latent_model<R: Rng + ?Sized>(
    latent_sizes: Vec<usize>,
    symbol_sizes: &[usize],
    rng: &mut R,
) -> LatentFactorModel {
    let support: usize = latent_sizes.iter().product();
    let joint = random_distribution(support, 0.05, rng);
    let emissions = symbol_sizes.iter().map(|&k| random_stochastic(support, k, 0.05, rng)).collect();
    LatentFactorModel::new(latent_sizes, joint, emissions).expect("random tables are stochastic")
}

/// Exact law of an HMM's emissions.
pub fn hmm_emission_law(model: &HmmModel) -> Result<JointTable<Vec<usize>>> {
    enumerate(DEFAULT_PATH_LIMIT, |c| Ok(model.sample(c).1))
}

/// Exact law of a latent model's emissions.
pub fn latent_emission_law(model: &LatentFactorModel) -> JointTable<Vec<usize>> {
    let mut table = JointTable::new();
    let p = model.num_coords();
    let configs: usize = (0..p).map(|i| model.num_symbols(i)).product();
    for mut idx in 0..configs {
        let mut x = vec![0; p];
        for i in (0..p).rev() {
            x[i] = idx % model.num_symbols(i);
            idx /= model.num_symbols(i);
        }
        let prob: f64 = (0..model.latent_support())
            .map(|z| (0..p).fold(model.latent_joint()[z], |acc, i| acc * model.emission_prob(i, z, x[i])))
            .sum();
        table.add(x, prob);
    }
    table
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::trial_rng;

    #[test]
    fn deterministic_program_is_point_mass() {
        let t = enumerate(10, |_| Ok(7u8)).unwrap();
        assert_eq!(t, JointTable::point_mass(7u8));
    }

    #[test]
    fn fair_coin() {
        let t = enumerate(10, |c| Ok(c.bernoulli(0.5))).unwrap();
        assert_eq!(t.prob(&false), 0.5);
        assert_eq!(t.prob(&true), 0.5);
    }

    #[test]
    fn nested_choices_multiply() {
        let t = enumerate(100, |c| {
            let a = c.choose(&[1.0, 3.0]);
            let b = if a == 0 { 0 } else { c.choose(&[1.0, 0.0, 1.0]) };
            Ok((a, b))
        })
        .unwrap();
        assert_eq!(t.len(), 3);
        assert!((t.prob(&(0, 0)) - 0.25).abs() < 1e-15);
        assert!((t.prob(&(1, 2)) - 0.375).abs() < 1e-15);
        assert!((t.total() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn path_limit() {
        let err = enumerate(3, |c| Ok((c.bernoulli(0.5), c.bernoulli(0.5)))).unwrap_err();
        assert_eq!(err, Error::SupportTooLarge { limit: 3 });
    }

    #[test]
    fn iid_copy_is_exchangeable_and_shift_is_not() {
        let iid = enumerate(100, |c| {
            let x = vec![c.choose(&[0.3, 0.7]), c.choose(&[0.6, 0.4])];
            let xt = vec![c.choose(&[0.3, 0.7]), c.choose(&[0.6, 0.4])];
            Ok((x, xt))
        })
        .unwrap();
        assert!(check_pairwise_exchangeable(&iid, 2) < 1e-15);
        let shifted = enumerate(100, |c| {
            let x = vec![c.choose(&[0.5, 0.5])];
            Ok((x.clone(), vec![x[0] + 1]))
        })
        .unwrap();
        assert!(check_pairwise_exchangeable(&shifted, 1) > 0.5);
    }

    #[test]
    fn tv_extremes_and_mismatch() {
        let a = JointTable::point_mass(vec![0usize]);
        let b = JointTable::point_mass(vec![1usize]);
        assert_eq!(check_distribution_preserved(&a, &a).unwrap(), 0.0);
        assert_eq!(check_distribution_preserved(&a, &b).unwrap(), 1.0);
        let c = JointTable::point_mass(vec![0usize, 0]);
        assert_eq!(check_distribution_preserved(&a, &c).unwrap_err(), Error::SupportMismatch);
    }

    #[test]
    fn finite_joint_round_trips_and_marginals() {
        let mut rng = trial_rng(0, 0, 0);
        let j = random_finite_joint(vec![2, 3, 2], 0.05, &mut rng);
        for i in 0..12 {
            assert_eq!(j.encode(&j.decode(i)), i);
        }
        let m = j.marginalize(&[1]);
        assert!((m.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let back = FiniteJoint::from_table(vec![2, 3, 2], &j.to_table()).unwrap();
        assert!(back.probs().iter().zip(j.probs()).all(|(a, b)| (a - b).abs() < 1e-15));
    }

    #[test]
    fn blanket_of_independent_response_is_empty() {
        let x = [0.1, 0.2, 0.3, 0.4];
        let mut probs = Vec::new();
        for px in x {
            probs.extend([px * 0.3, px * 0.7]);
        }
        let joint = FiniteJoint::new(vec![2, 2, 2], probs).unwrap();
        assert!(markov_blanket_bruteforce(&joint, 1e-9).unwrap().is_empty());
        let zero = FiniteJoint::new(vec![2, 2], vec![0.5, 0.0, 0.25, 0.25]).unwrap();
        assert_eq!(markov_blanket_bruteforce(&zero, 1e-9).unwrap_err(), Error::NotStrictlyPositive);
    }
}
