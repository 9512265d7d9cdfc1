//! The knockoff filter: L1-penalized logistic regression on `[X̂, X̃]`,
//! cross-validated by AUC, `W_j = |β_j| − |β_{j+p}|`, and the knockoff+
//! threshold.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Penalty grid used for cross-validation.
pub const LAMBDA_GRID: [f64; 5] = [1e-10, 1e-2, 1e-1, 1.0, 1e1];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LassoOptions {
    /// Stop once the largest coefficient change in an iteration falls below this.
    pub tolerance: f64,
    /// Cap on outer iterations and on coordinate sweeps per inner solve.
    pub max_sweeps: usize,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self { tolerance: 1e-7, max_sweeps: 10_000 }
    }
}

/// Minimizer of `Σ_i log(1 + exp(−ỹ_i (βᵀx_i + β₀))) + λ‖β‖₁` with
/// `ỹ_i = ±1` and an unpenalized intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoLogisticFit {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
    /// Penalized objective after each outer iteration.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
}

impl LassoLogisticFit {
    pub fn decision(&self, row: &[f64]) -> f64 {
        self.intercept + row.iter().zip(&self.coefficients).map(|(x, b)| x * b).sum::<f64>()
    }

    pub fn sweeps(&self) -> usize {
        self.objective_trace.len()
    }
}

/// Logistic loss `Σ softplus(η_i) − y_i η_i`, filling `prob` with `σ(η_i)`
/// and `comp` with `1 − σ(η_i)`.
fn loss_and_prob(eta: &[f64], y: &[f64], prob: &mut [f64], comp: &mut [f64]) -> f64 {
    let mut loss = 0.0;
    for (((&e, &yi), pr), cm) in eta.iter().zip(y).zip(prob.iter_mut()).zip(comp.iter_mut()) {
        let t = libm::exp(-e.abs());
        let wrong_side = (yi > 0.5) != (e >= 0.0);
        loss += libm::log1p(t) + if wrong_side { e.abs() } else { 0.0 };
        let (big, small) = (1.0 / (1.0 + t), t / (1.0 + t));
        (*pr, *cm) = if e >= 0.0 { (big, small) } else { (small, big) };
    }
    loss
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four accumulators so the loop vectorizes.
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    acc[0] + acc[1] + acc[2] + acc[3] + tail
}

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

fn validate_problem(design: &Matrix, labels: &[bool], lambda: f64) -> Result<()> {
    if design.rows() != labels.len() {
        return Err(Error::DimensionMismatch { expected: design.rows(), found: labels.len() });
    }
    if design.rows() < 2 || design.cols() == 0 {
        return Err(Error::InvalidParameter("need at least two rows and one column".into()));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter("lambda must be finite and nonnegative".into()));
    }
    if design.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 || positives == labels.len() {
        return Err(Error::SingleClassLabels);
    }
    Ok(())
}

pub fn fit_lasso_logistic(design: &Matrix, labels: &[bool], lambda: f64) -> Result<LassoLogisticFit> {
    fit_lasso_logistic_with(design, labels, lambda, &LassoOptions::default(), None)
}

/// Proximal Newton with cyclic coordinate descent on each quadratic model,
/// optionally warm-started from a previous fit.
pub fn fit_lasso_logistic_with(
    design: &Matrix,
    labels: &[bool],
    lambda: f64,
    options: &LassoOptions,
    warm_start: Option<&LassoLogisticFit>,
) -> Result<LassoLogisticFit> {
    validate_problem(design, labels, lambda)?;
    let (n, d) = (design.rows(), design.cols());
    let columns: Vec<Vec<f64>> = (0..d).map(|j| (0..n).map(|i| design[(i, j)]).collect()).collect();
    fit_columns(&columns, labels, lambda, options, warm_start)
}

/// Proximal Newton iterations: each builds the weighted Gram matrix of the
/// quadratic model at the current point, minimizes model + penalty by cyclic
/// coordinate descent (intercept first, unpenalized), and backtracks along
/// the resulting direction until the objective does not increase. One trace
/// entry per outer iteration.
fn fit_columns(
    columns: &[Vec<f64>],
    labels: &[bool],
    lambda: f64,
    options: &LassoOptions,
    warm_start: Option<&LassoLogisticFit>,
) -> Result<LassoLogisticFit> {
    let n = labels.len();
    let d = columns.len();
    let dim = d + 1;
    let y: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();
    // theta[0] is the intercept, theta[j + 1] the coefficient of column j.
    let mut theta = match warm_start {
        Some(fit) if fit.coefficients.len() == d => [&[fit.intercept][..], &fit.coefficients].concat(),
        _ => {
            let rate = y.iter().sum::<f64>() / n as f64;
            let mut t = vec![0.0; dim];
            t[0] = libm::log(rate / (1.0 - rate));
            t
        }
    };
    let ones = vec![1.0; n];
    let penalty = |t: &[f64]| lambda * t[1..].iter().map(|b| b.abs()).sum::<f64>();

    let mut eta = vec![theta[0]; n];
    for j in 1..dim {
        if theta[j] != 0.0 {
            for (i, e) in eta.iter_mut().enumerate() {
                *e += theta[j] * columns[j - 1][i];
            }
        }
    }
    let (mut prob, mut comp) = (vec![0.0; n], vec![0.0; n]);
    let mut loss = loss_and_prob(&eta, &y, &mut prob, &mut comp);
    let mut objective = loss + penalty(&theta);
    let (mut trial_prob, mut trial_comp) = (vec![0.0; n], vec![0.0; n]);
    let mut trial_eta = vec![0.0; n];
    let mut direction_eta = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let mut residual = vec![0.0; n];
    let mut weighted = vec![0.0; n];
    let mut gram = vec![0.0; dim * dim];
    let mut model_grad = vec![0.0; dim];
    let mut inner_tol = 1e-3f64;
    let mut trace = Vec::new();
    let mut converged = false;

    for _ in 0..options.max_sweeps {
        for i in 0..n {
            residual[i] = if y[i] > 0.5 { -comp[i] } else { prob[i] };
            weights[i] = prob[i] * comp[i];
        }
        if loss < f64::MIN_POSITIVE || weights.iter().all(|&w| w == 0.0) {
            // Saturated probabilities: the fit is diverging.
            break;
        }
        for j in 0..dim {
            let cj = if j == 0 { &ones[..] } else { &columns[j - 1][..] };
            for ((wc, &w), &x) in weighted.iter_mut().zip(&weights).zip(cj) {
                *wc = w * x;
            }
            model_grad[j] = dot(cj, &residual);
            for k in j..dim {
                let ck = if k == 0 { &ones[..] } else { &columns[k - 1][..] };
                let g = dot(&weighted, ck);
                gram[j * dim + k] = g;
                gram[k * dim + j] = g;
            }
        }

        // Cyclic coordinate descent on the quadratic model; model_grad tracks
        // the model gradient at the candidate point.
        // Cyclic coordinate descent on the quadratic model; model_grad tracks
        // the model gradient at the candidate point.
        let mut candidate = theta.clone();
        for _ in 0..options.max_sweeps {
            let mut max_delta = 0.0f64;
            for j in 0..dim {
                let a = gram[j * dim + j].max(f64::MIN_POSITIVE);
                let z = candidate[j] - model_grad[j] / a;
                let next = if j == 0 { z } else { soft_threshold(z, lambda / a) };
                let delta = next - candidate[j];
                if delta != 0.0 {
                    candidate[j] = next;
                    let col = &gram[j * dim..(j + 1) * dim];
                    for (g, &c) in model_grad.iter_mut().zip(col) {
                        *g += delta * c;
                    }
                    max_delta = max_delta.max(delta.abs());
                }
            }
            if max_delta < inner_tol {
                break;
            }
        }

        let direction: Vec<f64> = candidate.iter().zip(&theta).map(|(c, t)| c - t).collect();
        let size = direction.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if size == 0.0 {
            converged = true;
            break;
        }
        direction_eta.iter_mut().for_each(|v| *v = direction[0]);
        for j in 1..dim {
            if direction[j] != 0.0 {
                for (v, &x) in direction_eta.iter_mut().zip(&columns[j - 1]) {
                    *v += direction[j] * x;
                }
            }
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            for ((te, &e), &de) in trial_eta.iter_mut().zip(&eta).zip(&direction_eta) {
                *te = e + step * de;
            }
            let trial_theta: Vec<f64> = theta.iter().zip(&direction).map(|(t, dv)| t + step * dv).collect();
            let trial_loss = loss_and_prob(&trial_eta, &y, &mut trial_prob, &mut trial_comp);
            let value = trial_loss + penalty(&trial_theta);
            if value <= objective {
                accepted = Some((trial_theta, trial_loss, value));
                break;
            }
            step *= 0.5;
        }
        let Some((next_theta, next_loss, value)) = accepted else {
            // No descent at any step length: numerically stationary.
            converged = true;
            break;
        };
        theta = next_theta;
        loss = next_loss;
        objective = value;
        core::mem::swap(&mut eta, &mut trial_eta);
        core::mem::swap(&mut prob, &mut trial_prob);
        core::mem::swap(&mut comp, &mut trial_comp);
        trace.push(objective);
        let change = step * size;
        inner_tol = (1e-2 * change).clamp(1e-12, 1e-3);
        if change < options.tolerance {
            converged = true;
            break;
        }
    }
    debug_assert!(trace.windows(2).all(|w| w[1] <= w[0]));
    let intercept = theta[0];
    let coefficients = theta.split_off(1);
    Ok(LassoLogisticFit { coefficients, intercept, lambda, objective_trace: trace, converged })
}

/// Centers each column and scales it to unit standard deviation; constant
/// columns become zero. Every column gets the same rule, so original and
/// knockoff columns are treated alike.
pub fn standardize_columns(design: &Matrix) -> Matrix {
    let (n, d) = (design.rows(), design.cols());
    let mut out = design.clone();
    for j in 0..d {
        let mean = (0..n).map(|i| design[(i, j)]).sum::<f64>() / n as f64;
        let var = (0..n).map(|i| (design[(i, j)] - mean) * (design[(i, j)] - mean)).sum::<f64>() / n as f64;
        let sd = libm::sqrt(var);
        for i in 0..n {
            out[(i, j)] = if sd > 1e-12 { (design[(i, j)] - mean) / sd } else { 0.0 };
        }
    }
    out
}

/// Rank-based AUC (Mann–Whitney) with midranks for tied scores.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch { expected: scores.len(), found: labels.len() });
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClassLabels);
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // Ranks start..end (1-based start+1..=end) share their average.
        let midrank = (start + 1 + end) as f64 / 2.0;
        rank_sum += midrank * order[start..end].iter().filter(|&&i| labels[i]).count() as f64;
        start = end;
    }
    let n_pos_f = n_pos as f64;
    Ok((rank_sum - n_pos_f * (n_pos_f + 1.0) / 2.0) / (n_pos_f * n_neg as f64))
}

/// Fold index per row; each class is shuffled and dealt round-robin so
/// every fold sees both classes.
pub fn stratified_folds<R: Rng + ?Sized>(labels: &[bool], folds: usize, rng: &mut R) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::InvalidParameter("need at least two folds".into()));
    }
    let mut assignment = vec![0; labels.len()];
    let mut next = 0;
    for class in [false, true] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < folds {
            return Err(Error::FoldConstruction { class: u8::from(class), count: members.len(), folds });
        }
        members.shuffle(rng);
        for i in members {
            assignment[i] = next % folds;
            next += 1;
        }
    }
    Ok(assignment)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvOutcome {
    pub lambda: f64,
    /// `(lambda, mean validation AUC)` in the order evaluated (descending λ).
    pub mean_auc: Vec<(f64, f64)>,
}

/// Picks the grid value with the highest mean validation AUC over stratified
/// folds; ties go to the larger λ. Fits along each fold's path are warm
/// started from the previous (larger) λ.
pub fn cv_select_lambda<R: Rng + ?Sized>(
    design: &Matrix,
    labels: &[bool],
    grid: &[f64],
    folds: usize,
    options: &LassoOptions,
    rng: &mut R,
) -> Result<CvOutcome> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty lambda grid".into()));
    }
    validate_problem(design, labels, grid.iter().cloned().fold(0.0, f64::max))?;
    let assignment = stratified_folds(labels, folds, rng)?;
    let mut lambdas = grid.to_vec();
    lambdas.sort_by(|a, b| b.total_cmp(a));
    let d = design.cols();
    let mut totals = vec![0.0; lambdas.len()];
    for fold in 0..folds {
        let train: Vec<usize> = (0..labels.len()).filter(|&i| assignment[i] != fold).collect();
        let valid: Vec<usize> = (0..labels.len()).filter(|&i| assignment[i] == fold).collect();
        let columns: Vec<Vec<f64>> = (0..d).map(|j| train.iter().map(|&i| design[(i, j)]).collect()).collect();
        let train_labels: Vec<bool> = train.iter().map(|&i| labels[i]).collect();
        let valid_labels: Vec<bool> = valid.iter().map(|&i| labels[i]).collect();
        let mut previous: Option<LassoLogisticFit> = None;
        for (slot, &lambda) in totals.iter_mut().zip(&lambdas) {
            let fit = fit_columns(&columns, &train_labels, lambda, options, previous.as_ref())?;
            let scores: Vec<f64> = valid.iter().map(|&i| fit.decision(design.row(i))).collect();
            *slot += auc(&scores, &valid_labels)?;
            previous = Some(fit);
        }
    }
    let mean_auc: Vec<(f64, f64)> = lambdas.iter().zip(&totals).map(|(&l, &t)| (l, t / folds as f64)).collect();
    let mut best = mean_auc[0];
    for &candidate in &mean_auc[1..] {
        if candidate.1 > best.1 {
            best = candidate;
        }
    }
    Ok(CvOutcome { lambda: best.0, mean_auc })
}

/// `T_j = |β_j|`, `T̃_j = |β_{j+p}|`, `W_j = T_j − T̃_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct KnockoffStats {
    pub t_scores: Vec<f64>,
    pub t_tilde_scores: Vec<f64>,
    pub w: Vec<f64>,
}

pub fn knockoff_stats(fit: &LassoLogisticFit, p: usize) -> Result<KnockoffStats> {
    if fit.coefficients.len() != 2 * p {
        return Err(Error::DimensionMismatch { expected: 2 * p, found: fit.coefficients.len() });
    }
    let t_scores: Vec<f64> = fit.coefficients[..p].iter().map(|b| b.abs()).collect();
    let t_tilde_scores: Vec<f64> = fit.coefficients[p..].iter().map(|b| b.abs()).collect();
    let w = t_scores.iter().zip(&t_tilde_scores).map(|(a, b)| a - b).collect();
    Ok(KnockoffStats { t_scores, t_tilde_scores, w })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    /// Selected coordinates in increasing order.
    pub selected: Vec<usize>,
    /// `+∞` when nothing qualifies.
    pub threshold: f64,
    pub q: f64,
}

/// Knockoff+ threshold
/// `τ = min{t ∈ {|W_j| ≠ 0} : (1 + #{W_j ≤ −t}) / max(1, #{W_j ≥ t}) ≤ q}`.
pub fn knockoff_plus_threshold(w: &[f64], q: f64) -> Result<SelectionResult> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidParameter("q must lie in (0, 1)".into()));
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let mut candidates: Vec<f64> = w.iter().filter(|&&v| v != 0.0).map(|v| v.abs()).collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    // Sweep thresholds upward while maintaining both counts.
    let mut positives: Vec<f64> = w.iter().copied().filter(|&v| v > 0.0).collect();
    let mut negatives: Vec<f64> = w.iter().filter(|&&v| v < 0.0).map(|v| -v).collect();
    positives.sort_by(f64::total_cmp);
    negatives.sort_by(f64::total_cmp);
    let (mut pi, mut ni) = (0, 0);
    let mut threshold = f64::INFINITY;
    for &t in &candidates {
        while pi < positives.len() && positives[pi] < t {
            pi += 1;
        }
        while ni < negatives.len() && negatives[ni] < t {
            ni += 1;
        }
        let above = positives.len() - pi;
        let below = negatives.len() - ni;
        if (1.0 + below as f64) / (above.max(1) as f64) <= q {
            threshold = t;
            break;
        }
    }
    let selected = (0..w.len()).filter(|&j| w[j] >= threshold).collect();
    Ok(SelectionResult { selected, threshold, q })
}

/// `(FDP, power)` of a selection against the true support.
pub fn score_selection(result: &SelectionResult, support: &[usize], p: usize) -> Result<(f64, f64)> {
    if let Some(&bad) = support.iter().chain(&result.selected).find(|&&j| j >= p) {
        return Err(Error::IndexOutOfRange { index: bad, len: p });
    }
    let true_hits = result.selected.iter().filter(|j| support.contains(j)).count();
    let false_hits = result.selected.len() - true_hits;
    let fdp = false_hits as f64 / result.selected.len().max(1) as f64;
    let power = if support.is_empty() { 0.0 } else { true_hits as f64 / support.len() as f64 };
    Ok((fdp, power))
}

/// Full filter on `[X̂, X̃]`: standardize, cross-validate λ, refit, compute
/// statistics and threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome {
    pub lambda_cv: f64,
    pub fit: LassoLogisticFit,
    pub stats: KnockoffStats,
    pub selection: SelectionResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterSettings {
    pub q: f64,
    pub grid: Vec<f64>,
    pub folds: usize,
    pub lasso: LassoOptions,
}

impl Default for FilterSettings {
    fn default() -> Self {
        Self { q: 0.1, grid: LAMBDA_GRID.to_vec(), folds: 5, lasso: LassoOptions::default() }
    }
}

pub fn knockoff_filter<R: Rng + ?Sized>(
    stacked: &Matrix,
    labels: &[bool],
    settings: &FilterSettings,
    rng: &mut R,
) -> Result<FilterOutcome> {
    if stacked.cols() % 2 != 0 {
        return Err(Error::InvalidParameter("stacked design needs an even number of columns".into()));
    }
    let p = stacked.cols() / 2;
    let design = standardize_columns(stacked);
    let cv = cv_select_lambda(&design, labels, &settings.grid, settings.folds, &settings.lasso, rng)?;
    let fit = fit_lasso_logistic_with(&design, labels, cv.lambda, &settings.lasso, None)?;
    let stats = knockoff_stats(&fit, p)?;
    let selection = knockoff_plus_threshold(&stats.w, settings.q)?;
    Ok(FilterOutcome { lambda_cv: cv.lambda, fit, stats, selection })
}
