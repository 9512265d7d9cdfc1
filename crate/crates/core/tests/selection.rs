use missknock_core::linalg::Matrix;
use missknock_core::model::sigmoid;
use missknock_core::random::trial_rng;
use missknock_core::selection::{
    auc, cv_select_lambda, fit_lasso_logistic, knockoff_plus_threshold, knockoff_stats, standardize_columns,
    LassoOptions, LAMBDA_GRID,
};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn problem(n: usize, d: usize, seed: u64) -> (Matrix, Vec<bool>) {
    let mut rng = trial_rng(seed, 0, 0);
    let design = Matrix::from_fn(n, d, |_, _| StandardNormal.sample(&mut rng));
    let beta = [1.5, -1.0, 0.0, 0.5, 0.0];
    let labels = (0..n)
        .map(|i| {
            let eta: f64 = (0..d).map(|j| design[(i, j)] * beta[j % 5]).sum::<f64>() + 0.3;
            rng.random::<f64>() < sigmoid(eta)
        })
        .collect();
    (design, labels)
}

fn smooth_loss(design: &Matrix, labels: &[bool], beta: &[f64], b0: f64) -> f64 {
    (0..design.rows())
        .map(|i| {
            let eta: f64 = design.row(i).iter().zip(beta).map(|(x, b)| x * b).sum::<f64>() + b0;
            let s = if labels[i] { 1.0 } else { -1.0 };
            (1.0 + (-s * eta).exp()).ln()
        })
        .sum()
}

#[test]
fn kkt_conditions_by_finite_differences() {
    let (design, labels) = problem(200, 5, 41);
    for &lambda in &[0.5, 2.0, 10.0] {
        let fit = fit_lasso_logistic(&design, &labels, lambda).unwrap();
        assert!(fit.converged);
        let h = 1e-6;
        for j in 0..=5 {
            let eval = |delta: f64| {
                let mut beta = fit.coefficients.clone();
                let mut b0 = fit.intercept;
                if j < 5 {
                    beta[j] += delta;
                } else {
                    b0 += delta;
                }
                smooth_loss(&design, &labels, &beta, b0)
            };
            let grad = (eval(h) - eval(-h)) / (2.0 * h);
            if j == 5 {
                assert!(grad.abs() < 1e-5, "intercept gradient {grad}");
            } else if fit.coefficients[j] == 0.0 {
                assert!(grad.abs() <= lambda + 1e-5, "inactive {j}: {grad}");
            } else {
                assert!((grad + lambda * fit.coefficients[j].signum()).abs() < 1e-5, "active {j}: {grad}");
            }
        }
    }
}

#[test]
fn objective_never_increases() {
    for seed in 0..5 {
        let (design, labels) = problem(120, 5, 50 + seed);
        for &lambda in &LAMBDA_GRID {
            let fit = fit_lasso_logistic(&design, &labels, lambda).unwrap();
            for w in fit.objective_trace.windows(2) {
                assert!(w[1] <= w[0]);
            }
        }
    }
}

#[test]
fn auc_hand_counts() {
    assert_eq!(auc(&[0.9, 0.8, 0.1], &[true, false, false]).unwrap(), 1.0);
    assert_eq!(auc(&[0.9, 0.8, 0.1], &[false, true, true]).unwrap(), 0.0);
    // Pairs (pos, neg): (0.7,0.2) win, (0.7,0.7) tie, (0.3,0.2) win, (0.3,0.7) loss.
    assert_eq!(auc(&[0.7, 0.3, 0.2, 0.7], &[true, true, false, false]).unwrap(), 0.625);
}

#[test]
fn noise_labels_give_chance_auc() {
    let mut rng = trial_rng(42, 0, 0);
    let mut chosen = std::collections::BTreeSet::new();
    let mut aucs = Vec::new();
    for _ in 0..10 {
        let design = standardize_columns(&Matrix::from_fn(150, 6, |_, _| StandardNormal.sample(&mut rng)));
        let labels: Vec<bool> = (0..150).map(|_| rng.random::<bool>()).collect();
        let cv = cv_select_lambda(&design, &labels, &LAMBDA_GRID, 5, &LassoOptions::default(), &mut rng).unwrap();
        chosen.insert(cv.lambda.to_bits());
        aucs.extend(cv.mean_auc.iter().map(|&(_, a)| a));
    }
    let mean = aucs.iter().sum::<f64>() / aucs.len() as f64;
    assert!((mean - 0.5).abs() < 0.05, "mean AUC {mean}");
    assert!(chosen.len() >= 2, "selected λ never varied");
}

#[test]
fn swapping_a_pair_negates_its_statistic() {
    let (raw, labels) = problem(150, 6, 43);
    let design = standardize_columns(&raw);
    let fit = fit_lasso_logistic(&design, &labels, 1.0).unwrap();
    let w = knockoff_stats(&fit, 3).unwrap().w;
    for j in 0..3 {
        let swapped = Matrix::from_fn(150, 6, |i, c| {
            let c = if c == j { j + 3 } else if c == j + 3 { j } else { c };
            design[(i, c)]
        });
        let w2 = knockoff_stats(&fit_lasso_logistic(&swapped, &labels, 1.0).unwrap(), 3).unwrap().w;
        assert!((w2[j] + w[j]).abs() < 1e-5, "W_{j}: {} vs {}", w[j], w2[j]);
        for k in (0..3).filter(|&k| k != j) {
            assert!((w2[k] - w[k]).abs() < 1e-5);
        }
    }
}

fn brute_force_threshold(w: &[f64], q: f64) -> (f64, Vec<usize>) {
    let mut best = f64::INFINITY;
    for &t in w {
        let t = t.abs();
        if t == 0.0 {
            continue;
        }
        let neg = w.iter().filter(|&&v| v <= -t).count() as f64;
        let pos = w.iter().filter(|&&v| v >= t).count() as f64;
        if (1.0 + neg) / pos.max(1.0) <= q && t < best {
            best = t;
        }
    }
    let selected = (0..w.len()).filter(|&j| w[j] >= best).collect();
    (best, selected)
}

#[test]
fn threshold_examples_and_brute_force_scan() {
    let r = knockoff_plus_threshold(&[2.0, -1.0, 3.0, -0.5, 4.0], 0.5).unwrap();
    assert_eq!((r.threshold, r.selected.clone()), (2.0, vec![0, 2, 4]));
    let r = knockoff_plus_threshold(&[1.0, 2.0, 3.0, 4.0], 0.25).unwrap();
    assert_eq!((r.threshold, r.selected.len()), (1.0, 4));

    let mut rng = trial_rng(44, 0, 0);
    for _ in 0..1000 {
        let p = rng.random_range(1..40);
        // Rounded values force ties and zeros.
        let w: Vec<f64> = (0..p).map(|_| (rng.random_range(-3.0..5.0f64) * 4.0).round() / 4.0).collect();
        let q = rng.random_range(0.05..0.5);
        let r = knockoff_plus_threshold(&w, q).unwrap();
        let (tau, selected) = brute_force_threshold(&w, q);
        assert_eq!(r.threshold, tau, "{w:?}");
        assert_eq!(r.selected, selected);
    }
}
