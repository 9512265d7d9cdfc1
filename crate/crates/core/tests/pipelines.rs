use missknock_core::certify::{exact_over_inputs, MaskLaw};
use missknock_core::error::Error;
use missknock_core::model::{make_ar1_covariance, swap_by_bits, MaskedSample, MvnModel};
use missknock_core::mvn::build_gaussian_knockoff_sampler;
use missknock_core::oracle::{
    check_pairwise_exchangeable, enumerate, hmm_emission_law, random_finite_joint, random_hmm, FiniteObservedKnockoffs, JointTable,
    DEFAULT_PATH_LIMIT,
};
use missknock_core::pipeline::{
    mse_compare, posterior_knockoffs, posterior_pair, univariate_knockoffs, HmmPosterior, Mechanism, MvnObservedKnockoffs,
    MvnPosterior, SesiaSampler,
};
use missknock_core::random::trial_rng;

#[test]
fn always_missing_coordinate_keeps_the_covariance() {
    let model = MvnModel::centered(make_ar1_covariance(2, 0.8).unwrap()).unwrap();
    let mut rng = trial_rng(31, 0, 0);
    let n = 100_000;
    let rows: Vec<MaskedSample<f64>> =
        (0..n).map(|_| MaskedSample::new(&model.sample(&mut rng), &[false, true]).unwrap()).collect();
    let mut imputer = MvnPosterior::new(model.clone());
    let mut sampler = build_gaussian_knockoff_sampler(&model).unwrap();
    let pairs = posterior_knockoffs(&rows, &mut imputer, &mut sampler, &mut rng).unwrap();
    let sigma = model.covariance();
    for a in 0..2 {
        for b in 0..2 {
            let c = pairs.iter().map(|p| p.imputed()[a] * p.imputed()[b]).sum::<f64>() / n as f64;
            let se = ((sigma[(a, a)] * sigma[(b, b)] + sigma[(a, b)].powi(2)) / n as f64).sqrt();
            assert!((c - sigma[(a, b)]).abs() < 4.0 * se);
        }
    }
}

#[test]
fn hmm_posterior_pipeline_is_exactly_exchangeable() {
    let model = random_hmm(3, 2, 2, &mut trial_rng(32, 0, 0));
    let inputs = MaskLaw::Mcar(vec![0.4, 0.3, 0.5]).with_data(&hmm_emission_law(&model).unwrap());
    let law = exact_over_inputs(&inputs, |sample, c| {
        Ok(posterior_pair(sample, &mut HmmPosterior(&model), &mut SesiaSampler(&model), c)?.into_parts())
    })
    .unwrap();
    assert!(check_pairwise_exchangeable(&law, 3) <= 1e-10);
}

#[test]
fn univariate_pipeline_moments_are_swap_invariant() {
    let model = MvnModel::new(vec![0.5, -0.5, 1.0], make_ar1_covariance(3, 0.6).unwrap()).unwrap();
    let mut rng = trial_rng(33, 0, 0);
    let n = 100_000;
    let rows: Vec<MaskedSample<f64>> =
        (0..n).map(|_| MaskedSample::new(&model.sample(&mut rng), &[false, false, true]).unwrap()).collect();
    let mut factory = MvnObservedKnockoffs::new(model.clone());
    let pairs = univariate_knockoffs(&rows, &model, &mut factory, Mechanism::Mcar, &mut rng).unwrap();
    let joint: Vec<Vec<f64>> = pairs.iter().map(|p| [p.imputed(), p.knockoff()].concat()).collect();
    let d = 6;
    let nf = n as f64;
    let mean: Vec<f64> = (0..d).map(|a| joint.iter().map(|r| r[a]).sum::<f64>() / nf).collect();
    let mut cov = vec![vec![0.0; d]; d];
    let mut se = vec![vec![0.0; d]; d];
    for a in 0..d {
        for b in 0..d {
            let prods: Vec<f64> = joint.iter().map(|r| (r[a] - mean[a]) * (r[b] - mean[b])).collect();
            let m = prods.iter().sum::<f64>() / nf;
            let v = prods.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (nf - 1.0);
            cov[a][b] = m;
            se[a][b] = (v / nf).sqrt();
        }
    }
    let var: Vec<f64> = (0..d).map(|a| cov[a][a]).collect();
    for bits in 1u64..8 {
        let idx: Vec<usize> = (0..d).collect();
        let (l, r) = swap_by_bits(&idx[..3], &idx[3..], bits);
        let perm = [l, r].concat();
        for a in 0..d {
            let tol = 4.0 * ((var[a] + var[perm[a]]) / nf).sqrt();
            assert!((mean[a] - mean[perm[a]]).abs() < tol, "mean {a} under swap {bits:b}");
            for b in 0..d {
                let (pa, pb) = (perm[a], perm[b]);
                let tol = 4.0 * (se[a][b].powi(2) + se[pa][pb].powi(2)).sqrt();
                assert!((cov[a][b] - cov[pa][pb]).abs() < tol, "cov ({a},{b}) under swap {bits:b}");
            }
        }
    }
}

#[test]
fn univariate_pipeline_exact_on_two_coordinates() {
    let joint = random_finite_joint(vec![3, 2], 0.05, &mut trial_rng(34, 0, 0));
    let mut law = JointTable::new();
    for (x, px) in joint.to_table().iter() {
        for bits in 0u64..4 {
            let mask = [bits & 1 == 1, bits & 2 == 2];
            let pm: f64 = [0.3, 0.45].iter().zip(mask).map(|(r, m)| if m { *r } else { 1.0 - r }).product();
            let sample = MaskedSample::new(x, &mask).unwrap();
            let mut factory = FiniteObservedKnockoffs(&joint);
            let pairs = enumerate(DEFAULT_PATH_LIMIT, |c| {
                Ok(univariate_knockoffs(&[sample.clone()], &joint, &mut factory, Mechanism::Mcar, c)?
                    .remove(0)
                    .into_parts())
            })
            .unwrap();
            law.add_scaled(&pairs, px * pm);
        }
    }
    assert!(check_pairwise_exchangeable(&law, 2) <= 1e-10);
}

#[test]
fn univariate_pipeline_refuses_undeclared_mar() {
    let model = MvnModel::centered(make_ar1_covariance(2, 0.3).unwrap()).unwrap();
    let rows = vec![MaskedSample::new(&[0.0, 1.0], &[true, false]).unwrap()];
    let mut factory = MvnObservedKnockoffs::new(model.clone());
    let mut rng = trial_rng(35, 0, 0);
    let err = univariate_knockoffs(&rows, &model, &mut factory, Mechanism::Mar { allow: false }, &mut rng).unwrap_err();
    assert_eq!(err, Error::RequiresMcar);
    assert!(univariate_knockoffs(&rows, &model, &mut factory, Mechanism::Mar { allow: true }, &mut rng).is_ok());
}

#[test]
fn bivariate_normal_mse() {
    let model = MvnModel::centered(make_ar1_covariance(2, 0.6).unwrap()).unwrap();
    let report = mse_compare(&model, 1, 100_000, &mut trial_rng(36, 0, 0)).unwrap();
    assert!((report.analytic_posterior - 1.28).abs() < 1e-12);
    assert!((report.analytic_univariate - 2.0).abs() < 1e-12);
    assert!((report.mse_posterior - 1.28).abs() < 4.0 * report.se_posterior);
    assert!((report.mse_univariate - 2.0).abs() < 4.0 * report.se_univariate);
}

#[test]
fn nearly_determined_coordinate_has_small_posterior_mse() {
    let model = MvnModel::centered(make_ar1_covariance(2, 0.999).unwrap()).unwrap();
    let report = mse_compare(&model, 0, 10_000, &mut trial_rng(37, 0, 0)).unwrap();
    assert!(report.analytic_posterior < 0.004);
    assert!(report.mse_posterior < 0.01);
}
