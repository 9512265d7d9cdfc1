use std::collections::{BTreeMap, HashSet};
use std::fs;

use missknock::config::{Amplitude, ExperimentConfig, Family, MaskMode, Method, Preset};
use missknock::experiment::{mean_se, ExperimentResult};
use missknock::output::{SUMMARY_HEADER, TRIALS_HEADER};
use missknock::{emit_results, run_experiment, RunOptions};
use missknock_core::mvn::build_gaussian_knockoff_sampler;
use missknock_core::random::{trial_rng, trial_stream_id};
use missknock_core::selection::{knockoff_filter, score_selection, FilterSettings};
use missknock_core::{make_ar1_covariance, KnockoffPair, MvnModel, ResponseModel};
use missknock_core::model::simulate_response;
use missknock_core::pipeline::stack_design;

fn small_mvn() -> ExperimentConfig {
    ExperimentConfig {
        family: Family::Mvn,
        p: 10,
        amplitude: Amplitude::Fixed(1.0),
        support_size: 3,
        q: 0.2,
        rho_grid: vec![0.0, 0.5],
        p0_grid: vec![0.0, 0.3],
        n_grid: vec![60],
        mask_mode: MaskMode::All,
        method: Method::Posterior,
        replicates: 3,
        master_seed: 7,
        response_shift: 0.0,
        lambda_grid: vec![1e-2, 1.0],
        folds: 5,
    }
}

fn serial() -> RunOptions {
    RunOptions { threads: 1, timing: false }
}

#[test]
fn presets_are_valid() {
    for preset in [Preset::MvnDesk, Preset::HmmDesk, Preset::MvnPaper, Preset::HmmPaper] {
        preset.config().validate().unwrap();
    }
    let desk = Preset::MvnDesk.config();
    assert_eq!((desk.p, desk.n_grid.as_slice(), desk.support_size, desk.replicates), (50, &[150][..], 6, 200));
    assert!((desk.amplitude.value(150) - 10.0 / 150f64.sqrt()).abs() < 1e-15);
    let paper = Preset::MvnPaper.config();
    assert_eq!(paper.rho_grid, vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8]);
    assert_eq!(paper.p0_grid, vec![0.0, 0.1, 0.2, 0.3, 0.4]);
    assert!((paper.amplitude.value(1050) - 0.3086).abs() < 1e-4);
    let hmm = Preset::HmmPaper.config();
    assert_eq!(hmm.n_grid.first().zip(hmm.n_grid.last()), Some((&500, &2000)));
    assert_eq!(hmm.p0_grid.len(), 11);
    assert_eq!(hmm.amplitude, Amplitude::Fixed(0.32));
}

#[test]
fn invalid_configs_are_rejected() {
    let mut c = small_mvn();
    c.method = Method::ModifiedSesia;
    assert!(c.validate().is_err());
    let mut c = small_mvn();
    c.q = 1.0;
    assert!(c.validate().is_err());
    let mut c = small_mvn();
    c.p0_grid.clear();
    assert!(c.validate().is_err());
    let mut c = small_mvn();
    c.support_size = 11;
    assert!(c.validate().is_err());
    let mut c = small_mvn();
    c.rho_grid = vec![1.0];
    assert!(c.validate().is_err());
}

#[test]
fn json_round_trip_and_amplitude_rule() {
    let config = Preset::MvnDesk.config();
    let text = serde_json::to_string(&config).unwrap();
    assert!(text.contains("\"10/sqrt(N)\""));
    let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
    assert_eq!(back, config);
    let parsed: Amplitude = serde_json::from_str("\"10 / sqrt(N)\"").unwrap();
    assert_eq!(parsed, Amplitude::InverseSqrtN(10.0));
    assert!(serde_json::from_str::<Amplitude>("\"sqrt\"").is_err());
    let unknown = text.replacen("{", "{\"bogus\":1,", 1);
    assert!(serde_json::from_str::<ExperimentConfig>(&unknown).is_err());
}

#[test]
fn grid_order_and_seed_uniqueness() {
    let grid = small_mvn().grid();
    let order: Vec<(f64, f64)> = grid.iter().map(|g| (g.rho, g.p0)).collect();
    assert_eq!(order, vec![(0.0, 0.0), (0.0, 0.3), (0.5, 0.0), (0.5, 0.3)]);
    for preset in [Preset::MvnPaper, Preset::HmmPaper] {
        let config = preset.config();
        let mut seen = HashSet::new();
        for point in config.grid() {
            for rep in 0..config.replicates {
                assert!(seen.insert(trial_stream_id(point.index, rep)));
            }
        }
    }
}

fn read_csv(path: &std::path::Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(str::to_string).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(str::to_string).collect()).collect();
    (header, rows)
}

#[test]
fn empty_run_writes_headers_only() {
    let dir = tempfile::tempdir().unwrap();
    let result = ExperimentResult { config: small_mvn(), support: vec![0, 1, 2], records: vec![], summary: vec![] };
    emit_results(&result, dir.path()).unwrap();
    let (h, rows) = read_csv(&dir.path().join("trials.csv"));
    assert_eq!(h, TRIALS_HEADER);
    assert!(rows.is_empty());
    let (h, rows) = read_csv(&dir.path().join("summary.csv"));
    assert_eq!(h, SUMMARY_HEADER);
    assert!(rows.is_empty());
    let run: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("run.json")).unwrap()).unwrap();
    assert_eq!(run["master_seed"], 7);
    assert_eq!(run["trials"], 0);
}

#[test]
fn summary_matches_trials_csv() {
    let config = small_mvn();
    let result = run_experiment(&config, serial()).unwrap();
    assert_eq!(result.failures(), 0);
    assert_eq!(result.summary.len(), config.grid().len());
    let dir = tempfile::tempdir().unwrap();
    emit_results(&result, dir.path()).unwrap();

    // Recompute from the CSV text alone.
    let (header, rows) = read_csv(&dir.path().join("trials.csv"));
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let mut groups: BTreeMap<(String, String), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for row in &rows {
        assert_eq!(row[col("status")], "ok");
        let fdp: f64 = row[col("fdp")].parse().unwrap();
        let power: f64 = row[col("power")].parse().unwrap();
        assert!((0.0..=1.0).contains(&fdp) && (0.0..=1.0).contains(&power));
        assert!(row[col("wall_ms")].is_empty());
        let entry = groups.entry((row[col("rho")].clone(), row[col("p0")].clone())).or_default();
        entry.0.push(fdp);
        entry.1.push(power);
    }
    let (sheader, srows) = read_csv(&dir.path().join("summary.csv"));
    let scol = |name: &str| sheader.iter().position(|h| h == name).unwrap();
    assert_eq!(srows.len(), groups.len());
    for row in &srows {
        let (fdps, powers) = &groups[&(row[scol("rho")].clone(), row[scol("p0")].clone())];
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let sd = |v: &[f64]| {
            let m = mean(v);
            (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64 / v.len() as f64).sqrt()
        };
        let got = |name: &str| row[scol(name)].parse::<f64>().unwrap();
        assert!((got("mean_fdp") - mean(fdps)).abs() < 1e-12);
        assert!((got("mean_power") - mean(powers)).abs() < 1e-12);
        assert!((got("se_fdp") - sd(fdps)).abs() < 1e-12);
        assert!((got("se_power") - sd(powers)).abs() < 1e-12);
        assert_eq!(row[scol("n_ok")], fdps.len().to_string());
    }
}

#[test]
fn mean_se_edge_cases() {
    let (m, s) = mean_se([].into_iter());
    assert!(m.is_nan() && s.is_nan());
    assert_eq!(mean_se([0.5].into_iter()), (0.5, 0.0));
    let (m, s) = mean_se([1.0, 2.0, 3.0, 4.0].into_iter());
    assert_eq!(m, 2.5);
    assert!((s - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
}

#[test]
fn trials_csv_is_identical_across_thread_counts() {
    let mut config = small_mvn();
    config.method = Method::Univariate;
    let mut outputs = Vec::new();
    for threads in [1, 3] {
        let dir = tempfile::tempdir().unwrap();
        let result = run_experiment(&config, RunOptions { threads, timing: false }).unwrap();
        emit_results(&result, dir.path()).unwrap();
        outputs.push(fs::read(dir.path().join("trials.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn no_missing_values_match_plain_knockoff_run() {
    let mut config = small_mvn();
    config.p0_grid = vec![0.0];
    config.rho_grid = vec![0.5];
    let result = run_experiment(&config, serial()).unwrap();
    let support = result.support.clone();

    let model = MvnModel::centered(make_ar1_covariance(config.p, 0.5).unwrap()).unwrap();
    let sampler = build_gaussian_knockoff_sampler(&model).unwrap();
    let response = ResponseModel::new(config.p, support.clone(), 1.0).unwrap();
    let settings = FilterSettings { q: config.q, grid: config.lambda_grid.clone(), ..FilterSettings::default() };
    for record in &result.records {
        let mut rng = trial_rng(config.master_seed, 0, record.rep);
        let mut xs = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..config.n_grid[0] {
            let x = model.sample(&mut rng);
            labels.push(simulate_response(&x, &response, 0.0, &mut rng).unwrap());
            xs.push(x);
        }
        let pairs: Vec<KnockoffPair<f64>> = xs
            .into_iter()
            .map(|x| {
                let k = sampler.sample(&x, &mut rng).unwrap();
                KnockoffPair::new(x, k, vec![false; config.p])
            })
            .collect();
        let outcome = knockoff_filter(&stack_design(&pairs), &labels, &settings, &mut rng).unwrap();
        let (fdp, power) = score_selection(&outcome.selection, &support, config.p).unwrap();
        let stats = record.outcome.as_ref().unwrap();
        assert_eq!((stats.fdp, stats.power, stats.lambda_cv), (fdp, power, outcome.lambda_cv));
        assert_eq!(stats.tau, outcome.selection.threshold);
    }
}

#[test]
fn hmm_methods_run() {
    let mut config = Preset::HmmDesk.config();
    config.p = 12;
    config.support_size = 3;
    config.amplitude = Amplitude::Fixed(0.8);
    config.n_grid = vec![80];
    config.p0_grid = vec![0.3];
    config.replicates = 2;
    config.lambda_grid = vec![1e-2, 1.0];
    for method in [Method::Posterior, Method::PosteriorSesia, Method::ModifiedSesia, Method::Univariate] {
        for mode in [MaskMode::TrueFeatures, MaskMode::NullFeatures, MaskMode::All] {
            config.method = method;
            config.mask_mode = mode;
            let result = run_experiment(&config, serial()).unwrap();
            assert_eq!(result.failures(), 0, "{method} {mode:?}");
            assert_eq!(result.records.len(), 2);
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let result = run_experiment(&config, serial()).unwrap();
    emit_results(&result, dir.path()).unwrap();
    let (header, rows) = read_csv(&dir.path().join("trials.csv"));
    assert_eq!(rows[0][header.iter().position(|h| h == "rho").unwrap()], "");
    assert_eq!(rows[0][0], "hmm");
}

#[test]
fn failed_trials_are_recorded() {
    // A response that never varies makes every fit fail on single-class labels.
    let mut config = small_mvn();
    config.amplitude = Amplitude::Fixed(200.0);
    config.support_size = 10;
    config.rho_grid = vec![0.99];
    config.p0_grid = vec![0.0];
    config.response_shift = -100.0;
    let result = run_experiment(&config, serial()).unwrap();
    assert_eq!(result.failures(), 3);
    assert!(result.aborted());
    let dir = tempfile::tempdir().unwrap();
    emit_results(&result, dir.path()).unwrap();
    let (header, rows) = read_csv(&dir.path().join("trials.csv"));
    let status = header.iter().position(|h| h == "status").unwrap();
    assert!(rows.iter().all(|r| r[status].starts_with("error: labels contain a single class")));
    let (_, srows) = read_csv(&dir.path().join("summary.csv"));
    assert_eq!(srows[0][SUMMARY_HEADER.iter().position(|h| *h == "n_ok").unwrap()], "0");
}
