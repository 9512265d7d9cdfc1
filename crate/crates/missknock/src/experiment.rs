use std::time::Instant;

use missknock_core::hmm::modified_sesia_knockoffs;
use missknock_core::linalg::Matrix;
use missknock_core::model::{generate_mcar_mask, simulate_response, MissingnessSpec};
use missknock_core::mvn::{build_gaussian_knockoff_sampler, GaussianKnockoffSampler};
use missknock_core::pipeline::{
    posterior_knockoffs, stack_design, univariate_knockoffs, HmmMarginals, HmmObservedKnockoffs, HmmPosterior,
    Mechanism, MvnObservedKnockoffs, MvnPosterior, SesiaSampler,
};
use missknock_core::random::{experiment_rng, trial_rng, trial_stream_id, TrialRng};
use missknock_core::selection::{knockoff_filter, score_selection, FilterSettings, LassoOptions};
use missknock_core::{make_ar1_covariance, make_paper_hmm, HmmModel, KnockoffPair, MaskedSample, MvnModel, ResponseModel};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, Family, GridPoint, Method};
use crate::HarnessError;

/// Share of failed trials above which a run is reported as aborted.
pub const MAX_FAILURE_RATE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct TrialStats {
    pub fdp: f64,
    pub power: f64,
    pub n_selected: usize,
    pub tau: f64,
    pub lambda_cv: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub point: GridPoint,
    pub rep: u32,
    /// Stream id of the trial generator; distinct across the whole grid.
    pub seed: u64,
    pub wall_ms: Option<f64>,
    /// Error text for a failed trial.
    pub outcome: Result<TrialStats, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub point: GridPoint,
    pub mean_fdp: f64,
    pub se_fdp: f64,
    pub mean_power: f64,
    pub se_power: f64,
    pub n_ok: usize,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    /// Response support shared by every trial.
    pub support: Vec<usize>,
    pub records: Vec<TrialRecord>,
    pub summary: Vec<SummaryRow>,
}

impl ExperimentResult {
    pub fn failures(&self) -> usize {
        self.records.iter().filter(|r| r.outcome.is_err()).count()
    }

    pub fn aborted(&self) -> bool {
        self.failures() as f64 > MAX_FAILURE_RATE * self.records.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Worker threads; 0 lets the pool decide.
    pub threads: usize,
    /// Record wall-clock time per trial (makes trials.csv nondeterministic).
    pub timing: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { threads: 0, timing: false }
    }
}

enum Setup {
    Mvn { model: MvnModel, sampler: GaussianKnockoffSampler },
    Hmm { model: HmmModel, marginals: HmmMarginals },
}

fn build_setup(config: &ExperimentConfig, point: &GridPoint) -> Result<Setup, HarnessError> {
    Ok(match config.family {
        Family::Mvn => {
            let model = MvnModel::centered(make_ar1_covariance(config.p, point.rho)?)?;
            let sampler = build_gaussian_knockoff_sampler(&model)?;
            Setup::Mvn { model, sampler }
        }
        Family::Hmm => {
            let model = make_paper_hmm(config.p)?;
            let marginals = HmmMarginals::new(&model);
            Setup::Hmm { model, marginals }
        }
    })
}

/// Draws the response support once from the master seed.
pub fn draw_support(config: &ExperimentConfig) -> Result<Vec<usize>, HarnessError> {
    let mut rng = experiment_rng(config.master_seed);
    Ok(ResponseModel::random(config.p, config.support_size, 1.0, &mut rng)?.support().to_vec())
}

pub fn run_experiment(config: &ExperimentConfig, options: RunOptions) -> Result<ExperimentResult, HarnessError> {
    config.validate()?;
    let support = draw_support(config)?;
    let grid = config.grid();
    let setups = grid.iter().map(|point| build_setup(config, point)).collect::<Result<Vec<_>, _>>()?;
    let responses = grid
        .iter()
        .map(|point| ResponseModel::new(config.p, support.clone(), config.amplitude.value(point.n)))
        .collect::<Result<Vec<_>, _>>()?;
    let tasks: Vec<(usize, u32)> = (0..grid.len()).flat_map(|g| (0..config.replicates).map(move |r| (g, r))).collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.threads)
        .build()
        .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
    let records: Vec<TrialRecord> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(g, rep)| {
                let point = grid[g];
                let start = Instant::now();
                let outcome = run_trial(config, &setups[g], &responses[g], &point, rep).map_err(|e| e.to_string());
                let wall_ms = options.timing.then(|| start.elapsed().as_secs_f64() * 1e3);
                TrialRecord { point, rep, seed: trial_stream_id(point.index, rep), wall_ms, outcome }
            })
            .collect()
    });
    let summary = summarize(&grid, &records);
    Ok(ExperimentResult { config: config.clone(), support, records, summary })
}

/// One replicate: simulate rows, build knockoffs, run the filter and score it.
fn run_trial(
    config: &ExperimentConfig,
    setup: &Setup,
    response: &ResponseModel,
    point: &GridPoint,
    rep: u32,
) -> missknock_core::Result<TrialStats> {
    let mut rng = trial_rng(config.master_seed, point.index, rep);
    let spec = MissingnessSpec::new(point.p0, config.mask_mode.candidates())?;
    let support = response.support();
    let mut labels = Vec::with_capacity(point.n);
    let design = match setup {
        Setup::Mvn { model, sampler } => {
            let mut rows = Vec::with_capacity(point.n);
            for _ in 0..point.n {
                let x = model.sample(&mut rng);
                labels.push(simulate_response(&x, response, config.response_shift, &mut rng)?);
                let mask = generate_mcar_mask(config.p, &spec, support, &mut rng);
                rows.push(MaskedSample::new(&x, &mask)?);
            }
            let pairs = match config.method {
                Method::Univariate => univariate_knockoffs(
                    &rows,
                    model,
                    &mut MvnObservedKnockoffs::new(model.clone()),
                    Mechanism::Mcar,
                    &mut rng,
                )?,
                _ => posterior_knockoffs(&rows, &mut MvnPosterior::new(model.clone()), &mut sampler.clone(), &mut rng)?,
            };
            stack_design(&pairs)
        }
        Setup::Hmm { model, marginals } => {
            let mut rows = Vec::with_capacity(point.n);
            for _ in 0..point.n {
                let (_, x) = model.sample(&mut rng);
                let xf: Vec<f64> = x.iter().map(|&v| v as f64).collect();
                labels.push(simulate_response(&xf, response, config.response_shift, &mut rng)?);
                let mask = generate_mcar_mask(config.p, &spec, support, &mut rng);
                rows.push(MaskedSample::new(&x, &mask)?);
            }
            let pairs = match config.method {
                Method::Univariate => univariate_knockoffs(
                    &rows,
                    marginals,
                    &mut HmmObservedKnockoffs(model),
                    Mechanism::Mcar,
                    &mut rng,
                )?,
                Method::ModifiedSesia => {
                    rows.iter().map(|row| modified_sesia_knockoffs(model, row, &mut rng)).collect::<Result<_, _>>()?
                }
                Method::Posterior | Method::PosteriorSesia => {
                    posterior_knockoffs(&rows, &mut HmmPosterior(model), &mut SesiaSampler(model), &mut rng)?
                }
            };
            stack_design(&to_real(pairs))
        }
    };
    filter_and_score(config, &design, &labels, support, &mut rng)
}

fn to_real(pairs: Vec<KnockoffPair<usize>>) -> Vec<KnockoffPair<f64>> {
    pairs
        .into_iter()
        .map(|pair| {
            let mask = pair.mask().to_vec();
            let (imputed, knockoff) = pair.into_parts();
            let real = |v: Vec<usize>| v.into_iter().map(|s| s as f64).collect();
            KnockoffPair::new(real(imputed), real(knockoff), mask)
        })
        .collect()
}

fn filter_and_score(
    config: &ExperimentConfig,
    design: &Matrix,
    labels: &[bool],
    support: &[usize],
    rng: &mut TrialRng,
) -> missknock_core::Result<TrialStats> {
    let settings =
        FilterSettings { q: config.q, grid: config.lambda_grid.clone(), folds: config.folds, lasso: LassoOptions::default() };
    let outcome = knockoff_filter(design, labels, &settings, rng)?;
    let (fdp, power) = score_selection(&outcome.selection, support, config.p)?;
    Ok(TrialStats {
        fdp,
        power,
        n_selected: outcome.selection.selected.len(),
        tau: outcome.selection.threshold,
        lambda_cv: outcome.lambda_cv,
    })
}

pub fn summarize(grid: &[GridPoint], records: &[TrialRecord]) -> Vec<SummaryRow> {
    grid.iter()
        .map(|point| {
            let ok: Vec<&TrialStats> =
                records.iter().filter(|r| r.point.index == point.index).filter_map(|r| r.outcome.as_ref().ok()).collect();
            let (mean_fdp, se_fdp) = mean_se(ok.iter().map(|s| s.fdp));
            let (mean_power, se_power) = mean_se(ok.iter().map(|s| s.power));
            SummaryRow { point: *point, mean_fdp, se_fdp, mean_power, se_power, n_ok: ok.len() }
        })
        .collect()
}

/// Sample mean and its standard error (sample standard deviation over
/// `sqrt(n)`); NaN when there are no values, SE 0 for a single value.
pub fn mean_se(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.collect();
    let n = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / n;
    if v.len() == 1 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
