use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use missknock::config::{Family, MaskMode, Method};
use missknock::impute::{estimate_mvn, impute_dataset, read_dataset, write_matrix, MvnSpec};
use missknock::{emit_results, run_experiment, ExperimentConfig, HarnessError, Preset, RunOptions};
use missknock_core::certify::{random_covariance, run_suite, CertifyOptions, Suite};
use missknock_core::pipeline::mse_compare;
use missknock_core::random::trial_rng;
use missknock_core::MvnModel;

#[derive(Parser)]
#[command(name = "missknock", version, about = "Knockoff variable selection with missing covariates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation study and write trials.csv, summary.csv and run.json.
    Simulate(SimulateArgs),
    /// Run the exact certification suites; exits 1 if any check fails.
    Verify(VerifyArgs),
    /// Compare posterior and univariate imputation MSE on random Gaussian models.
    Mse(MseArgs),
    /// Impute a CSV with NaN-coded gaps and write knockoffs for it.
    Impute(ImputeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Mvn,
    Hmm,
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON experiment configuration; overrides the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Desk-scale preset (default).
    #[arg(long, conflicts_with = "paper")]
    desk: bool,
    /// Full-size preset.
    #[arg(long)]
    paper: bool,
    /// Preset family when no config file is given.
    #[arg(long, value_enum, default_value = "mvn")]
    family: FamilyArg,
    /// posterior, univariate, modified-sesia or posterior-sesia.
    #[arg(long, value_parser = parse_kebab::<Method>)]
    method: Option<Method>,
    /// true-features, null-features or all.
    #[arg(long, value_parser = parse_kebab::<MaskMode>)]
    mask_mode: Option<MaskMode>,
    #[arg(long)]
    replicates: Option<u32>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Fill wall_ms; output is then no longer byte-reproducible.
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value = "all")]
    suite: String,
    #[arg(long)]
    seed: Option<u64>,
    /// Skip the posterior conditioning step (the checks should then fail).
    #[arg(long)]
    broken: bool,
}

#[derive(Args)]
struct MseArgs {
    #[arg(long, default_value_t = 20)]
    models: usize,
    #[arg(long, default_value_t = 20_000)]
    samples: usize,
    #[arg(long, default_value_t = 20240521)]
    seed: u64,
}

#[derive(Args)]
struct ImputeArgs {
    /// CSV with a header row; empty, NaN or NA cells are missing.
    #[arg(long)]
    input: PathBuf,
    /// Gaussian model as JSON; estimated from the data when omitted.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value = "posterior", value_parser = parse_kebab::<Method>)]
    method: Method,
    #[arg(long, default_value_t = 20240521)]
    seed: u64,
    #[arg(long, default_value = "imputed")]
    out: PathBuf,
}

fn parse_kebab<T: serde::de::DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| format!("unknown value `{s}`"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Verify(args) => verify(args),
        Command::Mse(args) => mse(args),
        Command::Impute(args) => impute(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                HarnessError::Config(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}

fn simulate(args: SimulateArgs) -> Result<ExitCode, HarnessError> {
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::from_json_file(path)?,
        None => {
            let preset = match (args.family, args.paper) {
                (FamilyArg::Mvn, false) => Preset::MvnDesk,
                (FamilyArg::Hmm, false) => Preset::HmmDesk,
                (FamilyArg::Mvn, true) => Preset::MvnPaper,
                (FamilyArg::Hmm, true) => Preset::HmmPaper,
            };
            preset.config()
        }
    };
    if let Some(method) = args.method {
        config.method = method;
    }
    if let Some(mode) = args.mask_mode {
        config.mask_mode = mode;
    }
    if let Some(r) = args.replicates {
        config.replicates = r;
    }
    if let Some(q) = args.q {
        config.q = q;
    }
    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }
    if config.family == Family::Hmm && config.method == Method::Posterior {
        config.method = Method::PosteriorSesia;
    }
    config.validate()?;
    let result = run_experiment(&config, RunOptions { threads: args.threads, timing: args.timing })?;
    emit_results(&result, &args.out)?;
    for row in &result.summary {
        println!(
            "rho={} N={} p0={}: fdp {:.4} ± {:.4}, power {:.4} ± {:.4} ({} ok)",
            row.point.rho, row.point.n, row.point.p0, row.mean_fdp, row.se_fdp, row.mean_power, row.se_power, row.n_ok
        );
    }
    if result.aborted() {
        eprintln!("error: {} of {} trials failed; see trials.csv", result.failures(), result.records.len());
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn verify(args: VerifyArgs) -> Result<ExitCode, HarnessError> {
    let suites: Vec<Suite> = if args.suite == "all" {
        Suite::ALL.to_vec()
    } else {
        vec![Suite::parse(&args.suite).ok_or_else(|| HarnessError::Config(format!("unknown suite `{}`", args.suite)))?]
    };
    let mut options = CertifyOptions { broken: args.broken, ..CertifyOptions::default() };
    if let Some(seed) = args.seed {
        options.seed = seed;
    }
    let mut all_passed = true;
    for suite in suites {
        for c in run_suite(suite, options)? {
            let verdict = if c.passed() { "PASS" } else { "FAIL" };
            println!("{verdict} {:<16} {:<55} {:.3e} (tolerance {:.0e})", suite.name(), c.name, c.statistic, c.tolerance);
            all_passed &= c.passed();
        }
    }
    Ok(if all_passed { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn mse(args: MseArgs) -> Result<ExitCode, HarnessError> {
    use rand::Rng;
    let mut rng = trial_rng(args.seed, 0, 0);
    println!("model,p,target,mse_posterior,se_posterior,analytic_posterior,mse_univariate,se_univariate,analytic_univariate,z_order");
    let mut worst = f64::NEG_INFINITY;
    for m in 0..args.models {
        let p = 2 + m % 4;
        let model = MvnModel::centered(random_covariance(p, &mut rng))?;
        let target = rng.random_range(0..p);
        let r = mse_compare(&model, target, args.samples, &mut rng)?;
        let z = (r.mse_posterior - r.mse_univariate) / r.combined_se();
        worst = worst.max(z);
        println!(
            "{m},{p},{target},{},{},{},{},{},{},{z}",
            r.mse_posterior, r.se_posterior, r.analytic_posterior, r.mse_univariate, r.se_univariate, r.analytic_univariate
        );
    }
    eprintln!("largest (posterior − univariate) / SE: {worst:.3}");
    Ok(ExitCode::SUCCESS)
}

fn impute(args: ImputeArgs) -> Result<ExitCode, HarnessError> {
    let data = read_dataset(&args.input)?;
    let model = match &args.model {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(path.display().to_string(), e))?;
            serde_json::from_str::<MvnSpec>(&text).map_err(|e| HarnessError::Config(e.to_string()))?.to_model()?
        }
        None => estimate_mvn(&data)?,
    };
    let pairs = impute_dataset(&data, &model, args.method, args.seed)?;
    write_matrix(&args.out.join("imputed.csv"), &data.header, pairs.iter().map(|p| p.imputed().to_vec()))?;
    write_matrix(&args.out.join("knockoffs.csv"), &data.header, pairs.iter().map(|p| p.knockoff().to_vec()))?;
    let spec = serde_json::to_string_pretty(&MvnSpec::from_model(&model)).map_err(|e| HarnessError::Config(e.to_string()))?;
    let path = args.out.join("model.json");
    std::fs::write(&path, spec + "\n").map_err(|e| HarnessError::Io(path.display().to_string(), e))?;
    println!("wrote {} rows to {}", pairs.len(), args.out.display());
    Ok(ExitCode::SUCCESS)
}
