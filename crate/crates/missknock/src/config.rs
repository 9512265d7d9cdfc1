use std::fmt;
use std::path::Path;

use missknock_core::model::CandidateSet;
use missknock_core::selection::LAMBDA_GRID;
use serde::{Deserialize, Serialize};

use crate::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Mvn,
    Hmm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskMode {
    TrueFeatures,
    NullFeatures,
    All,
}

impl MaskMode {
    pub fn candidates(self) -> CandidateSet {
        match self {
            MaskMode::TrueFeatures => CandidateSet::TrueFeatures,
            MaskMode::NullFeatures => CandidateSet::NullFeatures,
            MaskMode::All => CandidateSet::All,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Posterior imputation followed by the family's standard knockoff sampler.
    Posterior,
    /// Knockoffs of the observed block plus independent marginal draws.
    Univariate,
    /// HMM only: knockoffs built from the posterior latent path.
    ModifiedSesia,
    /// HMM only: posterior imputation followed by the plain HMM sampler.
    PosteriorSesia,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Mvn => "mvn",
            Family::Hmm => "hmm",
        })
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Posterior => "posterior",
            Method::Univariate => "univariate",
            Method::ModifiedSesia => "modified-sesia",
            Method::PosteriorSesia => "posterior-sesia",
        })
    }
}

/// Either a fixed amplitude or the rule `scale / sqrt(N)`, written in JSON as
/// a number or as a string such as `"10/sqrt(N)"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Amplitude {
    Fixed(f64),
    InverseSqrtN(f64),
}

impl Amplitude {
    pub fn value(self, n: usize) -> f64 {
        match self {
            Amplitude::Fixed(a) => a,
            Amplitude::InverseSqrtN(scale) => scale / (n as f64).sqrt(),
        }
    }
}

impl Serialize for Amplitude {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match *self {
            Amplitude::Fixed(a) => s.serialize_f64(a),
            Amplitude::InverseSqrtN(scale) => s.serialize_str(&format!("{scale}/sqrt(N)")),
        }
    }
}

impl<'de> Deserialize<'de> for Amplitude {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Rule(String),
        }
        match Raw::deserialize(d)? {
            Raw::Number(a) => Ok(Amplitude::Fixed(a)),
            Raw::Rule(rule) => {
                let scale = rule
                    .replace(' ', "")
                    .strip_suffix("/sqrt(N)")
                    .and_then(|s| s.parse::<f64>().ok())
                    .ok_or_else(|| serde::de::Error::custom(format!("amplitude rule `{rule}` is not `<a>/sqrt(N)`")))?;
                Ok(Amplitude::InverseSqrtN(scale))
            }
        }
    }
}

/// One simulation study. The grid is `rho_grid × n_grid × p0_grid`, visited
/// in that nesting order; HMM studies take a single dummy `rho`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub family: Family,
    /// Covariate dimension; the chain length for HMM studies.
    pub p: usize,
    pub amplitude: Amplitude,
    pub support_size: usize,
    pub q: f64,
    #[serde(default = "default_rho_grid")]
    pub rho_grid: Vec<f64>,
    pub p0_grid: Vec<f64>,
    pub n_grid: Vec<usize>,
    pub mask_mode: MaskMode,
    pub method: Method,
    pub replicates: u32,
    pub master_seed: u64,
    /// Subtracted from every covariate before the response is drawn.
    #[serde(default)]
    pub response_shift: f64,
    #[serde(default = "default_lambda_grid")]
    pub lambda_grid: Vec<f64>,
    #[serde(default = "default_folds")]
    pub folds: usize,
}

fn default_rho_grid() -> Vec<f64> {
    vec![0.0]
}

fn default_lambda_grid() -> Vec<f64> {
    LAMBDA_GRID.to_vec()
}

fn default_folds() -> usize {
    5
}

/// Named presets: desk-scale studies and the full-size ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    MvnDesk,
    HmmDesk,
    MvnPaper,
    HmmPaper,
}

impl Preset {
    pub fn config(self) -> ExperimentConfig {
        let steps = |step: f64, count: usize| (0..count).map(|i| round(i as f64 * step)).collect::<Vec<_>>();
        match self {
            Preset::MvnDesk => ExperimentConfig {
                family: Family::Mvn,
                p: 50,
                amplitude: Amplitude::InverseSqrtN(10.0),
                support_size: 6,
                q: 0.1,
                rho_grid: vec![0.0, 0.4, 0.8],
                p0_grid: vec![0.0, 0.2, 0.4],
                n_grid: vec![150],
                mask_mode: MaskMode::All,
                method: Method::Posterior,
                replicates: 200,
                master_seed: 20240521,
                response_shift: 0.0,
                lambda_grid: default_lambda_grid(),
                folds: 5,
            },
            Preset::HmmDesk => ExperimentConfig {
                family: Family::Hmm,
                p: 60,
                amplitude: Amplitude::Fixed(0.32),
                support_size: 6,
                q: 0.1,
                rho_grid: default_rho_grid(),
                p0_grid: vec![0.0, 0.2, 0.4],
                n_grid: vec![300],
                mask_mode: MaskMode::TrueFeatures,
                method: Method::PosteriorSesia,
                replicates: 100,
                master_seed: 20240521,
                response_shift: 4.0,
                lambda_grid: default_lambda_grid(),
                folds: 5,
            },
            Preset::MvnPaper => ExperimentConfig {
                p: 700,
                support_size: 42,
                rho_grid: steps(0.1, 9),
                p0_grid: steps(0.1, 5),
                n_grid: vec![1050],
                replicates: 31,
                ..Preset::MvnDesk.config()
            },
            Preset::HmmPaper => ExperimentConfig {
                p: 1000,
                support_size: 60,
                p0_grid: steps(0.05, 11),
                n_grid: (0..13).map(|i| 500 + 125 * i).collect(),
                replicates: 128,
                ..Preset::HmmDesk.config()
            },
        }
    }
}

fn round(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}

impl ExperimentConfig {
    pub fn from_json_file(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(path.display().to_string(), e))?;
        let config: ExperimentConfig = serde_json::from_str(&text).map_err(|e| HarnessError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let fail = |msg: String| Err(HarnessError::Config(msg));
        if self.rho_grid.is_empty() || self.p0_grid.is_empty() || self.n_grid.is_empty() {
            return fail("grids must be nonempty".into());
        }
        if !(self.q > 0.0 && self.q < 1.0) {
            return fail(format!("q = {} is not in (0, 1)", self.q));
        }
        if self.p == 0 || self.support_size > self.p {
            return fail(format!("support size {} does not fit p = {}", self.support_size, self.p));
        }
        if self.replicates == 0 {
            return fail("replicates must be positive".into());
        }
        if let Some(p0) = self.p0_grid.iter().find(|p0| !(0.0..=1.0).contains(*p0)) {
            return fail(format!("p0 = {p0} is not in [0, 1]"));
        }
        if let Some(rho) = self.rho_grid.iter().find(|rho| !(0.0..1.0).contains(*rho)) {
            return fail(format!("rho = {rho} is not in [0, 1)"));
        }
        if self.n_grid.iter().any(|&n| n < 2 * self.folds) {
            return fail(format!("every N must be at least {}", 2 * self.folds));
        }
        if self.lambda_grid.is_empty() || self.lambda_grid.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return fail("lambda grid must be nonempty and nonnegative".into());
        }
        match (self.family, self.method) {
            (Family::Mvn, Method::ModifiedSesia | Method::PosteriorSesia) => {
                fail(format!("method {} requires the hmm family", self.method))
            }
            (Family::Hmm, _) if self.rho_grid.len() != 1 => fail("hmm studies take a single rho".into()),
            _ => Ok(()),
        }
    }

    /// Grid points in emission order.
    pub fn grid(&self) -> Vec<GridPoint> {
        let mut points = Vec::new();
        for &rho in &self.rho_grid {
            for &n in &self.n_grid {
                for &p0 in &self.p0_grid {
                    points.push(GridPoint { index: points.len() as u32, rho, n, p0 });
                }
            }
        }
        points
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub index: u32,
    pub rho: f64,
    pub n: usize,
    pub p0: f64,
}
