//! JSON scenario files.

use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::matmodel::{GaussianStats, StateSpaceModel, WishartStats};

/// The benchmark scenario shipped with the crate.
pub const BENCHMARK_CONFIG: &str = include_str!("../../configs/benchmark.json");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self { field: field.into(), message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid config field `{}`: {}", self.field, self.message)
    }
}

impl std::error::Error for ConfigError {}

/// Estimators a scenario can score, in CSV column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "iKF")]
    IsolatedKf,
    #[serde(rename = "iFLS")]
    IsolatedFls,
    #[serde(rename = "KF")]
    ExactKf,
    #[serde(rename = "FLS")]
    ExactFls,
    #[serde(rename = "TFLIS-F")]
    TransferFiltered,
    #[serde(rename = "TFLIS-S")]
    TransferSmoothed,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::IsolatedKf,
        Method::IsolatedFls,
        Method::ExactKf,
        Method::ExactFls,
        Method::TransferFiltered,
        Method::TransferSmoothed,
    ];

    /// Suffix used in CSV headers.
    pub fn column(self) -> &'static str {
        match self {
            Method::IsolatedKf => "iKF",
            Method::IsolatedFls => "iFLS",
            Method::ExactKf => "KF",
            Method::ExactFls => "FLS",
            Method::TransferFiltered => "TFLIS_F",
            Method::TransferSmoothed => "TFLIS_S",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Scored on the lag-delayed estimate.
    pub fn is_smoothing(self) -> bool {
        matches!(self, Method::IsolatedFls | Method::ExactFls | Method::TransferSmoothed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    #[serde(rename = "R")]
    pub r: Vec<Vec<f64>>,
}

/// Prior covariance: either `scale * I` or a full matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PriorCov {
    Scale(f64),
    Matrix(Vec<Vec<f64>>),
}

/// Scenario file as written on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub model: ModelConfig,
    pub prior_mean: Vec<f64>,
    pub prior_cov_scale: PriorCov,
    pub sigma0: Vec<f64>,
    pub nu0: f64,
    pub lag: i64,
    pub ivb: i64,
    pub horizon: i64,
    pub runs: i64,
    #[serde(rename = "r_E_grid")]
    pub r_e_grid: Vec<f64>,
    pub master_seed: u64,
    pub methods: Vec<Method>,
}

/// Validated scenario ready to run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub model: StateSpaceModel,
    pub prior: GaussianStats,
    pub sigma0: WishartStats,
    pub lag: usize,
    pub iterations: usize,
    pub horizon: usize,
    pub runs: usize,
    pub r_e_grid: Vec<f64>,
    pub master_seed: u64,
    /// Sorted, deduplicated.
    pub methods: Vec<Method>,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::new("<json>", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("<file>", format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn benchmark() -> Self {
        Self::from_json(BENCHMARK_CONFIG).expect("bundled config parses")
    }

    pub fn validate(&self) -> Result<Scenario, ConfigError> {
        let a = matrix("model.A", &self.model.a)?;
        let b = matrix("model.B", &self.model.b)?;
        let c = matrix("model.C", &self.model.c)?;
        let q = matrix("model.Q", &self.model.q)?;
        let r = matrix("model.R", &self.model.r)?;
        let model = StateSpaceModel::new(a, b, c, q, r).map_err(|e| ConfigError::new("model", e.to_string()))?;

        if self.prior_mean.len() != model.n_state() {
            return Err(ConfigError::new(
                "prior_mean",
                format!("expected {} entries, found {}", model.n_state(), self.prior_mean.len()),
            ));
        }
        let mean = DVector::from_row_slice(&self.prior_mean);
        let prior = match &self.prior_cov_scale {
            PriorCov::Scale(s) => {
                if !(*s > 0.0) || !s.is_finite() {
                    return Err(ConfigError::new("prior_cov_scale", "scale must be positive and finite"));
                }
                GaussianStats::isotropic(mean, *s)
            }
            PriorCov::Matrix(rows) => GaussianStats::new(mean, matrix("prior_cov_scale", rows)?),
        }
        .map_err(|e| ConfigError::new("prior_cov_scale", e.to_string()))?;

        if self.sigma0.len() != model.n_output() {
            return Err(ConfigError::new(
                "sigma0",
                format!("expected {} diagonal entries, found {}", model.n_output(), self.sigma0.len()),
            ));
        }
        let sigma0 = WishartStats::new(DVector::from_row_slice(&self.sigma0), self.nu0).map_err(|e| {
            let field = if self.nu0.is_finite() && self.nu0 >= 0.0 { "sigma0" } else { "nu0" };
            ConfigError::new(field, e.to_string())
        })?;

        let lag = nonnegative("lag", self.lag)?;
        let iterations = nonnegative("ivb", self.ivb)?;
        let horizon = nonnegative("horizon", self.horizon)?;
        if horizon <= lag {
            return Err(ConfigError::new("horizon", format!("must exceed lag ({lag})")));
        }
        let runs = nonnegative("runs", self.runs)?;
        if runs == 0 {
            return Err(ConfigError::new("runs", "at least one run is required"));
        }
        if self.r_e_grid.is_empty() {
            return Err(ConfigError::new("r_E_grid", "must not be empty"));
        }
        if let Some(bad) = self.r_e_grid.iter().find(|r| !(**r > 0.0) || !r.is_finite()) {
            return Err(ConfigError::new("r_E_grid", format!("entries must be positive and finite, found {bad}")));
        }
        if self.methods.is_empty() {
            return Err(ConfigError::new("methods", "must name at least one method"));
        }
        let mut methods = self.methods.clone();
        methods.sort();
        methods.dedup();

        Ok(Scenario {
            model,
            prior,
            sigma0,
            lag,
            iterations,
            horizon,
            runs,
            r_e_grid: self.r_e_grid.clone(),
            master_seed: self.master_seed,
            methods,
        })
    }
}

impl Scenario {
    pub fn wants(&self, method: Method) -> bool {
        self.methods.contains(&method)
    }
}

fn matrix(field: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>, ConfigError> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if nrows == 0 || ncols == 0 {
        return Err(ConfigError::new(field, "matrix must be nonempty"));
    }
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(ConfigError::new(field, "rows must all have the same length"));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(ConfigError::new(field, "entries must be finite"));
    }
    Ok(DMatrix::from_row_iterator(nrows, ncols, rows.iter().flatten().copied()))
}

fn nonnegative(field: &str, value: i64) -> Result<usize, ConfigError> {
    usize::try_from(value).map_err(|_| ConfigError::new(field, format!("must be nonnegative, found {value}")))
}
