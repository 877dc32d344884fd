use std::path::{Path, PathBuf};

use adherence::{Error as ModelError, ModelParams, DEFAULT_DELTA_U, DEFAULT_DELTA_X};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    MicroValidate,
    MfTrajectory,
    ErrorDecay,
    EquilibriumScan,
    Frontier,
    OptimalU,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::MicroValidate => "micro-validate",
            Experiment::MfTrajectory => "mf-trajectory",
            Experiment::ErrorDecay => "error-decay",
            Experiment::EquilibriumScan => "equilibrium-scan",
            Experiment::Frontier => "frontier",
            Experiment::OptimalU => "optimal-u",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// One experiment run. Every field has a default, so a config only needs the
/// keys that differ from the baseline setting (K=100, p=0.3, λ=50,
/// x̄(0)=0.25, n̄(0)=4).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub experiment: Option<Experiment>,
    pub k_agents: usize,
    pub p_base: f64,
    pub lambda: f64,
    pub u: f64,
    /// Overrides `u` for experiments that sweep the control.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u_values: Option<Vec<f64>>,
    pub x0: f64,
    pub n0: f64,
    /// Per-driver init for the microscopic simulator. When absent every
    /// driver starts at `α = x0·n0`, `β = (1 − x0)·n0`, baseline `p_base`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_range: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_range: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_range: Option<[f64; 2]>,
    pub horizon: usize,
    pub runs: usize,
    pub seed: u64,
    pub delta_u: f64,
    pub delta_x: f64,
    pub epsilon: f64,
    pub x_floor: f64,
    pub grid_size: usize,
    /// Also estimate the frontier from the last `transient_window` samples of a
    /// `horizon`-step trajectory.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transient_window: Option<usize>,
    pub format: Format,
    pub output_path: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: None,
            k_agents: 100,
            p_base: 0.3,
            lambda: 50.0,
            u: 0.5,
            u_values: None,
            x0: 0.25,
            n0: 4.0,
            alpha_range: None,
            beta_range: None,
            p_range: None,
            horizon: 1000,
            runs: 100,
            seed: 2024,
            delta_u: DEFAULT_DELTA_U,
            delta_x: DEFAULT_DELTA_X,
            epsilon: 1e-3,
            x_floor: 0.9,
            grid_size: 1000,
            transient_window: None,
            format: Format::Csv,
            output_path: PathBuf::from("out"),
        }
    }
}

fn field(name: &str, reason: impl Into<String>) -> CliError {
    CliError::InvalidField {
        field: name.to_string(),
        reason: reason.into(),
    }
}

fn unit(name: &str, v: f64) -> Result<(), CliError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(field(name, format!("must lie in [0, 1], got {v}")))
    }
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(field(name, format!("must be positive, got {v}")))
    }
}

fn range(name: &str, r: [f64; 2], lo_min: f64, hi_max: f64) -> Result<(), CliError> {
    let [lo, hi] = r;
    if lo.is_finite() && hi.is_finite() && lo_min <= lo && lo <= hi && hi <= hi_max {
        Ok(())
    } else {
        Err(field(
            name,
            format!("need {lo_min} <= lo <= hi <= {hi_max}, got [{lo}, {hi}]"),
        ))
    }
}

impl ExperimentConfig {
    /// Parses TOML, or JSON when the file ends in `.json` or starts with `{`.
    pub fn from_str_auto(text: &str, json: bool) -> Result<Self, CliError> {
        if json || text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| CliError::Parse(e.to_string()))
        } else {
            toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.into(),
            source,
        })?;
        let json = path.extension().is_some_and(|e| e == "json");
        Self::from_str_auto(&text, json)
    }

    pub fn params(&self) -> Result<ModelParams, CliError> {
        ModelParams::new(self.k_agents, self.p_base, self.lambda, self.u).map_err(CliError::from)
    }

    /// Controls swept by the experiment: `u_values` if given, else `[u]`, except
    /// for the frontier which defaults to 21 points on `[p_base, 1]`.
    pub fn controls(&self, experiment: Experiment) -> Vec<f64> {
        match (&self.u_values, experiment) {
            (Some(us), _) => us.clone(),
            (None, Experiment::Frontier) => (0..=20)
                .map(|j| (self.p_base + (1.0 - self.p_base) * j as f64 / 20.0).min(1.0))
                .collect(),
            (None, _) => vec![self.u],
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.params()?;
        if let Some(us) = &self.u_values {
            if us.is_empty() {
                return Err(field("u_values", "must not be empty"));
            }
            for &u in us {
                unit("u_values", u)?;
            }
        }
        unit("x0", self.x0)?;
        positive("n0", self.n0)?;
        match (self.alpha_range, self.beta_range) {
            (Some(a), Some(b)) => {
                range("alpha_range", a, f64::MIN_POSITIVE, f64::MAX)?;
                range("beta_range", b, f64::MIN_POSITIVE, f64::MAX)?;
            }
            (None, None) => {}
            (None, Some(_)) => return Err(field("alpha_range", "required when beta_range is set")),
            (Some(_), None) => return Err(field("beta_range", "required when alpha_range is set")),
        }
        if let Some(p) = self.p_range {
            range("p_range", p, 0.0, 1.0)?;
        }
        if self.runs == 0 {
            return Err(field("runs", "must be >= 1"));
        }
        positive("delta_u", self.delta_u)?;
        positive("delta_x", self.delta_x)?;
        positive("epsilon", self.epsilon)?;
        unit("x_floor", self.x_floor)?;
        if self.grid_size < 100 {
            return Err(field("grid_size", format!("must be >= 100, got {}", self.grid_size)));
        }
        if let Some(w) = self.transient_window {
            if w == 0 || w > self.horizon + 1 {
                return Err(field(
                    "transient_window",
                    format!("must lie in 1..={}, got {w}", self.horizon + 1),
                ));
            }
        }
        if self.output_path.as_os_str().is_empty() {
            return Err(field("output_path", "must not be empty"));
        }
        Ok(())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::InvalidParameter { name, reason } => field(name, reason),
            other => CliError::Model(other),
        }
    }
}
