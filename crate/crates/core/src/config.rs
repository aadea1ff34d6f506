//! Experiment configuration: a TOML file declaring the model, grid,
//! ensemble sizes, enabled checks and output layout.

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::model::{builtin_model, expression_model, BuiltinModel, ModelSpec};
use crate::seed::SeedPolicy;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub family: String,
    #[serde(default)]
    pub params: Vec<f64>,
    /// Expression-based models (`family = "custom"`).
    pub f: Option<String>,
    pub f_prime: Option<String>,
    pub h: Option<String>,
    pub h_prime: Option<String>,
    /// Probe domain for constants of custom models.
    pub domain: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub horizon: f64,
    pub n_steps: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    /// Ascending network sizes for decay checks.
    pub n_units: Vec<usize>,
    /// Network size for distributional checks.
    #[serde(default = "default_distribution_n")]
    pub distribution_n: usize,
    /// Hawkes replicates for distributional checks.
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    /// Replicates per network size in decay checks.
    #[serde(default = "default_decay_replicates")]
    pub decay_replicates: usize,
    /// Draws of the limiting Gaussian processes.
    #[serde(default = "default_limit_draws")]
    pub limit_draws: usize,
    pub master_seed: u64,
}

fn default_distribution_n() -> usize {
    500
}
fn default_replicates() -> usize {
    500
}
fn default_decay_replicates() -> usize {
    200
}
fn default_limit_draws() -> usize {
    2000
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestsSection {
    /// Check names, or `["all"]`. An empty list skips every check.
    #[serde(default)]
    pub enabled: Vec<String>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_alpha() -> f64 {
    0.01
}

impl Default for TestsSection {
    fn default() -> Self {
        Self { enabled: vec!["all".into()], alpha: default_alpha() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out_dir")]
    pub dir: String,
    #[serde(default = "default_format")]
    pub format: String,
}

fn default_out_dir() -> String {
    "out".into()
}
fn default_format() -> String {
    "csv".into()
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: default_out_dir(), format: default_format() }
    }
}

/// Complete experiment description.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    pub grid: GridSection,
    pub ensemble: EnsembleSection,
    #[serde(default)]
    pub tests: TestsSection,
    #[serde(default)]
    pub output: OutputSection,
}

/// All check names known to the verification suite, in report order.
pub const CHECK_NAMES: [&str; 9] = [
    "resolvent_checks",
    "lln_decay",
    "clt_counts",
    "clt_intensity",
    "remainder_decay",
    "compensator_bound",
    "second_moment",
    "cox_coupling",
    "multiclass_reduction",
];

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("{e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Desk-scale default: the stable sigmoid/Erlang model on `[0, 10]`.
    pub fn default_sigmoid() -> Self {
        Self::from_toml(
            r#"
            [model]
            family = "sigmoid_erlang"
            params = [2.0, 2.0]

            [grid]
            horizon = 10.0
            n_steps = 1000

            [ensemble]
            n_units = [50, 200, 800]
            master_seed = 42
            "#,
        )
        .expect("builtin default config is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.grid.horizon > 0.0) || self.grid.n_steps == 0 {
            return Err(Error::Config("grid: horizon and n_steps must be positive".into()));
        }
        if self.ensemble.n_units.is_empty() {
            return Err(Error::Config("ensemble: n_units must be non-empty".into()));
        }
        if self.ensemble.n_units.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("ensemble: n_units must be strictly ascending".into()));
        }
        if !(self.tests.alpha > 0.0 && self.tests.alpha < 1.0) {
            return Err(Error::Config(format!(
                "tests: alpha must lie in (0, 1), got {}",
                self.tests.alpha
            )));
        }
        for name in &self.tests.enabled {
            if name != "all" && !CHECK_NAMES.contains(&name.as_str()) {
                return Err(Error::Config(format!("tests: unknown check `{name}`")));
            }
        }
        if self.output.format != "csv" {
            return Err(Error::Config(format!(
                "output: only `csv` format is supported, got `{}`",
                self.output.format
            )));
        }
        self.build_model().map(|_| ())
    }

    pub fn build_model(&self) -> Result<ModelSpec> {
        match self.model.family.as_str() {
            "custom" => {
                let f = self
                    .model
                    .f
                    .as_deref()
                    .ok_or_else(|| Error::Config("custom model needs `f`".into()))?;
                let h = self
                    .model
                    .h
                    .as_deref()
                    .ok_or_else(|| Error::Config("custom model needs `h`".into()))?;
                let domain = self.model.domain.unwrap_or([-5.0, 5.0]);
                expression_model(
                    "custom",
                    f,
                    self.model.f_prime.as_deref(),
                    h,
                    self.model.h_prime.as_deref(),
                    (domain[0], domain[1]),
                )
            }
            family => {
                let which: BuiltinModel = family.parse()?;
                builtin_model(which, &self.model.params)
            }
        }
    }

    pub fn build_grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.grid.horizon, self.grid.n_steps)
    }

    pub fn seed_policy(&self) -> SeedPolicy {
        SeedPolicy::new(self.ensemble.master_seed)
    }

    /// Whether a named check is enabled by the `tests` section.
    pub fn check_enabled(&self, name: &str) -> bool {
        self.tests.enabled.iter().any(|e| e == "all" || e == name)
    }
}
