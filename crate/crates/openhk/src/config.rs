//! Scenario configuration: a flat JSON document, validated with defaults.
//!
//! Keys mirror the CLI flags one-to-one; flags override file values. Unknown
//! keys are rejected so typos fail loudly instead of silently running the
//! default scenario.

use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use thiserror::Error;

use crate::dynamics::DEFAULT_STEP;
use crate::ensemble::TimeGrid;
use crate::open_process::{Churn, OpinionLaw, RealizationConfig};

pub const DEFAULT_GRID_POINTS: usize = 400;
pub const DEFAULT_REALIZATIONS: usize = 1000;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("missing required config key `{key}`")]
    Missing { key: &'static str },
    #[error("config key `{key}`: {constraint}")]
    Invalid { key: &'static str, constraint: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Closed,
    Open,
}

/// Fully validated scenario. `lambda_a`/`lambda_d` are ignored in closed mode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub mode: Mode,
    /// Initial population size.
    pub n0: usize,
    /// Lower end of the opinion support.
    pub a: f64,
    /// Upper end of the opinion support.
    pub b: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_d: Option<f64>,
    pub t_end: f64,
    /// Integrator step.
    pub dt: f64,
    /// Number of uniform sampling times over `[0, t_end]`.
    pub grid: usize,
    pub realizations: usize,
    pub seed: u64,
    /// Number of realizations whose event logs are written out.
    pub traces: usize,
    pub out_dir: PathBuf,
}

/// Partially specified scenario: what a config file or a set of CLI flags
/// provides before merging and validation.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialConfig {
    pub mode: Option<Mode>,
    pub n0: Option<usize>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub lambda_a: Option<f64>,
    pub lambda_d: Option<f64>,
    pub t_end: Option<f64>,
    pub dt: Option<f64>,
    pub grid: Option<usize>,
    pub realizations: Option<usize>,
    pub seed: Option<u64>,
    pub traces: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

impl PartialConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let mut de = serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(&mut de)
            .map_err(|e| ConfigError::Parse(e.to_string()))
    }

    /// Overlay `overrides` on `self`; set fields of `overrides` win.
    pub fn merged(self, overrides: PartialConfig) -> PartialConfig {
        PartialConfig {
            mode: overrides.mode.or(self.mode),
            n0: overrides.n0.or(self.n0),
            a: overrides.a.or(self.a),
            b: overrides.b.or(self.b),
            lambda_a: overrides.lambda_a.or(self.lambda_a),
            lambda_d: overrides.lambda_d.or(self.lambda_d),
            t_end: overrides.t_end.or(self.t_end),
            dt: overrides.dt.or(self.dt),
            grid: overrides.grid.or(self.grid),
            realizations: overrides.realizations.or(self.realizations),
            seed: overrides.seed.or(self.seed),
            traces: overrides.traces.or(self.traces),
            out_dir: overrides.out_dir.or(self.out_dir),
        }
    }

    /// Apply defaults, check required keys and constraints.
    pub fn finish(self) -> Result<ScenarioConfig, ConfigError> {
        fn invalid(key: &'static str, constraint: impl Into<String>) -> ConfigError {
            ConfigError::Invalid { key, constraint: constraint.into() }
        }

        let mode = self.mode.ok_or(ConfigError::Missing { key: "mode" })?;
        let n0 = self.n0.ok_or(ConfigError::Missing { key: "n0" })?;
        let a = self.a.ok_or(ConfigError::Missing { key: "a" })?;
        let b = self.b.ok_or(ConfigError::Missing { key: "b" })?;
        let t_end = self.t_end.ok_or(ConfigError::Missing { key: "t_end" })?;
        let dt = self.dt.unwrap_or(DEFAULT_STEP);
        let grid = self.grid.unwrap_or(DEFAULT_GRID_POINTS);
        let realizations = self.realizations.unwrap_or(DEFAULT_REALIZATIONS);
        let seed = self.seed.unwrap_or(0);
        let traces = self.traces.unwrap_or(1);
        let out_dir = self.out_dir.unwrap_or_else(|| PathBuf::from("out"));

        if !a.is_finite() || !b.is_finite() || a >= b {
            return Err(invalid("a", format!("support must satisfy a < b, got [{a}, {b}]")));
        }
        if !t_end.is_finite() || t_end <= 0.0 {
            return Err(invalid("t_end", format!("must be positive, got {t_end}")));
        }
        if !dt.is_finite() || dt <= 0.0 {
            return Err(invalid("dt", format!("must be positive, got {dt}")));
        }
        if grid < 2 {
            return Err(invalid("grid", format!("needs at least 2 points, got {grid}")));
        }
        if realizations == 0 {
            return Err(invalid("realizations", "must be at least 1"));
        }
        if traces > realizations {
            return Err(invalid(
                "traces",
                format!("cannot exceed realizations ({traces} > {realizations})"),
            ));
        }
        if mode == Mode::Open {
            let lambda_a = self.lambda_a.ok_or(ConfigError::Missing { key: "lambda_a" })?;
            let lambda_d = self.lambda_d.ok_or(ConfigError::Missing { key: "lambda_d" })?;
            if !lambda_a.is_finite() || lambda_a <= 0.0 {
                return Err(invalid("lambda_a", format!("must be positive, got {lambda_a}")));
            }
            if !lambda_d.is_finite() || lambda_d <= 0.0 {
                return Err(invalid("lambda_d", format!("must be positive, got {lambda_d}")));
            }
        }

        Ok(ScenarioConfig {
            mode,
            n0,
            a,
            b,
            lambda_a: self.lambda_a,
            lambda_d: self.lambda_d,
            t_end,
            dt,
            grid,
            realizations,
            seed,
            traces,
            out_dir,
        })
    }
}

/// Parse and validate a JSON scenario document.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    PartialConfig::from_json(text)?.finish()
}

/// Serialize a validated config back to its canonical JSON form.
pub fn emit_config(config: &ScenarioConfig) -> String {
    serde_json::to_string_pretty(config).expect("config serializes")
}

impl ScenarioConfig {
    pub fn time_grid(&self) -> TimeGrid {
        TimeGrid::uniform(0.0, self.t_end, self.grid).expect("validated grid")
    }

    pub fn realization_config(&self) -> RealizationConfig {
        let churn = match self.mode {
            Mode::Closed => None,
            Mode::Open => Some(Churn {
                lambda_arrival: self.lambda_a.expect("validated"),
                lambda_departure: self.lambda_d.expect("validated"),
                arrival_law: OpinionLaw::uniform(self.a, self.b),
            }),
        };
        RealizationConfig {
            n0: self.n0,
            init_law: OpinionLaw::uniform(self.a, self.b),
            t_end: self.t_end,
            step: self.dt,
            grid: self.time_grid(),
            churn,
        }
    }
}
