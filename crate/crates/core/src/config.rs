//! TOML run configuration.
//!
//! ```toml
//! schema_version = 1
//! seed = 24301                  # optional; integer or "0x..." string
//! saccade_budget = 3
//! initial_fixation = "center"   # or a location index
//! mean_present = 0.5
//! mean_absent = -0.5
//!
//! [locations]                   # required
//! count = 85                    # or: coords = [[x, y], ...]
//! field_radius = 8.0
//!
//! [visibility]                  # required
//! family = "parametric"         # or: family = "table", knots = [[ecc, d'], ...]
//! d0 = 4.0
//! e_half = 4.0
//! beta = 1.5
//!
//! [prior]                       # optional, default uniform
//! kind = "uniform"              # or: kind = "explicit", values = [...]
//!
//! [quadrature]                  # optional
//! [training]                    # optional
//! [evaluation]                  # optional
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qlearn::TrainingConfig;
use crate::quadrature::QuadratureSpec;
use crate::task::{
    build_location_grid, Layout, LocationSet, Point, Prior, TaskConfig, TaskParams, VisibilityMap,
};

pub const SCHEMA_VERSION: u32 = 1;

/// Trials per battery when nothing else is said.
pub const DEFAULT_TRIALS: usize = 3400;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationConfig {
    pub trials: usize,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            trials: DEFAULT_TRIALS,
        }
    }
}

/// A complete, validated run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub seed: Option<u64>,
    pub task: TaskConfig,
    pub quadrature: QuadratureSpec,
    pub training: TrainingConfig,
    pub evaluation: EvaluationConfig,
}

impl Config {
    /// Reference task with every other section at its default.
    pub fn reference() -> Self {
        Self {
            seed: None,
            task: TaskConfig::reference(),
            quadrature: QuadratureSpec::default(),
            training: TrainingConfig::default(),
            evaluation: EvaluationConfig::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> std::result::Result<Self, String> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| e.message().to_string())?;
        raw.into_config()
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&RawConfig::from_config(self)).expect("config serializes")
    }
}

pub fn load_config(path: &Path) -> Result<Config> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Config::from_toml_str(&text).map_err(|message| Error::Config {
        path: path.to_path_buf(),
        message,
    })
}

pub fn load_task_config(path: &Path) -> Result<TaskConfig> {
    load_config(path).map(|c| c.task)
}

pub fn save_config(config: &Config, path: &Path) -> Result<()> {
    fs::write(path, config.to_toml_string())
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum SeedValue {
    Int(i64),
    Text(String),
}

impl SeedValue {
    fn parse(&self) -> std::result::Result<u64, String> {
        match self {
            SeedValue::Int(v) => {
                u64::try_from(*v).map_err(|_| format!("seed must be non-negative, got {v}"))
            }
            SeedValue::Text(s) => {
                let t = s.trim();
                let parsed = match t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
                    Some(hex) => u64::from_str_radix(hex, 16),
                    None => t.parse(),
                };
                parsed.map_err(|_| format!("seed {s:?} is not a 64-bit unsigned integer"))
            }
        }
    }

    fn from_u64(v: u64) -> Self {
        match i64::try_from(v) {
            Ok(i) => SeedValue::Int(i),
            Err(_) => SeedValue::Text(format!("{v:#x}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum FixationValue {
    Index(usize),
    Named(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLocations {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    count: Option<usize>,
    field_radius: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    coords: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "lowercase")]
enum RawPrior {
    Uniform,
    Explicit { values: Vec<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    schema_version: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<SeedValue>,
    #[serde(default = "default_budget")]
    saccade_budget: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    initial_fixation: Option<FixationValue>,
    #[serde(default = "default_present")]
    mean_present: f64,
    #[serde(default = "default_absent")]
    mean_absent: f64,
    locations: Option<RawLocations>,
    visibility: Option<VisibilityMap>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    prior: Option<RawPrior>,
    #[serde(default)]
    quadrature: QuadratureSpec,
    #[serde(default)]
    training: TrainingConfig,
    #[serde(default)]
    evaluation: EvaluationConfig,
}

fn default_budget() -> usize {
    3
}

fn default_present() -> f64 {
    0.5
}

fn default_absent() -> f64 {
    -0.5
}

impl RawConfig {
    fn into_config(self) -> std::result::Result<Config, String> {
        match self.schema_version {
            None => return Err("missing `schema_version`".into()),
            Some(SCHEMA_VERSION) => {}
            Some(v) => {
                return Err(format!(
                    "unsupported schema_version {v} (expected {SCHEMA_VERSION})"
                ))
            }
        }
        let seed = self.seed.as_ref().map(SeedValue::parse).transpose()?;
        let locs = self.locations.ok_or("missing [locations] section")?;
        let visibility = self.visibility.ok_or("missing [visibility] section")?;
        let locations = match (locs.count, locs.coords) {
            (Some(_), Some(_)) => {
                return Err("[locations]: give either `count` or `coords`, not both".into())
            }
            (None, None) => return Err("[locations]: needs `count` or `coords`".into()),
            (Some(n), None) => build_location_grid(n, locs.field_radius),
            (None, Some(c)) => LocationSet::from_coords(
                c.iter().map(|[x, y]| Point::new(*x, *y)).collect(),
                locs.field_radius,
            ),
        }
        .map_err(|e| format!("[locations]: {e}"))?;
        let initial_fixation = match self.initial_fixation {
            None => None,
            Some(FixationValue::Index(i)) => Some(i),
            Some(FixationValue::Named(s)) if s == "center" => None,
            Some(FixationValue::Named(s)) => {
                return Err(format!(
                    "initial_fixation must be \"center\" or an index, got {s:?}"
                ))
            }
        };
        let prior = match self.prior {
            None | Some(RawPrior::Uniform) => Prior::Uniform,
            Some(RawPrior::Explicit { values }) => Prior::Explicit(values),
        };
        let task = TaskConfig::new(TaskParams {
            locations,
            visibility,
            prior,
            saccade_budget: self.saccade_budget,
            initial_fixation,
            mean_present: self.mean_present,
            mean_absent: self.mean_absent,
        })
        .map_err(|e| match e {
            Error::InvalidTask(m) => m,
            other => other.to_string(),
        })?;
        self.quadrature
            .validate()
            .map_err(|e| format!("[quadrature]: {e}"))?;
        self.training
            .validate()
            .map_err(|e| format!("[training]: {e}"))?;
        if self.evaluation.trials == 0 {
            return Err("[evaluation]: trials must be positive".into());
        }
        Ok(Config {
            seed,
            task,
            quadrature: self.quadrature,
            training: self.training,
            evaluation: self.evaluation,
        })
    }

    fn from_config(c: &Config) -> Self {
        let task = &c.task;
        let locs = task.locations();
        let locations = match locs.layout() {
            Layout::Grid => RawLocations {
                count: Some(locs.len()),
                field_radius: locs.field_radius(),
                coords: None,
            },
            Layout::Explicit => RawLocations {
                count: None,
                field_radius: locs.field_radius(),
                coords: Some(locs.coords().iter().map(|p| [p.x, p.y]).collect()),
            },
        };
        let prior = match task.prior_kind() {
            Prior::Uniform => RawPrior::Uniform,
            Prior::Explicit(v) => RawPrior::Explicit { values: v.clone() },
        };
        RawConfig {
            schema_version: Some(SCHEMA_VERSION),
            seed: c.seed.map(SeedValue::from_u64),
            saccade_budget: task.saccade_budget(),
            initial_fixation: Some(if task.starts_at_center() {
                FixationValue::Named("center".into())
            } else {
                FixationValue::Index(task.initial_fixation())
            }),
            mean_present: task.mean_present(),
            mean_absent: task.mean_absent(),
            locations: Some(locations),
            visibility: Some(task.visibility_map().clone()),
            prior: Some(prior),
            quadrature: c.quadrature,
            training: c.training.clone(),
            evaluation: c.evaluation,
        }
    }
}
