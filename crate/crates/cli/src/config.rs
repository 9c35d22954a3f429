use std::path::{Path, PathBuf};

use homp_core::problems::ProblemSpec;
use serde::{Deserialize, Serialize};

use crate::error::LabError;

/// One solver family with its horizon grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum MethodConfig {
    #[serde(rename = "mp")]
    Mp(MpSettings),
    HompP2(HompSettings),
    HompGeneral(HompSettings),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpSettings {
    pub horizons: Vec<usize>,
    /// Step size; defaults to `1/L₁`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HompSettings {
    pub horizons: Vec<usize>,
    /// Method order; fixed to 2 for `homp_p2`, required for `homp_general`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_plus_cap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub newton_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub newton_max_iter: Option<usize>,
}

impl MethodConfig {
    pub fn horizons(&self) -> &[usize] {
        match self {
            MethodConfig::Mp(s) => &s.horizons,
            MethodConfig::HompP2(s) | MethodConfig::HompGeneral(s) => &s.horizons,
        }
    }

    /// Short name used for file names and summary entries.
    pub fn label(&self) -> String {
        match self {
            MethodConfig::Mp(_) => "mp".into(),
            MethodConfig::HompP2(_) => "homp_p2".into(),
            MethodConfig::HompGeneral(s) => format!("homp_p{}", s.order.unwrap_or(0)),
        }
    }

    pub fn order(&self) -> usize {
        match self {
            MethodConfig::Mp(_) => 1,
            MethodConfig::HompP2(_) => 2,
            MethodConfig::HompGeneral(s) => s.order.unwrap_or(0),
        }
    }
}

/// How the starting point is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "policy", rename_all = "snake_case", deny_unknown_fields)]
pub enum StartPolicy {
    Origin,
    /// First standard basis vector.
    #[default]
    Unit,
    Explicit { values: Vec<f64> },
    /// Uniform draw from the feasible set (whole space: the ball of `radius`).
    Random {
        seed: u64,
        #[serde(default = "default_start_radius")]
        radius: f64,
    },
}

fn default_start_radius() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

fn default_reference_points() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitorConfig {
    #[serde(default = "default_true")]
    pub sum_bound: bool,
    #[serde(default = "default_true")]
    pub trajectory_bound: bool,
    #[serde(default = "default_true")]
    pub band: bool,
    /// Reference points drawn for the telescoping check.
    #[serde(default = "default_reference_points")]
    pub reference_points: usize,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self {
            sum_bound: true,
            trajectory_bound: true,
            band: true,
            reference_points: default_reference_points(),
        }
    }
}

impl MonitorConfig {
    pub fn all() -> Self {
        Self::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub methods: Vec<MethodConfig>,
    #[serde(default)]
    pub z1: StartPolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub monitors: MonitorConfig,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, LabError> {
        let config: Self = serde_json::from_str(text).map_err(|e| LabError::Config(format!(
            "line {} column {}: {e}",
            e.line(),
            e.column()
        )))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, LabError> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            LabError::Config(msg) => LabError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<(), LabError> {
        if self.methods.is_empty() {
            return Err(LabError::Config("methods: at least one method is required".into()));
        }
        for (i, m) in self.methods.iter().enumerate() {
            let grid = m.horizons();
            if grid.is_empty() {
                return Err(LabError::Config(format!("methods[{i}].horizons: empty grid")));
            }
            if grid[0] == 0 || grid.windows(2).any(|w| w[1] <= w[0]) {
                return Err(LabError::Config(format!(
                    "methods[{i}].horizons: must be positive and strictly increasing"
                )));
            }
            match m {
                MethodConfig::Mp(s) => {
                    if s.gamma.is_some_and(|g| !(g > 0.0 && g.is_finite())) {
                        return Err(LabError::Config(format!("methods[{i}].gamma: must be positive")));
                    }
                }
                MethodConfig::HompP2(s) => {
                    if s.order.is_some_and(|p| p != 2) {
                        return Err(LabError::Config(format!("methods[{i}].order: homp_p2 is order 2")));
                    }
                }
                MethodConfig::HompGeneral(s) => {
                    if !s.order.is_some_and(|p| p >= 2) {
                        return Err(LabError::Config(format!("methods[{i}].order: homp_general needs order >= 2")));
                    }
                }
            }
        }
        let labels: Vec<String> = self.methods.iter().map(MethodConfig::label).collect();
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(LabError::Config(format!("methods[{i}]: duplicate method {l}")));
            }
        }
        Ok(())
    }
}
