//! Experiment configuration, read from TOML.
//!
//! Every table rejects unknown keys. A minimal file:
//!
//! ```toml
//! schema_version = 1
//! experiment = "wiener"
//! runs = 20
//! base_seed = 7
//!
//! [contamination]
//! kind = "additive_gaussian"
//! p = 0.1
//! scale = 100.0
//!
//! [[filters]]
//! kind = "bpf"
//! rule = "beta"
//! beta = 0.1
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Wiener,
    AsymmetricWiener,
    Tan,
    Gp,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Wiener => "wiener",
            Self::AsymmetricWiener => "asymmetric_wiener",
            Self::Tan => "tan",
            Self::Gp => "gp",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub experiment: ExperimentKind,
    #[serde(default = "one")]
    pub runs: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// Worker threads; all cores when absent.
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub simulator: SimulatorConfig,
    /// Defaults to the experiment's standard outlier process when absent.
    #[serde(default)]
    pub contamination: Option<ContaminationConfig>,
    #[serde(default)]
    pub filters: Vec<FilterConfig>,
    #[serde(default)]
    pub selection: Option<SelectionConfig>,
    /// External series for the GP experiment.
    #[serde(default)]
    pub data: Option<DataConfig>,
    /// Write per-step means and bands of every filter.
    #[serde(default)]
    pub write_summaries: bool,
}

fn one() -> usize {
    1
}

fn default_output() -> PathBuf {
    PathBuf::from("output")
}

/// Overrides of the simulator defaults; irrelevant keys for an experiment are
/// rejected at validation.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulatorConfig {
    pub dt: Option<f64>,
    pub steps: Option<usize>,
    pub x0: Option<Vec<f64>>,
    pub obs_variance: Option<f64>,
    pub sigma_left: Option<f64>,
    pub sigma_right: Option<f64>,
    pub lengthscale: Option<f64>,
    pub signal_variance: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ContaminationConfig {
    None,
    AdditiveGaussian { p: f64, scale: f64 },
    AdditiveStudentT { p: f64, dof: f64, scale: f64 },
    MultiplicativeExponential { p: f64, scale: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKindConfig {
    Kalman,
    Bpf,
    Apf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleConfig {
    #[default]
    Standard,
    Beta,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LikelihoodConfig {
    /// The simulator's own noise model.
    #[default]
    Model,
    StudentT { scale: f64, dof: f64 },
    /// Clean noise mixed with the additive Gaussian outlier process.
    OracleMixture,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResamplingConfig {
    #[default]
    Multinomial,
    Systematic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmootherConfig {
    Rts,
    Ffbs,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    pub name: Option<String>,
    pub kind: FilterKindConfig,
    #[serde(default)]
    pub rule: RuleConfig,
    pub beta: Option<f64>,
    #[serde(default)]
    pub likelihood: LikelihoodConfig,
    #[serde(default = "default_particles")]
    pub particles: usize,
    #[serde(default)]
    pub resampling: ResamplingConfig,
    /// Resample only when ESS/N drops below this fraction.
    pub ess_threshold: Option<f64>,
    #[serde(default = "default_stabiliser")]
    pub apf_stabiliser: f64,
    #[serde(default)]
    pub predictive_draws: usize,
    pub smoother: Option<SmootherConfig>,
    #[serde(default = "default_trajectories")]
    pub trajectories: usize,
}

fn default_particles() -> usize {
    1000
}

fn default_stabiliser() -> f64 {
    0.05
}

fn default_trajectories() -> usize {
    betasmc::smoothing::DEFAULT_TRAJECTORIES
}

impl FilterConfig {
    pub fn label(&self) -> String {
        if let Some(n) = &self.name {
            return n.clone();
        }
        let kind = match self.kind {
            FilterKindConfig::Kalman => return "kalman".into(),
            FilterKindConfig::Bpf => "bpf",
            FilterKindConfig::Apf => "apf",
        };
        let mut label = match (self.rule, self.beta) {
            (RuleConfig::Beta, Some(b)) => format!("beta-{kind}({b})"),
            _ => kind.to_string(),
        };
        match self.likelihood {
            LikelihoodConfig::Model => {}
            LikelihoodConfig::StudentT { scale, .. } => label = format!("t-{label}(scale={scale})"),
            LikelihoodConfig::OracleMixture => label = format!("oracle-{label}"),
        }
        label
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightingConfig {
    #[default]
    InverseMedian,
    None,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionConfig {
    #[serde(default = "default_grid")]
    pub grid: Vec<f64>,
    #[serde(default = "one")]
    pub runs: usize,
    #[serde(default = "default_selection_kind")]
    pub filter: FilterKindConfig,
    #[serde(default = "default_particles")]
    pub particles: usize,
    /// Draws per step; one per particle when absent.
    pub predictive_draws: Option<usize>,
    #[serde(default)]
    pub weighting: WeightingConfig,
    /// Fraction of the sequence used for tuning, taken from the start.
    #[serde(default = "full")]
    pub fraction: f64,
}

fn default_grid() -> Vec<f64> {
    betasmc::selection::DEFAULT_GRID.to_vec()
}

fn default_selection_kind() -> FilterKindConfig {
    FilterKindConfig::Bpf
}

fn full() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub path: PathBuf,
    pub time_column: String,
    pub value_column: String,
    /// Column holding a reference signal to score against.
    pub truth_column: Option<String>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        if let Some(d) = cfg.data.as_mut() {
            if d.path.is_relative() {
                if let Some(parent) = path.parent() {
                    d.path = parent.join(&d.path);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let err = |m: String| Err(CliError::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return err(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.runs == 0 {
            return err("runs must be at least 1".into());
        }
        if self.workers == Some(0) {
            return err("workers must be at least 1".into());
        }
        let s = &self.simulator;
        let gp = self.experiment == ExperimentKind::Gp;
        let asym = self.experiment == ExperimentKind::AsymmetricWiener;
        if !gp && (s.lengthscale.is_some() || s.signal_variance.is_some()) {
            return err("lengthscale and signal_variance only apply to the gp experiment".into());
        }
        if !asym && (s.sigma_left.is_some() || s.sigma_right.is_some()) {
            return err("sigma_left and sigma_right only apply to the asymmetric_wiener experiment".into());
        }
        if asym && s.obs_variance.is_some() {
            return err("the asymmetric_wiener experiment takes sigma_left/sigma_right, not obs_variance".into());
        }
        if gp && s.x0.is_some() {
            return err("the gp experiment draws its initial state from the stationary prior".into());
        }
        if self.data.is_some() && !gp {
            return err("[data] only applies to the gp experiment".into());
        }
        for (i, f) in self.filters.iter().enumerate() {
            let at = |m: &str| CliError::Config(format!("filters[{i}]: {m}"));
            match (f.rule, f.beta) {
                (RuleConfig::Beta, None) => return Err(at("rule = \"beta\" needs a beta value")),
                (RuleConfig::Beta, Some(b)) if !(b > 0.0 && b < 1.0) => {
                    return Err(at("beta must lie in (0, 1)"))
                }
                (RuleConfig::Standard, Some(_)) => return Err(at("beta given for the standard rule")),
                _ => {}
            }
            if f.kind == FilterKindConfig::Kalman {
                if f.rule != RuleConfig::Standard || f.likelihood != LikelihoodConfig::Model {
                    return Err(at("the Kalman filter only supports the model likelihood with the standard rule"));
                }
                if f.smoother == Some(SmootherConfig::Ffbs) {
                    return Err(at("use smoother = \"rts\" with the Kalman filter"));
                }
            } else if f.smoother == Some(SmootherConfig::Rts) {
                return Err(at("use smoother = \"ffbs\" with particle filters"));
            }
            if f.particles < 2 {
                return Err(at("particles must be at least 2"));
            }
            if let Some(t) = f.ess_threshold {
                if !(t > 0.0 && t <= 1.0) {
                    return Err(at("ess_threshold must lie in (0, 1]"));
                }
            }
            if f.smoother.is_some() && !gp {
                return Err(at("smoothers are only run by the gp experiment"));
            }
            if f.trajectories == 0 {
                return Err(at("trajectories must be at least 1"));
            }
        }
        if let Some(sel) = &self.selection {
            if sel.filter == FilterKindConfig::Kalman {
                return err("selection.filter must be a particle filter".into());
            }
            if !(sel.fraction > 0.0 && sel.fraction <= 1.0) {
                return err("selection.fraction must lie in (0, 1]".into());
            }
            if sel.runs == 0 {
                return err("selection.runs must be at least 1".into());
            }
        }
        Ok(())
    }
}
