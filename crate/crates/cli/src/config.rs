//! JSON configuration schemas, one per subcommand. Paths are resolved
//! relative to the working directory.

use std::path::PathBuf;

use optoferm_core::sim::DEFAULT_STEP;
use optoferm_core::{
    ControlSchedule, FreeParam, KineticParams, OcpSpec, ResidualWeights, State,
};
use serde::{Deserialize, Serialize};

use crate::{CliError, Result};

fn nominal_params() -> KineticParams {
    KineticParams::nominal()
}

fn default_step() -> f64 {
    DEFAULT_STEP
}

fn one() -> f64 {
    1.0
}

/// Initial culture state; ATPase and lactate default to zero (cultures
/// start uninduced in fresh medium).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialStateConfig {
    pub glucose: f64,
    pub biomass: f64,
    #[serde(default)]
    pub lactate: f64,
    #[serde(default)]
    pub atpase: f64,
}

impl From<InitialStateConfig> for State {
    fn from(c: InitialStateConfig) -> Self {
        State { biomass: c.biomass, atpase: c.atpase, glucose: c.glucose, lactate: c.lactate }
    }
}

/// A light schedule given inline (`levels` or `constant`) or as a CSV file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    /// Path to a schedule CSV (`interval_start_h,u_umol_m2_s`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    /// Constant light level over the horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant: Option<f64>,
    /// One level per interval.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<f64>>,
    #[serde(default)]
    pub t0: f64,
    /// Horizon end; required for `constant` and `levels`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tf: Option<f64>,
    #[serde(default = "one")]
    pub interval_width: f64,
}

impl ScheduleConfig {
    pub fn resolve(&self) -> Result<ControlSchedule> {
        match (&self.file, self.constant, &self.levels) {
            (Some(path), None, None) => crate::io::load_schedule_csv(path),
            (None, Some(level), None) => {
                let tf = self.require_tf()?;
                Ok(ControlSchedule::constant(self.t0, tf, self.interval_width, level)?)
            }
            (None, None, Some(levels)) => {
                let tf = self.require_tf()?;
                Ok(ControlSchedule::new(self.t0, tf, self.interval_width, levels.clone())?)
            }
            _ => Err(CliError::Config(
                "schedule needs exactly one of `file`, `constant`, or `levels`".into(),
            )),
        }
    }

    fn require_tf(&self) -> Result<f64> {
        self.tf.ok_or_else(|| CliError::Config("inline schedules need `tf`".into()))
    }
}

/// Which right-hand side a simulation uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimModel {
    #[default]
    Nominal,
    Hybrid,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub initial_state: InitialStateConfig,
    pub schedule: ScheduleConfig,
    #[serde(default = "nominal_params")]
    pub params: KineticParams,
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default)]
    pub model: SimModel,
    /// Trained residual models (from `train-gp`); required for `hybrid`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gp_models: Option<PathBuf>,
    /// Spacing of the rows written to the trajectory CSV (h); every
    /// integration step when omitted. Metrics always use the full
    /// resolution.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_interval: Option<f64>,
}

/// One measured batch: data CSV plus an optional paired schedule CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchInput {
    pub data: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub batches: Vec<BatchInput>,
    pub free: Vec<FreeParam>,
    #[serde(default = "nominal_params")]
    pub base: KineticParams,
    #[serde(default = "default_fit_swarm")]
    pub swarm_size: usize,
    #[serde(default = "default_fit_iters")]
    pub max_iters: usize,
    #[serde(default)]
    pub weights: ResidualWeights,
    #[serde(default = "default_step")]
    pub step: f64,
}

fn default_fit_swarm() -> usize {
    32
}

fn default_fit_iters() -> usize {
    80
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResidualsConfig {
    pub batches: Vec<BatchInput>,
    #[serde(default = "nominal_params")]
    pub params: KineticParams,
    #[serde(default = "default_step")]
    pub step: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainGpConfig {
    /// Residual samples CSV written by `residuals`.
    pub residuals: PathBuf,
    #[serde(default = "default_gp_starts")]
    pub starts: usize,
    #[serde(default = "default_gp_evals")]
    pub max_evals: usize,
}

fn default_gp_starts() -> usize {
    8
}

fn default_gp_evals() -> usize {
    200
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeConfig {
    pub ocp: OcpSpec,
    #[serde(default = "nominal_params")]
    pub params: KineticParams,
    /// Trained residual models; required when `ocp.model` is `hybrid`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gp_models: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    /// Batch or trajectory CSV with fully observed rows.
    pub trajectory: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<PathBuf>,
}
