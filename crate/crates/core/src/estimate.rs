//! Estimation of the kinetic parameters against one or more batch datasets
//! simultaneously, using bounded particle-swarm search.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{KineticParams, State};
use crate::pso::{self, PsoConfig};
use crate::sim::{self, ControlSchedule, NominalDynamics, Trajectory, DEFAULT_STEP};

/// Objective value substituted when a candidate's simulation fails, so the
/// swarm keeps searching instead of aborting.
pub const OBJECTIVE_PENALTY: f64 = 1e12;

/// One timed measurement; `None` cells are unobserved, not zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    /// Sampling time (h).
    pub time: f64,
    /// Glucose (g/l).
    pub glucose: Option<f64>,
    /// Biomass (g/l).
    pub biomass: Option<f64>,
    /// Lactate (g/l).
    pub lactate: Option<f64>,
}

impl Sample {
    pub fn complete(time: f64, glucose: f64, biomass: f64, lactate: f64) -> Self {
        Self { time, glucose: Some(glucose), biomass: Some(biomass), lactate: Some(lactate) }
    }

    fn observed(&self) -> usize {
        self.glucose.is_some() as usize
            + self.biomass.is_some() as usize
            + self.lactate.is_some() as usize
    }
}

/// Time-stamped measurements of one fermentation plus the light schedule
/// that was applied to it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchDataset {
    pub id: String,
    pub schedule: ControlSchedule,
    /// Full state at the schedule start, used to launch simulations.
    pub initial_state: State,
    pub samples: Vec<Sample>,
}

impl BatchDataset {
    pub fn validate(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::Data(format!("batch '{}' has no samples", self.id)));
        }
        if !self.initial_state.is_finite() || !self.initial_state.is_nonnegative() {
            return Err(Error::Data(format!(
                "batch '{}' initial state must be finite and >= 0",
                self.id
            )));
        }
        let (t0, tf) = (self.schedule.t0(), self.schedule.tf());
        let mut previous = f64::NEG_INFINITY;
        for (row, sample) in self.samples.iter().enumerate() {
            if !sample.time.is_finite() || sample.time < t0 - 1e-9 || sample.time > tf + 1e-9 {
                return Err(Error::Data(format!(
                    "batch '{}' row {row}: time {} outside the schedule horizon [{t0}, {tf}]",
                    self.id, sample.time
                )));
            }
            if sample.time <= previous {
                return Err(Error::Data(format!(
                    "batch '{}' row {row}: sample times must be strictly increasing",
                    self.id
                )));
            }
            previous = sample.time;
            if sample.observed() == 0 {
                return Err(Error::Data(format!(
                    "batch '{}' row {row}: every sample needs at least one observed column",
                    self.id
                )));
            }
            for value in [sample.glucose, sample.biomass, sample.lactate].into_iter().flatten() {
                if !value.is_finite() {
                    return Err(Error::Data(format!(
                        "batch '{}' row {row}: non-finite measurement",
                        self.id
                    )));
                }
            }
        }
        Ok(())
    }

    /// Sample a simulated trajectory at the given times, producing a fully
    /// observed dataset (useful for synthetic-data experiments).
    pub fn from_trajectory(id: &str, trajectory: &Trajectory, times: &[f64]) -> Result<Self> {
        let mut samples = Vec::with_capacity(times.len());
        for &t in times {
            let state = trajectory.state_at(t).ok_or_else(|| {
                Error::Data(format!("sample time {t} outside the simulated horizon"))
            })?;
            samples.push(Sample::complete(t, state.glucose, state.biomass, state.lactate));
        }
        let dataset = Self {
            id: id.to_string(),
            schedule: trajectory.schedule.clone(),
            initial_state: *trajectory.initial_state(),
            samples,
        };
        dataset.validate()?;
        Ok(dataset)
    }
}

/// Identifies one of the 17 kinetic parameters in a [`KineticParams`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamId {
    #[serde(rename = "q_g_max")]
    QGMax,
    #[serde(rename = "k_g")]
    KG,
    #[serde(rename = "k_gv")]
    KGv,
    #[serde(rename = "n1")]
    N1,
    #[serde(rename = "y_bg")]
    YBg,
    #[serde(rename = "m_g")]
    MG,
    #[serde(rename = "k_bv")]
    KBv,
    #[serde(rename = "n2")]
    N2,
    #[serde(rename = "y_lb")]
    YLb,
    #[serde(rename = "m_l")]
    ML,
    #[serde(rename = "k_lv")]
    KLv,
    #[serde(rename = "n3")]
    N3,
    #[serde(rename = "q_e0")]
    QE0,
    #[serde(rename = "q_e_max")]
    QEMax,
    #[serde(rename = "k_u")]
    KU,
    #[serde(rename = "n4")]
    N4,
    #[serde(rename = "k_d")]
    KD,
}

impl ParamId {
    pub const ALL: [ParamId; 17] = [
        ParamId::QGMax,
        ParamId::KG,
        ParamId::KGv,
        ParamId::N1,
        ParamId::YBg,
        ParamId::MG,
        ParamId::KBv,
        ParamId::N2,
        ParamId::YLb,
        ParamId::ML,
        ParamId::KLv,
        ParamId::N3,
        ParamId::QE0,
        ParamId::QEMax,
        ParamId::KU,
        ParamId::N4,
        ParamId::KD,
    ];

    pub fn get(self, p: &KineticParams) -> f64 {
        match self {
            ParamId::QGMax => p.q_g_max,
            ParamId::KG => p.k_g,
            ParamId::KGv => p.k_gv,
            ParamId::N1 => p.n1,
            ParamId::YBg => p.y_bg,
            ParamId::MG => p.m_g,
            ParamId::KBv => p.k_bv,
            ParamId::N2 => p.n2,
            ParamId::YLb => p.y_lb,
            ParamId::ML => p.m_l,
            ParamId::KLv => p.k_lv,
            ParamId::N3 => p.n3,
            ParamId::QE0 => p.q_e0,
            ParamId::QEMax => p.q_e_max,
            ParamId::KU => p.k_u,
            ParamId::N4 => p.n4,
            ParamId::KD => p.k_d,
        }
    }

    pub fn set(self, p: &mut KineticParams, value: f64) {
        match self {
            ParamId::QGMax => p.q_g_max = value,
            ParamId::KG => p.k_g = value,
            ParamId::KGv => p.k_gv = value,
            ParamId::N1 => p.n1 = value,
            ParamId::YBg => p.y_bg = value,
            ParamId::MG => p.m_g = value,
            ParamId::KBv => p.k_bv = value,
            ParamId::N2 => p.n2 = value,
            ParamId::YLb => p.y_lb = value,
            ParamId::ML => p.m_l = value,
            ParamId::KLv => p.k_lv = value,
            ParamId::N3 => p.n3 = value,
            ParamId::QE0 => p.q_e0 = value,
            ParamId::QEMax => p.q_e_max = value,
            ParamId::KU => p.k_u = value,
            ParamId::N4 => p.n4 = value,
            ParamId::KD => p.k_d = value,
        }
    }
}

/// Search range for one free parameter.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FreeParam {
    pub param: ParamId,
    pub lower: f64,
    pub upper: f64,
    /// Search in log10 space; requires a strictly positive range. This is
    /// the right default for rate constants spanning decades.
    #[serde(default = "default_true")]
    pub log_scale: bool,
}

fn default_true() -> bool {
    true
}

impl FreeParam {
    pub fn new(param: ParamId, lower: f64, upper: f64) -> Self {
        Self { param, lower, upper, log_scale: lower > 0.0 }
    }
}

/// Relative weights of the measured state columns in the fit objective.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ResidualWeights {
    pub glucose: f64,
    pub biomass: f64,
    pub lactate: f64,
}

impl Default for ResidualWeights {
    fn default() -> Self {
        Self { glucose: 1.0, biomass: 1.0, lactate: 1.0 }
    }
}

/// Full description of one estimation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitSpec {
    /// Values for the parameters that are not being fitted.
    pub base: KineticParams,
    pub free: Vec<FreeParam>,
    #[serde(default = "default_swarm_size")]
    pub swarm_size: usize,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub weights: ResidualWeights,
    /// Integration step for candidate simulations (h).
    #[serde(default = "default_step")]
    pub step: f64,
}

fn default_swarm_size() -> usize {
    32
}

fn default_max_iters() -> usize {
    80
}

fn default_step() -> f64 {
    DEFAULT_STEP
}

impl FitSpec {
    pub fn new(base: KineticParams, free: Vec<FreeParam>) -> Self {
        Self {
            base,
            free,
            swarm_size: default_swarm_size(),
            max_iters: default_max_iters(),
            seed: 0,
            weights: ResidualWeights::default(),
            step: DEFAULT_STEP,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.free.is_empty() {
            return Err(Error::Config("fit spec needs at least one free parameter".into()));
        }
        for fp in &self.free {
            if !(fp.lower.is_finite() && fp.upper.is_finite() && fp.lower < fp.upper) {
                return Err(Error::Config(format!(
                    "free parameter {:?}: need finite lower < upper, got [{}, {}]",
                    fp.param, fp.lower, fp.upper
                )));
            }
            if fp.log_scale && fp.lower <= 0.0 {
                return Err(Error::Config(format!(
                    "free parameter {:?}: log-space search needs lower > 0, got {}",
                    fp.param, fp.lower
                )));
            }
        }
        if self.swarm_size == 0 {
            return Err(Error::Config("swarm size must be at least 1".into()));
        }
        if !(self.step.is_finite() && self.step > 0.0) {
            return Err(Error::Config(format!("step must be > 0, got {}", self.step)));
        }
        Ok(())
    }

    fn decode(&self, coords: &[f64]) -> KineticParams {
        let mut params = self.base.clone();
        for (fp, &c) in self.free.iter().zip(coords) {
            let value = if fp.log_scale { 10f64.powf(c) } else { c };
            fp.param.set(&mut params, value);
        }
        params
    }

    fn search_bounds(&self) -> Vec<(f64, f64)> {
        self.free
            .iter()
            .map(|fp| {
                if fp.log_scale {
                    (fp.lower.log10(), fp.upper.log10())
                } else {
                    (fp.lower, fp.upper)
                }
            })
            .collect()
    }
}

/// Weighted, std-normalized sum of squared simulation-vs-measurement errors
/// across all datasets. Missing cells are skipped; a failed simulation
/// yields [`OBJECTIVE_PENALTY`] instead of an error.
pub fn sse_objective(
    params: &KineticParams,
    datasets: &[BatchDataset],
    weights: &ResidualWeights,
    step: f64,
) -> f64 {
    let mut total = 0.0;
    for dataset in datasets {
        let dynamics = NominalDynamics::new(params);
        let trajectory =
            match sim::integrate(&dataset.initial_state, &dataset.schedule, &dynamics, step) {
                Ok(t) => t,
                Err(_) => return OBJECTIVE_PENALTY,
            };
        let norms = column_norms(dataset);
        for sample in &dataset.samples {
            let Some(state) = trajectory.state_at(sample.time) else {
                return OBJECTIVE_PENALTY;
            };
            if let Some(measured) = sample.glucose {
                total += weights.glucose * ((state.glucose - measured) / norms[0]).powi(2);
            }
            if let Some(measured) = sample.biomass {
                total += weights.biomass * ((state.biomass - measured) / norms[1]).powi(2);
            }
            if let Some(measured) = sample.lactate {
                total += weights.lactate * ((state.lactate - measured) / norms[2]).powi(2);
            }
        }
    }
    total
}

/// Per-column standard deviation of the observed values in one dataset;
/// near-constant columns fall back to unit scale.
fn column_norms(dataset: &BatchDataset) -> [f64; 3] {
    let mut norms = [1.0; 3];
    for (i, pick) in [
        (0usize, &(|s: &Sample| s.glucose) as &dyn Fn(&Sample) -> Option<f64>),
        (1, &|s: &Sample| s.biomass),
        (2, &|s: &Sample| s.lactate),
    ] {
        let values: Vec<f64> = dataset.samples.iter().filter_map(pick).collect();
        if values.len() < 2 {
            continue;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        if std > 1e-12 {
            norms[i] = std;
        }
    }
    norms
}

/// Result of one swarm fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitOutcome {
    pub params: KineticParams,
    pub objective: f64,
    /// Best objective after initialization and after each iteration.
    pub history: Vec<f64>,
    pub evaluations: usize,
}

/// Fit the free parameters of `spec` to the datasets with a seeded
/// particle swarm. Deterministic for a fixed `(datasets, spec)`.
pub fn fit_parameters(datasets: &[BatchDataset], spec: &FitSpec) -> Result<FitOutcome> {
    if datasets.is_empty() {
        return Err(Error::Config("parameter estimation needs at least one dataset".into()));
    }
    for dataset in datasets {
        dataset.validate()?;
    }
    spec.validate()?;

    let bounds = spec.search_bounds();
    let objective =
        |coords: &[f64]| sse_objective(&spec.decode(coords), datasets, &spec.weights, spec.step);
    let outcome = pso::minimize(
        objective,
        &bounds,
        &PsoConfig {
            swarm_size: spec.swarm_size,
            max_iters: spec.max_iters,
            seed: spec.seed,
            ..PsoConfig::default()
        },
        &[],
    )?;

    Ok(FitOutcome {
        params: spec.decode(&outcome.position),
        objective: outcome.objective,
        history: outcome.history,
        evaluations: outcome.evaluations,
    })
}
