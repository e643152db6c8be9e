//! Model-based open-loop optimization of optogenetically controlled ATPase
//! expression in batch lactate fermentations.
//!
//! The crate covers the full pipeline:
//!
//! - [`model`]: the four-state kinetic model (Monod/Pirt/Luedeking-Piret
//!   rate laws with Hill-type ATPase modulation) and its nominal
//!   right-hand side;
//! - [`sim`]: fixed-step RK4 integration over piecewise-constant light
//!   schedules, plus whole-batch performance metrics;
//! - [`gp`]: exact Gaussian-process regression (squared-exponential
//!   kernel, log marginal likelihood, hyperparameter search, posterior
//!   prediction);
//! - [`hybrid`]: finite-difference model residuals extracted from batch
//!   data, one GP per uncertain state equation, and the hybrid right-hand
//!   side combining both;
//! - [`estimate`]: particle-swarm estimation of the kinetic parameters
//!   against one or more batches simultaneously;
//! - [`ocp`]: the open-loop optimal control problem over hourly light
//!   levels and the initial glucose concentration, with an exhaustive
//!   two-stage verification oracle.

pub mod error;
pub mod estimate;
pub mod gp;
pub mod hybrid;
pub mod model;
pub mod ocp;
mod pso;
pub mod sim;

pub use error::{Error, InfeasibilityReport, Result};
pub use estimate::{
    BatchDataset, FitOutcome, FitSpec, FreeParam, ParamId, ResidualWeights, Sample,
};
pub use gp::{FitBudget, GpHyperparams, GpModel, GpModelData};
pub use hybrid::{
    HybridDynamics, ResidualEquation, ResidualModels, ResidualModelsData, ResidualSample,
};
pub use model::{KineticParams, Rates, State, StateDerivative};
pub use ocp::{ModelKind, OcpDiagnostics, OcpSolution, OcpSpec};
pub use pso::{PsoConfig, PsoOutcome};
pub use sim::{BatchMetrics, ControlSchedule, Dynamics, NominalDynamics, Trajectory};
