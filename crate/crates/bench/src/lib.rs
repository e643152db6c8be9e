//! Shared fixtures for the pipeline benchmarks.

use optoferm_core::gp::FitBudget;
use optoferm_core::hybrid::{compute_residuals, train_residual_models, ResidualModels};
use optoferm_core::sim::{self, DEFAULT_STEP};
use optoferm_core::{BatchDataset, ControlSchedule, KineticParams, NominalDynamics, State};

pub fn nominal() -> KineticParams {
    KineticParams::nominal()
}

pub fn typical_state() -> State {
    State::new(0.15, 4.3, 2.1, 0.9)
}

pub fn two_stage_schedule() -> ControlSchedule {
    ControlSchedule::new(0.0, 8.0, 1.0, vec![0.0, 0.0, 0.0, 873.0, 873.0, 873.0, 873.0, 873.0])
        .unwrap()
}

/// One hourly-sampled synthetic batch under constant light.
pub fn synthetic_batch(level: f64) -> BatchDataset {
    let params = nominal();
    let schedule = ControlSchedule::constant(0.0, 8.0, 1.0, level).unwrap();
    let x0 = State::new(0.0712, 0.0, 4.0, 0.0);
    let trajectory =
        sim::integrate(&x0, &schedule, &NominalDynamics::new(&params), DEFAULT_STEP).unwrap();
    let times: Vec<f64> = (0..=8).map(|h| h as f64).collect();
    BatchDataset::from_trajectory(&format!("u{level}"), &trajectory, &times).unwrap()
}

/// Residual models trained on a perturbed-lactate synthetic truth, the
/// setup used by the hybrid optimization.
pub fn trained_models() -> ResidualModels {
    let params = nominal();
    let mut truth = params.clone();
    truth.m_l *= 1.07;
    truth.y_lb *= 1.07;
    let mut samples = Vec::new();
    for level in [0.0, 349.0, 873.0] {
        let schedule = ControlSchedule::constant(0.0, 8.0, 1.0, level).unwrap();
        let x0 = State::new(0.0712, 0.0, 4.0, 0.0);
        let trajectory =
            sim::integrate(&x0, &schedule, &NominalDynamics::new(&truth), DEFAULT_STEP).unwrap();
        let times: Vec<f64> = (0..=8).map(|h| h as f64).collect();
        let batch = BatchDataset::from_trajectory(&format!("u{level}"), &trajectory, &times).unwrap();
        samples.extend(compute_residuals(&batch, &params, DEFAULT_STEP).unwrap());
    }
    train_residual_models(&samples, &FitBudget { starts: 4, max_evals: 120, seed: 0 }).unwrap()
}
