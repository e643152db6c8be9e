//! Command implementations. Each one reads a JSON config, performs the
//! work through `optoferm-core`, and writes its artifacts into the output
//! directory with a provenance envelope.

use std::fs;
use std::path::{Path, PathBuf};

use optoferm_core::hybrid::{self, ResidualModels, ResidualModelsData};
use optoferm_core::sim::{self, batch_metrics, NominalDynamics, Trajectory};
use optoferm_core::{
    estimate, gp, ocp, BatchDataset, BatchMetrics, FitSpec, HybridDynamics, KineticParams,
    ModelKind, State,
};
use serde::{Deserialize, Serialize};

use crate::config::{
    FitConfig, MetricsConfig, OptimizeConfig, ResidualsConfig, SimModel, SimulateConfig,
    TrainGpConfig,
};
use crate::io::{self, read_json, write_report};
use crate::{CliError, Result};

fn load_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    read_json(path)
}

fn ensure_out_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|source| CliError::Io { path: out.to_path_buf(), source })
}

#[derive(Debug, Deserialize)]
struct ModelsEnvelope {
    models: ResidualModelsData,
}

fn load_models(path: &Path) -> Result<ResidualModels> {
    let envelope: ModelsEnvelope = read_json(path)?;
    Ok(ResidualModels::from_data(envelope.models)?)
}

fn load_batches(inputs: &[crate::config::BatchInput]) -> Result<Vec<BatchDataset>> {
    if inputs.is_empty() {
        return Err(CliError::Config("at least one batch is required".into()));
    }
    inputs.iter().map(|b| io::load_batch_csv(&b.data, b.schedule.as_deref())).collect()
}

#[derive(Debug, Serialize)]
struct SimulateReport {
    metrics: BatchMetrics,
    final_state: State,
    trajectory_csv: PathBuf,
}

pub fn simulate(config_path: &Path, seed: u64, out: &Path) -> Result<()> {
    let config: SimulateConfig = load_config(config_path)?;
    ensure_out_dir(out)?;
    config.params.validate()?;
    let schedule = config.schedule.resolve()?;
    let x0: State = config.initial_state.into();

    let trajectory = match config.model {
        SimModel::Nominal => {
            sim::integrate(&x0, &schedule, &NominalDynamics::new(&config.params), config.step)?
        }
        SimModel::Hybrid => {
            let path = config.gp_models.as_ref().ok_or_else(|| {
                CliError::Config("hybrid simulation needs `gp_models`".into())
            })?;
            let models = load_models(path)?;
            sim::integrate(
                &x0,
                &schedule,
                &HybridDynamics::new(&config.params, &models),
                config.step,
            )?
        }
    };

    let trajectory_csv = out.join("trajectory.csv");
    match config.sample_interval {
        Some(interval) => {
            io::write_trajectory_csv(&trajectory_csv, &downsample(&trajectory, interval)?)?;
        }
        None => io::write_trajectory_csv(&trajectory_csv, &trajectory)?,
    }
    let report = SimulateReport {
        metrics: batch_metrics(&trajectory)?,
        final_state: *trajectory.final_state(),
        trajectory_csv,
    };
    write_report(&out.join("simulate_summary.json"), &config, seed, report)
}

fn downsample(trajectory: &Trajectory, interval: f64) -> Result<Trajectory> {
    if !(interval.is_finite() && interval > 0.0) {
        return Err(CliError::Config(format!("sample_interval must be > 0, got {interval}")));
    }
    let t0 = trajectory.times[0];
    let tf = trajectory.final_time();
    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut k = 0usize;
    loop {
        let t = (t0 + k as f64 * interval).min(tf);
        times.push(t);
        states.push(trajectory.state_at(t).expect("inside the horizon"));
        if t >= tf {
            break;
        }
        k += 1;
    }
    Ok(Trajectory { times, states, schedule: trajectory.schedule.clone() })
}

#[derive(Debug, Serialize)]
struct MetricsReport {
    metrics: BatchMetrics,
    t0: f64,
    tf: f64,
}

pub fn metrics(config_path: &Path, seed: u64, out: &Path) -> Result<()> {
    let config: MetricsConfig = load_config(config_path)?;
    ensure_out_dir(out)?;
    let dataset = io::load_batch_csv(&config.trajectory, config.schedule.as_deref())?;
    let trajectory = trajectory_from_dataset(&dataset)?;
    let report = MetricsReport {
        metrics: batch_metrics(&trajectory)?,
        t0: trajectory.times[0],
        tf: trajectory.final_time(),
    };
    write_report(&out.join("metrics.json"), &config, seed, report)
}

fn trajectory_from_dataset(dataset: &BatchDataset) -> Result<Trajectory> {
    let mut times = Vec::with_capacity(dataset.samples.len());
    let mut states = Vec::with_capacity(dataset.samples.len());
    for (row, sample) in dataset.samples.iter().enumerate() {
        let (Some(glucose), Some(biomass), Some(lactate)) =
            (sample.glucose, sample.biomass, sample.lactate)
        else {
            return Err(CliError::Data(format!(
                "batch '{}' row {}: metrics need fully observed rows",
                dataset.id,
                row + 1
            )));
        };
        times.push(sample.time);
        states.push(State { biomass, atpase: 0.0, glucose, lactate });
    }
    Ok(Trajectory { times, states, schedule: dataset.schedule.clone() })
}

#[derive(Debug, Serialize)]
struct ResidualsReport {
    batches: usize,
    sample_times: usize,
    residuals_csv: PathBuf,
}

pub fn residuals(config_path: &Path, seed: u64, out: &Path) -> Result<()> {
    let config: ResidualsConfig = load_config(config_path)?;
    ensure_out_dir(out)?;
    config.params.validate()?;
    let batches = load_batches(&config.batches)?;
    let mut samples = Vec::new();
    for batch in &batches {
        samples.extend(hybrid::compute_residuals(batch, &config.params, config.step)?);
    }
    let residuals_csv = out.join("residuals.csv");
    io::write_residuals_csv(&residuals_csv, &samples)?;
    let report = ResidualsReport {
        batches: batches.len(),
        sample_times: samples.len() / 3,
        residuals_csv,
    };
    write_report(&out.join("residuals_summary.json"), &config, seed, report)
}

#[derive(Debug, Serialize)]
struct TrainGpReport {
    training_points: usize,
    hyperparams: TrainedHyperparams,
    models: ResidualModelsData,
}

#[derive(Debug, Serialize)]
struct TrainedHyperparams {
    glucose: gp::GpHyperparams,
    biomass: gp::GpHyperparams,
    lactate: gp::GpHyperparams,
}

pub fn train_gp(config_path: &Path, seed: u64, out: &Path) -> Result<()> {
    let config: TrainGpConfig = load_config(config_path)?;
    ensure_out_dir(out)?;
    let samples = io::load_residuals_csv(&config.residuals)?;
    let budget = gp::FitBudget { starts: config.starts, max_evals: config.max_evals, seed };
    let models = hybrid::train_residual_models(&samples, &budget)?;
    let report = TrainGpReport {
        training_points: models.glucose.n_training(),
        hyperparams: TrainedHyperparams {
            glucose: *models.glucose.hyperparams(),
            biomass: *models.biomass.hyperparams(),
            lactate: *models.lactate.hyperparams(),
        },
        models: models.to_data(),
    };
    write_report(&out.join("gp_models.json"), &config, seed, report)
}

#[derive(Debug, Serialize)]
struct FitReport {
    params: KineticParams,
    objective: f64,
    history: Vec<f64>,
    evaluations: usize,
}

pub fn fit(config_path: &Path, seed: u64, out: &Path) -> Result<()> {
    let config: FitConfig = load_config(config_path)?;
    ensure_out_dir(out)?;
    let batches = load_batches(&config.batches)?;
    let spec = FitSpec {
        base: config.base.clone(),
        free: config.free.clone(),
        swarm_size: config.swarm_size,
        max_iters: config.max_iters,
        seed,
        weights: config.weights,
        step: config.step,
    };
    let outcome = estimate::fit_parameters(&batches, &spec)?;
    let report = FitReport {
        params: outcome.params,
        objective: outcome.objective,
        history: outcome.history,
        evaluations: outcome.evaluations,
    };
    write_report(&out.join("fit_report.json"), &config, seed, report)
}

#[derive(Debug, Serialize)]
struct OptimizeReport {
    initial_glucose: f64,
    levels: Vec<f64>,
    objective: f64,
    depletion_residual: f64,
    yield_residual: f64,
    feasible: bool,
    /// First fully lit interval for a dark-then-bright schedule.
    two_stage_switch: Option<usize>,
    diagnostics: ocp::OcpDiagnostics,
    trajectory_csv: PathBuf,
}

pub fn optimize(config_path: &Path, seed: u64, out: &Path) -> Result<()> {
    let config: OptimizeConfig = load_config(config_path)?;
    ensure_out_dir(out)?;
    config.params.validate()?;
    let models = match (config.ocp.model, &config.gp_models) {
        (ModelKind::Hybrid, Some(path)) => Some(load_models(path)?),
        (ModelKind::Hybrid, None) => {
            return Err(CliError::Config("hybrid optimization needs `gp_models`".into()));
        }
        (ModelKind::Nominal, _) => None,
    };
    let solution = ocp::solve(&config.ocp, &config.params, models.as_ref(), seed)?;
    let trajectory_csv = out.join("predicted_trajectory.csv");
    io::write_trajectory_csv(&trajectory_csv, &solution.trajectory)?;
    let report = OptimizeReport {
        initial_glucose: solution.initial_glucose,
        levels: solution.schedule.levels().to_vec(),
        objective: solution.objective,
        depletion_residual: solution.depletion_residual,
        yield_residual: solution.yield_residual,
        feasible: solution.feasible,
        two_stage_switch: solution.two_stage_switch(config.ocp.u_max, 0.01),
        diagnostics: solution.diagnostics.clone(),
        trajectory_csv,
    };
    write_report(&out.join("solution.json"), &config, seed, report)
}
