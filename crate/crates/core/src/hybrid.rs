//! Learning the model-plant mismatch: finite-difference residuals from
//! batch data, one Gaussian-process regressor per uncertain state equation,
//! and the hybrid right-hand side that adds the learned corrections to the
//! nominal kinetics.
//!
//! The ATPase equation carries no error term: E is a virtual, unmeasured
//! state whose equation is taken as exact, so only the glucose, biomass,
//! and lactate equations are corrected.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::BatchDataset;
use crate::gp::{FitBudget, GpHyperparams, GpModel, GpModelData};
use crate::model::{self, KineticParams, State, StateDerivative};
use crate::sim::{self, Dynamics, NominalDynamics};

/// Which state equation a residual sample belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResidualEquation {
    Glucose,
    Biomass,
    Lactate,
}

/// One finite-difference observation of the model error of one equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualSample {
    /// Left sample time t_k (h).
    pub time: f64,
    /// GP features at t_k: glucose, biomass, lactate, reconstructed ATPase,
    /// applied light.
    pub features: [f64; 5],
    /// Model error w_i (state units per hour).
    pub target: f64,
    pub equation: ResidualEquation,
}

/// Measured slope minus model slope over one sampling interval, with the
/// model re-anchored at the measured left endpoint.
fn residual_rate(measured_start: f64, measured_end: f64, predicted_end: f64, dt: f64) -> f64 {
    (measured_end - measured_start) / dt - (predicted_end - measured_start) / dt
}

/// Extract residual samples from one batch.
///
/// For each consecutive sample pair the nominal model is restarted from the
/// measured state ("re-anchored") and integrated to the next sample time;
/// the residual is the difference of measured and predicted mean slopes.
/// The unmeasured ATPase feature is reconstructed by integrating its
/// expression/decay equation from `E = 0` at the schedule start: cultures
/// are grown under red light before the batch, so they start uninduced.
pub fn compute_residuals(
    data: &BatchDataset,
    params: &KineticParams,
    step: f64,
) -> Result<Vec<ResidualSample>> {
    data.validate()?;
    params.validate()?;
    if data.samples.len() < 2 {
        return Err(Error::Data(format!(
            "batch '{}': residual extraction needs at least 2 samples",
            data.id
        )));
    }
    let mut measured = Vec::with_capacity(data.samples.len());
    for (row, sample) in data.samples.iter().enumerate() {
        match (sample.glucose, sample.biomass, sample.lactate) {
            (Some(g), Some(b), Some(l)) => measured.push((sample.time, g, b, l)),
            (g, b, l) => {
                let missing = if g.is_none() {
                    "glucose"
                } else if b.is_none() {
                    "biomass"
                } else {
                    let _ = l;
                    "lactate"
                };
                return Err(Error::Data(format!(
                    "batch '{}' row {row}: residual extraction needs the {missing} column",
                    data.id
                )));
            }
        }
    }

    let dynamics = NominalDynamics::new(params);

    // March the decoupled ATPase equation along the sample grid. A
    // zero-biomass state leaves every other component inert.
    let mut carrier = State::new(0.0, 0.0, 0.0, 0.0);
    let mut cursor = data.schedule.t0();
    let mut atpase = Vec::with_capacity(measured.len());
    for &(time, ..) in &measured {
        if time > cursor {
            carrier = sim::integrate_between(&carrier, cursor, time, &data.schedule, &dynamics, step)?;
            cursor = time;
        }
        atpase.push(carrier.atpase);
    }

    let mut out = Vec::with_capacity(3 * (measured.len() - 1));
    for k in 0..measured.len() - 1 {
        let (t0, g0, b0, l0) = measured[k];
        let (t1, g1, b1, l1) = measured[k + 1];
        let dt = t1 - t0;
        let anchor = State { biomass: b0, atpase: atpase[k], glucose: g0, lactate: l0 };
        let predicted = sim::integrate_between(&anchor, t0, t1, &data.schedule, &dynamics, step)?;
        let features = [g0, b0, l0, atpase[k], data.schedule.level_at(t0)];
        out.push(ResidualSample {
            time: t0,
            features,
            target: residual_rate(g0, g1, predicted.glucose, dt),
            equation: ResidualEquation::Glucose,
        });
        out.push(ResidualSample {
            time: t0,
            features,
            target: residual_rate(b0, b1, predicted.biomass, dt),
            equation: ResidualEquation::Biomass,
        });
        out.push(ResidualSample {
            time: t0,
            features,
            target: residual_rate(l0, l1, predicted.lactate, dt),
            equation: ResidualEquation::Lactate,
        });
    }
    Ok(out)
}

/// One trained regressor per uncertain state equation. All three share the
/// same training feature matrix and differ only in their labels.
#[derive(Debug, Clone)]
pub struct ResidualModels {
    pub glucose: GpModel,
    pub biomass: GpModel,
    pub lactate: GpModel,
}

/// Serializable form of [`ResidualModels`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResidualModelsData {
    pub glucose: GpModelData,
    pub biomass: GpModelData,
    pub lactate: GpModelData,
}

impl ResidualModels {
    pub fn to_data(&self) -> ResidualModelsData {
        ResidualModelsData {
            glucose: self.glucose.to_data(),
            biomass: self.biomass.to_data(),
            lactate: self.lactate.to_data(),
        }
    }

    pub fn from_data(data: ResidualModelsData) -> Result<Self> {
        if data.glucose.inputs != data.biomass.inputs || data.glucose.inputs != data.lactate.inputs
        {
            return Err(Error::Data(
                "residual models must be trained on identical feature sets".into(),
            ));
        }
        Ok(Self {
            glucose: GpModel::from_data(data.glucose)?,
            biomass: GpModel::from_data(data.biomass)?,
            lactate: GpModel::from_data(data.lactate)?,
        })
    }
}

/// Train the three residual regressors on pooled samples (typically the
/// concatenation of [`compute_residuals`] over several batches, pooled
/// uniformly). Reproducible for a fixed `budget.seed`.
pub fn train_residual_models(
    samples: &[ResidualSample],
    budget: &FitBudget,
) -> Result<ResidualModels> {
    let mut inputs = Vec::new();
    let mut labels: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for sample in samples {
        let slot = match sample.equation {
            ResidualEquation::Glucose => 0,
            ResidualEquation::Biomass => 1,
            ResidualEquation::Lactate => 2,
        };
        if slot == 0 {
            inputs.push(sample.features.to_vec());
        } else if inputs.len() != labels[slot].len() + 1 {
            return Err(Error::Data(
                "residual samples must come in (glucose, biomass, lactate) triples per time point"
                    .into(),
            ));
        }
        labels[slot].push(sample.target);
    }
    let n = inputs.len();
    if n < 2 {
        return Err(Error::Data("residual training needs at least 2 samples per equation".into()));
    }
    if labels.iter().any(|l| l.len() != n) {
        return Err(Error::Data(
            "residual samples must cover all three equations at every time point".into(),
        ));
    }
    let dim = inputs[0].len();
    let degenerate = (0..dim).all(|j| {
        let first = inputs[0][j];
        inputs.iter().all(|row| (row[j] - first).abs() < 1e-12)
    });
    if degenerate {
        return Err(Error::Data(
            "residual features are degenerate: zero variance in every column".into(),
        ));
    }

    let fit_one = |labels: &[f64], offset: u64| -> Result<GpModel> {
        let n = labels.len() as f64;
        let mean = labels.iter().sum::<f64>() / n;
        let var = labels.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / n;
        let init = GpHyperparams::new(var.max(1e-12), 1.0, (1e-4 * var).max(1e-12));
        let budget = FitBudget { seed: budget.seed.wrapping_add(offset), ..*budget };
        GpModel::fit(&inputs, labels, &init, &budget)
    };

    Ok(ResidualModels {
        glucose: fit_one(&labels[0], 0)?,
        biomass: fit_one(&labels[1], 1)?,
        lactate: fit_one(&labels[2], 2)?,
    })
}

fn features_of(state: &State, light: f64) -> [f64; 5] {
    [state.glucose, state.biomass, state.lactate, state.atpase, light]
}

/// Hybrid right-hand side: the nominal kinetics plus the GP posterior means
/// of the glucose, biomass, and lactate model errors. Only the means enter
/// the dynamics; the predictive variances are available through
/// [`GpModel::predict`] but deliberately unused here.
pub fn rhs_hybrid(
    state: &State,
    light: f64,
    params: &KineticParams,
    models: &ResidualModels,
) -> Result<StateDerivative> {
    let base = model::rhs_nominal(state, light, params)?;
    let features = features_of(state, light);
    Ok(StateDerivative {
        glucose: base.glucose + models.glucose.predict_mean(&features)?,
        biomass: base.biomass + models.biomass.predict_mean(&features)?,
        lactate: base.lactate + models.lactate.predict_mean(&features)?,
        atpase: base.atpase,
    })
}

/// Hybrid dynamics for the simulator, with the same glucose-depletion guard
/// as [`NominalDynamics`] applied to the kinetic terms. The learned
/// corrections stay active; far from the training data they revert to zero
/// with the GP prior.
#[derive(Debug, Clone, Copy)]
pub struct HybridDynamics<'a> {
    params: &'a KineticParams,
    models: &'a ResidualModels,
}

impl<'a> HybridDynamics<'a> {
    pub fn new(params: &'a KineticParams, models: &'a ResidualModels) -> Self {
        Self { params, models }
    }
}

impl Dynamics for HybridDynamics<'_> {
    fn derivative(&self, state: &State, light: f64) -> Result<StateDerivative> {
        let clamped = state.clamped_nonnegative();
        let r = NominalDynamics::guarded_rates(state, light, self.params)?;
        let features = features_of(&clamped, light);
        Ok(StateDerivative {
            biomass: r.growth * clamped.biomass + self.models.biomass.predict_mean(&features)?,
            atpase: r.atpase_expression - r.atpase_dilution,
            glucose: -r.glucose_uptake * clamped.biomass
                + self.models.glucose.predict_mean(&features)?,
            lactate: r.lactate_production * clamped.biomass
                + self.models.lactate.predict_mean(&features)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;

    use super::*;
    use crate::sim::{ControlSchedule, DEFAULT_STEP};

    fn nominal() -> KineticParams {
        KineticParams::nominal()
    }

    fn simulate_batch(
        id: &str,
        params: &KineticParams,
        schedule: &ControlSchedule,
        x0: &State,
    ) -> BatchDataset {
        let trajectory =
            sim::integrate(x0, schedule, &NominalDynamics::new(params), DEFAULT_STEP).unwrap();
        let times: Vec<f64> =
            (0..=schedule.tf() as usize).map(|h| h as f64).collect();
        BatchDataset::from_trajectory(id, &trajectory, &times).unwrap()
    }

    fn two_stage_schedule() -> ControlSchedule {
        ControlSchedule::new(0.0, 8.0, 1.0, vec![0.0, 0.0, 0.0, 873.0, 873.0, 873.0, 873.0, 873.0])
            .unwrap()
    }

    #[test]
    fn residual_rate_worked_example() {
        // Measured glucose 2.0 -> 1.0 over 1 h while the re-anchored model
        // reaches 1.5: w_G = (-1.0) - (-0.5) = -0.5.
        assert_eq!(residual_rate(2.0, 1.0, 1.5, 1.0), -0.5);
    }

    #[test]
    fn residuals_vanish_on_self_generated_data() {
        let p = nominal();
        let data = simulate_batch("self", &p, &two_stage_schedule(), &State::new(0.07, 0.0, 4.0, 0.0));
        let residuals = compute_residuals(&data, &p, DEFAULT_STEP).unwrap();
        assert_eq!(residuals.len(), 3 * 8);
        for r in &residuals {
            assert!(
                r.target.abs() <= 1e-6,
                "residual {:?} at t = {} should vanish, got {}",
                r.equation,
                r.time,
                r.target
            );
        }
    }

    #[test]
    fn residuals_expose_inflated_uptake() {
        let mut truth = nominal();
        truth.q_g_max *= 1.10;
        let p = nominal();
        let data = simulate_batch("fast", &truth, &two_stage_schedule(), &State::new(0.07, 0.0, 4.0, 0.0));
        let residuals = compute_residuals(&data, &p, DEFAULT_STEP).unwrap();
        let glucose_residuals: Vec<&ResidualSample> = residuals
            .iter()
            .filter(|r| r.equation == ResidualEquation::Glucose && r.features[0] > 0.05)
            .collect();
        assert!(glucose_residuals.len() >= 4);
        for r in glucose_residuals {
            assert!(
                r.target < 0.0,
                "w_G at t = {} should be negative while glucose remains, got {}",
                r.time,
                r.target
            );
        }
    }

    #[test]
    fn residuals_require_complete_samples() {
        let p = nominal();
        let mut data = simulate_batch("gap", &p, &two_stage_schedule(), &State::new(0.07, 0.0, 4.0, 0.0));
        data.samples[4].biomass = None;
        let err = compute_residuals(&data, &p, DEFAULT_STEP).unwrap_err();
        assert!(matches!(err, Error::Data(ref m) if m.contains("biomass")), "{err}");
    }

    #[test]
    fn atpase_reconstruction_follows_light_history() {
        let p = nominal();
        let schedule = two_stage_schedule();
        let data = simulate_batch("e", &p, &schedule, &State::new(0.07, 0.0, 4.0, 0.0));
        let residuals = compute_residuals(&data, &p, DEFAULT_STEP).unwrap();
        // Dark phase: ATPase stays at the basal level; induced phase: rises.
        let e_at = |t: f64| {
            residuals.iter().find(|r| r.time == t && r.equation == ResidualEquation::Glucose)
                .unwrap()
                .features[3]
        };
        assert!(e_at(0.0) == 0.0);
        assert!(e_at(2.0) < 1e-5);
        assert!(e_at(5.0) > 5.0);
        assert!(e_at(7.0) > e_at(5.0));
    }

    #[test]
    fn zero_targets_train_to_zero_mean() {
        let p = nominal();
        let data = simulate_batch("zero", &p, &two_stage_schedule(), &State::new(0.07, 0.0, 4.0, 0.0));
        let residuals = compute_residuals(&data, &p, DEFAULT_STEP).unwrap();
        let models =
            train_residual_models(&residuals, &FitBudget { starts: 4, max_evals: 120, seed: 0 })
                .unwrap();
        for r in &residuals {
            let (mean, _) = models.glucose.predict(&r.features).unwrap();
            assert!(mean.abs() <= 1e-6, "zero-residual GP mean {mean}");
        }
    }

    #[test]
    fn two_samples_suffice_for_training() {
        let p = nominal();
        let schedule = ControlSchedule::constant(0.0, 2.0, 1.0, 349.0).unwrap();
        let trajectory = sim::integrate(
            &State::new(0.07, 0.0, 4.0, 0.0),
            &schedule,
            &NominalDynamics::new(&p),
            DEFAULT_STEP,
        )
        .unwrap();
        let data =
            BatchDataset::from_trajectory("tiny", &trajectory, &[0.0, 1.0, 2.0]).unwrap();
        let residuals = compute_residuals(&data, &p, DEFAULT_STEP).unwrap();
        assert_eq!(residuals.len(), 6);
        let models =
            train_residual_models(&residuals, &FitBudget { starts: 2, max_evals: 60, seed: 0 })
                .unwrap();
        assert_eq!(models.glucose.n_training(), 2);
    }

    #[test]
    fn hybrid_rhs_with_zero_models_matches_nominal() {
        let p = nominal();
        let data = simulate_batch("zero", &p, &two_stage_schedule(), &State::new(0.07, 0.0, 4.0, 0.0));
        let residuals = compute_residuals(&data, &p, DEFAULT_STEP).unwrap();
        let models =
            train_residual_models(&residuals, &FitBudget { starts: 4, max_evals: 120, seed: 0 })
                .unwrap();
        for r in residuals.iter().filter(|r| r.equation == ResidualEquation::Glucose) {
            let state = State {
                glucose: r.features[0],
                biomass: r.features[1],
                lactate: r.features[2],
                atpase: r.features[3],
            };
            let nominal_d = model::rhs_nominal(&state, r.features[4], &p).unwrap();
            let hybrid_d = rhs_hybrid(&state, r.features[4], &p, &models).unwrap();
            assert_abs_diff_eq!(hybrid_d.glucose, nominal_d.glucose, epsilon = 1e-6);
            assert_abs_diff_eq!(hybrid_d.biomass, nominal_d.biomass, epsilon = 1e-6);
            assert_abs_diff_eq!(hybrid_d.lactate, nominal_d.lactate, epsilon = 1e-6);
            assert_eq!(hybrid_d.atpase, nominal_d.atpase);
        }
    }

    #[test]
    fn hybrid_rhs_reverts_to_nominal_far_from_data() {
        // With a unit length scale (standardized units) the posterior mean
        // reverts to the zero prior outside the training hull, so the
        // hybrid corrections vanish there regardless of the labels.
        let p = nominal();
        let data = simulate_batch("far", &p, &two_stage_schedule(), &State::new(0.07, 0.0, 4.0, 0.0));
        let residuals = compute_residuals(&data, &p, DEFAULT_STEP).unwrap();
        let inputs: Vec<Vec<f64>> = residuals
            .iter()
            .filter(|r| r.equation == ResidualEquation::Glucose)
            .map(|r| r.features.to_vec())
            .collect();
        let labels: Vec<f64> = (0..inputs.len()).map(|i| 0.2 + 0.1 * i as f64).collect();
        let hp = GpHyperparams::new(1.0, 1.0, 1e-6);
        let gp = GpModel::with_hyperparams(&inputs, &labels, hp).unwrap();
        let models = ResidualModels { glucose: gp.clone(), biomass: gp.clone(), lactate: gp };
        let state = State::new(40.0, 500.0, 400.0, 120.0);
        let nominal_d = model::rhs_nominal(&state, 0.0, &p).unwrap();
        let hybrid_d = rhs_hybrid(&state, 0.0, &p, &models).unwrap();
        assert_abs_diff_eq!(hybrid_d.glucose, nominal_d.glucose, epsilon = 1e-9);
        assert_abs_diff_eq!(hybrid_d.biomass, nominal_d.biomass, epsilon = 1e-9);
        assert_abs_diff_eq!(hybrid_d.lactate, nominal_d.lactate, epsilon = 1e-9);
    }

    #[test]
    fn serialization_enforces_shared_features() {
        let p = nominal();
        let data = simulate_batch("io", &p, &two_stage_schedule(), &State::new(0.07, 0.0, 4.0, 0.0));
        let residuals = compute_residuals(&data, &p, DEFAULT_STEP).unwrap();
        let models =
            train_residual_models(&residuals, &FitBudget { starts: 2, max_evals: 80, seed: 0 })
                .unwrap();
        let mut broken = models.to_data();
        broken.biomass.inputs[0][0] += 1.0;
        assert!(matches!(ResidualModels::from_data(broken), Err(Error::Data(_))));

        let json = serde_json::to_string(&models.to_data()).unwrap();
        let restored: ResidualModelsData = serde_json::from_str(&json).unwrap();
        let restored = ResidualModels::from_data(restored).unwrap();
        let probe = &residuals[0].features;
        assert_eq!(
            models.lactate.predict(probe).unwrap(),
            restored.lactate.predict(probe).unwrap()
        );
    }
}
