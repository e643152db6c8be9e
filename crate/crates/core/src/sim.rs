//! Fixed-step integration of the fermentation dynamics over a
//! piecewise-constant light schedule, and whole-batch performance metrics.
//!
//! The integrator is classical fourth-order Runge-Kutta with a fixed step.
//! The vector field is mild and input switches are aligned to the step grid,
//! so a fixed step keeps the optimal-control objective smooth in the
//! decision variables; adaptive stepping would gain nothing here.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, KineticParams, State, StateDerivative};

/// Default integration step (h).
pub const DEFAULT_STEP: f64 = 0.01;

/// Relative slack when testing whether one duration divides another.
const DIVISIBILITY_TOL: f64 = 1e-6;

/// Piecewise-constant light input over a batch horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSchedule {
    t0: f64,
    tf: f64,
    interval_width: f64,
    levels: Vec<f64>,
}

impl ControlSchedule {
    /// Build a schedule holding `levels[i]` on the i-th interval of width
    /// `interval_width` starting at `t0`. The number of levels must equal
    /// `ceil((tf - t0) / interval_width)`; the last interval may be shorter.
    pub fn new(t0: f64, tf: f64, interval_width: f64, levels: Vec<f64>) -> Result<Self> {
        if !t0.is_finite() || !tf.is_finite() || tf <= t0 {
            return Err(Error::Config(format!("schedule needs tf > t0, got [{t0}, {tf}]")));
        }
        if !interval_width.is_finite() || interval_width <= 0.0 {
            return Err(Error::Config(format!("interval width must be > 0, got {interval_width}")));
        }
        let expected = Self::interval_count(t0, tf, interval_width);
        if levels.len() != expected {
            return Err(Error::Config(format!(
                "schedule over [{t0}, {tf}] h with {interval_width} h intervals needs {expected} levels, got {}",
                levels.len()
            )));
        }
        if levels.iter().any(|u| !u.is_finite() || *u < 0.0) {
            return Err(Error::Config("every light level must be finite and >= 0".into()));
        }
        Ok(Self { t0, tf, interval_width, levels })
    }

    /// Constant light over the whole horizon, discretized into intervals.
    pub fn constant(t0: f64, tf: f64, interval_width: f64, level: f64) -> Result<Self> {
        let n = Self::interval_count(t0, tf, interval_width);
        Self::new(t0, tf, interval_width, vec![level; n])
    }

    fn interval_count(t0: f64, tf: f64, interval_width: f64) -> usize {
        let ratio = (tf - t0) / interval_width;
        if (ratio - ratio.round()).abs() < 1e-9 {
            ratio.round() as usize
        } else {
            ratio.ceil() as usize
        }
    }

    /// Applied light level at time `t`; times at an interval boundary take
    /// the level of the interval starting there.
    pub fn level_at(&self, t: f64) -> f64 {
        let idx = ((t - self.t0) / self.interval_width).floor();
        let idx = (idx.max(0.0) as usize).min(self.levels.len() - 1);
        self.levels[idx]
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn tf(&self) -> f64 {
        self.tf
    }

    pub fn interval_width(&self) -> f64 {
        self.interval_width
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn n_intervals(&self) -> usize {
        self.levels.len()
    }

    /// Interval boundaries interior to `(a, b)`, in increasing order.
    fn boundaries_within(&self, a: f64, b: f64) -> Vec<f64> {
        let mut out = Vec::new();
        let mut k = ((a - self.t0) / self.interval_width).floor() as i64 + 1;
        loop {
            let t = self.t0 + k as f64 * self.interval_width;
            if t >= b - 1e-12 {
                break;
            }
            if t > a + 1e-12 {
                out.push(t);
            }
            k += 1;
        }
        out
    }
}

/// A right-hand side the integrator can evaluate.
///
/// Implementations are expected to tolerate slightly negative components in
/// intermediate Runge-Kutta stage states (they clamp internally).
pub trait Dynamics: Sync {
    fn derivative(&self, state: &State, light: f64) -> Result<StateDerivative>;
}

impl<F> Dynamics for F
where
    F: Fn(&State, f64) -> Result<StateDerivative> + Sync,
{
    fn derivative(&self, state: &State, light: f64) -> Result<StateDerivative> {
        self(state, light)
    }
}

/// Nominal model dynamics with the glucose-depletion guard.
///
/// Raw rate formulas keep producing lactate at `s_G = 0` through the
/// constant Luedeking-Piret term `m_l`, and Pirt maintenance drives growth
/// negative there. Both are unphysical in a depleted batch, so growth and
/// lactate production are forced to zero whenever glucose is exhausted;
/// the raw formulas are available in [`model::rhs_nominal`].
#[derive(Debug, Clone, Copy)]
pub struct NominalDynamics<'a> {
    params: &'a KineticParams,
}

impl<'a> NominalDynamics<'a> {
    pub fn new(params: &'a KineticParams) -> Self {
        Self { params }
    }

    pub(crate) fn guarded_rates(state: &State, light: f64, params: &KineticParams) -> Result<model::Rates> {
        let clamped = state.clamped_nonnegative();
        let mut rates = model::eval_kinetics(&clamped, light, params)?;
        if clamped.glucose <= 0.0 {
            rates.growth = 0.0;
            rates.lactate_production = 0.0;
        }
        Ok(rates)
    }
}

impl Dynamics for NominalDynamics<'_> {
    fn derivative(&self, state: &State, light: f64) -> Result<StateDerivative> {
        let clamped = state.clamped_nonnegative();
        let r = Self::guarded_rates(state, light, self.params)?;
        Ok(StateDerivative {
            biomass: r.growth * clamped.biomass,
            atpase: r.atpase_expression - r.atpase_dilution,
            glucose: -r.glucose_uptake * clamped.biomass,
            lactate: r.lactate_production * clamped.biomass,
        })
    }
}

/// Simulated batch: one state per step, including both endpoints.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State>,
    pub schedule: ControlSchedule,
}

impl Trajectory {
    pub fn initial_state(&self) -> &State {
        &self.states[0]
    }

    pub fn final_state(&self) -> &State {
        self.states.last().expect("trajectory is never empty")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory is never empty")
    }

    /// State at an arbitrary time inside the horizon, linearly interpolated
    /// between recorded steps. Returns `None` outside `[t0, tf]`.
    pub fn state_at(&self, t: f64) -> Option<State> {
        let (first, last) = (self.times[0], self.final_time());
        if t < first - 1e-9 || t > last + 1e-9 {
            return None;
        }
        let t = t.clamp(first, last);
        let idx = match self.times.binary_search_by(|probe| probe.partial_cmp(&t).unwrap()) {
            Ok(i) => return Some(self.states[i]),
            Err(i) => i,
        };
        let (t0, t1) = (self.times[idx - 1], self.times[idx]);
        let (a, b) = (self.states[idx - 1], self.states[idx]);
        let w = (t - t0) / (t1 - t0);
        Some(State {
            biomass: a.biomass + w * (b.biomass - a.biomass),
            atpase: a.atpase + w * (b.atpase - a.atpase),
            glucose: a.glucose + w * (b.glucose - a.glucose),
            lactate: a.lactate + w * (b.lactate - a.lactate),
        })
    }
}

fn rk4_step<D: Dynamics + ?Sized>(dynamics: &D, state: &State, light: f64, h: f64) -> Result<State> {
    let k1 = dynamics.derivative(state, light)?;
    let k2 = dynamics.derivative(&state.stepped(&k1, h / 2.0), light)?;
    let k3 = dynamics.derivative(&state.stepped(&k2, h / 2.0), light)?;
    let k4 = dynamics.derivative(&state.stepped(&k3, h), light)?;
    Ok(State {
        biomass: state.biomass + h / 6.0 * (k1.biomass + 2.0 * k2.biomass + 2.0 * k3.biomass + k4.biomass),
        atpase: state.atpase + h / 6.0 * (k1.atpase + 2.0 * k2.atpase + 2.0 * k3.atpase + k4.atpase),
        glucose: state.glucose + h / 6.0 * (k1.glucose + 2.0 * k2.glucose + 2.0 * k3.glucose + k4.glucose),
        lactate: state.lactate + h / 6.0 * (k1.lactate + 2.0 * k2.lactate + 2.0 * k3.lactate + k4.lactate),
    })
}

/// Floor negative components at zero after a step.
///
/// Round-off can leave components a hair below zero, and the depletion step
/// overshoots `s_G = 0` by up to one step's worth of uptake; both are
/// snapped to zero so returned trajectories stay physical.
fn clamp_step(state: State) -> State {
    state.clamped_nonnegative()
}

fn check_divisible(whole: f64, part: f64, what: &str) -> Result<usize> {
    let ratio = whole / part;
    if (ratio - ratio.round()).abs() > DIVISIBILITY_TOL * ratio.abs().max(1.0) || ratio.round() < 1.0 {
        return Err(Error::Config(format!(
            "step {part} h must divide {what} ({whole} h) evenly"
        )));
    }
    Ok(ratio.round() as usize)
}

/// Integrate `dynamics` from `x0` over the schedule's full horizon.
///
/// `step` must divide both the interval width and the horizon evenly so
/// input switches land on step boundaries. States are recorded every step.
pub fn integrate<D: Dynamics + ?Sized>(
    x0: &State,
    schedule: &ControlSchedule,
    dynamics: &D,
    step: f64,
) -> Result<Trajectory> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::Config(format!("step must be > 0, got {step}")));
    }
    if !x0.is_finite() || !x0.is_nonnegative() {
        return Err(Error::Domain(format!("initial state must be finite and >= 0, got {x0:?}")));
    }
    let steps_per_interval = check_divisible(schedule.interval_width, step, "the interval width")?;
    let n_steps = check_divisible(schedule.tf - schedule.t0, step, "the horizon")?;

    let mut times = Vec::with_capacity(n_steps + 1);
    let mut states = Vec::with_capacity(n_steps + 1);
    let mut state = *x0;
    times.push(schedule.t0);
    states.push(state);

    for k in 0..n_steps {
        let t = schedule.t0 + k as f64 * step;
        let interval = (k / steps_per_interval).min(schedule.levels.len() - 1);
        let light = schedule.levels[interval];
        let raw = rk4_step(dynamics, &state, light, step)?;
        if !raw.is_finite() {
            return Err(Error::Integration {
                time: t + step,
                detail: "state became non-finite".into(),
            });
        }
        state = clamp_step(raw);
        times.push(schedule.t0 + (k + 1) as f64 * step);
        states.push(state);
    }

    Ok(Trajectory { times, states, schedule: schedule.clone() })
}

/// Advance a state from `t_a` to `t_b` under the schedule, splitting at
/// input switches and adjusting the step per segment so each divides evenly.
/// Used for re-anchored model predictions between measurement times.
pub fn integrate_between<D: Dynamics + ?Sized>(
    x0: &State,
    t_a: f64,
    t_b: f64,
    schedule: &ControlSchedule,
    dynamics: &D,
    step: f64,
) -> Result<State> {
    if t_b <= t_a {
        return Err(Error::Config(format!("need t_b > t_a, got [{t_a}, {t_b}]")));
    }
    let mut state = *x0;
    let mut cursor = t_a;
    let mut boundaries = schedule.boundaries_within(t_a, t_b);
    boundaries.push(t_b);
    for end in boundaries {
        let span = end - cursor;
        let n = (span / step).ceil().max(1.0) as usize;
        let h = span / n as f64;
        let light = schedule.level_at(cursor);
        for i in 0..n {
            let raw = rk4_step(dynamics, &state, light, h)?;
            if !raw.is_finite() {
                return Err(Error::Integration {
                    time: cursor + (i + 1) as f64 * h,
                    detail: "state became non-finite".into(),
                });
            }
            state = clamp_step(raw);
        }
        cursor = end;
    }
    Ok(state)
}

/// Whole-batch performance metrics from trajectory endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchMetrics {
    /// Lactate-on-glucose yield over the batch (g/g); `None` when no
    /// glucose was consumed.
    pub lactate_yield: Option<f64>,
    /// Biomass-on-glucose yield over the batch (g/g); `None` when no
    /// glucose was consumed.
    pub biomass_yield: Option<f64>,
    /// Lactate volumetric productivity over the batch (g/l/h).
    pub productivity: f64,
}

/// Endpoint metrics of a simulated or measured batch.
pub fn batch_metrics(trajectory: &Trajectory) -> Result<BatchMetrics> {
    let t0 = trajectory.times[0];
    let tf = trajectory.final_time();
    if tf <= t0 {
        return Err(Error::Data("degenerate trajectory: tf <= t0".into()));
    }
    let first = trajectory.initial_state();
    let last = trajectory.final_state();
    let consumed = first.glucose - last.glucose;
    let lactate_gain = last.lactate - first.lactate;
    let biomass_gain = last.biomass - first.biomass;
    let (lactate_yield, biomass_yield) = if consumed > 0.0 {
        (Some(lactate_gain / consumed), Some(biomass_gain / consumed))
    } else {
        (None, None)
    };
    Ok(BatchMetrics {
        lactate_yield,
        biomass_yield,
        productivity: lactate_gain / (tf - t0),
    })
}
