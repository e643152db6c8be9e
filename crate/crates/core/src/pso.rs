//! Global-best particle swarm minimization over box bounds.
//!
//! Canonical synchronous update with the constriction-equivalent constants
//! (inertia 0.729, cognitive = social = 1.49445). Candidate evaluations run
//! in parallel; every random draw and every best-of reduction happens in a
//! fixed sequential order, so results depend only on the seed.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PsoConfig {
    pub swarm_size: usize,
    pub max_iters: usize,
    pub seed: u64,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
}

impl Default for PsoConfig {
    fn default() -> Self {
        Self {
            swarm_size: 40,
            max_iters: 100,
            seed: 0,
            inertia: 0.729,
            cognitive: 1.49445,
            social: 1.49445,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PsoOutcome {
    pub position: Vec<f64>,
    pub objective: f64,
    /// Best objective after initialization and after each iteration;
    /// non-increasing by construction.
    pub history: Vec<f64>,
    pub evaluations: usize,
}

fn validate_bounds(bounds: &[(f64, f64)]) -> Result<()> {
    if bounds.is_empty() {
        return Err(Error::Config("search space must have at least one dimension".into()));
    }
    for (i, (lo, hi)) in bounds.iter().enumerate() {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Config(format!(
                "bound {i} must satisfy finite lower < upper, got [{lo}, {hi}]"
            )));
        }
    }
    Ok(())
}

/// Minimize `objective` over the box. `warm_starts` positions are injected
/// into the initial swarm (clamped to the bounds) ahead of random ones.
pub fn minimize<F>(
    objective: F,
    bounds: &[(f64, f64)],
    config: &PsoConfig,
    warm_starts: &[Vec<f64>],
) -> Result<PsoOutcome>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    validate_bounds(bounds)?;
    if config.swarm_size == 0 {
        return Err(Error::Config("swarm size must be at least 1".into()));
    }
    if warm_starts.iter().any(|w| w.len() != bounds.len()) {
        return Err(Error::Config("warm start dimension does not match the bounds".into()));
    }
    let dim = bounds.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut positions: Vec<Vec<f64>> = warm_starts
        .iter()
        .take(config.swarm_size)
        .map(|w| {
            w.iter().zip(bounds).map(|(v, (lo, hi))| v.clamp(*lo, *hi)).collect()
        })
        .collect();
    while positions.len() < config.swarm_size {
        positions.push(bounds.iter().map(|(lo, hi)| rng.random_range(*lo..*hi)).collect());
    }
    let mut velocities = vec![vec![0.0; dim]; config.swarm_size];

    let mut costs: Vec<f64> = positions.par_iter().map(|p| objective(p)).collect();
    let mut evaluations = config.swarm_size;

    let mut personal_best = positions.clone();
    let mut personal_cost = costs.clone();
    let mut global = argmin(&personal_cost);
    let mut global_best = personal_best[global].clone();
    let mut global_cost = personal_cost[global];
    let mut history = vec![global_cost];

    for _ in 0..config.max_iters {
        for i in 0..config.swarm_size {
            for d in 0..dim {
                let r1: f64 = rng.random();
                let r2: f64 = rng.random();
                let v = config.inertia * velocities[i][d]
                    + config.cognitive * r1 * (personal_best[i][d] - positions[i][d])
                    + config.social * r2 * (global_best[d] - positions[i][d]);
                let mut x = positions[i][d] + v;
                let (lo, hi) = bounds[d];
                let mut v = v;
                if x < lo {
                    x = lo;
                    v = 0.0;
                } else if x > hi {
                    x = hi;
                    v = 0.0;
                }
                positions[i][d] = x;
                velocities[i][d] = v;
            }
        }
        costs.clear();
        positions.par_iter().map(|p| objective(p)).collect_into_vec(&mut costs);
        evaluations += config.swarm_size;
        for i in 0..config.swarm_size {
            if costs[i] < personal_cost[i] {
                personal_cost[i] = costs[i];
                personal_best[i].clone_from(&positions[i]);
            }
        }
        global = argmin(&personal_cost);
        if personal_cost[global] < global_cost {
            global_cost = personal_cost[global];
            global_best.clone_from(&personal_best[global]);
        }
        history.push(global_cost);
    }

    Ok(PsoOutcome { position: global_best, objective: global_cost, history, evaluations })
}

fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v < values[best] {
            best = i;
        }
    }
    best
}
