//! Exact Gaussian-process regression with a squared-exponential kernel.
//!
//! One regressor maps a feature vector to a single output. Training
//! maximizes the log marginal likelihood over the three hyperparameters
//! (signal variance, length scale, noise variance); prediction returns the
//! posterior mean and variance around a zero prior mean. All linear algebra
//! goes through a cached Cholesky factorization of `K + sigma_n^2 I`; the
//! covariance matrix is never inverted explicitly.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kernel and noise hyperparameters `[sigma^2, d, sigma_n^2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpHyperparams {
    /// Signal variance sigma^2 (label units squared).
    pub signal_variance: f64,
    /// Isotropic length scale d (feature units).
    pub length_scale: f64,
    /// Observation noise variance sigma_n^2 (label units squared).
    pub noise_variance: f64,
}

impl GpHyperparams {
    pub fn new(signal_variance: f64, length_scale: f64, noise_variance: f64) -> Self {
        Self { signal_variance, length_scale, noise_variance }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.signal_variance.is_finite() && self.signal_variance > 0.0) {
            return Err(Error::Domain(format!(
                "signal variance must be > 0, got {}",
                self.signal_variance
            )));
        }
        if !(self.length_scale.is_finite() && self.length_scale > 0.0) {
            return Err(Error::Domain(format!(
                "length scale must be > 0, got {}",
                self.length_scale
            )));
        }
        if !(self.noise_variance.is_finite() && self.noise_variance >= 0.0) {
            return Err(Error::Domain(format!(
                "noise variance must be >= 0, got {}",
                self.noise_variance
            )));
        }
        Ok(())
    }
}

/// Budget for the hyperparameter search.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FitBudget {
    /// Number of local searches launched from perturbed starting points.
    pub starts: usize,
    /// Maximum likelihood evaluations per start.
    pub max_evals: usize,
    pub seed: u64,
}

impl Default for FitBudget {
    fn default() -> Self {
        Self { starts: 8, max_evals: 200, seed: 0 }
    }
}

/// Squared-exponential covariance between two feature vectors:
/// `sigma^2 * exp(-|a - b|^2 / (2 d^2))`.
pub fn kernel(a: &[f64], b: &[f64], hp: &GpHyperparams) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Domain(format!(
            "kernel inputs must have the same dimension, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    hp.validate()?;
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(hp.signal_variance * (-sq / (2.0 * hp.length_scale * hp.length_scale)).exp())
}

fn check_training_shapes(inputs: &[Vec<f64>], labels: &[f64]) -> Result<usize> {
    if inputs.is_empty() || labels.is_empty() {
        return Err(Error::Data("training set must not be empty".into()));
    }
    if inputs.len() != labels.len() {
        return Err(Error::Data(format!(
            "training inputs ({}) and labels ({}) must have matching counts",
            inputs.len(),
            labels.len()
        )));
    }
    let dim = inputs[0].len();
    if dim == 0 || inputs.iter().any(|v| v.len() != dim) {
        return Err(Error::Data("training inputs must share one nonzero dimension".into()));
    }
    if inputs.iter().flatten().any(|v| !v.is_finite()) || labels.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("training data must be finite".into()));
    }
    Ok(dim)
}

fn covariance_matrix(inputs: &[Vec<f64>], hp: &GpHyperparams) -> DMatrix<f64> {
    let n = inputs.len();
    let inv_two_d2 = 1.0 / (2.0 * hp.length_scale * hp.length_scale);
    DMatrix::from_fn(n, n, |i, j| {
        let sq: f64 = inputs[i].iter().zip(&inputs[j]).map(|(a, b)| (a - b) * (a - b)).sum();
        hp.signal_variance * (-sq * inv_two_d2).exp()
    })
}

/// Factor `K + (sigma_n^2 + jitter) I`, escalating the jitter from
/// `1e-8 sigma^2` by factors of ten at most three times.
fn cholesky_with_jitter(
    k: &DMatrix<f64>,
    hp: &GpHyperparams,
) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let n = k.nrows();
    let mut jitter = 0.0;
    for attempt in 0..=3 {
        if attempt > 0 {
            jitter = 1e-8 * hp.signal_variance * 10f64.powi(attempt - 1);
        }
        let mut m = k.clone();
        for i in 0..n {
            m[(i, i)] += hp.noise_variance + jitter;
        }
        if let Some(chol) = Cholesky::new(m) {
            return Ok((chol, jitter));
        }
    }
    Err(Error::Numerical(
        "covariance factorization failed even with maximum jitter".into(),
    ))
}

/// Log marginal likelihood of the labels under the GP prior:
/// `-1/2 L^T (K + sigma_n^2 I)^-1 L - 1/2 log|K + sigma_n^2 I| - n/2 log 2pi`.
pub fn log_marginal_likelihood(
    inputs: &[Vec<f64>],
    labels: &[f64],
    hp: &GpHyperparams,
) -> Result<f64> {
    check_training_shapes(inputs, labels)?;
    hp.validate()?;
    let n = labels.len();
    let k = covariance_matrix(inputs, hp);
    let (chol, _) = cholesky_with_jitter(&k, hp)?;
    let y = DVector::from_column_slice(labels);
    let alpha = chol.solve(&y);
    let log_det_half: f64 = chol.l().diagonal().iter().map(|d| d.ln()).sum();
    Ok(-0.5 * y.dot(&alpha) - log_det_half - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln())
}

const LOG_BOUND: f64 = 46.0; // exp(+-46) ~ 1e+-20, wide enough for any fit here

fn theta_to_hp(theta: &[f64; 3]) -> GpHyperparams {
    GpHyperparams {
        signal_variance: theta[0].clamp(-LOG_BOUND, LOG_BOUND).exp(),
        length_scale: theta[1].clamp(-LOG_BOUND, LOG_BOUND).exp(),
        noise_variance: theta[2].clamp(-LOG_BOUND, LOG_BOUND).exp(),
    }
}

/// Nelder-Mead simplex minimization in three dimensions.
fn nelder_mead<F: Fn(&[f64; 3]) -> f64>(
    f: &F,
    x0: [f64; 3],
    spread: f64,
    max_evals: usize,
) -> ([f64; 3], f64) {
    let mut evals = 0usize;
    let eval = move |x: &[f64; 3], evals: &mut usize| {
        *evals += 1;
        f(x)
    };
    let mut simplex: Vec<([f64; 3], f64)> = Vec::with_capacity(4);
    simplex.push((x0, eval(&x0, &mut evals)));
    for i in 0..3 {
        let mut x = x0;
        x[i] += spread;
        simplex.push((x, eval(&x, &mut evals)));
    }
    while evals < max_evals {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
        let centroid = {
            let mut c = [0.0; 3];
            for (x, _) in &simplex[..3] {
                for i in 0..3 {
                    c[i] += x[i] / 3.0;
                }
            }
            c
        };
        let worst = simplex[3];
        let reflect = std::array::from_fn(|i| centroid[i] + (centroid[i] - worst.0[i]));
        let fr = eval(&reflect, &mut evals);
        if fr < simplex[0].1 {
            let expand = std::array::from_fn(|i| centroid[i] + 2.0 * (centroid[i] - worst.0[i]));
            let fe = eval(&expand, &mut evals);
            simplex[3] = if fe < fr { (expand, fe) } else { (reflect, fr) };
        } else if fr < simplex[2].1 {
            simplex[3] = (reflect, fr);
        } else {
            let contract = std::array::from_fn(|i| centroid[i] + 0.5 * (worst.0[i] - centroid[i]));
            let fc = eval(&contract, &mut evals);
            if fc < worst.1 {
                simplex[3] = (contract, fc);
            } else {
                let best = simplex[0].0;
                for entry in simplex.iter_mut().skip(1) {
                    let shrunk = std::array::from_fn(|i| best[i] + 0.5 * (entry.0[i] - best[i]));
                    *entry = (shrunk, eval(&shrunk, &mut evals));
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    simplex[0]
}

/// Maximize the log marginal likelihood over the hyperparameters.
///
/// Multi-start Nelder-Mead in log-space of `(sigma^2, d, sigma_n^2)`; the
/// first start is `init` itself, the rest are seeded perturbations, so the
/// returned likelihood never falls below the initial one. Deterministic for
/// a fixed `budget.seed`.
pub fn fit_hyperparameters(
    inputs: &[Vec<f64>],
    labels: &[f64],
    init: &GpHyperparams,
    budget: &FitBudget,
) -> Result<GpHyperparams> {
    check_training_shapes(inputs, labels)?;
    init.validate()?;
    if labels.len() < 2 {
        return Err(Error::Data("hyperparameter fitting needs at least 2 training points".into()));
    }
    if budget.starts == 0 || budget.max_evals == 0 {
        return Err(Error::Config("fit budget must allow at least one evaluation".into()));
    }

    let objective = |theta: &[f64; 3]| -> f64 {
        match log_marginal_likelihood(inputs, labels, &theta_to_hp(theta)) {
            Ok(lml) if lml.is_finite() => -lml,
            _ => f64::INFINITY,
        }
    };

    let noise_floor = (init.noise_variance).max(1e-12 * init.signal_variance);
    let theta0 = [init.signal_variance.ln(), init.length_scale.ln(), noise_floor.ln()];

    let mut rng = ChaCha8Rng::seed_from_u64(budget.seed);
    let mut best: Option<([f64; 3], f64)> = None;
    for start in 0..budget.starts {
        let theta_start = if start == 0 {
            theta0
        } else {
            std::array::from_fn(|i| theta0[i] + rng.random_range(-2.0..2.0))
        };
        let (theta, value) = nelder_mead(&objective, theta_start, 0.7, budget.max_evals);
        if value.is_finite() && best.is_none_or(|(_, b)| value < b) {
            best = Some((theta, value));
        }
    }
    match best {
        Some((theta, _)) => Ok(theta_to_hp(&theta)),
        None => Err(Error::Numerical("all hyperparameter starts failed factorization".into())),
    }
}

/// Serializable form of a trained regressor: standardization constants,
/// raw training inputs, labels, and hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GpModelData {
    pub feature_means: Vec<f64>,
    pub feature_scales: Vec<f64>,
    pub inputs: Vec<Vec<f64>>,
    pub labels: Vec<f64>,
    pub hyperparams: GpHyperparams,
}

/// A trained Gaussian-process regressor.
///
/// Features are standardized to zero mean and unit variance over the
/// training set before the kernel sees them (the stored constants are
/// applied again at prediction); the fermentation features mix g/l, VU/g,
/// and photon-flux scales spanning six orders of magnitude, and a single
/// isotropic length scale is meaningless without this. Labels are left
/// untouched, and the prior mean is the zero function: residual targets are
/// approximately zero-mean by construction.
///
/// Immutable after training; safe to share across threads for prediction.
#[derive(Debug, Clone)]
pub struct GpModel {
    feature_means: Vec<f64>,
    feature_scales: Vec<f64>,
    inputs_raw: Vec<Vec<f64>>,
    inputs_std: Vec<Vec<f64>>,
    labels: Vec<f64>,
    hp: GpHyperparams,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

impl GpModel {
    /// Standardize features, optimize hyperparameters from `init`
    /// (interpreted in standardized feature units), and cache the
    /// factorization.
    pub fn fit(
        inputs: &[Vec<f64>],
        labels: &[f64],
        init: &GpHyperparams,
        budget: &FitBudget,
    ) -> Result<Self> {
        check_training_shapes(inputs, labels)?;
        let (means, scales) = standardization_constants(inputs);
        let inputs_std = apply_standardization(inputs, &means, &scales);
        let hp = fit_hyperparameters(&inputs_std, labels, init, budget)?;
        Self::assemble(means, scales, inputs.to_vec(), inputs_std, labels.to_vec(), hp)
    }

    /// Build a model with fixed hyperparameters (standardized feature
    /// units), skipping the likelihood search.
    pub fn with_hyperparams(
        inputs: &[Vec<f64>],
        labels: &[f64],
        hp: GpHyperparams,
    ) -> Result<Self> {
        check_training_shapes(inputs, labels)?;
        hp.validate()?;
        let (means, scales) = standardization_constants(inputs);
        let inputs_std = apply_standardization(inputs, &means, &scales);
        Self::assemble(means, scales, inputs.to_vec(), inputs_std, labels.to_vec(), hp)
    }

    fn assemble(
        feature_means: Vec<f64>,
        feature_scales: Vec<f64>,
        inputs_raw: Vec<Vec<f64>>,
        inputs_std: Vec<Vec<f64>>,
        labels: Vec<f64>,
        hp: GpHyperparams,
    ) -> Result<Self> {
        let k = covariance_matrix(&inputs_std, &hp);
        let (chol, _) = cholesky_with_jitter(&k, &hp)?;
        let alpha = chol.solve(&DVector::from_column_slice(&labels));
        Ok(Self { feature_means, feature_scales, inputs_raw, inputs_std, labels, hp, chol, alpha })
    }

    /// Posterior mean and variance at a test input (raw feature units).
    pub fn predict(&self, features: &[f64]) -> Result<(f64, f64)> {
        if features.len() != self.feature_means.len() {
            return Err(Error::Domain(format!(
                "prediction input has dimension {}, model expects {}",
                features.len(),
                self.feature_means.len()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("prediction input must be finite".into()));
        }
        let z: Vec<f64> = features
            .iter()
            .zip(self.feature_means.iter().zip(&self.feature_scales))
            .map(|(v, (m, s))| (v - m) / s)
            .collect();
        let inv_two_d2 = 1.0 / (2.0 * self.hp.length_scale * self.hp.length_scale);
        let k_star = DVector::from_iterator(
            self.inputs_std.len(),
            self.inputs_std.iter().map(|row| {
                let sq: f64 = row.iter().zip(&z).map(|(a, b)| (a - b) * (a - b)).sum();
                self.hp.signal_variance * (-sq * inv_two_d2).exp()
            }),
        );
        let mean = k_star.dot(&self.alpha);
        let variance = (self.hp.signal_variance - k_star.dot(&self.chol.solve(&k_star))).max(0.0);
        Ok((mean, variance))
    }

    /// Posterior mean only, without the variance solve or any allocation.
    /// This is the hot path for GP-augmented dynamics, where the mean is
    /// evaluated at every integrator stage.
    pub fn predict_mean(&self, features: &[f64]) -> Result<f64> {
        if features.len() != self.feature_means.len() {
            return Err(Error::Domain(format!(
                "prediction input has dimension {}, model expects {}",
                features.len(),
                self.feature_means.len()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("prediction input must be finite".into()));
        }
        let inv_two_d2 = 1.0 / (2.0 * self.hp.length_scale * self.hp.length_scale);
        let mut mean = 0.0;
        for (row, alpha) in self.inputs_std.iter().zip(self.alpha.iter()) {
            let mut sq = 0.0;
            for (j, v) in features.iter().enumerate() {
                let z = (v - self.feature_means[j]) / self.feature_scales[j];
                let d = row[j] - z;
                sq += d * d;
            }
            mean += alpha * self.hp.signal_variance * (-sq * inv_two_d2).exp();
        }
        Ok(mean)
    }

    pub fn hyperparams(&self) -> &GpHyperparams {
        &self.hp
    }

    pub fn n_training(&self) -> usize {
        self.labels.len()
    }

    pub fn training_inputs(&self) -> &[Vec<f64>] {
        &self.inputs_raw
    }

    pub fn training_labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn to_data(&self) -> GpModelData {
        GpModelData {
            feature_means: self.feature_means.clone(),
            feature_scales: self.feature_scales.clone(),
            inputs: self.inputs_raw.clone(),
            labels: self.labels.clone(),
            hyperparams: self.hp,
        }
    }

    /// Rebuild a model from its serialized form, recomputing the cached
    /// factorization with the stored standardization constants.
    pub fn from_data(data: GpModelData) -> Result<Self> {
        check_training_shapes(&data.inputs, &data.labels)?;
        data.hyperparams.validate()?;
        let dim = data.inputs[0].len();
        if data.feature_means.len() != dim || data.feature_scales.len() != dim {
            return Err(Error::Data(
                "standardization constants do not match the feature dimension".into(),
            ));
        }
        if data.feature_scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Data("feature scales must be positive".into()));
        }
        let inputs_std = apply_standardization(&data.inputs, &data.feature_means, &data.feature_scales);
        Self::assemble(
            data.feature_means,
            data.feature_scales,
            data.inputs,
            inputs_std,
            data.labels,
            data.hyperparams,
        )
    }
}

/// Per-column mean and standard deviation; near-constant columns get unit
/// scale so they standardize to zero influence instead of dividing by zero.
fn standardization_constants(inputs: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = inputs.len() as f64;
    let dim = inputs[0].len();
    let mut means = vec![0.0; dim];
    for row in inputs {
        for (m, v) in means.iter_mut().zip(row) {
            *m += v / n;
        }
    }
    let mut scales = vec![0.0; dim];
    for row in inputs {
        for ((s, v), m) in scales.iter_mut().zip(row).zip(&means) {
            *s += (v - m) * (v - m) / n;
        }
    }
    for s in &mut scales {
        *s = s.sqrt();
        if *s < 1e-12 {
            *s = 1.0;
        }
    }
    (means, scales)
}

fn apply_standardization(inputs: &[Vec<f64>], means: &[f64], scales: &[f64]) -> Vec<Vec<f64>> {
    inputs
        .iter()
        .map(|row| {
            row.iter()
                .zip(means.iter().zip(scales))
                .map(|(v, (m, s))| (v - m) / s)
                .collect()
        })
        .collect()
}
