//! Shared fixtures for the integration suites: synthetic batches and an
//! independent dense-linear-algebra oracle for the GP formulas.

use optoferm_core::sim::{self, DEFAULT_STEP};
use optoferm_core::{
    BatchDataset, ControlSchedule, GpHyperparams, KineticParams, NominalDynamics, State,
};

pub fn nominal() -> KineticParams {
    KineticParams::nominal()
}

/// Simulate one batch and sample it hourly, like a measured experiment.
pub fn synthetic_batch(
    id: &str,
    params: &KineticParams,
    level: f64,
    initial_glucose: f64,
    inoculum: f64,
    horizon: f64,
) -> BatchDataset {
    let schedule = ControlSchedule::constant(0.0, horizon, 1.0, level).unwrap();
    let x0 = State::new(inoculum, 0.0, initial_glucose, 0.0);
    let trajectory =
        sim::integrate(&x0, &schedule, &NominalDynamics::new(params), DEFAULT_STEP).unwrap();
    let times: Vec<f64> = (0..=horizon as usize).map(|h| h as f64).collect();
    BatchDataset::from_trajectory(id, &trajectory, &times).unwrap()
}

/// Gaussian elimination with partial pivoting: solves `A x = b` and
/// returns the determinant alongside. Written without any matrix library
/// so it stays independent of the implementation path under test.
pub fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> (Vec<f64>, f64) {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut x = b.to_vec();
    let mut det = 1.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap())
            .unwrap();
        if pivot != col {
            m.swap(col, pivot);
            x.swap(col, pivot);
            det = -det;
        }
        det *= m[col][col];
        for row in (col + 1)..n {
            let f = m[row][col] / m[col][col];
            let (pivot_rows, rest) = m.split_at_mut(row);
            let pivot_row = &pivot_rows[col];
            for (k, cell) in rest[0].iter_mut().enumerate().skip(col) {
                *cell -= f * pivot_row[k];
            }
            x[row] -= f * x[col];
        }
    }
    for col in (0..n).rev() {
        x[col] /= m[col][col];
        for row in 0..col {
            x[row] -= m[row][col] * x[col];
        }
    }
    (x, det)
}

/// Log marginal likelihood through the explicit dense formula
/// (determinant plus solve), the verification route for the
/// factorization-based implementation.
pub fn dense_lml(inputs: &[Vec<f64>], labels: &[f64], hp: &GpHyperparams) -> f64 {
    let n = labels.len();
    let mut k = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            k[i][j] = optoferm_core::gp::kernel(&inputs[i], &inputs[j], hp).unwrap();
        }
        k[i][i] += hp.noise_variance;
    }
    let (alpha, det) = dense_solve(&k, labels);
    let quad: f64 = labels.iter().zip(&alpha).map(|(a, b)| a * b).sum();
    -0.5 * quad - 0.5 * det.ln() - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln()
}
