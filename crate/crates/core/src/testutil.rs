//! Shared test-only helpers: independent oracles and random instances.
//!
//! Oracles here deliberately avoid the implementation paths they are used to
//! check (Taylor series instead of eigendecompositions, Cholesky instead of
//! spectral inverses, elementwise loops instead of matrix expressions).

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::model::WeightedGraph;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_symmetric(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let raw = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() * 2.0 - 1.0);
    (&raw + raw.transpose()) * 0.5
}

pub fn random_vector(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random::<f64>() * 2.0 - 1.0)
}

/// Random weighted graph with edge probability `p` and weights in [0.1, 1.1).
pub fn random_graph(n: usize, p: f64, rng: &mut ChaCha8Rng) -> WeightedGraph<f64> {
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random::<f64>() < p {
                let v = rng.random::<f64>() + 0.1;
                w[(i, j)] = v;
                w[(j, i)] = v;
            }
        }
    }
    WeightedGraph::new(w).unwrap()
}

/// Truncated-series matrix exponential.
pub fn taylor_expm(a: &DMatrix<f64>, terms: usize) -> DMatrix<f64> {
    let n = a.nrows();
    let mut result = DMatrix::<f64>::identity(n, n);
    let mut term = DMatrix::<f64>::identity(n, n);
    for j in 1..=terms {
        term = (&term * a) / (j as f64);
        result += &term;
    }
    result
}

/// `exp(-2 tau L)` by Taylor scaling-squaring (no eigendecomposition).
pub fn dense_heat_covariance(l: &DMatrix<f64>, tau: f64) -> DMatrix<f64> {
    let mut scaled = l * (-2.0 * tau);
    let mut squarings = 0u32;
    while scaled.norm() > 0.5 {
        scaled /= 2.0;
        squarings += 1;
    }
    let mut cov = taylor_expm(&scaled, 30);
    for _ in 0..squarings {
        cov = &cov * &cov;
    }
    cov
}

/// Multivariate-normal log-density with an explicitly formed covariance,
/// evaluated by Cholesky.
pub fn dense_mvn_log_density(x: &DVector<f64>, mu: &DVector<f64>, cov: DMatrix<f64>) -> f64 {
    let n = x.len();
    let chol = nalgebra::Cholesky::new(cov).expect("oracle covariance is PD");
    let log_det: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
    let diff = x - mu;
    let solved = chol.solve(&diff);
    -(n as f64) / 2.0 * (2.0 * std::f64::consts::PI).ln() - 0.5 * log_det - 0.5 * diff.dot(&solved)
}

/// Heat-kernel Gaussian log-density via the dense oracle path end to end.
pub fn dense_heat_log_density(
    x: &DVector<f64>,
    mu: &DVector<f64>,
    l: &DMatrix<f64>,
    tau: f64,
) -> f64 {
    dense_mvn_log_density(x, mu, dense_heat_covariance(l, tau))
}
