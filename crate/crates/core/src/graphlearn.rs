//! Sparse graph recovery from a log-covariance estimate.
//!
//! Solves, for one cluster,
//!
//! ```text
//! minimize  ‖log_cov + 2 tau L(W)‖_F^2 + beta * sum_ij W_ij
//! over      W in { W >= 0 off-diagonal, W = W^T, diag(W) = 0 }
//! ```
//!
//! with FISTA. The smooth term is convex in `W` because `L` is linear, and
//! the constraint set is a closed convex cone whose projection composes
//! exactly with l1 soft-thresholding (both act elementwise on the
//! nonnegative orthant).

use nalgebra::DMatrix;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{FistaConfig, StepRule, WeightedGraph};
use crate::scalar::Real;

/// One graph-recovery instance: the log of a cluster covariance, the
/// diffusion time, and the sparsity weight.
#[derive(Debug, Clone)]
pub struct GraphLearnProblem<T: Real> {
    log_cov: DMatrix<T>,
    tau: T,
    beta: T,
}

/// Laplacian of a raw (not yet validated) weight matrix.
fn raw_laplacian<T: Real>(w: &DMatrix<T>) -> DMatrix<T> {
    let n = w.nrows();
    let mut l = -w.clone();
    for i in 0..n {
        let deg = w.row(i).iter().fold(T::zero(), |a, x| a + *x);
        l[(i, i)] = deg - w[(i, i)];
    }
    l
}

impl<T: Real> GraphLearnProblem<T> {
    pub fn new(log_cov: DMatrix<T>, tau: T, beta: T) -> Result<Self> {
        let n = log_cov.nrows();
        if log_cov.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: "graph-recovery log_cov".into(),
                expected: n,
                found: log_cov.ncols(),
            });
        }
        if log_cov.iter().any(|x| !x.is_finite_real()) {
            return Err(Error::non_finite("graph-recovery log_cov"));
        }
        let mut asym = T::zero();
        let mut scale = T::one();
        for i in 0..n {
            for j in 0..n {
                let d = (log_cov[(i, j)] - log_cov[(j, i)]).abs();
                if d > asym {
                    asym = d;
                }
                let a = log_cov[(i, j)].abs();
                if a > scale {
                    scale = a;
                }
            }
        }
        if asym > T::from_f64_lossy(1e-10) * scale {
            return Err(Error::InvalidGraph {
                reason: format!("log_cov asymmetric by {asym}"),
            });
        }
        if tau <= T::zero() {
            return Err(Error::InvalidConfig {
                reason: format!("tau must be > 0, got {tau}"),
            });
        }
        if beta < T::zero() {
            return Err(Error::InvalidConfig {
                reason: format!("beta must be >= 0, got {beta}"),
            });
        }
        Ok(Self { log_cov, tau, beta })
    }

    pub fn n(&self) -> usize {
        self.log_cov.nrows()
    }

    pub fn log_cov(&self) -> &DMatrix<T> {
        &self.log_cov
    }

    pub fn tau(&self) -> T {
        self.tau
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    /// `log_cov + 2 tau L(W)`.
    fn residual(&self, w: &DMatrix<T>) -> DMatrix<T> {
        let two_tau = self.tau + self.tau;
        &self.log_cov + raw_laplacian(w) * two_tau
    }

    /// Full objective `‖log_cov + 2 tau L(W)‖_F^2 + beta * sum_ij W_ij`.
    pub fn objective(&self, w: &DMatrix<T>) -> T {
        let r = self.residual(w);
        let smooth = r.iter().fold(T::zero(), |a, x| a + *x * *x);
        let l1 = w.iter().fold(T::zero(), |a, x| a + *x);
        smooth + self.beta * l1
    }

    /// Gradient of the smooth term on the subspace of symmetric
    /// zero-diagonal matrices.
    ///
    /// Parameterization: each edge is one free parameter `w_ij = w_ji`
    /// (i < j), and the returned matrix `G` is its gradient under the
    /// Frobenius inner product, i.e. the derivative of the objective along
    /// the tied-pair direction `E_ij + E_ji` equals `2 G_ij`. The
    /// finite-difference tests below pin this convention.
    pub fn smooth_gradient(&self, w: &DMatrix<T>) -> DMatrix<T> {
        let r = self.residual(w);
        let n = self.n();
        let two_tau = self.tau + self.tau;
        let mut g = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    g[(i, j)] = two_tau * (r[(i, i)] + r[(j, j)] - r[(i, j)] - r[(j, i)]);
                }
            }
        }
        g
    }

    /// Largest eigenvalue of the (PSD, self-adjoint) linear part of the
    /// smooth gradient, estimated by power iteration. `None` when the
    /// iteration degenerates (no free parameters, or a zero start vector).
    fn lipschitz_estimate(&self) -> Option<T> {
        let n = self.n();
        if n < 2 {
            return None;
        }
        let g0 = self.smooth_gradient(&DMatrix::zeros(n, n));
        let linear = |v: &DMatrix<T>| self.smooth_gradient(v) - &g0;

        let mut rng = ChaCha8Rng::seed_from_u64(0x9e37_79b9_7f4a_7c15);
        let mut v = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let x = T::from_f64_lossy(rng.random::<f64>() + 0.1);
                v[(i, j)] = x;
                v[(j, i)] = x;
            }
        }
        let mut lambda = T::zero();
        for _ in 0..50 {
            let av = linear(&v);
            let norm = av.iter().fold(T::zero(), |a, x| a + *x * *x).sqrt();
            if norm <= T::zero() || !norm.is_finite_real() {
                return None;
            }
            lambda = v.iter().zip(av.iter()).fold(T::zero(), |a, (x, y)| a + *x * *y);
            v = av / norm;
        }
        if lambda.is_finite_real() && lambda > T::zero() {
            Some(lambda)
        } else {
            None
        }
    }
}

/// Project onto the feasible set and soft-threshold in one pass:
/// symmetrize, zero the diagonal, then `max(0, w - threshold)` elementwise.
///
/// Exact prox of `threshold * ‖·‖_1 + indicator(feasible set)`: on the
/// nonnegative orthant, shrinkage and projection commute.
pub fn prox_l1_feasible<T: Real>(w: &DMatrix<T>, threshold: T) -> DMatrix<T> {
    let n = w.nrows();
    let half = T::from_f64_lossy(0.5);
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = (w[(i, j)] + w[(j, i)]) * half;
            let v = avg - threshold;
            let v = if v > T::zero() { v } else { T::zero() };
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

/// FISTA internals: the iterate, the momentum point, and the scalar driving
/// the momentum weight.
#[derive(Debug, Clone)]
pub struct FistaState<T: Real> {
    pub w: DMatrix<T>,
    pub y: DMatrix<T>,
    pub t: T,
    pub iteration: usize,
    pub history: Vec<T>,
}

/// Output of [`solve`]: the recovered graph plus convergence bookkeeping.
#[derive(Debug, Clone)]
pub struct FistaSolution<T: Real> {
    pub graph: WeightedGraph<T>,
    pub objective: T,
    pub iterations: usize,
    /// False when the iteration budget ran out before the objective
    /// stabilized; the best iterate seen is still returned.
    pub converged: bool,
    pub history: Vec<T>,
}

fn frob_sq<T: Real>(m: &DMatrix<T>) -> T {
    m.iter().fold(T::zero(), |a, x| a + *x * *x)
}

/// Minimize the graph-recovery objective with FISTA, starting from `init`.
///
/// Momentum restarts (t reset to 1, step retaken from the previous iterate)
/// whenever a step would increase the objective, so the recorded history is
/// non-increasing whenever the step size is within the Lipschitz bound. The
/// best iterate seen is returned even when `max_iters` runs out.
pub fn solve<T: Real>(
    p: &GraphLearnProblem<T>,
    init: &DMatrix<T>,
    cfg: &FistaConfig<T>,
) -> Result<FistaSolution<T>> {
    cfg.validate()?;
    let n = p.n();
    if init.nrows() != n || init.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "fista init".into(),
            expected: n,
            found: init.nrows(),
        });
    }

    let w0 = prox_l1_feasible(init, T::zero());
    let f0 = p.objective(&w0);
    if !f0.is_finite_real() {
        return Err(Error::non_finite("fista objective at init"));
    }
    if n < 2 {
        return Ok(FistaSolution {
            graph: WeightedGraph::new(w0)?,
            objective: f0,
            iterations: 0,
            converged: true,
            history: vec![f0],
        });
    }

    // Step size: 1/L from power iteration (padded, since the estimate
    // approaches L from below), or adaptive halving.
    let mut backtrack = matches!(cfg.step_rule, StepRule::Backtracking);
    let mut step = match cfg.step_rule {
        StepRule::PowerIteration => match p.lipschitz_estimate() {
            Some(l) => T::one() / (l * T::from_f64_lossy(1.02)),
            None => {
                backtrack = true;
                T::one()
            }
        },
        StepRule::Backtracking => T::one(),
    };

    let mut state = FistaState {
        w: w0.clone(),
        y: w0,
        t: T::one(),
        iteration: 0,
        history: vec![f0],
    };
    let mut f_cur = f0;
    let mut best_w = state.w.clone();
    let mut best_f = f0;
    let mut converged = false;
    let window = 10;
    let rel_floor = T::from_f64_lossy(1e-12);

    // One proximal step from `point`; with backtracking the step shrinks
    // until the quadratic upper bound holds.
    let prox_step = |point: &DMatrix<T>, step: &mut T| -> Result<(DMatrix<T>, T)> {
        let g = p.smooth_gradient(point);
        let f_point = p.objective(point) - p.beta() * point.iter().fold(T::zero(), |a, x| a + *x);
        loop {
            let z = prox_l1_feasible(&(point - &g * *step), *step * p.beta());
            let f_z = p.objective(&z);
            if !f_z.is_finite_real() {
                return Err(Error::non_finite("fista objective"));
            }
            if !backtrack {
                return Ok((z, f_z));
            }
            // Smooth-part upper bound f(z) <= f(y) + <g, z-y> + ‖z-y‖²/2s.
            let d = &z - point;
            let lin = g.iter().zip(d.iter()).fold(T::zero(), |a, (x, y)| a + *x * *y);
            let quad = frob_sq(&d) / (*step + *step);
            let beta_l1 = p.beta() * z.iter().fold(T::zero(), |a, x| a + *x);
            if f_z - beta_l1 <= f_point + lin + quad + T::from_f64_lossy(1e-15) {
                return Ok((z, f_z));
            }
            *step *= T::from_f64_lossy(0.5);
            if *step < T::from_f64_lossy(1e-60) {
                return Err(Error::non_finite("fista backtracking step underflow"));
            }
        }
    };

    for iter in 1..=cfg.max_iters {
        let (mut w_next, mut f_next) = prox_step(&state.y, &mut step)?;
        if f_next > f_cur {
            // Momentum overshot: restart from the last iterate.
            state.t = T::one();
            let retaken = prox_step(&state.w, &mut step)?;
            w_next = retaken.0;
            f_next = retaken.1;
        }
        let t_next = (T::one() + (T::one() + T::from_f64_lossy(4.0) * state.t * state.t).sqrt())
            * T::from_f64_lossy(0.5);
        let momentum = (state.t - T::one()) / t_next;
        state.y = &w_next + (&w_next - &state.w) * momentum;
        state.w = w_next;
        state.t = t_next;
        state.iteration = iter;
        f_cur = f_next;
        state.history.push(f_cur);
        if f_cur < best_f {
            best_f = f_cur;
            best_w = state.w.clone();
        }
        if iter >= window {
            let prev = state.history[state.history.len() - 1 - window];
            let denom = if f_cur.abs() > rel_floor { f_cur.abs() } else { rel_floor };
            if (prev - f_cur).abs() <= cfg.tol * denom {
                converged = true;
                break;
            }
        }
    }

    Ok(FistaSolution {
        graph: WeightedGraph::new(best_w)?,
        objective: best_f,
        iterations: state.iteration,
        converged,
        history: state.history,
    })
}

/// Plain projected-gradient descent with a fixed step, used as a slow
/// reference solver in tests.
pub fn projected_gradient_reference<T: Real>(
    p: &GraphLearnProblem<T>,
    init: &DMatrix<T>,
    step: T,
    iters: usize,
) -> DMatrix<T> {
    let mut w = prox_l1_feasible(init, T::zero());
    for _ in 0..iters {
        let g = p.smooth_gradient(&w);
        w = prox_l1_feasible(&(&w - &g * step), step * p.beta());
    }
    w
}
