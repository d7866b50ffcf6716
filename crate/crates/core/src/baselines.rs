//! Comparison methods: a plain Gaussian mixture whose thresholded precision
//! matrices act as graphs, and hard k-means clustering followed by
//! per-cluster graph recovery.
//!
//! Both isolate what joint clustering + graph learning buys: the GMM ties
//! no diffusion structure to its covariances, and k-means clusters before
//! any graph is learned.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::em::{
    canonical_signal_order, kmeans_pp_indices, m_step_covariances, m_step_graphs, m_step_means,
    masses_in_order, weighted_cov_in_order, weighted_mean_in_order,
};
use crate::error::{Error, Result};
use crate::model::{log_sum_exp, FitConfig, Method, ResponsibilityMatrix, SignalSet, WeightedGraph};
use crate::scalar::Real;

/// Precision entries below this fraction of the largest-magnitude precision
/// entry are treated as absent edges. Sample-precision noise off-diagonals
/// scale like 1/sqrt(M) relative to the diagonal, so the cutoff must sit
/// well above that for desk-scale M; 0.1 zeroes noise at M = 10^4 while
/// keeping genuine conditional dependencies.
pub const DEFAULT_PRECISION_THRESHOLD: f64 = 0.1;

/// Labels and per-cluster graphs from one baseline run.
#[derive(Debug, Clone)]
pub struct BaselineResult<T: Real> {
    pub predicted_labels: Vec<usize>,
    pub graphs: Vec<WeightedGraph<T>>,
    pub method: Method,
    /// GMM: final log-likelihood; k-means: negative within-cluster sum of
    /// squares. Higher is better in both cases.
    pub score: T,
}

fn ridge_amount<T: Real>(cov: &DMatrix<T>) -> T {
    let n = T::from_f64_lossy(cov.nrows() as f64);
    let mean_var = cov.trace() / n;
    // Floored so an exactly-zero covariance (duplicate signals) still
    // inverts instead of going NonFinite.
    T::from_f64_lossy(1e-6) * mean_var.max(T::from_f64_lossy(1e-12))
}

fn ridged<T: Real>(cov: &DMatrix<T>) -> DMatrix<T> {
    let mut out = cov.clone();
    let r = ridge_amount(cov);
    for i in 0..out.nrows() {
        out[(i, i)] += r;
    }
    out
}

struct GaussComponent<T: Real> {
    chol: Cholesky<T, Dyn>,
    log_det: T,
}

impl<T: Real> GaussComponent<T> {
    fn new(cov_ridged: DMatrix<T>) -> Result<Self> {
        let chol = Cholesky::new(cov_ridged)
            .ok_or_else(|| Error::non_finite("gmm covariance is not positive definite"))?;
        let log_det = chol
            .l_dirty()
            .diagonal()
            .iter()
            .fold(T::zero(), |a, d| a + d.ln())
            * T::from_f64_lossy(2.0);
        Ok(Self { chol, log_det })
    }

    fn log_density(&self, x: &DVector<T>, mean: &DVector<T>) -> T {
        let d = x - mean;
        let solved = self.chol.solve(&d);
        let quad = d.dot(&solved);
        let n = T::from_f64_lossy(x.len() as f64);
        -(n * T::two_pi().ln() + self.log_det + quad) * T::from_f64_lossy(0.5)
    }
}

/// Precision matrix -> graph: keep off-diagonal magnitudes above
/// `threshold * max |precision entry|`, symmetrized, zero diagonal.
fn precision_graph<T: Real>(precision: &DMatrix<T>, threshold: T) -> Result<WeightedGraph<T>> {
    let n = precision.nrows();
    let cut = threshold * precision.amax();
    let half = T::from_f64_lossy(0.5);
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let mag = (precision[(i, j)].abs() + precision[(j, i)].abs()) * half;
            if mag > cut {
                w[(i, j)] = mag;
                w[(j, i)] = mag;
            }
        }
    }
    WeightedGraph::new(w)
}

/// Full-covariance Gaussian mixture EM. Graphs are the per-component
/// ridge-regularized precisions, thresholded relative to their largest
/// entry.
pub fn gmm_fit<T: Real>(
    signals: &SignalSet<T>,
    cfg: &FitConfig<T>,
    precision_threshold: T,
) -> Result<BaselineResult<T>> {
    cfg.validate()?;
    if signals.n_signals() < cfg.k {
        return Err(Error::InvalidConfig {
            reason: format!(
                "need at least K = {} signals, got {}",
                cfg.k,
                signals.n_signals()
            ),
        });
    }
    if precision_threshold < T::zero() {
        return Err(Error::InvalidConfig {
            reason: format!("precision threshold must be >= 0, got {precision_threshold}"),
        });
    }
    let canon = canonical_signal_order(signals);
    let runs: Vec<Result<GmmRun<T>>> = (0..cfg.n_restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(r as u64);
            gmm_run_once(signals, cfg, &canon, &mut rng)
        })
        .collect();

    let mut best: Option<GmmRun<T>> = None;
    let mut failures = 0;
    let mut last_err = String::new();
    for run in runs {
        match run {
            Ok(res) => {
                let better = best.as_ref().is_none_or(|b| res.4 > b.4);
                if better {
                    best = Some(res);
                }
            }
            Err(e) => {
                failures += 1;
                last_err = e.to_string();
            }
        }
    }
    let (_, _, covs, labels, ll) = best.ok_or(Error::AllRestartsFailed {
        attempts: failures,
        last: last_err,
    })?;

    let graphs: Vec<WeightedGraph<T>> = covs
        .iter()
        .map(|cov| {
            let comp = GaussComponent::new(ridged(cov))?;
            precision_graph(&comp.chol.inverse(), precision_threshold)
        })
        .collect::<Result<_>>()?;
    Ok(BaselineResult {
        predicted_labels: labels,
        graphs,
        method: Method::Gmm,
        score: ll,
    })
}

#[allow(clippy::type_complexity)]
/// One GMM restart: mixture weights, means, covariances, hard labels, and
/// the final log-likelihood.
type GmmRun<T> = (DVector<T>, Vec<DVector<T>>, Vec<DMatrix<T>>, Vec<usize>, T);

fn gmm_run_once<T: Real>(
    signals: &SignalSet<T>,
    cfg: &FitConfig<T>,
    canon: &[usize],
    rng: &mut ChaCha8Rng,
) -> Result<GmmRun<T>> {
    let k = cfg.k;
    let m = signals.n_signals();
    let rel_floor = T::from_f64_lossy(1e-12);

    let mut alphas = DVector::from_element(k, T::one() / T::from_f64_lossy(k as f64));
    let centers = kmeans_pp_indices(signals, k, canon, rng);
    let mut means: Vec<DVector<T>> = centers.iter().map(|&c| signals.signal(c)).collect();
    let global_gamma = ResponsibilityMatrix::new(DMatrix::from_element(m, 1, T::one()))?;
    let global_mean = weighted_mean_in_order(
        &global_gamma,
        signals,
        0,
        T::from_f64_lossy(m as f64),
        canon,
    );
    let global_cov = weighted_cov_in_order(
        &global_gamma,
        signals,
        &global_mean,
        0,
        T::from_f64_lossy(m as f64),
        canon,
    );
    let mut covs: Vec<DMatrix<T>> = vec![global_cov; k];

    let mut prev_ll: Option<T> = None;
    let mut gamma = global_gamma;
    let mut ll = T::zero();
    for _ in 0..cfg.em_max_iters {
        // E-step under the current parameters.
        let comps: Vec<GaussComponent<T>> = covs
            .iter()
            .map(|c| GaussComponent::new(ridged(c)))
            .collect::<Result<_>>()?;
        let mut g = DMatrix::zeros(m, k);
        let mut lls = vec![T::zero(); m];
        for mi in 0..m {
            let x = signals.signal(mi);
            let row: Vec<T> = (0..k)
                .map(|ki| alphas[ki].ln() + comps[ki].log_density(&x, &means[ki]))
                .collect();
            let lse = log_sum_exp(row.iter().copied());
            if !lse.is_finite_real() {
                return Err(Error::non_finite(format!(
                    "gmm posterior underflowed for signal {mi}"
                )));
            }
            for ki in 0..k {
                g[(mi, ki)] = (row[ki] - lse).exp();
            }
            lls[mi] = lse;
        }
        gamma = ResponsibilityMatrix::new(g)?;
        ll = canon.iter().fold(T::zero(), |a, &i| a + lls[i]);

        if let Some(p) = prev_ll {
            let denom = ll.abs().max(p.abs()).max(rel_floor);
            if (ll - p).abs() <= cfg.em_tol * denom {
                break;
            }
        }
        prev_ll = Some(ll);

        // M-step, reviving any component that lost all its mass.
        let masses = masses_in_order(&gamma, canon);
        let threshold = T::from_f64_lossy(1e-10 * m as f64);
        let dead: Vec<usize> = (0..k).filter(|&ki| masses[ki] < threshold).collect();
        let total = masses.iter().fold(T::zero(), |a, b| a + *b);
        alphas = masses.clone() / total;
        for ki in 0..k {
            if dead.contains(&ki) {
                continue;
            }
            means[ki] = weighted_mean_in_order(&gamma, signals, ki, masses[ki], canon);
            covs[ki] = weighted_cov_in_order(&gamma, signals, &means[ki], ki, masses[ki], canon);
        }
        if !dead.is_empty() {
            let max_resp: Vec<T> = (0..m)
                .map(|mi| {
                    (0..k).fold(T::from_f64_lossy(-1.0), |a, ki| {
                        let v = gamma.gamma()[(mi, ki)];
                        if v > a {
                            v
                        } else {
                            a
                        }
                    })
                })
                .collect();
            let mut rank: Vec<usize> = canon.to_vec();
            rank.sort_by(|&a, &b| max_resp[a].partial_cmp(&max_resp[b]).unwrap());
            for (slot, &ki) in dead.iter().enumerate() {
                means[ki] = signals.signal(rank[slot]);
                alphas[ki] = T::one() / T::from_f64_lossy(k as f64);
            }
            let total = alphas.iter().fold(T::zero(), |a, b| a + *b);
            alphas /= total;
        }
    }
    Ok((alphas, means, covs, gamma.hard_labels(), ll))
}

/// Index of the nearest center; distance ties go to the lower cluster
/// index.
fn nearest_center<T: Real>(x: &DVector<T>, centers: &[DVector<T>]) -> usize {
    let mut best = 0;
    let mut best_d = T::from_f64_lossy(f64::INFINITY);
    for (k, c) in centers.iter().enumerate() {
        let d = (x - c).norm_squared();
        if d < best_d {
            best_d = d;
            best = k;
        }
    }
    best
}

/// Hard clustering first (Lloyd's algorithm, k-means++ seeding, restarts),
/// then the standard graph pipeline on each cluster: responsibility-
/// weighted covariance of the hard assignment, log, sparse solve.
pub fn kmeans_then_graphs<T: Real>(
    signals: &SignalSet<T>,
    cfg: &FitConfig<T>,
) -> Result<BaselineResult<T>> {
    cfg.validate()?;
    if signals.n_signals() < cfg.k {
        return Err(Error::InvalidConfig {
            reason: format!(
                "need at least K = {} signals, got {}",
                cfg.k,
                signals.n_signals()
            ),
        });
    }
    let canon = canonical_signal_order(signals);
    let runs: Vec<(Vec<usize>, T)> = (0..cfg.n_restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(r as u64);
            lloyd_once(signals, cfg, &canon, &mut rng)
        })
        .collect();
    let (labels, wcss) = runs
        .into_iter()
        .reduce(|best, cur| if cur.1 < best.1 { cur } else { best })
        .expect("n_restarts >= 1");

    // Shared code path with the EM graph update, so hard ground-truth
    // labels reproduce m_step_graphs bit for bit.
    let gamma = ResponsibilityMatrix::from_hard_labels(&labels, cfg.k)?;
    let means = m_step_means(&gamma, signals)?;
    let covs = m_step_covariances(&gamma, signals, &means)?;
    let graphs = m_step_graphs(&covs, cfg.tau, &cfg.fista, cfg.eig_floor, None)?;
    Ok(BaselineResult {
        predicted_labels: labels,
        graphs,
        method: Method::KmeansGl,
        score: -wcss,
    })
}

/// One Lloyd run; returns hard labels and the within-cluster sum of
/// squares.
fn lloyd_once<T: Real>(
    signals: &SignalSet<T>,
    cfg: &FitConfig<T>,
    canon: &[usize],
    rng: &mut ChaCha8Rng,
) -> (Vec<usize>, T) {
    let k = cfg.k;
    let m = signals.n_signals();
    let seeds = kmeans_pp_indices(signals, k, canon, rng);
    let mut centers: Vec<DVector<T>> = seeds.iter().map(|&i| signals.signal(i)).collect();
    let mut labels = vec![0usize; m];

    for _ in 0..cfg.em_max_iters {
        let new_labels: Vec<usize> = (0..m)
            .map(|mi| nearest_center(&signals.signal(mi), &centers))
            .collect();

        // Centroid update in canonical order; empty clusters re-seed at the
        // signal farthest from its current center.
        let mut sums: Vec<DVector<T>> = vec![DVector::zeros(signals.n_nodes()); k];
        let mut counts = vec![0usize; k];
        for &mi in canon {
            sums[new_labels[mi]] += signals.data().column(mi);
            counts[new_labels[mi]] += 1;
        }
        for ki in 0..k {
            if counts[ki] > 0 {
                centers[ki] = &sums[ki] / T::from_f64_lossy(counts[ki] as f64);
            } else {
                let far = canon
                    .iter()
                    .copied()
                    .fold((canon[0], T::from_f64_lossy(-1.0)), |acc, mi| {
                        let x = signals.signal(mi);
                        let d = (&x - &centers[new_labels[mi]]).norm_squared();
                        if d > acc.1 {
                            (mi, d)
                        } else {
                            acc
                        }
                    })
                    .0;
                centers[ki] = signals.signal(far);
            }
        }
        let stable = new_labels == labels;
        labels = new_labels;
        if stable {
            break;
        }
    }
    let wcss = canon.iter().fold(T::zero(), |a, &mi| {
        a + (signals.signal(mi) - &centers[labels[mi]]).norm_squared()
    });
    (labels, wcss)
}
