//! Expectation-maximization for the heat mixture: alternate posterior
//! responsibilities with mixture-weight, mean, covariance, and graph
//! updates, restarted from several random initializations.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graphlearn::{self, GraphLearnProblem};
use crate::model::{
    log_sum_exp, FistaConfig, FitConfig, HeatMixtureModel, ResponsibilityMatrix, SignalSet,
    WeightedGraph,
};
use crate::scalar::Real;
use crate::spectral::{self, default_eig_floor, sym_logm_psd};

/// A column mass below `1e-10 * M` marks a component as dead.
const EMPTY_MASS_FACTOR: f64 = 1e-10;

/// Best run of [`fit`]: the model plus its convergence trace.
#[derive(Debug, Clone)]
pub struct FitResult<T: Real> {
    pub model: HeatMixtureModel<T>,
    pub responsibilities: ResponsibilityMatrix<T>,
    /// Final observed-data log-likelihood (equals the last history entry).
    pub log_likelihood: T,
    /// One entry per evaluation: the initial model, then each EM update.
    pub log_likelihood_history: Vec<T>,
    /// Number of recorded evaluations (= history length).
    pub n_iterations: usize,
    pub converged: bool,
    /// Index of the winning restart.
    pub restart_index: usize,
    /// Iterations where the log-likelihood dropped by more than rounding
    /// (1e-9 relative). The graph update optimizes a surrogate, so EM
    /// monotonicity is monitored rather than guaranteed.
    pub ll_decrease_count: usize,
    /// Dead components revived during the run.
    pub n_empty_reinits: usize,
    /// Outcome of every restart, winning or not, indexed by restart.
    pub restarts: Vec<RestartReport<T>>,
}

/// Final state of one restart.
#[derive(Debug, Clone, PartialEq)]
pub struct RestartReport<T: Real> {
    /// `None` when the restart failed.
    pub log_likelihood: Option<T>,
    pub converged: bool,
    pub n_iterations: usize,
    pub error: Option<String>,
}

/// Posterior responsibilities `gamma_m(k) ∝ alpha_k N(x_m | mu_k, cov_k)`,
/// computed in log space and row-normalized with log-sum-exp.
pub fn e_step<T: Real>(
    model: &HeatMixtureModel<T>,
    signals: &SignalSet<T>,
) -> Result<ResponsibilityMatrix<T>> {
    posterior(model, signals).map(|(gamma, _)| gamma)
}

/// Shared E-step core: responsibilities plus per-signal log-likelihood
/// terms (so callers control the summation order of the total).
fn posterior<T: Real>(
    model: &HeatMixtureModel<T>,
    signals: &SignalSet<T>,
) -> Result<(ResponsibilityMatrix<T>, Vec<T>)> {
    if model.alphas().iter().any(|a| *a <= T::zero()) {
        return Err(Error::InvalidModel {
            reason: "posterior needs strictly positive mixture weights".into(),
        });
    }
    let log_dens = model.component_log_densities(signals)?;
    let m = signals.n_signals();
    let k = model.k();
    let log_alphas: Vec<T> = model.alphas().iter().map(|a| a.ln()).collect();
    let mut gamma = DMatrix::zeros(m, k);
    let mut lls = Vec::with_capacity(m);
    for mi in 0..m {
        let row: Vec<T> = (0..k)
            .map(|ki| log_alphas[ki] + log_dens[(mi, ki)])
            .collect();
        let lse = log_sum_exp(row.iter().copied());
        if !lse.is_finite_real() {
            return Err(Error::non_finite(format!(
                "posterior underflowed for signal {mi}"
            )));
        }
        for ki in 0..k {
            gamma[(mi, ki)] = (row[ki] - lse).exp();
        }
        lls.push(lse);
    }
    Ok((ResponsibilityMatrix::new(gamma)?, lls))
}

/// Signal indices sorted by vector content.
///
/// Reductions over signals iterate in this order so that results do not
/// depend on the column order of the input (identical columns are
/// interchangeable, so ties need no further rule).
pub(crate) fn canonical_signal_order<T: Real>(signals: &SignalSet<T>) -> Vec<usize> {
    let data = signals.data();
    let mut idx: Vec<usize> = (0..signals.n_signals()).collect();
    idx.sort_by(|&a, &b| {
        for i in 0..data.nrows() {
            match data[(i, a)].partial_cmp(&data[(i, b)]) {
                Some(std::cmp::Ordering::Equal) | None => continue,
                Some(o) => return o,
            }
        }
        std::cmp::Ordering::Equal
    });
    idx
}

pub(crate) fn masses_in_order<T: Real>(gamma: &ResponsibilityMatrix<T>, order: &[usize]) -> DVector<T> {
    let g = gamma.gamma();
    let mut masses = DVector::zeros(gamma.k());
    for &m in order {
        for k in 0..gamma.k() {
            masses[k] += g[(m, k)];
        }
    }
    masses
}

pub(crate) fn weighted_mean_in_order<T: Real>(
    gamma: &ResponsibilityMatrix<T>,
    signals: &SignalSet<T>,
    k: usize,
    mass: T,
    order: &[usize],
) -> DVector<T> {
    let mut acc = DVector::zeros(signals.n_nodes());
    for &m in order {
        acc.axpy(gamma.gamma()[(m, k)], &signals.data().column(m), T::one());
    }
    acc / mass
}

pub(crate) fn weighted_cov_in_order<T: Real>(
    gamma: &ResponsibilityMatrix<T>,
    signals: &SignalSet<T>,
    mean: &DVector<T>,
    k: usize,
    mass: T,
    order: &[usize],
) -> DMatrix<T> {
    let n = signals.n_nodes();
    let mut acc = DMatrix::zeros(n, n);
    for &m in order {
        let d = signals.data().column(m) - mean;
        acc.ger(gamma.gamma()[(m, k)], &d, &d, T::one());
    }
    acc / mass
}

fn empty_mass_threshold<T: Real>(n_signals: usize) -> T {
    T::from_f64_lossy(EMPTY_MASS_FACTOR * n_signals as f64)
}

/// Mixture weights: column means of the responsibilities.
pub fn m_step_weights<T: Real>(gamma: &ResponsibilityMatrix<T>) -> DVector<T> {
    let order: Vec<usize> = (0..gamma.n_signals()).collect();
    let masses = masses_in_order(gamma, &order);
    let total = masses.iter().fold(T::zero(), |a, b| a + *b);
    masses / total
}

/// Responsibility-weighted signal means, one per component.
pub fn m_step_means<T: Real>(
    gamma: &ResponsibilityMatrix<T>,
    signals: &SignalSet<T>,
) -> Result<Vec<DVector<T>>> {
    check_gamma_signals(gamma, signals)?;
    let order: Vec<usize> = (0..gamma.n_signals()).collect();
    let masses = masses_in_order(gamma, &order);
    let threshold = empty_mass_threshold(gamma.n_signals());
    (0..gamma.k())
        .map(|k| {
            if masses[k] < threshold {
                return Err(Error::EmptyCluster { component: k });
            }
            Ok(weighted_mean_in_order(gamma, signals, k, masses[k], &order))
        })
        .collect()
}

/// Responsibility-weighted covariances around the given means. PSD by
/// construction (nonnegative combinations of outer products).
pub fn m_step_covariances<T: Real>(
    gamma: &ResponsibilityMatrix<T>,
    signals: &SignalSet<T>,
    means: &[DVector<T>],
) -> Result<Vec<DMatrix<T>>> {
    check_gamma_signals(gamma, signals)?;
    if means.len() != gamma.k() {
        return Err(Error::DimensionMismatch {
            context: "m_step_covariances means".into(),
            expected: gamma.k(),
            found: means.len(),
        });
    }
    let order: Vec<usize> = (0..gamma.n_signals()).collect();
    let masses = masses_in_order(gamma, &order);
    let threshold = empty_mass_threshold(gamma.n_signals());
    (0..gamma.k())
        .map(|k| {
            if masses[k] < threshold {
                return Err(Error::EmptyCluster { component: k });
            }
            Ok(weighted_cov_in_order(
                gamma, signals, &means[k], k, masses[k], &order,
            ))
        })
        .collect()
}

fn check_gamma_signals<T: Real>(
    gamma: &ResponsibilityMatrix<T>,
    signals: &SignalSet<T>,
) -> Result<()> {
    if gamma.n_signals() != signals.n_signals() {
        return Err(Error::DimensionMismatch {
            context: "responsibilities vs signals".into(),
            expected: signals.n_signals(),
            found: gamma.n_signals(),
        });
    }
    Ok(())
}

/// Per-component graph recovery: log each covariance, then solve the sparse
/// Laplacian-fitting problem, warm-started from the previous graphs when
/// given.
pub fn m_step_graphs<T: Real>(
    covariances: &[DMatrix<T>],
    tau: T,
    fista: &FistaConfig<T>,
    eig_floor: Option<T>,
    warm_starts: Option<&[WeightedGraph<T>]>,
) -> Result<Vec<WeightedGraph<T>>> {
    if let Some(ws) = warm_starts {
        if ws.len() != covariances.len() {
            return Err(Error::DimensionMismatch {
                context: "m_step_graphs warm starts".into(),
                expected: covariances.len(),
                found: ws.len(),
            });
        }
    }
    covariances
        .iter()
        .enumerate()
        .map(|(k, cov)| {
            let floor = match eig_floor {
                Some(f) => f,
                None => default_eig_floor(cov)?,
            };
            let log_cov = sym_logm_psd(cov, floor)?;
            let problem = GraphLearnProblem::new(log_cov, tau, fista.beta)?;
            let init = match warm_starts {
                Some(ws) => ws[k].weights().clone(),
                None => DMatrix::zeros(cov.nrows(), cov.nrows()),
            };
            Ok(graphlearn::solve(&problem, &init, fista)?.graph)
        })
        .collect()
}

/// Run EM to convergence from `cfg.n_restarts` seeded random
/// initializations (independent RNG streams, run in parallel) and keep the
/// run with the highest final log-likelihood; ties go to the lowest restart
/// index.
pub fn fit<T: Real>(signals: &SignalSet<T>, cfg: &FitConfig<T>) -> Result<FitResult<T>> {
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
    let runs: Vec<Result<FitResult<T>>> = (0..cfg.n_restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(r as u64);
            let init = random_init(signals, cfg, &canon, &mut rng)?;
            em_loop(signals, cfg, init, &canon, r)
        })
        .collect();

    let mut best: Option<FitResult<T>> = None;
    let mut reports = Vec::with_capacity(runs.len());
    let mut last_err = String::new();
    let mut failures = 0;
    for run in runs {
        match run {
            Ok(res) => {
                reports.push(RestartReport {
                    log_likelihood: Some(res.log_likelihood),
                    converged: res.converged,
                    n_iterations: res.n_iterations,
                    error: None,
                });
                let better = match &best {
                    None => true,
                    Some(b) => res.log_likelihood > b.log_likelihood,
                };
                if better {
                    best = Some(res);
                }
            }
            Err(e) => {
                failures += 1;
                last_err = e.to_string();
                reports.push(RestartReport {
                    log_likelihood: None,
                    converged: false,
                    n_iterations: 0,
                    error: Some(last_err.clone()),
                });
            }
        }
    }
    let mut best = best.ok_or(Error::AllRestartsFailed {
        attempts: failures,
        last: last_err,
    })?;
    best.restarts = reports;
    Ok(best)
}

/// One EM run from an explicit initial model (no restarts). Useful for
/// equivariance checks and for resuming from a known state.
pub fn fit_from<T: Real>(
    signals: &SignalSet<T>,
    cfg: &FitConfig<T>,
    init: HeatMixtureModel<T>,
) -> Result<FitResult<T>> {
    cfg.validate()?;
    if init.k() != cfg.k || init.n_nodes() != signals.n_nodes() {
        return Err(Error::InvalidConfig {
            reason: format!(
                "initial model is K = {}, {} nodes; expected K = {}, {} nodes",
                init.k(),
                init.n_nodes(),
                cfg.k,
                signals.n_nodes()
            ),
        });
    }
    let canon = canonical_signal_order(signals);
    let mut res = em_loop(signals, cfg, init, &canon, 0)?;
    res.restarts = vec![RestartReport {
        log_likelihood: Some(res.log_likelihood),
        converged: res.converged,
        n_iterations: res.n_iterations,
        error: None,
    }];
    Ok(res)
}

/// Uniform mixture weights, k-means++-seeded means, and sparse random
/// feasible graphs. Candidate scans run in canonical signal order so the
/// chosen mean vectors do not depend on column order.
fn random_init<T: Real>(
    signals: &SignalSet<T>,
    cfg: &FitConfig<T>,
    canon: &[usize],
    rng: &mut ChaCha8Rng,
) -> Result<HeatMixtureModel<T>> {
    let k = cfg.k;
    let n = signals.n_nodes();
    let alphas = DVector::from_element(k, T::one() / T::from_f64_lossy(k as f64));
    let centers = kmeans_pp_indices(signals, k, canon, rng);
    let means: Vec<DVector<T>> = centers.iter().map(|&c| signals.signal(c)).collect();
    let graphs: Vec<WeightedGraph<T>> = (0..k)
        .map(|_| random_feasible_graph(n, rng))
        .collect::<Result<_>>()?;
    HeatMixtureModel::new(alphas, means, graphs, cfg.tau)
}

/// Each edge present with probability 1/2, weight Uniform(0, 1), then the
/// whole matrix rescaled so the Laplacian has unit spectral radius (the
/// same convention as the synthetic generator). Without the rescale the
/// initial heat kernels are arbitrarily contractive as n grows, and the
/// first E-step degenerates into a lottery over near-zero densities
/// instead of a mean-driven split.
fn random_feasible_graph<T: Real>(n: usize, rng: &mut ChaCha8Rng) -> Result<WeightedGraph<T>> {
    let mut w = DMatrix::zeros(n, n);
    let mut any = false;
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random::<f64>() < 0.5 {
                let v = T::from_f64_lossy(rng.random::<f64>());
                w[(i, j)] = v;
                w[(j, i)] = v;
                any = true;
            }
        }
    }
    let graph = WeightedGraph::new(w)?;
    if !any {
        return Ok(graph);
    }
    let eig = spectral::sym_eig(&graph.laplacian())?;
    let lambda_max = eig.eigenvalues[n - 1];
    if lambda_max > T::zero() {
        return WeightedGraph::new(graph.weights() / lambda_max);
    }
    Ok(graph)
}

/// k-means++ seeding: squared-distance-weighted draws, scanning candidates
/// in the supplied order. Returns `k` signal indices.
pub(crate) fn kmeans_pp_indices<T: Real>(
    signals: &SignalSet<T>,
    k: usize,
    order: &[usize],
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    let data = signals.data();
    let m = order.len();
    let dist2 = |a: usize, b: usize| {
        let d = data.column(a) - data.column(b);
        d.iter().fold(T::zero(), |acc, x| acc + *x * *x)
    };
    let first = order[rng.random_range(0..m)];
    let mut chosen = vec![first];
    let mut d2: Vec<T> = order.iter().map(|&i| dist2(i, first)).collect();
    while chosen.len() < k {
        let total = d2.iter().fold(T::zero(), |a, b| a + *b);
        let next = if total > T::zero() {
            let u = T::from_f64_lossy(rng.random::<f64>()) * total;
            let mut cum = T::zero();
            let mut pick = None;
            for (pos, &w) in d2.iter().enumerate() {
                cum += w;
                if cum >= u && w > T::zero() {
                    pick = Some(order[pos]);
                    break;
                }
            }
            pick.unwrap_or_else(|| {
                // Float dust pushed u past the last positive weight.
                let pos = d2.iter().rposition(|w| *w > T::zero()).unwrap();
                order[pos]
            })
        } else {
            // Every remaining signal coincides with a center; take the first
            // unchosen one to keep the count at k.
            *order.iter().find(|i| !chosen.contains(i)).unwrap()
        };
        chosen.push(next);
        for (pos, &i) in order.iter().enumerate() {
            let d = dist2(i, next);
            if d < d2[pos] {
                d2[pos] = d;
            }
        }
    }
    chosen
}

fn sum_in_order<T: Real>(values: &[T], order: &[usize]) -> T {
    order.iter().fold(T::zero(), |a, &i| a + values[i])
}

/// The EM loop proper. Each pass evaluates the current model (responsibility
/// matrix + log-likelihood), checks convergence, then updates weights,
/// means, and (unless frozen) covariances and graphs.
fn em_loop<T: Real>(
    signals: &SignalSet<T>,
    cfg: &FitConfig<T>,
    init: HeatMixtureModel<T>,
    canon: &[usize],
    restart_index: usize,
) -> Result<FitResult<T>> {
    let m_count = signals.n_signals();
    let rel_floor = T::from_f64_lossy(1e-12);
    let decrease_tol = T::from_f64_lossy(1e-9);

    let mut model = init;
    let (mut gamma, lls) = posterior(&model, signals)?;
    let mut ll = sum_in_order(&lls, canon);
    let mut history = vec![ll];
    let mut converged = false;
    let mut ll_decrease_count = 0;
    let mut n_empty_reinits = 0;

    for _ in 0..cfg.em_max_iters {
        let masses = masses_in_order(&gamma, canon);
        let threshold = empty_mass_threshold(m_count);
        let dead: Vec<usize> = (0..cfg.k).filter(|&k| masses[k] < threshold).collect();

        let total_mass = masses.iter().fold(T::zero(), |a, b| a + *b);
        let mut alphas = masses.clone() / total_mass;
        let mut means: Vec<Option<DVector<T>>> = (0..cfg.k)
            .map(|k| {
                if dead.contains(&k) {
                    None
                } else {
                    Some(weighted_mean_in_order(&gamma, signals, k, masses[k], canon))
                }
            })
            .collect();

        if !dead.is_empty() {
            n_empty_reinits += dead.len();
            // Revive each dead component at a poorly-explained signal: rank
            // by max responsibility ascending and hand out distinct signals.
            // The stable sort starts from canonical order so ties cannot
            // leak column order into the result.
            let max_resp: Vec<T> = (0..m_count)
                .map(|m| {
                    (0..cfg.k).fold(T::from_f64_lossy(-1.0), |a, k| {
                        let g = gamma.gamma()[(m, k)];
                        if g > a {
                            g
                        } else {
                            a
                        }
                    })
                })
                .collect();
            let mut rank_canon: Vec<usize> = canon.to_vec();
            rank_canon.sort_by(|&a, &b| max_resp[a].partial_cmp(&max_resp[b]).unwrap());
            for (slot, &k) in dead.iter().enumerate() {
                let m_star = rank_canon[slot];
                means[k] = Some(signals.signal(m_star));
                alphas[k] = T::one() / T::from_f64_lossy(cfg.k as f64);
            }
            let total = alphas.iter().fold(T::zero(), |a, b| a + *b);
            alphas /= total;
        }
        let means: Vec<DVector<T>> = means.into_iter().map(|m| m.unwrap()).collect();

        let graphs: Vec<WeightedGraph<T>> = if cfg.update_graphs {
            (0..cfg.k)
                .map(|k| {
                    if dead.contains(&k) {
                        // No mass to estimate a covariance from; keep the
                        // previous graph until the component re-collects.
                        return Ok(model.graphs()[k].clone());
                    }
                    let cov =
                        weighted_cov_in_order(&gamma, signals, &means[k], k, masses[k], canon);
                    let floor = match cfg.eig_floor {
                        Some(f) => f,
                        None => default_eig_floor(&cov)?,
                    };
                    let log_cov = sym_logm_psd(&cov, floor)?;
                    let problem = GraphLearnProblem::new(log_cov, cfg.tau, cfg.fista.beta)?;
                    let init = model.graphs()[k].weights().clone();
                    Ok(graphlearn::solve(&problem, &init, &cfg.fista)?.graph)
                })
                .collect::<Result<_>>()?
        } else {
            model.graphs().to_vec()
        };

        model = HeatMixtureModel::new(alphas, means, graphs, cfg.tau)?;
        let (next_gamma, lls) = posterior(&model, signals)?;
        gamma = next_gamma;
        let new_ll = sum_in_order(&lls, canon);
        let denom = new_ll.abs().max(ll.abs()).max(rel_floor);
        if new_ll < ll - decrease_tol * denom {
            ll_decrease_count += 1;
        }
        let delta = (new_ll - ll).abs();
        ll = new_ll;
        history.push(ll);
        if delta <= cfg.em_tol * denom {
            converged = true;
            break;
        }
    }

    Ok(FitResult {
        model,
        responsibilities: gamma,
        log_likelihood: ll,
        n_iterations: history.len(),
        log_likelihood_history: history,
        converged,
        restart_index,
        ll_decrease_count,
        n_empty_reinits,
        restarts: Vec::new(),
    })
}
