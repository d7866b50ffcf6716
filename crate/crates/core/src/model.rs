//! Core domain types: graphs, signal sets, mixture parameters,
//! responsibilities, fit configuration, plus the mixture log-likelihood.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::spectral::HeatLogDensity;

/// Undirected weighted graph stored as a dense weight matrix.
///
/// Valid weights are symmetric, nonnegative off the diagonal, and zero on it.
/// The derived Laplacian `D - W` is then diagonally dominant, hence PSD.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph<T: Real> {
    weights: DMatrix<T>,
}

impl<T: Real> WeightedGraph<T> {
    pub fn new(weights: DMatrix<T>) -> Result<Self> {
        let n = weights.nrows();
        if weights.ncols() != n {
            return Err(Error::InvalidGraph {
                reason: format!("weight matrix is {}x{}, not square", n, weights.ncols()),
            });
        }
        for i in 0..n {
            if weights[(i, i)] != T::zero() {
                return Err(Error::InvalidGraph {
                    reason: format!("nonzero diagonal entry at ({i}, {i})"),
                });
            }
            for j in 0..n {
                let w = weights[(i, j)];
                if !w.is_finite_real() || w < T::zero() {
                    return Err(Error::InvalidGraph {
                        reason: format!("weight at ({i}, {j}) is {w}"),
                    });
                }
                if w != weights[(j, i)] {
                    return Err(Error::InvalidGraph {
                        reason: format!("asymmetric weights at ({i}, {j})"),
                    });
                }
            }
        }
        Ok(Self { weights })
    }

    /// Graph on `n` nodes with no edges.
    pub fn empty(n: usize) -> Self {
        Self {
            weights: DMatrix::zeros(n, n),
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &DMatrix<T> {
        &self.weights
    }

    /// Node degrees (weighted row sums).
    pub fn degrees(&self) -> DVector<T> {
        DVector::from_iterator(
            self.n_nodes(),
            self.weights.row_iter().map(|r| r.iter().fold(T::zero(), |a, w| a + *w)),
        )
    }

    /// Combinatorial Laplacian `D - W`.
    pub fn laplacian(&self) -> DMatrix<T> {
        let n = self.n_nodes();
        let deg = self.degrees();
        let mut l = -self.weights.clone();
        for i in 0..n {
            l[(i, i)] = deg[i];
        }
        l
    }

    /// Number of edges with strictly positive weight.
    pub fn edge_count(&self) -> usize {
        let n = self.n_nodes();
        let mut count = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                if self.weights[(i, j)] > T::zero() {
                    count += 1;
                }
            }
        }
        count
    }
}

/// Observed signals, one per column.
#[derive(Debug, Clone)]
pub struct SignalSet<T: Real> {
    data: DMatrix<T>,
    node_names: Option<Vec<String>>,
    /// Ground-truth cluster per signal; evaluation only, never used by fits.
    labels: Option<Vec<usize>>,
    timestamps: Option<Vec<String>>,
}

impl<T: Real> SignalSet<T> {
    pub fn new(data: DMatrix<T>) -> Result<Self> {
        if data.ncols() == 0 {
            return Err(Error::InvalidModel {
                reason: "signal set needs at least one signal".into(),
            });
        }
        if data.iter().any(|x| !x.is_finite_real()) {
            return Err(Error::non_finite("signal set contains NaN/Inf"));
        }
        Ok(Self {
            data,
            node_names: None,
            labels: None,
            timestamps: None,
        })
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.n_signals() {
            return Err(Error::DimensionMismatch {
                context: "signal labels".into(),
                expected: self.n_signals(),
                found: labels.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_node_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.n_nodes() {
            return Err(Error::DimensionMismatch {
                context: "node names".into(),
                expected: self.n_nodes(),
                found: names.len(),
            });
        }
        self.node_names = Some(names);
        Ok(self)
    }

    pub fn with_timestamps(mut self, stamps: Vec<String>) -> Result<Self> {
        if stamps.len() != self.n_signals() {
            return Err(Error::DimensionMismatch {
                context: "timestamps".into(),
                expected: self.n_signals(),
                found: stamps.len(),
            });
        }
        self.timestamps = Some(stamps);
        Ok(self)
    }

    pub fn n_nodes(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_signals(&self) -> usize {
        self.data.ncols()
    }

    /// `N x M` data matrix; column `m` is signal `m`.
    pub fn data(&self) -> &DMatrix<T> {
        &self.data
    }

    pub fn signal(&self, m: usize) -> DVector<T> {
        self.data.column(m).into_owned()
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn node_names(&self) -> Option<&[String]> {
        self.node_names.as_deref()
    }

    pub fn timestamps(&self) -> Option<&[String]> {
        self.timestamps.as_deref()
    }
}

/// Mixture of heat-diffusion Gaussians: `K` components with weights `alpha`,
/// means `mu_k`, graphs `G_k`, and one shared diffusion time `tau`.
///
/// `tau` is a fixed input, not a fitted parameter: the covariance
/// `exp(-2 tau L)` depends only on the product `tau L`, so `tau` merely sets
/// the scale convention for the recovered weights.
#[derive(Debug, Clone)]
pub struct HeatMixtureModel<T: Real> {
    alphas: DVector<T>,
    means: Vec<DVector<T>>,
    graphs: Vec<WeightedGraph<T>>,
    tau: T,
}

impl<T: Real> HeatMixtureModel<T> {
    pub fn new(
        alphas: DVector<T>,
        means: Vec<DVector<T>>,
        graphs: Vec<WeightedGraph<T>>,
        tau: T,
    ) -> Result<Self> {
        let k = alphas.len();
        if k == 0 {
            return Err(Error::InvalidModel {
                reason: "mixture needs at least one component".into(),
            });
        }
        if means.len() != k || graphs.len() != k {
            return Err(Error::InvalidModel {
                reason: format!(
                    "component count mismatch: {} alphas, {} means, {} graphs",
                    k,
                    means.len(),
                    graphs.len()
                ),
            });
        }
        if alphas.iter().any(|a| *a < T::zero()) {
            return Err(Error::InvalidModel {
                reason: "negative mixture weight".into(),
            });
        }
        let total: T = alphas.iter().fold(T::zero(), |a, b| a + *b);
        if (total - T::one()).abs() > T::from_f64_lossy(1e-12) {
            return Err(Error::InvalidModel {
                reason: format!("mixture weights sum to {total}, not 1"),
            });
        }
        if tau <= T::zero() {
            return Err(Error::InvalidModel {
                reason: format!("tau must be > 0, got {tau}"),
            });
        }
        let n = graphs[0].n_nodes();
        if graphs.iter().any(|g| g.n_nodes() != n) || means.iter().any(|m| m.len() != n) {
            return Err(Error::InvalidModel {
                reason: "components disagree on the number of nodes".into(),
            });
        }
        Ok(Self {
            alphas,
            means,
            graphs,
            tau,
        })
    }

    pub fn k(&self) -> usize {
        self.alphas.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.graphs[0].n_nodes()
    }

    pub fn alphas(&self) -> &DVector<T> {
        &self.alphas
    }

    pub fn means(&self) -> &[DVector<T>] {
        &self.means
    }

    pub fn graphs(&self) -> &[WeightedGraph<T>] {
        &self.graphs
    }

    pub fn tau(&self) -> T {
        self.tau
    }

    /// Per-signal, per-component Gaussian log-densities (without the mixture
    /// weights): entry `(m, k)` is `ln N(x_m | mu_k, exp(-2 tau L_k))`.
    pub fn component_log_densities(&self, signals: &SignalSet<T>) -> Result<DMatrix<T>> {
        if signals.n_nodes() != self.n_nodes() {
            return Err(Error::DimensionMismatch {
                context: "component_log_densities".into(),
                expected: self.n_nodes(),
                found: signals.n_nodes(),
            });
        }
        let m = signals.n_signals();
        let mut out = DMatrix::zeros(m, self.k());
        for (k, (mean, graph)) in self.means.iter().zip(self.graphs.iter()).enumerate() {
            let eval = HeatLogDensity::new(mean, &graph.laplacian(), self.tau)?;
            out.set_column(k, &eval.log_densities(signals.data()));
        }
        Ok(out)
    }
}

/// `ln sum_i exp(x_i)`, stable against under/overflow.
pub fn log_sum_exp<T: Real>(xs: impl IntoIterator<Item = T> + Clone) -> T {
    let max = xs
        .clone()
        .into_iter()
        .fold(T::from_f64_lossy(f64::NEG_INFINITY), |a, b| if b > a { b } else { a });
    if !max.is_finite_real() {
        return max; // all -inf (or some +inf/NaN, which propagates)
    }
    let sum = xs
        .into_iter()
        .fold(T::zero(), |acc, x| acc + (x - max).exp());
    max + sum.ln()
}

/// Observed-data log-likelihood
/// `sum_m ln sum_k alpha_k N(x_m | mu_k, exp(-2 tau L_k))`.
pub fn log_likelihood<T: Real>(model: &HeatMixtureModel<T>, signals: &SignalSet<T>) -> Result<T> {
    let log_dens = model.component_log_densities(signals)?;
    Ok(weighted_log_likelihood(model.alphas(), &log_dens))
}

/// Log-likelihood from precomputed component log-densities.
pub(crate) fn weighted_log_likelihood<T: Real>(alphas: &DVector<T>, log_dens: &DMatrix<T>) -> T {
    let log_alphas: Vec<T> = alphas.iter().map(|a| a.ln()).collect();
    let mut total = T::zero();
    for m in 0..log_dens.nrows() {
        let row: Vec<T> = (0..log_dens.ncols())
            .map(|k| log_alphas[k] + log_dens[(m, k)])
            .collect();
        total += log_sum_exp(row.iter().copied());
    }
    total
}

/// Posterior cluster probabilities, one row per signal.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponsibilityMatrix<T: Real> {
    gamma: DMatrix<T>,
}

impl<T: Real> ResponsibilityMatrix<T> {
    pub fn new(gamma: DMatrix<T>) -> Result<Self> {
        let tol = T::from_f64_lossy(1e-10);
        for m in 0..gamma.nrows() {
            let mut sum = T::zero();
            for k in 0..gamma.ncols() {
                let g = gamma[(m, k)];
                if !(T::zero()..=T::one()).contains(&g) {
                    return Err(Error::InvalidModel {
                        reason: format!("responsibility ({m}, {k}) = {g} outside [0, 1]"),
                    });
                }
                sum += g;
            }
            if (sum - T::one()).abs() > tol {
                return Err(Error::InvalidModel {
                    reason: format!("responsibility row {m} sums to {sum}"),
                });
            }
        }
        Ok(Self { gamma })
    }

    /// One-hot responsibilities from hard labels in `0..k`.
    pub fn from_hard_labels(labels: &[usize], k: usize) -> Result<Self> {
        let mut gamma = DMatrix::zeros(labels.len(), k);
        for (m, &label) in labels.iter().enumerate() {
            if label >= k {
                return Err(Error::IndexOutOfRange { index: label, n: k });
            }
            gamma[(m, label)] = T::one();
        }
        Self::new(gamma)
    }

    pub fn n_signals(&self) -> usize {
        self.gamma.nrows()
    }

    pub fn k(&self) -> usize {
        self.gamma.ncols()
    }

    pub fn gamma(&self) -> &DMatrix<T> {
        &self.gamma
    }

    /// Total responsibility mass per component (column sums).
    pub fn column_masses(&self) -> DVector<T> {
        DVector::from_iterator(
            self.k(),
            self.gamma
                .column_iter()
                .map(|c| c.iter().fold(T::zero(), |a, g| a + *g)),
        )
    }

    /// Hard assignment per signal: argmax over components, ties to the lowest
    /// component index.
    pub fn hard_labels(&self) -> Vec<usize> {
        (0..self.n_signals())
            .map(|m| {
                let mut best = 0;
                for k in 1..self.k() {
                    if self.gamma[(m, k)] > self.gamma[(m, best)] {
                        best = k;
                    }
                }
                best
            })
            .collect()
    }
}

/// Which fitting pipeline produced a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Joint clustering + graph recovery (the full EM).
    Ghmm,
    /// Gaussian mixture with thresholded precision matrices as graphs.
    Gmm,
    /// Hard k-means clustering, then per-cluster graph recovery.
    KmeansGl,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Ghmm => "ghmm",
            Method::Gmm => "gmm",
            Method::KmeansGl => "kmeans-gl",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ghmm" => Ok(Method::Ghmm),
            "gmm" => Ok(Method::Gmm),
            "kmeans-gl" => Ok(Method::KmeansGl),
            other => Err(Error::InvalidConfig {
                reason: format!("unknown method '{other}' (ghmm, gmm, kmeans-gl)"),
            }),
        }
    }
}

/// How the FISTA step size is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepRule {
    /// Power iteration estimates the gradient's Lipschitz constant.
    #[default]
    PowerIteration,
    /// Halve the step until the quadratic upper bound holds.
    Backtracking,
}

/// FISTA solver settings for the graph-recovery subproblem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FistaConfig<T: Real> {
    /// L1 sparsity weight.
    pub beta: T,
    pub max_iters: usize,
    /// Relative objective-change tolerance, measured over a 10-iteration
    /// window.
    pub tol: T,
    pub step_rule: StepRule,
}

impl<T: Real> Default for FistaConfig<T> {
    fn default() -> Self {
        Self {
            beta: T::from_f64_lossy(0.1),
            max_iters: 2000,
            tol: T::from_f64_lossy(1e-8),
            step_rule: StepRule::PowerIteration,
        }
    }
}

impl<T: Real> FistaConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.beta < T::zero() {
            return Err(Error::InvalidConfig {
                reason: format!("fista beta must be >= 0, got {}", self.beta),
            });
        }
        if self.tol <= T::zero() {
            return Err(Error::InvalidConfig {
                reason: format!("fista tol must be > 0, got {}", self.tol),
            });
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig {
                reason: "fista max_iters must be >= 1".into(),
            });
        }
        Ok(())
    }
}

/// Hyperparameters for [`crate::em::fit`].
#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig<T: Real> {
    pub k: usize,
    /// Shared diffusion time; fixed input, see [`HeatMixtureModel`].
    pub tau: T,
    pub em_max_iters: usize,
    /// Relative log-likelihood change below which EM stops.
    pub em_tol: T,
    pub n_restarts: usize,
    pub seed: u64,
    pub fista: FistaConfig<T>,
    /// Eigenvalue floor for covariance logs; `None` means
    /// `1e-6 * max(lambda_max, 1)` per covariance.
    pub eig_floor: Option<T>,
    /// When false, graphs stay at their initial values and the M-step only
    /// updates mixture weights and means (exact EM; useful for monotonicity
    /// checks).
    pub update_graphs: bool,
}

impl<T: Real> FitConfig<T> {
    pub fn new(k: usize, tau: T) -> Self {
        Self {
            k,
            tau,
            em_max_iters: 200,
            em_tol: T::from_f64_lossy(1e-6),
            n_restarts: 5,
            seed: 0,
            fista: FistaConfig::default(),
            eig_floor: None,
            update_graphs: true,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig {
                reason: "k must be >= 1".into(),
            });
        }
        if self.tau <= T::zero() {
            return Err(Error::InvalidConfig {
                reason: format!("tau must be > 0, got {}", self.tau),
            });
        }
        if self.em_tol <= T::zero() {
            return Err(Error::InvalidConfig {
                reason: format!("em_tol must be > 0, got {}", self.em_tol),
            });
        }
        if self.n_restarts == 0 {
            return Err(Error::InvalidConfig {
                reason: "n_restarts must be >= 1".into(),
            });
        }
        if self.em_max_iters == 0 {
            return Err(Error::InvalidConfig {
                reason: "em_max_iters must be >= 1".into(),
            });
        }
        if let Some(floor) = self.eig_floor {
            if floor <= T::zero() {
                return Err(Error::InvalidFloor {
                    floor: floor.to_f64_lossy(),
                });
            }
        }
        self.fista.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{dense_heat_log_density, random_graph, random_vector, rng};
    use approx::assert_relative_eq;
    use rand::prelude::*;

    #[test]
    fn graph_rejects_bad_weights() {
        // Asymmetric.
        let mut w = DMatrix::<f64>::zeros(2, 2);
        w[(0, 1)] = 1.0;
        assert!(WeightedGraph::new(w).is_err());
        // Negative.
        let mut w = DMatrix::<f64>::zeros(2, 2);
        w[(0, 1)] = -1.0;
        w[(1, 0)] = -1.0;
        assert!(WeightedGraph::new(w).is_err());
        // Nonzero diagonal.
        let mut w = DMatrix::<f64>::zeros(2, 2);
        w[(0, 0)] = 1.0;
        assert!(WeightedGraph::new(w).is_err());
        // NaN.
        let mut w = DMatrix::<f64>::zeros(2, 2);
        w[(0, 1)] = f64::NAN;
        w[(1, 0)] = f64::NAN;
        assert!(WeightedGraph::new(w).is_err());
    }

    #[test]
    fn laplacian_two_node_graph() {
        let mut w = DMatrix::<f64>::zeros(2, 2);
        w[(0, 1)] = 1.0;
        w[(1, 0)] = 1.0;
        let l = WeightedGraph::new(w).unwrap().laplacian();
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        assert_eq!(l, expected);
    }

    #[test]
    fn laplacian_of_empty_graph_is_zero() {
        let l = WeightedGraph::<f64>::empty(3).laplacian();
        assert_eq!(l, DMatrix::zeros(3, 3));
    }

    #[test]
    fn laplacian_triangle_degrees_and_psd() {
        // Triangle with weights 1 (0-1), 2 (0-2), 3 (1-2).
        let mut w = DMatrix::<f64>::zeros(3, 3);
        for &(i, j, v) in &[(0usize, 1usize, 1.0), (0, 2, 2.0), (1, 2, 3.0)] {
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
        let g = WeightedGraph::new(w).unwrap();
        let l = g.laplacian();
        assert_eq!(l[(0, 0)], 3.0);
        assert_eq!(l[(1, 1)], 4.0);
        assert_eq!(l[(2, 2)], 5.0);
        let eig = crate::spectral::sym_eig(&l).unwrap();
        assert!(eig.eigenvalues.iter().all(|v| *v >= -1e-9));
    }

    #[test]
    fn laplacian_row_sums_vanish() {
        let mut r = rng(41);
        for _ in 0..10 {
            let g = random_graph(6, 0.7, &mut r);
            let l = g.laplacian();
            for i in 0..6 {
                let row_sum: f64 = l.row(i).iter().sum();
                assert!(row_sum.abs() <= 1e-12 * l[(i, i)].max(1.0));
            }
        }
    }

    fn single_component_model(n: usize) -> HeatMixtureModel<f64> {
        HeatMixtureModel::new(
            DVector::from_element(1, 1.0),
            vec![DVector::zeros(n)],
            vec![WeightedGraph::empty(n)],
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn log_likelihood_standard_normal() {
        let model = single_component_model(2);
        let x = SignalSet::new(DMatrix::zeros(2, 1)).unwrap();
        let ll = log_likelihood(&model, &x).unwrap();
        assert_relative_eq!(ll, -(2.0 * std::f64::consts::PI).ln(), epsilon = 1e-12);
    }

    #[test]
    fn log_likelihood_duplication_invariance() {
        let mut r = rng(6);
        let g = random_graph(3, 0.8, &mut r);
        let mu = random_vector(3, &mut r);
        let tau = 0.5;
        let one = HeatMixtureModel::new(
            DVector::from_element(1, 1.0),
            vec![mu.clone()],
            vec![g.clone()],
            tau,
        )
        .unwrap();
        let two = HeatMixtureModel::new(
            DVector::from_element(2, 0.5),
            vec![mu.clone(), mu.clone()],
            vec![g.clone(), g],
            tau,
        )
        .unwrap();
        let x = SignalSet::new(DMatrix::from_fn(3, 4, |_, _| r.random::<f64>())).unwrap();
        let a = log_likelihood(&one, &x).unwrap();
        let b = log_likelihood(&two, &x).unwrap();
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn log_likelihood_matches_dense_oracle() {
        let mut r = rng(77);
        let g1 = random_graph(4, 0.7, &mut r);
        let g2 = random_graph(4, 0.7, &mut r);
        let mu1 = random_vector(4, &mut r);
        let mu2 = random_vector(4, &mut r);
        let tau = 0.35;
        let model = HeatMixtureModel::new(
            DVector::from_vec(vec![0.3, 0.7]),
            vec![mu1.clone(), mu2.clone()],
            vec![g1.clone(), g2.clone()],
            tau,
        )
        .unwrap();
        let data = DMatrix::from_fn(4, 3, |_, _| r.random::<f64>() * 2.0 - 1.0);
        let x = SignalSet::new(data.clone()).unwrap();
        let ours = log_likelihood(&model, &x).unwrap();
        let mut oracle = 0.0;
        for m in 0..3 {
            let xm = data.column(m).into_owned();
            let d1 = dense_heat_log_density(&xm, &mu1, &g1.laplacian(), tau);
            let d2 = dense_heat_log_density(&xm, &mu2, &g2.laplacian(), tau);
            oracle += (0.3 * d1.exp() + 0.7 * d2.exp()).ln();
        }
        assert!((ours - oracle).abs() < 1e-8, "{ours} vs {oracle}");
    }

    #[test]
    fn log_likelihood_component_permutation_invariance() {
        let mut r = rng(13);
        let g1 = random_graph(3, 0.8, &mut r);
        let g2 = random_graph(3, 0.8, &mut r);
        let mu1 = random_vector(3, &mut r);
        let mu2 = random_vector(3, &mut r);
        let x = SignalSet::new(DMatrix::from_fn(3, 5, |_, _| r.random::<f64>())).unwrap();
        let fwd = HeatMixtureModel::new(
            DVector::from_vec(vec![0.25, 0.75]),
            vec![mu1.clone(), mu2.clone()],
            vec![g1.clone(), g2.clone()],
            0.4,
        )
        .unwrap();
        let rev = HeatMixtureModel::new(
            DVector::from_vec(vec![0.75, 0.25]),
            vec![mu2, mu1],
            vec![g2, g1],
            0.4,
        )
        .unwrap();
        let a = log_likelihood(&fwd, &x).unwrap();
        let b = log_likelihood(&rev, &x).unwrap();
        assert_relative_eq!(a, b, epsilon = 1e-12);
    }

    #[test]
    fn model_validation_errors() {
        let n = 2;
        // Alphas not summing to one.
        assert!(HeatMixtureModel::new(
            DVector::from_vec(vec![0.5, 0.4]),
            vec![DVector::zeros(n), DVector::zeros(n)],
            vec![WeightedGraph::empty(n), WeightedGraph::empty(n)],
            1.0,
        )
        .is_err());
        // Nonpositive tau.
        assert!(HeatMixtureModel::new(
            DVector::from_element(1, 1.0),
            vec![DVector::zeros(n)],
            vec![WeightedGraph::empty(n)],
            0.0,
        )
        .is_err());
    }

    #[test]
    fn responsibilities_validation() {
        let good = DMatrix::from_row_slice(2, 2, &[0.25, 0.75, 1.0, 0.0]);
        assert!(ResponsibilityMatrix::new(good).is_ok());
        let bad_sum = DMatrix::from_row_slice(1, 2, &[0.5, 0.6]);
        assert!(ResponsibilityMatrix::new(bad_sum).is_err());
        let out_of_range = DMatrix::from_row_slice(1, 2, &[1.5, -0.5]);
        assert!(ResponsibilityMatrix::new(out_of_range).is_err());
    }

    #[test]
    fn hard_labels_break_ties_low() {
        let gamma = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.2, 0.8]);
        let r = ResponsibilityMatrix::new(gamma).unwrap();
        assert_eq!(r.hard_labels(), vec![0, 1]);
    }

    #[test]
    fn log_sum_exp_handles_extremes() {
        let vals = [-1000.0f64, -1001.0, -999.0];
        let got = log_sum_exp(vals.iter().copied());
        let expected = -999.0
            + vals
                .iter()
                .map(|v| (v + 999.0f64).exp())
                .sum::<f64>()
                .ln();
        assert_relative_eq!(got, expected, epsilon = 1e-12);
        assert_eq!(
            log_sum_exp([f64::NEG_INFINITY, f64::NEG_INFINITY].iter().copied()),
            f64::NEG_INFINITY
        );
    }
}
