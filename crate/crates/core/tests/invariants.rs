//! Cross-module properties: feasibility of projections, spectral round
//! trips, posterior normalization, and file formats under extreme floats.

use ghmm::em::{e_step, m_step_covariances, m_step_means, m_step_weights};
use ghmm::graphlearn::{prox_l1_feasible, solve, GraphLearnProblem};
use ghmm::model::{FistaConfig, ResponsibilityMatrix, SignalSet, WeightedGraph};
use ghmm::spectral::{heat_log_density, sym_expm, sym_logm_psd};
use ghmm::synth::{generate, random_connected_er_graph, SynthSpec};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn symmetric_from(n: usize, raw: &[f64]) -> DMatrix<f64> {
    let mut w = DMatrix::zeros(n, n);
    let mut it = raw.iter().cycle();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = *it.next().unwrap();
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
    }
    w
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // The proximal step lands in the feasible set and acts as an entrywise
    // soft threshold on symmetric input.
    #[test]
    fn prox_is_feasible_and_soft_thresholds(
        n in 2usize..7,
        raw in prop::collection::vec(-0.2f64..1.0, 15),
        t in 0.0f64..0.5,
    ) {
        let w = symmetric_from(n, &raw);
        let out = prox_l1_feasible(&w, t);
        for i in 0..n {
            prop_assert_eq!(out[(i, i)], 0.0);
            for j in 0..n {
                prop_assert!(out[(i, j)] >= 0.0);
                prop_assert_eq!(out[(i, j)], out[(j, i)]);
                if i != j {
                    let want = (w[(i, j)] - t).max(0.0);
                    prop_assert!((out[(i, j)] - want).abs() <= 1e-15);
                }
            }
        }
    }

    // log(exp(s L)) returns s L when nothing is floored.
    #[test]
    fn matrix_log_inverts_matrix_exp(n in 3usize..10, s in 0.2f64..2.0, seed: u64) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let g = random_connected_er_graph::<f64>(n, 0.6, &mut r).unwrap();
        let l = g.laplacian();
        let sigma = sym_expm(&l, -s).unwrap();
        let back = sym_logm_psd(&sigma, 1e-12).unwrap();
        let err = (&back + &l * s).amax();
        prop_assert!(err <= 1e-11, "round trip error {err:.3e}");
    }

    // A Gaussian density is maximal at its mean.
    #[test]
    fn density_peaks_at_the_mean(
        n in 2usize..8,
        tau in 0.1f64..0.8,
        seed: u64,
        raw in prop::collection::vec(-2.0f64..2.0, 16),
    ) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let g = random_connected_er_graph::<f64>(n, 0.7, &mut r).unwrap();
        let l = g.laplacian();
        let mu = DVector::from_fn(n, |i, _| raw[i % raw.len()]);
        let x = DVector::from_fn(n, |i, _| raw[(i + 7) % raw.len()]);
        let at_x = heat_log_density(&x, &mu, &l, tau).unwrap();
        let at_mu = heat_log_density(&mu, &mu, &l, tau).unwrap();
        prop_assert!(at_x <= at_mu + 1e-12);
    }

    // Posterior rows are probability distributions.
    #[test]
    fn posterior_rows_sum_to_one(seed in 0u64..1000, k in 1usize..4, m in 10usize..40) {
        let mut spec = SynthSpec::<f64>::new(0.4, m).with_k(k);
        spec.n_nodes = 6;
        spec.edge_prob = 0.6;
        spec.seed = seed;
        let (signals, model) = generate(&spec).unwrap();
        let gamma = e_step(&model, &signals).unwrap();
        for row in 0..m {
            let sum: f64 = (0..k).map(|c| gamma.gamma()[(row, c)]).sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12, "row {row} sums to {sum}");
        }
    }

    // Updated mixture weights are a probability vector.
    #[test]
    fn weight_update_is_a_distribution(
        rows in prop::collection::vec(prop::collection::vec(1e-3f64..1.0, 3), 5..40),
    ) {
        let m = rows.len();
        let gamma = DMatrix::from_fn(m, 3, |i, j| {
            let s: f64 = rows[i].iter().sum();
            rows[i][j] / s
        });
        let resp = ResponsibilityMatrix::new(gamma).unwrap();
        let alphas = m_step_weights(&resp);
        let total: f64 = alphas.iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        for a in alphas.iter() {
            prop_assert!(*a >= 0.0);
        }
    }
}

// With a single component the weighted updates reduce to the sample mean
// and sample covariance.
#[test]
fn one_component_updates_match_sample_statistics() {
    let mut r = ChaCha8Rng::seed_from_u64(42);
    let n = 5;
    let m = 23;
    let data = DMatrix::from_fn(n, m, |_, _| rand::Rng::random_range(&mut r, -3.0..3.0));
    let signals = SignalSet::new(data.clone()).unwrap();
    let gamma = ResponsibilityMatrix::from_hard_labels(&vec![0; m], 1).unwrap();

    let means = m_step_means(&gamma, &signals).unwrap();
    let mut want_mean = DVector::zeros(n);
    for c in data.column_iter() {
        want_mean += c;
    }
    want_mean /= m as f64;
    assert!((&means[0] - &want_mean).amax() <= 1e-12);

    let covs = m_step_covariances(&gamma, &signals, &means).unwrap();
    let mut want_cov = DMatrix::zeros(n, n);
    for c in data.column_iter() {
        let d = c - &want_mean;
        want_cov += &d * d.transpose();
    }
    want_cov /= m as f64;
    assert!((&covs[0] - &want_cov).amax() <= 1e-12);
}

#[test]
fn signal_files_round_trip_extreme_floats() {
    let dir = tempfile::tempdir().unwrap();
    let values = [
        0.0,
        5e-324,                       // smallest subnormal
        2.2250738585072014e-308,      // smallest normal
        -1.7976931348623157e308,      // most negative finite
        1e308,
        -std::f64::consts::PI,
        1.0 + f64::EPSILON,
        -5e-324,
    ];
    let data = DMatrix::from_fn(4, 6, |i, j| values[(i * 6 + j) % values.len()]);
    let signals = SignalSet::new(data.clone()).unwrap();
    let path = dir.path().join("extreme.csv");
    ghmm::io::write_signals(&path, &signals).unwrap();
    let back: SignalSet<f64> = ghmm::io::read_signals(&path, false).unwrap();
    assert_eq!(back.data(), &data, "values must survive the text format exactly");
}

#[test]
fn graph_files_round_trip_extreme_weights() {
    let dir = tempfile::tempdir().unwrap();
    let mut w = DMatrix::zeros(5, 5);
    let weights = [5e-324, 2.2250738585072014e-308, 1.0 + f64::EPSILON, 1e300];
    for (e, (i, j)) in [(0, 1), (1, 2), (2, 3), (3, 4)].iter().enumerate() {
        w[(*i, *j)] = weights[e];
        w[(*j, *i)] = weights[e];
    }
    let graph = WeightedGraph::new(w).unwrap();
    let path = dir.path().join("extreme.edges");
    ghmm::io::write_graph(&path, &graph).unwrap();
    let back: WeightedGraph<f64> = ghmm::io::read_graph(&path).unwrap();
    assert_eq!(back.weights(), graph.weights());
}

// The whole stack is generic over the scalar; the f32 instantiation must
// agree with f64 to single precision.
#[test]
fn f32_instantiation_tracks_f64() {
    let mut r = ChaCha8Rng::seed_from_u64(7);
    let n = 5;
    let g64 = random_connected_er_graph::<f64>(n, 0.8, &mut r).unwrap();
    let l64 = g64.laplacian();
    let l32 = l64.map(|v| v as f32);
    let mu64 = DVector::from_fn(n, |i, _| (i as f64).sin());
    let x64 = DVector::from_fn(n, |i, _| (i as f64 * 1.3).cos());
    let d64 = heat_log_density(&x64, &mu64, &l64, 0.4).unwrap();
    let d32 = heat_log_density(
        &x64.map(|v| v as f32),
        &mu64.map(|v| v as f32),
        &l32,
        0.4f32,
    )
    .unwrap();
    let rel = (f64::from(d32) - d64).abs() / d64.abs();
    assert!(rel <= 1e-5, "densities diverge: f32 {d32}, f64 {d64}");

    let log_cov64 = (&l64 + l64.transpose()).map(|v| -0.3 * v);
    let p64 = GraphLearnProblem::new(log_cov64.clone(), 0.4, 0.05).unwrap();
    let p32 = GraphLearnProblem::new(log_cov64.map(|v| v as f32), 0.4f32, 0.05f32).unwrap();
    let cfg64 = FistaConfig::<f64> {
        beta: 0.05,
        ..FistaConfig::default()
    };
    let cfg32 = FistaConfig::<f32> {
        beta: 0.05,
        tol: 1e-6,
        ..FistaConfig::default()
    };
    let s64 = solve(&p64, &DMatrix::zeros(n, n), &cfg64).unwrap();
    let s32 = solve(&p32, &DMatrix::zeros(n, n), &cfg32).unwrap();
    let gap = (f64::from(s32.objective) - s64.objective).abs() / s64.objective.abs();
    assert!(gap <= 1e-3, "objectives diverge: f32 {}, f64 {}", s32.objective, s64.objective);
}

// The crate-root aliases pick f64.
#[test]
fn default_aliases_are_double_precision() {
    let signals: ghmm::SignalSet64 = SignalSet::new(DMatrix::from_element(3, 4, 1.5f64)).unwrap();
    assert_eq!(signals.n_nodes(), 3);
    let cfg: ghmm::FitConfig64 = ghmm::model::FitConfig::new(2, 0.5);
    assert_eq!(cfg.k, 2);
}
