//! Evaluation: permutation-aware clustering error and edge-recovery
//! F-measure. Mixture components are identifiable only up to relabeling, so
//! every metric first matches predicted clusters to true ones.

use itertools::Itertools;

use crate::error::{Error, Result};
use crate::model::WeightedGraph;
use crate::scalar::Real;

/// Relative edge binarization threshold used when none is given. FISTA's l1
/// step drives spurious weights to exactly zero, so this mainly guards
/// float dust.
pub const DEFAULT_EDGE_THRESHOLD: f64 = 1e-4;

/// Exhaustive permutation search is used up to this K (8! = 40320 cases).
const EXHAUSTIVE_MATCH_LIMIT: usize = 8;

/// Everything the evaluation pipeline reports for one fitted model.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Percentage of signals assigned to the wrong cluster, after the best
    /// relabeling. In [0, 100].
    pub clustering_nmse_percent: f64,
    /// F-measure per true cluster, against the matched learned graph.
    pub per_cluster_f_measure: Vec<f64>,
    pub mean_f_measure: f64,
    /// `matched_permutation[p]` is the true cluster assigned to predicted
    /// cluster `p`.
    pub matched_permutation: Vec<usize>,
}

fn check_labels(labels: &[usize], k: usize) -> Result<()> {
    for &l in labels {
        if l >= k {
            return Err(Error::IndexOutOfRange { index: l, n: k });
        }
    }
    Ok(())
}

fn mismatches(true_labels: &[usize], predicted: &[usize], perm: &[usize]) -> usize {
    true_labels
        .iter()
        .zip(predicted)
        .filter(|(&t, &p)| perm[p] != t)
        .count()
}

/// Best relabeling of predicted clusters: `perm[p]` is the true cluster
/// that predicted cluster `p` plays. Exhaustive for K <= 8, greedy
/// largest-confusion-first above.
pub fn match_clusters(
    true_labels: &[usize],
    predicted_labels: &[usize],
    k: usize,
) -> Result<Vec<usize>> {
    if true_labels.len() != predicted_labels.len() {
        return Err(Error::DimensionMismatch {
            context: "cluster matching labels".into(),
            expected: true_labels.len(),
            found: predicted_labels.len(),
        });
    }
    if k == 0 {
        return Err(Error::InvalidConfig {
            reason: "cluster matching needs k >= 1".into(),
        });
    }
    check_labels(true_labels, k)?;
    check_labels(predicted_labels, k)?;

    if k <= EXHAUSTIVE_MATCH_LIMIT {
        let best = (0..k)
            .permutations(k)
            .min_by_key(|perm| mismatches(true_labels, predicted_labels, perm))
            .expect("k >= 1");
        return Ok(best);
    }

    // Confusion counts, then repeatedly bind the heaviest (true, predicted)
    // pair; ties go to the lexicographically first pair.
    let mut confusion = vec![vec![0usize; k]; k];
    for (&t, &p) in true_labels.iter().zip(predicted_labels) {
        confusion[t][p] += 1;
    }
    let mut perm = vec![usize::MAX; k];
    let mut true_used = vec![false; k];
    let mut pred_used = vec![false; k];
    for _ in 0..k {
        let mut best = (0usize, 0usize);
        let mut best_count = None;
        for t in 0..k {
            if true_used[t] {
                continue;
            }
            for p in 0..k {
                if pred_used[p] {
                    continue;
                }
                if best_count.is_none_or(|c| confusion[t][p] > c) {
                    best_count = Some(confusion[t][p]);
                    best = (t, p);
                }
            }
        }
        let (t, p) = best;
        perm[p] = t;
        true_used[t] = true;
        pred_used[p] = true;
    }
    Ok(perm)
}

/// Post-matching mismatch rate as a percentage.
///
/// The clustering error is reported as the mean-square difference of
/// one-hot membership indicators, which for hard labels reduces to the
/// fraction of misassigned signals; that reduction is what this returns.
pub fn clustering_nmse(
    true_labels: &[usize],
    predicted_labels: &[usize],
    k: usize,
) -> Result<f64> {
    let perm = match_clusters(true_labels, predicted_labels, k)?;
    if true_labels.is_empty() {
        return Ok(0.0);
    }
    let wrong = mismatches(true_labels, predicted_labels, &perm);
    Ok(100.0 * wrong as f64 / true_labels.len() as f64)
}

fn edge_set<T: Real>(g: &WeightedGraph<T>, threshold: T) -> Vec<(usize, usize)> {
    let n = g.n_nodes();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if g.weights()[(i, j)] > threshold {
                edges.push((i, j));
            }
        }
    }
    edges
}

/// Binary edge-recovery F-measure.
///
/// Learned edges count when `w > edge_threshold * max(w)` (relative, so
/// uniform rescaling of the learned weights changes nothing); true edges
/// are the strictly positive weights. F = 2PR/(P+R), 0 when degenerate.
pub fn edge_f_measure<T: Real>(
    true_graph: &WeightedGraph<T>,
    learned_graph: &WeightedGraph<T>,
    edge_threshold: T,
) -> Result<f64> {
    if true_graph.n_nodes() != learned_graph.n_nodes() {
        return Err(Error::DimensionMismatch {
            context: "f-measure graphs".into(),
            expected: true_graph.n_nodes(),
            found: learned_graph.n_nodes(),
        });
    }
    if edge_threshold < T::zero() {
        return Err(Error::InvalidConfig {
            reason: format!("edge threshold must be >= 0, got {edge_threshold}"),
        });
    }
    let truth = edge_set(true_graph, T::zero());
    let max_w = learned_graph.weights().amax();
    let learned = edge_set(learned_graph, edge_threshold * max_w);

    let tp = learned.iter().filter(|e| truth.contains(e)).count();
    let fp = learned.len() - tp;
    let fn_ = truth.len() - tp;
    let precision = if tp + fp == 0 {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = if tp + fn_ == 0 {
        0.0
    } else {
        tp as f64 / (tp + fn_) as f64
    };
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * precision * recall / (precision + recall))
}

/// Run the full evaluation: match clusters, then score labels and graphs.
/// `learned_graphs[p]` is compared against `true_graphs[perm[p]]`.
pub fn evaluate<T: Real>(
    true_labels: &[usize],
    predicted_labels: &[usize],
    true_graphs: &[WeightedGraph<T>],
    learned_graphs: &[WeightedGraph<T>],
    edge_threshold: T,
) -> Result<EvalReport> {
    let k = true_graphs.len();
    if learned_graphs.len() != k {
        return Err(Error::DimensionMismatch {
            context: "evaluate graphs".into(),
            expected: k,
            found: learned_graphs.len(),
        });
    }
    let perm = match_clusters(true_labels, predicted_labels, k)?;
    let wrong = mismatches(true_labels, predicted_labels, &perm);
    let nmse = if true_labels.is_empty() {
        0.0
    } else {
        100.0 * wrong as f64 / true_labels.len() as f64
    };
    // Report per TRUE cluster: find the predicted cluster mapped onto it.
    let mut per_cluster = vec![0.0; k];
    for (p, &t) in perm.iter().enumerate() {
        per_cluster[t] = edge_f_measure(&true_graphs[t], &learned_graphs[p], edge_threshold)?;
    }
    let mean = per_cluster.iter().sum::<f64>() / k as f64;
    Ok(EvalReport {
        clustering_nmse_percent: nmse,
        per_cluster_f_measure: per_cluster,
        mean_f_measure: mean,
        matched_permutation: perm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{random_graph, rng};
    use nalgebra::DMatrix;
    use rand::prelude::*;

    #[test]
    fn identical_labelings_match_with_identity() {
        let labels = vec![0, 1, 2, 0, 1, 2];
        let perm = match_clusters(&labels, &labels, 3).unwrap();
        assert_eq!(perm, vec![0, 1, 2]);
        assert_eq!(clustering_nmse(&labels, &labels, 3).unwrap(), 0.0);
    }

    #[test]
    fn swapped_binary_labels_match_with_transposition() {
        let truth = vec![0, 0, 1, 1];
        let pred = vec![1, 1, 0, 0];
        let perm = match_clusters(&truth, &pred, 2).unwrap();
        assert_eq!(perm, vec![1, 0]);
        assert_eq!(clustering_nmse(&truth, &pred, 2).unwrap(), 0.0);
    }

    #[test]
    fn three_cluster_matching_agrees_with_brute_force() {
        let mut r = rng(1);
        for _ in 0..20 {
            let truth: Vec<usize> = (0..60).map(|_| r.random_range(0..3)).collect();
            let pred: Vec<usize> = (0..60).map(|_| r.random_range(0..3)).collect();
            let perm = match_clusters(&truth, &pred, 3).unwrap();
            let ours = mismatches(&truth, &pred, &perm);
            let brute = (0..3usize)
                .permutations(3)
                .map(|p| mismatches(&truth, &pred, &p))
                .min()
                .unwrap();
            assert_eq!(ours, brute);
        }
    }

    #[test]
    fn greedy_matching_handles_large_k() {
        // K = 9 exceeds the exhaustive limit; a diagonal-dominant confusion
        // still resolves to the identity.
        let mut truth = Vec::new();
        let mut pred = Vec::new();
        for k in 0..9 {
            for _ in 0..10 {
                truth.push(k);
                pred.push(k);
            }
            // one stray per cluster
            truth.push(k);
            pred.push((k + 1) % 9);
        }
        let perm = match_clusters(&truth, &pred, 9).unwrap();
        assert_eq!(perm, (0..9).collect::<Vec<_>>());
    }

    #[test]
    fn nmse_counts_mismatches_as_percent() {
        let mut truth = vec![0; 50];
        truth.extend(vec![1; 50]);
        let mut pred = truth.clone();
        pred[3] = 1;
        pred[77] = 0;
        assert_eq!(clustering_nmse(&truth, &pred, 2).unwrap(), 2.0);
    }

    #[test]
    fn nmse_of_coin_flip_predictions_approaches_fifty_percent() {
        let mut r = rng(2);
        let m = 10_000;
        let truth: Vec<usize> = (0..m).map(|i| i % 2).collect();
        let pred: Vec<usize> = (0..m).map(|_| usize::from(r.random::<bool>())).collect();
        let nmse = clustering_nmse(&truth, &pred, 2).unwrap();
        assert!(nmse <= 50.0, "matching can only reduce error: {nmse}");
        assert!((nmse - 50.0).abs() <= 2.0, "nmse {nmse}");
    }

    #[test]
    fn nmse_invariant_to_predicted_label_renaming() {
        let mut r = rng(3);
        let truth: Vec<usize> = (0..200).map(|_| r.random_range(0..4)).collect();
        let pred: Vec<usize> = (0..200).map(|_| r.random_range(0..4)).collect();
        let base = clustering_nmse(&truth, &pred, 4).unwrap();
        let renaming = [2, 0, 3, 1];
        let renamed: Vec<usize> = pred.iter().map(|&p| renaming[p]).collect();
        assert_eq!(clustering_nmse(&truth, &renamed, 4).unwrap(), base);
    }

    fn graph_from_edges(n: usize, edges: &[(usize, usize, f64)]) -> WeightedGraph<f64> {
        let mut w = DMatrix::zeros(n, n);
        for &(i, j, v) in edges {
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
        WeightedGraph::new(w).unwrap()
    }

    #[test]
    fn f_measure_perfect_and_empty_cases() {
        let mut r = rng(4);
        let g = random_graph(6, 0.6, &mut r);
        assert_eq!(edge_f_measure(&g, &g, 1e-4).unwrap(), 1.0);
        let empty = WeightedGraph::empty(6);
        assert_eq!(edge_f_measure(&g, &empty, 1e-4).unwrap(), 0.0);
        // Both empty: degenerate, reported as 0.
        assert_eq!(edge_f_measure(&empty, &empty, 1e-4).unwrap(), 0.0);
    }

    #[test]
    fn f_measure_hand_counted_confusion() {
        // True: (0,1), (1,2), (2,3). Learned: (0,1), (1,2), (0,3).
        // 2 true positives, 1 false positive, 1 false negative.
        let truth = graph_from_edges(4, &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)]);
        let learned = graph_from_edges(4, &[(0, 1, 1.0), (1, 2, 1.0), (0, 3, 1.0)]);
        let f = edge_f_measure(&truth, &learned, 1e-4).unwrap();
        assert!((f - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn f_measure_threshold_is_relative_to_largest_weight() {
        // Weights 1.0 and 1e-6: at threshold 1e-4 (relative), the small
        // edge falls below 1e-4 * 1.0 and is dropped.
        let truth = graph_from_edges(3, &[(0, 1, 1.0)]);
        let learned = graph_from_edges(3, &[(0, 1, 1.0), (1, 2, 1e-6)]);
        assert_eq!(edge_f_measure(&truth, &learned, 1e-4).unwrap(), 1.0);
        // Scaling all learned weights leaves the measure unchanged.
        let scaled = graph_from_edges(3, &[(0, 1, 37.0), (1, 2, 37.0e-6)]);
        assert_eq!(edge_f_measure(&truth, &scaled, 1e-4).unwrap(), 1.0);
    }

    #[test]
    fn f_measure_commutes_with_node_relabeling() {
        let mut r = rng(5);
        let truth = random_graph(6, 0.5, &mut r);
        let learned = random_graph(6, 0.5, &mut r);
        let base = edge_f_measure(&truth, &learned, 1e-4).unwrap();
        let perm = [3, 0, 5, 1, 4, 2];
        let relabel = |g: &WeightedGraph<f64>| {
            let w = DMatrix::from_fn(6, 6, |i, j| g.weights()[(perm[i], perm[j])]);
            WeightedGraph::new(w).unwrap()
        };
        let same = edge_f_measure(&relabel(&truth), &relabel(&learned), 1e-4).unwrap();
        assert_eq!(base, same);
    }

    #[test]
    fn evaluate_ties_graphs_to_matched_clusters() {
        let mut r = rng(6);
        let g0 = random_graph(5, 0.7, &mut r);
        let g1 = random_graph(5, 0.7, &mut r);
        let truth = vec![0, 0, 0, 1, 1, 1];
        // Predictions use swapped names; learned graphs are in predicted
        // order, so learned[1] should be scored against true cluster 0.
        let pred = vec![1, 1, 1, 0, 0, 0];
        let report = evaluate(
            &truth,
            &pred,
            &[g0.clone(), g1.clone()],
            &[g1.clone(), g0.clone()],
            1e-4,
        )
        .unwrap();
        assert_eq!(report.clustering_nmse_percent, 0.0);
        assert_eq!(report.matched_permutation, vec![1, 0]);
        assert_eq!(report.per_cluster_f_measure, vec![1.0, 1.0]);
        assert_eq!(report.mean_f_measure, 1.0);
    }

    #[test]
    fn label_validation() {
        assert!(match_clusters(&[0, 2], &[0, 1], 2).is_err());
        assert!(match_clusters(&[0], &[0, 1], 2).is_err());
    }
}
