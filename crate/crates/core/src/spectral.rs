//! Matrix functions of symmetric matrices via one eigendecomposition per call,
//! and the exact Gaussian log-density whose covariance is a heat kernel.
//!
//! Everything here works in log space end to end; raw densities are never
//! materialized because quadratic forms against `exp(2 tau L)` overflow long
//! before the log-density does.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Exponent magnitude beyond which `exp` is treated as overflow.
const EXP_OVERFLOW_LIMIT: f64 = 700.0;

/// Eigendecomposition of a symmetric matrix.
///
/// Eigenvalues ascend; eigenvectors are the matching columns of an orthogonal
/// matrix, so `V diag(lambda) V^T` reconstructs the input.
#[derive(Debug, Clone)]
pub struct SymmetricEig<T: Real> {
    pub eigenvalues: DVector<T>,
    pub eigenvectors: DMatrix<T>,
}

impl<T: Real> SymmetricEig<T> {
    /// Applies `f` to each eigenvalue and reassembles `V diag(f(lambda)) V^T`.
    pub fn map_rebuild(&self, mut f: impl FnMut(T) -> T) -> DMatrix<T> {
        let n = self.eigenvalues.len();
        let v = &self.eigenvectors;
        let mut scaled = v.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= f(self.eigenvalues[j]);
        }
        let mut out = &scaled * v.transpose();
        // Rounding can leave the product asymmetric in the last ulp.
        symmetrize_in_place(&mut out);
        let _ = n;
        out
    }
}

fn check_finite<T: Real>(m: &DMatrix<T>, context: &str) -> Result<()> {
    if m.iter().any(|x| !x.is_finite_real()) {
        return Err(Error::non_finite(format!("{context}: input contains NaN/Inf")));
    }
    Ok(())
}

fn symmetrize_in_place<T: Real>(m: &mut DMatrix<T>) {
    let n = m.nrows();
    let half = T::from_f64_lossy(0.5);
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = (m[(i, j)] + m[(j, i)]) * half;
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Eigendecomposition of a symmetric real matrix, eigenvalues ascending.
///
/// The input is symmetrized as `(A + A^T)/2` first; asymmetry beyond
/// `1e-10 * max(1, max|a_ij|)` is rejected.
pub fn sym_eig<T: Real>(a: &DMatrix<T>) -> Result<SymmetricEig<T>> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch {
            context: "sym_eig".into(),
            expected: a.nrows(),
            found: a.ncols(),
        });
    }
    check_finite(a, "sym_eig")?;

    let scale = a.iter().fold(1.0f64, |acc, x| acc.max(x.to_f64_lossy().abs()));
    let max_asym = (a - a.transpose())
        .iter()
        .fold(0.0f64, |acc, x| acc.max(x.to_f64_lossy().abs()));
    if max_asym > 1e-10 * scale {
        return Err(Error::InvalidGraph {
            reason: format!("matrix not symmetric: max |A - A^T| = {max_asym:e}"),
        });
    }

    let mut sym = a.clone();
    symmetrize_in_place(&mut sym);
    let eig = sym.symmetric_eigen();

    // nalgebra returns eigenvalues unordered.
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[i]
            .partial_cmp(&eig.eigenvalues[j])
            .expect("finite eigenvalues")
    });
    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &eig.eigenvectors.column(src));
    }

    Ok(SymmetricEig {
        eigenvalues,
        eigenvectors,
    })
}

/// `exp(scale * A)` for symmetric `A`, via the eigendecomposition.
///
/// The result is symmetric positive-definite. Overflow (`|scale * lambda|`
/// beyond the `exp` range) is an error rather than a silent `inf`.
pub fn sym_expm<T: Real>(a: &DMatrix<T>, scale: T) -> Result<DMatrix<T>> {
    let eig = sym_eig(a)?;
    let worst = eig
        .eigenvalues
        .iter()
        .fold(0.0f64, |acc, l| acc.max((scale * *l).to_f64_lossy().abs()));
    if worst > EXP_OVERFLOW_LIMIT {
        return Err(Error::non_finite(format!(
            "sym_expm: |scale * lambda| = {worst:.1} exceeds exp range"
        )));
    }
    Ok(eig.map_rebuild(|l| (scale * l).exp()))
}

/// `log(S)` for symmetric positive-semidefinite `S`, with eigenvalues clamped
/// to at least `eig_floor` before the log.
///
/// Sample covariances are routinely rank-deficient; the floor turns their zero
/// modes into large negative log-eigenvalues instead of `-inf`.
pub fn sym_logm_psd<T: Real>(s: &DMatrix<T>, eig_floor: T) -> Result<DMatrix<T>> {
    if eig_floor <= T::zero() {
        return Err(Error::InvalidFloor {
            floor: eig_floor.to_f64_lossy(),
        });
    }
    let eig = sym_eig(s)?;
    let spectral_norm = eig
        .eigenvalues
        .iter()
        .fold(0.0f64, |acc, l| acc.max(l.to_f64_lossy().abs()));
    let min_allowed = -1e-8 * spectral_norm;
    if let Some(l) = eig
        .eigenvalues
        .iter()
        .find(|l| l.to_f64_lossy() < min_allowed)
    {
        return Err(Error::InvalidGraph {
            reason: format!("sym_logm_psd: eigenvalue {l} too negative for a PSD matrix"),
        });
    }
    Ok(eig.map_rebuild(|l| if l < eig_floor { eig_floor.ln() } else { l.ln() }))
}

/// Default eigenvalue floor for [`sym_logm_psd`]: `1e-6 * max(lambda_max, 1)`.
pub fn default_eig_floor<T: Real>(s: &DMatrix<T>) -> Result<T> {
    let eig = sym_eig(s)?;
    let lmax = eig
        .eigenvalues
        .iter()
        .fold(1.0f64, |acc, l| acc.max(l.to_f64_lossy()));
    Ok(T::from_f64_lossy(1e-6 * lmax))
}

/// Precomputed evaluator for the Gaussian log-density with covariance
/// `exp(-2 tau L)`.
///
/// One eigendecomposition of `L` serves any number of evaluations, which is
/// what the E-step needs. Uses the identities
/// `det(exp(-2 tau L)) = exp(-2 tau tr L)` and
/// `inv(exp(-2 tau L)) = exp(2 tau L)`:
/// the log-density at `x` is
/// `-(N/2) ln(2 pi) + tau tr(L) - 1/2 (x-mu)^T exp(2 tau L) (x-mu)`.
pub struct HeatLogDensity<T: Real> {
    eigenvectors: DMatrix<T>,
    /// `exp(2 tau lambda_i)` per eigenvalue.
    inv_cov_eigs: DVector<T>,
    mean: DVector<T>,
    /// `-(N/2) ln(2 pi) + tau tr(L)`.
    log_norm: T,
}

impl<T: Real> HeatLogDensity<T> {
    pub fn new(mean: &DVector<T>, laplacian: &DMatrix<T>, tau: T) -> Result<Self> {
        if tau <= T::zero() {
            return Err(Error::InvalidModel {
                reason: format!("tau must be > 0, got {tau}"),
            });
        }
        if mean.len() != laplacian.nrows() {
            return Err(Error::DimensionMismatch {
                context: "HeatLogDensity".into(),
                expected: laplacian.nrows(),
                found: mean.len(),
            });
        }
        let eig = sym_eig(laplacian)?;
        let two_tau = tau + tau;
        let worst = eig
            .eigenvalues
            .iter()
            .fold(f64::NEG_INFINITY, |acc, l| acc.max((two_tau * *l).to_f64_lossy()));
        if worst > EXP_OVERFLOW_LIMIT {
            return Err(Error::non_finite(format!(
                "heat_log_density: 2 tau lambda_max = {worst:.1} exceeds exp range"
            )));
        }
        let trace = eig.eigenvalues.iter().fold(T::zero(), |acc, l| acc + *l);
        let n = T::from_usize(mean.len()).expect("dimension fits scalar");
        let half = T::from_f64_lossy(0.5);
        let log_norm = tau * trace - half * n * T::two_pi().ln();
        Ok(Self {
            inv_cov_eigs: eig.eigenvalues.map(|l| (two_tau * l).exp()),
            eigenvectors: eig.eigenvectors,
            mean: mean.clone(),
            log_norm,
        })
    }

    /// Log-density of a single signal.
    pub fn log_density(&self, x: &DVector<T>) -> T {
        let y = self.eigenvectors.tr_mul(&(x - &self.mean));
        let quad = y
            .iter()
            .zip(self.inv_cov_eigs.iter())
            .fold(T::zero(), |acc, (yi, w)| acc + *w * *yi * *yi);
        self.log_norm - T::from_f64_lossy(0.5) * quad
    }

    /// Log-densities of every column of `x` at once.
    pub fn log_densities(&self, x: &DMatrix<T>) -> DVector<T> {
        let mut centered = x.clone();
        for mut col in centered.column_iter_mut() {
            col -= &self.mean;
        }
        let y = self.eigenvectors.tr_mul(&centered);
        let half = T::from_f64_lossy(0.5);
        DVector::from_iterator(
            x.ncols(),
            y.column_iter().map(|col| {
                let quad = col
                    .iter()
                    .zip(self.inv_cov_eigs.iter())
                    .fold(T::zero(), |acc, (yi, w)| acc + *w * *yi * *yi);
                self.log_norm - half * quad
            }),
        )
    }
}

/// Log-density of `x` under the Gaussian with mean `mu` and heat-kernel
/// covariance `exp(-2 tau L)`.
pub fn heat_log_density<T: Real>(
    x: &DVector<T>,
    mu: &DVector<T>,
    laplacian: &DMatrix<T>,
    tau: T,
) -> Result<T> {
    Ok(HeatLogDensity::new(mu, laplacian, tau)?.log_density(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::WeightedGraph;
    use crate::testutil::{dense_heat_log_density, random_symmetric, taylor_expm};
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_graph(n: usize, rng: &mut ChaCha8Rng) -> WeightedGraph<f64> {
        crate::testutil::random_graph(n, 0.6, rng)
    }

    #[test]
    fn eig_identity() {
        let eig = sym_eig(&DMatrix::<f64>::identity(3, 3)).unwrap();
        for l in eig.eigenvalues.iter() {
            assert_relative_eq!(*l, 1.0, max_relative = 1e-12);
        }
        let vtv = eig.eigenvectors.tr_mul(&eig.eigenvectors);
        assert!((vtv - DMatrix::<f64>::identity(3, 3)).norm() < 1e-8 * 3.0);
    }

    #[test]
    fn eig_diagonal_sorted_ascending() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![5.0, 2.0]));
        let eig = sym_eig(&a).unwrap();
        assert_relative_eq!(eig.eigenvalues[0], 2.0, epsilon = 1e-12);
        assert_relative_eq!(eig.eigenvalues[1], 5.0, epsilon = 1e-12);
        // V = I up to sign and column swap.
        for j in 0..2 {
            let col = eig.eigenvectors.column(j);
            assert_relative_eq!(col.amax(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn eig_reconstructs_random_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let a = random_symmetric(5, &mut rng);
            let eig = sym_eig(&a).unwrap();
            let rebuilt = eig.map_rebuild(|l| l);
            let tol = 1e-8 * a.norm().max(1.0);
            assert!((rebuilt - &a).norm() <= tol);
            let vtv = eig.eigenvectors.tr_mul(&eig.eigenvectors);
            assert!((vtv - DMatrix::<f64>::identity(5, 5)).norm() <= 1e-8 * 5.0);
        }
    }

    #[test]
    fn eig_rejects_nan() {
        let mut a = DMatrix::<f64>::zeros(2, 2);
        a[(0, 1)] = f64::NAN;
        a[(1, 0)] = f64::NAN;
        assert!(matches!(sym_eig(&a), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn eig_rejects_asymmetric() {
        let mut a = DMatrix::<f64>::identity(2, 2);
        a[(0, 1)] = 1.0;
        assert!(sym_eig(&a).is_err());
    }

    #[test]
    fn expm_of_zero_is_identity() {
        let z = DMatrix::<f64>::zeros(3, 3);
        let e = sym_expm(&z, -2.5).unwrap();
        assert!((e - DMatrix::<f64>::identity(3, 3)).norm() < 1e-14);
    }

    #[test]
    fn expm_diagonal() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0]));
        let e = sym_expm(&a, -1.0).unwrap();
        assert_relative_eq!(e[(0, 0)], (-1.0f64).exp(), max_relative = 1e-12);
        assert_relative_eq!(e[(1, 1)], (-2.0f64).exp(), max_relative = 1e-12);
        assert!(e[(0, 1)].abs() < 1e-15);
    }

    #[test]
    fn expm_matches_taylor_series_on_path_graph() {
        // Path on 3 nodes, unit weights.
        let mut w = DMatrix::<f64>::zeros(3, 3);
        w[(0, 1)] = 1.0;
        w[(1, 0)] = 1.0;
        w[(1, 2)] = 1.0;
        w[(2, 1)] = 1.0;
        let l = WeightedGraph::new(w).unwrap().laplacian();
        let by_eig = sym_expm(&l, -0.5).unwrap();
        let by_taylor = taylor_expm(&(&l * -0.5), 50);
        assert!((by_eig - by_taylor).norm() < 1e-10);
    }

    #[test]
    fn expm_overflow_is_an_error() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1000.0, 0.0]));
        assert!(matches!(sym_expm(&a, 1.0), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn expm_output_is_positive_definite() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let a = random_symmetric(4, &mut rng);
            let e = sym_expm(&a, 1.0).unwrap();
            let eig = sym_eig(&e).unwrap();
            assert!(eig.eigenvalues.iter().all(|l| *l > 0.0));
        }
    }

    #[test]
    fn logm_of_identity_is_zero() {
        let l = sym_logm_psd(&DMatrix::<f64>::identity(4, 4), 1e-9).unwrap();
        assert!(l.norm() < 1e-14);
    }

    #[test]
    fn logm_diagonal() {
        let s = DMatrix::from_diagonal(&DVector::from_vec(vec![
            std::f64::consts::E,
            std::f64::consts::E * std::f64::consts::E,
        ]));
        let l = sym_logm_psd(&s, 1e-9).unwrap();
        assert_relative_eq!(l[(0, 0)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(l[(1, 1)], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn logm_rejects_nonpositive_floor() {
        let s = DMatrix::<f64>::identity(2, 2);
        assert!(matches!(
            sym_logm_psd(&s, 0.0),
            Err(Error::InvalidFloor { .. })
        ));
        assert!(matches!(
            sym_logm_psd(&s, -1.0),
            Err(Error::InvalidFloor { .. })
        ));
    }

    #[test]
    fn logm_inverts_expm_on_heat_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = random_graph(4, &mut rng);
        let l = g.laplacian();
        let tau = 0.4;
        let cov = sym_expm(&l, -2.0 * tau).unwrap();
        let log_cov = sym_logm_psd(&cov, 1e-15).unwrap();
        assert!((log_cov - &l * (-2.0 * tau)).norm() < 1e-8);
    }

    #[test]
    fn logm_expm_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let mut a = random_symmetric(5, &mut rng);
            a *= 2.0; // spectral norm stays well under 5
            let e = sym_expm(&a, 1.0).unwrap();
            let back = sym_logm_psd(&e, 1e-300).unwrap();
            assert!((back - &a).norm() < 1e-7);
        }
    }

    #[test]
    fn heat_log_density_standard_normal_at_mode() {
        let l = DMatrix::<f64>::zeros(2, 2);
        let x = DVector::zeros(2);
        let mu = DVector::zeros(2);
        let d = heat_log_density(&x, &mu, &l, 1.0).unwrap();
        assert_relative_eq!(d, -(2.0 * std::f64::consts::PI).ln(), epsilon = 1e-12);
    }

    #[test]
    fn heat_log_density_standard_normal_off_mode() {
        let l = DMatrix::<f64>::zeros(2, 2);
        let x = DVector::from_vec(vec![1.0, 0.0]);
        let mu = DVector::zeros(2);
        let d = heat_log_density(&x, &mu, &l, 1.0).unwrap();
        assert_relative_eq!(
            d,
            -(2.0 * std::f64::consts::PI).ln() - 0.5,
            epsilon = 1e-12
        );
    }

    #[test]
    fn heat_log_density_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let g = random_graph(4, &mut rng);
        let l = g.laplacian();
        let tau = 0.3;
        for _ in 0..20 {
            let x = DVector::from_fn(4, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            let mu = DVector::from_fn(4, |_, _| rng.random::<f64>() * 0.5);
            let ours = heat_log_density(&x, &mu, &l, tau).unwrap();
            let oracle = dense_heat_log_density(&x, &mu, &l, tau);
            assert!(
                (ours - oracle).abs() < 1e-8,
                "density mismatch: {ours} vs {oracle}"
            );
        }
    }

    #[test]
    fn spectral_log_det_identity() {
        // log det exp(-2 tau L) computed from the spectrum equals -2 tau tr(L).
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let g = random_graph(5, &mut rng);
        let l = g.laplacian();
        let tau = 0.25;
        let cov = sym_expm(&l, -2.0 * tau).unwrap();
        let eig = sym_eig(&cov).unwrap();
        let log_det: f64 = eig.eigenvalues.iter().map(|v| v.ln()).sum();
        assert!((log_det + 2.0 * tau * l.trace()).abs() < 1e-8);
    }

    #[test]
    fn batch_log_densities_match_single() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let g = random_graph(4, &mut rng);
        let l = g.laplacian();
        let mu = DVector::from_fn(4, |_, _| rng.random::<f64>());
        let eval = HeatLogDensity::new(&mu, &l, 0.4).unwrap();
        let x = DMatrix::from_fn(4, 6, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let batch = eval.log_densities(&x);
        for (m, col) in x.column_iter().enumerate() {
            let single = eval.log_density(&col.into_owned());
            assert_relative_eq!(batch[m], single, epsilon = 1e-12);
        }
    }
}
