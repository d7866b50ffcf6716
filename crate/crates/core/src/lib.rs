//! Joint clustering and multi-graph inference for signals generated by heat
//! diffusion on unknown graphs.
//!
//! A set of multivariate signals is modelled as a mixture: each signal belongs
//! to one of `K` latent clusters and follows a Gaussian whose covariance is the
//! heat kernel `exp(-2 tau L_k)` of that cluster's graph Laplacian. Fitting
//! alternates expectation steps (cluster responsibilities) with maximisation
//! steps (mixture weights, means, sample covariances, and a sparse
//! graph-recovery solve per cluster).
//!
//! Modules:
//! - [`spectral`]: symmetric eigendecomposition, matrix exp/log, heat-kernel
//!   Gaussian log-densities.
//! - [`model`]: graphs, signal sets, mixture parameters, responsibilities.
//! - [`graphlearn`]: FISTA solver for the per-cluster graph-recovery problem.
//! - [`em`]: the full expectation-maximisation loop with restarts.
//! - [`synth`]: random connected graphs and mixture signal sampling.
//! - [`metrics`]: permutation-matched clustering error and edge F-measure.
//! - [`baselines`]: Gaussian-mixture and k-means comparison methods.
//! - [`io`]: CSV / edge-list / bundle formats.
//!
//! All numerics are generic over the scalar type via [`scalar::Real`];
//! concrete `f64` aliases live at the crate root.

pub mod baselines;
pub mod em;
pub mod error;
pub mod graphlearn;
pub mod io;
pub mod metrics;
pub mod model;
pub mod scalar;
pub mod spectral;
pub mod synth;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
pub use scalar::Real;

/// Default scalar-precision aliases for the main domain types.
pub type WeightedGraph64 = model::WeightedGraph<f64>;
pub type SignalSet64 = model::SignalSet<f64>;
pub type HeatMixtureModel64 = model::HeatMixtureModel<f64>;
pub type ResponsibilityMatrix64 = model::ResponsibilityMatrix<f64>;
pub type FitConfig64 = model::FitConfig<f64>;
pub type FitResult64 = em::FitResult<f64>;
