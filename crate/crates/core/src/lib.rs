//! Gaussian-process regression with one-dimensional probability
//! distributions as inputs.
//!
//! Distributions are represented by their quantile functions on a common
//! midpoint grid, where the quadratic Wasserstein distance W₂ is an exact
//! Euclidean distance. Covariance kernels built from W₂ (fractional
//! Brownian and power-exponential) are then fitted by maximum likelihood and
//! used for Kriging. Projection-based baseline kernels, simulation drivers
//! and numerical checks of kernel validity are included.

// NaN-rejecting checks are written as negated comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod distribution;
pub mod error;
pub mod gp;
pub mod io;
pub mod kernels;
pub mod linalg;
pub mod metrics;
pub mod optim;
pub mod simulation;

pub use distribution::{
    distance_matrix, moments_of, quantile_from_density, quantile_from_samples, shift, w2_distance, w2_oracle_discrete,
    EmpiricalDistribution, GridDensity, Moments, QuantileFunction, DEFAULT_GRID_SIZE,
};
pub use error::{Error, Result};
pub use gp::{
    build_gram, fisher_information, fit_ml, info_matrix, neg_log_lik, neg_log_lik_grad, Coordinates, Dataset,
    FitConfig, FitOutcome, GPModel, InfoMatrix, ModelFile, NuggetMode, Prediction, Provenance,
};
pub use kernels::{
    fbm_kernel, legendre_features, pca_features, pca_fit, powexp_kernel, projection_kernel, FbmParams, FeatureVector,
    InputRef, Inputs, KernelFamily, KernelSpec, PcaBasis, PowExpParams, ProjectionParams,
};
pub use metrics::{cir, rmse};
