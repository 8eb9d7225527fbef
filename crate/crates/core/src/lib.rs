//! Finite-sample accuracy of high-quantile risk estimates under a
//! generalized Pareto tail model.
//!
//! The crate covers the whole chain from a loss series to a bias-corrected
//! quantile:
//!
//! - [`gpd`]: the generalized Pareto distribution itself;
//! - [`mle`]: maximum-likelihood fitting and the asymptotic covariance of
//!   the estimators;
//! - [`tail`]: threshold selection and parent-distribution quantiles;
//! - [`density`]: the finite-sample density of the plug-in quantile
//!   estimator, its moments and bias/variance surfaces;
//! - [`bias`]: the power-law bias model and the corrected estimator;
//! - [`simulation`]: Monte Carlo validation against the theory.

pub mod bias;
pub mod density;
pub mod error;
pub mod gpd;
pub mod mle;
pub mod optim;
pub mod quadrature;
pub mod simulation;
pub mod tail;

pub use bias::{bias_law, bias_practical, correct_quantile, fit_bias_law, BiasLaw, BiasLawParams, BiasSurface, SurfaceRow};
pub use density::{
    bias_variance_surface, cdf_of_estimator, density, psi, stats, stats_by_quadrature, DensitySpec,
    QuadratureConfig, QuantileStats,
};
pub use error::{Error, Result};
pub use gpd::{ConfidenceLevel, GpdParams};
pub use mle::{asymptotic_covariance, log_likelihood, AsymptoticCovariance, MleEstimate};
pub use simulation::{check_mle_asymptotics, ks_test, run, SimConfig, SimReport};
pub use tail::{
    estimate_parent_quantile, parent_quantile_from_tail_quantile, select_tail, Sample, TailFit, TailModel,
    TailSelection,
};
