//! Multi-group confirmatory factor analysis for ordinal items.
//!
//! The measurement model is an ordinal probit: each item's continuous latent
//! response `λ_gj η + ε` is cut at group-specific thresholds `τ_gj`. Models
//! are fitted by full-information marginal maximum likelihood with
//! Gauss–Hermite integration over the single latent trait, and compared along
//! the configural → metric → scalar invariance ladder or under anchor-based
//! partial scalar invariance, where only designated anchor items have their
//! thresholds equated across groups.
//!
//! Modules:
//!
//! - [`data`], [`spec`], [`params`], [`constraints`]: domain types and the
//!   tie/fixed bookkeeping behind each invariance level.
//! - [`kernel`]: category probabilities, quadrature, marginal likelihood and
//!   posterior moments, generic over [`Scalar`].
//! - [`estimator`]: constrained quasi-Newton fitting, standard errors,
//!   likelihood-ratio tests.
//! - [`invariance`]: anchor validation and invariance ladders.
//! - [`analysis`]: threshold differences, latent gaps, EAP scores,
//!   structural effects.
//! - [`simulation`]: Monte Carlo evaluation of group-difference estimators
//!   under threshold non-invariance.
//! - [`io`]: CSV ingestion, run configuration and result emission.

pub mod analysis;
pub mod constraints;
pub mod data;
pub mod error;
pub mod estimator;
pub mod invariance;
pub mod io;
pub mod kernel;
pub mod params;
pub mod scalar;
pub mod simulation;
pub mod spec;

pub use constraints::{build_constraints, ConstraintSet};
pub use data::{validate_dataset, Item, ItemRole, OrdinalDataset, Row};
pub use error::{Error, Result};
pub use estimator::{fit, lrt, FitOptions, FitResult, LrtResult};
pub use params::{Coord, ParameterSet};
pub use scalar::Scalar;
pub use spec::{ConstraintLevel, ModelSpec};

/// Parameters in double precision, as produced by the estimator.
pub type Parameters = ParameterSet<f64>;
/// Single-precision parameters for kernel-only evaluation.
pub type Parameters32 = ParameterSet<f32>;
pub type Rule = kernel::QuadratureRule<f64>;
pub type Rule32 = kernel::QuadratureRule<f32>;
