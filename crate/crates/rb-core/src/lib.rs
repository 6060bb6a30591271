//! Certified reduced-basis model reduction with a hierarchical error
//! estimator.
//!
//! The pipeline: a [`truth::TruthModel`] describes a parametrized problem
//! through affine operator/load/inner-product terms; greedy drivers in
//! [`greedy`] build a [`basis::ReducedBasis`] from truth snapshots (and,
//! for the hierarchical variant, parameter-derivative snapshots from
//! [`taylor`]); the Galerkin projection lives in [`reduced`]; error
//! certification comes either from residual/stability bounds
//! ([`estimator`], [`scm`]) or from the two-level difference surrogate
//! whose saturation constant is estimated in [`saturation`].  Offline
//! artifacts persist through [`io`].
//!
//! Everything numeric is generic over [`Scalar`]; the aliases below fix the
//! two fields used by the bundled benchmark problems.

pub mod basis;
pub mod error;
pub mod estimator;
pub mod greedy;
pub mod io;
pub mod linalg;
pub mod param;
pub mod problems;
pub mod reduced;
pub mod saturation;
pub mod scalar;
pub mod scm;
pub mod taylor;
pub mod theta;
pub mod truth;

pub use error::{Error, Result};
pub use scalar::{Field, Scalar};

/// Default real field.
pub type Real = f64;
/// Default complex field.
pub type Cplx = num_complex::Complex<f64>;

/// Truth model over the default real field.
pub type RealTruthModel = truth::TruthModel<Real>;
/// Truth model over the default complex field.
pub type CplxTruthModel = truth::TruthModel<Cplx>;
/// Reduced basis over the default real field.
pub type RealBasis = basis::ReducedBasis<Real>;
/// Reduced basis over the default complex field.
pub type CplxBasis = basis::ReducedBasis<Cplx>;
/// Projected model over the default real field.
pub type RealReducedModel = reduced::ReducedModel<Real>;
/// Projected model over the default complex field.
pub type CplxReducedModel = reduced::ReducedModel<Cplx>;
