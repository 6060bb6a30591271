//! Sparse, banded, dense, and linear-programming kernels.  Everything here is
//! self-contained; the rest of the crate treats this module as its numerical
//! substrate.

pub mod band;
pub mod dense;
pub mod lp;
pub mod sparse;

pub use band::{BandCholesky, BandLu};
pub use sparse::{linear_combination, unify_patterns, CsrMatrix};
