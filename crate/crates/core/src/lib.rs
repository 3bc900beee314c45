//! Numerical laboratory for localization of imaginary-order Riesz means of polyharmonic
//! spectral expansions.
//!
//! Fields live on a periodized cube `[-L/2, L/2)^N` (`N <= 3`). The crate provides the
//! unitary lattice transform, the truncated symbols and their partial integrals and maximal
//! functions, a smooth dyadic partition of unity with its Fourier profile, the localized
//! multiplier lab, independent brute-force oracles, and the experiment drivers built on top.
// NaN-rejecting checks read as `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod decomposition;
pub mod error;
pub mod expansion;
pub mod experiments;
pub mod field;
pub mod multiplier;
pub mod oracles;
pub mod quadrature;
pub mod symbols;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
