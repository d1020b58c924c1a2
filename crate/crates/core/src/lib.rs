//! Spherical functions and radial heat kernels for the complex root system
//! `A_n` (multiplicity one), together with their two-sided envelopes.
//!
//! Everything here is pure computation over `alloc`; file formats, sweeps
//! and the command line live in the `dunkl-an` companion crate.
//!
//! Conventions used throughout:
//!
//! * The Cartan subalgebra is `R^{n+1}` with the standard inner product; no
//!   trace-zero constraint is imposed.
//! * Roots are `e_i - e_j` (`|alpha|^2 = 2`), so `alpha_{ij}(X) = x_i - x_j`.
//! * Kernel values are carried in the log domain ([`EvalResult`]).

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

mod bigfloat;
pub mod error;
pub mod factorization;
pub mod haar;
pub mod heat;
pub mod quadrature;
pub mod root_system;
pub mod spherical;
pub mod summation;

pub use error::{Error, Result};
pub use root_system::{ChamberPoint, RootSystem, WeylElement};
pub use spherical::{EvalResult, Method, Regime, RegimeLabel};

/// Largest rank accepted by default. `(n+1)!` terms enter every alternating sum.
pub const DEFAULT_RANK_CAP: usize = 8;

/// Natural log of the superfactorial `1! 2! ... n!`.
///
/// For `A_n` this is `log(pi(rho) / 2^gamma)`, the normalising constant of the
/// alternating-sum formula.
pub fn ln_superfactorial(n: usize) -> f64 {
    (1..=n).map(ln_factorial).sum()
}

/// Natural log of `n!`.
pub fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| libm::log(k as f64)).sum()
}
