//! Small numerical kernels shared by the solver modules.

pub mod extrap;
pub mod pchip;
pub mod quad;
pub mod rk;

pub use extrap::{asymptotic_terms, exponent_lattice, extrapolate, loglog_fit, loglog_fit_corrected, logspace, richardson, Extrapolated, Term};
pub use pchip::Pchip;
