//! Equilibrium construction and long-run survival diagnostics for a
//! two-trader limited-participation economy with power utilities and
//! heterogeneous time preferences.
//!
//! Pipeline: [`params`] validates primitives, [`ode`] integrates the singular
//! governing equation, [`shooting`] locates the critical shooting parameter,
//! [`equilibrium`] builds the interest rate, market price of risk and the
//! consumption-share dynamics, [`survival`] classifies the boundaries of the
//! share diffusion and [`sim`] checks the classification by Monte Carlo.

// `!(x > 0.0)` is used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod equilibrium;
pub mod error;
pub mod numerics;
pub mod ode;
pub mod params;
pub mod shooting;
pub mod sim;
pub mod survival;

pub use error::{Error, Result, ValidationError};
pub use params::{derive_params, survival_regime, ModelParams, RawParams, RegimeTag};
