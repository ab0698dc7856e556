//! Pricing and calibration of European options under exponential Volterra
//! stochastic volatility.

pub mod approx;
pub mod bs;
pub mod calibration;
pub mod cli;
pub mod error;
pub mod kernels;
pub mod mc;
pub mod model;
pub mod quadrature;

pub use error::{Error, Result};
