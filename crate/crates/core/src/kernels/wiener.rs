use super::{check_conditioning, check_pair, check_time, VolterraKernel};
use crate::error::Result;

/// `K(t, s) = 1`: `Y` is the driving Brownian motion itself.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Wiener;

impl VolterraKernel for Wiener {
    fn name(&self) -> &'static str {
        "wiener"
    }

    fn hurst(&self) -> f64 {
        0.5
    }

    fn is_standard_wiener(&self) -> bool {
        true
    }

    fn eval(&self, t: f64, s: f64) -> Result<f64> {
        check_pair(t, s)?;
        Ok(1.0)
    }

    fn regular_part(&self, t: f64, s: f64) -> Result<f64> {
        check_pair(t, s)?;
        Ok(1.0)
    }

    fn variance(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(t)
    }

    fn autocovariance(&self, t: f64, s: f64) -> Result<f64> {
        check_time(t)?;
        check_time(s)?;
        Ok(t.min(s))
    }

    fn observed_covariance(&self, u1: f64, u2: f64, t: f64) -> Result<f64> {
        check_conditioning(u1, u2, t)?;
        Ok(t)
    }

    fn conditional_covariance(&self, u1: f64, u2: f64, t: f64) -> Result<f64> {
        check_conditioning(u1, u2, t)?;
        Ok(u1.min(u2) - t)
    }

    fn increment_integral(&self, t: f64, a: f64, b: f64) -> Result<f64> {
        check_pair(t, b)?;
        check_pair(b, a)?;
        Ok(b - a)
    }
}
