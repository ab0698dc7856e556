use super::{check_conditioning, check_hurst, check_pair, check_time, VolterraKernel};
use crate::error::{Error, Result};
use crate::quadrature::power_product_integral;

/// Shifted power kernel `K(t,s) = √(2H) (t − s + ε)^{H−½}`.
///
/// With `ε = 0` this is the Riemann–Liouville fractional Brownian motion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApproxFbm {
    hurst: f64,
    epsilon: f64,
    scale: f64,
}

impl ApproxFbm {
    pub fn new(hurst: f64, epsilon: f64) -> Result<Self> {
        check_hurst(hurst)?;
        if !(epsilon.is_finite() && epsilon >= 0.0) {
            return Err(Error::domain(format!(
                "shift must be non-negative, got {epsilon}"
            )));
        }
        Ok(ApproxFbm {
            hurst,
            epsilon,
            scale: (2.0 * hurst).sqrt(),
        })
    }

    fn p(&self) -> f64 {
        self.hurst - 0.5
    }

    // ∫_{m−len}^{m} K(u1,v) K(u2,v) dv with m = min(u1, u2)
    fn product_integral(&self, u1: f64, u2: f64, len: f64) -> Result<f64> {
        let m = u1.min(u2);
        let a = u1 - m + self.epsilon;
        let b = u2 - m + self.epsilon;
        Ok(2.0 * self.hurst * power_product_integral(a, b, len, self.p())?)
    }
}

impl VolterraKernel for ApproxFbm {
    fn name(&self) -> &'static str {
        "afbm"
    }

    fn hurst(&self) -> f64 {
        self.hurst
    }

    fn shift(&self) -> f64 {
        self.epsilon
    }

    fn is_standard_wiener(&self) -> bool {
        self.hurst == 0.5
    }

    fn eval(&self, t: f64, s: f64) -> Result<f64> {
        check_pair(t, s)?;
        let d = t - s + self.epsilon;
        let p = self.p();
        if d == 0.0 && p < 0.0 {
            return Err(Error::Singular {
                kernel: self.name().into(),
                t,
                s,
            });
        }
        Ok(self.scale * d.powf(p))
    }

    fn regular_part(&self, t: f64, s: f64) -> Result<f64> {
        check_pair(t, s)?;
        Ok(self.scale)
    }

    fn variance(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        let e = 2.0 * self.hurst;
        Ok((t + self.epsilon).powf(e) - self.epsilon.powf(e))
    }

    fn autocovariance(&self, t: f64, s: f64) -> Result<f64> {
        check_time(t)?;
        check_time(s)?;
        if t == s {
            return self.variance(t);
        }
        self.product_integral(t, s, t.min(s))
    }

    fn observed_covariance(&self, u1: f64, u2: f64, t: f64) -> Result<f64> {
        check_conditioning(u1, u2, t)?;
        // w = t − v maps ∫₀ᵗ onto offsets u − t + ε
        let a = u1 - t + self.epsilon;
        let b = u2 - t + self.epsilon;
        Ok(2.0 * self.hurst * power_product_integral(a, b, t, self.p())?)
    }

    fn conditional_covariance(&self, u1: f64, u2: f64, t: f64) -> Result<f64> {
        check_conditioning(u1, u2, t)?;
        if u1 == u2 {
            let e = 2.0 * self.hurst;
            return Ok((u1 - t + self.epsilon).powf(e) - self.epsilon.powf(e));
        }
        self.product_integral(u1, u2, u1.min(u2) - t)
    }

    fn increment_integral(&self, t: f64, a: f64, b: f64) -> Result<f64> {
        check_pair(t, b)?;
        check_pair(b, a)?;
        let q = self.hurst + 0.5;
        let hi = (t - a + self.epsilon).powf(q);
        let lo = (t - b + self.epsilon).powf(q);
        Ok(self.scale * (hi - lo) / q)
    }
}
