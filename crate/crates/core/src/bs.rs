//! Black-Scholes call price in log-spot coordinates and the operators
//! `Γ = ∂²ₓ − ∂ₓ`, `ΛΓ` and `Γ²` applied to it.
//!
//! The operators multiply the volatility-of-volatility corrections in the
//! decomposition price, so they are evaluated from closed forms rather than
//! by differencing.

use std::f64::consts::{PI, SQRT_2};

use libm::erfc;

use crate::error::{ensure_finite, Error, Result};

/// Black-Scholes evaluation point.
///
/// `x` is the log spot, `y` the (constant) volatility and `t` the current
/// time; the option expires at `maturity` with strike `strike`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BSInputs {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub strike: f64,
    pub rate: f64,
    pub maturity: f64,
}

impl BSInputs {
    /// Evaluation at `t = 0` from a spot price.
    pub fn at_origin(spot: f64, strike: f64, rate: f64, maturity: f64, vol: f64) -> Self {
        BSInputs {
            t: 0.0,
            x: spot.ln(),
            y: vol,
            strike,
            rate,
            maturity,
        }
    }

    pub fn tau(&self) -> f64 {
        self.maturity - self.t
    }

    pub fn with_vol(self, y: f64) -> Self {
        BSInputs { y, ..self }
    }

    pub fn with_log_spot(self, x: f64) -> Self {
        BSInputs { x, ..self }
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("t", self.t),
            ("x", self.x),
            ("y", self.y),
            ("strike", self.strike),
            ("rate", self.rate),
            ("maturity", self.maturity),
        ] {
            ensure_finite(name, v)?;
        }
        if self.tau() <= 0.0 {
            return Err(Error::domain(format!(
                "time to maturity must be positive, got {}",
                self.tau()
            )));
        }
        if self.strike <= 0.0 {
            return Err(Error::domain(format!(
                "strike must be positive, got {}",
                self.strike
            )));
        }
        if self.rate < 0.0 {
            return Err(Error::domain(format!(
                "rate must be non-negative, got {}",
                self.rate
            )));
        }
        if self.y < 0.0 {
            return Err(Error::domain(format!(
                "volatility must be non-negative, got {}",
                self.y
            )));
        }
        Ok(())
    }

    fn discounted_strike(&self) -> f64 {
        self.strike * (-self.rate * self.tau()).exp()
    }

    /// `d₊(y)`; requires `y > 0`.
    pub fn d_plus(&self) -> f64 {
        let tau = self.tau();
        (self.x - self.strike.ln() + (self.rate + 0.5 * self.y * self.y) * tau)
            / (self.y * tau.sqrt())
    }

    /// `d₋(y)`; requires `y > 0`.
    pub fn d_minus(&self) -> f64 {
        self.d_plus() - self.y * self.tau().sqrt()
    }
}

/// Standard normal CDF through `erfc`, accurate in both tails.
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

pub fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// European call price `eˣΦ(d₊) − Ke^{−rτ}Φ(d₋)`.
///
/// `y = 0` returns the zero-volatility limit `max(eˣ − Ke^{−rτ}, 0)`.
pub fn bs_price(inp: &BSInputs) -> Result<f64> {
    inp.validate()?;
    let spot = inp.x.exp();
    let df_strike = inp.discounted_strike();
    if inp.y == 0.0 {
        return Ok((spot - df_strike).max(0.0));
    }
    let dp = inp.d_plus();
    let dm = inp.d_minus();
    let price = spot * norm_cdf(dp) - df_strike * norm_cdf(dm);
    // Cancellation deep in the money can leave the result a few ulps below
    // the lower arbitrage bound.
    Ok(price.max((spot - df_strike).max(0.0)))
}

/// European put through put-call parity.
pub fn bs_put_price(inp: &BSInputs) -> Result<f64> {
    let call = bs_price(inp)?;
    Ok((call - inp.x.exp() + inp.discounted_strike()).max(0.0))
}

fn check_positive_vol(inp: &BSInputs) -> Result<()> {
    inp.validate()?;
    if inp.y <= 0.0 {
        return Err(Error::domain(format!(
            "Γ-operators require strictly positive volatility, got {}",
            inp.y
        )));
    }
    Ok(())
}

/// `ΓBS = eˣ e^{−d₊²/2} / (y√(2πτ))`.
pub fn gamma_bs(inp: &BSInputs) -> Result<f64> {
    check_positive_vol(inp)?;
    let dp = inp.d_plus();
    Ok(inp.x.exp() * (-0.5 * dp * dp).exp() / (inp.y * (2.0 * PI * inp.tau()).sqrt()))
}

/// `ΛΓBS = ΓBS · (1 − d₊/(y√τ))`.
pub fn lambda_gamma_bs(inp: &BSInputs) -> Result<f64> {
    let g = gamma_bs(inp)?;
    let sd = inp.y * inp.tau().sqrt();
    Ok(g * (1.0 - inp.d_plus() / sd))
}

/// `Γ²BS = ΓBS · (d₊² − y d₊√τ − 1)/(y²τ)`.
pub fn gamma2_bs(inp: &BSInputs) -> Result<f64> {
    let g = gamma_bs(inp)?;
    let dp = inp.d_plus();
    let tau = inp.tau();
    let sd = inp.y * tau.sqrt();
    Ok(g * (dp * dp - dp * sd - 1.0) / (inp.y * inp.y * tau))
}

/// Black-Scholes implied volatility of a call price by bracketed bisection
/// on `[1e-8, 10]`. Returns `None` when the price is outside the
/// no-arbitrage range.
pub fn implied_vol_call(
    price: f64,
    spot: f64,
    strike: f64,
    rate: f64,
    maturity: f64,
) -> Option<f64> {
    let base = BSInputs::at_origin(spot, strike, rate, maturity, 0.0);
    let lower = bs_price(&base).ok()?;
    if !(price > lower && price < spot) {
        return None;
    }
    let (mut lo, mut hi) = (1e-8_f64, 10.0_f64);
    if bs_price(&base.with_vol(hi)).ok()? < price {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let p = bs_price(&base.with_vol(mid)).ok()?;
        if p < price {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 * hi.max(1.0) {
            break;
        }
    }
    Some(0.5 * (lo + hi))
}
