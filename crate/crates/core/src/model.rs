//! Model parameters and contract terms.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{ensure_finite, Error, Result};
use crate::kernels::{KernelSpec, VolterraKernel};

/// Parameters of `σ_t = σ₀ exp{ξ Y_t − ½ α ξ² r(t)}` with `corr(dW, dZ) = ρ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub sigma0: f64,
    pub xi: f64,
    pub rho: f64,
    pub hurst: f64,
    pub alpha: f64,
    pub epsilon: f64,
}

impl ModelParams {
    /// Checks the parameter box. `ξ = 0` (deterministic volatility) and the
    /// closed correlation interval `ρ = ±1` are accepted as limits.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sigma0", self.sigma0),
            ("xi", self.xi),
            ("rho", self.rho),
            ("hurst", self.hurst),
            ("alpha", self.alpha),
            ("epsilon", self.epsilon),
        ] {
            ensure_finite(name, v)?;
        }
        if self.sigma0 <= 0.0 {
            return Err(Error::domain(format!(
                "sigma0 must be > 0, got {}",
                self.sigma0
            )));
        }
        if self.xi < 0.0 {
            return Err(Error::domain(format!("xi must be ≥ 0, got {}", self.xi)));
        }
        if !(-1.0..=1.0).contains(&self.rho) {
            return Err(Error::domain(format!(
                "rho must lie in [-1, 1], got {}",
                self.rho
            )));
        }
        if !(self.hurst > 0.0 && self.hurst < 1.0) {
            return Err(Error::domain(format!(
                "hurst must lie in (0, 1), got {}",
                self.hurst
            )));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::domain(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        if self.epsilon < 0.0 {
            return Err(Error::domain(format!(
                "epsilon must be ≥ 0, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }

    /// Shifted power kernel with this parameter set's `H` and `ε`.
    pub fn afbm_kernel(&self) -> Result<Arc<dyn VolterraKernel>> {
        KernelSpec::ApproxFbm {
            hurst: self.hurst,
            epsilon: self.epsilon,
        }
        .build()
    }
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            sigma0: 0.08,
            xi: 0.1,
            rho: -0.2,
            hurst: 0.1,
            alpha: 1.0,
            epsilon: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OptionKind {
    Call,
    Put,
}

impl FromStr for OptionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "call" => Ok(OptionKind::Call),
            "put" => Ok(OptionKind::Put),
            other => Err(Error::input(
                None,
                format!("option kind must be `call` or `put`, got `{other}`"),
            )),
        }
    }
}

impl fmt::Display for OptionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptionKind::Call => "call",
            OptionKind::Put => "put",
        })
    }
}

/// A European contract on a spot `S₀` with continuously compounded rate `r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketQuote {
    pub spot: f64,
    pub strike: f64,
    pub rate: f64,
    pub maturity: f64,
    pub kind: OptionKind,
}

impl MarketQuote {
    pub fn call(spot: f64, strike: f64, rate: f64, maturity: f64) -> Self {
        MarketQuote {
            spot,
            strike,
            rate,
            maturity,
            kind: OptionKind::Call,
        }
    }

    pub fn put(spot: f64, strike: f64, rate: f64, maturity: f64) -> Self {
        MarketQuote {
            kind: OptionKind::Put,
            ..Self::call(spot, strike, rate, maturity)
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("spot", self.spot),
            ("strike", self.strike),
            ("rate", self.rate),
            ("maturity", self.maturity),
        ] {
            ensure_finite(name, v)?;
        }
        if self.spot <= 0.0 || self.strike <= 0.0 {
            return Err(Error::domain("spot and strike must be > 0"));
        }
        if self.rate < 0.0 {
            return Err(Error::domain(format!(
                "rate must be ≥ 0, got {}",
                self.rate
            )));
        }
        if self.maturity <= 0.0 {
            return Err(Error::domain(format!(
                "maturity must be > 0, got {}",
                self.maturity
            )));
        }
        Ok(())
    }

    pub fn forward(&self) -> f64 {
        self.spot * (self.rate * self.maturity).exp()
    }

    pub fn moneyness(&self) -> f64 {
        self.strike / self.spot
    }

    /// Converts a call value into this contract's value by put–call parity.
    pub fn from_call_value(&self, call: f64) -> f64 {
        match self.kind {
            OptionKind::Call => call,
            OptionKind::Put => call - self.spot + self.strike * (-self.rate * self.maturity).exp(),
        }
    }
}
