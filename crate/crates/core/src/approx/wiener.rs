//! Closed forms for volatility driven by a standard Wiener process
//! (`K ≡ 1`, `r(t) = t`).

use crate::error::{Error, Result};
use crate::model::ModelParams;

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::domain(format!(
            "alpha must lie in [0, 1], got {alpha}"
        )));
    }
    Ok(())
}

// eˣ − 1 − x without cancellation.
fn exp_rem1(x: f64) -> f64 {
    if x.abs() < 0.1 {
        let mut term = x * x / 2.0;
        let mut acc = term;
        for k in 3..30 {
            term *= x / k as f64;
            acc += term;
            if term.abs() < 1e-18 * acc.abs() {
                break;
            }
        }
        acc
    } else {
        x.exp_m1() - x
    }
}

// eˣ − 1 − x − x²/2 without cancellation.
fn exp_rem2(x: f64) -> f64 {
    if x.abs() < 0.1 {
        let mut term = x * x * x / 6.0;
        let mut acc = term;
        for k in 4..30 {
            term *= x / k as f64;
            acc += term;
            if term.abs() < 1e-18 * acc.abs() {
                break;
            }
        }
        acc
    } else {
        x.exp_m1() - x - 0.5 * x * x
    }
}

/// `v₀` for the Wiener-driven model: `v₀² = σ₀² (e^{cT} − 1)/(cT)`, `c = (2−α)ξ²`.
pub fn v0_wiener_closed(params: &ModelParams, maturity: f64) -> Result<f64> {
    check_alpha(params.alpha)?;
    let c = (2.0 - params.alpha) * params.xi * params.xi * maturity;
    if c == 0.0 {
        return Ok(params.sigma0);
    }
    Ok(params.sigma0 * (c.exp_m1() / c).sqrt())
}

/// U₀ for the Wiener-driven model, general `α`.
///
/// `2ρσ₀³ / (3(2−α)(3−α)(5−α)ξ³) · [2(2−α)e^{3/2 ξ²(3−α)T} − 3(3−α)e^{ξ²(2−α)T} + 5 − α]`,
/// with the bracket rewritten through `eˣ − 1 − x` since its constant and
/// linear parts cancel.
pub fn u0_wiener_closed(params: &ModelParams, maturity: f64) -> Result<f64> {
    check_alpha(params.alpha)?;
    let (s, xi, rho, a) = (params.sigma0, params.xi, params.rho, params.alpha);
    if xi == 0.0 || rho == 0.0 {
        return Ok(0.0);
    }
    let x = xi * xi * maturity;
    let bracket =
        2.0 * (2.0 - a) * exp_rem1(1.5 * (3.0 - a) * x) - 3.0 * (3.0 - a) * exp_rem1((2.0 - a) * x);
    Ok(2.0 * rho * s.powi(3) * bracket / (3.0 * (2.0 - a) * (3.0 - a) * (5.0 - a) * xi.powi(3)))
}

/// R₀ for the Wiener-driven model, general `α`.
///
/// `σ₀⁴ / (8(2−α)²(4−α)(6−α)ξ⁴) · [(2−α)²e^{2(4−α)x} − (4−α)(6−α)e^{2(2−α)x} + 8(4−α)e^{(2−α)x} − 2(6−α)]`
/// with `x = ξ²T`; the bracket starts at order `x³`.
pub fn r0_wiener_closed(params: &ModelParams, maturity: f64) -> Result<f64> {
    check_alpha(params.alpha)?;
    let (s, xi, a) = (params.sigma0, params.xi, params.alpha);
    if xi == 0.0 {
        return Ok(0.0);
    }
    let x = xi * xi * maturity;
    let b = 2.0 - a;
    let bracket = b * b * exp_rem2(2.0 * (4.0 - a) * x)
        - (4.0 - a) * (6.0 - a) * exp_rem2(2.0 * b * x)
        + 8.0 * (4.0 - a) * exp_rem2(b * x);
    Ok(s.powi(4) * bracket / (8.0 * b * b * (4.0 - a) * (6.0 - a) * xi.powi(4)))
}

/// U₀ for `α = 0`: `ρσ₀³/(45ξ³) [4e^{9/2 ξ²T} − 9e^{2ξ²T} + 5]`.
pub fn u0_wiener_alpha0(sigma0: f64, xi: f64, rho: f64, maturity: f64) -> f64 {
    let x = xi * xi * maturity;
    rho * sigma0.powi(3) / (45.0 * xi.powi(3))
        * (4.0 * (4.5 * x).exp() - 9.0 * (2.0 * x).exp() + 5.0)
}

/// R₀ for `α = 0`: `σ₀⁴/(192ξ⁴) (e^{2ξ²T} − 1)³ (e^{2ξ²T} + 3)`.
pub fn r0_wiener_alpha0(sigma0: f64, xi: f64, maturity: f64) -> f64 {
    let x = xi * xi * maturity;
    let e = (2.0 * x).exp_m1();
    sigma0.powi(4) / (192.0 * xi.powi(4)) * e.powi(3) * (e + 4.0)
}

/// U₀ for `α = 1`: `ρσ₀³/(6ξ³) [e^{3ξ²T} − 3e^{ξ²T} + 2]`.
pub fn u0_wiener_alpha1(sigma0: f64, xi: f64, rho: f64, maturity: f64) -> f64 {
    let x = xi * xi * maturity;
    rho * sigma0.powi(3) / (6.0 * xi.powi(3)) * ((3.0 * x).exp() - 3.0 * x.exp() + 2.0)
}

/// R₀ for `α = 1`: `σ₀⁴/(120ξ⁴) [e^{6ξ²T} − 15e^{2ξ²T} + 24e^{ξ²T} − 10]`.
pub fn r0_wiener_alpha1(sigma0: f64, xi: f64, maturity: f64) -> f64 {
    let x = xi * xi * maturity;
    sigma0.powi(4) / (120.0 * xi.powi(4))
        * ((6.0 * x).exp() - 15.0 * (2.0 * x).exp() + 24.0 * x.exp() - 10.0)
}

// ∫₀^τ e^{kw} dw
fn exp_integral(k: f64, tau: f64) -> f64 {
    if k == 0.0 {
        tau
    } else {
        (k * tau).exp_m1() / k
    }
}

/// `U_t = ρσ_t³ / ((2−α)ξ) · ζ(τ)` with `ζ(τ) = ∫₀^τ e^{½(9−3α)ξ²w}(e^{(2−α)ξ²(τ−w)} − 1) dw`,
/// as a function of the current volatility `σ_t` and time to maturity `τ`.
pub fn u_wiener_at(params: &ModelParams, sigma_t: f64, tau: f64) -> Result<f64> {
    check_alpha(params.alpha)?;
    let (xi, rho, a) = (params.xi, params.rho, params.alpha);
    if xi == 0.0 || rho == 0.0 || tau == 0.0 {
        return Ok(0.0);
    }
    let x2 = xi * xi;
    let e = 0.5 * (9.0 - 3.0 * a) * x2;
    let b = (2.0 - a) * x2;
    let zeta = (b * tau).exp() * exp_integral(e - b, tau) - exp_integral(e, tau);
    Ok(rho * sigma_t.powi(3) / ((2.0 - a) * xi) * zeta)
}

/// `R_t = σ_t⁴ / (2(2−α)²ξ²) · ψ(τ)` with `ψ(τ) = ∫₀^τ e^{(8−2α)ξ²w}(e^{(2−α)ξ²(τ−w)} − 1)² dw`.
pub fn r_wiener_at(params: &ModelParams, sigma_t: f64, tau: f64) -> Result<f64> {
    check_alpha(params.alpha)?;
    let (xi, a) = (params.xi, params.alpha);
    if xi == 0.0 || tau == 0.0 {
        return Ok(0.0);
    }
    let x2 = xi * xi;
    let c = (8.0 - 2.0 * a) * x2;
    let b = (2.0 - a) * x2;
    let psi = (2.0 * b * tau).exp() * exp_integral(c - 2.0 * b, tau)
        - 2.0 * (b * tau).exp() * exp_integral(c - b, tau)
        + exp_integral(c, tau);
    Ok(sigma_t.powi(4) / (2.0 * (2.0 - a).powi(2) * x2) * psi)
}

/// Leading-order shapes of the two error terms of the Wiener decomposition,
/// with the unknown constant set to one:
///
/// ```text
/// I  = ρξ³σ₀T^{3/2} / (6(2−α)²) · (32√2ρ / (ξ√(2−α)) + 21√T)
/// II = ξσ₀T² / (15(2−α)⁴) · (5(20ρ + √2) + 32√2 √T ξ√(2−α))
/// ```
pub fn wiener_error_leading_terms(params: &ModelParams, maturity: f64) -> Result<(f64, f64)> {
    check_alpha(params.alpha)?;
    let (s, xi, rho, a) = (params.sigma0, params.xi, params.rho, params.alpha);
    if xi == 0.0 {
        return Ok((0.0, 0.0));
    }
    let b = 2.0 - a;
    let t = maturity;
    let sqrt2 = std::f64::consts::SQRT_2;
    let term1 = rho * xi.powi(3) * s * t.powf(1.5) / (6.0 * b * b)
        * (32.0 * sqrt2 * rho / (xi * b.sqrt()) + 21.0 * t.sqrt());
    let term2 = xi * s * t * t / (15.0 * b.powi(4))
        * (5.0 * (20.0 * rho + sqrt2) + 32.0 * sqrt2 * t.sqrt() * xi * b.sqrt());
    Ok((term1, term2))
}
