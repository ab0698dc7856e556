//! Decomposition-formula approximation
//! `V₀ ≈ BS(v₀) + ΛΓBS(v₀)·U₀ + Γ²BS(v₀)·R₀`.

mod geometry;
mod wiener;

pub use geometry::{
    ApproxGrids, CorrectionGeometry, GeometryCache, QuadGrid, R0Geometry, SingularityHandling,
    U0Geometry,
};
pub use wiener::{
    r0_wiener_alpha0, r0_wiener_alpha1, r0_wiener_closed, r_wiener_at, u0_wiener_alpha0,
    u0_wiener_alpha1, u0_wiener_closed, u_wiener_at, v0_wiener_closed, wiener_error_leading_terms,
};

use crate::bs::{bs_price, gamma2_bs, lambda_gamma_bs, BSInputs};
use crate::error::{ensure_finite, Error, Result};
use crate::kernels::VolterraKernel;
use crate::model::{MarketQuote, ModelParams};
use crate::quadrature::{graded_towards_start, pairwise_sum_by};

/// Decomposed approximation price.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceResult {
    pub total: f64,
    pub bs_term: f64,
    pub u0_correction: f64,
    pub r0_correction: f64,
    pub v0: f64,
    pub u0: f64,
    pub r0: f64,
    /// Consistency warnings (a sign of U₀ opposite to ρ or a negative R₀
    /// means the grid is too coarse for the parameters).
    pub warnings: Vec<String>,
}

/// `E[σ_u²] = σ₀² exp{(2−α) ξ² r(u)}`.
pub fn expected_sq_vol(params: &ModelParams, kernel: &dyn VolterraKernel, u: f64) -> Result<f64> {
    params.validate()?;
    let r = kernel.variance(u)?;
    Ok(params.sigma0 * params.sigma0 * ((2.0 - params.alpha) * params.xi * params.xi * r).exp())
}

/// `v₀ = √((1/T) ∫₀ᵀ E[σ_u²] du)`.
///
/// Wiener kernels use the closed form. Otherwise a trapezoid rule in
/// `u = T y^k`, `k = max(1, 1/(2H))`, which makes `r(u) = u^{2H}` smooth in `y`,
/// is refined by halving until the relative change drops below 1e−8.
pub fn v0(params: &ModelParams, kernel: &dyn VolterraKernel, maturity: f64) -> Result<f64> {
    params.validate()?;
    if !(maturity.is_finite() && maturity > 0.0) {
        return Err(Error::domain(format!(
            "maturity must be > 0, got {maturity}"
        )));
    }
    if params.xi == 0.0 {
        return Ok(params.sigma0);
    }
    if kernel.is_standard_wiener() {
        return v0_wiener_closed(params, maturity);
    }
    v0_quadrature(params, kernel, maturity)
}

/// Quadrature branch of [`v0`], available for every kernel.
pub fn v0_quadrature(
    params: &ModelParams,
    kernel: &dyn VolterraKernel,
    maturity: f64,
) -> Result<f64> {
    params.validate()?;
    let c = (2.0 - params.alpha) * params.xi * params.xi;
    let k = (1.0 / (2.0 * kernel.hurst())).max(1.0);
    let mean = |panels: usize| -> Result<f64> {
        let rule = graded_towards_start(maturity, k, panels);
        let mut vals = Vec::with_capacity(rule.len());
        for &(u, w) in &rule {
            vals.push(w * (c * kernel.variance(u)?).exp());
        }
        let total_w = pairwise_sum_by(&rule, |x| x.1);
        Ok(pairwise_sum_by(&vals, |v| *v) / total_w)
    };
    const MAX_PANELS: usize = 1 << 20;
    let mut panels = 64;
    let mut prev = mean(panels)?;
    loop {
        panels *= 2;
        let next = mean(panels)?;
        if (next - prev).abs() <= 1e-8 * next.abs() {
            // Richardson step on the two finest levels.
            let m = (4.0 * next - prev) / 3.0;
            return Ok(params.sigma0 * m.sqrt());
        }
        if panels >= MAX_PANELS {
            return Err(Error::numeric(format!(
                "v0 quadrature did not converge with {panels} panels"
            )));
        }
        prev = next;
    }
}

/// U₀ by quadrature for an arbitrary kernel.
pub fn u0_quadrature(
    params: &ModelParams,
    kernel: &dyn VolterraKernel,
    maturity: f64,
    grid: &QuadGrid,
) -> Result<f64> {
    params.validate()?;
    if params.xi == 0.0 || params.rho == 0.0 {
        return Ok(0.0);
    }
    Ok(U0Geometry::build(kernel, maturity, grid)?.u0(params))
}

/// R₀ by quadrature for an arbitrary kernel.
pub fn r0_quadrature(
    params: &ModelParams,
    kernel: &dyn VolterraKernel,
    maturity: f64,
    grid: &QuadGrid,
) -> Result<f64> {
    params.validate()?;
    if params.xi == 0.0 {
        return Ok(0.0);
    }
    Ok(R0Geometry::build(kernel, maturity, grid)?.r0(params))
}

/// Approximation price. Wiener kernels use the closed-form U₀, R₀ and v₀;
/// other kernels go through the quadrature tables.
pub fn approx_price(
    params: &ModelParams,
    quote: &MarketQuote,
    kernel: &dyn VolterraKernel,
    grids: &ApproxGrids,
) -> Result<PriceResult> {
    params.validate()?;
    quote.validate()?;
    grids.validate()?;
    let t = quote.maturity;
    let (u0, r0) = if params.xi == 0.0 {
        (0.0, 0.0)
    } else if kernel.is_standard_wiener() {
        (u0_wiener_closed(params, t)?, r0_wiener_closed(params, t)?)
    } else {
        let u0 = if params.rho == 0.0 {
            0.0
        } else {
            U0Geometry::build(kernel, t, &grids.u0)?.u0(params)
        };
        (u0, R0Geometry::build(kernel, t, &grids.r0)?.r0(params))
    };
    assemble(params, quote, kernel, u0, r0)
}

/// Same as [`approx_price`] with the kernel tables taken from `cache`.
pub fn approx_price_cached(
    params: &ModelParams,
    quote: &MarketQuote,
    kernel: &dyn VolterraKernel,
    grids: &ApproxGrids,
    cache: &GeometryCache,
) -> Result<PriceResult> {
    params.validate()?;
    quote.validate()?;
    grids.validate()?;
    if params.xi == 0.0 || kernel.is_standard_wiener() {
        return approx_price(params, quote, kernel, grids);
    }
    let g = cache.get(kernel, quote.maturity, grids)?;
    assemble(params, quote, kernel, g.u0.u0(params), g.r0.r0(params))
}

fn assemble(
    params: &ModelParams,
    quote: &MarketQuote,
    kernel: &dyn VolterraKernel,
    u0: f64,
    r0: f64,
) -> Result<PriceResult> {
    ensure_finite("U0", u0).map_err(|_| Error::numeric("U0 is not finite"))?;
    ensure_finite("R0", r0).map_err(|_| Error::numeric("R0 is not finite"))?;
    let v = v0(params, kernel, quote.maturity)?;
    let inp = BSInputs::at_origin(quote.spot, quote.strike, quote.rate, quote.maturity, v);
    let call = bs_price(&inp)?;
    let (u0_corr, r0_corr) = if u0 == 0.0 && r0 == 0.0 {
        (0.0, 0.0)
    } else {
        (lambda_gamma_bs(&inp)? * u0, gamma2_bs(&inp)? * r0)
    };
    let mut warnings = Vec::new();
    if u0 != 0.0 && u0.signum() != params.rho.signum() {
        warnings.push(format!(
            "U0 = {u0:e} has the opposite sign of rho; refine the grid"
        ));
    }
    if r0 < 0.0 {
        warnings.push(format!("R0 = {r0:e} is negative; refine the grid"));
    }
    let bs_term = quote.from_call_value(call);
    Ok(PriceResult {
        total: bs_term + u0_corr + r0_corr,
        bs_term,
        u0_correction: u0_corr,
        r0_correction: r0_corr,
        v0: v,
        u0,
        r0,
        warnings,
    })
}
