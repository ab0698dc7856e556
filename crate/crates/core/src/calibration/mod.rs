//! Least-squares calibration of `(σ₀, ξ, ρ, H)` to an option chain.

mod methods;

pub use methods::{
    price_router, ApproxMethod, HybridMethod, McMethod, MethodRegistry, PricingContext,
    PricingMethod, Route, RoutedPrice, TimingReport,
};

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{MarketQuote, ModelParams};

/// A quote with its observed mid price.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainQuote {
    pub quote: MarketQuote,
    pub mid: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OptionChain {
    pub quotes: Vec<ChainQuote>,
    pub valuation_date: Option<String>,
}

impl OptionChain {
    pub fn new(quotes: Vec<ChainQuote>) -> Result<Self> {
        let chain = OptionChain {
            quotes,
            valuation_date: None,
        };
        chain.validate()?;
        Ok(chain)
    }

    /// Every quote must be valid with a positive mid. A single quote is
    /// accepted; calibration then reports the problem as under-determined.
    pub fn validate(&self) -> Result<()> {
        if self.quotes.is_empty() {
            return Err(Error::domain("option chain is empty"));
        }
        for (i, q) in self.quotes.iter().enumerate() {
            q.quote
                .validate()
                .map_err(|e| Error::domain(format!("quote #{i}: {e}")))?;
            if !(q.mid.is_finite() && q.mid > 0.0) {
                return Err(Error::domain(format!(
                    "quote #{i}: mid must be > 0, got {}",
                    q.mid
                )));
            }
        }
        Ok(())
    }

    pub fn market_quotes(&self) -> Vec<MarketQuote> {
        self.quotes.iter().map(|q| q.quote).collect()
    }

    pub fn len(&self) -> usize {
        self.quotes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.quotes.is_empty()
    }
}

/// Per expiry, the index of the quote whose strike is nearest the forward
/// `S₀e^{rT}` (ties go to the lower strike). Sorted by maturity.
pub fn atmf_backbone(chain: &OptionChain) -> Vec<usize> {
    let mut best: BTreeMap<u64, (usize, f64, f64)> = BTreeMap::new();
    for (i, q) in chain.quotes.iter().enumerate() {
        let dist = (q.quote.strike - q.quote.forward()).abs();
        let key = q.quote.maturity.to_bits();
        match best.get(&key) {
            Some(&(_, d, k)) if d < dist || (d == dist && k <= q.quote.strike) => {}
            _ => {
                best.insert(key, (i, dist, q.quote.strike));
            }
        }
    }
    best.into_values().map(|(i, _, _)| i).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Objective {
    /// `Σ (mid − model)²`.
    #[default]
    AbsoluteFv,
    /// `Σ ((mid − model)/S₀)²`.
    RelativeFv,
}

impl std::str::FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "absolute_fv" => Ok(Objective::AbsoluteFv),
            "relative_fv" => Ok(Objective::RelativeFv),
            other => Err(Error::input(
                None,
                format!("objective must be absolute_fv or relative_fv, got `{other}`"),
            )),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CalibConfig {
    pub init: ModelParams,
    pub objective: Objective,
    pub method: String,
    pub context: PricingContext,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub step_tol: f64,
    /// Relative forward-difference step in the transformed coordinates.
    pub fd_step: f64,
    /// Largest change of any transformed coordinate in one step.
    pub max_step: f64,
}

impl CalibConfig {
    pub fn new(init: ModelParams, context: PricingContext) -> Self {
        CalibConfig {
            init,
            objective: Objective::AbsoluteFv,
            method: "hybrid".into(),
            context,
            max_iters: 100,
            grad_tol: 1e-8,
            step_tol: 1e-10,
            fd_step: 1e-4,
            max_step: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.init.validate()?;
        self.context.validate()?;
        to_unconstrained(&self.init)?;
        if self.max_iters == 0 {
            return Err(Error::domain("max_iters must be ≥ 1"));
        }
        if !(self.max_step > 0.0 && self.fd_step > 0.0) {
            return Err(Error::domain("max_step and fd_step must be > 0"));
        }
        Ok(())
    }
}

pub const HURST_MIN: f64 = 0.01;
pub const HURST_MAX: f64 = 0.99;
const N_PARAMS: usize = 4;

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// `(ln σ₀, ln ξ, logit((ρ+1)/2), logit((H − 0.01)/0.98))`.
pub fn to_unconstrained(p: &ModelParams) -> Result<[f64; N_PARAMS]> {
    if !(p.sigma0 > 0.0 && p.xi > 0.0) {
        return Err(Error::domain("initial sigma0 and xi must be > 0"));
    }
    if !(p.rho > -1.0 && p.rho < 1.0) {
        return Err(Error::domain("initial rho must lie in (-1, 1)"));
    }
    if !(p.hurst > HURST_MIN && p.hurst < HURST_MAX) {
        return Err(Error::domain(format!(
            "initial hurst must lie in ({HURST_MIN}, {HURST_MAX})"
        )));
    }
    let logit = |x: f64| (x / (1.0 - x)).ln();
    Ok([
        p.sigma0.ln(),
        p.xi.ln(),
        logit(0.5 * (p.rho + 1.0)),
        logit((p.hurst - HURST_MIN) / (HURST_MAX - HURST_MIN)),
    ])
}

pub fn from_unconstrained(z: &[f64], template: &ModelParams) -> ModelParams {
    ModelParams {
        sigma0: z[0].exp(),
        xi: z[1].exp(),
        // Clamped so saturated logistics still land inside the open box.
        rho: (2.0 * logistic(z[2]) - 1.0).clamp(-1.0 + f64::EPSILON, 1.0 - f64::EPSILON),
        hurst: (HURST_MIN + (HURST_MAX - HURST_MIN) * logistic(z[3])).clamp(
            HURST_MIN * (1.0 + f64::EPSILON),
            HURST_MAX * (1.0 - f64::EPSILON),
        ),
        ..*template
    }
}

/// Per-quote `(model − mid)·scale` with `scale = 1` or `1/S₀`.
pub fn residuals(
    chain: &OptionChain,
    params: &ModelParams,
    config: &CalibConfig,
    timing: &mut TimingReport,
) -> Result<Vec<f64>> {
    let method = MethodRegistry::default().create(&config.method)?;
    residuals_with(chain, params, config, method.as_ref(), timing)
}

fn residuals_with(
    chain: &OptionChain,
    params: &ModelParams,
    config: &CalibConfig,
    method: &dyn PricingMethod,
    timing: &mut TimingReport,
) -> Result<Vec<f64>> {
    let prices = method.price_all(params, &chain.market_quotes(), &config.context, timing)?;
    Ok(chain
        .quotes
        .iter()
        .zip(prices)
        .map(|(q, p)| {
            let scale = match config.objective {
                Objective::AbsoluteFv => 1.0,
                Objective::RelativeFv => 1.0 / q.quote.spot,
            };
            (p.price - q.mid) * scale
        })
        .collect())
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum()
}

/// Least-squares objective at `params`.
pub fn objective(chain: &OptionChain, params: &ModelParams, config: &CalibConfig) -> Result<f64> {
    chain.validate()?;
    let mut timing = TimingReport::default();
    Ok(sum_sq(&residuals(chain, params, config, &mut timing)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Residuals are exactly zero at the start.
    ExactFit,
    GradientTolerance,
    StepTolerance,
    MaxIterations,
    /// Damping grew past its limit without an improving step.
    DampingOverflow,
}

#[derive(Debug, Clone)]
pub struct CalibrationReport {
    pub params: ModelParams,
    pub objective: f64,
    /// Objective divided by the number of quotes.
    pub mse: f64,
    pub initial_objective: f64,
    /// Accepted steps.
    pub iterations: usize,
    pub residuals: Vec<f64>,
    pub termination: Termination,
    /// Objective after each accepted step, starting with the initial value.
    pub history: Vec<f64>,
    pub under_determined: bool,
    /// Numerical rank of the Jacobian at the solution.
    pub jacobian_rank: usize,
    pub timing: TimingReport,
}

impl CalibrationReport {
    pub fn converged(&self) -> bool {
        !matches!(self.termination, Termination::DampingOverflow)
    }
}

/// Levenberg–Marquardt on the transformed parameters with a forward-difference
/// Jacobian. The objective never increases; on damping overflow the best
/// point found so far is returned with [`Termination::DampingOverflow`].
pub fn calibrate(chain: &OptionChain, config: &CalibConfig) -> Result<CalibrationReport> {
    chain.validate()?;
    config.validate()?;
    let method: Arc<dyn PricingMethod> = MethodRegistry::default().create(&config.method)?;
    let template = config.init;
    let mut timing = TimingReport::default();
    let mut eval = |z: &[f64], timing: &mut TimingReport| -> Result<Vec<f64>> {
        residuals_with(
            chain,
            &from_unconstrained(z, &template),
            config,
            method.as_ref(),
            timing,
        )
    };

    let mut z = to_unconstrained(&config.init)?.to_vec();
    let mut r = eval(&z, &mut timing)?;
    let mut f = sum_sq(&r);
    let initial = f;
    let mut history = vec![f];
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut jac = DMatrix::zeros(r.len(), N_PARAMS);
    let termination;

    if f == 0.0 {
        termination = Termination::ExactFit;
    } else {
        'outer: loop {
            if iterations >= config.max_iters {
                termination = Termination::MaxIterations;
                break;
            }
            jac = jacobian(&mut eval, &z, &r, config.fd_step, &mut timing)?;
            let rv = DVector::from_column_slice(&r);
            let g = jac.transpose() * &rv;
            if g.amax() < config.grad_tol {
                termination = Termination::GradientTolerance;
                break;
            }
            let a = jac.transpose() * &jac;
            let diag_floor = 1e-12 * a.diagonal().max().max(1e-300);
            loop {
                let mut m = a.clone();
                for i in 0..N_PARAMS {
                    m[(i, i)] += lambda * a[(i, i)].max(diag_floor);
                }
                let mut step = match m.cholesky() {
                    Some(c) => c.solve(&(-&g)),
                    None => {
                        lambda *= 4.0;
                        if lambda > 1e16 {
                            termination = Termination::DampingOverflow;
                            break 'outer;
                        }
                        continue;
                    }
                };
                // Cap each move in the transformed coordinates so that one step
                // cannot jump into a saturated corner of the box.
                let biggest = step.amax();
                if biggest > config.max_step {
                    step *= config.max_step / biggest;
                }
                let znorm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
                if step.norm() < config.step_tol * (1.0 + znorm) {
                    termination = Termination::StepTolerance;
                    break 'outer;
                }
                let cand: Vec<f64> = z.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
                // A domain failure at the candidate (e.g. overflow) counts as a rejection.
                let trial = match eval(&cand, &mut timing) {
                    Ok(rc) => Some(rc),
                    Err(Error::Domain(_)) | Err(Error::Numeric(_)) => None,
                    Err(e) => return Err(e),
                };
                if let Some(rc) = trial {
                    let fc = sum_sq(&rc);
                    if fc.is_finite() && fc < f {
                        z = cand;
                        r = rc;
                        f = fc;
                        history.push(f);
                        iterations += 1;
                        lambda = (lambda / 3.0).max(1e-12);
                        break;
                    }
                }
                lambda *= 4.0;
                if lambda > 1e16 {
                    termination = Termination::DampingOverflow;
                    break 'outer;
                }
            }
        }
    }

    if termination != Termination::ExactFit && iterations > 0 {
        // Rank at the final point.
        jac = jacobian(&mut eval, &z, &r, config.fd_step, &mut timing)?;
    }
    let jacobian_rank = if termination == Termination::ExactFit {
        0
    } else {
        numerical_rank(&jac)
    };
    let n = chain.len();
    Ok(CalibrationReport {
        params: if iterations == 0 {
            template
        } else {
            from_unconstrained(&z, &template)
        },
        objective: f,
        mse: f / n as f64,
        initial_objective: initial,
        iterations,
        residuals: r,
        termination,
        history,
        under_determined: n < N_PARAMS || (jacobian_rank > 0 && jacobian_rank < N_PARAMS),
        jacobian_rank,
        timing,
    })
}

fn jacobian(
    eval: &mut impl FnMut(&[f64], &mut TimingReport) -> Result<Vec<f64>>,
    z: &[f64],
    r: &[f64],
    rel_step: f64,
    timing: &mut TimingReport,
) -> Result<DMatrix<f64>> {
    let mut jac = DMatrix::zeros(r.len(), z.len());
    for k in 0..z.len() {
        let h = rel_step * z[k].abs().max(1.0);
        let mut zp = z.to_vec();
        zp[k] += h;
        let rp = eval(&zp, timing)?;
        for i in 0..r.len() {
            jac[(i, k)] = (rp[i] - r[i]) / h;
        }
    }
    Ok(jac)
}

fn numerical_rank(jac: &DMatrix<f64>) -> usize {
    if jac.nrows() == 0 {
        return 0;
    }
    let sv = jac.clone().svd(false, false).singular_values;
    let max = sv.max();
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > 1e-7 * max).count()
}
