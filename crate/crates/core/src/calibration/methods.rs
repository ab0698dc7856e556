//! Pricing strategies behind a common trait, selectable by name.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::approx::{approx_price_cached, ApproxGrids, GeometryCache};
use crate::error::{Error, Result};
use crate::kernels::{KernelParams, KernelRegistry, VolterraKernel};
use crate::mc::{mc_price_many, MCConfig};
use crate::model::{MarketQuote, ModelParams};

/// Which pricer produced a value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Route {
    Approx,
    MonteCarlo,
}

impl fmt::Display for Route {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Route::Approx => "approx",
            Route::MonteCarlo => "mc",
        })
    }
}

/// Wall-clock time spent in each pricer.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TimingReport {
    pub approx: Duration,
    pub mc: Duration,
    pub approx_quotes: usize,
    pub mc_quotes: usize,
}

impl TimingReport {
    pub fn add(&mut self, other: &TimingReport) {
        self.approx += other.approx;
        self.mc += other.mc;
        self.approx_quotes += other.approx_quotes;
        self.mc_quotes += other.mc_quotes;
    }

    /// Fraction of pricing time spent in Monte-Carlo, in `[0, 1]`.
    pub fn mc_share(&self) -> f64 {
        let total = (self.approx + self.mc).as_secs_f64();
        if total == 0.0 {
            0.0
        } else {
            self.mc.as_secs_f64() / total
        }
    }
}

/// Everything a pricing method needs besides the parameters.
#[derive(Debug, Clone)]
pub struct PricingContext {
    pub kernel: String,
    pub registry: Arc<KernelRegistry>,
    pub grids: ApproxGrids,
    pub mc: MCConfig,
    pub tau_threshold: f64,
    pub cache: Arc<GeometryCache>,
}

impl PricingContext {
    pub fn new(kernel: &str) -> Self {
        PricingContext {
            kernel: kernel.to_string(),
            registry: Arc::new(KernelRegistry::default()),
            grids: ApproxGrids::default(),
            mc: MCConfig::default(),
            tau_threshold: 0.2,
            cache: Arc::new(GeometryCache::new()),
        }
    }

    /// Kernel of the configured family at the parameters' `H` and `ε`.
    pub fn kernel_for(&self, params: &ModelParams) -> Result<Arc<dyn VolterraKernel>> {
        self.registry.create(
            &self.kernel,
            &KernelParams {
                hurst: params.hurst,
                epsilon: params.epsilon,
            },
        )
    }

    pub fn validate(&self) -> Result<()> {
        self.grids.validate()?;
        self.mc.validate()?;
        if !(self.tau_threshold.is_finite() && self.tau_threshold >= 0.0) {
            return Err(Error::domain(format!(
                "tau_threshold must be ≥ 0, got {}",
                self.tau_threshold
            )));
        }
        Ok(())
    }
}

/// A model price for one quote.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoutedPrice {
    pub price: f64,
    /// Monte-Carlo standard error; zero for the approximation.
    pub std_error: f64,
    pub route: Route,
}

pub trait PricingMethod: Send + Sync {
    fn name(&self) -> &'static str;

    /// Prices every quote and adds the time spent to `timing`.
    fn price_all(
        &self,
        params: &ModelParams,
        quotes: &[MarketQuote],
        ctx: &PricingContext,
        timing: &mut TimingReport,
    ) -> Result<Vec<RoutedPrice>>;
}

fn price_approx(
    params: &ModelParams,
    quotes: &[(usize, MarketQuote)],
    ctx: &PricingContext,
    timing: &mut TimingReport,
    out: &mut [Option<RoutedPrice>],
) -> Result<()> {
    if quotes.is_empty() {
        return Ok(());
    }
    let start = Instant::now();
    let kernel = ctx.kernel_for(params)?;
    for &(i, q) in quotes {
        let r = approx_price_cached(params, &q, kernel.as_ref(), &ctx.grids, &ctx.cache)
            .map_err(|e| name_quote(e, i, &q))?;
        out[i] = Some(RoutedPrice {
            price: r.total,
            std_error: 0.0,
            route: Route::Approx,
        });
    }
    timing.approx += start.elapsed();
    timing.approx_quotes += quotes.len();
    Ok(())
}

// One simulation per (spot, rate, maturity) group, with the frozen seed.
fn price_mc(
    params: &ModelParams,
    quotes: &[(usize, MarketQuote)],
    ctx: &PricingContext,
    timing: &mut TimingReport,
    out: &mut [Option<RoutedPrice>],
) -> Result<()> {
    if quotes.is_empty() {
        return Ok(());
    }
    let start = Instant::now();
    let kernel = ctx.kernel_for(params)?;
    let mut groups: BTreeMap<(u64, u64, u64), Vec<(usize, MarketQuote)>> = BTreeMap::new();
    for &(i, q) in quotes {
        groups
            .entry((q.maturity.to_bits(), q.spot.to_bits(), q.rate.to_bits()))
            .or_default()
            .push((i, q));
    }
    for group in groups.values() {
        let qs: Vec<MarketQuote> = group.iter().map(|(_, q)| *q).collect();
        let res = mc_price_many(params, &qs, kernel.as_ref(), &ctx.mc)
            .map_err(|e| name_quote(e, group[0].0, &group[0].1))?;
        for (&(i, _), r) in group.iter().zip(res) {
            out[i] = Some(RoutedPrice {
                price: r.price,
                std_error: r.std_error,
                route: Route::MonteCarlo,
            });
        }
    }
    timing.mc += start.elapsed();
    timing.mc_quotes += quotes.len();
    Ok(())
}

fn name_quote(e: Error, index: usize, q: &MarketQuote) -> Error {
    let msg = format!(
        "pricing quote #{index} (T={}, K={}, {}) failed: {e}",
        q.maturity, q.strike, q.kind
    );
    match e {
        Error::Numeric(_) => Error::Numeric(msg),
        Error::Input { line, .. } => Error::Input { line, msg },
        _ => Error::Domain(msg),
    }
}

fn finish(out: Vec<Option<RoutedPrice>>) -> Vec<RoutedPrice> {
    out.into_iter()
        .map(|p| p.expect("every quote is routed"))
        .collect()
}

/// Decomposition-formula approximation for every quote.
#[derive(Debug, Clone, Copy, Default)]
pub struct ApproxMethod;

impl PricingMethod for ApproxMethod {
    fn name(&self) -> &'static str {
        "approx"
    }

    fn price_all(
        &self,
        params: &ModelParams,
        quotes: &[MarketQuote],
        ctx: &PricingContext,
        timing: &mut TimingReport,
    ) -> Result<Vec<RoutedPrice>> {
        let mut out = vec![None; quotes.len()];
        let all: Vec<_> = quotes.iter().copied().enumerate().collect();
        price_approx(params, &all, ctx, timing, &mut out)?;
        Ok(finish(out))
    }
}

/// Monte-Carlo for every quote.
#[derive(Debug, Clone, Copy, Default)]
pub struct McMethod;

impl PricingMethod for McMethod {
    fn name(&self) -> &'static str {
        "mc"
    }

    fn price_all(
        &self,
        params: &ModelParams,
        quotes: &[MarketQuote],
        ctx: &PricingContext,
        timing: &mut TimingReport,
    ) -> Result<Vec<RoutedPrice>> {
        let mut out = vec![None; quotes.len()];
        let all: Vec<_> = quotes.iter().copied().enumerate().collect();
        price_mc(params, &all, ctx, timing, &mut out)?;
        Ok(finish(out))
    }
}

/// Approximation below the maturity threshold, Monte-Carlo at or above it.
#[derive(Debug, Clone, Copy, Default)]
pub struct HybridMethod;

impl HybridMethod {
    pub fn route(quote: &MarketQuote, ctx: &PricingContext) -> Route {
        if quote.maturity < ctx.tau_threshold {
            Route::Approx
        } else {
            Route::MonteCarlo
        }
    }
}

impl PricingMethod for HybridMethod {
    fn name(&self) -> &'static str {
        "hybrid"
    }

    fn price_all(
        &self,
        params: &ModelParams,
        quotes: &[MarketQuote],
        ctx: &PricingContext,
        timing: &mut TimingReport,
    ) -> Result<Vec<RoutedPrice>> {
        let mut out = vec![None; quotes.len()];
        let (short, long): (Vec<_>, Vec<_>) = quotes
            .iter()
            .copied()
            .enumerate()
            .partition(|(_, q)| Self::route(q, ctx) == Route::Approx);
        price_approx(params, &short, ctx, timing, &mut out)?;
        price_mc(params, &long, ctx, timing, &mut out)?;
        Ok(finish(out))
    }
}

/// Routes a single quote through the hybrid rule.
pub fn price_router(
    quote: &MarketQuote,
    params: &ModelParams,
    ctx: &PricingContext,
) -> Result<RoutedPrice> {
    let mut timing = TimingReport::default();
    Ok(HybridMethod.price_all(params, std::slice::from_ref(quote), ctx, &mut timing)?[0])
}

type MethodFactory = Box<dyn Fn() -> Arc<dyn PricingMethod> + Send + Sync>;

/// Name → pricing method table.
pub struct MethodRegistry {
    factories: BTreeMap<String, MethodFactory>,
}

impl MethodRegistry {
    pub fn empty() -> Self {
        MethodRegistry {
            factories: BTreeMap::new(),
        }
    }

    pub fn register<F>(&mut self, name: &str, factory: F)
    where
        F: Fn() -> Arc<dyn PricingMethod> + Send + Sync + 'static,
    {
        self.factories.insert(name.to_string(), Box::new(factory));
    }

    pub fn create(&self, name: &str) -> Result<Arc<dyn PricingMethod>> {
        self.factories.get(name).map(|f| f()).ok_or_else(|| {
            Error::input(
                None,
                format!(
                    "unknown pricing method `{name}` (available: {})",
                    self.names().join(", ")
                ),
            )
        })
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }
}

impl Default for MethodRegistry {
    fn default() -> Self {
        let mut reg = MethodRegistry::empty();
        reg.register("approx", || Arc::new(ApproxMethod));
        reg.register("mc", || Arc::new(McMethod));
        reg.register("hybrid", || Arc::new(HybridMethod));
        reg
    }
}

impl fmt::Debug for MethodRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MethodRegistry")
            .field("methods", &self.names())
            .finish()
    }
}
