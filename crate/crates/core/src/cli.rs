//! Command-line front end: config and chain parsing plus the subcommands.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::approx::{ApproxGrids, QuadGrid};
use crate::bs::implied_vol_call;
use crate::calibration::{
    atmf_backbone, calibrate, ApproxMethod, CalibConfig, ChainQuote, McMethod, MethodRegistry,
    Objective, OptionChain, PricingContext, PricingMethod, TimingReport,
};
use crate::error::{Error, Result};
use crate::kernels::KernelRegistry;
use crate::mc::MCConfig;
use crate::model::{MarketQuote, ModelParams, OptionKind};

pub const CHAIN_HEADER: [&str; 6] = ["maturity_years", "strike", "mid", "spot", "rate", "kind"];

/// Everything a run needs, parsed from a flat `key = value` file.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub params: ModelParams,
    pub kernel: String,
    pub grid_n_u0: usize,
    pub grid_n_r0: usize,
    pub mc: MCConfig,
    pub tau_threshold: f64,
    pub objective: Objective,
    pub method: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        let grids = ApproxGrids::default();
        RunConfig {
            params: ModelParams::default(),
            kernel: "afbm".into(),
            grid_n_u0: grids.u0.n_outer,
            grid_n_r0: grids.r0.n_outer,
            mc: MCConfig::default(),
            tau_threshold: 0.2,
            objective: Objective::AbsoluteFv,
            method: "hybrid".into(),
        }
    }
}

fn parse_value<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| {
        Error::input(
            Some(line),
            format!("cannot parse value `{value}` for `{key}`"),
        )
    })
}

impl RunConfig {
    /// Blank lines and `#` comments are skipped; unknown or repeated keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| {
                Error::input(
                    Some(line),
                    format!("expected `key = value`, got `{content}`"),
                )
            })?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(Error::input(Some(line), format!("duplicate key `{key}`")));
            }
            match key {
                "sigma0" => cfg.params.sigma0 = parse_value(line, key, value)?,
                "xi" => cfg.params.xi = parse_value(line, key, value)?,
                "rho" => cfg.params.rho = parse_value(line, key, value)?,
                "hurst" => cfg.params.hurst = parse_value(line, key, value)?,
                "alpha" => cfg.params.alpha = parse_value(line, key, value)?,
                "epsilon" => cfg.params.epsilon = parse_value(line, key, value)?,
                "kernel" => cfg.kernel = value.to_string(),
                "grid_n_u0" => cfg.grid_n_u0 = parse_value(line, key, value)?,
                "grid_n_r0" => cfg.grid_n_r0 = parse_value(line, key, value)?,
                "mc_paths" => cfg.mc.n_paths = parse_value(line, key, value)?,
                "mc_steps" => cfg.mc.n_steps = parse_value(line, key, value)?,
                "seed" => cfg.mc.seed = parse_value(line, key, value)?,
                "tau_threshold" => cfg.tau_threshold = parse_value(line, key, value)?,
                "objective" => {
                    cfg.objective = value.parse().map_err(|e: Error| relocate(e, line))?
                }
                "method" => cfg.method = value.to_string(),
                other => return Err(Error::input(Some(line), format!("unknown key `{other}`"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?)
    }

    pub fn grids(&self) -> ApproxGrids {
        ApproxGrids {
            u0: QuadGrid::uniform(self.grid_n_u0),
            r0: QuadGrid::uniform(self.grid_n_r0),
        }
    }

    pub fn context(&self) -> PricingContext {
        PricingContext {
            grids: self.grids(),
            mc: self.mc,
            tau_threshold: self.tau_threshold,
            ..PricingContext::new(&self.kernel)
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        let kernels = KernelRegistry::default();
        if !kernels.names().contains(&self.kernel.as_str()) {
            return Err(Error::input(
                None,
                format!(
                    "unknown kernel `{}` (available: {})",
                    self.kernel,
                    kernels.names().join(", ")
                ),
            ));
        }
        MethodRegistry::default().create(&self.method)?;
        self.context().validate()
    }
}

fn relocate(e: Error, line: usize) -> Error {
    match e {
        Error::Input { msg, .. } => Error::input(Some(line), msg),
        other => other,
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::input(None, format!("cannot read {}: {e}", path.display())))
}

#[derive(Debug, Deserialize)]
struct ChainRow {
    maturity_years: f64,
    strike: f64,
    mid: f64,
    spot: f64,
    rate: f64,
    kind: String,
}

/// Parse a chain CSV with the exact header `maturity_years,strike,mid,spot,rate,kind`.
pub fn parse_chain(text: &str) -> Result<OptionChain> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::input(Some(1), format!("cannot read header: {e}")))?
        .clone();
    if header.iter().ne(CHAIN_HEADER.iter().copied()) {
        return Err(Error::input(
            Some(1),
            format!("header must be `{}`", CHAIN_HEADER.join(",")),
        ));
    }
    let mut quotes = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize);
            Error::input(line, format!("malformed row: {e}"))
        })?;
        let line = record.position().map(|p| p.line() as usize);
        let row: ChainRow = record
            .deserialize(Some(&header))
            .map_err(|e| Error::input(line, format!("malformed row: {e}")))?;
        let kind: OptionKind = row.kind.parse().map_err(|e: Error| match e {
            Error::Input { msg, .. } => Error::input(line, msg),
            other => other,
        })?;
        let quote = MarketQuote {
            spot: row.spot,
            strike: row.strike,
            rate: row.rate,
            maturity: row.maturity_years,
            kind,
        };
        let cq = ChainQuote {
            quote,
            mid: row.mid,
        };
        OptionChain {
            quotes: vec![cq],
            valuation_date: None,
        }
        .validate()
        .map_err(|e| Error::input(line, e.to_string()))?;
        quotes.push(cq);
    }
    if quotes.is_empty() {
        return Err(Error::input(None, "chain has no rows"));
    }
    Ok(OptionChain {
        quotes,
        valuation_date: None,
    })
}

pub fn read_chain(path: &Path) -> Result<OptionChain> {
    parse_chain(&read_text(path)?)
}

/// Comma-separated numbers; an empty string is an empty list.
pub fn parse_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| Error::input(None, format!("cannot parse `{s}` as a number")))
        })
        .collect()
}

fn num(x: f64) -> String {
    format!("{x:.9e}")
}

#[derive(Debug, Parser)]
#[command(
    name = "rfsv",
    version,
    about = "Option pricing and calibration under rough volatility"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Flat `key = value` config file; defaults are used when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Write the CSV result here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides the config's `method`.
    #[arg(long, global = true)]
    pub method: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Price a chain file or a single contract.
    Price {
        #[arg(long)]
        chain: Option<PathBuf>,
        #[arg(long, default_value_t = 100.0)]
        spot: f64,
        #[arg(long)]
        strike: Option<f64>,
        #[arg(long)]
        maturity: Option<f64>,
        #[arg(long, default_value_t = 0.0)]
        rate: f64,
        #[arg(long, default_value = "call")]
        kind: String,
    },
    /// Approximation against Monte-Carlo on a moneyness × maturity grid of calls.
    Compare {
        /// Strike over spot, comma separated.
        #[arg(
            long,
            default_value = "0.8,0.9,1.0,1.1,1.2",
            allow_hyphen_values = true
        )]
        moneyness: String,
        /// Maturities in years, comma separated.
        #[arg(long, default_value = "0.0833333333333333", allow_hyphen_values = true)]
        maturities: String,
        #[arg(long, default_value_t = 100.0)]
        spot: f64,
        #[arg(long, default_value_t = 0.0)]
        rate: f64,
    },
    /// Call prices and Black-Scholes implied volatilities across strikes.
    Smile {
        #[arg(long)]
        maturity: f64,
        #[arg(
            long,
            default_value = "0.9,0.95,1.0,1.05,1.1",
            allow_hyphen_values = true
        )]
        moneyness: String,
        #[arg(long, default_value_t = 100.0)]
        spot: f64,
        #[arg(long, default_value_t = 0.0)]
        rate: f64,
    },
    /// Fit sigma0, xi, rho and hurst to a chain, starting from the config values.
    Calibrate {
        #[arg(long)]
        chain: PathBuf,
        /// Keep only the quote nearest the forward for each expiry.
        #[arg(long)]
        atmf: bool,
    },
}

/// CSV payload plus a human-readable summary (which includes wall-clock timings).
#[derive(Debug, Clone, Default)]
pub struct Output {
    pub csv: String,
    pub summary: String,
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| Error::numeric(format!("csv output: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::numeric(format!("csv output: {e}")))
}

fn write_row<I, S>(w: &mut csv::Writer<Vec<u8>>, row: I) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    w.write_record(row)
        .map_err(|e| Error::numeric(format!("csv output: {e}")))
}

fn timing_line(t: &TimingReport) -> String {
    format!(
        "timing: approx {:.3} s over {} quotes, mc {:.3} s over {} quotes, mc share {:.2}%\n",
        t.approx.as_secs_f64(),
        t.approx_quotes,
        t.mc.as_secs_f64(),
        t.mc_quotes,
        100.0 * t.mc_share()
    )
}

pub fn run(cli: &Cli) -> Result<Output> {
    let mut cfg = match &cli.global.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(m) = &cli.global.method {
        cfg.method = m.clone();
        cfg.validate()?;
    }
    match &cli.command {
        Command::Price {
            chain,
            spot,
            strike,
            maturity,
            rate,
            kind,
        } => {
            let chain = match chain {
                Some(path) => read_chain(path)?,
                None => {
                    let (strike, maturity) = match (strike, maturity) {
                        (Some(k), Some(t)) => (*k, *t),
                        _ => {
                            return Err(Error::input(
                                None,
                                "price needs --chain or both --strike and --maturity",
                            ))
                        }
                    };
                    let quote = MarketQuote {
                        spot: *spot,
                        strike,
                        rate: *rate,
                        maturity,
                        kind: kind.parse()?,
                    };
                    quote.validate()?;
                    // No market mid for a single contract.
                    OptionChain {
                        quotes: vec![ChainQuote {
                            quote,
                            mid: f64::NAN,
                        }],
                        valuation_date: None,
                    }
                }
            };
            cmd_price(&cfg, &chain)
        }
        Command::Compare {
            moneyness,
            maturities,
            spot,
            rate,
        } => cmd_compare(
            &cfg,
            &parse_list(moneyness)?,
            &parse_list(maturities)?,
            *spot,
            *rate,
        ),
        Command::Smile {
            maturity,
            moneyness,
            spot,
            rate,
        } => cmd_smile(&cfg, *maturity, &parse_list(moneyness)?, *spot, *rate),
        Command::Calibrate { chain, atmf } => {
            let mut chain = read_chain(chain)?;
            if *atmf {
                let keep = atmf_backbone(&chain);
                chain.quotes = keep.into_iter().map(|i| chain.quotes[i]).collect();
            }
            cmd_calibrate(&cfg, &chain)
        }
    }
}

/// Model prices for every quote. A NaN mid is written as an empty field.
pub fn cmd_price(cfg: &RunConfig, chain: &OptionChain) -> Result<Output> {
    let ctx = cfg.context();
    let method = MethodRegistry::default().create(&cfg.method)?;
    let mut timing = TimingReport::default();
    let prices = method.price_all(&cfg.params, &chain.market_quotes(), &ctx, &mut timing)?;
    let mut w = csv_writer();
    write_row(
        &mut w,
        [
            "maturity_years",
            "strike",
            "kind",
            "spot",
            "rate",
            "route",
            "price",
            "std_error",
            "mid",
            "price_minus_mid",
        ],
    )?;
    for (q, p) in chain.quotes.iter().zip(&prices) {
        let (mid, diff) = if q.mid.is_nan() {
            (String::new(), String::new())
        } else {
            (num(q.mid), num(p.price - q.mid))
        };
        write_row(
            &mut w,
            [
                num(q.quote.maturity),
                num(q.quote.strike),
                q.quote.kind.to_string(),
                num(q.quote.spot),
                num(q.quote.rate),
                p.route.to_string(),
                num(p.price),
                num(p.std_error),
                mid,
                diff,
            ],
        )?;
    }
    let summary = format!(
        "priced {} quotes with `{}`\n{}",
        prices.len(),
        cfg.method,
        timing_line(&timing)
    );
    Ok(Output {
        csv: finish(w)?,
        summary,
    })
}

/// Calls at `K = m·S₀` for every maturity and moneyness, priced both ways.
pub fn cmd_compare(
    cfg: &RunConfig,
    moneyness: &[f64],
    maturities: &[f64],
    spot: f64,
    rate: f64,
) -> Result<Output> {
    let ctx = cfg.context();
    let mut w = csv_writer();
    write_row(
        &mut w,
        [
            "maturity_years",
            "moneyness",
            "strike",
            "approx",
            "mc",
            "mc_std_error",
            "rel_fv_diff",
        ],
    )?;
    let mut timing = TimingReport::default();
    for &t in maturities {
        let quotes: Vec<MarketQuote> = moneyness
            .iter()
            .map(|&m| MarketQuote::call(spot, m * spot, rate, t))
            .collect();
        for q in &quotes {
            q.validate()?;
        }
        if quotes.is_empty() {
            continue;
        }
        let approx = ApproxMethod.price_all(&cfg.params, &quotes, &ctx, &mut timing)?;
        let mc = McMethod.price_all(&cfg.params, &quotes, &ctx, &mut timing)?;
        for ((q, a), m) in quotes.iter().zip(&approx).zip(&mc) {
            write_row(
                &mut w,
                [
                    num(t),
                    num(q.strike / spot),
                    num(q.strike),
                    num(a.price),
                    num(m.price),
                    num(m.std_error),
                    num((a.price - m.price) / spot),
                ],
            )?;
        }
    }
    Ok(Output {
        csv: finish(w)?,
        summary: timing_line(&timing),
    })
}

pub fn cmd_smile(
    cfg: &RunConfig,
    maturity: f64,
    moneyness: &[f64],
    spot: f64,
    rate: f64,
) -> Result<Output> {
    let ctx = cfg.context();
    let method = MethodRegistry::default().create(&cfg.method)?;
    let quotes: Vec<MarketQuote> = moneyness
        .iter()
        .map(|&m| MarketQuote::call(spot, m * spot, rate, maturity))
        .collect();
    for q in &quotes {
        q.validate()?;
    }
    let mut timing = TimingReport::default();
    let prices = method.price_all(&cfg.params, &quotes, &ctx, &mut timing)?;
    let mut w = csv_writer();
    write_row(
        &mut w,
        [
            "moneyness",
            "strike",
            "route",
            "price",
            "std_error",
            "implied_vol",
        ],
    )?;
    let mut missing = 0;
    for (q, p) in quotes.iter().zip(&prices) {
        let iv = implied_vol_call(p.price, spot, q.strike, rate, maturity);
        if iv.is_none() {
            missing += 1;
        }
        write_row(
            &mut w,
            [
                num(q.strike / spot),
                num(q.strike),
                p.route.to_string(),
                num(p.price),
                num(p.std_error),
                iv.map(num).unwrap_or_default(),
            ],
        )?;
    }
    let mut summary = timing_line(&timing);
    if missing > 0 {
        let _ = writeln!(
            summary,
            "{missing} prices lie outside the no-arbitrage bounds; implied vol left empty"
        );
    }
    Ok(Output {
        csv: finish(w)?,
        summary,
    })
}

pub fn cmd_calibrate(cfg: &RunConfig, chain: &OptionChain) -> Result<Output> {
    let t0 = Instant::now();
    let config = CalibConfig {
        objective: cfg.objective,
        method: cfg.method.clone(),
        ..CalibConfig::new(cfg.params, cfg.context())
    };
    let rep = calibrate(chain, &config)?;
    let mut w = csv_writer();
    write_row(&mut w, ["field", "value"])?;
    let p = rep.params;
    for (k, v) in [
        ("sigma0", p.sigma0),
        ("xi", p.xi),
        ("rho", p.rho),
        ("hurst", p.hurst),
        ("alpha", p.alpha),
        ("epsilon", p.epsilon),
        ("objective", rep.objective),
        ("mse", rep.mse),
        ("initial_objective", rep.initial_objective),
    ] {
        write_row(&mut w, [k.to_string(), num(v)])?;
    }
    write_row(
        &mut w,
        ["iterations".to_string(), rep.iterations.to_string()],
    )?;
    write_row(
        &mut w,
        ["termination".to_string(), format!("{:?}", rep.termination)],
    )?;
    write_row(
        &mut w,
        ["jacobian_rank".to_string(), rep.jacobian_rank.to_string()],
    )?;
    write_row(
        &mut w,
        [
            "under_determined".to_string(),
            rep.under_determined.to_string(),
        ],
    )?;
    for (i, r) in rep.residuals.iter().enumerate() {
        write_row(&mut w, [format!("residual_{i}"), num(*r)])?;
    }
    let mut summary = format!(
        "sigma0 {:.6} xi {:.6} rho {:.6} hurst {:.6}\nmse {:.6e} after {} iterations ({:?})\n",
        p.sigma0, p.xi, p.rho, p.hurst, rep.mse, rep.iterations, rep.termination
    );
    if rep.under_determined {
        let _ = writeln!(
            summary,
            "warning: under-determined fit ({} quotes, jacobian rank {} for 4 parameters)",
            chain.len(),
            rep.jacobian_rank
        );
    }
    if !rep.converged() {
        let _ = writeln!(
            summary,
            "warning: damping overflow, reporting best point found"
        );
    }
    summary.push_str(&timing_line(&rep.timing));
    let _ = writeln!(summary, "wall time {:.3} s", t0.elapsed().as_secs_f64());
    Ok(Output {
        csv: finish(w)?,
        summary,
    })
}

/// 2 for bad input, 3 for numerical failures.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Input { .. } | Error::Domain(_) => 2,
        Error::Numeric(_) | Error::Singular { .. } => 3,
    }
}
