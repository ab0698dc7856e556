//! One-dimensional quadrature building blocks: adaptive Gauss–Kronrod for
//! kernel integrals, and trapezoid rules (plain, graded and power-weighted)
//! used to assemble the multi-dimensional correction integrals.

use crate::error::{Error, Result};

// 15-point Kronrod extension of the 7-point Gauss rule on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let pair = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Nodes and weights of the 15-point Kronrod rule on `[a, b]`.
pub fn kronrod15_rule(a: f64, b: f64) -> [(f64, f64); 15] {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut rule = [(c, WGK[7] * h); 15];
    for j in 0..7 {
        rule[2 * j] = (c - h * XGK[j], WGK[j] * h);
        rule[2 * j + 1] = (c + h * XGK[j], WGK[j] * h);
    }
    rule
}

/// Globally adaptive Gauss–Kronrod (7/15) integration of `f` over `[a, b]`.
///
/// Bisects the interval with the largest error estimate until the summed
/// estimate is below `max(abs_tol, rel_tol·|I|)`. Integrable endpoint
/// singularities are fine since no node sits on an endpoint.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    const MAX_INTERVALS: usize = 2000;
    let (v, e) = gk15(&f, a, b);
    let mut pieces = vec![(a, b, v, e)];
    let mut total = v;
    let mut err = e;
    while err > abs_tol.max(rel_tol * total.abs()) {
        if pieces.len() >= MAX_INTERVALS {
            if err <= 1e3 * abs_tol.max(rel_tol * total.abs()) {
                break;
            }
            return Err(Error::numeric(format!(
                "adaptive quadrature on [{a}, {b}] did not converge (error estimate {err:e})"
            )));
        }
        let (idx, _) = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty");
        let (lo, hi, _, _) = pieces.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            // Interval cannot be split further in floating point.
            break;
        }
        let left = gk15(&f, lo, mid);
        let right = gk15(&f, mid, hi);
        pieces.push((lo, mid, left.0, left.1));
        pieces.push((mid, hi, right.0, right.1));
        // Re-sum from scratch to avoid drift in the running totals.
        total = pairwise_sum_by(&pieces, |p| p.2);
        err = pieces.iter().map(|p| p.3).sum();
        if !total.is_finite() {
            return Err(Error::numeric(
                "non-finite integrand in adaptive quadrature",
            ));
        }
    }
    Ok(total)
}

/// `∫₀ᴸ (a+w)^p (b+w)^p dw` for `0 ≤ a`, `0 ≤ b`.
///
/// The substitution `y = (a'+w)^{p+1}` around the smaller offset `a'`
/// removes the algebraic endpoint behaviour, which is singular when
/// `a' = 0` and `p < 0`.
pub fn power_product_integral(a: f64, b: f64, len: f64, p: f64) -> Result<f64> {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    if len <= 0.0 {
        return Ok(0.0);
    }
    let q = p + 1.0;
    let delta = hi - lo;
    if delta == 0.0 {
        let e = 2.0 * p + 1.0;
        return Ok(((lo + len).powf(e) - lo.powf(e)) / e);
    }
    if p == 0.0 {
        return Ok(len);
    }
    let y0 = lo.powf(q);
    let y1 = (lo + len).powf(q);
    let inv_q = 1.0 / q;
    let value = integrate_adaptive(
        |y: f64| (y.max(0.0).powf(inv_q) + delta).powf(p),
        y0,
        y1,
        1e-11,
        0.0,
    )?;
    Ok(value * inv_q)
}

/// Composite trapezoid weights for `n` panels of unit total length.
pub fn trapezoid_weights(n: usize) -> Vec<f64> {
    let h = 1.0 / n as f64;
    (0..=n)
        .map(|i| if i == 0 || i == n { 0.5 * h } else { h })
        .collect()
}

/// Nodes and weights for `∫₀ᴸ (d+ε)^p g(d) dd`, `p > −1`.
///
/// Trapezoid in `Y = (d+ε)^{p+1}`, which absorbs the power weight exactly:
/// `Σ wᵢ g(dᵢ)` is exact for constant `g`.
pub fn power_weighted_rule(len: f64, shift: f64, p: f64, panels: usize) -> Vec<(f64, f64)> {
    let q = p + 1.0;
    let y0 = shift.powf(q);
    let y1 = (len + shift).powf(q);
    let span = y1 - y0;
    trapezoid_weights(panels)
        .into_iter()
        .enumerate()
        .map(|(i, w)| {
            let y = y0 + span * i as f64 / panels as f64;
            let d = if i == 0 {
                0.0
            } else if i == panels {
                len
            } else {
                (y.powf(1.0 / q) - shift).clamp(0.0, len)
            };
            (d, w * span / q)
        })
        .collect()
}

/// Midpoint nodes for the same weighted integral on a uniform grid, with the
/// weight sampled at cell centres ("shifted grid").
pub fn midpoint_weighted_rule(len: f64, shift: f64, p: f64, panels: usize) -> Vec<(f64, f64)> {
    let h = len / panels as f64;
    (0..panels)
        .map(|i| {
            let d = (i as f64 + 0.5) * h;
            (d, h * (d + shift).powf(p))
        })
        .collect()
}

/// Trapezoid nodes for `∫₀ᵀ f(u) du` after the grading `T − u = T(1−x)^κ`,
/// `κ ≥ 1`, which clusters nodes towards `u = T`.
pub fn graded_towards_end(total: f64, kappa: f64, panels: usize) -> Vec<(f64, f64)> {
    trapezoid_weights(panels)
        .into_iter()
        .enumerate()
        .map(|(i, w)| {
            let x = i as f64 / panels as f64;
            let rem = (1.0 - x).max(0.0);
            let u = total * (1.0 - rem.powf(kappa));
            let jac = total * kappa * rem.powf(kappa - 1.0);
            (u, w * jac)
        })
        .collect()
}

/// Trapezoid nodes for `∫₀ᵀ f(u) du` after `u = T yᵏ`, `k ≥ 1`, which
/// clusters nodes towards `u = 0`.
pub fn graded_towards_start(total: f64, k: f64, panels: usize) -> Vec<(f64, f64)> {
    trapezoid_weights(panels)
        .into_iter()
        .enumerate()
        .map(|(i, w)| {
            let y = i as f64 / panels as f64;
            (total * y.powf(k), w * total * k * y.powf(k - 1.0))
        })
        .collect()
}

/// Pairwise (cascade) summation; the order of operations depends only on
/// the length of the input.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    pairwise_sum_by(values, |v| *v)
}

pub fn pairwise_sum_by<T, F: Fn(&T) -> f64 + Copy>(values: &[T], f: F) -> f64 {
    const BLOCK: usize = 32;
    if values.len() <= BLOCK {
        return values.iter().map(f).sum();
    }
    let mid = values.len() / 2;
    pairwise_sum_by(&values[..mid], f) + pairwise_sum_by(&values[mid..], f)
}
