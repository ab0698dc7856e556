use statrs::function::beta::{beta, beta_reg};
use statrs::function::gamma::gamma;

use super::{check_conditioning, check_hurst, check_pair, check_time, VolterraKernel};
use crate::error::{Error, Result};
use crate::quadrature::{integrate_adaptive, kronrod15_rule};

/// Molchan–Golosov kernel of standard fractional Brownian motion:
///
/// `K_H(t,s) = C_H [ (t/s)^{H−½}(t−s)^{H−½} − (H−½) s^{½−H} ∫ₛᵗ z^{H−3/2}(z−s)^{H−½} dz ]`.
///
/// Covariances are closed-form; kernel values and kernel integrals go
/// through adaptive quadrature and are much slower than the other families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MolchanGolosov {
    hurst: f64,
    c_h: f64,
}

const INNER_TOL: f64 = 1e-11;
const OUTER_TOL: f64 = 1e-9;

impl MolchanGolosov {
    pub fn new(hurst: f64) -> Result<Self> {
        check_hurst(hurst)?;
        let h = hurst;
        let c_h = (2.0 * h * gamma(1.5 - h) / (gamma(h + 0.5) * gamma(2.0 - 2.0 * h))).sqrt();
        Ok(MolchanGolosov { hurst, c_h })
    }

    pub fn normalizing_constant(&self) -> f64 {
        self.c_h
    }

    fn p(&self) -> f64 {
        self.hurst - 0.5
    }

    /// `∫ₛᵗ z^{p−1}(z−s)^p dz`. For `H < ½` the substitution `x = s/z` gives
    /// `s^{2p} B(−2p, p+1) I_{1−s/t}(p+1, −2p)` with `I` the regularized
    /// incomplete beta; otherwise quadrature via [`Self::inner_integral_numeric`].
    pub fn inner_integral(&self, t: f64, s: f64) -> Result<f64> {
        self.inner_integral_gap(t, s, t - s)
    }

    /// [`Self::inner_integral`] with `gap = t − s` supplied by the caller, which
    /// keeps full relative precision when `s` is within rounding of `t`.
    fn inner_integral_gap(&self, t: f64, s: f64, gap: f64) -> Result<f64> {
        let p = self.p();
        if p < 0.0 {
            let (a, b) = (-2.0 * p, p + 1.0);
            let x = (gap / t).clamp(0.0, 1.0);
            let reg = beta_reg(b, a, x);
            return Ok(s.powf(2.0 * p) * beta(a, b) * reg);
        }
        self.inner_integral_numeric(t, s)
    }

    /// Same integral via `w = (z−s)^{p+1}`, which removes the endpoint
    /// behaviour at `z = s`.
    pub fn inner_integral_numeric(&self, t: f64, s: f64) -> Result<f64> {
        let p = self.p();
        let q = p + 1.0;
        let top = (t - s).powf(q);
        let v = integrate_adaptive(
            |w: f64| (s + w.max(0.0).powf(1.0 / q)).powf(p - 1.0),
            0.0,
            top,
            INNER_TOL,
            0.0,
        )?;
        Ok(v / q)
    }

    fn eval_unchecked(&self, t: f64, s: f64) -> Result<f64> {
        self.eval_gap(t, s, t - s)
    }

    fn eval_gap(&self, t: f64, s: f64, gap: f64) -> Result<f64> {
        let p = self.p();
        if p == 0.0 {
            return Ok(1.0);
        }
        let first = (t / s).powf(p) * gap.powf(p);
        let second = p * s.powf(-p) * self.inner_integral_gap(t, s, gap)?;
        Ok(self.c_h * (first - second))
    }

    fn singular(&self, t: f64, s: f64) -> Error {
        Error::Singular {
            kernel: self.name().into(),
            t,
            s,
        }
    }
}

/// `∫ₐᵇ f` where `f` may blow up like `(x−a)^{−β_lo}` and `(b−x)^{−β_hi}`.
/// Each half of the interval is mapped by `x − a = L y^{1/(1−β)}`; `f`
/// receives `x` and the distance `b − x`, exact on the right half.
fn integrate_endpoint_powers<F: Fn(f64, f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    beta_lo: f64,
    beta_hi: f64,
) -> Result<f64> {
    if b <= a {
        return Ok(0.0);
    }
    let half = 0.5 * (b - a);
    let k_lo = 1.0 / (1.0 - beta_lo);
    let k_hi = 1.0 / (1.0 - beta_hi);
    let left = integrate_adaptive(
        |y: f64| {
            let x = a + half * y.powf(k_lo);
            f(x, b - x) * half * k_lo * y.powf(k_lo - 1.0)
        },
        0.0,
        1.0,
        OUTER_TOL,
        0.0,
    )?;
    let right = integrate_adaptive(
        |y: f64| {
            let d = half * y.powf(k_hi);
            f(b - d, d) * half * k_hi * y.powf(k_hi - 1.0)
        },
        0.0,
        1.0,
        OUTER_TOL,
        0.0,
    )?;
    Ok(left + right)
}

impl VolterraKernel for MolchanGolosov {
    fn name(&self) -> &'static str {
        "molchan-golosov"
    }

    fn hurst(&self) -> f64 {
        self.hurst
    }

    fn origin_exponent(&self) -> f64 {
        self.p().abs()
    }

    fn is_standard_wiener(&self) -> bool {
        self.hurst == 0.5
    }

    fn eval(&self, t: f64, s: f64) -> Result<f64> {
        check_pair(t, s)?;
        let p = self.p();
        if s == 0.0 && p != 0.0 {
            return Err(self.singular(t, s));
        }
        if s == t {
            return match p {
                p if p < 0.0 => Err(self.singular(t, s)),
                p if p > 0.0 => Ok(0.0),
                _ => Ok(1.0),
            };
        }
        self.eval_unchecked(t, s)
    }

    fn regular_part(&self, t: f64, s: f64) -> Result<f64> {
        check_pair(t, s)?;
        let p = self.p();
        if s == 0.0 && p != 0.0 {
            return Err(self.singular(t, s));
        }
        if s == t {
            return Ok(self.c_h);
        }
        Ok(self.eval_unchecked(t, s)? / (t - s).powf(p))
    }

    fn variance(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(t.powf(2.0 * self.hurst))
    }

    fn autocovariance(&self, t: f64, s: f64) -> Result<f64> {
        check_time(t)?;
        check_time(s)?;
        let e = 2.0 * self.hurst;
        Ok(0.5 * (t.powf(e) + s.powf(e) - (t - s).abs().powf(e)))
    }

    /// Every pair shares one rule on `[0, t]`: two halves graded towards the
    /// endpoints like [`integrate_endpoint_powers`], composite Kronrod on each.
    fn observed_covariance_matrix(&self, times: &[f64], t: f64) -> Result<Vec<f64>> {
        let n = times.len();
        for &u in times {
            check_conditioning(u, u, t)?;
        }
        let p = self.p();
        if t == 0.0 || p == 0.0 {
            return Ok(vec![t; n * n]);
        }
        let k = 1.0 / (1.0 - 2.0 * p.abs());
        let half = 0.5 * t;
        // Panels shrink geometrically towards y = 0 so that times just past t,
        // where K(u, ·) is nearly singular at v = t, are still resolved.
        let mut edges = vec![0.0];
        edges.extend((0..=8).rev().map(|e| 0.5f64.powi(e)));
        let mut nodes = Vec::with_capacity(2 * 15 * (edges.len() - 1));
        for (side, k) in [(0, k), (1, k.max(2.0))] {
            for pair in edges.windows(2) {
                for (y, w) in kronrod15_rule(pair[0], pair[1]) {
                    let jac = half * k * y.powf(k - 1.0) * w;
                    let d = half * y.powf(k);
                    // (node, distance to t, weight)
                    nodes.push(if side == 0 {
                        (d, t - d, jac)
                    } else {
                        (t - d, d, jac)
                    });
                }
            }
        }
        let mut values = vec![0.0; n * nodes.len()];
        for (i, &u) in times.iter().enumerate() {
            for (m, &(v, d, _)) in nodes.iter().enumerate() {
                values[i * nodes.len() + m] = if v > 0.0 && (u - t) + d > 0.0 {
                    self.eval_gap(u, v, (u - t) + d)?
                } else {
                    0.0
                };
            }
        }
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            let ri = &values[i * nodes.len()..(i + 1) * nodes.len()];
            for j in i..n {
                let rj = &values[j * nodes.len()..(j + 1) * nodes.len()];
                let c: f64 = nodes
                    .iter()
                    .zip(ri.iter().zip(rj))
                    .map(|(&(_, _, w), (a, b))| w * a * b)
                    .sum();
                out[i * n + j] = c;
                out[j * n + i] = c;
            }
        }
        Ok(out)
    }

    fn observed_covariance(&self, u1: f64, u2: f64, t: f64) -> Result<f64> {
        check_conditioning(u1, u2, t)?;
        if t == 0.0 {
            return Ok(0.0);
        }
        let p = self.p();
        if p == 0.0 {
            return Ok(t);
        }
        // K(u,v) ~ v^{−|p|} at v → 0; at v → t = u the kernel carries (u−v)^p.
        let beta_lo = 2.0 * p.abs();
        let mut beta_hi = 0.0;
        if p < 0.0 {
            if t == u1 {
                beta_hi -= p;
            }
            if t == u2 {
                beta_hi -= p;
            }
        }
        let failed = std::cell::Cell::new(None);
        let f = |v: f64, d: f64| {
            if !(v > 0.0 && d > 0.0) {
                return 0.0;
            }
            let k = self
                .eval_gap(u1, v, (u1 - t) + d)
                .and_then(|a| Ok(a * self.eval_gap(u2, v, (u2 - t) + d)?));
            match k {
                Ok(x) => x,
                Err(e) => {
                    failed.set(Some(e));
                    0.0
                }
            }
        };
        let v = integrate_endpoint_powers(f, 0.0, t, beta_lo, beta_hi)?;
        match failed.into_inner() {
            Some(e) => Err(e),
            None => Ok(v),
        }
    }

    fn increment_integral(&self, t: f64, a: f64, b: f64) -> Result<f64> {
        check_pair(t, b)?;
        check_pair(b, a)?;
        let p = self.p();
        if p == 0.0 {
            return Ok(b - a);
        }
        let beta_lo = if a == 0.0 { p.abs() } else { 0.0 };
        let beta_hi = if b == t && p < 0.0 { -p } else { 0.0 };
        let failed = std::cell::Cell::new(None);
        let f = |v: f64, d: f64| {
            if !(v > 0.0 && d > 0.0) {
                return 0.0;
            }
            match self.eval_gap(t, v, (t - b) + d) {
                Ok(x) => x,
                Err(e) => {
                    failed.set(Some(e));
                    0.0
                }
            }
        };
        let v = integrate_endpoint_powers(f, a, b, beta_lo, beta_hi)?;
        match failed.into_inner() {
            Some(e) => Err(e),
            None => Ok(v),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inner_integral_closed_form_matches_quadrature() {
        for h in [0.05, 0.1, 0.3, 0.45] {
            let k = MolchanGolosov::new(h).unwrap();
            for (t, s) in [(1.0, 0.5), (0.3, 0.001), (2.0, 1.999), (1.0, 1e-6)] {
                let a = k.inner_integral(t, s).unwrap();
                let b = k.inner_integral_numeric(t, s).unwrap();
                assert!(((a - b) / b).abs() < 1e-9, "H={h} t={t} s={s}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn batched_observed_covariance_matches_pairwise() {
        for h in [0.1, 0.3, 0.7] {
            let k = MolchanGolosov::new(h).unwrap();
            let u = 0.4;
            let times = [0.4, 0.4 + 1e-4, 0.55, 1.0];
            let m = k.observed_covariance_matrix(&times, u).unwrap();
            assert!(
                (m[0] - u.powf(2.0 * h)).abs() < 1e-6 * u.powf(2.0 * h),
                "H={h}: {} vs {}",
                m[0],
                u.powf(2.0 * h)
            );
            for i in 0..times.len() {
                for j in 0..times.len() {
                    let e = k.observed_covariance(times[i], times[j], u).unwrap();
                    let rel = ((m[i * 4 + j] - e) / e).abs();
                    assert!(rel < 1e-6, "H={h} ({i},{j}): {} vs {e}", m[i * 4 + j]);
                }
            }
        }
    }

    #[test]
    fn normalizing_constant_at_half_is_one() {
        let k = MolchanGolosov::new(0.5).unwrap();
        assert!((k.normalizing_constant() - 1.0).abs() < 1e-14);
        assert!((k.eval(1.0, 0.3).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn eval_against_fine_trapezoid_inner_integral() {
        // The (z−s)^p singularity is subtracted analytically, the remainder
        // ∫ (z^{p−1} − s^{p−1})(z−s)^p dz goes through a 10⁶-panel trapezoid.
        let h = 0.3;
        let p = h - 0.5;
        let k = MolchanGolosov::new(h).unwrap();
        let (t, s) = (1.0f64, 0.5f64);
        let n = 1_000_000;
        let dz = (t - s) / n as f64;
        let mut acc = 0.0;
        for i in 0..=n {
            let z = s + i as f64 * dz;
            let g = if i == 0 {
                0.0
            } else {
                (z.powf(p - 1.0) - s.powf(p - 1.0)) * (z - s).powf(p)
            };
            acc += if i == 0 || i == n { 0.5 * g } else { g };
        }
        let inner = acc * dz + s.powf(p - 1.0) * (t - s).powf(p + 1.0) / (p + 1.0);
        let c_h = (2.0 * h * gamma(1.5 - h) / (gamma(h + 0.5) * gamma(2.0 - 2.0 * h))).sqrt();
        let oracle = c_h * ((t / s).powf(p) * (t - s).powf(p) - p * s.powf(-p) * inner);
        let v = k.eval(t, s).unwrap();
        assert!((v / oracle - 1.0).abs() < 1e-6, "{v} {oracle}");
    }

    #[test]
    fn kernel_square_integrates_to_variance() {
        // ∫₀ᵗ K_H(t,v)² dv must reproduce t^{2H}; this pins down the power of
        // s multiplying the inner integral.
        for &h in &[0.3, 0.7] {
            let k = MolchanGolosov::new(h).unwrap();
            for &t in &[0.5, 1.0] {
                let v = k.observed_covariance(t, t, t).unwrap();
                let r = k.variance(t).unwrap();
                assert!((v / r - 1.0).abs() < 1e-6, "H={h} t={t}: {v} vs {r}");
            }
            let v = k.observed_covariance(1.0, 0.6, 0.6).unwrap();
            let r = k.autocovariance(1.0, 0.6).unwrap();
            assert!((v / r - 1.0).abs() < 1e-6, "H={h}: {v} vs {r}");
        }
    }

    #[test]
    fn domain_and_singularities() {
        let k = MolchanGolosov::new(0.3).unwrap();
        assert!(matches!(k.eval(1.0, 0.0), Err(Error::Singular { .. })));
        assert!(matches!(k.eval(1.0, 1.0), Err(Error::Singular { .. })));
        assert!(matches!(k.eval(1.0, 1.5), Err(Error::Domain(_))));
        assert_eq!(
            MolchanGolosov::new(0.7).unwrap().eval(1.0, 1.0).unwrap(),
            0.0
        );
        assert!((k.regular_part(1.0, 1.0).unwrap() - k.normalizing_constant()).abs() < 1e-15);
        let near = k.regular_part(1.0, 1.0 - 1e-7).unwrap();
        assert!((near / k.normalizing_constant() - 1.0).abs() < 1e-4);
    }

    #[test]
    fn increment_integral_consistent_with_cross_covariance() {
        // Cov(Y_t, W_t) = ∫₀ᵗ K(t,v) dv; split at an interior point.
        let k = MolchanGolosov::new(0.3).unwrap();
        let whole = k.increment_integral(1.0, 0.0, 1.0).unwrap();
        let parts = k.increment_integral(1.0, 0.0, 0.4).unwrap()
            + k.increment_integral(1.0, 0.4, 1.0).unwrap();
        assert!((whole - parts).abs() < 1e-8 * whole.abs());
        assert!(whole > 0.0);
    }
}
