//! Volterra kernels `K(t, s)` driving `Y_t = ∫₀ᵗ K(t,s) dW_s`.
//!
//! Each family implements [`VolterraKernel`]; pricing code only talks to the
//! trait. Families are registered by name in a [`KernelRegistry`] so config
//! files and the CLI can select them at runtime.

mod afbm;
mod molchan;
mod wiener;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

pub use afbm::ApproxFbm;
pub use molchan::MolchanGolosov;
pub use wiener::Wiener;

use crate::error::{Error, Result};

/// Common interface of the Gaussian Volterra kernel families.
///
/// Near the diagonal every kernel behaves like `(t − s + ε)^{H−½}` times a
/// bounded factor; [`regular_part`](VolterraKernel::regular_part) returns
/// that factor so quadrature rules can absorb the power weight exactly.
pub trait VolterraKernel: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    fn hurst(&self) -> f64;

    /// Kernel shift `ε` (zero for unshifted families).
    fn shift(&self) -> f64 {
        0.0
    }

    /// Exponent of the diagonal power behaviour, `H − ½`.
    fn diagonal_exponent(&self) -> f64 {
        self.hurst() - 0.5
    }

    /// `β ≥ 0` with `K(t, s) ~ s^{−β}` as `s → 0`; zero for kernels bounded there.
    fn origin_exponent(&self) -> f64 {
        0.0
    }

    /// True when the kernel is exactly the indicator kernel of a standard
    /// Wiener process, which unlocks closed-form evaluations.
    fn is_standard_wiener(&self) -> bool {
        false
    }

    /// `K(t, s)` for `0 ≤ s ≤ t`.
    fn eval(&self, t: f64, s: f64) -> Result<f64>;

    /// `K(t, s) / (t − s + ε)^{H−½}`, finite up to and including `s = t`.
    fn regular_part(&self, t: f64, s: f64) -> Result<f64>;

    /// `r(t) = E[Y_t²]`.
    fn variance(&self, t: f64) -> Result<f64>;

    /// `r(t, s) = E[Y_t Y_s]`.
    fn autocovariance(&self, t: f64, s: f64) -> Result<f64>;

    /// `∫₀ᵗ K(u₁,v) K(u₂,v) dv` for `t ≤ min(u₁, u₂)`: the part of the
    /// covariance already revealed by the driving noise up to `t`.
    fn observed_covariance(&self, u1: f64, u2: f64, t: f64) -> Result<f64>;

    /// `observed_covariance(tᵢ, tⱼ, t)` for all pairs, row-major `n × n`.
    fn observed_covariance_matrix(&self, times: &[f64], t: f64) -> Result<Vec<f64>> {
        let n = times.len();
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let c = self.observed_covariance(times[i], times[j], t)?;
                out[i * n + j] = c;
                out[j * n + i] = c;
            }
        }
        Ok(out)
    }

    /// Prediction-law covariance `r̂(u₁,u₂|t) = r(u₁,u₂) − ∫₀ᵗ K(u₁,v)K(u₂,v)dv`.
    fn conditional_covariance(&self, u1: f64, u2: f64, t: f64) -> Result<f64> {
        check_conditioning(u1, u2, t)?;
        let full = self.autocovariance(u1, u2)?;
        let seen = self.observed_covariance(u1, u2, t)?;
        let value = full - seen;
        Ok(if u1 == u2 { value.max(0.0) } else { value })
    }

    /// `∫ₐᵇ K(t, v) dv` for `0 ≤ a < b ≤ t`.
    fn increment_integral(&self, t: f64, a: f64, b: f64) -> Result<f64>;

    /// Prediction-law mean `m̂_t(u) = ∫₀ᵗ K(u,s) dW_s` from a discretized
    /// path: `grid = [s₀ = 0, s₁, …, s_n = t]` and `increments[j] = W(s_{j+1}) − W(s_j)`.
    ///
    /// Left-point sum `Σⱼ K(u, sⱼ) ΔWⱼ`. A kernel that is singular at a left
    /// point (Molchan–Golosov at `s = 0`) is sampled at that cell's midpoint.
    fn conditional_mean(&self, u: f64, grid: &[f64], increments: &[f64]) -> Result<f64> {
        if grid.len() != increments.len() + 1 && !(grid.len() <= 1 && increments.is_empty()) {
            return Err(Error::domain(format!(
                "grid has {} points but {} increments were supplied",
                grid.len(),
                increments.len()
            )));
        }
        if increments.is_empty() {
            let t = grid.last().copied().unwrap_or(0.0);
            if t > 0.0 {
                return Err(Error::domain("empty grid for a positive conditioning time"));
            }
            return Ok(0.0);
        }
        let t = grid[grid.len() - 1];
        if t > u {
            return Err(Error::domain(format!(
                "conditioning time {t} exceeds prediction time {u}"
            )));
        }
        let mut acc = 0.0;
        for (j, dw) in increments.iter().enumerate() {
            let (left, right) = (grid[j], grid[j + 1]);
            if right < left {
                return Err(Error::domain("grid must be nondecreasing"));
            }
            let k = match self.eval(u, left) {
                Ok(k) => k,
                Err(Error::Singular { .. }) => self.eval(u, 0.5 * (left + right))?,
                Err(e) => return Err(e),
            };
            acc += k * dw;
        }
        Ok(acc)
    }
}

pub(crate) fn check_pair(t: f64, s: f64) -> Result<()> {
    if !(t.is_finite() && s.is_finite()) {
        return Err(Error::domain("kernel arguments must be finite"));
    }
    if s < 0.0 {
        return Err(Error::domain(format!("kernel requires s ≥ 0, got s={s}")));
    }
    if s > t {
        return Err(Error::domain(format!(
            "kernel requires s ≤ t, got t={t}, s={s}"
        )));
    }
    Ok(())
}

pub(crate) fn check_time(t: f64) -> Result<()> {
    if !t.is_finite() || t < 0.0 {
        return Err(Error::domain(format!("time must be non-negative, got {t}")));
    }
    Ok(())
}

pub(crate) fn check_conditioning(u1: f64, u2: f64, t: f64) -> Result<()> {
    check_time(t)?;
    check_time(u1)?;
    check_time(u2)?;
    if t > u1.min(u2) {
        return Err(Error::domain(format!(
            "conditioning time {t} exceeds min(u1, u2) = {}",
            u1.min(u2)
        )));
    }
    Ok(())
}

pub(crate) fn check_hurst(h: f64) -> Result<()> {
    if !(h > 0.0 && h < 1.0) {
        return Err(Error::domain(format!(
            "Hurst parameter must lie in (0,1), got {h}"
        )));
    }
    Ok(())
}

/// Value-level description of a kernel family and its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec {
    Wiener,
    ApproxFbm { hurst: f64, epsilon: f64 },
    MolchanGolosov { hurst: f64 },
}

impl KernelSpec {
    pub fn build(&self) -> Result<Arc<dyn VolterraKernel>> {
        Ok(match *self {
            KernelSpec::Wiener => Arc::new(Wiener),
            KernelSpec::ApproxFbm { hurst, epsilon } => Arc::new(ApproxFbm::new(hurst, epsilon)?),
            KernelSpec::MolchanGolosov { hurst } => Arc::new(MolchanGolosov::new(hurst)?),
        })
    }
}

/// Parameters handed to a kernel factory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    pub hurst: f64,
    pub epsilon: f64,
}

type KernelFactory = Box<dyn Fn(&KernelParams) -> Result<Arc<dyn VolterraKernel>> + Send + Sync>;

/// Name → constructor table for kernel families.
pub struct KernelRegistry {
    factories: BTreeMap<String, KernelFactory>,
}

impl KernelRegistry {
    pub fn empty() -> Self {
        KernelRegistry {
            factories: BTreeMap::new(),
        }
    }

    pub fn register<F>(&mut self, name: &str, factory: F)
    where
        F: Fn(&KernelParams) -> Result<Arc<dyn VolterraKernel>> + Send + Sync + 'static,
    {
        self.factories.insert(name.to_string(), Box::new(factory));
    }

    pub fn create(&self, name: &str, params: &KernelParams) -> Result<Arc<dyn VolterraKernel>> {
        let factory = self.factories.get(name).ok_or_else(|| {
            Error::input(
                None,
                format!(
                    "unknown kernel `{name}` (available: {})",
                    self.names().join(", ")
                ),
            )
        })?;
        factory(params)
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }
}

impl Default for KernelRegistry {
    fn default() -> Self {
        let mut reg = KernelRegistry::empty();
        reg.register("wiener", |_| KernelSpec::Wiener.build());
        reg.register("afbm", |p| {
            KernelSpec::ApproxFbm {
                hurst: p.hurst,
                epsilon: p.epsilon,
            }
            .build()
        });
        reg.register("molchan-golosov", |p| {
            KernelSpec::MolchanGolosov { hurst: p.hurst }.build()
        });
        reg
    }
}

impl fmt::Debug for KernelRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KernelRegistry")
            .field("kernels", &self.names())
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn families() -> Vec<Arc<dyn VolterraKernel>> {
        vec![
            KernelSpec::Wiener.build().unwrap(),
            KernelSpec::ApproxFbm {
                hurst: 0.1,
                epsilon: 0.0,
            }
            .build()
            .unwrap(),
            KernelSpec::ApproxFbm {
                hurst: 0.3,
                epsilon: 0.05,
            }
            .build()
            .unwrap(),
            KernelSpec::ApproxFbm {
                hurst: 0.7,
                epsilon: 0.0,
            }
            .build()
            .unwrap(),
            KernelSpec::MolchanGolosov { hurst: 0.3 }.build().unwrap(),
        ]
    }

    #[test]
    fn registry_resolves_names() {
        let reg = KernelRegistry::default();
        assert_eq!(reg.names(), vec!["afbm", "molchan-golosov", "wiener"]);
        let p = KernelParams {
            hurst: 0.2,
            epsilon: 0.0,
        };
        assert_eq!(reg.create("afbm", &p).unwrap().name(), "afbm");
        assert!(matches!(reg.create("nope", &p), Err(Error::Input { .. })));
        assert!(reg
            .create(
                "afbm",
                &KernelParams {
                    hurst: 1.2,
                    epsilon: 0.0
                }
            )
            .is_err());
    }

    #[test]
    fn conditional_covariance_boundary_values() {
        for k in families() {
            for &(u1, u2) in &[(0.4, 0.4), (0.3, 0.9), (1.0, 0.6)] {
                let r = k.autocovariance(u1, u2).unwrap();
                let c0 = k.conditional_covariance(u1, u2, 0.0).unwrap();
                assert!(
                    (r - c0).abs() <= 1e-9 * r.abs().max(1e-12),
                    "{}: {r} {c0}",
                    k.name()
                );
            }
            for &u in &[0.2, 0.8] {
                let c = k.conditional_covariance(u, u, u).unwrap();
                assert!(c.abs() < 1e-9, "{}: {c}", k.name());
            }
            assert!(k.conditional_covariance(0.5, 0.6, 0.7).is_err());
        }
    }

    #[test]
    fn conditional_variance_nonincreasing_in_conditioning_time() {
        // 50 (u, t) pairs: 5 prediction times × 10 conditioning times.
        for k in families() {
            for &u in &[0.1, 0.3, 0.55, 0.8, 1.0] {
                let mut prev = f64::INFINITY;
                for i in 0..10 {
                    let t = u * i as f64 / 9.0;
                    let c = k.conditional_covariance(u, u, t).unwrap();
                    assert!(c >= 0.0);
                    assert!(c <= prev + 1e-10, "{} u={u} t={t}: {c} > {prev}", k.name());
                    prev = c;
                }
                let r = k.variance(u).unwrap();
                assert!(
                    (k.conditional_covariance(u, u, 0.0).unwrap() - r).abs() < 1e-9 * r.max(1e-12)
                );
            }
        }
    }

    #[test]
    fn covariance_matrices_are_psd() {
        use nalgebra::DMatrix;
        for k in families() {
            let n = 64;
            let times: Vec<f64> = (1..=n).map(|i| i as f64 / n as f64).collect();
            let m = DMatrix::from_fn(n, n, |i, j| k.autocovariance(times[i], times[j]).unwrap());
            assert!((&m - m.transpose()).amax() < 1e-12);
            let eig = m.clone().symmetric_eigen();
            let min = eig.eigenvalues.min();
            assert!(
                min >= -1e-10 * m.trace(),
                "{}: min eigenvalue {min}",
                k.name()
            );
        }
    }

    #[test]
    fn conditional_mean_left_point_sum() {
        let grid = [0.0, 0.25, 0.5];
        let dw = [0.3, -0.1];
        let w = KernelSpec::Wiener.build().unwrap();
        assert!((w.conditional_mean(1.0, &grid, &dw).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(w.conditional_mean(1.0, &[0.0], &[]).unwrap(), 0.0);
        assert_eq!(w.conditional_mean(1.0, &[], &[]).unwrap(), 0.0);
        assert!(w.conditional_mean(1.0, &[0.5], &[]).is_err());
        assert!(w.conditional_mean(0.4, &grid, &dw).is_err());
    }

    #[test]
    fn conditional_mean_afbm_matches_resummation() {
        let (h, eps) = (0.3, 0.1);
        let k = KernelSpec::ApproxFbm {
            hurst: h,
            epsilon: eps,
        }
        .build()
        .unwrap();
        let grid: Vec<f64> = (0..=8).map(|i| 0.1 * i as f64).collect();
        let dw: Vec<f64> = (0..8).map(|i| ((i * 7 % 5) as f64 - 2.0) * 0.03).collect();
        let u = 1.2;
        let mut oracle = 0.0;
        for j in 0..8 {
            oracle += (2.0 * h).sqrt() * (u - grid[j] + eps).powf(h - 0.5) * dw[j];
        }
        let v = k.conditional_mean(u, &grid, &dw).unwrap();
        assert!((v - oracle).abs() <= 1e-15 * oracle.abs().max(1.0));
    }

    #[test]
    fn conditional_mean_molchan_uses_midpoint_at_origin() {
        let k = KernelSpec::MolchanGolosov { hurst: 0.3 }.build().unwrap();
        let v = k.conditional_mean(1.0, &[0.0, 0.5], &[1.0]).unwrap();
        assert!((v - k.eval(1.0, 0.25).unwrap()).abs() < 1e-14);
    }
}
