//! Quadrature node sets for the U₀ and R₀ correction integrals.
//!
//! At `t = 0` both integrals reduce to
//!
//! ```text
//! U₀ = ρξσ₀³ ∫₀ᵀ du ∫ᵤᵀ ds K(s,u) exp{ξ²[½(1−α) r(u) + 2 r(u,s) + (2−α) r(s)]}
//! R₀ = ½σ₀⁴ξ² ∫₀ᵀ du ∬_{[u,T]²} K(t₁,u) K(t₂,u) exp{ξ²(2−α)(r(t₁)+r(t₂)) + 4ξ² c(t₁,t₂|u)}
//! ```
//!
//! with `c(t₁,t₂|u) = ∫₀ᵘ K(t₁,z) K(t₂,z) dz`. Everything except the
//! exponent's coefficients depends on the kernel and the grid only, so the
//! kernel data is tabulated once and each parameter set costs one exp-sum.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::VolterraKernel;
use crate::model::ModelParams;
use crate::quadrature::{
    graded_towards_end, graded_towards_start, midpoint_weighted_rule, pairwise_sum_by,
    power_weighted_rule, trapezoid_weights,
};

/// Treatment of the `(s − u + ε)^{H−½}` factor in the inner integrals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum SingularityHandling {
    /// Trapezoid in `Y = (s−u+ε)^{H+½}`, which integrates the power weight exactly.
    #[default]
    Substitution,
    /// Uniform cells with the weight sampled at cell midpoints.
    Shifted,
}

/// Panel counts per integration dimension.
///
/// U₀ uses `n_outer` for `u` and `n_inner` for `s`; R₀ uses `n_outer` for `u`,
/// `n_mid` for `t₁` and `n_inner` for `t₂`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct QuadGrid {
    pub n_outer: usize,
    pub n_mid: usize,
    pub n_inner: usize,
    pub singularity_handling: SingularityHandling,
}

impl QuadGrid {
    pub fn uniform(n: usize) -> Self {
        QuadGrid {
            n_outer: n,
            n_mid: n,
            n_inner: n,
            singularity_handling: SingularityHandling::Substitution,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for n in [self.n_outer, self.n_mid, self.n_inner] {
            if n < 8 || !n.is_power_of_two() {
                return Err(Error::domain(format!(
                    "panel counts must be powers of two ≥ 8, got {n}"
                )));
            }
        }
        Ok(())
    }

    pub fn doubled(&self) -> Self {
        QuadGrid {
            n_outer: 2 * self.n_outer,
            n_mid: 2 * self.n_mid,
            n_inner: 2 * self.n_inner,
            ..*self
        }
    }
}

/// Grids for the two correction integrals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ApproxGrids {
    pub u0: QuadGrid,
    pub r0: QuadGrid,
}

impl Default for ApproxGrids {
    fn default() -> Self {
        ApproxGrids {
            u0: QuadGrid::uniform(64),
            r0: QuadGrid::uniform(32),
        }
    }
}

impl ApproxGrids {
    pub fn validate(&self) -> Result<()> {
        self.u0.validate()?;
        self.r0.validate()
    }

    pub fn doubled(&self) -> Self {
        ApproxGrids {
            u0: self.u0.doubled(),
            r0: self.r0.doubled(),
        }
    }
}

fn inner_rule(
    kernel: &dyn VolterraKernel,
    len: f64,
    panels: usize,
    h: SingularityHandling,
) -> Vec<(f64, f64)> {
    let p = kernel.diagonal_exponent();
    let shift = kernel.shift();
    match h {
        SingularityHandling::Substitution => power_weighted_rule(len, shift, p, panels),
        SingularityHandling::Shifted => midpoint_weighted_rule(len, shift, p, panels),
    }
}

// Regular part at (t, u); `None` where the kernel is singular in its second
// argument (Molchan–Golosov at u = 0). Those outer nodes are dropped.
fn regular(kernel: &dyn VolterraKernel, t: f64, u: f64) -> Result<Option<f64>> {
    match kernel.regular_part(t, u) {
        Ok(v) => Ok(Some(v)),
        Err(Error::Singular { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, Copy)]
struct U0Node {
    weight: f64,
    r_u: f64,
    r_s: f64,
    r_us: f64,
}

#[derive(Debug, Clone, Copy)]
struct R0Node {
    weight: f64,
    r_sum: f64,
    c: f64,
}

/// Tabulated kernel data for U₀ at one maturity.
#[derive(Debug, Clone)]
pub struct U0Geometry {
    nodes: Vec<U0Node>,
}

impl U0Geometry {
    pub fn build(kernel: &dyn VolterraKernel, maturity: f64, grid: &QuadGrid) -> Result<Self> {
        grid.validate()?;
        check_maturity(maturity)?;
        let p = kernel.diagonal_exponent();
        // The inner integral vanishes like (T−u)^{p+1}; grade the outer rule
        // towards T accordingly.
        let kappa = (2.0 / (p + 2.0)).max(1.0);
        let beta = kernel.origin_exponent();
        let outer = if beta > 0.0 {
            // Kernel blows up like u^{−β} at the origin: grade the first half
            // towards 0 and the second half towards T.
            let half = 0.5 * maturity;
            let mut nodes = graded_towards_start(half, 1.0 / (1.0 - beta), grid.n_outer / 2);
            let last = nodes.pop().map_or(0.0, |(_, w)| w);
            let mut tail: Vec<(f64, f64)> = graded_towards_end(half, kappa, grid.n_outer / 2)
                .into_iter()
                .map(|(u, w)| (half + u, w))
                .collect();
            tail[0].1 += last;
            nodes.extend(tail);
            nodes
        } else {
            graded_towards_end(maturity, kappa, grid.n_outer)
        };
        let rows: Vec<Result<Vec<U0Node>>> = outer
            .par_iter()
            .map(|&(u, wu)| {
                let len = maturity - u;
                if wu == 0.0 || len <= 0.0 {
                    return Ok(Vec::new());
                }
                let r_u = kernel.variance(u)?;
                let mut row = Vec::with_capacity(grid.n_inner + 1);
                for (d, wd) in inner_rule(kernel, len, grid.n_inner, grid.singularity_handling) {
                    let s = (u + d).min(maturity);
                    let Some(reg) = regular(kernel, s, u)? else {
                        continue;
                    };
                    row.push(U0Node {
                        weight: wu * wd * reg,
                        r_u,
                        r_s: kernel.variance(s)?,
                        r_us: kernel.autocovariance(u, s)?,
                    });
                }
                Ok(row)
            })
            .collect();
        let mut nodes = Vec::new();
        for row in rows {
            nodes.extend(row?);
        }
        Ok(U0Geometry { nodes })
    }

    pub fn u0(&self, params: &ModelParams) -> f64 {
        let (xi, rho, alpha, s0) = (params.xi, params.rho, params.alpha, params.sigma0);
        if xi == 0.0 || rho == 0.0 {
            return 0.0;
        }
        let x2 = xi * xi;
        let sum = pairwise_sum_by(&self.nodes, |n| {
            n.weight
                * (x2 * (0.5 * (1.0 - alpha) * n.r_u + 2.0 * n.r_us + (2.0 - alpha) * n.r_s)).exp()
        });
        rho * xi * s0.powi(3) * sum
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Tabulated kernel data for R₀ at one maturity.
#[derive(Debug, Clone)]
pub struct R0Geometry {
    nodes: Vec<R0Node>,
}

impl R0Geometry {
    pub fn build(kernel: &dyn VolterraKernel, maturity: f64, grid: &QuadGrid) -> Result<Self> {
        grid.validate()?;
        check_maturity(maturity)?;
        let n = grid.n_outer;
        let beta = kernel.origin_exponent();
        let outer: Vec<(f64, f64)> = if beta > 0.0 {
            // K(t₁,u)K(t₂,u) ~ u^{−2β} near the origin.
            graded_towards_start(maturity, 1.0 / (1.0 - 2.0 * beta), n)
        } else {
            trapezoid_weights(n)
                .into_iter()
                .enumerate()
                .map(|(i, w)| (maturity * i as f64 / n as f64, w * maturity))
                .collect()
        };
        let symmetric = grid.n_mid == grid.n_inner;
        let rows: Vec<Result<Vec<R0Node>>> = outer
            .par_iter()
            .map(|&(u, wu)| {
                let len = maturity - u;
                if len <= 0.0 {
                    return Ok(Vec::new());
                }
                let side = |panels: usize| -> Result<Vec<(f64, f64, f64)>> {
                    let mut pts = Vec::with_capacity(panels + 1);
                    for (d, w) in inner_rule(kernel, len, panels, grid.singularity_handling) {
                        let t = (u + d).min(maturity);
                        if let Some(reg) = regular(kernel, t, u)? {
                            pts.push((t, w * reg, kernel.variance(t)?));
                        }
                    }
                    Ok(pts)
                };
                let a = side(grid.n_mid)?;
                let b = if symmetric {
                    a.clone()
                } else {
                    side(grid.n_inner)?
                };
                // One batched call over the union of both sides.
                let mut times: Vec<f64> = a.iter().map(|x| x.0).collect();
                if !symmetric {
                    times.extend(b.iter().map(|x| x.0));
                }
                let cov = kernel.observed_covariance_matrix(&times, u)?;
                let m = times.len();
                let offset = if symmetric { 0 } else { a.len() };
                let mut row = Vec::with_capacity(a.len() * b.len());
                for (i, &(_, w1, r1)) in a.iter().enumerate() {
                    for (j, &(_, w2, r2)) in b.iter().enumerate() {
                        if symmetric && j < i {
                            continue;
                        }
                        let mult = if symmetric && j > i { 2.0 } else { 1.0 };
                        row.push(R0Node {
                            weight: mult * wu * w1 * w2,
                            r_sum: r1 + r2,
                            c: cov[i * m + offset + j],
                        });
                    }
                }
                Ok(row)
            })
            .collect();
        let mut nodes = Vec::new();
        for row in rows {
            nodes.extend(row?);
        }
        Ok(R0Geometry { nodes })
    }

    pub fn r0(&self, params: &ModelParams) -> f64 {
        let (xi, alpha, s0) = (params.xi, params.alpha, params.sigma0);
        if xi == 0.0 {
            return 0.0;
        }
        let x2 = xi * xi;
        let sum = pairwise_sum_by(&self.nodes, |n| {
            n.weight * (x2 * ((2.0 - alpha) * n.r_sum + 4.0 * n.c)).exp()
        });
        0.5 * s0.powi(4) * x2 * sum
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Both correction tables for one (kernel, maturity, grids) triple.
#[derive(Debug, Clone)]
pub struct CorrectionGeometry {
    pub maturity: f64,
    pub u0: U0Geometry,
    pub r0: R0Geometry,
}

impl CorrectionGeometry {
    pub fn build(kernel: &dyn VolterraKernel, maturity: f64, grids: &ApproxGrids) -> Result<Self> {
        Ok(CorrectionGeometry {
            maturity,
            u0: U0Geometry::build(kernel, maturity, &grids.u0)?,
            r0: R0Geometry::build(kernel, maturity, &grids.r0)?,
        })
    }
}

fn check_maturity(t: f64) -> Result<()> {
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::domain(format!("maturity must be > 0, got {t}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct GeometryKey {
    kernel: &'static str,
    hurst: u64,
    shift: u64,
    maturity: u64,
    grids: ApproxGrids,
}

/// Memo of correction tables keyed by kernel family, `H`, `ε`, maturity and
/// grids. Repeated pricing at the same maturity (strikes of one expiry,
/// optimizer steps that leave `H` unchanged) reuses the tables.
#[derive(Debug, Default)]
pub struct GeometryCache {
    entries: Mutex<HashMap<GeometryKey, Arc<CorrectionGeometry>>>,
}

const CACHE_LIMIT: usize = 256;

impl GeometryCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(
        &self,
        kernel: &dyn VolterraKernel,
        maturity: f64,
        grids: &ApproxGrids,
    ) -> Result<Arc<CorrectionGeometry>> {
        let key = GeometryKey {
            kernel: kernel.name(),
            hurst: kernel.hurst().to_bits(),
            shift: kernel.shift().to_bits(),
            maturity: maturity.to_bits(),
            grids: *grids,
        };
        if let Some(g) = self.entries.lock().expect("cache lock").get(&key) {
            return Ok(Arc::clone(g));
        }
        let geometry = Arc::new(CorrectionGeometry::build(kernel, maturity, grids)?);
        let mut map = self.entries.lock().expect("cache lock");
        if map.len() >= CACHE_LIMIT {
            map.clear();
        }
        map.insert(key, Arc::clone(&geometry));
        Ok(geometry)
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
