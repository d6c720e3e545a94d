//! Monotone difference-quadrature discretizations of the jump operator
//!
//! ```text
//! J[u](t, x) = \int ( u(t, x + eta(t,x,z)) - u - 1_{|z|<=1} eta . Du ) nu(dz).
//! ```
//!
//! Three families, chosen by the kernel's singularity class:
//!
//! * finite measures: direct quadrature with cell masses and centroids,
//!   compensator folded into an upwinded drift;
//! * `gamma < 1`: summation by parts against single-tail tables; stencil
//!   weights are first differences of table entries (nonnegative since
//!   `khat` decreases), the final table entry closes the telescope so the
//!   diagonal mass is exactly `(k_0^+ + k_0^-) / dx`;
//! * `gamma in [1, 2)`: second differences of hat-averaged double tails on
//!   a coarse lattice `dz = q dx` (nonnegative by discrete convexity), plus
//!   an upwinded drift combining the full-compensation correction with the
//!   outer compensator.
//!
//! Every weight multiplies a difference `u(target) - u(x)`, so the
//! assembled operator is monotone whenever the weights are nonnegative.

use crate::error::{Error, Result};
use crate::kernels::{
    drift_inner, drift_line_second, drift_outer, DoubleTailKernel1D, KernelKind, LevyKernel,
    PolarTables, PolarTailKernel, SphereRule, TailKernel1D, TailOrder, WeightTable,
};
use crate::lattice::Grid;
use crate::quad::{adaptive, integrate_singular_lower};
use crate::stencil::{Stencil, StencilBuilder};

/// Quadrature rule in the jump variable for finite Lévy measures: nodes
/// with nonnegative weights, typically cell masses at cell centroids.
#[derive(Debug, Clone)]
pub struct ZQuadRule {
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl ZQuadRule {
    /// Cell-mass / centroid rule for a one-dimensional finite kernel on
    /// cells of width `h` out to the envelope truncation radius. Exact on
    /// functions linear in `z` per cell, hence second-order overall.
    pub fn cell_centroids_1d(kern: &LevyKernel, h: f64, trunc_tol: f64) -> Result<ZQuadRule> {
        if kern.dim != 1 {
            return Err(Error::config("centroid rule is one-dimensional"));
        }
        let env = kern.radial_envelope();
        let radius = env.radius_where(|e, r| e.tail0(r), 0.5 * trunc_tol, h.max(0.5))?;
        let n_cells = (radius / h).ceil() as usize;
        let tol_each = 0.25 * trunc_tol * h / radius.max(1.0);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for sign in [1.0f64, -1.0] {
            for m in 0..n_cells {
                let lo = m as f64 * h;
                let hi = lo + h;
                let (mass, moment) = if m == 0 {
                    let mass = integrate_singular_lower(
                        &mut |r| (kern.density)(&[sign * r]),
                        lo,
                        hi,
                        tol_each,
                        None,
                    )?;
                    let rem = |d: f64| env.head(1, d);
                    let moment = integrate_singular_lower(
                        &mut |r| r * (kern.density)(&[sign * r]),
                        lo,
                        hi,
                        tol_each,
                        Some(&rem),
                    )?;
                    (mass.value, moment.value)
                } else {
                    let mass = adaptive(&mut |r| (kern.density)(&[sign * r]), lo, hi, tol_each)?;
                    let moment =
                        adaptive(&mut |r| r * (kern.density)(&[sign * r]), lo, hi, tol_each)?;
                    (mass.value, moment.value)
                };
                if mass <= 0.0 {
                    continue;
                }
                nodes.push(vec![sign * moment / mass]);
                weights.push(mass);
            }
        }
        Ok(ZQuadRule { nodes, weights })
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.nodes.len() != self.weights.len() {
            return Err(Error::config("quadrature rule nodes and weights differ in length"));
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if n.len() != dim {
                return Err(Error::config(format!("quadrature node {i} has wrong dimension")));
            }
        }
        if let Some(w) = self.weights.iter().find(|w| **w < 0.0) {
            return Err(Error::config(format!(
                "quadrature weight {w} is negative; monotonicity requires nonnegative weights"
            )));
        }
        Ok(())
    }
}

/// Direct-quadrature jump stencil for a finite measure:
/// `sum_q w_q (u(x + eta(z_q)) - u(x))` plus the upwinded drift `v`.
pub fn build_j_finite(
    rule: &ZQuadRule,
    grid: &Grid,
    node: usize,
    eta: &dyn Fn(&[f64]) -> Vec<f64>,
    drift: &[f64],
) -> Result<Stencil> {
    let x = grid.point(node);
    let mut b = StencilBuilder::new(grid, node);
    for (z, &w) in rule.nodes.iter().zip(&rule.weights) {
        let jump = eta(z);
        let target: Vec<f64> = x.iter().zip(&jump).map(|(xi, ji)| xi + ji).collect();
        b.add_target(&target, w);
    }
    b.add_drift(drift);
    Ok(b.build())
}

/// Adds one side of a single-tail stencil: weights
/// `(k_{n-1} - k_n) / h` at `z = sign n h` for `n = 1..len`, closed by
/// `k_{last} / h` at `z = sign (len) h` so the telescope is exact.
fn add_single_tail_side(
    b: &mut StencilBuilder,
    x: &[f64],
    side: &[f64],
    h: f64,
    sign: f64,
    eta: &dyn Fn(&[f64]) -> Vec<f64>,
) {
    for n in 1..=side.len() {
        let w = if n < side.len() { (side[n - 1] - side[n]) / h } else { side[n - 1] / h };
        if w == 0.0 {
            continue;
        }
        let z = [sign * n as f64 * h];
        let jump = eta(&z);
        let target: Vec<f64> = x.iter().zip(&jump).map(|(xi, ji)| xi + ji).collect();
        b.add_target(&target, w);
    }
}

/// Single-tail jump stencil (`gamma < 1`) on the grid lattice. The table
/// step must match the grid spacing.
pub fn build_j_single_tail_1d(
    tail: &TailKernel1D,
    grid: &Grid,
    node: usize,
    eta: &dyn Fn(&[f64]) -> Vec<f64>,
    drift: &[f64],
) -> Result<Stencil> {
    if (tail.table.step - grid.dx).abs() > 1e-12 * grid.dx {
        return Err(Error::config(format!(
            "single-tail table step {} does not match grid spacing {}",
            tail.table.step, grid.dx
        )));
    }
    let x = grid.point(node);
    let mut b = StencilBuilder::new(grid, node);
    add_single_tail_side(&mut b, &x, &tail.table.plus, tail.table.step, 1.0, eta);
    add_single_tail_side(&mut b, &x, &tail.table.minus, tail.table.step, -1.0, eta);
    b.add_drift(drift);
    Ok(b.build())
}

/// Adds one side of a double-tail stencil: node coefficients are second
/// differences of the hat weights, with the combined center weight `w0`
/// standing in below `s = 1`. Weights beyond the table are zero, which is
/// the true convex continuation after the tail extension.
fn add_double_tail_side(
    b: &mut StencilBuilder,
    x: &[f64],
    side: &[f64],
    w0: f64,
    h: f64,
    sign: f64,
    eta: &dyn Fn(&[f64]) -> Vec<f64>,
) {
    let h2 = h * h;
    for s in 1..=side.len() {
        let below = if s == 1 { w0 } else { side[s - 1] };
        let cur = side.get(s).copied().unwrap_or(0.0);
        let above = side.get(s + 1).copied().unwrap_or(0.0);
        let w = (below - 2.0 * cur + above) / h2;
        if w == 0.0 {
            continue;
        }
        let z = [sign * s as f64 * h];
        let jump = eta(&z);
        let target: Vec<f64> = x.iter().zip(&jump).map(|(xi, ji)| xi + ji).collect();
        b.add_target(&target, w);
    }
}

/// Double-tail jump stencil (`gamma in [1, 2)`) on the coarse lattice
/// `dz = q dx`. The table step must be an integer multiple of the grid
/// spacing.
pub fn build_j_double_tail_1d(
    tail: &DoubleTailKernel1D,
    grid: &Grid,
    node: usize,
    eta: &dyn Fn(&[f64]) -> Vec<f64>,
    drift: &[f64],
) -> Result<Stencil> {
    let ratio = tail.table.step / grid.dx;
    if (ratio - ratio.round()).abs() > 1e-9 || ratio < 0.5 {
        return Err(Error::config(format!(
            "double-tail step {} is not an integer multiple of grid spacing {}",
            tail.table.step, grid.dx
        )));
    }
    let x = grid.point(node);
    let h = tail.table.step;
    let w0 = tail.table.plus.first().copied().unwrap_or(0.0)
        + tail.table.minus.first().copied().unwrap_or(0.0);
    let mut b = StencilBuilder::new(grid, node);
    add_double_tail_side(&mut b, &x, &tail.table.plus, w0, h, 1.0, eta);
    add_double_tail_side(&mut b, &x, &tail.table.minus, w0, h, -1.0, eta);
    b.add_drift(drift);
    Ok(b.build())
}

/// Prepared jump discretization: kernel plus the tables the chosen scheme
/// needs, ready to emit per-node stencils.
#[derive(Debug, Clone)]
pub enum JumpDiscretization {
    /// No jump part (zero measure).
    None,
    Finite { kern: LevyKernel, rule: ZQuadRule },
    SingleTail1D { kern: LevyKernel, tail: TailKernel1D },
    DoubleTail1D { kern: LevyKernel, tail: DoubleTailKernel1D },
    PolarSingle { kern: LevyKernel, polar: PolarTailKernel },
    PolarDouble { kern: LevyKernel, polar: PolarTailKernel },
}

impl JumpDiscretization {
    /// Chooses and builds the scheme for a kernel on a grid. `dz` is the
    /// coarse step for `gamma >= 1` (default `sqrt(dx)`); `n_sphere` and
    /// `rule` configure the sphere quadrature in dimension >= 2.
    pub fn prepare(
        kern: &LevyKernel,
        grid: &Grid,
        dz: Option<f64>,
        n_sphere: usize,
        trunc_tol: f64,
        rule: Option<&SphereRule>,
    ) -> Result<JumpDiscretization> {
        if kern.bound_k == 0.0 {
            return Ok(JumpDiscretization::None);
        }
        let dx = grid.dx;
        match (kern.kind, kern.dim) {
            (KernelKind::Finite, 1) => Ok(JumpDiscretization::Finite {
                kern: kern.clone(),
                rule: ZQuadRule::cell_centroids_1d(kern, dx, trunc_tol)?,
            }),
            (KernelKind::SingularGammaLt1, 1) => Ok(JumpDiscretization::SingleTail1D {
                kern: kern.clone(),
                tail: crate::kernels::build_single_tail(kern, dx, trunc_tol)?,
            }),
            (KernelKind::SingularGammaGe1, 1) => {
                let dz = dz.unwrap_or_else(|| dx.sqrt());
                Ok(JumpDiscretization::DoubleTail1D {
                    kern: kern.clone(),
                    tail: crate::kernels::build_double_tail(kern, dx, dz, trunc_tol)?,
                })
            }
            (KernelKind::Finite, _) | (KernelKind::SingularGammaLt1, _) => {
                Ok(JumpDiscretization::PolarSingle {
                    kern: kern.clone(),
                    polar: crate::kernels::build_polar_tails(
                        kern,
                        dx,
                        dx,
                        n_sphere,
                        TailOrder::Single,
                        trunc_tol,
                        rule,
                    )?,
                })
            }
            (KernelKind::SingularGammaGe1, _) => {
                let dz = dz.unwrap_or_else(|| dx.sqrt());
                Ok(JumpDiscretization::PolarDouble {
                    kern: kern.clone(),
                    polar: crate::kernels::build_polar_tails(
                        kern,
                        dx,
                        dz,
                        n_sphere,
                        TailOrder::Double,
                        trunc_tol,
                        rule,
                    )?,
                })
            }
        }
    }

    /// The effective coarse step of the scheme (`dz` for double tails, the
    /// grid step otherwise); `None` when there is no jump part.
    pub fn step(&self) -> Option<f64> {
        match self {
            JumpDiscretization::None => None,
            JumpDiscretization::Finite { rule: _, .. } => None,
            JumpDiscretization::SingleTail1D { tail, .. } => Some(tail.table.step),
            JumpDiscretization::DoubleTail1D { tail, .. } => Some(tail.table.step),
            JumpDiscretization::PolarSingle { polar, .. }
            | JumpDiscretization::PolarDouble { polar, .. } => Some(polar.step),
        }
    }

    /// The upwinded drift vector the scheme pairs with its quadrature part:
    /// `-b_inner` for integrable jumps (compensator over `|z| <= 1`), and
    /// `b_outer - b_tilde` for double tails (outer compensator plus the
    /// full-compensation second-difference correction). `eta` has (t, x,
    /// control) already bound.
    pub fn drift_vector(
        &self,
        eta: &dyn Fn(&[f64]) -> Vec<f64>,
        dim_x: usize,
        tol: f64,
    ) -> Result<Vec<f64>> {
        match self {
            JumpDiscretization::None => Ok(vec![0.0; dim_x]),
            JumpDiscretization::Finite { kern, .. }
            | JumpDiscretization::SingleTail1D { kern, .. }
            | JumpDiscretization::PolarSingle { kern, .. } => {
                let b_in = drift_inner(kern, eta, dim_x, tol)?;
                Ok(b_in.iter().map(|v| -v).collect())
            }
            JumpDiscretization::DoubleTail1D { kern, tail } => {
                let b_out = drift_outer(kern, eta, dim_x, tol)?;
                let eta_line = |s: f64| eta(&[s]);
                let b_tilde = drift_line_second(&tail.table, &eta_line, dim_x);
                Ok(b_out.iter().zip(&b_tilde).map(|(o, t)| o - t).collect())
            }
            JumpDiscretization::PolarDouble { kern, polar } => {
                let b_out = drift_outer(kern, eta, dim_x, tol)?;
                let mut correction = vec![0.0; dim_x];
                if let PolarTables::Double { tables, pair_dirs } = &polar.tables {
                    for (table, &(i, _j)) in tables.iter().zip(pair_dirs) {
                        let dir = polar.directions[i].clone();
                        let eta_line = move |s: f64| {
                            let z: Vec<f64> = dir.iter().map(|d| d * s).collect();
                            eta(&z)
                        };
                        let b_t = drift_line_second(table, &eta_line, dim_x);
                        let w = polar.sphere_weights[i];
                        for c in 0..dim_x {
                            correction[c] += w * b_t[c];
                        }
                    }
                }
                Ok(b_out.iter().zip(&correction).map(|(o, t)| o - t).collect())
            }
        }
    }

    /// Emits the jump stencil at a node given the bound jump map and the
    /// precomputed drift vector from [`drift_vector`].
    pub fn stencil(
        &self,
        grid: &Grid,
        node: usize,
        eta: &dyn Fn(&[f64]) -> Vec<f64>,
        drift: &[f64],
    ) -> Result<Stencil> {
        match self {
            JumpDiscretization::None => {
                Ok(StencilBuilder::new(grid, node).build())
            }
            JumpDiscretization::Finite { rule, .. } => {
                build_j_finite(rule, grid, node, eta, drift)
            }
            JumpDiscretization::SingleTail1D { tail, .. } => {
                build_j_single_tail_1d(tail, grid, node, eta, drift)
            }
            JumpDiscretization::DoubleTail1D { tail, .. } => {
                build_j_double_tail_1d(tail, grid, node, eta, drift)
            }
            JumpDiscretization::PolarSingle { polar, .. } => {
                let x = grid.point(node);
                let mut b = StencilBuilder::new(grid, node);
                if let PolarTables::Single(per_dir) = &polar.tables {
                    for (d_idx, side) in per_dir.iter().enumerate() {
                        let dir = &polar.directions[d_idx];
                        let w_sphere = polar.sphere_weights[d_idx];
                        let h = polar.step;
                        for n in 1..=side.len() {
                            let w = if n < side.len() {
                                (side[n - 1] - side[n]) / h
                            } else {
                                side[n - 1] / h
                            } * w_sphere;
                            if w == 0.0 {
                                continue;
                            }
                            let z: Vec<f64> = dir.iter().map(|d| d * n as f64 * h).collect();
                            let jump = eta(&z);
                            let target: Vec<f64> =
                                x.iter().zip(&jump).map(|(xi, ji)| xi + ji).collect();
                            b.add_target(&target, w);
                        }
                    }
                }
                b.add_drift(drift);
                Ok(b.build())
            }
            JumpDiscretization::PolarDouble { polar, .. } => {
                let x = grid.point(node);
                let mut b = StencilBuilder::new(grid, node);
                if let PolarTables::Double { tables, pair_dirs } = &polar.tables {
                    for (table, &(i, _j)) in tables.iter().zip(pair_dirs) {
                        let dir = polar.directions[i].clone();
                        let w_sphere = polar.sphere_weights[i];
                        let h = table.step;
                        let w0 = table.plus.first().copied().unwrap_or(0.0)
                            + table.minus.first().copied().unwrap_or(0.0);
                        let eta_dir = |s: f64| {
                            let z: Vec<f64> = dir.iter().map(|d| d * s).collect();
                            eta(&z)
                        };
                        for (side, sign) in [(&table.plus, 1.0f64), (&table.minus, -1.0f64)] {
                            let h2 = h * h;
                            for s in 1..=side.len() {
                                let below = if s == 1 { w0 } else { side[s - 1] };
                                let cur = side.get(s).copied().unwrap_or(0.0);
                                let above = side.get(s + 1).copied().unwrap_or(0.0);
                                let w = w_sphere * (below - 2.0 * cur + above) / h2;
                                if w == 0.0 {
                                    continue;
                                }
                                let jump = eta_dir(sign * s as f64 * h);
                                let target: Vec<f64> =
                                    x.iter().zip(&jump).map(|(xi, ji)| xi + ji).collect();
                                b.add_target(&target, w);
                            }
                        }
                    }
                }
                b.add_drift(drift);
                Ok(b.build())
            }
        }
    }

    /// Scheme diagonal mass per unit function value (independent of the
    /// jump map): the `center_mass` of the underlying table(s), used by the
    /// scaling diagnostics.
    pub fn center_mass(&self) -> f64 {
        match self {
            JumpDiscretization::None => 0.0,
            JumpDiscretization::Finite { rule, .. } => rule.weights.iter().sum(),
            JumpDiscretization::SingleTail1D { tail, .. } => tail.table.center_mass(),
            JumpDiscretization::DoubleTail1D { tail, .. } => tail.table.center_mass(),
            JumpDiscretization::PolarSingle { polar, .. } => match &polar.tables {
                PolarTables::Single(per_dir) => per_dir
                    .iter()
                    .zip(&polar.sphere_weights)
                    .map(|(side, w)| w * side.first().copied().unwrap_or(0.0) / polar.step)
                    .sum(),
                PolarTables::Double { .. } => 0.0,
            },
            JumpDiscretization::PolarDouble { polar, .. } => match &polar.tables {
                PolarTables::Double { tables, pair_dirs } => tables
                    .iter()
                    .zip(pair_dirs)
                    .map(|(t, &(i, _))| polar.sphere_weights[i] * t.center_mass())
                    .sum(),
                PolarTables::Single(_) => 0.0,
            },
        }
    }

    /// The per-side weight tables, when the scheme has them.
    pub fn table(&self) -> Option<&WeightTable> {
        match self {
            JumpDiscretization::SingleTail1D { tail, .. } => Some(&tail.table),
            JumpDiscretization::DoubleTail1D { tail, .. } => Some(&tail.table),
            _ => None,
        }
    }
}
