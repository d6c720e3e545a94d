//! Uniform lattice, multilinear interpolation, and far-field evaluation.
//!
//! The solver state lives on a uniform grid with spacing `dx` over a box
//! `[lo, hi]`. Jump stencils reach to points `x + eta(t, x, z)` that are
//! generally off-lattice and possibly outside the box; multilinear
//! interpolation resolves the former with convex weights (which is what
//! keeps the scheme monotone) and a [`FarfieldRule`] resolves the latter.

use std::sync::Arc;

use crate::error::{Error, Result};

/// Relative slack when checking that box widths are integer multiples of dx.
const SNAP_TOL: f64 = 1e-8;
/// Interpolation offsets below this are snapped onto the lattice node.
const THETA_SNAP: f64 = 1e-12;

/// Uniform tensor grid on a box, same spacing along every axis.
#[derive(Debug, Clone)]
pub struct Grid {
    pub dim: usize,
    pub dx: f64,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub shape: Vec<usize>,
    pub strides: Vec<usize>,
    pub n_nodes: usize,
}

impl Grid {
    /// A grid over `[lo, hi]` with spacing `dx`. Each axis must carry at
    /// least three nodes and span an integer multiple of `dx` (up to a
    /// relative slack of 1e-8, after which endpoints are treated as exact).
    pub fn new(lo: &[f64], hi: &[f64], dx: f64) -> Result<Grid> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::config("grid bounds must be nonempty and of equal length"));
        }
        if !(dx > 0.0 && dx < 1.0) {
            return Err(Error::config(format!("grid spacing {dx} outside (0, 1)")));
        }
        let dim = lo.len();
        let mut shape = Vec::with_capacity(dim);
        for i in 0..dim {
            let span = hi[i] - lo[i];
            if !(span > 0.0) {
                return Err(Error::config(format!(
                    "axis {i}: upper bound {} not above lower bound {}",
                    hi[i], lo[i]
                )));
            }
            let cells = (span / dx).round();
            if (span - cells * dx).abs() > SNAP_TOL * span.max(1.0) {
                return Err(Error::config(format!(
                    "axis {i}: span {span} is not an integer multiple of dx = {dx}"
                )));
            }
            let n = cells as usize + 1;
            if n < 3 {
                return Err(Error::config(format!(
                    "axis {i}: only {n} nodes; at least 3 required"
                )));
            }
            shape.push(n);
        }
        let mut strides = vec![0usize; dim];
        let mut acc = 1usize;
        for i in (0..dim).rev() {
            strides[i] = acc;
            acc = acc
                .checked_mul(shape[i])
                .ok_or_else(|| Error::config("grid node count overflows usize"))?;
        }
        Ok(Grid {
            dim,
            dx,
            lo: lo.to_vec(),
            hi: hi.to_vec(),
            shape,
            strides,
            n_nodes: acc,
        })
    }

    pub fn flat(&self, multi: &[usize]) -> usize {
        debug_assert_eq!(multi.len(), self.dim);
        multi.iter().zip(&self.strides).map(|(m, s)| m * s).sum()
    }

    pub fn unflatten(&self, mut flat: usize) -> Vec<usize> {
        let mut multi = vec![0usize; self.dim];
        for i in 0..self.dim {
            multi[i] = flat / self.strides[i];
            flat %= self.strides[i];
        }
        multi
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        let multi = self.unflatten(flat);
        multi
            .iter()
            .enumerate()
            .map(|(i, &m)| self.lo[i] + m as f64 * self.dx)
            .collect()
    }

    /// Flat index of signed lattice coordinates, or `None` if outside.
    pub fn flat_of_lattice(&self, coords: &[i64]) -> Option<usize> {
        let mut flat = 0usize;
        for i in 0..self.dim {
            if coords[i] < 0 || coords[i] >= self.shape[i] as i64 {
                return None;
            }
            flat += coords[i] as usize * self.strides[i];
        }
        Some(flat)
    }

    pub fn lattice_point(&self, coords: &[i64]) -> Vec<f64> {
        coords
            .iter()
            .enumerate()
            .map(|(i, &c)| self.lo[i] + c as f64 * self.dx)
            .collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .enumerate()
            .all(|(i, &xi)| xi >= self.lo[i] - THETA_SNAP && xi <= self.hi[i] + THETA_SNAP)
    }
}

/// One corner of a multilinear interpolation: signed lattice coordinates
/// (possibly outside the grid) and a convex weight.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpTerm {
    pub lattice: Vec<i64>,
    pub weight: f64,
}

/// Multilinear interpolation corners for an arbitrary point. Weights are
/// nonnegative and sum to one; offsets within `1e-12` of a node collapse
/// onto it, so on-lattice targets yield a single unit-weight term.
pub fn interpolation_weights(grid: &Grid, x: &[f64]) -> Vec<InterpTerm> {
    debug_assert_eq!(x.len(), grid.dim);
    // Per axis: (base index, fractional offset in [0, 1)).
    let mut base = Vec::with_capacity(grid.dim);
    let mut theta = Vec::with_capacity(grid.dim);
    for i in 0..grid.dim {
        let s = (x[i] - grid.lo[i]) / grid.dx;
        let mut i0 = s.floor();
        let mut th = s - i0;
        if th < THETA_SNAP {
            th = 0.0;
        } else if th > 1.0 - THETA_SNAP {
            i0 += 1.0;
            th = 0.0;
        }
        base.push(i0 as i64);
        theta.push(th);
    }
    let mut terms = vec![InterpTerm { lattice: Vec::new(), weight: 1.0 }];
    terms[0].lattice = base.clone();
    for i in 0..grid.dim {
        if theta[i] == 0.0 {
            continue;
        }
        let mut next = Vec::with_capacity(terms.len() * 2);
        for t in &terms {
            let mut upper = t.lattice.clone();
            upper[i] += 1;
            next.push(InterpTerm { lattice: t.lattice.clone(), weight: t.weight * (1.0 - theta[i]) });
            next.push(InterpTerm { lattice: upper, weight: t.weight * theta[i] });
        }
        terms = next;
    }
    terms
}

/// How to evaluate the unknown outside the computational box.
#[derive(Clone)]
pub enum FarfieldRule {
    /// Clamp the query point onto the box and interpolate grid values
    /// there (constant extension in the outward normal directions).
    ConstantExtension,
    /// Evaluate a user function of (t, x).
    Function(Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>),
}

impl FarfieldRule {
    /// Far field frozen at the initial datum, the default for problems
    /// whose solution is not expected to move far from `g` near the
    /// boundary over the horizon.
    pub fn initial_datum(g: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>) -> FarfieldRule {
        FarfieldRule::Function(Arc::new(move |_t, x| g(x)))
    }

    /// Value at an out-of-box point given the current grid values.
    pub fn eval(&self, grid: &Grid, values: &[f64], t: f64, x: &[f64]) -> f64 {
        match self {
            FarfieldRule::ConstantExtension => {
                let clamped: Vec<f64> = x
                    .iter()
                    .enumerate()
                    .map(|(i, &xi)| xi.clamp(grid.lo[i], grid.hi[i]))
                    .collect();
                interpolation_weights(grid, &clamped)
                    .iter()
                    .map(|term| {
                        let flat = grid
                            .flat_of_lattice(&term.lattice)
                            .expect("clamped point interpolates inside the grid");
                        term.weight * values[flat]
                    })
                    .sum()
            }
            FarfieldRule::Function(f) => f(t, x),
        }
    }
}

impl std::fmt::Debug for FarfieldRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FarfieldRule::ConstantExtension => write!(f, "ConstantExtension"),
            FarfieldRule::Function(_) => write!(f, "Function(..)"),
        }
    }
}

/// Grid values bundled with the rule for evaluating off the box.
#[derive(Clone)]
pub struct GridFunction {
    pub grid: Arc<Grid>,
    pub values: Vec<f64>,
    pub farfield: FarfieldRule,
}

impl GridFunction {
    pub fn from_fn(
        grid: Arc<Grid>,
        farfield: FarfieldRule,
        f: impl Fn(&[f64]) -> f64,
    ) -> GridFunction {
        let values = (0..grid.n_nodes).map(|i| f(&grid.point(i))).collect();
        GridFunction { grid, values, farfield }
    }

    /// Multilinear interpolation inside the box, far-field rule outside.
    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        let terms = interpolation_weights(&self.grid, x);
        let mut acc = 0.0;
        for term in &terms {
            match self.grid.flat_of_lattice(&term.lattice) {
                Some(flat) => acc += term.weight * self.values[flat],
                None => {
                    acc += term.weight
                        * self
                            .farfield
                            .eval(&self.grid, &self.values, t, &self.grid.lattice_point(&term.lattice));
                }
            }
        }
        acc
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Forward difference of a scalar line function.
pub fn diff_forward(f: &dyn Fn(f64) -> f64, r: f64, h: f64) -> f64 {
    (f(r + h) - f(r)) / h
}

/// Backward difference of a scalar line function.
pub fn diff_backward(f: &dyn Fn(f64) -> f64, r: f64, h: f64) -> f64 {
    (f(r) - f(r - h)) / h
}

/// Centered second difference of a scalar line function.
pub fn diff_second(f: &dyn Fn(f64) -> f64, r: f64, h: f64) -> f64 {
    (f(r + h) - 2.0 * f(r) + f(r - h)) / (h * h)
}
