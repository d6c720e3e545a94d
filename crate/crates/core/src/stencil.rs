//! Difference stencils in difference form.
//!
//! A [`Stencil`] at a grid node represents `sum_k w_k (u(target_k) - u(x))`
//! with `w_k >= 0`. Targets inside the box are grid nodes (off-lattice
//! targets are split by multilinear interpolation, which keeps weights
//! nonnegative); targets outside are kept as points and resolved through
//! the far-field rule at application time. Contributions that land on the
//! center node cancel exactly in difference form and are dropped.

use std::collections::BTreeMap;

use crate::lattice::{interpolation_weights, FarfieldRule, Grid};

#[derive(Debug, Clone)]
pub struct Stencil {
    /// Flat index of the node the stencil is anchored at.
    pub center: usize,
    /// In-grid targets: (flat index, weight), sorted by index.
    pub nodes: Vec<(usize, f64)>,
    /// Out-of-box targets: (point, weight).
    pub far: Vec<(Vec<f64>, f64)>,
    /// Sum of all weights; the diagonal coefficient of the operator.
    pub diag_mass: f64,
}

impl Stencil {
    /// Applies the stencil to grid values with the far-field rule at time t.
    pub fn apply(&self, grid: &Grid, values: &[f64], far: &FarfieldRule, t: f64) -> f64 {
        let uc = values[self.center];
        let mut acc = 0.0;
        for &(flat, w) in &self.nodes {
            acc += w * (values[flat] - uc);
        }
        for (point, w) in &self.far {
            acc += w * (far.eval(grid, values, t, point) - uc);
        }
        acc
    }

    /// Applies the stencil to an arbitrary function of space, as if the
    /// lattice were unbounded; used by consistency checks.
    pub fn apply_fn(&self, grid: &Grid, f: &dyn Fn(&[f64]) -> f64) -> f64 {
        let fc = f(&grid.point(self.center));
        let mut acc = 0.0;
        for &(flat, w) in &self.nodes {
            acc += w * (f(&grid.point(flat)) - fc);
        }
        for (point, w) in &self.far {
            acc += w * (f(point) - fc);
        }
        acc
    }

    /// True if every weight is nonnegative (up to `-tol`).
    pub fn min_weight(&self) -> f64 {
        self.nodes
            .iter()
            .map(|&(_, w)| w)
            .chain(self.far.iter().map(|(_, w)| *w))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Accumulates stencil entries deterministically (sorted maps, no
/// hash-order dependence) and merges duplicate targets.
pub struct StencilBuilder<'g> {
    grid: &'g Grid,
    center: usize,
    center_multi: Vec<i64>,
    nodes: BTreeMap<usize, f64>,
    far: BTreeMap<Vec<i64>, f64>,
}

impl<'g> StencilBuilder<'g> {
    pub fn new(grid: &'g Grid, center: usize) -> StencilBuilder<'g> {
        let center_multi = grid.unflatten(center).iter().map(|&m| m as i64).collect();
        StencilBuilder { grid, center, center_multi, nodes: BTreeMap::new(), far: BTreeMap::new() }
    }

    fn add_lattice_abs(&mut self, coords: &[i64], weight: f64) {
        if weight == 0.0 {
            return;
        }
        match self.grid.flat_of_lattice(coords) {
            Some(flat) if flat == self.center => {}
            Some(flat) => {
                *self.nodes.entry(flat).or_insert(0.0) += weight;
            }
            None => {
                *self.far.entry(coords.to_vec()).or_insert(0.0) += weight;
            }
        }
    }

    /// Adds a target at a lattice offset from the center.
    pub fn add_offset(&mut self, offset: &[i64], weight: f64) {
        let coords: Vec<i64> = self
            .center_multi
            .iter()
            .zip(offset)
            .map(|(c, o)| c + o)
            .collect();
        self.add_lattice_abs(&coords, weight);
    }

    /// Adds a target at an arbitrary point, split by multilinear
    /// interpolation into lattice corners.
    pub fn add_target(&mut self, point: &[f64], weight: f64) {
        if weight == 0.0 {
            return;
        }
        for term in interpolation_weights(self.grid, point) {
            self.add_lattice_abs(&term.lattice, weight * term.weight);
        }
    }

    /// Upwind first-order discretization of `v . Du` added in place:
    /// `v_i^+ / dx` toward `+e_i` and `v_i^- / dx` toward `-e_i`.
    pub fn add_drift(&mut self, v: &[f64]) {
        let h = self.grid.dx;
        let dim = self.grid.dim;
        debug_assert_eq!(v.len(), dim);
        for i in 0..dim {
            let mut e = vec![0i64; dim];
            if v[i] > 0.0 {
                e[i] = 1;
                self.add_offset(&e, v[i] / h);
            } else if v[i] < 0.0 {
                e[i] = -1;
                self.add_offset(&e, -v[i] / h);
            }
        }
    }

    pub fn build(self) -> Stencil {
        let nodes: Vec<(usize, f64)> = self.nodes.into_iter().collect();
        let far: Vec<(Vec<f64>, f64)> = self
            .far
            .into_iter()
            .map(|(coords, w)| (self.grid.lattice_point(&coords), w))
            .collect();
        let diag_mass = nodes.iter().map(|&(_, w)| w).sum::<f64>()
            + far.iter().map(|(_, w)| w).sum::<f64>();
        Stencil { center: self.center, nodes, far, diag_mass }
    }
}
