//! Monotone discretization of the local part `tr[a D^2 u] + b . Du`.
//!
//! Second derivatives use the seven-point-per-pair splitting: the axis
//! weight along `e_i` is `(a_ii - sum_{j != i} |a_ij|) / dx^2`, positive
//! cross entries `a_ij^+ / dx^2` go to the diagonal corners
//! `+-(e_i + e_j)`, negative ones `a_ij^- / dx^2` to the antidiagonal
//! corners `+-(e_i - e_j)`. A Taylor expansion recombines these to
//! `a_ii u_ii + 2 a_ij u_ij` per pair, and every weight is nonnegative
//! exactly when `a` is diagonally dominant, which is what makes the scheme
//! monotone. Drift is upwinded.

use crate::error::{Error, Result};
use crate::lattice::Grid;
use crate::problem::ControlProblem;
use crate::stencil::{Stencil, StencilBuilder};

/// Relative slack for the diagonal-dominance check; tiny negative slack
/// from forming `sigma sigma^T` is clamped to zero.
const DOMINANCE_SLACK: f64 = 1e-13;

/// Builds the local stencil for one control at one node. Fails with a
/// monotonicity error when the diffusion matrix is not diagonally
/// dominant at the node.
pub fn build_l(
    p: &ControlProblem,
    alpha: usize,
    t: f64,
    node: usize,
    grid: &Grid,
) -> Result<Stencil> {
    let x = grid.point(node);
    let a = p.diffusion(alpha, t, &x);
    let b = (p.drift[alpha])(t, &x);
    let n = p.dim_x;
    let h = grid.dx;
    let h2 = h * h;
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut builder = StencilBuilder::new(grid, node);
    for i in 0..n {
        let off_sum: f64 = (0..n).filter(|&j| j != i).map(|j| a[i * n + j].abs()).sum();
        let mut delta = a[i * n + i] - off_sum;
        if delta < 0.0 {
            if delta >= -DOMINANCE_SLACK * scale.max(1.0) {
                delta = 0.0;
            } else {
                return Err(Error::Monotonicity {
                    node: x.clone(),
                    detail: format!(
                        "diffusion matrix not diagonally dominant in row {i}: \
                         a_ii = {}, sum of off-diagonals = {off_sum} (control `{}`)",
                        a[i * n + i],
                        p.controls[alpha]
                    ),
                });
            }
        }
        let axis = delta / h2;
        let mut e = vec![0i64; n];
        e[i] = 1;
        builder.add_offset(&e, axis + b[i].max(0.0) / h);
        e[i] = -1;
        builder.add_offset(&e, axis + (-b[i]).max(0.0) / h);
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let aij = a[i * n + j];
            if aij == 0.0 {
                continue;
            }
            let (w, sj) = if aij > 0.0 { (aij / h2, 1i64) } else { (-aij / h2, -1i64) };
            let mut e = vec![0i64; n];
            e[i] = 1;
            e[j] = sj;
            builder.add_offset(&e, w);
            e[i] = -1;
            e[j] = -sj;
            builder.add_offset(&e, w);
        }
    }
    Ok(builder.build())
}
