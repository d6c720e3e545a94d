//! CSV assembly for the subcommands.
//!
//! Machine output goes to `--out` or stdout; human-readable summaries go to
//! stderr so piped CSV stays clean.

use std::path::Path;

use anyhow::{bail, Context, Result};
use ipde::kernels::TableKind;
use ipde::{Grid, JumpDiscretization, SolveResult, SwitchingResult};

pub fn num(v: f64) -> String {
    format!("{v:.12e}")
}

pub fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, text)
                .with_context(|| format!("writing {}", path.display()))?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn point_columns(grid: &Grid, flat: usize) -> String {
    grid.point(flat).iter().map(|v| format!(",{}", num(*v))).collect()
}

fn coord_header(dim: usize) -> String {
    (0..dim).map(|d| format!(",x{d}")).collect()
}

/// Final field (node, coordinates, value, winning control) followed by the
/// per-step diagnostics block.
pub fn solve_csv(r: &SolveResult, labels: &[String]) -> String {
    let mut s = format!("node{},value,active_control\n", coord_header(r.grid.dim));
    for i in 0..r.grid.n_nodes {
        let label = &labels[r.active_controls[i]];
        s += &format!("{i}{},{},{label}\n", point_columns(&r.grid, i), num(r.final_values[i]));
    }
    s += "\nstep,t,sup_norm,cfl_bracket_max,fp_iterations,fp_residual\n";
    for d in &r.diagnostics {
        s += &format!(
            "{},{},{},{},{},{}\n",
            d.step,
            num(d.t),
            num(d.sup_norm),
            num(d.cfl_bracket_max),
            d.fp_iterations,
            num(d.fp_residual)
        );
    }
    s
}

/// Per-regime final fields side by side with the scalar reference, followed
/// by the cost sweep's gap table.
pub fn switching_csv(
    r: &SwitchingResult,
    scalar: &[f64],
    costs: &[f64],
    gaps: &[f64],
    one_sided: &[f64],
) -> String {
    let mut s = format!("node{}", coord_header(r.grid.dim));
    for k in 0..r.regimes.len() {
        s += &format!(",v{k}");
    }
    s += ",scalar\n";
    for i in 0..r.grid.n_nodes {
        s += &format!("{i}{}", point_columns(&r.grid, i));
        for regime in &r.regimes {
            s += &format!(",{}", num(regime[i]));
        }
        s += &format!(",{}\n", num(scalar[i]));
    }
    s += "\ncost,gap,one_sided_min\n";
    for ((k, g), o) in costs.iter().zip(gaps).zip(one_sided) {
        s += &format!("{},{},{}\n", num(*k), num(*g), num(*o));
    }
    s
}

/// Quadrature weights as rows (n, z_n, weight) in lattice order.
///
/// Single-tail entries are cell integrals of the tail-mass function; row n
/// covers the cell between z_n and z_{n+1} (mirrored on the minus side).
/// Double-tail entries are hat integrals at the lattice point z_n, and the
/// zero hat is the sum of the two half-hat entries. Finite kernels have no
/// table; their rows are the quadrature rule's cell centroids.
pub fn kernel_csv(jd: &JumpDiscretization, dx: f64) -> Result<String> {
    let mut s = String::from("n,z_n,weight\n");
    match jd {
        JumpDiscretization::Finite { rule, .. } => {
            let mut rows: Vec<(f64, f64)> =
                rule.nodes.iter().map(|z| z[0]).zip(rule.weights.iter().copied()).collect();
            rows.sort_by(|a, b| a.0.total_cmp(&b.0));
            for (z, w) in rows {
                let n = (z / dx).floor() as i64;
                s += &format!("{n},{},{}\n", num(z), num(w));
            }
        }
        _ => {
            let Some(table) = jd.table() else {
                bail!("this discretization has no weight table to dump (multi-dimensional polar schemes are applied per direction)");
            };
            let h = table.step;
            match table.kind {
                TableKind::SingleTail => {
                    for (k, w) in table.minus.iter().enumerate().rev() {
                        let n = -(k as i64) - 1;
                        s += &format!("{n},{},{}\n", num(n as f64 * h), num(*w));
                    }
                    for (k, w) in table.plus.iter().enumerate() {
                        s += &format!("{k},{},{}\n", num(k as f64 * h), num(*w));
                    }
                }
                TableKind::DoubleTail => {
                    for (k, w) in table.minus.iter().enumerate().skip(1).rev() {
                        let n = -(k as i64);
                        s += &format!("{n},{},{}\n", num(n as f64 * h), num(*w));
                    }
                    let center = table.plus[0] + table.minus[0];
                    s += &format!("0,{},{}\n", num(0.0), num(center));
                    for (k, w) in table.plus.iter().enumerate().skip(1) {
                        s += &format!("{k},{},{}\n", num(k as f64 * h), num(*w));
                    }
                }
            }
        }
    }
    Ok(s)
}

/// One stencil as rows (target, coordinates, weight); far-field targets are
/// listed by their off-grid point with target `far`, and the last row is the
/// diagonal mass.
pub fn stencil_csv(grid: &Grid, st: &ipde::Stencil) -> String {
    let mut s = format!("target{},weight\n", coord_header(grid.dim));
    for (flat, w) in &st.nodes {
        s += &format!("{flat}{},{}\n", point_columns(grid, *flat), num(*w));
    }
    for (x, w) in &st.far {
        let coords: String = x.iter().map(|v| format!(",{}", num(*v))).collect();
        s += &format!("far{coords},{}\n", num(*w));
    }
    let blanks = ",".repeat(grid.dim);
    s += &format!("diag{blanks},{}\n", num(st.diag_mass));
    s
}
