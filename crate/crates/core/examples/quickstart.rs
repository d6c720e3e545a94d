//! Minimal end-to-end solve; the README quick start verbatim.

use std::sync::Arc;

use ipde::{builtin, models, solve, FarfieldRule, Grid, JumpDiscretization, SchemeConfig};

fn main() -> ipde::Result<()> {
    let problem = models::by_id("jump_diffusion", 0.5)?;
    let grid = Arc::new(Grid::new(&[-2.0], &[2.0], 0.1)?);
    let kernel = builtin("tempered_stable")?;
    let jd = JumpDiscretization::prepare(&kernel, &grid, None, 16, 1e-10, None)?;
    let cfg = SchemeConfig::default(); // explicit in time, dt from the CFL bound
    let far = FarfieldRule::initial_datum(problem.initial.clone());
    let result = solve(&problem, &jd, grid, &cfg, &far, None)?;
    println!(
        "{} steps, final sup {:.3e}",
        result.steps,
        result.final_values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    );
    Ok(())
}
