//! The gated property suite behind `ipde verify`.
//!
//! Each check is a condensed version of one acceptance property: same
//! assertions and tolerances, smaller sample sizes so the whole suite stays
//! interactive. All parameters are pinned here; the subcommand takes no
//! config on purpose, so a passing run means the same thing everywhere.

use std::sync::Arc;

use anyhow::{bail, Result};
use ipde::harness::{
    builtin_runs, estimate_order, execute_builtin, manufactured_run, oracle_j, ManufacturedCase,
    SmoothFn,
};
use ipde::stepper::{assemble_operators, cfl_max_dt, comparison_violation, fixed_point_map};
use ipde::switching::switching_gap_study;
use ipde::{
    builtin, builtin_ids, models, solve, solve_switching, CflMode, ControlProblem, FarfieldRule,
    Grid, JumpDiscretization, LevyKernel, SchemeConfig, SolveResult, SwitchingProblem,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Check {
    pub name: &'static str,
    pub outcome: Result<String>,
}

type CheckFn = fn() -> Result<String>;

pub fn run_all() -> Vec<Check> {
    let checks: Vec<(&'static str, CheckFn)> = vec![
        ("weight_tables", weight_tables),
        ("mass_bounds", mass_bounds),
        ("consistency", consistency),
        ("comparison", comparison),
        ("stability", stability),
        ("contraction", contraction),
        ("rates", rates),
        ("switching", switching),
        ("temporal_order", temporal_order),
    ];
    checks.into_iter().map(|(name, f)| Check { name, outcome: f() }).collect()
}

const LO: f64 = -2.0;
const HI: f64 = 2.0;

fn grid_1d(dx: f64) -> Result<Arc<Grid>> {
    Ok(Arc::new(Grid::new(&[LO], &[HI], dx)?))
}

fn identity_eta(z: &[f64]) -> Vec<f64> {
    z.to_vec()
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

fn phi_cos(dim: usize) -> SmoothFn {
    SmoothFn {
        f: Arc::new(|x: &[f64]| x.iter().sum::<f64>().cos()),
        grad: Some(Arc::new(|x: &[f64]| {
            let s: f64 = x.iter().sum::<f64>().sin();
            vec![-s; x.len()]
        })),
        sup_bound: Some(1.0),
        third_bound: Some((dim as f64).powf(1.5)),
    }
}

fn scalar_problem(
    sigma: f64,
    drift: f64,
    discount: f64,
    source: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    initial: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    horizon: f64,
) -> ControlProblem {
    ControlProblem {
        controls: vec!["only".into()],
        dim_x: 1,
        dim_z: 1,
        sigma: vec![Arc::new(move |_t, _x: &[f64]| vec![sigma])],
        sigma_cols: 1,
        drift: vec![Arc::new(move |_t, _x: &[f64]| vec![drift])],
        discount: vec![Arc::new(move |_t, _x: &[f64]| discount)],
        source: vec![Arc::new(move |_t, x: &[f64]| source(x))],
        jump: vec![Arc::new(|_t, _x: &[f64], z: &[f64]| z.to_vec())],
        initial: Arc::new(initial),
        horizon,
        coefficients_time_dependent: false,
        jump_state_dependent: false,
    }
}

/// Monotonicity of the quadrature weights and the structural table checks,
/// over every built-in kernel and a short refinement family.
fn weight_tables() -> Result<String> {
    let dxs = [0.125, 0.0625, 0.03125];
    let mut stencils = 0usize;
    for id in builtin_ids() {
        let kern = builtin(id)?;
        for dx in dxs {
            let grid = grid_1d(dx)?;
            let jd = JumpDiscretization::prepare(&kern, &grid, None, 16, 1e-10, None)?;
            if let Some(table) = jd.table() {
                table.check()?;
            }
            let node = grid.n_nodes / 2;
            let drift = jd.drift_vector(&identity_eta, 1, 1e-10)?;
            let st = jd.stencil(&grid, node, &identity_eta, &drift)?;
            let floor = -1e-14 * st.diag_mass.max(1.0);
            if st.min_weight() < floor {
                bail!("kernel {id} at dx {dx}: weight {} below roundoff", st.min_weight());
            }
            stencils += 1;
        }
    }
    Ok(format!("{stencils} stencils nonnegative, tables structured"))
}

/// diag_mass * dx stays bounded under refinement for each kernel (the CFL
/// currency of the jump part), and lbar * dx^2 for the local part.
fn mass_bounds() -> Result<String> {
    let dxs = [0.125, 0.0625, 0.03125, 0.015625];
    let mut worst = 0.0f64;
    for id in builtin_ids() {
        let mut scaled = Vec::new();
        for dx in dxs {
            let kern = builtin(id)?;
            let grid = grid_1d(dx)?;
            let jd = JumpDiscretization::prepare(&kern, &grid, None, 16, 1e-10, None)?;
            let drift = jd.drift_vector(&identity_eta, 1, 1e-10)?;
            let st = jd.stencil(&grid, grid.n_nodes / 2, &identity_eta, &drift)?;
            scaled.push(st.diag_mass * dx);
        }
        let base = scaled[0];
        for v in &scaled {
            let ratio = v / base;
            worst = worst.max(ratio);
            if ratio > 1.5 {
                bail!("kernel {id}: diag_mass * dx grew by {ratio:.3} under refinement");
            }
        }
    }
    for model in ["heat", "jump_diffusion"] {
        let p = models::by_id(model, 0.5)?;
        let mut scaled = Vec::new();
        for dx in dxs {
            let grid = grid_1d(dx)?;
            let ops = assemble_operators(&p, &JumpDiscretization::None, &grid, 0.0, 1e-10)?;
            scaled.push(ops.lbar_max * dx * dx);
        }
        let base = scaled[0];
        for v in &scaled {
            let ratio = v / base;
            worst = worst.max(ratio);
            if ratio > 1.5 {
                bail!("model {model}: lbar * dx^2 grew by {ratio:.3} under refinement");
            }
        }
    }
    Ok(format!("worst refinement ratio {worst:.3} <= 1.5"))
}

/// Difference-quadrature J against the adaptive oracle on cos, and the local
/// stencil against the exact anisotropic operator; fitted orders must clear
/// the scheme's consistency exponents.
fn consistency() -> Result<String> {
    let phi = phi_cos(1);
    let x = [0.4];
    let dxs = [0.2, 0.1, 0.05, 0.025];
    let mut fits = Vec::new();
    for id in builtin_ids() {
        let kern = builtin(id)?;
        // The singular-mass oracles bottom out against rounding noise
        // before 1e-8 (1e-7 for gamma >= 1); both sit far below the
        // discretization errors fitted here.
        let tol = if kern.gamma >= 1.0 { 1e-7 } else { 1e-8 };
        let exact = oracle_j(&kern, &identity_eta, 1.0, &phi, &x, tol)?;
        let mut errors = Vec::new();
        for dx in dxs {
            let grid = grid_1d(dx)?;
            let flat = ((x[0] - LO) / dx).round() as usize;
            let jd = JumpDiscretization::prepare(&kern, &grid, None, 16, 1e-10, None)?;
            let drift = jd.drift_vector(&identity_eta, 1, 1e-10)?;
            let st = jd.stencil(&grid, flat, &identity_eta, &drift)?;
            let approx = st.apply_fn(&grid, &|y| (phi.f)(y));
            errors.push((approx - exact).abs());
        }
        let fit = estimate_order(&dxs, &errors)?;
        if fit.slope < 0.8 {
            bail!("kernel {id}: J consistency order {:.2} < 0.8", fit.slope);
        }
        fits.push(fit.slope);
    }
    let p = two_dim_problem();
    let xy = [0.4, -0.2];
    let exact_l = -2.4 * 0.2f64.cos() - 0.3 * 0.2f64.sin();
    let l_dxs = [0.05, 0.025, 0.0125];
    let mut l_errors = Vec::new();
    for dx in l_dxs {
        let grid = Grid::new(&[-1.0, -1.0], &[1.0, 1.0], dx)?;
        let idx = [
            ((xy[0] + 1.0) / dx).round() as usize,
            ((xy[1] + 1.0) / dx).round() as usize,
        ];
        let flat = idx[0] * grid.strides[0] + idx[1] * grid.strides[1];
        let st = ipde::local::build_l(&p, 0, 0.0, flat, &grid)?;
        let approx = st.apply_fn(&grid, &|y: &[f64]| y.iter().sum::<f64>().cos());
        l_errors.push((approx - exact_l).abs());
    }
    let l_fit = estimate_order(&l_dxs, &l_errors)?;
    if l_fit.slope < 0.9 {
        bail!("local stencil consistency order {:.2} < 0.9", l_fit.slope);
    }
    Ok(format!(
        "J orders {:.2}/{:.2}/{:.2}, L order {:.2}",
        fits[0], fits[1], fits[2], l_fit.slope
    ))
}

fn two_dim_problem() -> ControlProblem {
    let s2 = std::f64::consts::SQRT_2;
    ControlProblem {
        controls: vec!["only".into()],
        dim_x: 2,
        dim_z: 1,
        sigma: vec![Arc::new(move |_t, _x: &[f64]| {
            vec![s2, 0.0, 0.3 * s2, 1.42f64.sqrt()]
        })],
        sigma_cols: 2,
        drift: vec![Arc::new(|_t, _x: &[f64]| vec![0.5, -0.2])],
        discount: vec![Arc::new(|_t, _x: &[f64]| 0.0)],
        source: vec![Arc::new(|_t, _x: &[f64]| 0.0)],
        jump: vec![Arc::new(|_t, _x: &[f64], z: &[f64]| vec![z[0], 0.0])],
        initial: Arc::new(|x: &[f64]| x.iter().sum::<f64>().cos()),
        horizon: 0.5,
        coefficients_time_dependent: false,
        jump_state_dependent: false,
    }
}

/// Random ordered data pairs stay ordered through the scheme.
fn comparison() -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0acce55);
    let kern = builtin("finite_exp")?;
    let grid = grid_1d(0.25)?;
    let jd = JumpDiscretization::prepare(&kern, &grid, None, 16, 1e-10, None)?;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..20 {
        let c0: f64 = rng.random_range(-1.0..1.0);
        let c1: f64 = rng.random_range(-0.5..0.5);
        let c2: f64 = rng.random_range(-0.5..0.5);
        let gap0: f64 = rng.random_range(0.0..0.5);
        let gap1: f64 = rng.random_range(0.0..0.3);
        let f0: f64 = rng.random_range(-0.5..0.5);
        let f1: f64 = rng.random_range(-0.3..0.3);
        let fgap0: f64 = rng.random_range(0.0..0.3);
        let fgap1: f64 = rng.random_range(0.0..0.2);
        let sigma: f64 = rng.random_range(0.0..0.8);
        let b: f64 = rng.random_range(-0.5..0.5);
        let c: f64 = rng.random_range(0.0..0.3);
        let lo_g = move |x: &[f64]| c0 + c1 * x[0].sin() + c2 * x[0].cos();
        let hi_g = move |x: &[f64]| lo_g(x) + gap0 + gap1 * (1.0 + x[0].sin());
        let lo_f = move |x: &[f64]| f0 + f1 * x[0].cos();
        let hi_f = move |x: &[f64]| lo_f(x) + fgap0 + fgap1 * (1.0 + x[0].cos());
        let cfg = SchemeConfig {
            cfl_mode: CflMode::AutoDt,
            cfl_safety: 0.5,
            store_trajectory: true,
            ..SchemeConfig::default()
        };
        let run = |g: ipde::problem::SpaceFn, f: ipde::problem::SpaceFn| -> Result<SolveResult> {
            let mut p = scalar_problem(sigma, b, c, |_| 0.0, |_| 0.0, 0.2);
            p.initial = g.clone();
            p.source = vec![Arc::new(move |_t, x: &[f64]| f(x))];
            let far = FarfieldRule::initial_datum(g);
            Ok(solve(&p, &jd, grid.clone(), &cfg, &far, None)?)
        };
        let low = run(Arc::new(lo_g), Arc::new(lo_f))?;
        let high = run(Arc::new(hi_g), Arc::new(hi_f))?;
        let v = comparison_violation(&low, &high)?;
        worst = worst.max(v);
        if v > 1e-10 {
            bail!("ordered inputs crossed by {v:.3e}");
        }
    }
    Ok(format!("20 ordered pairs, worst violation {worst:.2e} <= 1e-10"))
}

/// Every standard run respects `|U|_0 <= e^(c t) (|g|_0 + t |f|_0)`.
fn stability() -> Result<String> {
    let mut worst = f64::NEG_INFINITY;
    let mut count = 0usize;
    for run in builtin_runs() {
        let outcome = execute_builtin(&run)?;
        if !outcome.stability.ok {
            bail!("run {} broke the sup bound by {:.3e}", run.name, outcome.stability.worst_excess);
        }
        worst = worst.max(outcome.stability.worst_excess);
        count += 1;
    }
    Ok(format!("{count} runs within the sup bound, worst excess {worst:.2e}"))
}

/// The damped fixed-point map of every implicit standard run contracts at
/// its certified factor on random pairs.
fn contraction() -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xc0117ac7);
    let mut details = Vec::new();
    for run in builtin_runs().into_iter().filter(|r| r.theta > 0.0 || r.vartheta > 0.0) {
        let p = models::by_id(run.model, run.horizon)?;
        let grid = grid_1d(run.dx)?;
        let kern = match run.kernel {
            Some(id) => builtin(id)?,
            None => LevyKernel::zero(1),
        };
        let jd = JumpDiscretization::prepare(&kern, &grid, None, 16, 1e-10, None)?;
        let cfg = SchemeConfig {
            theta: run.theta,
            vartheta: run.vartheta,
            ..SchemeConfig::default()
        };
        let ops = assemble_operators(&p, &jd, &grid, 0.0, 1e-10)?;
        let dt = run.dt.unwrap_or_else(|| 0.9 * cfl_max_dt(&ops, run.theta, run.vartheta));
        let u_prev: Vec<f64> = (0..grid.n_nodes).map(|i| (p.initial)(&grid.point(i))).collect();
        let far = FarfieldRule::initial_datum(p.initial.clone());
        let map = fixed_point_map(&grid, &ops, &ops, &u_prev, &far, 0.0, dt, dt, &cfg);
        let mut worst = 0.0f64;
        for _ in 0..10 {
            let u: Vec<f64> = (0..grid.n_nodes).map(|_| rng.random_range(-2.0..2.0)).collect();
            let v: Vec<f64> = (0..grid.n_nodes).map(|_| rng.random_range(-2.0..2.0)).collect();
            let num = sup_diff(&map.apply(&u), &map.apply(&v));
            let den = sup_diff(&u, &v);
            worst = worst.max(num / den);
        }
        let cap = 1.0 - map.eps_fp + 1e-12;
        if worst > cap {
            bail!("run {}: contraction ratio {worst:.3} above {cap:.3}", run.name);
        }
        details.push(format!("{} {worst:.2}<={cap:.2}", run.name));
    }
    Ok(details.join(", "))
}

/// Manufactured smooth runs converge at no less than the guaranteed rates.
fn rates() -> Result<String> {
    let cfg = SchemeConfig { cfl_safety: 0.9, ..SchemeConfig::default() };
    let mut fitted = Vec::new();
    for (id, guarantee, levels) in [
        ("frac_laplace_trunc", 0.2f64, vec![4u32, 5, 6]),
        ("tempered_stable", 0.1f64, vec![5u32, 6, 7]),
    ] {
        let case = ManufacturedCase {
            kernel: builtin(id)?,
            a: 0.1,
            b: 0.3,
            c: 0.2,
            horizon: 0.5,
        };
        let records = manufactured_run(&case, &levels, &cfg)?;
        for w in records.windows(2) {
            if w[1].sup_error >= w[0].sup_error {
                bail!("kernel {id}: errors not strictly decreasing under refinement");
            }
        }
        let hs: Vec<f64> = records.iter().map(|r| r.dx).collect();
        let errors: Vec<f64> = records.iter().map(|r| r.sup_error).collect();
        let fit = estimate_order(&hs, &errors)?;
        let floor = guarantee.max(0.5);
        if fit.slope < floor {
            bail!("kernel {id}: fitted order {:.2} below guarantee {floor}", fit.slope);
        }
        fitted.push(format!("{id} {:.2}", fit.slope));
    }
    Ok(fitted.join(", "))
}

/// The switching relaxation brackets the scalar Bellman solution from below,
/// with spread within the switching cost and gaps shrinking with it.
fn switching() -> Result<String> {
    let base = models::by_id("two_controls", 0.5)?;
    let grid = grid_1d(0.1)?;
    let kern = builtin("finite_exp")?;
    let jd = JumpDiscretization::prepare(&kern, &grid, None, 16, 1e-10, None)?;
    let cfg = SchemeConfig {
        theta: 1.0,
        vartheta: 1.0,
        dt: Some(0.05),
        cfl_mode: CflMode::Off,
        ..SchemeConfig::default()
    };
    let far = FarfieldRule::initial_datum(base.initial.clone());
    let costs = [0.4, 0.2, 0.1, 0.05];
    let partition = vec![vec![0usize], vec![1usize]];
    let study =
        switching_gap_study(&base, &partition, &jd, grid.clone(), &cfg, &far, &costs)?;
    let one_sided_worst =
        study.one_sided_min.iter().copied().fold(f64::INFINITY, f64::min);
    if one_sided_worst < -1e-6 {
        bail!("switching exceeded the scalar solution by {:.3e}", -one_sided_worst);
    }
    for w in study.gaps.windows(2) {
        if w[1] > w[0] + 1e-12 {
            bail!("gap grew when the switching cost shrank: {:?}", study.gaps);
        }
    }
    for &k in &costs {
        let sp = SwitchingProblem {
            base: base.clone(),
            partition: partition.clone(),
            switch_cost: k,
        };
        let res = solve_switching(&sp, &jd, grid.clone(), &cfg, &far)?;
        if res.max_spread() > k + 1e-12 {
            bail!("spread {:.3e} above switching cost {k}", res.max_spread());
        }
    }
    let degenerate = SwitchingProblem {
        base: base.clone(),
        partition: vec![vec![0, 1], vec![0, 1]],
        switch_cost: 0.1,
    };
    let deg = solve_switching(&degenerate, &jd, grid.clone(), &cfg, &far)?;
    let scalar = solve(&base, &jd, grid.clone(), &cfg, &far, None)?;
    let drift = deg
        .regimes
        .iter()
        .map(|r| sup_diff(r, &scalar.final_values))
        .fold(0.0f64, f64::max);
    if drift > 1e-12 {
        bail!("identical-partition system drifted {drift:.3e} from the scalar solve");
    }
    Ok(format!(
        "one-sided min {:.2e}, gaps {:?}",
        one_sided_worst,
        study.gaps.iter().map(|g| (g * 1e3).round() / 1e3).collect::<Vec<_>>()
    ))
}

/// The midpoint scheme is second order in time on a discount-free smooth
/// linear run (the zero-order term is applied explicitly whatever theta is,
/// so a positive discount would cap the measured order at one).
fn temporal_order() -> Result<String> {
    let horizon = 0.5;
    let p = scalar_problem(0.6, 0.3, 0.0, |_| 0.2, |x| x[0].cos(), horizon);
    let kern = builtin("finite_exp")?;
    let grid = grid_1d(0.1)?;
    let jd = JumpDiscretization::prepare(&kern, &grid, None, 16, 1e-10, None)?;
    let far = FarfieldRule::initial_datum(p.initial.clone());
    let run = |dt: f64| -> Result<Vec<f64>> {
        let cfg = SchemeConfig {
            theta: 0.5,
            vartheta: 0.5,
            dt: Some(dt),
            cfl_mode: CflMode::Off,
            fp_tol: 1e-12,
            fp_max_iter: 5000,
            ..SchemeConfig::default()
        };
        Ok(solve(&p, &jd, grid.clone(), &cfg, &far, None)?.final_values)
    };
    let reference = run(horizon / 128.0)?;
    let dts = [horizon / 8.0, horizon / 16.0, horizon / 32.0];
    let mut errors = Vec::new();
    for dt in dts {
        errors.push(sup_diff(&run(dt)?, &reference));
    }
    for w in errors.windows(2) {
        if w[1] >= w[0] {
            bail!("temporal errors not decreasing: {errors:?}");
        }
    }
    let fit = estimate_order(&dts, &errors)?;
    if fit.slope < 1.7 {
        bail!("midpoint temporal order {:.2} < 1.7", fit.slope);
    }
    Ok(format!("fitted order {:.2} >= 1.7", fit.slope))
}

pub fn print_and_gate(checks: &[Check]) -> Result<()> {
    let mut failed = 0usize;
    for c in checks {
        match &c.outcome {
            Ok(detail) => println!("check {:<15} PASS  {detail}", c.name),
            Err(e) => {
                failed += 1;
                println!("check {:<15} FAIL  {e}", c.name);
            }
        }
    }
    let total = checks.len();
    if failed > 0 {
        bail!("{failed}/{total} checks failed");
    }
    println!("verify: {total}/{total} checks passed");
    Ok(())
}
