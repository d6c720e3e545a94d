//! Switching-system relaxation of the scalar Bellman equation.
//!
//! The control set is split into parts `A_1, ..., A_M`. Regime `i` runs the
//! scalar scheme with its sup restricted to `A_i`, and after every step the
//! obstacle
//!
//! ```text
//! v_i <- min( v_i, min_{j != i} (v_j + k) )
//! ```
//!
//! couples the regimes through the switching cost `k > 0`. The projection
//! keeps the regimes within `k` of each other pointwise, every regime
//! dominates the scalar solution, and the gap to the scalar solution
//! shrinks as `k -> 0`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::lattice::{FarfieldRule, Grid};
use crate::nonlocal::JumpDiscretization;
use crate::problem::ControlProblem;
use crate::stepper::{
    assemble_operators, bellman_step, cfl_max_dt, resolve_dt, solve, Operators, SchemeConfig,
};

/// A scalar problem together with a partition of its control set and the
/// cost of switching between regimes.
#[derive(Clone)]
pub struct SwitchingProblem {
    pub base: ControlProblem,
    /// Control indices per regime. Parts must be non-empty and jointly cover
    /// every control; overlap is allowed (regimes may even share all
    /// controls, which makes the projection a no-op).
    pub partition: Vec<Vec<usize>>,
    pub switch_cost: f64,
}

impl SwitchingProblem {
    /// One regime per control.
    pub fn singletons(base: ControlProblem, switch_cost: f64) -> Self {
        let partition = (0..base.n_controls()).map(|k| vec![k]).collect();
        SwitchingProblem { base, partition, switch_cost }
    }

    pub fn n_regimes(&self) -> usize {
        self.partition.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.base.check_shape()?;
        if !(self.switch_cost > 0.0 && self.switch_cost.is_finite()) {
            return Err(Error::config(format!(
                "switch_cost = {} must be positive",
                self.switch_cost
            )));
        }
        if self.partition.is_empty() {
            return Err(Error::config("partition has no regimes"));
        }
        let n = self.base.n_controls();
        let mut seen = vec![false; n];
        for (i, part) in self.partition.iter().enumerate() {
            if part.is_empty() {
                return Err(Error::config(format!("regime {i} has no controls")));
            }
            for &k in part {
                if k >= n {
                    return Err(Error::config(format!(
                        "regime {i} references control {k}, but there are only {n}"
                    )));
                }
                seen[k] = true;
            }
        }
        if let Some(k) = seen.iter().position(|s| !s) {
            return Err(Error::config(format!("control {k} belongs to no regime")));
        }
        Ok(())
    }
}

/// Pointwise obstacle projection across regimes. A single pass suffices:
/// afterwards `v_i <= v_j + cost` holds for every pair because each
/// projected value still dominates the pre-projection minimum.
pub fn project_obstacle(regimes: &mut [Vec<f64>], cost: f64) {
    let m = regimes.len();
    if m < 2 {
        return;
    }
    let n = regimes[0].len();
    for idx in 0..n {
        let mut min1 = f64::INFINITY;
        let mut arg1 = 0usize;
        let mut min2 = f64::INFINITY;
        for (r, regime) in regimes.iter().enumerate() {
            let v = regime[idx];
            if v < min1 {
                min2 = min1;
                min1 = v;
                arg1 = r;
            } else if v < min2 {
                min2 = v;
            }
        }
        for (r, regime) in regimes.iter_mut().enumerate() {
            let other = if r == arg1 { min2 } else { min1 };
            let bound = other + cost;
            if regime[idx] > bound {
                regime[idx] = bound;
            }
        }
    }
}

/// Per-step record of the switching solve.
#[derive(Debug, Clone)]
pub struct SwitchDiag {
    pub step: usize,
    pub t: f64,
    pub sup_norm: f64,
    pub fp_iterations_max: usize,
    /// Largest pointwise spread `max_i v_i - min_i v_i` after projection.
    pub spread: f64,
}

pub struct SwitchingResult {
    pub grid: Arc<Grid>,
    pub dt: f64,
    pub steps: usize,
    /// Final values per regime.
    pub regimes: Vec<Vec<f64>>,
    pub diagnostics: Vec<SwitchDiag>,
}

impl SwitchingResult {
    /// Largest pointwise spread across regimes at the final time.
    pub fn max_spread(&self) -> f64 {
        spread(&self.regimes)
    }
}

fn spread(regimes: &[Vec<f64>]) -> f64 {
    if regimes.len() < 2 {
        return 0.0;
    }
    let n = regimes[0].len();
    let mut worst = 0.0f64;
    for idx in 0..n {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for regime in regimes {
            lo = lo.min(regime[idx]);
            hi = hi.max(regime[idx]);
        }
        worst = worst.max(hi - lo);
    }
    worst
}

/// Runs the switching system to the horizon. All regimes start from the
/// scalar initial datum; a single regime covering every control reproduces
/// the scalar solver bit for bit.
pub fn solve_switching(
    sp: &SwitchingProblem,
    jd: &JumpDiscretization,
    grid: Arc<Grid>,
    cfg: &SchemeConfig,
    farfield: &FarfieldRule,
) -> Result<SwitchingResult> {
    cfg.validate()?;
    sp.validate()?;
    let p = &sp.base;
    let drift_tol = cfg.trunc_tol;
    let ops0 = assemble_operators(p, jd, &grid, 0.0, drift_tol)?;
    let dt_max = cfl_max_dt(&ops0, cfg.theta, cfg.vartheta);
    let plan = resolve_dt(cfg, p.horizon, dt_max)?;
    let u0: Vec<f64> = (0..grid.n_nodes).map(|i| (p.initial)(&grid.point(i))).collect();
    if u0.iter().any(|v| !v.is_finite()) {
        return Err(Error::data("initial datum is not finite on the grid"));
    }
    let mut regimes: Vec<Vec<f64>> = vec![u0; sp.n_regimes()];
    let mut diagnostics = Vec::with_capacity(plan.steps);
    let mut ops_prev = ops0;
    for step in 1..=plan.steps {
        let t_prev = (step - 1) as f64 * plan.dt;
        let t_cur = step as f64 * plan.dt;
        if p.coefficients_time_dependent && step > 1 {
            ops_prev = assemble_operators(p, jd, &grid, t_prev, drift_tol)?;
        }
        let needs_cur = cfg.theta > 0.0 || cfg.vartheta > 0.0;
        let ops_cur_own;
        let ops_cur: &Operators = if p.coefficients_time_dependent && needs_cur {
            ops_cur_own = assemble_operators(p, jd, &grid, t_cur, drift_tol)?;
            &ops_cur_own
        } else {
            &ops_prev
        };
        let mut fp_max = 0usize;
        let mut next = Vec::with_capacity(sp.n_regimes());
        for part in &sp.partition {
            let out = bellman_step(
                &grid,
                &ops_prev,
                ops_cur,
                part,
                &regimes[next.len()],
                farfield,
                t_prev,
                t_cur,
                plan.dt,
                cfg,
            )?;
            fp_max = fp_max.max(out.fp_iterations);
            next.push(out.values);
        }
        project_obstacle(&mut next, sp.switch_cost);
        regimes = next;
        let sup_norm = regimes
            .iter()
            .flat_map(|v| v.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()));
        if !sup_norm.is_finite() {
            return Err(Error::Step(format!(
                "switching system blew up at step {step} (t = {t_cur})"
            )));
        }
        diagnostics.push(SwitchDiag {
            step,
            t: t_cur,
            sup_norm,
            fp_iterations_max: fp_max,
            spread: spread(&regimes),
        });
    }
    Ok(SwitchingResult { grid, dt: plan.dt, steps: plan.steps, regimes, diagnostics })
}

/// Gap between the switching system and the scalar solution over a range
/// of switching costs, using one shared time step for comparability.
pub struct GapStudy {
    pub costs: Vec<f64>,
    /// `max_i sup_beta |v_i - u|` per cost.
    pub gaps: Vec<f64>,
    /// `min_i inf_beta (v_i - u)` per cost; the system should dominate the
    /// scalar solution up to solver tolerance.
    pub one_sided_min: Vec<f64>,
    /// Least-squares slope of `ln gap` against `ln cost`, when defined.
    pub fitted_exponent: Option<f64>,
}

pub fn switching_gap_study(
    base: &ControlProblem,
    partition: &[Vec<usize>],
    jd: &JumpDiscretization,
    grid: Arc<Grid>,
    cfg: &SchemeConfig,
    farfield: &FarfieldRule,
    costs: &[f64],
) -> Result<GapStudy> {
    if costs.is_empty() {
        return Err(Error::config("gap study needs at least one switching cost"));
    }
    let scalar = solve(base, jd, grid.clone(), cfg, farfield, None)?;
    // Pin the scalar run's resolved step so every solve walks the same grid
    // in time.
    let cfg_fixed = SchemeConfig { dt: Some(scalar.dt), ..cfg.clone() };
    let mut gaps = Vec::with_capacity(costs.len());
    let mut one_sided = Vec::with_capacity(costs.len());
    for &k in costs {
        let sp = SwitchingProblem {
            base: base.clone(),
            partition: partition.to_vec(),
            switch_cost: k,
        };
        let r = solve_switching(&sp, jd, grid.clone(), &cfg_fixed, farfield)?;
        let mut gap = 0.0f64;
        let mut lo = f64::INFINITY;
        for regime in &r.regimes {
            for (v, u) in regime.iter().zip(&scalar.final_values) {
                gap = gap.max((v - u).abs());
                lo = lo.min(v - u);
            }
        }
        gaps.push(gap);
        one_sided.push(lo);
    }
    let fitted_exponent = fit_exponent(costs, &gaps);
    Ok(GapStudy { costs: costs.to_vec(), gaps, one_sided_min: one_sided, fitted_exponent })
}

fn fit_exponent(costs: &[f64], gaps: &[f64]) -> Option<f64> {
    if costs.len() < 2 || gaps.iter().any(|&g| g <= 0.0) {
        return None;
    }
    let xs: Vec<f64> = costs.iter().map(|k| k.ln()).collect();
    let ys: Vec<f64> = gaps.iter().map(|g| g.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::models;

    fn grid_1d() -> Arc<Grid> {
        Arc::new(Grid::new(&[-1.0], &[1.0], 0.25).unwrap())
    }

    fn base_cfg() -> SchemeConfig {
        SchemeConfig::default()
    }

    #[test]
    fn validate_rejects_bad_partitions() {
        let p = models::two_controls(0.1);
        let bad = |partition: Vec<Vec<usize>>| SwitchingProblem {
            base: p.clone(),
            partition,
            switch_cost: 0.1,
        };
        assert!(bad(vec![]).validate().is_err());
        assert!(bad(vec![vec![0], vec![]]).validate().is_err());
        assert!(bad(vec![vec![0], vec![2]]).validate().is_err());
        assert!(bad(vec![vec![0]]).validate().is_err());
        assert!(bad(vec![vec![0], vec![1]]).validate().is_ok());
        // Overlap is fine as long as every control is covered somewhere.
        assert!(bad(vec![vec![0], vec![0, 1]]).validate().is_ok());
        assert!(bad(vec![vec![0, 1], vec![0, 1]]).validate().is_ok());
    }

    #[test]
    fn single_regime_reproduces_scalar_bitwise() {
        let p = models::two_controls(0.1);
        let grid = grid_1d();
        let far = FarfieldRule::initial_datum(p.initial.clone());
        let scalar = solve(&p, &JumpDiscretization::None, grid.clone(), &base_cfg(), &far, None)
            .unwrap();
        let sp = SwitchingProblem {
            base: p,
            partition: vec![vec![0, 1]],
            switch_cost: 0.3,
        };
        let sw = solve_switching(&sp, &JumpDiscretization::None, grid, &base_cfg(), &far).unwrap();
        assert_eq!(sw.regimes.len(), 1);
        for (a, b) in sw.regimes[0].iter().zip(&scalar.final_values) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn identical_parts_reproduce_scalar() {
        // Two regimes that both see the full control set evolve identically,
        // so the projection never binds and each equals the scalar solution.
        let p = models::two_controls(0.1);
        let grid = grid_1d();
        let far = FarfieldRule::initial_datum(p.initial.clone());
        let scalar = solve(&p, &JumpDiscretization::None, grid.clone(), &base_cfg(), &far, None)
            .unwrap();
        let sp = SwitchingProblem {
            base: p,
            partition: vec![vec![0, 1], vec![0, 1]],
            switch_cost: 0.05,
        };
        let sw = solve_switching(&sp, &JumpDiscretization::None, grid, &base_cfg(), &far).unwrap();
        for regime in &sw.regimes {
            for (a, b) in regime.iter().zip(&scalar.final_values) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn regimes_dominate_scalar_and_stay_within_cost() {
        let p = models::two_controls(0.1);
        let grid = grid_1d();
        let far = FarfieldRule::initial_datum(p.initial.clone());
        let cost = 0.05;
        let scalar = solve(&p, &JumpDiscretization::None, grid.clone(), &base_cfg(), &far, None)
            .unwrap();
        let sp = SwitchingProblem::singletons(p, cost);
        let cfg = SchemeConfig { dt: Some(scalar.dt), ..base_cfg() };
        let sw = solve_switching(&sp, &JumpDiscretization::None, grid, &cfg, &far).unwrap();
        assert!(sw.max_spread() <= cost + 1e-12);
        for regime in &sw.regimes {
            for (v, u) in regime.iter().zip(&scalar.final_values) {
                assert!(v - u >= -1e-10, "regime dipped below the scalar solution");
            }
        }
    }

    #[test]
    fn gap_shrinks_with_cost() {
        let p = models::two_controls(0.1);
        let grid = grid_1d();
        let far = FarfieldRule::initial_datum(p.initial.clone());
        let study = switching_gap_study(
            &p,
            &[vec![0], vec![1]],
            &JumpDiscretization::None,
            grid,
            &base_cfg(),
            &far,
            &[0.4, 0.1, 0.025],
        )
        .unwrap();
        for w in study.gaps.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "gaps {:?}", study.gaps);
        }
    }

    #[test]
    fn projection_enforces_pairwise_bound() {
        let mut regimes = vec![vec![1.0, 0.0, 5.0], vec![0.0, 0.3, 1.0], vec![2.0, -0.4, 1.2]];
        project_obstacle(&mut regimes, 0.5);
        for i in 0..3 {
            for j in 0..3 {
                if i == j {
                    continue;
                }
                for idx in 0..3 {
                    assert!(regimes[i][idx] <= regimes[j][idx] + 0.5 + 1e-15);
                }
            }
        }
        // Values below every other regime's bound are untouched.
        assert_eq!(regimes[1][0], 0.0);
    }
}
