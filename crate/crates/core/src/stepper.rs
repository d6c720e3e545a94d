//! Two-parameter theta-scheme time stepping for the Bellman equation.
//!
//! One step of the scheme solves, at every node `beta`,
//!
//! ```text
//! U^n = U^{n-1} - dt * sup_alpha {  -(1-theta) L_h[U^{n-1}] - theta L_h[U^n]
//!                                   -(1-vt)    J_h[U^{n-1}] - vt    J_h[U^n]
//!                                   + c U^{n-1} - f },
//! ```
//!
//! with `c` and `f` frozen at the previous time level. `theta = vt = 0` is
//! fully explicit and subject to the CFL bound; any implicit weight is
//! resolved by a damped Jacobi fixed point whose map is a contraction with
//! factor `1 - eps_fp` as long as
//! `eps_fp <= 1 / (1 + dt (theta lbar + vt jbar))`.
//!
//! The sup over controls is taken with ascending index and strict
//! improvement, so ties always resolve to the lowest control index.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::{FarfieldRule, Grid};
use crate::local::build_l;
use crate::nonlocal::JumpDiscretization;
use crate::problem::ControlProblem;
use crate::stencil::Stencil;

/// How the step size interacts with the CFL bound of the explicit part.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CflMode {
    /// Reject a configured `dt` that violates the bound.
    Enforce,
    /// Shrink `dt` to `cfl_safety` times the bound, then round down so the
    /// horizon is an integer number of steps.
    AutoDt,
    /// Trust the configured `dt` (for unconditionally stable or purely
    /// temporal studies).
    Off,
}

/// Scheme parameters.
#[derive(Debug, Clone)]
pub struct SchemeConfig {
    /// Implicit weight of the local part, in [0, 1].
    pub theta: f64,
    /// Implicit weight of the non-local part, in [0, 1].
    pub vartheta: f64,
    /// Requested time step; `None` lets `AutoDt` pick it.
    pub dt: Option<f64>,
    /// Fixed-point damping; `None` selects
    /// `0.9 / (1 + dt (theta lbar + vt jbar))`, or exactly 1 when the
    /// implicit operator mass is zero.
    pub eps_fp: Option<f64>,
    pub fp_tol: f64,
    pub fp_max_iter: usize,
    pub cfl_mode: CflMode,
    /// Fraction of the CFL bound actually used by `AutoDt`/`Enforce`.
    pub cfl_safety: f64,
    /// Coarse jump lattice step for `gamma >= 1` kernels.
    pub dz: Option<f64>,
    /// Budget for neglected kernel tails and table quadrature error.
    pub trunc_tol: f64,
    /// Circle quadrature size for two-dimensional kernels.
    pub n_sphere: usize,
    pub store_trajectory: bool,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        SchemeConfig {
            theta: 0.0,
            vartheta: 0.0,
            dt: None,
            eps_fp: None,
            fp_tol: 1e-12,
            fp_max_iter: 2000,
            cfl_mode: CflMode::AutoDt,
            cfl_safety: 1.0,
            dz: None,
            trunc_tol: 1e-10,
            n_sphere: 16,
            store_trajectory: false,
        }
    }
}

impl SchemeConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("theta", self.theta), ("vartheta", self.vartheta)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(format!("{name} = {v} outside [0, 1]")));
            }
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::config(format!(
                "cfl_safety = {} outside (0, 1]",
                self.cfl_safety
            )));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::config(format!("dt = {dt} must be positive")));
            }
        }
        if let Some(e) = self.eps_fp {
            if !(e > 0.0 && e <= 1.0) {
                return Err(Error::config(format!("eps_fp = {e} outside (0, 1]")));
            }
        }
        if self.fp_tol <= 0.0 {
            return Err(Error::config("fp_tol must be positive"));
        }
        Ok(())
    }
}

/// Local and non-local stencils of one control at one node.
#[derive(Debug, Clone)]
pub struct NodeOp {
    pub l: Stencil,
    pub j: Stencil,
}

/// All operators and zero-order data assembled at one time level.
pub struct Operators {
    pub per_control: Vec<Vec<NodeOp>>,
    /// Discount values `c[alpha][node]`, nonnegative.
    pub c: Vec<Vec<f64>>,
    /// Source values `f[alpha][node]`.
    pub f: Vec<Vec<f64>>,
    /// Largest local diagonal mass over controls and nodes.
    pub lbar_max: f64,
    /// Largest non-local diagonal mass over controls and nodes.
    pub jbar_max: f64,
    pub c_sup: f64,
    pub f_sup: f64,
    pub built_at: f64,
}

/// Assembles every control's operators at time `t`. Fails if any diffusion
/// matrix is not diagonally dominant or any discount value is negative.
pub fn assemble_operators(
    p: &ControlProblem,
    jd: &JumpDiscretization,
    grid: &Grid,
    t: f64,
    drift_tol: f64,
) -> Result<Operators> {
    p.check_shape()?;
    let n = grid.n_nodes;
    let mut per_control = Vec::with_capacity(p.n_controls());
    let mut c_all = Vec::with_capacity(p.n_controls());
    let mut f_all = Vec::with_capacity(p.n_controls());
    let (mut lbar, mut jbar, mut c_sup, mut f_sup) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for alpha in 0..p.n_controls() {
        let shared_drift = if p.jump_state_dependent {
            None
        } else {
            let x0 = grid.point(0);
            let jump = &p.jump[alpha];
            Some(jd.drift_vector(&|z: &[f64]| jump(t, &x0, z), p.dim_x, drift_tol)?)
        };
        let ops: Result<Vec<NodeOp>> = (0..n)
            .into_par_iter()
            .map(|node| {
                let x = grid.point(node);
                let l = build_l(p, alpha, t, node, grid)?;
                let jump = &p.jump[alpha];
                let eta = |z: &[f64]| jump(t, &x, z);
                let drift = match &shared_drift {
                    Some(d) => d.clone(),
                    None => jd.drift_vector(&eta, p.dim_x, drift_tol)?,
                };
                let j = jd.stencil(grid, node, &eta, &drift)?;
                Ok(NodeOp { l, j })
            })
            .collect();
        let ops = ops?;
        let mut c_vals = Vec::with_capacity(n);
        let mut f_vals = Vec::with_capacity(n);
        for node in 0..n {
            let x = grid.point(node);
            let cv = (p.discount[alpha])(t, &x);
            let fv = (p.source[alpha])(t, &x);
            if !cv.is_finite() || !fv.is_finite() {
                return Err(Error::Data(format!(
                    "discount/source not finite at t = {t}, x = {x:?} (control `{}`)",
                    p.controls[alpha]
                )));
            }
            if cv < 0.0 {
                return Err(Error::Data(format!(
                    "negative discount {cv} at t = {t}, x = {x:?} (control `{}`)",
                    p.controls[alpha]
                )));
            }
            c_sup = c_sup.max(cv.abs());
            f_sup = f_sup.max(fv.abs());
            c_vals.push(cv);
            f_vals.push(fv);
        }
        for op in &ops {
            lbar = lbar.max(op.l.diag_mass);
            jbar = jbar.max(op.j.diag_mass);
        }
        per_control.push(ops);
        c_all.push(c_vals);
        f_all.push(f_vals);
    }
    Ok(Operators {
        per_control,
        c: c_all,
        f: f_all,
        lbar_max: lbar,
        jbar_max: jbar,
        c_sup,
        f_sup,
        built_at: t,
    })
}

/// Largest admissible explicit step:
/// `1 / max_{alpha, beta} [ (1-theta) lbar + (1-vt) jbar - c ]`, with
/// `+infinity` when the bracket is nowhere positive.
pub fn cfl_max_dt(ops: &Operators, theta: f64, vartheta: f64) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for (alpha, nodes) in ops.per_control.iter().enumerate() {
        for (i, op) in nodes.iter().enumerate() {
            let bracket = (1.0 - theta) * op.l.diag_mass + (1.0 - vartheta) * op.j.diag_mass
                - ops.c[alpha][i];
            worst = worst.max(bracket);
        }
    }
    if worst <= 0.0 {
        f64::INFINITY
    } else {
        1.0 / worst
    }
}

/// The damped fixed-point map of one implicit step, exposed so stability
/// diagnostics can probe its contraction factor directly.
pub struct FixedPointMap<'a> {
    pub grid: &'a Grid,
    ops_cur: &'a Operators,
    controls: Vec<usize>,
    /// Explicit part per control (subset order) and node:
    /// `-(1-theta) L_prev[U] - (1-vt) J_prev[U] + c U_prev - f`.
    expl: Vec<Vec<f64>>,
    u_prev: Vec<f64>,
    far: &'a FarfieldRule,
    t_cur: f64,
    pub dt: f64,
    theta: f64,
    vartheta: f64,
    pub eps_fp: f64,
}

impl<'a> FixedPointMap<'a> {
    /// Residual `R(u)_i = u_i - uprev_i + dt max_k (expl_k - theta L[u] -
    /// vt J[u])_i` and the per-node argmax (lowest index on ties).
    pub fn residual(&self, u: &[f64]) -> (Vec<f64>, Vec<usize>) {
        let n = self.grid.n_nodes;
        let out: Vec<(f64, usize)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut best = f64::NEG_INFINITY;
                let mut best_k = 0;
                for (slot, &alpha) in self.controls.iter().enumerate() {
                    let op = &self.ops_cur.per_control[alpha][i];
                    let mut v = self.expl[slot][i];
                    if self.theta > 0.0 {
                        v -= self.theta * op.l.apply(self.grid, u, self.far, self.t_cur);
                    }
                    if self.vartheta > 0.0 {
                        v -= self.vartheta * op.j.apply(self.grid, u, self.far, self.t_cur);
                    }
                    if v > best {
                        best = v;
                        best_k = alpha;
                    }
                }
                (u[i] - self.u_prev[i] + self.dt * best, best_k)
            })
            .collect();
        let mut r = Vec::with_capacity(n);
        let mut arg = Vec::with_capacity(n);
        for (v, k) in out {
            r.push(v);
            arg.push(k);
        }
        (r, arg)
    }

    /// One damped Jacobi update `T(u) = u - eps_fp R(u)`.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let (r, _) = self.residual(u);
        u.iter().zip(&r).map(|(ui, ri)| ui - self.eps_fp * ri).collect()
    }
}

/// Per-step diagnostics.
#[derive(Debug, Clone)]
pub struct StepDiag {
    pub step: usize,
    pub t: f64,
    pub sup_norm: f64,
    /// Largest explicit bracket `(1-theta) lbar + (1-vt) jbar - c` seen.
    pub cfl_bracket_max: f64,
    pub fp_iterations: usize,
    pub fp_residual: f64,
}

/// Outcome of a solve.
#[derive(Debug)]
pub struct SolveResult {
    pub grid: Arc<Grid>,
    pub dt: f64,
    pub steps: usize,
    pub initial: Vec<f64>,
    pub final_values: Vec<f64>,
    pub diagnostics: Vec<StepDiag>,
    /// All time levels including the initial one, when requested.
    pub trajectory: Option<Vec<Vec<f64>>>,
    /// Argmax control per node at the final step.
    pub active_controls: Vec<usize>,
    pub c_sup: f64,
    pub f_sup: f64,
}

pub(crate) struct StepOutcome {
    pub values: Vec<f64>,
    pub fp_iterations: usize,
    pub fp_residual: f64,
    pub argmax: Vec<usize>,
}

/// Default damping for the fixed point given the implicit operator mass.
pub fn default_eps_fp(dt: f64, theta: f64, vartheta: f64, lbar: f64, jbar: f64) -> f64 {
    let m = dt * (theta * lbar + vartheta * jbar);
    if m == 0.0 {
        1.0
    } else {
        0.9 / (1.0 + m)
    }
}

/// Builds the explicit part for a subset of controls.
fn explicit_part(
    grid: &Grid,
    ops_prev: &Operators,
    controls: &[usize],
    u_prev: &[f64],
    far: &FarfieldRule,
    t_prev: f64,
    theta: f64,
    vartheta: f64,
) -> Vec<Vec<f64>> {
    controls
        .iter()
        .map(|&alpha| {
            let nodes = &ops_prev.per_control[alpha];
            let c = &ops_prev.c[alpha];
            let f = &ops_prev.f[alpha];
            (0..grid.n_nodes)
                .into_par_iter()
                .map(|i| {
                    let op = &nodes[i];
                    let mut v = c[i] * u_prev[i] - f[i];
                    if theta < 1.0 {
                        v -= (1.0 - theta) * op.l.apply(grid, u_prev, far, t_prev);
                    }
                    if vartheta < 1.0 {
                        v -= (1.0 - vartheta) * op.j.apply(grid, u_prev, far, t_prev);
                    }
                    v
                })
                .collect()
        })
        .collect()
}

/// One Bellman step over a control subset. Shared by the scalar solver and
/// the switching system (which restricts the sup to a partition slice).
#[allow(clippy::too_many_arguments)]
pub(crate) fn bellman_step(
    grid: &Grid,
    ops_prev: &Operators,
    ops_cur: &Operators,
    controls: &[usize],
    u_prev: &[f64],
    far: &FarfieldRule,
    t_prev: f64,
    t_cur: f64,
    dt: f64,
    cfg: &SchemeConfig,
) -> Result<StepOutcome> {
    let expl = explicit_part(grid, ops_prev, controls, u_prev, far, t_prev, cfg.theta, cfg.vartheta);
    let eps_fp = cfg.eps_fp.unwrap_or_else(|| {
        default_eps_fp(dt, cfg.theta, cfg.vartheta, ops_cur.lbar_max, ops_cur.jbar_max)
    });
    let map = FixedPointMap {
        grid,
        ops_cur,
        controls: controls.to_vec(),
        expl,
        u_prev: u_prev.to_vec(),
        far,
        t_cur,
        dt,
        theta: cfg.theta,
        vartheta: cfg.vartheta,
        eps_fp,
    };
    if cfg.theta == 0.0 && cfg.vartheta == 0.0 {
        let (r, argmax) = map.residual(u_prev);
        let values = u_prev.iter().zip(&r).map(|(u, ri)| u - ri).collect();
        return Ok(StepOutcome { values, fp_iterations: 0, fp_residual: 0.0, argmax });
    }
    let mut u = u_prev.to_vec();
    let mut iterations = 0usize;
    let mut residual_tail: Vec<f64> = Vec::new();
    loop {
        let (r, argmax) = map.residual(&u);
        let sup_r = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        residual_tail.push(sup_r);
        if residual_tail.len() > 6 {
            residual_tail.remove(0);
        }
        if sup_r <= cfg.fp_tol {
            return Ok(StepOutcome { values: u, fp_iterations: iterations, fp_residual: sup_r, argmax });
        }
        if iterations >= cfg.fp_max_iter {
            return Err(Error::Convergence { iterations, residual_tail });
        }
        for (ui, ri) in u.iter_mut().zip(&r) {
            *ui -= eps_fp * ri;
        }
        iterations += 1;
    }
}

/// Resolved stepping plan.
pub(crate) struct TimePlan {
    pub dt: f64,
    pub steps: usize,
}

pub(crate) fn resolve_dt(cfg: &SchemeConfig, horizon: f64, dt_max: f64) -> Result<TimePlan> {
    let cap = cfg.cfl_safety * dt_max;
    let dt_eff = match cfg.cfl_mode {
        CflMode::AutoDt => {
            let base = cfg.dt.unwrap_or(cap);
            if !base.is_finite() {
                return Err(Error::config(
                    "unconditionally stable configuration: set dt explicitly",
                ));
            }
            base.min(cap)
        }
        CflMode::Enforce => {
            let dt = cfg
                .dt
                .ok_or_else(|| Error::config("cfl_mode = enforce requires dt"))?;
            if dt > cap * (1.0 + 1e-9) {
                return Err(Error::Step(format!(
                    "dt = {dt} exceeds the admissible bound {cap:.6e}"
                )));
            }
            dt
        }
        CflMode::Off => cfg
            .dt
            .ok_or_else(|| Error::config("cfl_mode = off requires dt"))?,
    };
    let steps = ((horizon / dt_eff) - 1e-9).ceil().max(1.0) as usize;
    Ok(TimePlan { dt: horizon / steps as f64, steps })
}

/// Runs the scheme from the initial datum to the horizon.
pub fn solve(
    p: &ControlProblem,
    jd: &JumpDiscretization,
    grid: Arc<Grid>,
    cfg: &SchemeConfig,
    farfield: &FarfieldRule,
    mut observer: Option<&mut dyn FnMut(usize, f64, &[f64])>,
) -> Result<SolveResult> {
    cfg.validate()?;
    p.check_shape()?;
    let drift_tol = cfg.trunc_tol;
    let ops0 = assemble_operators(p, jd, &grid, 0.0, drift_tol)?;
    let dt_max = cfl_max_dt(&ops0, cfg.theta, cfg.vartheta);
    let plan = resolve_dt(cfg, p.horizon, dt_max)?;
    let mut u: Vec<f64> = (0..grid.n_nodes).map(|i| (p.initial)(&grid.point(i))).collect();
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::data("initial datum is not finite on the grid"));
    }
    let initial = u.clone();
    let mut trajectory = cfg.store_trajectory.then(|| vec![u.clone()]);
    let mut diagnostics = Vec::with_capacity(plan.steps);
    let mut active_controls = vec![0usize; grid.n_nodes];
    let mut c_sup = ops0.c_sup;
    let mut f_sup = ops0.f_sup;
    let all_controls: Vec<usize> = (0..p.n_controls()).collect();
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
        c_sup = c_sup.max(ops_prev.c_sup);
        f_sup = f_sup.max(ops_prev.f_sup);
        if p.coefficients_time_dependent && cfg.cfl_mode == CflMode::Enforce {
            let dt_max_now = cfl_max_dt(&ops_prev, cfg.theta, cfg.vartheta);
            if plan.dt > cfg.cfl_safety * dt_max_now * (1.0 + 1e-9) {
                return Err(Error::Step(format!(
                    "dt = {} exceeds the admissible bound {:.6e} at t = {t_prev}",
                    plan.dt,
                    cfg.cfl_safety * dt_max_now
                )));
            }
        }
        let out = bellman_step(
            &grid, &ops_prev, ops_cur, &all_controls, &u, farfield, t_prev, t_cur, plan.dt, cfg,
        )?;
        u = out.values;
        active_controls = out.argmax;
        let sup_norm = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !sup_norm.is_finite() {
            return Err(Error::Step(format!("solution blew up at step {step} (t = {t_cur})")));
        }
        let bracket = 1.0 / cfl_max_dt(&ops_prev, cfg.theta, cfg.vartheta);
        diagnostics.push(StepDiag {
            step,
            t: t_cur,
            sup_norm,
            cfl_bracket_max: if bracket.is_finite() { bracket } else { 0.0 },
            fp_iterations: out.fp_iterations,
            fp_residual: out.fp_residual,
        });
        if let Some(obs) = observer.as_deref_mut() {
            obs(step, t_cur, &u);
        }
        if let Some(traj) = trajectory.as_mut() {
            traj.push(u.clone());
        }
    }
    Ok(SolveResult {
        grid,
        dt: plan.dt,
        steps: plan.steps,
        initial,
        final_values: u,
        diagnostics,
        trajectory,
        active_controls,
        c_sup,
        f_sup,
    })
}

/// Builds the fixed-point map of a single implicit step at `t_cur` from a
/// given previous state, for contraction diagnostics.
#[allow(clippy::too_many_arguments)]
pub fn fixed_point_map<'a>(
    grid: &'a Grid,
    ops_prev: &'a Operators,
    ops_cur: &'a Operators,
    u_prev: &[f64],
    far: &'a FarfieldRule,
    t_prev: f64,
    t_cur: f64,
    dt: f64,
    cfg: &SchemeConfig,
) -> FixedPointMap<'a> {
    let controls: Vec<usize> = (0..ops_prev.per_control.len()).collect();
    let expl = explicit_part(grid, ops_prev, &controls, u_prev, far, t_prev, cfg.theta, cfg.vartheta);
    let eps_fp = cfg.eps_fp.unwrap_or_else(|| {
        default_eps_fp(dt, cfg.theta, cfg.vartheta, ops_cur.lbar_max, ops_cur.jbar_max)
    });
    FixedPointMap {
        grid,
        ops_cur,
        controls,
        expl,
        u_prev: u_prev.to_vec(),
        far,
        t_cur,
        dt,
        theta: cfg.theta,
        vartheta: cfg.vartheta,
        eps_fp,
    }
}

/// Largest pointwise amount by which trajectory `a` exceeds trajectory `b`
/// over all stored time levels; requires both solves to have stored
/// trajectories on the same grid and step count.
pub fn comparison_violation(a: &SolveResult, b: &SolveResult) -> Result<f64> {
    let (ta, tb) = match (&a.trajectory, &b.trajectory) {
        (Some(ta), Some(tb)) => (ta, tb),
        _ => {
            return Err(Error::config(
                "comparison check needs store_trajectory = true on both solves",
            ))
        }
    };
    if ta.len() != tb.len() || a.grid.n_nodes != b.grid.n_nodes {
        return Err(Error::config("comparison check needs matching grids and step counts"));
    }
    let mut worst = f64::NEG_INFINITY;
    for (ua, ub) in ta.iter().zip(tb) {
        for (va, vb) in ua.iter().zip(ub) {
            worst = worst.max(va - vb);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::LevyKernel;
    use crate::problem::models;
    use approx::assert_relative_eq;

    fn grid_1d(dx: f64) -> Arc<Grid> {
        Arc::new(Grid::new(&[-2.0], &[2.0], dx).unwrap())
    }

    #[test]
    fn explicit_heat_step_moves_toward_mean() {
        let p = models::heat(0.1);
        let grid = grid_1d(0.25);
        let jd = JumpDiscretization::None;
        let cfg = SchemeConfig { store_trajectory: true, ..SchemeConfig::default() };
        let far = FarfieldRule::initial_datum(p.initial.clone());
        let r = solve(&p, &jd, grid, &cfg, &far, None).unwrap();
        // Heat flow shrinks the sup norm of cos.
        assert!(r.final_values.iter().fold(0.0f64, |m, v| m.max(v.abs())) < 1.0);
        assert_eq!(r.trajectory.as_ref().unwrap().len(), r.steps + 1);
    }

    #[test]
    fn autodt_divides_horizon_exactly() {
        let p = models::heat(0.1);
        let grid = grid_1d(0.25);
        let cfg = SchemeConfig::default();
        let far = FarfieldRule::ConstantExtension;
        let r = solve(&p, &JumpDiscretization::None, grid, &cfg, &far, None).unwrap();
        assert_relative_eq!(r.dt * r.steps as f64, 0.1, epsilon = 1e-12);
        // lbar = 2a/dx^2 = 16, so dt <= 1/16 and steps >= 2.
        assert!(r.dt <= 1.0 / 16.0 + 1e-12);
    }

    #[test]
    fn enforce_rejects_large_dt() {
        let p = models::heat(0.1);
        let grid = grid_1d(0.25);
        let cfg = SchemeConfig {
            cfl_mode: CflMode::Enforce,
            dt: Some(0.09),
            ..SchemeConfig::default()
        };
        let far = FarfieldRule::ConstantExtension;
        let err = solve(&p, &JumpDiscretization::None, grid, &cfg, &far, None).unwrap_err();
        assert!(matches!(err, Error::Step(_)));
    }

    #[test]
    fn implicit_pure_ode_converges_in_one_update() {
        // No operators at all: the fixed point is affine with no coupling,
        // eps_fp defaults to exactly 1, and a single update lands on it.
        let p = models::scalar_constant(0.0, 0.0, 0.5, 1.0, 0.2);
        // sigma = 0 gives a = 0; keep theta = 1 so the step is implicit.
        let grid = grid_1d(0.25);
        let cfg = SchemeConfig {
            theta: 1.0,
            vartheta: 1.0,
            dt: Some(0.1),
            cfl_mode: CflMode::Off,
            ..SchemeConfig::default()
        };
        let far = FarfieldRule::ConstantExtension;
        let r = solve(&p, &JumpDiscretization::None, grid, &cfg, &far, None).unwrap();
        for d in &r.diagnostics {
            assert_eq!(d.fp_iterations, 1);
        }
        // U^n = U^{n-1} - dt (c U^{n-1} - f).
        let u0 = (-2.0f64).cos();
        let expect = (u0 - 0.1 * (0.5 * u0 - 1.0)) - 0.1 * (0.5 * (u0 - 0.1 * (0.5 * u0 - 1.0)) - 1.0);
        assert_relative_eq!(r.final_values[0], expect, epsilon = 1e-10);
    }

    #[test]
    fn implicit_matches_explicit_for_small_dt() {
        let p = models::jump_diffusion(0.05);
        let grid = grid_1d(0.25);
        let kern = crate::kernels::builtin("finite_exp").unwrap();
        let jd = JumpDiscretization::prepare(&kern, &grid, None, 16, 1e-10, None).unwrap();
        let far = FarfieldRule::initial_datum(p.initial.clone());
        let explicit = SchemeConfig { dt: Some(0.002), cfl_mode: CflMode::Enforce, ..SchemeConfig::default() };
        let implicit = SchemeConfig {
            theta: 1.0,
            vartheta: 1.0,
            dt: Some(0.002),
            cfl_mode: CflMode::Off,
            ..SchemeConfig::default()
        };
        let re = solve(&p, &jd, grid.clone(), &explicit, &far, None).unwrap();
        let ri = solve(&p, &jd, grid, &implicit, &far, None).unwrap();
        let diff: f64 = re
            .final_values
            .iter()
            .zip(&ri.final_values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        // Schemes differ at O(dt) uniformly on the horizon.
        assert!(diff < 10.0 * 0.002, "explicit/implicit gap {diff}");
    }

    #[test]
    fn zero_kernel_prepares_to_none() {
        let grid = grid_1d(0.5);
        let jd = JumpDiscretization::prepare(&LevyKernel::zero(1), &grid, None, 16, 1e-10, None)
            .unwrap();
        assert!(matches!(jd, JumpDiscretization::None));
    }
}
