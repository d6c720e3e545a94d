//! Problem data: controlled coefficients, structural checks, and built-in
//! model instances.
//!
//! A [`ControlProblem`] holds the coefficient families of the Cauchy problem
//!
//! ```text
//! u_t + sup_alpha { -tr[a^a D^2 u] - b^a . Du + c^a u - f^a - J^a[u] } = 0,
//! u(0, .) = g,     a^a = (1/2) sigma^a (sigma^a)^T,
//! ```
//!
//! over a finite control set. Controls are indexed; ties in the sup are
//! broken toward the lowest index everywhere in the crate.
//!
//! [`validate_assumptions`] samples the coefficients and reports whether the
//! regularity and sign conditions the convergence theory needs hold on the
//! sample: bounded Lipschitz coefficients, `c >= 0`, jumps vanishing at
//! `z = 0`, jump sizes dominated by `(|z| /\ 1) e^{Lambda |z|}`, and the
//! kernel density sitting below its declared envelope.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::kernels::{KernelKind, LevyKernel};

pub type ScalarFn2 = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;
pub type VecFn2 = Arc<dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync>;
/// Row-major `dim_x x sigma_cols` matrix of (t, x).
pub type MatFn2 = Arc<dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync>;
/// Jump vector eta(t, x, z) in R^{dim_x}.
pub type JumpFn = Arc<dyn Fn(f64, &[f64], &[f64]) -> Vec<f64> + Send + Sync>;
pub type SpaceFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Coefficient families of a finite-control Bellman problem.
#[derive(Clone)]
pub struct ControlProblem {
    /// Human-readable control labels; indices into the coefficient vectors.
    pub controls: Vec<String>,
    pub dim_x: usize,
    /// Dimension of the jump variable z (the kernel's dimension).
    pub dim_z: usize,
    /// Per-control diffusion factor sigma, row-major `dim_x x sigma_cols`.
    pub sigma: Vec<MatFn2>,
    pub sigma_cols: usize,
    pub drift: Vec<VecFn2>,
    /// Per-control zero-order coefficient, required nonnegative.
    pub discount: Vec<ScalarFn2>,
    pub source: Vec<ScalarFn2>,
    pub jump: Vec<JumpFn>,
    pub initial: SpaceFn,
    pub horizon: f64,
    /// When false, operators are assembled once and reused every step.
    pub coefficients_time_dependent: bool,
    /// When false, `eta(t, x, z)` does not depend on x and per-control
    /// jump drift corrections are computed once instead of per node.
    pub jump_state_dependent: bool,
}

impl ControlProblem {
    pub fn n_controls(&self) -> usize {
        self.controls.len()
    }

    /// Diffusion matrix `a = (1/2) sigma sigma^T`, row-major `dim_x x dim_x`.
    pub fn diffusion(&self, alpha: usize, t: f64, x: &[f64]) -> Vec<f64> {
        let s = (self.sigma[alpha])(t, x);
        let n = self.dim_x;
        let p = self.sigma_cols;
        debug_assert_eq!(s.len(), n * p);
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for k in 0..p {
                    acc += s[i * p + k] * s[j * p + k];
                }
                a[i * n + j] = 0.5 * acc;
            }
        }
        a
    }

    /// Structural sanity of the container itself (lengths, horizon).
    pub fn check_shape(&self) -> Result<()> {
        let m = self.controls.len();
        if m == 0 {
            return Err(Error::config("control set is empty"));
        }
        for (name, len) in [
            ("sigma", self.sigma.len()),
            ("drift", self.drift.len()),
            ("discount", self.discount.len()),
            ("source", self.source.len()),
            ("jump", self.jump.len()),
        ] {
            if len != m {
                return Err(Error::config(format!(
                    "coefficient family `{name}` has {len} entries for {m} controls"
                )));
            }
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::config(format!("horizon {} must be positive", self.horizon)));
        }
        if self.dim_x == 0 || self.dim_z == 0 || self.sigma_cols == 0 {
            return Err(Error::config("dimensions must be positive"));
        }
        Ok(())
    }
}

/// Bounds used by [`validate_assumptions`].
#[derive(Debug, Clone)]
pub struct AssumptionCaps {
    /// Cap on `sup + Lip` of each coefficient.
    pub coefficient_norm: f64,
    /// Cap on |eta(t,x,z)| / ((|z| /\ 1) e^{Lambda |z|}).
    pub jump_growth: f64,
}

impl Default for AssumptionCaps {
    fn default() -> Self {
        AssumptionCaps { coefficient_norm: 1e6, jump_growth: 1e6 }
    }
}

/// Where the coefficients are sampled.
#[derive(Debug, Clone)]
pub struct SamplingPlan {
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    /// Nonzero jump arguments for the eta checks.
    pub z_points: Vec<Vec<f64>>,
    pub caps: AssumptionCaps,
}

impl SamplingPlan {
    /// A deterministic low-discrepancy plan over `[-1.5, 1.5]^N`.
    pub fn default_for(dim_x: usize, dim_z: usize, horizon: f64) -> SamplingPlan {
        let times = vec![0.0, 0.5 * horizon, horizon];
        let mut points = Vec::new();
        // Kronecker sequence with per-axis golden-ratio powers.
        let alphas: Vec<f64> = (0..dim_x)
            .map(|i| (0.618_033_988_749_894_9f64).powi(i as i32 + 1).fract())
            .collect();
        for k in 1..=16usize {
            let p: Vec<f64> = (0..dim_x)
                .map(|i| -1.5 + 3.0 * ((k as f64 * (0.5 + alphas[i])).fract()))
                .collect();
            points.push(p);
        }
        let mut z_points = Vec::new();
        for &r in &[1e-3, 0.1, 0.5, 1.0, 2.0] {
            for axis in 0..dim_z {
                for sgn in [1.0, -1.0] {
                    let mut z = vec![0.0; dim_z];
                    z[axis] = sgn * r;
                    z_points.push(z);
                }
            }
            if dim_z > 1 {
                let v = r / (dim_z as f64).sqrt();
                z_points.push(vec![v; dim_z]);
            }
        }
        SamplingPlan { times, points, z_points, caps: AssumptionCaps::default() }
    }
}

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub estimate: f64,
    pub cap: f64,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
    pub all_pass: bool,
}

impl ValidationReport {
    fn push(&mut self, name: String, estimate: f64, cap: f64) {
        let pass = estimate <= cap;
        self.all_pass &= pass;
        self.checks.push(CheckResult { name, estimate, cap, pass });
    }
}

fn finite_or_err(v: f64, name: &str, t: f64, x: &[f64]) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Data(format!(
            "coefficient `{name}` returned {v} at t = {t}, x = {x:?}"
        )))
    }
}

/// Samples every coefficient on the plan and reports sup + Lipschitz
/// estimates against the caps, the sign of `c`, `eta(t, x, 0) = 0`, the
/// jump-size normalization, the kernel envelope, and kind/gamma agreement.
/// Non-finite samples abort with a `Data` error naming the offender.
pub fn validate_assumptions(
    p: &ControlProblem,
    kern: &LevyKernel,
    plan: &SamplingPlan,
) -> Result<ValidationReport> {
    p.check_shape()?;
    let mut report = ValidationReport { checks: Vec::new(), all_pass: true };
    let caps = &plan.caps;

    // sup + Lip per coefficient family, worst case over controls.
    let families: Vec<(String, Box<dyn Fn(f64, &[f64]) -> Vec<f64> + '_>)> = {
        let mut fams: Vec<(String, Box<dyn Fn(f64, &[f64]) -> Vec<f64> + '_>)> = Vec::new();
        for alpha in 0..p.n_controls() {
            let label = &p.controls[alpha];
            let s = p.sigma[alpha].clone();
            fams.push((format!("sigma[{label}]"), Box::new(move |t, x| s(t, x))));
            let b = p.drift[alpha].clone();
            fams.push((format!("drift[{label}]"), Box::new(move |t, x| b(t, x))));
            let c = p.discount[alpha].clone();
            fams.push((format!("discount[{label}]"), Box::new(move |t, x| vec![c(t, x)])));
            let f = p.source[alpha].clone();
            fams.push((format!("source[{label}]"), Box::new(move |t, x| vec![f(t, x)])));
        }
        fams
    };
    for (name, eval) in &families {
        let mut sup = 0.0f64;
        let mut lip = 0.0f64;
        for &t in &plan.times {
            let mut prev: Option<(&Vec<f64>, Vec<f64>)> = None;
            for x in &plan.points {
                let vals = eval(t, x);
                for &v in &vals {
                    sup = sup.max(finite_or_err(v, name, t, x)?.abs());
                }
                if let Some((px, pv)) = &prev {
                    let dist: f64 = px
                        .iter()
                        .zip(x.iter())
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt();
                    if dist > 1e-12 {
                        for (a, b) in pv.iter().zip(vals.iter()) {
                            lip = lip.max((a - b).abs() / dist);
                        }
                    }
                }
                prev = Some((x, vals));
            }
        }
        report.push(format!("{name}: sup + Lip"), sup + lip, caps.coefficient_norm);
    }

    // c >= 0 on the sample.
    let mut c_min = f64::INFINITY;
    for alpha in 0..p.n_controls() {
        for &t in &plan.times {
            for x in &plan.points {
                let v = (p.discount[alpha])(t, x);
                c_min = c_min.min(finite_or_err(v, "discount", t, x)?);
            }
        }
    }
    report.push("discount nonnegative (−min c)".into(), (-c_min).max(0.0), 0.0);

    // eta(t, x, 0) = 0 and jump growth bound.
    let z0 = vec![0.0; p.dim_z];
    let lambda = kern.decay_lambda;
    let mut eta_at_zero = 0.0f64;
    let mut growth = 0.0f64;
    for alpha in 0..p.n_controls() {
        for &t in &plan.times {
            for x in &plan.points {
                let e0 = (p.jump[alpha])(t, x, &z0);
                for &v in &e0 {
                    eta_at_zero = eta_at_zero.max(finite_or_err(v, "jump", t, x)?.abs());
                }
                for z in &plan.z_points {
                    let e = (p.jump[alpha])(t, x, z);
                    let zn: f64 = z.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let norm: f64 =
                        e.iter().map(|v| v * v).sum::<f64>().sqrt();
                    finite_or_err(norm, "jump", t, x)?;
                    let scale = zn.min(1.0) * (lambda * zn).exp();
                    growth = growth.max(norm / scale);
                }
            }
        }
    }
    report.push("jump vanishes at z = 0".into(), eta_at_zero, 1e-12);
    report.push(
        "jump growth / ((|z| /\\ 1) e^{Lambda |z|})".into(),
        growth,
        caps.jump_growth,
    );

    // Kernel density under its declared envelope on the z sample.
    let mut env_excess = 0.0f64;
    for z in &plan.z_points {
        let r: f64 = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        let k = (kern.density)(z);
        if !k.is_finite() {
            return Err(Error::Data(format!("kernel density returned {k} at z = {z:?}")));
        }
        let env = kern.envelope_value(r);
        if k > env {
            env_excess = env_excess.max((k - env) / env.max(1e-300));
        }
    }
    report.push("density within envelope (relative excess)".into(), env_excess, 1e-9);

    // Declared singularity class vs gamma.
    let kind_ok = match kern.kind {
        KernelKind::Finite => true,
        KernelKind::SingularGammaLt1 => (0.0..1.0).contains(&kern.gamma),
        KernelKind::SingularGammaGe1 => (1.0..2.0).contains(&kern.gamma),
    };
    report.push(
        format!("kernel kind {:?} consistent with gamma = {}", kern.kind, kern.gamma),
        if kind_ok { 0.0 } else { 1.0 },
        0.0,
    );

    if p.dim_z != kern.dim {
        return Err(Error::config(format!(
            "problem jump dimension {} does not match kernel dimension {}",
            p.dim_z, kern.dim
        )));
    }

    Ok(report)
}

/// Ready-made one-dimensional model problems used by the examples, the
/// command line, and the built-in verification runs.
pub mod models {
    use super::*;

    fn constant2(v: f64) -> ScalarFn2 {
        Arc::new(move |_t, _x| v)
    }
    fn constant_vec(v: Vec<f64>) -> VecFn2 {
        Arc::new(move |_t, _x| v.clone())
    }
    fn identity_jump() -> JumpFn {
        Arc::new(|_t, _x, z| z.to_vec())
    }

    /// Single-control problem with a constant scalar coefficient set and
    /// translation-invariant jumps `eta = z`.
    pub fn scalar_constant(
        sigma: f64,
        drift: f64,
        discount: f64,
        source: f64,
        horizon: f64,
    ) -> ControlProblem {
        ControlProblem {
            controls: vec!["only".into()],
            dim_x: 1,
            dim_z: 1,
            sigma: vec![constant_vec(vec![sigma])],
            sigma_cols: 1,
            drift: vec![constant_vec(vec![drift])],
            discount: vec![constant2(discount)],
            source: vec![constant2(source)],
            jump: vec![identity_jump()],
            initial: Arc::new(|x: &[f64]| x[0].cos()),
            horizon,
            coefficients_time_dependent: false,
            jump_state_dependent: false,
        }
    }

    /// Pure heat flow: `u_t - (1/2) u_xx = 0`, cosine initial datum.
    pub fn heat(horizon: f64) -> ControlProblem {
        scalar_constant(1.0, 0.0, 0.0, 0.0, horizon)
    }

    /// One control with diffusion, drift, discounting, and jumps `eta = z`.
    pub fn jump_diffusion(horizon: f64) -> ControlProblem {
        scalar_constant(0.6, 0.3, 0.1, 0.0, horizon)
    }

    /// Two genuinely competing controls; the sup switches spatially.
    pub fn two_controls(horizon: f64) -> ControlProblem {
        ControlProblem {
            controls: vec!["hold".into(), "push".into()],
            dim_x: 1,
            dim_z: 1,
            sigma: vec![constant_vec(vec![0.8]), constant_vec(vec![0.5])],
            sigma_cols: 1,
            drift: vec![constant_vec(vec![0.2]), constant_vec(vec![-0.4])],
            discount: vec![constant2(0.05), constant2(0.15)],
            source: vec![
                Arc::new(|_t, x: &[f64]| 0.5 * x[0].sin()),
                Arc::new(|_t, x: &[f64]| -0.2 * x[0].cos()),
            ],
            jump: vec![identity_jump(), identity_jump()],
            initial: Arc::new(|x: &[f64]| x[0].cos()),
            horizon,
            coefficients_time_dependent: false,
            jump_state_dependent: false,
        }
    }

    /// Two-control problem whose controls favor opposite half-lines; a
    /// natural base for switching-system experiments.
    pub fn switch_demo(horizon: f64) -> ControlProblem {
        ControlProblem {
            controls: vec!["left".into(), "right".into()],
            dim_x: 1,
            dim_z: 1,
            sigma: vec![constant_vec(vec![0.7]), constant_vec(vec![0.7])],
            sigma_cols: 1,
            drift: vec![constant_vec(vec![0.6]), constant_vec(vec![-0.6])],
            discount: vec![constant2(0.1), constant2(0.1)],
            source: vec![
                Arc::new(|_t, x: &[f64]| (x[0] - 0.5).tanh()),
                Arc::new(|_t, x: &[f64]| (-x[0] - 0.5).tanh()),
            ],
            jump: vec![identity_jump(), identity_jump()],
            initial: Arc::new(|x: &[f64]| x[0].cos()),
            horizon,
            coefficients_time_dependent: false,
            jump_state_dependent: false,
        }
    }

    /// Lookup by the identifiers the command line accepts.
    pub fn by_id(id: &str, horizon: f64) -> Result<ControlProblem> {
        match id {
            "heat" => Ok(heat(horizon)),
            "jump_diffusion" => Ok(jump_diffusion(horizon)),
            "two_controls" => Ok(two_controls(horizon)),
            "switch_demo" => Ok(switch_demo(horizon)),
            other => Err(Error::config(format!(
                "unknown model `{other}`; available: heat, jump_diffusion, two_controls, switch_demo"
            ))),
        }
    }
}
