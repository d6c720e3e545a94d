//! Lévy kernels and their difference-quadrature weight tables.
//!
//! A [`LevyKernel`] is a jump density `k` on `R^M` with a declared envelope
//!
//! ```text
//! 0 <= k(z) <= K e^{-(Lambda + eps)|z|} / |z|^{M + gamma},   gamma in [0, 2),
//! ```
//!
//! which is all the builders need: the envelope certifies every truncation
//! and singular-head bound, so tables come with an explicit `tail_bound`.
//!
//! Two table families are built, both with nonnegative entries by
//! construction rather than by clipping:
//!
//! * **Single tail** (integrable jumps, `gamma < 1`): cell averages of
//!   `khat(z) = \int_z^\infty k` on the grid lattice. Differences of
//!   consecutive entries are the stencil weights; they are nonnegative
//!   because `khat` decreases.
//! * **Double tail** (`gamma in [1, 2)`): hat-function averages of
//!   `ktilde(z) = \int_z^\infty (w - z) k(w) dw` on a coarser lattice of
//!   step `dz = q dx`. Second differences of consecutive weights are the
//!   stencil weights; they are nonnegative because `ktilde` is convex and
//!   hat averaging preserves discrete convexity.
//!
//! All moments are reduced by Fubini to per-cell polynomial moments of `k`
//! plus suffix sums, so each table costs one sweep of proper integrals and
//! a single singular integral on the first cell.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quad::{adaptive, integrate_singular_lower};

/// Which discretization family a kernel is meant for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    /// Finite Lévy measure; direct quadrature of the jump integral works.
    Finite,
    /// Singular with integrable jumps: gamma in [0, 1), single-tail tables.
    SingularGammaLt1,
    /// Singular with gamma in [1, 2): double-tail tables on a coarse step.
    SingularGammaGe1,
}

/// Jump density with its envelope parameters.
#[derive(Clone)]
pub struct LevyKernel {
    pub density: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    /// Singularity order: density bounded by C |z|^{-(dim + gamma)} near 0.
    pub gamma: f64,
    /// Exponential rate available to jump-size growth (Lambda).
    pub decay_lambda: f64,
    /// Extra exponential margin of the density (eps > 0).
    pub decay_eps: f64,
    /// Envelope constant K.
    pub bound_k: f64,
    pub kind: KernelKind,
    pub dim: usize,
}

impl LevyKernel {
    /// The zero measure; useful for pure PDE problems.
    pub fn zero(dim: usize) -> LevyKernel {
        LevyKernel {
            density: Arc::new(|_z| 0.0),
            gamma: 0.0,
            decay_lambda: 0.0,
            decay_eps: 1.0,
            bound_k: 0.0,
            kind: KernelKind::Finite,
            dim,
        }
    }

    /// Envelope value at radius `r > 0`.
    pub fn envelope_value(&self, r: f64) -> f64 {
        if self.bound_k == 0.0 {
            return 0.0;
        }
        self.bound_k * (-(self.decay_lambda + self.decay_eps) * r).exp()
            / r.powf(self.dim as f64 + self.gamma)
    }

    /// Envelope of the radial density `r -> k(r y) r^{M-1}` along any unit
    /// direction; the power collapses to `1 + gamma` in every dimension.
    pub fn radial_envelope(&self) -> Envelope {
        Envelope {
            k: self.bound_k,
            lambda: self.decay_lambda + self.decay_eps,
            p: 1.0 + self.gamma,
        }
    }

    /// Radial density along a unit direction, including the `r^{M-1}`
    /// surface factor.
    pub fn radial_density(&self, dir: &[f64]) -> impl Fn(f64) -> f64 + '_ {
        let dir = dir.to_vec();
        let m = self.dim as i32;
        move |r: f64| {
            let z: Vec<f64> = dir.iter().map(|d| d * r).collect();
            (self.density)(&z) * r.powi(m - 1)
        }
    }
}

impl std::fmt::Debug for LevyKernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LevyKernel")
            .field("gamma", &self.gamma)
            .field("kind", &self.kind)
            .field("dim", &self.dim)
            .field("bound_k", &self.bound_k)
            .finish()
    }
}

/// Built-in kernel identifiers accepted by [`builtin`].
pub fn builtin_ids() -> &'static [&'static str] {
    &["finite_exp", "tempered_stable", "frac_laplace_trunc"]
}

/// Built-in one-dimensional kernels used by the verification runs.
pub fn builtin(id: &str) -> Result<LevyKernel> {
    match id {
        // k(z) = e^{-2|z|}: finite measure, mass 1.
        "finite_exp" => Ok(LevyKernel {
            density: Arc::new(|z: &[f64]| (-2.0 * z[0].abs()).exp()),
            gamma: 0.0,
            decay_lambda: 1.0,
            decay_eps: 0.5,
            // max of r e^{-0.5 r} is 2/e; round up.
            bound_k: 0.75,
            kind: KernelKind::Finite,
            dim: 1,
        }),
        // k(z) = e^{-|z|} / |z|^{2.5}: gamma = 1.5, needs double tails.
        "tempered_stable" => Ok(LevyKernel {
            density: Arc::new(|z: &[f64]| {
                let r = z[0].abs();
                if r == 0.0 {
                    f64::INFINITY
                } else {
                    (-r).exp() / r.powf(2.5)
                }
            }),
            gamma: 1.5,
            decay_lambda: 0.5,
            decay_eps: 0.5,
            bound_k: 1.0,
            kind: KernelKind::SingularGammaGe1,
            dim: 1,
        }),
        // k(z) = 1_{|z| <= 2} / |z|^{1.5}: gamma = 0.5, compact support.
        "frac_laplace_trunc" => Ok(LevyKernel {
            density: Arc::new(|z: &[f64]| {
                let r = z[0].abs();
                if r == 0.0 {
                    f64::INFINITY
                } else if r <= 2.0 {
                    r.powf(-1.5)
                } else {
                    0.0
                }
            }),
            gamma: 0.5,
            decay_lambda: 0.0,
            decay_eps: 1.0,
            // 1/r^{1.5} <= K e^{-r} / r^{1.5} on r <= 2 with K = e^2.
            bound_k: (2.0f64).exp(),
            kind: KernelKind::SingularGammaLt1,
            dim: 1,
        }),
        other => Err(Error::config(format!(
            "unknown kernel `{other}`; available: {}",
            builtin_ids().join(", ")
        ))),
    }
}

/// Radial envelope `k e^{-lambda r} r^{-p}` with certified tail and head
/// bounds. `p = 1 + gamma` after radial reduction, so `p < 3` always.
#[derive(Debug, Clone, Copy)]
pub struct Envelope {
    pub k: f64,
    pub lambda: f64,
    pub p: f64,
}

impl Envelope {
    pub fn value(&self, r: f64) -> f64 {
        if self.k == 0.0 {
            return 0.0;
        }
        self.k * (-self.lambda * r).exp() / r.powf(self.p)
    }

    /// Bounds `\int_r^\infty env(w) dw` (and hence `khat(r)`).
    pub fn tail0(&self, r: f64) -> f64 {
        if self.k == 0.0 {
            return 0.0;
        }
        self.k * (-self.lambda * r).exp() / (self.lambda * r.powf(self.p))
    }

    /// Bounds `\int_r^\infty khat` (and hence `ktilde(r)`).
    pub fn tail1(&self, r: f64) -> f64 {
        self.tail0(r) / self.lambda
    }

    /// Bounds `\int_r^\infty ktilde`.
    pub fn tail2(&self, r: f64) -> f64 {
        self.tail0(r) / (self.lambda * self.lambda)
    }

    /// Bounds `\int_r^\infty w env(w) dw` for `p >= 1`.
    pub fn tail_w(&self, r: f64) -> f64 {
        if self.k == 0.0 {
            return 0.0;
        }
        debug_assert!(self.p >= 1.0);
        self.k * r.powf(1.0 - self.p) * (-self.lambda * r).exp() / self.lambda
    }

    /// Bounds `\int_0^delta w^j env(w) dw`; requires `j + 1 > p`.
    pub fn head(&self, j: u32, delta: f64) -> f64 {
        if self.k == 0.0 {
            return 0.0;
        }
        let e = j as f64 + 1.0 - self.p;
        debug_assert!(e > 0.0, "head moment j = {j} diverges for p = {}", self.p);
        self.k * delta.powf(e) / e
    }

    /// Smallest dyadic radius (doubling from `start`) where `bound` drops
    /// to `target`.
    pub fn radius_where(
        &self,
        bound: impl Fn(&Envelope, f64) -> f64,
        target: f64,
        start: f64,
    ) -> Result<f64> {
        if self.k == 0.0 {
            return Ok(start);
        }
        if self.lambda <= 0.0 {
            return Err(Error::config(
                "kernel envelope has no exponential decay (Lambda + eps <= 0)",
            ));
        }
        let mut r = start.max(1e-3);
        for _ in 0..200 {
            if bound(self, r) <= target {
                return Ok(r);
            }
            r *= 2.0;
        }
        Err(Error::config(format!(
            "no truncation radius reaches tolerance {target:.3e}; envelope decays too slowly"
        )))
    }
}

/// Which quantity a [`WeightTable`] discretizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableKind {
    /// Cell averages of `khat`; stencil weights are first differences.
    SingleTail,
    /// Hat averages of `ktilde`; stencil weights are second differences.
    DoubleTail,
}

/// Per-side weight tables on a uniform lattice of spacing `step`.
///
/// For `SingleTail`, `plus[n]` is the average of `khat` over the n-th cell
/// of the positive half-line (times nothing; the `1/step` normalization is
/// applied at stencil assembly). For `DoubleTail`, `plus[s]` is the hat
/// average of `ktilde` at node `s step`, with `plus[0]` the half-hat at 0;
/// the combined center weight is `plus[0] + minus[0]`.
#[derive(Debug, Clone)]
pub struct WeightTable {
    pub step: f64,
    pub plus: Vec<f64>,
    pub minus: Vec<f64>,
    /// Certified bound on everything neglected or perturbed: envelope tail
    /// beyond the table, quadrature error, and convex tail extension mass.
    pub tail_bound: f64,
    pub kind: TableKind,
}

impl WeightTable {
    /// Total diagonal stencil mass.
    ///
    /// Single tail: `(plus[0] + minus[0]) / step`, exact by telescoping.
    /// Double tail: `(2 (plus[0] + minus[0]) - plus[1] - minus[1]) / step^2`.
    pub fn center_mass(&self) -> f64 {
        match self.kind {
            TableKind::SingleTail => {
                (self.plus.first().copied().unwrap_or(0.0)
                    + self.minus.first().copied().unwrap_or(0.0))
                    / self.step
            }
            TableKind::DoubleTail => {
                let w0 = self.plus.first().copied().unwrap_or(0.0)
                    + self.minus.first().copied().unwrap_or(0.0);
                let w1p = self.plus.get(1).copied().unwrap_or(0.0);
                let w1m = self.minus.get(1).copied().unwrap_or(0.0);
                (2.0 * w0 - w1p - w1m) / (self.step * self.step)
            }
        }
    }

    /// Sum of all entries: approximates the integral of `khat` (single) or
    /// `ktilde` (double) over the line, since single-tail entries are cell
    /// integrals and double-tail entries are hat integrals whose hats sum
    /// to one.
    pub fn total_mass(&self) -> f64 {
        self.plus.iter().sum::<f64>() + self.minus.iter().sum::<f64>()
    }

    fn scale(&self) -> f64 {
        self.plus
            .iter()
            .chain(self.minus.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Monotonicity of the table entries themselves. Single tail: each side
    /// non-increasing. Double tail: second differences nonnegative, with the
    /// combined center weight at `s = 1` (the quantity that actually enters
    /// the stencil). Tolerance is pure roundoff slack.
    pub fn check(&self) -> Result<()> {
        let tol = 1e-14 * self.scale().max(1e-300);
        match self.kind {
            TableKind::SingleTail => {
                for (name, side) in [("plus", &self.plus), ("minus", &self.minus)] {
                    for n in 1..side.len() {
                        if side[n] - side[n - 1] > tol {
                            return Err(Error::kernel(format!(
                                "single-tail table not non-increasing on {name} side at n = {n}: \
                                 {} -> {}",
                                side[n - 1],
                                side[n]
                            )));
                        }
                    }
                    if let Some(&last) = side.last() {
                        if last < -tol {
                            return Err(Error::kernel(format!(
                                "negative single-tail entry {last} on {name} side"
                            )));
                        }
                    }
                }
                Ok(())
            }
            TableKind::DoubleTail => {
                let w0 = self.plus.first().copied().unwrap_or(0.0)
                    + self.minus.first().copied().unwrap_or(0.0);
                for (name, side) in [("plus", &self.plus), ("minus", &self.minus)] {
                    for s in 1..side.len() {
                        let below = if s == 1 { w0 } else { side[s - 1] };
                        let above = side.get(s + 1).copied().unwrap_or(0.0);
                        let d2 = below - 2.0 * side[s] + above;
                        // At the very last entry the table was extended
                        // convexly to zero, so `above = 0` is the true
                        // continuation, not a truncation artifact.
                        if d2 < -tol {
                            return Err(Error::kernel(format!(
                                "double-tail second difference negative on {name} side at s = {s}: {d2}"
                            )));
                        }
                    }
                    if side.iter().any(|&w| w < -tol) {
                        return Err(Error::kernel(format!(
                            "negative double-tail weight on {name} side"
                        )));
                    }
                }
                Ok(())
            }
        }
    }
}

/// Snap a requested coarse step to an integer multiple of the grid step:
/// `q = max(1, round(dz / dx))`, returning `(q, q dx)`.
pub fn snap_dz(dx: f64, dz: f64) -> (usize, f64) {
    let q = (dz / dx).round().max(1.0) as usize;
    (q, q as f64 * dx)
}

/// Per-cell polynomial moments of a radial density about cell left edges:
/// `K_m = \int k`, `M_m = \int (w - z_m) k`, and optionally
/// `S_m = \int (w - z_m)^2 k`, `T_m = \int (w - z_m)^3 k`.
struct CellMoments {
    k: Vec<f64>,
    m: Vec<f64>,
    s: Vec<f64>,
    t: Vec<f64>,
    /// Accumulated certified quadrature error.
    err: f64,
}

/// Moments of cells `0..=n_last` of width `h`. `K_0` is never computed
/// (it can diverge); cell-0 moments use the singular-endpoint integrator
/// with envelope head bounds as certified remainders. `with_cubic` adds
/// the S and T families needed by double tails.
fn cell_moments(
    kk: &dyn Fn(f64) -> f64,
    env: &Envelope,
    h: f64,
    n_last: usize,
    with_cubic: bool,
    tol_each: f64,
) -> Result<CellMoments> {
    let n = n_last + 1;
    let mut mom = CellMoments {
        k: vec![0.0; n],
        m: vec![0.0; n],
        s: vec![0.0; if with_cubic { n } else { 0 }],
        t: vec![0.0; if with_cubic { n } else { 0 }],
        err: 0.0,
    };
    // Cell 0: moments that exist. M_0 needs p < 2 (single tail only calls
    // with gamma < 1); S_0 and T_0 exist for all gamma < 2.
    if env.p < 2.0 || !with_cubic {
        let rem = |d: f64| env.head(1, d);
        let r = integrate_singular_lower(&mut |w| w * kk(w), 0.0, h, tol_each, Some(&rem))?;
        mom.m[0] = r.value;
        mom.err += r.error;
    } else {
        // gamma >= 1: M_0 is only ever used through S/T reductions; leave 0.
        mom.m[0] = 0.0;
    }
    if with_cubic {
        let rem2 = |d: f64| env.head(2, d);
        let r = integrate_singular_lower(&mut |w| w * w * kk(w), 0.0, h, tol_each, Some(&rem2))?;
        mom.s[0] = r.value;
        mom.err += r.error;
        let rem3 = |d: f64| env.head(3, d);
        let r = integrate_singular_lower(
            &mut |w| w * w * w * kk(w),
            0.0,
            h,
            tol_each,
            Some(&rem3),
        )?;
        mom.t[0] = r.value;
        mom.err += r.error;
    }
    for cell in 1..=n_last {
        let lo = cell as f64 * h;
        let hi = lo + h;
        let r = adaptive(&mut |w| kk(w), lo, hi, tol_each)?;
        mom.k[cell] = r.value;
        mom.err += r.error;
        let r = adaptive(&mut |w| (w - lo) * kk(w), lo, hi, tol_each)?;
        mom.m[cell] = r.value;
        mom.err += r.error;
        if with_cubic {
            let r = adaptive(&mut |w| (w - lo) * (w - lo) * kk(w), lo, hi, tol_each)?;
            mom.s[cell] = r.value;
            mom.err += r.error;
            let r = adaptive(&mut |w| (w - lo) * (w - lo) * (w - lo) * kk(w), lo, hi, tol_each)?;
            mom.t[cell] = r.value;
            mom.err += r.error;
        }
    }
    Ok(mom)
}

/// `\int_{from}^{\infty} w^j kk(w) dw` by quadrature up to where the
/// envelope tail is negligible; the envelope remainder is folded into the
/// error.
fn tail_integral(
    kk: &dyn Fn(f64) -> f64,
    env: &Envelope,
    from: f64,
    j: u32,
    tol: f64,
) -> Result<(f64, f64)> {
    let bound = |e: &Envelope, r: f64| match j {
        0 => e.tail0(r),
        1 => e.tail_w(r),
        _ => unreachable!("only moments 0 and 1 are integrated over tails"),
    };
    if env.k == 0.0 {
        return Ok((0.0, 0.0));
    }
    let r_end = env.radius_where(bound, 0.25 * tol, from.max(1e-3))?;
    if r_end <= from {
        return Ok((0.0, bound(env, from)));
    }
    let r = adaptive(&mut |w| w.powi(j as i32) * kk(w), from, r_end, tol)?;
    Ok((r.value, r.error + bound(env, r_end)))
}

/// Single-tail table for one side: entry `n` is
/// `\int_{cell n} khat = M_n + h \sum_{l > n} K_l` by Fubini, with the
/// suffix sums accumulated backward from an explicit tail integral.
fn single_tail_side(
    kk: &dyn Fn(f64) -> f64,
    env: &Envelope,
    h: f64,
    trunc_tol: f64,
) -> Result<(Vec<f64>, f64)> {
    let radius = env.radius_where(|e, r| e.tail1(r), trunc_tol, h.max(0.5))?;
    let n_last = (radius / h).ceil() as usize;
    let z_c = (n_last as f64 + 1.0) * h;
    let tol_each = 0.25 * trunc_tol * h / radius.max(1.0);
    let mom = cell_moments(kk, env, h, n_last, false, tol_each)?;
    let (t0, t0_err) = tail_integral(kk, env, z_c, 0, tol_each)?;
    // sk[n] = \int_{z_n}^\infty k for n = 1..=n_last + 1.
    let mut sk = vec![0.0; n_last + 2];
    sk[n_last + 1] = t0;
    for n in (1..=n_last).rev() {
        sk[n] = sk[n + 1] + mom.k[n];
    }
    let mut table = Vec::with_capacity(n_last + 1);
    for n in 0..=n_last {
        table.push(mom.m[n] + h * sk[n + 1]);
    }
    let tail = env.tail1(z_c) + mom.err + t0_err;
    Ok((table, tail))
}

/// Double-tail hat weights for one side on a lattice of step `h`:
/// `W_s = B_{s-1}/h + A_s - B_s/h` with per-cell integrals
/// `A_m = \int_{cell m} ktilde` and `B_m = \int_{cell m} (z - z_m) ktilde`,
/// both reduced by Fubini to the cell moments of `k` and suffix sums
/// `\int_{z_m}^\infty k` and `\int_{z_m}^\infty w k`.
/// Entry 0 is the half-hat weight `A_0 - B_0 / h`.
fn double_tail_side(
    kk: &dyn Fn(f64) -> f64,
    env: &Envelope,
    h: f64,
    trunc_tol: f64,
) -> Result<(Vec<f64>, f64)> {
    let radius = env.radius_where(|e, r| e.tail2(r), 0.5 * trunc_tol, h.max(0.5))?;
    let s_last = (radius / h).ceil() as usize;
    if s_last < 2 {
        return Err(Error::config(format!(
            "coarse step {h} does not resolve the kernel tail (radius {radius})"
        )));
    }
    let z_c = (s_last as f64 + 1.0) * h;
    let tol_each = 0.1 * trunc_tol * h / radius.max(1.0);
    let mom = cell_moments(kk, env, h, s_last, true, tol_each)?;
    let (t0, t0_err) = tail_integral(kk, env, z_c, 0, tol_each)?;
    let (t1, t1_err) = tail_integral(kk, env, z_c, 1, tol_each)?;
    // sk[m] = \int_{z_m}^\infty k, sw[m] = \int_{z_m}^\infty w k,
    // for m = 1..=s_last + 1.
    let mut sk = vec![0.0; s_last + 2];
    let mut sw = vec![0.0; s_last + 2];
    sk[s_last + 1] = t0;
    sw[s_last + 1] = t1;
    for m in (1..=s_last).rev() {
        let z_m = m as f64 * h;
        sk[m] = sk[m + 1] + mom.k[m];
        sw[m] = sw[m + 1] + (mom.m[m] + z_m * mom.k[m]);
    }
    let a = |m: usize| -> f64 {
        let z_m = m as f64 * h;
        let z_mid = z_m + 0.5 * h;
        0.5 * mom.s[m] + h * (sw[m + 1] - z_mid * sk[m + 1])
    };
    let b = |m: usize| -> f64 {
        let z_m = m as f64 * h;
        mom.t[m] / 6.0 + 0.5 * h * h * (sw[m + 1] - z_m * sk[m + 1]) - h * h * h / 3.0 * sk[m + 1]
    };
    let mut w = Vec::with_capacity(s_last + 1);
    w.push(a(0) - b(0) / h);
    let mut b_prev = b(0);
    for s in 1..=s_last {
        let b_s = b(s);
        w.push(b_prev / h + a(s) - b_s / h);
        b_prev = b_s;
    }
    // Convex linear extension to zero: a hard truncation would break the
    // second-difference sign at the table edge, so continue with the last
    // secant slope until the weights reach zero. The appended mass is
    // certified into the tail bound.
    let mut extension_mass = 0.0;
    let n = w.len();
    if n >= 2 {
        let d = w[n - 2] - w[n - 1];
        let mut last = w[n - 1];
        if d > 0.0 {
            while last > d {
                last -= d;
                w.push(last);
                extension_mass += last;
                if w.len() > 4_000_000 {
                    return Err(Error::kernel(
                        "convex tail extension did not terminate; kernel tail too heavy",
                    ));
                }
            }
        } else if last > 0.0 {
            // Flat or rising numerical tail: give it one closing step.
            w.push(0.0);
        }
    }
    let tail = env.tail2(z_c) + mom.err + t0_err + t1_err + extension_mass * h;
    Ok((w, tail))
}

/// Up to this many passes of the local mass-preserving fix for a second
/// difference that roundoff (or a barely admissible user kernel) pushed
/// negative near the center.
const REPAIR_SWEEPS: usize = 8;

/// Repairs `W_0 - 2 W_1 + W_2 >= 0` (and knock-on effects further out) by
/// moving mass from a violating node to its two neighbors, preserving the
/// total and the first moment of the weight sequence. Fails if the defect
/// does not close in a few sweeps.
fn repair_double_tail(plus: &mut [f64], minus: &mut [f64]) -> Result<()> {
    let scale = plus
        .iter()
        .chain(minus.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-14 * scale.max(1e-300);
    for _ in 0..REPAIR_SWEEPS {
        let mut dirty = false;
        let w0 = plus.first().copied().unwrap_or(0.0) + minus.first().copied().unwrap_or(0.0);
        for side_idx in 0..2 {
            let side: &mut [f64] = if side_idx == 0 { &mut *plus } else { &mut *minus };
            for s in 1..side.len() {
                let below = if s == 1 { w0 } else { side[s - 1] };
                let above = side.get(s + 1).copied().unwrap_or(0.0);
                let defect = 2.0 * side[s] - below - above;
                if defect > tol {
                    let eps = defect / 3.0;
                    side[s] -= eps;
                    side[s - 1] += 0.5 * eps;
                    if s + 1 < side.len() {
                        side[s + 1] += 0.5 * eps;
                    }
                    dirty = true;
                }
            }
        }
        if !dirty {
            return Ok(());
        }
    }
    Err(Error::kernel(
        "double-tail weights could not be made discretely convex; \
         kernel violates the envelope structure near the origin",
    ))
}

/// Single-tail discretization data for a one-dimensional kernel.
#[derive(Debug, Clone)]
pub struct TailKernel1D {
    pub table: WeightTable,
    /// Sum of table entries per side; approximates `\int khat` there.
    pub mass_plus: f64,
    pub mass_minus: f64,
}

impl TailKernel1D {
    /// On-demand `khat(z) = \int_z^\infty k` on the requested side, by
    /// quadrature independent of the table construction path.
    pub fn khat(kern: &LevyKernel, side_plus: bool, z: f64, tol: f64) -> Result<f64> {
        let env = kern.radial_envelope();
        let kk = move |r: f64| {
            let zz = if side_plus { [r] } else { [-r] };
            (kern.density)(&zz)
        };
        let (v, _e) = tail_integral(&kk, &env, z, 0, tol)?;
        Ok(v)
    }
}

/// Builds the single-tail table (gamma < 1 or finite) for a 1-D kernel on
/// the grid lattice of step `dx`.
pub fn build_single_tail(kern: &LevyKernel, dx: f64, trunc_tol: f64) -> Result<TailKernel1D> {
    if kern.dim != 1 {
        return Err(Error::config("single-tail tables are one-dimensional; use the polar builder"));
    }
    if kern.kind == KernelKind::SingularGammaGe1 {
        return Err(Error::config(
            "kernel with gamma >= 1 needs double-tail tables, not single",
        ));
    }
    let env = kern.radial_envelope();
    let kp = |r: f64| (kern.density)(&[r]);
    let km = |r: f64| (kern.density)(&[-r]);
    let (plus, tp) = single_tail_side(&kp, &env, dx, 0.5 * trunc_tol)?;
    let (minus, tm) = single_tail_side(&km, &env, dx, 0.5 * trunc_tol)?;
    let table = WeightTable {
        step: dx,
        plus,
        minus,
        tail_bound: tp + tm,
        kind: TableKind::SingleTail,
    };
    table.check()?;
    let mass_plus = table.plus.iter().sum();
    let mass_minus = table.minus.iter().sum();
    Ok(TailKernel1D { table, mass_plus, mass_minus })
}

/// Double-tail discretization data for a one-dimensional kernel.
#[derive(Debug, Clone)]
pub struct DoubleTailKernel1D {
    pub table: WeightTable,
    /// Coarse-to-fine step ratio `q` with `dz = q dx`.
    pub q: usize,
}

impl DoubleTailKernel1D {
    /// On-demand `ktilde(z) = \int_z^\infty (w - z) k(w) dw`, by quadrature
    /// independent of the table construction path.
    pub fn ktilde(kern: &LevyKernel, side_plus: bool, z: f64, tol: f64) -> Result<f64> {
        let env = kern.radial_envelope();
        let kk = move |r: f64| {
            let zz = if side_plus { [r] } else { [-r] };
            (kern.density)(&zz)
        };
        let (m1, e1) = tail_integral(&kk, &env, z, 1, tol)?;
        let (m0, e0) = tail_integral(&kk, &env, z, 0, tol)?;
        let _ = (e1, e0);
        Ok(m1 - z * m0)
    }
}

/// Builds the double-tail hat-weight table (gamma in [1, 2)) for a 1-D
/// kernel on the coarse lattice `dz = q dx` chosen by [`snap_dz`].
pub fn build_double_tail(
    kern: &LevyKernel,
    dx: f64,
    dz: f64,
    trunc_tol: f64,
) -> Result<DoubleTailKernel1D> {
    if kern.dim != 1 {
        return Err(Error::config("double-tail tables are one-dimensional; use the polar builder"));
    }
    let (q, h) = snap_dz(dx, dz);
    let env = kern.radial_envelope();
    let kp = |r: f64| (kern.density)(&[r]);
    let km = |r: f64| (kern.density)(&[-r]);
    let (mut plus, tp) = double_tail_side(&kp, &env, h, 0.5 * trunc_tol)?;
    let (mut minus, tm) = double_tail_side(&km, &env, h, 0.5 * trunc_tol)?;
    repair_double_tail(&mut plus, &mut minus)?;
    let table = WeightTable {
        step: h,
        plus,
        minus,
        tail_bound: tp + tm,
        kind: TableKind::DoubleTail,
    };
    table.check()?;
    Ok(DoubleTailKernel1D { table, q })
}

/// A quadrature rule on the unit sphere: unit directions and nonnegative
/// weights summing to the sphere measure.
#[derive(Debug, Clone)]
pub struct SphereRule {
    pub directions: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl SphereRule {
    /// Uniform trapezoid rule on the circle with `n` nodes.
    pub fn circle(n: usize) -> Result<SphereRule> {
        if n < 4 {
            return Err(Error::config(format!("circle rule needs at least 4 directions, got {n}")));
        }
        let w = 2.0 * std::f64::consts::PI / n as f64;
        let mut directions = Vec::with_capacity(n);
        for i in 0..n {
            let th = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            directions.push(vec![th.cos(), th.sin()]);
        }
        Ok(SphereRule { directions, weights: vec![w; n] })
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.directions.len() != self.weights.len() || self.directions.is_empty() {
            return Err(Error::config("sphere rule has mismatched or empty node/weight lists"));
        }
        for (i, d) in self.directions.iter().enumerate() {
            if d.len() != dim {
                return Err(Error::config(format!("sphere direction {i} has wrong dimension")));
            }
            let n: f64 = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            if (n - 1.0).abs() > 1e-10 {
                return Err(Error::config(format!("sphere direction {i} is not unit length")));
            }
        }
        if self.weights.iter().any(|&w| w < 0.0) {
            return Err(Error::config("sphere rule has a negative weight"));
        }
        Ok(())
    }

    /// Index pairing `i -> j` with `dir_j = -dir_i`, required for
    /// double-tail lines. Fails if any direction lacks its antipode or if
    /// paired weights differ.
    pub fn antipodal_pairs(&self) -> Result<Vec<(usize, usize)>> {
        let n = self.directions.len();
        let mut used = vec![false; n];
        let mut pairs = Vec::new();
        for i in 0..n {
            if used[i] {
                continue;
            }
            let neg: Vec<f64> = self.directions[i].iter().map(|v| -v).collect();
            let j = (0..n)
                .find(|&j| {
                    !used[j]
                        && j != i
                        && self.directions[j]
                            .iter()
                            .zip(&neg)
                            .all(|(a, b)| (a - b).abs() < 1e-10)
                })
                .ok_or_else(|| {
                    Error::config(format!(
                        "sphere rule is not antipodally symmetric: direction {i} has no negation"
                    ))
                })?;
            if (self.weights[i] - self.weights[j]).abs() > 1e-12 * self.weights[i].abs().max(1.0) {
                return Err(Error::config(format!(
                    "antipodal directions {i}, {j} carry different weights"
                )));
            }
            used[i] = true;
            used[j] = true;
            pairs.push((i, j));
        }
        Ok(pairs)
    }
}

/// Which radial table family a polar decomposition carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailOrder {
    Single,
    Double,
}

/// Per-direction radial tables of a multi-dimensional kernel.
#[derive(Debug, Clone)]
pub enum PolarTables {
    /// One single-tail vector per direction (half-line each).
    Single(Vec<Vec<f64>>),
    /// One full-line double-tail table per antipodal pair; `pair_dirs[p]`
    /// gives the (plus, minus) direction indices of pair `p`.
    Double { tables: Vec<WeightTable>, pair_dirs: Vec<(usize, usize)> },
}

#[derive(Debug, Clone)]
pub struct PolarTailKernel {
    pub directions: Vec<Vec<f64>>,
    pub sphere_weights: Vec<f64>,
    pub step: f64,
    pub tables: PolarTables,
    pub tail_bound: f64,
}

/// Builds per-direction radial tables for a kernel in dimension >= 2.
/// Dimension 2 defaults to the uniform circle rule with `n_sphere` nodes
/// (even required for double tails); higher dimensions require an explicit
/// rule.
pub fn build_polar_tails(
    kern: &LevyKernel,
    dx: f64,
    dz: f64,
    n_sphere: usize,
    order: TailOrder,
    trunc_tol: f64,
    rule: Option<&SphereRule>,
) -> Result<PolarTailKernel> {
    if kern.dim < 2 {
        return Err(Error::config("polar builder requires kernel dimension >= 2"));
    }
    let rule_owned;
    let rule = match rule {
        Some(r) => r,
        None => {
            if kern.dim != 2 {
                return Err(Error::config(
                    "dimension >= 3 requires an explicit sphere rule",
                ));
            }
            rule_owned = SphereRule::circle(n_sphere)?;
            &rule_owned
        }
    };
    rule.validate(kern.dim)?;
    let env = kern.radial_envelope();
    let n_dirs = rule.directions.len();
    match order {
        TailOrder::Single => {
            let mut per_dir = Vec::with_capacity(n_dirs);
            let mut tail = 0.0;
            for d in &rule.directions {
                let kk = kern.radial_density(d);
                let (side, t) = single_tail_side(&kk, &env, dx, trunc_tol / n_dirs as f64)?;
                for n in 1..side.len() {
                    if side[n] - side[n - 1] > 1e-14 * side[0].max(1e-300) {
                        return Err(Error::kernel(format!(
                            "radial single-tail table not non-increasing along direction {d:?}"
                        )));
                    }
                }
                per_dir.push(side);
                tail += t;
            }
            Ok(PolarTailKernel {
                directions: rule.directions.clone(),
                sphere_weights: rule.weights.clone(),
                step: dx,
                tables: PolarTables::Single(per_dir),
                tail_bound: tail,
            })
        }
        TailOrder::Double => {
            let pairs = rule.antipodal_pairs()?;
            let (_q, h) = snap_dz(dx, dz);
            let mut tables = Vec::with_capacity(pairs.len());
            let mut tail = 0.0;
            for &(i, j) in &pairs {
                let kp = kern.radial_density(&rule.directions[i]);
                let km = kern.radial_density(&rule.directions[j]);
                let (mut plus, tp) = double_tail_side(&kp, &env, h, trunc_tol / n_dirs as f64)?;
                let (mut minus, tm) = double_tail_side(&km, &env, h, trunc_tol / n_dirs as f64)?;
                repair_double_tail(&mut plus, &mut minus)?;
                let table = WeightTable {
                    step: h,
                    plus,
                    minus,
                    tail_bound: tp + tm,
                    kind: TableKind::DoubleTail,
                };
                table.check()?;
                tail += table.tail_bound;
                tables.push(table);
            }
            Ok(PolarTailKernel {
                directions: rule.directions.clone(),
                sphere_weights: rule.weights.clone(),
                step: h,
                tables: PolarTables::Double { tables, pair_dirs: pairs },
                tail_bound: tail,
            })
        }
    }
}

/// Compensator drift `\int_{0 < |z| < 1} eta(z) nu(dz)` for integrable
/// jumps (gamma < 1). `eta` is the jump map with (t, x, control) already
/// bound. Uses the singular-endpoint integrator near 0; the integrand is
/// `O(|z|^{-gamma})` there since `eta` vanishes linearly.
pub fn drift_inner(
    kern: &LevyKernel,
    eta: &dyn Fn(&[f64]) -> Vec<f64>,
    dim_x: usize,
    tol: f64,
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; dim_x];
    match kern.dim {
        1 => {
            for comp in 0..dim_x {
                for sign in [1.0f64, -1.0] {
                    let mut f = |r: f64| eta(&[sign * r])[comp] * (kern.density)(&[sign * r]);
                    let r = integrate_singular_lower(&mut f, 0.0, 1.0, tol, None)?;
                    out[comp] += r.value;
                }
            }
        }
        _ => {
            if kern.dim != 2 {
                return Err(Error::config("inner drift beyond dimension 2 needs a sphere rule"));
            }
            let rule = SphereRule::circle(64)?;
            for (d, w) in rule.directions.iter().zip(&rule.weights) {
                let kk = kern.radial_density(d);
                for comp in 0..dim_x {
                    let mut f = |r: f64| {
                        let z: Vec<f64> = d.iter().map(|v| v * r).collect();
                        eta(&z)[comp] * kk(r)
                    };
                    let r = integrate_singular_lower(&mut f, 0.0, 1.0, tol, None)?;
                    out[comp] += w * r.value;
                }
            }
        }
    }
    Ok(out)
}

/// Outer drift `\int_{|z| > 1} eta(z) nu(dz)`, finite thanks to the
/// exponential envelope margin over the jump growth.
pub fn drift_outer(
    kern: &LevyKernel,
    eta: &dyn Fn(&[f64]) -> Vec<f64>,
    dim_x: usize,
    tol: f64,
) -> Result<Vec<f64>> {
    let env = kern.radial_envelope();
    // Jump growth is at most e^{Lambda r}; the density envelope decays at
    // Lambda + eps, so the product still decays at rate eps.
    let eff = Envelope { k: env.k, lambda: kern.decay_eps, p: env.p };
    let r_end = eff.radius_where(|e, r| e.tail0(r) * 2.0, 0.25 * tol, 2.0)?;
    let mut out = vec![0.0; dim_x];
    match kern.dim {
        1 => {
            for comp in 0..dim_x {
                for sign in [1.0f64, -1.0] {
                    let r = adaptive(
                        &mut |rr: f64| eta(&[sign * rr])[comp] * (kern.density)(&[sign * rr]),
                        1.0,
                        r_end,
                        tol,
                    )?;
                    out[comp] += r.value;
                }
            }
        }
        2 => {
            let rule = SphereRule::circle(64)?;
            for (d, w) in rule.directions.iter().zip(&rule.weights) {
                let kk = kern.radial_density(d);
                for comp in 0..dim_x {
                    let r = adaptive(
                        &mut |rr: f64| {
                            let z: Vec<f64> = d.iter().map(|v| v * rr).collect();
                            eta(&z)[comp] * kk(rr)
                        },
                        1.0,
                        r_end,
                        tol,
                    )?;
                    out[comp] += w * r.value;
                }
            }
        }
        _ => return Err(Error::config("outer drift beyond dimension 2 needs a sphere rule")),
    }
    Ok(out)
}

/// Second-difference drift `\int d^2/ds^2 [eta(s y)] ktilde(s) ds`
/// evaluated with the same hat weights as the jump stencil: the hat
/// quadrature of the exact identity that full compensation yields. `eta`
/// is restricted to the line `s -> s y` (signed coordinate).
pub fn drift_line_second(
    table: &WeightTable,
    eta_line: &dyn Fn(f64) -> Vec<f64>,
    dim_x: usize,
) -> Vec<f64> {
    debug_assert_eq!(table.kind, TableKind::DoubleTail);
    let h = table.step;
    let mut out = vec![0.0; dim_x];
    let d2 = |s: f64| -> Vec<f64> {
        let up = eta_line(s + h);
        let mid = eta_line(s);
        let dn = eta_line(s - h);
        (0..dim_x)
            .map(|c| (up[c] - 2.0 * mid[c] + dn[c]) / (h * h))
            .collect()
    };
    // Combined center weight at s = 0, per-side weights outward.
    let w0 = table.plus.first().copied().unwrap_or(0.0)
        + table.minus.first().copied().unwrap_or(0.0);
    let v = d2(0.0);
    for c in 0..dim_x {
        out[c] += w0 * v[c];
    }
    for (side, sign) in [(&table.plus, 1.0f64), (&table.minus, -1.0f64)] {
        for (s, &w) in side.iter().enumerate().skip(1) {
            let v = d2(sign * s as f64 * h);
            for c in 0..dim_x {
                out[c] += w * v[c];
            }
        }
    }
    out
}
