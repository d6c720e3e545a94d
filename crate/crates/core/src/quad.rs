//! Adaptive Gauss–Kronrod quadrature.
//!
//! One 7/15-point Gauss–Kronrod panel supplies a value and an error
//! estimate; `adaptive` bisects the worst panel until the summed estimate
//! meets the tolerance. `integrate_singular_lower` peels dyadic shells off
//! an integrable endpoint singularity, certifying the leftover either with
//! a caller-supplied remainder bound or with a geometric-decay estimate.
//!
//! Both the kernel weight-table builder and the reference oracle sit on top
//! of these routines; they use them on different integrands (cell moments of
//! the density vs. the full compensated jump integrand), so cross-checks
//! between the two never compare a quantity with itself.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

/// Abscissae of the 15-point Kronrod rule on [-1, 1]; odd indices are the
/// embedded 7-point Gauss abscissae.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];

const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
}

/// One Gauss–Kronrod 7/15 panel on [a, b]. Returns the Kronrod value and
/// |K - G| scaled to the interval as the error estimate (conservative for
/// smooth integrands).
pub fn gk15(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64) -> QuadResult {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut resg = WG[3] * fc;
    let mut resk = WGK[7] * fc;
    for j in 0..3 {
        let x = h * XGK[2 * j + 1];
        let pair = f(c - x) + f(c + x);
        resg += WG[j] * pair;
        resk += WGK[2 * j + 1] * pair;
    }
    for j in 0..4 {
        let x = h * XGK[2 * j];
        resk += WGK[2 * j] * (f(c - x) + f(c + x));
    }
    QuadResult {
        value: resk * h,
        error: ((resk - resg) * h).abs(),
    }
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive integration of `f` over [a, b] to absolute tolerance.
pub fn adaptive(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64, abs_tol: f64) -> Result<QuadResult> {
    const MAX_PANELS: usize = 4000;
    if a == b {
        return Ok(QuadResult { value: 0.0, error: 0.0 });
    }
    let first = gk15(f, a, b);
    if !first.value.is_finite() {
        return Err(Error::Quadrature(format!(
            "integrand not finite on [{a}, {b}]"
        )));
    }
    let mut heap = BinaryHeap::new();
    let mut total_value = first.value;
    let mut total_error = first.error;
    heap.push(Panel { a, b, value: first.value, error: first.error });
    while total_error > abs_tol.max(1e-300) && heap.len() < MAX_PANELS {
        let worst = heap.pop().expect("heap nonempty while error positive");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval at roundoff width: keep its estimate and move on.
            total_error -= worst.error;
            total_value += 0.0;
            heap.push(Panel { error: 0.0, ..worst });
            continue;
        }
        let left = gk15(f, worst.a, mid);
        let right = gk15(f, mid, worst.b);
        if !left.value.is_finite() || !right.value.is_finite() {
            return Err(Error::Quadrature(format!(
                "integrand not finite inside [{}, {}]",
                worst.a, worst.b
            )));
        }
        total_value += left.value + right.value - worst.value;
        total_error += left.error + right.error - worst.error;
        heap.push(Panel { a: worst.a, b: mid, value: left.value, error: left.error });
        heap.push(Panel { a: mid, b: worst.b, value: right.value, error: right.error });
    }
    if total_error > abs_tol.max(1e-300) * 8.0 {
        return Err(Error::Quadrature(format!(
            "adaptive quadrature stalled on [{a}, {b}]: error estimate {total_error:.3e} > tol {abs_tol:.3e}"
        )));
    }
    Ok(QuadResult { value: total_value, error: total_error })
}

/// Integrates `f` over (a, b] where `f` may have an integrable singularity
/// at `a`. Dyadic shells are peeled toward `a`; the part below the last
/// shell is certified either by `remainder`, a caller-supplied bound
/// `delta -> bound on ∫_a^{a+delta} |f|`, or by geometric extrapolation of
/// shell contributions.
pub fn integrate_singular_lower(
    f: &mut dyn FnMut(f64) -> f64,
    a: f64,
    b: f64,
    abs_tol: f64,
    remainder: Option<&dyn Fn(f64) -> f64>,
) -> Result<QuadResult> {
    const MAX_SHELLS: usize = 200;
    if b <= a {
        return Ok(QuadResult { value: 0.0, error: 0.0 });
    }
    let width = b - a;
    let mut value = 0.0;
    let mut error = 0.0;
    let mut shell_values: Vec<f64> = Vec::new();
    let mut hi = b;
    for j in 0..MAX_SHELLS {
        let lo = a + width * 0.5f64.powi(j as i32 + 1);
        // Telescoping budget: the shell tolerances sum to abs_tol / 4 while
        // shrinking only polynomially, so deep shells are never asked for
        // accuracy below what their own magnitude supports.
        let shell_tol = 0.25 * abs_tol / ((j + 1) * (j + 2)) as f64;
        let r = adaptive(f, lo, hi, shell_tol)?;
        value += r.value;
        error += r.error;
        shell_values.push(r.value);
        hi = lo;
        let delta = lo - a;
        if let Some(bound) = remainder {
            let rem = bound(delta);
            if rem <= 0.25 * abs_tol {
                return Ok(QuadResult { value, error: error + rem });
            }
        } else if shell_values.len() >= 4 {
            let n = shell_values.len();
            let mut ratio: f64 = 0.0;
            let mut ok = true;
            for i in (n - 3)..n {
                let prev = shell_values[i - 1].abs();
                let cur = shell_values[i].abs();
                if prev == 0.0 {
                    if cur != 0.0 {
                        ok = false;
                    }
                    continue;
                }
                ratio = ratio.max(cur / prev);
            }
            if ok && ratio < 0.9 {
                let last = shell_values[n - 1].abs();
                let rem = last * ratio / (1.0 - ratio);
                if rem <= 0.25 * abs_tol {
                    return Ok(QuadResult { value, error: error + rem });
                }
            }
            // Absolute floor: contributions vanished into roundoff.
            if shell_values[n - 3..].iter().all(|v| v.abs() <= 0.125 * abs_tol)
                && delta <= 1e-13 * width
            {
                return Ok(QuadResult { value, error: error + 0.25 * abs_tol });
            }
        }
    }
    Err(Error::Quadrature(format!(
        "singular-endpoint quadrature on ({a}, {b}] did not certify tolerance {abs_tol:.3e}"
    )))
}

/// As `integrate_singular_lower`, but the singularity sits at the upper
/// endpoint `b`.
///
/// The reflection evaluates `f` at `a + b - u`, so the singular endpoint is
/// resolved only down to spacing around `eps * |b|`; a tolerance that needs
/// finer shells than that fails honestly. Integrals singular at zero do not
/// have this limit because offsets from zero stay exactly representable.
pub fn integrate_singular_upper(
    f: &mut dyn FnMut(f64) -> f64,
    a: f64,
    b: f64,
    abs_tol: f64,
    remainder: Option<&dyn Fn(f64) -> f64>,
) -> Result<QuadResult> {
    let mut g = |u: f64| f(a + b - u);
    integrate_singular_lower(&mut g, a, b, abs_tol, remainder)
}
