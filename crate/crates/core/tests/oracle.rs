//! Closed-form checks of the quadrature oracles and kernel tables.
//!
//! Every expected value below is derived analytically (exponential and
//! power-law integrals, Gamma-function identities), independent of the
//! library's own quadrature path, and frozen against it.

use std::sync::Arc;

use ipde::harness::{levy_symbol_cos, oracle_j, SmoothFn};
use ipde::kernels::{
    build_double_tail, build_single_tail, DoubleTailKernel1D, KernelKind, LevyKernel,
    TailKernel1D,
};
use ipde::kernels::{drift_inner, drift_line_second, drift_outer};
use ipde::{builtin, builtin_ids};

const ORACLE_TOL: f64 = 1e-8;

fn eta_identity(z: &[f64]) -> Vec<f64> {
    z.to_vec()
}

/// `k = 1_{|z| <= 1}`: bounded with unit mass per side; envelope
/// `e^{1 - |z|} / |z| >= 1` on the support.
fn uniform_kernel() -> LevyKernel {
    LevyKernel {
        density: Arc::new(|z: &[f64]| if z[0].abs() <= 1.0 { 1.0 } else { 0.0 }),
        gamma: 0.0,
        decay_lambda: 0.0,
        decay_eps: 1.0,
        bound_k: std::f64::consts::E,
        kind: KernelKind::Finite,
        dim: 1,
    }
}

#[test]
fn oracle_vanishes_on_constants() {
    let phi = SmoothFn::new(|_x: &[f64]| 5.0)
        .with_grad(|_x: &[f64]| vec![0.0])
        .with_sup(5.0)
        .with_third_bound(0.0);
    for id in builtin_ids() {
        let kern = builtin(id).unwrap();
        let v = oracle_j(&kern, &eta_identity, 1.0, &phi, &[0.3], ORACLE_TOL).unwrap();
        assert!(v.abs() <= ORACLE_TOL, "J[const] = {v} for kernel {id}");
    }
}

#[test]
fn oracle_vanishes_on_affine_under_symmetric_kernels() {
    // phi(x) = 2x + 1 with eta = z: the compensated integrand reduces to
    // 2 z 1_{|z| > 1} k(z), which integrates to zero for even k. The sup
    // bound certifies the truncation radius (about 55 here), well inside
    // the range where it really does bound |phi|.
    let phi = SmoothFn::new(|x: &[f64]| 2.0 * x[0] + 1.0)
        .with_grad(|_x: &[f64]| vec![2.0])
        .with_sup(500.0)
        .with_third_bound(0.0);
    for id in builtin_ids() {
        let kern = builtin(id).unwrap();
        let v = oracle_j(&kern, &eta_identity, 1.0, &phi, &[0.2], ORACLE_TOL).unwrap();
        assert!(v.abs() <= 1e-7, "J[affine] = {v} for kernel {id}");
    }
}

#[test]
fn oracle_matches_uniform_kernel_shifted_sine() {
    // J[sin](pi/2) = int_{-1}^{1} (sin(pi/2 + z) - 1 - z cos(pi/2)) dz
    //             = int_{-1}^{1} (cos z - 1) dz = 2 (sin 1 - 1).
    let kern = uniform_kernel();
    let phi = SmoothFn::new(|x: &[f64]| x[0].sin())
        .with_grad(|x: &[f64]| vec![x[0].cos()])
        .with_sup(1.0);
    let v = oracle_j(&kern, &eta_identity, 1.0, &phi, &[std::f64::consts::FRAC_PI_2], ORACLE_TOL)
        .unwrap();
    let expected = 2.0 * (1.0f64.sin() - 1.0);
    assert!(
        (v - expected).abs() <= ORACLE_TOL,
        "J[sin](pi/2) = {v}, expected {expected}"
    );
}

#[test]
fn oracle_matches_exponential_kernel_cosine() {
    // For k = e^{-2|z|} and phi = cos: the odd parts cancel, so
    // J[cos](x) = cos x * int (cos z - 1) e^{-2|z|} dz = -cos(x) / 5.
    let kern = builtin("finite_exp").unwrap();
    let phi = SmoothFn::new(|x: &[f64]| x[0].cos())
        .with_grad(|x: &[f64]| vec![-x[0].sin()])
        .with_sup(1.0);
    let v = oracle_j(&kern, &eta_identity, 1.0, &phi, &[0.7], ORACLE_TOL).unwrap();
    let expected = -0.2 * (0.7f64).cos();
    assert!((v - expected).abs() <= ORACLE_TOL, "got {v}, expected {expected}");
}

#[test]
fn oracle_matches_tempered_stable_gamma_identity() {
    // For k = e^{-|z|} |z|^{-2.5} the real part of the symbol has the
    // closed form (tempered-stable characteristic exponent at xi = 1)
    //
    //   Re = 2 Gamma(-3/2) (2^{3/4} cos(3 pi / 8) - 1),
    //
    // with Gamma(-3/2) = 4 sqrt(pi) / 3. The imaginary part vanishes by
    // symmetry. The tolerance is looser than for the bounded kernels:
    // rounding noise against the |z|^{-2.5} mass caps what any quadrature
    // of this integrand can certify in f64 near 1e-8.
    let kern = builtin("tempered_stable").unwrap();
    let (re, im) = levy_symbol_cos(&kern, 1e-7).unwrap();
    let gamma_m32 = 4.0 * std::f64::consts::PI.sqrt() / 3.0;
    let expected = 2.0 * gamma_m32
        * ((2.0f64).powf(0.75) * (3.0 * std::f64::consts::PI / 8.0).cos() - 1.0);
    assert!((re - expected).abs() <= 2e-7, "Re = {re}, expected {expected}");
    assert!(im.abs() <= 2e-7, "Im = {im}, expected 0");
}

#[test]
fn tail_functions_match_exponential_closed_forms() {
    // khat(z) = int_z^inf e^{-2w} dw = e^{-2z}/2;
    // ktilde(z) = int_z^inf (w - z) e^{-2w} dw = e^{-2z}/4.
    let kern = builtin("finite_exp").unwrap();
    let kp = TailKernel1D::khat(&kern, true, 0.5, 1e-12).unwrap();
    let km = TailKernel1D::khat(&kern, false, 0.5, 1e-12).unwrap();
    assert!((kp - (-1.0f64).exp() / 2.0).abs() <= 1e-10, "khat = {kp}");
    assert!((kp - km).abs() <= 1e-12, "khat sides differ: {kp} vs {km}");
    let dt = DoubleTailKernel1D::ktilde(&kern, true, 0.7, 1e-12).unwrap();
    assert!((dt - (-1.4f64).exp() / 4.0).abs() <= 1e-10, "ktilde = {dt}");
}

#[test]
fn single_tail_mass_recovers_first_moment() {
    // Summing the cell integrals of khat telescopes to
    // int_0^inf khat = int_0^inf w e^{-2w} dw = 1/4 per side.
    let kern = builtin("finite_exp").unwrap();
    let tail = build_single_tail(&kern, 0.05, 1e-10).unwrap();
    assert!((tail.mass_plus - 0.25).abs() <= 1e-8, "mass_plus = {}", tail.mass_plus);
    assert!((tail.mass_minus - 0.25).abs() <= 1e-8, "mass_minus = {}", tail.mass_minus);
}

#[test]
fn double_tail_mass_recovers_half_second_moment() {
    // int_R ktilde = int_R z^2 k(z) / 2 dz; for k = e^{-|z|} |z|^{-2.5}
    // that is int_0^inf w^{-1/2} e^{-w} dw = Gamma(1/2) = sqrt(pi).
    let kern = builtin("tempered_stable").unwrap();
    let dx = 0.05;
    let tail = build_double_tail(&kern, dx, dx.sqrt(), 1e-9).unwrap();
    let total = tail.table.total_mass();
    let expected = std::f64::consts::PI.sqrt();
    assert!(
        (total - expected).abs() <= 1e-5 + 4.0 * tail.table.tail_bound,
        "hat mass = {total}, expected {expected} (tail bound {})",
        tail.table.tail_bound
    );
    // Symmetric kernel: the per-side tables agree entrywise.
    for (p, m) in tail.table.plus.iter().zip(&tail.table.minus) {
        assert!((p - m).abs() <= 1e-12 * p.abs().max(1e-300));
    }
}

#[test]
fn second_difference_drift_doubles_hat_mass_on_quadratic_jumps() {
    // With eta(z) = z + z^2 the second derivative along the line is the
    // constant 2, so the hat-quadrature drift reduces to twice the total
    // hat mass of ktilde: 2 sqrt(pi) for the tempered kernel.
    let kern = builtin("tempered_stable").unwrap();
    let dx = 0.05;
    let tail = build_double_tail(&kern, dx, dx.sqrt(), 1e-9).unwrap();
    let eta_line = |s: f64| vec![s + s * s];
    let b = drift_line_second(&tail.table, &eta_line, 1);
    let expected = 2.0 * std::f64::consts::PI.sqrt();
    assert!(
        (b[0] - expected).abs() <= 1e-4,
        "second-difference drift = {}, expected {expected}",
        b[0]
    );
}

#[test]
fn inner_drift_integrates_jumps_against_small_z_mass() {
    // One-sided unit density on (0, 1) with eta = z:
    // b_inner = int_0^1 z dz = 1/2.
    let kern = LevyKernel {
        density: Arc::new(|z: &[f64]| if z[0] > 0.0 && z[0] < 1.0 { 1.0 } else { 0.0 }),
        gamma: 0.0,
        decay_lambda: 0.0,
        decay_eps: 1.0,
        bound_k: std::f64::consts::E,
        kind: KernelKind::Finite,
        dim: 1,
    };
    let b = drift_inner(&kern, &eta_identity, 1, 1e-10).unwrap();
    assert!((b[0] - 0.5).abs() <= 1e-8, "inner drift = {}", b[0]);
}

#[test]
fn outer_drift_integrates_large_jumps() {
    // eta(z) = z^2 under k = e^{-2|z|}:
    // int_{|z| > 1} z^2 e^{-2|z|} dz = 2 e^{-2} (1/2 + 1/2 + 1/4) = 2.5 e^{-2}.
    let kern = builtin("finite_exp").unwrap();
    let eta_sq = |z: &[f64]| vec![z[0] * z[0]];
    let b = drift_outer(&kern, &eta_sq, 1, 1e-10).unwrap();
    let expected = 2.5 * (-2.0f64).exp();
    assert!((b[0] - expected).abs() <= 1e-8, "outer drift = {}", b[0]);
}
