//! Refinement behavior pinned by theory: manufactured-solution studies on
//! limiting cases of the scheme, and the scaling of the singular tables'
//! center entries.

use std::sync::Arc;

use ipde::harness::{estimate_order, manufactured_run, ManufacturedCase};
use ipde::kernels::KernelKind;
use ipde::{builtin, Grid, JumpDiscretization, LevyKernel, SchemeConfig};

/// k(z) = e^{-|z|} / |z|^{1.5}: an integrable-jump relative of the built-in
/// tempered kernel, exercising the single-tail path with gamma = 0.5.
fn tempered_gamma_half() -> LevyKernel {
    LevyKernel {
        density: Arc::new(|z: &[f64]| {
            let r = z[0].abs();
            if r == 0.0 {
                f64::INFINITY
            } else {
                (-r).exp() / r.powf(1.5)
            }
        }),
        gamma: 0.5,
        decay_lambda: 0.5,
        decay_eps: 0.5,
        bound_k: 1.0,
        kind: KernelKind::SingularGammaLt1,
        dim: 1,
    }
}

#[test]
fn pure_diffusion_reduction_converges_at_the_classical_rate() {
    // With the zero measure the scheme is a plain central-difference heat
    // solver; its spatial order is classical, far above the guaranteed
    // floor.
    let case = ManufacturedCase {
        kernel: LevyKernel::zero(1),
        a: 0.5,
        b: 0.0,
        c: 0.0,
        horizon: 0.5,
    };
    let cfg = SchemeConfig { cfl_safety: 0.9, ..Default::default() };
    let records = manufactured_run(&case, &[4, 5, 6], &cfg).unwrap();
    let errors: Vec<f64> = records.iter().map(|r| r.sup_error).collect();
    assert!(errors[2] < errors[0], "no decrease: {errors:?}");
    let hs: Vec<f64> = records.iter().map(|r| r.dx).collect();
    let fit = estimate_order(&hs, &errors).unwrap();
    assert!(fit.slope >= 0.9, "heat reduction fitted order {} < 0.9", fit.slope);
}

#[test]
fn integrable_singular_run_beats_its_guaranteed_rate() {
    let case = ManufacturedCase {
        kernel: tempered_gamma_half(),
        a: 0.1,
        b: 0.3,
        c: 0.2,
        horizon: 0.5,
    };
    let cfg = SchemeConfig { cfl_safety: 0.9, ..Default::default() };
    let records = manufactured_run(&case, &[4, 5, 6], &cfg).unwrap();
    let errors: Vec<f64> = records.iter().map(|r| r.sup_error).collect();
    for e in errors.windows(2) {
        assert!(e[1] < e[0], "errors not decreasing: {errors:?}");
    }
    let hs: Vec<f64> = records.iter().map(|r| r.dx).collect();
    let fit = estimate_order(&hs, &errors).unwrap();
    assert!(fit.slope >= 0.5, "gamma = 0.5 run fitted order {} < 0.5", fit.slope);
}

#[test]
fn single_tail_center_entries_scale_with_the_kernel_order() {
    // The first table entry integrates the tail-mass function over the
    // first cell, so it shrinks like dx^(1 - gamma); the fitted exponent
    // must sit within 0.15 of that.
    let dxs = [0.125, 0.0625, 0.03125, 0.015625, 0.0078125];
    for (name, kern) in
        [("frac_laplace_trunc", builtin("frac_laplace_trunc").unwrap()), ("tempered_gamma_half", tempered_gamma_half())]
    {
        let expected = 1.0 - kern.gamma;
        let mut entries = Vec::new();
        for dx in dxs {
            let grid = Grid::new(&[-2.0], &[2.0], dx).unwrap();
            let jd = JumpDiscretization::prepare(&kern, &grid, None, 16, 1e-10, None).unwrap();
            let table = jd.table().expect("single-tail kernels carry a table");
            entries.push(table.plus[0]);
        }
        let fit = estimate_order(&dxs, &entries).unwrap();
        assert!(
            (fit.slope - expected).abs() <= 0.15,
            "{name}: center entry scales like dx^{:.3}, expected dx^{expected}",
            fit.slope
        );
    }
}
