//! Randomized invariants: stencil positivity and quadratic exactness,
//! weight-table shape under arbitrary steps, order preservation of the
//! explicit scheme, and the rate estimator on synthetic data.

use std::sync::Arc;

use proptest::prelude::*;

use ipde::harness::estimate_order;
use ipde::kernels::{build_double_tail, build_single_tail};
use ipde::local::build_l;
use ipde::stepper::comparison_violation;
use ipde::{
    builtin, models, solve, ControlProblem, Error, FarfieldRule, Grid, JumpDiscretization,
    SchemeConfig,
};

fn grid_steps() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.5), Just(0.25), Just(0.2), Just(0.125), Just(0.1)]
}

proptest! {
    /// One-dimensional Kushner stencils are always monotone, and on x^2
    /// the only consistency error is the upwind bias b * dx.
    #[test]
    fn local_1d_is_monotone_and_quadratic_exact(
        a in 0.0f64..3.0,
        b in -3.0f64..3.0,
        dx in grid_steps(),
    ) {
        let p = models::scalar_constant((2.0 * a).sqrt(), b, 0.0, 0.0, 1.0);
        let grid = Grid::new(&[-2.0], &[2.0], dx).unwrap();
        let node = grid.n_nodes / 2;
        let s = build_l(&p, 0, 0.0, node, &grid).unwrap();
        prop_assert!(s.min_weight() >= 0.0);
        let x0 = grid.point(node)[0];
        let applied = s.apply_fn(&grid, &|y: &[f64]| y[0] * y[0]);
        let exact = 2.0 * a + 2.0 * b * x0;
        prop_assert!(
            (applied - exact).abs() <= b.abs() * dx * (1.0 + 1e-9) + 1e-9,
            "a={a} b={b} dx={dx}: {applied} vs {exact}"
        );
    }

    /// Two-dimensional stencils either fail the dominance check loudly or
    /// come out with nonnegative weights.
    #[test]
    fn local_2d_rejects_or_stays_nonnegative(
        s00 in -1.5f64..1.5,
        s01 in -1.5f64..1.5,
        s10 in -1.5f64..1.5,
        s11 in -1.5f64..1.5,
        b0 in -2.0f64..2.0,
        b1 in -2.0f64..2.0,
    ) {
        let p = ControlProblem {
            controls: vec!["only".into()],
            dim_x: 2,
            dim_z: 2,
            sigma: vec![Arc::new(move |_t, _x: &[f64]| vec![s00, s01, s10, s11])],
            sigma_cols: 2,
            drift: vec![Arc::new(move |_t, _x: &[f64]| vec![b0, b1])],
            discount: vec![Arc::new(|_t, _x: &[f64]| 0.0)],
            source: vec![Arc::new(|_t, _x: &[f64]| 0.0)],
            jump: vec![Arc::new(|_t, _x: &[f64], z: &[f64]| z.to_vec())],
            initial: Arc::new(|_x: &[f64]| 0.0),
            horizon: 1.0,
            coefficients_time_dependent: false,
            jump_state_dependent: false,
        };
        let grid = Grid::new(&[-1.0, -1.0], &[1.0, 1.0], 0.25).unwrap();
        match build_l(&p, 0, 0.0, grid.flat(&[4, 4]), &grid) {
            Ok(s) => prop_assert!(s.min_weight() >= 0.0),
            Err(Error::Monotonicity { .. }) => {}
            Err(e) => prop_assert!(false, "unexpected error kind: {e}"),
        }
    }

    /// Single-tail tables stay nonnegative, non-increasing, and symmetric
    /// for the symmetric truncated fractional kernel at any step.
    #[test]
    fn single_tail_tables_keep_their_shape(dx in 0.01f64..0.5) {
        let kern = builtin("frac_laplace_trunc").unwrap();
        let tail = build_single_tail(&kern, dx, 1e-9).unwrap();
        tail.table.check().unwrap();
        prop_assert!(tail.table.center_mass() > 0.0);
        let n = tail.table.plus.len().min(tail.table.minus.len());
        for i in 0..n {
            let (p, m) = (tail.table.plus[i], tail.table.minus[i]);
            prop_assert!((p - m).abs() <= 1e-7 * p.abs().max(1e-12), "asymmetry at {i}");
        }
    }

    /// Double-tail tables on a coarse lattice dz = q dx pass their own
    /// convexity and positivity check for arbitrary admissible steps.
    #[test]
    fn double_tail_tables_keep_their_shape(dx in 0.02f64..0.2, q in 2usize..6) {
        let kern = builtin("tempered_stable").unwrap();
        let tail = build_double_tail(&kern, dx, q as f64 * dx, 1e-9).unwrap();
        tail.table.check().unwrap();
        prop_assert!(tail.table.center_mass() > 0.0);
    }

    /// Exact power-law data reproduces its own order, both in the fitted
    /// slope and in every pairwise estimate.
    #[test]
    fn order_fit_recovers_power_laws(p in 0.3f64..2.5, c in 0.1f64..10.0) {
        let hs: Vec<f64> = (0..4).map(|k| 0.2 / 2.0f64.powi(k)).collect();
        let errors: Vec<f64> = hs.iter().map(|h| c * h.powf(p)).collect();
        let fit = estimate_order(&hs, &errors).unwrap();
        prop_assert!((fit.slope - p).abs() <= 1e-9);
        for q in &fit.pair {
            prop_assert!((q - p).abs() <= 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Ordered initial data produce ordered explicit solutions for random
    /// smooth data pairs and random nonnegative discounting.
    #[test]
    fn explicit_solutions_preserve_order(
        c0 in -1.0f64..1.0,
        c1 in -1.0f64..1.0,
        c2 in -1.0f64..1.0,
        gap0 in 0.0f64..1.0,
        gap1 in 0.0f64..0.5,
        discount in 0.0f64..0.5,
        f0 in -1.0f64..1.0,
    ) {
        let mk = |extra: bool| -> ControlProblem {
            ControlProblem {
                controls: vec!["only".into()],
                dim_x: 1,
                dim_z: 1,
                sigma: vec![Arc::new(|_t, _x: &[f64]| vec![0.6])],
                sigma_cols: 1,
                drift: vec![Arc::new(|_t, _x: &[f64]| vec![0.3])],
                discount: vec![Arc::new(move |_t, _x: &[f64]| discount)],
                source: vec![Arc::new(move |_t, _x: &[f64]| f0)],
                jump: vec![Arc::new(|_t, _x: &[f64], z: &[f64]| z.to_vec())],
                initial: Arc::new(move |x: &[f64]| {
                    let base = c0 + c1 * x[0].sin() + c2 * (2.0 * x[0]).cos();
                    if extra {
                        base + gap0 + gap1 * (1.0 + x[0].sin())
                    } else {
                        base
                    }
                }),
                horizon: 0.2,
                coefficients_time_dependent: false,
                jump_state_dependent: false,
            }
        };
        let lower = mk(false);
        let upper = mk(true);
        let grid = Arc::new(Grid::new(&[-2.0], &[2.0], 0.25).unwrap());
        let kern = builtin("finite_exp").unwrap();
        let jd = JumpDiscretization::prepare(&kern, &grid, None, 16, 1e-9, None).unwrap();
        let cfg = SchemeConfig { store_trajectory: true, ..SchemeConfig::default() };
        let rl = solve(&lower, &jd, grid.clone(),
            &cfg, &FarfieldRule::initial_datum(lower.initial.clone()), None).unwrap();
        let ru = solve(&upper, &jd, grid,
            &cfg, &FarfieldRule::initial_datum(upper.initial.clone()), None).unwrap();
        prop_assert!(comparison_violation(&rl, &ru).unwrap() <= 1e-12);
    }
}

#[test]
fn order_fit_matches_hand_computed_slope() {
    // Geometric levels make the least-squares slope depend only on the
    // endpoints: ln(0.09 / 0.0243) / ln 4.
    let fit = estimate_order(&[0.1, 0.05, 0.025], &[0.09, 0.047, 0.0243]).unwrap();
    assert!((fit.slope - 0.944_485_6).abs() <= 1e-5, "slope {}", fit.slope);
}

#[test]
fn order_fit_is_flat_on_constant_errors() {
    let fit = estimate_order(&[0.1, 0.05, 0.025], &[0.05, 0.05, 0.05]).unwrap();
    assert!(fit.slope.abs() <= 1e-12);
}

#[test]
fn order_fit_rejects_degenerate_input() {
    assert!(estimate_order(&[0.1, 0.05], &[1.0, 0.5]).is_err());
    assert!(estimate_order(&[0.1, 0.1, 0.05], &[1.0, 0.5, 0.2]).is_err());
    assert!(estimate_order(&[0.1, 0.05, 0.025], &[1.0, 0.0, 0.2]).is_err());
}
