//! Property tests for the grid, measure, and dual-normalization invariants.

use proptest::prelude::*;
use qot_core::bilevel::project_to_simplex;
use qot_core::grid::{Field1d, Field2d, Grid1d, Grid2d};
use qot_core::measures::{extend_by_zero, mollify_shift, restrict, DilatedGrid, DiscreteMeasure};
use qot_core::qot::{normalize_zero_mean, plan_from_duals, DualPotentials};

fn values(n: usize, lo: f64, hi: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(lo..hi, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn integrate_is_linear(
        v1 in values(17, -5.0, 5.0),
        v2 in values(17, -5.0, 5.0),
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
    ) {
        let g = Grid1d::new(-1.0, 2.0, 17).unwrap();
        let f1 = Field1d::new(g.clone(), v1).unwrap();
        let f2 = Field1d::new(g.clone(), v2).unwrap();
        let combo = Field1d::new(
            g,
            f1.values.iter().zip(&f2.values).map(|(x, y)| a * x + b * y).collect(),
        ).unwrap();
        let lhs = combo.integrate();
        let rhs = a * f1.integrate() + b * f2.integrate();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(rhs.abs()).max(1.0));
    }

    #[test]
    fn lp_norm_triangle_inequality(
        v1 in values(12, -4.0, 4.0),
        v2 in values(12, -4.0, 4.0),
        p_idx in 0usize..4,
    ) {
        let p = [1.0, 1.5, 2.0, f64::INFINITY][p_idx];
        let g = Grid1d::new(0.0, 1.0, 12).unwrap();
        let f1 = Field1d::new(g.clone(), v1).unwrap();
        let f2 = Field1d::new(g.clone(), v2).unwrap();
        let sum = Field1d::new(
            g,
            f1.values.iter().zip(&f2.values).map(|(x, y)| x + y).collect(),
        ).unwrap();
        let lhs = sum.lp_norm(p).unwrap();
        let rhs = f1.lp_norm(p).unwrap() + f2.lp_norm(p).unwrap();
        prop_assert!(lhs <= rhs + 1e-12 * rhs.max(1.0));
    }

    #[test]
    fn extension_restriction_adjoint(
        v in values(20, -2.0, 2.0),
        w in values(56, -2.0, 2.0),
        delta in 0.05f64..0.4,
    ) {
        let gx = Grid1d::new(0.0, 1.0, 5).unwrap();
        let gy = Grid1d::new(0.0, 1.0, 4).unwrap();
        let dx = DilatedGrid::new(gx.clone(), delta).unwrap();
        let dy = DilatedGrid::new(gy.clone(), delta).unwrap();
        prop_assume!(dx.dilated.n * dy.dilated.n == 56);
        let f = Field2d::new(Grid2d::new(gx, gy), v).unwrap();
        let g = Field2d::new(Grid2d::new(dx.dilated.clone(), dy.dilated.clone()), w).unwrap();
        let lhs = extend_by_zero(&f, &dx, &dy).unwrap().inner(&g);
        let rhs = f.inner(&restrict(&g, &dx, &dy).unwrap());
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
        // restriction undoes extension exactly
        let round = restrict(&extend_by_zero(&f, &dx, &dy).unwrap(), &dx, &dy).unwrap();
        prop_assert_eq!(round.values, f.values);
    }

    #[test]
    fn mollify_mass_identity(
        w in values(10, 0.0, 2.0),
        delta in 0.01f64..0.5,
    ) {
        let g = Grid1d::new(0.0, 1.0, 10).unwrap();
        let mu = DiscreteMeasure::new(g, w).unwrap();
        let (dg, f) = mollify_shift(&mu, delta).unwrap();
        prop_assert!((f.integrate() - (mu.total_mass + delta)).abs() <= 1e-10);
        let floor = delta / dg.dilated.measure();
        prop_assert!(f.values.iter().all(|v| *v >= floor - 1e-14));
    }

    #[test]
    fn zero_mean_shift_preserves_plan(
        a1 in values(5, -3.0, 3.0),
        a2 in values(6, -3.0, 3.0),
        cv in values(30, 0.0, 2.0),
        gamma in 0.2f64..4.0,
    ) {
        let g1 = Grid1d::new(0.0, 1.0, 5).unwrap();
        let g2 = Grid1d::new(0.0, 1.0, 6).unwrap();
        let cost = Field2d::new(Grid2d::new(g1.clone(), g2.clone()), cv).unwrap();
        let duals = DualPotentials {
            alpha1: Field1d::new(g1, a1).unwrap(),
            alpha2: Field1d::new(g2, a2).unwrap(),
            zero_mean: false,
        };
        let normalized = normalize_zero_mean(&duals);
        prop_assert!(normalized.alpha2.integrate().abs() <= 1e-12);
        let before = plan_from_duals(&duals, &cost, gamma).unwrap();
        let after = plan_from_duals(&normalized, &cost, gamma).unwrap();
        for (x, y) in before.values.iter().zip(&after.values) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn simplex_projection_is_sound(raw in values(9, -2.0, 2.0)) {
        let w = project_to_simplex(&raw);
        prop_assert!(w.iter().all(|v| *v >= 0.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        // idempotent
        let again = project_to_simplex(&w);
        for (a, b) in w.iter().zip(&again) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        // projection never moves a feasible point further than the input
        let dist: f64 = w.iter().zip(&raw).map(|(a, b)| (a - b) * (a - b)).sum();
        let uniform_dist: f64 = raw.iter().map(|b| (1.0 / 9.0 - b) * (1.0 / 9.0 - b)).sum();
        prop_assert!(dist <= uniform_dist + 1e-12);
    }
}
