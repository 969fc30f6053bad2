use proptest::prelude::*;
use randprod::linalg::{self, audit_identities, DualPoint, Matrix, ProjectivePoint, Tolerances};

fn matrix2() -> impl Strategy<Value = Matrix> {
    prop::array::uniform4(-3.0f64..3.0)
        .prop_filter("well conditioned", |a| {
            (a[0] * a[3] - a[1] * a[2]).abs() > 1e-3
        })
        .prop_map(|a| Matrix::new(2, a.to_vec()).unwrap())
}

fn direction() -> impl Strategy<Value = ProjectivePoint> {
    (0.0f64..std::f64::consts::PI).prop_map(ProjectivePoint::from_angle)
}

fn functional() -> impl Strategy<Value = DualPoint> {
    (0.0f64..std::f64::consts::PI).prop_map(DualPoint::from_angle)
}

proptest! {
    #[test]
    fn cocycle_law(g1 in matrix2(), g2 in matrix2(), x in direction()) {
        let lhs = linalg::cocycle(&g1.mul(&g2), &x);
        let rhs = linalg::cocycle(&g1, &linalg::act(&g2, &x)) + linalg::cocycle(&g2, &x);
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
    }

    #[test]
    fn coefficient_splits_into_cocycle_and_delta(g in matrix2(), x in direction(), y in functional()) {
        let d = linalg::delta(&linalg::act(&g, &x), &y);
        prop_assume!(d > 1e-8);
        let coeff = linalg::coefficient_log(&g, x.direction(), y.functional()).unwrap();
        let split = linalg::cocycle(&g, &x) + d.ln();
        prop_assert!((coeff - split).abs() <= 1e-9 * (1.0 + coeff.abs()));
    }

    #[test]
    fn delta_is_one_lipschitz_in_the_angle(x in direction(), x2 in direction(), y in functional()) {
        let gap = (linalg::delta(&x, &y) - linalg::delta(&x2, &y)).abs();
        prop_assert!(gap <= linalg::angular_distance(&x, &x2) + 1e-12);
    }

    #[test]
    fn cocycle_sits_between_conorm_and_norm(g in matrix2(), x in direction()) {
        let svd = g.svd();
        let sigma = linalg::cocycle(&g, &x);
        let top = svd.singular_values[0].ln();
        let bottom = svd.singular_values[1].ln();
        prop_assert!(sigma <= top + 1e-12 && sigma >= bottom - 1e-12);
    }
}

#[test]
fn identity_audit_on_many_instances() {
    let tol = Tolerances::default();
    for dim in [2, 3, 4] {
        let audit = audit_identities(100_000, dim, 11 + dim as u64).unwrap();
        assert!(audit.passes(&tol), "{audit:?}");
    }
}
