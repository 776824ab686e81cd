use proptest::prelude::*;
use roboss::loss::{LossSpec, Supremum};

fn roboss_params() -> impl Strategy<Value = (f64, f64)> {
    (0.05f64..20.0, 0.05f64..5.0)
}

fn any_loss() -> impl Strategy<Value = LossSpec> {
    prop_oneof![
        Just(LossSpec::ZeroOne),
        Just(LossSpec::Hinge),
        (0.0f64..=1.0).prop_map(|tau| LossSpec::Pinball { tau }),
        (1.0f64..5.0).prop_map(|delta| LossSpec::TruncatedHinge { delta }),
        (0.0f64..=1.0, 0.1f64..3.0, 0.1f64..3.0).prop_map(|(tau, delta1, delta2)| {
            LossSpec::TruncatedPinball { tau, delta1, delta2 }
        }),
        roboss_params().prop_map(|(a, lambda)| LossSpec::roboss(a, lambda)),
    ]
}

fn penalizes_correct_side(loss: &LossSpec) -> bool {
    matches!(loss, LossSpec::Pinball { tau } | LossSpec::TruncatedPinball { tau, .. } if *tau > 0.0)
}

proptest! {
    #[test]
    fn nonnegative_and_sparse(loss in any_loss(), u in -50.0f64..50.0) {
        let v = loss.value(u).unwrap();
        prop_assert!(v >= 0.0);
        if u <= 0.0 && !penalizes_correct_side(&loss) {
            prop_assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn roboss_bounded_by_lambda((a, lambda) in roboss_params(), u in -1e3f64..1e3) {
        let v = LossSpec::roboss(a, lambda).value(u).unwrap();
        prop_assert!((0.0..=lambda).contains(&v));
    }

    #[test]
    fn roboss_derivative_matches_central_difference((a, lambda) in roboss_params(), u in -2.0f64..6.0) {
        let l = LossSpec::roboss(a, lambda);
        let h = 1e-6;
        let fd = (l.value(u + h).unwrap() - l.value(u - h).unwrap()) / (2.0 * h);
        // second derivative is bounded by lambda a^2, so the central
        // difference error is O(lambda a^3 h^2) away from the origin
        let tol = 1e-6 * (1.0 + lambda * a * a);
        prop_assert!((l.derivative(u).unwrap() - fd).abs() <= tol);
    }

    #[test]
    fn roboss_monotone_in_u((a, lambda) in roboss_params(), u in 0.0f64..20.0, du in 0.0f64..5.0) {
        let l = LossSpec::roboss(a, lambda);
        prop_assert!(l.value(u + du).unwrap() >= l.value(u).unwrap());
    }
}

#[test]
fn pinball_without_slope_is_hinge() {
    let pin = LossSpec::Pinball { tau: 0.0 };
    for k in 0..1000 {
        let u = -5.0 + 10.0 * k as f64 / 999.0;
        assert_eq!(pin.value(u).unwrap(), LossSpec::Hinge.value(u).unwrap());
    }
}

#[test]
fn roboss_not_convex() {
    let l = LossSpec::roboss(5.0, 1.0);
    let mid = l.value(2.0).unwrap();
    let chord = 0.5 * (l.value(0.0).unwrap() + l.value(4.0).unwrap());
    assert!(mid > chord);
}

#[test]
fn approaches_zero_one_pointwise() {
    for &u in &[0.1, 0.5, 1.0, 2.0] {
        for &a in &[1.0, 5.0, 20.0, 100.0] {
            let v = LossSpec::roboss(a, 1.0).value(u).unwrap();
            let au: f64 = a * u;
            // plus one ulp of 1.0 for the final rounding of v
            assert!((v - 1.0).abs() <= (au + 1.0) * (-au).exp() + f64::EPSILON);
        }
    }
    assert!((LossSpec::roboss(100.0, 1.0).value(0.5).unwrap() - 1.0).abs() <= 1e-10);
}

#[test]
fn supremum_reached_at_large_u() {
    let l = LossSpec::roboss(1.0, 1.5);
    let mut last = 0.0;
    for k in 0..=200 {
        let v = l.value(-10.0 + 0.1 * k as f64).unwrap();
        assert!(v >= last);
        last = v;
    }
    assert!(last > 1.5 * 0.999);
    assert_eq!(l.supremum().unwrap(), Supremum::Finite(1.5));
    assert_eq!(LossSpec::Hinge.supremum().unwrap(), Supremum::Unbounded);
}

#[test]
fn characteristics_table() {
    let rows = [
        (LossSpec::Hinge, [false, true, false, true, false]),
        (LossSpec::Pinball { tau: 0.5 }, [false, false, false, true, false]),
        (LossSpec::TruncatedHinge { delta: 1.0 }, [true, true, true, false, false]),
        (
            LossSpec::TruncatedPinball { tau: 0.5, delta1: 1.0, delta2: 0.5 },
            [true, false, true, false, false],
        ),
        (LossSpec::roboss(1.0, 1.0), [true, true, true, false, true]),
    ];
    for (loss, [robust, sparse, bounded, convex, smooth]) in rows {
        let c = loss.characteristics();
        assert_eq!(
            (c.robust, c.sparse, c.bounded, c.convex, c.smooth),
            (robust, sparse, bounded, convex, smooth),
            "{loss:?}"
        );
    }
}
