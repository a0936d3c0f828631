use homlab::pressure_law::{check_entropy_lower_bound, Order, PressureLaw};
use proptest::prelude::*;

proptest! {
    #[test]
    fn potential_identity(gamma in 2.0f64..6.0, a in 0.1f64..5.0, s in 0.0f64..10.0) {
        let law = PressureLaw::new(gamma, a).unwrap();
        let lhs = s * law.dh(s) - law.h(s);
        prop_assert!((lhs - law.p(s)).abs() <= 1e-12 * law.p(s).max(1.0));
        prop_assert!(law.h(1.0).abs() <= 1e-15);
    }

    #[test]
    fn quadratic_entropy_for_gamma_two(a in 0.1f64..5.0, s in 0.0f64..10.0, r in 0.01f64..10.0) {
        let law = PressureLaw::new(2.0, a).unwrap();
        let exact = a * (s - r) * (s - r);
        let got = law.relative_entropy(s, r).unwrap();
        prop_assert!((got - exact).abs() <= 1e-13 * exact.max(1.0), "{got} vs {exact}");
    }

    #[test]
    fn relative_entropy_is_nonnegative_and_vanishes_on_the_diagonal(
        gamma in 1.1f64..6.0, s in 0.0f64..10.0, r in 0.01f64..10.0,
    ) {
        let law = PressureLaw::exploratory(gamma, 1.0).unwrap();
        let h = law.relative_entropy(s, r).unwrap();
        prop_assert!(h >= -1e-12 * law.h(s).abs().max(1.0));
        prop_assert!(law.relative_entropy(r, r).unwrap().abs() <= 1e-12 * law.h(r).abs().max(1.0));
    }

    #[test]
    fn inverse_undoes_pressure(gamma in 2.0f64..6.0, a in 0.1f64..5.0, s in 0.0f64..10.0) {
        let law = PressureLaw::new(gamma, a).unwrap();
        let back = law.inverse(law.p(s)).unwrap();
        prop_assert!((back - s).abs() <= 1e-12 * s.max(1.0));
    }

    #[test]
    fn derivative_matches_central_difference(gamma in 2.0f64..6.0, s in 0.5f64..5.0) {
        let law = PressureLaw::new(gamma, 1.0).unwrap();
        let d = 1e-5;
        let fd = (law.p(s + d) - law.p(s - d)) / (2.0 * d);
        prop_assert!((fd - law.dp(s)).abs() <= 1e-6 * law.dp(s).max(1.0));
        let second = law.pressure(s, Order::Second).unwrap();
        let fd2 = (law.dp(s + d) - law.dp(s - d)) / (2.0 * d);
        prop_assert!((fd2 - second).abs() <= 1e-5 * second.abs().max(1.0));
    }
}

#[test]
fn theorem_exponents_are_gated() {
    assert!(PressureLaw::new(1.4, 1.0).is_err());
    let law = PressureLaw::exploratory(1.4, 1.0).unwrap();
    assert!(!law.within_theorem());
    assert!(PressureLaw::new(2.0, 1.0).unwrap().within_theorem());
    assert!(PressureLaw::exploratory(1.0, 1.0).is_err());
    assert!(PressureLaw::exploratory(2.0, 0.0).is_err());
}

#[test]
fn entropy_bound_constant_is_positive_for_admissible_laws() {
    for gamma in [2.0, 3.0, 5.0] {
        let law = PressureLaw::new(gamma, 1.0).unwrap();
        let b = check_entropy_lower_bound(&law, (0.5, 2.0), 10.0, 10_000).unwrap();
        assert!(b.constant > 0.0, "gamma {gamma}: {}", b.constant);
    }
}
