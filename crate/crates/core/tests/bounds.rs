use dolr_core::kernels::{delta_n, eta_radius, noise_floor_bound, picard_delta, stability_bound_m};
use proptest::prelude::*;

proptest! {
    #[test]
    fn eta_solves_its_quadratic(rho in 1e-3f64..1e3, gamma in 1e-3f64..1e3) {
        let eta = eta_radius(rho, gamma).unwrap();
        prop_assert!(eta > 0.0);
        let lhs = eta * eta + 2.0 * rho * eta;
        let rhs = 1.0 / (2.0 * gamma);
        prop_assert!((lhs - rhs).abs() <= 1e-13 * rhs);
    }

    #[test]
    fn eta_decreases_in_both_arguments(rho in 1e-2f64..1e2, gamma in 1e-2f64..1e2, f in 1.0001f64..10.0) {
        let e = eta_radius(rho, gamma).unwrap();
        prop_assert!(eta_radius(rho * f, gamma).unwrap() < e);
        prop_assert!(eta_radius(rho, gamma * f).unwrap() < e);
    }

    #[test]
    fn picard_window_is_a_short_positive_time(r in 1usize..6, d in 1usize..20, rho in 0.1f64..10.0, gamma in 0.1f64..10.0, c in 0.1f64..10.0) {
        let delta = picard_delta(r, rho, gamma, d.max(r), c).unwrap();
        prop_assert!(delta > 0.0 && delta <= 1.0);
    }

    #[test]
    fn delta_n_does_not_grow_with_n(r in 1usize..4, e in 0.1f64..10.0, g in 0.1f64..10.0, n in 0u32..50) {
        let a = delta_n(n, r, 4, e, g, 1.0).unwrap();
        let b = delta_n(n + 1, r, 4, e, g, 1.0).unwrap();
        prop_assert!(b <= a);
    }

    #[test]
    fn m_grows_with_time(t in 0.0f64..3.0, e in 0.0f64..5.0, c in 0.01f64..2.0) {
        let a = stability_bound_m(t, e, c).unwrap();
        let b = stability_bound_m(t + 0.1, e, c).unwrap();
        prop_assert!(a >= 3.0 * e && b > a);
    }
}

#[test]
fn m_at_zero_is_three_times_the_initial_moment() {
    assert_eq!(stability_bound_m(0.0, 2.0, 1.0).unwrap(), 6.0);
}

#[test]
fn noise_floor_takes_the_smaller_term() {
    // sigma_b^2 / (4 C (1 + M)) = 1 / (4 * 1 * 2)
    assert_eq!(noise_floor_bound(1.0, 1.0, 1.0, 1.0).unwrap(), 0.125);
    assert_eq!(noise_floor_bound(1.0, 1.0, 1.0, 0.1).unwrap(), 0.1);
}

#[test]
fn noise_floor_with_overflowed_m_is_zero() {
    assert_eq!(
        noise_floor_bound(1.0, 1.0, f64::INFINITY, 0.5).unwrap(),
        0.0
    );
    assert!(noise_floor_bound(1.0, 1.0, f64::NAN, 0.5).is_err());
    assert!(noise_floor_bound(1.0, 1.0, -1.0, 0.5).is_err());
}

#[test]
fn noise_floor_requires_a_floor() {
    assert!(noise_floor_bound(0.0, 1.0, 1.0, 0.5).is_err());
}

#[test]
fn bound_inputs_are_checked() {
    assert!(eta_radius(0.0, 1.0).is_err());
    assert!(eta_radius(1.0, f64::NAN).is_err());
    assert!(picard_delta(0, 1.0, 1.0, 2, 1.0).is_err());
}
