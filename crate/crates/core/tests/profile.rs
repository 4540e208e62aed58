use nlsred_core::profile::{RadialProfile, ShootingOptions};
use proptest::prelude::*;

// Heights and C0 from tools/oracles/ground_state.py (DOP853, rtol 1e-13).
const U0_N2_P3: f64 = 2.206200864651;
const U0_N3_P3: f64 = 4.337387679977;
const C0_N2_P3: f64 = 23.4017930491;
const C0_N3_P3: f64 = 75.5890052102;
const U0_N2_P2: f64 = 2.391956403224;

fn check_invariants(u: &RadialProfile) {
    let u0 = u.peak();
    assert_eq!(u.du_samples[0], 0.0);
    assert!(u.du_samples.last().unwrap().abs() < 1e-8 * u0);
    assert!(*u.u_samples.last().unwrap() < 1e-10 * u0 * 1.01);
    for w in u.u_samples.windows(2) {
        assert!(w[0] > w[1] && w[1] > 0.0);
    }
    let res = u.ode_residual();
    assert!(res < 1e-6 * u0, "ODE residual {res:e}");
}

#[test]
fn shooting_matches_closed_form_in_one_dimension() {
    let opts = ShootingOptions { step: 0.01, ..Default::default() };
    let shot = RadialProfile::shoot(1, 3.0, opts).unwrap();
    let exact = |x: f64| 2f64.sqrt() / x.cosh();
    let mut err: f64 = 0.0;
    for k in 0..=4000 {
        let x = -20.0 + 0.01 * k as f64;
        err = err.max((shot.eval(x) - exact(x)).abs());
    }
    assert!(err < 1e-8, "sup error {err:e}");
}

#[test]
fn closed_form_satisfies_the_ode() {
    for p in [2.0, 3.0, 5.0] {
        let u = RadialProfile::ground_state(1, p).unwrap();
        assert!(u.is_closed_form());
        assert!(u.ode_residual() < 1e-12 * u.peak());
        check_invariants(&u);
    }
}

#[test]
fn heights_agree_with_oracle() {
    for (n, p, want) in [(2, 3.0, U0_N2_P3), (3, 3.0, U0_N3_P3), (2, 2.0, U0_N2_P2)] {
        let u = RadialProfile::ground_state(n, p).unwrap();
        assert!(((u.peak() - want) / want).abs() < 1e-8, "n={n} p={p}: {}", u.peak());
        check_invariants(&u);
    }
}

#[test]
fn constants_agree_with_oracle_and_nehari() {
    for (n, want) in [(2, C0_N2_P3), (3, C0_N3_P3)] {
        let c = RadialProfile::ground_state(n, 3.0).unwrap().constants().unwrap();
        assert!(((c.c0 - want) / want).abs() < 1e-7, "n={n}: C0 {}", c.c0);
        assert!(((c.h1sq - c.c0) / c.c0).abs() < 1e-6);
        assert!(c.c1 < 0.5 * c.c0);
    }
}

#[test]
fn step_refinement_changes_height_little() {
    let coarse = RadialProfile::shoot(3, 3.0, ShootingOptions { step: 0.01, ..Default::default() }).unwrap();
    let fine = RadialProfile::shoot(3, 3.0, ShootingOptions { step: 0.005, ..Default::default() }).unwrap();
    assert!(((coarse.peak() - fine.peak()) / fine.peak()).abs() < 1e-7);
}

#[test]
fn half_height_radius_of_sech() {
    // sech(r) = 1/2 at r = acosh 2
    let u = RadialProfile::ground_state(1, 3.0).unwrap();
    assert!((u.half_height_radius() - 2f64.acosh()).abs() < 1e-12);
}

#[test]
fn from_samples_round_trip() {
    let u = RadialProfile::ground_state(2, 3.0).unwrap();
    let v = RadialProfile::from_samples(2, 3.0, u.r_samples.clone(), u.u_samples.clone(), u.du_samples.clone(), u.decay_rate)
        .unwrap();
    for r in [0.0, 0.37, 3.3, 15.0, u.r_max + 2.0] {
        assert_eq!(u.eval(r), v.eval(r));
    }
    assert!(RadialProfile::from_samples(2, 3.0, vec![0.0, 0.1], vec![1.0, 0.9], vec![0.0, -0.1], 1.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn closed_form_constants_satisfy_nehari(p in 1.3f64..6.0) {
        let u = RadialProfile::ground_state(1, p).unwrap();
        let c = u.constants().unwrap();
        prop_assert!(((c.h1sq - c.c0) / c.c0).abs() < 1e-6);
        prop_assert!((c.c1 - c.c0 * (0.5 - 1.0 / (p + 1.0))).abs() < 1e-12 * c.c0);
    }

    #[test]
    fn planar_profiles_are_positive_and_decreasing(p in 1.6f64..5.0) {
        let u = RadialProfile::ground_state(2, p).unwrap();
        check_invariants(&u);
    }
}
