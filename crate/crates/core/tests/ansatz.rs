use nlsred_core::ansatz::{build, energy, residual_norm, scaling, window, AnsatzContext, EnergyMode, Resolution};
use nlsred_core::discretize::{inner, Discretization, Field, InnerKind};
use nlsred_core::scenario::Scenario;
use proptest::prelude::*;

const DOUBLE_WELL: &str = "0.3*(x1^2-1)^2*exp(-x1^2/4)";

fn setup(s: &Scenario, eps: f64, xi: &[f64]) -> (AnsatzContext, Discretization) {
    let ctx = AnsatzContext::new(s, eps, xi).unwrap();
    let grid = window(&s.profile, xi, ctx.b, Resolution::default_for(s.n)).unwrap();
    (ctx, Discretization::new(grid).unwrap())
}

#[test]
fn scaling_examples() {
    let close = |(a, b): (f64, f64), (x, y): (f64, f64)| (a - x).abs() < 1e-14 && (b - y).abs() < 1e-14;
    assert!(close(scaling(0.0, 1.0, 2.5).unwrap(), (1.0, 1.0)));
    assert!(close(scaling(3.0, 1.0, 3.0).unwrap(), (2.0, 2.0)));
    assert!(close(scaling(0.21, 1.1, 2.0).unwrap(), (1.1, 1.1)));
    assert!(scaling(-1.0, 1.0, 3.0).is_err());
    assert!(scaling(0.0, 0.0, 3.0).is_err());
}

proptest! {
    #[test]
    fn scaling_solves_the_frozen_equation(v in -0.9f64..5.0, k in 0.05f64..5.0, p in 1.1f64..6.0) {
        let (a, b) = scaling(v, k, p).unwrap();
        prop_assert!((a.powf(p - 1.0) * k - (1.0 + v)).abs() <= 1e-12 * (1.0 + v));
        prop_assert!((b * b - (1.0 + v)).abs() <= 1e-12 * (1.0 + v));
    }

    #[test]
    fn ansatz_is_orthogonal_to_its_tangents(xi in -30.0f64..30.0, c in 0.0f64..2.0) {
        let s = Scenario::new(1, 3.0, &format!("{c}*exp(-x1^2)"), "1").unwrap();
        let (ctx, disc) = setup(&s, 0.05, &[xi]);
        let ans = build(&ctx, &s.profile, disc.grid).unwrap();
        let t = &ans.tangents[0];
        let cos = inner(&ans.z, t, InnerKind::L2).unwrap()
            / (inner(&ans.z, &ans.z, InnerKind::L2).unwrap() * inner(t, t, InnerKind::L2).unwrap()).sqrt();
        // the window is centred on a node, not on ξ, so parity holds only up
        // to the tail level
        prop_assert!(cos.abs() < 1e-9, "cos {cos:e}");
    }
}

#[test]
fn unperturbed_ansatz_is_the_ground_state() {
    let s = Scenario::new(1, 3.0, "0", "1").unwrap();
    let (ctx, disc) = setup(&s, 0.1, &[0.0]);
    let ans = build(&ctx, &s.profile, disc.grid).unwrap();
    let (idx, x) = ans.z.argmax();
    assert!(x[0].abs() < 1e-15);
    assert!((ans.z.values[idx] - 2f64.sqrt()).abs() < 1e-12);
    let len = ans.z.values.len();
    for i in 0..len {
        assert!((ans.z.values[i] - ans.z.values[len - 1 - i]).abs() < 1e-13);
    }
}

#[test]
fn deeper_potential_doubles_height_and_halves_width() {
    let s = Scenario::new(1, 3.0, "3", "1").unwrap();
    let (ctx, disc) = setup(&s, 0.1, &[0.0]);
    assert_eq!((ctx.a, ctx.b), (2.0, 2.0));
    let ans = build(&ctx, &s.profile, disc.grid).unwrap();
    assert!((ans.z.max() - 2.0 * 2f64.sqrt()).abs() < 1e-12);
    // half height of sech(2x) at acosh(2)/2
    let r = 2f64.acosh() / 2.0;
    let half = 2f64.sqrt() / (2.0 * r).cosh() * 2.0;
    assert!((half - 2f64.sqrt()).abs() < 1e-12);
}

#[test]
fn small_window_is_refused() {
    let s = Scenario::new(1, 3.0, "0", "1").unwrap();
    let ctx = AnsatzContext::new(&s, 0.1, &[0.0]).unwrap();
    let grid = nlsred_core::discretize::Grid::window(1, &[0.0], 5.0, 0.04, 8).unwrap();
    assert!(build(&ctx, &s.profile, grid).is_err());
    let coarse = nlsred_core::discretize::Grid::window(1, &[0.0], 30.0, 0.6, 2).unwrap();
    assert!(build(&ctx, &s.profile, coarse).is_err());
}

#[test]
fn energies_of_the_ground_state() {
    let c1 = 4.0 / 3.0;
    let s = Scenario::new(1, 3.0, "0", "1").unwrap();
    let (ctx, disc) = setup(&s, 0.1, &[3.0]);
    let z = build(&ctx, &s.profile, disc.grid).unwrap().z;
    for mode in [EnergyMode::Full, EnergyMode::Frozen] {
        assert!((energy(&z, mode, &s, &ctx, &disc).unwrap() - c1).abs() < 1e-9);
        assert_eq!(energy(&Field::zeros(disc.grid), mode, &s, &ctx, &disc).unwrap(), 0.0);
    }
    assert!(residual_norm(&ctx, &s, &disc).unwrap() < 1e-8);
}

#[test]
fn constant_potential_makes_frozen_and_full_equal() {
    let s = Scenario::new(2, 3.0, "0.4", "1.5").unwrap();
    let (ctx, disc) = setup(&s, 0.1, &[1.0, -2.0]);
    let z = build(&ctx, &s.profile, disc.grid).unwrap().z;
    let full = energy(&z, EnergyMode::Full, &s, &ctx, &disc).unwrap();
    let frozen = energy(&z, EnergyMode::Frozen, &s, &ctx, &disc).unwrap();
    assert!((full - frozen).abs() < 1e-13 * full.abs());
}

#[test]
fn frozen_energy_is_stationary_in_amplitude() {
    let s = Scenario::new(1, 3.0, DOUBLE_WELL, "1+0.2*x1^2").unwrap();
    let (ctx, disc) = setup(&s, 0.1, &[4.0]);
    let z = build(&ctx, &s.profile, disc.grid).unwrap().z;
    let at = |t: f64| {
        let u = Field::from_values(z.grid, z.values.iter().map(|v| t * v).collect()).unwrap();
        energy(&u, EnergyMode::Frozen, &s, &ctx, &disc).unwrap()
    };
    let d = 1e-4;
    let slope = (at(1.0 + d) - at(1.0 - d)) / (2.0 * d);
    assert!(slope.abs() < 1e-7 * at(1.0), "d/ds F = {slope:e}");
}

#[test]
fn residual_rates_in_epsilon() {
    let s = Scenario::new(1, 3.0, DOUBLE_WELL, "1").unwrap();
    let rates = |x0: f64| {
        let r: Vec<f64> = [0.2, 0.1, 0.05, 0.025]
            .iter()
            .map(|&e| {
                let (ctx, disc) = setup(&s, e, &[x0 / e]);
                residual_norm(&ctx, &s, &disc).unwrap()
            })
            .collect();
        r.windows(2).map(|w| (w[0] / w[1]).log2()).collect::<Vec<_>>()
    };
    // the wells; at the hump 0 the ε³ terms still show between 0.2 and 0.1
    for rate in rates(-1.0).into_iter().chain(rates(1.0)) {
        assert!((rate - 2.0).abs() < 0.15, "critical rate {rate}");
    }
    assert!(rates(0.0).iter().skip(1).all(|r| (r - 2.0).abs() < 0.15));
    for rate in rates(1.5).into_iter().chain(rates(-0.2)) {
        assert!((rate - 1.0).abs() < 0.15, "generic rate {rate}");
    }
}

#[test]
fn xi_derivative_is_minus_x_derivative_to_first_order() {
    // ‖∂_ξ z_ξ + ∂_x z_ξ‖ / (ε|∇V(εξ)|) should not move when ε halves
    let s = Scenario::new(1, 3.0, DOUBLE_WELL, "1").unwrap();
    let x0 = 0.5;
    let grad_v = s.v.eval_with_derivatives(&[x0]).unwrap().gradient[0].abs();
    let ratio = |e: f64| {
        let xi = x0 / e;
        let (ctx, disc) = setup(&s, e, &[xi]);
        let ans = build(&ctx, &s.profile, disc.grid).unwrap();
        let d = 1e-4;
        let zp = build(&ctx.moved(&s, &[xi + d]).unwrap(), &s.profile, disc.grid).unwrap().z;
        let zm = build(&ctx.moved(&s, &[xi - d]).unwrap(), &s.profile, disc.grid).unwrap().z;
        let diff: Vec<f64> = (0..zp.values.len())
            .map(|i| (zp.values[i] - zm.values[i]) / (2.0 * d) - ans.tangents[0].values[i])
            .collect();
        let f = Field::from_values(disc.grid, diff).unwrap();
        nlsred_core::discretize::norm(&f, InnerKind::W12) / (e * grad_v)
    };
    let (a, b) = (ratio(0.1), ratio(0.05));
    assert!(a > 0.0 && (a / b - 1.0).abs() < 0.1, "{a} vs {b}");
}
