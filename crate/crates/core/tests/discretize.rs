use nlsred_core::constrained::{solve_constrained, Constraints, SolveOptions};
use nlsred_core::discretize::{
    apply_operator, inner, norm, Discretization, Field, Grid, InnerKind, LinearOperator, OperatorKind, ShiftedLaplacian,
};
use proptest::prelude::*;

fn soliton(x: &[f64]) -> f64 {
    2f64.sqrt() / x[0].cosh()
}

fn soliton_dx(x: &[f64]) -> f64 {
    -2f64.sqrt() * x[0].tanh() / x[0].cosh()
}

fn gaussian(x: &[f64]) -> f64 {
    (-x.iter().map(|t| t * t).sum::<f64>()).exp()
}

/// Sup error of `−Δ_h` on `exp(−|x|²)` against `(2n − 4|x|²) exp(−|x|²)`.
fn laplacian_error(n: usize, m: usize) -> f64 {
    let g = Grid::symmetric(n, 4.0, m, 2).unwrap();
    let u = Field::from_fn(g, |x| Ok(gaussian(x))).unwrap();
    let lu = apply_operator(OperatorKind::Laplacian, &u).unwrap();
    let mut err: f64 = 0.0;
    for (idx, v) in lu.values.iter().enumerate() {
        let x = &g.point(idx)[..n];
        let r2: f64 = x.iter().map(|t| t * t).sum();
        err = err.max((v - (2.0 * n as f64 - 4.0 * r2) * gaussian(x)).abs());
    }
    err
}

#[test]
fn second_order_stencil_converges_at_rate_four() {
    for (n, m) in [(1, 41), (2, 41)] {
        let coarse = laplacian_error(n, m);
        let fine = laplacian_error(n, 2 * m - 1);
        let ratio = coarse / fine;
        assert!((ratio - 4.0).abs() < 0.4, "n={n}: ratio {ratio}");
    }
}

#[test]
fn laplacian_annihilates_constants_and_is_exact_on_quadratics() {
    let g = Grid::symmetric(2, 3.0, 31, 4).unwrap();
    // Dirichlet truncation only touches the layer next to the boundary
    let deep = |idx: usize| {
        let mi = g.multi_index(idx);
        (0..2).all(|i| mi[i] > 2 && mi[i] + 2 < g.m - 1)
    };
    let c = Field::from_fn(g, |_| Ok(3.5)).unwrap();
    let q = Field::from_fn(g, |x| Ok(x[0] * x[0])).unwrap();
    let lc = apply_operator(OperatorKind::Laplacian, &c).unwrap();
    let lq = apply_operator(OperatorKind::Laplacian, &q).unwrap();
    for idx in (0..g.len()).filter(|&i| deep(i)) {
        assert!(lc.values[idx].abs() < 1e-12);
        assert!((lq.values[idx] + 2.0).abs() < 1e-10);
    }
}

#[test]
fn linearization_at_the_soliton() {
    // −ΔU + U − pU^p = (1 − p)U^p pointwise, up to the stencil error
    let err = |m: usize| {
        let g = Grid::symmetric(1, 15.0, m, 2).unwrap();
        let u = Field::from_fn(g, |x| Ok(soliton(x))).unwrap();
        let zero = Field::zeros(g);
        let one = Field::from_fn(g, |_| Ok(1.0)).unwrap();
        let kind = OperatorKind::Schrodinger {
            v: &zero,
            k: &one,
            z: &u,
            p: 3.0,
        };
        let lu = apply_operator(kind, &u).unwrap();
        lu.values
            .iter()
            .zip(&u.values)
            .map(|(a, b)| (a + 2.0 * b.powi(3)).abs())
            .fold(0.0, f64::max)
    };
    let (e1, e2) = (err(301), err(601));
    assert!(e1 < 2e-2, "sup error {e1:e}");
    assert!((e1 / e2 - 4.0).abs() < 0.4, "ratio {}", e1 / e2);
}

#[test]
fn operators_refuse_mixed_grids() {
    let a = Grid::symmetric(1, 5.0, 41, 2).unwrap();
    let b = Grid::symmetric(1, 5.0, 51, 2).unwrap();
    let (fa, fb) = (Field::zeros(a), Field::zeros(b));
    assert!(inner(&fa, &fb, InnerKind::L2).is_err());
    let kind = OperatorKind::Schrodinger {
        v: &fb,
        k: &fb,
        z: &fb,
        p: 3.0,
    };
    assert!(apply_operator(kind, &fa).is_err());
    assert!(Grid::symmetric(1, 5.0, 10, 2).is_err());
}

#[test]
fn soliton_is_orthogonal_to_its_derivative() {
    let g = Grid::symmetric(1, 20.0, 801, 8).unwrap();
    let u = Field::from_fn(g, |x| Ok(soliton(x))).unwrap();
    let du = Field::from_fn(g, |x| Ok(soliton_dx(x))).unwrap();
    assert!(inner(&u, &du, InnerKind::L2).unwrap().abs() < 1e-14);
    assert!(inner(&u, &du, InnerKind::W12).unwrap().abs() < 1e-13);
}

#[test]
fn nehari_defect_vanishes_at_second_order() {
    // ‖U‖² − ∫U⁴ at h, h/2, h/4; the extrapolated value is the continuum one
    let defect = |m: usize| {
        let g = Grid::symmetric(1, 20.0, m, 2).unwrap();
        let u = Field::from_fn(g, |x| Ok(soliton(x))).unwrap();
        let u3 = Field::from_fn(g, |x| Ok(soliton(x).powi(3))).unwrap();
        inner(&u, &u, InnerKind::W12).unwrap() - inner(&u3, &u, InnerKind::L2).unwrap()
    };
    let d: Vec<f64> = [201, 401, 801].iter().map(|&m| defect(m)).collect();
    let rate = (d[0] / d[1], d[1] / d[2]);
    assert!((rate.0 - 4.0).abs() < 0.2 && (rate.1 - 4.0).abs() < 0.2, "{d:?}");
    let extrapolated = (4.0 * d[2] - d[1]) / 3.0;
    assert!(extrapolated.abs() < 1e-2 * d[2].abs(), "{d:?}");
}

fn linearization(g: Grid) -> (Discretization, ShiftedLaplacian, Field, Field) {
    let u = Field::from_fn(g, |x| Ok(soliton(x))).unwrap();
    let du = Field::from_fn(g, |x| Ok(soliton_dx(x))).unwrap();
    let zero = Field::zeros(g);
    let one = Field::from_fn(g, |_| Ok(1.0)).unwrap();
    let l = ShiftedLaplacian::schrodinger(&zero, &one, &u, 3.0).unwrap();
    (Discretization::new(g).unwrap(), l, u, du)
}

fn pseudo_random(len: usize, seed: u64) -> Vec<f64> {
    let mut state = seed;
    (0..len)
        .map(|_| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
        .collect()
}

#[test]
fn constrained_solve_stays_orthogonal_and_is_reproducible() {
    let g = Grid::symmetric(1, 16.0, 401, 4).unwrap();
    let (disc, l, u, du) = linearization(g);
    let cons = Constraints::w12(&disc, &[&u.values, &du.values]).unwrap();
    let rhs = pseudo_random(g.len(), 7);
    let opts = SolveOptions::default();
    let sol = solve_constrained(&l, disc.riesz.as_ref(), &cons, &rhs, opts).unwrap();
    let v = Field::from_values(g, sol.v.clone()).unwrap();
    let nv = norm(&v, InnerKind::W12);
    for c in [&u, &du] {
        let cos = inner(&v, c, InnerKind::W12).unwrap() / (nv * norm(c, InnerKind::W12));
        assert!(cos.abs() < 1e-10, "cosine {cos:e}");
    }
    // L v − b lies in the span of A u, A u′
    let mut lv = vec![0.0; g.len()];
    l.apply(&sol.v, &mut lv);
    let mut r: Vec<f64> = lv.iter().zip(&rhs).map(|(a, b)| a - b).collect();
    cons.project_dual(&mut r);
    let rn = disc.dual_norm(&r) / disc.dual_norm(&rhs);
    assert!(rn < 1e-9, "projected residual {rn:e}");
    let again = solve_constrained(&l, disc.riesz.as_ref(), &cons, &rhs, opts).unwrap();
    assert_eq!(sol.v, again.v);
}

#[test]
fn right_side_in_the_constraint_span_gives_zero() {
    let g = Grid::symmetric(1, 16.0, 201, 2).unwrap();
    let (disc, _, u, du) = linearization(g);
    let cons = Constraints::w12(&disc, &[&u.values, &du.values]).unwrap();
    let rhs: Vec<f64> = cons.c[0].iter().zip(&cons.c[1]).map(|(a, b)| 2.0 * a - b).collect();
    let sol = solve_constrained(&disc.gram(), disc.riesz.as_ref(), &cons, &rhs, SolveOptions::default()).unwrap();
    assert!(sol.v.iter().all(|x| x.abs() < 1e-12));
}

#[test]
fn dependent_constraints_are_singular() {
    let g = Grid::symmetric(1, 16.0, 201, 2).unwrap();
    let (disc, _, u, _) = linearization(g);
    let twice: Vec<f64> = u.values.iter().map(|x| 2.0 * x).collect();
    assert!(Constraints::w12(&disc, &[&u.values, &twice]).is_err());
}

fn grid_strategy() -> impl Strategy<Value = Grid> {
    (1usize..=2, prop::sample::select(vec![2usize, 4, 6, 8]), 16usize..28, 1.0f64..6.0)
        .prop_map(|(n, order, m, r)| Grid::symmetric(n, r, m, order).unwrap())
}

fn fields() -> impl Strategy<Value = (Field, Field, Field)> {
    grid_strategy().prop_flat_map(|g| {
        let v = prop::collection::vec(-1.0f64..1.0, g.len());
        (v.clone(), v.clone(), v).prop_map(move |(a, b, c)| {
            (
                Field::from_values(g, a).unwrap(),
                Field::from_values(g, b).unwrap(),
                Field::from_values(g, c).unwrap(),
            )
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn inner_products_are_symmetric_bilinear((a, b, c) in fields(), s in -3.0f64..3.0) {
        for kind in [InnerKind::L2, InnerKind::W12] {
            let ab = inner(&a, &b, kind).unwrap();
            let ba = inner(&b, &a, kind).unwrap();
            let scale = norm(&a, kind) * norm(&b, kind) + 1e-300;
            prop_assert!((ab - ba).abs() <= 1e-12 * scale);
            let mix = Field::from_values(a.grid, a.values.iter().zip(&c.values).map(|(x, y)| s * x + y).collect()).unwrap();
            let lhs = inner(&mix, &b, kind).unwrap();
            let rhs = s * ab + inner(&c, &b, kind).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-11 * (norm(&mix, kind) * norm(&b, kind) + scale));
        }
    }

    #[test]
    fn cauchy_schwarz((a, b, _) in fields()) {
        for kind in [InnerKind::L2, InnerKind::W12] {
            let ab = inner(&a, &b, kind).unwrap().abs();
            prop_assert!(ab <= norm(&a, kind) * norm(&b, kind) * (1.0 + 1e-12));
            prop_assert!(inner(&a, &a, kind).unwrap() > 0.0);
        }
    }

    #[test]
    fn riesz_map_inverts_the_gram_matrix((a, _, _) in fields()) {
        let disc = Discretization::new(a.grid).unwrap();
        let back = disc.apply_gram(&disc.riesz_solve(&a.values));
        let err = back.iter().zip(&a.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        prop_assert!(err < 1e-11, "err {err:e}");
    }
}
