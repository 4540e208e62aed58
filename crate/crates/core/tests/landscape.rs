use nlsred_core::expr::ScalarFieldExpr;
use nlsred_core::landscape::{
    build_block, find_critical_points, flow_count, predict_multiplicity, sublevel_sandwich, trace_critical_curve,
    AuxiliaryFunction, CriticalKind, FlowOptions, Landscape, MultiplicityMode, ReducedLandscape, Region, Topology,
};
use nlsred_core::reduction::{Reducer, ReductionOptions};
use nlsred_core::scenario::Scenario;
use nlsred_core::Result;
use proptest::prelude::*;

const DOUBLE_WELL: &str = "0.3*(x1^2-1)^2*exp(-x1^2/4)";
const RING: &str = "0.5*(x1^2+x2^2-1)^2*exp(-(x1^2+x2^2)/4)";

/// `V` itself as a landscape, to compare its critical set with that of `A`.
struct Potential(ScalarFieldExpr);

impl Landscape for Potential {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn value(&self, x: &[f64]) -> Result<f64> {
        self.0.eval(x)
    }
    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.0.eval_with_derivatives(x)?.gradient)
    }
    fn hessian(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.0.eval_with_derivatives(x)?.hessian)
    }
    fn critical_tol(&self, _: &[f64]) -> f64 {
        1e-10
    }
}

fn double_well() -> Scenario {
    Scenario::new(1, 3.0, DOUBLE_WELL, "1").unwrap()
}

#[test]
fn auxiliary_examples() {
    let flat = AuxiliaryFunction::new(&Scenario::new(2, 3.0, "0", "1").unwrap());
    let a = flat.eval(&[0.3, -1.2]).unwrap();
    assert_eq!(a.value, 1.0);
    assert!(a.gradient.iter().all(|g| *g == 0.0));
    let linear = AuxiliaryFunction::new(&Scenario::new(1, 3.0, "x1", "1").unwrap());
    assert!((linear.gradient(&[0.0]).unwrap()[0] - 1.5).abs() < 1e-14);
    let h = 1e-5;
    let fd = (linear.value(&[h]).unwrap() - linear.value(&[-h]).unwrap()) / (2.0 * h);
    assert!((fd - 1.5).abs() < 1e-9);
}

proptest! {
    #[test]
    fn aux_gradient_is_a_multiple_of_grad_v(x in -2.0f64..2.0, y in -2.0f64..2.0) {
        let s = Scenario::new(2, 3.0, RING, "1").unwrap();
        let aux = AuxiliaryFunction::new(&s);
        let theta = s.theta();
        let d = s.v.eval_with_derivatives(&[x, y]).unwrap();
        let a = aux.eval(&[x, y]).unwrap();
        for i in 0..2 {
            let want = theta * (1.0 + d.value).powf(theta - 1.0) * d.gradient[i];
            prop_assert!((a.gradient[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn aux_derivatives_match_finite_differences(x in -2.0f64..2.0, y in -2.0f64..2.0) {
        let s = Scenario::new(2, 2.5, "0.4*sin(x1)*cos(x2)", "1+0.5*exp(-x1^2-x2^2)").unwrap();
        let aux = AuxiliaryFunction::new(&s);
        let a = aux.eval(&[x, y]).unwrap();
        let h = 1e-5;
        for i in 0..2 {
            let mut p = [x, y];
            let mut m = [x, y];
            p[i] += h;
            m[i] -= h;
            let fd = (aux.value(&p).unwrap() - aux.value(&m).unwrap()) / (2.0 * h);
            prop_assert!((fd - a.gradient[i]).abs() < 1e-8);
            let (gp, gm) = (aux.gradient(&p).unwrap(), aux.gradient(&m).unwrap());
            for j in 0..2 {
                let fd2 = (gp[j] - gm[j]) / (2.0 * h);
                prop_assert!((fd2 - a.hessian[i * 2 + j]).abs() < 1e-7);
            }
        }
        prop_assert!(a.value > 0.0);
    }
}

#[test]
fn double_well_critical_points_match_a_sign_scan() {
    let s = double_well();
    let aux = AuxiliaryFunction::new(&s);
    // oracle: sign changes of A′ on a 1e-4 grid
    let mut scan = Vec::new();
    let mut prev = aux.gradient(&[-1.5]).unwrap()[0];
    for k in 1..=30000 {
        let x = -1.5 + 1e-4 * k as f64;
        let g = aux.gradient(&[x]).unwrap()[0];
        if g * prev < 0.0 {
            scan.push(x - 0.5e-4);
        }
        if g != 0.0 {
            prev = g;
        }
    }
    let found = find_critical_points(&aux, &Region::cube(1, 1.5).unwrap(), 41).unwrap();
    assert!(!found.degenerate_landscape);
    assert_eq!(found.points.len(), 3);
    assert_eq!(scan.len(), 3, "{scan:?}");
    for (p, x) in found.points.iter().zip(&scan) {
        assert!((p.x[0] - x).abs() <= 1e-4, "{:?} vs {x}", p.x);
        assert!(p.grad_norm < 1e-8);
    }
    let kinds: Vec<CriticalKind> = found.points.iter().map(|p| p.kind).collect();
    assert_eq!(kinds, vec![CriticalKind::Min, CriticalKind::Max, CriticalKind::Min]);
}

#[test]
fn critical_sets_of_a_and_v_coincide() {
    for (v, n) in [(DOUBLE_WELL, 1), ("0.2*sin(2*x1)*cos(x2)", 2)] {
        let s = Scenario::new(n, 3.0, v, "1").unwrap();
        let region = Region::cube(n, 1.5).unwrap();
        let budget = if n == 1 { 41 } else { 144 };
        let a = find_critical_points(&AuxiliaryFunction::new(&s), &region, budget).unwrap();
        let b = find_critical_points(&Potential(s.v.clone()), &region, budget).unwrap();
        assert_eq!(a.points.len(), b.points.len());
        for p in &a.points {
            let nearest = b
                .points
                .iter()
                .map(|q| p.x.iter().zip(&q.x).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt())
                .fold(f64::INFINITY, f64::min);
            assert!(nearest < 1e-6, "{:?}", p.x);
        }
    }
}

#[test]
fn constant_a_is_a_degenerate_landscape() {
    let s = Scenario::new(1, 3.0, "0.7", "2").unwrap();
    let aux = AuxiliaryFunction::new(&s);
    let found = find_critical_points(&aux, &Region::cube(1, 1.0).unwrap(), 11).unwrap();
    assert!(found.degenerate_landscape);
    let block = build_block(&[vec![0.0]], &aux, None, 0.1, 0.2).unwrap();
    assert!(block.is_degenerate());
    let r = Reducer::new(&s, 0.1, 1.0, ReductionOptions::default_for(1)).unwrap();
    let report = flow_count(&block, &ReducedLandscape::new(&r), 1, FlowOptions::default()).unwrap();
    assert!(report.degenerate && !report.pass);
}

#[test]
fn ring_has_a_circle_and_a_maximum() {
    let s = Scenario::new(2, 3.0, RING, "1").unwrap();
    let aux = AuxiliaryFunction::new(&s);
    let region = Region::cube(2, 1.6).unwrap();
    let found = find_critical_points(&aux, &region, 144).unwrap();
    let origin: Vec<_> = found.points.iter().filter(|p| p.x.iter().all(|v| v.abs() < 1e-8)).collect();
    assert_eq!(origin.len(), 1);
    assert_eq!(origin[0].kind, CriticalKind::Max);
    let on_circle: Vec<_> = found.points.iter().filter(|p| p.kind == CriticalKind::Degenerate).collect();
    assert!(on_circle.len() >= 8);
    for p in &on_circle {
        let r = p.x.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((r - 1.0).abs() < 1e-6, "r = {r}");
    }
    let curve = trace_critical_curve(&aux, &on_circle[0].x, &region, 0.064).unwrap();
    assert!(curve.closed);
    assert!(curve.points.iter().all(|x| (x.iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0).abs() < 1e-6));
}

#[test]
fn blocks_of_the_double_well() {
    let aux = AuxiliaryFunction::new(&double_well());
    let min = build_block(&[vec![-1.0]], &aux, None, 0.05, 0.4).unwrap();
    assert_eq!((min.k1, min.k2), (0, 1));
    let max = build_block(&[vec![0.0]], &aux, None, 0.05, 0.4).unwrap();
    assert_eq!((max.k1, max.k2), (1, 0));
    for b in [&min, &max] {
        assert!(b.min_margin >= 0.1);
        assert!(b.faces.iter().all(|f| f.margin >= 0.1));
    }
    assert!(max.contains(&[0.1]) && !max.contains(&[0.9]));
}

#[test]
fn annulus_block_of_the_ring() {
    let s = Scenario::new(2, 3.0, RING, "1").unwrap();
    let aux = AuxiliaryFunction::new(&s);
    let samples: Vec<Vec<f64>> = (0..12)
        .map(|j| {
            let t = std::f64::consts::PI * j as f64 / 6.0;
            vec![t.cos(), t.sin()]
        })
        .collect();
    let block = build_block(&samples, &aux, None, 0.05, 0.32).unwrap();
    assert_eq!((block.k1, block.k2), (0, 1));
    assert!(block.min_margin >= 0.1);
    assert!(block.contains(&[0.0, 1.05]) && !block.contains(&[0.0, 0.3]));
}

#[test]
fn flow_finds_one_critical_point_per_well_block() {
    let s = double_well();
    let aux = AuxiliaryFunction::new(&s);
    let mut distance_over_eps = Vec::new();
    for eps in [0.1, 0.05] {
        let r = Reducer::new(&s, eps, 1.0, ReductionOptions::default_for(1)).unwrap();
        let reduced = ReducedLandscape::new(&r);
        let mut total = 0;
        for x in [-1.0, 0.0, 1.0] {
            let block = build_block(&[vec![x]], &aux, Some(&reduced), eps, 0.4).unwrap();
            let report = flow_count(&block, &reduced, 1, FlowOptions::default()).unwrap();
            assert!(report.pass && report.escapes == 0, "{report:?}");
            assert_eq!(report.critical_points.len(), 1);
            total += report.critical_points.len();
            let d = (report.critical_points[0].x[0] * eps - x).abs();
            distance_over_eps.push((x, eps, d / eps));
        }
        assert_eq!(total, 3);
    }
    // distance to the critical point of A is O(ε): d/ε does not grow
    for x in [-1.0, 0.0, 1.0] {
        let c: Vec<f64> = distance_over_eps.iter().filter(|t| t.0 == x).map(|t| t.2).collect();
        assert!(c[1] <= 2.0 * c[0] + 1e-6, "{distance_over_eps:?}");
    }
}

#[test]
fn multiplicity_table() {
    let p = |t: &str| predict_multiplicity(&Topology::parse(t).unwrap(), MultiplicityMode::CupLength).unwrap();
    assert_eq!(p("point"), 1);
    assert_eq!(p("circle"), 2);
    assert_eq!(p("sphere(2)"), 2);
    assert_eq!(p("torus(2)"), 3);
    assert_eq!(p("circle x circle"), 3);
    assert_eq!(
        predict_multiplicity(&Topology::Circle, MultiplicityMode::Category).unwrap(),
        2
    );
    for bad in ["klein", "sphere(0)", "torus()", ""] {
        assert!(Topology::parse(bad).is_err(), "{bad}");
    }
}

#[test]
fn sandwich_on_the_double_well() {
    let s = double_well();
    let x = [vec![-1.0], vec![1.0]];
    let r = Reducer::new(&s, 0.05, 1.0, ReductionOptions::default_for(1)).unwrap();
    let rep = sublevel_sandwich(&x, 0.3, &r, false, 13).unwrap();
    assert!(rep.inner_holds && rep.avoids_boundary, "{rep:?}");
    assert!(rep.y_points > 0 && rep.y_points <= rep.mesh_points);
    // a hump is not a sublevel set: the boundary lies below its centre
    assert!(sublevel_sandwich(&[vec![0.0]], 0.3, &r, false, 5).is_err());
    assert!(sublevel_sandwich(&x, 0.0, &r, false, 5).is_err());
}

#[test]
fn sandwich_reports_a_large_epsilon() {
    let s = double_well();
    let r = Reducer::new(&s, 0.5, 1.0, ReductionOptions::default_for(1)).unwrap();
    let rep = sublevel_sandwich(&[vec![-1.0], vec![1.0]], 0.3, &r, false, 5).unwrap();
    // either outcome is legitimate; the margins must be reported either way
    assert_eq!(rep.inner_holds, rep.inner_margin >= 0.0);
    assert_eq!(rep.avoids_boundary, rep.boundary_margin > 0.0);
}

#[test]
fn sandwich_around_the_ring_maximum() {
    let s = Scenario::new(2, 3.0, RING, "1").unwrap();
    let r = Reducer::new(&s, 0.05, 1.0, ReductionOptions::default_for(2)).unwrap();
    let rep = sublevel_sandwich(&[vec![0.0, 0.0]], 0.3, &r, true, 3).unwrap();
    assert!(rep.inner_holds && rep.avoids_boundary, "{rep:?}");
    assert!(rep.a > rep.b);
}
