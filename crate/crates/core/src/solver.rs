//! Full nonlinear solves of `−Δu + u + V(εx)u = K(εx)u₊^p` on a lattice
//! window, seeded from the corrected ansatz; continuation in ε; concentration
//! diagnostics; and the end-to-end multiplicity experiment.
//!
//! Solutions decay like `e^{−b|x|}`, so a window that holds the ansatz to the
//! tail level also holds the solution. Windows of different solutions live on
//! the same lattice and are compared node by node.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use num_traits::Float;

use crate::constrained::{lanczos, solve_constrained, Constraints, EigenOptions, SolveOptions, Target};
use crate::discretize::{Discretization, Field, Grid, MAX_DIM};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::landscape::{
    build_block, find_critical_points, flow_count, mirror_points, predict_multiplicity, trace_critical_curve,
    AuxiliaryFunction, CriticalKind, CriticalPoint, FlowOptions, Landscape, MultiplicityMode, ReducedLandscape, Region,
    Topology,
};
use crate::problem::DiscreteProblem;
use crate::reduction::{Reducer, ReductionOptions};
use crate::scenario::Scenario;
use crate::symmetry::SymmetryGroup;

/// Values below `−POSITIVITY · max u` make a solution non-positive.
pub const POSITIVITY: f64 = 1e-10;
/// Accepted band for `width · b / r_half`.
pub const WIDTH_BAND: (f64, f64) = (0.8, 1.25);
/// Largest admissible share of `∫u²` outside the radius `5/b`.
pub const MASS_OUTSIDE: f64 = 1e-3;
/// Largest admissible distance between `ε·peak` and a critical point of `A`.
pub const CONCENTRATION_RADIUS: f64 = 0.1;
/// Relative `L²` distance below which two solutions are the same.
pub const DEDUP: f64 = 1e-3;

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Converged when `‖∇f̃_ε(u)‖ < tol · ‖u‖` in `W^{1,2}`.
    pub tol: f64,
    pub max_iter: usize,
    /// Step halvings tried before the iteration is declared divergent.
    pub max_halvings: usize,
    pub linear: SolveOptions,
    pub eigen: EigenOptions,
    /// Eigenvalues of the linearization that are computed.
    pub morse_count: usize,
    /// Eigenvalues below `−zero_tol` count as negative directions.
    pub zero_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 50,
            max_halvings: 12,
            linear: SolveOptions {
                tol: 1e-10,
                max_iter: 4000,
                refinements: 3,
            },
            eigen: EigenOptions::default(),
            morse_count: 6,
            zero_tol: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolutionRecord {
    pub u: Field,
    pub epsilon: f64,
    /// Where the initial guess peaked, in the stretched variable.
    pub seed_xi: Vec<f64>,
    pub peak_location: Vec<f64>,
    pub peak_value: f64,
    /// Half-height radius, averaged over the coordinate directions.
    pub width: f64,
    pub residual_norm: f64,
    /// `‖u‖` in `W^{1,2}`.
    pub norm: f64,
    pub negative_directions: usize,
    /// The smallest eigenvalues of the linearization, ascending.
    pub eigenvalues: Vec<f64>,
    pub positive: bool,
    /// `f̃_ε(u)`.
    pub energy: f64,
    pub iterations: usize,
}

fn shift_node(grid: &Grid, idx: usize, axis: usize, delta: i64) -> Option<usize> {
    let mut mi = grid.multi_index(idx);
    let j = mi[axis] as i64 + delta;
    if j < 1 || j > grid.k() as i64 {
        return None;
    }
    mi[axis] = j as usize;
    Some(grid.linear_index(&mi[..grid.n]))
}

/// Vertex of the parabola through the maximum and its two neighbours along
/// every axis.
fn refined_peak(u: &Field) -> (Vec<f64>, f64) {
    let g = &u.grid;
    let (idx, x) = u.argmax();
    let f0 = u.values[idx];
    let mut loc: Vec<f64> = x[..g.n].to_vec();
    let mut value = f0;
    for (axis, l) in loc.iter_mut().enumerate() {
        let (Some(a), Some(b)) = (shift_node(g, idx, axis, -1), shift_node(g, idx, axis, 1)) else {
            continue;
        };
        let (fm, fp) = (u.values[a], u.values[b]);
        let curv = fm - 2.0 * f0 + fp;
        if curv < 0.0 {
            let t = (0.5 * (fm - fp) / curv).clamp(-0.5, 0.5);
            *l += t * g.h;
            value += 0.125 * (fm - fp) * (fm - fp) / -curv;
        }
    }
    (loc, value)
}

/// Mean distance from the peak to the half-height crossings along the
/// coordinate directions through the maximal node.
fn half_height_width(u: &Field, peak: &[f64], peak_value: f64) -> f64 {
    let g = &u.grid;
    let (idx, x) = u.argmax();
    let half = 0.5 * peak_value;
    let mut total = 0.0;
    for axis in 0..g.n {
        for dir in [-1i64, 1] {
            let mut prev = u.values[idx];
            let mut found = None;
            for j in 1.. {
                let Some(node) = shift_node(g, idx, axis, dir * j) else {
                    break;
                };
                let v = u.values[node];
                if v < half {
                    let t = (prev - half) / (prev - v);
                    let pos = x[axis] + dir as f64 * (j as f64 - 1.0 + t) * g.h;
                    found = Some((pos - peak[axis]).abs());
                    break;
                }
                prev = v;
            }
            match found {
                Some(d) => total += d,
                None => return f64::NAN,
            }
        }
    }
    total / (2 * g.n) as f64
}

/// Damped Newton on `−Δ_h u + u + V(εx)u − K(εx)u₊^p = 0` from `initial`,
/// followed by the positivity check and the Morse count.
pub fn newton_solve(initial: &Field, epsilon: f64, scenario: &Scenario, opts: &SolverOptions) -> Result<SolutionRecord> {
    let grid = initial.grid;
    if grid.n != scenario.n {
        return Err(Error::GridMismatch(format!("grid in ℝ^{}, problem in ℝ^{}", grid.n, scenario.n)));
    }
    let top = initial.max();
    if initial.min() < -1e-8 * top.max(0.0) {
        return Err(Error::Invalid(format!("initial guess has min {:.3e} < 0", initial.min())));
    }
    if top > 0.0 && initial.boundary_max() > 1e-6 * top {
        return Err(Error::GridTooSmall(format!(
            "initial guess is {:.3e} on the boundary",
            initial.boundary_max()
        )));
    }
    let seed_xi = if top > 0.0 {
        refined_peak(initial).0
    } else {
        grid.center()[..grid.n].to_vec()
    };
    let disc = Discretization::new(grid)?;
    let prob = DiscreteProblem::new(scenario, epsilon, disc)?;
    let riesz = prob.disc.riesz.clone();
    let mut u = initial.values.clone();
    let mut g = prob.gradient(&u);
    let mut res = prob.disc.dual_norm(&g);
    let mut iterations = 0;
    loop {
        if res == 0.0 || res < opts.tol * prob.norm(&u) {
            break;
        }
        if iterations == opts.max_iter {
            return Err(Error::Divergence(format!(
                "residual {res:.3e} after {iterations} iterations"
            )));
        }
        let jac = prob.jacobian(&u);
        let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
        let step = solve_constrained(&jac, riesz.as_ref(), &Constraints::none(), &rhs, opts.linear)?.v;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            let trial: Vec<f64> = u.iter().zip(&step).map(|(a, b)| a + lambda * b).collect();
            let gt = prob.gradient(&trial);
            let rt = prob.disc.dual_norm(&gt);
            if rt.is_finite() && rt < (1.0 - 1e-4 * lambda) * res {
                u = trial;
                g = gt;
                res = rt;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(Error::Divergence(format!(
                "no decrease after {} step halvings at residual {res:.3e}",
                opts.max_halvings
            )));
        }
        iterations += 1;
    }
    let norm = prob.norm(&u);
    if norm < 1e-6 {
        return Err(Error::TrivialSolution);
    }
    let u = Field::from_values(grid, u)?;
    let min = u.min();
    let positive = min >= -POSITIVITY * u.max();
    if !positive {
        return Err(Error::NotPositive { min });
    }
    let (peak_location, peak_value) = refined_peak(&u);
    let width = half_height_width(&u, &peak_location, peak_value);
    let jac = prob.jacobian(&u.values);
    let ritz = lanczos(
        &jac,
        riesz.as_ref(),
        &Constraints::none(),
        Target::Smallest(opts.morse_count),
        opts.eigen,
    )?;
    let negative_directions = ritz.values.iter().filter(|v| **v < -opts.zero_tol).count();
    Ok(SolutionRecord {
        energy: prob.energy(&u.values),
        u,
        epsilon,
        seed_xi,
        peak_location,
        peak_value,
        width,
        residual_norm: res,
        norm,
        negative_directions,
        eigenvalues: ritz.values,
        positive,
        iterations,
    })
}

/// `‖a − b‖_{L²}` for fields on windows of one lattice; each field is zero
/// outside its window.
pub fn l2_distance(a: &Field, b: &Field) -> Result<f64> {
    let (ga, gb) = (&a.grid, &b.grid);
    if ga.n != gb.n || ga.h != gb.h {
        return Err(Error::GridMismatch(format!("{ga:?} vs {gb:?}")));
    }
    let mut offset = [0i64; MAX_DIM];
    for i in 0..ga.n {
        let d = (ga.lo[i] - gb.lo[i]) / ga.h;
        if (d - d.round()).abs() > 1e-6 {
            return Err(Error::GridMismatch(format!("windows are not on one lattice: {ga:?} vs {gb:?}")));
        }
        offset[i] = d.round() as i64;
    }
    let kb = gb.k() as i64;
    let mut cross = 0.0;
    for (idx, va) in a.values.iter().enumerate() {
        let mi = ga.multi_index(idx);
        let mut node = [0usize; MAX_DIM];
        let mut inside = true;
        for i in 0..ga.n {
            let j = mi[i] as i64 + offset[i];
            if j < 1 || j > kb {
                inside = false;
                break;
            }
            node[i] = j as usize;
        }
        if inside {
            cross += va * b.values[gb.linear_index(&node[..ga.n])];
        }
    }
    let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    let d2 = sq(&a.values) + sq(&b.values) - 2.0 * cross;
    Ok((ga.cell() * d2.max(0.0)).sqrt())
}

pub fn l2_norm(u: &Field) -> f64 {
    (u.grid.cell() * u.values.iter().map(|x| x * x).sum::<f64>()).sqrt()
}

/// The same values on the window moved by the lattice vector closest to
/// `to − from`.
pub fn recenter(u: &Field, from: &[f64], to: &[f64]) -> Result<Field> {
    let mut grid = u.grid;
    for i in 0..grid.n {
        let shift = ((to[i] - from[i]) / grid.h).round();
        grid.lo[i] = ((grid.lo[i] / grid.h).round() + shift) * grid.h;
    }
    Field::from_values(grid, u.values.clone())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationBreak {
    /// Last ε with a converged solution.
    pub reached: f64,
    /// The schedule entry that could not be reached.
    pub target: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Continuation {
    /// One record per reached schedule entry, starting with the seed.
    pub records: Vec<SolutionRecord>,
    pub stopped: Option<ContinuationBreak>,
}

/// Re-solve along a decreasing ε schedule, starting each step from the
/// previous solution moved so that its rescaled peak `ε·peak` is kept. A
/// failed step is bisected up to three times.
pub fn continuation_solve(
    seed: &SolutionRecord,
    schedule: &[f64],
    scenario: &Scenario,
    opts: &SolverOptions,
) -> Result<Continuation> {
    let Some(&first) = schedule.first() else {
        return Err(Error::Schedule { needed: 1, found: 0 });
    };
    if (first - seed.epsilon).abs() > 1e-12 * seed.epsilon {
        return Err(Error::Invalid(format!(
            "schedule starts at ε = {first}, the seed was solved at ε = {}",
            seed.epsilon
        )));
    }
    if schedule.windows(2).any(|w| !(w[1] < w[0] && w[1] > 0.0)) {
        return Err(Error::Invalid("the ε schedule must be positive and decreasing".into()));
    }
    let step = |prev: &SolutionRecord, eps: f64| -> Result<SolutionRecord> {
        let target: Vec<f64> = prev.peak_location.iter().map(|x| x * prev.epsilon / eps).collect();
        let initial = recenter(&prev.u, &prev.peak_location, &target)?;
        newton_solve(&initial, eps, scenario, opts)
    };
    let mut records = vec![seed.clone()];
    for &goal in &schedule[1..] {
        let mut current = records.last().cloned().expect("the seed is always present");
        let mut eps = goal;
        let mut bisections = 0;
        loop {
            match step(&current, eps) {
                Ok(rec) => {
                    current = rec;
                    if eps == goal {
                        break;
                    }
                    eps = goal;
                }
                Err(e) => {
                    if bisections == 3 {
                        return Ok(Continuation {
                            stopped: Some(ContinuationBreak {
                                reached: records.last().map_or(first, |r| r.epsilon),
                                target: goal,
                                reason: e.to_string(),
                            }),
                            records,
                        });
                    }
                    bisections += 1;
                    eps = 0.5 * (current.epsilon + eps);
                }
            }
        }
        records.push(current);
    }
    Ok(Continuation { records, stopped: None })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsReport {
    /// `ε · peak_location`.
    pub rescaled_peak: Vec<f64>,
    pub nearest_critical: Option<Vec<f64>>,
    pub distance: Option<f64>,
    /// `width · b(ε·peak) / r_half(U)`.
    pub width_ratio: f64,
    /// Share of `∫u²` farther than `5/b` from the peak.
    pub mass_outside: f64,
    /// `A` is constant, so the concentration point is arbitrary.
    pub degenerate_landscape: bool,
    pub pass: bool,
}

/// How well a solution looks like a spike at a critical point of `A`.
pub fn concentration_diagnostics(
    record: &SolutionRecord,
    scenario: &Scenario,
    critical_points: &[Vec<f64>],
    degenerate_landscape: bool,
) -> Result<DiagnosticsReport> {
    let eps = record.epsilon;
    let rescaled_peak: Vec<f64> = record.peak_location.iter().map(|x| x * eps).collect();
    let b = (1.0 + scenario.v_at(&rescaled_peak)?).sqrt();
    let width_ratio = record.width * b / scenario.profile.half_height_radius();
    let g = &record.u.grid;
    let r_out = 5.0 / b;
    let (mut total, mut outside) = (0.0, 0.0);
    for (idx, v) in record.u.values.iter().enumerate() {
        let x = g.point(idx);
        let r2: f64 = (0..g.n).map(|i| (x[i] - record.peak_location[i]).powi(2)).sum();
        total += v * v;
        if r2 > r_out * r_out {
            outside += v * v;
        }
    }
    let mass_outside = outside / total;
    let nearest = critical_points
        .iter()
        .map(|c| {
            let d = c.iter().zip(&rescaled_peak).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            (c.clone(), d)
        })
        .min_by(|a, b| a.1.total_cmp(&b.1));
    let located = degenerate_landscape || nearest.as_ref().is_some_and(|(_, d)| *d <= CONCENTRATION_RADIUS);
    Ok(DiagnosticsReport {
        pass: located
            && width_ratio >= WIDTH_BAND.0
            && width_ratio <= WIDTH_BAND.1
            && mass_outside < MASS_OUTSIDE,
        rescaled_peak,
        distance: nearest.as_ref().map(|n| n.1),
        nearest_critical: nearest.map(|n| n.0),
        width_ratio,
        mass_outside,
        degenerate_landscape,
    })
}

#[derive(Debug, Clone)]
pub struct ExperimentSetup {
    /// The hypothesis box in physical coordinates.
    pub region: Region,
    /// Declared topology of the critical manifolds, checked against traces.
    pub topology: Option<Topology>,
    pub mode: MultiplicityMode,
    /// Lattice seeds for the critical points of `A`.
    pub search_budget: usize,
    /// First radius tried for the isolating blocks.
    pub block_radius: f64,
    /// Predictor step when tracing critical curves of `A`.
    pub trace_step: f64,
    pub reduction: ReductionOptions,
    pub solver: SolverOptions,
    pub flow: FlowOptions,
}

impl ExperimentSetup {
    pub fn new(region: Region) -> Self {
        let n = region.dim();
        let size = region.size();
        Self {
            topology: None,
            mode: MultiplicityMode::CupLength,
            search_budget: [41, 144, 343][n.clamp(1, 3) - 1],
            block_radius: 0.1 * size,
            trace_step: 0.02 * size,
            reduction: ReductionOptions::default_for(n),
            solver: SolverOptions::default(),
            // the descent flow costs hundreds of reduced evaluations per seed
            // and only pays off in one dimension
            flow: FlowOptions {
                descend: n == 1,
                ..FlowOptions::default()
            },
            region,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ComponentShape {
    Isolated(CriticalKind),
    Curve { closed: bool, samples: usize },
}

/// A connected piece of the critical set of `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub shape: ComponentShape,
    pub topology: Topology,
    /// Block centres: the point itself, or points of a curve.
    pub seeds: Vec<Vec<f64>>,
    /// Each seed stands for its orbit under the symmetry group.
    pub symmetry_reduced: bool,
    /// Negative eigenvalues of `∇²A` at the seeds.
    pub index: usize,
    /// All samples, for distances.
    pub samples: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub name: String,
    pub ok: bool,
    pub message: String,
}

impl Stage {
    fn ok(name: &str, message: String) -> Self {
        Self {
            name: name.into(),
            ok: true,
            message,
        }
    }

    fn failed(name: &str, message: String) -> Self {
        Self {
            name: name.into(),
            ok: false,
            message,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockSummary {
    pub seed: Vec<f64>,
    pub radius: f64,
    pub min_margin: f64,
    pub escapes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentReport {
    pub component: Component,
    pub predicted: usize,
    pub blocks: Vec<BlockSummary>,
    /// Critical points of `Φ_ε`, in ξ.
    pub reduced_critical_points: Vec<CriticalPoint>,
    /// Distinct solutions attributed to this component.
    pub solutions: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSolution {
    pub component: usize,
    pub xi: Vec<f64>,
    /// `Φ_ε(ξ)` at the reduced critical point.
    pub phi: f64,
    pub record: SolutionRecord,
    pub diagnostics: DiagnosticsReport,
    /// `|f̃_ε(u) − Φ_ε(ξ)|`.
    pub energy_gap: f64,
    /// `1 +` the index of the critical point of `A`.
    pub expected_negative: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub epsilon: f64,
    pub critical_points: Vec<CriticalPoint>,
    pub degenerate_landscape: bool,
    /// Order of the symmetry group of `V` and `K`.
    pub symmetry_order: usize,
    pub components: Vec<ComponentReport>,
    pub solutions: Vec<ExperimentSolution>,
    pub duplicates: usize,
    pub predicted: usize,
    pub found: usize,
    pub pass: bool,
    pub stages: Vec<Stage>,
}

fn negative_count(f: &dyn Landscape, x: &[f64]) -> Result<usize> {
    let n = f.dim();
    let (vals, _) = crate::linalg::sym_eigen(&f.hessian(x)?, n);
    let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(vals.iter().filter(|v| **v < -crate::landscape::DEGENERACY * scale).count())
}

/// Groups the critical points of `A` into isolated points and traced curves.
fn components(
    aux: &AuxiliaryFunction,
    points: &[CriticalPoint],
    setup: &ExperimentSetup,
    group: &SymmetryGroup,
    stages: &mut Vec<Stage>,
) -> Vec<Component> {
    let size = setup.region.size();
    let mut out: Vec<Component> = Vec::new();
    let mut curves: Vec<crate::landscape::CriticalCurve> = Vec::new();
    for cp in points {
        if cp.kind != CriticalKind::Degenerate {
            out.push(Component {
                shape: ComponentShape::Isolated(cp.kind),
                topology: Topology::Point,
                seeds: vec![cp.x.clone()],
                symmetry_reduced: false,
                index: cp.hessian_eigs.iter().filter(|v| **v < 0.0).count(),
                samples: vec![cp.x.clone()],
            });
            continue;
        }
        if curves.iter().any(|c| c.distance(&cp.x) < 2.0 * setup.trace_step) {
            continue;
        }
        let curve = match trace_critical_curve(aux, &cp.x, &setup.region, setup.trace_step) {
            Ok(c) => c,
            Err(e) => {
                stages.push(Stage::failed("trace", format!("at {:?}: {e}", cp.x)));
                continue;
            }
        };
        let mirrors = match mirror_points(aux, &curve, group) {
            Ok(m) => m,
            Err(e) => {
                stages.push(Stage::failed("mirrors", e.to_string()));
                Vec::new()
            }
        };
        let (seeds, symmetry_reduced) = if mirrors.is_empty() {
            let stride = curve.points.len().div_ceil(8).max(1);
            (curve.points.iter().step_by(stride).cloned().collect::<Vec<_>>(), false)
        } else {
            let reps = group.representatives(&mirrors, 1e-6 * size);
            (reps.into_iter().map(|i| mirrors[i].clone()).collect(), true)
        };
        let index = negative_count(aux, &seeds[0]).unwrap_or(0);
        out.push(Component {
            shape: ComponentShape::Curve {
                closed: curve.closed,
                samples: curve.points.len(),
            },
            topology: if curve.closed { Topology::Circle } else { Topology::Point },
            seeds,
            symmetry_reduced,
            index,
            samples: curve.points.clone(),
        });
        curves.push(curve);
    }
    out
}

/// Smallest `sqrt(1 + V)` on a lattice of the region.
/// It is the narrowest ansatz width and fixes the window radius.
pub fn width_floor(scenario: &Scenario, region: &Region) -> Result<f64> {
    let mut lo = f64::INFINITY;
    for x in region.lattice(41usize.pow(region.dim() as u32)) {
        lo = lo.min(1.0 + scenario.v_at(&x)?);
    }
    if !(lo > 0.0) {
        return Err(Error::Hypothesis(format!("inf (1 + V) = {lo} on the region")));
    }
    Ok(lo.sqrt())
}

struct SeedOutcome {
    block: BlockSummary,
    critical: Vec<CriticalPoint>,
}

/// Critical points of `A` → components → blocks and reduced critical points
/// → full solves → deduplicated count against the predicted lower bound.
pub fn multiplicity_experiment(
    scenario: &Scenario,
    epsilon: f64,
    setup: &ExperimentSetup,
    exec: &impl Executor,
) -> Result<ExperimentReport> {
    if setup.region.dim() != scenario.n {
        return Err(Error::Invalid(format!(
            "region in ℝ^{}, scenario in ℝ^{}",
            setup.region.dim(),
            scenario.n
        )));
    }
    let mut stages = Vec::new();
    let aux = AuxiliaryFunction::new(scenario);
    let search = find_critical_points(&aux, &setup.region, setup.search_budget)?;
    let group = SymmetryGroup::of_scenario(scenario, &setup.region)?;
    let mut report = ExperimentReport {
        epsilon,
        critical_points: search.points.clone(),
        degenerate_landscape: search.degenerate_landscape,
        symmetry_order: group.elements.len(),
        components: Vec::new(),
        solutions: Vec::new(),
        duplicates: 0,
        predicted: 0,
        found: 0,
        pass: false,
        stages: Vec::new(),
    };
    if search.degenerate_landscape {
        stages.push(Stage::failed(
            "critical points",
            "degenerate landscape: A is constant, every point is critical".into(),
        ));
        report.stages = stages;
        return Ok(report);
    }
    if search.points.is_empty() {
        stages.push(Stage::failed("critical points", "A has no critical point in the region".into()));
        report.stages = stages;
        return Ok(report);
    }
    stages.push(Stage::ok(
        "critical points",
        format!("{} from {} seeds", search.points.len(), search.seeds),
    ));

    let comps = components(&aux, &search.points, setup, &group, &mut stages);
    for c in &comps {
        if let (Some(declared), ComponentShape::Curve { .. }) = (&setup.topology, &c.shape) {
            if *declared != c.topology {
                stages.push(Stage::failed(
                    "topology",
                    format!("declared {declared:?}, traced {:?} through {:?}", c.topology, c.seeds[0]),
                ));
            }
        }
    }
    let predicted: Vec<usize> = comps
        .iter()
        .map(|c| predict_multiplicity(&c.topology, setup.mode))
        .collect::<Result<_>>()?;
    report.predicted = predicted.iter().sum();

    let b_min = width_floor(scenario, &setup.region)?;
    let reducer = Reducer::new(scenario, epsilon, b_min, setup.reduction)?;

    // blocks and reduced critical points, one job per seed
    let jobs: Vec<(usize, Vec<f64>)> = comps
        .iter()
        .enumerate()
        .flat_map(|(i, c)| c.seeds.iter().map(move |s| (i, s.clone())))
        .collect();
    let outcomes = exec.map(jobs.clone(), |(_, seed)| -> Result<SeedOutcome> {
        let reduced = ReducedLandscape::new(&reducer);
        let block = build_block(core::slice::from_ref(&seed), &aux, Some(&reduced), epsilon, setup.block_radius)?;
        let flow = flow_count(&block, &reduced, 0, setup.flow)?;
        Ok(SeedOutcome {
            block: BlockSummary {
                seed,
                radius: block.r1.max(block.r2),
                min_margin: block.min_margin,
                escapes: flow.escapes,
            },
            critical: flow.critical_points,
        })
    });
    let mut comp_reports: Vec<ComponentReport> = comps
        .iter()
        .zip(&predicted)
        .map(|(c, p)| ComponentReport {
            component: c.clone(),
            predicted: *p,
            blocks: Vec::new(),
            reduced_critical_points: Vec::new(),
            solutions: 0,
        })
        .collect();
    for ((ci, seed), out) in jobs.iter().zip(outcomes) {
        match out {
            Ok(o) => {
                if o.block.escapes > 0 {
                    stages.push(Stage::failed(
                        "flow",
                        format!("{} trajectories escaped the block at {:?}", o.block.escapes, seed),
                    ));
                }
                comp_reports[*ci].blocks.push(o.block);
                comp_reports[*ci].reduced_critical_points.extend(o.critical);
            }
            Err(e) => stages.push(Stage::failed("block", format!("at {seed:?}: {e}"))),
        }
    }

    // full solves, one job per reduced critical point
    let solve_jobs: Vec<(usize, CriticalPoint)> = comp_reports
        .iter()
        .enumerate()
        .flat_map(|(i, r)| r.reduced_critical_points.iter().map(move |c| (i, c.clone())))
        .collect();
    let records = exec.map(solve_jobs.clone(), |(_, cp)| -> Result<SolutionRecord> {
        let initial = reducer.corrected_ansatz(&cp.x)?;
        let mut rec = newton_solve(&initial, epsilon, scenario, &setup.solver)?;
        rec.seed_xi = cp.x.clone();
        Ok(rec)
    });
    let mut targets: Vec<Vec<f64>> = Vec::new();
    for c in &comps {
        targets.extend(c.samples.iter().cloned());
    }
    let mut duplicates = 0;
    for ((ci, cp), rec) in solve_jobs.into_iter().zip(records) {
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                stages.push(Stage::failed("solve", format!("from ξ = {:?}: {e}", cp.x)));
                continue;
            }
        };
        let mut duplicate = false;
        for s in &report.solutions {
            let d = l2_distance(&s.record.u, &rec.u)?;
            if d < DEDUP * l2_norm(&s.record.u).max(l2_norm(&rec.u)) {
                duplicate = true;
                break;
            }
        }
        if duplicate {
            duplicates += 1;
            continue;
        }
        let diagnostics = concentration_diagnostics(&rec, scenario, &targets, false)?;
        comp_reports[ci].solutions += 1;
        report.solutions.push(ExperimentSolution {
            component: ci,
            energy_gap: (rec.energy - cp.value).abs(),
            expected_negative: 1 + comps[ci].index,
            phi: cp.value,
            xi: cp.x,
            diagnostics,
            record: rec,
        });
    }
    report.duplicates = duplicates;
    report.found = report.solutions.len();
    stages.push(Stage::ok(
        "solutions",
        format!("{} distinct, {} duplicates, {} predicted", report.found, duplicates, report.predicted),
    ));
    let diagnostics_pass = report.solutions.iter().all(|s| s.diagnostics.pass);
    let topology_ok = !stages.iter().any(|s| s.name == "topology");
    report.pass = report.found >= report.predicted && diagnostics_pass && topology_ok;
    report.components = comp_reports;
    report.stages = stages;
    Ok(report)
}
