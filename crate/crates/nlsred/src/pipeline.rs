//! The five run modes.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use nlsred_core::exec::Executor;
use nlsred_core::landscape::{
    find_critical_points, predict_multiplicity, sublevel_sandwich, AuxiliaryFunction, CriticalKind, CriticalPoint,
    CriticalSearch, MultiplicityMode,
};
use nlsred_core::profile::{RadialProfile, ShootingOptions};
use nlsred_core::reduction::{verify_expansion, ReducedSample, Reducer, ReductionOptions, SpectralGapReport};
use nlsred_core::solver::{
    concentration_diagnostics, continuation_solve, multiplicity_experiment, newton_solve, width_floor,
    DiagnosticsReport, ExperimentSetup, SolutionRecord, SolverOptions, CONCENTRATION_RADIUS, MASS_OUTSIDE,
    WIDTH_BAND,
};

use crate::artifacts::{num, Artifacts, REPORT_FILE, TIMINGS_FILE};
use crate::config::{Mode, ScenarioConfig, Validated};
use crate::exec::Pool;
use crate::report::{Check, RunReport};
use crate::RunError;

/// Command-line overrides of a config.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Replaces `output_dir`.
    pub out: Option<PathBuf>,
    /// Worker threads; 0 means one.
    pub jobs: usize,
    /// Replaces `seed_mesh`. This changes results, so it enters the hash.
    pub seed_mesh: Option<usize>,
}

struct Env<'a> {
    val: &'a Validated,
    cfg: &'a ScenarioConfig,
    pool: Pool,
}

struct Sink {
    arts: Artifacts,
    report: RunReport,
    timings: Vec<(String, f64)>,
}

impl Sink {
    fn stage<T>(&mut self, name: &str, f: impl FnOnce(&mut Sink) -> Result<(T, String), RunError>) -> Result<T, RunError> {
        let start = Instant::now();
        let out = f(self);
        self.timings.push((name.to_string(), start.elapsed().as_secs_f64()));
        match out {
            Ok((value, message)) => {
                self.report.stage(name, true, message);
                Ok(value)
            }
            Err(e) => {
                self.report.stage(name, false, e.to_string());
                Err(e)
            }
        }
    }
}

/// Validates the config, runs its mode and writes the artifacts.
///
/// Config problems come back as `Err` before anything is written. A failing
/// numerical stage ends the run early but still yields a report, with
/// `pass == false` and the artifacts written up to that point.
pub fn run(config: &ScenarioConfig, opts: &RunOptions) -> Result<RunReport, RunError> {
    let mut cfg = config.clone();
    if opts.seed_mesh.is_some() {
        cfg.run.seed_mesh = opts.seed_mesh;
    }
    let val = cfg.validate()?;
    let dir = opts
        .out
        .clone()
        .or_else(|| cfg.run.output_dir.clone())
        .ok_or_else(|| RunError::Config("no output_dir in the config and no --out".into()))?;
    let hash = cfg.hash();
    let arts = Artifacts::open(&dir, &hash)?;
    let env = Env {
        val: &val,
        cfg: &cfg,
        pool: Pool::new(opts.jobs)?,
    };
    let mut sink = Sink {
        arts,
        report: RunReport::new(&cfg, &hash),
        timings: Vec::new(),
    };
    let h = &val.hypotheses;
    sink.report.value("hypothesis_inf_1_plus_V", h.inf_one_plus_v);
    sink.report.value("hypothesis_inf_K", h.inf_k);
    sink.report.stage(
        "validate",
        true,
        format!(
            "inf(1+V) = {}, inf K = {} over {} box samples",
            num(h.inf_one_plus_v),
            num(h.inf_k),
            h.samples
        ),
    );

    let outcome = match cfg.run.mode {
        Mode::Profile => profile(&env, &mut sink),
        Mode::Landscape => landscape(&env, &mut sink).map(|_| ()),
        Mode::Reduce => reduce(&env, &mut sink),
        Mode::Solve => solve(&env, &mut sink),
        Mode::Experiment => experiment(&env, &mut sink),
    };
    if let Err(e @ RunError::Io(_)) = outcome {
        return Err(e);
    }
    let Sink {
        mut arts,
        mut report,
        timings,
    } = sink;
    report.artifacts = arts.written().to_vec();
    report.finish();
    arts.write_json(REPORT_FILE, &report)?;
    let mut log = String::new();
    for (name, secs) in &timings {
        let _ = writeln!(log, "{name}\t{secs:.3} s");
    }
    std::fs::write(arts.path(TIMINGS_FILE), log)?;
    Ok(report)
}

fn kind_label(k: CriticalKind) -> String {
    match k {
        CriticalKind::Min => "min".into(),
        CriticalKind::Max => "max".into(),
        CriticalKind::Saddle(i) => format!("saddle{i}"),
        CriticalKind::Degenerate => "degenerate".into(),
    }
}

fn coords(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

fn search_budget(cfg: &ScenarioConfig) -> usize {
    let n = cfg.scenario.n;
    match cfg.run.seed_mesh {
        Some(m) => m.pow(n as u32),
        None => [41, 144, 343][n - 1],
    }
}

fn profile(env: &Env, sink: &mut Sink) -> Result<(), RunError> {
    let sc = &env.val.scenario;
    let prof = &sc.profile;
    let c = sc.constants;
    sink.stage("ground_state", |s| {
        let rows: Vec<Vec<String>> = (0..prof.r_samples.len())
            .map(|k| vec![num(prof.r_samples[k]), num(prof.u_samples[k]), num(prof.du_samples[k])])
            .collect();
        s.arts.write_csv("profile.csv", &["r", "U", "dU"], &rows)?;
        let residual = prof.ode_residual() / prof.peak();
        let r = &mut s.report;
        r.value("U0", prof.peak());
        r.value("C0", c.c0);
        r.value("C1", c.c1);
        r.value("L2_squared", c.l2sq);
        r.value("H1_squared", c.h1sq);
        r.value("half_height_radius", prof.half_height_radius());
        r.value("ode_residual_relative", residual);
        r.check(Check::below("ode_residual_relative", residual, 1e-6));
        r.check(Check::below("nehari_defect_relative", ((c.h1sq - c.c0) / c.c0).abs(), 1e-6));
        Ok(((), format!("U(0) = {}, C0 = {}", num(prof.peak()), num(c.c0))))
    })?;
    if sc.n == 1 {
        sink.stage("shooting_cross_check", |s| {
            let shot = RadialProfile::shoot(
                1,
                sc.p,
                ShootingOptions {
                    step: 0.01,
                    ..Default::default()
                },
            )?;
            let mut err: f64 = 0.0;
            for k in 0..=4000 {
                let x = -20.0 + 0.01 * k as f64;
                err = err.max((shot.eval(x) - prof.eval(x)).abs());
            }
            let c0_shot = shot.constants()?.c0;
            let r = &mut s.report;
            r.value("shooting_sup_error", err);
            r.value("shooting_C0", c0_shot);
            r.check(Check::below("shooting_sup_error", err, 1e-8));
            r.check(Check::below("shooting_C0_error", (c0_shot - c.c0).abs(), 1e-6));
            Ok(((), format!("sup |U_shot - U| = {} on [-20, 20]", num(err))))
        })?;
    }
    Ok(())
}

fn aux_slice(env: &Env, sink: &mut Sink) -> Result<(), RunError> {
    let sc = &env.val.scenario;
    let aux = AuxiliaryFunction::new(sc);
    let r = env.cfg.domain.half_width;
    let mut rows = Vec::new();
    for k in 0..=200 {
        let mut x = vec![0.0; sc.n];
        x[0] = -r + 2.0 * r * k as f64 / 200.0;
        let a = aux.value(&x)?;
        rows.push(vec![
            num(x[0]),
            num(sc.v_at(&x)?),
            num(sc.k_at(&x)?),
            num(a),
            num(sc.constants.c1 * a),
        ]);
    }
    sink.arts.write_csv("aux_slice.csv", &["x1", "V", "K", "A", "C1_A"], &rows)
}

fn critical_csv(sink: &mut Sink, name: &str, n: usize, points: &[CriticalPoint]) -> Result<(), RunError> {
    let mut header = vec!["index".to_string(), "kind".into(), "value".into(), "grad_norm".into()];
    header.extend(coords("x", n));
    header.extend(coords("hessian_eig", n));
    let rows: Vec<Vec<String>> = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut row = vec![i.to_string(), kind_label(p.kind), num(p.value), num(p.grad_norm)];
            row.extend(p.x.iter().map(|v| num(*v)));
            row.extend(p.hessian_eigs.iter().map(|v| num(*v)));
            row
        })
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    sink.arts.write_csv(name, &header, &rows)
}

fn landscape(env: &Env, sink: &mut Sink) -> Result<CriticalSearch, RunError> {
    let sc = &env.val.scenario;
    let search = sink.stage("critical_points", |s| {
        let aux = AuxiliaryFunction::new(sc);
        let search = find_critical_points(&aux, &env.val.region, search_budget(env.cfg))?;
        critical_csv(s, "critical_points.csv", sc.n, &search.points)?;
        aux_slice(env, s)?;
        let r = &mut s.report;
        r.value("critical_points", search.points.len() as f64);
        r.value("degenerate_landscape", if search.degenerate_landscape { 1.0 } else { 0.0 });
        for kind in [CriticalKind::Min, CriticalKind::Max] {
            let count = search.points.iter().filter(|p| p.kind == kind).count();
            r.value(format!("critical_points_{}", kind_label(kind)), count as f64);
        }
        if let Some(t) = &env.val.topology {
            r.value("predicted_multiplicity", predict_multiplicity(t, MultiplicityMode::CupLength)? as f64);
        }
        let msg = if search.degenerate_landscape {
            "A is constant on the box: every point is critical".to_string()
        } else {
            format!("{} critical points of A", search.points.len())
        };
        Ok((search, msg))
    })?;
    Ok(search)
}

fn reduction_options(val: &Validated) -> ReductionOptions {
    let mut opts = ReductionOptions::default_for(val.scenario.n);
    opts.resolution = val.resolution;
    opts
}

/// Reduce-mode sample points: the configured ones, or five points along the
/// x1 axis.
fn sample_points(env: &Env) -> Vec<Vec<f64>> {
    if let Some(p) = &env.cfg.run.points {
        return p.clone();
    }
    let n = env.cfg.scenario.n;
    let r = 0.75 * env.cfg.domain.half_width;
    (0..5)
        .map(|k| {
            let mut x = vec![0.0; n];
            x[0] = -r + 2.0 * r * k as f64 / 4.0;
            x
        })
        .collect()
}

fn spread(values: &[f64]) -> f64 {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(l, h), v| (l.min(v.abs()), h.max(v.abs())));
    hi / lo
}

fn reduce(env: &Env, sink: &mut Sink) -> Result<(), RunError> {
    let sc = &env.val.scenario;
    let n = sc.n;
    let c1 = sc.constants.c1;
    let points = sample_points(env);
    let schedule = &env.cfg.run.epsilon_schedule;
    let b_min = width_floor(sc, &env.val.region)?;
    let opts = reduction_options(env.val);
    let aux = AuxiliaryFunction::new(sc);

    let mut samples: Vec<Vec<ReducedSample>> = Vec::new();
    let mut gaps: Vec<(f64, SpectralGapReport)> = Vec::new();
    for &eps in schedule {
        let (row, gap) = sink.stage(&format!("reduce eps={}", num(eps)), |_| {
            let reducer = Reducer::new(sc, eps, b_min, opts)?;
            let xis: Vec<Vec<f64>> = points.iter().map(|x| x.iter().map(|v| v / eps).collect()).collect();
            let row = env
                .pool
                .map(xis.clone(), |xi| reducer.reduced_sample(&xi))
                .into_iter()
                .collect::<Result<Vec<_>, _>>()?;
            let gap = reducer.spectral_gap(&xis[0])?;
            let msg = format!("{} samples, lambda_perp = {}", row.len(), num(gap.lambda_perp));
            Ok(((row, gap), msg))
        })?;
        samples.push(row);
        gaps.push((opts.resolution.h, gap));
    }
    let refined = sink.stage("spectral_gap_refined", |_| {
        let mut fine = opts;
        fine.resolution.h /= 2.0;
        let eps = schedule[0];
        let reducer = Reducer::new(sc, eps, b_min, fine)?;
        let xi: Vec<f64> = points[0].iter().map(|v| v / eps).collect();
        let gap = reducer.spectral_gap(&xi)?;
        let msg = format!("h = {}: lambda_perp = {}", num(fine.resolution.h), num(gap.lambda_perp));
        Ok(((fine.resolution.h, gap), msg))
    })?;

    sink.stage("reduce_checks", |s| {
        let mut header = vec!["epsilon".to_string(), "point".into()];
        header.extend(coords("x", n));
        header.extend(
            ["phi", "leading", "lambda_term", "psi_term", "bookkeeping", "identity_gap", "w_norm", "remainder"]
                .map(String::from),
        );
        header.extend(coords("grad_phi", n));
        let mut rows = Vec::new();
        let mut identity: f64 = 0.0;
        for row in &samples {
            for (i, smp) in row.iter().enumerate() {
                let x: Vec<f64> = smp.xi.iter().map(|v| v * smp.epsilon).collect();
                let grad_a = aux.gradient(&x)?;
                let remainder = smp
                    .grad_phi
                    .iter()
                    .zip(&grad_a)
                    .map(|(g, a)| (g - c1 * smp.epsilon * a).powi(2))
                    .sum::<f64>()
                    .sqrt();
                identity = identity.max(smp.identity_gap().abs());
                let mut r = vec![num(smp.epsilon), i.to_string()];
                r.extend(x.iter().map(|v| num(*v)));
                r.extend(
                    [
                        smp.phi,
                        smp.leading,
                        smp.lambda_term,
                        smp.psi_term,
                        smp.bookkeeping,
                        smp.identity_gap(),
                        smp.w_norm,
                        remainder,
                    ]
                    .map(num),
                );
                r.extend(smp.grad_phi.iter().map(|v| num(*v)));
                rows.push(r);
            }
        }
        let header_ref: Vec<&str> = header.iter().map(String::as_str).collect();
        s.arts.write_csv("reduce.csv", &header_ref, &rows)?;

        let mut gap_header = vec!["epsilon".to_string(), "h".into()];
        gap_header.extend(coords("xi", n));
        gap_header.extend(["lambda_z", "lambda_perp", "lanczos_steps"].map(String::from));
        let gap_rows: Vec<Vec<String>> = gaps
            .iter()
            .chain(std::iter::once(&refined))
            .map(|(h, g)| {
                let mut r = vec![num(g.epsilon), num(*h)];
                r.extend(g.xi.iter().map(|v| num(*v)));
                r.extend([num(g.lambda_z), num(g.lambda_perp), g.lanczos_steps.to_string()]);
                r
            })
            .collect();
        let gap_ref: Vec<&str> = gap_header.iter().map(String::as_str).collect();
        s.arts.write_csv("gap.csv", &gap_ref, &gap_rows)?;
        aux_slice(env, s)?;

        let r = &mut s.report;
        r.check(Check::below("identity_gap_max", identity, 1e-8));
        let w_max = samples.iter().flatten().map(|x| x.w_norm).fold(0.0, f64::max);
        let lead_max = samples.iter().flatten().map(|x| (x.phi - x.leading).abs()).fold(0.0, f64::max);
        r.value("w_norm_max", w_max);
        r.value("phi_minus_leading_max", lead_max);
        if sc.is_translation_invariant() {
            // w vanishes and Φ equals its leading term; the scaling checks
            // below would compare rounding noise
            r.check(Check::below("w_norm_max", w_max, 1e-8));
            r.check(Check::below("phi_minus_leading_max", lead_max, 1e-6));
        } else {
            if schedule.len() >= 2 {
                for (i, x) in points.iter().enumerate() {
                    let gv = sc.v.eval_with_derivatives(x)?.gradient.iter().map(|g| g * g).sum::<f64>().sqrt();
                    let ratios: Vec<f64> = samples
                        .iter()
                        .map(|row| row[i].w_norm / (row[i].epsilon * gv + row[i].epsilon.powi(2)))
                        .collect();
                    r.check(Check::below(format!("w_bound_spread[{i}]"), spread(&ratios), 3.0));
                }
                let per_eps: Vec<f64> = samples
                    .iter()
                    .map(|row| row.iter().map(|x| (x.phi - x.leading).abs() / x.epsilon).fold(0.0, f64::max))
                    .collect();
                // the ratio is O(ε) for smooth V and K, so it shrinks by about
                // 2 per halving; boundedness means it must not grow by 2
                let growth = per_eps.windows(2).map(|w| w[1] / w[0]).fold(0.0, f64::max);
                r.value("phi_leading_ratio_growth", growth);
                r.value("phi_leading_ratio_spread", spread(&per_eps));
                r.check(Check::below("phi_leading_ratio_growth", growth, 2.0));
            }
            if schedule.len() >= 3 {
                for i in 0..points.len() {
                    let column: Vec<ReducedSample> = samples.iter().map(|row| row[i].clone()).collect();
                    let e = verify_expansion(&column, sc)?;
                    r.value(format!("expansion_slope[{i}]"), e.slope);
                    r.value(format!("expansion_noise_ratio[{i}]"), e.noise_ratio);
                    if e.resolved() {
                        r.check(Check::at_least(format!("expansion_slope[{i}]"), e.slope, e.expected_slope - 0.2));
                    } else {
                        // the remainder vanishes to rounding, so no slope can be fitted
                        r.check(Check::below(format!("expansion_noise_ratio[{i}]"), e.noise_ratio, 1.0));
                    }
                }
            }
        }
        let lz = gaps.iter().map(|g| g.1.lambda_z).fold(f64::NEG_INFINITY, f64::max);
        let lp = gaps.iter().map(|g| g.1.lambda_perp.abs()).fold(f64::INFINITY, f64::min);
        r.value("lambda_z_max", lz);
        r.value("lambda_perp_min_abs", lp);
        r.check(Check::below("lambda_z_max", lz, 0.0));
        r.check(Check::above("lambda_perp_min_abs", lp, 0.0));
        if gaps.len() >= 2 {
            let drift = gaps
                .windows(2)
                .map(|w| (w[1].1.lambda_perp.abs() / w[0].1.lambda_perp.abs() - 1.0).abs())
                .fold(0.0, f64::max);
            r.value("lambda_perp_drift_eps", drift);
            r.check(Check::below("lambda_perp_drift_eps", drift, 0.2));
        }
        let coarse = &gaps[0].1;
        let fine = &refined.1;
        let drift_grid = (fine.lambda_perp / coarse.lambda_perp - 1.0)
            .abs()
            .max((fine.lambda_z / coarse.lambda_z - 1.0).abs());
        r.value("spectral_drift_grid", drift_grid);
        r.check(Check::below("spectral_drift_grid", drift_grid, 0.05));
        Ok(((), format!("{} points x {} epsilons", points.len(), schedule.len())))
    })
}

/// The solution along the x1 axis through its peak node, in rescaled units.
fn peak_slice(rec: &SolutionRecord) -> Vec<(f64, f64)> {
    let g = &rec.u.grid;
    let (_, peak) = rec.u.argmax();
    let mut out = Vec::new();
    for (idx, v) in rec.u.values.iter().enumerate() {
        let x = g.point(idx);
        if (1..g.n).all(|j| (x[j] - peak[j]).abs() < 0.5 * g.h) {
            out.push((x[0] * rec.epsilon, *v));
        }
    }
    out
}

fn profile_rows(rows: &mut Vec<Vec<String>>, id: usize, rec: &SolutionRecord) {
    for (x, u) in peak_slice(rec) {
        rows.push(vec![id.to_string(), num(rec.epsilon), num(x), num(u)]);
    }
}

const PROFILE_HEADER: [&str; 4] = ["solution", "epsilon", "x1", "u"];

fn solution_header(n: usize, extra: &[&str]) -> Vec<String> {
    let mut h = vec!["epsilon".to_string(), "solution".into()];
    h.extend(coords("seed_x", n));
    h.extend(coords("peak_x", n));
    h.extend(
        [
            "peak_value",
            "width_ratio",
            "mass_outside",
            "distance",
            "negative_directions",
            "energy",
            "residual_norm",
            "newton_iterations",
            "located",
        ]
        .map(String::from),
    );
    h.extend(extra.iter().map(|s| s.to_string()));
    h
}

fn solution_row(id: usize, seed: &[f64], rec: &SolutionRecord, d: &DiagnosticsReport) -> Vec<String> {
    let mut row = vec![num(rec.epsilon), id.to_string()];
    row.extend(seed.iter().map(|v| num(*v)));
    row.extend(d.rescaled_peak.iter().map(|v| num(*v)));
    row.extend([
        num(rec.peak_value),
        num(d.width_ratio),
        num(d.mass_outside),
        d.distance.map_or_else(String::new, num),
        rec.negative_directions.to_string(),
        num(rec.energy),
        num(rec.residual_norm),
        rec.iterations.to_string(),
        u8::from(d.pass).to_string(),
    ]);
    row
}

fn diagnostics_checks(report: &mut RunReport, tag: &str, d: &DiagnosticsReport) {
    if !d.degenerate_landscape {
        let dist = d.distance.unwrap_or(f64::INFINITY);
        report.check(Check::at_most(format!("{tag} peak distance"), dist, CONCENTRATION_RADIUS));
    }
    report.check(Check::at_least(format!("{tag} width ratio (low)"), d.width_ratio, WIDTH_BAND.0));
    report.check(Check::at_most(format!("{tag} width ratio (high)"), d.width_ratio, WIDTH_BAND.1));
    report.check(Check::below(format!("{tag} mass outside"), d.mass_outside, MASS_OUTSIDE));
}

fn solve(env: &Env, sink: &mut Sink) -> Result<(), RunError> {
    let sc = &env.val.scenario;
    let n = sc.n;
    let schedule = &env.cfg.run.epsilon_schedule;
    let search = landscape(env, sink)?;
    let critical: Vec<Vec<f64>> = search.points.iter().map(|p| p.x.clone()).collect();
    let seeds: Vec<Vec<f64>> = match &env.cfg.run.points {
        Some(p) => p.clone(),
        None => {
            let isolated: Vec<Vec<f64>> = search
                .points
                .iter()
                .filter(|p| p.kind != CriticalKind::Degenerate)
                .map(|p| p.x.clone())
                .collect();
            if isolated.is_empty() {
                vec![vec![0.0; n]]
            } else {
                isolated
            }
        }
    };
    let eps0 = schedule[0];
    let b_min = width_floor(sc, &env.val.region)?;
    let reducer = Reducer::new(sc, eps0, b_min, reduction_options(env.val))?;
    let solver = SolverOptions::default();
    let mut rows = Vec::new();
    let mut profiles = Vec::new();
    let mut failure = None;
    for (i, seed) in seeds.iter().enumerate() {
        let step = sink.stage(&format!("solve seed {i}"), |s| {
            let xi: Vec<f64> = seed.iter().map(|v| v / eps0).collect();
            let first = newton_solve(&reducer.corrected_ansatz(&xi)?, eps0, sc, &solver)?;
            s.report.value(format!("newton_iterations[{i}]"), first.iterations as f64);
            if sc.is_translation_invariant() {
                s.report.check(Check::at_most(
                    format!("seed {i} newton iterations"),
                    first.iterations as f64,
                    2.0,
                ));
            }
            let cont = continuation_solve(&first, schedule, sc, &solver)?;
            for rec in &cont.records {
                let d = concentration_diagnostics(rec, sc, &critical, search.degenerate_landscape)?;
                rows.push(solution_row(i, seed, rec, &d));
            }
            let last = cont.records.last().expect("continuation keeps its seed");
            profile_rows(&mut profiles, i, last);
            let d = concentration_diagnostics(last, sc, &critical, search.degenerate_landscape)?;
            diagnostics_checks(&mut s.report, &format!("seed {i} at eps={}", num(last.epsilon)), &d);
            s.report.check(Check::equal(
                format!("seed {i} reached eps"),
                last.epsilon,
                *schedule.last().expect("schedule is not empty"),
            ));
            let msg = match &cont.stopped {
                None => format!("continued to eps = {}", num(last.epsilon)),
                Some(b) => format!("stopped at eps = {}: {}", num(b.reached), b.reason),
            };
            Ok(((), msg))
        });
        if let Err(e) = step {
            failure = Some(e);
            break;
        }
    }
    let header = solution_header(n, &[]);
    let header_ref: Vec<&str> = header.iter().map(String::as_str).collect();
    sink.arts.write_csv("solutions.csv", &header_ref, &rows)?;
    sink.arts.write_csv("solution_profiles.csv", &PROFILE_HEADER, &profiles)?;
    failure.map_or(Ok(()), Err)
}

fn experiment(env: &Env, sink: &mut Sink) -> Result<(), RunError> {
    let sc = &env.val.scenario;
    let n = sc.n;
    let cfg = env.cfg;
    let mut setup = ExperimentSetup::new(env.val.region.clone());
    setup.topology = env.val.topology.clone();
    setup.search_budget = search_budget(cfg);
    setup.reduction = reduction_options(env.val);
    let mut rows = Vec::new();
    let mut profiles = Vec::new();
    let mut failure = None;
    let mut critical_written = false;
    let mut minima_and_maxima: Option<(Vec<Vec<f64>>, Vec<Vec<f64>>)> = None;
    for &eps in &cfg.run.epsilon_schedule {
        let step = sink.stage(&format!("experiment eps={}", num(eps)), |s| {
            let rep = multiplicity_experiment(sc, eps, &setup, &env.pool)?;
            if !critical_written {
                critical_csv(s, "critical_points.csv", n, &rep.critical_points)?;
                aux_slice(env, s)?;
                critical_written = true;
                let pick = |k: CriticalKind| -> Vec<Vec<f64>> {
                    rep.critical_points.iter().filter(|p| p.kind == k).map(|p| p.x.clone()).collect()
                };
                minima_and_maxima = Some((pick(CriticalKind::Min), pick(CriticalKind::Max)));
            }
            for st in &rep.stages {
                s.report.stage(&format!("eps={} {}", num(eps), st.name), st.ok, st.message.clone());
            }
            for (k, sol) in rep.solutions.iter().enumerate() {
                let mut row = solution_row(k, &sol.xi.iter().map(|v| v * eps).collect::<Vec<_>>(), &sol.record, &sol.diagnostics);
                row.extend([
                    sol.component.to_string(),
                    sol.expected_negative.to_string(),
                    num(sol.phi),
                    num(sol.energy_gap),
                ]);
                rows.push(row);
                profile_rows(&mut profiles, k, &sol.record);
                let tag = format!("eps={} solution {k}", num(eps));
                diagnostics_checks(&mut s.report, &tag, &sol.diagnostics);
                s.report.check(Check::equal(
                    format!("{tag} negative directions"),
                    sol.record.negative_directions as f64,
                    sol.expected_negative as f64,
                ));
            }
            let r = &mut s.report;
            let key = num(eps);
            r.value(format!("found@{key}"), rep.found as f64);
            r.value(format!("predicted@{key}"), rep.predicted as f64);
            r.value(format!("duplicates@{key}"), rep.duplicates as f64);
            r.value(format!("symmetry_order@{key}"), rep.symmetry_order as f64);
            r.check(Check::at_least(format!("eps={key} solutions found"), rep.found as f64, rep.predicted as f64));
            if let Some(expected) = cfg.run.expected_solutions {
                r.check(Check::equal(format!("eps={key} exact count"), rep.found as f64, expected as f64));
            }
            if let Some(t) = &env.val.topology {
                let bound = predict_multiplicity(t, MultiplicityMode::CupLength)?;
                r.value("predicted_multiplicity", bound as f64);
                r.check(Check::at_least(format!("eps={key} topological bound"), rep.found as f64, bound as f64));
            }
            let msg = format!(
                "{} solutions, {} predicted, {} components{}",
                rep.found,
                rep.predicted,
                rep.components.len(),
                if rep.degenerate_landscape { ", degenerate landscape" } else { "" }
            );
            Ok(((), msg))
        });
        if let Err(e) = step {
            failure = Some(e);
            break;
        }
    }
    let header = solution_header(n, &["component", "expected_negative", "phi", "energy_gap"]);
    let header_ref: Vec<&str> = header.iter().map(String::as_str).collect();
    sink.arts.write_csv("experiment_solutions.csv", &header_ref, &rows)?;
    sink.arts.write_csv("solution_profiles.csv", &PROFILE_HEADER, &profiles)?;
    if let Some(e) = failure {
        return Err(e);
    }
    if let (Some(delta), Some((minima, maxima))) = (cfg.run.delta, minima_and_maxima) {
        sandwich(env, sink, delta, minima, maxima)?;
    }
    Ok(())
}

fn sandwich(env: &Env, sink: &mut Sink, delta: f64, minima: Vec<Vec<f64>>, maxima: Vec<Vec<f64>>) -> Result<(), RunError> {
    let sc = &env.val.scenario;
    let cfg = env.cfg;
    let maximum = cfg.run.sandwich_maximum;
    let set = cfg
        .run
        .sandwich_set
        .clone()
        .unwrap_or(if maximum { maxima } else { minima });
    if set.is_empty() {
        return Err(RunError::Config("the sandwich check has an empty critical set".into()));
    }
    let b_min = width_floor(sc, &env.val.region)?;
    let mesh = [21, 5, 3][sc.n - 1];
    let mut rows = Vec::new();
    let mut failure = None;
    for &eps in &cfg.run.epsilon_schedule {
        let step = sink.stage(&format!("sandwich eps={}", num(eps)), |s| {
            let reducer = Reducer::new(sc, eps, b_min, reduction_options(env.val))?;
            let rep = sublevel_sandwich(&set, delta, &reducer, maximum, mesh)?;
            rows.push(
                [
                    rep.epsilon,
                    rep.delta,
                    rep.a,
                    rep.b,
                    rep.level,
                    rep.inner_margin,
                    rep.boundary_margin,
                    rep.mesh_points as f64,
                    rep.y_points as f64,
                ]
                .map(num)
                .to_vec(),
            );
            let key = num(eps);
            s.report.check(Check::at_least(format!("eps={key} sandwich inner margin"), rep.inner_margin, 0.0));
            s.report
                .check(Check::above(format!("eps={key} sandwich boundary margin"), rep.boundary_margin, 0.0));
            let msg = format!(
                "level {}, margins {} / {}, {} of {} mesh points in Y",
                num(rep.level),
                num(rep.inner_margin),
                num(rep.boundary_margin),
                rep.y_points,
                rep.mesh_points
            );
            Ok(((), msg))
        });
        if let Err(e) = step {
            failure = Some(e);
            break;
        }
    }
    sink.arts.write_csv(
        "sandwich.csv",
        &[
            "epsilon",
            "delta",
            "a",
            "b",
            "level",
            "inner_margin",
            "boundary_margin",
            "mesh_points",
            "y_points",
        ],
        &rows,
    )?;
    failure.map_or(Ok(()), Err)
}
