//! Subcommand implementations. Each returns the process exit status.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use fiberspin::analysis::{
    self, existence_criterion, inviscid_epsilon_limit, p_kappa, q0_bounds, u_dd0_inviscid,
    ul_dd0_inviscid, ClassificationReport, Existence, ExistenceCriterion, Q0Bounds,
};
use fiberspin::bvp::{
    continuation_solve, integrate_inviscid, ContinuationOptions, ContinuationStep, MeshSolution,
    Outcome, DEFAULT_GUESS_INTERVALS,
};
use fiberspin::ivp::{IvpConfig, Trajectory};
use fiberspin::model::reconstruct_centerline;
use fiberspin::sweep::{
    export, find_boundary, format_float, run_sweep_until, summary, BoundaryOptions,
    BoundaryResult, CsvOptions, ExportFormat, SweepPlan, SweepRecord,
};
use fiberspin::{Error, InviscidState, ParamError, Result, SpinParams};
use serde::Serialize;
use serde_json::Value;

use crate::svg::{self, Mark, Panel, Series};
use crate::{BoundaryArgs, BoundsArgs, InviscidArgs, ShapeArgs, SolveArgs, SweepArgs};
use crate::{EXIT_DOMAIN, EXIT_NO_CONVERGENCE};

/// Conventional status of a run stopped by an interrupt.
const EXIT_INTERRUPTED: u8 = 130;

/// Number of uniform samples in inviscid trajectory exports.
const TRAJECTORY_SAMPLES: usize = 400;

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn flatten(prefix: &str, value: &Value, out: &mut Vec<String>) {
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        other => out.push(format!("{prefix}={other}")),
    }
}

/// Report header listing every setting in effect, defaults included.
fn header(command: &str, settings: &impl Serialize) -> String {
    let mut fields = Vec::new();
    flatten("", &serde_json::to_value(settings).unwrap_or(Value::Null), &mut fields);
    format!("# fiberspin {command}\n# settings: {}\n", fields.join(" "))
}

fn emit_json(doc: &impl Serialize) -> Result<()> {
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    serde_json::to_writer_pretty(&mut lock, doc)?;
    writeln!(lock)?;
    Ok(())
}

fn write_svg(path: &Path, panels: &[Panel]) -> Result<()> {
    std::fs::write(path, svg::render(panels))?;
    Ok(())
}

fn check_tol(tol: f64) -> Result<()> {
    if tol > 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(ParamError::Precondition(format!("tolerance must be positive, got {tol}")).into())
    }
}

fn shape_params(delta: f64, shape: &ShapeArgs) -> Result<SpinParams> {
    Ok(SpinParams::new(delta, shape.epsilon, shape.kappa, shape.length)?)
}

fn outcome_status(outcome: &Outcome) -> u8 {
    match outcome {
        Outcome::Converged => 0,
        Outcome::NoConvergence(_) => EXIT_NO_CONVERGENCE,
        Outcome::DomainExit(_) => EXIT_DOMAIN,
    }
}

#[derive(Serialize)]
struct SolveSettings {
    length: f64,
    guess_intervals: usize,
    continuation: ContinuationOptions,
}

#[derive(Serialize)]
struct SolveDoc<'a> {
    command: &'static str,
    settings: &'a SolveSettings,
    params: SpinParams,
    ratio: f64,
    outcome: &'a Outcome,
    q0: Option<f64>,
    mesh_intervals: Option<usize>,
    newton_iterations: Option<usize>,
    max_error_estimate: Option<f64>,
    classification: Option<ClassificationReport>,
    continuation_trace: &'a [ContinuationStep],
}

fn write_solution_csv(path: &Path, solution: &MeshSolution) -> Result<()> {
    let centerline = reconstruct_centerline(solution)?;
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(["s", "u", "q", "r", "beta", "phi", "x", "y", "area"])?;
    for c in &centerline.samples {
        let y = solution.evaluate(c.s);
        let row = [c.s, y[0], y[1], y[2], y[3], c.phi, c.x, c.y, c.area];
        w.write_record(row.map(format_float))?;
    }
    w.flush()?;
    Ok(())
}

fn solution_panels(solution: &MeshSolution) -> Result<Vec<Panel>> {
    let centerline = reconstruct_centerline(solution)?;
    let path: Vec<_> = centerline.samples.iter().map(|c| (c.x, c.y)).collect();
    let speed: Vec<_> = centerline.samples.iter().map(|c| (c.s, solution.evaluate(c.s)[0])).collect();
    Ok(vec![
        Panel::new("Centerline in the rotating frame", "x", "y")
            .with(Series::new("fiber", path, Mark::Line, PALETTE[0])),
        Panel::new("Speed along the fiber", "s", "u").with(Series::new("u", speed, Mark::Line, PALETTE[0])),
    ])
}

fn print_classification(c: &ClassificationReport) {
    println!("q0 = {:.6}", c.q0);
    println!("P1  q0 in (0, 1 - kappa]: {} (slope form u'(0) >= 0 and beta'(0) < 0: {})", c.p1, c.p1_slopes);
    println!(
        "P2  u''(0) < 0: {} (closed form {:.6e}, collocation {:.6e})",
        c.p2, c.u_dd0_analytic, c.u_dd0_numeric
    );
    println!("P3  uL''(0) > 0: {} (closed form {:.6e})", c.p3, c.ul_dd0_analytic);
    println!("physically relevant: {}", c.physically_relevant());
    print_bounds(&c.bounds);
    println!("q0 within bounds: {}", c.in_bounds);
    print_criterion(&c.criterion);
}

fn print_bounds(b: &Q0Bounds) {
    println!(
        "q0 bounds: [{:.6}, {:.6}] (raw [{:.6}, {:.6}]){}",
        b.lower,
        b.upper,
        b.lower_raw,
        b.upper_raw,
        if b.is_empty() { ", empty" } else { "" }
    );
}

fn print_criterion(c: &ExistenceCriterion) {
    println!("p(kappa) = {:.6}, delta/eps^2 = {:.6}: {}", c.p_kappa, c.ratio, c.verdict);
}

pub fn solve(a: &SolveArgs) -> Result<u8> {
    check_tol(a.tol)?;
    let p = shape_params(a.delta, &a.shape)?;
    if p.delta() == 0.0 {
        return Err(ParamError::Inviscid.into());
    }
    let settings = SolveSettings {
        length: p.length(),
        guess_intervals: DEFAULT_GUESS_INTERVALS,
        continuation: ContinuationOptions::with_tol(a.tol),
    };
    let report = continuation_solve(&p, &settings.continuation)?;
    let solution = report.solution.as_ref().filter(|_| report.is_converged());
    let class = solution.map(|s| analysis::classify(s, &p)).transpose()?;

    if let (Some(path), Some(s)) = (&a.out, solution) {
        write_solution_csv(path, s)?;
    }
    if let (Some(path), Some(s)) = (&a.svg, solution) {
        write_svg(path, &solution_panels(s)?)?;
    }

    if a.json {
        emit_json(&SolveDoc {
            command: "solve",
            settings: &settings,
            params: p,
            ratio: p.ratio(),
            outcome: &report.outcome,
            q0: solution.map(|s| s.left()[1]),
            mesh_intervals: solution.map(|s| s.mesh().intervals()),
            newton_iterations: solution.map(MeshSolution::newton_iterations),
            max_error_estimate: solution.map(MeshSolution::max_error_estimate),
            classification: class,
            continuation_trace: &report.continuation_trace,
        })?;
    } else {
        print!("{}", header("solve", &settings));
        println!(
            "parameters: delta = {}, epsilon = {}, kappa = {}, length = {}",
            p.delta(),
            p.epsilon(),
            p.kappa(),
            p.length()
        );
        println!("outcome: {}", report.outcome);
        if let Some(s) = solution {
            println!(
                "mesh intervals: {}, Newton iterations: {}, max residual estimate: {:.3e}",
                s.mesh().intervals(),
                s.newton_iterations(),
                s.max_error_estimate()
            );
        }
        if let Some(c) = &class {
            print_classification(c);
        } else {
            print_bounds(&q0_bounds(&p));
            print_criterion(&existence_criterion(&p));
        }
        println!("continuation trace:");
        for step in &report.continuation_trace {
            println!("  delta = {:<12.6e} {}", step.delta, step.outcome);
        }
    }
    Ok(outcome_status(&report.outcome))
}

#[derive(Serialize)]
struct InviscidSettings {
    length: f64,
    rel_tol: f64,
    abs_tol: f64,
    max_steps: usize,
    samples: usize,
}

#[derive(Serialize)]
struct TrajectorySample {
    kappa: f64,
    s: f64,
    v: f64,
    r: f64,
    beta: f64,
    u: f64,
    q: f64,
}

#[derive(Serialize)]
struct InviscidRun {
    params: SpinParams,
    lambda: f64,
    /// Arc length reached by the integration.
    end: f64,
    domain_stop: Option<String>,
    u_dd0: Option<f64>,
    ul_dd0: f64,
    samples: Vec<TrajectorySample>,
}

#[derive(Serialize)]
struct InviscidDoc<'a> {
    command: &'static str,
    settings: &'a InviscidSettings,
    run: &'a InviscidRun,
    zero_kappa: Option<&'a InviscidRun>,
}

fn sample_trajectory(traj: &Trajectory, p: &SpinParams, count: usize) -> Result<Vec<TrajectorySample>> {
    let (eps, kappa) = (p.epsilon(), p.kappa());
    (0..=count)
        .map(|k| {
            let s = if k == count { traj.end() } else { traj.end() * k as f64 / count as f64 };
            let y = InviscidState::from_slice(&traj.evaluate(s)?);
            let u = y.v / eps;
            Ok(TrajectorySample {
                kappa,
                s,
                v: y.v,
                r: y.r,
                beta: y.beta,
                u,
                q: u - kappa / u.sqrt(),
            })
        })
        .collect()
}

fn inviscid_run(p: &SpinParams, cfg: &IvpConfig) -> Result<InviscidRun> {
    let traj = integrate_inviscid(p, cfg)?;
    Ok(InviscidRun {
        params: *p,
        lambda: p.lambda(),
        end: traj.end(),
        domain_stop: traj.domain_stop().map(|d| format!("s = {}: {}", d.at, d.error)),
        u_dd0: u_dd0_inviscid(p.epsilon(), p.kappa()).ok(),
        ul_dd0: ul_dd0_inviscid(p.epsilon(), p.kappa())?,
        samples: sample_trajectory(&traj, p, TRAJECTORY_SAMPLES)?,
    })
}

fn write_trajectory_csv(path: &Path, runs: &[&InviscidRun]) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(["kappa", "s", "v", "r", "beta", "u", "q"])?;
    for t in runs.iter().flat_map(|r| &r.samples) {
        w.write_record([t.kappa, t.s, t.v, t.r, t.beta, t.u, t.q].map(format_float))?;
    }
    w.flush()?;
    Ok(())
}

fn inviscid_panels(runs: &[&InviscidRun]) -> Vec<Panel> {
    let mut phase = Panel::new("Phase portrait", "r", "beta");
    let mut speed = Panel::new("Scaled speed", "s", "v");
    for (i, run) in runs.iter().enumerate() {
        let label = format!("kappa = {}", run.params.kappa());
        let mark = if i == 0 { Mark::Line } else { Mark::Dashed };
        let color = PALETTE[i % PALETTE.len()];
        phase = phase.with(Series::new(&label, run.samples.iter().map(|t| (t.r, t.beta)).collect(), mark, color));
        speed = speed.with(Series::new(&label, run.samples.iter().map(|t| (t.s, t.v)).collect(), mark, color));
    }
    vec![phase, speed]
}

fn print_run(run: &InviscidRun) {
    let p = &run.params;
    println!(
        "kappa = {}: lambda = {:.6e}, integrated to s = {}",
        p.kappa(),
        run.lambda,
        run.end
    );
    if let Some(stop) = &run.domain_stop {
        println!("  left the domain at {stop}");
    }
    match run.u_dd0 {
        Some(v) => println!("  u''(0) = {v:.6e}"),
        None => println!(
            "  u''(0): closed form needs epsilon < {:.6}",
            inviscid_epsilon_limit(p.kappa())
        ),
    }
    println!("  uL''(0) = {:.6e}", run.ul_dd0);
    if let Some(last) = run.samples.last() {
        println!(
            "  end state: v = {:.6}, r = {:.6}, beta = {:.6}, u = {:.6}, q = {:.6}",
            last.v, last.r, last.beta, last.u, last.q
        );
    }
}

pub fn inviscid(a: &InviscidArgs) -> Result<u8> {
    check_tol(a.tol)?;
    let p = shape_params(0.0, &a.shape)?;
    let cfg = IvpConfig::with_tolerances(a.tol, 1e-2 * a.tol);
    let settings = InviscidSettings {
        length: p.length(),
        rel_tol: cfg.rel_tol,
        abs_tol: cfg.abs_tol,
        max_steps: cfg.max_steps,
        samples: TRAJECTORY_SAMPLES,
    };
    let run = inviscid_run(&p, &cfg)?;
    let zero = if a.compare_zero_kappa {
        Some(inviscid_run(&p.with_kappa(0.0)?, &cfg)?)
    } else {
        None
    };
    let runs: Vec<&InviscidRun> = std::iter::once(&run).chain(zero.as_ref()).collect();
    if let Some(path) = &a.out {
        write_trajectory_csv(path, &runs)?;
    }
    if let Some(path) = &a.svg {
        write_svg(path, &inviscid_panels(&runs))?;
    }
    if a.json {
        emit_json(&InviscidDoc {
            command: "inviscid",
            settings: &settings,
            run: &run,
            zero_kappa: zero.as_ref(),
        })?;
    } else {
        print!("{}", header("inviscid", &settings));
        println!("parameters: epsilon = {}, kappa = {}, length = {}", p.epsilon(), p.kappa(), p.length());
        for r in &runs {
            print_run(r);
        }
    }
    Ok(if run.domain_stop.is_some() { EXIT_DOMAIN } else { 0 })
}

#[derive(Serialize)]
struct BoundsDoc {
    command: &'static str,
    params: SpinParams,
    p_kappa: f64,
    ratio: f64,
    verdict: Existence,
    bounds: Q0Bounds,
    bounds_empty: bool,
}

pub fn bounds(a: &BoundsArgs) -> Result<u8> {
    let p = shape_params(a.delta, &a.shape)?;
    let c = existence_criterion(&p);
    let b = q0_bounds(&p);
    if a.json {
        emit_json(&BoundsDoc {
            command: "bounds",
            params: p,
            p_kappa: c.p_kappa,
            ratio: c.ratio,
            verdict: c.verdict,
            bounds: b,
            bounds_empty: b.is_empty(),
        })?;
    } else {
        print!("{}", header("bounds", &p));
        print_criterion(&c);
        print_bounds(&b);
    }
    Ok(0)
}

#[derive(Serialize)]
struct SweepSettings<'a> {
    plan: &'a Path,
    length: f64,
    tol: f64,
    jobs: usize,
    points: usize,
    timing: bool,
    continuation: ContinuationOptions,
}

#[derive(Serialize)]
struct SweepDoc<'a> {
    command: &'static str,
    settings: &'a SweepSettings<'a>,
    interrupted: bool,
    records: &'a [SweepRecord],
}

fn outcome_panel(records: &[SweepRecord]) -> Panel {
    let (mut relevant, mut other, mut failed) = (Vec::new(), Vec::new(), Vec::new());
    for r in records {
        let point = (r.params.kappa(), r.ratio);
        match (&r.outcome, &r.classification) {
            (Outcome::Converged, Some(c)) if c.physically_relevant() => relevant.push(point),
            (Outcome::Converged, _) => other.push(point),
            _ => failed.push(point),
        }
    }
    let (lo, hi) = records
        .iter()
        .map(|r| r.params.kappa())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), k| (lo.min(k), hi.max(k)));
    let (lo, hi) = if lo <= hi { (lo, hi) } else { (0.0, 0.99) };
    let curve = (0..=100)
        .map(|i| {
            let k = lo + (hi - lo) * i as f64 / 100.0;
            (k, p_kappa(k))
        })
        .collect();
    Panel::new("Converged solutions and the criterion curve", "kappa", "delta / eps^2")
        .with(Series::new("p(kappa)", curve, Mark::Line, "black"))
        .with(Series::new("physically relevant", relevant, Mark::Dots, PALETTE[2]))
        .with(Series::new("converged, other", other, Mark::Dots, PALETTE[3]))
        .with(Series::new("not converged", failed, Mark::Dots, PALETTE[1]))
}

fn q0_panel(records: &[SweepRecord]) -> Panel {
    let mut panel = Panel::new("q(0) against delta with its bounds", "delta", "q(0)");
    let mut groups: Vec<(f64, f64)> = Vec::new();
    for r in records {
        let key = (r.params.epsilon(), r.params.kappa());
        if !groups.contains(&key) {
            groups.push(key);
        }
    }
    for (i, &(eps, kappa)) in groups.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let members: Vec<&SweepRecord> = records
            .iter()
            .filter(|r| (r.params.epsilon(), r.params.kappa()) == (eps, kappa))
            .collect();
        let (lo, hi) = members
            .iter()
            .map(|r| r.params.delta())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)));
        let bound = |upper: bool| -> Vec<(f64, f64)> {
            (0..=100)
                .filter_map(|j| {
                    let d = lo + (hi - lo) * j as f64 / 100.0;
                    let p = SpinParams::new(d, eps, kappa, members[0].params.length()).ok()?;
                    let b = q0_bounds(&p);
                    // Past the criterion curve the interval is empty and there is nothing to draw.
                    (b.upper_raw >= b.lower).then_some((d, if upper { b.upper } else { b.lower }))
                })
                .collect()
        };
        let q0: Vec<_> = members.iter().filter_map(|r| r.q0.map(|q| (r.params.delta(), q))).collect();
        let tag = format!("eps = {eps}, kappa = {kappa}");
        panel = panel
            .with(Series::new(format!("q0, {tag}"), q0, Mark::Dots, color))
            .with(Series::new("upper bound", bound(true), Mark::Line, color))
            .with(Series::new("lower bound", bound(false), Mark::Dashed, color));
    }
    panel
}

pub fn sweep(a: &SweepArgs) -> Result<u8> {
    let mut plan = SweepPlan::from_file(&a.plan)?;
    if let Some(tol) = a.tol {
        plan.tol = tol;
    }
    if let Some(length) = a.length {
        plan.length = length;
    }
    if let Some(jobs) = a.jobs {
        plan.jobs = jobs;
    }
    plan.validate()?;
    let settings = SweepSettings {
        plan: &a.plan,
        length: plan.length,
        tol: plan.tol,
        jobs: plan.jobs,
        points: plan.len(),
        timing: !a.no_timing,
        continuation: ContinuationOptions::with_tol(plan.tol),
    };

    let stop = Arc::new(AtomicBool::new(false));
    let flag = Arc::clone(&stop);
    // A second handler cannot be installed; the sweep then simply runs to the end.
    let _ = ctrlc::set_handler(move || flag.store(true, Ordering::Relaxed));
    let mut records = run_sweep_until(&plan, &stop)?;
    if a.no_timing {
        records.iter_mut().for_each(|r| r.wall_time = 0.0);
    }
    let interrupted = stop.load(Ordering::Relaxed);

    if let Some(path) = &a.out {
        let format = match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => ExportFormat::Json,
            _ => ExportFormat::Csv,
        };
        export(&records, format, path, CsvOptions { wall_time: !a.no_timing })?;
    }
    if let Some(path) = &a.svg {
        write_svg(path, &[outcome_panel(&records)])?;
    }
    if let Some(path) = &a.svg_q0 {
        write_svg(path, &[q0_panel(&records)])?;
    }
    if a.json {
        emit_json(&SweepDoc {
            command: "sweep",
            settings: &settings,
            interrupted,
            records: &records,
        })?;
    } else {
        print!("{}", header("sweep", &settings));
        print!("{}", summary(&records));
        let converged = records.iter().filter(|r| r.outcome.is_converged()).count();
        println!("{} of {} points converged", converged, records.len());
    }
    if interrupted {
        eprintln!(
            "interrupted: {} of {} points written",
            records.len(),
            plan.len()
        );
        return Ok(EXIT_INTERRUPTED);
    }
    Ok(0)
}

#[derive(Serialize)]
struct BoundaryDoc<'a> {
    command: &'static str,
    settings: &'a BoundaryOptions,
    result: &'a BoundaryResult,
    relative_gap: f64,
}

pub fn boundary(a: &BoundaryArgs) -> Result<u8> {
    check_tol(a.tol)?;
    let opts = BoundaryOptions {
        length: a.shape.length,
        tol: a.tol,
        resolution: a.resolution,
        jobs: a.jobs,
        ..BoundaryOptions::default()
    };
    let r = match find_boundary(a.shape.epsilon, a.shape.kappa, &opts) {
        Ok(r) => r,
        Err(e @ Error::NoBracket(_)) => {
            if !a.json {
                print!("{}", header("boundary", &opts));
            }
            return Err(e);
        }
        Err(e) => return Err(e),
    };
    if a.json {
        emit_json(&BoundaryDoc {
            command: "boundary",
            settings: &opts,
            result: &r,
            relative_gap: r.relative_gap(),
        })?;
    } else {
        print!("{}", header("boundary", &opts));
        println!("epsilon = {}, kappa = {}, length = {}", r.epsilon, r.kappa, r.length);
        println!("delta bracket: [{:.6}, {:.6}]", r.delta_lo, r.delta_hi);
        println!("delta/eps^2 bracket: [{:.6}, {:.6}]", r.ratio_lo, r.ratio_hi);
        println!("p(kappa) = {:.6}", r.p_kappa);
        println!("relative gap (p - ratio_hi) / p = {:.6}", r.relative_gap());
        println!("solves: {}", r.evaluations);
    }
    Ok(0)
}
