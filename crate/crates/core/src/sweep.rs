//! Parameter-grid studies, the empirical convergence boundary, and result
//! persistence.
//!
//! Grid points are solved independently on a worker pool. Records are
//! collected by grid index, so the output does not depend on the number of
//! workers.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{self, ClassificationReport};
use crate::bvp::{continuation_solve, ContinuationOptions, Outcome};
use crate::error::{Error, ParamError, Result};
use crate::model::SpinParams;

/// Values along one parameter axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Values(Vec<f64>),
    /// `count` equally spaced values from `min` to `max` inclusive.
    Range { min: f64, max: f64, count: usize },
}

impl Axis {
    pub fn single(value: f64) -> Self {
        Axis::Values(vec![value])
    }

    pub fn values(&self) -> Vec<f64> {
        match *self {
            Axis::Values(ref v) => v.clone(),
            Axis::Range { min, max, count } => match count {
                0 => Vec::new(),
                1 => vec![min],
                _ => (0..count)
                    .map(|i| {
                        if i + 1 == count {
                            max
                        } else {
                            min + (max - min) * i as f64 / (count - 1) as f64
                        }
                    })
                    .collect(),
            },
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Axis::Values(v) => v.len(),
            Axis::Range { count, .. } => *count,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl FromStr for Axis {
    type Err = Error;

    /// `a, b, c` lists the values; `min:max:count` is a range.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let number = |t: &str| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Plan(format!("not a number: {:?}", t.trim())))
        };
        if s.is_empty() {
            return Ok(Axis::Values(Vec::new()));
        }
        if s.contains(':') {
            let parts: Vec<&str> = s.split(':').collect();
            let [min, max, count] = parts[..] else {
                return Err(Error::Plan(format!("range must be min:max:count, got {s:?}")));
            };
            let count = count
                .trim()
                .parse::<usize>()
                .map_err(|_| Error::Plan(format!("range count must be a positive integer, got {count:?}")))?;
            if count == 0 {
                return Err(Error::Plan("range count must be at least 1".into()));
            }
            let (min, max) = (number(min)?, number(max)?);
            if min > max {
                return Err(Error::Plan(format!("range minimum {min} exceeds maximum {max}")));
            }
            return Ok(Axis::Range { min, max, count });
        }
        s.split(',').map(number).collect::<Result<Vec<_>>>().map(Axis::Values)
    }
}

/// How the viscosity axis is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaAxis {
    Delta(Axis),
    /// Values of `delta / epsilon²`, scaled by each `epsilon` of the grid.
    Ratio(Axis),
}

impl DeltaAxis {
    fn axis(&self) -> &Axis {
        match self {
            DeltaAxis::Delta(a) | DeltaAxis::Ratio(a) => a,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub delta: DeltaAxis,
    pub epsilon: Axis,
    pub kappa: Axis,
    pub length: f64,
    pub tol: f64,
    /// Worker count; 0 lets the pool choose.
    pub jobs: usize,
}

impl SweepPlan {
    pub fn new(delta: DeltaAxis, epsilon: Axis, kappa: Axis) -> Self {
        Self {
            delta,
            epsilon,
            kappa,
            length: SpinParams::DEFAULT_LENGTH,
            tol: 1e-8,
            jobs: 0,
        }
    }

    /// A plan with no grid points.
    pub fn empty() -> Self {
        Self::new(
            DeltaAxis::Delta(Axis::Values(Vec::new())),
            Axis::Values(Vec::new()),
            Axis::Values(Vec::new()),
        )
    }

    /// Parses the flat `key = value` plan format.
    ///
    /// Keys are `delta` or `ratio` (exactly one), `epsilon`, `kappa`, and
    /// optionally `length`, `tol` and `jobs`. Axis values are comma lists or
    /// `min:max:count` ranges. `#` starts a comment. A file without any axis
    /// key is the empty plan.
    pub fn parse(text: &str) -> Result<Self> {
        let mut plan = Self::empty();
        let (mut delta, mut ratio, mut epsilon, mut kappa) = (None, None, None, None);
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Plan(format!("line {}: expected key = value", lineno + 1)));
            };
            let at = |e: Error| match e {
                Error::Plan(m) => Error::Plan(format!("line {}: {m}", lineno + 1)),
                other => other,
            };
            let scalar = |v: &str| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Plan(format!("line {}: not a number: {:?}", lineno + 1, v.trim())))
            };
            let slot = match key.trim() {
                "delta" => &mut delta,
                "ratio" => &mut ratio,
                "epsilon" => &mut epsilon,
                "kappa" => &mut kappa,
                "length" => {
                    plan.length = scalar(value)?;
                    continue;
                }
                "tol" => {
                    plan.tol = scalar(value)?;
                    continue;
                }
                "jobs" => {
                    plan.jobs = value.trim().parse().map_err(|_| {
                        Error::Plan(format!("line {}: jobs must be a nonnegative integer", lineno + 1))
                    })?;
                    continue;
                }
                other => {
                    return Err(Error::Plan(format!("line {}: unknown key {other:?}", lineno + 1)))
                }
            };
            if slot.is_some() {
                return Err(Error::Plan(format!("line {}: duplicate key {:?}", lineno + 1, key.trim())));
            }
            *slot = Some(value.parse::<Axis>().map_err(at)?);
        }
        if delta.is_some() && ratio.is_some() {
            return Err(Error::Plan("give either delta or ratio, not both".into()));
        }
        let any_axis = delta.is_some() || ratio.is_some() || epsilon.is_some() || kappa.is_some();
        if any_axis {
            let missing = |name: &str| Error::Plan(format!("missing axis {name:?}"));
            plan.delta = match (delta, ratio) {
                (Some(d), None) => DeltaAxis::Delta(d),
                (None, Some(r)) => DeltaAxis::Ratio(r),
                _ => return Err(missing("delta")),
            };
            plan.epsilon = epsilon.ok_or_else(|| missing("epsilon"))?;
            plan.kappa = kappa.ok_or_else(|| missing("kappa"))?;
        }
        plan.validate()?;
        Ok(plan)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Checks every grid point and the solver settings.
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::Plan(format!("tolerance must be positive, got {}", self.tol)));
        }
        SpinParams::new(0.0, 1.0, 0.0, self.length).map_err(plan_error)?;
        for p in self.grid()? {
            p.require_viscous().map_err(plan_error)?;
        }
        Ok(())
    }

    /// Grid points in iteration order: `epsilon` outermost, then `kappa`,
    /// then `delta`.
    pub fn grid(&self) -> Result<Vec<SpinParams>> {
        let deltas = self.delta.axis().values();
        let mut points = Vec::with_capacity(self.len());
        for eps in self.epsilon.values() {
            for kappa in self.kappa.values() {
                for &d in &deltas {
                    let delta = match self.delta {
                        DeltaAxis::Delta(_) => d,
                        DeltaAxis::Ratio(_) => d * eps * eps,
                    };
                    points.push(SpinParams::new(delta, eps, kappa, self.length).map_err(plan_error)?);
                }
            }
        }
        Ok(points)
    }

    pub fn len(&self) -> usize {
        self.delta.axis().len() * self.epsilon.len() * self.kappa.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn plan_error(e: ParamError) -> Error {
    Error::Plan(e.to_string())
}

/// Result of one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub params: SpinParams,
    pub outcome: Outcome,
    pub q0: Option<f64>,
    pub classification: Option<ClassificationReport>,
    pub ratio: f64,
    pub p_kappa: f64,
    /// Seconds spent on the point.
    pub wall_time: f64,
}

/// Solves and classifies one parameter point.
pub fn solve_point(params: &SpinParams, tol: f64) -> SweepRecord {
    let start = Instant::now();
    let report = continuation_solve(params, &ContinuationOptions::with_tol(tol));
    let (outcome, q0, classification) = match report {
        Ok(report) => match (&report.outcome, &report.solution) {
            (Outcome::Converged, Some(sol)) => (
                report.outcome.clone(),
                Some(sol.left()[1]),
                analysis::classify(sol, params).ok(),
            ),
            _ => (report.outcome, None, None),
        },
        Err(e) => (Outcome::DomainExit(e.to_string()), None, None),
    };
    SweepRecord {
        params: *params,
        outcome,
        q0,
        classification,
        ratio: params.ratio(),
        p_kappa: analysis::p_kappa(params.kappa()),
        wall_time: start.elapsed().as_secs_f64(),
    }
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Io(format!("cannot start worker pool: {e}")))
}

/// Solves every grid point of `plan`; failures are recorded, not raised.
pub fn run_sweep(plan: &SweepPlan) -> Result<Vec<SweepRecord>> {
    run_sweep_until(plan, &AtomicBool::new(false))
}

/// Like [`run_sweep`], but grid points not yet started once `stop` is set
/// are skipped. The records that were completed come back in grid order.
pub fn run_sweep_until(plan: &SweepPlan, stop: &AtomicBool) -> Result<Vec<SweepRecord>> {
    plan.validate()?;
    let points = plan.grid()?;
    let tol = plan.tol;
    let done: Vec<Option<SweepRecord>> = pool(plan.jobs)?.install(|| {
        points
            .par_iter()
            .map(|p| (!stop.load(Ordering::Relaxed)).then(|| solve_point(p, tol)))
            .collect()
    });
    Ok(done.into_iter().flatten().collect())
}

/// One CSV row of a sweep export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub delta: f64,
    pub epsilon: f64,
    pub kappa: f64,
    pub length: f64,
    pub ratio: f64,
    pub p_kappa: f64,
    pub outcome: String,
    pub q0: Option<f64>,
    pub q0_lower: f64,
    pub q0_upper: f64,
    pub u_dd0_analytic: Option<f64>,
    pub u_dd0_numeric: Option<f64>,
    #[serde(rename = "uL_dd0_analytic")]
    pub ul_dd0_analytic: Option<f64>,
    pub p1: Option<bool>,
    pub p2: Option<bool>,
    pub p3: Option<bool>,
    pub in_bounds: Option<bool>,
    pub wall_time: Option<f64>,
}

pub const CSV_COLUMNS: [&str; 18] = [
    "delta",
    "epsilon",
    "kappa",
    "length",
    "ratio",
    "p_kappa",
    "outcome",
    "q0",
    "q0_lower",
    "q0_upper",
    "u_dd0_analytic",
    "u_dd0_numeric",
    "uL_dd0_analytic",
    "p1",
    "p2",
    "p3",
    "in_bounds",
    "wall_time",
];

impl SweepRecord {
    pub fn to_row(&self) -> SweepRow {
        let p = &self.params;
        let bounds = analysis::q0_bounds(p);
        let c = self.classification.as_ref();
        SweepRow {
            delta: p.delta(),
            epsilon: p.epsilon(),
            kappa: p.kappa(),
            length: p.length(),
            ratio: self.ratio,
            p_kappa: self.p_kappa,
            outcome: self.outcome.label().to_string(),
            q0: self.q0,
            q0_lower: bounds.lower,
            q0_upper: bounds.upper,
            u_dd0_analytic: c.map(|c| c.u_dd0_analytic),
            u_dd0_numeric: c.map(|c| c.u_dd0_numeric),
            ul_dd0_analytic: c.map(|c| c.ul_dd0_analytic),
            p1: c.map(|c| c.p1),
            p2: c.map(|c| c.p2),
            p3: c.map(|c| c.p3),
            in_bounds: c.map(|c| c.in_bounds),
            wall_time: Some(self.wall_time),
        }
    }
}

/// Round-trippable rendering with 17 significant digits.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt_float(x: Option<f64>) -> String {
    x.map(format_float).unwrap_or_default()
}

fn opt_bool(x: Option<bool>) -> String {
    x.map(|b| b.to_string()).unwrap_or_default()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CsvOptions {
    /// Leave the `wall_time` column empty so repeated runs export identical bytes.
    pub wall_time: bool,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self { wall_time: true }
    }
}

pub fn write_csv<W: Write>(records: &[SweepRecord], out: W, opts: CsvOptions) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for rec in records {
        let r = rec.to_row();
        let fields = [
            format_float(r.delta),
            format_float(r.epsilon),
            format_float(r.kappa),
            format_float(r.length),
            format_float(r.ratio),
            format_float(r.p_kappa),
            r.outcome,
            opt_float(r.q0),
            format_float(r.q0_lower),
            format_float(r.q0_upper),
            opt_float(r.u_dd0_analytic),
            opt_float(r.u_dd0_numeric),
            opt_float(r.ul_dd0_analytic),
            opt_bool(r.p1),
            opt_bool(r.p2),
            opt_bool(r.p3),
            opt_bool(r.in_bounds),
            if opts.wall_time { opt_float(r.wall_time) } else { String::new() },
        ];
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != CSV_COLUMNS {
        return Err(Error::Io(format!("unexpected CSV header {header:?}")));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn write_json<W: Write>(records: &[SweepRecord], out: W) -> Result<()> {
    serde_json::to_writer_pretty(out, records)?;
    Ok(())
}

pub fn read_json<R: Read>(input: R) -> Result<Vec<SweepRecord>> {
    Ok(serde_json::from_reader(input)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportFormat {
    Csv,
    Json,
}

/// Writes `records` to `path`.
pub fn export(
    records: &[SweepRecord],
    format: ExportFormat,
    path: impl AsRef<Path>,
    opts: CsvOptions,
) -> Result<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    match format {
        ExportFormat::Csv => write_csv(records, file, opts),
        ExportFormat::Json => write_json(records, file),
    }
}

/// Settings of the boundary search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryOptions {
    pub length: f64,
    pub tol: f64,
    /// Width of the final `delta` bracket.
    pub resolution: f64,
    /// First `delta / epsilon²` of the geometric scan.
    pub start_ratio: f64,
    /// Ratio between consecutive scan points.
    pub growth: f64,
    /// Scanning stops once `delta / epsilon²` exceeds this value.
    pub max_ratio: f64,
    /// Consecutive failures that confirm the upper end of the bracket.
    pub confirmations: usize,
    pub jobs: usize,
}

impl Default for BoundaryOptions {
    fn default() -> Self {
        Self {
            length: SpinParams::DEFAULT_LENGTH,
            tol: 1e-8,
            resolution: 1e-3,
            start_ratio: 0.4,
            growth: 1.5,
            max_ratio: 12.0,
            confirmations: 3,
            jobs: 0,
        }
    }
}

impl BoundaryOptions {
    /// Spacing in `delta` between the first two scan points at `epsilon`.
    pub fn initial_scan_step(&self, epsilon: f64) -> f64 {
        self.start_ratio * (self.growth - 1.0) * epsilon * epsilon
    }
}

/// Bracket on the empirical convergence boundary in `delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryResult {
    pub epsilon: f64,
    pub kappa: f64,
    pub length: f64,
    /// Largest `delta` found to converge.
    pub delta_lo: f64,
    /// Smallest `delta` found to fail.
    pub delta_hi: f64,
    pub ratio_lo: f64,
    pub ratio_hi: f64,
    pub p_kappa: f64,
    /// Number of solves spent.
    pub evaluations: usize,
}

impl BoundaryResult {
    /// `(p - ratio_hi) / p`; nonnegative when the failure sits below the analytic bound.
    pub fn relative_gap(&self) -> f64 {
        (self.p_kappa - self.ratio_hi) / self.p_kappa
    }
}

/// Brackets the largest converging `delta` at fixed `epsilon` and `kappa`.
///
/// A geometric scan in `delta / epsilon²` locates the first failure after
/// which `opts.confirmations` consecutive scan points fail; the bracket is
/// then bisected on the convergence outcome until its width is at most
/// `opts.resolution`.
pub fn find_boundary(epsilon: f64, kappa: f64, opts: &BoundaryOptions) -> Result<BoundaryResult> {
    let base = SpinParams::new(opts.start_ratio * epsilon * epsilon, epsilon, kappa, opts.length)?;
    if !(opts.resolution > 0.0 && opts.resolution.is_finite()) {
        return Err(ParamError::Precondition(format!(
            "resolution must be positive, got {}",
            opts.resolution
        ))
        .into());
    }
    let first_step = opts.initial_scan_step(epsilon);
    if opts.resolution > first_step {
        return Err(ParamError::Precondition(format!(
            "resolution {} exceeds the initial scan step {first_step}",
            opts.resolution
        ))
        .into());
    }
    if !(opts.growth > 1.0 && opts.start_ratio > 0.0 && opts.confirmations >= 1) {
        return Err(ParamError::Precondition("invalid scan settings".into()).into());
    }

    let eps2 = epsilon * epsilon;
    let mut scan = Vec::new();
    let mut ratio = opts.start_ratio;
    while ratio <= opts.max_ratio {
        scan.push(ratio * eps2);
        ratio *= opts.growth;
    }
    let converges = |delta: f64| -> Result<bool> {
        let p = base.with_delta(delta)?;
        Ok(solve_point(&p, opts.tol).outcome.is_converged())
    };

    let workers = pool(opts.jobs)?;
    let batch = workers.current_num_threads().max(1);
    let mut outcomes: Vec<bool> = Vec::new();
    let mut bracket = None;
    while bracket.is_none() && outcomes.len() < scan.len() {
        let end = (outcomes.len() + batch).min(scan.len());
        let chunk = &scan[outcomes.len()..end];
        let results: Vec<Result<bool>> = workers.install(|| chunk.par_iter().map(|&d| converges(d)).collect());
        for r in results {
            outcomes.push(r?);
        }
        bracket = scan_bracket(&outcomes, opts.confirmations);
    }
    let evaluations = outcomes.len();
    if outcomes.first() == Some(&false) {
        return Err(Error::NoBracket(format!(
            "smallest scanned delta = {} fails to converge",
            scan[0]
        )));
    }
    let Some((lo, hi)) = bracket else {
        return Err(Error::NoBracket(format!(
            "no confirmed failure up to delta / epsilon^2 = {}",
            opts.max_ratio
        )));
    };

    let (mut delta_lo, mut delta_hi) = (scan[lo], scan[hi]);
    let mut evaluations = evaluations;
    while delta_hi - delta_lo > opts.resolution {
        let mid = 0.5 * (delta_lo + delta_hi);
        evaluations += 1;
        if converges(mid)? {
            delta_lo = mid;
        } else {
            delta_hi = mid;
        }
    }
    Ok(BoundaryResult {
        epsilon,
        kappa,
        length: opts.length,
        delta_lo,
        delta_hi,
        ratio_lo: delta_lo / eps2,
        ratio_hi: delta_hi / eps2,
        p_kappa: analysis::p_kappa(kappa),
        evaluations,
    })
}

/// Indices `(last success, first failure)` once a failure is followed by
/// `confirmations - 1` further failures with no success in between.
fn scan_bracket(outcomes: &[bool], confirmations: usize) -> Option<(usize, usize)> {
    let mut last_success = None;
    let mut run = 0;
    for (i, &ok) in outcomes.iter().enumerate() {
        if ok {
            last_success = Some(i);
            run = 0;
        } else {
            run += 1;
            if run >= confirmations {
                return last_success.map(|s| (s, s + 1));
            }
        }
    }
    None
}

/// Human-readable table of a sweep, one line per record.
pub fn summary(records: &[SweepRecord]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:>10} {:>8} {:>8} {:>9} {:>8} {:>15} {:>12}",
        "delta", "epsilon", "kappa", "ratio", "p", "outcome", "q0"
    );
    for r in records {
        let _ = writeln!(
            s,
            "{:>10.5} {:>8.4} {:>8.4} {:>9.4} {:>8.4} {:>15} {:>12}",
            r.params.delta(),
            r.params.epsilon(),
            r.params.kappa(),
            r.ratio,
            r.p_kappa,
            r.outcome.label(),
            r.q0.map(|q| format!("{q:.6}")).unwrap_or_else(|| "-".into())
        );
    }
    s
}
