//! Subcommand dispatch and artifacts.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vrmass_core::constraints::InitialDataSet;
use vrmass_core::evolution::*;
use vrmass_core::families::*;
use vrmass_core::geometry::*;
use vrmass_core::mass::{fmt, vr_mass, Extrapolation, GateMode, MassPolicy};
use vrmass_core::reduced::*;
use vrmass_core::variation::*;
use vrmass_core::Error;

use crate::config::*;
use crate::verify;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_GATE: i32 = 3;

#[derive(Debug)]
pub enum RunError {
    Config(String),
    Core(Error),
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        RunError::Core(e)
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Core(Error::from(e))
    }
}

impl RunError {
    /// Precondition and chart errors come from a setup the config allowed but
    /// the modules refuse, so they count as config errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => EXIT_CONFIG,
            RunError::Core(Error::Gate(_)) => EXIT_GATE,
            RunError::Core(Error::Precondition(_) | Error::Chart(_)) => EXIT_CONFIG,
            RunError::Core(_) => EXIT_SOLVER,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            RunError::Config(_) => "config",
            RunError::Core(e) => match e {
                Error::Chart(_) => "chart",
                Error::Metric(_) => "metric",
                Error::Singular { .. } => "singular",
                Error::Precondition(_) => "precondition",
                Error::Decay(_) => "decay",
                Error::Gate(_) => "gate",
                Error::Solver(_) => "solver",
                Error::Io(_) => "io",
            },
        }
    }

    pub fn message(&self) -> String {
        match self {
            RunError::Config(m) => m.clone(),
            RunError::Core(e) => e.to_string(),
        }
    }
}

type RunResult<T> = std::result::Result<T, RunError>;

/// Numbers a sweep aggregates, plus free-form key = value lines for summary.txt.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Summary {
    pub entries: Vec<(String, String)>,
    pub mass: Option<f64>,
    pub rate_gap: Option<f64>,
    pub monotone: Option<bool>,
    /// Printed on stdout by the binary (the verify table).
    pub table: Option<String>,
}

impl Summary {
    fn put(&mut self, k: &str, v: impl ToString) {
        self.entries.push((k.to_string(), v.to_string()));
    }
}

#[derive(Debug)]
pub struct Outcome {
    pub code: i32,
    pub summary: Summary,
    pub error: Option<RunError>,
}

fn chart_of(cfg: &RunConfig, intervals: usize) -> RunResult<Arc<RadialChart>> {
    let inner = match cfg.inner {
        Inner::Center => InnerMode::RegularCenter,
        Inner::Excision => InnerMode::Excision,
        Inner::TwoEnded => InnerMode::TwoEnded,
    };
    let spacing = match cfg.spacing {
        SpacingKind::Uniform => Spacing::Uniform,
        SpacingKind::Exponential => Spacing::Exponential { strength: cfg.spacing_strength },
    };
    let p = ChartParams::new(intervals, cfg.r_max, inner).with_r0(cfg.r0).with_radii(&cfg.radii).with_spacing(spacing);
    Ok(Arc::new(build_chart(&p)?))
}

fn fiber_of(cfg: &RunConfig) -> FiberSpec {
    match cfg.fiber {
        FiberKind::Sphere => FiberSpec { total_volume: cfg.fiber_volume, ..FiberSpec::unit_sphere(cfg.n - 1) },
        FiberKind::Hyperbolic => FiberSpec::hyperbolic(cfg.n - 1, cfg.fiber_volume),
    }
}

fn policy_of(cfg: &RunConfig) -> MassPolicy {
    MassPolicy {
        extrapolation: match cfg.extrapolation {
            ExtrapolationKind::Fit => Extrapolation::Fit,
            ExtrapolationKind::Last => Extrapolation::LastValue,
        },
        gate: match cfg.gate {
            GateKind::Enforce => GateMode::Enforce,
            GateKind::Skip => GateMode::Skip,
        },
    }
}

fn newton_of(cfg: &RunConfig) -> NewtonOptions {
    NewtonOptions { tol: cfg.newton_tol, max_iter: cfg.newton_max_iter }
}

/// Reduced point for the families that have one.
fn reduced_point(cfg: &RunConfig, chart: Arc<RadialChart>) -> RunResult<ReducedPoint> {
    let fiber = fiber_of(cfg);
    match cfg.family {
        Family::Background => Ok(ReducedPoint::background(chart, fiber)?),
        Family::Tt => {
            let g = WarpedMetric::reference(chart, fiber)?;
            let p = radial_tt_family(&g, cfg.amplitude)?;
            Ok(ReducedPoint::new(g, p))
        }
        f => Err(RunError::Config(format!("family {f} has no reduced point; use background or tt"))),
    }
}

/// Initial data of the configured family.
fn data_of(cfg: &RunConfig, chart: Arc<RadialChart>) -> RunResult<InitialDataSet> {
    let fiber = fiber_of(cfg);
    Ok(match cfg.family {
        Family::Background => InitialDataSet::milne(chart, fiber)?,
        Family::Kottler => kottler_data(chart, fiber, cfg.eps, cfg.delta, cfg.kottler_mass)?,
        Family::Conformal => {
            let ex = conformal_excess(&chart, cfg.eps, cfg.delta);
            conformal_data(chart, fiber, &ex)?
        }
        Family::Compact => {
            let a = cfg.amplitude;
            compact_data(chart, fiber, [a, -0.5 * a, 0.5 * a, 0.25 * a], cfg.bump_center, cfg.bump_width, false)?
        }
        Family::Tt => {
            let pt = reduced_point(cfg, chart)?;
            let phi = solve_lichnerowicz(&pt, newton_of(cfg))?;
            reconstruct_data(&pt, &phi)?
        }
    })
}

fn create(dir: &Path, name: &str) -> RunResult<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_kv(dir: &Path, name: &str, entries: &[(String, String)]) -> RunResult<()> {
    let mut w = create(dir, name)?;
    for (k, v) in entries {
        writeln!(w, "{k} = {v}")?;
    }
    w.flush()?;
    Ok(())
}

fn run_mass(cfg: &RunConfig, dir: &Path, s: &mut Summary) -> RunResult<()> {
    let d = data_of(cfg, chart_of(cfg, cfg.intervals)?)?;
    let r = vr_mass(&d, policy_of(cfg))?;
    r.write_csv(create(dir, "mass.csv")?)?;
    s.put("limit", fmt(r.limit));
    s.put("sigma", fmt(r.sigma));
    s.put("fit_residual", fmt(r.fit_residual));
    s.put("method", format!("{:?}", r.method));
    s.mass = Some(r.limit);
    Ok(())
}

fn run_lichnerowicz(cfg: &RunConfig, dir: &Path, s: &mut Summary) -> RunResult<()> {
    let pt = reduced_point(cfg, chart_of(cfg, cfg.intervals)?)?;
    let phi = solve_lichnerowicz(&pt, newton_of(cfg))?;
    let mut w = csv::Writer::from_writer(create(dir, "phi.csv")?);
    w.write_record(["r", "phi", "phi_minus_1"]).map_err(Error::from)?;
    for (i, r) in phi.phi.chart.nodes().iter().enumerate() {
        w.write_record([fmt(*r), fmt(phi.phi.values[i]), fmt(phi.excess[i])]).map_err(Error::from)?;
    }
    w.flush()?;
    phi.write_csv(create(dir, "newton.csv")?)?;
    let min_phi = phi.phi.values.iter().cloned().fold(f64::INFINITY, f64::min);
    s.put("iterations", phi.iterations);
    s.put("residual", fmt(phi.residual));
    s.put("min_phi", fmt(min_phi));
    let d = reconstruct_data(&pt, &phi)?;
    let m = vr_mass(&d, policy_of(cfg))?.limit;
    s.put("mass", fmt(m));
    s.mass = Some(m);
    Ok(())
}

fn run_lapse(cfg: &RunConfig, dir: &Path, s: &mut Summary) -> RunResult<()> {
    let d = data_of(cfg, chart_of(cfg, cfg.intervals)?)?;
    let u = lapse_excess(&d)?;
    let mut w = csv::Writer::from_writer(create(dir, "lapse.csv")?);
    w.write_record(["r", "N", "N_minus_1"]).map_err(Error::from)?;
    for (r, x) in d.chart().nodes().iter().zip(&u) {
        w.write_record([fmt(*r), fmt(1.0 + x), fmt(*x)]).map_err(Error::from)?;
    }
    w.flush()?;
    s.put("min_N", fmt(1.0 + u.iter().cloned().fold(f64::INFINITY, f64::min)));
    s.put("max_N", fmt(1.0 + u.iter().cloned().fold(f64::NEG_INFINITY, f64::max)));
    Ok(())
}

fn initial_state(cfg: &RunConfig, intervals: usize) -> RunResult<EvolutionState> {
    let chart = chart_of(cfg, intervals)?;
    Ok(match cfg.family {
        Family::Background => init_milne(chart, fiber_of(cfg), cfg.t0)?,
        Family::Tt => init_perturbed(&reduced_point(cfg, chart)?, cfg.t0)?,
        _ => init_from_data(&data_of(cfg, chart)?, cfg.t0)?,
    })
}

fn run_evolve(cfg: &RunConfig, dir: &Path, s: &mut Summary) -> RunResult<()> {
    let policy = EvolvePolicy { dt: cfg.dt, record_every: cfg.record_every, mass: policy_of(cfg) };
    let s0 = initial_state(cfg, cfg.intervals)?;
    write_snapshot(&s0, create(dir, "snapshot_initial.txt")?)?;
    let tr = evolve(&s0, cfg.t_end, policy)?;
    tr.write_csv(create(dir, "trajectory.csv")?)?;
    write_snapshot(&tr.final_state, create(dir, "snapshot_final.txt")?)?;
    s.put("t_final", fmt(tr.final_state.t));
    s.put("records", tr.records.len());
    if let Some(e) = tr.error {
        return Err(e.into());
    }
    let finer = if cfg.companion {
        let f = evolve(&initial_state(cfg, 2 * cfg.intervals)?, cfg.t_end, policy)?;
        if let Some(e) = f.error {
            return Err(e.into());
        }
        Some(f)
    } else {
        None
    };
    let rep = monotonicity_report(&tr, finer.as_ref(), 1e-8)?;
    let last = tr.records.last().map(|r| r.mass).unwrap_or(f64::NAN);
    s.put("final_mass", fmt(last));
    s.put("max_increment", fmt(rep.max_increment));
    s.put("epsilon_mono", fmt(rep.epsilon_mono));
    s.put("monotone", rep.monotone);
    s.put("milne_like", rep.milne_like);
    s.put("median_rate_gap", fmt(rep.median_rate_gap));
    s.mass = Some(last);
    s.rate_gap = Some(rep.median_rate_gap);
    s.monotone = Some(rep.monotone);
    Ok(())
}

/// Random bump combinations projected onto the TT family and normalized.
pub fn variation_directions(pt: &ReducedPoint, seed: u64, count: usize) -> vrmass_core::Result<Vec<PerturbationPair>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = &pt.gamma.chart;
    (0..count)
        .map(|_| {
            let mut field = || {
                let (x0, w, amp): (f64, f64, f64) = (rng.gen_range(-4.0..4.0), rng.gen_range(1.0..3.0), rng.gen_range(-1.0..1.0));
                Profile::from_fn(c, |r| bump(r, x0, w).map(|v| amp * v))
            };
            let (a, b, p, q) = (field(), field(), field(), field());
            let raw = PerturbationPair { h_rr: a, h_ff: b, r_rr: p.v, r_ff: q.v };
            let d = project_tt(&pt.gamma, &raw)?;
            Ok(d.scaled(1.0 / d.norm(&pt.gamma)))
        })
        .collect()
}

fn run_variation(cfg: &RunConfig, dir: &Path, s: &mut Summary) -> RunResult<()> {
    if cfg.family != Family::Background {
        return Err(RunError::Config("variation is evaluated at the background; set family = background".into()));
    }
    let pt = reduced_point(cfg, chart_of(cfg, cfg.intervals)?)?;
    let g = &pt.gamma;
    let policy = policy_of(cfg);
    let dirs = variation_directions(&pt, cfg.seed, cfg.directions)?;
    let lam = lambda_min_estimate(g)?;
    let (mut first, mut second) = (Vec::new(), Vec::new());
    let mut w = csv::Writer::from_writer(create(dir, "second_variation_formula.csv")?);
    w.write_record(["direction", "formula", "finite_difference", "relative_gap", "h_norm_sq", "r_norm_sq", "lower_bound"])
        .map_err(Error::from)?;
    let mut worst_first: f64 = 0.0;
    let mut worst_gap: f64 = 0.0;
    for (k, d) in dirs.iter().enumerate() {
        let fv = first_variation_pair(&pt, d, cfg.first_eps, policy)?;
        let sv = second_variation_pair(&pt, d, cfg.second_eps, policy)?;
        let f = second_variation_formula(g, d)?;
        let (hh, rr) = (d.h_norm_sq(g), d.r_norm_sq(g));
        let gap = (sv.value - f).abs() / f.abs();
        worst_first = worst_first.max(fv.value.abs().max(fv.value_refined.abs()) / d.norm(g));
        worst_gap = worst_gap.max(gap);
        w.write_record([k.to_string(), fmt(f), fmt(sv.value), fmt(gap), fmt(hh), fmt(rr), fmt(0.5 * lam.value * hh + 2.0 * rr)])
            .map_err(Error::from)?;
        first.push((k, fv));
        second.push((k, sv));
    }
    w.flush()?;
    write_variation_csv(create(dir, "first_variation.csv")?, &first)?;
    write_variation_csv(create(dir, "second_variation.csv")?, &second)?;
    s.put("lambda_min", fmt(lam.value));
    s.put("max_relative_first_variation", fmt(worst_first));
    s.put("max_second_variation_gap", fmt(worst_gap));
    Ok(())
}

fn run_verify(cfg: &RunConfig, dir: &Path, s: &mut Summary) -> RunResult<()> {
    let checks = verify::suite(cfg.seed)?;
    verify::write_csv(create(dir, "verify.csv")?, &checks)?;
    let failed: Vec<&str> = checks.iter().filter(|c| !c.pass()).map(|c| c.name.as_str()).collect();
    s.put("checks", checks.len());
    s.put("failed", failed.len());
    s.table = Some(verify::table(&checks));
    if !failed.is_empty() {
        return Err(RunError::Core(Error::Solver(format!("verify checks failed: {}", failed.join(",")))));
    }
    Ok(())
}

/// Execute one run into `cfg.out`. Writes manifest.txt first, then the
/// subcommand outputs and summary.txt, or error.txt on failure.
pub fn run(cfg: &RunConfig) -> Outcome {
    let dir = cfg.out.as_path();
    let mut summary = Summary::default();
    let prepared = fs::create_dir_all(dir).and_then(|_| fs::write(dir.join("manifest.txt"), cfg.manifest()));
    if let Err(e) = prepared {
        let error = RunError::Config(format!("output directory {} is not writable: {e}", dir.display()));
        return Outcome { code: EXIT_CONFIG, summary, error: Some(error) };
    }
    let res = match cfg.subcommand {
        Subcommand::Mass => run_mass(cfg, dir, &mut summary),
        Subcommand::Lichnerowicz => run_lichnerowicz(cfg, dir, &mut summary),
        Subcommand::Lapse => run_lapse(cfg, dir, &mut summary),
        Subcommand::Evolve => run_evolve(cfg, dir, &mut summary),
        Subcommand::Variation => run_variation(cfg, dir, &mut summary),
        Subcommand::Verify => run_verify(cfg, dir, &mut summary),
    };
    match res {
        Ok(()) => {
            let _ = fs::remove_file(dir.join("error.txt"));
            let code = match write_kv(dir, "summary.txt", &summary.entries) {
                Ok(()) => EXIT_OK,
                Err(e) => return failed(dir, summary, e),
            };
            Outcome { code, summary, error: None }
        }
        Err(e) => failed(dir, summary, e),
    }
}

fn failed(dir: &Path, summary: Summary, e: RunError) -> Outcome {
    let code = e.exit_code();
    let record = vec![
        ("kind".to_string(), e.kind().to_string()),
        ("exit_code".to_string(), code.to_string()),
        ("message".to_string(), e.message().replace('\n', " ")),
    ];
    let _ = write_kv(dir, "error.txt", &record);
    Outcome { code, summary, error: Some(e) }
}
