//! Many runs on a bounded rayon pool, aggregated into one CSV.

use std::collections::BTreeSet;
use std::path::Path;

use rayon::prelude::*;
use vrmass_core::mass::fmt;

use crate::config::RunConfig;
use crate::run::{run, Outcome};

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub run: usize,
    pub out: String,
    pub subcommand: String,
    pub family: String,
    pub intervals: usize,
    pub amplitude: f64,
    pub eps: f64,
    pub delta: f64,
    pub exit_code: i32,
    pub error: String,
    pub mass: Option<f64>,
    pub rate_gap: Option<f64>,
    pub monotone: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.exit_code != 0).count()
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> vrmass_core::Result<()> {
        let opt = |v: Option<f64>| v.map(fmt).unwrap_or_default();
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "run", "out", "subcommand", "family", "intervals", "amplitude", "eps", "delta", "exit_code", "mass", "rate_gap",
            "monotone", "error",
        ])?;
        for r in &self.rows {
            out.write_record([
                r.run.to_string(),
                r.out.clone(),
                r.subcommand.clone(),
                r.family.clone(),
                r.intervals.to_string(),
                fmt(r.amplitude),
                fmt(r.eps),
                fmt(r.delta),
                r.exit_code.to_string(),
                opt(r.mass),
                opt(r.rate_gap),
                r.monotone.map(|b| b.to_string()).unwrap_or_default(),
                r.error.clone(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Rejects configs whose output directories coincide.
pub fn check_outputs(configs: &[RunConfig]) -> Result<(), String> {
    let mut seen = BTreeSet::new();
    for c in configs {
        let key = c.out.components().collect::<std::path::PathBuf>();
        if !seen.insert(key) {
            return Err(format!("duplicate output path {}", c.out.display()));
        }
    }
    Ok(())
}

fn row(k: usize, c: &RunConfig, o: &Outcome) -> SweepRow {
    SweepRow {
        run: k,
        out: c.out.display().to_string(),
        subcommand: c.subcommand.to_string(),
        family: c.family.to_string(),
        intervals: c.intervals,
        amplitude: c.amplitude,
        eps: c.eps,
        delta: c.delta,
        exit_code: o.code,
        error: o.error.as_ref().map(|e| e.message()).unwrap_or_default(),
        mass: o.summary.mass,
        rate_gap: o.summary.rate_gap,
        monotone: o.summary.monotone,
    }
}

/// Run every config with at most `threads` at a time. Rows keep the input
/// order; a failed run is recorded and the others continue.
pub fn sweep(configs: &[RunConfig], threads: usize) -> Result<SweepReport, String> {
    check_outputs(configs)?;
    if configs.is_empty() {
        return Ok(SweepReport::default());
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build().map_err(|e| e.to_string())?;
    let rows = pool.install(|| configs.par_iter().enumerate().map(|(k, c)| row(k, c, &run(c))).collect());
    Ok(SweepReport { rows })
}

/// Sweep and write `sweep.csv` under `root`.
pub fn sweep_into(configs: &[RunConfig], threads: usize, root: &Path) -> Result<SweepReport, String> {
    let report = sweep(configs, threads)?;
    std::fs::create_dir_all(root).map_err(|e| e.to_string())?;
    let f = std::fs::File::create(root.join("sweep.csv")).map_err(|e| e.to_string())?;
    report.write_csv(std::io::BufWriter::new(f)).map_err(|e| e.to_string())?;
    Ok(report)
}
