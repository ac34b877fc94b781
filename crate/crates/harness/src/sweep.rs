//! Parameter sweeps over the shooting pipeline on a worker pool.
//!
//! One worker per run; runs share nothing mutable and write to disjoint
//! directories `run_000`, `run_001`, ... under the output root. The
//! aggregate depends only on the sweep file, never on the worker count.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::config::SweepSpec;
use crate::pipeline::{shoot, ShootSummary};
use crate::table::{self, header, real};
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct SweepRow {
    pub index: usize,
    pub axis_values: Vec<String>,
    pub outcome: std::result::Result<ShootSummary, String>,
    pub seconds: f64,
}

impl SweepRow {
    pub fn converged(&self) -> bool {
        matches!(&self.outcome, Ok(s) if s.converged)
    }
}

#[derive(Clone, Debug)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub root: PathBuf,
}

impl SweepReport {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| !r.converged()).count()
    }
}

fn one_line(s: &str) -> String {
    s.split('\n').map(str::trim).collect::<Vec<_>>().join("; ")
}

fn run_dir(root: &Path, i: usize) -> PathBuf {
    root.join(format!("run_{i:03}"))
}

/// Run every sweep point with `workers` threads and write `aggregate.csv`
/// (deterministic) and `timings.csv` (wall-clock) under `root`.
pub fn run_sweep(spec: &SweepSpec, workers: usize, root: &Path) -> Result<SweepReport> {
    std::fs::create_dir_all(root)?;
    let points = spec.points();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Usage(e.to_string()))?;
    let rows: Vec<SweepRow> = pool.install(|| {
        points
            .into_par_iter()
            .enumerate()
            .map(|(index, (axis_values, cfg))| {
                let start = Instant::now();
                let outcome = match cfg {
                    Err(e) => Err(e.to_string()),
                    Ok(mut c) => {
                        c.out_dir = run_dir(root, index);
                        match catch_unwind(AssertUnwindSafe(|| shoot(&c))) {
                            Ok(Ok(s)) => Ok(s),
                            Ok(Err(e)) => Err(e.to_string()),
                            Err(_) => Err("run panicked".to_string()),
                        }
                    }
                };
                if let Err(e) = &outcome {
                    log::warn!("run {index} failed: {e}");
                }
                SweepRow { index, axis_values, outcome, seconds: start.elapsed().as_secs_f64() }
            })
            .collect()
    });
    let report = SweepReport { rows, root: root.to_path_buf() };
    write_aggregate(spec, &report)?;
    Ok(report)
}

fn write_aggregate(spec: &SweepSpec, report: &SweepReport) -> Result<()> {
    let mut h = header(&["run"]);
    h.extend(spec.axes.iter().map(|a| a.key.clone()));
    h.extend(header(&["converged", "runs", "aim", "gamma0", "decay_exponent", "error"]));
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            let mut row = vec![r.index.to_string()];
            row.extend(r.axis_values.iter().cloned());
            match &r.outcome {
                Ok(s) => row.extend([
                    s.converged.to_string(),
                    s.runs.to_string(),
                    s.aim.iter().map(|&a| real(a)).collect::<Vec<_>>().join(";"),
                    real(s.gamma0),
                    real(s.decay_exponent),
                    String::new(),
                ]),
                Err(e) => row.extend(["false".into(), String::new(), String::new(), String::new(), String::new(), one_line(e)]),
            }
            row
        })
        .collect();
    table::write(&report.root.join("aggregate.csv"), &h, &rows)?;
    let timings: Vec<Vec<String>> = report.rows.iter().map(|r| vec![r.index.to_string(), format!("{:.3}", r.seconds)]).collect();
    table::write(&report.root.join("timings.csv"), &header(&["run", "seconds"]), &timings)
}
