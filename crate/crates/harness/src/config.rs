//! Flat `key = value` run configuration.
//!
//! Keys mirror the command-line flags (`record_every` for `--record-every`).
//! Lines starting with `#` and blank lines are ignored; trailing `# ...`
//! comments are stripped. Unknown keys are rejected.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    /// Syntax or type error at a config line or a command-line flag.
    #[error("{at}: {msg}")]
    Parse { at: String, msg: String },
    /// Every violated range check, in key order.
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
    #[error("cannot read {path}: {msg}")]
    Io { path: String, msg: String },
}

/// Every parameter settable from the command line or a config file.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub p: f64,
    pub lambda: f64,
    pub n: usize,
    pub length: f64,
    pub dt: f64,
    pub record_every: usize,
    /// Soliton velocities, ascending and distinct after validation.
    pub betas: Vec<f64>,
    /// Empty means all zero.
    pub shifts: Vec<f64>,
    /// Single velocity for `spectrum`.
    pub beta: f64,
    pub t0: f64,
    pub t1: f64,
    pub t: f64,
    pub s0: f64,
    pub cutoff_l: f64,
    pub eps0: f64,
    pub min_separation: f64,
    pub g_tol: f64,
    pub budget: usize,
    pub snapshot_every: f64,
    /// Record the distance to the nominal soliton sum in `evolve`.
    pub reference: bool,
    pub init: Option<PathBuf>,
    pub state: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub out_csv: Option<PathBuf>,
    pub out_snapshots: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub workers: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            p: 3.0,
            lambda: 1.0,
            n: 4096,
            length: 60.0,
            dt: 0.005,
            record_every: 10,
            betas: vec![-0.3, 0.4],
            shifts: Vec::new(),
            beta: 0.0,
            t0: 8.0,
            t1: 15.0,
            t: 15.0,
            s0: 15.0,
            cutoff_l: 8.0,
            eps0: 0.5,
            min_separation: 3.0,
            g_tol: 0.1,
            budget: 60,
            snapshot_every: 1.0,
            reference: false,
            init: None,
            state: None,
            out: None,
            out_csv: None,
            out_snapshots: None,
            out_dir: PathBuf::from("out"),
            workers: 1,
            seed: 0,
        }
    }
}

pub const KEYS: &[&str] = &[
    "p",
    "lambda",
    "n",
    "length",
    "dt",
    "record_every",
    "betas",
    "shifts",
    "beta",
    "t0",
    "t1",
    "t",
    "s0",
    "cutoff_l",
    "eps0",
    "min_separation",
    "g_tol",
    "budget",
    "snapshot_every",
    "reference",
    "init",
    "state",
    "out",
    "out_csv",
    "out_snapshots",
    "out_dir",
    "workers",
    "seed",
];

fn num<T: FromStr>(v: &str) -> Result<T, String> {
    v.trim().parse().map_err(|_| format!("cannot parse {v:?} as a number"))
}

fn list(v: &str) -> Result<Vec<f64>, String> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(num).collect()
}

fn path(v: &str) -> Option<PathBuf> {
    let v = v.trim();
    (!v.is_empty()).then(|| PathBuf::from(v))
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")
}

fn show(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl RunConfig {
    /// Set one key from its textual value; no range checks.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let v = value.trim();
        match key {
            "p" => self.p = num(v)?,
            "lambda" => self.lambda = num(v)?,
            "n" => self.n = num(v)?,
            "length" => self.length = num(v)?,
            "dt" => self.dt = num(v)?,
            "record_every" => self.record_every = num(v)?,
            "betas" => self.betas = list(v)?,
            "shifts" => self.shifts = list(v)?,
            "beta" => self.beta = num(v)?,
            "t0" => self.t0 = num(v)?,
            "t1" => self.t1 = num(v)?,
            "t" => self.t = num(v)?,
            "s0" => self.s0 = num(v)?,
            "cutoff_l" => self.cutoff_l = num(v)?,
            "eps0" => self.eps0 = num(v)?,
            "min_separation" => self.min_separation = num(v)?,
            "g_tol" => self.g_tol = num(v)?,
            "budget" => self.budget = num(v)?,
            "snapshot_every" => self.snapshot_every = num(v)?,
            "reference" => {
                self.reference = match v {
                    "true" | "1" | "yes" => true,
                    "false" | "0" | "no" => false,
                    _ => return Err(format!("expected true or false, got {v:?}")),
                }
            }
            "init" => self.init = path(v),
            "state" => self.state = path(v),
            "out" => self.out = path(v),
            "out_csv" => self.out_csv = path(v),
            "out_snapshots" => self.out_snapshots = path(v),
            "out_dir" => self.out_dir = PathBuf::from(v),
            "workers" => self.workers = num(v)?,
            "seed" => self.seed = num(v)?,
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    /// Textual value of a key, in the form accepted by [`RunConfig::set`].
    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "p" => format!("{:?}", self.p),
            "lambda" => format!("{:?}", self.lambda),
            "n" => self.n.to_string(),
            "length" => format!("{:?}", self.length),
            "dt" => format!("{:?}", self.dt),
            "record_every" => self.record_every.to_string(),
            "betas" => join(&self.betas),
            "shifts" => join(&self.shifts),
            "beta" => format!("{:?}", self.beta),
            "t0" => format!("{:?}", self.t0),
            "t1" => format!("{:?}", self.t1),
            "t" => format!("{:?}", self.t),
            "s0" => format!("{:?}", self.s0),
            "cutoff_l" => format!("{:?}", self.cutoff_l),
            "eps0" => format!("{:?}", self.eps0),
            "min_separation" => format!("{:?}", self.min_separation),
            "g_tol" => format!("{:?}", self.g_tol),
            "budget" => self.budget.to_string(),
            "snapshot_every" => format!("{:?}", self.snapshot_every),
            "reference" => self.reference.to_string(),
            "init" => show(&self.init),
            "state" => show(&self.state),
            "out" => show(&self.out),
            "out_csv" => show(&self.out_csv),
            "out_snapshots" => show(&self.out_snapshots),
            "out_dir" => self.out_dir.display().to_string(),
            "workers" => self.workers.to_string(),
            "seed" => self.seed.to_string(),
            _ => return None,
        })
    }

    /// Shifts padded with zeros to one per soliton.
    pub fn shifts_or_zero(&self) -> Vec<f64> {
        if self.shifts.is_empty() {
            vec![0.0; self.betas.len()]
        } else {
            self.shifts.clone()
        }
    }

    /// Range checks; sorts the velocities (carrying shifts along) and
    /// reports every violation at once.
    pub fn validate(&mut self) -> Result<(), ConfigError> {
        let mut bad = Vec::new();
        let mut need = |ok: bool, msg: String| {
            if !ok {
                bad.push(msg);
            }
        };
        let pos = |x: f64| x.is_finite() && x > 0.0;
        need(self.p.is_finite() && self.p > 1.0, format!("p = {} must exceed 1", self.p));
        need(pos(self.lambda), format!("lambda = {} must be positive", self.lambda));
        need(
            self.n >= 16 && self.n.is_power_of_two(),
            format!("n = {} must be a power of two >= 16", self.n),
        );
        need(pos(self.length), format!("length = {} must be positive", self.length));
        need(pos(self.dt), format!("dt = {} must be positive", self.dt));
        need(self.record_every >= 1, "record_every must be at least 1".into());
        need(!self.betas.is_empty(), "betas must list at least one velocity".into());
        for b in &self.betas {
            need(b.abs() < 1.0, format!("velocity {b} must satisfy |beta| < 1"));
        }
        need(self.beta.abs() < 1.0, format!("beta = {} must satisfy |beta| < 1", self.beta));
        if !self.shifts.is_empty() {
            need(
                self.shifts.len() == self.betas.len(),
                format!("{} shifts for {} velocities", self.shifts.len(), self.betas.len()),
            );
            for x in &self.shifts {
                need(x.is_finite(), format!("shift {x} is not finite"));
            }
        }
        if self.shifts.is_empty() || self.shifts.len() == self.betas.len() {
            let shifts = self.shifts_or_zero();
            let mut pairs: Vec<(f64, f64)> = self.betas.iter().copied().zip(shifts).collect();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            if pairs.iter().map(|p| p.0).ne(self.betas.iter().copied()) {
                log::info!("velocities normalized to ascending order: {}", join(&pairs.iter().map(|p| p.0).collect::<Vec<_>>()));
                self.betas = pairs.iter().map(|p| p.0).collect();
                if !self.shifts.is_empty() {
                    self.shifts = pairs.iter().map(|p| p.1).collect();
                }
            }
            if let Some(w) = self.betas.windows(2).find(|w| w[0] == w[1]) {
                need(false, format!("velocities must be distinct ({} repeated)", w[0]));
            }
        }
        for (k, v) in [("t0", self.t0), ("t1", self.t1), ("t", self.t), ("s0", self.s0)] {
            need(v.is_finite(), format!("{k} = {v} must be finite"));
        }
        need(self.t0 < self.s0, format!("t0 = {} must be below s0 = {}", self.t0, self.s0));
        need(pos(self.cutoff_l), format!("cutoff_l = {} must be positive", self.cutoff_l));
        need(pos(self.eps0), format!("eps0 = {} must be positive", self.eps0));
        need(pos(self.min_separation), format!("min_separation = {} must be positive", self.min_separation));
        need(pos(self.g_tol), format!("g_tol = {} must be positive", self.g_tol));
        need(self.budget >= 1, "budget must be at least 1".into());
        need(pos(self.snapshot_every), format!("snapshot_every = {} must be positive", self.snapshot_every));
        need(self.workers >= 1, "workers must be at least 1".into());
        for (k, p) in [("init", &self.init), ("state", &self.state)] {
            if let Some(p) = p {
                need(p.is_file(), format!("{k} = {} is not a readable file", p.display()));
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(bad))
        }
    }

    /// Apply `key = value` lines from `text` on top of `self`.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), ConfigError> {
        for (i, key, value) in lines(text, origin)? {
            self.set(&key, &value).map_err(|msg| ConfigError::Parse {
                at: format!("{origin}:{i}"),
                msg,
            })?;
        }
        Ok(())
    }

    /// Every key in canonical order; parses back to the same config.
    pub fn render(&self) -> String {
        let mut s = String::new();
        for k in KEYS {
            writeln!(s, "{k} = {}", self.get(k).unwrap()).unwrap();
        }
        s
    }
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// Non-empty `(line number, key, value)` triples.
fn lines(text: &str, origin: &str) -> Result<Vec<(usize, String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ConfigError::Parse {
                at: format!("{origin}:{}", i + 1),
                msg: format!("expected `key = value`, got {line:?}"),
            });
        };
        out.push((i + 1, k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Parse and validate a config text on top of the defaults.
pub fn parse_config_str(text: &str) -> Result<RunConfig, ConfigError> {
    let mut c = RunConfig::default();
    c.apply_text(text, "<config>")?;
    c.validate()?;
    Ok(c)
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    })
}

/// Defaults, then the file (if any), then command-line overrides given as
/// `(flag key, value)` pairs.
pub fn parse_config(path: Option<&Path>, flags: &[(&str, String)]) -> Result<RunConfig, ConfigError> {
    parse_config_onto(RunConfig::default(), path, flags)
}

/// As [`parse_config`], starting from `base` instead of the defaults.
pub fn parse_config_onto(base: RunConfig, path: Option<&Path>, flags: &[(&str, String)]) -> Result<RunConfig, ConfigError> {
    let mut c = base;
    if let Some(p) = path {
        c.apply_text(&read(p)?, &p.display().to_string())?;
    }
    apply_flags(&mut c, flags)?;
    c.validate()?;
    Ok(c)
}

fn apply_flags(c: &mut RunConfig, flags: &[(&str, String)]) -> Result<(), ConfigError> {
    for (k, v) in flags {
        c.set(k, v).map_err(|msg| ConfigError::Parse {
            at: format!("--{}", k.replace('_', "-")),
            msg,
        })?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AxisMode {
    /// Every combination, first axis slowest.
    Cross,
    /// The i-th values of all axes together; axes must have equal length.
    Zip,
}

/// One swept key with its textual values.
#[derive(Clone, Debug, PartialEq)]
pub struct Axis {
    pub key: String,
    pub values: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub base: RunConfig,
    pub axes: Vec<Axis>,
    pub mode: AxisMode,
}

impl SweepSpec {
    /// The run configurations in sweep order, each paired with its axis
    /// values. A point that fails validation is kept as an error.
    pub fn points(&self) -> Vec<(Vec<String>, Result<RunConfig, ConfigError>)> {
        let combos: Vec<Vec<usize>> = match self.mode {
            AxisMode::Zip => {
                let len = self.axes.first().map_or(1, |a| a.values.len());
                (0..len).map(|i| vec![i; self.axes.len()]).collect()
            }
            AxisMode::Cross => {
                let mut acc = vec![Vec::new()];
                for a in &self.axes {
                    acc = acc
                        .into_iter()
                        .flat_map(|c| {
                            (0..a.values.len()).map(move |i| {
                                let mut c = c.clone();
                                c.push(i);
                                c
                            })
                        })
                        .collect();
                }
                acc
            }
        };
        combos
            .into_iter()
            .map(|idx| {
                let vals: Vec<String> = idx.iter().zip(&self.axes).map(|(&i, a)| a.values[i].clone()).collect();
                let mut c = self.base.clone();
                let res = vals
                    .iter()
                    .zip(&self.axes)
                    .try_for_each(|(v, a)| {
                        c.set(&a.key, v).map_err(|msg| ConfigError::Parse {
                            at: format!("axis.{}", a.key),
                            msg,
                        })
                    })
                    .and_then(|_| c.validate())
                    .map(|_| c);
                (vals, res)
            })
            .collect()
    }
}

/// Sweep file: run keys plus `axis.<key> = v1; v2; ...` and
/// `axis_mode = cross|zip`. The base config is not validated here, since a
/// sweep may deliberately contain invalid points.
pub fn parse_sweep_str(text: &str, origin: &str, flags: &[(&str, String)]) -> Result<SweepSpec, ConfigError> {
    parse_sweep_onto(RunConfig::default(), text, origin, flags)
}

pub fn parse_sweep_onto(
    mut base: RunConfig,
    text: &str,
    origin: &str,
    flags: &[(&str, String)],
) -> Result<SweepSpec, ConfigError> {
    let mut axes: Vec<Axis> = Vec::new();
    let mut mode = AxisMode::Cross;
    for (i, key, value) in lines(text, origin)? {
        let at = format!("{origin}:{i}");
        if let Some(k) = key.strip_prefix("axis.") {
            if !KEYS.contains(&k) {
                return Err(ConfigError::Parse { at, msg: format!("unknown axis key {k:?}") });
            }
            if axes.iter().any(|a| a.key == k) {
                return Err(ConfigError::Parse { at, msg: format!("axis {k:?} given twice") });
            }
            let values: Vec<String> = value.split(';').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
            if values.is_empty() {
                return Err(ConfigError::Parse { at, msg: format!("axis {k:?} has no values") });
            }
            axes.push(Axis { key: k.to_string(), values });
        } else if key == "axis_mode" {
            mode = match value.as_str() {
                "cross" => AxisMode::Cross,
                "zip" => AxisMode::Zip,
                _ => return Err(ConfigError::Parse { at, msg: format!("axis_mode must be cross or zip, got {value:?}") }),
            };
        } else {
            base.set(&key, &value).map_err(|msg| ConfigError::Parse { at, msg })?;
        }
    }
    apply_flags(&mut base, flags)?;
    if mode == AxisMode::Zip {
        if let Some(a) = axes.iter().find(|a| a.values.len() != axes[0].values.len()) {
            return Err(ConfigError::Invalid(vec![format!(
                "zipped axes differ in length: {} has {}, {} has {}",
                axes[0].key,
                axes[0].values.len(),
                a.key,
                a.values.len()
            )]));
        }
    }
    Ok(SweepSpec { base, axes, mode })
}

pub fn parse_sweep(base: RunConfig, path: &Path, flags: &[(&str, String)]) -> Result<SweepSpec, ConfigError> {
    parse_sweep_onto(base, &read(path)?, &path.display().to_string(), flags)
}
