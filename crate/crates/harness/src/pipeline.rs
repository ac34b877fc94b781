//! One function per subcommand. Each takes a validated [`RunConfig`],
//! writes its artifacts and returns a summary for printing.

use std::ops::ControlFlow;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nlkg::evolve::{evolve as integrate, EvolveConfig, Trajectory};
use nlkg::modulation::{gamma0, tube_check, ModOptions, ModState, Modulator, TubeStatus};
use nlkg::shoot::{aim, decay_exponent, ShootOptions, ShootProblem, ShootResult};
use nlkg::soliton::{groundstate_power, soliton_sum};
use nlkg::spectral::{eigen_residual, measured_eigenvalue, SpectralPack};
use nlkg::{snapshot, Boost, FieldPair, Grid, GroundState, SolitonParams};

use crate::config::{RunConfig, KEYS};
use crate::table::{self, header, numbered, real, reals};
use crate::{Error, Result};

fn ground(c: &RunConfig, grid: &Grid) -> Result<GroundState> {
    Ok(groundstate_power(c.p, c.lambda, grid)?)
}

fn grid(c: &RunConfig) -> Result<Grid> {
    Ok(Grid::centered(c.n, c.length)?)
}

fn params(c: &RunConfig, gs: &GroundState) -> Result<SolitonParams> {
    Ok(SolitonParams::new(&c.betas, &c.shifts_or_zero(), gs.nonlinearity().clone())?)
}

fn mod_options(c: &RunConfig) -> ModOptions {
    ModOptions {
        eps0: c.eps0,
        min_separation: c.min_separation,
        ..ModOptions::default()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct GroundReport {
    pub q0: f64,
    pub residual: f64,
    pub decay_rate: f64,
}

/// Ground state on the configured grid; saves `(Q, 0)` to `out` if set.
pub fn groundstate(c: &RunConfig) -> Result<GroundReport> {
    let g = grid(c)?;
    let gs = ground(c, &g)?;
    if let Some(out) = &c.out {
        let state = FieldPair::new(gs.profile().clone(), nlkg::ScalarField::zeros(&g))?;
        snapshot::save(out, &state)?;
    }
    Ok(GroundReport {
        q0: gs.amplitude(),
        residual: gs.residual(),
        decay_rate: gs.decay_rate(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumRow {
    pub name: &'static str,
    pub value: f64,
    /// Relative eigen-residual; NaN for the coercivity constants.
    pub residual: f64,
}

/// `lambda0`, `+-sqrt(lambda0)/gamma` and the coercivity constants for the
/// soliton boosted by `beta`.
pub fn spectrum(c: &RunConfig) -> Result<Vec<SpectrumRow>> {
    let g = grid(c)?;
    let gs = ground(c, &g)?;
    let pack = SpectralPack::build(&gs, Boost::new(c.beta)?)?;
    let q = pack.qminus();
    let mut lq = pack.lplus().apply(q)?;
    lq.axpy(pack.lambda0(), q)?;
    let (rp, rm, _) = eigen_residual(&pack)?;
    let rows = vec![
        SpectrumRow { name: "lambda0", value: pack.lambda0(), residual: lq.norm_l2() / q.norm_l2() },
        SpectrumRow { name: "growth_plus", value: measured_eigenvalue(&pack, pack.z_plus())?, residual: rp },
        SpectrumRow { name: "growth_minus", value: measured_eigenvalue(&pack, pack.z_minus())?, residual: rm },
        SpectrumRow { name: "mu0", value: pack.mu0().unwrap_or(f64::NAN), residual: f64::NAN },
        SpectrumRow { name: "alpha0", value: pack.alpha0().unwrap_or(f64::NAN), residual: f64::NAN },
    ];
    if let Some(out) = &c.out_csv {
        let body: Vec<Vec<String>> = rows
            .iter()
            .map(|r| vec![r.name.to_string(), real(r.value), real(r.residual)])
            .collect();
        table::write(out, &header(&["name", "eigenvalue_or_constant", "residual"]), &body)?;
    }
    Ok(rows)
}

/// Integrate `init` (default: the soliton sum at `t0`) from `t0` to `t1`.
///
/// Writes the diagnostics to `out_csv` and, with `out_snapshots`, one
/// snapshot per `snapshot_every` time units plus an `index.csv`.
pub fn evolve(c: &RunConfig) -> Result<Trajectory> {
    let g0 = grid(c)?;
    let u0 = match &c.init {
        Some(p) => snapshot::load(p)?,
        None => {
            let gs = ground(c, &g0)?;
            soliton_sum(&params(c, &gs)?, &gs, c.t0, &g0)
        }
    };
    let g = u0.grid().clone();
    let gs = ground(c, &g)?;
    let nl = gs.nonlinearity().clone();
    let mut cfg = EvolveConfig::new(c.t0, c.t1, c.dt);
    cfg.record_every = c.record_every;
    if c.out_snapshots.is_some() {
        cfg.keep_states = ((c.snapshot_every / (c.dt * c.record_every as f64)).round() as usize).max(1);
    }
    if c.reference {
        let p = params(c, &gs)?;
        let gs = gs.clone();
        let g = g.clone();
        cfg = cfg.with_reference(Arc::new(move |t| soliton_sum(&p, &gs, t, &g)));
    }
    let traj = integrate(&u0, &cfg, &nl, &mut [])?;
    if let Some(out) = &c.out_csv {
        let rows: Vec<Vec<String>> = traj
            .diagnostics
            .iter()
            .map(|d| reals(&[d.t, d.energy, d.momentum, d.energy_norm, d.dist]))
            .collect();
        table::write(out, &header(&["t", "energy", "momentum", "energy_norm", "dist_to_reference"]), &rows)?;
    }
    if let Some(dir) = &c.out_snapshots {
        std::fs::create_dir_all(dir)?;
        let mut index = Vec::new();
        for (i, (t, u)) in traj.states.iter().enumerate() {
            let name = format!("state_{i:05}.nlkg");
            snapshot::save(dir.join(&name), u)?;
            index.push(vec![name, real(*t)]);
        }
        table::write(&dir.join("index.csv"), &header(&["file", "t"]), &index)?;
    }
    Ok(traj)
}

fn status_label(s: &TubeStatus) -> String {
    match s {
        TubeStatus::Inside => "inside".into(),
        TubeStatus::Exit { bound, ratio } => format!("exit:{bound}:{}", real(*ratio)),
    }
}

/// Modulate `state` at time `t` against the configured solitons.
pub fn modulate(c: &RunConfig) -> Result<(ModState, TubeStatus)> {
    let path = c.state.as_ref().ok_or_else(|| Error::Usage("modulate needs --state".into()))?;
    let u = snapshot::load(path)?;
    let gs = ground(c, u.grid())?;
    let p = params(c, &gs)?;
    let m = Modulator::new(&p, &gs, mod_options(c))?;
    let st = m.modulate(&u, c.t, None)?;
    let status = tube_check(&st, &p, gamma0(&p, m.lambda0())?);
    if let Some(out) = &c.out_csv {
        let n = p.len();
        let mut h = header(&["t"]);
        h.extend(numbered("y", n));
        h.push("v_norm".into());
        h.extend(numbered("a_plus", n));
        h.extend(numbered("a_minus", n));
        h.extend(numbered("a_zero", n));
        h.push("status".into());
        let mut row = vec![real(st.t)];
        row.extend(reals(&st.shifts));
        row.push(real(st.v_norm));
        row.extend(reals(&st.a_plus));
        row.extend(reals(&st.a_minus));
        row.extend(reals(&st.a_zero));
        row.push(status_label(&status));
        table::write(out, &h, &[row])?;
    }
    Ok((st, status))
}

#[derive(Clone, Debug)]
pub struct ShootSummary {
    pub gamma0: f64,
    pub aim: Vec<f64>,
    pub runs: usize,
    pub converged: bool,
    pub decay_exponent: f64,
    pub residual: f64,
    pub out_dir: PathBuf,
}

pub fn shoot_problem(c: &RunConfig) -> Result<ShootProblem> {
    let g = grid(c)?;
    let gs = ground(c, &g)?;
    let opts = ShootOptions {
        dt: c.dt,
        record_every: c.record_every,
        modulation: mod_options(c),
        cutoff_l: c.cutoff_l,
        snapshot_every: c.snapshot_every,
        budget: c.budget,
        g_tol: c.g_tol,
        ..ShootOptions::default()
    };
    Ok(ShootProblem::new(&params(c, &gs)?, &gs, c.s0, c.t0, opts)?)
}

/// State of the converged trajectory at `T0`.
fn initial_state(p: &ShootProblem, r: &ShootResult) -> Result<FieldPair> {
    if let Some((t, u)) = r.snapshots.last() {
        if (t - p.t0).abs() < 1e-9 {
            return Ok(u.clone());
        }
    }
    let mut cfg = EvolveConfig::new(p.s0, p.t0, p.opts.dt);
    cfg.record_every = p.opts.record_every;
    cfg.diagnostics = false;
    let mut none = |_: f64, _: &FieldPair| ControlFlow::Continue(());
    Ok(integrate(&r.final_data, &cfg, p.params.nonlinearity(), &mut [&mut none])?.final_state)
}

/// Parameters only (no paths, workers or seed), in canonical key order.
pub fn render_params(c: &RunConfig) -> String {
    let skip = ["init", "state", "out", "out_csv", "out_snapshots", "out_dir", "workers", "seed"];
    KEYS.iter()
        .filter(|k| !skip.contains(k))
        .map(|k| format!("{k} = {}\n", c.get(k).unwrap()))
        .collect()
}

/// Aim the backward shooting and write, under `c.out_dir`:
/// `records.csv` (the converged run), `aim.csv`, `summary.csv`,
/// `U0.nlkg` and `params.txt`.
pub fn shoot(c: &RunConfig) -> Result<ShootSummary> {
    let dir = &c.out_dir;
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("params.txt"), render_params(c))?;
    let p = shoot_problem(c)?;
    let r = aim(&p)?;
    write_records(&dir.join("records.csv"), &r)?;
    let aim_rows: Vec<Vec<String>> = r.aim.iter().enumerate().map(|(j, a)| vec![(j + 1).to_string(), real(*a)]).collect();
    table::write(&dir.join("aim.csv"), &header(&["soliton", "aim"]), &aim_rows)?;
    let k = decay_exponent(&r.records, p.t0, p.s0);
    let summary = ShootSummary {
        gamma0: p.gamma0,
        aim: r.aim.clone(),
        runs: r.runs,
        converged: r.survived(),
        decay_exponent: k,
        residual: r.residual(),
        out_dir: dir.clone(),
    };
    let rows = vec![
        vec!["gamma0".into(), real(p.gamma0)],
        vec!["runs".into(), r.runs.to_string()],
        vec!["converged".into(), summary.converged.to_string()],
        vec!["residual".into(), real(summary.residual)],
        vec!["decay_exponent".into(), real(k)],
        vec!["exit_time".into(), real(r.exit_time)],
    ];
    table::write(&dir.join("summary.csv"), &header(&["name", "value"]), &rows)?;
    snapshot::save(dir.join("U0.nlkg"), &initial_state(&p, &r)?)?;
    Ok(summary)
}

fn write_records(path: &Path, r: &ShootResult) -> Result<()> {
    let h = header(&["t", "v_norm", "a_plus", "a_minus", "a_zero", "lyapunov", "energy", "momentum", "status"]);
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut rows: Vec<Vec<String>> = r
        .records
        .iter()
        .map(|x| {
            let mut row = reals(&[x.t, x.v_norm, norm(&x.a_plus), norm(&x.a_minus), norm(&x.a_zero), x.lyapunov, x.energy, x.momentum]);
            row.push(if x.worst_ratio <= 1.0 { "inside".into() } else { "exit".into() });
            row
        })
        .collect();
    // Records run backward from S0; store them forward in time.
    rows.reverse();
    table::write(path, &h, &rows)
}
