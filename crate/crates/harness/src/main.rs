use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nlkg_harness::config::{parse_config_onto, parse_sweep, RunConfig};
use nlkg_harness::sweep::run_sweep;
use nlkg_harness::{pipeline, Error};

/// Numerical lab for solitons of u_tt - u_xx + u - f(u) = 0.
#[derive(Parser, Debug)]
#[command(name = "nlkg", version)]
struct Cli {
    /// `key = value` file; command-line flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output root (default: $NLKG_OUT_DIR, else ./out).
    #[arg(long, global = true)]
    out_dir: Option<String>,
    #[arg(long, global = true)]
    workers: Option<String>,
    /// Seed for randomized checks.
    #[arg(long, global = true)]
    seed: Option<String>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Ground state Q: prints Q(0), the ODE residual and the tail decay rate.
    Groundstate(GroundArgs),
    /// lambda0, the growth rates +-sqrt(lambda0)/gamma and coercivity constants.
    Spectrum(SpectrumArgs),
    /// Strang-split integration with energy and momentum diagnostics.
    Evolve(EvolveArgs),
    /// Decompose a snapshot into solitons plus remainder.
    Modulate(ModulateArgs),
    /// Backward shooting for multi-soliton final data.
    Shoot(ShootArgs),
    /// Shooting over a grid of parameters (axes from --config).
    Sweep,
}

#[derive(Args, Debug)]
struct GroundArgs {
    #[arg(long)]
    p: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    length: Option<String>,
    #[arg(long)]
    n: Option<String>,
    /// Snapshot path for (Q, 0).
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args, Debug)]
struct SpectrumArgs {
    #[arg(long)]
    p: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    beta: Option<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    length: Option<String>,
    #[arg(long)]
    out_csv: Option<String>,
}

#[derive(Args, Debug)]
struct EvolveArgs {
    /// Initial snapshot (default: the soliton sum at --t0).
    #[arg(long)]
    init: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    t0: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    t1: Option<String>,
    #[arg(long)]
    dt: Option<String>,
    #[arg(long)]
    record_every: Option<String>,
    #[arg(long)]
    out_csv: Option<String>,
    #[arg(long)]
    out_snapshots: Option<String>,
    #[arg(long)]
    p: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    betas: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    shifts: Option<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    length: Option<String>,
    /// Record the distance to the nominal soliton sum.
    #[arg(long)]
    reference: Option<String>,
}

#[derive(Args, Debug)]
struct ModulateArgs {
    #[arg(long)]
    state: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    t: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    betas: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    shifts: Option<String>,
    #[arg(long)]
    out_csv: Option<String>,
    #[arg(long)]
    p: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
}

#[derive(Args, Debug)]
struct ShootArgs {
    #[arg(long)]
    p: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    betas: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    shifts: Option<String>,
    #[arg(long)]
    s0: Option<String>,
    #[arg(long)]
    t0: Option<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    length: Option<String>,
    #[arg(long)]
    dt: Option<String>,
    #[arg(long)]
    budget: Option<String>,
    #[arg(long)]
    g_tol: Option<String>,
    #[arg(long)]
    cutoff_l: Option<String>,
}

/// `(key, value)` for every flag that was given.
macro_rules! flags {
    ($a:expr; $($f:ident),*) => {{
        let mut v: Vec<(&'static str, String)> = Vec::new();
        $(if let Some(x) = &$a.$f { v.push((stringify!($f), x.clone())); })*
        v
    }};
}

impl Cmd {
    fn flags(&self) -> Vec<(&'static str, String)> {
        match self {
            Cmd::Groundstate(a) => flags!(a; p, lambda, length, n, out),
            Cmd::Spectrum(a) => flags!(a; p, lambda, beta, n, length, out_csv),
            Cmd::Evolve(a) => flags!(a; init, t0, t1, dt, record_every, out_csv, out_snapshots, p, lambda, betas, shifts, n, length, reference),
            Cmd::Modulate(a) => flags!(a; state, t, betas, shifts, out_csv, p, lambda),
            Cmd::Shoot(a) => flags!(a; p, lambda, betas, shifts, s0, t0, n, length, dt, budget, g_tol, cutoff_l),
            Cmd::Sweep => Vec::new(),
        }
    }
}

fn base() -> RunConfig {
    let mut c = RunConfig::default();
    if let Some(d) = std::env::var_os("NLKG_OUT_DIR") {
        c.out_dir = PathBuf::from(d);
    }
    c
}

fn run(cli: Cli) -> Result<bool, Error> {
    let mut flags = cli.cmd.flags();
    flags.extend(flags!(cli; out_dir, workers, seed));
    if let Cmd::Sweep = cli.cmd {
        let path = cli
            .config
            .as_deref()
            .ok_or_else(|| Error::Usage("sweep needs --config with axis.<key> lines".into()))?;
        let spec = parse_sweep(base(), path, &flags)?;
        let report = run_sweep(&spec, spec.base.workers, &spec.base.out_dir)?;
        println!(
            "{} runs, {} failed; aggregate in {}",
            report.rows.len(),
            report.failures(),
            report.root.join("aggregate.csv").display()
        );
        return Ok(report.failures() == 0);
    }
    let mut c = parse_config_onto(base(), cli.config.as_deref(), &flags)?;
    let default_csv = |c: &mut RunConfig, name: &str| {
        if c.out_csv.is_none() {
            c.out_csv = Some(c.out_dir.join(name));
        }
    };
    match cli.cmd {
        Cmd::Groundstate(_) => {
            if c.out.is_none() {
                std::fs::create_dir_all(&c.out_dir)?;
                c.out = Some(c.out_dir.join("groundstate.nlkg"));
            }
            let r = pipeline::groundstate(&c)?;
            println!("Q(0) = {:.16e}", r.q0);
            println!("residual = {:.3e}", r.residual);
            println!("decay rate = {:.10}", r.decay_rate);
        }
        Cmd::Spectrum(_) => {
            default_csv(&mut c, "spectrum.csv");
            for r in pipeline::spectrum(&c)? {
                println!("{:<13} {:>22.16e}  residual {:.2e}", r.name, r.value, r.residual);
            }
        }
        Cmd::Evolve(_) => {
            default_csv(&mut c, "evolve.csv");
            let tr = pipeline::evolve(&c)?;
            if let (Some(a), Some(b)) = (tr.diagnostics.first(), tr.diagnostics.last()) {
                println!("t = {} -> {}: energy {:.16e} -> {:.16e}", a.t, b.t, a.energy, b.energy);
            }
        }
        Cmd::Modulate(_) => {
            default_csv(&mut c, "modulate.csv");
            let (st, status) = pipeline::modulate(&c)?;
            println!("t = {}: centers {:?}, |V| = {:.6e}, {:?}", st.t, st.shifts, st.v_norm, status);
        }
        Cmd::Shoot(_) => {
            let s = pipeline::shoot(&c)?;
            println!("gamma0 = {:.6}", s.gamma0);
            println!("aim = {:?} after {} backward runs", s.aim, s.runs);
            println!("decay exponent = {:.6} ({:.3} gamma0)", s.decay_exponent, s.decay_exponent / s.gamma0);
            println!("artifacts in {}", s.out_dir.display());
            return Ok(s.converged);
        }
        Cmd::Sweep => unreachable!(),
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e @ Error::Config(_)) | Err(e @ Error::Usage(_)) => {
            eprintln!("nlkg: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("nlkg: {e}");
            ExitCode::from(1)
        }
    }
}
