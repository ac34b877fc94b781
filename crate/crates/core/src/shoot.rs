//! Backward shooting toward a multi-soliton: modulated final data at `S0`,
//! backward runs with tube-exit detection and the search for the aim vector.

use std::ops::ControlFlow;
use std::sync::Arc;

use crate::dense::Matrix;
use crate::error::{Error, Result};
use crate::evolve::{energy, evolve, momentum, EvolveConfig, Stepper};
use crate::grid::FieldPair;
use crate::modulation::{
    build_cutoffs, gamma0, lyapunov, tube_check, tube_ratios, Bound, ModOptions, ModState, Modulator, TubeStatus,
};
use crate::soliton::{GroundState, SolitonParams};
use crate::spectral::{spectral_count, PackOptions, SpectralPack};

#[derive(Clone, Copy, Debug)]
pub struct ShootOptions {
    pub dt: f64,
    /// Steps between modulations.
    pub record_every: usize,
    pub modulation: ModOptions,
    /// Cutoff width of the Lyapunov functional.
    pub cutoff_l: f64,
    /// Time between stored snapshots.
    pub snapshot_every: f64,
    /// Backward runs allowed per aim.
    pub budget: usize,
    /// Aim accepted once the rescaled `a+` at the target time is below this.
    pub g_tol: f64,
    /// Length of one window-continuation stage.
    pub stage: f64,
    /// Check the discrete spectrum of every `L+beta` at setup.
    pub check_spectrum: bool,
}

impl Default for ShootOptions {
    fn default() -> Self {
        Self {
            dt: 0.005,
            record_every: 10,
            modulation: ModOptions::default(),
            cutoff_l: 8.0,
            snapshot_every: 1.0,
            budget: 60,
            g_tol: 0.1,
            stage: 2.0,
            check_spectrum: true,
        }
    }
}

/// One shooting configuration: solitons, window `[T0, S0]` and numerics.
#[derive(Debug)]
pub struct ShootProblem {
    pub params: SolitonParams,
    pub s0: f64,
    pub t0: f64,
    pub gamma0: f64,
    pub opts: ShootOptions,
    modulator: Modulator,
}

impl ShootProblem {
    pub fn new(params: &SolitonParams, gs: &GroundState, s0: f64, t0: f64, opts: ShootOptions) -> Result<Self> {
        let packs = (0..params.len())
            .map(|j| {
                SpectralPack::build_with(gs, params.boost(j), PackOptions { coercivity: false }).map(Arc::new)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::with_packs(params, gs, packs, s0, t0, opts)
    }

    pub fn with_packs(
        params: &SolitonParams,
        gs: &GroundState,
        packs: Vec<Arc<SpectralPack>>,
        s0: f64,
        t0: f64,
        opts: ShootOptions,
    ) -> Result<Self> {
        if !(t0 < s0) {
            return Err(Error::Usage(format!("need T0 < S0, got T0 = {t0}, S0 = {s0}")));
        }
        if !(opts.dt > 0.0) || opts.record_every == 0 || opts.budget == 0 {
            return Err(Error::Usage("dt, record_every and budget must be positive".into()));
        }
        if opts.check_spectrum {
            for p in &packs {
                spectral_count(p)?;
            }
        }
        let modulator = Modulator::with_packs(params, gs, packs, opts.modulation)?;
        let sep = params.min_separation(t0, s0);
        if params.len() > 1 && sep < opts.modulation.min_separation {
            return Err(Error::Domain(format!(
                "solitons come within {sep:.3} on [{t0}, {s0}], below {}",
                opts.modulation.min_separation
            )));
        }
        let gamma0 = gamma0(params, modulator.lambda0())?;
        let radius = (-gamma0 * t0).exp();
        if radius > opts.modulation.eps0 {
            return Err(Error::Domain(format!(
                "tube radius exp(-gamma0 T0) = {radius:.4} exceeds eps0 = {}",
                opts.modulation.eps0
            )));
        }
        Ok(Self {
            params: params.clone(),
            s0,
            t0,
            gamma0,
            opts,
            modulator,
        })
    }

    pub fn modulator(&self) -> &Modulator {
        &self.modulator
    }

    pub fn n(&self) -> usize {
        self.params.len()
    }

    /// Scale of `a+` at `S0`: `exp(-3 gamma0 S0 / 2)`.
    pub fn final_scale(&self) -> f64 {
        (-1.5 * self.gamma0 * self.s0).exp()
    }

    /// Largest linear growth rate `sqrt(lambda0)/gamma_j`.
    pub fn max_growth(&self) -> f64 {
        self.modulator
            .packs()
            .iter()
            .map(|p| p.growth_rate())
            .fold(0.0, f64::max)
    }

    /// Same problem with another horizon.
    pub fn with_horizon(&self, s0: f64) -> Result<Self> {
        Self::with_packs(
            &self.params,
            self.modulator.ground_state(),
            self.modulator.packs().to_vec(),
            s0,
            self.t0,
            ShootOptions {
                check_spectrum: false,
                ..self.opts
            },
        )
    }
}

/// Final data together with its modulation at `S0`.
#[derive(Clone, Debug)]
pub struct FinalData {
    pub state: FieldPair,
    pub modulation: ModState,
    /// Coefficients on `(Z+_j, Z-_j, Z0_j)`.
    pub coefficients: Vec<f64>,
}

/// `U0 = R(S0) + sum b (Z+_j, Z-_j, Z0_j)` with `a+(S0) = exp(-3 gamma0 S0/2) aim`
/// and `a-(S0) = a0(S0) = 0`.
pub fn final_data(problem: &ShootProblem, aim: &[f64]) -> Result<FinalData> {
    let n = problem.n();
    if aim.len() != n {
        return Err(Error::Usage(format!("aim has {} entries for {n} solitons", aim.len())));
    }
    let norm = aim.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 1.0 + 1e-12 {
        return Err(Error::Usage(format!("aim norm {norm} exceeds 1")));
    }
    let m = &problem.modulator;
    let s0 = problem.s0;
    let centers = problem.params.centers(s0);
    let r = m.soliton_sum_at(&centers);
    let mut dirs = Vec::with_capacity(3 * n);
    for (j, &y) in centers.iter().enumerate() {
        let (zp, zm, z0) = m.directions_at(j, y);
        dirs.push(zp);
        dirs.push(zm);
        dirs.push(z0);
    }
    // Row order of the conditions: (a+_j, a-_j, a0_j) = <V|Z-_j>, <V|Z+_j>, <V|Z0_j>.
    let tests: Vec<&FieldPair> = (0..n)
        .flat_map(|j| [&dirs[3 * j + 1], &dirs[3 * j], &dirs[3 * j + 2]])
        .collect();
    let mut gram = Matrix::zeros(3 * n, 3 * n);
    for (i, w) in tests.iter().enumerate() {
        for (k, d) in dirs.iter().enumerate() {
            gram[(i, k)] = w.inner(d)?;
        }
    }
    let scale = problem.final_scale();
    let mut target = vec![0.0; 3 * n];
    for j in 0..n {
        target[3 * j] = scale * aim[j];
    }
    let solve = |rhs: &[f64]| {
        gram.solve(rhs)
            .map_err(|e| Error::Construction(format!("direction Gram matrix is singular: {e}")))
    };
    let mut b = solve(&target)?;
    let mut guess = centers.clone();
    for _ in 0..30 {
        let mut u = r.clone();
        for (bk, d) in b.iter().zip(&dirs) {
            u.axpy(*bk, d)?;
        }
        let st = m.modulate(&u, s0, Some(&guess))?;
        guess = st.shifts.clone();
        let mut achieved = vec![0.0; 3 * n];
        for j in 0..n {
            achieved[3 * j] = st.a_plus[j];
            achieved[3 * j + 1] = st.a_minus[j];
            achieved[3 * j + 2] = st.a_zero[j];
        }
        let miss: Vec<f64> = target.iter().zip(&achieved).map(|(t, a)| t - a).collect();
        if miss.iter().all(|x| x.abs() <= 1e-10) {
            let radius = (-problem.gamma0 * s0).exp();
            if st.v_norm > radius {
                return Err(Error::Construction(format!(
                    "final residual {:e} outside the tube radius {radius:e}",
                    st.v_norm
                )));
            }
            return Ok(FinalData {
                state: u,
                modulation: st,
                coefficients: b,
            });
        }
        let corr = solve(&miss)?;
        for (bk, c) in b.iter_mut().zip(corr) {
            *bk += c;
        }
    }
    Err(Error::Construction("final-data fixed point did not converge".into()))
}

/// Why a backward run stopped.
#[derive(Clone, Debug, PartialEq)]
pub enum ExitReason {
    /// Reached the target time inside the tube.
    Survived,
    Bound { bound: Bound, ratio: f64 },
    ModulationLost(String),
    BlowUp,
}

/// Per-record diagnostics of a backward run.
#[derive(Clone, Debug)]
pub struct ShootRecord {
    pub t: f64,
    pub v_norm: f64,
    pub a_plus: Vec<f64>,
    pub a_minus: Vec<f64>,
    pub a_zero: Vec<f64>,
    pub shifts: Vec<f64>,
    /// Largest tube ratio.
    pub worst_ratio: f64,
    pub energy: f64,
    pub momentum: f64,
    pub lyapunov: f64,
}

impl ShootRecord {
    pub fn a_plus_norm(&self) -> f64 {
        self.a_plus.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

#[derive(Clone, Debug)]
pub struct ShootResult {
    pub aim: Vec<f64>,
    pub final_data: FieldPair,
    /// Target time of the run (`T0` unless a continuation stage).
    pub target: f64,
    /// Earliest time at which the state was still inside the tube.
    pub exit_time: f64,
    pub exit_reason: ExitReason,
    pub records: Vec<ShootRecord>,
    pub snapshots: Vec<(f64, FieldPair)>,
    /// Modulation at the first step outside the tube.
    pub exit_state: Option<ModState>,
    /// Forward-time derivative of `exp(3 gamma0 t) |a+|^2` at the exit.
    pub transversality: Option<f64>,
    /// Rescaled exit map value.
    pub g: Vec<f64>,
    pub runs: usize,
}

impl ShootResult {
    pub fn survived(&self) -> bool {
        self.exit_reason == ExitReason::Survived
    }

    pub fn residual(&self) -> f64 {
        self.g.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct RunOptions {
    /// Stop time (`T0` by default).
    pub target: Option<f64>,
    /// Energy, momentum and Lyapunov functional at every record.
    pub full_diagnostics: bool,
    pub refine_exit: bool,
    pub transversality: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            target: None,
            full_diagnostics: true,
            refine_exit: true,
            transversality: true,
        }
    }
}

fn classify(st: &ModState, problem: &ShootProblem) -> TubeStatus {
    tube_check(st, &problem.params, problem.gamma0)
}

/// Rescaled exit map: `exp(3 gamma0 T/2) a+(T)` continued linearly to `target`.
fn exit_map(problem: &ShootProblem, st: &ModState, target: f64) -> Vec<f64> {
    let rate = problem.max_growth() - 1.5 * problem.gamma0;
    let k = (1.5 * problem.gamma0 * st.t).exp() * (rate * (st.t - target)).exp();
    st.a_plus.iter().map(|a| a * k).collect()
}

/// Integrate backward from `S0`, modulating every record, until the tube is left
/// or the target time is reached.
pub fn backward_run(problem: &ShootProblem, aim: &[f64]) -> Result<ShootResult> {
    backward_run_with(problem, aim, RunOptions::default())
}

pub fn backward_run_with(problem: &ShootProblem, aim: &[f64], ro: RunOptions) -> Result<ShootResult> {
    let fd = final_data(problem, aim)?;
    run_from(problem, aim, fd, ro)
}

fn record(problem: &ShootProblem, st: &ModState, u: &FieldPair, full: bool) -> ShootRecord {
    let ratios = tube_ratios(st, &problem.params, problem.gamma0);
    let (energy_v, momentum_v, lyap) = if full {
        let nl = problem.params.nonlinearity();
        let c = build_cutoffs(&problem.params, st.t, problem.opts.cutoff_l, u.grid()).expect("positive width");
        (energy(u, nl), momentum(u), lyapunov(u, &problem.params, &c, nl))
    } else {
        (f64::NAN, f64::NAN, f64::NAN)
    };
    ShootRecord {
        t: st.t,
        v_norm: st.v_norm,
        a_plus: st.a_plus.clone(),
        a_minus: st.a_minus.clone(),
        a_zero: st.a_zero.clone(),
        shifts: st.shifts.clone(),
        worst_ratio: ratios.worst().1,
        energy: energy_v,
        momentum: momentum_v,
        lyapunov: lyap,
    }
}

fn run_from(problem: &ShootProblem, aim: &[f64], fd: FinalData, ro: RunOptions) -> Result<ShootResult> {
    let target = ro.target.unwrap_or(problem.t0);
    let m = &problem.modulator;
    let opts = &problem.opts;
    let mut records = Vec::new();
    let mut snapshots = Vec::new();
    let mut next_snapshot = problem.s0;
    let mut last_inside: Option<(FieldPair, ModState)> = None;
    let mut exit: Option<(ExitReason, Option<(ModState, FieldPair)>)> = None;
    let mut guess = fd.modulation.shifts.clone();
    let mut cfg = EvolveConfig::new(problem.s0, target, opts.dt);
    cfg.record_every = opts.record_every;
    cfg.diagnostics = false;
    cfg.blowup_threshold = Some(10.0 * m.soliton_sum_at(&problem.params.centers(problem.s0)).norm_energy());
    let mut observer = |t: f64, u: &FieldPair| -> ControlFlow<()> {
        let st = match m.modulate(u, t, Some(&guess)) {
            Ok(st) => st,
            Err(e) => {
                exit = Some((ExitReason::ModulationLost(e.to_string()), None));
                return ControlFlow::Break(());
            }
        };
        guess = st.shifts.clone();
        records.push(record(problem, &st, u, ro.full_diagnostics));
        if t <= next_snapshot + 1e-9 {
            snapshots.push((t, u.clone()));
            next_snapshot -= opts.snapshot_every;
        }
        match classify(&st, problem) {
            TubeStatus::Inside => {
                last_inside = Some((u.clone(), st));
                ControlFlow::Continue(())
            }
            TubeStatus::Exit { bound, ratio } => {
                exit = Some((ExitReason::Bound { bound, ratio }, Some((st, u.clone()))));
                ControlFlow::Break(())
            }
        }
    };
    let run = evolve(&fd.state, &cfg, problem.params.nonlinearity(), &mut [&mut observer]);
    let blew_up = match run {
        Ok(_) => false,
        Err(Error::BlowUp { .. }) => true,
        Err(e) => return Err(e),
    };
    let mut result = ShootResult {
        aim: aim.to_vec(),
        final_data: fd.state.clone(),
        target,
        exit_time: last_inside.as_ref().map_or(problem.s0, |(_, s)| s.t),
        exit_reason: ExitReason::Survived,
        records,
        snapshots,
        exit_state: None,
        transversality: None,
        g: Vec::new(),
        runs: 1,
    };
    if blew_up {
        result.exit_reason = ExitReason::BlowUp;
        result.g = last_inside
            .as_ref()
            .map_or(vec![f64::INFINITY; problem.n()], |(_, s)| exit_map(problem, s, target));
        return Ok(result);
    }
    match exit {
        None => {
            let (_, st) = last_inside.as_ref().expect("at least one record");
            result.g = exit_map(problem, st, target);
        }
        Some((reason, st_out)) => {
            result.exit_reason = reason;
            let mut out = st_out;
            if let (true, Some((u_in, st_in)), Some(_)) = (ro.refine_exit, last_inside.as_ref(), out.as_ref()) {
                let (t_in, st_exit, u_exit) = refine_exit(problem, u_in, st_in)?;
                result.exit_time = t_in;
                if let Some((st, u)) = st_exit.zip(u_exit) {
                    if let TubeStatus::Exit { bound, ratio } = classify(&st, problem) {
                        result.exit_reason = ExitReason::Bound { bound, ratio };
                    }
                    out = Some((st, u));
                }
            }
            if let (true, Some((st, u))) = (ro.transversality, out.as_ref()) {
                result.transversality = transversality(problem, u, st).ok();
            }
            let out_state = out.map(|(st, _)| st);
            result.g = match (&out_state, &last_inside) {
                (Some(st), _) => exit_map(problem, st, target),
                (None, Some((_, st))) => exit_map(problem, st, target),
                (None, None) => vec![f64::INFINITY; problem.n()],
            };
            result.exit_state = out_state;
        }
    }
    Ok(result)
}

/// Bisection over the step count between the last inside record and the next one.
fn refine_exit(
    problem: &ShootProblem,
    u_in: &FieldPair,
    st_in: &ModState,
) -> Result<(f64, Option<ModState>, Option<FieldPair>)> {
    let dt = problem.opts.dt;
    let nl = problem.params.nonlinearity();
    let mut stepper = Stepper::new(u_in.grid(), nl, -dt)?;
    let at = |k: usize, stepper: &mut Stepper| -> (FieldPair, Option<ModState>) {
        let mut u = u_in.first.values().to_vec();
        let mut ut = u_in.second.values().to_vec();
        stepper.advance(&mut u, &mut ut, k);
        let s = FieldPair::new(
            crate::grid::ScalarField::new(u_in.grid(), u).expect("grid"),
            crate::grid::ScalarField::new(u_in.grid(), ut).expect("grid"),
        );
        match s {
            Ok(s) => {
                let st = problem.modulator.modulate(&s, st_in.t - k as f64 * dt, Some(&st_in.shifts)).ok();
                (s, st)
            }
            Err(_) => (FieldPair::zeros(u_in.grid()), None),
        }
    };
    let (mut lo, mut hi) = (0usize, problem.opts.record_every);
    let mut hi_state = None;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        let (u, st) = at(mid, &mut stepper);
        let inside = st.as_ref().is_some_and(|s| classify(s, problem).is_inside());
        if inside {
            lo = mid;
        } else {
            hi = mid;
            hi_state = Some((u, st));
        }
    }
    let (u, st) = match hi_state {
        Some(x) => x,
        None => at(hi, &mut stepper),
    };
    Ok((st_in.t - lo as f64 * dt, st, Some(u)))
}

/// `d/dt [exp(3 gamma0 t) |a+(t)|^2]` in forward time from five records centered
/// at the exit state.
fn transversality(problem: &ShootProblem, u: &FieldPair, st: &ModState) -> Result<f64> {
    let nl = problem.params.nonlinearity();
    let dt = problem.opts.dt;
    let k = problem.opts.record_every;
    let h = k as f64 * dt;
    let nval = |s: &ModState| (3.0 * problem.gamma0 * s.t).exp() * s.a_plus.iter().map(|a| a * a).sum::<f64>();
    let mut vals = [0.0; 5];
    vals[2] = nval(st);
    for (dir, idx) in [(1.0, [3usize, 4]), (-1.0, [1, 0])] {
        let mut stepper = Stepper::new(u.grid(), nl, dir * dt)?;
        let mut a = u.first.values().to_vec();
        let mut b = u.second.values().to_vec();
        let mut guess = st.shifts.clone();
        for (r, &i) in idx.iter().enumerate() {
            stepper.advance(&mut a, &mut b, k);
            let t = st.t + dir * (r + 1) as f64 * h;
            let s = FieldPair::new(
                crate::grid::ScalarField::new(u.grid(), a.clone())?,
                crate::grid::ScalarField::new(u.grid(), b.clone())?,
            )?;
            let ms = problem.modulator.modulate(&s, t, Some(&guess))?;
            guess = ms.shifts.clone();
            vals[i] = nval(&ms);
        }
    }
    Ok((vals[0] - 8.0 * vals[1] + 8.0 * vals[3] - vals[4]) / (12.0 * h))
}

fn describe(reason: &ExitReason) -> String {
    match reason {
        ExitReason::Survived => "no bound".into(),
        ExitReason::Bound { bound, ratio } => format!("the {bound} bound (ratio {ratio:.4})"),
        ExitReason::ModulationLost(e) => format!("lost modulation ({e})"),
        ExitReason::BlowUp => "blow-up".into(),
    }
}

fn quick() -> RunOptions {
    RunOptions {
        target: None,
        full_diagnostics: false,
        refine_exit: false,
        transversality: false,
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Keep iterates strictly inside the unit ball.
fn clamp_ball(v: &mut [f64]) {
    let n = norm(v);
    if n >= 0.99 {
        v.iter_mut().for_each(|x| *x *= 0.99 / n);
    }
}

/// Find an aim whose backward run survives to `T0`.
pub fn aim(problem: &ShootProblem) -> Result<ShootResult> {
    aim_from(problem, &vec![0.0; problem.n()])
}

pub fn aim_from(problem: &ShootProblem, start: &[f64]) -> Result<ShootResult> {
    let best = if problem.n() == 1 {
        aim_bisect(problem)?
    } else {
        aim_newton(problem, start)?
    };
    let runs = best.runs;
    // Final pass with full diagnostics.
    let mut full = backward_run(problem, &best.aim)?;
    full.runs = runs + 1;
    Ok(full)
}

fn aim_bisect(problem: &ShootProblem) -> Result<ShootResult> {
    let (mut lo, mut hi) = (-1.0f64, 1.0f64);
    let mut runs = 0;
    let mut best: Option<ShootResult> = None;
    while runs < problem.opts.budget {
        let mid = 0.5 * (lo + hi);
        let r = backward_run_with(problem, &[mid], quick())?;
        runs += 1;
        let g = r.g[0];
        if r.survived() && g.abs() <= problem.opts.g_tol {
            let mut r = r;
            r.runs = runs;
            return Ok(r);
        }
        if g.abs() <= problem.opts.g_tol && !r.survived() {
            return Err(Error::Aim {
                runs,
                reason: format!(
                    "aim {mid} leaves through {} at T* = {:.3} with residual {:.3e}",
                    describe(&r.exit_reason),
                    r.exit_time,
                    g.abs()
                ),
            });
        }
        if !g.is_finite() {
            return Err(Error::Aim {
                runs,
                reason: format!("run at aim {mid} left the tube without an exit coefficient"),
            });
        }
        if g > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        best = Some(r);
        if hi - lo < 1e-15 {
            break;
        }
    }
    Err(Error::Aim {
        runs,
        reason: format!(
            "bisection stalled with bracket [{lo:e}, {hi:e}], last residual {:e}",
            best.map_or(f64::NAN, |b| b.residual())
        ),
    })
}

fn aim_newton(problem: &ShootProblem, start: &[f64]) -> Result<ShootResult> {
    let n = problem.n();
    let mut a = start.to_vec();
    clamp_ball(&mut a);
    let mut runs = 0usize;
    let budget = problem.opts.budget;
    let rate = problem.max_growth() - 1.5 * problem.gamma0;
    let mut targets = Vec::new();
    let mut tk = problem.s0 - problem.opts.stage;
    while tk > problem.t0 + 1e-9 {
        targets.push(tk);
        tk -= problem.opts.stage;
    }
    targets.push(problem.t0);
    let run = |a: &[f64], target: f64, runs: &mut usize| -> Result<ShootResult> {
        if *runs >= budget {
            return Err(Error::Aim {
                runs: *runs,
                reason: format!("budget of {budget} backward runs exhausted"),
            });
        }
        *runs += 1;
        backward_run_with(
            problem,
            a,
            RunOptions {
                target: Some(target),
                ..quick()
            },
        )
    };
    let mut last = None;
    for &target in &targets {
        let h = 1e-2 * (-rate * (problem.s0 - target)).exp();
        let mut cur = run(&a, target, &mut runs)?;
        loop {
            if cur.residual() <= problem.opts.g_tol {
                if cur.survived() {
                    break;
                }
                // a+ is aimed but another bound fails: no aim can repair that.
                return Err(Error::Aim {
                    runs,
                    reason: format!(
                        "aim {:?} leaves through {} at T* = {:.3} (target {target}) with residual {:.3e}",
                        a,
                        describe(&cur.exit_reason),
                        cur.exit_time,
                        cur.residual()
                    ),
                });
            }
            let mut jac = Matrix::zeros(n, n);
            for k in 0..n {
                let mut ak = a.clone();
                ak[k] += h;
                let rk = run(&ak, target, &mut runs)?;
                for i in 0..n {
                    jac[(i, k)] = (rk.g[i] - cur.g[i]) / h;
                }
            }
            let step = jac.solve(&cur.g).map_err(|e| Error::Aim {
                runs,
                reason: format!("singular exit-map Jacobian: {e}"),
            })?;
            let mut lambda = 1.0;
            loop {
                let mut trial: Vec<f64> = a.iter().zip(&step).map(|(x, s)| x - lambda * s).collect();
                clamp_ball(&mut trial);
                let r = run(&trial, target, &mut runs)?;
                if r.residual() < cur.residual() || lambda < 1e-3 {
                    a = trial;
                    cur = r;
                    break;
                }
                lambda *= 0.5;
            }
            log::debug!("aim stage T={target}: residual {:e} after {runs} runs", cur.residual());
        }
        last = Some(cur);
    }
    let mut r = last.expect("at least one stage");
    r.runs = runs;
    Ok(r)
}

/// One horizon of a continuation sweep.
#[derive(Clone, Debug)]
pub struct HorizonResult {
    pub s0: f64,
    pub result: ShootResult,
    /// Least-squares decay exponent of `|V(t)|` on `[T0+1, S0-1]`.
    pub decay_exponent: f64,
}

/// `-slope` of the least-squares fit of `ln |V|` against `t` on `[lo, hi]`.
pub fn decay_exponent(records: &[ShootRecord], lo: f64, hi: f64) -> f64 {
    let pts: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.t >= lo - 1e-9 && r.t <= hi + 1e-9 && r.v_norm > 0.0)
        .map(|r| (r.t, r.v_norm.ln()))
        .collect();
    let m = pts.len() as f64;
    if m < 2.0 {
        return f64::NAN;
    }
    let (st, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (t, y)| (a + t, b + y));
    let (mt, my) = (st / m, sy / m);
    let (num, den) = pts
        .iter()
        .fold((0.0, 0.0), |(n, d), (t, y)| (n + (t - mt) * (y - my), d + (t - mt) * (t - mt)));
    -num / den
}

/// Solve the aim problem for increasing horizons, warm-starting each one.
pub fn horizon_continuation(problem: &ShootProblem, schedule: &[f64]) -> Result<Vec<HorizonResult>> {
    if schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Usage("horizon schedule must be increasing".into()));
    }
    let mut out: Vec<HorizonResult> = Vec::new();
    let mut start = vec![0.0; problem.n()];
    for &s0 in schedule {
        let p = problem.with_horizon(s0)?;
        let r = match aim_from(&p, &start) {
            Ok(r) => r,
            Err(e) => {
                let last = out.last().map_or("none".to_string(), |h| h.s0.to_string());
                return Err(Error::Aim {
                    runs: 0,
                    reason: format!("horizon {s0} failed ({e}); last good horizon {last}"),
                });
            }
        };
        start = r.aim.clone();
        let k = decay_exponent(&r.records, p.t0 + 1.0, s0 - 1.0);
        out.push(HorizonResult {
            s0,
            result: r,
            decay_exponent: k,
        });
    }
    Ok(out)
}
