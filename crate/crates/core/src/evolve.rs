//! Strang-split pseudospectral integrator for the 1-D NLKG equation.

use std::fmt;
use std::ops::ControlFlow;
use std::sync::Arc;

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{FieldPair, Grid};
use crate::soliton::Nonlinearity;

/// One-step propagator for a fixed signed time step.
///
/// The state is packed as `z = u + i u_t` so one complex FFT carries both
/// components through the exact linear rotation.
#[derive(Clone)]
pub struct Stepper {
    grid: Grid,
    nl: Nonlinearity,
    dt: f64,
    a: Vec<Complex64>,
    b: Vec<Complex64>,
    buf: Vec<Complex64>,
}

impl fmt::Debug for Stepper {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Stepper").field("n", &self.grid.n()).field("dt", &self.dt).finish()
    }
}

impl Stepper {
    pub fn new(grid: &Grid, nl: &Nonlinearity, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt != 0.0) {
            return Err(Error::Usage(format!("time step must be finite and nonzero, got {dt}")));
        }
        if dt.abs() > grid.dx() {
            return Err(Error::Usage(format!(
                "|dt| = {} exceeds dx = {}",
                dt.abs(),
                grid.dx()
            )));
        }
        let (a, b) = grid
            .wavenumbers()
            .iter()
            .map(|&k| {
                let w = (1.0 + k * k).sqrt();
                let (s, c) = (w * dt).sin_cos();
                (
                    Complex64::new(c, -0.5 * s * (w + 1.0 / w)),
                    Complex64::new(0.0, 0.5 * s * (1.0 / w - w)),
                )
            })
            .unzip();
        Ok(Self {
            grid: grid.clone(),
            nl: nl.clone(),
            dt,
            a,
            b,
            buf: vec![Complex64::new(0.0, 0.0); grid.n()],
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    fn kick(&mut self, h: f64) {
        let nl = &self.nl;
        for z in self.buf.iter_mut() {
            z.im += h * nl.f(z.re);
        }
    }

    fn rotate(&mut self) {
        let n = self.grid.n();
        self.grid.fft(&mut self.buf);
        let spec = self.buf.clone();
        for j in 0..n {
            let m = (n - j) % n;
            self.buf[j] = self.a[j] * spec[j] + self.b[j] * spec[m].conj();
        }
        self.grid.ifft(&mut self.buf);
    }

    /// Advance `(u, u_t)` in place by `steps` steps.
    pub fn advance(&mut self, u: &mut [f64], ut: &mut [f64], steps: usize) {
        if steps == 0 {
            return;
        }
        for (z, (&a, &b)) in self.buf.iter_mut().zip(u.iter().zip(ut.iter())) {
            *z = Complex64::new(a, b);
        }
        let h = 0.5 * self.dt;
        self.kick(h);
        for s in 0..steps {
            self.rotate();
            // Adjacent half kicks merge into one full kick.
            self.kick(if s + 1 == steps { h } else { 2.0 * h });
        }
        for (z, (a, b)) in self.buf.iter().zip(u.iter_mut().zip(ut.iter_mut())) {
            *a = z.re;
            *b = z.im;
        }
    }

    pub fn step(&mut self, state: &FieldPair) -> Result<FieldPair> {
        if !state.grid().same(&self.grid) {
            return Err(Error::GridMismatch);
        }
        let mut u = state.first.values().to_vec();
        let mut ut = state.second.values().to_vec();
        self.advance(&mut u, &mut ut, 1);
        let out = FieldPair::raw(&self.grid, u, ut);
        if !out.is_finite() {
            return Err(Error::BlowUp { last_valid_time: 0.0 });
        }
        Ok(out)
    }
}

/// One Strang step of size `dt` (negative for backward).
pub fn step(state: &FieldPair, dt: f64, nl: &Nonlinearity) -> Result<FieldPair> {
    Stepper::new(state.grid(), nl, dt)?.step(state)
}

/// `1/2 int (u_t^2 + u_x^2 + u^2 - 2F(u))`.
pub fn energy(state: &FieldPair, nl: &Nonlinearity) -> f64 {
    let ux = state.first.deriv();
    let dx = state.grid().dx();
    let s: f64 = state
        .first
        .values()
        .iter()
        .zip(state.second.values())
        .zip(ux.values())
        .map(|((&u, &ut), &d)| ut * ut + d * d + u * u - 2.0 * nl.primitive(u))
        .sum();
    0.5 * dx * s
}

/// `1/2 int u_t u_x`.
pub fn momentum(state: &FieldPair) -> f64 {
    let ux = state.first.deriv();
    0.5 * state.grid().dx() * crate::grid::dot(state.second.values(), ux.values())
}

pub type Reference = Arc<dyn Fn(f64) -> FieldPair + Send + Sync>;

/// Integration window and bookkeeping.
#[derive(Clone)]
pub struct EvolveConfig {
    pub dt: f64,
    pub t_begin: f64,
    pub t_end: f64,
    /// Energy-norm cap; `None` means 10x the initial norm.
    pub blowup_threshold: Option<f64>,
    pub record_every: usize,
    /// Keep every `k`-th recorded state (0 keeps none).
    pub keep_states: usize,
    /// Compute energy, momentum and norms at each record.
    pub diagnostics: bool,
    pub reference: Option<Reference>,
}

impl fmt::Debug for EvolveConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EvolveConfig")
            .field("dt", &self.dt)
            .field("t_begin", &self.t_begin)
            .field("t_end", &self.t_end)
            .field("blowup_threshold", &self.blowup_threshold)
            .field("record_every", &self.record_every)
            .field("keep_states", &self.keep_states)
            .field("diagnostics", &self.diagnostics)
            .field("reference", &self.reference.is_some())
            .finish()
    }
}

impl EvolveConfig {
    pub fn new(t_begin: f64, t_end: f64, dt: f64) -> Self {
        Self {
            dt,
            t_begin,
            t_end,
            blowup_threshold: None,
            record_every: 10,
            keep_states: 0,
            diagnostics: true,
            reference: None,
        }
    }

    pub fn with_reference(mut self, r: Reference) -> Self {
        self.reference = Some(r);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            bad.push(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_begin.is_finite() && self.t_end.is_finite()) {
            bad.push("times must be finite".to_string());
        }
        if let Some(b) = self.blowup_threshold {
            if !(b > 0.0) {
                bad.push(format!("blowup_threshold must be positive, got {b}"));
            }
        }
        if self.record_every == 0 {
            bad.push("record_every must be at least 1".to_string());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Usage(bad.join("; ")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Diagnostic {
    pub t: f64,
    pub energy: f64,
    pub momentum: f64,
    pub energy_norm: f64,
    /// Energy-norm distance to the reference (NaN without one).
    pub dist: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Completed,
    /// An observer asked to stop.
    Stopped,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<(f64, FieldPair)>,
    pub diagnostics: Vec<Diagnostic>,
    pub status: Status,
    pub final_time: f64,
    pub final_state: FieldPair,
}

/// Callback run at every record; `Break` stops the integration.
pub type Observer<'a> = dyn FnMut(f64, &FieldPair) -> ControlFlow<()> + 'a;

/// Integrate from `t_begin` to `t_end` (backward if `t_end < t_begin`).
pub fn evolve(
    u0: &FieldPair,
    cfg: &EvolveConfig,
    nl: &Nonlinearity,
    observers: &mut [&mut Observer<'_>],
) -> Result<Trajectory> {
    cfg.validate()?;
    let grid = u0.grid().clone();
    let span = cfg.t_end - cfg.t_begin;
    let steps = (span.abs() / cfg.dt).round() as usize;
    let h = if steps == 0 { 0.0 } else { span / steps as f64 };
    let mut stepper = if steps == 0 {
        None
    } else {
        Some(Stepper::new(&grid, nl, h)?)
    };
    let threshold = cfg.blowup_threshold.unwrap_or_else(|| 10.0 * u0.norm_energy().max(1e-300));
    let mut u = u0.first.values().to_vec();
    let mut ut = u0.second.values().to_vec();
    let mut traj = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        diagnostics: Vec::new(),
        status: Status::Completed,
        final_time: cfg.t_begin,
        final_state: u0.clone(),
    };
    let mut last_valid = cfg.t_begin;
    let mut k = 0usize;
    let mut nrec = 0usize;
    loop {
        let t = cfg.t_begin + k as f64 * h;
        let state = FieldPair::raw(&grid, u.clone(), ut.clone());
        if !state.is_finite() {
            return Err(Error::BlowUp { last_valid_time: last_valid });
        }
        let norm = state.norm_energy();
        if norm > threshold {
            return Err(Error::BlowUp { last_valid_time: last_valid });
        }
        last_valid = t;
        traj.times.push(t);
        if cfg.diagnostics {
            let dist = match &cfg.reference {
                Some(r) => (&state - &r(t)).norm_energy(),
                None => f64::NAN,
            };
            traj.diagnostics.push(Diagnostic {
                t,
                energy: energy(&state, nl),
                momentum: momentum(&state),
                energy_norm: norm,
                dist,
            });
        }
        if cfg.keep_states > 0 && nrec.is_multiple_of(cfg.keep_states) {
            traj.states.push((t, state.clone()));
        }
        nrec += 1;
        let mut stop = false;
        for obs in observers.iter_mut() {
            if obs(t, &state).is_break() {
                stop = true;
            }
        }
        traj.final_time = t;
        traj.final_state = state;
        if stop {
            traj.status = Status::Stopped;
            break;
        }
        if k == steps {
            break;
        }
        let m = cfg.record_every.min(steps - k);
        stepper.as_mut().unwrap().advance(&mut u, &mut ut, m);
        k += m;
    }
    Ok(traj)
}
