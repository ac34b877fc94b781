//! Modulation of a state near a soliton sum: optimal centers, residual,
//! coefficient vectors, the shrinking tube and the localized Lyapunov
//! functional.

use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;

use crate::dense::Matrix;
use crate::error::{Error, Result};
use crate::evolve::energy;
use crate::grid::{FieldPair, Grid, ScalarField};
use crate::soliton::{boosted_profile, GroundState, Nonlinearity, SolitonParams};
use crate::spectral::{PackOptions, SpectralPack};

#[derive(Clone, Copy, Debug)]
pub struct ModOptions {
    /// Admissible distance from the nominal soliton sum.
    pub eps0: f64,
    /// Minimal distance between consecutive nominal centers.
    pub min_separation: f64,
    pub newton_tol: f64,
    pub max_iter: usize,
    /// Central-difference step for the Newton Jacobian.
    pub fd_step: f64,
}

impl Default for ModOptions {
    fn default() -> Self {
        Self {
            eps0: 0.5,
            min_separation: 3.0,
            newton_tol: 1e-12,
            max_iter: 50,
            fd_step: 1e-5,
        }
    }
}

/// Result of modulating one state.
#[derive(Clone, Debug)]
pub struct ModState {
    pub t: f64,
    /// Modulated centers `y~_j`.
    pub shifts: Vec<f64>,
    /// `x~_j = y~_j - beta_j t`.
    pub x_tilde: Vec<f64>,
    pub v: FieldPair,
    pub v_norm: f64,
    pub a_plus: Vec<f64>,
    pub a_minus: Vec<f64>,
    pub a_zero: Vec<f64>,
    /// Max over `j` of `|<V | d_x R~_j>|`.
    pub newton_residual: f64,
    pub iterations: usize,
}

impl ModState {
    pub fn a_plus_norm(&self) -> f64 {
        l2(&self.a_plus)
    }

    pub fn a_minus_norm(&self) -> f64 {
        l2(&self.a_minus)
    }

    pub fn a_zero_norm(&self) -> f64 {
        l2(&self.a_zero)
    }
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Spectra of the direction fields of one soliton, centered at 0.
struct DirectionSpectra {
    z_plus: Vec<Complex64>,
    z_minus: Vec<Complex64>,
    z0: Vec<Complex64>,
}

fn pair_spectrum(grid: &Grid, p: &FieldPair) -> Vec<Complex64> {
    // Spectra of both components, concatenated.
    let (a, b) = grid.spectra(p.first.values(), p.second.values());
    a.into_iter().chain(b).collect()
}

/// Modulation engine for a fixed set of soliton parameters.
pub struct Modulator {
    params: SolitonParams,
    gs: GroundState,
    packs: Vec<Arc<SpectralPack>>,
    spectra: Vec<DirectionSpectra>,
    opts: ModOptions,
}

impl fmt::Debug for Modulator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Modulator")
            .field("betas", &self.params.betas())
            .field("opts", &self.opts)
            .finish()
    }
}

impl Modulator {
    pub fn new(params: &SolitonParams, gs: &GroundState, opts: ModOptions) -> Result<Self> {
        let packs = (0..params.len())
            .map(|j| {
                SpectralPack::build_with(gs, params.boost(j), PackOptions { coercivity: false }).map(Arc::new)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::with_packs(params, gs, packs, opts)
    }

    pub fn with_packs(
        params: &SolitonParams,
        gs: &GroundState,
        packs: Vec<Arc<SpectralPack>>,
        opts: ModOptions,
    ) -> Result<Self> {
        if packs.len() != params.len() {
            return Err(Error::Usage(format!(
                "{} spectral packs for {} solitons",
                packs.len(),
                params.len()
            )));
        }
        let grid = gs.grid();
        let spectra = packs
            .iter()
            .map(|p| DirectionSpectra {
                z_plus: pair_spectrum(grid, p.z_plus()),
                z_minus: pair_spectrum(grid, p.z_minus()),
                z0: pair_spectrum(grid, p.z0()),
            })
            .collect();
        Ok(Self {
            params: params.clone(),
            gs: gs.clone(),
            packs,
            spectra,
            opts,
        })
    }

    pub fn params(&self) -> &SolitonParams {
        &self.params
    }

    pub fn ground_state(&self) -> &GroundState {
        &self.gs
    }

    pub fn grid(&self) -> &Grid {
        self.gs.grid()
    }

    pub fn packs(&self) -> &[Arc<SpectralPack>] {
        &self.packs
    }

    pub fn options(&self) -> &ModOptions {
        &self.opts
    }

    pub fn lambda0(&self) -> f64 {
        self.packs[0].lambda0()
    }

    /// `R~_j = (Q_beta, -beta Q_beta')(x - y)` and `d_x R~_j`.
    pub fn soliton_at(&self, j: usize, y: f64) -> (FieldPair, FieldPair) {
        let grid = self.grid();
        let b = self.params.boost(j);
        let p = boosted_profile(&self.gs, b, y, grid);
        let beta = b.beta();
        let r = FieldPair::raw(grid, p.q, p.dq.iter().map(|d| -beta * d).collect());
        let dr = FieldPair::raw(grid, p.dq, p.d2q.iter().map(|d| -beta * d).collect());
        (r, dr)
    }

    /// `sum_j R~_j(y_j)`.
    pub fn soliton_sum_at(&self, shifts: &[f64]) -> FieldPair {
        let mut r = FieldPair::zeros(self.grid());
        for (j, &y) in shifts.iter().enumerate() {
            let (rj, _) = self.soliton_at(j, y);
            r = &r + &rj;
        }
        r
    }

    /// `Z+_j`, `Z-_j`, `Z0_j` translated to `y`.
    pub fn directions_at(&self, j: usize, y: f64) -> (FieldPair, FieldPair, FieldPair) {
        let p = &self.packs[j];
        (p.z_plus().translated(y), p.z_minus().translated(y), p.z0().translated(y))
    }

    fn g(&self, u: &FieldPair, shifts: &[f64]) -> (Vec<f64>, FieldPair) {
        let n = shifts.len();
        let mut v = u.clone();
        let mut drs = Vec::with_capacity(n);
        for (j, &y) in shifts.iter().enumerate() {
            let (r, dr) = self.soliton_at(j, y);
            v = &v - &r;
            drs.push(dr);
        }
        let g = drs.iter().map(|dr| v.inner(dr).expect("same grid")).collect();
        (g, v)
    }

    /// Checks the nominal-center separation at time `t`.
    pub fn check_separation(&self, t: f64) -> Result<()> {
        let c = self.params.centers(t);
        for w in c.windows(2) {
            if w[1] - w[0] < self.opts.min_separation {
                return Err(Error::Domain(format!(
                    "soliton centers {:.3} and {:.3} closer than {} at t = {t}",
                    w[0], w[1], self.opts.min_separation
                )));
            }
        }
        Ok(())
    }

    /// Newton iteration for the orthogonality conditions, warm-started at
    /// `guess` (nominal centers if `None`).
    pub fn modulate(&self, u: &FieldPair, t: f64, guess: Option<&[f64]>) -> Result<ModState> {
        if !u.grid().same(self.grid()) {
            return Err(Error::GridMismatch);
        }
        self.check_separation(t)?;
        let nominal = self.params.centers(t);
        let dist = (u - &self.soliton_sum_at(&nominal)).norm_energy();
        if dist > self.opts.eps0 {
            return Err(Error::Modulation(format!(
                "state is {dist:.3e} from the soliton sum, beyond eps0 = {}",
                self.opts.eps0
            )));
        }
        let n = self.params.len();
        let mut y: Vec<f64> = guess.map(<[f64]>::to_vec).unwrap_or(nominal);
        if y.len() != n {
            return Err(Error::Usage(format!("{} guesses for {n} solitons", y.len())));
        }
        let h = self.opts.fd_step;
        let dr_norms: Vec<f64> = (0..n)
            .map(|j| {
                let (_, dr) = self.soliton_at(j, 0.0);
                dr.inner(&dr).unwrap().sqrt()
            })
            .collect();
        let mut iterations = 0;
        let (g, v) = loop {
            let (g, v) = self.g(u, &y);
            let vn = v.inner(&v)?.sqrt();
            let converged = g
                .iter()
                .zip(&dr_norms)
                .all(|(gj, dn)| gj.abs() <= self.opts.newton_tol * (vn * dn).max(1e-300) || gj.abs() < 1e-15 * dn);
            if converged {
                break (g, v);
            }
            if iterations == self.opts.max_iter {
                return Err(Error::Modulation(format!(
                    "Newton did not converge in {} iterations (residual {:e})",
                    self.opts.max_iter,
                    g.iter().fold(0.0f64, |m, x| m.max(x.abs()))
                )));
            }
            let mut jac = Matrix::zeros(n, n);
            for k in 0..n {
                let mut yp = y.clone();
                let mut ym = y.clone();
                yp[k] += h;
                ym[k] -= h;
                let (gp, _) = self.g(u, &yp);
                let (gm, _) = self.g(u, &ym);
                for i in 0..n {
                    jac[(i, k)] = (gp[i] - gm[i]) / (2.0 * h);
                }
            }
            let step = jac.solve(&g).map_err(|e| Error::Modulation(format!("singular Jacobian: {e}")))?;
            let mut moved = 0.0f64;
            for (yi, s) in y.iter_mut().zip(&step) {
                *yi -= s;
                moved = moved.max(s.abs());
            }
            iterations += 1;
            if moved < 1e-15 * (1.0 + y.iter().fold(0.0f64, |m, x| m.max(x.abs()))) {
                let (g, v) = self.g(u, &y);
                break (g, v);
            }
        };
        let (a_plus, a_minus, a_zero) = self.coefficients(&v, &y);
        let betas = self.params.betas();
        Ok(ModState {
            t,
            x_tilde: y.iter().zip(betas).map(|(yj, b)| yj - b * t).collect(),
            shifts: y,
            v_norm: v.norm_energy(),
            v,
            a_plus,
            a_minus,
            a_zero,
            newton_residual: g.iter().fold(0.0f64, |m, x| m.max(x.abs())),
            iterations,
        })
    }

    /// `a+_j = <V|Z-_j>`, `a-_j = <V|Z+_j>`, `a0_j = <V|Z0_j>` with the
    /// directions translated to `shifts`.
    pub fn coefficients(&self, v: &FieldPair, shifts: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let grid = self.grid();
        let n = grid.n();
        let (a, b) = grid.spectra(v.first.values(), v.second.values());
        let scale = grid.dx() / n as f64;
        let mut ap = Vec::new();
        let mut am = Vec::new();
        let mut a0 = Vec::new();
        for (sp, &y) in self.spectra.iter().zip(shifts) {
            let shift = grid.shift_multiplier(y);
            let mult: Vec<Complex64> = (0..n).map(&shift).collect();
            let inner = |z: &[Complex64]| -> f64 {
                let mut s = 0.0;
                for k in 0..n {
                    s += ((a[k].conj() * z[k] + b[k].conj() * z[n + k]) * mult[k]).re;
                }
                s * scale
            };
            ap.push(inner(&sp.z_minus));
            am.push(inner(&sp.z_plus));
            a0.push(inner(&sp.z0));
        }
        (ap, am, a0)
    }
}

/// Decay constant of the shrinking tube.
pub fn gamma0(params: &SolitonParams, lambda0: f64) -> Result<f64> {
    if !(lambda0 > 0.0) {
        return Err(Error::Domain(format!("lambda0 must be positive, got {lambda0}")));
    }
    let betas = params.betas();
    let gammas: Vec<f64> = (0..params.len()).map(|j| params.boost(j).gamma()).collect();
    let gmax = gammas.iter().fold(0.0f64, |m, &g| m.max(g));
    let gmin = gammas.iter().fold(f64::INFINITY, |m, &g| m.min(g));
    let first = 0.25 * lambda0.sqrt() / gmax;
    if betas.len() < 2 {
        return Ok(first);
    }
    let gap = betas.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    if !(gap > 0.0) {
        return Err(Error::Domain("velocities must be distinct".into()));
    }
    Ok(first.min(0.25 * gmin * gap))
}

/// Which tube bound a state violates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Bound {
    V,
    Shift(usize),
    APlus,
    AMinus,
    AZero,
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bound::V => write!(f, "V"),
            Bound::Shift(j) => write!(f, "shift{}", j + 1),
            Bound::APlus => write!(f, "a_plus"),
            Bound::AMinus => write!(f, "a_minus"),
            Bound::AZero => write!(f, "a_zero"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TubeStatus {
    Inside,
    /// Largest violated bound and its ratio to the threshold.
    Exit { bound: Bound, ratio: f64 },
}

impl TubeStatus {
    pub fn is_inside(&self) -> bool {
        matches!(self, TubeStatus::Inside)
    }
}

/// Ratios of every tube quantity to its threshold at time `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct TubeRatios {
    pub v: f64,
    pub shifts: Vec<f64>,
    pub a_plus: f64,
    pub a_minus: f64,
    pub a_zero: f64,
}

impl TubeRatios {
    pub fn worst(&self) -> (Bound, f64) {
        let mut best = (Bound::V, self.v);
        for (j, &r) in self.shifts.iter().enumerate() {
            if r > best.1 {
                best = (Bound::Shift(j), r);
            }
        }
        for (b, r) in [
            (Bound::APlus, self.a_plus),
            (Bound::AMinus, self.a_minus),
            (Bound::AZero, self.a_zero),
        ] {
            if r > best.1 {
                best = (b, r);
            }
        }
        best
    }
}

pub fn tube_ratios(m: &ModState, params: &SolitonParams, gamma0: f64) -> TubeRatios {
    let t = m.t;
    let r1 = (-gamma0 * t).exp();
    let r32 = (-1.5 * gamma0 * t).exp();
    TubeRatios {
        v: m.v_norm / r1,
        shifts: m
            .x_tilde
            .iter()
            .zip(params.shifts())
            .map(|(xt, x)| (xt - x).abs() / r1)
            .collect(),
        a_plus: m.a_plus_norm() / r32,
        a_minus: m.a_minus_norm() / r32,
        a_zero: m.a_zero_norm() / r32,
    }
}

/// Closed tube: equality is inside, exit needs strict exceedance.
pub fn tube_check(m: &ModState, params: &SolitonParams, gamma0: f64) -> TubeStatus {
    let (bound, ratio) = tube_ratios(m, params, gamma0).worst();
    if ratio > 1.0 {
        TubeStatus::Exit { bound, ratio }
    } else {
        TubeStatus::Inside
    }
}

/// `phi(s) = (1 + tanh s) / 2`.
pub fn cutoff_profile(s: f64) -> f64 {
    0.5 * (1.0 + s.tanh())
}

/// Partition of unity following the interfaces between consecutive solitons.
#[derive(Clone, Debug)]
pub struct CutoffFamily {
    pub l: f64,
    /// `m_j = (beta_j + beta_{j-1}) / 2`, `j = 2..N`.
    pub midpoints: Vec<f64>,
    pub t: f64,
    pub phis: Vec<ScalarField>,
}

pub fn build_cutoffs(params: &SolitonParams, t: f64, l: f64, grid: &Grid) -> Result<CutoffFamily> {
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::Usage(format!("cutoff width must be positive, got {l}")));
    }
    let b = params.betas();
    let m: Vec<f64> = b.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    // Step functions at each interface; phi_j is the difference of neighbours.
    let steps: Vec<ScalarField> = m
        .iter()
        .map(|&mj| ScalarField::from_fn(grid, |x| cutoff_profile((x - mj * t) / l)))
        .collect();
    let n = b.len();
    let mut phis = Vec::with_capacity(n);
    for j in 0..n {
        let lo = if j == 0 { None } else { Some(&steps[j - 1]) };
        let hi = steps.get(j);
        let vals: Vec<f64> = (0..grid.n())
            .map(|k| lo.map_or(1.0, |s| s.values()[k]) - hi.map_or(0.0, |s| s.values()[k]))
            .collect();
        phis.push(ScalarField::raw(grid, vals));
    }
    Ok(CutoffFamily { l, midpoints: m, t, phis })
}

/// `1/2 int phi u_t u_x`.
pub fn portion_momentum(u: &FieldPair, phi: &ScalarField) -> f64 {
    let ux = u.first.deriv();
    let s: f64 = u
        .second
        .values()
        .iter()
        .zip(ux.values())
        .zip(phi.values())
        .map(|((a, b), p)| a * b * p)
        .sum();
    0.5 * u.grid().dx() * s
}

/// `E(U) + 2 sum_j beta_j P_j`.
pub fn lyapunov(u: &FieldPair, params: &SolitonParams, cutoffs: &CutoffFamily, nl: &Nonlinearity) -> f64 {
    let p: f64 = params
        .betas()
        .iter()
        .zip(&cutoffs.phis)
        .map(|(b, phi)| b * portion_momentum(u, phi))
        .sum();
    energy(u, nl) + 2.0 * p
}

/// `int phi (v2^2 + v1x^2 + v1^2 - f'(Q_beta) v1^2 + 2 beta v2 v1x)` with the
/// soliton of `pack` centered at `center`.
pub fn localized_form(v: &FieldPair, phi: &ScalarField, pack: &SpectralPack, center: f64) -> f64 {
    let grid = v.grid();
    let boost = pack.boost();
    let beta = boost.beta();
    let prof = boosted_profile(pack.ground_state(), boost, center, grid);
    let nl = pack.ground_state().nonlinearity();
    let v1x = v.first.deriv();
    let v1 = v.first.values();
    let v2 = v.second.values();
    let mut s = 0.0;
    for k in 0..grid.n() {
        let d = v1x.values()[k];
        s += phi.values()[k]
            * (v2[k] * v2[k] + d * d + v1[k] * v1[k] - nl.df(prof.q[k]) * v1[k] * v1[k] + 2.0 * beta * v2[k] * d);
    }
    s * grid.dx()
}

/// Sum over solitons of the localized forms.
pub fn localized_forms(v: &FieldPair, cutoffs: &CutoffFamily, packs: &[Arc<SpectralPack>], shifts: &[f64]) -> Vec<f64> {
    cutoffs
        .phis
        .iter()
        .zip(packs)
        .zip(shifts)
        .map(|((phi, p), &y)| localized_form(v, phi, p, y))
        .collect()
}
