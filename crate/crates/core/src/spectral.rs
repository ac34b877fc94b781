//! Linearized operators around a boosted soliton, the unstable/stable
//! directions of the linearized flow and the coercivity constants.

use std::sync::Arc;

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{FieldPair, Grid, ScalarField};
use crate::krylov::{gmres, lobpcg_min, pcg, EigenResult, Projector};
use crate::soliton::{boosted_profile, Boost, GroundState};

/// Which linearized operator a [`LinearOperator`] applies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OperatorKind {
    /// `-d_xx + 1 - f'(Q)`.
    LPlus,
    /// `-gamma^-2 d_xx + 1 - f'(Q_beta)`.
    LPlusBeta,
    /// `-d_xx + 1 - f'(Q_beta)`.
    T,
    /// `(v1, v2) -> (v2, -v1)`.
    J,
    /// `diag(T, 1)`.
    L,
    /// `[[T, -beta d_x], [beta d_x, 1]]`.
    H,
    /// `[[-beta d_x, -T], [1, -beta d_x]] = -H J`.
    CalH,
}

impl OperatorKind {
    pub fn label(&self) -> &'static str {
        match self {
            OperatorKind::LPlus => "L+",
            OperatorKind::LPlusBeta => "L+beta",
            OperatorKind::T => "T",
            OperatorKind::J => "J",
            OperatorKind::L => "L",
            OperatorKind::H => "H",
            OperatorKind::CalH => "calH",
        }
    }

    pub fn acts_on_pairs(&self) -> bool {
        !matches!(self, OperatorKind::LPlus | OperatorKind::LPlusBeta | OperatorKind::T)
    }
}

/// Matrix-free linearized operator around `Q_beta` centered at 0.
#[derive(Clone, Debug)]
pub struct LinearOperator {
    kind: OperatorKind,
    grid: Grid,
    beta: f64,
    gamma: f64,
    /// `f'(Q_beta)` on the grid.
    potential: Arc<Vec<f64>>,
}

/// Apply a per-mode 2x2 symbol to `(v1, v2)`; each entry must be a
/// real-preserving multiplier.
fn symbol2(
    grid: &Grid,
    v1: &[f64],
    v2: &[f64],
    m: impl Fn(usize) -> [[Complex64; 2]; 2],
) -> (Vec<f64>, Vec<f64>) {
    let (a, b) = grid.spectra(v1, v2);
    let i = Complex64::new(0.0, 1.0);
    let mut z: Vec<Complex64> = (0..grid.n())
        .map(|j| {
            let s = m(j);
            let o1 = s[0][0] * a[j] + s[0][1] * b[j];
            let o2 = s[1][0] * a[j] + s[1][1] * b[j];
            o1 + i * o2
        })
        .collect();
    grid.ifft(&mut z);
    (z.iter().map(|c| c.re).collect(), z.iter().map(|c| c.im).collect())
}

fn re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

fn im(x: f64) -> Complex64 {
    Complex64::new(0.0, x)
}

impl LinearOperator {
    pub fn new(kind: OperatorKind, gs: &GroundState, boost: Boost, grid: &Grid) -> Self {
        let boost = if kind == OperatorKind::LPlus {
            Boost::new(0.0).expect("zero velocity")
        } else {
            boost
        };
        let prof = boosted_profile(gs, boost, 0.0, grid);
        let nl = gs.nonlinearity();
        Self {
            kind,
            grid: grid.clone(),
            beta: boost.beta(),
            gamma: boost.gamma(),
            potential: Arc::new(prof.q.iter().map(|&q| nl.df(q)).collect()),
        }
    }

    /// Constant-coefficient operator with a prescribed potential.
    pub fn with_potential(kind: OperatorKind, boost: Boost, potential: ScalarField) -> Self {
        Self {
            kind,
            grid: potential.grid().clone(),
            beta: boost.beta(),
            gamma: boost.gamma(),
            potential: Arc::new(potential.into_values()),
        }
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn label(&self) -> &'static str {
        self.kind.label()
    }

    pub fn is_symmetric(&self) -> bool {
        !matches!(self.kind, OperatorKind::J | OperatorKind::CalH)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    /// Coefficient of `-d_xx` in the scalar operators.
    fn diffusion(&self) -> f64 {
        match self.kind {
            OperatorKind::LPlusBeta => 1.0 / (self.gamma * self.gamma),
            _ => 1.0,
        }
    }

    fn apply_scalar_vec(&self, u: &[f64]) -> Vec<f64> {
        let k = self.grid.wavenumbers();
        let c = self.diffusion();
        let mut out = self.grid.filter(u, |j| re(c * k[j] * k[j]));
        for ((o, &ui), &v) in out.iter_mut().zip(u).zip(self.potential.iter()) {
            *o += (1.0 - v) * ui;
        }
        out
    }

    fn apply_pair_vec(&self, v1: &[f64], v2: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let g = &self.grid;
        let k = g.wavenumbers();
        let b = self.beta;
        let z = re(0.0);
        match self.kind {
            OperatorKind::J => (v2.to_vec(), v1.iter().map(|x| -x).collect()),
            OperatorKind::L => {
                let (mut o1, _) = symbol2(g, v1, v2, |j| [[re(k[j] * k[j] + 1.0), z], [z, z]]);
                for ((o, &u), &p) in o1.iter_mut().zip(v1).zip(self.potential.iter()) {
                    *o -= p * u;
                }
                (o1, v2.to_vec())
            }
            OperatorKind::H => {
                let (mut o1, o2) = symbol2(g, v1, v2, |j| {
                    let ik = im(g.odd_wavenumber(j));
                    [[re(k[j] * k[j] + 1.0), -b * ik], [b * ik, re(1.0)]]
                });
                for ((o, &u), &p) in o1.iter_mut().zip(v1).zip(self.potential.iter()) {
                    *o -= p * u;
                }
                (o1, o2)
            }
            OperatorKind::CalH => {
                let (mut o1, o2) = symbol2(g, v1, v2, |j| {
                    let ik = im(g.odd_wavenumber(j));
                    [[-b * ik, re(-(k[j] * k[j] + 1.0))], [re(1.0), -b * ik]]
                });
                for ((o, &u), &p) in o1.iter_mut().zip(v2).zip(self.potential.iter()) {
                    *o += p * u;
                }
                (o1, o2)
            }
            _ => unreachable!("scalar operator"),
        }
    }

    /// Apply a scalar operator (`L+`, `L+beta`, `T`).
    pub fn apply(&self, u: &ScalarField) -> Result<ScalarField> {
        if self.kind.acts_on_pairs() {
            return Err(Error::Usage(format!("{} acts on field pairs", self.label())));
        }
        if !u.grid().same(&self.grid) {
            return Err(Error::GridMismatch);
        }
        Ok(ScalarField::raw(&self.grid, self.apply_scalar_vec(u.values())))
    }

    /// Apply a pair operator (`J`, `L`, `H`, `calH`).
    pub fn apply_pair(&self, u: &FieldPair) -> Result<FieldPair> {
        if !self.kind.acts_on_pairs() {
            return Err(Error::Usage(format!("{} acts on scalar fields", self.label())));
        }
        if !u.grid().same(&self.grid) {
            return Err(Error::GridMismatch);
        }
        let (a, b) = self.apply_pair_vec(u.first.values(), u.second.values());
        Ok(FieldPair::raw(&self.grid, a, b))
    }

    /// Apply to a flat vector (length `n` for scalar kinds, `2n` stacked otherwise).
    pub fn apply_flat(&self, v: &[f64]) -> Vec<f64> {
        let n = self.grid.n();
        if self.kind.acts_on_pairs() {
            let (a, b) = self.apply_pair_vec(&v[..n], &v[n..]);
            let mut out = a;
            out.extend(b);
            out
        } else {
            self.apply_scalar_vec(v)
        }
    }
}

/// `L+beta` around `Q_beta` (plain `L+` when `beta = 0`).
pub fn build_lplus(gs: &GroundState, boost: Boost, grid: &Grid) -> LinearOperator {
    let kind = if boost.beta() == 0.0 {
        OperatorKind::LPlus
    } else {
        OperatorKind::LPlusBeta
    };
    LinearOperator::new(kind, gs, boost, grid)
}

fn l2_normalize(v: &mut [f64], dx: f64) -> f64 {
    let nrm = (dx * v.iter().map(|x| x * x).sum::<f64>()).sqrt();
    v.iter_mut().for_each(|x| *x /= nrm);
    nrm
}

fn mirror_defect(grid: &Grid, v: &[f64]) -> f64 {
    // Only meaningful for grids symmetric about 0.
    let n = grid.n();
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    (1..n / 2).fold(0.0f64, |m, k| m.max((v[n / 2 + k] - v[n / 2 - k]).abs())) / scale
}

/// Index of the node nearest to `x = 0` (periodically).
fn origin_index(grid: &Grid) -> usize {
    (0..grid.n())
        .min_by(|&a, &b| grid.wrap(grid.x(a)).abs().total_cmp(&grid.wrap(grid.x(b)).abs()))
        .unwrap()
}

/// Lowest eigenpair `(-lambda0, Q-)` of `L+` or `L+beta` by shifted inverse iteration.
///
/// Returns `lambda0 > 0` and the L2-normalized eigenfunction with `Q-(0) > 0`.
pub fn ground_eigenpair(op: &LinearOperator) -> Result<(f64, ScalarField)> {
    if !matches!(op.kind(), OperatorKind::LPlus | OperatorKind::LPlusBeta) {
        return Err(Error::Usage(format!("ground eigenpair of {}", op.label())));
    }
    let grid = op.grid();
    let dx = grid.dx();
    let k = grid.wavenumbers();
    let c = op.diffusion();
    let vmax = op.potential().iter().fold(0.0f64, |m, &v| m.max(v));
    // Below the spectrum, so the shifted operator is SPD.
    let sigma = -vmax;
    let shifted = |u: &[f64]| -> Vec<f64> {
        let mut o = op.apply_scalar_vec(u);
        for (oi, ui) in o.iter_mut().zip(u) {
            *oi -= sigma * ui;
        }
        o
    };
    let precond = |r: &[f64]| grid.filter(r, |j| re(1.0 / (c * k[j] * k[j] + 1.0 + 0.5 * vmax)));
    let mut x: Vec<f64> = op.potential().to_vec();
    if x.iter().all(|&v| v == 0.0) {
        return Err(Error::NoNegativeEigenvalue { lowest: 1.0 });
    }
    l2_normalize(&mut x, dx);
    let none = Projector::default();
    let mut mu = f64::NAN;
    let mut residual = f64::INFINITY;
    for _ in 0..200 {
        let (y, _) = pcg(shifted, precond, &x, &none, 1e-15, 5000)?;
        x = y;
        l2_normalize(&mut x, dx);
        let lx = op.apply_scalar_vec(&x);
        mu = dx * x.iter().zip(&lx).map(|(a, b)| a * b).sum::<f64>();
        residual = (dx * lx.iter().zip(&x).map(|(l, v)| (l - mu * v).powi(2)).sum::<f64>()).sqrt();
        if residual < 1e-11 * (1.0 + mu.abs()) {
            break;
        }
    }
    if residual > 1e-8 * (1.0 + mu.abs()) {
        return Err(Error::Solver(format!(
            "inverse iteration stalled (residual {residual:e})"
        )));
    }
    if mu >= 0.0 {
        return Err(Error::NoNegativeEigenvalue { lowest: mu });
    }
    let i0 = origin_index(grid);
    if x[i0] < 0.0 {
        x.iter_mut().for_each(|v| *v = -*v);
    }
    if (grid.x0() + 0.5 * grid.length()).abs() < 1e-12 && mirror_defect(grid, &x) > 1e-6 {
        return Err(Error::Consistency("ground eigenfunction is not even".into()));
    }
    Ok((-mu, ScalarField::raw(grid, x)))
}

/// Eigenvector of `e^{cx} L+beta e^{-cx}` for eigenvalue `-lambda0`, i.e.
/// `Q-beta e^{cx}` computed without amplifying tail noise.
fn weighted_ground_mode(op: &LinearOperator, lambda0: f64, c: f64, qminus: &[f64]) -> Result<Vec<f64>> {
    let grid = op.grid();
    let k = grid.wavenumbers();
    let d = op.diffusion();
    let eps = 1e-2;
    let symbol = move |j: usize| -> Complex64 {
        let kj = k[j];
        Complex64::new(
            d * (kj * kj - c * c) + 1.0 + lambda0 + eps,
            2.0 * c * d * grid.odd_wavenumber(j),
        )
    };
    let system = |u: &[f64]| -> Vec<f64> {
        let mut o = grid.filter(u, symbol);
        for ((oi, ui), v) in o.iter_mut().zip(u).zip(op.potential().iter()) {
            *oi -= v * ui;
        }
        o
    };
    let precond = |r: &[f64]| grid.filter(r, |j| 1.0 / symbol(j));
    let qmax = qminus.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let weight: Vec<f64> = (0..grid.n()).map(|i| (c * grid.wrap(grid.x(i))).exp()).collect();
    let naive: Vec<f64> = qminus
        .iter()
        .zip(&weight)
        .map(|(q, w)| if q.abs() > 1e-6 * qmax { q * w } else { 0.0 })
        .collect();
    let mut x = naive.clone();
    let dx = grid.dx();
    l2_normalize(&mut x, dx);
    for _ in 0..30 {
        let (y, _) = gmres(system, precond, &x, 1e-9, 80, 4000)?;
        x = y;
        l2_normalize(&mut x, dx);
        let ax = system(&x);
        let res = (dx * ax.iter().zip(&x).map(|(a, v)| (a - eps * v).powi(2)).sum::<f64>()).sqrt();
        if res < 1e-10 {
            break;
        }
    }
    // Match the scale of Q-beta e^{cx} on the core, where both are accurate.
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..grid.n() {
        if qminus[i].abs() > 1e-2 * qmax {
            num += x[i] * naive[i];
            den += naive[i] * naive[i];
        }
    }
    let s = den / num;
    Ok(x.iter().map(|v| v * s).collect())
}

/// The closed-form directions attached to a boosted soliton.
#[derive(Clone, Debug)]
pub struct Directions {
    pub z_plus: FieldPair,
    pub z_minus: FieldPair,
    pub z0: FieldPair,
    pub phi0: FieldPair,
    pub phi_minus: FieldPair,
    /// Energy norms of `Z+` and `Z-` before normalization.
    pub z_scale: [f64; 2],
}

/// `Z+-`, `Z0`, `Phi0`, `Phi-` for a soliton centered at 0; `Z+-` are
/// normalized to unit energy norm.
pub fn build_directions(
    op: &LinearOperator,
    gs: &GroundState,
    boost: Boost,
    lambda0: f64,
    qminus: &ScalarField,
) -> Result<Directions> {
    let grid = op.grid();
    let (b, g) = (boost.beta(), boost.gamma());
    let rl = lambda0.sqrt();
    let c = b * rl * g;
    let mut z = Vec::new();
    let mut scales = [0.0; 2];
    for (idx, sign) in [1.0, -1.0].into_iter().enumerate() {
        let cs = sign * c;
        let w = if c == 0.0 {
            qminus.values().to_vec()
        } else {
            weighted_ground_mode(op, lambda0, cs, qminus.values())?
        };
        let wf = ScalarField::raw(grid, w);
        let dw = wf.deriv();
        let first: Vec<f64> = wf
            .values()
            .iter()
            .zip(dw.values())
            .map(|(&q, &dq)| b * (dq - cs * q) + sign * g * rl * q)
            .collect();
        let raw = FieldPair {
            first: ScalarField::raw(grid, first),
            second: wf,
        };
        let s = raw.norm_energy();
        scales[idx] = s;
        z.push(raw.scaled(1.0 / s));
    }
    let prof = boosted_profile(gs, boost, 0.0, grid);
    let dq = ScalarField::raw(grid, prof.dq);
    let d2q = ScalarField::raw(grid, prof.d2q);
    let z0 = FieldPair {
        first: d2q.scaled(b),
        second: dq.clone(),
    };
    let phi0 = FieldPair {
        first: dq,
        second: d2q.scaled(-b),
    };
    let phi_minus = FieldPair {
        first: qminus.clone(),
        second: qminus.deriv().scaled(-b),
    };
    let z_minus = z.pop().unwrap();
    let z_plus = z.pop().unwrap();
    Ok(Directions {
        z_plus,
        z_minus,
        z0,
        phi0,
        phi_minus,
        z_scale: scales,
    })
}

/// Options for [`SpectralPack::build_with`].
#[derive(Clone, Copy, Debug)]
pub struct PackOptions {
    /// Also compute `mu0` and `alpha0`.
    pub coercivity: bool,
}

impl Default for PackOptions {
    fn default() -> Self {
        Self { coercivity: true }
    }
}

/// Everything spectral about one boosted soliton, centered at 0.
#[derive(Clone, Debug)]
pub struct SpectralPack {
    gs: GroundState,
    boost: Boost,
    lambda0: f64,
    qminus: ScalarField,
    lplus: LinearOperator,
    h: LinearOperator,
    calh: LinearOperator,
    pub directions: Directions,
    pub y_plus: FieldPair,
    pub y_minus: FieldPair,
    mu0: Option<f64>,
    alpha0: Option<f64>,
}

impl SpectralPack {
    pub fn build(gs: &GroundState, boost: Boost) -> Result<Self> {
        Self::build_with(gs, boost, PackOptions::default())
    }

    pub fn build_with(gs: &GroundState, boost: Boost, opts: PackOptions) -> Result<Self> {
        let grid = gs.grid().clone();
        let lplus = build_lplus(gs, boost, &grid);
        let (lambda0, qminus) = ground_eigenpair(&lplus)?;
        let directions = build_directions(&lplus, gs, boost, lambda0, &qminus)?;
        let h = LinearOperator::new(OperatorKind::H, gs, boost, &grid);
        let calh = LinearOperator::new(OperatorKind::CalH, gs, boost, &grid);
        let mut pack = SpectralPack {
            gs: gs.clone(),
            boost,
            lambda0,
            qminus,
            lplus,
            h,
            calh,
            directions,
            y_plus: FieldPair::zeros(&grid),
            y_minus: FieldPair::zeros(&grid),
            mu0: None,
            alpha0: None,
        };
        let (yp, ym) = solve_y(&pack)?;
        pack.y_plus = yp;
        pack.y_minus = ym;
        if opts.coercivity {
            pack.mu0 = Some(coercivity_mu0(&pack)?);
            pack.alpha0 = Some(coercivity_alpha0(&pack)?);
        }
        Ok(pack)
    }

    pub fn grid(&self) -> &Grid {
        self.qminus.grid()
    }

    pub fn ground_state(&self) -> &GroundState {
        &self.gs
    }

    pub fn boost(&self) -> Boost {
        self.boost
    }

    pub fn lambda0(&self) -> f64 {
        self.lambda0
    }

    /// L2-normalized `Q-beta`.
    pub fn qminus(&self) -> &ScalarField {
        &self.qminus
    }

    /// `sqrt(lambda0) / gamma`.
    pub fn growth_rate(&self) -> f64 {
        self.lambda0.sqrt() / self.boost.gamma()
    }

    pub fn lplus(&self) -> &LinearOperator {
        &self.lplus
    }

    pub fn h(&self) -> &LinearOperator {
        &self.h
    }

    pub fn calh(&self) -> &LinearOperator {
        &self.calh
    }

    pub fn operator(&self, kind: OperatorKind) -> LinearOperator {
        match kind {
            OperatorKind::H => self.h.clone(),
            OperatorKind::CalH => self.calh.clone(),
            OperatorKind::LPlus | OperatorKind::LPlusBeta => self.lplus.clone(),
            k => LinearOperator {
                kind: k,
                ..self.h.clone()
            },
        }
    }

    pub fn z_plus(&self) -> &FieldPair {
        &self.directions.z_plus
    }

    pub fn z_minus(&self) -> &FieldPair {
        &self.directions.z_minus
    }

    pub fn z0(&self) -> &FieldPair {
        &self.directions.z0
    }

    pub fn phi0(&self) -> &FieldPair {
        &self.directions.phi0
    }

    pub fn phi_minus(&self) -> &FieldPair {
        &self.directions.phi_minus
    }

    pub fn mu0(&self) -> Option<f64> {
        self.mu0
    }

    pub fn alpha0(&self) -> Option<f64> {
        self.alpha0
    }

    /// `<HV|V>`.
    pub fn quadratic_form(&self, v: &FieldPair) -> Result<f64> {
        self.h.apply_pair(v)?.inner(v)
    }
}

/// Relative L2 residuals of `calH Z+- = +-(sqrt(lambda0)/gamma) Z+-` and
/// `calH Z0 = 0`.
pub fn eigen_residual(pack: &SpectralPack) -> Result<(f64, f64, f64)> {
    let e = pack.growth_rate();
    let res = |z: &FieldPair, ev: f64| -> Result<f64> {
        let mut hz = pack.calh.apply_pair(z)?;
        hz.axpy(-ev, z)?;
        Ok((hz.inner(&hz)? / z.inner(z)?).sqrt())
    };
    Ok((
        res(pack.z_plus(), e)?,
        res(pack.z_minus(), -e)?,
        res(pack.z0(), 0.0)?,
    ))
}

/// Rayleigh quotient `<calH Z|Z> / <Z|Z>`.
pub fn measured_eigenvalue(pack: &SpectralPack, z: &FieldPair) -> Result<f64> {
    let hz = pack.calh.apply_pair(z)?;
    Ok(hz.inner(z)? / z.inner(z)?)
}

/// Solutions of `H Y+- = Z+-` with `<Phi0|Y+-> = 0`.
pub fn solve_y(pack: &SpectralPack) -> Result<(FieldPair, FieldPair)> {
    let grid = pack.grid();
    let k = grid.wavenumbers();
    let b = pack.boost.beta();
    let g = pack.boost.gamma();
    let dq = &pack.phi0().first;
    let qm = pack.qminus();
    let proj = Projector::new(&[qm.values().to_vec(), dq.values().to_vec()]);
    let lp = &pack.lplus;
    let precond = |r: &[f64]| grid.filter(r, |j| re(1.0 / (k[j] * k[j] / (g * g) + 1.0)));
    let mut out = Vec::new();
    for z in [pack.z_plus(), pack.z_minus()] {
        let rhs = &z.second.deriv().scaled(b) + &z.first;
        let overlap = rhs.inner(dq)?;
        if overlap.abs() > 1e-8 * rhs.norm_l2() * dq.norm_l2() {
            return Err(Error::Consistency(format!(
                "right-hand side not orthogonal to the kernel ({overlap:e})"
            )));
        }
        let alpha = rhs.inner(qm)? / (-pack.lambda0);
        let mut perp = rhs.values().to_vec();
        proj.apply(&mut perp);
        // Tolerance relative to the full right-hand side, not its remainder.
        let ratio = crate::grid::dot(&perp, &perp).sqrt() / crate::grid::dot(rhs.values(), rhs.values()).sqrt();
        let w = if ratio < 1e-13 {
            vec![0.0; grid.n()]
        } else {
            pcg(
                |u: &[f64]| lp.apply_scalar_vec(u),
                precond,
                &perp,
                &proj,
                (1e-13 / ratio).min(1e-6),
                5000,
            )?
            .0
        };
        let mut y1 = ScalarField::raw(grid, w);
        y1.axpy(alpha, qm)?;
        let y2 = &z.second - &y1.deriv().scaled(b);
        let mut y = FieldPair { first: y1, second: y2 };
        let phi0 = pack.phi0();
        let c = y.inner(phi0)? / phi0.inner(phi0)?;
        y.axpy(-c, phi0)?;
        out.push(y);
    }
    let ym = out.pop().unwrap();
    let yp = out.pop().unwrap();
    Ok((yp, ym))
}

/// Deterministic broadband start vector.
fn noise(len: usize, seed: u64) -> Vec<f64> {
    let mut s = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
    (0..len)
        .map(|_| {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
        .collect()
}

fn stack(p: &FieldPair) -> Vec<f64> {
    let mut v = p.first.values().to_vec();
    v.extend_from_slice(p.second.values());
    v
}

/// Constrained minimum of `<HV|V> / |V|_E^2` over `V` orthogonal to `constraints`.
pub fn constrained_minimum(pack: &SpectralPack, constraints: &[FieldPair]) -> Result<EigenResult> {
    let grid = pack.grid();
    let n = grid.n();
    let k = grid.wavenumbers();
    let b = pack.boost.beta();
    let h = &pack.h;
    let energy = |v: &[f64]| -> Vec<f64> {
        let mut o = grid.filter(&v[..n], |j| re(1.0 + k[j] * k[j]));
        o.extend_from_slice(&v[n..]);
        o
    };
    let precond = |r: &[f64]| -> Vec<f64> {
        let (a, c) = symbol2(grid, &r[..n], &r[n..], |j| {
            let kk = k[j] * k[j];
            let bk = b * grid.odd_wavenumber(j);
            let det = (kk + 1.0) - bk * bk;
            [[re(1.0 / det), im(bk / det)], [im(-bk / det), re((kk + 1.0) / det)]]
        });
        let mut o = a;
        o.extend(c);
        o
    };
    let proj = Projector::new(&constraints.iter().map(stack).collect::<Vec<_>>());
    let x0 = noise(2 * n, 7);
    let res = lobpcg_min(|v: &[f64]| h.apply_flat(v), energy, precond, &proj, &x0, 1e-9, 3000)?;
    Ok(res)
}

/// `mu0`: minimum of the form under `<V|Phi0> = <V|Z+> = <V|Z-> = 0`.
pub fn coercivity_mu0(pack: &SpectralPack) -> Result<f64> {
    let r = constrained_minimum(
        pack,
        &[pack.phi0().clone(), pack.z_plus().clone(), pack.z_minus().clone()],
    )?;
    if !(r.value > 0.0) {
        return Err(Error::Coercivity(r.value));
    }
    Ok(r.value)
}

/// `alpha0`: minimum of the form under `<V|Phi0> = <V|H Phi-> = 0`.
pub fn coercivity_alpha0(pack: &SpectralPack) -> Result<f64> {
    let h_phi_minus = pack.h.apply_pair(pack.phi_minus())?;
    let r = constrained_minimum(pack, &[pack.phi0().clone(), h_phi_minus])?;
    if !(r.value > 0.0) {
        return Err(Error::Coercivity(r.value));
    }
    Ok(r.value)
}

/// The three lowest eigenvalues of `L+beta`.
#[derive(Clone, Debug)]
pub struct SpectralCount {
    pub lowest: f64,
    pub kernel: f64,
    pub kernel_vector: ScalarField,
    pub third: f64,
}

/// Checks one negative eigenvalue, a one-dimensional kernel and a positive
/// remainder of the spectrum.
pub fn spectral_count(pack: &SpectralPack) -> Result<SpectralCount> {
    let grid = pack.grid();
    let k = grid.wavenumbers();
    let g = pack.boost.gamma();
    let lp = &pack.lplus;
    let precond = |r: &[f64]| grid.filter(r, |j| re(1.0 / (k[j] * k[j] / (g * g) + 1.0)));
    let ident = |v: &[f64]| v.to_vec();
    let q = pack.qminus.values().to_vec();
    let x0 = noise(grid.n(), 11);
    let second = lobpcg_min(
        |v: &[f64]| lp.apply_scalar_vec(v),
        ident,
        precond,
        &Projector::new(std::slice::from_ref(&q)),
        &x0,
        1e-11,
        3000,
    )?;
    let third = lobpcg_min(
        |v: &[f64]| lp.apply_scalar_vec(v),
        ident,
        precond,
        &Projector::new(&[q, second.vector.clone()]),
        &x0,
        1e-9,
        3000,
    )?;
    let mut kv = second.vector;
    l2_normalize(&mut kv, grid.dx());
    let count = SpectralCount {
        lowest: -pack.lambda0,
        kernel: second.value,
        kernel_vector: ScalarField::raw(grid, kv),
        third: third.value,
    };
    if count.kernel.abs() > 1e-6 || count.third <= 1e-3 {
        return Err(Error::Consistency(format!(
            "unexpected spectrum: kernel eigenvalue {:e}, next {:e}",
            count.kernel, count.third
        )));
    }
    Ok(count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::soliton::groundstate_power;

    fn cubic(n: usize) -> GroundState {
        groundstate_power(3.0, 1.0, &Grid::centered(n, 60.0).unwrap()).unwrap()
    }

    #[test]
    fn free_operator_symbol() {
        let g = Grid::centered(256, 20.0).unwrap();
        let zero = ScalarField::zeros(&g);
        let op = LinearOperator::with_potential(OperatorKind::LPlus, Boost::new(0.0).unwrap(), zero);
        let w = 2.0 * std::f64::consts::PI * 3.0 / 20.0;
        let u = ScalarField::from_fn(&g, |x| (w * x).cos());
        let lu = op.apply(&u).unwrap();
        let diff = (&lu - &u.scaled(w * w + 1.0)).max_abs();
        assert!(diff < 1e-12);
    }

    #[test]
    fn kernel_and_poschl_teller_state() {
        let gs = cubic(4096);
        let b0 = Boost::new(0.0).unwrap();
        let op = build_lplus(&gs, b0, gs.grid());
        assert!(op.apply(gs.derivative()).unwrap().max_abs() < 1e-8);
        let sech2 = ScalarField::from_fn(gs.grid(), |x| 1.0 / x.cosh().powi(2));
        let l = op.apply(&sech2).unwrap();
        assert!((&l + &sech2.scaled(3.0)).max_abs() < 1e-6);
    }

    #[test]
    fn ground_eigenpair_cubic() {
        let gs = cubic(4096);
        let op = build_lplus(&gs, Boost::new(0.0).unwrap(), gs.grid());
        let (l0, q) = ground_eigenpair(&op).unwrap();
        assert!((l0 - 3.0).abs() < 5e-3, "{l0}");
        assert!((q.norm_l2() - 1.0).abs() < 1e-12);
        let exact = ScalarField::from_fn(gs.grid(), |x| 1.0 / x.cosh().powi(2));
        let exact = exact.scaled(1.0 / exact.norm_l2());
        assert!((&q - &exact).max_abs() < 1e-8);
    }

    #[test]
    fn boosted_eigenpair_is_rescaled() {
        let gs = cubic(4096);
        let b = Boost::new(0.6).unwrap();
        let op = build_lplus(&gs, b, gs.grid());
        let (l0, q) = ground_eigenpair(&op).unwrap();
        assert!((l0 - 3.0).abs() < 1e-8);
        let e = ScalarField::from_fn(gs.grid(), |x| 1.0 / (1.25 * x).cosh().powi(2));
        let e = e.scaled(1.0 / e.norm_l2());
        assert!((&q - &e).max_abs() < 1e-8);
    }

    #[test]
    fn quintic_needs_a_shift_below_the_spectrum() {
        let gs = groundstate_power(5.0, 1.0, &Grid::centered(4096, 60.0).unwrap()).unwrap();
        let op = build_lplus(&gs, Boost::new(0.0).unwrap(), gs.grid());
        let (l0, q) = ground_eigenpair(&op).unwrap();
        assert!((l0 - 8.0).abs() < 1e-6, "{l0}");
        assert!(q.values().iter().all(|&v| v > -1e-12));
    }

    #[test]
    fn no_negative_eigenvalue_for_free_operator() {
        let g = Grid::centered(256, 20.0).unwrap();
        let p = ScalarField::constant(&g, 0.0);
        let op = LinearOperator::with_potential(OperatorKind::LPlus, Boost::new(0.0).unwrap(), p);
        assert!(matches!(ground_eigenpair(&op), Err(Error::NoNegativeEigenvalue { .. })));
    }

    #[test]
    fn static_directions_have_closed_forms() {
        let gs = cubic(2048);
        let pack = SpectralPack::build_with(&gs, Boost::new(0.0).unwrap(), PackOptions { coercivity: false }).unwrap();
        let q = pack.qminus();
        let r3 = 3f64.sqrt();
        let zp = pack.z_plus();
        let s = pack.directions.z_scale[0];
        assert!((&zp.first.scaled(s) - &q.scaled(r3)).max_abs() < 1e-12);
        assert!((&zp.second.scaled(s) - q).max_abs() < 1e-12);
        assert!(pack.phi0().second.max_abs() == 0.0);
        assert!((&pack.phi0().first - gs.derivative()).max_abs() < 1e-14);
    }
}
