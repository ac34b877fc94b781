//! Nonlinearities, ground states and boosted solitons.

mod ground;
mod lorentz;

use std::fmt;
use std::sync::Arc;

pub use ground::{groundstate_power, groundstate_shoot, GroundState, ShootOptions};
pub use lorentz::{lorentz_matrix, minkowski, velocity_add};

use crate::error::{Error, Result};
use crate::grid::{FieldPair, Grid, ScalarField};

/// Shared real function `R -> R`.
pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// The nonlinearity `f` together with `f'` and its primitive `F`.
#[derive(Clone)]
pub enum Nonlinearity {
    /// `f(u) = lambda |u|^{p-1} u`.
    Power { p: f64, lambda: f64 },
    Custom { f: RealFn, df: RealFn, primitive: RealFn },
}

impl fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Nonlinearity::Power { p, lambda } => {
                write!(f, "Power {{ p: {p}, lambda: {lambda} }}")
            }
            Nonlinearity::Custom { .. } => write!(f, "Custom"),
        }
    }
}

/// `|u|^e` with an integer fast path.
fn abs_pow(u: f64, e: f64) -> f64 {
    if e.fract() == 0.0 && (0.0..=16.0).contains(&e) {
        u.abs().powi(e as i32)
    } else {
        u.abs().powf(e)
    }
}

impl Nonlinearity {
    pub fn power(p: f64, lambda: f64) -> Result<Self> {
        if !(p.is_finite() && p > 1.0) {
            return Err(Error::Domain(format!("exponent p = {p} must exceed 1")));
        }
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::Domain(format!(
                "coefficient lambda = {lambda} must be positive"
            )));
        }
        Ok(Nonlinearity::Power { p, lambda })
    }

    /// `f(u) = u^3`.
    pub fn cubic() -> Self {
        Nonlinearity::Power { p: 3.0, lambda: 1.0 }
    }

    /// Custom nonlinearity; rejected unless `f` is odd with `f(0) = f'(0) = 0`
    /// and `F(s) > s^2/2` somewhere in `(0, s_max]`.
    pub fn custom(
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        df: impl Fn(f64) -> f64 + Send + Sync + 'static,
        primitive: impl Fn(f64) -> f64 + Send + Sync + 'static,
        s_max: f64,
    ) -> Result<Self> {
        if f(0.0).abs() > 1e-14 || df(0.0).abs() > 1e-12 {
            return Err(Error::Domain("custom f must satisfy f(0) = f'(0) = 0".into()));
        }
        let mut focusing = false;
        for i in 1..=400 {
            let s = s_max * i as f64 / 400.0;
            let (a, b) = (f(s), f(-s));
            if !(a.is_finite() && b.is_finite()) {
                return Err(Error::Domain(format!("custom f is not finite at {s}")));
            }
            if (a + b).abs() > 1e-12 * (1.0 + a.abs()) {
                return Err(Error::Domain(format!("custom f is not odd at s = {s}")));
            }
            focusing |= primitive(s) - 0.5 * s * s > 0.0;
        }
        if !focusing {
            return Err(Error::Domain(format!(
                "F(s) - s^2/2 never positive on (0, {s_max}]"
            )));
        }
        Ok(Nonlinearity::Custom {
            f: Arc::new(f),
            df: Arc::new(df),
            primitive: Arc::new(primitive),
        })
    }

    pub fn f(&self, u: f64) -> f64 {
        match self {
            Nonlinearity::Power { p, lambda } => lambda * abs_pow(u, p - 1.0) * u,
            Nonlinearity::Custom { f, .. } => f(u),
        }
    }

    pub fn df(&self, u: f64) -> f64 {
        match self {
            Nonlinearity::Power { p, lambda } => lambda * p * abs_pow(u, p - 1.0),
            Nonlinearity::Custom { df, .. } => df(u),
        }
    }

    /// `F(u) = int_0^u f`.
    pub fn primitive(&self, u: f64) -> f64 {
        match self {
            Nonlinearity::Power { p, lambda } => lambda * abs_pow(u, p + 1.0) / (p + 1.0),
            Nonlinearity::Custom { primitive, .. } => primitive(u),
        }
    }
}

/// Velocity `beta` with Lorentz factor `gamma`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Boost {
    beta: f64,
    gamma: f64,
}

impl Boost {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta.abs() < 1.0) {
            return Err(Error::Domain(format!("|beta| = {beta} must be below 1")));
        }
        Ok(Self {
            beta,
            gamma: 1.0 / (1.0 - beta * beta).sqrt(),
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

/// Velocities and shifts of an N-soliton configuration, ascending in velocity.
#[derive(Clone, Debug)]
pub struct SolitonParams {
    betas: Vec<f64>,
    shifts: Vec<f64>,
    nl: Nonlinearity,
}

impl SolitonParams {
    pub fn new(betas: &[f64], shifts: &[f64], nl: Nonlinearity) -> Result<Self> {
        if betas.is_empty() || betas.len() != shifts.len() {
            return Err(Error::Usage(format!(
                "need matching non-empty velocity and shift lists ({} vs {})",
                betas.len(),
                shifts.len()
            )));
        }
        for &b in betas {
            Boost::new(b)?;
        }
        if let Some(x) = shifts.iter().find(|x| !x.is_finite()) {
            return Err(Error::Domain(format!("shift {x} is not finite")));
        }
        let mut pairs: Vec<(f64, f64)> = betas.iter().copied().zip(shifts.iter().copied()).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        if pairs.iter().map(|p| p.0).ne(betas.iter().copied()) {
            log::info!("velocities reordered ascending: {pairs:?}");
        }
        if pairs.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Domain("velocities must be distinct".into()));
        }
        Ok(Self {
            betas: pairs.iter().map(|p| p.0).collect(),
            shifts: pairs.iter().map(|p| p.1).collect(),
            nl,
        })
    }

    pub fn len(&self) -> usize {
        self.betas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.betas.is_empty()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn shifts(&self) -> &[f64] {
        &self.shifts
    }

    pub fn nonlinearity(&self) -> &Nonlinearity {
        &self.nl
    }

    pub fn boost(&self, j: usize) -> Boost {
        Boost::new(self.betas[j]).expect("validated at construction")
    }

    /// Unperturbed center `beta_j t + x_j`.
    pub fn center(&self, j: usize, t: f64) -> f64 {
        self.betas[j] * t + self.shifts[j]
    }

    pub fn centers(&self, t: f64) -> Vec<f64> {
        (0..self.len()).map(|j| self.center(j, t)).collect()
    }

    /// Smallest gap between consecutive centers over `[t_lo, t_hi]`.
    pub fn min_separation(&self, t_lo: f64, t_hi: f64) -> f64 {
        (1..self.len())
            .flat_map(|j| {
                [t_lo, t_hi]
                    .into_iter()
                    .map(move |t| (j, t))
            })
            .map(|(j, t)| self.center(j, t) - self.center(j - 1, t))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Samples of `Q_beta` and its first two `x`-derivatives centered at `center`.
pub(crate) struct BoostedProfile {
    pub q: Vec<f64>,
    pub dq: Vec<f64>,
    pub d2q: Vec<f64>,
}

pub(crate) fn boosted_profile(gs: &GroundState, boost: Boost, center: f64, grid: &Grid) -> BoostedProfile {
    let g = boost.gamma();
    let n = grid.n();
    let mut out = BoostedProfile {
        q: Vec::with_capacity(n),
        dq: Vec::with_capacity(n),
        d2q: Vec::with_capacity(n),
    };
    for k in 0..n {
        let s = g * grid.wrap(grid.x(k) - center);
        let (q, dq, d2q) = gs.eval(s);
        out.q.push(q);
        out.dq.push(g * dq);
        out.d2q.push(g * g * d2q);
    }
    out
}

fn warn_seam(grid: &Grid, center: f64) {
    let d = grid.distance_to_seam(center);
    if d < 10.0 {
        log::warn!("soliton center {center:.3} is {d:.3} from the periodic seam; profile truncated");
    }
}

/// `(Q_beta, d_t Q_beta)` at time `t` with center `beta t + shift`.
pub fn boosted_soliton(gs: &GroundState, boost: Boost, shift: f64, t: f64, grid: &Grid) -> FieldPair {
    let center = boost.beta() * t + shift;
    warn_seam(grid, center);
    let p = boosted_profile(gs, boost, center, grid);
    let b = boost.beta();
    FieldPair {
        first: ScalarField::raw(grid, p.q),
        second: ScalarField::raw(grid, p.dq.iter().map(|d| -b * d).collect()),
    }
}

/// `R(t) = sum_j R_j(t)`.
pub fn soliton_sum(params: &SolitonParams, gs: &GroundState, t: f64, grid: &Grid) -> FieldPair {
    let mut sum = FieldPair::zeros(grid);
    for j in 0..params.len() {
        let r = boosted_soliton(gs, params.boost(j), params.shifts()[j], t, grid);
        sum = &sum + &r;
    }
    sum
}
