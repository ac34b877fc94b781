//! Ground states `Q'' - Q + f(Q) = 0`, `Q > 0` even and decaying.

use std::sync::Arc;

use super::Nonlinearity;
use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField};
use crate::ode::{integrate, OdeOptions};

#[derive(Debug)]
enum Shape {
    /// `amp * sech^m(a s)`.
    Closed { amp: f64, m: f64, a: f64 },
    Table(Table),
}

/// Samples of `Q, Q'` on `s >= 0` from the shooting solution.
#[derive(Debug)]
struct Table {
    s: Vec<f64>,
    q: Vec<f64>,
    dq: Vec<f64>,
    tail_rate: f64,
}

/// Positive even solution of `Q'' = Q - f(Q)` sampled on a grid, with a
/// grid-independent evaluator for resampling at boosted arguments.
#[derive(Clone, Debug)]
pub struct GroundState {
    nl: Nonlinearity,
    shape: Arc<Shape>,
    profile: ScalarField,
    derivative: ScalarField,
    decay_rate: f64,
    residual: f64,
}

fn sech_pow(a_s: f64, m: f64) -> (f64, f64) {
    let e = (-a_s.abs()).exp();
    let e2 = e * e;
    let sech = 2.0 * e / (1.0 + e2);
    let tanh = a_s.signum() * (1.0 - e2) / (1.0 + e2);
    (sech.powf(m), tanh)
}

impl Table {
    fn eval(&self, nl: &Nonlinearity, s: f64) -> (f64, f64) {
        let a = s.abs();
        let sign = if s < 0.0 { -1.0 } else { 1.0 };
        let last = self.s.len() - 1;
        if a >= self.s[last] {
            let q = self.q[last] * (-self.tail_rate * (a - self.s[last])).exp();
            return (q, -sign * self.tail_rate * q);
        }
        let i = match self.s.binary_search_by(|v| v.total_cmp(&a)) {
            Ok(i) => i.min(last - 1),
            Err(i) => i - 1,
        };
        let h = self.s[i + 1] - self.s[i];
        let t = (a - self.s[i]) / h;
        let (y0, y1) = (self.q[i], self.q[i + 1]);
        let (d0, d1) = (self.dq[i], self.dq[i + 1]);
        let (c0, c1) = (y0 - nl.f(y0), y1 - nl.f(y1));
        let t2 = t * t;
        let t3 = t2 * t;
        let t4 = t3 * t;
        let t5 = t4 * t;
        let h0 = 1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5;
        let h1 = t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5;
        let h2 = 0.5 * t2 - 1.5 * t3 + 1.5 * t4 - 0.5 * t5;
        let h3 = 0.5 * t3 - t4 + 0.5 * t5;
        let h4 = -4.0 * t3 + 7.0 * t4 - 3.0 * t5;
        let h5 = 10.0 * t3 - 15.0 * t4 + 6.0 * t5;
        let q = h0 * y0 + h * h1 * d0 + h * h * (h2 * c0 + h3 * c1) + h * h4 * d1 + h5 * y1;
        let g0 = -30.0 * t2 + 60.0 * t3 - 30.0 * t4;
        let g1 = 1.0 - 18.0 * t2 + 32.0 * t3 - 15.0 * t4;
        let g2 = t - 4.5 * t2 + 6.0 * t3 - 2.5 * t4;
        let g3 = 1.5 * t2 - 4.0 * t3 + 2.5 * t4;
        let g4 = -12.0 * t2 + 28.0 * t3 - 15.0 * t4;
        let g5 = 30.0 * t2 - 60.0 * t3 + 30.0 * t4;
        let dq = (g0 * y0 + h * g1 * d0 + h * h * (g2 * c0 + g3 * c1) + h * g4 * d1 + g5 * y1) / h;
        (q, sign * dq)
    }
}

impl GroundState {
    fn assemble(nl: Nonlinearity, shape: Shape, grid: &Grid) -> Result<Self> {
        let mut gs = GroundState {
            nl,
            shape: Arc::new(shape),
            profile: ScalarField::zeros(grid),
            derivative: ScalarField::zeros(grid),
            decay_rate: 0.0,
            residual: 0.0,
        };
        let mut q = Vec::with_capacity(grid.n());
        let mut dq = Vec::with_capacity(grid.n());
        for k in 0..grid.n() {
            let (a, b, _) = gs.eval(grid.wrap(grid.x(k)));
            q.push(a);
            dq.push(b);
        }
        gs.profile = ScalarField::raw(grid, q);
        gs.derivative = ScalarField::raw(grid, dq);
        let d2 = gs.profile.deriv2();
        gs.residual = d2
            .values()
            .iter()
            .zip(gs.profile.values())
            .map(|(d, &q)| (d - q + gs.nl.f(q)).abs())
            .fold(0.0, f64::max);
        gs.decay_rate = gs.fit_decay_rate();
        Ok(gs)
    }

    /// Least-squares slope of `-log Q` over the range where `Q` is tiny but
    /// far above round-off.
    fn fit_decay_rate(&self) -> f64 {
        let amp = self.amplitude();
        let mut pts = Vec::new();
        let mut s = 0.0;
        while s < 200.0 {
            let q = self.eval(s).0;
            if q < 1e-4 * amp && q > 1e-12 * amp {
                pts.push((s, q.ln()));
            }
            if q <= 1e-12 * amp {
                break;
            }
            s += 0.05;
        }
        if pts.len() < 2 {
            return f64::NAN;
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        -sxy / sxx
    }

    /// `(Q(s), Q'(s), Q''(s))` at any real `s`.
    pub fn eval(&self, s: f64) -> (f64, f64, f64) {
        match &*self.shape {
            Shape::Closed { amp, m, a } => {
                let (sm, th) = sech_pow(a * s, *m);
                let q = amp * sm;
                let dq = -amp * m * a * sm * th;
                let sech2 = 1.0 - th * th;
                let d2q = amp * m * a * a * sm * (m * th * th - sech2);
                (q, dq, d2q)
            }
            Shape::Table(t) => {
                let (q, dq) = t.eval(&self.nl, s);
                (q, dq, q - self.nl.f(q))
            }
        }
    }

    pub fn nonlinearity(&self) -> &Nonlinearity {
        &self.nl
    }

    pub fn grid(&self) -> &Grid {
        self.profile.grid()
    }

    pub fn profile(&self) -> &ScalarField {
        &self.profile
    }

    pub fn derivative(&self) -> &ScalarField {
        &self.derivative
    }

    /// `Q(0)`.
    pub fn amplitude(&self) -> f64 {
        self.eval(0.0).0
    }

    /// Fitted exponential decay rate of the tail.
    pub fn decay_rate(&self) -> f64 {
        self.decay_rate
    }

    /// `max |Q'' - Q + f(Q)|` on the grid with spectral derivatives.
    pub fn residual(&self) -> f64 {
        self.residual
    }
}

/// Closed-form ground state of `f(u) = lambda |u|^{p-1} u`.
pub fn groundstate_power(p: f64, lambda: f64, grid: &Grid) -> Result<GroundState> {
    let nl = Nonlinearity::power(p, lambda)?;
    let amp = ((p + 1.0) / (2.0 * lambda)).powf(1.0 / (p - 1.0));
    let shape = Shape::Closed {
        amp,
        m: 2.0 / (p - 1.0),
        a: 0.5 * (p - 1.0),
    };
    GroundState::assemble(nl, shape, grid)
}

/// Controls for [`groundstate_shoot`].
#[derive(Clone, Copy, Debug)]
pub struct ShootOptions {
    /// Upper end of the bracket for `Q(0)`.
    pub s_max: f64,
    pub max_bisections: usize,
    /// Length of the tabulated half-line.
    pub s_end: f64,
}

impl Default for ShootOptions {
    fn default() -> Self {
        Self {
            s_max: 10.0,
            max_bisections: 200,
            s_end: 80.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Fate {
    Crosses,
    TurnsBack,
}

fn classify(nl: &Nonlinearity, a: f64) -> Result<Fate> {
    let mut fate = Fate::TurnsBack;
    let opts = OdeOptions {
        h_max: 0.05,
        ..OdeOptions::default()
    };
    integrate(
        |_, y: &[f64; 2]| [y[1], y[0] - nl.f(y[0])],
        0.0,
        [a, 0.0],
        60.0,
        opts,
        |s, y| {
            if y[0] < 0.0 {
                fate = Fate::Crosses;
                false
            } else {
                !(s > 0.0 && y[1] > 0.0)
            }
        },
    )?;
    Ok(fate)
}

/// Ground state for a general nonlinearity by shooting on `Q(0)`.
pub fn groundstate_shoot(nl: &Nonlinearity, grid: &Grid, opts: ShootOptions) -> Result<GroundState> {
    let mut hi = opts.s_max;
    if classify(nl, hi)? != Fate::Crosses {
        return Err(Error::NoBracket { s_max: opts.s_max });
    }
    let mut lo = None;
    let mut a = hi;
    for _ in 0..60 {
        a *= 0.5;
        if classify(nl, a)? == Fate::TurnsBack {
            lo = Some(a);
            break;
        }
        hi = a;
    }
    let mut lo = lo.ok_or(Error::NoBracket { s_max: opts.s_max })?;
    let mut iterations = 0;
    while hi - lo > 4.0 * f64::EPSILON * hi {
        iterations += 1;
        if iterations > opts.max_bisections {
            return Err(Error::Solver("ground-state bisection did not converge".into()));
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match classify(nl, mid)? {
            Fate::Crosses => hi = mid,
            Fate::TurnsBack => lo = mid,
        }
    }
    let a = 0.5 * (lo + hi);

    let mut s = Vec::new();
    let mut q = Vec::new();
    let mut dq = Vec::new();
    let ode = OdeOptions::default();
    let (s_mid, y_mid) = integrate(
        |_, y: &[f64; 2]| [y[1], y[0] - nl.f(y[0])],
        0.0,
        [a, 0.0],
        opts.s_end,
        ode,
        |x, y| {
            s.push(x);
            q.push(y[0]);
            dq.push(y[1]);
            y[0] > 0.5 * a
        },
    )?;
    // Energy-reduced first-order flow along the homoclinic orbit.
    let slope = |u: f64| -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        let w = 1.0 - 2.0 * nl.primitive(u) / (u * u);
        -u * w.max(0.0).sqrt()
    };
    integrate(
        |_, y: &[f64; 1]| [slope(y[0])],
        s_mid,
        [y_mid[0]],
        opts.s_end,
        ode,
        |x, y| {
            if x > s_mid {
                s.push(x);
                q.push(y[0]);
                dq.push(slope(y[0]));
            }
            true
        },
    )?;
    if q.iter().any(|&v| !(v > 0.0)) || dq.iter().skip(1).any(|&d| !(d < 0.0)) {
        return Err(Error::Solver(
            "shooting solution is not positive and decreasing".into(),
        ));
    }
    let last = q.len() - 1;
    let tail_rate = -dq[last] / q[last];
    let table = Table { s, q, dq, tail_rate };
    GroundState::assemble(nl.clone(), Shape::Table(table), grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid {
        Grid::centered(4096, 60.0).unwrap()
    }

    #[test]
    fn cubic_closed_form() {
        let gs = groundstate_power(3.0, 1.0, &grid()).unwrap();
        assert!((gs.amplitude() - 2f64.sqrt()).abs() < 1e-15);
        assert!(gs.residual() < 1e-9, "residual {}", gs.residual());
        assert!((gs.decay_rate() - 1.0).abs() < 1e-3);
        for s in [0.3, 1.7, 5.0] {
            let (q, dq, d2q) = gs.eval(s);
            let sech = 1.0 / s.cosh();
            assert!((q - 2f64.sqrt() * sech).abs() < 1e-15);
            assert!((dq + 2f64.sqrt() * sech * s.tanh()).abs() < 1e-15);
            assert!((d2q - q + q * q * q).abs() < 1e-14);
        }
    }

    #[test]
    fn quadratic_closed_form() {
        let gs = groundstate_power(2.0, 1.0, &grid()).unwrap();
        assert!((gs.amplitude() - 1.5).abs() < 1e-15);
        assert!(gs.residual() < 1e-9);
        assert!(groundstate_power(1.0, 1.0, &grid()).is_err());
    }

    #[test]
    fn profile_is_even() {
        let g = grid();
        let gs = groundstate_power(5.0, 1.0, &g).unwrap();
        let v = gs.profile().values();
        for k in 1..g.n() / 2 {
            assert_eq!(v[g.n() / 2 + k], v[g.n() / 2 - k]);
        }
    }

    #[test]
    fn shooting_matches_closed_forms() {
        let g = grid();
        let cubic = groundstate_shoot(&Nonlinearity::cubic(), &g, ShootOptions::default()).unwrap();
        assert!((cubic.amplitude() - 2f64.sqrt()).abs() < 1e-10);
        assert!(cubic.residual() < 1e-9, "residual {}", cubic.residual());
        let exact = groundstate_power(3.0, 1.0, &g).unwrap();
        let diff = (cubic.profile() - exact.profile()).max_abs();
        assert!(diff < 1e-10, "profile diff {diff}");

        let quintic = Nonlinearity::custom(|u| u.powi(5), |u| 5.0 * u.powi(4), |u| u.powi(6) / 6.0, 10.0)
            .unwrap();
        let q5 = groundstate_shoot(&quintic, &g, ShootOptions::default()).unwrap();
        assert!((q5.amplitude() - 3f64.powf(0.25)).abs() < 1e-10);
        assert!(q5.residual() < 1e-9);
    }

    #[test]
    fn no_bracket_when_smax_too_small() {
        let err = groundstate_shoot(
            &Nonlinearity::cubic(),
            &grid(),
            ShootOptions {
                s_max: 1.2,
                ..ShootOptions::default()
            },
        );
        assert!(matches!(err, Err(Error::NoBracket { .. })));
    }
}
