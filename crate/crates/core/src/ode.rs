//! Adaptive Dormand-Prince 5(4) integrator for small autonomous systems.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-13,
            atol: 1e-15,
            h_init: 1e-3,
            h_max: 0.01,
            max_steps: 2_000_000,
        }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn lin<const D: usize>(y: &[f64; D], h: f64, terms: &[(f64, &[f64; D])]) -> [f64; D] {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..D {
            out[i] += h * c * k[i];
        }
    }
    out
}

/// Integrate `y' = rhs(x, y)` from `x0` towards `x_end`.
///
/// `on_step(x, y)` sees every accepted step (including the start) and may
/// return `false` to stop early. Returns the final `(x, y)`.
pub fn integrate<const D: usize>(
    rhs: impl Fn(f64, &[f64; D]) -> [f64; D],
    x0: f64,
    y0: [f64; D],
    x_end: f64,
    opts: OdeOptions,
    mut on_step: impl FnMut(f64, &[f64; D]) -> bool,
) -> Result<(f64, [f64; D])> {
    let dir = (x_end - x0).signum();
    let mut x = x0;
    let mut y = y0;
    let mut h = opts.h_init.min(opts.h_max).min((x_end - x0).abs());
    if !on_step(x, &y) || h == 0.0 {
        return Ok((x, y));
    }
    let mut k1 = rhs(x, &y);
    for _ in 0..opts.max_steps {
        let remaining = (x_end - x).abs();
        if remaining <= 1e-15 * x_end.abs().max(1.0) {
            return Ok((x, y));
        }
        h = h.min(remaining);
        let hs = dir * h;
        let k2 = rhs(x + C2 * hs, &lin(&y, hs, &[(A21, &k1)]));
        let k3 = rhs(x + C3 * hs, &lin(&y, hs, &[(A31, &k1), (A32, &k2)]));
        let k4 = rhs(
            x + C4 * hs,
            &lin(&y, hs, &[(A41, &k1), (A42, &k2), (A43, &k3)]),
        );
        let k5 = rhs(
            x + C5 * hs,
            &lin(&y, hs, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
        );
        let k6 = rhs(
            x + hs,
            &lin(
                &y,
                hs,
                &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
            ),
        );
        let y_new = lin(
            &y,
            hs,
            &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)],
        );
        let k7 = rhs(x + hs, &y_new);
        let mut err = 0.0f64;
        for i in 0..D {
            let e = hs
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
            err = err.max((e / sc).abs());
        }
        if !err.is_finite() {
            return Err(Error::Solver("non-finite ODE state".into()));
        }
        if err <= 1.0 {
            x += hs;
            y = y_new;
            k1 = k7;
            if !on_step(x, &y) {
                return Ok((x, y));
            }
        }
        let fac = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        h = (h * fac).min(opts.h_max);
        if h < 1e-14 {
            return Err(Error::Solver("ODE step size underflow".into()));
        }
    }
    Err(Error::Solver("ODE step budget exhausted".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator() {
        let (x, y) = integrate(
            |_, y: &[f64; 2]| [y[1], -y[0]],
            0.0,
            [1.0, 0.0],
            10.0,
            OdeOptions::default(),
            |_, _| true,
        )
        .unwrap();
        assert!((x - 10.0).abs() < 1e-12);
        assert!((y[0] - 10f64.cos()).abs() < 1e-11);
        assert!((y[1] + 10f64.sin()).abs() < 1e-11);
    }

    #[test]
    fn early_stop() {
        let (x, y) = integrate(
            |_, y: &[f64; 1]| [-y[0]],
            0.0,
            [1.0],
            10.0,
            OdeOptions::default(),
            |_, y| y[0] > 0.5,
        )
        .unwrap();
        assert!(y[0] <= 0.5 && x < 1.0);
    }
}
