//! Lorentz boosts as `(d+1) x (d+1)` matrices and relativistic velocity addition.

use crate::dense::Matrix;
use crate::error::{Error, Result};

fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn check_velocity(v: &[f64]) -> Result<f64> {
    let s = norm_sq(v);
    if !s.is_finite() || s >= 1.0 {
        return Err(Error::Domain(format!(
            "velocity {v:?} is outside the unit ball"
        )));
    }
    Ok(s)
}

/// Boost matrix acting on `(t, x_1, .., x_d)`; the dimension is `beta.len()`.
pub fn lorentz_matrix(beta: &[f64]) -> Result<Matrix> {
    let b2 = check_velocity(beta)?;
    let d = beta.len();
    let gamma = 1.0 / (1.0 - b2).sqrt();
    let mut m = Matrix::identity(d + 1);
    m[(0, 0)] = gamma;
    for i in 0..d {
        m[(0, i + 1)] = -gamma * beta[i];
        m[(i + 1, 0)] = -gamma * beta[i];
        if b2 > 0.0 {
            for j in 0..d {
                m[(i + 1, j + 1)] += (gamma - 1.0) * beta[i] * beta[j] / b2;
            }
        }
    }
    Ok(m)
}

/// Einstein addition `x (+) y`.
pub fn velocity_add(x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    if x.len() != y.len() {
        return Err(Error::Usage("velocities of different dimension".into()));
    }
    check_velocity(x)?;
    let y2 = check_velocity(y)?;
    if y2 == 0.0 {
        return Ok(x.to_vec());
    }
    let xy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let root = (1.0 - y2).sqrt();
    let par = xy / y2;
    Ok(x
        .iter()
        .zip(y)
        .map(|(&xi, &yi)| (yi + par * yi + root * (xi - par * yi)) / (1.0 + xy))
        .collect())
}

/// Minkowski metric `diag(1, -1, .., -1)`.
pub fn minkowski(d: usize) -> Matrix {
    let mut m = Matrix::identity(d + 1);
    for i in 1..=d {
        m[(i, i)] = -1.0;
    }
    m
}
