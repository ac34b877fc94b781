//! Uniform periodic grid, sampled fields and spectral calculus.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Uniform periodic mesh on `[x0, x0 + length)` with cached FFT plans.
#[derive(Clone)]
pub struct Grid {
    inner: Arc<GridInner>,
}

struct GridInner {
    n: usize,
    length: f64,
    x0: f64,
    dx: f64,
    k: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Grid {
    /// Grid with `n` points (a power of two, at least 16) starting at `x0`.
    pub fn new(n: usize, length: f64, x0: f64) -> Result<Self> {
        if n < 16 || !n.is_power_of_two() {
            return Err(Error::Usage(format!(
                "grid size must be a power of two >= 16, got {n}"
            )));
        }
        if !(length.is_finite() && length > 0.0) || !x0.is_finite() {
            return Err(Error::Usage(format!(
                "invalid grid extent: length {length}, x0 {x0}"
            )));
        }
        let dx = length / n as f64;
        let base = 2.0 * std::f64::consts::PI / length;
        let k = (0..n)
            .map(|j| {
                if j < n / 2 {
                    base * j as f64
                } else {
                    base * (j as f64 - n as f64)
                }
            })
            .collect();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        Ok(Self {
            inner: Arc::new(GridInner {
                n,
                length,
                x0,
                dx,
                k,
                forward,
                inverse,
            }),
        })
    }

    /// Grid on `[-length/2, length/2)`.
    pub fn centered(n: usize, length: f64) -> Result<Self> {
        Self::new(n, length, -0.5 * length)
    }

    pub fn n(&self) -> usize {
        self.inner.n
    }

    pub fn length(&self) -> f64 {
        self.inner.length
    }

    pub fn x0(&self) -> f64 {
        self.inner.x0
    }

    pub fn dx(&self) -> f64 {
        self.inner.dx
    }

    /// Node `x_k = x0 + k dx`.
    pub fn x(&self, k: usize) -> f64 {
        self.inner.x0 + k as f64 * self.inner.dx
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n()).map(|k| self.x(k)).collect()
    }

    /// Angular wavenumbers in FFT order.
    pub fn wavenumbers(&self) -> &[f64] {
        &self.inner.k
    }

    /// Wavenumber used by odd-order derivatives (Nyquist mode zeroed).
    pub fn odd_wavenumber(&self, j: usize) -> f64 {
        if j == self.n() / 2 {
            0.0
        } else {
            self.inner.k[j]
        }
    }

    /// Same discretization (cheap pointer check first).
    pub fn same(&self, other: &Grid) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
            || (self.n() == other.n()
                && self.length() == other.length()
                && self.x0() == other.x0())
    }

    /// Nearest periodic image of a displacement, in `[-length/2, length/2)`.
    pub fn wrap(&self, r: f64) -> f64 {
        let l = self.length();
        r - l * ((r + 0.5 * l) / l).floor()
    }

    /// Distance from `x` (mapped into the domain) to the periodic seam.
    pub fn distance_to_seam(&self, x: f64) -> f64 {
        let l = self.length();
        let s = (x - self.x0()).rem_euclid(l);
        s.min(l - s)
    }

    /// In-place forward DFT (unnormalized).
    pub fn fft(&self, buf: &mut [Complex64]) {
        self.inner.forward.process(buf);
    }

    /// In-place inverse DFT, normalized so that `ifft(fft(z)) = z`.
    pub fn ifft(&self, buf: &mut [Complex64]) {
        self.inner.inverse.process(buf);
        let s = 1.0 / self.n() as f64;
        for z in buf.iter_mut() {
            *z *= s;
        }
    }

    /// Spectra of two real signals from one complex transform.
    pub fn spectra(&self, a: &[f64], b: &[f64]) -> (Vec<Complex64>, Vec<Complex64>) {
        let n = self.n();
        let mut z: Vec<Complex64> = a
            .iter()
            .zip(b)
            .map(|(&re, &im)| Complex64::new(re, im))
            .collect();
        self.fft(&mut z);
        let mut fa = vec![Complex64::default(); n];
        let mut fb = vec![Complex64::default(); n];
        for j in 0..n {
            let zj = z[j];
            let zm = z[(n - j) % n].conj();
            fa[j] = 0.5 * (zj + zm);
            fb[j] = Complex64::new(0.0, -0.5) * (zj - zm);
        }
        (fa, fb)
    }

    /// Apply a real-preserving Fourier multiplier to two real signals at once.
    ///
    /// `m(j)` must satisfy `m(n-j) = conj(m(j))`.
    pub fn filter2(
        &self,
        a: &[f64],
        b: &[f64],
        m: impl Fn(usize) -> Complex64,
    ) -> (Vec<f64>, Vec<f64>) {
        let mut z: Vec<Complex64> = a
            .iter()
            .zip(b)
            .map(|(&re, &im)| Complex64::new(re, im))
            .collect();
        self.fft(&mut z);
        for (j, zj) in z.iter_mut().enumerate() {
            *zj *= m(j);
        }
        self.ifft(&mut z);
        (z.iter().map(|c| c.re).collect(), z.iter().map(|c| c.im).collect())
    }

    /// Real-preserving multiplier applied to one signal.
    pub fn filter(&self, a: &[f64], m: impl Fn(usize) -> Complex64) -> Vec<f64> {
        let mut z: Vec<Complex64> = a.iter().map(|&re| Complex64::new(re, 0.0)).collect();
        self.fft(&mut z);
        for (j, zj) in z.iter_mut().enumerate() {
            *zj *= m(j);
        }
        self.ifft(&mut z);
        z.iter().map(|c| c.re).collect()
    }

    /// First derivative of two signals.
    pub fn deriv2x(&self, a: &[f64], b: &[f64]) -> (Vec<f64>, Vec<f64>) {
        self.filter2(a, b, |j| Complex64::new(0.0, self.odd_wavenumber(j)))
    }

    /// Multiplier for the translation `f(x) -> f(x - shift)`.
    pub fn shift_multiplier(&self, shift: f64) -> impl Fn(usize) -> Complex64 + '_ {
        move |j| {
            let k = self.inner.k[j];
            if j == self.n() / 2 {
                Complex64::new((k * shift).cos(), 0.0)
            } else {
                Complex64::from_polar(1.0, -k * shift)
            }
        }
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.same(other)
    }
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("n", &self.n())
            .field("length", &self.length())
            .field("x0", &self.x0())
            .finish()
    }
}

/// Real samples on a [`Grid`].
#[derive(Clone, Debug)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n() {
            return Err(Error::Usage(format!(
                "expected {} samples, got {}",
                grid.n(),
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Usage(format!("non-finite sample at node {k}")));
        }
        Ok(Self {
            grid: grid.clone(),
            values,
        })
    }

    /// Trusted constructor for values computed internally.
    pub(crate) fn raw(grid: &Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.n());
        Self {
            grid: grid.clone(),
            values,
        }
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self::raw(grid, vec![0.0; grid.n()])
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        Self::raw(grid, vec![c; grid.n()])
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(f64) -> f64) -> Self {
        Self::raw(grid, (0..grid.n()).map(|k| f(grid.x(k))).collect())
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    fn check(&self, other: &ScalarField) -> Result<()> {
        if self.grid.same(&other.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// `(f|g) = dx * sum f_k g_k`.
    pub fn inner(&self, other: &ScalarField) -> Result<f64> {
        self.check(other)?;
        Ok(self.grid.dx() * dot(&self.values, &other.values))
    }

    pub fn norm_l2(&self) -> f64 {
        (self.grid.dx() * dot(&self.values, &self.values)).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn deriv(&self) -> ScalarField {
        let g = &self.grid;
        let v = g.filter(&self.values, |j| Complex64::new(0.0, g.odd_wavenumber(j)));
        Self::raw(g, v)
    }

    pub fn deriv2(&self) -> ScalarField {
        let g = &self.grid;
        let k = g.wavenumbers();
        let v = g.filter(&self.values, |j| Complex64::new(-k[j] * k[j], 0.0));
        Self::raw(g, v)
    }

    /// Band-limited translate `f(x - shift)`.
    pub fn translated(&self, shift: f64) -> ScalarField {
        let g = &self.grid;
        Self::raw(g, g.filter(&self.values, g.shift_multiplier(shift)))
    }

    pub fn scaled(&self, c: f64) -> ScalarField {
        Self::raw(&self.grid, self.values.iter().map(|v| c * v).collect())
    }

    /// `self += a * x`.
    pub fn axpy(&mut self, a: f64, x: &ScalarField) -> Result<()> {
        self.check(x)?;
        for (s, v) in self.values.iter_mut().zip(&x.values) {
            *s += a * v;
        }
        Ok(())
    }

    /// Pointwise product.
    pub fn mul_pointwise(&self, other: &ScalarField) -> Result<ScalarField> {
        self.check(other)?;
        Ok(Self::raw(
            &self.grid,
            self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect(),
        ))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        Self::raw(&self.grid, self.values.iter().map(|&v| f(v)).collect())
    }
}

fn zip_with(a: &ScalarField, b: &ScalarField, f: impl Fn(f64, f64) -> f64) -> ScalarField {
    assert!(a.grid.same(&b.grid), "fields live on different grids");
    ScalarField::raw(
        &a.grid,
        a.values.iter().zip(&b.values).map(|(&x, &y)| f(x, y)).collect(),
    )
}

/// Panics if the grids differ; use [`ScalarField::axpy`] for a checked form.
impl Add for &ScalarField {
    type Output = ScalarField;
    fn add(self, rhs: &ScalarField) -> ScalarField {
        zip_with(self, rhs, |a, b| a + b)
    }
}

/// Panics if the grids differ.
impl Sub for &ScalarField {
    type Output = ScalarField;
    fn sub(self, rhs: &ScalarField) -> ScalarField {
        zip_with(self, rhs, |a, b| a - b)
    }
}

impl Mul<&ScalarField> for f64 {
    type Output = ScalarField;
    fn mul(self, rhs: &ScalarField) -> ScalarField {
        rhs.scaled(self)
    }
}

impl Neg for &ScalarField {
    type Output = ScalarField;
    fn neg(self) -> ScalarField {
        self.scaled(-1.0)
    }
}

/// State `(u, u_t)` or perturbation `(v1, v2)`.
#[derive(Clone, Debug)]
pub struct FieldPair {
    pub first: ScalarField,
    pub second: ScalarField,
}

impl FieldPair {
    pub fn new(first: ScalarField, second: ScalarField) -> Result<Self> {
        first.check(&second)?;
        Ok(Self { first, second })
    }

    pub(crate) fn raw(grid: &Grid, first: Vec<f64>, second: Vec<f64>) -> Self {
        Self {
            first: ScalarField::raw(grid, first),
            second: ScalarField::raw(grid, second),
        }
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self {
            first: ScalarField::zeros(grid),
            second: ScalarField::zeros(grid),
        }
    }

    pub fn grid(&self) -> &Grid {
        self.first.grid()
    }

    pub fn is_finite(&self) -> bool {
        self.first.is_finite() && self.second.is_finite()
    }

    pub fn inner(&self, other: &FieldPair) -> Result<f64> {
        Ok(self.first.inner(&other.first)? + self.second.inner(&other.second)?)
    }

    /// Squared energy norm `|u1|^2 + |u1'|^2 + |u2|^2`, derivative via Parseval.
    pub fn norm_energy_sq(&self) -> f64 {
        let g = self.grid();
        let (f1, _) = g.spectra(self.first.values(), &vec![0.0; g.n()]);
        let dx = g.dx();
        let n = g.n() as f64;
        let grad: f64 = f1
            .iter()
            .enumerate()
            .map(|(j, c)| {
                let k = g.odd_wavenumber(j);
                k * k * c.norm_sqr()
            })
            .sum::<f64>()
            * dx
            / n;
        let a = self.first.norm_l2();
        let b = self.second.norm_l2();
        a * a + grad + b * b
    }

    pub fn norm_energy(&self) -> f64 {
        self.norm_energy_sq().sqrt()
    }

    /// Energy inner product `(u1|v1) + (u1'|v1') + (u2|v2)`.
    pub fn inner_energy(&self, other: &FieldPair) -> Result<f64> {
        self.first.check(&other.first)?;
        let g = self.grid();
        let (da, db) = g.deriv2x(self.first.values(), other.first.values());
        Ok(self.inner(other)? + g.dx() * dot(&da, &db))
    }

    pub fn scaled(&self, c: f64) -> FieldPair {
        FieldPair {
            first: self.first.scaled(c),
            second: self.second.scaled(c),
        }
    }

    pub fn axpy(&mut self, a: f64, x: &FieldPair) -> Result<()> {
        self.first.axpy(a, &x.first)?;
        self.second.axpy(a, &x.second)
    }

    pub fn translated(&self, shift: f64) -> FieldPair {
        let g = self.grid();
        let (a, b) = g.filter2(
            self.first.values(),
            self.second.values(),
            g.shift_multiplier(shift),
        );
        FieldPair::raw(g, a, b)
    }

    /// Componentwise first derivative.
    pub fn deriv(&self) -> FieldPair {
        let g = self.grid();
        let (a, b) = g.deriv2x(self.first.values(), self.second.values());
        FieldPair::raw(g, a, b)
    }

    /// `J U = (u2, -u1)`.
    pub fn apply_j(&self) -> FieldPair {
        FieldPair {
            first: self.second.clone(),
            second: -&self.first,
        }
    }
}

/// Panics if the grids differ.
impl Add for &FieldPair {
    type Output = FieldPair;
    fn add(self, rhs: &FieldPair) -> FieldPair {
        FieldPair {
            first: &self.first + &rhs.first,
            second: &self.second + &rhs.second,
        }
    }
}

/// Panics if the grids differ.
impl Sub for &FieldPair {
    type Output = FieldPair;
    fn sub(self, rhs: &FieldPair) -> FieldPair {
        FieldPair {
            first: &self.first - &rhs.first,
            second: &self.second - &rhs.second,
        }
    }
}

impl Mul<&FieldPair> for f64 {
    type Output = FieldPair;
    fn mul(self, rhs: &FieldPair) -> FieldPair {
        rhs.scaled(self)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `(f|g)` on a shared grid.
pub fn inner_l2(f: &ScalarField, g: &ScalarField) -> Result<f64> {
    f.inner(g)
}

/// `(u1|v1) + (u2|v2)`.
pub fn inner_pair(u: &FieldPair, v: &FieldPair) -> Result<f64> {
    u.inner(v)
}

/// `sqrt(|u1|^2_{H1} + |u2|^2_{L2})`.
pub fn norm_energy(u: &FieldPair) -> f64 {
    u.norm_energy()
}

/// Spectral derivative.
pub fn deriv(f: &ScalarField) -> ScalarField {
    f.deriv()
}
