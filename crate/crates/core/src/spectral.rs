//! Direction-cosine grids, lag-indexed sequences and their transforms.
//!
//! Every transform in the crate uses the half-wavelength convention
//! `X(u) = Σ_k x[k] e^{-jπuk}`, which is 2-periodic in `u`.

use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::{PpoError, Real, Result};

/// Number of points in the default periodic grid.
pub const DEFAULT_GRID_POINTS: usize = 4096;

/// Ascending samples of the direction cosine within `[-1, 1]`.
///
/// A *periodic* grid holds `n` uniform points on `[-1, 1)`, i.e. one full
/// period of the transform; those grids are evaluated with an FFT when `n` is
/// a power of two.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UGrid<T> {
    points: Vec<T>,
    periodic: bool,
}

impl<T: Real> UGrid<T> {
    /// `n` uniform points `u_q = -1 + 2q/n`, `q = 0..n`.
    pub fn periodic(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(PpoError::Grid(
                "periodic grid needs at least one point".into(),
            ));
        }
        let step = T::lit(2.0) / T::from_index(n as i128);
        let points = (0..n)
            .map(|q| -T::one() + step * T::from_index(q as i128))
            .collect();
        Ok(Self {
            points,
            periodic: true,
        })
    }

    pub fn default_periodic() -> Self {
        Self::periodic(DEFAULT_GRID_POINTS).expect("non-empty")
    }

    /// `n` uniform points on the closed interval `[start, end]`.
    pub fn linspace(start: T, end: T, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(PpoError::Grid("linspace needs at least two points".into()));
        }
        let step = (end - start) / T::from_index((n - 1) as i128);
        let mut points: Vec<T> = (0..n)
            .map(|i| start + step * T::from_index(i as i128))
            .collect();
        points[n - 1] = end;
        Self::from_points(points)
    }

    pub fn from_points(points: Vec<T>) -> Result<Self> {
        if points.is_empty() {
            return Err(PpoError::Grid("empty grid".into()));
        }
        if points.iter().any(|u| !u.is_finite() || u.abs() > T::one()) {
            return Err(PpoError::Grid("grid points must lie in [-1, 1]".into()));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(PpoError::Grid("grid must be strictly ascending".into()));
        }
        Ok(Self {
            points,
            periodic: false,
        })
    }

    pub fn points(&self) -> &[T] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    /// Quadrature weights `Δu_q` for integrals over `u`.
    ///
    /// Periodic grids use the rectangle rule over one period (`2/n` each);
    /// other grids use the trapezoidal rule over their own span.
    pub fn quadrature_weights(&self) -> Vec<T> {
        let n = self.points.len();
        if self.periodic {
            return vec![T::lit(2.0) / T::from_index(n as i128); n];
        }
        if n == 1 {
            return vec![T::zero()];
        }
        let half = T::lit(0.5);
        (0..n)
            .map(|i| {
                let left = if i > 0 {
                    self.points[i] - self.points[i - 1]
                } else {
                    T::zero()
                };
                let right = if i + 1 < n {
                    self.points[i + 1] - self.points[i]
                } else {
                    T::zero()
                };
                half * (left + right)
            })
            .collect()
    }
}

/// A complex sequence indexed by integer lag `first_lag..=last_lag`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LagSequence<T> {
    first_lag: isize,
    values: Vec<Complex<T>>,
}

impl<T: Real> LagSequence<T> {
    pub fn new(first_lag: isize, values: Vec<Complex<T>>) -> Self {
        Self { first_lag, values }
    }

    /// All-zero sequence over `first..=last`.
    pub fn zeros(first: isize, last: isize) -> Self {
        let len = (last - first + 1).max(0) as usize;
        Self {
            first_lag: first,
            values: vec![Complex::new(T::zero(), T::zero()); len],
        }
    }

    /// Unit impulse at lag 0.
    pub fn delta() -> Self {
        Self::new(0, vec![Complex::new(T::one(), T::zero())])
    }

    pub fn first_lag(&self) -> isize {
        self.first_lag
    }

    pub fn last_lag(&self) -> isize {
        self.first_lag + self.values.len() as isize - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[Complex<T>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex<T>] {
        &mut self.values
    }

    pub fn contains_lag(&self, k: isize) -> bool {
        k >= self.first_lag && k <= self.last_lag()
    }

    /// Value at lag `k`; zero outside the stored support.
    pub fn get(&self, k: isize) -> Complex<T> {
        if self.contains_lag(k) {
            self.values[(k - self.first_lag) as usize]
        } else {
            Complex::new(T::zero(), T::zero())
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (isize, Complex<T>)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(move |(i, v)| (self.first_lag + i as isize, *v))
    }

    /// Elementwise product with another sequence, over this sequence's
    /// support.
    pub fn pointwise(&self, other: &Self) -> Self {
        Self::new(
            self.first_lag,
            self.iter().map(|(k, v)| v * other.get(k)).collect(),
        )
    }

    pub fn scale(&mut self, factor: Complex<T>) {
        for v in &mut self.values {
            *v = *v * factor;
        }
    }

    /// `X(u) = Σ_k x[k] e^{-jπuk}` at a single point.
    pub fn dtft_at(&self, u: T) -> Complex<T> {
        let pi_u = T::PI() * u;
        self.iter()
            .fold(Complex::new(T::zero(), T::zero()), |acc, (k, v)| {
                acc + v * Complex::cis(-pi_u * T::from_index(k as i128))
            })
    }

    pub fn dtft(&self, grid: &UGrid<T>) -> Spectrum<T> {
        DtftPlan::new(grid.clone()).spectrum(self)
    }
}

/// A grid prepared for repeated DTFT evaluation.
///
/// Power-of-two periodic grids are evaluated with an FFT after folding the
/// lags modulo the grid size, which samples the DTFT exactly; all other grids
/// use direct summation.
#[derive(Clone)]
pub struct DtftPlan<T: Real> {
    grid: UGrid<T>,
    fft: Option<Arc<dyn Fft<T>>>,
}

impl<T: Real> std::fmt::Debug for DtftPlan<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DtftPlan")
            .field("points", &self.grid.len())
            .field("fft", &self.fft.is_some())
            .finish()
    }
}

impl<T: Real> DtftPlan<T> {
    pub fn new(grid: UGrid<T>) -> Self {
        let fft = (grid.is_periodic() && grid.len().is_power_of_two())
            .then(|| FftPlanner::new().plan_fft_forward(grid.len()));
        Self { grid, fft }
    }

    pub fn grid(&self) -> &UGrid<T> {
        &self.grid
    }

    pub fn uses_fft(&self) -> bool {
        self.fft.is_some()
    }

    pub fn eval(&self, seq: &LagSequence<T>) -> Vec<Complex<T>> {
        match &self.fft {
            Some(fft) => {
                let n = self.grid.len() as isize;
                let mut buf = vec![Complex::new(T::zero(), T::zero()); n as usize];
                // u_q = -1 + 2q/n, so e^{-jπ u_q k} = (-1)^k e^{-j2π qk/n}.
                for (k, v) in seq.iter() {
                    let slot = &mut buf[k.rem_euclid(n) as usize];
                    if k.rem_euclid(2) == 0 {
                        *slot = *slot + v;
                    } else {
                        *slot = *slot - v;
                    }
                }
                fft.process(&mut buf);
                buf
            }
            None => self.eval_direct(seq),
        }
    }

    /// Direct summation at every grid point.
    pub fn eval_direct(&self, seq: &LagSequence<T>) -> Vec<Complex<T>> {
        self.grid.points().iter().map(|&u| seq.dtft_at(u)).collect()
    }

    pub fn spectrum(&self, seq: &LagSequence<T>) -> Spectrum<T> {
        Spectrum::new(self.grid.clone(), self.eval(seq)).expect("grid and values agree")
    }
}

/// A complex function of the direction cosine sampled on a [`UGrid`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum<T> {
    grid: UGrid<T>,
    values: Vec<Complex<T>>,
}

impl<T: Real> Spectrum<T> {
    pub fn new(grid: UGrid<T>, values: Vec<Complex<T>>) -> Result<Self> {
        if grid.len() != values.len() {
            return Err(PpoError::ExtentMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        Ok(Self { grid, values })
    }

    /// Samples a real function of `u` on `grid`.
    pub fn from_fn(grid: UGrid<T>, f: impl Fn(T) -> T) -> Self {
        let values = grid
            .points()
            .iter()
            .map(|&u| Complex::new(f(u), T::zero()))
            .collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &UGrid<T> {
        &self.grid
    }

    pub fn u(&self) -> &[T] {
        self.grid.points()
    }

    pub fn values(&self) -> &[Complex<T>] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Magnitudes `|X(u)|`. These functions are power densities, so the
    /// magnitude is the power.
    pub fn power(&self) -> Vec<T> {
        self.values.iter().map(|v| v.norm()).collect()
    }

    /// `10·log10|X(u)|` per sample.
    pub fn power_db(&self) -> Vec<T> {
        self.values
            .iter()
            .map(|v| T::lit(10.0) * v.norm().log10())
            .collect()
    }

    /// `(1/2) ∫ X(u) du` over the grid's quadrature rule.
    pub fn half_integral(&self) -> Complex<T> {
        let half = T::lit(0.5);
        self.grid
            .quadrature_weights()
            .iter()
            .zip(&self.values)
            .fold(Complex::new(T::zero(), T::zero()), |acc, (&w, &v)| {
                acc + v * w
            })
            * half
    }

    /// Direction cosines of the local maxima of `power_db` inside `[lo, hi]`
    /// whose topographic prominence within that window is at least
    /// `min_prominence_db`.
    pub fn peaks(&self, lo: T, hi: T, min_prominence_db: T) -> Vec<T> {
        let db = self.power_db();
        let idx: Vec<usize> = (0..db.len())
            .filter(|&i| self.grid.points[i] >= lo && self.grid.points[i] <= hi)
            .collect();
        let p: Vec<T> = idx.iter().map(|&i| db[i]).collect();
        let mut out = Vec::new();
        for i in 1..p.len().saturating_sub(1) {
            if !(p[i] > p[i - 1] && p[i] >= p[i + 1]) {
                continue;
            }
            let mut left = p[i];
            for &v in p[..i].iter().rev() {
                if v > p[i] {
                    break;
                }
                left = left.min(v);
            }
            let mut right = p[i];
            for &v in &p[i + 1..] {
                if v > p[i] {
                    break;
                }
                right = right.min(v);
            }
            if p[i] - left.max(right) >= min_prominence_db {
                out.push(self.grid.points[idx[i]]);
            }
        }
        out
    }
}
