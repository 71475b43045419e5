//! Seeded snapshot synthesis for product arrays.
//!
//! Each trial draws one physical field over `max(M_e, N_e)` grid cells
//! (plane-wave sources plus noise) and masks it by both occupancy vectors, so
//! shared sensors see identical samples in the two subarrays. Every trial has
//! its own ChaCha stream selected by `(seed, trial index)`, which makes a
//! batch independent of thread scheduling and of how trials are chunked.

use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::geometry::ProductArray;
use crate::spectral::Spectrum;
use crate::{PpoError, Real, Result};

/// Complex amplitude law of a plane-wave source.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AmplitudeModel {
    /// Circularly-symmetric complex Gaussian with variance `power`.
    #[default]
    Gaussian,
    /// Fixed real amplitude `sqrt(power)` in every trial.
    Deterministic,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SourceSpec<T> {
    pub u: T,
    pub power: T,
    pub amplitude: AmplitudeModel,
}

impl<T: Real> SourceSpec<T> {
    pub fn new(u: T, power: T, amplitude: AmplitudeModel) -> Result<Self> {
        if !(u.abs() <= T::one()) {
            return Err(PpoError::Signal(format!(
                "direction cosine {u} outside [-1, 1]"
            )));
        }
        if !(power >= T::zero()) || !power.is_finite() {
            return Err(PpoError::Signal(format!(
                "source power {power} must be >= 0"
            )));
        }
        Ok(Self {
            u,
            power,
            amplitude,
        })
    }

    pub fn gaussian(u: T, power: T) -> Result<Self> {
        Self::new(u, power, AmplitudeModel::Gaussian)
    }

    pub fn deterministic(u: T, power: T) -> Result<Self> {
        Self::new(u, power, AmplitudeModel::Deterministic)
    }
}

/// Spatial noise model.
#[derive(Clone, Debug, PartialEq)]
pub enum NoiseSpec<T> {
    /// Spatially white circular Gaussian noise; a zero variance gives a
    /// noiseless scenario.
    White { variance: T },
    /// Gaussian field with the given non-negative spatial PSD.
    Colored { psd: Spectrum<T> },
}

impl<T: Real> NoiseSpec<T> {
    pub fn white(variance: T) -> Result<Self> {
        if !(variance >= T::zero()) || !variance.is_finite() {
            return Err(PpoError::Signal(format!(
                "noise variance {variance} must be >= 0"
            )));
        }
        Ok(Self::White { variance })
    }

    pub fn colored(psd: Spectrum<T>) -> Result<Self> {
        validate_psd(&psd)?;
        Ok(Self::Colored { psd })
    }

    pub fn noiseless() -> Self {
        Self::White {
            variance: T::zero(),
        }
    }
}

fn validate_psd<T: Real>(psd: &Spectrum<T>) -> Result<()> {
    let tol = T::epsilon() * T::lit(64.0);
    for v in psd.values() {
        if !v.re.is_finite() || v.re < T::zero() || v.im.abs() > tol * v.re.abs().max(T::one()) {
            return Err(PpoError::Signal(
                "PSD must be real and non-negative on its grid".into(),
            ));
        }
    }
    if psd.values().iter().all(|v| v.re == T::zero()) {
        return Err(PpoError::Signal("PSD is identically zero".into()));
    }
    Ok(())
}

/// Complex sensor data for both subarrays, one row per trial.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotBatch<T> {
    pub x1: Array2<Complex<T>>,
    pub x2: Array2<Complex<T>>,
    pub seed: u64,
    /// Global index of the first row, for batches generated in chunks.
    pub first_trial: usize,
}

impl<T: Real> SnapshotBatch<T> {
    pub fn trials(&self) -> usize {
        self.x1.nrows()
    }

    /// Wraps externally produced data; the rows must match the array extents.
    pub fn from_data(
        arr: &ProductArray,
        x1: Array2<Complex<T>>,
        x2: Array2<Complex<T>>,
    ) -> Result<Self> {
        if x1.nrows() != x2.nrows() {
            return Err(PpoError::ExtentMismatch {
                expected: x1.nrows(),
                got: x2.nrows(),
            });
        }
        for (x, sub) in [(&x1, arr.subarray_a()), (&x2, arr.subarray_b())] {
            if x.ncols() != sub.extent() {
                return Err(PpoError::ExtentMismatch {
                    expected: sub.extent(),
                    got: x.ncols(),
                });
            }
        }
        Ok(Self {
            x1,
            x2,
            seed: 0,
            first_trial: 0,
        })
    }
}

/// `v[m] = e^{jπum}`, `m = 0..extent`.
pub fn array_manifold<T: Real>(extent: usize, u: T) -> Vec<Complex<T>> {
    (0..extent)
        .map(|m| Complex::cis(T::PI() * u * T::from_index(m as i128)))
        .collect()
}

/// RNG stream dedicated to one trial.
pub fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

/// Circular complex Gaussian with `E|z|² = variance`.
pub fn complex_normal<T: Real, R: Rng + ?Sized>(rng: &mut R, variance: T) -> Complex<T> {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    let scale = (variance * T::lit(0.5)).sqrt();
    Complex::new(T::lit(re) * scale, T::lit(im) * scale)
}

/// Spectral-sampling synthesizer for a colored field of fixed length.
struct ColoredSynth<T: Real> {
    psd: Spectrum<T>,
    /// Per-bin amplitude variances `P(u_q)·Δu_q/2`.
    variances: Vec<T>,
    ifft: Option<Arc<dyn Fft<T>>>,
    extent: usize,
}

impl<T: Real> ColoredSynth<T> {
    fn new(psd: &Spectrum<T>, extent: usize) -> Result<Self> {
        validate_psd(psd)?;
        let q = psd.len();
        if q < 4 * extent {
            return Err(PpoError::GridTooCoarse {
                points: q,
                required: 4 * extent,
            });
        }
        let half = T::lit(0.5);
        let variances = psd
            .grid()
            .quadrature_weights()
            .iter()
            .zip(psd.values())
            .map(|(&w, p)| p.re * w * half)
            .collect();
        let ifft = psd
            .grid()
            .is_periodic()
            .then(|| FftPlanner::new().plan_fft_inverse(q));
        Ok(Self {
            psd: psd.clone(),
            variances,
            ifft,
            extent,
        })
    }

    /// `n[m] = Σ_q a_q e^{jπ u_q m}` with independent `a_q`.
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Complex<T>> {
        let amps: Vec<Complex<T>> = self
            .variances
            .iter()
            .map(|&v| complex_normal(rng, v))
            .collect();
        match &self.ifft {
            Some(ifft) => {
                // u_q = -1 + 2q/Q: e^{jπ u_q m} = (-1)^m e^{j2π qm/Q}.
                let mut buf = amps;
                ifft.process(&mut buf);
                buf.truncate(self.extent);
                for (m, v) in buf.iter_mut().enumerate() {
                    if m % 2 == 1 {
                        *v = -*v;
                    }
                }
                buf
            }
            None => (0..self.extent)
                .map(|m| {
                    let mf = T::from_index(m as i128);
                    self.psd
                        .u()
                        .iter()
                        .zip(&amps)
                        .fold(Complex::new(T::zero(), T::zero()), |acc, (&u, &a)| {
                            acc + a * Complex::cis(T::PI() * u * mf)
                        })
                })
                .collect(),
        }
    }
}

/// Realizations of a colored Gaussian field, `trials × extent`.
pub fn colored_field<T: Real>(
    psd: &Spectrum<T>,
    extent: usize,
    trials: usize,
    seed: u64,
) -> Result<Array2<Complex<T>>> {
    let synth = ColoredSynth::new(psd, extent)?;
    let rows: Vec<Vec<Complex<T>>> = (0..trials)
        .into_par_iter()
        .map(|t| synth.draw(&mut trial_rng(seed, t)))
        .collect();
    Ok(stack_rows(rows, extent))
}

fn stack_rows<T: Real>(rows: Vec<Vec<Complex<T>>>, cols: usize) -> Array2<Complex<T>> {
    let n = rows.len();
    Array2::from_shape_vec((n, cols), rows.into_iter().flatten().collect())
        .expect("rows share one length")
}

/// Prepared generator for one product array and signal model.
pub struct SnapshotGenerator<T: Real> {
    arr: ProductArray,
    sources: Vec<(SourceSpec<T>, Vec<Complex<T>>)>,
    noise: NoiseKernel<T>,
    seed: u64,
}

enum NoiseKernel<T: Real> {
    White(T),
    Colored(ColoredSynth<T>),
}

impl<T: Real> SnapshotGenerator<T> {
    pub fn new(
        arr: &ProductArray,
        sources: &[SourceSpec<T>],
        noise: &NoiseSpec<T>,
        seed: u64,
    ) -> Result<Self> {
        let span = arr.span();
        let noise = match noise {
            NoiseSpec::White { variance } => {
                if !(*variance >= T::zero()) {
                    return Err(PpoError::Signal("noise variance must be >= 0".into()));
                }
                NoiseKernel::White(*variance)
            }
            NoiseSpec::Colored { psd } => NoiseKernel::Colored(ColoredSynth::new(psd, span)?),
        };
        Ok(Self {
            arr: arr.clone(),
            sources: sources
                .iter()
                .map(|s| (*s, array_manifold(span, s.u)))
                .collect(),
            noise,
            seed,
        })
    }

    /// The unmasked field of one trial over `max(M_e, N_e)` cells.
    pub fn field(&self, trial: usize) -> Vec<Complex<T>> {
        let span = self.arr.span();
        let mut rng = trial_rng(self.seed, trial);
        let mut field = vec![Complex::new(T::zero(), T::zero()); span];
        for (src, manifold) in &self.sources {
            let s = match src.amplitude {
                AmplitudeModel::Gaussian => complex_normal(&mut rng, src.power),
                AmplitudeModel::Deterministic => Complex::new(src.power.sqrt(), T::zero()),
            };
            for (f, v) in field.iter_mut().zip(manifold) {
                *f = *f + s * v;
            }
        }
        match &self.noise {
            NoiseKernel::White(var) if *var > T::zero() => {
                for f in field.iter_mut() {
                    *f = *f + complex_normal(&mut rng, *var);
                }
            }
            NoiseKernel::White(_) => {}
            NoiseKernel::Colored(synth) => {
                for (f, n) in field.iter_mut().zip(synth.draw(&mut rng)) {
                    *f = *f + n;
                }
            }
        }
        field
    }

    /// Masked subarray data `(x1, x2)` of one trial.
    pub fn trial(&self, trial: usize) -> (Vec<Complex<T>>, Vec<Complex<T>>) {
        let field = self.field(trial);
        let zero = Complex::new(T::zero(), T::zero());
        let mask = |sub: &crate::geometry::SubarraySpec| -> Vec<Complex<T>> {
            (0..sub.extent())
                .map(|m| if sub.is_occupied(m) { field[m] } else { zero })
                .collect()
        };
        (mask(self.arr.subarray_a()), mask(self.arr.subarray_b()))
    }

    /// Trials `first..first + count` as a batch.
    pub fn batch(&self, first: usize, count: usize) -> SnapshotBatch<T> {
        let rows: Vec<_> = (first..first + count)
            .into_par_iter()
            .map(|t| self.trial(t))
            .collect();
        let (r1, r2): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
        SnapshotBatch {
            x1: stack_rows(r1, self.arr.subarray_a().extent()),
            x2: stack_rows(r2, self.arr.subarray_b().extent()),
            seed: self.seed,
            first_trial: first,
        }
    }
}

/// Per trial, `x = (Σ_s s·v(u_s) + n) ⊙ κ` for each subarray.
pub fn generate_snapshots<T: Real>(
    arr: &ProductArray,
    sources: &[SourceSpec<T>],
    noise: &NoiseSpec<T>,
    trials: usize,
    seed: u64,
) -> Result<SnapshotBatch<T>> {
    if trials == 0 {
        return Err(PpoError::Signal("at least one trial is required".into()));
    }
    Ok(SnapshotGenerator::new(arr, sources, noise, seed)?.batch(0, trials))
}
