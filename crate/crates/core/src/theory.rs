//! Closed-form moments of the PPO.
//!
//! The mean holds for any spatial process: `E{P̂(u)} = Σ_k w_c[k] r_xx[k]
//! e^{-jπuk}`, the periodic convolution of the true PSD with `W_c`. The
//! covariance is for white circular Gaussian noise:
//! `C(Δu) = σ⁴/|ν|² · F{|w₁|²}(Δu) · F{|w₂|²}(Δu)*`.

use num_complex::Complex;
use serde::Serialize;

use crate::signal::{NoiseSpec, SourceSpec};
use crate::spectral::{LagSequence, Spectrum, UGrid};
use crate::tapering::{normalization_nu, TaperedWeights, WeightingFunction};
use crate::{PpoError, Real, Result};

/// Largest `M_e·N_e` accepted by [`second_moment_oracle`].
pub const ORACLE_PAIR_LIMIT: usize = 10_000;

/// The true second-order description of the spatial process.
#[derive(Clone, Debug, PartialEq)]
pub enum TrueCorrelation<T> {
    /// `r_xx[k]` on a symmetric lag range; zero beyond it.
    Acf(LagSequence<T>),
    /// `P_xx(u)` sampled on a grid.
    Psd(Spectrum<T>),
}

/// `r_xx[k] = Σ_s p_s e^{jπu_s k} + σ²δ[k]` over `-reach..=reach`.
pub fn plane_wave_acf<T: Real>(
    sources: &[SourceSpec<T>],
    white_variance: T,
    reach: usize,
) -> LagSequence<T> {
    let reach = reach as isize;
    let values = (-reach..=reach)
        .map(|k| {
            let kf = T::from_index(k as i128);
            let mut r = sources
                .iter()
                .fold(Complex::new(T::zero(), T::zero()), |acc, s| {
                    acc + Complex::cis(T::PI() * s.u * kf) * s.power
                });
            if k == 0 {
                r.re = r.re + white_variance;
            }
            r
        })
        .collect();
    LagSequence::new(-reach, values)
}

/// `r_xx[k] = (1/2) ∫ P_xx(u) e^{jπuk} du` by the grid's quadrature rule.
pub fn acf_from_psd<T: Real>(psd: &Spectrum<T>, reach: usize) -> LagSequence<T> {
    let weights = psd.grid().quadrature_weights();
    let half = T::lit(0.5);
    let reach = reach as isize;
    let values = (-reach..=reach)
        .map(|k| {
            let kf = T::from_index(k as i128);
            psd.u()
                .iter()
                .zip(&weights)
                .zip(psd.values())
                .fold(Complex::new(T::zero(), T::zero()), |acc, ((&u, &w), p)| {
                    acc + *p * Complex::cis(T::PI() * u * kf) * w
                })
                * half
        })
        .collect();
    LagSequence::new(-reach, values)
}

/// True ACF of plane-wave sources in a white or colored background.
pub fn scenario_acf<T: Real>(
    sources: &[SourceSpec<T>],
    noise: &NoiseSpec<T>,
    reach: usize,
) -> LagSequence<T> {
    match noise {
        NoiseSpec::White { variance } => plane_wave_acf(sources, *variance, reach),
        NoiseSpec::Colored { psd } => {
            let waves = plane_wave_acf(sources, T::zero(), reach);
            let field = acf_from_psd(psd, reach);
            LagSequence::new(
                waves.first_lag(),
                waves
                    .values()
                    .iter()
                    .zip(field.values())
                    .map(|(a, b)| a + b)
                    .collect(),
            )
        }
    }
}

fn wc_reach<T: Real>(wc: &WeightingFunction<T>) -> usize {
    wc.lags()
        .first_lag()
        .unsigned_abs()
        .max(wc.lags().last_lag().unsigned_abs())
}

/// `E{P̂(u)} = Σ_k w_c[k] r_xx[k] e^{-jπuk}` on `grid`.
pub fn expected_ppo<T: Real>(
    truth: &TrueCorrelation<T>,
    wc: &WeightingFunction<T>,
    grid: &UGrid<T>,
) -> Result<Spectrum<T>> {
    let reach = wc_reach(wc);
    let acf = match truth {
        TrueCorrelation::Acf(r) => {
            if !r.contains_lag(0) || r.first_lag() != -r.last_lag() {
                return Err(PpoError::LagSupport(format!(
                    "ACF must be given on a symmetric lag range around 0, got {}..={}",
                    r.first_lag(),
                    r.last_lag()
                )));
            }
            r.clone()
        }
        TrueCorrelation::Psd(p) => {
            let span = wc.lags().len();
            if p.len() < 4 * span {
                return Err(PpoError::GridTooCoarse {
                    points: p.len(),
                    required: 4 * span,
                });
            }
            acf_from_psd(p, reach)
        }
    };
    Ok(wc.lags().pointwise(&acf).dtft(grid))
}

/// `(P_xx ⊛ W_c)(u) = (1/2) ∫ P_xx(v) W_c(u − v) dv` on a periodic grid.
///
/// Direct `O(Q²)` circular convolution with period 2 in `u`; the grid-domain
/// counterpart of [`expected_ppo`].
pub fn periodic_convolution<T: Real>(
    psd: &Spectrum<T>,
    wc: &WeightingFunction<T>,
) -> Result<Spectrum<T>> {
    let grid = psd.grid();
    if !grid.is_periodic() {
        return Err(PpoError::Grid(
            "periodic convolution needs a periodic grid".into(),
        ));
    }
    let q = grid.len();
    if q < 4 * wc.lags().len() {
        return Err(PpoError::GridTooCoarse {
            points: q,
            required: 4 * wc.lags().len(),
        });
    }
    // u_i − u_j = 2(i − j)/Q and W_c has period 2.
    let offsets: Vec<T> = (0..q)
        .map(|d| T::lit(2.0) * T::from_index(d as i128) / T::from_index(q as i128))
        .collect();
    let kernel: Vec<Complex<T>> = offsets.iter().map(|&du| wc.lags().dtft_at(du)).collect();
    let scale = T::one() / T::from_index(q as i128);
    let values = (0..q)
        .map(|i| {
            (0..q).fold(Complex::new(T::zero(), T::zero()), |acc, j| {
                acc + psd.values()[j] * kernel[(i + q - j) % q]
            }) * scale
        })
        .collect();
    Spectrum::new(grid.clone(), values)
}

/// Covariance `C(Δu)` of the PPO under white Gaussian noise.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CovarianceCurve<T> {
    pub delta_u: Vec<T>,
    pub values: Vec<Complex<T>>,
    pub variance_at_zero: T,
}

fn check_sigma2<T: Real>(sigma2: T) -> Result<()> {
    if !(sigma2 >= T::zero()) || !sigma2.is_finite() {
        return Err(PpoError::Signal(format!(
            "noise variance {sigma2} must be >= 0"
        )));
    }
    Ok(())
}

/// `|w|²` as an index sequence.
fn energy_sequence<T: Real>(w: &TaperedWeights<T>) -> LagSequence<T> {
    LagSequence::new(
        0,
        w.values()
            .iter()
            .map(|v| Complex::new(v.norm_sqr(), T::zero()))
            .collect(),
    )
}

/// `C(Δu)` at one offset.
pub fn ppo_covariance_at<T: Real>(
    w1: &TaperedWeights<T>,
    w2: &TaperedWeights<T>,
    sigma2: T,
    delta_u: T,
) -> Result<Complex<T>> {
    check_sigma2(sigma2)?;
    let nu = normalization_nu(w1, w2)?;
    let scale = sigma2 * sigma2 / nu.norm_sqr();
    let f1 = energy_sequence(w1).dtft_at(delta_u);
    let f2 = energy_sequence(w2).dtft_at(delta_u);
    Ok(f1 * f2.conj() * scale)
}

/// `C(Δu) = σ⁴/|ν|² · F{|w₁|²}(Δu) · F{|w₂|²}(Δu)*` at each offset.
pub fn ppo_covariance<T: Real>(
    w1: &TaperedWeights<T>,
    w2: &TaperedWeights<T>,
    sigma2: T,
    delta_u: &[T],
) -> Result<CovarianceCurve<T>> {
    let values = delta_u
        .iter()
        .map(|&du| ppo_covariance_at(w1, w2, sigma2, du))
        .collect::<Result<Vec<_>>>()?;
    Ok(CovarianceCurve {
        delta_u: delta_u.to_vec(),
        values,
        variance_at_zero: ppo_variance(w1, w2, sigma2)?,
    })
}

/// `C(0) = σ⁴/|ν|² · Σ|w₁|² · Σ|w₂|²`.
pub fn ppo_variance<T: Real>(
    w1: &TaperedWeights<T>,
    w2: &TaperedWeights<T>,
    sigma2: T,
) -> Result<T> {
    check_sigma2(sigma2)?;
    let nu = normalization_nu(w1, w2)?;
    Ok(sigma2 * sigma2 / nu.norm_sqr() * w1.energy() * w2.energy())
}

/// `E{P̂(u₁) P̂*(u₂)}` for white circular Gaussian noise by explicit
/// quadruple summation over `(k, l, m, n)`.
///
/// Uses `E{x[k]x*[l]x*[m]x[n]} = σ⁴(δ[k−l]δ[n−m] + δ[k−m]δ[n−l])`, where all
/// four samples come from the one physical field. The result is `σ⁴ + C(u₁−u₂)`.
pub fn second_moment_oracle<T: Real>(
    w1: &TaperedWeights<T>,
    w2: &TaperedWeights<T>,
    sigma2: T,
    u1: T,
    u2: T,
) -> Result<Complex<T>> {
    check_sigma2(sigma2)?;
    let (me, ne) = (w1.extent(), w2.extent());
    if me * ne > ORACLE_PAIR_LIMIT {
        return Err(PpoError::OracleTooLarge {
            pairs: me * ne,
            limit: ORACLE_PAIR_LIMIT,
        });
    }
    let nu = normalization_nu(w1, w2)?;
    let (a, b) = (w1.values(), w2.values());
    let zero = Complex::new(T::zero(), T::zero());
    let mut total = zero;
    for k in 0..me {
        for l in 0..ne {
            for m in 0..me {
                for n in 0..ne {
                    let fourth = (k == l && n == m) as u8 + (k == m && n == l) as u8;
                    if fourth == 0 {
                        continue;
                    }
                    let phase = T::PI()
                        * (u1 * T::from_index(l as i128 - k as i128)
                            + u2 * T::from_index(m as i128 - n as i128));
                    let term = a[k] * b[l].conj() * a[m].conj() * b[n] * Complex::cis(phase);
                    total = total + term * T::from_index(fourth as i128);
                }
            }
        }
    }
    Ok(total * (sigma2 * sigma2 / nu.norm_sqr()))
}
