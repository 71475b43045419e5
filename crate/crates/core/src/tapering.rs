//! Tapers on sparse subarrays, the normalization constant `ν`, the
//! weighting function `w_c[k]` and beampattern metrics.

use std::str::FromStr;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::geometry::SubarraySpec;
use crate::spectral::{LagSequence, Spectrum, UGrid};
use crate::{PpoError, Real, Result};

/// Depth below the main-lobe peak at which a local minimum counts as a true
/// null rather than a fallback minimum.
pub const NULL_DEPTH_DB: f64 = 40.0;

/// Window family evaluated over a subarray's full aperture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaperFamily<T> {
    Uniform,
    /// `0.5 (1 − cos(2πm/(E−1)))`, zero at both aperture ends.
    Hann,
    /// `0.54 − 0.46 cos(2πm/(E−1))`.
    Hamming,
    /// Explicit complex samples, one per grid cell of the subarray.
    Custom(Vec<Complex<T>>),
}

impl<T> FromStr for TaperFamily<T> {
    type Err = PpoError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" | "rect" | "rectangular" => Ok(Self::Uniform),
            "hann" | "hanning" => Ok(Self::Hann),
            "hamming" => Ok(Self::Hamming),
            other => Err(PpoError::Taper(format!("unknown taper family '{other}'"))),
        }
    }
}

impl<T: Real> TaperFamily<T> {
    /// Window value at grid index `m` of a subarray with `extent` cells.
    fn sample(&self, m: usize, extent: usize) -> Complex<T> {
        let real = |x: T| Complex::new(x, T::zero());
        if extent == 1 {
            return match self {
                Self::Custom(v) => v[0],
                _ => real(T::one()),
            };
        }
        let phase = T::TAU() * T::from_index(m as i128) / T::from_index((extent - 1) as i128);
        match self {
            Self::Uniform => real(T::one()),
            Self::Hann => real(T::lit(0.5) * (T::one() - phase.cos())),
            Self::Hamming => real(T::lit(0.54) - T::lit(0.46) * phase.cos()),
            Self::Custom(v) => v[m],
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Uniform => "uniform",
            Self::Hann => "hann",
            Self::Hamming => "hamming",
            Self::Custom(_) => "custom",
        }
    }
}

/// Complex taper aligned to a subarray grid; zero wherever no sensor sits.
#[derive(Clone, Debug, PartialEq)]
pub struct TaperedWeights<T> {
    values: Vec<Complex<T>>,
    subarray: SubarraySpec,
}

impl<T: Real> TaperedWeights<T> {
    /// Masks `values` by the subarray occupancy.
    pub fn new(subarray: &SubarraySpec, values: Vec<Complex<T>>) -> Result<Self> {
        if values.len() != subarray.extent() {
            return Err(PpoError::ExtentMismatch {
                expected: subarray.extent(),
                got: values.len(),
            });
        }
        let zero = Complex::new(T::zero(), T::zero());
        let values: Vec<_> = values
            .into_iter()
            .enumerate()
            .map(|(m, v)| if subarray.is_occupied(m) { v } else { zero })
            .collect();
        if values.iter().all(|v| *v == zero) {
            return Err(PpoError::Taper(
                "taper vanishes at every sensor of the subarray".into(),
            ));
        }
        if values
            .iter()
            .any(|v| !v.re.is_finite() || !v.im.is_finite())
        {
            return Err(PpoError::Taper("taper values must be finite".into()));
        }
        Ok(Self {
            values,
            subarray: subarray.clone(),
        })
    }

    pub fn values(&self) -> &[Complex<T>] {
        &self.values
    }

    pub fn subarray(&self) -> &SubarraySpec {
        &self.subarray
    }

    pub fn extent(&self) -> usize {
        self.values.len()
    }

    /// Indices carrying a nonzero weight.
    pub fn support(&self) -> Vec<usize> {
        let zero = Complex::new(T::zero(), T::zero());
        self.values
            .iter()
            .enumerate()
            .filter_map(|(m, v)| (*v != zero).then_some(m))
            .collect()
    }

    /// `Σ |w[m]|²`.
    pub fn energy(&self) -> T {
        self.values
            .iter()
            .fold(T::zero(), |acc, v| acc + v.norm_sqr())
    }

    /// The taper as a sequence starting at index 0, so that its DTFT is
    /// `W(u) = Σ_m w[m] e^{-jπum}`.
    pub fn as_sequence(&self) -> LagSequence<T> {
        LagSequence::new(0, self.values.clone())
    }
}

/// Evaluates `family` over the full aperture and zeroes missing sensors.
pub fn make_taper<T: Real>(
    sub: &SubarraySpec,
    family: &TaperFamily<T>,
) -> Result<TaperedWeights<T>> {
    let extent = sub.extent();
    if let TaperFamily::Custom(v) = family {
        if v.len() != extent {
            return Err(PpoError::ExtentMismatch {
                expected: extent,
                got: v.len(),
            });
        }
    }
    let values = (0..extent).map(|m| family.sample(m, extent)).collect();
    TaperedWeights::new(sub, values)
}

/// `ν = Σ_k w₁[k] w₂*[k]` over the shorter extent.
pub fn normalization_nu<T: Real>(
    w1: &TaperedWeights<T>,
    w2: &TaperedWeights<T>,
) -> Result<Complex<T>> {
    let upper = w1.extent().min(w2.extent());
    let nu = nu_with_upper(w1, w2, upper);
    let scale = w1.energy().sqrt() * w2.energy().sqrt();
    if nu.norm() <= T::epsilon() * T::lit(16.0) * scale {
        return Err(PpoError::ZeroNormalization);
    }
    Ok(nu)
}

/// `Σ_{k<upper} w₁[k] w₂*[k]` with both tapers zero-padded past their
/// extents.
pub fn nu_with_upper<T: Real>(
    w1: &TaperedWeights<T>,
    w2: &TaperedWeights<T>,
    upper: usize,
) -> Complex<T> {
    let zero = Complex::new(T::zero(), T::zero());
    (0..upper).fold(zero, |acc, k| {
        let a = w1.values.get(k).copied().unwrap_or(zero);
        let b = w2.values.get(k).copied().unwrap_or(zero);
        acc + a * b.conj()
    })
}

/// `c[k] = Σ_l a[l] b*[l−k]` for `k ∈ [-(len_b−1), len_a−1]`.
pub fn cross_correlation<T: Real>(a: &[Complex<T>], b: &[Complex<T>]) -> LagSequence<T> {
    let first = -(b.len() as isize - 1);
    let mut out = LagSequence::zeros(first, a.len() as isize - 1);
    let zero = Complex::new(T::zero(), T::zero());
    let values = out.values_mut();
    for (n, bn) in b.iter().enumerate() {
        if *bn == zero {
            continue;
        }
        let bc = bn.conj();
        for (m, am) in a.iter().enumerate() {
            if *am == zero {
                continue;
            }
            let idx = (m as isize - n as isize - first) as usize;
            values[idx] = values[idx] + *am * bc;
        }
    }
    out
}

/// Normalized taper cross-correlation `w_c[k] = (w₁ ⋆ w₂*[−·])[k] / ν`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightingFunction<T> {
    lags: LagSequence<T>,
    nu: Complex<T>,
}

impl<T: Real> WeightingFunction<T> {
    pub fn lags(&self) -> &LagSequence<T> {
        &self.lags
    }

    pub fn nu(&self) -> Complex<T> {
        self.nu
    }

    pub fn get(&self, k: isize) -> Complex<T> {
        self.lags.get(k)
    }

    /// `W_c(u)` on `grid`.
    pub fn spectrum(&self, grid: &UGrid<T>) -> Spectrum<T> {
        spectrum_of(&self.lags, grid)
    }
}

pub fn weighting_function<T: Real>(
    w1: &TaperedWeights<T>,
    w2: &TaperedWeights<T>,
) -> Result<WeightingFunction<T>> {
    let nu = normalization_nu(w1, w2)?;
    let mut lags = cross_correlation(w1.values(), w2.values());
    let inv = Complex::new(T::one(), T::zero()) / nu;
    for v in lags.values_mut() {
        *v = *v * inv;
    }
    // Multiplying by 1/ν can round; lag 0 is ν/ν by construction.
    let zero_idx = (-lags.first_lag()) as usize;
    lags.values_mut()[zero_idx] = Complex::new(T::one(), T::zero());
    Ok(WeightingFunction { lags, nu })
}

/// `X(u) = Σ_k x[k] e^{-jπuk}` of any lag or index sequence.
pub fn spectrum_of<T: Real>(seq: &LagSequence<T>, grid: &UGrid<T>) -> Spectrum<T> {
    seq.dtft(grid)
}

/// Main-lobe width and peak sidelobe level of a sampled pattern.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BeamMetrics<T> {
    /// Null-to-null main-lobe width in `u`.
    pub mlw_null_to_null: T,
    /// `10·log10(max sidelobe / peak)` of the pattern magnitude.
    pub psl_db: T,
    pub peak_u: T,
    pub null_left_u: T,
    pub null_right_u: T,
    /// Whether both bracketing minima are at least [`NULL_DEPTH_DB`] down.
    pub deep_nulls: bool,
}

/// Finds the first minima on either side of the global peak.
///
/// A local minimum at least [`NULL_DEPTH_DB`] below the peak is a null; when
/// sampling misses the exact zero the adjacent local minimum is used instead
/// and `deep_nulls` is cleared.
pub fn beam_metrics<T: Real>(spec: &Spectrum<T>) -> Result<BeamMetrics<T>> {
    let power = spec.power();
    let n = power.len();
    if n < 3 {
        return Err(PpoError::Grid(
            "pattern needs at least three samples".into(),
        ));
    }
    let periodic = spec.grid().is_periodic();
    let u = spec.u();
    let peak = (0..n)
        .max_by(|&a, &b| power[a].partial_cmp(&power[b]).expect("finite pattern"))
        .expect("non-empty");
    let peak_power = power[peak];
    let floor = peak_power * T::lit(10f64.powf(-NULL_DEPTH_DB / 10.0));

    // Returns (index, steps walked) of the first local minimum.
    let walk = |dir: isize, side: &'static str| -> Result<(usize, usize)> {
        let mut idx = peak;
        for steps in 1..n {
            let next = idx as isize + dir;
            let next = if periodic {
                next.rem_euclid(n as isize) as usize
            } else if next < 0 || next >= n as isize {
                break;
            } else {
                next as usize
            };
            if steps > 1 && power[next] >= power[idx] && power[idx] < peak_power {
                return Ok((idx, steps - 1));
            }
            idx = next;
        }
        Err(PpoError::NoNullFound { side })
    };
    let (left, left_steps) = walk(-1, "left")?;
    let (right, right_steps) = walk(1, "right")?;

    let (null_left_u, null_right_u) = if periodic {
        let du = T::lit(2.0) / T::from_index(n as i128);
        (
            u[peak] - du * T::from_index(left_steps as i128),
            u[peak] + du * T::from_index(right_steps as i128),
        )
    } else {
        (u[left], u[right])
    };

    let in_main_lobe = |i: usize| -> bool {
        let offset = (i as isize - peak as isize).rem_euclid(n as isize) as usize;
        if periodic {
            offset <= right_steps || n - offset <= left_steps || offset == 0
        } else {
            i >= left && i <= right
        }
    };
    let sidelobe = (0..n)
        .filter(|&i| !in_main_lobe(i))
        .map(|i| power[i])
        .fold(T::zero(), T::max);

    Ok(BeamMetrics {
        mlw_null_to_null: null_right_u - null_left_u,
        psl_db: T::lit(10.0) * (sidelobe / peak_power).log10(),
        peak_u: u[peak],
        null_left_u,
        null_right_u,
        deep_nulls: power[left] <= floor && power[right] <= floor,
    })
}
