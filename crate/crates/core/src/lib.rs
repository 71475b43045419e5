//! Tapered product processing for sparse product arrays.
//!
//! A product array splits a uniform half-wavelength grid between two
//! subarrays (coprime, nested, ULA, or an arbitrary non-uniform line array).
//! Each subarray is tapered and beamformed; the product of the two outputs,
//! normalized by the taper inner product `ν`, is a spatial periodogram whose
//! inverse transform is an implicit autocorrelation estimate.
//!
//! The crate provides:
//!
//! * [`geometry`]: product-array construction and difference coarrays.
//! * [`tapering`]: taper generation, `ν`, the weighting function `w_c[k]`,
//!   its transform `W_c(u)` and main-lobe / sidelobe metrics.
//! * [`signal`]: seeded snapshot synthesis (plane waves, white and colored
//!   Gaussian fields).
//! * [`estimator`]: the product processor output and its ACF estimate.
//! * [`theory`]: closed-form mean and covariance plus a brute-force
//!   fourth-moment oracle.
//! * [`multidim`]: the three-dimensional extension.
//! * [`montecarlo`]: ensemble checks of the estimator against the theory.
//! * [`scenario`] and [`export`]: configuration files, presets and CSV/JSON
//!   output used by the `ppo` command-line tool.
//!
//! All numerical code is generic over the scalar type through [`Real`]
//! (implemented for `f32` and `f64`). The `*64` aliases below fix the scalar
//! to `f64`, which is what the command-line tool and the Monte-Carlo checks
//! use.

// Validation uses `!(x >= 0)` style tests so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt;

use num_traits::{Float, FloatConst, FromPrimitive};
use rustfft::FftNum;

pub mod error;
pub mod estimator;
pub mod export;
pub mod geometry;
pub mod montecarlo;
pub mod multidim;
pub mod scenario;
pub mod signal;
pub mod spectral;
pub mod tapering;
pub mod theory;

pub use error::{PpoError, Result};
pub use geometry::{Coarray, IndicatorVector, ProductArray, SubarraySpec};
pub use num_complex::Complex;
pub use spectral::{DtftPlan, LagSequence, Spectrum, UGrid};
pub use tapering::{TaperFamily, TaperedWeights, WeightingFunction};

/// Floating-point scalar usable by every kernel in the crate.
pub trait Real:
    Float + FloatConst + FromPrimitive + FftNum + Default + Send + Sync + fmt::Debug + fmt::Display
{
    /// Converts an `f64` literal into `Self`.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    /// Converts an integer (lag, index or count) into `Self`.
    fn from_index<I: Into<i128>>(i: I) -> Self {
        Self::from_i128(i.into()).expect("index representable in scalar type")
    }
}

impl Real for f32 {}
impl Real for f64 {}

pub type Complex64 = Complex<f64>;
pub type Complex32 = Complex<f32>;

pub type UGrid64 = UGrid<f64>;
pub type Spectrum64 = Spectrum<f64>;
pub type LagSequence64 = LagSequence<f64>;
pub type TaperedWeights64 = TaperedWeights<f64>;
pub type WeightingFunction64 = WeightingFunction<f64>;
pub type SnapshotBatch64 = signal::SnapshotBatch<f64>;
pub type PpoEstimate64 = estimator::PpoEstimate<f64>;
pub type AcfEstimate64 = estimator::AcfEstimate<f64>;
pub type CovarianceCurve64 = theory::CovarianceCurve<f64>;
pub type GridArray3_64 = multidim::GridArray3<f64>;

pub type Spectrum32 = Spectrum<f32>;
pub type TaperedWeights32 = TaperedWeights<f32>;
pub type WeightingFunction32 = WeightingFunction<f32>;
