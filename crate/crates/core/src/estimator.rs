//! The product processor output (PPO) and its implicit ACF estimate.
//!
//! For tapered data `a = w₁⊙x₁`, `b = w₂⊙x₂` the PPO is
//! `P̂(u) = y₁ y₂* / ν` with `y = Σ w[m] e^{-jπum} x[m]`. Expanding the
//! product gives `P̂(u) = Σ_k r̂[k] e^{-jπuk}` with
//! `r̂[k] = Σ_l a[l] b*[l−k] / ν`. The fast path evaluates the second form;
//! [`ppo_direct`] keeps the double sum as a reference.

use ndarray::{Array2, ArrayView1};
use num_complex::Complex;
use rayon::prelude::*;

use crate::signal::SnapshotBatch;
use crate::spectral::{DtftPlan, LagSequence, Spectrum, UGrid};
use crate::tapering::{normalization_nu, TaperedWeights};
use crate::{PpoError, Real, Result};

/// Trial-averaged ACF estimate over `k ∈ [-(N_e−1), M_e−1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AcfEstimate<T> {
    pub lags: LagSequence<T>,
    pub trials: usize,
}

/// Trial-averaged PPO on a direction-cosine grid.
#[derive(Clone, Debug, PartialEq)]
pub struct PpoEstimate<T> {
    pub spectrum: Spectrum<T>,
    pub trials_averaged: usize,
}

impl<T: Real> AcfEstimate<T> {
    /// `P̂(u) = Σ_k r̂[k] e^{-jπuk}`.
    pub fn to_ppo(&self, grid: &UGrid<T>) -> PpoEstimate<T> {
        PpoEstimate {
            spectrum: self.lags.dtft(grid),
            trials_averaged: self.trials,
        }
    }
}

/// A taper pair prepared for per-trial processing.
#[derive(Clone, Debug)]
pub struct ProductProcessor<T: Real> {
    w1: TaperedWeights<T>,
    w2: TaperedWeights<T>,
    nu: Complex<T>,
    inv_nu: Complex<T>,
    support1: Vec<usize>,
    support2: Vec<usize>,
}

impl<T: Real> ProductProcessor<T> {
    pub fn new(w1: &TaperedWeights<T>, w2: &TaperedWeights<T>) -> Result<Self> {
        let nu = normalization_nu(w1, w2)?;
        Ok(Self {
            w1: w1.clone(),
            w2: w2.clone(),
            nu,
            inv_nu: Complex::new(T::one(), T::zero()) / nu,
            support1: w1.support(),
            support2: w2.support(),
        })
    }

    pub fn nu(&self) -> Complex<T> {
        self.nu
    }

    pub fn first_lag(&self) -> isize {
        -(self.w2.extent() as isize - 1)
    }

    pub fn last_lag(&self) -> isize {
        self.w1.extent() as isize - 1
    }

    pub fn check_batch(&self, batch: &SnapshotBatch<T>) -> Result<()> {
        for (x, w) in [(&batch.x1, &self.w1), (&batch.x2, &self.w2)] {
            if x.ncols() != w.extent() {
                return Err(PpoError::ExtentMismatch {
                    expected: w.extent(),
                    got: x.ncols(),
                });
            }
        }
        Ok(())
    }

    /// Beamformer outputs `(y₁, y₂)` of one trial at `u`.
    pub fn outputs(
        &self,
        x1: ArrayView1<Complex<T>>,
        x2: ArrayView1<Complex<T>>,
        u: T,
    ) -> (Complex<T>, Complex<T>) {
        let beam = |x: &ArrayView1<Complex<T>>, w: &TaperedWeights<T>, support: &[usize]| {
            support
                .iter()
                .fold(Complex::new(T::zero(), T::zero()), |acc, &m| {
                    let steer = Complex::cis(-T::PI() * u * T::from_index(m as i128));
                    acc + w.values()[m] * steer * x[m]
                })
        };
        (
            beam(&x1, &self.w1, &self.support1),
            beam(&x2, &self.w2, &self.support2),
        )
    }

    /// `P̂(u) = y₁ y₂* / ν` of one trial.
    pub fn ppo_at(
        &self,
        x1: ArrayView1<Complex<T>>,
        x2: ArrayView1<Complex<T>>,
        u: T,
    ) -> Complex<T> {
        let (y1, y2) = self.outputs(x1, x2, u);
        y1 * y2.conj() * self.inv_nu
    }

    /// Unnormalized ACF `Σ_l a[l] b*[l−k]` of one trial, accumulated into
    /// `acc`.
    fn accumulate_acf(
        &self,
        x1: ArrayView1<Complex<T>>,
        x2: ArrayView1<Complex<T>>,
        acc: &mut [Complex<T>],
    ) {
        let first = self.first_lag();
        let b: Vec<(usize, Complex<T>)> = self
            .support2
            .iter()
            .map(|&n| (n, (self.w2.values()[n] * x2[n]).conj()))
            .collect();
        for &m in &self.support1 {
            let a = self.w1.values()[m] * x1[m];
            for &(n, bc) in &b {
                let idx = (m as isize - n as isize - first) as usize;
                acc[idx] = acc[idx] + a * bc;
            }
        }
    }

    /// `r̂[k]` of one trial.
    pub fn trial_acf(
        &self,
        x1: ArrayView1<Complex<T>>,
        x2: ArrayView1<Complex<T>>,
    ) -> LagSequence<T> {
        let mut seq = LagSequence::zeros(self.first_lag(), self.last_lag());
        self.accumulate_acf(x1, x2, seq.values_mut());
        seq.scale(self.inv_nu);
        seq
    }

    /// PPO of one trial on every point of `plan`'s grid via its ACF.
    pub fn trial_ppo(
        &self,
        x1: ArrayView1<Complex<T>>,
        x2: ArrayView1<Complex<T>>,
        plan: &DtftPlan<T>,
    ) -> Vec<Complex<T>> {
        plan.eval(&self.trial_acf(x1, x2))
    }

    /// Trial-averaged ACF. Per-trial sums run in parallel; the reduction is
    /// sequential in trial order so results are reproducible.
    pub fn mean_acf(&self, batch: &SnapshotBatch<T>) -> Result<AcfEstimate<T>> {
        self.check_batch(batch)?;
        let trials = batch.trials();
        if trials == 0 {
            return Err(PpoError::Signal("empty snapshot batch".into()));
        }
        let len = (self.last_lag() - self.first_lag() + 1) as usize;
        let per_trial: Vec<Vec<Complex<T>>> = (0..trials)
            .into_par_iter()
            .map(|t| {
                let mut acc = vec![Complex::new(T::zero(), T::zero()); len];
                self.accumulate_acf(batch.x1.row(t), batch.x2.row(t), &mut acc);
                acc
            })
            .collect();
        let mut sum = vec![Complex::new(T::zero(), T::zero()); len];
        for row in &per_trial {
            for (s, v) in sum.iter_mut().zip(row) {
                *s = *s + v;
            }
        }
        let scale = self.inv_nu / T::from_index(trials as i128);
        let mut lags = LagSequence::new(self.first_lag(), sum);
        lags.scale(scale);
        Ok(AcfEstimate { lags, trials })
    }

    /// Per-trial PPO values, `trials × grid points`.
    pub fn ppo_per_trial(
        &self,
        batch: &SnapshotBatch<T>,
        plan: &DtftPlan<T>,
    ) -> Result<Array2<Complex<T>>> {
        self.check_batch(batch)?;
        let rows: Vec<Vec<Complex<T>>> = (0..batch.trials())
            .into_par_iter()
            .map(|t| self.trial_ppo(batch.x1.row(t), batch.x2.row(t), plan))
            .collect();
        let n = plan.grid().len();
        Ok(
            Array2::from_shape_vec((rows.len(), n), rows.into_iter().flatten().collect())
                .expect("uniform row length"),
        )
    }
}

/// Beamformer outputs `y₁` and `y₂`, one entry per trial.
pub type SubarrayOutputs<T> = (Vec<Complex<T>>, Vec<Complex<T>>);

/// `(y₁, y₂)` per trial at direction cosine `u`.
pub fn subarray_outputs<T: Real>(
    batch: &SnapshotBatch<T>,
    w1: &TaperedWeights<T>,
    w2: &TaperedWeights<T>,
    u: T,
) -> Result<SubarrayOutputs<T>> {
    for (x, w) in [(&batch.x1, w1), (&batch.x2, w2)] {
        if x.ncols() != w.extent() {
            return Err(PpoError::ExtentMismatch {
                expected: w.extent(),
                got: x.ncols(),
            });
        }
    }
    let steer = |w: &TaperedWeights<T>, x: ArrayView1<Complex<T>>| {
        w.values()
            .iter()
            .enumerate()
            .fold(Complex::new(T::zero(), T::zero()), |acc, (m, wm)| {
                acc + *wm * Complex::cis(-T::PI() * u * T::from_index(m as i128)) * x[m]
            })
    };
    Ok((0..batch.trials())
        .map(|t| (steer(w1, batch.x1.row(t)), steer(w2, batch.x2.row(t))))
        .unzip())
}

/// Trial-averaged ACF estimate `r̂[k]`.
pub fn acf_estimate<T: Real>(
    batch: &SnapshotBatch<T>,
    w1: &TaperedWeights<T>,
    w2: &TaperedWeights<T>,
) -> Result<AcfEstimate<T>> {
    ProductProcessor::new(w1, w2)?.mean_acf(batch)
}

/// Trial-averaged PPO, evaluated as the DTFT of the averaged ACF.
pub fn ppo<T: Real>(
    batch: &SnapshotBatch<T>,
    w1: &TaperedWeights<T>,
    w2: &TaperedWeights<T>,
    grid: &UGrid<T>,
) -> Result<PpoEstimate<T>> {
    Ok(acf_estimate(batch, w1, w2)?.to_ppo(grid))
}

/// Trial-averaged PPO by the explicit double sum
/// `(1/ν) Σ_m Σ_n w₁[m] w₂*[n] x₁[m] x₂*[n] e^{-jπu(m−n)}`.
///
/// `O(M_e·N_e)` per grid point and trial; kept as a reference for the fast
/// path.
pub fn ppo_direct<T: Real>(
    batch: &SnapshotBatch<T>,
    w1: &TaperedWeights<T>,
    w2: &TaperedWeights<T>,
    grid: &UGrid<T>,
) -> Result<PpoEstimate<T>> {
    let proc = ProductProcessor::new(w1, w2)?;
    proc.check_batch(batch)?;
    let trials = batch.trials();
    let zero = Complex::new(T::zero(), T::zero());
    let values: Vec<Complex<T>> = grid
        .points()
        .par_iter()
        .map(|&u| {
            let mut total = zero;
            for t in 0..trials {
                let (x1, x2) = (batch.x1.row(t), batch.x2.row(t));
                let mut acc = zero;
                for (m, wm) in w1.values().iter().enumerate() {
                    for (n, wn) in w2.values().iter().enumerate() {
                        let phase = -T::PI() * u * T::from_index(m as i128 - n as i128);
                        acc = acc + *wm * wn.conj() * x1[m] * x2[n].conj() * Complex::cis(phase);
                    }
                }
                total = total + acc / proc.nu();
            }
            total / T::from_index(trials as i128)
        })
        .collect();
    Ok(PpoEstimate {
        spectrum: Spectrum::new(grid.clone(), values)?,
        trials_averaged: trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ProductArray;
    use crate::signal::{generate_snapshots, NoiseSpec, SourceSpec};
    use crate::tapering::{make_taper, TaperFamily};
    use ndarray::Array2;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    fn uniform(arr: &ProductArray) -> (TaperedWeights<f64>, TaperedWeights<f64>) {
        (
            make_taper(arr.subarray_a(), &TaperFamily::Uniform).unwrap(),
            make_taper(arr.subarray_b(), &TaperFamily::Uniform).unwrap(),
        )
    }

    #[test]
    fn single_sensor_outputs_and_acf() {
        let arr = ProductArray::ula(1).unwrap();
        let (w1, w2) = uniform(&arr);
        let x = Array2::from_elem((1, 1), c(0.3, -1.2));
        let batch = SnapshotBatch::from_data(&arr, x.clone(), x).unwrap();
        let (y1, y2) = subarray_outputs(&batch, &w1, &w2, 0.77).unwrap();
        assert_eq!(y1[0], c(0.3, -1.2));
        assert_eq!(y2[0], c(0.3, -1.2));
        let acf = acf_estimate(&batch, &w1, &w2).unwrap();
        assert!((acf.lags.get(0) - c(0.3f64.powi(2) + 1.44, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn steered_outputs_follow_dirichlet_sum() {
        let m = 12;
        let arr = ProductArray::ula(m).unwrap();
        let (w1, w2) = uniform(&arr);
        let us = 0.3;
        let src = SourceSpec::deterministic(us, 1.0).unwrap();
        let batch = generate_snapshots(&arr, &[src], &NoiseSpec::noiseless(), 1, 0).unwrap();
        let (y1, _) = subarray_outputs(&batch, &w1, &w2, us).unwrap();
        assert!((y1[0] - c(m as f64, 0.0)).norm() < 1e-12);

        let u = -0.17;
        let (y1, _) = subarray_outputs(&batch, &w1, &w2, u).unwrap();
        // Σ_{m<M} z^m = (1 − z^M)/(1 − z), z = e^{jπ(u_s−u)}.
        let z = Complex::cis(std::f64::consts::PI * (us - u));
        let closed = (c(1.0, 0.0) - z.powu(m as u32)) / (c(1.0, 0.0) - z);
        assert!((y1[0] - closed).norm() < 1e-12);
    }

    #[test]
    fn noiseless_source_peaks_at_array_size() {
        let m = 16;
        let arr = ProductArray::ula(m).unwrap();
        let (w1, w2) = uniform(&arr);
        let grid = UGrid::periodic(256).unwrap();
        let us = grid.points()[160];
        let src = SourceSpec::deterministic(us, 1.0).unwrap();
        let batch = generate_snapshots(&arr, &[src], &NoiseSpec::noiseless(), 1, 0).unwrap();
        let p = ppo(&batch, &w1, &w2, &grid).unwrap();
        let power = p.spectrum.power();
        let argmax = (0..power.len())
            .max_by(|&a, &b| power[a].total_cmp(&power[b]))
            .unwrap();
        assert_eq!(argmax, 160);
        assert!((p.spectrum.values()[160] - c(m as f64, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let arr = ProductArray::coprime(3, 2, 4, 5).unwrap();
        let (w1, w2) = uniform(&arr);
        let batch = SnapshotBatch::from_data(
            &arr,
            Array2::zeros((2, arr.subarray_a().extent())),
            Array2::zeros((2, arr.subarray_b().extent())),
        )
        .unwrap();
        let p = ppo(&batch, &w1, &w2, &UGrid::periodic(64).unwrap()).unwrap();
        assert!(p.spectrum.values().iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn extent_mismatch_is_rejected() {
        let arr = ProductArray::ula(4).unwrap();
        let other = ProductArray::ula(5).unwrap();
        let (w1, w2) = uniform(&other);
        let batch = generate_snapshots(&arr, &[], &NoiseSpec::white(1.0).unwrap(), 2, 0).unwrap();
        assert!(matches!(
            subarray_outputs(&batch, &w1, &w2, 0.0),
            Err(PpoError::ExtentMismatch { .. })
        ));
        assert!(ppo(&batch, &w1, &w2, &UGrid::periodic(8).unwrap()).is_err());
    }

    #[test]
    fn fourier_pair_and_direct_sum_agree() {
        let arr = ProductArray::coprime(3, 2, 6, 8).unwrap();
        let w1 = make_taper(arr.subarray_a(), &TaperFamily::<f64>::Hann).unwrap();
        let w2 = make_taper(arr.subarray_b(), &TaperFamily::Hamming).unwrap();
        let src = SourceSpec::gaussian(0.4, 2.0).unwrap();
        let batch =
            generate_snapshots(&arr, &[src], &NoiseSpec::white(1.0).unwrap(), 5, 21).unwrap();
        for grid in [
            UGrid::periodic(128).unwrap(),
            UGrid::linspace(-0.9, 0.8, 77).unwrap(),
        ] {
            let fast = ppo(&batch, &w1, &w2, &grid).unwrap();
            let slow = ppo_direct(&batch, &w1, &w2, &grid).unwrap();
            for (a, b) in fast.spectrum.values().iter().zip(slow.spectrum.values()) {
                assert!((a - b).norm() <= 1e-10 * b.norm().max(1e-300) + 1e-13);
            }
        }
    }

    #[test]
    fn identical_subarrays_give_nonnegative_trial_ppo() {
        let arr = ProductArray::nula(&[0, 1, 5, 6, 10]).unwrap();
        let w = make_taper(arr.subarray_a(), &TaperFamily::<f64>::Hann).unwrap();
        let batch = generate_snapshots(&arr, &[], &NoiseSpec::white(1.0).unwrap(), 50, 8).unwrap();
        let proc = ProductProcessor::new(&w, &w).unwrap();
        let plan = DtftPlan::new(UGrid::periodic(64).unwrap());
        let per_trial = proc.ppo_per_trial(&batch, &plan).unwrap();
        for v in per_trial.iter() {
            assert!(v.re >= -1e-12 && v.im.abs() < 1e-12);
        }
    }

    #[test]
    fn averaging_trials_is_linear() {
        let arr = ProductArray::nested(4, 4, 2).unwrap();
        let (w1, w2) = uniform(&arr);
        let grid = UGrid::periodic(32).unwrap();
        let batch = generate_snapshots(&arr, &[], &NoiseSpec::white(1.0).unwrap(), 9, 4).unwrap();
        let joint = ppo(&batch, &w1, &w2, &grid).unwrap();
        assert_eq!(joint.trials_averaged, 9);
        let proc = ProductProcessor::new(&w1, &w2).unwrap();
        let plan = DtftPlan::new(grid);
        let per_trial = proc.ppo_per_trial(&batch, &plan).unwrap();
        for (q, v) in joint.spectrum.values().iter().enumerate() {
            let mean = per_trial.column(q).iter().sum::<Complex<f64>>() / 9.0;
            assert!((mean - v).norm() < 1e-12);
        }
    }

    #[test]
    fn point_ppo_matches_grid_ppo() {
        let arr = ProductArray::coprime(2, 3, 5, 4).unwrap();
        let (w1, w2) = uniform(&arr);
        let batch = generate_snapshots(&arr, &[], &NoiseSpec::white(1.0).unwrap(), 1, 5).unwrap();
        let proc = ProductProcessor::new(&w1, &w2).unwrap();
        let acf = proc.trial_acf(batch.x1.row(0), batch.x2.row(0));
        for u in [-0.8, 0.0, 0.35] {
            let direct = proc.ppo_at(batch.x1.row(0), batch.x2.row(0), u);
            assert!((direct - acf.dtft_at(u)).norm() < 1e-12);
        }
    }
}
