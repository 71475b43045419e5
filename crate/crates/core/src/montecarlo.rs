//! Seeded ensemble checks of the PPO against its closed-form moments.
//!
//! Every trial draws from its own ChaCha stream, trials are processed in
//! fixed-size chunks and statistics are reduced sequentially in trial order,
//! so a report depends only on the setup and seed, not on the thread count.

use std::fmt::Write as _;
use std::time::Instant;

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::estimator::ProductProcessor;
use crate::geometry::ProductArray;
use crate::multidim::{self, DirectionCosine3, GridArray3, SnapshotPair3};
use crate::signal::{NoiseSpec, SnapshotGenerator, SourceSpec};
use crate::spectral::{DtftPlan, Spectrum, UGrid};
use crate::tapering::{make_taper, weighting_function, TaperFamily, TaperedWeights};
use crate::theory::{expected_ppo, ppo_covariance_at, scenario_acf, TrueCorrelation};
use crate::{PpoError, Real, Result};

pub const MIN_MEAN_TRIALS: usize = 100;
pub const MIN_COV_TRIALS: usize = 10_000;
pub const BOOTSTRAP_RESAMPLES: usize = 200;
/// Fraction of grid points that must pass the mean check.
pub const MEAN_PASS_FRACTION: f64 = 0.99;
/// Allowed deviation of the log-log variance slope from −1.
pub const SLOPE_TOLERANCE: f64 = 0.05;

const CHUNK: usize = 4096;
const BOOTSTRAP_SEED_SALT: u64 = 0xB007_5EED_0000_0001;

/// Rounding slack added to every z-gate so that zero-variance (exact) cases
/// compare equal.
fn slack(theory: f64) -> f64 {
    1e-9 * theory.abs().max(1.0)
}

/// Everything needed to simulate one array/taper/signal configuration.
#[derive(Clone, Debug)]
pub struct McSetup<T: Real> {
    pub label: String,
    pub array: ProductArray,
    pub w1: TaperedWeights<T>,
    pub w2: TaperedWeights<T>,
    pub sources: Vec<SourceSpec<T>>,
    pub noise: NoiseSpec<T>,
    pub trials: usize,
    pub seed: u64,
}

impl<T: Real> McSetup<T> {
    /// White noise only, one taper family on both subarrays.
    pub fn white(
        array: &ProductArray,
        family: &TaperFamily<T>,
        sigma2: T,
        trials: usize,
        seed: u64,
    ) -> Result<Self> {
        Ok(Self {
            label: format!("{}/{}", array.label(), family.name()),
            array: array.clone(),
            w1: make_taper(array.subarray_a(), family)?,
            w2: make_taper(array.subarray_b(), family)?,
            sources: Vec::new(),
            noise: NoiseSpec::white(sigma2)?,
            trials,
            seed,
        })
    }

    fn generator(&self) -> Result<SnapshotGenerator<T>> {
        SnapshotGenerator::new(&self.array, &self.sources, &self.noise, self.seed)
    }

    /// `σ²` when the setup is pure white noise; the covariance theory needs it.
    fn white_sigma2(&self) -> Result<T> {
        match (&self.noise, self.sources.is_empty()) {
            (NoiseSpec::White { variance }, true) => Ok(*variance),
            _ => Err(PpoError::Config(
                "covariance checks need white noise without sources".into(),
            )),
        }
    }
}

/// One grid point of a mean check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanPoint {
    pub u: f64,
    /// Full direction of a 3-D check; `u` then holds `u_z`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u3: Option<[f64; 3]>,
    pub empirical_re: f64,
    pub empirical_im: f64,
    /// Sample variance `E|P̂ − mean|²` across trials.
    pub empirical_variance: f64,
    pub se: f64,
    pub theory_re: f64,
    pub theory_im: f64,
    pub pass: bool,
}

/// One `(u₁, u₂)` pair of a covariance check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovPoint {
    pub u1: f64,
    pub u2: f64,
    pub empirical_re: f64,
    pub empirical_im: f64,
    pub se: f64,
    pub theory_re: f64,
    pub theory_im: f64,
    pub pass: bool,
}

/// Variance of the `K`-snapshot average.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AveragingPoint {
    pub k: usize,
    pub blocks: usize,
    pub empirical_variance: f64,
    pub se: f64,
    pub theory: f64,
    pub pass: bool,
}

/// Verdict of one named check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub statistic: f64,
    pub threshold: f64,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub scenario: String,
    pub trials: usize,
    pub seed: u64,
    pub mean: Vec<MeanPoint>,
    pub covariance: Vec<CovPoint>,
    pub averaging: Vec<AveragingPoint>,
    pub averaging_slope: Option<f64>,
    pub checks: Vec<CheckOutcome>,
    pub wall_time_s: f64,
}

impl McReport {
    fn new(scenario: &str, trials: usize, seed: u64) -> Self {
        Self {
            scenario: scenario.to_string(),
            trials,
            seed,
            ..Self::default()
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Appends another report's points and checks.
    pub fn merge(&mut self, other: McReport) {
        if self.scenario.is_empty() {
            self.scenario = other.scenario.clone();
            self.seed = other.seed;
        }
        self.trials = self.trials.max(other.trials);
        self.mean.extend(other.mean);
        self.covariance.extend(other.covariance);
        self.averaging.extend(other.averaging);
        if other.averaging_slope.is_some() {
            self.averaging_slope = other.averaging_slope;
        }
        self.checks.extend(other.checks);
        self.wall_time_s += other.wall_time_s;
    }

    /// Aligned-column summary, one line per check.
    pub fn summary_table(&self) -> String {
        let name_w = self
            .checks
            .iter()
            .map(|c| c.name.len())
            .max()
            .unwrap_or(5)
            .max(5);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<name_w$}  {:<6}  {:>12}  {:>12}  detail",
            "check", "result", "statistic", "threshold"
        );
        for c in &self.checks {
            let _ = writeln!(
                out,
                "{:<name_w$}  {:<6}  {:>12.6}  {:>12.6}  {}",
                c.name,
                if c.passed { "PASS" } else { "FAIL" },
                c.statistic,
                c.threshold,
                c.detail
            );
        }
        let _ = writeln!(
            out,
            "{}: {} trials, seed {}, {:.2} s, {}",
            self.scenario,
            self.trials,
            self.seed,
            self.wall_time_s,
            if self.passed() {
                "all checks passed"
            } else {
                "FAILED"
            }
        );
        out
    }
}

/// Running mean and centered second moment of complex samples.
#[derive(Clone, Copy, Debug, Default)]
struct Welford {
    n: usize,
    mean: Complex<f64>,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: Complex<f64>) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += (d.conj() * (x - self.mean)).re;
    }

    /// Unbiased variance `E|x − mean|²`.
    fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    fn standard_error(&self) -> f64 {
        (self.variance() / self.n as f64).sqrt()
    }
}

fn c64<T: Real>(v: Complex<T>) -> Complex<f64> {
    Complex::new(
        v.re.to_f64().unwrap_or(f64::NAN),
        v.im.to_f64().unwrap_or(f64::NAN),
    )
}

fn f64_of<T: Real>(v: T) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

fn require_trials(check: &'static str, required: usize, got: usize) -> Result<()> {
    if got < required {
        return Err(PpoError::TooFewTrials {
            check,
            required,
            got,
        });
    }
    Ok(())
}

fn mean_points(
    acc: &[Welford],
    u: impl Iterator<Item = f64>,
    theory: &[Complex<f64>],
    z: f64,
) -> Vec<MeanPoint> {
    acc.iter()
        .zip(u)
        .zip(theory)
        .map(|((w, u), t)| {
            let se = w.standard_error();
            MeanPoint {
                u,
                u3: None,
                empirical_re: w.mean.re,
                empirical_im: w.mean.im,
                empirical_variance: w.variance(),
                se,
                theory_re: t.re,
                theory_im: t.im,
                pass: (w.mean - t).norm() <= z * se + slack(t.norm()),
            }
        })
        .collect()
}

fn fraction_check(name: &str, points: &[MeanPoint], z: f64) -> CheckOutcome {
    let passing = points.iter().filter(|p| p.pass).count();
    let fraction = passing as f64 / points.len().max(1) as f64;
    CheckOutcome {
        name: name.to_string(),
        passed: fraction >= MEAN_PASS_FRACTION,
        statistic: fraction,
        threshold: MEAN_PASS_FRACTION,
        detail: format!("{passing}/{} points within {z} SE", points.len()),
    }
}

/// Trial-averaged PPO on `grid` against `E{P̂(u)}`.
///
/// The theory is the expected PPO for the setup's sources and noise; for
/// white noise alone it is the constant `σ²`.
pub fn run_mean_check<T: Real>(setup: &McSetup<T>, grid: &UGrid<T>, z: f64) -> Result<McReport> {
    let theory = expected_for(setup, grid)?;
    run_mean_check_against(setup, &theory, z)
}

/// `E{P̂(u)}` for the setup's sources and noise on `grid`.
pub fn expected_for<T: Real>(setup: &McSetup<T>, grid: &UGrid<T>) -> Result<Spectrum<T>> {
    let wc = weighting_function(&setup.w1, &setup.w2)?;
    let reach = setup.array.span().saturating_sub(1);
    let truth = TrueCorrelation::Acf(scenario_acf(&setup.sources, &setup.noise, reach));
    expected_ppo(&truth, &wc, grid)
}

/// Trial-averaged PPO against a given theory curve, on the theory's grid.
pub fn run_mean_check_against<T: Real>(
    setup: &McSetup<T>,
    theory: &Spectrum<T>,
    z: f64,
) -> Result<McReport> {
    require_trials("mean check", MIN_MEAN_TRIALS, setup.trials)?;
    let started = Instant::now();
    let grid = theory.grid();
    let theory: Vec<Complex<f64>> = theory.values().iter().map(|v| c64(*v)).collect();

    let proc = ProductProcessor::new(&setup.w1, &setup.w2)?;
    let plan = DtftPlan::new(grid.clone());
    let generator = setup.generator()?;
    let mut acc = vec![Welford::default(); grid.len()];
    let mut first = 0;
    while first < setup.trials {
        let count = CHUNK.min(setup.trials - first);
        let batch = generator.batch(first, count);
        let per_trial = proc.ppo_per_trial(&batch, &plan)?;
        for row in per_trial.rows() {
            for (a, v) in acc.iter_mut().zip(row) {
                a.push(c64(*v));
            }
        }
        first += count;
    }

    let mut report = McReport::new(&setup.label, setup.trials, setup.seed);
    report.mean = mean_points(&acc, grid.points().iter().map(|&u| f64_of(u)), &theory, z);
    let check = fraction_check(&format!("{} mean", setup.label), &report.mean, z);
    report.checks.push(check);
    report.wall_time_s = started.elapsed().as_secs_f64();
    Ok(report)
}

/// Per-trial `P̂(u)` at each of `u`, trial-major.
fn ppo_samples<T: Real>(
    setup: &McSetup<T>,
    u: &[T],
    first: usize,
    count: usize,
) -> Result<Vec<Vec<Complex<f64>>>> {
    let proc = ProductProcessor::new(&setup.w1, &setup.w2)?;
    let generator = setup.generator()?;
    let mut out = Vec::with_capacity(count);
    let mut t = first;
    while t < first + count {
        let n = CHUNK.min(first + count - t);
        let batch = generator.batch(t, n);
        let rows: Vec<Vec<Complex<f64>>> = (0..n)
            .into_par_iter()
            .map(|i| {
                u.iter()
                    .map(|&ui| c64(proc.ppo_at(batch.x1.row(i), batch.x2.row(i), ui)))
                    .collect()
            })
            .collect();
        out.extend(rows);
        t += n;
    }
    Ok(out)
}

/// `mean(P_i P_j*) − mean(P_i) mean(P_j)*` over the trials in `idx`.
fn empirical_cov(
    samples: &[Vec<Complex<f64>>],
    idx: impl Iterator<Item = usize>,
    pairs: &[(usize, usize)],
) -> Vec<Complex<f64>> {
    let n_u = samples.first().map_or(0, Vec::len);
    let mut mean = vec![Complex::new(0.0, 0.0); n_u];
    let mut cross = vec![Complex::new(0.0, 0.0); pairs.len()];
    let mut n = 0usize;
    for t in idx {
        let row = &samples[t];
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
        for (c, &(i, j)) in cross.iter_mut().zip(pairs) {
            *c += row[i] * row[j].conj();
        }
        n += 1;
    }
    let inv = 1.0 / n as f64;
    pairs
        .iter()
        .zip(&cross)
        .map(|(&(i, j), c)| c * inv - mean[i] * inv * (mean[j] * inv).conj())
        .collect()
}

/// Covariance check against an arbitrary theory `C(u₁ − u₂)`.
///
/// Standard errors come from a nonparametric bootstrap over trials with
/// [`BOOTSTRAP_RESAMPLES`] resamples.
pub fn run_cov_check_against<T: Real>(
    setup: &McSetup<T>,
    u_pairs: &[(T, T)],
    z: f64,
    theory: impl Fn(T) -> Result<Complex<T>>,
) -> Result<McReport> {
    require_trials("covariance check", MIN_COV_TRIALS, setup.trials)?;
    if u_pairs.is_empty() {
        return Err(PpoError::Config(
            "covariance check needs at least one (u1, u2) pair".into(),
        ));
    }
    let started = Instant::now();
    let mut unique: Vec<T> = Vec::new();
    let mut pairs = Vec::with_capacity(u_pairs.len());
    for &(a, b) in u_pairs {
        let mut slot = |u: T| match unique.iter().position(|&v| v == u) {
            Some(i) => i,
            None => {
                unique.push(u);
                unique.len() - 1
            }
        };
        let i = slot(a);
        let j = slot(b);
        pairs.push((i, j));
    }

    let samples = ppo_samples(setup, &unique, 0, setup.trials)?;
    let n = samples.len();
    let empirical = empirical_cov(&samples, 0..n, &pairs);

    let boot: Vec<Vec<Complex<f64>>> = (0..BOOTSTRAP_RESAMPLES)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(setup.seed ^ BOOTSTRAP_SEED_SALT);
            rng.set_stream(b as u64);
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            empirical_cov(&samples, idx.into_iter(), &pairs)
        })
        .collect();

    let mut report = McReport::new(&setup.label, setup.trials, setup.seed);
    for (p, (&(u1, u2), emp)) in u_pairs.iter().zip(&empirical).enumerate() {
        let (mut re, mut im) = (Welford::default(), Welford::default());
        for rs in &boot {
            re.push(Complex::new(rs[p].re, 0.0));
            im.push(Complex::new(rs[p].im, 0.0));
        }
        let se = (re.variance() + im.variance()).sqrt();
        let t = c64(theory(u1 - u2)?);
        report.covariance.push(CovPoint {
            u1: f64_of(u1),
            u2: f64_of(u2),
            empirical_re: emp.re,
            empirical_im: emp.im,
            se,
            theory_re: t.re,
            theory_im: t.im,
            pass: (emp - t).norm() <= z * se + slack(t.norm()),
        });
    }
    let worst = report
        .covariance
        .iter()
        .map(|c| {
            let d = Complex::new(c.empirical_re - c.theory_re, c.empirical_im - c.theory_im).norm();
            if c.se > 0.0 {
                d / c.se
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max);
    let passing = report.covariance.iter().filter(|c| c.pass).count();
    report.checks.push(CheckOutcome {
        name: format!("{} covariance", setup.label),
        passed: passing == report.covariance.len(),
        statistic: worst,
        threshold: z,
        detail: format!(
            "{passing}/{} pairs within {z} bootstrap SE",
            report.covariance.len()
        ),
    });
    report.wall_time_s = started.elapsed().as_secs_f64();
    Ok(report)
}

/// Empirical `cov(P̂(u₁), P̂(u₂))` against the white-noise closed form.
pub fn run_cov_check<T: Real>(setup: &McSetup<T>, u_pairs: &[(T, T)], z: f64) -> Result<McReport> {
    let sigma2 = setup.white_sigma2()?;
    run_cov_check_against(setup, u_pairs, z, |du| {
        ppo_covariance_at(&setup.w1, &setup.w2, sigma2, du)
    })
}

fn least_squares_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Variance of the `K`-snapshot averaged PPO against `C(0)/K`.
///
/// `setup.trials` is the number of independent `K`-averages per `K`. Each
/// `K` uses its own disjoint range of trial indices, taken in the order of
/// `k_list`, so a leading `K = 1` reuses trials `0..setup.trials` exactly as
/// [`run_cov_check`] does. The variance is averaged over the points in `u`;
/// its standard error is bounded by the mean of the per-point errors.
pub fn run_averaging_check<T: Real>(
    setup: &McSetup<T>,
    k_list: &[usize],
    u: &[T],
    z: f64,
) -> Result<McReport> {
    if k_list.is_empty() || k_list.contains(&0) {
        return Err(PpoError::Config(
            "averaging check needs K values >= 1".into(),
        ));
    }
    if u.is_empty() {
        return Err(PpoError::Config(
            "averaging check needs at least one u point".into(),
        ));
    }
    require_trials("averaging check", 2, setup.trials)?;
    let started = Instant::now();
    let c0 = f64_of(crate::theory::ppo_variance(
        &setup.w1,
        &setup.w2,
        setup.white_sigma2()?,
    )?);
    let blocks = setup.trials;

    let mut report = McReport::new(&setup.label, blocks, setup.seed);
    let mut offset = 0usize;
    for &k in k_list {
        let samples = ppo_samples(setup, u, offset, k * blocks)?;
        offset += k * blocks;
        let averages: Vec<Vec<Complex<f64>>> = samples
            .chunks(k)
            .map(|block| {
                (0..u.len())
                    .map(|i| block.iter().map(|r| r[i]).sum::<Complex<f64>>() / k as f64)
                    .collect()
            })
            .collect();
        let (mut var_sum, mut se_sum) = (0.0, 0.0);
        for i in 0..u.len() {
            let mean = averages.iter().map(|r| r[i]).sum::<Complex<f64>>() / blocks as f64;
            let (mut m2, mut m4) = (0.0, 0.0);
            for r in &averages {
                let d = (r[i] - mean).norm_sqr();
                m2 += d;
                m4 += d * d;
            }
            m2 /= blocks as f64;
            m4 /= blocks as f64;
            var_sum += m2;
            se_sum += ((m4 - m2 * m2).max(0.0) / blocks as f64).sqrt();
        }
        let var = var_sum / u.len() as f64;
        let se = se_sum / u.len() as f64;
        let theory = c0 / k as f64;
        report.averaging.push(AveragingPoint {
            k,
            blocks,
            empirical_variance: var,
            se,
            theory,
            pass: (var - theory).abs() <= z * se + slack(theory),
        });
    }

    let passing = report.averaging.iter().filter(|a| a.pass).count();
    report.checks.push(CheckOutcome {
        name: format!("{} averaged variance", setup.label),
        passed: passing == report.averaging.len(),
        statistic: passing as f64,
        threshold: report.averaging.len() as f64,
        detail: format!(
            "{passing}/{} K values within {z} SE of C(0)/K",
            report.averaging.len()
        ),
    });
    if k_list.len() >= 2 {
        let x: Vec<f64> = report.averaging.iter().map(|a| (a.k as f64).ln()).collect();
        let y: Vec<f64> = report
            .averaging
            .iter()
            .map(|a| a.empirical_variance.ln())
            .collect();
        let slope = least_squares_slope(&x, &y);
        report.averaging_slope = Some(slope);
        report.checks.push(CheckOutcome {
            name: format!("{} variance slope", setup.label),
            passed: (slope + 1.0).abs() <= SLOPE_TOLERANCE,
            statistic: slope,
            threshold: -1.0,
            detail: format!("log-variance vs log-K slope, tolerance {SLOPE_TOLERANCE}"),
        });
    }
    report.wall_time_s = started.elapsed().as_secs_f64();
    Ok(report)
}

/// White-noise mean check of the 3-D PPO at the given directions.
///
/// The theory is `E{P̂(u)} = Σ_k w_c[k] σ²δ[k] e^{-jπuᵀk} = σ²`. The
/// per-point sample variance is reported without an analytic reference.
#[allow(clippy::too_many_arguments)]
pub fn run_mean_check3<T: Real>(
    label: &str,
    w1: &GridArray3<T>,
    w2: &GridArray3<T>,
    sigma2: T,
    trials: usize,
    seed: u64,
    u: &[DirectionCosine3<T>],
    z: f64,
) -> Result<McReport> {
    require_trials("3-D mean check", MIN_MEAN_TRIALS, trials)?;
    let started = Instant::now();
    let wc = multidim::weighting3(w1, w2)?;
    let zero = Complex::new(T::zero(), T::zero());
    let theory: Vec<Complex<f64>> = u
        .iter()
        .map(|d| {
            c64(multidim::expected_ppo3(
                &wc,
                |k| {
                    if k == [0, 0, 0] {
                        Complex::new(sigma2, T::zero())
                    } else {
                        zero
                    }
                },
                d,
            ))
        })
        .collect();

    let mut acc = vec![Welford::default(); u.len()];
    let mut first = 0;
    while first < trials {
        let count = CHUNK.min(trials - first);
        let data: Vec<SnapshotPair3<T>> =
            multidim::white_snapshot_range3(w1, w2, sigma2, first, count, seed);
        let rows: Vec<Vec<Complex<f64>>> = data
            .par_iter()
            .map(|(x1, x2)| -> Result<Vec<Complex<f64>>> {
                let r = multidim::acf3(x1.view(), x2.view(), w1, w2)?;
                Ok(u.iter().map(|d| c64(r.dtft_at(d))).collect())
            })
            .collect::<Result<_>>()?;
        for row in rows {
            for (a, v) in acc.iter_mut().zip(row) {
                a.push(v);
            }
        }
        first += count;
    }

    let mut report = McReport::new(label, trials, seed);
    report.mean = mean_points(&acc, u.iter().map(|d| f64_of(d.u[2])), &theory, z);
    for (p, d) in report.mean.iter_mut().zip(u) {
        p.u3 = Some(d.u.map(f64_of));
    }
    let check = fraction_check(&format!("{label} 3-D mean"), &report.mean, z);
    report.checks.push(check);
    report.wall_time_s = started.elapsed().as_secs_f64();
    Ok(report)
}
