//! End-to-end acceptance checks, one PASS/FAIL line each.
//!
//! Runs without the libtest harness so the verdict lines always reach the
//! console; the process exits non-zero if any check fails.

use std::time::{Duration, Instant};

use ndarray::{Array1, Array2};
use ppo_core::estimator::{ppo, ppo_direct, ProductProcessor};
use ppo_core::montecarlo::{
    run_averaging_check, run_cov_check, run_mean_check, run_mean_check3, McSetup,
};
use ppo_core::multidim::{acf3, ppo3, weighting3, DirectionCosine3, GridArray3};
use ppo_core::scenario::Scenario;
use ppo_core::signal::{complex_normal, trial_rng, SnapshotBatch};
use ppo_core::tapering::{beam_metrics, make_taper, normalization_nu, weighting_function};
use ppo_core::theory::{ppo_covariance_at, ppo_variance, second_moment_oracle};
use ppo_core::{Complex64, ProductArray, SubarraySpec, TaperFamily, TaperedWeights, UGrid};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const FOURIER_CASES: usize = 20;
const FOURIER_GRID: usize = 512;
const FOURIER_TOL: f64 = 1e-10;
const FOURIER_BUDGET: Duration = Duration::from_secs(10);

const ORACLE_PAIRS: usize = 50;
const ORACLE_POINTS: usize = 20;
const ORACLE_MAX_EXTENT: usize = 8;
const ORACLE_TOL: f64 = 1e-10;
const ORACLE_BUDGET: Duration = Duration::from_secs(30);

const MC_TRIALS: usize = 100_000;
const MEAN_GRID: usize = 256;
const MEAN_Z: f64 = 4.0;
const UNBIASED_BUDGET: Duration = Duration::from_secs(120);

const VARIANCE_Z: f64 = 5.0;
const VARIANCE_TOL: f64 = 1e-12;

const AVERAGING_K: [usize; 4] = [1, 4, 16, 64];
const AVERAGING_BLOCKS: usize = 20_000;
const AVERAGING_Z: f64 = 4.0;

const METRIC_GRID: usize = 4096;
const MLW_REL_TOL: f64 = 0.10;
const PSL_TOL_DB: f64 = 0.3;
const METRIC_BUDGET: Duration = Duration::from_secs(5);

const AREA_POINTS: usize = 4097;
const AREA_TOL: f64 = 1e-6;

const DEGENERATE_TOL: f64 = 1e-12;

const PEAK_PROMINENCE_DB: f64 = 1.0;
const BIAS_BAND: f64 = 0.45;

const SEED: u64 = 20_240_601;

struct Outcome {
    name: &'static str,
    passed: bool,
    detail: String,
}

fn rng(stream: u64) -> ChaCha8Rng {
    trial_rng(SEED, stream as usize)
}

fn random_subarray(rng: &mut ChaCha8Rng, max_extent: usize) -> SubarraySpec {
    let extent = rng.random_range(1..=max_extent);
    let mut pos: Vec<usize> = (1..extent.saturating_sub(1))
        .filter(|_| rng.random_bool(0.6))
        .collect();
    pos.push(0);
    pos.push(extent - 1);
    pos.sort_unstable();
    pos.dedup();
    SubarraySpec::from_positions(&pos).unwrap()
}

/// Random complex taper with a real origin weight in [0.5, 2].
fn random_taper(rng: &mut ChaCha8Rng, sub: &SubarraySpec) -> TaperedWeights<f64> {
    let mut v: Vec<Complex64> = (0..sub.extent())
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    v[0] = Complex64::new(rng.random_range(0.5..2.0), 0.0);
    TaperedWeights::new(sub, v).unwrap()
}

fn random_pair(
    rng: &mut ChaCha8Rng,
    max_extent: usize,
) -> (ProductArray, TaperedWeights<f64>, TaperedWeights<f64>) {
    loop {
        let arr = ProductArray::new(
            "random",
            random_subarray(rng, max_extent),
            random_subarray(rng, max_extent),
        );
        let w1 = random_taper(rng, arr.subarray_a());
        let w2 = random_taper(rng, arr.subarray_b());
        if normalization_nu(&w1, &w2).is_ok() {
            return (arr, w1, w2);
        }
    }
}

fn fig1_arrays() -> Vec<ProductArray> {
    ["fig1a", "fig1b", "fig1c", "fig1d"]
        .iter()
        .map(|p| Scenario::preset(p).unwrap().arrays[0].array().unwrap())
        .collect()
}

fn families() -> [TaperFamily<f64>; 3] {
    [
        TaperFamily::Uniform,
        TaperFamily::Hann,
        TaperFamily::Hamming,
    ]
}

fn uniform_pair(arr: &ProductArray) -> (TaperedWeights<f64>, TaperedWeights<f64>) {
    (
        make_taper(arr.subarray_a(), &TaperFamily::Uniform).unwrap(),
        make_taper(arr.subarray_b(), &TaperFamily::Uniform).unwrap(),
    )
}

fn budget(elapsed: Duration, limit: Duration) -> (bool, String) {
    (
        elapsed < limit,
        format!(
            "{:.2} s of {:.0} s",
            elapsed.as_secs_f64(),
            limit.as_secs_f64()
        ),
    )
}

fn fourier_pair() -> Outcome {
    let start = Instant::now();
    let mut r = rng(1);
    let grid = UGrid::periodic(FOURIER_GRID).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..FOURIER_CASES {
        let (arr, w1, w2) = random_pair(&mut r, 48);
        let trials = r.random_range(1..=4);
        let x1 = Array2::from_shape_fn((trials, w1.extent()), |_| complex_normal(&mut r, 1.0));
        let x2 = Array2::from_shape_fn((trials, w2.extent()), |_| complex_normal(&mut r, 1.0));
        let batch = SnapshotBatch::from_data(&arr, x1, x2).unwrap();
        let fast = ppo(&batch, &w1, &w2, &grid).unwrap();
        let slow = ppo_direct(&batch, &w1, &w2, &grid).unwrap();
        let scale = slow
            .spectrum
            .values()
            .iter()
            .map(|v| v.norm())
            .fold(0.0, f64::max);
        for (a, b) in fast.spectrum.values().iter().zip(slow.spectrum.values()) {
            worst = worst.max((a - b).norm() / scale);
        }
    }
    let (fast_enough, time) = budget(start.elapsed(), FOURIER_BUDGET);
    Outcome {
        name: "fourier pair",
        passed: worst <= FOURIER_TOL && fast_enough,
        detail: format!("max rel err {worst:.2e} <= {FOURIER_TOL:e}, {time}"),
    }
}

fn oracle() -> Outcome {
    let start = Instant::now();
    let mut r = rng(2);
    let mut worst = 0.0f64;
    for _ in 0..ORACLE_PAIRS {
        let (_, w1, w2) = random_pair(&mut r, ORACLE_MAX_EXTENT);
        let sigma2: f64 = r.random_range(0.2..3.0);
        for _ in 0..ORACLE_POINTS {
            let u1: f64 = r.random_range(-1.0..1.0);
            let u2: f64 = r.random_range(-1.0..1.0);
            let brute = second_moment_oracle(&w1, &w2, sigma2, u1, u2).unwrap();
            let closed = ppo_covariance_at(&w1, &w2, sigma2, u1 - u2).unwrap();
            let err = (brute - sigma2 * sigma2 - closed).norm() / brute.norm().max(sigma2 * sigma2);
            worst = worst.max(err);
        }
    }
    let (fast_enough, time) = budget(start.elapsed(), ORACLE_BUDGET);
    Outcome {
        name: "fourth-moment oracle",
        passed: worst <= ORACLE_TOL && fast_enough,
        detail: format!("max rel err {worst:.2e} <= {ORACLE_TOL:e}, {time}"),
    }
}

fn unbiased() -> Outcome {
    let start = Instant::now();
    let grid = UGrid::periodic(MEAN_GRID).unwrap();
    let mut failures = Vec::new();
    let mut lowest = 1.0f64;
    for (i, arr) in fig1_arrays().iter().enumerate() {
        for (j, fam) in families().iter().enumerate() {
            let setup =
                McSetup::white(arr, fam, 1.0, MC_TRIALS, SEED + (3 * i + j) as u64).unwrap();
            let report = run_mean_check(&setup, &grid, MEAN_Z).unwrap();
            let frac =
                report.mean.iter().filter(|p| p.pass).count() as f64 / report.mean.len() as f64;
            lowest = lowest.min(frac);
            if !report.passed() {
                failures.push(setup.label.clone());
            }
        }
    }
    let (fast_enough, time) = budget(start.elapsed(), UNBIASED_BUDGET);
    Outcome {
        name: "white-noise unbiasedness",
        passed: failures.is_empty() && fast_enough,
        detail: format!(
            "12 setups, lowest pass fraction {lowest:.4}, failing {failures:?}, {time}"
        ),
    }
}

fn variance_values() -> Outcome {
    let cases = [
        ("ula28", ProductArray::ula(28).unwrap(), 1.0),
        (
            "coprime(3,2,14,21)",
            ProductArray::coprime(3, 2, 14, 21).unwrap(),
            6.0,
        ),
    ];
    let mut passed = true;
    let mut parts = Vec::new();
    for (k, (name, arr, expected)) in cases.iter().enumerate() {
        let (w1, w2) = uniform_pair(arr);
        let analytic = ppo_variance(&w1, &w2, 1.0).unwrap();
        let setup = McSetup::white(
            arr,
            &TaperFamily::Uniform,
            1.0,
            MC_TRIALS,
            SEED + 100 + k as u64,
        )
        .unwrap();
        let report = run_cov_check(&setup, &[(0.0, 0.0)], VARIANCE_Z).unwrap();
        let point = &report.covariance[0];
        passed &= (analytic - expected).abs() <= VARIANCE_TOL && report.passed();
        parts.push(format!(
            "{name}: C(0) {analytic} (want {expected}), MC {:.4} +/- {:.4}",
            point.empirical_re, point.se
        ));
    }
    Outcome {
        name: "variance values",
        passed,
        detail: parts.join("; "),
    }
}

fn averaging() -> Outcome {
    let arr = ProductArray::ula(28).unwrap();
    let setup = McSetup::white(
        &arr,
        &TaperFamily::Uniform,
        1.0,
        AVERAGING_BLOCKS,
        SEED + 200,
    )
    .unwrap();
    let report = run_averaging_check(&setup, &AVERAGING_K, &[0.0, 0.3], AVERAGING_Z).unwrap();
    let slope = report.averaging_slope.unwrap_or(f64::NAN);
    Outcome {
        name: "snapshot averaging",
        passed: report.passed() && (slope + 1.0).abs() <= 0.05,
        detail: format!("slope {slope:.4}, K {AVERAGING_K:?}, {AVERAGING_BLOCKS} blocks per K"),
    }
}

fn beam() -> Outcome {
    let start = Instant::now();
    let grid = UGrid::periodic(METRIC_GRID).unwrap();
    let mut passed = true;
    let mut parts = Vec::new();
    for (preset, mlw_target, psl_target) in [
        ("coprime80", 0.02, Some(-13.3)),
        ("ula80", 0.05, None),
        ("ula200", 0.02, None),
    ] {
        let s = Scenario::preset(preset).unwrap();
        let (_, w1, w2) = s.arrays[0].tapers().unwrap();
        let wc = weighting_function(&w1, &w2).unwrap();
        let m = beam_metrics(&wc.spectrum(&grid)).unwrap();
        passed &= (m.mlw_null_to_null - mlw_target).abs() <= MLW_REL_TOL * mlw_target;
        if let Some(psl) = psl_target {
            passed &= (m.psl_db - psl).abs() <= PSL_TOL_DB;
        }
        parts.push(format!(
            "{preset}: MLW {:.4}, PSL {:.2} dB",
            m.mlw_null_to_null, m.psl_db
        ));
    }
    let (fast_enough, time) = budget(start.elapsed(), METRIC_BUDGET);
    parts.push(time);
    Outcome {
        name: "beampattern metrics",
        passed: passed && fast_enough,
        detail: parts.join("; "),
    }
}

fn coarray_equality() -> Outcome {
    let mut passed = true;
    let mut lags = 0;
    for arr in fig1_arrays() {
        let (w1, w2) = uniform_pair(&arr);
        let wc = weighting_function(&w1, &w2).unwrap();
        let (a, b) = (arr.subarray_a(), arr.subarray_b());
        let first = -(b.extent() as isize - 1);
        let mut counts = vec![0u64; a.extent() + b.extent() - 1];
        for m in a.positions() {
            for n in b.positions() {
                counts[(m as isize - n as isize - first) as usize] += 1;
            }
        }
        passed &= wc.lags().first_lag() == first && wc.lags().len() == counts.len();
        for (i, &c) in counts.iter().enumerate() {
            let v = wc.get(first + i as isize) * wc.nu();
            passed &=
                v.re.round() == c as f64 && (v.re - c as f64).abs() < 1e-9 && v.im.abs() < 1e-9;
            lags += 1;
        }
    }
    Outcome {
        name: "weighting equals coarray",
        passed,
        detail: format!("4 arrays, {lags} lags checked"),
    }
}

fn area() -> Outcome {
    let grid = UGrid::linspace(-1.0, 1.0, AREA_POINTS).unwrap();
    let mut worst = 0.0f64;
    for arr in fig1_arrays() {
        for fam in families() {
            let w1 = make_taper(arr.subarray_a(), &fam).unwrap();
            let w2 = make_taper(arr.subarray_b(), &fam).unwrap();
            let area = weighting_function(&w1, &w2)
                .unwrap()
                .spectrum(&grid)
                .half_integral();
            worst = worst.max((area - 1.0).norm());
        }
    }
    Outcome {
        name: "weighting area",
        passed: worst <= AREA_TOL,
        detail: format!("12 combinations, max |area - 1| {worst:.2e} <= {AREA_TOL:e}"),
    }
}

fn multidim() -> Outcome {
    let mut r = rng(9);
    let mut worst = 0.0f64;
    let upd = |worst: &mut f64, a: Complex64, b: Complex64| {
        *worst = worst.max((a - b).norm() / b.norm().max(1.0))
    };

    for arr in fig1_arrays() {
        for fam in families() {
            let w1 = make_taper(arr.subarray_a(), &fam).unwrap();
            let w2 = make_taper(arr.subarray_b(), &fam).unwrap();
            let (g1, g2) = (
                GridArray3::from_linear(&w1).unwrap(),
                GridArray3::from_linear(&w2).unwrap(),
            );
            let wc = weighting_function(&w1, &w2).unwrap();
            let wc3 = weighting3(&g1, &g2).unwrap();
            for (k, v) in wc.lags().iter() {
                upd(&mut worst, wc3.get([0, 0, k]), v);
            }
            let x1 = Array1::from_shape_fn(w1.extent(), |_| complex_normal(&mut r, 1.0));
            let x2 = Array1::from_shape_fn(w2.extent(), |_| complex_normal(&mut r, 1.0));
            let proc = ProductProcessor::new(&w1, &w2).unwrap();
            let acf = proc.trial_acf(x1.view(), x2.view());
            let as3 =
                |x: &Array1<Complex64>| x.clone().into_shape_with_order((1, 1, x.len())).unwrap();
            let (y1, y2) = (as3(&x1), as3(&x2));
            let acf_3 = acf3(y1.view(), y2.view(), &g1, &g2).unwrap();
            for (k, v) in acf.iter() {
                upd(&mut worst, acf_3.get([0, 0, k]), v);
            }
            for _ in 0..8 {
                let u: f64 = r.random_range(-1.0..1.0);
                let d = DirectionCosine3::new([
                    r.random_range(-1.0..1.0),
                    r.random_range(-1.0..1.0),
                    u,
                ])
                .unwrap();
                upd(
                    &mut worst,
                    ppo3(y1.view(), y2.view(), &g1, &g2, &d).unwrap(),
                    proc.ppo_at(x1.view(), x2.view(), u),
                );
            }
        }
    }
    let degenerate = worst;

    let mut worst_sep = 0.0f64;
    for _ in 0..10 {
        let factors: Vec<(TaperedWeights<f64>, TaperedWeights<f64>)> = (0..3)
            .map(|_| loop {
                let sa = SubarraySpec::uniform(r.random_range(1..=5), 1).unwrap();
                let sb = SubarraySpec::uniform(r.random_range(1..=5), 1).unwrap();
                let (a, b) = (random_taper(&mut r, &sa), random_taper(&mut r, &sb));
                if normalization_nu(&a, &b).is_ok() {
                    break (a, b);
                }
            })
            .collect();
        let g1 = GridArray3::separable(
            factors[0].0.values(),
            factors[1].0.values(),
            factors[2].0.values(),
        )
        .unwrap();
        let g2 = GridArray3::separable(
            factors[0].1.values(),
            factors[1].1.values(),
            factors[2].1.values(),
        )
        .unwrap();
        let wcs: Vec<_> = factors
            .iter()
            .map(|(a, b)| weighting_function(a, b).unwrap())
            .collect();
        for (k, v) in weighting3(&g1, &g2).unwrap().iter() {
            let product = wcs[0].get(k[0]) * wcs[1].get(k[1]) * wcs[2].get(k[2]);
            upd(&mut worst_sep, v, product);
        }
    }

    let cube = GridArray3::<f64>::full_box([2, 2, 2]).unwrap();
    let steps = [-0.75, -0.25, 0.25, 0.75];
    let mut dirs = Vec::new();
    for x in steps {
        for y in steps {
            for z in steps {
                dirs.push(DirectionCosine3::new([x, y, z]).unwrap());
            }
        }
    }
    let report = run_mean_check3(
        "box2",
        &cube,
        &cube,
        1.0,
        MC_TRIALS,
        SEED + 300,
        &dirs,
        MEAN_Z,
    )
    .unwrap();
    let frac = report.mean.iter().filter(|p| p.pass).count() as f64 / report.mean.len() as f64;

    Outcome {
        name: "multidimensional extension",
        passed: degenerate <= DEGENERATE_TOL && worst_sep <= DEGENERATE_TOL && report.passed(),
        detail: format!(
            "degeneration err {degenerate:.1e}, separable err {worst_sep:.1e}, 2x2x2 MC pass fraction {frac:.4} over {} directions",
            dirs.len()
        ),
    }
}

fn preset_scenarios() -> Outcome {
    let fig2 = Scenario::preset("fig2").unwrap();
    let sources: Vec<f64> = fig2.sources.iter().map(|s| s.u).collect();
    let (lo, hi) = sources
        .iter()
        .fold((f64::MAX, f64::MIN), |(l, h), &u| (l.min(u), h.max(u)));
    let sep = hi - lo;
    let (win_lo, win_hi) = (lo - sep, hi + sep);
    let curves = fig2.expected_curves(METRIC_GRID).unwrap();
    let peaks_of = |label: &str| {
        let (_, spec) = curves.iter().find(|(n, _)| n == label).unwrap();
        spec.peaks(win_lo, win_hi, PEAK_PROMINENCE_DB)
    };
    let nested = peaks_of("nested");
    let ula = peaks_of("ula28");
    // Two peaks resolve the pair when each lies on its own source's side.
    let mid = 0.5 * (lo + hi);
    let resolved = nested.len() == 2 && nested[0] < mid && nested[1] > mid;
    let fig2_ok = resolved && ula.len() == 1;

    let bias = |preset: &str| {
        let curves = Scenario::preset(preset)
            .unwrap()
            .expected_curves(METRIC_GRID)
            .unwrap();
        let (_, truth) = curves.iter().find(|(n, _)| n == "true_psd").unwrap();
        let (_, coprime) = curves.iter().find(|(n, _)| n == "coprime80").unwrap();
        let db = |v: Complex64| 10.0 * v.norm().log10();
        let errs: Vec<f64> = coprime
            .u()
            .iter()
            .zip(coprime.values().iter().zip(truth.values()))
            .filter(|(u, _)| u.abs() <= BIAS_BAND)
            .map(|(_, (e, t))| (db(*e) - db(*t)).abs())
            .collect();
        errs.iter().sum::<f64>() / errs.len() as f64
    };
    let (hamming, uniform) = (bias("fig5"), bias("fig3"));

    Outcome {
        name: "preset scenarios",
        passed: fig2_ok && hamming < uniform,
        detail: format!(
            "fig2 peaks nested {nested:.4?} ula28 {ula:.4?}; coprime80 mean |dB err| hamming {hamming:.3} < uniform {uniform:.3}"
        ),
    }
}

fn main() {
    type Check = (&'static str, fn() -> Outcome);
    let checks: [Check; 10] = [
        ("1", fourier_pair),
        ("2", oracle),
        ("3", unbiased),
        ("4", variance_values),
        ("5", averaging),
        ("6", beam),
        ("7", coarray_equality),
        ("8", area),
        ("9", multidim),
        ("10", preset_scenarios),
    ];
    let mut failed = 0;
    for (id, check) in checks {
        let start = Instant::now();
        let o = check();
        let verdict = if o.passed { "PASS" } else { "FAIL" };
        println!(
            "{verdict} [{id:>2}] {}: {} ({:.1} s)",
            o.name,
            o.detail,
            start.elapsed().as_secs_f64()
        );
        failed += usize::from(!o.passed);
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
