//! TOML scenario files and the built-in presets.
//!
//! A scenario lists one or more product arrays with their tapers, the
//! plane-wave sources, the noise model, grid/trial/seed settings and an
//! optional `[verify]` table for Monte-Carlo checks:
//!
//! ```toml
//! label = "example"
//!
//! [[arrays]]
//! label = "coprime"
//! geometry = { kind = "coprime", usf_a = 3, usf_b = 2, count_a = 14, count_b = 21 }
//! taper = "hann"
//!
//! [[sources]]
//! u = 0.25
//! power = 1.0
//!
//! [noise]
//! kind = "white"
//! variance = 0.1
//!
//! [grid]
//! points = 4096
//! ```
//!
//! Colored noise is a floor plus Gaussian-shaped bumps given by their 3 dB
//! width: `P(u) = floor + Σ peak·exp(−4 ln2 (u − center)² / bandwidth²)`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geometry::{GeometryDoc, ProductArray};
use crate::montecarlo::{self, McReport, McSetup};
use crate::signal::{AmplitudeModel, NoiseSpec, SourceSpec};
use crate::spectral::{Spectrum, UGrid, DEFAULT_GRID_POINTS};
use crate::tapering::{make_taper, weighting_function, TaperFamily, TaperedWeights};
use crate::theory::{expected_ppo, ppo_covariance_at, scenario_acf, TrueCorrelation};
use crate::{Complex64, PpoError, Result};

/// Built-in scenarios, addressable by name wherever a path is accepted.
pub const PRESETS: &[(&str, &str)] = &[
    ("fig1a", include_str!("../scenarios/fig1a.toml")),
    ("fig1b", include_str!("../scenarios/fig1b.toml")),
    ("fig1c", include_str!("../scenarios/fig1c.toml")),
    ("fig1d", include_str!("../scenarios/fig1d.toml")),
    ("coprime80", include_str!("../scenarios/coprime80.toml")),
    ("ula80", include_str!("../scenarios/ula80.toml")),
    ("ula200", include_str!("../scenarios/ula200.toml")),
    ("fig2", include_str!("../scenarios/fig2.toml")),
    ("fig3", include_str!("../scenarios/fig3.toml")),
    ("fig4", include_str!("../scenarios/fig4.toml")),
    ("fig5", include_str!("../scenarios/fig5.toml")),
    ("white-ula28", include_str!("../scenarios/white-ula28.toml")),
    (
        "coprime-variance",
        include_str!("../scenarios/coprime-variance.toml"),
    ),
    (
        "wrong-sigma2",
        include_str!("../scenarios/wrong-sigma2.toml"),
    ),
];

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GeometryConfig {
    Coprime {
        usf_a: usize,
        usf_b: usize,
        count_a: usize,
        count_b: usize,
    },
    Nested {
        count_dense: usize,
        count_sparse: usize,
        usf_sparse: usize,
    },
    Ula {
        count: usize,
    },
    Nula {
        positions: Vec<usize>,
    },
    /// Arbitrary subarrays given by their occupied indices.
    Explicit {
        positions_a: Vec<usize>,
        positions_b: Vec<usize>,
    },
    /// Identical subarrays on the union of the coprime array's positions.
    #[serde(rename = "coprime_union")]
    CoprimeUnion {
        usf_a: usize,
        usf_b: usize,
        count_a: usize,
        count_b: usize,
    },
}

impl GeometryConfig {
    pub fn build(&self) -> Result<ProductArray> {
        match self {
            Self::Coprime {
                usf_a,
                usf_b,
                count_a,
                count_b,
            } => ProductArray::coprime(*usf_a, *usf_b, *count_a, *count_b),
            Self::Nested {
                count_dense,
                count_sparse,
                usf_sparse,
            } => ProductArray::nested(*count_dense, *count_sparse, *usf_sparse),
            Self::Ula { count } => ProductArray::ula(*count),
            Self::Nula { positions } => ProductArray::nula(positions),
            Self::Explicit {
                positions_a,
                positions_b,
            } => {
                let extent = |p: &[usize]| p.iter().max().map_or(0, |m| m + 1);
                ProductArray::from_doc(&GeometryDoc {
                    label: "explicit".into(),
                    extent_a: extent(positions_a),
                    extent_b: extent(positions_b),
                    positions_a: positions_a.clone(),
                    positions_b: positions_b.clone(),
                })
            }
            Self::CoprimeUnion {
                usf_a,
                usf_b,
                count_a,
                count_b,
            } => {
                let cp = ProductArray::coprime(*usf_a, *usf_b, *count_a, *count_b)?;
                ProductArray::nula(&cp.distinct_positions())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayConfig {
    #[serde(default)]
    pub label: Option<String>,
    pub geometry: GeometryConfig,
    /// Taper family for both subarrays unless `taper_b` is given.
    #[serde(default = "default_taper")]
    pub taper: String,
    #[serde(default)]
    pub taper_b: Option<String>,
    /// Explicit complex weights `[re, im]` per grid index, overriding `taper`.
    #[serde(default)]
    pub weights_a: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub weights_b: Option<Vec<[f64; 2]>>,
}

fn default_taper() -> String {
    "uniform".into()
}

fn family(name: &str, custom: &Option<Vec<[f64; 2]>>) -> Result<TaperFamily<f64>> {
    match custom {
        Some(w) => Ok(TaperFamily::Custom(
            w.iter().map(|[re, im]| Complex64::new(*re, *im)).collect(),
        )),
        None => name.parse(),
    }
}

impl ArrayConfig {
    pub fn array(&self) -> Result<ProductArray> {
        let arr = self.geometry.build()?;
        Ok(match &self.label {
            Some(l) => arr.with_label(l.clone()),
            None => arr,
        })
    }

    pub fn families(&self) -> Result<(TaperFamily<f64>, TaperFamily<f64>)> {
        let a = family(&self.taper, &self.weights_a)?;
        let b = family(
            self.taper_b.as_deref().unwrap_or(&self.taper),
            &self.weights_b,
        )?;
        Ok((a, b))
    }

    pub fn tapers(&self) -> Result<(ProductArray, TaperedWeights<f64>, TaperedWeights<f64>)> {
        let arr = self.array()?;
        let (fa, fb) = self.families()?;
        let w1 = make_taper(arr.subarray_a(), &fa)?;
        let w2 = make_taper(arr.subarray_b(), &fb)?;
        Ok((arr, w1, w2))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceConfig {
    pub u: f64,
    pub power: f64,
    #[serde(default)]
    pub amplitude: AmplitudeModel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BumpConfig {
    pub center: f64,
    /// Full width at half maximum (3 dB) in `u`.
    pub bandwidth: f64,
    pub peak: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NoiseConfig {
    White {
        variance: f64,
    },
    Colored {
        floor: f64,
        #[serde(default)]
        bumps: Vec<BumpConfig>,
        #[serde(default = "default_points")]
        psd_points: usize,
    },
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self::White { variance: 1.0 }
    }
}

fn default_points() -> usize {
    DEFAULT_GRID_POINTS
}

fn default_trials() -> usize {
    100_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            points: default_points(),
            trials: default_trials(),
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckKind {
    Mean,
    Covariance,
    Averaging,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    #[serde(default = "default_checks")]
    pub checks: Vec<CheckKind>,
    #[serde(default = "default_z_mean")]
    pub z_mean: f64,
    #[serde(default = "default_z_cov")]
    pub z_cov: f64,
    /// Grid size of the mean check.
    #[serde(default = "default_mean_points")]
    pub mean_points: usize,
    #[serde(default = "default_pairs")]
    pub u_pairs: Vec<[f64; 2]>,
    #[serde(default = "default_k_list")]
    pub k_list: Vec<usize>,
    #[serde(default = "default_averaging_u")]
    pub averaging_u: Vec<f64>,
    /// `K`-averages per `K` in the averaging check.
    #[serde(default = "default_blocks")]
    pub averaging_blocks: usize,
    /// Noise variance assumed by the theory when it should differ from the
    /// simulated one (a deliberately wrong model).
    #[serde(default)]
    pub theory_sigma2: Option<f64>,
}

fn default_checks() -> Vec<CheckKind> {
    vec![CheckKind::Mean]
}
fn default_z_mean() -> f64 {
    4.0
}
fn default_z_cov() -> f64 {
    5.0
}
fn default_mean_points() -> usize {
    256
}
fn default_pairs() -> Vec<[f64; 2]> {
    vec![[0.0, 0.0]]
}
fn default_k_list() -> Vec<usize> {
    vec![1, 4, 16, 64]
}
fn default_averaging_u() -> Vec<f64> {
    vec![0.0]
}
fn default_blocks() -> usize {
    20_000
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            checks: default_checks(),
            z_mean: default_z_mean(),
            z_cov: default_z_cov(),
            mean_points: default_mean_points(),
            u_pairs: default_pairs(),
            k_list: default_k_list(),
            averaging_u: default_averaging_u(),
            averaging_blocks: default_blocks(),
            theory_sigma2: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub label: String,
    #[serde(default)]
    pub description: Option<String>,
    pub arrays: Vec<ArrayConfig>,
    #[serde(default)]
    pub sources: Vec<SourceConfig>,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub verify: Option<VerifyConfig>,
}

/// A named expected-PPO or reference curve.
pub type Curve = (String, Spectrum<f64>);

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Self = toml::from_str(text).map_err(|e| PpoError::Config(e.to_string()))?;
        if s.arrays.is_empty() {
            return Err(PpoError::Config("scenario lists no arrays".into()));
        }
        Ok(s)
    }

    pub fn preset(name: &str) -> Result<Self> {
        let text = PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| *t)
            .ok_or_else(|| {
                PpoError::Config(format!(
                    "unknown preset '{name}' (available: {})",
                    preset_names().collect::<Vec<_>>().join(", ")
                ))
            })?;
        Self::from_toml(text)
    }

    /// A geometry document as a one-array scenario with uniform tapers.
    pub fn from_geometry_doc(doc: &GeometryDoc) -> Result<Self> {
        // Validate extents and positions before accepting the document.
        ProductArray::from_doc(doc)?;
        Ok(Self {
            label: doc.label.clone(),
            description: None,
            arrays: vec![ArrayConfig {
                label: Some(doc.label.clone()),
                geometry: GeometryConfig::Explicit {
                    positions_a: doc.positions_a.clone(),
                    positions_b: doc.positions_b.clone(),
                },
                taper: default_taper(),
                taper_b: None,
                weights_a: None,
                weights_b: None,
            }],
            sources: Vec::new(),
            noise: NoiseConfig::default(),
            grid: GridConfig::default(),
            verify: None,
        })
    }

    /// A file path if one exists, otherwise a preset name. Files ending in
    /// `.json` are read as a single geometry document, anything else as TOML.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        let path = Path::new(name_or_path);
        if path.is_file() {
            let text = std::fs::read_to_string(path)?;
            if path.extension().is_some_and(|e| e == "json") {
                let doc: GeometryDoc =
                    serde_json::from_str(&text).map_err(|e| PpoError::Config(e.to_string()))?;
                Self::from_geometry_doc(&doc)
            } else {
                Self::from_toml(&text)
            }
        } else if name_or_path.ends_with(".toml") || name_or_path.ends_with(".json") {
            Err(PpoError::Config(format!(
                "scenario file '{name_or_path}' not found"
            )))
        } else {
            Self::preset(name_or_path)
        }
    }

    pub fn source_specs(&self) -> Result<Vec<SourceSpec<f64>>> {
        self.sources
            .iter()
            .map(|s| SourceSpec::new(s.u, s.power, s.amplitude))
            .collect()
    }

    /// The true PSD of the colored background on a periodic grid, if any.
    pub fn colored_psd(&self) -> Result<Option<Spectrum<f64>>> {
        match &self.noise {
            NoiseConfig::White { .. } => Ok(None),
            NoiseConfig::Colored {
                floor,
                bumps,
                psd_points,
            } => {
                let grid = UGrid::periodic(*psd_points)?;
                Ok(Some(Spectrum::from_fn(grid, |u| {
                    bump_psd(*floor, bumps, u)
                })))
            }
        }
    }

    pub fn noise_spec(&self) -> Result<NoiseSpec<f64>> {
        match &self.noise {
            NoiseConfig::White { variance } => NoiseSpec::white(*variance),
            NoiseConfig::Colored { .. } => {
                NoiseSpec::colored(self.colored_psd()?.expect("colored noise has a PSD"))
            }
        }
    }

    fn white_variance(&self) -> Option<f64> {
        match self.noise {
            NoiseConfig::White { variance } => Some(variance),
            NoiseConfig::Colored { .. } => None,
        }
    }

    /// `E{P̂(u)}` for every array on a periodic grid of `points`, plus a
    /// `true_psd` curve for colored backgrounds.
    pub fn expected_curves(&self, points: usize) -> Result<Vec<Curve>> {
        let grid = UGrid::periodic(points)?;
        let sources = self.source_specs()?;
        let noise = self.noise_spec()?;
        let mut curves = Vec::with_capacity(self.arrays.len() + 1);
        if let NoiseConfig::Colored { floor, bumps, .. } = &self.noise {
            curves.push((
                "true_psd".to_string(),
                Spectrum::from_fn(grid.clone(), |u| bump_psd(*floor, bumps, u)),
            ));
        }
        for cfg in &self.arrays {
            let (arr, w1, w2) = cfg.tapers()?;
            let wc = weighting_function(&w1, &w2)?;
            if let NoiseSpec::Colored { psd } = &noise {
                let required = 4 * wc.lags().len();
                if psd.len() < required {
                    return Err(PpoError::GridTooCoarse {
                        points: psd.len(),
                        required,
                    });
                }
            }
            let reach = arr.span().saturating_sub(1);
            let truth = TrueCorrelation::Acf(scenario_acf(&sources, &noise, reach));
            curves.push((arr.label().to_string(), expected_ppo(&truth, &wc, &grid)?));
        }
        Ok(curves)
    }

    pub fn mc_setups(&self, trials: usize, seed: u64) -> Result<Vec<McSetup<f64>>> {
        let sources = self.source_specs()?;
        let noise = self.noise_spec()?;
        self.arrays
            .iter()
            .map(|cfg| {
                let (array, w1, w2) = cfg.tapers()?;
                let (fa, fb) = cfg.families()?;
                let tag = if fa.name() == fb.name() {
                    fa.name().to_string()
                } else {
                    format!("{}+{}", fa.name(), fb.name())
                };
                Ok(McSetup {
                    label: format!("{}/{}", array.label(), tag),
                    array,
                    w1,
                    w2,
                    sources: sources.clone(),
                    noise: noise.clone(),
                    trials,
                    seed,
                })
            })
            .collect()
    }

    /// Runs the `[verify]` checks for every array.
    ///
    /// `trials` and `seed` override the `[grid]` values when given.
    pub fn verify(&self, trials: Option<usize>, seed: Option<u64>) -> Result<McReport> {
        let cfg = self.verify.clone().unwrap_or_default();
        let trials = trials.unwrap_or(self.grid.trials);
        let seed = seed.unwrap_or(self.grid.seed);
        let mut report = McReport {
            scenario: self.label.clone(),
            trials,
            seed,
            ..McReport::default()
        };
        let theory_sigma2 = cfg.theory_sigma2;
        for setup in self.mc_setups(trials, seed)? {
            for check in &cfg.checks {
                let part = match check {
                    CheckKind::Mean => {
                        let grid = UGrid::periodic(cfg.mean_points)?;
                        let mut model = setup.clone();
                        if let Some(s2) = theory_sigma2 {
                            model.noise = NoiseSpec::white(s2)?;
                        }
                        let theory = montecarlo::expected_for(&model, &grid)?;
                        montecarlo::run_mean_check_against(&setup, &theory, cfg.z_mean)?
                    }
                    CheckKind::Covariance => {
                        let simulated = self.white_variance().ok_or_else(|| {
                            PpoError::Config("covariance check needs white noise".into())
                        })?;
                        let s2 = theory_sigma2.unwrap_or(simulated);
                        let pairs: Vec<(f64, f64)> =
                            cfg.u_pairs.iter().map(|p| (p[0], p[1])).collect();
                        montecarlo::run_cov_check_against(&setup, &pairs, cfg.z_cov, |du| {
                            ppo_covariance_at(&setup.w1, &setup.w2, s2, du)
                        })?
                    }
                    CheckKind::Averaging => {
                        let mut blocks = setup.clone();
                        blocks.trials = cfg.averaging_blocks;
                        montecarlo::run_averaging_check(
                            &blocks,
                            &cfg.k_list,
                            &cfg.averaging_u,
                            cfg.z_cov,
                        )?
                    }
                };
                report.merge(part);
            }
        }
        Ok(report)
    }
}

/// `floor + Σ peak·exp(−4 ln2 (u − center)² / bandwidth²)`, with the
/// distance taken modulo 2 so the PSD is periodic in `u`.
pub fn bump_psd(floor: f64, bumps: &[BumpConfig], u: f64) -> f64 {
    bumps.iter().fold(floor, |acc, b| {
        let d = (u - b.center + 1.0).rem_euclid(2.0) - 1.0;
        acc + b.peak * (-4.0 * std::f64::consts::LN_2 * d * d / (b.bandwidth * b.bandwidth)).exp()
    })
}
