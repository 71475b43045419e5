use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ppo_core::estimator::ProductProcessor;
use ppo_core::export;
use ppo_core::scenario::{self, Curve, Scenario};
use ppo_core::signal::SnapshotGenerator;
use ppo_core::tapering::{beam_metrics, weighting_function, TaperFamily};
use ppo_core::theory::ppo_covariance;
use ppo_core::{Complex64, LagSequence, PpoError, UGrid};

const EXIT_USAGE: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;
const EXIT_VERIFY: u8 = 3;

const SIM_CHUNK: usize = 4096;

#[derive(Parser)]
#[command(
    name = "ppo",
    version,
    about = "Tapered product processing for sparse product arrays"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the subarray positions of each array in a scenario.
    Geometry(Common),
    /// Print the taper weights of each subarray.
    Taper(BeamArgs),
    /// W_c(u) of each array, with main-lobe width and peak sidelobe level.
    Beampattern(BeamArgs),
    /// Expected PPO of each array in a scenario.
    Expected(GridArgs),
    /// Closed-form PPO covariance C(Δu) under the scenario's white noise.
    Covariance(GridArgs),
    /// Trial-averaged PPO from simulated snapshots.
    Simulate(SimArgs),
    /// Monte-Carlo checks of the PPO against its closed-form moments.
    Verify(SimArgs),
    /// List the built-in scenarios.
    Presets,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(clap::Args)]
struct Common {
    /// Scenario file (.toml, or a .json geometry document) or preset name.
    #[arg(long)]
    scenario: String,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(clap::Args)]
struct GridArgs {
    #[command(flatten)]
    common: Common,
    /// Number of points of the periodic u-grid.
    #[arg(long, value_parser = clap::value_parser!(u32).range(2..))]
    grid: Option<u32>,
}

#[derive(clap::Args)]
struct BeamArgs {
    #[command(flatten)]
    grid: GridArgs,
    /// Taper family for both subarrays, overriding the scenario.
    #[arg(long)]
    taper: Option<String>,
}

#[derive(clap::Args)]
struct SimArgs {
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

enum Failure {
    Error(PpoError),
    Verification,
}

impl From<PpoError> for Failure {
    fn from(e: PpoError) -> Self {
        Failure::Error(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Error(e.into())
    }
}

type CmdResult = Result<(), Failure>;

fn output(path: &Option<PathBuf>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn csv_only(common: &Common) -> Result<(), PpoError> {
    if common.format == Some(Format::Json) {
        return Err(PpoError::Config("this command writes CSV only".into()));
    }
    Ok(())
}

fn grid_points(args: &GridArgs, scenario: &Scenario) -> usize {
    args.grid.map_or(scenario.grid.points, |g| g as usize)
}

fn load(common: &Common) -> Result<Scenario, PpoError> {
    Scenario::resolve(&common.scenario)
}

fn with_taper(mut s: Scenario, taper: &Option<String>) -> Result<Scenario, PpoError> {
    if let Some(t) = taper {
        t.parse::<TaperFamily<f64>>()?;
        for a in &mut s.arrays {
            a.taper = t.clone();
            a.taper_b = None;
            a.weights_a = None;
            a.weights_b = None;
        }
    }
    Ok(s)
}

fn cmd_geometry(args: &Common) -> CmdResult {
    let s = load(args)?;
    let arrays = s
        .arrays
        .iter()
        .map(|a| a.array())
        .collect::<Result<Vec<_>, _>>()?;
    for arr in &arrays {
        eprintln!(
            "{}: {} sensors ({} + {}, {} shared), extents {} and {}",
            arr.label(),
            arr.sensor_count(),
            arr.subarray_a().sensor_count(),
            arr.subarray_b().sensor_count(),
            arr.shared_count(),
            arr.subarray_a().extent(),
            arr.subarray_b().extent()
        );
    }
    let mut out = output(&args.out)?;
    match args.format.unwrap_or(Format::Json) {
        Format::Json => {
            let docs: Vec<_> = arrays.iter().map(|a| a.to_doc()).collect();
            export::write_json(&mut out, &docs)?;
        }
        Format::Csv => export::write_geometry_csv(&mut out, &arrays)?,
    }
    out.flush()?;
    Ok(())
}

fn cmd_taper(args: &BeamArgs) -> CmdResult {
    let common = &args.grid.common;
    csv_only(common)?;
    let s = with_taper(load(common)?, &args.taper)?;
    let mut tapers = Vec::new();
    for cfg in &s.arrays {
        let (arr, w1, w2) = cfg.tapers()?;
        tapers.push((format!("{}/a", arr.label()), w1));
        tapers.push((format!("{}/b", arr.label()), w2));
    }
    let mut out = output(&common.out)?;
    export::write_tapers_csv(&mut out, &tapers)?;
    out.flush()?;
    Ok(())
}

fn cmd_beampattern(args: &BeamArgs) -> CmdResult {
    let common = &args.grid.common;
    csv_only(common)?;
    let s = with_taper(load(common)?, &args.taper)?;
    let grid = UGrid::periodic(grid_points(&args.grid, &s))?;
    let mut curves: Vec<Curve> = Vec::new();
    for cfg in &s.arrays {
        let (arr, w1, w2) = cfg.tapers()?;
        let (fa, _) = cfg.families()?;
        let wc = weighting_function(&w1, &w2)?;
        curves.push((format!("{}/{}", arr.label(), fa.name()), wc.spectrum(&grid)));
    }
    let mut out = output(&common.out)?;
    export::write_curves_csv(&mut out, &curves)?;
    out.flush()?;
    drop(out);

    let mut first_error = None;
    for (name, spec) in &curves {
        match beam_metrics(spec) {
            Ok(m) => eprintln!(
                "{name}: MLW {:.5}, PSL {:.2} dB{}",
                m.mlw_null_to_null,
                m.psl_db,
                if m.deep_nulls {
                    ""
                } else {
                    " (nulls shallower than 40 dB)"
                }
            ),
            Err(e) => {
                eprintln!("{name}: no beam metrics: {e}");
                first_error.get_or_insert(e);
            }
        }
    }
    match first_error {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

fn cmd_expected(args: &GridArgs) -> CmdResult {
    csv_only(&args.common)?;
    let s = load(&args.common)?;
    let curves = s.expected_curves(grid_points(args, &s))?;
    let mut out = output(&args.common.out)?;
    export::write_curves_csv(&mut out, &curves)?;
    out.flush()?;
    Ok(())
}

fn cmd_covariance(args: &GridArgs) -> CmdResult {
    csv_only(&args.common)?;
    let s = load(&args.common)?;
    let sigma2 = match s.noise {
        scenario::NoiseConfig::White { variance } => variance,
        scenario::NoiseConfig::Colored { .. } => {
            return Err(PpoError::Config("the covariance formula needs white noise".into()).into())
        }
    };
    let grid = UGrid::<f64>::periodic(grid_points(args, &s))?;
    let mut curves = Vec::new();
    for cfg in &s.arrays {
        let (arr, w1, w2) = cfg.tapers()?;
        let curve = ppo_covariance(&w1, &w2, sigma2, grid.points())?;
        eprintln!("{}: C(0) = {}", arr.label(), curve.variance_at_zero);
        curves.push((arr.label().to_string(), curve));
    }
    let mut out = output(&args.common.out)?;
    export::write_covariance_csv(&mut out, &curves)?;
    out.flush()?;
    Ok(())
}

fn cmd_simulate(args: &SimArgs) -> CmdResult {
    let common = &args.grid.common;
    csv_only(common)?;
    let s = load(common)?;
    let trials = args.trials.unwrap_or(s.grid.trials);
    if trials == 0 {
        return Err(PpoError::Config("--trials must be at least 1".into()).into());
    }
    let seed = args.seed.unwrap_or(s.grid.seed);
    let grid = UGrid::periodic(grid_points(&args.grid, &s))?;
    let sources = s.source_specs()?;
    let noise = s.noise_spec()?;
    let mut curves: Vec<Curve> = Vec::new();
    for cfg in &s.arrays {
        let (arr, w1, w2) = cfg.tapers()?;
        let proc = ProductProcessor::new(&w1, &w2)?;
        let generator = SnapshotGenerator::new(&arr, &sources, &noise, seed)?;
        let mut sum = LagSequence::zeros(proc.first_lag(), proc.last_lag());
        let mut first = 0;
        while first < trials {
            let count = SIM_CHUNK.min(trials - first);
            let acf = proc.mean_acf(&generator.batch(first, count))?;
            for (acc, v) in sum.values_mut().iter_mut().zip(acf.lags.values()) {
                *acc += v * count as f64;
            }
            first += count;
        }
        sum.scale(Complex64::new(1.0 / trials as f64, 0.0));
        curves.push((arr.label().to_string(), sum.dtft(&grid)));
    }
    eprintln!("{trials} trials, seed {seed}");
    let mut out = output(&common.out)?;
    export::write_curves_csv(&mut out, &curves)?;
    out.flush()?;
    Ok(())
}

fn cmd_verify(args: &SimArgs) -> CmdResult {
    let common = &args.grid.common;
    let s = load(common)?;
    let report = s.verify(args.trials, args.seed)?;
    eprint!("{}", report.summary_table());
    let mut out = output(&common.out)?;
    match common.format.unwrap_or(Format::Json) {
        Format::Json => export::write_json(&mut out, &report)?,
        Format::Csv => {
            writeln!(out, "check,result,statistic,threshold,detail")?;
            for c in &report.checks {
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    c.name,
                    if c.passed { "pass" } else { "fail" },
                    c.statistic,
                    c.threshold,
                    c.detail
                )?;
            }
        }
    }
    out.flush()?;
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Verification)
    }
}

fn cmd_presets() -> CmdResult {
    let mut out = output(&None)?;
    for name in scenario::preset_names() {
        let s = Scenario::preset(name)?;
        writeln!(out, "{name:<18} {}", s.description.unwrap_or_default())?;
    }
    out.flush()?;
    Ok(())
}

fn exit_code(e: &PpoError) -> u8 {
    match e {
        PpoError::Config(_) | PpoError::Io(_) | PpoError::TooFewTrials { .. } => EXIT_USAGE,
        PpoError::Taper(_) | PpoError::Geometry(_) | PpoError::NotCoprime { .. } => EXIT_USAGE,
        _ => EXIT_NUMERICAL,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Geometry(a) => cmd_geometry(a),
        Command::Taper(a) => cmd_taper(a),
        Command::Beampattern(a) => cmd_beampattern(a),
        Command::Expected(a) => cmd_expected(a),
        Command::Covariance(a) => cmd_covariance(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Presets => cmd_presets(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification) => {
            eprintln!("verification failed");
            ExitCode::from(EXIT_VERIFY)
        }
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
