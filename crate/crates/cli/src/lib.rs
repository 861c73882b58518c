//! `mcrelay` experiment runner.
//!
//! Every subcommand resolves a configuration (file, then flag overrides),
//! computes all results in memory, then writes its CSVs and a
//! `manifest.toml` into the output directory in one pass.

pub mod config;
pub mod output;
pub mod plot;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use mcrelay_core::calibration::calibrate;
use mcrelay_core::relay::{relay_location_sweep, RelayScheme, RelaySweep};
use mcrelay_core::{simulate_link, SerCurve, SerPoint};
use rayon::prelude::*;

use crate::config::{ConfigError, ExperimentConfig};

/// Reference SER at which compare-schemes reports required SNR.
pub const TARGET_SER: f64 = 1e-2;

#[derive(Debug, Parser)]
#[command(name = "mcrelay", version, about = "Molecular communication relay simulator")]
pub struct Cli {
    /// TOML configuration; unset keys take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Symbols per simulated point.
    #[arg(long, global = true)]
    pub symbols: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Default)]
pub struct SnrArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub snr_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub snr_max: Option<f64>,
    #[arg(long)]
    pub snr_step: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    #[value(name = "af")]
    Af,
}

impl SchemeArg {
    fn scheme(self) -> RelayScheme {
        match self {
            SchemeArg::One => RelayScheme::Scheme1,
            SchemeArg::Two => RelayScheme::Scheme2,
            SchemeArg::Af => RelayScheme::AmplifyForward,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Noiseless thresholds per distance.
    CalibrateThresholds {
        /// Distances in µm (comma separated).
        #[arg(long = "distance", value_delimiter = ',')]
        distances: Option<Vec<f64>>,
    },
    /// SER against base concentration, noiseless and over an SNR grid.
    SweepConcentration {
        #[arg(long, allow_hyphen_values = true)]
        distance: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        concentrations: Option<Vec<u64>>,
        #[command(flatten)]
        snr: SnrArgs,
    },
    /// SER of one link.
    SimulateLink {
        #[arg(long, allow_hyphen_values = true)]
        distance: Option<f64>,
        /// Omit for a noiseless channel.
        #[arg(long, allow_hyphen_values = true)]
        snr: Option<f64>,
    },
    /// SER per relay location over an SNR grid.
    RelaySweep {
        #[arg(long, value_enum)]
        scheme: SchemeArg,
        #[arg(long, value_delimiter = ',')]
        locations: Option<Vec<f64>>,
        #[command(flatten)]
        snr: SnrArgs,
    },
    /// Direct link against both relaying schemes and the AF baseline.
    CompareSchemes {
        #[command(flatten)]
        snr: SnrArgs,
    },
    /// SVG from a curve CSV.
    Plot {
        #[arg(long)]
        input: PathBuf,
        /// Defaults to `<out>/<input stem>.svg`.
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, default_value = "SNR (dB)")]
        x_label: String,
        #[arg(long, default_value = "")]
        title: String,
    },
}

#[derive(Debug)]
pub enum CliError {
    Config(Vec<ConfigError>),
    /// Unusable input file (exit code 2).
    Input(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Input(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(errs) => {
                writeln!(f, "invalid configuration:")?;
                for e in errs {
                    writeln!(f, "  {e}")?;
                }
                Ok(())
            }
            CliError::Input(m) => write!(f, "{m}"),
            CliError::Runtime(m) => write!(f, "simulation failed: {m}"),
        }
    }
}

impl From<mcrelay_core::Error> for CliError {
    fn from(e: mcrelay_core::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

/// What a run wrote and reported.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub files: Vec<PathBuf>,
    pub results: toml::Table,
}

fn apply_snr(grid: (&mut f64, &mut f64, &mut f64), args: &SnrArgs) {
    if let Some(v) = args.snr_min {
        *grid.0 = v;
    }
    if let Some(v) = args.snr_max {
        *grid.1 = v;
    }
    if let Some(v) = args.snr_step {
        *grid.2 = v;
    }
}

/// Configuration after the file and every flag override.
pub fn resolve_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut c = match &cli.config {
        Some(p) => ExperimentConfig::load(p).map_err(|e| CliError::Config(vec![e]))?,
        None => ExperimentConfig::default(),
    };
    c.manifest = None;
    if let Some(s) = cli.seed {
        c.seed = s;
    }
    if let Some(n) = cli.symbols {
        c.link.n_symbols = n;
    }
    match &cli.command {
        Command::CalibrateThresholds { distances } => {
            if let Some(d) = distances {
                c.calibration.distances = d.clone();
            }
        }
        Command::SweepConcentration {
            distance,
            concentrations,
            snr,
        } => {
            if let Some(d) = distance {
                c.concentration.distance = *d;
            }
            if let Some(n) = concentrations {
                c.concentration.candidates = n.clone();
            }
            let k = &mut c.concentration;
            apply_snr((&mut k.snr_min, &mut k.snr_max, &mut k.snr_step), snr);
        }
        Command::SimulateLink { distance, snr } => {
            if let Some(d) = distance {
                c.link.distance = *d;
            }
            if snr.is_some() {
                c.link.snr_db = *snr;
            }
        }
        Command::RelaySweep {
            scheme, locations, snr, ..
        } => {
            if let Some(l) = locations {
                match scheme {
                    SchemeArg::One => c.relay.scheme1_locations = l.clone(),
                    SchemeArg::Two => c.relay.scheme2_locations = l.clone(),
                    SchemeArg::Af => match l.as_slice() {
                        [x] => c.relay.af_location = *x,
                        _ => {
                            return Err(CliError::Config(vec![ConfigError::new(
                                "--locations",
                                "the AF sweep takes exactly one location",
                            )]))
                        }
                    },
                }
            }
            let r = &mut c.relay;
            apply_snr((&mut r.snr_min, &mut r.snr_max, &mut r.snr_step), snr);
        }
        Command::CompareSchemes { snr } => {
            let r = &mut c.relay;
            apply_snr((&mut r.snr_min, &mut r.snr_max, &mut r.snr_step), snr);
        }
        Command::Plot { .. } => {}
    }
    c.validate().map_err(CliError::Config)?;
    Ok(c)
}

/// Parses, runs and maps the outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(report) => {
            for f in &report.files {
                println!("wrote {}", f.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<RunReport, CliError> {
    if let Command::Plot {
        input,
        output,
        x_label,
        title,
    } = &cli.command
    {
        return run_plot(input, output.as_deref(), &cli.out, x_label, title);
    }
    let config = resolve_config(cli)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(CliError::Config(vec![ConfigError::new("--workers", "must be at least 1")]));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Runtime(e.to_string()))?;
    let (name, files, results) = pool.install(|| execute(&cli.command, &config))?;
    let mut all = files;
    let outputs: Vec<String> = all.iter().map(|(n, _)| n.clone()).collect();
    all.push(("manifest.toml".into(), output::manifest_toml(&config, name, &outputs, results.clone())));
    let written = output::write_all_atomic(&cli.out, &all)
        .map_err(|e| CliError::Runtime(format!("writing {}: {e}", cli.out.display())))?;
    Ok(RunReport {
        files: written,
        results,
    })
}

type Outcome = (&'static str, Vec<(String, String)>, toml::Table);

fn execute(command: &Command, c: &ExperimentConfig) -> Result<Outcome, CliError> {
    match command {
        Command::CalibrateThresholds { .. } => calibrate_thresholds(c),
        Command::SweepConcentration { .. } => sweep_concentration(c),
        Command::SimulateLink { .. } => simulate_one_link(c),
        Command::RelaySweep { scheme, .. } => relay_sweep(c, scheme.scheme()),
        Command::CompareSchemes { .. } => compare_schemes(c),
        Command::Plot { .. } => unreachable!("handled before configuration"),
    }
}

fn floats(v: &[f64]) -> toml::Value {
    toml::Value::Array(v.iter().map(|&x| x.into()).collect())
}

fn calibrate_thresholds(c: &ExperimentConfig) -> Result<Outcome, CliError> {
    let opts = c.calibration_options();
    let rows = c
        .calibration
        .distances
        .par_iter()
        .map(|&d| {
            let t = calibrate(&c.hop_setup(d, None)?, &opts)?;
            Ok((d, c.link.concentration, t.thresholds))
        })
        .collect::<mcrelay_core::Result<Vec<_>>>()?;
    let mut results = toml::Table::new();
    results.insert("rows".into(), (rows.len() as i64).into());
    Ok((
        "calibrate-thresholds",
        vec![("thresholds.csv".into(), output::thresholds_csv(&rows))],
        results,
    ))
}

fn sweep_concentration(c: &ExperimentConfig) -> Result<Outcome, CliError> {
    let mut candidates = c.concentration.candidates.clone();
    candidates.sort_unstable();
    candidates.dedup();
    let d = c.concentration.distance;
    let opts = c.calibration_options();
    let calibrated = candidates
        .par_iter()
        .map(|&n| {
            let mut setup = c.hop_setup(d, None)?;
            setup.scheme = setup.scheme.with_concentration(n);
            let t = calibrate(&setup, &opts)?.thresholds;
            Ok((setup, t))
        })
        .collect::<mcrelay_core::Result<Vec<_>>>()?;
    let snrs: Vec<Option<f64>> = std::iter::once(None)
        .chain(c.concentration.snr().values().into_iter().map(Some))
        .collect();
    let jobs: Vec<(usize, usize)> = (0..candidates.len())
        .flat_map(|k| (0..snrs.len()).map(move |s| (k, s)))
        .collect();
    let estimates = jobs
        .par_iter()
        .map(|&(k, s)| {
            let (setup, t) = &calibrated[k];
            let cfg = mcrelay_core::HopSetup {
                snr_db: snrs[s],
                ..setup.clone()
            }
            .link(*t, c.link.n_symbols);
            simulate_link(&cfg)
        })
        .collect::<mcrelay_core::Result<Vec<_>>>()?;
    let est = |k: usize, s: usize| &estimates[k * snrs.len() + s];

    let noiseless = SerCurve::new(
        "concentration",
        "molecules",
        "noiseless",
        (0..candidates.len())
            .map(|k| SerPoint::from_estimate(candidates[k] as f64, est(k, 0)))
            .collect(),
    );
    let noisy: Vec<SerCurve> = (0..candidates.len())
        .map(|k| {
            SerCurve::new(
                "snr",
                "dB",
                format!("N={}", candidates[k]),
                (1..snrs.len())
                    .map(|s| SerPoint::from_estimate(snrs[s].unwrap(), est(k, s)))
                    .collect(),
            )
        })
        .collect();
    // ties go to the smaller concentration
    let argmin = |s: usize| {
        (0..candidates.len())
            .min_by(|&a, &b| est(a, s).errors.cmp(&est(b, s).errors).then(a.cmp(&b)))
            .map(|k| candidates[k] as i64)
            .unwrap()
    };
    let mut results = toml::Table::new();
    results.insert("distance".into(), d.into());
    results.insert("best_noiseless".into(), argmin(0).into());
    results.insert("snr_grid".into(), floats(&c.concentration.snr().values()));
    results.insert(
        "best_per_snr".into(),
        toml::Value::Array((1..snrs.len()).map(|s| argmin(s).into()).collect()),
    );
    let thresholds: Vec<_> = candidates
        .iter()
        .zip(&calibrated)
        .map(|(&n, (_, t))| (d, n, *t))
        .collect();
    Ok((
        "sweep-concentration",
        vec![
            ("concentration_noiseless.csv".into(), output::curves_csv(&[noiseless])),
            ("concentration_snr.csv".into(), output::curves_csv(&noisy)),
            ("concentration_thresholds.csv".into(), output::thresholds_csv(&thresholds)),
        ],
        results,
    ))
}

fn direct_link_curve(c: &ExperimentConfig, snrs: &[f64]) -> Result<(SerCurve, mcrelay_core::Thresholds), CliError> {
    let setup = c.hop_setup(c.link.distance, None)?;
    let t = calibrate(&setup, &c.calibration_options())?.thresholds;
    let points = snrs
        .par_iter()
        .map(|&snr| {
            let cfg = mcrelay_core::HopSetup {
                snr_db: Some(snr),
                ..setup.clone()
            }
            .link(t, c.link.n_symbols);
            Ok(SerPoint::from_estimate(snr, &simulate_link(&cfg)?))
        })
        .collect::<mcrelay_core::Result<Vec<_>>>()?;
    Ok((SerCurve::new("snr", "dB", "direct", points), t))
}

fn simulate_one_link(c: &ExperimentConfig) -> Result<Outcome, CliError> {
    let setup = c.hop_setup(c.link.distance, c.link.snr_db)?;
    let t = calibrate(&setup, &c.calibration_options())?.thresholds;
    let est = simulate_link(&setup.link(t, c.link.n_symbols))?;
    let curve = SerCurve::new("distance", "um", "link", vec![SerPoint::from_estimate(c.link.distance, &est)]);
    let mut results = toml::Table::new();
    results.insert("ser".into(), est.ser().into());
    results.insert("errors".into(), (est.errors as i64).into());
    results.insert("trials".into(), (est.trials as i64).into());
    results.insert("thresholds".into(), floats(t.as_slice()));
    Ok((
        "simulate-link",
        vec![
            ("link.csv".into(), output::curves_csv(&[curve])),
            (
                "link_thresholds.csv".into(),
                output::thresholds_csv(&[(c.link.distance, c.link.concentration, t)]),
            ),
        ],
        results,
    ))
}

fn sweep_for(c: &ExperimentConfig, scheme: RelayScheme) -> Result<RelaySweep, CliError> {
    let locations = match scheme {
        RelayScheme::Scheme1 => c.relay.scheme1_locations.clone(),
        RelayScheme::Scheme2 => c.relay.scheme2_locations.clone(),
        RelayScheme::AmplifyForward => vec![c.relay.af_location],
    };
    Ok(relay_location_sweep(scheme, &locations, &c.relay.snr().values(), &c.relay_base())?)
}

fn relay_sweep(c: &ExperimentConfig, scheme: RelayScheme) -> Result<Outcome, CliError> {
    let sweep = sweep_for(c, scheme)?;
    let curves: Vec<SerCurve> = sweep.locations.iter().map(|l| l.curve.clone()).collect();
    let mut results = toml::Table::new();
    results.insert("scheme".into(), scheme.name().into());
    results.insert("optimum_location".into(), sweep.best_overall.into());
    results.insert("snr_grid".into(), floats(&sweep.snr_grid));
    results.insert("best_per_snr".into(), floats(&sweep.best_per_snr));
    Ok((
        "relay-sweep",
        vec![(format!("relay_{}.csv", scheme.name()), output::curves_csv(&curves))],
        results,
    ))
}

fn compare_schemes(c: &ExperimentConfig) -> Result<Outcome, CliError> {
    let snrs = c.relay.snr().values();
    let (direct, _) = direct_link_curve(c, &snrs)?;
    let mut curves = vec![direct];
    let mut results = toml::Table::new();
    for scheme in [RelayScheme::Scheme1, RelayScheme::Scheme2, RelayScheme::AmplifyForward] {
        let sweep = sweep_for(c, scheme)?;
        let best = sweep
            .locations
            .iter()
            .find(|l| l.location == sweep.best_overall)
            .expect("argmin is a swept location");
        let mut curve = best.curve.clone();
        curve.series = scheme.name().into();
        results.insert(format!("{}_location", scheme.name()), best.location.into());
        curves.push(curve);
    }
    results.insert("target_ser".into(), TARGET_SER.into());
    for curve in &curves {
        let key = format!("{}_snr_at_target", curve.series);
        match curve.x_at_ser(TARGET_SER) {
            Some(x) => results.insert(key, x.into()),
            None => results.insert(key, "unreached".into()),
        };
    }
    Ok((
        "compare-schemes",
        vec![("compare.csv".into(), output::curves_csv(&curves))],
        results,
    ))
}

fn run_plot(input: &Path, output: Option<&Path>, out_dir: &Path, x_label: &str, title: &str) -> Result<RunReport, CliError> {
    let text = std::fs::read_to_string(input)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", input.display())))?;
    let rows = output::parse_curves_csv(&text).map_err(|e| CliError::Input(format!("{}: {e}", input.display())))?;
    let svg = plot::render_svg(&rows, x_label, title);
    let target = match output {
        Some(p) => p.to_path_buf(),
        None => {
            let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("plot");
            out_dir.join(format!("{stem}.svg"))
        }
    };
    let dir = target.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = target
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| CliError::Input(format!("bad output path {}", target.display())))?;
    let files = output::write_all_atomic(dir, &[(name.to_string(), svg)])
        .map_err(|e| CliError::Runtime(format!("writing {}: {e}", target.display())))?;
    Ok(RunReport {
        files,
        results: toml::Table::new(),
    })
}
