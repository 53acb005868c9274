//! Command-line front end.
//!
//! Every run that writes to `--out` also writes `<out>.manifest.json`, which
//! embeds the resolved configuration; `miscat rerun` replays it.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::field::{validate_energy, EstimationTarget, FieldConfig};
use crate::fisher::{fisher_report, relative_mass_bound, FisherReport};
use crate::photonstats::{crb_validation, CrbValidationReport};
use crate::snr::{write_snr_csv, SnrRow, SnrSweep};
use crate::spectrum::{
    qfi_multifrequency, qfi_multifrequency_phase_averaged, relative_mass_bound_multifrequency,
    scattered_photons, SpectralField, SpectralRow,
};
use crate::tuner::{self, saturating_reference_set, scan_ratio_grid, SaturationSolution, ScanHeader, ScanRequest};

pub const EXIT_OK: u8 = 0;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_NOT_ESTIMABLE: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "miscat", version, about = "Photon-counting bounds for interferometric scattering")]
pub struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Input file (JSON configuration, or spectrum CSV/JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = parse_target)]
    pub target: Option<EstimationTarget>,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fisher information and bounds for one configuration.
    Fisher(Common),
    /// Saturation-ratio grid over configuration parameters.
    Scan {
        #[command(flatten)]
        common: Common,
        /// fig2a, fig2b, fig2c, fig2d, fig3a or fig3b.
        #[arg(long)]
        preset: Option<String>,
    },
    /// Reference-arm settings that saturate the quantum bound.
    Optimize(Common),
    /// Signal-to-noise sweeps.
    Snr {
        #[command(flatten)]
        common: Common,
        /// figsnr1 or figsnr2.
        #[arg(long)]
        preset: Option<String>,
    },
    /// Monte Carlo check of the Cramér-Rao bound.
    Montecarlo {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Per-trial CSV output.
        #[arg(long)]
        trials_out: Option<PathBuf>,
    },
    /// Multi-frequency bounds from a spectrum file.
    Spectrum(Common),
    /// Replays a run from its manifest.
    Rerun {
        #[arg(long)]
        manifest: PathBuf,
        /// Write here instead of the recorded output path.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        trials_out: Option<PathBuf>,
    },
}

fn parse_target(s: &str) -> std::result::Result<EstimationTarget, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// A fully resolved computation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "subcommand", rename_all = "lowercase")]
pub enum Job {
    Fisher {
        config: FieldConfig,
        target: EstimationTarget,
    },
    Scan {
        request: ScanRequest,
        format: Format,
    },
    Optimize {
        config: FieldConfig,
        target: EstimationTarget,
    },
    Snr {
        sweep: SnrSweep,
        format: Format,
    },
    Montecarlo {
        config: FieldConfig,
        target: EstimationTarget,
        trials: usize,
        samples: usize,
        seed: u64,
    },
    Spectrum {
        spectrum: Vec<SpectralRow>,
        target: EstimationTarget,
    },
}

/// Record written next to every output file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub timestamp_unix: u64,
    pub args: Vec<String>,
    pub job: Job,
    pub outputs: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<Value>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FisherOutput {
    #[serde(flatten)]
    pub report: FisherReport,
    /// `1/√𝓕`, single shot.
    pub qcrb: f64,
    /// `1/√F` of photon counting, absent when `F = 0`.
    pub crb_photon_counting: Option<f64>,
    pub scattered_photons: f64,
    /// `δm/m` at the photon-counting efficiency (mass target only).
    pub relative_mass_bound: Option<f64>,
    pub relative_mass_bound_quantum: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimizeOutput {
    #[serde(flatten)]
    pub solution: SaturationSolution,
    /// Saturating phases at the configured reference magnitude.
    pub reference_mag: Option<f64>,
    pub phases_at_reference_mag: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumOutput {
    pub target: EstimationTarget,
    pub points: usize,
    pub scattered_photons: f64,
    pub qfi_coherent: f64,
    pub qfi_phase_averaged: f64,
    pub cfi_photon_number: f64,
    pub saturation_ratio: Option<f64>,
    pub qcrb: Option<f64>,
    /// `(δm/m)·√n̄`, normalised by the scattered photon number (mass only).
    pub relative_mass_bound: Option<f64>,
}

#[derive(Serialize)]
struct ScanJson<'a> {
    header: ScanHeader<'a>,
    x_values: &'a [f64],
    y_values: &'a [f64],
    values: &'a [Vec<Option<f64>>],
}

#[derive(Serialize)]
struct SnrJson<'a> {
    sweep: &'a SnrSweep,
    rows: &'a [SnrRow],
}

/// Rendered outputs of a job.
#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub primary: Vec<u8>,
    pub trials_csv: Option<Vec<u8>>,
    pub metadata: Option<Value>,
}

fn json_bytes<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

fn check_budget(cfg: &FieldConfig) -> Result<()> {
    let violations = validate_energy(cfg);
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Error::ConstraintViolation(violations))
    }
}

fn fisher_output(cfg: &FieldConfig, target: EstimationTarget) -> Result<FisherOutput> {
    let report = fisher_report(cfg, target)?;
    let n = cfg.particle.scattered_amplitude().norm_sqr();
    let mass = target == EstimationTarget::Mass && n > 0.0;
    let rel = if mass && report.saturation_ratio > 0.0 {
        Some(relative_mass_bound(n, report.saturation_ratio)?)
    } else {
        None
    };
    Ok(FisherOutput {
        qcrb: 1.0 / report.qfi_coherent.sqrt(),
        crb_photon_counting: (report.cfi_photon_number > 0.0).then(|| 1.0 / report.cfi_photon_number.sqrt()),
        scattered_photons: n,
        relative_mass_bound: rel,
        relative_mass_bound_quantum: if mass { Some(relative_mass_bound(n, 1.0)?) } else { None },
        report,
    })
}

fn trials_csv(report: &CrbValidationReport) -> Result<Vec<u8>> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["trial", "seed", "sample_mean", "estimate"])?;
    for t in &report.trials {
        wtr.write_record([
            t.trial.to_string(),
            t.seed.to_string(),
            format!("{:.16e}", t.sample_mean),
            format!("{:.16e}", t.estimate),
        ])?;
    }
    wtr.into_inner().map_err(|e| Error::Io(e.into_error()))
}

impl Job {
    pub fn name(&self) -> &'static str {
        match self {
            Job::Fisher { .. } => "fisher",
            Job::Scan { .. } => "scan",
            Job::Optimize { .. } => "optimize",
            Job::Snr { .. } => "snr",
            Job::Montecarlo { .. } => "montecarlo",
            Job::Spectrum { .. } => "spectrum",
        }
    }

    pub fn execute(&self) -> Result<Rendered> {
        let plain = |primary| Rendered { primary, trials_csv: None, metadata: None };
        match self {
            Job::Fisher { config, target } => Ok(plain(json_bytes(&fisher_output(config, *target)?)?)),
            Job::Scan { request, format } => {
                let grid = scan_ratio_grid(request)?;
                let header = serde_json::to_value(grid.header())?;
                let primary = match format {
                    Format::Csv => {
                        let mut buf = Vec::new();
                        grid.write_csv(&mut buf)?;
                        buf
                    }
                    Format::Json => json_bytes(&ScanJson {
                        header: grid.header(),
                        x_values: &grid.x_values,
                        y_values: &grid.y_values,
                        values: &grid.values,
                    })?,
                };
                Ok(Rendered { primary, trials_csv: None, metadata: Some(header) })
            }
            Job::Optimize { config, target } => {
                check_budget(config)?;
                let solution = saturating_reference_set(config, *target)?;
                let reference_mag = config.reference.map(|r| r.mag);
                Ok(plain(json_bytes(&OptimizeOutput {
                    solution,
                    reference_mag,
                    phases_at_reference_mag: reference_mag.map(|m| solution.solutions_at(m)),
                })?))
            }
            Job::Snr { sweep, format } => {
                let rows = sweep.evaluate()?;
                let primary = match format {
                    Format::Csv => {
                        let mut buf = Vec::new();
                        write_snr_csv(&rows, &mut buf)?;
                        buf
                    }
                    Format::Json => json_bytes(&SnrJson { sweep, rows: &rows })?,
                };
                let metadata = serde_json::json!({ "mode": sweep.mode, "sweep": sweep.sweep, "log_scale": sweep.log_scale });
                Ok(Rendered { primary, trials_csv: None, metadata: Some(metadata) })
            }
            Job::Montecarlo { config, target, trials, samples, seed } => {
                let report = crb_validation(config, *target, *samples, *trials, *seed)?;
                Ok(Rendered {
                    primary: json_bytes(&report)?,
                    trials_csv: Some(trials_csv(&report)?),
                    metadata: None,
                })
            }
            Job::Spectrum { spectrum, target } => {
                let field = SpectralField::from_rows(spectrum)?;
                let qfi = qfi_multifrequency(&field, *target);
                let counted = qfi_multifrequency_phase_averaged(&field, *target)?;
                let relative = match target {
                    EstimationTarget::Mass => Some(relative_mass_bound_multifrequency(&field)?),
                    EstimationTarget::ScatterPhase => None,
                };
                Ok(plain(json_bytes(&SpectrumOutput {
                    target: *target,
                    points: field.len(),
                    scattered_photons: scattered_photons(&field),
                    qfi_coherent: qfi,
                    qfi_phase_averaged: counted,
                    cfi_photon_number: counted,
                    saturation_ratio: (qfi > 0.0).then(|| counted / qfi),
                    qcrb: (qfi > 0.0).then(|| 1.0 / qfi.sqrt()),
                    relative_mass_bound: relative,
                })?))
            }
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn require_config(common: &Common) -> Result<&Path> {
    common
        .config
        .as_deref()
        .ok_or_else(|| Error::InvalidInput("--config is required".into()))
}

fn json_only(common: &Common, name: &str) -> Result<()> {
    match common.format {
        Some(Format::Csv) => Err(Error::InvalidInput(format!("{name} writes JSON only"))),
        _ => Ok(()),
    }
}

fn one_source<'a>(common: &'a Common, preset: &'a Option<String>) -> Result<std::result::Result<&'a str, &'a Path>> {
    match (preset.as_deref(), common.config.as_deref()) {
        (Some(p), None) => Ok(Ok(p)),
        (None, Some(c)) => Ok(Err(c)),
        (Some(_), Some(_)) => Err(Error::InvalidInput("give either --preset or --config, not both".into())),
        (None, None) => Err(Error::InvalidInput("--preset or --config is required".into())),
    }
}

/// Where the results of one invocation go.
#[derive(Debug, Clone, Default)]
pub struct Destinations {
    pub out: Option<PathBuf>,
    pub trials_out: Option<PathBuf>,
}

fn resolve(command: &Command) -> Result<(Job, Destinations)> {
    let dest = |common: &Common| Destinations { out: common.out.clone(), trials_out: None };
    match command {
        Command::Fisher(c) => {
            json_only(c, "fisher")?;
            let config = read_json(require_config(c)?)?;
            Ok((Job::Fisher { config, target: c.target.unwrap_or(EstimationTarget::Mass) }, dest(c)))
        }
        Command::Scan { common, preset } => {
            let mut request = match one_source(common, preset)? {
                Ok(name) => tuner::preset(name)?,
                Err(path) => read_json(path)?,
            };
            if let Some(t) = common.target {
                request.target = t;
            }
            let format = common.format.unwrap_or(Format::Csv);
            Ok((Job::Scan { request, format }, dest(common)))
        }
        Command::Optimize(c) => {
            json_only(c, "optimize")?;
            let config = read_json(require_config(c)?)?;
            Ok((Job::Optimize { config, target: c.target.unwrap_or(EstimationTarget::Mass) }, dest(c)))
        }
        Command::Snr { common, preset } => {
            if common.target.is_some() {
                return Err(Error::InvalidInput("snr takes its mode from the sweep; --target is not used".into()));
            }
            let sweep = match one_source(common, preset)? {
                Ok(name) => SnrSweep::preset(name)?,
                Err(path) => read_json(path)?,
            };
            sweep.validate()?;
            Ok((Job::Snr { sweep, format: common.format.unwrap_or(Format::Csv) }, dest(common)))
        }
        Command::Montecarlo { common, trials, samples, seed, trials_out } => {
            json_only(common, "montecarlo")?;
            let config = read_json(require_config(common)?)?;
            Ok((
                Job::Montecarlo {
                    config,
                    target: common.target.unwrap_or(EstimationTarget::Mass),
                    trials: *trials,
                    samples: *samples,
                    seed: *seed,
                },
                Destinations { out: common.out.clone(), trials_out: trials_out.clone() },
            ))
        }
        Command::Spectrum(c) => {
            json_only(c, "spectrum")?;
            let field = SpectralField::load(require_config(c)?)?;
            Ok((
                Job::Spectrum { spectrum: field.to_rows(), target: c.target.unwrap_or(EstimationTarget::Mass) },
                dest(c),
            ))
        }
        Command::Rerun { manifest, out, trials_out } => {
            let m: RunManifest = read_json(manifest)?;
            let mut recorded = m.outputs.into_iter();
            let first = recorded.next();
            let second = recorded.next();
            Ok((m.job, Destinations { out: out.clone().or(first), trials_out: trials_out.clone().or(second) }))
        }
    }
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

fn write_outputs(job: &Job, rendered: &Rendered, dest: &Destinations, args: Vec<String>) -> Result<()> {
    match &dest.out {
        Some(path) => fs::write(path, &rendered.primary)?,
        None => io::stdout().write_all(&rendered.primary)?,
    }
    if let (Some(path), Some(bytes)) = (&dest.trials_out, &rendered.trials_csv) {
        fs::write(path, bytes)?;
    }
    if let Some(out) = &dest.out {
        let mut outputs = vec![out.clone()];
        outputs.extend(dest.trials_out.clone().filter(|_| rendered.trials_csv.is_some()));
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            timestamp_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            args,
            job: job.clone(),
            outputs,
            metadata: rendered.metadata.clone(),
        };
        fs::write(manifest_path(out), json_bytes(&manifest)?)?;
    }
    Ok(())
}

fn exit_code(err: &Error) -> u8 {
    if err.is_non_estimable() {
        EXIT_NOT_ESTIMABLE
    } else {
        EXIT_INPUT
    }
}

/// Runs a parsed command and returns the process exit code.
pub fn run(cli: Cli, args: Vec<String>) -> u8 {
    let result = (|| -> Result<()> {
        let (job, dest) = resolve(&cli.command)?;
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = cli.threads {
            if n == 0 {
                return Err(Error::InvalidInput("--threads must be >= 1".into()));
            }
            builder = builder.num_threads(n);
        }
        let pool = builder
            .build()
            .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
        let rendered = pool.install(|| job.execute())?;
        write_outputs(&job, &rendered, &dest, args)
    })();
    match result {
        Ok(()) => EXIT_OK,
        Err(err) => {
            let code = exit_code(&err);
            eprintln!("miscat: {err}");
            if matches!(err, Error::UndefinedPhase(_)) {
                eprintln!("miscat: photon-number information needs a nonzero detector field");
            }
            code
        }
    }
}

/// Parses `args` (including the program name) and runs.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    match Cli::try_parse_from(&args) {
        Ok(cli) => {
            let recorded = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
            run(cli, recorded)
        }
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                EXIT_INPUT
            } else {
                EXIT_OK
            }
        }
    }
}

