//! Command-line front end behind the `mqdyn` binary.
//!
//! Every command reads a JSON curve spec, computes, and writes one JSON or
//! CSV document to `--out` (atomically) or to stdout. The record types below
//! are the documented output schemas; the `read_*` functions parse them back.
//!
//! Exit codes: 0 success, 1 failed verification or computation, 2 usage.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::curve::{energy_partition, energy_report, refinement_partition, MarginalCurve, TimePartition};
use crate::dynamics::{continuity_residual, test_function_library, velocity_field, velocity_table, Quadrature};
use crate::markov_quantile::{mq_coupling_traced, sample_paths, MqConfig, TraceStep};
use crate::measure::AtomicMeasure;
use crate::verify::{run_suite, SuiteReport};
use crate::{Error, Result};

pub const DEFAULT_SEED: u64 = 0x5EED;

/// Parsed command line.
#[derive(Debug, Clone, Parser)]
#[command(name = "mqdyn", version, about = "Dynamical optimal transport on the real line")]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,

    /// JSON curve spec.
    #[arg(long, global = true)]
    pub spec: Option<PathBuf>,

    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    pub seed: u64,

    /// Refinement tolerance (energy) or CDF stabilization threshold (mq).
    #[arg(long, global = true, default_value_t = 1e-9)]
    pub tol: f64,

    /// Quantization level count, overriding the spec's.
    #[arg(long, global = true)]
    pub levels: Option<usize>,

    /// Comma-separated partition times, e.g. "0,0.5,1".
    #[arg(long, global = true)]
    pub partition: Option<String>,

    /// Dyadic depth: partition depth for `energy` and `velocity`, refinement
    /// cap for `mq`.
    #[arg(long, global = true)]
    pub depth: Option<u32>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Energy of the curve, on a partition and refined.
    Energy,
    /// Markov-quantile coupling between two times.
    Mq {
        #[arg(long, default_value_t = 0.0)]
        s: f64,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
    },
    /// Paths of the quantile process made Markov at the partition times.
    Sample {
        #[arg(long, default_value_t = 100)]
        paths: usize,
        #[arg(long, default_value_t = 32)]
        steps: usize,
    },
    /// (t, x, v) triples of the minimal velocity field.
    Velocity {
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
    },
    /// Continuity-equation residuals of the minimal field over the test
    /// function library.
    Residual {
        #[arg(long, default_value_t = 1e-3)]
        mesh: f64,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        /// Seeded random test functions added to the fixed six.
        #[arg(long, default_value_t = 4)]
        extra: usize,
    },
    /// Runs a named verification suite.
    Verify { suite: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyOutput {
    pub curve: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub partition: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub partition_value: Option<f64>,
    pub refined_value: f64,
    pub depth: u32,
    pub converged: bool,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MqOutput {
    pub curve: String,
    pub s: f64,
    pub t: f64,
    pub source: AtomicMeasure,
    pub target: AtomicMeasure,
    pub coupling: Vec<Vec<f64>>,
    pub trace: Vec<TraceStep>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub path_id: usize,
    pub t: f64,
    pub x: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityRow {
    pub t: f64,
    pub x: f64,
    pub v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualRow {
    pub function: usize,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub t_lo: f64,
    pub t_hi: f64,
    pub residual: f64,
}

/// Runs the command line `args` (program name first) and returns the exit
/// code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cfg = match RunConfig::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cfg) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("mqdyn: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Usage(_) | Error::Parse { .. } | Error::InvalidPartition(_) | Error::Io(_) => 2,
        _ => 1,
    }
}

/// Runs a parsed command; `Ok(false)` signals a failed verification or a
/// non-converged computation whose report was still written.
pub fn execute(cfg: &RunConfig) -> Result<bool> {
    if !(cfg.tol > 0.0) {
        return Err(Error::Usage(format!("--tol must be positive, got {}", cfg.tol)));
    }
    match &cfg.command {
        Command::Energy => cmd_energy(cfg),
        Command::Mq { s, t } => cmd_mq(cfg, *s, *t),
        Command::Sample { paths, steps } => cmd_sample(cfg, *paths, *steps),
        Command::Velocity { dt } => cmd_velocity(cfg, *dt),
        Command::Residual { mesh, dt, extra } => cmd_residual(cfg, *mesh, *dt, *extra),
        Command::Verify { suite } => cmd_verify(cfg, suite),
    }
}

/// The curve named by `--spec`, with `--levels` applied.
pub fn load_curve(cfg: &RunConfig) -> Result<MarginalCurve> {
    let path = cfg
        .spec
        .as_ref()
        .ok_or_else(|| Error::Usage("--spec PATH is required".into()))?;
    let text = fs::read_to_string(path)?;
    let c = MarginalCurve::from_json_str(&text).map_err(|e| match e {
        Error::Parse { location, message } => Error::Parse {
            location: format!("{}: {location}", path.display()),
            message,
        },
        other => other,
    })?;
    match cfg.levels {
        Some(k) => c.with_levels(k).map_err(|e| Error::Usage(e.to_string())),
        None => Ok(c),
    }
}

fn partition(cfg: &RunConfig) -> Result<Option<TimePartition>> {
    cfg.partition
        .as_deref()
        .map(|s| s.parse::<TimePartition>())
        .transpose()
}

fn cmd_energy(cfg: &RunConfig) -> Result<bool> {
    let c = load_curve(cfg)?;
    let part = match (partition(cfg)?, cfg.depth) {
        (Some(p), _) => Some(p),
        (None, Some(d)) => Some(refinement_partition(&c, 0.0, 1.0, d)?),
        (None, None) => None,
    };
    let partition_value = part.as_ref().map(|p| energy_partition(&c, p)).transpose()?;
    let report = energy_report(&c, 0.0, 1.0, cfg.tol)?;
    let out = EnergyOutput {
        curve: c.name().to_string(),
        partition: part.map(|p| p.times().to_vec()),
        partition_value,
        refined_value: report.value,
        depth: report.depth,
        converged: report.converged,
        tol: cfg.tol,
    };
    emit(cfg, &json_bytes(&out)?)?;
    Ok(true)
}

fn cmd_mq(cfg: &RunConfig, s: f64, t: f64) -> Result<bool> {
    let c = load_curve(cfg)?;
    let mq = MqConfig {
        cdf_tol: cfg.tol,
        max_depth: cfg.depth.unwrap_or(MqConfig::default().max_depth),
        ..MqConfig::default()
    };
    mq.validate().map_err(|e| Error::Usage(e.to_string()))?;
    let outcome = mq_coupling_traced(&c, s, t, &mq)?;
    let out = MqOutput {
        curve: c.name().to_string(),
        s,
        t,
        source: outcome.coupling.source().clone(),
        target: outcome.coupling.target().clone(),
        coupling: outcome.coupling.matrix(),
        trace: outcome.trace,
        converged: outcome.converged,
    };
    emit(cfg, &json_bytes(&out)?)?;
    Ok(out.converged)
}

fn cmd_sample(cfg: &RunConfig, n_paths: usize, steps: usize) -> Result<bool> {
    if n_paths == 0 {
        return Err(Error::Usage("--paths must be at least 1".into()));
    }
    let c = load_curve(cfg)?;
    let r = partition(cfg)?.unwrap_or_else(|| "0,1".parse().unwrap());
    let paths = sample_paths(&c, &r, n_paths, steps, cfg.seed)?;
    let rows = paths.iter().enumerate().flat_map(|(id, p)| {
        p.times
            .iter()
            .zip(&p.positions)
            .map(move |(t, x)| SampleRow { path_id: id, t: *t, x: *x })
    });
    emit(cfg, &csv_bytes(rows)?)?;
    Ok(true)
}

fn cmd_velocity(cfg: &RunConfig, dt: f64) -> Result<bool> {
    let c = load_curve(cfg)?;
    let times = match partition(cfg)? {
        Some(p) => p,
        None => TimePartition::dyadic(0.0, 1.0, cfg.depth.unwrap_or(4))?,
    };
    let v = velocity_field(&c, dt).map_err(|e| Error::Usage(e.to_string()))?;
    let rows = velocity_table(&c, &v, times.times())?
        .into_iter()
        .map(|(t, x, v)| VelocityRow { t, x, v });
    emit(cfg, &csv_bytes(rows)?)?;
    Ok(true)
}

fn cmd_residual(cfg: &RunConfig, mesh: f64, dt: f64, extra: usize) -> Result<bool> {
    let c = load_curve(cfg)?;
    let quad = Quadrature::with_mesh(mesh).map_err(|e| Error::Usage(e.to_string()))?;
    let v = velocity_field(&c, dt).map_err(|e| Error::Usage(e.to_string()))?;
    let mut rows = Vec::new();
    for (i, phi) in test_function_library(extra, cfg.seed).iter().enumerate() {
        let [c0, c1, c2, c3] = phi.coeffs;
        rows.push(ResidualRow {
            function: i,
            c0,
            c1,
            c2,
            c3,
            t_lo: phi.t_lo,
            t_hi: phi.t_hi,
            residual: continuity_residual(&c, &v, phi, &quad)?,
        });
    }
    emit(cfg, &csv_bytes(rows)?)?;
    Ok(true)
}

fn cmd_verify(cfg: &RunConfig, suite: &str) -> Result<bool> {
    let report = run_suite(suite, cfg.levels.unwrap_or(32), cfg.seed)?;
    eprint!("{}", report.table());
    emit(cfg, &json_bytes(&report)?)?;
    Ok(report.passed)
}

fn json_bytes<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut b = serde_json::to_vec_pretty(v)?;
    b.push(b'\n');
    Ok(b)
}

fn csv_bytes<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn emit(cfg: &RunConfig, bytes: &[u8]) -> Result<()> {
    match &cfg.out {
        Some(path) => write_atomic(path, bytes),
        None => {
            io::stdout().lock().write_all(bytes)?;
            Ok(())
        }
    }
}

/// Writes through a temporary file in the destination directory, then
/// renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

pub fn read_energy_json(path: &Path) -> Result<EnergyOutput> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

pub fn read_mq_json(path: &Path) -> Result<MqOutput> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

pub fn read_suite_json(path: &Path) -> Result<SuiteReport> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

pub fn read_sample_csv(path: &Path) -> Result<Vec<SampleRow>> {
    read_csv(path)
}

pub fn read_velocity_csv(path: &Path) -> Result<Vec<VelocityRow>> {
    read_csv(path)
}

pub fn read_residual_csv(path: &Path) -> Result<Vec<ResidualRow>> {
    read_csv(path)
}
