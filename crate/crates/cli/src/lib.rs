//! `sure-lab` command-line front end: argument parsing, dispatch, and output.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{BatteryConfig, ExperimentConfig, FamilyConfig};

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    /// Config, validation, or I/O error.
    pub const CONFIG: u8 = 1;
    /// An exact identity or a battery check failed.
    pub const IDENTITY: u8 = 2;
    /// A requested `λ` lies outside a sub-exponential domain.
    pub const DOMAIN: u8 = 3;
}

#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        CliError {
            code,
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(exit::CONFIG, message)
    }

    pub fn io(e: impl std::fmt::Display) -> Self {
        Self::config(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "sure-lab", version, about = "SURE-tuned linear smoother experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte Carlo experiment with identity checks and bound comparisons.
    Simulate(CommonArgs),
    /// Concentration batteries for quadratic forms and maxima.
    VerifyLemmas(CommonArgs),
    /// Per-member statistics of a smoother family.
    FamilyInfo(CommonArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// JSON config (experiment config, battery, or family document).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config's master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to the available cores.
    #[arg(long, env = "SURE_LAB_THREADS")]
    pub threads: Option<usize>,
    /// Per-replicate CSV output (simulate).
    #[arg(long)]
    pub records: Option<PathBuf>,
    /// Main output file; stdout when absent. For family-info, the family
    /// document is written here and the table goes to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

/// Everything a command produced, ready to be written.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Output {
    pub code: u8,
    pub stdout: String,
}

pub fn to_json<T: serde::Serialize>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(CliError::io)?;
    s.push('\n');
    Ok(s)
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::config(format!("cannot write {}: {e}", path.display())))
}

fn config_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn require_config(args: &CommonArgs) -> Result<&Path, CliError> {
    args.config
        .as_deref()
        .ok_or_else(|| CliError::config("--config is required"))
}

fn with_threads<R: Send>(
    threads: Option<usize>,
    f: impl FnOnce() -> Result<R, CliError> + Send,
) -> Result<R, CliError> {
    match threads {
        None => f(),
        Some(0) => Err(CliError::config("--threads: must be at least 1")),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(CliError::io)?
            .install(f),
    }
}

/// Runs a parsed command; files named by flags or config are written here,
/// and whatever belongs on stdout is returned.
pub fn run(cli: &Cli) -> Result<Output, CliError> {
    match &cli.command {
        Command::Simulate(args) => with_threads(args.threads, || simulate(args)),
        Command::VerifyLemmas(args) => with_threads(args.threads, || verify_lemmas(args)),
        Command::FamilyInfo(args) => with_threads(args.threads, || family_info(args)),
    }
}

fn emit(main: String, out: Option<&Path>, code: u8) -> Result<Output, CliError> {
    match out {
        Some(path) => {
            write_file(path, &main)?;
            Ok(Output {
                code,
                stdout: String::new(),
            })
        }
        None => Ok(Output { code, stdout: main }),
    }
}

fn simulate(args: &CommonArgs) -> Result<Output, CliError> {
    let path = require_config(args)?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    let base = config_dir(path);
    let records_path = args
        .records
        .clone()
        .or_else(|| cfg.outputs.records.as_ref().map(|p| base.join(p)));
    let summary_path = args
        .out
        .clone()
        .or_else(|| cfg.outputs.summary.as_ref().map(|p| base.join(p)));

    let (report, records) = commands::simulate(&cfg, &base, records_path.is_some())?;
    if let (Some(p), Some(recs)) = (&records_path, &records) {
        let file = std::fs::File::create(p)
            .map_err(|e| CliError::config(format!("cannot write {}: {e}", p.display())))?;
        let mut buf = std::io::BufWriter::new(file);
        sure_lab::montecarlo::write_records_csv(recs, &mut buf).map_err(CliError::io)?;
        buf.flush().map_err(CliError::io)?;
    }
    let main = match args.format {
        Format::Json => to_json(&report)?,
        Format::Csv => report.to_csv()?,
    };
    emit(main, summary_path.as_deref(), report.exit_code())
}

fn verify_lemmas(args: &CommonArgs) -> Result<Output, CliError> {
    let mut cfg = match &args.config {
        Some(p) => BatteryConfig::load(p)?,
        None => BatteryConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    let report = commands::verify_lemmas(&cfg)?;
    let main = match args.format {
        Format::Json => to_json(&report)?,
        Format::Csv => report.to_csv()?,
    };
    emit(main, args.out.as_deref(), report.exit_code())
}

/// Accepts an experiment config (uses its family and `model.n`) or a bare
/// family document.
pub fn load_family(path: &Path) -> Result<sure_lab::SmootherFamily64, CliError> {
    let text = config::read_text(path)?;
    let value: serde_json::Value = config::parse_json(&text, path)?;
    let base = config_dir(path);
    if value.get("model").is_some() {
        let cfg: ExperimentConfig = config::parse_json(&text, path)?;
        cfg.validate()?;
        cfg.build_family(&base)
    } else if value.get("members").is_some() && value.get("schema_version").is_some() {
        config::load_family_document(path)
    } else {
        let fam: FamilyConfig = config::parse_json(&text, path)?;
        fam.build(None, &base)
    }
}

fn family_info(args: &CommonArgs) -> Result<Output, CliError> {
    let path = require_config(args)?;
    let family = load_family(path)?;
    if let Some(out) = &args.out {
        write_file(out, &to_json(&family.to_document())?)?;
    }
    let info = commands::family_info(&family);
    let table = match args.format {
        Format::Json => to_json(&info)?,
        Format::Csv => info.to_csv()?,
    };
    Ok(Output {
        code: exit::OK,
        stdout: table,
    })
}
