//! `ismf`: dataset generation, RIR inspection, evaluation and reporting.
//!
//! Exit codes: 0 on success, 2 for configuration errors (bad flags, bad or
//! missing inputs), 3 for failures while running.

// `!(x > 0.0)` style checks also reject NaN on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod rir;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use ismf_core::ism::{self, SimulationMode};
use ismf_core::metrics::{self, Report, TrendCheck};
use ismf_core::records::{self, ResultsFile};
use ismf_core::scenario::{self, DatasetConfig, NoiseConfig, Profile};

use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn config(e: impl std::fmt::Display) -> Self {
        CliError::Config(e.to_string())
    }

    pub fn runtime(e: impl std::fmt::Display) -> Self {
        CliError::Runtime(e.to_string())
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "ismf", version, about = "Image-source room simulation and DOA evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a two-channel dataset and its manifest.
    Gen(GenArgs),
    /// Synthesize one RIR and dump its per-image contributions.
    Rir(RirArgs),
    /// Run SRP-PHAT over a manifest.
    Eval(EvalArgs),
    /// Summarize results files and compare them pairwise.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct GenArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    profile: Option<Profile>,
    #[arg(long)]
    mode: Option<SimulationMode>,
    /// Number of samples.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory of dry speech WAV files.
    #[arg(long)]
    speech_dir: Option<PathBuf>,
    /// Measured source directivity used in advanced mode.
    #[arg(long)]
    source_pattern: Option<PathBuf>,
    /// Microphone spacing in meters.
    #[arg(long)]
    aperture: Option<f64>,
    #[arg(long)]
    max_order: Option<u32>,
    /// Disable air absorption.
    #[arg(long)]
    no_air: bool,
    /// Disable additive noise.
    #[arg(long)]
    no_noise: bool,
    /// Worker threads.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Args)]
struct RirArgs {
    /// Scene file: TOML description or dataset scene JSON.
    scene: PathBuf,
    /// Output WAV; a JSON sidecar is written next to it.
    #[arg(long)]
    out: PathBuf,
    /// Per-image table; defaults to the WAV path with a `.images.tsv` suffix.
    #[arg(long)]
    table: Option<PathBuf>,
    /// Re-synthesize the RIR from its per-image contributions and fail if
    /// they disagree by more than 1e-9 of the peak.
    #[arg(long)]
    check: bool,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Manifest written by `gen`.
    manifest: PathBuf,
    /// Results file to write.
    #[arg(long)]
    out: PathBuf,
    /// TOML run configuration; only `[estimator]` and `workers` are used.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the aperture recorded in the manifest.
    #[arg(long)]
    aperture: Option<f64>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Results files written by `eval`.
    #[arg(required = true)]
    results: Vec<PathBuf>,
    /// Comma-separated run names; file stems by default.
    #[arg(long, value_delimiter = ',')]
    names: Vec<String>,
    /// Recall threshold in degrees.
    #[arg(long)]
    threshold: Option<f64>,
    /// TOML run configuration; only `[estimator]` is used.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Machine-readable copy of the report.
    #[arg(long)]
    json: Option<PathBuf>,
}

fn dataset_config(args: &GenArgs) -> Result<(DatasetConfig, PathBuf), CliError> {
    let file = RunConfig::load_opt(args.config.as_deref())?;
    let missing = |what: &str| CliError::Config(format!("{what} is required (flag or config file)"));
    let seed = args.seed.or(file.seed).ok_or_else(|| missing("seed"))?;
    let mode = args.mode.or(file.mode).ok_or_else(|| missing("mode"))?;
    let n = args.n.or(file.n).ok_or_else(|| missing("n"))?;
    let out = args.out.clone().or(file.out.clone()).ok_or_else(|| missing("out"))?;
    let profile = args.profile.or(file.profile).unwrap_or(Profile::Voicehome);

    let mut cfg = DatasetConfig::new(profile, mode, n, seed);
    cfg.speech_dir = args.speech_dir.clone().or(file.speech_dir);
    cfg.source_pattern = args.source_pattern.clone().or(file.source_pattern);
    if let Some(a) = args.aperture.or(file.aperture_m) {
        cfg.aperture = a;
    }
    if let Some(o) = args.max_order.or(file.max_order) {
        cfg.max_order = o;
    }
    cfg.air_absorption = !args.no_air && file.air_absorption.unwrap_or(true);
    cfg.noise = file.noise.unwrap_or_default();
    if args.no_noise {
        cfg.noise = NoiseConfig {
            enabled: false,
            ..cfg.noise
        };
    }
    if let Some(v) = file.validation_fraction {
        cfg.validation_fraction = v;
    }
    cfg.workers = args.workers.or(file.workers).unwrap_or(1);
    cfg.validate().map_err(CliError::config)?;
    if let Some(path) = &cfg.source_pattern {
        ismf_core::directivity::load_pattern(path).map_err(CliError::config)?;
    }
    Ok((cfg, out))
}

fn cmd_gen(args: &GenArgs) -> Result<(), CliError> {
    let (cfg, out) = dataset_config(args)?;
    let manifest = scenario::generate_dataset(&cfg, &out).map_err(CliError::runtime)?;
    println!(
        "wrote {} samples and {}",
        manifest.entries.len(),
        out.join(scenario::MANIFEST_NAME).display()
    );
    Ok(())
}

fn cmd_rir(args: &RirArgs) -> Result<(), CliError> {
    let req = rir::load_request(&args.scene)?;
    let rir = ism::synthesize_rir(&req).map_err(CliError::runtime)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
    }
    rir.save(&args.out).map_err(CliError::runtime)?;
    let table = rir::image_table(&req).map_err(CliError::runtime)?;
    let table_path = args.table.clone().unwrap_or_else(|| {
        let mut name = args.out.file_stem().unwrap_or_default().to_os_string();
        name.push(".images.tsv");
        args.out.with_file_name(name)
    });
    std::fs::write(&table_path, &table).map_err(|e| CliError::Runtime(format!("{}: {e}", table_path.display())))?;
    println!(
        "wrote {} ({} channels, {} samples) and {} ({} images)",
        args.out.display(),
        rir.channels.len(),
        rir.len(),
        table_path.display(),
        table.lines().count() - 1
    );
    if args.check {
        let err = rir::decomposition_error(&req, &rir.channels).map_err(CliError::runtime)?;
        println!("decomposition: max deviation {err:.3e} of peak");
        if !(err <= 1e-9) {
            return Err(CliError::Runtime(format!(
                "decomposition deviation {err:.3e} exceeds 1e-9"
            )));
        }
    }
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<(), CliError> {
    let file = RunConfig::load_opt(args.config.as_deref())?;
    let workers = args.workers.or(file.workers).unwrap_or(1);
    let cfg = file.estimator().to_eval(args.aperture, workers)?;
    let manifest = records::load_manifest(&args.manifest).map_err(CliError::config)?;
    let base = args.manifest.parent().unwrap_or(Path::new(""));
    let results = ismf_core::doa::evaluate_dataset(&manifest, base, &cfg).map_err(CliError::runtime)?;
    records::save_results(&results, &args.out).map_err(CliError::runtime)?;
    let failed = results.rows.iter().filter(|r| r.status != records::Status::Ok).count();
    println!(
        "wrote {} ({} rows, {failed} failed)",
        args.out.display(),
        results.rows.len()
    );
    Ok(())
}

/// Report plus the naive-versus-advanced trend, when the runs allow it.
#[derive(Debug, Serialize)]
struct ReportRecord {
    #[serde(flatten)]
    report: Report,
    trends: Vec<TrendCheck>,
}

fn run_modes(runs: &[(String, ResultsFile)]) -> Vec<Option<String>> {
    runs.iter()
        .map(|(_, r)| r.get("dataset_mode").map(str::to_string))
        .collect()
}

fn trends(report: &Report, runs: &[(String, ResultsFile)]) -> Vec<TrendCheck> {
    let modes = run_modes(runs);
    let mode_of = |name: &str| runs.iter().position(|(n, _)| n == name).and_then(|i| modes[i].clone());
    let mut out = Vec::new();
    for c in &report.comparisons {
        match (mode_of(&c.a).as_deref(), mode_of(&c.b).as_deref()) {
            (Some("naive"), Some("advanced")) => out.push(metrics::trend_check(c)),
            (Some("advanced"), Some("naive")) => out.push(metrics::trend_check(&c.swapped())),
            _ => {}
        }
    }
    out
}

fn cmd_report(args: &ReportArgs) -> Result<(), CliError> {
    let file = RunConfig::load_opt(args.config.as_deref())?;
    let threshold = args.threshold.unwrap_or(file.estimator().threshold_deg);
    if !(threshold > 0.0) {
        return Err(CliError::Config(format!("threshold {threshold} must be positive")));
    }
    if !args.names.is_empty() && args.names.len() != args.results.len() {
        return Err(CliError::Config(format!(
            "{} names given for {} results files",
            args.names.len(),
            args.results.len()
        )));
    }
    let mut runs = Vec::new();
    for (i, path) in args.results.iter().enumerate() {
        let name = match args.names.get(i) {
            Some(n) => n.clone(),
            None => path.file_stem().unwrap_or_default().to_string_lossy().into_owned(),
        };
        if runs.iter().any(|(n, _): &(String, ResultsFile)| *n == name) {
            return Err(CliError::Config(format!("duplicate run name {name:?}; use --names")));
        }
        runs.push((name, records::load_results(path).map_err(CliError::config)?));
    }
    let report = metrics::build_report(&runs, threshold).map_err(CliError::config)?;
    let trends = trends(&report, &runs);
    print!("{}", metrics::render_report(&report));
    for t in &trends {
        print!("\n{}", metrics::render_trend(t));
    }
    if let Some(path) = &args.json {
        let record = ReportRecord { report, trends };
        let text = serde_json::to_string_pretty(&record).map_err(CliError::runtime)? + "\n";
        std::fs::write(path, text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Rir(a) => cmd_rir(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Report(a) => cmd_report(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
