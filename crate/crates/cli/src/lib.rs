//! `abbg` experiment driver: synthesize sequences, run attacks, check
//! gradients.
//!
//! Exit codes: 0 success, 1 failed check, 2 configuration error, 3 data error.

pub mod config;
pub mod report;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use abbg_core::data::{load_sequence, save_sequence, synth_suite, Sequence};
use abbg_core::gradcheck::{run_gradcheck, GradcheckReport};
use abbg_core::runner::{evaluate_sequence, SequenceResult};
use abbg_core::Error;
use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{ExperimentConfig, Sequences};
use crate::report::{fmt_sig6, write_atomic, EvalReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;

/// Seed used by `gradcheck` when neither the config nor `--seed` sets one.
pub const DEFAULT_GRADCHECK_SEED: u64 = 7;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_DATA,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e.root() {
            Error::Config(_) => EXIT_CONFIG,
            _ => EXIT_DATA,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "abbg", version, about = "Bounding-box attack experiments on a differentiable tracker")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Experiment config (`key = value` lines).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Earlier `report.json` to compute drop percentages against.
    #[arg(long, global = true)]
    pub baseline: Option<PathBuf>,
    /// Output directory; overrides `output_dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Write the synthetic suite as sequence directories.
    Synth,
    /// Track every sequence under the configured attack and write reports.
    Attack,
    /// Compare the tracker pullback with central differences.
    Gradcheck,
}

/// Parses arguments, runs the command and returns the process exit code.
/// Diagnostics go to stderr, progress to stdout.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("abbg: {}", e.message);
            e.code
        }
    }
}

pub fn execute(cli: &Cli) -> Result<i32, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = Some(out.clone());
    }
    match cli.command {
        Command::Synth => cmd_synth(&cfg).map(|_| EXIT_OK),
        Command::Attack => cmd_attack(&cfg, cli.baseline.as_deref()).map(|_| EXIT_OK),
        Command::Gradcheck => {
            let r = cmd_gradcheck(&cfg)?;
            Ok(if r.passed { EXIT_OK } else { EXIT_CHECK })
        }
    }
}

fn output_dir(cfg: &ExperimentConfig) -> Result<&Path, CliError> {
    let dir = cfg
        .output_dir
        .as_deref()
        .ok_or_else(|| CliError::config("no output directory (config `output_dir` or --out)"))?;
    std::fs::create_dir_all(dir).map_err(|e| CliError::data(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

/// Renders the suite and writes one directory per sequence.
pub fn cmd_synth(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    let seed = cfg.validate_experiment()?;
    let out = output_dir(cfg)?;
    let seqs = synth_suite(&cfg.suite, seed)?;
    let mut dirs = Vec::with_capacity(seqs.len());
    for s in &seqs {
        dirs.push(save_sequence(s, out)?);
        println!("wrote {} ({} frames)", s.name, s.len());
    }
    Ok(dirs)
}

fn load_dir(root: &Path) -> Result<Vec<Sequence>, CliError> {
    let entries = std::fs::read_dir(root).map_err(|e| CliError::data(format!("{}: {e}", root.display())))?;
    let mut dirs = Vec::new();
    for entry in entries {
        let path = entry
            .map_err(|e| CliError::data(format!("{}: {e}", root.display())))?
            .path();
        if path.join(abbg_core::data::sequence::GROUNDTRUTH_FILE).is_file() {
            dirs.push(path);
        }
    }
    if dirs.is_empty() {
        return Err(CliError::data(format!("{}: no sequences found", root.display())));
    }
    dirs.sort();
    dirs.par_iter()
        .map(|d| load_sequence(d).map_err(CliError::from))
        .collect()
}

/// Evaluates every sequence (concurrently; sequence `i` uses the stream
/// `seed ^ i`) and writes `report.json`, `report.csv` and `summary.csv`.
pub fn cmd_attack(cfg: &ExperimentConfig, baseline: Option<&Path>) -> Result<EvalReport, CliError> {
    let seed = cfg.validate_experiment()?;
    let base = baseline.map(EvalReport::read).transpose()?;
    let out = output_dir(cfg)?;
    let seqs = match cfg.sequences() {
        Sequences::Synth(suite) => synth_suite(&suite, seed)?,
        Sequences::Dir(d) => load_dir(&d)?,
    };
    let results: Vec<SequenceResult> = seqs
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ i as u64);
            evaluate_sequence(s, &cfg.run, &mut rng).map_err(CliError::from)
        })
        .collect::<Result<_, _>>()?;
    let protocol = match cfg.run.protocol {
        abbg_core::runner::Protocol::Ope => "ope",
        abbg_core::runner::Protocol::Vot => "vot",
    };
    let mut report = EvalReport::new(seed, cfg.run.attack.name(), protocol, results);
    if let (Some(path), Some(b)) = (baseline, &base) {
        report.compare_to(path, b);
    }
    write_atomic(out, "report.json", report.to_json().as_bytes())?;
    write_atomic(out, "report.csv", report.report_csv().as_bytes())?;
    write_atomic(out, "summary.csv", report.summary_csv().as_bytes())?;
    let a = &report.aggregate;
    print!(
        "{} on {} sequences: AO {} SR50 {} SSIM {}",
        report.attack,
        report.rows.len(),
        fmt_sig6(a.ao),
        fmt_sig6(a.sr50),
        fmt_sig6(a.ssim_percent)
    );
    if let Some(drop) = report.baseline.as_ref().and_then(|b| b.drop_percent[0]) {
        print!(" (AO drop {}%)", fmt_sig6(drop));
    }
    println!();
    Ok(report)
}

pub fn cmd_gradcheck(cfg: &ExperimentConfig) -> Result<GradcheckReport, CliError> {
    cfg.gradcheck.validate()?;
    cfg.run.tracker_params.validate()?;
    let seed = cfg.seed.unwrap_or(DEFAULT_GRADCHECK_SEED);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = run_gradcheck(&cfg.gradcheck, &cfg.run.tracker_params, cfg.corrupt_backward, &mut rng)?;
    for (i, e) in r.per_state.iter().enumerate() {
        println!("state {i}: worst relative error {}", fmt_sig6(*e));
    }
    println!(
        "{}: worst {} (tolerance {}, {} states x {} probes)",
        if r.passed { "PASS" } else { "FAIL" },
        fmt_sig6(r.worst),
        fmt_sig6(r.tolerance),
        cfg.gradcheck.states,
        cfg.gradcheck.probes
    );
    if let Some(dir) = &cfg.output_dir {
        std::fs::create_dir_all(dir).map_err(|e| CliError::data(format!("{}: {e}", dir.display())))?;
        let json = serde_json::to_string_pretty(&r).expect("report serializes") + "\n";
        write_atomic(dir, "gradcheck.json", json.as_bytes())?;
    }
    Ok(r)
}
