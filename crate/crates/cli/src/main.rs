use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use flowguard::pipeline::{
    cmd_evaluate, cmd_gradcheck, cmd_predict, cmd_synth, cmd_train, PipelineConfig, TrainArtifacts,
};
use flowguard::ErrorClass;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_CHECK: u8 = 3;

/// DDoS flow detection: SMOTE rebalancing and a two-phase residual network.
#[derive(Debug, Parser)]
#[command(name = "flowguard", version)]
struct Cli {
    /// JSON configuration; missing keys take their defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Flow CSV to read.
    #[arg(long, global = true, value_name = "PATH")]
    data: Option<PathBuf>,
    /// Model file to write (train) or read.
    #[arg(long, global = true, value_name = "PATH")]
    model: Option<PathBuf>,
    /// Output file, or report directory for train.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Detection threshold: probabilities above it are flagged as attacks.
    #[arg(long, global = true, value_name = "X")]
    threshold: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a seeded synthetic flow CSV (--out).
    Synth,
    /// Train on --data, save to --model, report on the held-out split.
    Train,
    /// Score a labelled CSV (--data) with a saved model (--model).
    Evaluate,
    /// Per-row probabilities and labels for --data, to --out or stdout.
    Predict,
    /// Finite-difference check of the network gradients.
    Gradcheck {
        /// Maximum allowed relative error.
        #[arg(long, value_name = "X")]
        tolerance: Option<f64>,
    },
    /// Print the full default configuration as JSON.
    PrintDefaultConfig,
}

enum Failure {
    Usage(String),
    Core(flowguard::Error),
    Check(String),
}

impl From<flowguard::Error> for Failure {
    fn from(e: flowguard::Error) -> Self {
        Failure::Core(e)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            match e.class() {
                ErrorClass::Config => ExitCode::from(EXIT_USAGE),
                ErrorClass::Data => ExitCode::from(EXIT_DATA),
            }
        }
        Err(Failure::Check(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(EXIT_CHECK)
        }
    }
}

fn require<'a>(
    flag: Option<&'a PathBuf>,
    config: Option<&'a PathBuf>,
    name: &str,
) -> Result<&'a Path, Failure> {
    flag.or(config)
        .map(PathBuf::as_path)
        .ok_or_else(|| Failure::Usage(format!("--{name} is required")))
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| flowguard::Error::io(p, e).into()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.set_all_seeds(seed);
    }
    if let Some(t) = cli.threshold {
        cfg.train.threshold = t;
    }
    cfg.validate()?;
    let paths = cfg.paths.clone();
    let out = cli.out.as_ref().or(paths.out.as_ref());

    match cli.command {
        Command::PrintDefaultConfig => {
            let mut text = cfg.to_json_pretty();
            text.push('\n');
            write_or_print(out.map(PathBuf::as_path), &text)?;
        }
        Command::Synth => {
            let out = require(cli.out.as_ref(), paths.out.as_ref(), "out")?;
            cmd_synth(&cfg, out)?;
            eprintln!(
                "wrote {} rows ({} {}, {} {}) to {}",
                cfg.synth.n_majority + cfg.synth.n_minority,
                cfg.synth.n_majority,
                cfg.label.benign_token,
                cfg.synth.n_minority,
                cfg.label.attack_token,
                out.display()
            );
        }
        Command::Train => {
            let data = require(cli.data.as_ref(), paths.data.as_ref(), "data")?;
            let model = require(cli.model.as_ref(), paths.model.as_ref(), "model")?;
            let artifacts = TrainArtifacts::new(model, out.map(PathBuf::as_path));
            let o = cmd_train(&cfg, data, &artifacts)?;
            if !o.dropped_columns.is_empty() {
                eprintln!(
                    "ignored non-numeric columns: {}",
                    o.dropped_columns.join(", ")
                );
            }
            eprintln!(
                "train split {:?} -> balanced {:?}; test split {:?} (benign, attack)",
                o.train_counts, o.balanced_counts, o.test_counts
            );
            eprintln!(
                "mean |phase-2 - phase-1| on balanced data: {:.6}",
                o.anchor_drift
            );
            print!("{}", o.eval);
            eprintln!(
                "model {}; reports {}, {}, {}",
                artifacts.model.display(),
                artifacts.train_report.display(),
                artifacts.eval_report.display(),
                artifacts.smote_audit.display()
            );
        }
        Command::Evaluate => {
            let data = require(cli.data.as_ref(), paths.data.as_ref(), "data")?;
            let model = require(cli.model.as_ref(), paths.model.as_ref(), "model")?;
            let report = cmd_evaluate(model, data, cli.threshold)?;
            print!("{report}");
            if let Some(p) = out {
                write_or_print(Some(p), &report.to_key_value())?;
            }
        }
        Command::Predict => {
            let data = require(cli.data.as_ref(), paths.data.as_ref(), "data")?;
            let model = require(cli.model.as_ref(), paths.model.as_ref(), "model")?;
            let csv = cmd_predict(model, data, cli.threshold)?;
            write_or_print(out.map(PathBuf::as_path), &csv)?;
        }
        Command::Gradcheck { tolerance } => {
            if let Some(t) = tolerance {
                cfg.gradcheck.tolerance = t;
                cfg.gradcheck.validate()?;
            }
            let summary = cmd_gradcheck(&cfg.gradcheck)?;
            print!("{}", summary.to_table());
            if !summary.passed() {
                return Err(Failure::Check(format!(
                    "gradient check failed: worst relative error {:.3e} >= {:e}",
                    summary.worst(),
                    summary.tolerance
                )));
            }
        }
    }
    Ok(())
}
