//! Command-line front end for the cornerwalk detection pipeline.
//!
//! Subcommands cover the full experiment loop: scene generation, detection,
//! training-region sampling, evaluation, noise sweeps and a one-shot
//! `simulate` that chains generate, detect and eval. Every run echoes its
//! fully resolved configuration as one JSON line on stderr so experiments
//! can be reproduced from logs alone.

mod commands;
mod config;

use std::path::PathBuf;
use std::process;

use anyhow::Result;
use clap::{Parser, Subcommand};

use crate::config::CommonOpts;

#[derive(Debug, Parser)]
#[command(name = "cornerwalk", version, about = "Corner-walk detection pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic scene file from the scene law.
    GenScenes {
        #[command(flatten)]
        common: CommonOpts,
        /// Output scene file (JSON array).
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the detection pipeline over a scene file.
    Detect {
        #[command(flatten)]
        common: CommonOpts,
        /// Input scene file.
        #[arg(long)]
        scenes: PathBuf,
        /// Output detections file (JSON lines); iteration statistics land
        /// in a `.stats.json` sidecar next to it.
        #[arg(long)]
        out: PathBuf,
        /// Optional per-run walk trace dump (JSON lines).
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Sample a balanced batch of training regions from a scene file.
    Augment {
        #[command(flatten)]
        common: CommonOpts,
        /// Input scene file.
        #[arg(long)]
        scenes: PathBuf,
        /// Output regions file (JSON lines).
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a detections file against its scenes.
    Eval {
        #[command(flatten)]
        common: CommonOpts,
        /// Input scene file.
        #[arg(long)]
        scenes: PathBuf,
        /// Detections file produced by `detect`.
        #[arg(long)]
        detections: PathBuf,
        /// Output report (JSON).
        #[arg(long)]
        out: PathBuf,
        /// Optional precision/recall samples as CSV.
        #[arg(long)]
        pr_csv: Option<PathBuf>,
    },
    /// Benchmark the noisy oracle over a grid of flip probabilities.
    Sweep {
        #[command(flatten)]
        common: CommonOpts,
        /// Scene file to reuse; when omitted, scenes are generated from the law.
        #[arg(long)]
        scenes: Option<PathBuf>,
        /// Comma-separated flip probabilities (default 0,0.1,0.2,0.3).
        #[arg(long, value_delimiter = ',')]
        noise: Option<Vec<f64>>,
        /// Output CSV with one row per probability.
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate scenes, detect and evaluate in one run.
    Simulate {
        #[command(flatten)]
        common: CommonOpts,
        /// Directory receiving scenes.json, detections.jsonl, report.json
        /// and pr.csv.
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn main() {
    if let Err(err) = run() {
        eprintln!("error: {err:#}");
        process::exit(1);
    }
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::GenScenes { common, out } => {
            let resolved = config::resolve(&common)?;
            config::echo("gen-scenes", &resolved);
            commands::gen_scenes(&resolved, &out)
        }
        Command::Detect {
            common,
            scenes,
            out,
            trace,
        } => {
            let resolved = config::resolve(&common)?;
            config::echo("detect", &resolved);
            commands::detect(&resolved, &scenes, &out, trace.as_deref())
        }
        Command::Augment {
            common,
            scenes,
            out,
        } => {
            let resolved = config::resolve(&common)?;
            config::echo("augment", &resolved);
            commands::augment(&resolved, &scenes, &out)
        }
        Command::Eval {
            common,
            scenes,
            detections,
            out,
            pr_csv,
        } => {
            let resolved = config::resolve(&common)?;
            config::echo("eval", &resolved);
            commands::eval(&resolved, &scenes, &detections, &out, pr_csv.as_deref())
        }
        Command::Sweep {
            common,
            scenes,
            noise,
            out,
        } => {
            let resolved = config::resolve(&common)?;
            config::echo("sweep", &resolved);
            let noise = noise.unwrap_or_else(|| vec![0.0, 0.1, 0.2, 0.3]);
            commands::sweep(&resolved, scenes.as_deref(), &noise, &out)
        }
        Command::Simulate { common, out_dir } => {
            let resolved = config::resolve(&common)?;
            config::echo("simulate", &resolved);
            commands::simulate(&resolved, &out_dir)
        }
    }
}
