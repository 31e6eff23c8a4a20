//! Command-line interface: training, evaluation, ablation sweeps, synthetic
//! data generation, gradient checks, attention export, and the complexity
//! probe.
//!
//! Every subcommand is deterministic given its seed and inputs; artifacts
//! are byte-identical across reruns, with wall-clock timings diverted to a
//! separate log file. Errors print a single machine-parseable line
//! `ERROR <code>: <message>` and exit non-zero (2 for bad input or
//! configuration, 1 for runtime failures).

mod commands;
mod config;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "hgnn-ima", version, about = "Inter-modal attention graph networks")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a model on a dataset manifest.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// JSON run config; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Override a config key, e.g. --set layers=2 (repeatable).
        #[arg(long = "set")]
        set: Vec<String>,
    },
    /// Evaluate a checkpoint on a dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long = "set")]
        set: Vec<String>,
    },
    /// Train every requested ablation variant with shared seeds.
    Ablate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated seed list, e.g. --seeds 1,2,3.
        #[arg(long)]
        seeds: Option<String>,
        /// Variant name (repeatable); all named variants when omitted.
        #[arg(long = "variant", allow_hyphen_values = true)]
        variant: Vec<String>,
        #[arg(long = "set")]
        set: Vec<String>,
    },
    /// Generate a synthetic dataset (presets: cross-modal, small, overfit;
    /// or a path to a SyntheticSpec JSON file).
    Synth {
        #[arg(long)]
        spec: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Verify analytic gradients against central finite differences on a
    /// built-in fixture.
    Gradcheck {
        /// Restrict the check to parameter blocks whose name contains any
        /// of these substrings (repeatable).
        #[arg(long = "blocks")]
        blocks: Vec<String>,
        /// Corrupt one analytic gradient entry; the check must then FAIL.
        #[arg(long)]
        inject_fault: bool,
    },
    /// Export per-edge attention records and node embeddings from a
    /// checkpoint.
    ExportAttention {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Propagation layer to export (0-based).
        #[arg(long, default_value_t = 0)]
        layer: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long = "set")]
        set: Vec<String>,
    },
    /// Measure per-iteration time across graph sizes and modality counts.
    Probe {
        /// Comma-separated size names: small, medium, large.
        #[arg(long, default_value = "small,medium")]
        sizes: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long = "set")]
        set: Vec<String>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Train { data, config, out, seed, set } => {
            commands::train(&data, config.as_deref(), &out, seed, &set)
        }
        Cmd::Eval { checkpoint, data, out, set } => {
            commands::eval(&checkpoint, &data, out.as_deref(), &set)
        }
        Cmd::Ablate { data, config, out, seeds, variant, set } => {
            commands::ablate(&data, config.as_deref(), out.as_deref(), seeds.as_deref(), &variant, &set)
        }
        Cmd::Synth { spec, seed, out } => commands::synth(&spec, seed, &out),
        Cmd::Gradcheck { blocks, inject_fault } => commands::gradcheck(&blocks, inject_fault),
        Cmd::ExportAttention { checkpoint, data, layer, out, set } => {
            commands::export_attention(&checkpoint, &data, layer, &out, &set)
        }
        Cmd::Probe { sizes, out, seed, set } => {
            commands::probe(&sizes, out.as_deref(), seed, &set)
        }
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("ERROR {}: {}", e.code, e.message.replace('\n', " "));
            ExitCode::from(e.exit)
        }
    }
}

pub(crate) struct CliError {
    pub code: String,
    pub message: String,
    pub exit: u8,
}

impl CliError {
    pub fn user(code: &str, message: impl Into<String>) -> Self {
        Self {
            code: code.into(),
            message: message.into(),
            exit: 2,
        }
    }
}

impl From<hgnn_ima::Error> for CliError {
    fn from(e: hgnn_ima::Error) -> Self {
        let exit = match &e {
            hgnn_ima::Error::Diverged { .. } | hgnn_ima::Error::NonFinite(_) => 1,
            _ => 2,
        };
        Self {
            code: e.code().to_string(),
            message: e.to_string(),
            exit,
        }
    }
}
