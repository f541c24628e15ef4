//! `fflow`: batch experiments for flow renormalization of driven systems.

// `!(x > 0.0)` guards are deliberate: they reject NaN along with bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use floquet_flow::{io::write_json, par};
use serde_json::json;

use crate::config::ExperimentConfig;

/// Exit status for configuration, usage and IO failures.
const EXIT_CONFIG: u8 = 2;
/// Exit status for numerical failures inside a pipeline.
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "fflow", version, about = "Flow renormalization experiments for periodically driven systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML config replacing the built-in default for the subcommand.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory; overrides `output_dir` from the config.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Worker threads for scans and dense kernels.
    #[arg(long, global = true, value_name = "N", value_parser = clap::value_parser!(u16).range(1..))]
    threads: Option<u16>,

    /// Set a config value by dotted path, e.g. `chain.L=6`. Repeatable.
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Driven-oscillator flows and freezing residual scan.
    Oscillator,
    /// P(lambda_c) over the drive ratio with minimum refinement.
    ScanFreezing,
    /// Plateau scaling with frequency at a refined freezing point.
    FrequencyScaling,
    /// Long flows with lambda_min detection and instanton fits.
    Thermalize,
    /// Stroboscopic entanglement and quasienergy comparison.
    Dynamics,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Oscillator => "oscillator",
            Command::ScanFreezing => "scan-freezing",
            Command::FrequencyScaling => "frequency-scaling",
            Command::Thermalize => "thermalize",
            Command::Dynamics => "dynamics",
        }
    }
}

fn write_manifest(out: &Path, command: Command, outputs: &[String]) -> Result<()> {
    let manifest = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "git": env!("FFLOW_GIT_HASH"),
        "subcommand": command.name(),
        "parallel": par::is_parallel(),
        "threads": par::pool_threads(),
        "outputs": outputs,
    });
    write_json(out.join("manifest.json"), &manifest)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        par::init_pool(n as usize);
        par::set_kernel_threads(n as usize);
    }
    let mut cfg: ExperimentConfig = config::load(cli.command.name(), cli.config.as_deref(), &cli.overrides)?;
    if let Some(out) = cli.out {
        cfg.output_dir = Some(out);
    }
    let out = cfg
        .output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("out").join(cli.command.name()));
    cfg.output_dir = Some(out.clone());
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let echo = toml::to_string(&cfg).context("serializing resolved config")?;
    std::fs::write(out.join("config.toml"), echo).with_context(|| format!("writing into {}", out.display()))?;

    let outputs = match cli.command {
        Command::Oscillator => commands::oscillator(&cfg, &out),
        Command::ScanFreezing => commands::scan_freezing_cmd(&cfg, &out),
        Command::FrequencyScaling => commands::frequency_scaling_cmd(&cfg, &out),
        Command::Thermalize => commands::thermalize_cmd(&cfg, &out),
        Command::Dynamics => commands::dynamics_cmd(&cfg, &out),
    }?;
    write_manifest(&out, cli.command, &outputs.0)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let numerical = err
        .chain()
        .filter_map(|e| e.downcast_ref::<floquet_flow::Error>())
        .any(floquet_flow::Error::is_numerical);
    if numerical {
        EXIT_NUMERICAL
    } else {
        EXIT_CONFIG
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
