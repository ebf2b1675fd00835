//! `wavectl`: run, control and verify periodic water-wave experiments.
//!
//! Exit codes: 0 pass, 1 verification failure, 2 usage or configuration error.

mod commands;
mod config;
mod suites;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde_json::{json, Value};
use wwcontrol::io::write_json;

use config::{ConfigError, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "wavectl", version, about = "Localized pressure control of periodic water waves")]
struct Cli {
    /// JSON run configuration; missing keys take their defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override a config key by dot-path, e.g. `--set control.T=0.5` (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory (config key `output_dir`).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Seed for random data (config key `seeds.data`).
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Free nonlinear evolution of the configured initial wave.
    Simulate,
    /// Steer the configured initial wave to rest with a pressure supported in omega.
    Control,
    /// Run one module's property suite.
    Verify {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(suites::SUITES))]
        suite: String,
    },
    /// Ingham Gram matrix, high-frequency check and observability constant.
    Ingham,
    /// Observability constant on the configured window.
    Observe,
}

impl Cmd {
    fn name(&self) -> String {
        match self {
            Cmd::Simulate => "simulate".into(),
            Cmd::Control => "control".into(),
            Cmd::Verify { suite } => format!("verify {suite}"),
            Cmd::Ingham => "ingham".into(),
            Cmd::Observe => "observe".into(),
        }
    }
}

fn verify(suite: &str, cfg: &RunConfig, out: &Path) -> Result<(bool, Value)> {
    let checks = suites::run(suite, cfg)?;
    let pass = checks.iter().all(|c| c.pass);
    let report = json!({ "suite": suite, "pass": pass, "checks": checks });
    write_json(&out.join("report.json"), &report)?;
    let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name).collect();
    Ok((pass, json!({ "failed": failed })))
}

fn run(cli: Cli) -> Result<bool> {
    let cfg = config::resolve(&Overrides {
        file: cli.config.as_deref(),
        env: std::env::vars().collect(),
        set: &cli.set,
        out: cli.out.as_deref(),
        seed: cli.seed,
    })?;
    let out = cfg.output_dir.clone();
    std::fs::create_dir_all(&out).map_err(|e| ConfigError(format!("{}: {e}", out.display())))?;
    let manifest = json!({
        "command": cli.cmd.name(),
        "config": cfg,
        "versions": { "wavectl": env!("CARGO_PKG_VERSION"), "wwcontrol": wwcontrol::VERSION },
    });
    write_json(&out.join("manifest.json"), &manifest).context("writing manifest.json")?;
    let (pass, summary) = match &cli.cmd {
        Cmd::Simulate => commands::simulate(&cfg, &out)?,
        Cmd::Control => commands::control(&cfg, &out)?,
        Cmd::Verify { suite } => verify(suite, &cfg, &out)?,
        Cmd::Ingham => commands::ingham(&cfg, &out)?,
        Cmd::Observe => commands::observe(&cfg, &out)?,
    };
    println!("{} {}: {summary}", cli.cmd.name(), if pass { "PASS" } else { "FAIL" });
    Ok(pass)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) if e.downcast_ref::<ConfigError>().is_some() => {
            eprintln!("wavectl: {e:#}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("wavectl: {e:#}");
            ExitCode::from(1)
        }
    }
}
