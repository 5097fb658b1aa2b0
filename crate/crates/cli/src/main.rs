//! `nlac`: experiments on the nonlocal Allen-Cahn energy.
//!
//! Exit codes: 0 when every assertion holds, 2 when one fails, 1 on usage
//! or configuration errors.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use commands::Context;
use report::Output;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] nonlocal_core::error::Error),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config(_) => "config",
            CliError::Core(_) => "parameter",
            CliError::Io(_) => "io",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "nlac", version, about = "Numerical experiments on the nonlocal Allen-Cahn energy")]
struct Cli {
    /// JSON configuration; defaults apply to every omitted field.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed of the randomized suites (overrides `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Override one config field, e.g. `--set model.s=0.4`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Minimize the energy on the configured grid.
    Minimize,
    /// Volume, doubling, density and energy-growth tables of minimizers on balls.
    Density,
    /// Sobolev inequality chain for the input function.
    SobolevCheck {
        /// Grid function file, or `builtin:chi_unit_interval`.
        #[arg(long)]
        input: Option<String>,
    },
    /// Level-set profile, OS2 and the summation lemma.
    Levelset {
        #[arg(long)]
        input: Option<String>,
    },
    /// Set version of the Sobolev inequality and the complement integral.
    SetSobolev {
        #[arg(long)]
        input: Option<String>,
    },
    /// Barrier construction and its two inequalities.
    BarrierVerify,
    /// Growth recursion hypothesis and the propagated lower bound.
    Recursion,
    /// Structural conditions on W and its growth constant.
    GrowConstant,
    /// Timings of the direct interaction sum.
    Bench,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Minimize => "minimize",
            Command::Density => "density",
            Command::SobolevCheck { .. } => "sobolev-check",
            Command::Levelset { .. } => "levelset",
            Command::SetSobolev { .. } => "set-sobolev",
            Command::BarrierVerify => "barrier-verify",
            Command::Recursion => "recursion",
            Command::GrowConstant => "grow-constant",
            Command::Bench => "bench",
        }
    }

    fn input(&self) -> Option<&str> {
        match self {
            Command::SobolevCheck { input } | Command::Levelset { input } | Command::SetSobolev { input } => {
                input.as_deref()
            }
            _ => None,
        }
    }
}

fn run(cli: Cli) -> Result<bool, CliError> {
    let mut overrides = cli.overrides.clone();
    if let Some(out) = &cli.out {
        overrides.push(format!("out={}", json!(out.to_string_lossy())));
    }
    if let Some(seed) = cli.seed {
        overrides.push(format!("seed={seed}"));
    }
    if let Some(input) = cli.command.input() {
        overrides.push(format!("input={}", json!(input)));
    }
    let (cfg, hash) = config::load(cli.config.as_deref(), &overrides)?;
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let base = cli.config.as_deref().and_then(|p| p.parent());
    let mut ctx = Context {
        cfg: &cfg,
        hash: &hash,
        base,
        out: Output::create(&cfg.out)?,
    };
    let reasons = match cli.command {
        Command::Minimize => commands::minimize_cmd(&mut ctx),
        Command::Density => commands::density_cmd(&mut ctx),
        Command::SobolevCheck { .. } => commands::sobolev_cmd(&mut ctx),
        Command::Levelset { .. } => commands::levelset_cmd(&mut ctx),
        Command::SetSobolev { .. } => commands::set_sobolev_cmd(&mut ctx),
        Command::BarrierVerify => commands::barrier_cmd(&mut ctx),
        Command::Recursion => commands::recursion_cmd(&mut ctx),
        Command::GrowConstant => commands::grow_constant_cmd(&mut ctx),
        Command::Bench => commands::bench_cmd(&mut ctx),
    }?;
    for r in &reasons {
        eprintln!("FAIL {}: {}", r.check, r.detail);
    }
    println!(
        "{}: {} ({})",
        cfg.out.join("summary.json").display(),
        if reasons.is_empty() { "pass" } else { "fail" },
        hash
    );
    Ok(reasons.is_empty())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let command = cli.command.name();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            eprintln!(
                "{}",
                json!({ "status": "error", "command": command, "kind": e.kind(), "message": e.to_string() })
            );
            if matches!(e, CliError::Usage(_)) {
                eprintln!("usage: nlac [--config PATH] [--out DIR] [--seed N] [--threads N] <SUBCOMMAND>");
            }
            ExitCode::from(1)
        }
    }
}
