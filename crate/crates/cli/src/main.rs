#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use crate::commands::VerificationFailed;
use crate::config::{parse_config, ConfigErrors, Overrides};
use crate::output::Output;

#[derive(Parser, Debug)]
#[command(
    name = "screening",
    version,
    about = "Build, check and evaluate separating menus of statistical contracts"
)]
struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory. Overrides `output.dir` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Simulation seed. Overrides `simulation.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel sweeps. Results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Grid size for menu supports, frontier sweeps and sensitivity sweeps.
    #[arg(long, global = true)]
    grid: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Per-type optimal thresholds over the population (thresholds.csv).
    Thresholds,
    /// Construct the configured menu (menu.json, build.json).
    MenuBuild,
    /// Brute-force separation check of a menu file (verify.json).
    MenuVerify {
        /// Menu to check; defaults to <out>/menu.json.
        #[arg(long)]
        menu: Option<PathBuf>,
    },
    /// Oracle and single-threshold FDR/TDR curves (frontier.csv).
    Frontier,
    /// Screening cost, information rent and principal returns (evaluate.json, returns.csv).
    Evaluate {
        #[arg(long)]
        menu: Option<PathBuf>,
    },
    /// Monte Carlo agents facing the menu (simulate.json).
    Simulate {
        #[arg(long)]
        menu: Option<PathBuf>,
    },
    /// FDR gap of a constant-reward menu under misspecified power (sensitivity.csv).
    Sensitivity {
        #[arg(long)]
        menu: Option<PathBuf>,
    },
}

fn run(cli: &Cli) -> Result<String> {
    let path = cli.config.as_deref().ok_or_else(|| {
        ConfigErrors(vec![config::Issue {
            pointer: String::new(),
            message: "--config is required".into(),
        }])
    })?;
    let bytes = fs::read(path).with_context(|| format!("reading config {}", path.display()))?;
    let text = String::from_utf8(bytes.clone()).context("config is not UTF-8")?;
    let base = path.parent().unwrap_or(Path::new("."));
    if cli.grid.is_some_and(|g| g < 2) {
        return Err(ConfigErrors(vec![config::Issue {
            pointer: String::new(),
            message: "--grid must be at least 2".into(),
        }])
        .into());
    }
    let cfg = parse_config(
        &text,
        base,
        Overrides {
            seed: cli.seed,
            grid: cli.grid,
        },
    )?;
    let dir = cli
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let out = Output::new(dir, &bytes)?;
    match &cli.command {
        Command::Thresholds => commands::thresholds(&cfg, &out),
        Command::MenuBuild => commands::menu_build(&cfg, &out),
        Command::MenuVerify { menu } => {
            let p = menu.clone().unwrap_or_else(|| out.dir().join("menu.json"));
            commands::menu_verify(&cfg, &out, &p)
        }
        Command::Frontier => commands::frontier_cmd(&cfg, &out),
        Command::Evaluate { menu } => commands::evaluate(&cfg, &out, menu.as_deref()),
        Command::Simulate { menu } => commands::simulate(&cfg, &out, menu.as_deref()),
        Command::Sensitivity { menu } => commands::sensitivity(&cfg, &out, menu.as_deref()),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<ConfigErrors>().is_some() {
        return 2;
    }
    if err.downcast_ref::<VerificationFailed>().is_some() {
        return 4;
    }
    match err.downcast_ref::<screening_core::Error>() {
        Some(screening_core::Error::Infeasible { .. } | screening_core::Error::EmptyInterval { .. }) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(&cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
