//! `vastzones`: run sound-zone experiments described in TOML files.

mod cache;
mod config;
mod output;
mod run;
mod signals;
mod validate;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "vastzones", version, about = "Sound-zone control experiments with VAST filters")]
struct Cli {
    /// Edit a config value before use, e.g. `method.j=32` (repeatable).
    #[arg(long = "override", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory; replaces `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render every configured method and write the artifacts.
    Run { config: PathBuf },
    /// Check a config without rendering.
    Validate { config: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Validate { config } => {
            let cfg = config::load(&config, &cli.overrides)?;
            let report = validate::validate(&cfg);
            println!("{report}");
            Ok(if report.errors() > 0 { ExitCode::FAILURE } else { ExitCode::SUCCESS })
        }
        Command::Run { config } => {
            let cfg = config::load(&config, &cli.overrides)?;
            let opts = run::RunOptions { out: cli.out, cache_dir: run::cache_dir_from_env() };
            let summary = run::run(&cfg, &opts)?;
            println!(
                "wrote {} files to {} ({} failed stage(s))",
                summary.files.len(),
                summary.out_dir.display(),
                summary.failures
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}
