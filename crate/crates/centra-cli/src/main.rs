//! `centra` experiment runner: `centra run <config> [--set k=v ...] [--out path]`.
//!
//! Exit codes: 0 success, 2 config error, 3 pipeline error.

mod config;
mod pipelines;

use clap::{Parser, Subcommand};
use config::Config;
use pipelines::PipelineError;

#[derive(Parser)]
#[command(name = "centra", about = "Reproducible graph-ML experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        /// Path to the key-value config file.
        config: std::path::PathBuf,
        /// Override config keys, e.g. --set cluster.seeds=10
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Report destination (defaults to the config's `output` key, else stdout).
        #[arg(long = "out", value_name = "PATH")]
        out: Option<std::path::PathBuf>,
    },
}

fn main() {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { config, set, out } => run(config, set, out),
    };
    std::process::exit(code);
}

fn run(path: std::path::PathBuf, sets: Vec<String>, out: Option<std::path::PathBuf>) -> i32 {
    let text = match std::fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("config error: cannot read `{}`: {e}", path.display());
            return 2;
        }
    };
    let mut cfg = match Config::parse(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return 2;
        }
    };
    for s in &sets {
        if let Err(e) = cfg.apply_override(s) {
            eprintln!("config error: {e}");
            return 2;
        }
    }
    let report = match pipelines::run(&cfg) {
        Ok(r) => r,
        Err(PipelineError::Config(e)) => {
            eprintln!("config error: {e}");
            return 2;
        }
        Err(PipelineError::Run(e)) => {
            eprintln!("pipeline error: {e}");
            return 3;
        }
    };
    let rendered = serde_json::to_string_pretty(&report).expect("report serializes");
    let destination = out.or_else(|| {
        report
            .get("config")
            .and_then(|c| c.get("output"))
            .and_then(|v| v.as_str())
            .map(std::path::PathBuf::from)
    });
    match destination {
        Some(p) => {
            if let Err(e) = std::fs::write(&p, rendered) {
                eprintln!("pipeline error: cannot write report `{}`: {e}", p.display());
                return 3;
            }
            println!("report written to {}", p.display());
        }
        None => println!("{rendered}"),
    }
    0
}
