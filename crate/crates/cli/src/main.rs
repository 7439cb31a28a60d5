//! `infnote` operator command line.

mod args;
mod commands;
mod config;
mod error;

use std::process::ExitCode;

use clap::Parser;
use serde_json::json;

use args::Cli;
use error::CliError;

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_env("INFNOTE_LOG"))
        .with_writer(std::io::stderr)
        .init();
    let json = cli.json;
    match execute(cli) {
        Ok(out) => {
            if json {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&out.json).expect("json output serializes")
                );
            } else if !out.text.is_empty() {
                println!("{}", out.text);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            if json {
                println!("{}", json!({"error": e.code, "detail": e.message}));
            } else {
                eprintln!("error: {e}");
            }
            ExitCode::from(1)
        }
    }
}

fn execute(cli: Cli) -> Result<commands::Output, CliError> {
    let vars: Vec<(String, String)> = std::env::vars().collect();
    let cwd = std::env::current_dir()?;
    let config = config::resolve_config(cli.config.as_deref(), cli.data_dir.as_deref(), &vars, &cwd)?;
    commands::run(cli.command, config)
}
