use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{CommandFactory, FromArgMatches, Parser};

use ncgn_cli::{config, run, Command, RunConfig};

/// Noise-conditioned graph networks: data, training, sampling, evaluation and studies.
#[derive(Debug, Parser)]
#[command(name = "ncgn", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// `key = value` configuration file.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set train.epochs=10`. Repeatable.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn thread_count() -> Option<usize> {
    let v = std::env::var("NCGN_THREADS").ok()?;
    match v.trim().parse() {
        Ok(n) if n > 0 => Some(n),
        _ => {
            log::warn!("ignoring NCGN_THREADS={v}");
            None
        }
    }
}

/// Parses the command line, with the key table appended to `--help`.
fn parse_cli() -> Cli {
    let help = format!("Configuration keys (key, default, meaning):\n{}", config::key_help());
    let mut cmd = Cli::command().after_help(help);
    let usage = cmd.render_usage();
    let matches = cmd.try_get_matches().unwrap_or_else(|e| {
        if e.use_stderr() && e.kind() != ErrorKind::MissingRequiredArgument {
            let _ = e.print();
            eprintln!("\n{usage}");
            std::process::exit(e.exit_code());
        }
        e.exit()
    });
    Cli::from_arg_matches(&matches).unwrap_or_else(|e| e.exit())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = parse_cli();
    if let Some(n) = thread_count() {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("cannot size the worker pool: {e}");
        }
    }
    let cfg = match RunConfig::parse(cli.config.as_deref(), &cli.overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    match run(cli.command, &cfg) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
