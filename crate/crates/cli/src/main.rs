use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use waveguide_cli::{parse_config, run_subcommand, CliError, Subcommand};

/// Point interactions in a straight Dirichlet tube.
///
/// Units: ħ = 2m = 1, lengths in the units of the configuration file,
/// energies in inverse length squared.
#[derive(Debug, Parser)]
#[command(name = "waveguide", version)]
struct Args {
    #[arg(value_enum)]
    subcommand: Subcommand,
    /// Run configuration (flat `key = value` file).
    #[arg(long)]
    config: PathBuf,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads for sweeps (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

fn init_logging() -> Result<(), String> {
    let level = std::env::var("WAVEGUIDE_LOG").unwrap_or_else(|_| "error".into());
    if !matches!(level.as_str(), "error" | "info" | "debug") {
        return Err(format!("WAVEGUIDE_LOG must be error, info or debug, got `{level}`"));
    }
    env_logger::Builder::new().parse_filters(&level).format_timestamp(None).init();
    Ok(())
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Err(msg) = init_logging() {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    if let Some(n) = args.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start the thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    let result = parse_config(&args.config).map_err(CliError::from).and_then(|c| run_subcommand(args.subcommand, &c, &args.out));
    match result {
        Ok(summary) => {
            eprintln!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
