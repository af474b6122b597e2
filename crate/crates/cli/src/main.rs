use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use fibrot_cli::{load, run, Command};

/// Spectral scans of block Schrödinger operators over ergodic bases.
#[derive(Debug, Parser)]
#[command(name = "fibrot", version)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// JSON run configuration.
    #[arg(long, short)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, short, default_value_t = default_workers())]
    workers: usize,
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = load(args.command, &args.config, args.out, args.workers).and_then(|inv| run(&inv));
    match result {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
