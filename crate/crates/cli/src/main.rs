use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use heterotune::config::{parse_config, DEFAULTS_HELP};
use heterotune::fedsim::run_experiment;
use heterotune::{verify, Error, ErrorKind};
use log::info;

mod report;

const EXIT_CODES: &str = "\
Exit codes:
  0   success
  1   verify: at least one check failed
  2   config error (missing file, parse error, constraint violation)
  3   data error (IDX format, empty data, infeasible partition)
  4   numeric error (shape mismatch, non-finite loss)
  5   protocol error (update violates the upload contract)
  6   I/O error (writing outputs or checkpoints)
  64  command-line usage error

Logging: HETEROTUNE_LOG=error|info|debug (default error).";

#[derive(Parser, Debug)]
#[command(
    name = "heterotune",
    version,
    about = "Federated adapter tuning across heterogeneous frozen models"
)]
#[command(after_help = format!("{DEFAULTS_HELP}\n\n{EXIT_CODES}"))]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        config: PathBuf,
        /// Client-level worker threads; results do not depend on this.
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
        workers: u16,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the built-in numerical and protocol checks.
    Verify,
}

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
        ErrorKind::Numeric => 4,
        ErrorKind::Protocol => 5,
        ErrorKind::Io => 6,
    }
}

fn cmd_run(
    config: PathBuf,
    workers: usize,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<(), Error> {
    let mut cfg = parse_config(&config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(dir) = out {
        cfg.output.dir = dir;
    }
    let start = Instant::now();
    let outcome = run_experiment(&cfg, workers)?;
    report::write_outputs(&cfg.output.dir, &cfg, &outcome)?;
    info!("finished in {:.1}s", start.elapsed().as_secs_f64());
    let s = report::summary(&cfg, &outcome);
    println!(
        "{} seed {}: small {:.4}  large {:.4}  avg {:.4}  -> {}",
        s.mode,
        s.seed,
        s.small,
        s.large,
        s.avg,
        cfg.output.dir.display()
    );
    Ok(())
}

fn cmd_verify() -> bool {
    let results = verify::run_all();
    let width = results.iter().map(|c| c.name.len()).max().unwrap_or(0);
    for c in &results {
        println!(
            "{:<width$}  {}  {:>6.2}s  {}",
            c.name,
            if c.passed { "PASS" } else { "FAIL" },
            c.seconds,
            c.detail
        );
    }
    let failed: Vec<_> = results
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.name)
        .collect();
    if failed.is_empty() {
        println!("all {} checks passed", results.len());
        true
    } else {
        println!("failed: {}", failed.join(", "));
        false
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("HETEROTUNE_LOG", "error"))
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(64)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match cli.command {
        Command::Run {
            config,
            workers,
            seed,
            out,
        } => match cmd_run(config, workers as usize, seed, out) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(exit_code(&e))
            }
        },
        Command::Verify => {
            if cmd_verify() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
    }
}
