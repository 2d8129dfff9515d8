use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{info, warn};

use convexify::error::{Error, ErrorClass};
use convexify::harness::{load_problem, run_command, Command};

const EXIT_CONFIG: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "convexify", version)]
#[command(about = "Carleman-weighted Tikhonov reconstruction for Cauchy problems")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// Directory for report.json, history.csv and field.csv
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Minimize the functional at [functional] lambda
    Solve { config: PathBuf },
    /// Run the convexity certificate sweep (plus multi-start and Carleman ratios if configured)
    Certify {
        config: PathBuf,
        /// Exit with status 2 when no lambda passes
        #[arg(long)]
        require_certificate: bool,
    },
    /// Finite-difference gradient and adjoint checks
    Gradcheck { config: PathBuf },
    /// Independent solves over a lambda list
    Sweep {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
        lambda: Vec<f64>,
    },
}

fn exit_for(err: &Error) -> u8 {
    match err.class() {
        ErrorClass::Config => EXIT_CONFIG,
        ErrorClass::Numerical => EXIT_NUMERICAL,
        ErrorClass::Io => EXIT_IO,
    }
}

fn configure_threads() {
    let Ok(value) = std::env::var("THREADS") else {
        return;
    };
    match value.trim().parse::<usize>() {
        Ok(n) if n > 0 => {
            if let Err(e) = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
            {
                warn!("THREADS={n} ignored: {e}");
            }
        }
        _ => warn!("THREADS={value:?} is not a positive integer; using the default pool"),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    configure_threads();

    let (config, command, strict) = match cli.command {
        Cmd::Solve { config } => (config, Command::Solve, true),
        Cmd::Certify {
            config,
            require_certificate,
        } => (config, Command::Certify, require_certificate),
        Cmd::Gradcheck { config } => (config, Command::Gradcheck, true),
        Cmd::Sweep { config, lambda } => (config, Command::Sweep(lambda), true),
    };

    let setup = match load_problem(&config) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_for(&e));
        }
    };
    info!(
        "{}: {} masked nodes",
        setup.name(),
        setup.mask.counts().masked()
    );

    match run_command(&command, &setup, &cli.out) {
        Ok(out) => {
            println!("{}", out.summary);
            println!("wrote {}", out.files.report.display());
            if !out.success {
                if strict {
                    eprintln!("error: {} did not succeed", command.name());
                    return ExitCode::from(EXIT_NUMERICAL);
                }
                warn!("{} did not succeed", command.name());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_for(&e))
        }
    }
}
