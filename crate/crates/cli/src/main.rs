use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use passm_cli::commands::{cmd_compare, cmd_diag, cmd_run, cmd_validate, DiagParams, Diagnostic};
use passm_cli::config::Overrides;
use passm_cli::CliError;

/// Asynchronous momentum subgradient runs: simulate or execute, log,
/// diagnose and compare.
#[derive(Parser)]
#[command(name = "passm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunFlags {
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Caps the number of cores.
    #[arg(long)]
    threads: Option<usize>,
}

impl RunFlags {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            threads: self.threads,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    Interpolation,
    Gaps,
    Martingale,
    Bias,
    Fraction,
}

impl From<Which> for Diagnostic {
    fn from(w: Which) -> Self {
        match w {
            Which::Interpolation => Diagnostic::Interpolation,
            Which::Gaps => Diagnostic::Gaps,
            Which::Martingale => Diagnostic::Martingale,
            Which::Bias => Diagnostic::Bias,
            Which::Fraction => Diagnostic::Fraction,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Execute a run from a TOML config, or replay the header of a run log.
    Run {
        config: PathBuf,
        #[command(flatten)]
        flags: RunFlags,
        /// Log path; defaults to the config's `output.log` or `<stem>.log`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the schedule and dry-run the asynchrony model.
    Validate {
        config: PathBuf,
        #[command(flatten)]
        flags: RunFlags,
        /// Number of generated events.
        #[arg(long, default_value_t = 10_000)]
        events: usize,
    },
    /// Write diagnostic CSVs computed from a run log.
    Diag {
        log: PathBuf,
        which: Which,
        /// Interpolation start time.
        #[arg(long, default_value_t = 0.0)]
        sigma: f64,
        /// Iterations between gap evaluations.
        #[arg(long)]
        stride: Option<usize>,
        /// Gap thresholds for the time fraction; `inf` is allowed.
        #[arg(long, value_delimiter = ',', default_values_t = [0.01, 0.05, 0.1, f64::INFINITY])]
        eps: Vec<f64>,
        #[arg(long)]
        from: Option<f64>,
        #[arg(long)]
        to: Option<f64>,
        /// Overrides the problem's gap radius.
        #[arg(long)]
        gap_radius: Option<f64>,
        /// Defaults to `PASSM_OUT_DIR`, then the log's directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Summarize two or more logs of the same problem.
    Compare {
        #[arg(required = true, num_args = 2..)]
        logs: Vec<PathBuf>,
    },
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config, flags, out } => {
            let outcome = cmd_run(&config, flags.overrides(), out.as_deref())?;
            let f = &outcome.footer;
            println!(
                "{}: {} iterations, loss {:.6e}, gap {:.3e}, {:.3} s",
                outcome.log.display(),
                f.iterations,
                f.final_loss,
                f.final_gap,
                f.wall.elapsed_s
            );
        }
        Command::Validate { config, flags, events } => {
            cmd_validate(&config, flags.overrides(), events, &mut std::io::stdout().lock())?;
        }
        Command::Diag {
            log,
            which,
            sigma,
            stride,
            eps,
            from,
            to,
            gap_radius,
            out_dir,
        } => {
            let params = DiagParams {
                sigma,
                stride,
                eps,
                from,
                to,
                gap_radius,
                out_dir,
            };
            for path in cmd_diag(&log, which.into(), &params)? {
                println!("{}", path.display());
            }
        }
        Command::Compare { logs } => print!("{}", cmd_compare(&logs)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
