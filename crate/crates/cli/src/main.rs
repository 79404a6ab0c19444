use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kspec::alignment::ThetaMode;
use kspec::bounds::Statistic;
use kspec::experiments::default_epsilons;
use kspec::kernel::KernelSpec;
use kspec::ErrorClass;

mod commands;
mod output;
mod svg;

use commands::{AlignArgs, AuditArgs, BoundsArgs, SimulateArgs};

/// Concentration bounds for kernel matrix spectra and target alignment.
#[derive(Parser)]
#[command(name = "kspec", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate every applicable bound on a dataset.
    Bounds {
        #[arg(long)]
        data: PathBuf,
        /// The data file starts with a header line.
        #[arg(long)]
        header: bool,
        /// gaussian:SIGMA, linear, poly:DEGREE:OFFSET or imq:OFFSET, optionally @LIPSCHITZ.
        #[arg(long, default_value = "gaussian:1")]
        kernel: KernelSpec,
        /// eig:I, topk:K, tail:K, evec:I or evec_uniform:I (1-based); repeatable.
        #[arg(long = "stat", default_value = "eig:1")]
        stats: Vec<Statistic>,
        /// Comma-separated epsilons; default is 40 log-spaced points in [1e-4, 1].
        #[arg(long, value_delimiter = ',')]
        eps: Vec<f64>,
        /// Use this theta instead of estimating it.
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long, default_value = "drop")]
        theta_mode: ThetaMode,
        /// Subtract the sample mean before computing covariance statistics.
        #[arg(long)]
        centered: bool,
        #[arg(long, default_value = "out/bounds")]
        out: PathBuf,
    },
    /// Run a Monte Carlo concentration experiment.
    Simulate {
        /// example1-fig2-top, example1-fig2-bottom or fig1-boxplot.
        #[arg(long)]
        preset: Option<String>,
        /// JSON experiment config (one object or an array).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, default_value = "out/simulate")]
        out: PathBuf,
        #[arg(long)]
        no_svg: bool,
    },
    /// Kernel target alignment and its concentration bounds.
    Align {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        header: bool,
        /// One-column CSV of +1/-1 labels.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Name of a label column in the data file (needs --header).
        #[arg(long)]
        label_col: Option<String>,
        #[arg(long, default_value = "gaussian:1")]
        kernel: KernelSpec,
        #[arg(long, default_value = "drop")]
        theta_mode: ThetaMode,
        #[arg(long, value_delimiter = ',')]
        eps: Vec<f64>,
        #[arg(long, default_value = "out/align")]
        out: PathBuf,
    },
    /// Brute-force perturbation oracles.
    Audit {
        /// Oracle preset; defaults to gaussian-p5.
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        oracle_trials: Option<usize>,
        /// Replace each sample by itself.
        #[arg(long)]
        zero_perturbation: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, default_value = "out/audit")]
        out: PathBuf,
    },
}

fn or_default_grid(eps: Vec<f64>) -> Vec<f64> {
    if eps.is_empty() {
        default_epsilons()
    } else {
        eps
    }
}

fn run(cli: Cli) -> kspec::Result<PathBuf> {
    match cli.command {
        Command::Bounds { data, header, kernel, stats, eps, theta, theta_mode, centered, out } => {
            commands::cmd_bounds(&BoundsArgs {
                data,
                header,
                kernel,
                stats,
                eps: or_default_grid(eps),
                theta,
                theta_mode,
                centered,
                out,
            })
        }
        Command::Simulate { preset, config, seed, trials, workers, out, no_svg } => {
            commands::cmd_simulate(&SimulateArgs { preset, config, seed, trials, workers, out, no_svg })
        }
        Command::Align { data, header, labels, label_col, kernel, theta_mode, eps, out } => {
            commands::cmd_align(&AlignArgs {
                data,
                header,
                labels,
                label_col,
                kernel,
                theta_mode,
                eps: or_default_grid(eps),
                out,
            })
        }
        Command::Audit { preset, config, oracle_trials, zero_perturbation, seed, workers, out } => {
            commands::cmd_audit(&AuditArgs {
                preset,
                config,
                oracle_trials,
                zero_perturbation,
                seed,
                workers,
                out,
            })
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(dir) => {
            println!("wrote {}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Config => 2,
                ErrorClass::Data => 3,
                ErrorClass::Numerical => 4,
            })
        }
    }
}
