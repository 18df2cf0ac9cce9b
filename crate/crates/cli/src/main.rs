//! `dvbda`: batch estimation of D-vine copula time-series models.

mod commands;
mod error;
mod fitfile;
mod input;
mod plot;

use clap::{Args, Parser, Subcommand, ValueEnum};
use commands::{DgpKind, McmcOptions, Status, VbOptions};
use error::{CliError, CliResult};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "dvbda", version, about = "D-vine copula time-series models by variational Bayes data augmentation")]
struct Cli {
    /// Worker threads; defaults to all available cores.
    #[arg(long, global = true, env = "DVBDA_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct VbArgs {
    /// Data CSV with a header row.
    #[arg(long)]
    input: PathBuf,
    /// Pair-copula family.
    #[arg(long, default_value = commands::FAMILY)]
    family: String,
    /// Markov order.
    #[arg(long, default_value_t = 1)]
    p: usize,
    /// Factors in the parameter approximation.
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// Monte Carlo samples per step.
    #[arg(long, default_value_t = 500)]
    s: usize,
    /// Number of VB steps.
    #[arg(long, default_value_t = 5000)]
    steps: usize,
    /// Latent approximation: 1, 2 or 3.
    #[arg(long, default_value_t = 3)]
    va: u8,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON array of margins, one per series; empirical margins otherwise.
    #[arg(long)]
    margins: Option<PathBuf>,
    /// Fit JSON to write.
    #[arg(long)]
    output: PathBuf,
    /// Lower-bound trace CSV; defaults to `<output stem>_lb_trace.csv`.
    #[arg(long)]
    lb_trace: Option<PathBuf>,
    /// Checkpoint file, resumed from when it exists.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Autologistic,
    Dvine,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a univariate series by VBDA.
    FitUni {
        #[command(flatten)]
        args: VbArgs,
        /// Series type: discrete or continuous.
        #[arg(long = "type", default_value = "discrete")]
        kind: String,
    },
    /// Fit a multivariate series by VBDA.
    FitMulti {
        #[command(flatten)]
        args: VbArgs,
        /// Comma-separated series types, one per column.
        #[arg(long)]
        types: String,
    },
    /// Fit by MCMC data augmentation.
    McmcFit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "discrete")]
        types: String,
        #[arg(long, default_value = commands::FAMILY)]
        family: String,
        #[arg(long, default_value_t = 1)]
        p: usize,
        #[arg(long, default_value_t = 10_000)]
        burnin: usize,
        #[arg(long, default_value_t = 20_000)]
        iterates: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        margins: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
        /// Draws CSV; defaults to `<output stem>_draws.csv`.
        #[arg(long)]
        draws: Option<PathBuf>,
    },
    /// Simulate from the predictive distribution of a fit.
    Predict {
        #[arg(long)]
        fit: PathBuf,
        #[arg(long, default_value_t = 1)]
        horizon: usize,
        /// Number of predictive draws.
        #[arg(long, default_value_t = 1000)]
        draws: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Posterior Spearman correlations of a fit.
    Spearman {
        #[arg(long)]
        fit: PathBuf,
        /// Simulated pairs per parameter draw.
        #[arg(long, default_value_t = 100_000)]
        n_sim: usize,
        #[arg(long, default_value_t = 200)]
        param_draws: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV report.
        #[arg(long)]
        output: PathBuf,
        /// JSON report; defaults to the CSV path with a .json extension.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Simulate a series from a known process.
    SimulateDgp {
        #[arg(long, value_enum)]
        kind: Kind,
        /// Series length.
        #[arg(long)]
        t: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = -2.197, allow_hyphen_values = true)]
        intercept: f64,
        #[arg(long, default_value_t = 4.394, allow_hyphen_values = true)]
        slope: f64,
        /// D-vine spec JSON (dvine kind).
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Margins JSON (dvine kind).
        #[arg(long)]
        margins: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Tidy CSV tables for plots.
    Plotdata {
        /// Fit files; repeat for several.
        #[arg(long, required = true)]
        fit: Vec<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Posterior summaries of the pair-copula parameters.
    Summary {
        #[arg(long)]
        fit: PathBuf,
        /// Variational draws used for the summary.
        #[arg(long, default_value_t = 1000)]
        draws: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn vb_options(a: VbArgs, types: String) -> VbOptions {
    VbOptions {
        input: a.input,
        types,
        family: a.family,
        p: a.p,
        k: a.k,
        s: a.s,
        steps: a.steps,
        va: a.va,
        seed: a.seed,
        margins: a.margins,
        output: a.output,
        lb_trace: a.lb_trace,
        checkpoint: a.checkpoint,
    }
}

fn run(command: Command) -> CliResult<Status> {
    match command {
        Command::FitUni { args, kind } => commands::fit_vb("fit-uni", &vb_options(args, kind)),
        Command::FitMulti { args, types } => commands::fit_vb("fit-multi", &vb_options(args, types)),
        Command::McmcFit {
            input,
            types,
            family,
            p,
            burnin,
            iterates,
            seed,
            margins,
            output,
            draws,
        } => commands::fit_mcmc(&McmcOptions {
            input,
            types,
            family,
            p,
            burnin,
            iterates,
            seed,
            margins,
            output,
            draws,
        }),
        Command::Predict {
            fit,
            horizon,
            draws,
            seed,
            output,
        } => commands::cmd_predict(&fit, horizon, draws, seed, &output),
        Command::Spearman {
            fit,
            n_sim,
            param_draws,
            seed,
            output,
            json,
        } => commands::cmd_spearman(&fit, n_sim, param_draws, seed, &output, json.as_deref()),
        Command::SimulateDgp {
            kind,
            t,
            seed,
            intercept,
            slope,
            spec,
            margins,
            output,
        } => {
            let kind = match kind {
                Kind::Autologistic => DgpKind::Autologistic { intercept, slope },
                Kind::Dvine => DgpKind::Dvine {
                    spec: spec.ok_or_else(|| CliError::input("--spec is required for the dvine kind"))?,
                    margins: margins.ok_or_else(|| CliError::input("--margins is required for the dvine kind"))?,
                },
            };
            commands::cmd_simulate(&kind, t, seed, &output)
        }
        Command::Plotdata { fit, out_dir } => plot::cmd_plotdata(&fit, &out_dir),
        Command::Summary {
            fit,
            draws,
            seed,
            output,
        } => commands::cmd_summary(&fit, draws, seed, output.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads == Some(0) {
        eprintln!("input error: --threads must be at least 1");
        return ExitCode::from(2);
    }
    let outcome = dvine_vbda::parallel::with_threads(cli.threads, || run(cli.command));
    match outcome.map_err(CliError::from).and_then(|r| r) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Stuck) => ExitCode::from(4),
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
