//! `riccati-lab`: solvers, simulations and convergence reports from the
//! command line. Reports are JSON on stdout (or `--out`); a one-line
//! summary goes to stderr.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

/// Exit status for command-line usage errors.
const EXIT_USAGE: u8 = 64;

#[derive(Debug, Parser)]
#[command(name = "riccati-lab", version, about = "Permanent and sampled-data Riccati solvers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Problem file (JSON) or a bundled benchmark name:
    /// scalar, double-integrator, random3.
    #[arg(long, global = true)]
    pub problem: Option<String>,

    /// Write the JSON report here instead of stdout. Trajectories and
    /// error tables go next to it as CSV.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[arg(long = "tol-ode", global = true)]
    pub tol_ode: Option<f64>,

    #[arg(long = "tol-quad", global = true)]
    pub tol_quad: Option<f64>,

    #[arg(long = "tol-are", global = true)]
    pub tol_are: Option<f64>,

    /// Sampling step.
    #[arg(long, global = true)]
    pub h: Option<f64>,

    /// Finite horizon.
    #[arg(long = "T", global = true)]
    pub t_final: Option<f64>,

    /// Number of sampling intervals (or random instances for oracle-check).
    #[arg(long = "N", global = true)]
    pub count: Option<usize>,

    /// Initial state, comma separated.
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    pub x0: Option<Vec<f64>>,

    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Permanent differential equation on [0, T].
    SolvePdre,
    /// Sampled-data difference equation on a partition of [0, T].
    SolveSddre,
    /// Permanent algebraic equation.
    SolvePare,
    /// Sampled-data algebraic equation for step h.
    SolveSdare,
    /// Closed-loop simulation; sampled when --h is given.
    Simulate,
    /// Dense QP oracle against the difference equation.
    OracleCheck,
    /// Convergence reports for one arrow or the full diagram.
    Diagram {
        #[arg(value_enum)]
        which: Which,
    },
    /// Sampling threshold hbar and cost constant cbar.
    Constants,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Which {
    Left,
    Bottom,
    Top,
    Right,
    All,
}

fn configure_threads() {
    if let Some(n) = std::env::var("RICCATI_LAB_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
    {
        // a second initialisation can only fail if a pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    configure_threads();
    commands::run(&cli)
}
