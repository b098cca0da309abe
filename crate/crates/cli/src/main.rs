//! `poisson`: batch front end for the Poisson integrability toolkit.

mod commands;
mod config;
mod error;

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::Defaults;
use crate::error::CliError;

const AFTER_HELP: &str = "\
Structure sources:
  builtin:NAME?key=value&...   registry entry, e.g. builtin:su2_scaled?a=1+R^2
  FILE.json or inline JSON     {\"dim\": 3, \"pi\": {\"1,2\": \"x3\", ...}, \"params\": {...}}

Scan CSV columns:
  tau, area, dA_dtau, generators, r_N, flag
  Multi-valued cells are ';'-separated. r_N is a number, +inf (no nonzero period)
  or DENSE. flag is empty, DENSE, TRIVIAL (all generators zero) or DIP (local
  minimum of r_N, refined by the scan).

Exit codes: 0 success, 1 usage or input error, 2 validation failure, 3 numerical failure.";

#[derive(Debug, Parser)]
#[command(name = "poisson", version, about = "Integrability computations for Poisson structures", after_help = AFTER_HELP)]
pub struct Cli {
    /// Print every default tolerance and grid as JSON and exit.
    #[arg(long, global = true)]
    show_config: bool,
    /// Seed for the random Jacobi sampling.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Override the Jacobi gate tolerance.
    #[arg(long, global = true)]
    jacobi_tol: Option<f64>,
    /// Write the report here instead of stdout.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Args)]
pub struct OdeArgs {
    /// rk4 or rk45.
    #[arg(long)]
    method: Option<String>,
    /// Output intervals on [0, 1] (even).
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    atol: Option<f64>,
    #[arg(long)]
    rtol: Option<f64>,
    /// Largest admissible cotangent defect.
    #[arg(long)]
    defect_tol: Option<f64>,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// Sphere quadrature grid as THETAxPHI, e.g. 100x200.
    #[arg(long)]
    grid: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the Jacobi identity on seeded random points.
    Validate {
        source: String,
        /// Number of sample points.
        #[arg(long)]
        points: Option<usize>,
        /// Sampling box as LO:HI.
        #[arg(long = "box")]
        sample_box: Option<String>,
    },
    /// Bracket of two 1-forms at a point.
    Bracket {
        source: String,
        #[arg(long)]
        alpha: String,
        #[arg(long)]
        beta: String,
        #[arg(long)]
        at: String,
    },
    /// Anchor image of a 1-form.
    Sharp {
        source: String,
        #[arg(long)]
        alpha: String,
        #[arg(long)]
        at: Option<String>,
    },
    /// Hamiltonian vector field of a function.
    Hamiltonian {
        source: String,
        #[arg(long)]
        h: String,
        #[arg(long)]
        at: Option<String>,
    },
    /// Integrate a cotangent path from a time-dependent generator.
    Path {
        source: String,
        /// Components of a(t, x), comma-separated, using t and x1..xn.
        #[arg(long)]
        generator: String,
        #[arg(long)]
        x0: String,
        #[command(flatten)]
        ode: OdeArgs,
        /// Save the path samples as JSON for `transport` and `integrate-field`.
        #[arg(long)]
        save: Option<PathBuf>,
    },
    /// Integral of a vector field along a saved path.
    IntegrateField {
        source: String,
        #[arg(long)]
        path: String,
        /// Vector field components, comma-separated.
        #[arg(long, alias = "X")]
        field: String,
    },
    /// Parallel transport of a covector along a saved path.
    Transport {
        source: String,
        #[arg(long)]
        path: String,
        #[arg(long)]
        s0: String,
    },
    /// Variation of a path family, homotopy verdict and invariance identity.
    Variation {
        source: String,
        /// Family JSON: {"generator": [...], "x0": [...], "eps_grid": 41, "t_grid": 400}.
        #[arg(long)]
        family: String,
        /// Vector field for the invariance identity.
        #[arg(long, alias = "X")]
        field: Option<String>,
        /// Homotopy tolerance on the variation and endpoint spread.
        #[arg(long)]
        tol: Option<f64>,
        #[command(flatten)]
        ode: OdeArgs,
    },
    /// Leafwise symplectic area of a sphere.
    Area {
        source: String,
        /// Sphere family JSON: {"sigma": [expr(tau, theta, phi)...], "tau_range": [a, b]}.
        #[arg(long)]
        family: Option<String>,
        #[arg(long)]
        tau: f64,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Transverse variation of the symplectic area and the period it generates.
    AreaVariation {
        source: String,
        #[arg(long)]
        family: Option<String>,
        #[arg(long)]
        tau: f64,
        /// Step of the tau difference quotient.
        #[arg(long)]
        h: Option<f64>,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Period group report at one sphere.
    Monodromy {
        source: String,
        #[arg(long)]
        family: Option<String>,
        #[arg(long)]
        tau: f64,
        /// Also compute curvature periods: the registry splitting when given
        /// without a value, otherwise splitting JSON {"frame": [[...]], "forms": [[...]]}.
        #[arg(long, num_args = 0..=1, default_missing_value = "registry")]
        splitting: Option<String>,
        #[arg(long)]
        h: Option<f64>,
        #[command(flatten)]
        grid: GridArgs,
        /// Largest admissible denominator.
        #[arg(long)]
        q_bound: Option<u64>,
        /// Tolerance of rational ratio detection.
        #[arg(long)]
        rational_tol: Option<f64>,
        /// Generators at or below this magnitude count as zero.
        #[arg(long)]
        zero_tol: Option<f64>,
    },
    /// r_N along a sphere family with an integrability verdict.
    Scan {
        source: String,
        #[arg(long)]
        family: Option<String>,
        /// Transverse range LO:HI (defaults to the family range).
        #[arg(long)]
        tau_range: Option<String>,
        #[arg(long, default_value_t = 60)]
        samples: usize,
        #[arg(long)]
        threshold: Option<f64>,
        #[command(flatten)]
        grid: GridArgs,
        /// csv (verdict on stderr) or json.
        #[arg(long, default_value = "csv")]
        format: String,
    },
    /// Isotropy Lie algebra at a point.
    Isotropy {
        source: String,
        #[arg(long)]
        at: String,
        #[arg(long)]
        rank_tol: Option<f64>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut defaults = Defaults::default();
    defaults.jacobi_gate.seed = cli.seed;
    if let Some(tol) = cli.jacobi_tol {
        defaults.jacobi_gate.tol = tol;
    }
    let text = if cli.show_config {
        serde_json::to_string_pretty(&defaults).expect("defaults serialize")
    } else {
        let command = cli
            .command
            .ok_or_else(|| error::usage("no subcommand given; see --help"))?;
        commands::execute(command, &defaults)?
    };
    match cli.output {
        Some(path) => std::fs::write(path, text + "\n")?,
        None => {
            let mut out = std::io::stdout().lock();
            match writeln!(out, "{text}") {
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => {}
                other => other?,
            }
        }
    }
    Ok(())
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
