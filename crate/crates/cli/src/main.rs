#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod run;

/// Reaction-diffusion-chemotaxis solver on 1D networks.
#[derive(Debug, Parser)]
#[command(name = "netflux", version)]
struct Cli {
    /// Cap on worker threads for the element loop.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a simulation and write snapshots and diagnostics.
    Run(RunArgs),
    /// Heat-equation refinement study against the exact solution.
    Convergence(ConvergenceArgs),
    /// Draw the network with segment labels and node markers.
    PlotGeometry(PlotGeometryArgs),
    /// Check a configuration (and its geometry, if any) without running.
    ValidateConfig(ValidateArgs),
    /// Geometry utilities.
    #[command(subcommand)]
    Geometry(GeometryCommand),
}

#[derive(Debug, Subcommand)]
enum GeometryCommand {
    /// Print arcs, lengths and the connection table.
    Describe(GeometryArgs),
}

#[derive(Debug, Clone, Args)]
struct GeometryArgs {
    #[arg(long, requires = "lines")]
    points: Option<PathBuf>,
    #[arg(long, requires = "points")]
    lines: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    length_scale: f64,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Model name: `ks` or `ooc`.
    #[arg(long)]
    model: String,
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    geometry: GeometryArgs,
    /// Number of accepted steps.
    #[arg(long, conflicts_with = "t_final")]
    steps: Option<usize>,
    /// Final time, overriding the configuration.
    #[arg(long)]
    t_final: Option<f64>,
    /// Use the iteration-count step-size controller.
    #[arg(long)]
    adaptive: bool,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Write a snapshot every N accepted steps (0 disables).
    #[arg(long, default_value_t = 0)]
    snapshot_every: usize,
    /// Write bird's-eye SVGs of the final state.
    #[arg(long)]
    render: bool,
    /// Allow writing into a non-empty output directory.
    #[arg(long)]
    force: bool,
}

#[derive(Debug, Args)]
struct ConvergenceArgs {
    /// `space` (h-refinement, dt ~ h²) or `time` (dt-refinement).
    #[arg(long, default_value = "space")]
    sweep: String,
    /// Element counts for the spatial sweep.
    #[arg(long, value_delimiter = ',', default_values_t = [4usize, 8, 16, 32])]
    levels: Vec<usize>,
    /// Step counts for the temporal sweep.
    #[arg(long, value_delimiter = ',', default_values_t = [10usize, 20, 40, 80])]
    steps: Vec<usize>,
    /// Mesh for the temporal sweep.
    #[arg(long, default_value_t = 128)]
    elements: usize,
    /// dt = factor * h² in the spatial sweep.
    #[arg(long, default_value_t = 0.5)]
    dt_factor: f64,
    #[arg(long, default_value_t = 0.1)]
    t_final: f64,
}

#[derive(Debug, Args)]
struct PlotGeometryArgs {
    #[command(flatten)]
    geometry: GeometryArgs,
    /// Take the geometry from a configuration file instead.
    #[arg(long, conflicts_with = "points")]
    config: Option<PathBuf>,
    #[arg(long, default_value = "geometry.svg")]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long)]
    model: String,
    #[arg(long)]
    config: PathBuf,
}

/// Error carrying the process exit code.
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

pub trait ExitWith<T> {
    fn exit_with(self, code: u8) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> ExitWith<T> for Result<T, E> {
    fn exit_with(self, code: u8) -> Result<T, Failure> {
        self.map_err(|e| Failure { code, error: e.into() })
    }
}

pub const EXIT_INPUT: u8 = 1;
pub const EXIT_SOLVER: u8 = 2;
pub const EXIT_ORDER: u8 = 3;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_INPUT) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    let result = match cli.command {
        Command::Run(args) => run::cmd_run(&args),
        Command::Convergence(args) => commands::cmd_convergence(&args),
        Command::PlotGeometry(args) => commands::cmd_plot_geometry(&args),
        Command::ValidateConfig(args) => commands::cmd_validate_config(&args),
        Command::Geometry(GeometryCommand::Describe(args)) => commands::cmd_describe(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
