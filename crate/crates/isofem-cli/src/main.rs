//! Command-line driver: mesh tooling, elliptic solves, mean curvature
//! flows and the assembly benchmark harness.
//!
//! Exit codes: 0 ok, 2 usage, 3 data, 4 numerical failure.

mod commands;
mod expr;

use clap::{Parser, Subcommand};

use isofem::Error;

#[derive(Parser)]
#[command(name = "isofem", version, about = "Batched isoparametric finite elements")]
struct Cli {
    /// Cap the worker pool (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mesh generation, preprocessing, lifting and validation.
    #[command(subcommand)]
    Mesh(commands::mesh::MeshCommand),
    /// Elliptic problem drivers with optional convergence studies.
    #[command(subcommand)]
    Solve(commands::solve::SolveCommand),
    /// Mean curvature flow drivers.
    #[command(subcommand)]
    Flow(commands::flow::FlowCommand),
    /// Runtime experiments.
    #[command(subcommand)]
    Bench(commands::bench::BenchCommand),
}

fn main() {
    // keep large buffers pooled across assembly runs; benchmark repeats
    // would otherwise spend most of their time faulting fresh pages
    unsafe {
        libc::mallopt(libc::M_MMAP_THRESHOLD, 1 << 30);
        libc::mallopt(libc::M_TRIM_THRESHOLD, -1);
    }
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        // a failure here only means the pool was already initialized
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    let result = match cli.command {
        Command::Mesh(cmd) => commands::mesh::run(cmd),
        Command::Solve(cmd) => commands::solve::run(cmd),
        Command::Flow(cmd) => commands::flow::run(cmd),
        Command::Bench(cmd) => commands::bench::run(cmd),
    };
    match result {
        Ok(()) => {}
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(exit_code(&err));
        }
    }
}

/// 2 usage, 3 data, 4 numerical.
fn exit_code(err: &CliError) -> i32 {
    match err {
        CliError::Usage(_) => 2,
        CliError::Data(_) => 3,
        CliError::Numerical(_) => 4,
        CliError::Lib(e) => match e {
            Error::UnsupportedElement { .. } | Error::Precondition(_) => 2,
            Error::Parse { .. }
            | Error::Io(_)
            | Error::DimensionMismatch(_)
            | Error::IndexOutOfRange { .. }
            | Error::OutsideReference
            | Error::Resource { .. } => 3,
            Error::DegenerateElement { .. }
            | Error::NonFinite { .. }
            | Error::NoConvergence { .. }
            | Error::NotPositiveDefinite { .. }
            | Error::LiftFailed { .. } => 4,
        },
    }
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numerical(String),
    Lib(Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numerical(m) => {
                write!(f, "{m}")
            }
            CliError::Lib(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Lib(Error::Io(e))
    }
}

pub type CliResult = Result<(), CliError>;
