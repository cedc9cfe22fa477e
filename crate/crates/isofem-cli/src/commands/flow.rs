//! `isofem flow ...`: mean curvature flow runs with per-step timing logs
//! and mesh snapshots.

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use clap::{Args, Subcommand, ValueEnum};

use isofem::geomflow::{flow_driver, write_flow_csv, FlowAlgorithm, FlowInit, FlowOptions};
use isofem::mesh::read_mesh;

use crate::{CliError, CliResult};

#[derive(Subcommand)]
pub enum FlowCommand {
    /// Linearly implicit Euler discretisation of mean curvature flow.
    Dziuk(FlowArgs),
    /// Coupled normal/curvature system with linearly implicit BDF.
    Kll(FlowArgs),
}

#[derive(Args)]
pub struct FlowArgs {
    mesh: PathBuf,
    /// Time step.
    #[arg(long)]
    tau: f64,
    /// Final time.
    #[arg(long = "T")]
    t_end: f64,
    /// BDF order for the coupled flow (1 or 2).
    #[arg(long, default_value_t = 2)]
    bdf: usize,
    /// Snapshot interval in steps (0: first and last only).
    #[arg(long, default_value_t = 0)]
    snap_every: usize,
    /// Initial normal/curvature data for the coupled flow.
    #[arg(long, value_enum, default_value_t = InitChoice::Auto)]
    init: InitChoice,
    /// Timing log CSV (stdout when omitted).
    #[arg(long)]
    log: Option<PathBuf>,
    /// Snapshot directory (one ellmesh per snapshot).
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum InitChoice {
    Auto,
    Sphere,
    Discrete,
}

pub fn run(cmd: FlowCommand) -> CliResult {
    let (args, algorithm) = match &cmd {
        FlowCommand::Dziuk(a) => (a, FlowAlgorithm::Dziuk),
        FlowCommand::Kll(a) => (a, FlowAlgorithm::Kll),
    };
    if args.tau <= 0.0 && args.t_end > 0.0 {
        return Err(CliError::Usage("--tau must be positive".into()));
    }
    let mesh = read_mesh(&args.mesh)?;
    let opts = FlowOptions {
        algorithm,
        tau: args.tau,
        t_end: args.t_end,
        bdf_order: args.bdf,
        snap_every: args.snap_every,
        init: match args.init {
            InitChoice::Auto => FlowInit::Auto,
            InitChoice::Sphere => FlowInit::Sphere,
            InitChoice::Discrete => FlowInit::Discrete,
        },
    };
    let result = flow_driver(&mesh, &opts)?;

    match &args.log {
        Some(path) => {
            write_flow_csv(&result.rows, BufWriter::new(File::create(path)?))?;
            println!("wrote {}", path.display());
        }
        None => write_flow_csv(&result.rows, std::io::stdout().lock())?,
    }
    if let Some(dir) = &args.out_dir {
        result.write_snapshots(dir)?;
        println!("wrote {} snapshot(s) to {}", result.snapshots.len(), dir.display());
    }
    let last = result.rows.last().expect("at least the initial row");
    println!(
        "steps {} | total {:.3}s | assembly {:.3}s ({:.1}%) | solve {:.3}s | final area {:.6} | final mean radius {:.6}",
        last.step,
        result.total_s,
        result.assembly_total_s,
        100.0 * result.assembly_fraction(),
        result.solve_total_s,
        last.area,
        last.mean_radius,
    );
    if !result.completed {
        return Err(CliError::Numerical(
            result.stop_reason.unwrap_or_else(|| "flow stopped early".into()),
        ));
    }
    Ok(())
}
