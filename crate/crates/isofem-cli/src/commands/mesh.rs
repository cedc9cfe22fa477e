//! `isofem mesh ...`: generators, P1 -> P2 preprocessing, lifting,
//! validation.

use std::path::PathBuf;

use clap::{Args, Subcommand, ValueEnum};

use isofem::mesh::{
    generate_ball, generate_circle, generate_disk, generate_sphere, lift_nodes, mesh_preprocess,
    read_mesh, validate, write_mesh, ImplicitSurface, Mesh,
};

use crate::{CliError, CliResult};

#[derive(Subcommand)]
pub enum MeshCommand {
    /// Generate an analytic mesh.
    Gen(GenArgs),
    /// Raise a P1 mesh to P2, optionally lifting new nodes onto a surface.
    Preprocess(PreprocessArgs),
    /// Lift all nodes of a mesh onto an implicit surface.
    Lift(LiftArgs),
    /// Check mesh invariants and report violations.
    Validate { file: PathBuf },
}

#[derive(Args)]
pub struct GenArgs {
    #[arg(value_enum)]
    shape: Shape,
    /// Icosphere subdivision level (sphere).
    #[arg(long, default_value_t = 0)]
    refine: usize,
    /// Segment count (circle).
    #[arg(long, default_value_t = 16)]
    nseg: usize,
    /// Target maximum element diameter (disk, ball).
    #[arg(long, default_value_t = 0.5)]
    size: f64,
    /// Polynomial order (sphere, circle).
    #[arg(long, default_value_t = 1)]
    order: usize,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Shape {
    Sphere,
    Circle,
    Disk,
    Ball,
}

#[derive(Args)]
pub struct PreprocessArgs {
    file: PathBuf,
    #[arg(long, default_value_t = 2)]
    order: usize,
    /// Built-in surface to lift new nodes onto (sphere, circle, torus).
    #[arg(long)]
    lift: Option<String>,
    #[arg(short, long)]
    out: PathBuf,
    /// Also write the P1 plotting refinement.
    #[arg(long)]
    plot_out: Option<PathBuf>,
}

#[derive(Args)]
pub struct LiftArgs {
    file: PathBuf,
    /// Built-in surface name (sphere, circle, torus).
    #[arg(long)]
    surface: String,
    #[arg(short, long)]
    out: PathBuf,
}

pub fn surface_by_name(name: &str) -> Result<ImplicitSurface, CliError> {
    ImplicitSurface::by_name(name)
        .ok_or_else(|| CliError::Usage(format!("unknown surface `{name}`")))
}

pub fn run(cmd: MeshCommand) -> CliResult {
    match cmd {
        MeshCommand::Gen(args) => {
            let mesh = match args.shape {
                Shape::Sphere => generate_sphere(args.refine, args.order)?,
                Shape::Circle => generate_circle(args.nseg, args.order)?,
                Shape::Disk => generate_disk(args.size)?,
                Shape::Ball => generate_ball(args.size)?,
            };
            write_mesh(&mesh, &args.out)?;
            println!(
                "wrote {} ({} nodes, {} elements)",
                args.out.display(),
                mesh.num_nodes(),
                mesh.num_elements()
            );
            Ok(())
        }
        MeshCommand::Preprocess(args) => {
            let mesh = read_mesh(&args.file)?;
            let surface = args.lift.as_deref().map(surface_by_name).transpose()?;
            let (quadratic, e_plot) = mesh_preprocess(&mesh, args.order, surface.as_ref())?;
            write_mesh(&quadratic, &args.out)?;
            if let Some(path) = args.plot_out {
                let plot = Mesh::new(
                    quadratic.kind,
                    quadratic.d,
                    1,
                    quadratic.nodes.clone(),
                    e_plot,
                    quadratic.boundary.clone(),
                )?;
                write_mesh(&plot, &path)?;
            }
            println!(
                "wrote {} ({} nodes, {} elements)",
                args.out.display(),
                quadratic.num_nodes(),
                quadratic.num_elements()
            );
            Ok(())
        }
        MeshCommand::Lift(args) => {
            let mesh = read_mesh(&args.file)?;
            let surface = surface_by_name(&args.surface)?;
            let lifted = lift_nodes(&mesh.nodes, mesh.m, &surface)?;
            write_mesh(&mesh.with_nodes(lifted)?, &args.out)?;
            println!("wrote {}", args.out.display());
            Ok(())
        }
        MeshCommand::Validate { file } => {
            let mesh = read_mesh(&file)?;
            let report = validate(&mesh);
            print!("{report}");
            if report.is_ok() {
                Ok(())
            } else {
                Err(CliError::Data(format!(
                    "{} violation(s) found",
                    report.violations.len()
                )))
            }
        }
    }
}

/// Mesh sequences for convergence studies and benchmarks.
pub fn generated_sequence(
    shape: &str,
    levels: std::ops::RangeInclusive<usize>,
    order: usize,
) -> Result<Vec<(String, Mesh)>, CliError> {
    let sphere = ImplicitSurface::sphere();
    let mut out = Vec::new();
    for level in levels {
        let (label, mesh) = match shape {
            "sphere" => (format!("sphere-r{level}-p{order}"), generate_sphere(level, order)?),
            "circle" => {
                let nseg = 8usize << level;
                (format!("circle-n{nseg}-p{order}"), generate_circle(nseg, order)?)
            }
            "disk" => {
                let h = 1.0 / (1 << level) as f64;
                let base = generate_disk(h)?;
                let mesh = match order {
                    1 => base,
                    2 => mesh_preprocess(&base, 2, Some(&sphere))?.0,
                    p => {
                        return Err(CliError::Usage(format!("unsupported disk order {p}")));
                    }
                };
                (format!("disk-l{level}-p{order}"), mesh)
            }
            "ball" => {
                let h = 2.0 / (1 << level) as f64;
                let base = generate_ball(h)?;
                let mesh = match order {
                    1 => base,
                    2 => mesh_preprocess(&base, 2, Some(&sphere))?.0,
                    p => {
                        return Err(CliError::Usage(format!("unsupported ball order {p}")));
                    }
                };
                (format!("ball-l{level}-p{order}"), mesh)
            }
            other => {
                return Err(CliError::Usage(format!("unknown generator `{other}`")));
            }
        };
        out.push((label, mesh));
    }
    Ok(out)
}
