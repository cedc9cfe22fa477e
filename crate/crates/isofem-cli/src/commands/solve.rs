//! `isofem solve ...`: surface Poisson and bulk reaction-diffusion with
//! optional convergence studies over mesh sequences.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Subcommand};

use isofem::mesh::read_mesh;
use isofem::problems::{
    compute_errors, convergence_study, solve_bulk_reaction_diffusion, solve_surface_poisson,
    write_convergence_csv, BoundaryData, Problem,
};

use crate::expr::Expr;
use crate::{CliError, CliResult};

#[derive(Subcommand)]
pub enum SolveCommand {
    /// -Laplace u = f on a closed surface (mean-free solution).
    PoissonSurface(SolveArgs),
    /// (-Laplace + mu) u = f on a bulk mesh, homogeneous Dirichlet data.
    PoissonBulk(SolveArgs),
}

#[derive(Args)]
pub struct SolveArgs {
    /// One mesh: solve and write the solution. Several meshes of
    /// decreasing h: run a convergence study.
    #[arg(required = true)]
    meshes: Vec<PathBuf>,
    /// Built-in problem id (sphere-x1x2 | disk-radial).
    #[arg(long, conflicts_with = "f")]
    problem: Option<String>,
    /// Right-hand side as a polynomial in x, y, z.
    #[arg(long)]
    f: Option<String>,
    /// Exact solution for error reporting (polynomial in x, y, z).
    #[arg(long)]
    u_exact: Option<String>,
    /// Reaction coefficient (bulk).
    #[arg(long, default_value_t = 10.0)]
    mu: f64,
    /// Convergence CSV output.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Solution CSV output (node,value), finest mesh.
    #[arg(long)]
    solution_out: Option<PathBuf>,
}

fn build_problem(args: &SolveArgs, surface: bool) -> Result<Problem, CliError> {
    if let Some(id) = &args.problem {
        return Problem::by_name(id, args.mu)
            .ok_or_else(|| CliError::Usage(format!("unknown problem id `{id}`")));
    }
    let f_text = args
        .f
        .as_deref()
        .ok_or_else(|| CliError::Usage("pass --problem <id> or --f <expr>".into()))?;
    let f = Expr::parse(f_text).map_err(|e| CliError::Usage(e.to_string()))?;
    let u = match &args.u_exact {
        Some(text) => Expr::parse(text).map_err(|e| CliError::Usage(e.to_string()))?,
        None => Expr::Num(f64::NAN),
    };
    let f_fn = move |x: &[f64]| f.eval(x);
    let u_fn = move |x: &[f64]| u.eval(x);
    Ok(if surface {
        Problem::SurfacePoisson { f: Box::new(f_fn), u_exact: Box::new(u_fn), u_grad: None }
    } else {
        Problem::BulkReactionDiffusion {
            f: Box::new(f_fn),
            mu: args.mu,
            u_exact: Box::new(u_fn),
            u_grad: None,
        }
    })
}

pub fn run(cmd: SolveCommand) -> CliResult {
    let (args, surface) = match &cmd {
        SolveCommand::PoissonSurface(a) => (a, true),
        SolveCommand::PoissonBulk(a) => (a, false),
    };
    let problem = build_problem(args, surface)?;
    let have_exact = args.problem.is_some() || args.u_exact.is_some();

    let mut meshes = Vec::new();
    for path in &args.meshes {
        meshes.push(read_mesh(path)?);
    }

    if meshes.len() > 1 {
        if !have_exact {
            return Err(CliError::Usage(
                "a convergence study needs --problem or --u-exact".into(),
            ));
        }
        let rows = convergence_study(&problem, &meshes)?;
        match &args.out {
            Some(path) => {
                write_convergence_csv(&rows, BufWriter::new(File::create(path)?))?;
                println!("wrote {}", path.display());
            }
            None => write_convergence_csv(&rows, std::io::stdout().lock())?,
        }
        return Ok(());
    }

    let mesh = &meshes[0];
    let (u, report) = match &problem {
        Problem::SurfacePoisson { f, .. } => solve_surface_poisson(mesh, f)?,
        Problem::BulkReactionDiffusion { f, mu, .. } => {
            solve_bulk_reaction_diffusion(mesh, f, *mu, &BoundaryData::Homogeneous)?
        }
    };
    println!(
        "solved: {} dofs, assembly {:.3}s, solve {:.3}s ({} iterations, residual {:.2e})",
        u.len(),
        report.t_assembly_s,
        report.t_solve_s,
        report.iterations,
        report.residual
    );
    if have_exact {
        let (l2, h1) = compute_errors(mesh, &u, problem.u_exact())?;
        println!("errors vs interpolated exact solution: L2 {l2:.6e}, H1 {h1:.6e}");
    }
    if let Some(path) = &args.solution_out {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "node,value")?;
        for (j, v) in u.iter().enumerate() {
            writeln!(out, "{},{:.16e}", j + 1, v)?;
        }
        println!("wrote {}", path.display());
    }
    Ok(())
}
