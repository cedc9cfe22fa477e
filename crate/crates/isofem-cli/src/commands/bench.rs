//! `isofem bench ...`: assembly runtime experiments. Timing covers triplet
//! computation, sparse finalize and the load vector, per backend. One
//! warm-up run is discarded; the median of the repeats is reported with
//! min and max.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Subcommand};

use isofem::assembly::{
    assemble_batched_with_load, assemble_load, assemble_load_naive, assemble_naive,
    assemble_p1_fast, AssemblyOptions,
};
use isofem::mesh::{read_mesh, Mesh};

use super::mesh::generated_sequence;
use crate::{CliError, CliResult};

pub const BENCH_CSV_HEADER: &str =
    "case,backend,elements,dofs,t_assembly_s,t_min_s,t_max_s,repeats,batch_size";

#[derive(Subcommand)]
pub enum BenchCommand {
    /// Assembly runtime over a mesh sequence, per backend.
    Assembly(AssemblyArgs),
    /// Dimension analysis: quadratic assembly across bulk/surface cells
    /// at a matched element count.
    Dims(DimsArgs),
}

#[derive(Args)]
pub struct AssemblyArgs {
    /// Mesh files (alternative to --gen).
    meshes: Vec<PathBuf>,
    /// Generator family: sphere | circle | disk | ball.
    #[arg(long, conflicts_with = "meshes")]
    gen: Option<String>,
    /// Refinement levels for the generator, e.g. 3..7 (inclusive).
    #[arg(long, default_value = "3..5", requires = "gen")]
    levels: String,
    /// Polynomial order for generated meshes.
    #[arg(long, default_value_t = 2)]
    order: usize,
    /// Comma list: naive, batched, p1fast.
    #[arg(long, default_value = "naive,batched")]
    backends: String,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long, default_value_t = isofem::assembly::DEFAULT_BATCH_SIZE)]
    batch_size: usize,
    /// Memory budget for assembly (MB).
    #[arg(long, default_value_t = 8192)]
    budget_mb: usize,
    /// Output CSV (appends when the file already exists).
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
pub struct DimsArgs {
    /// Target element count per cell.
    #[arg(long, default_value_t = 100_000)]
    elements: usize,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long, default_value_t = isofem::assembly::DEFAULT_BATCH_SIZE)]
    batch_size: usize,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

struct BenchRecord {
    case: String,
    backend: String,
    elements: usize,
    dofs: usize,
    median_s: f64,
    min_s: f64,
    max_s: f64,
    repeats: usize,
    batch_size: usize,
}

fn parse_levels(text: &str) -> Result<std::ops::RangeInclusive<usize>, CliError> {
    let (a, b) = text
        .split_once("..")
        .ok_or_else(|| CliError::Usage(format!("bad level range `{text}`, expected a..b")))?;
    let a: usize =
        a.parse().map_err(|_| CliError::Usage(format!("bad level `{a}`")))?;
    let b: usize =
        b.parse().map_err(|_| CliError::Usage(format!("bad level `{b}`")))?;
    if a > b {
        return Err(CliError::Usage("empty level range".into()));
    }
    Ok(a..=b)
}

/// The coefficient used for all benchmark load vectors.
fn bench_f(x: &[f64]) -> f64 {
    match x.len() {
        1 => 1.0 + x[0],
        _ => 6.0 * x[0] * x[1],
    }
}

fn time_backend(backend: &str, mesh: &Mesh, opts: &AssemblyOptions) -> Result<f64, CliError> {
    let t = Instant::now();
    match backend {
        "batched" => {
            let (out, _b) = assemble_batched_with_load(mesh, opts, &bench_f)?;
            let _ = out.finalize()?;
        }
        "naive" => {
            let out = assemble_naive(mesh)?;
            let _ = out.finalize()?;
            let _ = assemble_load_naive(mesh, &bench_f)?;
        }
        "p1fast" => {
            let out = assemble_p1_fast(mesh)?;
            let _ = out.finalize()?;
            let _ = assemble_load(mesh, &bench_f)?;
        }
        other => return Err(CliError::Usage(format!("unknown backend `{other}`"))),
    }
    Ok(t.elapsed().as_secs_f64())
}

fn bench_mesh(
    case: &str,
    mesh: &Mesh,
    backends: &[&str],
    repeats: usize,
    opts: &AssemblyOptions,
    records: &mut Vec<BenchRecord>,
) -> CliResult {
    for &backend in backends {
        if backend == "p1fast" && mesh.p != 1 {
            continue;
        }
        time_backend(backend, mesh, opts)?; // warm-up, discarded
        let mut times = Vec::with_capacity(repeats);
        for _ in 0..repeats {
            times.push(time_backend(backend, mesh, opts)?);
        }
        times.sort_by(f64::total_cmp);
        records.push(BenchRecord {
            case: case.to_string(),
            backend: backend.to_string(),
            elements: mesh.num_elements(),
            dofs: mesh.num_nodes(),
            median_s: times[times.len() / 2],
            min_s: times[0],
            max_s: *times.last().unwrap(),
            repeats,
            batch_size: opts.batch_size,
        });
        eprintln!(
            "{case} {backend}: |E| = {}, median {:.3}s",
            mesh.num_elements(),
            times[times.len() / 2]
        );
    }
    Ok(())
}

fn write_records(records: &[BenchRecord], out: Option<&PathBuf>) -> CliResult {
    let mut text = String::new();
    for r in records {
        text.push_str(&format!(
            "{},{},{},{},{:.6},{:.6},{:.6},{},{}\n",
            r.case,
            r.backend,
            r.elements,
            r.dofs,
            r.median_s,
            r.min_s,
            r.max_s,
            r.repeats,
            r.batch_size
        ));
    }
    match out {
        Some(path) => {
            let fresh = !path.exists() || path.metadata().map(|m| m.len() == 0).unwrap_or(true);
            let mut file = OpenOptions::new().create(true).append(true).open(path)?;
            if fresh {
                writeln!(file, "{BENCH_CSV_HEADER}")?;
            }
            file.write_all(text.as_bytes())?;
            println!("wrote {}", path.display());
        }
        None => {
            println!("{BENCH_CSV_HEADER}");
            print!("{text}");
        }
    }
    Ok(())
}

pub fn run(cmd: BenchCommand) -> CliResult {
    match cmd {
        BenchCommand::Assembly(args) => {
            if args.repeats < 3 {
                return Err(CliError::Usage("--repeats must be at least 3".into()));
            }
            let opts = AssemblyOptions {
                batch_size: args.batch_size,
                memory_budget_mb: args.budget_mb,
            };
            let backends: Vec<&str> =
                args.backends.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
            if backends.is_empty() {
                return Err(CliError::Usage("no backends selected".into()));
            }

            let mut cases: Vec<(String, Mesh)> = Vec::new();
            if let Some(shape) = &args.gen {
                cases = generated_sequence(shape, parse_levels(&args.levels)?, args.order)?;
            } else {
                if args.meshes.is_empty() {
                    return Err(CliError::Usage("pass mesh files or --gen".into()));
                }
                for path in &args.meshes {
                    let name = path
                        .file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_else(|| path.display().to_string());
                    cases.push((name, read_mesh(path)?));
                }
            }

            let mut records = Vec::new();
            for (label, mesh) in &cases {
                bench_mesh(label, mesh, &backends, args.repeats, &opts, &mut records).map_err(
                    |e| match e {
                        CliError::Lib(isofem::Error::Resource { needed_mb, budget_mb }) => {
                            CliError::Data(format!(
                                "memory budget exceeded ({needed_mb} MB > {budget_mb} MB); \
                                 reduce --batch-size or the mesh size"
                            ))
                        }
                        other => other,
                    },
                )?;
            }
            write_records(&records, args.out.as_ref())
        }
        BenchCommand::Dims(args) => {
            let opts = AssemblyOptions { batch_size: args.batch_size, ..Default::default() };
            // closest generated P2 mesh per (kind, d) cell
            let mut cases = Vec::new();
            let target = args.elements.max(8);
            // a circle has exactly nseg elements
            let circle = isofem::mesh::generate_circle(target.max(3), 2)?;
            cases.push(("surface-d1-p2".to_string(), circle));
            let sphere_level = (1..=9)
                .min_by_key(|&r| (20usize * 4usize.pow(r as u32)).abs_diff(target))
                .unwrap();
            cases.push((
                "surface-d2-p2".to_string(),
                isofem::mesh::generate_sphere(sphere_level, 2)?,
            ));
            let disk_level = (1..=9)
                .min_by_key(|&l| (6usize * 4usize.pow(l as u32)).abs_diff(target))
                .unwrap();
            let disk = isofem::mesh::generate_disk(1.0 / (1 << disk_level) as f64)?;
            let sphere_surface = isofem::mesh::ImplicitSurface::sphere();
            cases.push((
                "bulk-d2-p2".to_string(),
                isofem::mesh::mesh_preprocess(&disk, 2, Some(&sphere_surface))?.0,
            ));
            let ball_level = (0..=7)
                .min_by_key(|&l| (8usize * 8usize.pow(l as u32)).abs_diff(target))
                .unwrap();
            let ball = isofem::mesh::generate_ball(2.0 / (1 << ball_level) as f64)?;
            cases.push((
                "bulk-d3-p2".to_string(),
                isofem::mesh::mesh_preprocess(&ball, 2, Some(&sphere_surface))?.0,
            ));

            let mut records = Vec::new();
            for (label, mesh) in &cases {
                bench_mesh(label, mesh, &["batched"], args.repeats.max(3), &opts, &mut records)?;
            }
            write_records(&records, args.out.as_ref())
        }
    }
}
