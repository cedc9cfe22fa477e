//! Elliptic problem drivers: surface Poisson with a mean-free gauge, bulk
//! reaction-diffusion with Dirichlet data, discrete error norms and
//! convergence studies.

use std::time::Instant;

use crate::assembly::{assemble_batched, assemble_batched_with_load, AssemblyOptions};
use crate::error::{Error, Result};
use crate::mesh::{is_closed_surface, Mesh, MeshKind};
use crate::sparse::{apply_dirichlet, cg_solve, cg_solve_meanfree, CgOptions};

/// Nodal coefficient vector of a finite element function.
pub type NodalField = Vec<f64>;

pub type CoefFn = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Timing and solver diagnostics of one solve.
#[derive(Debug, Clone, Default)]
pub struct SolveReport {
    pub t_assembly_s: f64,
    pub t_solve_s: f64,
    pub iterations: usize,
    pub residual: f64,
}

/// Dirichlet data for bulk problems.
pub enum BoundaryData {
    Homogeneous,
    Value(CoefFn),
}

/// -Laplace u = f on a closed surface; returns the mean-free solution.
pub fn solve_surface_poisson(
    mesh: &Mesh,
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
) -> Result<(NodalField, SolveReport)> {
    if mesh.kind != MeshKind::Surface {
        return Err(Error::Precondition("surface Poisson needs a surface mesh".into()));
    }
    if !is_closed_surface(mesh) {
        return Err(Error::Precondition("surface Poisson needs a closed surface".into()));
    }
    let mut report = SolveReport::default();

    let t0 = Instant::now();
    let (out, b) = assemble_batched_with_load(mesh, &AssemblyOptions::default(), f)?;
    let (m, a) = out.finalize()?;
    report.t_assembly_s = t0.elapsed().as_secs_f64();

    let t0 = Instant::now();
    let (u, stats) = cg_solve_meanfree(&a, &b, &m, &CgOptions::default())?;
    report.t_solve_s = t0.elapsed().as_secs_f64();
    report.iterations = stats.iterations;
    report.residual = stats.residual;
    Ok((u, report))
}

/// (-Laplace + mu) u = f on a bulk mesh with Dirichlet boundary data.
pub fn solve_bulk_reaction_diffusion(
    mesh: &Mesh,
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    mu: f64,
    boundary: &BoundaryData,
) -> Result<(NodalField, SolveReport)> {
    if mesh.kind != MeshKind::Bulk {
        return Err(Error::Precondition("reaction-diffusion driver needs a bulk mesh".into()));
    }
    let boundary_idx = mesh
        .boundary
        .as_ref()
        .ok_or_else(|| Error::Precondition("bulk mesh has no boundary node list".into()))?;
    let mut report = SolveReport::default();

    let t0 = Instant::now();
    let (out, b) = assemble_batched_with_load(mesh, &AssemblyOptions::default(), f)?;
    let (m, a) = out.finalize()?;
    report.t_assembly_s = t0.elapsed().as_secs_f64();

    let system = a.add_scaled(&m, mu)?;
    let values: Vec<f64> = match boundary {
        BoundaryData::Homogeneous => vec![0.0; boundary_idx.len()],
        BoundaryData::Value(g) => {
            boundary_idx.iter().map(|&i| g(mesh.node(i as usize))).collect()
        }
    };
    let (system, b) = apply_dirichlet(&system, &b, boundary_idx, &values)?;

    let t0 = Instant::now();
    let (u, stats) = cg_solve(&system, &b, &CgOptions::default())?;
    report.t_solve_s = t0.elapsed().as_secs_f64();
    report.iterations = stats.iterations;
    report.residual = stats.residual;
    Ok((u, report))
}

/// Discrete error norms against the nodal interpolant of the exact
/// solution: e = u_h - I_h u, err_L2 = sqrt(e'Me), err_H1 = sqrt(e'Ae),
/// both on the discrete geometry.
pub fn compute_errors(
    mesh: &Mesh,
    u_h: &[f64],
    u_exact: &(dyn Fn(&[f64]) -> f64 + Sync),
) -> Result<(f64, f64)> {
    let (m, a) = assemble_batched(mesh, &AssemblyOptions::default())?.finalize()?;
    if u_h.len() != m.n {
        return Err(Error::DimensionMismatch("compute_errors: field length".into()));
    }
    let e: Vec<f64> =
        (0..m.n).map(|j| u_h[j] - u_exact(mesh.node(j))).collect();
    let me = m.spmv(&e)?;
    let ae = a.spmv(&e)?;
    let l2: f64 = e.iter().zip(&me).map(|(x, y)| x * y).sum::<f64>().max(0.0);
    let h1: f64 = e.iter().zip(&ae).map(|(x, y)| x * y).sum::<f64>().max(0.0);
    Ok((l2.sqrt(), h1.sqrt()))
}

/// True discrete error norms by quadrature on the discrete geometry:
/// `err_L2^2 = sum_E sum_i w det (u_h - u)(F(xi_i))^2` and the H1
/// seminorm of the difference between the discrete tangential gradient and
/// the tangentially projected ambient gradient of the exact solution.
/// Unlike [`compute_errors`], this captures the interpolation error and
/// reproduces the textbook rates h^{k+1} and h^k.
pub fn compute_errors_quadrature(
    mesh: &Mesh,
    u_h: &[f64],
    u_exact: &(dyn Fn(&[f64]) -> f64 + Sync),
    grad_u_exact: &(dyn Fn(&[f64], &mut [f64]) + Sync),
) -> Result<(f64, f64)> {
    if u_h.len() != mesh.num_nodes() {
        return Err(Error::DimensionMismatch("compute_errors_quadrature: field length".into()));
    }
    let pack = crate::reference::precompute(mesh.d, mesh.p)?;
    let (d, m, q) = (mesh.d, mesh.m, pack.q());
    let surface = mesh.kind == MeshKind::Surface;
    let mut l2 = 0.0;
    let mut h1 = 0.0;
    const CHUNK: usize = 65_536;
    let mut start = 0;
    while start < mesh.num_elements() {
        let count = CHUNK.min(mesh.num_elements() - start);
        let batch = crate::assembly::compute_batch(mesh, &pack, start, count)?;
        for b in 0..count {
            let elem = mesh.element(start + b);
            for i in 0..q {
                let phi = pack.fq_at(i);
                let grad = pack.grad_at(i);
                let c = batch.c_page(b, i);
                let l = batch.l_page(b, i);
                let wdet = pack.w[i] * batch.det_at(b, i);

                let mut uh = 0.0;
                let mut mapped = [0.0f64; 3];
                let mut grad_uh = [0.0f64; 3];
                for (j, &node) in elem.iter().enumerate() {
                    let val = u_h[node as usize];
                    uh += phi[j] * val;
                    let p = mesh.node(node as usize);
                    for comp in 0..m {
                        mapped[comp] += phi[j] * p[comp];
                        // physical gradient column b_j = C ghat_j
                        let mut bj = 0.0;
                        for r in 0..d {
                            bj += c[comp * m + r] * grad[j * d + r];
                        }
                        grad_uh[comp] += val * bj;
                    }
                }
                let diff = uh - u_exact(&mapped[..m]);
                l2 += wdet * diff * diff;

                let mut g_exact = [0.0f64; 3];
                grad_u_exact(&mapped[..m], &mut g_exact[..m]);
                if surface {
                    // project onto the discrete tangent plane; the last row
                    // of L is the unnormalized normal with |n| = det
                    let det = batch.det_at(b, i);
                    let mut dot = 0.0;
                    for comp in 0..m {
                        dot += g_exact[comp] * l[(m - 1) * m + comp] / det;
                    }
                    for comp in 0..m {
                        g_exact[comp] -= dot * l[(m - 1) * m + comp] / det;
                    }
                }
                let mut err2 = 0.0;
                for comp in 0..m {
                    let e = grad_uh[comp] - g_exact[comp];
                    err2 += e * e;
                }
                h1 += wdet * err2;
            }
        }
        start += count;
    }
    Ok((l2.max(0.0).sqrt(), h1.max(0.0).sqrt()))
}

pub type CoefGradFn = Box<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// A manufactured problem for convergence studies.
pub enum Problem {
    SurfacePoisson { f: CoefFn, u_exact: CoefFn, u_grad: Option<CoefGradFn> },
    BulkReactionDiffusion { f: CoefFn, mu: f64, u_exact: CoefFn, u_grad: Option<CoefGradFn> },
}

impl Problem {
    /// u = x1 x2 on the unit sphere, f = 6 u.
    pub fn sphere_x1x2() -> Self {
        Problem::SurfacePoisson {
            f: Box::new(|x| 6.0 * x[0] * x[1]),
            u_exact: Box::new(|x| x[0] * x[1]),
            u_grad: Some(Box::new(|x, g| {
                g[0] = x[1];
                g[1] = x[0];
                g[2] = 0.0;
            })),
        }
    }

    /// u = 1 - r^4 on the unit disk, f = 16 r^2 + mu u, homogeneous data.
    pub fn disk_radial(mu: f64) -> Self {
        Problem::BulkReactionDiffusion {
            f: Box::new(move |x| {
                let r2 = x[0] * x[0] + x[1] * x[1];
                16.0 * r2 + mu * (1.0 - r2 * r2)
            }),
            mu,
            u_exact: Box::new(|x| {
                let r2 = x[0] * x[0] + x[1] * x[1];
                1.0 - r2 * r2
            }),
            u_grad: Some(Box::new(|x, g| {
                let r2 = x[0] * x[0] + x[1] * x[1];
                g[0] = -4.0 * x[0] * r2;
                g[1] = -4.0 * x[1] * r2;
            })),
        }
    }

    pub fn by_name(name: &str, mu: f64) -> Option<Self> {
        match name {
            "sphere-x1x2" => Some(Self::sphere_x1x2()),
            "disk-radial" => Some(Self::disk_radial(mu)),
            _ => None,
        }
    }

    pub fn solve(&self, mesh: &Mesh) -> Result<(NodalField, SolveReport)> {
        match self {
            Problem::SurfacePoisson { f, .. } => solve_surface_poisson(mesh, f),
            Problem::BulkReactionDiffusion { f, mu, .. } => {
                solve_bulk_reaction_diffusion(mesh, f, *mu, &BoundaryData::Homogeneous)
            }
        }
    }

    pub fn u_exact(&self) -> &CoefFn {
        match self {
            Problem::SurfacePoisson { u_exact, .. } => u_exact,
            Problem::BulkReactionDiffusion { u_exact, .. } => u_exact,
        }
    }

    /// Ambient gradient of the exact solution; central differences of
    /// `u_exact` when no analytic gradient was supplied.
    pub fn eval_u_grad(&self, x: &[f64], out: &mut [f64]) {
        let (u, grad) = match self {
            Problem::SurfacePoisson { u_exact, u_grad, .. } => (u_exact, u_grad),
            Problem::BulkReactionDiffusion { u_exact, u_grad, .. } => (u_exact, u_grad),
        };
        match grad {
            Some(g) => g(x, out),
            None => {
                let mut probe = x.to_vec();
                for k in 0..x.len() {
                    let h = 1e-6 * x[k].abs().max(1.0);
                    probe[k] = x[k] + h;
                    let fp = u(&probe);
                    probe[k] = x[k] - h;
                    let fm = u(&probe);
                    probe[k] = x[k];
                    out[k] = (fp - fm) / (2.0 * h);
                }
            }
        }
    }
}

/// One level of a convergence study.
#[derive(Debug, Clone)]
pub struct ConvergenceRow {
    pub h: f64,
    pub dofs: usize,
    pub err_l2: f64,
    pub err_h1: f64,
    pub eoc_l2: Option<f64>,
    pub eoc_h1: Option<f64>,
    pub t_assembly_s: f64,
    pub t_solve_s: f64,
}

/// Solve the problem on a sequence of refined meshes and report true
/// quadrature errors and observed orders,
/// eoc = log(err_{i-1}/err_i) / log(h_{i-1}/h_i).
pub fn convergence_study(problem: &Problem, meshes: &[Mesh]) -> Result<Vec<ConvergenceRow>> {
    if meshes.len() < 2 {
        return Err(Error::Precondition(format!(
            "convergence study needs at least 2 meshes, got {}",
            meshes.len()
        )));
    }
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(meshes.len());
    for mesh in meshes {
        let (u, report) = problem.solve(mesh)?;
        let grad = |x: &[f64], out: &mut [f64]| problem.eval_u_grad(x, out);
        let (err_l2, err_h1) =
            compute_errors_quadrature(mesh, &u, problem.u_exact(), &grad)?;
        let h = mesh.max_diameter();
        let eoc = |prev: Option<&ConvergenceRow>, now: f64, pick: fn(&ConvergenceRow) -> f64| {
            let prev = prev?;
            let (e0, h0) = (pick(prev), prev.h);
            if now <= 1e-14 || e0 <= 1e-14 || (h0 / h).ln().abs() < 1e-12 {
                return None;
            }
            Some((e0 / now).ln() / (h0 / h).ln())
        };
        rows.push(ConvergenceRow {
            h,
            dofs: mesh.num_nodes(),
            err_l2,
            err_h1,
            eoc_l2: eoc(rows.last(), err_l2, |r| r.err_l2),
            eoc_h1: eoc(rows.last(), err_h1, |r| r.err_h1),
            t_assembly_s: report.t_assembly_s,
            t_solve_s: report.t_solve_s,
        });
    }
    Ok(rows)
}

pub const CONVERGENCE_CSV_HEADER: &str =
    "h,dofs,err_L2,err_H1,eoc_L2,eoc_H1,t_assembly_s,t_solve_s";

pub fn write_convergence_csv(rows: &[ConvergenceRow], mut out: impl std::io::Write) -> Result<()> {
    writeln!(out, "{CONVERGENCE_CSV_HEADER}")?;
    for r in rows {
        let fmt_eoc = |v: Option<f64>| v.map(|v| format!("{v:.4}")).unwrap_or_default();
        writeln!(
            out,
            "{:.6e},{},{:.12e},{:.12e},{},{},{:.6},{:.6}",
            r.h,
            r.dofs,
            r.err_l2,
            r.err_h1,
            fmt_eoc(r.eoc_l2),
            fmt_eoc(r.eoc_h1),
            r.t_assembly_s,
            r.t_solve_s
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_disk, generate_sphere};
    use crate::sparse::CsrMatrix;

    fn dense_quadratic_form(m: &CsrMatrix, e: &[f64]) -> f64 {
        let me = m.spmv(e).unwrap();
        e.iter().zip(&me).map(|(a, b)| a * b).sum()
    }

    #[test]
    fn zero_rhs_gives_zero_solution() {
        let mesh = generate_sphere(1, 2).unwrap();
        let (u, _) = solve_surface_poisson(&mesh, &|_x| 0.0).unwrap();
        assert!(u.iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn open_surface_is_rejected() {
        let mut mesh = generate_sphere(0, 1).unwrap();
        // drop one element: the sphere is no longer closed
        mesh.elements.truncate(19 * 3);
        assert!(matches!(
            solve_surface_poisson(&mesh, &|_x| 0.0),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn surface_solution_is_mean_free_and_small_residual() {
        let mesh = generate_sphere(2, 2).unwrap();
        let (u, report) = solve_surface_poisson(&mesh, &|x| 6.0 * x[0] * x[1]).unwrap();
        let (m, a) = crate::assembly::mass_and_stiffness(&mesh).unwrap();
        let mu = m.spmv(&u).unwrap();
        let mean: f64 = mu.iter().sum();
        let norm: f64 = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(mean.abs() <= 1e-10 * norm, "mean {mean}");
        assert!(report.residual <= 1e-10);
        let _ = a;
    }

    #[test]
    fn rotating_mesh_and_data_keeps_errors() {
        let mesh = generate_sphere(2, 2).unwrap();
        let problem = Problem::sphere_x1x2();
        let (u, _) = problem.solve(&mesh).unwrap();
        let (l2, h1) = compute_errors(&mesh, &u, problem.u_exact()).unwrap();

        // rotate by around z: (x,y,z) -> (y,-x,z); u = x1 x2 maps accordingly
        let rotated: Vec<f64> =
            mesh.nodes.chunks(3).flat_map(|p| [p[1], -p[0], p[2]]).collect();
        let rmesh = mesh.with_nodes(rotated).unwrap();
        let rf = |x: &[f64]| 6.0 * (-x[1]) * x[0];
        let ru = |x: &[f64]| -x[1] * x[0];
        let (u2, _) = solve_surface_poisson(&rmesh, &rf).unwrap();
        let (l2r, h1r) = compute_errors(&rmesh, &u2, &ru).unwrap();
        assert!((l2 - l2r).abs() <= 1e-10 * l2.max(1e-12), "{l2} vs {l2r}");
        assert!((h1 - h1r).abs() <= 1e-10 * h1.max(1e-12));
    }

    #[test]
    fn bulk_zero_rhs_gives_zero() {
        let mesh = generate_disk(0.4).unwrap();
        let (u, _) =
            solve_bulk_reaction_diffusion(&mesh, &|_x| 0.0, 10.0, &BoundaryData::Homogeneous)
                .unwrap();
        assert!(u.iter().all(|&v| v.abs() < 1e-10));
    }

    #[test]
    fn constant_boundary_data_yields_constant_solution() {
        let mesh = generate_disk(0.4).unwrap();
        let (u, _) = solve_bulk_reaction_diffusion(
            &mesh,
            &|_x| 0.0,
            0.0,
            &BoundaryData::Value(Box::new(|_x| 3.25)),
        )
        .unwrap();
        for &v in &u {
            assert!((v - 3.25).abs() < 1e-9, "{v}");
        }
    }

    #[test]
    fn error_of_interpolant_is_zero() {
        let mesh = generate_sphere(1, 2).unwrap();
        let u_exact = |x: &[f64]| x[0] * x[1];
        let interp: Vec<f64> = (0..mesh.num_nodes()).map(|j| u_exact(mesh.node(j))).collect();
        let (l2, h1) = compute_errors(&mesh, &interp, &u_exact).unwrap();
        assert_eq!(l2, 0.0);
        assert_eq!(h1, 0.0);
    }

    #[test]
    fn constant_error_on_closed_surface_has_zero_h1_norm() {
        let mesh = generate_sphere(2, 1).unwrap();
        let c = 0.75;
        let u: Vec<f64> = vec![c; mesh.num_nodes()];
        let (l2, h1) = compute_errors(&mesh, &u, &|_x| 0.0).unwrap();
        let (m, _) = crate::assembly::mass_and_stiffness(&mesh).unwrap();
        let ones = vec![1.0; m.n];
        let area: f64 = m.spmv(&ones).unwrap().iter().sum();
        assert!((l2 - c * area.sqrt()).abs() < 1e-12);
        // e'Ae is a rounding-level residual of the stiffness kernel
        assert!(h1 < 1e-6 * l2, "h1 = {h1}");
    }

    #[test]
    fn single_node_perturbation_matches_dense_forms() {
        let mesh = generate_sphere(1, 1).unwrap();
        let (m, a) = crate::assembly::mass_and_stiffness(&mesh).unwrap();
        let mut e = vec![0.0; mesh.num_nodes()];
        e[5] = 0.37;
        let (l2, h1) = compute_errors(&mesh, &e, &|_x| 0.0).unwrap();
        assert!((l2 * l2 - dense_quadratic_form(&m, &e)).abs() < 1e-14);
        assert!((h1 * h1 - dense_quadratic_form(&a, &e)).abs() < 1e-14);
    }

    #[test]
    fn study_needs_two_meshes() {
        let problem = Problem::sphere_x1x2();
        let meshes = vec![generate_sphere(1, 2).unwrap()];
        assert!(matches!(
            convergence_study(&problem, &meshes),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn galerkin_reproduction_of_affine_solution_flags_eoc() {
        // u = x on a flat strip solved exactly by P1: errors at machine
        // precision, EOC undefined
        let mesh = generate_disk(0.5).unwrap();
        let problem = Problem::BulkReactionDiffusion {
            f: Box::new(|_x| 0.0),
            mu: 0.0,
            u_exact: Box::new(|x| x[0]),
            u_grad: None,
        };
        // solve with matching inhomogeneous data
        let (u, _) = solve_bulk_reaction_diffusion(
            &mesh,
            &|_x| 0.0,
            0.0,
            &BoundaryData::Value(Box::new(|x| x[0])),
        )
        .unwrap();
        let (l2, _h1) = compute_errors(&mesh, &u, problem.u_exact()).unwrap();
        assert!(l2 < 1e-9, "affine reproduction failed: {l2}");
    }

    #[test]
    fn csv_schema_is_stable() {
        let rows = vec![ConvergenceRow {
            h: 0.5,
            dofs: 100,
            err_l2: 1e-3,
            err_h1: 1e-2,
            eoc_l2: None,
            eoc_h1: Some(1.01),
            t_assembly_s: 0.1,
            t_solve_s: 0.2,
        }];
        let mut buf = Vec::new();
        write_convergence_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CONVERGENCE_CSV_HEADER);
        let row = lines.next().unwrap();
        assert!(row.contains(",,1.0100,"), "{row}");
    }
}
