//! Mean-curvature-flow drivers on closed surface meshes: the linearly
//! implicit Euler scheme of the classical evolving-surface discretisation
//! (one SPD solve per coordinate, same matrix), and the coupled
//! normal/curvature system with its nonlinear right-hand side, stepped by
//! linearly implicit BDF with extrapolated geometry.

use std::time::Instant;

use rayon::prelude::*;

use crate::assembly::{
    assemble_batched, compute_batch, total_measure, AssemblyOptions, ElementBatch,
};
use crate::error::{Error, Result};
use crate::mesh::{is_closed_surface, write_mesh, Mesh, MeshKind};
use crate::reference::{precompute, ReferencePack};
use crate::sparse::{cg_solve, cg_solve_with_guess, CgOptions};

/// Nodal state of the coupled flow: positions, evolved normals, mean
/// curvature (sum of principal curvatures, positive for the unit sphere
/// with outward normal) and velocity.
#[derive(Debug, Clone)]
pub struct FlowState {
    /// Positions, `|N| * 3`, node-major.
    pub x: Vec<f64>,
    /// Packed unknowns `(n1; n2; n3; H)`, component blocks of length `|N|`.
    pub u: Vec<f64>,
    /// Velocity `v = -H (.) n`, node-major like `x`.
    pub v: Vec<f64>,
    pub t: f64,
}

impl FlowState {
    pub fn num_nodes(&self) -> usize {
        self.x.len() / 3
    }

    /// Largest deviation of an evolved normal from unit length. Normals
    /// are never renormalized during the flow; this tracks their drift.
    pub fn normal_drift(&self) -> f64 {
        let n = self.num_nodes();
        (0..n)
            .map(|j| {
                let s: f64 = (0..3).map(|k| self.u[k * n + j] * self.u[k * n + j]).sum();
                (s.sqrt() - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Backward differentiation formula with matching extrapolation weights:
/// `u_dot^n = (1/tau) sum_j delta_j u^{n-j}`, `x~^n = sum_j gamma_j x^{n-1-j}`.
#[derive(Debug, Clone)]
pub struct BdfScheme {
    pub order: usize,
    pub delta: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl BdfScheme {
    pub fn new(order: usize) -> Result<Self> {
        match order {
            1 => Ok(Self { order, delta: vec![1.0, -1.0], gamma: vec![1.0] }),
            2 => Ok(Self { order, delta: vec![1.5, -2.0, 0.5], gamma: vec![2.0, -1.0] }),
            _ => Err(Error::Precondition(format!("BDF order {order} not supported (1 or 2)"))),
        }
    }
}

fn require_closed_2d_surface(mesh: &Mesh) -> Result<()> {
    if mesh.kind != MeshKind::Surface || mesh.d != 2 {
        return Err(Error::Precondition("flow drivers need a 2D surface mesh in R^3".into()));
    }
    if !is_closed_surface(mesh) {
        return Err(Error::Precondition("flow drivers need a closed surface".into()));
    }
    Ok(())
}

/// One linearly implicit Euler step of mean curvature flow:
/// `(M(x) + tau A(x)) x_new = M(x) x`, solved per coordinate with the same
/// matrix. Returns the new node positions and the assembly seconds.
pub fn dziuk_step(mesh: &Mesh, tau: f64) -> Result<(Vec<f64>, f64)> {
    require_closed_2d_surface(mesh)?;
    if tau < 0.0 {
        return Err(Error::Precondition("time step must be non-negative".into()));
    }
    let t0 = Instant::now();
    let (m, a) = assemble_batched(mesh, &AssemblyOptions::default())?.finalize()?;
    let t_asm = t0.elapsed().as_secs_f64();
    let system = m.add_scaled(&a, tau)?;
    let n = mesh.num_nodes();
    let mut x_new = vec![0.0; n * 3];
    let opts = CgOptions::default();
    for c in 0..3 {
        let x_c: Vec<f64> = (0..n).map(|j| mesh.nodes[j * 3 + c]).collect();
        let rhs = m.spmv(&x_c)?;
        let (sol, _) = cg_solve_with_guess(&system, &rhs, x_c, &opts)?;
        for j in 0..n {
            x_new[j * 3 + c] = sol[j];
        }
    }
    Ok((x_new, t_asm))
}

/// The nonlinear right-hand side `f = (f1; f2)` of the coupled flow:
/// per element and quadrature node the squared Frobenius norm of the
/// tangential normal-field Jacobian weights the interpolated unknowns,
/// then the contributions are scattered into a `4|N|` vector.
pub fn kll_nonlinear_rhs(mesh: &Mesh, u: &[f64]) -> Result<Vec<f64>> {
    require_closed_2d_surface(mesh)?;
    let n = mesh.num_nodes();
    if u.len() != 4 * n {
        return Err(Error::DimensionMismatch(format!(
            "kll_nonlinear_rhs: expected 4|N| = {} values, got {}",
            4 * n,
            u.len()
        )));
    }
    let pack = precompute(mesh.d, mesh.p)?;
    let ne = mesh.num_elements();
    let nref = mesh.nref();

    // geometry pages in bounded chunks, per-element contributions in parallel
    const RHS_CHUNK: usize = 65_536;
    let mut local = vec![0.0; ne * nref * 4];
    for start in (0..ne).step_by(RHS_CHUNK) {
        let count = RHS_CHUNK.min(ne - start);
        let batch = compute_batch(mesh, &pack, start, count)?;
        local[start * nref * 4..(start + count) * nref * 4]
            .par_chunks_mut(nref * 4)
            .enumerate()
            .for_each(|(b, floc)| element_rhs(mesh, &pack, &batch, u, start + b, b, floc));
    }

    let mut f = vec![0.0; 4 * n];
    for e in 0..ne {
        let elem = mesh.element(e);
        for j in 0..nref {
            let g = elem[j] as usize;
            for k in 0..4 {
                f[k * n + g] += local[(e * nref + j) * 4 + k];
            }
        }
    }
    Ok(f)
}

fn element_rhs(
    mesh: &Mesh,
    pack: &ReferencePack,
    batch: &ElementBatch,
    u: &[f64],
    e: usize,
    b: usize,
    floc: &mut [f64],
) {
    let n = mesh.num_nodes();
    let nref = pack.nref;
    let d = pack.d;
    let elem = mesh.element(e);
    let mut uloc = [[0.0f64; 4]; 10];
    for j in 0..nref {
        for k in 0..4 {
            uloc[j][k] = u[k * n + elem[j] as usize];
        }
    }
    for i in 0..pack.q() {
        let phi = pack.fq_at(i);
        let grad = pack.grad_at(i);
        let c = batch.c_page(b, i);
        let wdet = pack.w[i] * batch.det_at(b, i);
        // tangential Jacobian of the interpolated normal field
        let mut alpha2 = 0.0;
        for row in 0..3 {
            let mut t = [0.0f64; 3];
            for j in 0..nref {
                let mut bj = 0.0;
                for r in 0..d {
                    bj += c[row * 3 + r] * grad[j * d + r];
                }
                for k in 0..3 {
                    t[k] += bj * uloc[j][k];
                }
            }
            alpha2 += t[0] * t[0] + t[1] * t[1] + t[2] * t[2];
        }
        let mut uq = [0.0f64; 4];
        for j in 0..nref {
            for k in 0..4 {
                uq[k] += phi[j] * uloc[j][k];
            }
        }
        let scale = wdet * alpha2;
        for j in 0..nref {
            for k in 0..4 {
                floc[j * 4 + k] += scale * uq[k] * phi[j];
            }
        }
    }
}

/// Exact initial data on the unit sphere: `n = x`, `H = 2`.
pub fn kll_sphere_data(mesh: &Mesh) -> FlowState {
    let n = mesh.num_nodes();
    let mut u = vec![0.0; 4 * n];
    for j in 0..n {
        for k in 0..3 {
            u[k * n + j] = mesh.nodes[j * 3 + k];
        }
        u[3 * n + j] = 2.0;
    }
    let v = velocity_of(&u);
    FlowState { x: mesh.nodes.clone(), u, v, t: 0.0 }
}

/// Discrete initial data for general surfaces: angle-weighted nodal
/// normals, then mean curvature from the weak identity
/// `int grad x . grad phi = int H nu phi` via three mass solves and a
/// nodal projection onto the normals.
pub fn kll_discrete_data(mesh: &Mesh) -> Result<FlowState> {
    require_closed_2d_surface(mesh)?;
    let n = mesh.num_nodes();
    let nref = mesh.nref();
    let elem_ref = crate::reference::ReferenceElement::new(mesh.d, mesh.p)?;

    let mut normals = vec![0.0; n * 3];
    for e in 0..mesh.num_elements() {
        let elem = mesh.element(e);
        for j in 0..nref {
            let grad = crate::reference::basis_grad(mesh.d, mesh.p, elem_ref.node(j))?;
            let mut t = [[0.0f64; 3]; 2];
            for (l, p) in elem.iter().enumerate() {
                let node = mesh.node(*p as usize);
                for r in 0..2 {
                    for c in 0..3 {
                        t[r][c] += node[c] * grad[l * 2 + r];
                    }
                }
            }
            let mut cross = [
                t[0][1] * t[1][2] - t[0][2] * t[1][1],
                t[0][2] * t[1][0] - t[0][0] * t[1][2],
                t[0][0] * t[1][1] - t[0][1] * t[1][0],
            ];
            let len = cross.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
            cross.iter_mut().for_each(|v| *v /= len);
            let weight = if j <= mesh.d { corner_angle(mesh, elem, j) } else { 1.0 };
            for c in 0..3 {
                normals[elem[j] as usize * 3 + c] += weight * cross[c];
            }
        }
    }
    for nj in normals.chunks_mut(3) {
        let len = nj.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
        nj.iter_mut().for_each(|v| *v /= len);
    }

    // H nu = M^{-1} (A x) componentwise; extract H by projecting onto n
    let (m, a) = assemble_batched(mesh, &AssemblyOptions::default())?.finalize()?;
    let opts = CgOptions::default();
    let mut hnu = vec![0.0; n * 3];
    for c in 0..3 {
        let x_c: Vec<f64> = (0..n).map(|j| mesh.nodes[j * 3 + c]).collect();
        let rhs = a.spmv(&x_c)?;
        let (z, _) = cg_solve(&m, &rhs, &opts)?;
        for j in 0..n {
            hnu[j * 3 + c] = z[j];
        }
    }

    let mut u = vec![0.0; 4 * n];
    for j in 0..n {
        for k in 0..3 {
            u[k * n + j] = normals[j * 3 + k];
        }
        u[3 * n + j] = (0..3).map(|c| hnu[j * 3 + c] * normals[j * 3 + c]).sum();
    }
    let v = velocity_of(&u);
    Ok(FlowState { x: mesh.nodes.clone(), u, v, t: 0.0 })
}

/// Interior angle of the element at corner `j` (weight for normal averaging).
fn corner_angle(mesh: &Mesh, elem: &[u32], j: usize) -> f64 {
    let corners = mesh.d + 1;
    let here = mesh.node(elem[j] as usize);
    let next = mesh.node(elem[(j + 1) % corners] as usize);
    let prev = mesh.node(elem[(j + corners - 1) % corners] as usize);
    let mut a = [0.0f64; 3];
    let mut b = [0.0f64; 3];
    for c in 0..3 {
        a[c] = next[c] - here[c];
        b[c] = prev[c] - here[c];
    }
    let dot: f64 = (0..3).map(|c| a[c] * b[c]).sum();
    let na: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    (dot / (na * nb).max(1e-300)).clamp(-1.0, 1.0).acos()
}

/// `v = -H (.) n` in node-major layout.
fn velocity_of(u: &[f64]) -> Vec<f64> {
    let n = u.len() / 4;
    let mut v = vec![0.0; 3 * n];
    for j in 0..n {
        let h = u[3 * n + j];
        for c in 0..3 {
            v[j * 3 + c] = -h * u[c * n + j];
        }
    }
    v
}

/// One linearly implicit BDF step of the coupled flow. `history` holds the
/// previous states oldest first; the last `scheme.order` entries are used.
/// Returns the new state and the assembly seconds (matrices plus nonlinear
/// term on the extrapolated surface).
pub fn kll_step(
    template: &Mesh,
    history: &[FlowState],
    tau: f64,
    scheme: &BdfScheme,
) -> Result<(FlowState, f64)> {
    let q = scheme.order;
    if history.len() < q {
        return Err(Error::Precondition(format!(
            "BDF{q} needs {q} previous states, got {}",
            history.len()
        )));
    }
    if tau <= 0.0 {
        return Err(Error::Precondition("time step must be positive".into()));
    }
    let n = template.num_nodes();

    // extrapolations from the history (gamma[0] weights the newest state)
    let mut x_tilde = vec![0.0; 3 * n];
    let mut u_tilde = vec![0.0; 4 * n];
    for j in 0..q {
        let g = scheme.gamma[j];
        let state = &history[history.len() - 1 - j];
        for (acc, v) in x_tilde.iter_mut().zip(&state.x) {
            *acc += g * v;
        }
        for (acc, v) in u_tilde.iter_mut().zip(&state.u) {
            *acc += g * v;
        }
    }

    let mesh_tilde = template.with_nodes(x_tilde)?;
    let t0 = Instant::now();
    let (m, a) = assemble_batched(&mesh_tilde, &AssemblyOptions::default())?.finalize()?;
    let f = kll_nonlinear_rhs(&mesh_tilde, &u_tilde)?;
    let t_asm = t0.elapsed().as_secs_f64();

    // ((delta0/tau) M + A) u_c = f_c - (1/tau) M sum_{j>=1} delta_j u^{n-j}_c
    let system = a.add_scaled(&m, scheme.delta[0] / tau)?;
    let mut hist = vec![0.0; 4 * n];
    for j in 1..=q {
        let dj = scheme.delta[j];
        for (acc, v) in hist.iter_mut().zip(&history[history.len() - j].u) {
            *acc += dj * v;
        }
    }
    let opts = CgOptions::default();
    let mut u_new = vec![0.0; 4 * n];
    let newest = &history[history.len() - 1];
    for k in 0..4 {
        let m_hist = m.spmv(&hist[k * n..(k + 1) * n])?;
        let rhs: Vec<f64> = (0..n).map(|j| f[k * n + j] - m_hist[j] / tau).collect();
        let guess = newest.u[k * n..(k + 1) * n].to_vec();
        let (sol, _) = cg_solve_with_guess(&system, &rhs, guess, &opts)?;
        u_new[k * n..(k + 1) * n].copy_from_slice(&sol);
    }

    // v from the new unknowns, then x from the BDF relation
    let v = velocity_of(&u_new);
    let mut x_new = vec![0.0; 3 * n];
    for j in 0..3 * n {
        let mut hist_x = 0.0;
        for jj in 1..=q {
            hist_x += scheme.delta[jj] * history[history.len() - jj].x[j];
        }
        x_new[j] = (tau * v[j] - hist_x) / scheme.delta[0];
    }
    Ok((FlowState { x: x_new, u: u_new, v, t: newest.t + tau }, t_asm))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowAlgorithm {
    Dziuk,
    Kll,
}

/// Initial data policy for the coupled flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FlowInit {
    /// Exact sphere data when every node lies on the unit sphere, discrete
    /// initialization otherwise.
    #[default]
    Auto,
    Sphere,
    Discrete,
}

#[derive(Debug, Clone)]
pub struct FlowOptions {
    pub algorithm: FlowAlgorithm,
    pub tau: f64,
    pub t_end: f64,
    pub bdf_order: usize,
    /// Snapshot interval in steps; 0 keeps only first and last.
    pub snap_every: usize,
    pub init: FlowInit,
}

impl FlowOptions {
    pub fn new(algorithm: FlowAlgorithm, tau: f64, t_end: f64) -> Self {
        Self { algorithm, tau, t_end, bdf_order: 2, snap_every: 0, init: FlowInit::Auto }
    }
}

/// Per-step log row of a flow run.
#[derive(Debug, Clone)]
pub struct FlowRow {
    pub step: usize,
    pub t: f64,
    pub assembly_s: f64,
    pub solve_s: f64,
    pub area: f64,
    pub mean_radius: f64,
    pub normal_drift: f64,
}

pub const FLOW_CSV_HEADER: &str = "step,t,assembly_s,solve_s,area,mean_radius,normal_drift";

pub fn write_flow_csv(rows: &[FlowRow], mut out: impl std::io::Write) -> Result<()> {
    writeln!(out, "{FLOW_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{:.12e},{:.12e},{:.6e}",
            r.step, r.t, r.assembly_s, r.solve_s, r.area, r.mean_radius, r.normal_drift
        )?;
    }
    Ok(())
}

#[derive(Debug)]
pub struct FlowResult {
    pub rows: Vec<FlowRow>,
    pub snapshots: Vec<(usize, Mesh)>,
    pub completed: bool,
    pub stop_reason: Option<String>,
    pub total_s: f64,
    pub assembly_total_s: f64,
    pub solve_total_s: f64,
}

impl FlowResult {
    /// Fraction of the total runtime spent assembling.
    pub fn assembly_fraction(&self) -> f64 {
        self.assembly_total_s / self.total_s.max(1e-300)
    }

    /// Write one ellmesh file per snapshot into `dir`.
    pub fn write_snapshots(&self, dir: &std::path::Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (step, mesh) in &self.snapshots {
            write_mesh(mesh, dir.join(format!("snapshot_{step:06}.ellmesh")))?;
        }
        Ok(())
    }
}

fn mean_radius(nodes: &[f64]) -> f64 {
    let n = nodes.len() / 3;
    let mut centroid = [0.0f64; 3];
    for p in nodes.chunks(3) {
        for c in 0..3 {
            centroid[c] += p[c];
        }
    }
    centroid.iter_mut().for_each(|c| *c /= n as f64);
    nodes
        .chunks(3)
        .map(|p| {
            (0..3).map(|c| (p[c] - centroid[c]) * (p[c] - centroid[c])).sum::<f64>().sqrt()
        })
        .sum::<f64>()
        / n as f64
}

fn on_unit_sphere(mesh: &Mesh) -> bool {
    mesh.nodes
        .chunks(3)
        .all(|p| (p.iter().map(|c| c * c).sum::<f64>().sqrt() - 1.0).abs() < 1e-10)
}

/// Run the selected flow to final time `t_end`, logging per-step assembly
/// and solve times plus geometric diagnostics. Mesh degeneration mid-flow
/// stops the run gracefully with the partial trajectory.
pub fn flow_driver(mesh: &Mesh, opts: &FlowOptions) -> Result<FlowResult> {
    require_closed_2d_surface(mesh)?;
    if opts.tau <= 0.0 && opts.t_end > 0.0 {
        return Err(Error::Precondition("flow needs a positive time step".into()));
    }
    let run_start = Instant::now();
    let nsteps = if opts.t_end <= 0.0 { 0 } else { (opts.t_end / opts.tau).round() as usize };

    let mut current = mesh.clone();
    let mut rows = Vec::with_capacity(nsteps + 1);
    let mut snapshots = vec![(0usize, current.clone())];
    let mut completed = true;
    let mut stop_reason = None;

    let scheme_full = BdfScheme::new(opts.bdf_order)?;
    let bootstrap = BdfScheme::new(1)?;
    let mut history: Vec<FlowState> = Vec::new();
    if opts.algorithm == FlowAlgorithm::Kll {
        let state = match opts.init {
            FlowInit::Sphere => kll_sphere_data(&current),
            FlowInit::Discrete => kll_discrete_data(&current)?,
            FlowInit::Auto => {
                if on_unit_sphere(&current) {
                    kll_sphere_data(&current)
                } else {
                    kll_discrete_data(&current)?
                }
            }
        };
        history.push(state);
    }

    let mut drift = history.last().map(|s| s.normal_drift()).unwrap_or(0.0);
    rows.push(FlowRow {
        step: 0,
        t: 0.0,
        assembly_s: 0.0,
        solve_s: 0.0,
        area: total_measure(&current)?,
        mean_radius: mean_radius(&current.nodes),
        normal_drift: drift,
    });

    let mut assembly_total = 0.0;
    let mut solve_total = 0.0;
    for step in 1..=nsteps {
        let t0 = Instant::now();
        let step_result: Result<(Vec<f64>, f64)> = match opts.algorithm {
            FlowAlgorithm::Dziuk => dziuk_step(&current, opts.tau),
            FlowAlgorithm::Kll => {
                let scheme =
                    if history.len() < scheme_full.order { &bootstrap } else { &scheme_full };
                kll_step(&current, &history, opts.tau, scheme).map(|(state, t_asm)| {
                    drift = state.normal_drift();
                    let x = state.x.clone();
                    history.push(state);
                    if history.len() > 3 {
                        history.remove(0);
                    }
                    (x, t_asm)
                })
            }
        };
        match step_result {
            Ok((x_new, t_asm)) => {
                let t_solve = t0.elapsed().as_secs_f64() - t_asm;
                assembly_total += t_asm;
                solve_total += t_solve;
                current = current.with_nodes(x_new)?;
                rows.push(FlowRow {
                    step,
                    t: step as f64 * opts.tau,
                    assembly_s: t_asm,
                    solve_s: t_solve,
                    area: total_measure(&current)?,
                    mean_radius: mean_radius(&current.nodes),
                    normal_drift: drift,
                });
                let at_end = step == nsteps;
                if (opts.snap_every > 0 && step % opts.snap_every == 0 && !at_end) || at_end {
                    snapshots.push((step, current.clone()));
                }
            }
            Err(Error::DegenerateElement { element, det }) => {
                completed = false;
                stop_reason = Some(format!(
                    "element {element} degenerated (det = {det:.3e}) at step {step}"
                ));
                snapshots.push((step - 1, current.clone()));
                break;
            }
            Err(e) => return Err(e),
        }
    }

    Ok(FlowResult {
        rows,
        snapshots,
        completed,
        stop_reason,
        total_s: run_start.elapsed().as_secs_f64(),
        assembly_total_s: assembly_total,
        solve_total_s: solve_total,
    })
}

#[cfg(test)]
mod tests;
