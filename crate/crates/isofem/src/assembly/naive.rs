//! Per-element reference assembler: a single-threaded, straightforward
//! element-by-element loop with runtime dimensions and per-element local
//! matrices collected into cells, merged into triplets at the end. Serves
//! as the correctness oracle and the benchmark baseline for the batched
//! kernels.

use super::AssemblyOutput;
use crate::error::{Error, Result};
use crate::mesh::{Mesh, MeshKind};
use crate::reference::{precompute, ReferencePack};

pub fn assemble_naive(mesh: &Mesh) -> Result<AssemblyOutput> {
    let pack = precompute(mesh.d, mesh.p)?;
    let ne = mesh.num_elements();
    let nref = mesh.nref();
    let n = mesh.num_nodes();

    // local contributions per element, gathered before global assembly
    let mut m_cells: Vec<Vec<f64>> = Vec::with_capacity(ne);
    let mut a_cells: Vec<Vec<f64>> = Vec::with_capacity(ne);
    for e in 0..ne {
        let (mloc, aloc) = local_matrices(mesh, &pack, e)?;
        m_cells.push(mloc);
        a_cells.push(aloc);
    }

    let block = nref * nref;
    let mut out = AssemblyOutput {
        n,
        rows: Vec::with_capacity(ne * block),
        cols: Vec::with_capacity(ne * block),
        mass_vals: Vec::with_capacity(ne * block),
        stiffness_vals: Vec::with_capacity(ne * block),
    };
    for e in 0..ne {
        let elem = mesh.element(e);
        for k in 0..nref {
            for j in 0..nref {
                out.rows.push(elem[k]);
                out.cols.push(elem[j]);
                out.mass_vals.push(m_cells[e][k * nref + j]);
                out.stiffness_vals.push(a_cells[e][k * nref + j]);
            }
        }
    }
    Ok(out)
}

/// Local mass and stiffness matrix of one element by explicit quadrature.
/// Each intermediate quantity (coordinates, Jacobian, inverse, physical
/// gradients) is built as a fresh array, mirroring the structure of a
/// direct element-by-element implementation.
fn local_matrices(mesh: &Mesh, pack: &ReferencePack, e: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = mesh.d;
    let m = mesh.m;
    let nref = pack.nref;
    let elem = mesh.element(e);

    let mut mloc = vec![0.0; nref * nref];
    let mut aloc = vec![0.0; nref * nref];
    for i in 0..pack.q() {
        let phi = pack.fq_at(i);
        let grad = pack.grad_at(i);

        let coords = gather(mesh, elem, m, nref);
        let mut l = jacobian_rows(&coords, grad, d, m, nref);
        let det = match mesh.kind {
            MeshKind::Bulk => det_dyn(&l, m).abs(),
            MeshKind::Surface if d == 1 => {
                let (tx, ty) = (l[0], l[1]);
                l[2] = -ty;
                l[3] = tx;
                (tx * tx + ty * ty).sqrt()
            }
            MeshKind::Surface => {
                let n0 = l[1] * l[5] - l[2] * l[4];
                let n1 = l[2] * l[3] - l[0] * l[5];
                let n2 = l[0] * l[4] - l[1] * l[3];
                l[6] = n0;
                l[7] = n1;
                l[8] = n2;
                (n0 * n0 + n1 * n1 + n2 * n2).sqrt()
            }
        };
        if det <= 0.0 || !det.is_finite() {
            return Err(Error::DegenerateElement { element: e, det });
        }
        let c = invert_dyn(&l, m).ok_or(Error::DegenerateElement { element: e, det })?;

        let wdet = pack.w[i] * det;
        for k in 0..nref {
            for j in 0..nref {
                mloc[k * nref + j] += wdet * phi[k] * phi[j];
            }
        }
        // physical gradients b_j = C ghat_j (padded with zeros beyond d)
        let mut b = vec![0.0; m * nref];
        for j in 0..nref {
            for row in 0..m {
                let mut s = 0.0;
                for r in 0..d {
                    s += c[row * m + r] * grad[j * d + r];
                }
                b[row * nref + j] = s;
            }
        }
        for k in 0..nref {
            for j in 0..nref {
                let mut s = 0.0;
                for row in 0..m {
                    s += b[row * nref + k] * b[row * nref + j];
                }
                aloc[k * nref + j] += wdet * s;
            }
        }
    }
    Ok((mloc, aloc))
}

/// Single-threaded per-element load vector, the baseline twin of
/// [`super::assemble_load`] for benchmark runs.
pub fn assemble_load_naive(mesh: &Mesh, f: &dyn Fn(&[f64]) -> f64) -> Result<Vec<f64>> {
    let pack = precompute(mesh.d, mesh.p)?;
    let d = mesh.d;
    let m = mesh.m;
    let nref = mesh.nref();
    let mut out = vec![0.0; mesh.num_nodes()];
    for e in 0..mesh.num_elements() {
        let elem = mesh.element(e);
        for i in 0..pack.q() {
            let phi = pack.fq_at(i);
            let grad = pack.grad_at(i);
            let coords = gather(mesh, elem, m, nref);
            let mut l = jacobian_rows(&coords, grad, d, m, nref);
            let det = match mesh.kind {
                MeshKind::Bulk => det_dyn(&l, m).abs(),
                MeshKind::Surface if d == 1 => {
                    let (tx, ty) = (l[0], l[1]);
                    l[2] = -ty;
                    l[3] = tx;
                    (tx * tx + ty * ty).sqrt()
                }
                MeshKind::Surface => {
                    let n0 = l[1] * l[5] - l[2] * l[4];
                    let n1 = l[2] * l[3] - l[0] * l[5];
                    let n2 = l[0] * l[4] - l[1] * l[3];
                    (n0 * n0 + n1 * n1 + n2 * n2).sqrt()
                }
            };
            if det <= 0.0 || !det.is_finite() {
                return Err(Error::DegenerateElement { element: e, det });
            }
            let mut mapped = vec![0.0; m];
            for j in 0..nref {
                for c in 0..m {
                    mapped[c] += coords[j * m + c] * phi[j];
                }
            }
            let fval = f(&mapped);
            if !fval.is_finite() {
                return Err(Error::NonFinite { element: e });
            }
            for j in 0..nref {
                out[elem[j] as usize] += pack.w[i] * det * fval * phi[j];
            }
        }
    }
    Ok(out)
}

fn gather(mesh: &Mesh, elem: &[u32], m: usize, nref: usize) -> Vec<f64> {
    let mut coords = vec![0.0; nref * m];
    for j in 0..nref {
        coords[j * m..(j + 1) * m].copy_from_slice(mesh.node(elem[j] as usize));
    }
    coords
}

/// Jacobian rows: row k = sum_j x_j d_k phi_j.
fn jacobian_rows(coords: &[f64], grad: &[f64], d: usize, m: usize, nref: usize) -> Vec<f64> {
    let mut l = vec![0.0; m * m];
    for j in 0..nref {
        for k in 0..d {
            for c in 0..m {
                l[k * m + c] += coords[j * m + c] * grad[j * d + k];
            }
        }
    }
    l
}

fn det_dyn(a: &[f64], m: usize) -> f64 {
    match m {
        1 => a[0],
        2 => a[0] * a[3] - a[1] * a[2],
        _ => {
            a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6])
                + a[2] * (a[3] * a[7] - a[4] * a[6])
        }
    }
}

fn invert_dyn(a: &[f64], m: usize) -> Option<Vec<f64>> {
    let det = det_dyn(a, m);
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    let mut out = vec![0.0; m * m];
    match m {
        1 => out[0] = 1.0 / det,
        2 => {
            out[0] = a[3] / det;
            out[1] = -a[1] / det;
            out[2] = -a[2] / det;
            out[3] = a[0] / det;
        }
        _ => {
            out[0] = (a[4] * a[8] - a[5] * a[7]) / det;
            out[1] = (a[2] * a[7] - a[1] * a[8]) / det;
            out[2] = (a[1] * a[5] - a[2] * a[4]) / det;
            out[3] = (a[5] * a[6] - a[3] * a[8]) / det;
            out[4] = (a[0] * a[8] - a[2] * a[6]) / det;
            out[5] = (a[2] * a[3] - a[0] * a[5]) / det;
            out[6] = (a[3] * a[7] - a[4] * a[6]) / det;
            out[7] = (a[1] * a[6] - a[0] * a[7]) / det;
            out[8] = (a[0] * a[4] - a[1] * a[3]) / det;
        }
    }
    Some(out)
}
