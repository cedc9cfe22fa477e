//! Quadrature-free assembly for linear elements: the element map is affine,
//! so the local matrices are the exact reference matrices scaled by the
//! (constant) measure and metric.

use rayon::prelude::*;

use super::{fill_indices, AssemblyOutput, WINDOW};
use crate::error::{Error, Result};
use crate::mesh::{Mesh, MeshKind};
use crate::reference::precompute;

pub fn assemble_p1_fast(mesh: &Mesh) -> Result<AssemblyOutput> {
    if mesh.p != 1 {
        return Err(Error::Precondition(format!(
            "assemble_p1_fast expects a P1 mesh, got p = {}",
            mesh.p
        )));
    }
    let pack = precompute(mesh.d, 1)?;
    let tables = pack.p1_exact.as_ref().expect("p1 pack carries exact tables");
    let d = mesh.d;
    let m = mesh.m;
    let ne = mesh.num_elements();
    let nref = mesh.nref();
    let block = nref * nref;

    let mut out = AssemblyOutput {
        n: mesh.num_nodes(),
        rows: vec![0; ne * block],
        cols: vec![0; ne * block],
        mass_vals: vec![0.0; ne * block],
        stiffness_vals: vec![0.0; ne * block],
    };
    fill_indices(mesh, &mut out.rows, &mut out.cols);

    let m_chunks = out.mass_vals.par_chunks_mut(WINDOW * block);
    let a_chunks = out.stiffness_vals.par_chunks_mut(WINDOW * block);
    (m_chunks, a_chunks).into_par_iter().enumerate().try_for_each(|(w, (ms, avs))| {
        let start = w * WINDOW;
        let mut tangents = [[0.0f64; 3]; 3];
        for b in 0..ms.len() / block {
            let e = start + b;
            let elem = mesh.element(e);
            // edge vectors from the first corner: exact translation invariance
            let origin = mesh.node(elem[0] as usize);
            for k in 0..d {
                let pk = mesh.node(elem[k + 1] as usize);
                for c in 0..m {
                    tangents[k][c] = pk[c] - origin[c];
                }
            }
            let measure = match (mesh.kind, d) {
                (MeshKind::Bulk, 2) => {
                    (tangents[0][0] * tangents[1][1] - tangents[0][1] * tangents[1][0]).abs()
                }
                (MeshKind::Bulk, _) => {
                    let t = &tangents;
                    (t[0][0] * (t[1][1] * t[2][2] - t[1][2] * t[2][1])
                        - t[0][1] * (t[1][0] * t[2][2] - t[1][2] * t[2][0])
                        + t[0][2] * (t[1][0] * t[2][1] - t[1][1] * t[2][0]))
                        .abs()
                }
                (MeshKind::Surface, 1) => {
                    (tangents[0][0] * tangents[0][0] + tangents[0][1] * tangents[0][1]).sqrt()
                }
                (MeshKind::Surface, _) => {
                    let n = [
                        tangents[0][1] * tangents[1][2] - tangents[0][2] * tangents[1][1],
                        tangents[0][2] * tangents[1][0] - tangents[0][0] * tangents[1][2],
                        tangents[0][0] * tangents[1][1] - tangents[0][1] * tangents[1][0],
                    ];
                    (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt()
                }
            };
            if measure <= 0.0 || !measure.is_finite() {
                return Err(Error::DegenerateElement { element: e, det: measure });
            }

            // metric (first fundamental form) and its inverse
            let mut gram = [[0.0f64; 3]; 3];
            for a in 0..d {
                for bb in 0..d {
                    gram[a][bb] = (0..m).map(|c| tangents[a][c] * tangents[bb][c]).sum();
                }
            }
            let inv = invert_sym(&gram, d)
                .ok_or(Error::DegenerateElement { element: e, det: measure })?;

            for kj in 0..block {
                ms[b * block + kj] = measure * tables.m_ref[kj];
            }
            for kj in 0..block {
                let mut s = 0.0;
                for row in 0..d {
                    for col in 0..d {
                        s += inv[row][col] * tables.a_ref[(row * d + col) * block + kj];
                    }
                }
                avs[b * block + kj] = measure * s;
            }
        }
        Ok(())
    })?;

    Ok(out)
}

fn invert_sym(a: &[[f64; 3]; 3], d: usize) -> Option<[[f64; 3]; 3]> {
    let mut out = [[0.0; 3]; 3];
    match d {
        1 => {
            if a[0][0] == 0.0 {
                return None;
            }
            out[0][0] = 1.0 / a[0][0];
        }
        2 => {
            let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
            if det == 0.0 {
                return None;
            }
            out[0][0] = a[1][1] / det;
            out[0][1] = -a[0][1] / det;
            out[1][0] = -a[1][0] / det;
            out[1][1] = a[0][0] / det;
        }
        _ => {
            let det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
                - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
                + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
            if det == 0.0 {
                return None;
            }
            out[0][0] = (a[1][1] * a[2][2] - a[1][2] * a[2][1]) / det;
            out[0][1] = (a[0][2] * a[2][1] - a[0][1] * a[2][2]) / det;
            out[0][2] = (a[0][1] * a[1][2] - a[0][2] * a[1][1]) / det;
            out[1][0] = out[0][1];
            out[1][1] = (a[0][0] * a[2][2] - a[0][2] * a[2][0]) / det;
            out[1][2] = (a[0][2] * a[1][0] - a[0][0] * a[1][2]) / det;
            out[2][0] = out[0][2];
            out[2][1] = out[1][2];
            out[2][2] = (a[0][0] * a[1][1] - a[0][1] * a[1][0]) / det;
        }
    }
    Some(out)
}
