//! Load vector assembly: quadrature of a coefficient function at mapped
//! quadrature points, or the nodal shortcut b = M f.

use rayon::prelude::*;

use super::{corner_diameter_sq, dispatch, gather_coords, measure_of, DEGENERACY_TOL, WINDOW};
use crate::error::{Error, Result};
use crate::mesh::{Mesh, MeshKind};
use crate::reference::{precompute, ReferencePack};
use crate::sparse::CsrMatrix;

/// b|j = sum_E sum_i w_i f(F_E(xi_i)) phi_j(xi_i) det(xi_i).
pub fn assemble_load(mesh: &Mesh, f: &(dyn Fn(&[f64]) -> f64 + Sync)) -> Result<Vec<f64>> {
    let pack = precompute(mesh.d, mesh.p)?;
    let ne = mesh.num_elements();
    let nref = mesh.nref();

    // per-element contributions first, then a deterministic scatter
    let mut local = vec![0.0; ne * nref];
    dispatch!(mesh, load_kernel(mesh, &pack, f, &mut local))?;

    let mut out = vec![0.0; mesh.num_nodes()];
    for e in 0..ne {
        let elem = mesh.element(e);
        for j in 0..nref {
            out[elem[j] as usize] += local[e * nref + j];
        }
    }
    Ok(out)
}

fn load_kernel<const D: usize, const M: usize, const NREF: usize>(
    mesh: &Mesh,
    pack: &ReferencePack,
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    local: &mut [f64],
) -> Result<()> {
    let q = pack.q();
    local.par_chunks_mut(WINDOW * NREF).enumerate().try_for_each(|(w, chunk)| {
        let start = w * WINDOW;
        for b in 0..chunk.len() / NREF {
            let e = start + b;
            let x = gather_coords::<M, NREF>(mesh, e);
            let h2 = corner_diameter_sq::<M, NREF>(&x, D);
            let degenerate_below = DEGENERACY_TOL * h2.powf(D as f64 / 2.0);
            for i in 0..q {
                let phi = pack.fq_at(i);
                let g = pack.grad_at(i);
                let mut t = [[0.0; M]; D];
                for j in 0..NREF {
                    for k in 0..D {
                        let gjk = g[j * D + k];
                        for c in 0..M {
                            t[k][c] += x[j][c] * gjk;
                        }
                    }
                }
                let det = measure_of::<D, M>(&t);
                if !(det > degenerate_below) {
                    return Err(Error::DegenerateElement { element: e, det });
                }
                let mut mapped = [0.0f64; M];
                for j in 0..NREF {
                    for c in 0..M {
                        mapped[c] += x[j][c] * phi[j];
                    }
                }
                let fval = f(&mapped);
                if !fval.is_finite() {
                    return Err(Error::NonFinite { element: e });
                }
                let scale = pack.w[i] * det * fval;
                for j in 0..NREF {
                    chunk[b * NREF + j] += scale * phi[j];
                }
            }
        }
        Ok(())
    })
}

/// Total measure (area/length/volume) of the discrete geometry by
/// quadrature of 1.
pub fn total_measure(mesh: &Mesh) -> Result<f64> {
    let pack = precompute(mesh.d, mesh.p)?;
    let ne = mesh.num_elements();
    let mut per_element = vec![0.0; ne];
    dispatch!(mesh, measure_kernel(mesh, &pack, &mut per_element))?;
    Ok(per_element.iter().sum())
}

fn measure_kernel<const D: usize, const M: usize, const NREF: usize>(
    mesh: &Mesh,
    pack: &ReferencePack,
    per_element: &mut [f64],
) -> Result<()> {
    let q = pack.q();
    per_element.par_chunks_mut(WINDOW).enumerate().for_each(|(w, chunk)| {
        let start = w * WINDOW;
        for (b, out) in chunk.iter_mut().enumerate() {
            let x = gather_coords::<M, NREF>(mesh, start + b);
            let mut acc = 0.0;
            for i in 0..q {
                let g = pack.grad_at(i);
                let mut t = [[0.0; M]; D];
                for j in 0..NREF {
                    for k in 0..D {
                        let gjk = g[j * D + k];
                        for c in 0..M {
                            t[k][c] += x[j][c] * gjk;
                        }
                    }
                }
                acc += pack.w[i] * measure_of::<D, M>(&t);
            }
            *out = acc;
        }
    });
    Ok(())
}

/// Nodal mode: b = M f with f sampled at the mesh nodes.
pub fn assemble_load_nodal(
    mesh: &Mesh,
    mass: &CsrMatrix,
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
) -> Result<Vec<f64>> {
    let nodal: Vec<f64> = (0..mesh.num_nodes()).map(|j| f(mesh.node(j))).collect();
    if let Some(e) = nodal.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { element: e });
    }
    mass.spmv(&nodal)
}
