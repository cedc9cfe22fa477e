//! Element-batched assembly of mass and stiffness matrices.
//!
//! Local contributions follow the reference-element technique: per element
//! and quadrature node the Jacobian pages `L`, their inverses `C` and the
//! measure factors are computed, then contracted against precomputed basis
//! tables into `nref^2` triplet values per element. Elements are processed
//! in contiguous batches whose geometry pages are materialized at once and
//! walked by a parallel worker pool; the result is independent of the batch
//! size. A per-element naive assembler ([`assemble_naive`]) is kept as
//! correctness oracle and benchmark baseline, and a quadrature-free path
//! ([`assemble_p1_fast`]) covers linear elements.

mod load;
mod naive;
mod p1fast;

pub use load::{assemble_load, assemble_load_nodal, total_measure};
pub use naive::{assemble_load_naive, assemble_naive};
pub use p1fast::assemble_p1_fast;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::{Mesh, MeshKind};
use crate::reference::{precompute, ReferencePack};
use crate::sparse::{CsrMatrix, Triplets};

/// Default number of elements per batch.
pub const DEFAULT_BATCH_SIZE: usize = 1_000_000;

/// Elements per parallel work item inside a batch.
const WINDOW: usize = 512;

/// Relative measure threshold below which an element counts as degenerate.
const DEGENERACY_TOL: f64 = 1e-14;

#[derive(Debug, Clone)]
pub struct AssemblyOptions {
    pub batch_size: usize,
    /// Upper bound for geometry pages plus triplet storage.
    pub memory_budget_mb: usize,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        Self { batch_size: DEFAULT_BATCH_SIZE, memory_budget_mb: 8192 }
    }
}

/// Triplet-form mass and stiffness contributions, `nref^2 * |E|` values
/// each over one shared (row, col) index pattern.
#[derive(Debug, Clone)]
pub struct AssemblyOutput {
    pub n: usize,
    pub rows: Vec<u32>,
    pub cols: Vec<u32>,
    pub mass_vals: Vec<f64>,
    pub stiffness_vals: Vec<f64>,
}

impl AssemblyOutput {
    /// Both matrices in one scatter pass over the shared index pattern.
    pub fn finalize(&self) -> Result<(CsrMatrix, CsrMatrix)> {
        crate::sparse::finalize_pair_rows(
            self.n,
            &self.rows,
            &self.cols,
            &self.mass_vals,
            &self.stiffness_vals,
        )
    }

    /// Mass contributions as an owned triplet list.
    pub fn mass_triplets(&self) -> Triplets {
        Triplets {
            n: self.n,
            rows: self.rows.clone(),
            cols: self.cols.clone(),
            vals: self.mass_vals.clone(),
        }
    }

    /// Stiffness contributions as an owned triplet list.
    pub fn stiffness_triplets(&self) -> Triplets {
        Triplets {
            n: self.n,
            rows: self.rows.clone(),
            cols: self.cols.clone(),
            vals: self.stiffness_vals.clone(),
        }
    }
}

/// Geometry pages for a contiguous range of elements.
///
/// Layouts (element-major): `x` is `count * nref * m`, `l` and `c` are
/// `count * q * m * m` (row-major pages; rows of `L` are the map partials,
/// the last row of a surface page is the unnormalized normal), `det` is
/// `count * q` and holds the measure factors.
#[derive(Debug, Clone)]
pub struct ElementBatch {
    pub first: usize,
    pub count: usize,
    pub nref: usize,
    pub m: usize,
    pub q: usize,
    pub x: Vec<f64>,
    pub l: Vec<f64>,
    pub c: Vec<f64>,
    pub det: Vec<f64>,
}

impl ElementBatch {
    fn alloc(first: usize, count: usize, nref: usize, m: usize, q: usize) -> Self {
        Self {
            first,
            count,
            nref,
            m,
            q,
            x: vec![0.0; count * nref * m],
            l: vec![0.0; count * q * m * m],
            c: vec![0.0; count * q * m * m],
            det: vec![0.0; count * q],
        }
    }

    /// `L` page of local element `b` at quadrature node `i`.
    pub fn l_page(&self, b: usize, i: usize) -> &[f64] {
        let mm = self.m * self.m;
        let base = (b * self.q + i) * mm;
        &self.l[base..base + mm]
    }

    pub fn c_page(&self, b: usize, i: usize) -> &[f64] {
        let mm = self.m * self.m;
        let base = (b * self.q + i) * mm;
        &self.c[base..base + mm]
    }

    pub fn det_at(&self, b: usize, i: usize) -> f64 {
        self.det[b * self.q + i]
    }
}

/// Jacobian pages, inverses and measures of one element at all quadrature
/// nodes (thin wrapper over the batch kernel for a single element).
pub struct ElementGeometry {
    pub m: usize,
    pub q: usize,
    /// `q * m * m`, row-major pages.
    pub l: Vec<f64>,
    /// `q * m * m` inverse pages.
    pub c: Vec<f64>,
    /// `q` measure factors.
    pub det: Vec<f64>,
}

pub fn element_geometry(mesh: &Mesh, element: usize, pack: &ReferencePack) -> Result<ElementGeometry> {
    let batch = compute_batch(mesh, pack, element, 1)?;
    Ok(ElementGeometry { m: batch.m, q: batch.q, l: batch.l, c: batch.c, det: batch.det })
}

macro_rules! dispatch {
    ($mesh:expr, $func:ident ( $($args:expr),* )) => {
        match ($mesh.kind, $mesh.d, $mesh.p) {
            (MeshKind::Bulk, 2, 1) => $func::<2, 2, 3>($($args),*),
            (MeshKind::Bulk, 2, 2) => $func::<2, 2, 6>($($args),*),
            (MeshKind::Bulk, 3, 1) => $func::<3, 3, 4>($($args),*),
            (MeshKind::Bulk, 3, 2) => $func::<3, 3, 10>($($args),*),
            (MeshKind::Surface, 1, 1) => $func::<1, 2, 2>($($args),*),
            (MeshKind::Surface, 1, 2) => $func::<1, 2, 3>($($args),*),
            (MeshKind::Surface, 2, 1) => $func::<2, 3, 3>($($args),*),
            (MeshKind::Surface, 2, 2) => $func::<2, 3, 6>($($args),*),
            (_, d, p) => Err(Error::UnsupportedElement { d, p }),
        }
    };
}
pub(crate) use dispatch;

/// Fill the geometry pages for `count` elements starting at `first`.
pub fn compute_batch(
    mesh: &Mesh,
    pack: &ReferencePack,
    first: usize,
    count: usize,
) -> Result<ElementBatch> {
    let mut batch = ElementBatch::alloc(first, count, mesh.nref(), mesh.m, pack.q());
    dispatch!(mesh, fill_geometry(mesh, pack, &mut batch))?;
    Ok(batch)
}

fn fill_geometry<const D: usize, const M: usize, const NREF: usize>(
    mesh: &Mesh,
    pack: &ReferencePack,
    batch: &mut ElementBatch,
) -> Result<()> {
    let q = pack.q();
    let mm = M * M;
    let x_chunks = batch.x.par_chunks_mut(WINDOW * NREF * M);
    let l_chunks = batch.l.par_chunks_mut(WINDOW * q * mm);
    let c_chunks = batch.c.par_chunks_mut(WINDOW * q * mm);
    let det_chunks = batch.det.par_chunks_mut(WINDOW * q);
    let first = batch.first;
    (x_chunks, l_chunks, c_chunks, det_chunks)
        .into_par_iter()
        .enumerate()
        .try_for_each(|(w, (xs, ls, cs, dets))| {
            let start = first + w * WINDOW;
            let n_local = dets.len() / q;
            for b in 0..n_local {
                let e = start + b;
                let x = gather_coords::<M, NREF>(mesh, e);
                xs[b * NREF * M..(b + 1) * NREF * M].copy_from_slice(x.as_flattened());
                let h2 = corner_diameter_sq::<M, NREF>(&x, D);
                let degenerate_below = DEGENERACY_TOL * h2.powf(D as f64 / 2.0);
                for i in 0..q {
                    let (l, c, measure) =
                        geometry_at::<D, M, NREF>(&x, pack.grad_at(i), e, degenerate_below)?;
                    let base = (b * q + i) * mm;
                    for r in 0..M {
                        ls[base + r * M..base + r * M + M].copy_from_slice(&l[r]);
                        cs[base + r * M..base + r * M + M].copy_from_slice(&c[r]);
                    }
                    dets[b * q + i] = measure;
                }
            }
            Ok(())
        })
}

#[inline]
fn gather_coords<const M: usize, const NREF: usize>(mesh: &Mesh, e: usize) -> [[f64; M]; NREF] {
    let elem = mesh.element(e);
    let mut x = [[0.0; M]; NREF];
    for j in 0..NREF {
        let base = elem[j] as usize * M;
        x[j].copy_from_slice(&mesh.nodes[base..base + M]);
    }
    x
}

/// Squared longest corner-to-corner distance, the degeneracy scale.
#[inline]
fn corner_diameter_sq<const M: usize, const NREF: usize>(x: &[[f64; M]; NREF], d: usize) -> f64 {
    let mut h2: f64 = 0.0;
    for a in 0..=d {
        for b in a + 1..=d {
            let mut s = 0.0;
            for c in 0..M {
                let t = x[a][c] - x[b][c];
                s += t * t;
            }
            h2 = h2.max(s);
        }
    }
    h2
}

/// Jacobian rows, inverse and measure of one element at one quadrature
/// node. Rows `0..D` of `L` are the map partials; a surface page gets the
/// perpendicular/cross-product as its last row.
#[inline]
fn geometry_at<const D: usize, const M: usize, const NREF: usize>(
    x: &[[f64; M]; NREF],
    g: &[f64],
    element: usize,
    degenerate_below: f64,
) -> Result<([[f64; M]; M], [[f64; M]; M], f64)> {
    let mut l = [[0.0; M]; M];
    for j in 0..NREF {
        for k in 0..D {
            let gjk = g[j * D + k];
            for c in 0..M {
                l[k][c] += x[j][c] * gjk;
            }
        }
    }
    let measure = if M == D {
        det_small::<M>(&l).abs()
    } else if D == 1 {
        // perpendicular of the tangent, anti-clockwise
        let (tx, ty) = (l[0][0], l[0][1]);
        l[1][0] = -ty;
        l[1][1] = tx;
        (tx * tx + ty * ty).sqrt()
    } else {
        let n = [
            l[0][1] * l[1][2] - l[0][2] * l[1][1],
            l[0][2] * l[1][0] - l[0][0] * l[1][2],
            l[0][0] * l[1][1] - l[0][1] * l[1][0],
        ];
        l[2][..3].copy_from_slice(&n[..M.min(3)]);
        (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt()
    };
    if !(measure > degenerate_below) {
        return Err(Error::DegenerateElement { element, det: measure });
    }
    let c =
        invert_small::<M>(&l).ok_or(Error::DegenerateElement { element, det: measure })?;
    Ok((l, c, measure))
}

#[inline]
fn det_small<const M: usize>(a: &[[f64; M]; M]) -> f64 {
    match M {
        1 => a[0][0],
        2 => a[0][0] * a[1][1] - a[0][1] * a[1][0],
        _ => {
            a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
                - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
                + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
        }
    }
}

#[inline]
fn invert_small<const M: usize>(a: &[[f64; M]; M]) -> Option<[[f64; M]; M]> {
    let det = det_small::<M>(a);
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    let inv_det = 1.0 / det;
    let mut out = [[0.0; M]; M];
    match M {
        1 => out[0][0] = inv_det,
        2 => {
            out[0][0] = a[1][1] * inv_det;
            out[0][1] = -a[0][1] * inv_det;
            out[1][0] = -a[1][0] * inv_det;
            out[1][1] = a[0][0] * inv_det;
        }
        _ => {
            out[0][0] = (a[1][1] * a[2][2] - a[1][2] * a[2][1]) * inv_det;
            out[0][1] = (a[0][2] * a[2][1] - a[0][1] * a[2][2]) * inv_det;
            out[0][2] = (a[0][1] * a[1][2] - a[0][2] * a[1][1]) * inv_det;
            out[1][0] = (a[1][2] * a[2][0] - a[1][0] * a[2][2]) * inv_det;
            out[1][1] = (a[0][0] * a[2][2] - a[0][2] * a[2][0]) * inv_det;
            out[1][2] = (a[0][2] * a[1][0] - a[0][0] * a[1][2]) * inv_det;
            out[2][0] = (a[1][0] * a[2][1] - a[1][1] * a[2][0]) * inv_det;
            out[2][1] = (a[0][1] * a[2][0] - a[0][0] * a[2][1]) * inv_det;
            out[2][2] = (a[0][0] * a[1][1] - a[0][1] * a[1][0]) * inv_det;
        }
    }
    Some(out)
}

/// Global index pages: triplet (elem[k], elem[j], loc[k*nref+j]) per block.
fn fill_indices(mesh: &Mesh, rows: &mut [u32], cols: &mut [u32]) {
    let nref = mesh.nref();
    let block = nref * nref;
    rows.par_chunks_mut(WINDOW * block)
        .zip(cols.par_chunks_mut(WINDOW * block))
        .enumerate()
        .for_each(|(w, (rs, cs))| {
            let start = w * WINDOW;
            for b in 0..rs.len() / block {
                let elem = mesh.element(start + b);
                for k in 0..nref {
                    for j in 0..nref {
                        rs[b * block + k * nref + j] = elem[k];
                        cs[b * block + k * nref + j] = elem[j];
                    }
                }
            }
        });
}

fn page_bytes(count: usize, nref: usize, m: usize, q: usize) -> usize {
    8 * count * (nref * m + 2 * q * m * m + q)
}

/// Conservative footprint estimate: the whole-mesh triplet arrays plus the
/// geometry pages a batch of `batch_size` elements would materialize.
fn check_memory(mesh: &Mesh, q: usize, opts: &AssemblyOptions) -> Result<()> {
    let ne = mesh.num_elements();
    let nref = mesh.nref();
    let batch = opts.batch_size.min(ne);
    let triplets = 2 * ne * nref * nref * 16;
    let needed_mb = (page_bytes(batch, nref, mesh.m, q) + triplets) / (1 << 20);
    if needed_mb > opts.memory_budget_mb {
        return Err(Error::Resource { needed_mb, budget_mb: opts.memory_budget_mb });
    }
    Ok(())
}

/// Batched assembly of the mass and stiffness triplets.
pub fn assemble_batched(mesh: &Mesh, opts: &AssemblyOptions) -> Result<AssemblyOutput> {
    Ok(assemble_batched_impl(mesh, opts, None)?.0)
}

/// Batched assembly of mass, stiffness and the load vector of `f` in a
/// single sweep over the element geometry.
pub fn assemble_batched_with_load(
    mesh: &Mesh,
    opts: &AssemblyOptions,
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
) -> Result<(AssemblyOutput, Vec<f64>)> {
    let (out, b) = assemble_batched_impl(mesh, opts, Some(f))?;
    Ok((out, b.expect("load requested")))
}

fn assemble_batched_impl(
    mesh: &Mesh,
    opts: &AssemblyOptions,
    f: Option<&(dyn Fn(&[f64]) -> f64 + Sync)>,
) -> Result<(AssemblyOutput, Option<Vec<f64>>)> {
    if opts.batch_size == 0 {
        return Err(Error::Precondition("batch size must be at least 1".into()));
    }
    let pack = precompute(mesh.d, mesh.p)?;
    check_memory(mesh, pack.q(), opts)?;

    let ne = mesh.num_elements();
    let n = mesh.num_nodes();
    let nref = mesh.nref();
    let block = nref * nref;

    let mut out = AssemblyOutput {
        n,
        rows: vec![0; ne * block],
        cols: vec![0; ne * block],
        mass_vals: vec![0.0; ne * block],
        stiffness_vals: vec![0.0; ne * block],
    };
    let mut b_local = f.map(|_| vec![0.0; ne * nref]);

    let mut start = 0;
    while start < ne {
        let count = opts.batch_size.min(ne - start);
        let range = start * block..(start + count) * block;
        let (mvals, avals) =
            (&mut out.mass_vals[range.clone()], &mut out.stiffness_vals[range.clone()]);
        let (rows, cols) = (&mut out.rows[range.clone()], &mut out.cols[range]);
        let load = match (&mut b_local, f) {
            (Some(b), Some(f)) => Some((f, &mut b[start * nref..(start + count) * nref])),
            _ => None,
        };
        dispatch!(mesh, batch_kernel(mesh, &pack, start, rows, cols, mvals, avals, load))?;
        start += count;
    }

    // deterministic scatter of the per-element load contributions
    let b = b_local.map(|local| {
        let mut b = vec![0.0; n];
        for e in 0..ne {
            let elem = mesh.element(e);
            for j in 0..nref {
                b[elem[j] as usize] += local[e * nref + j];
            }
        }
        b
    });
    Ok((out, b))
}

/// Elements processed simultaneously by the vectorized kernel.
const LANES: usize = 4;

/// Fused batch kernel: one window of elements per parallel work item,
/// walked in groups of [`LANES`] elements whose geometry and contraction
/// run lane-wise (the page idea at register width). The per-element
/// arithmetic is lane-count independent, so results do not depend on how
/// elements are grouped.
#[allow(clippy::too_many_arguments)]
fn batch_kernel<const D: usize, const M: usize, const NREF: usize>(
    mesh: &Mesh,
    pack: &ReferencePack,
    first: usize,
    rows: &mut [u32],
    cols: &mut [u32],
    mvals: &mut [f64],
    avals: &mut [f64],
    load: Option<(&(dyn Fn(&[f64]) -> f64 + Sync), &mut [f64])>,
) -> Result<()> {
    let block = NREF * NREF;
    let r_chunks = rows.par_chunks_mut(WINDOW * block);
    let c_chunks = cols.par_chunks_mut(WINDOW * block);
    let m_chunks = mvals.par_chunks_mut(WINDOW * block);
    let a_chunks = avals.par_chunks_mut(WINDOW * block);
    match load {
        Some((f, b_all)) => {
            let b_chunks = b_all.par_chunks_mut(WINDOW * NREF);
            (r_chunks, c_chunks, m_chunks, a_chunks, b_chunks)
                .into_par_iter()
                .enumerate()
                .try_for_each(|(w, (rs, cs, ms, avs, bs))| {
                    window_body::<D, M, NREF>(
                        mesh,
                        pack,
                        first + w * WINDOW,
                        rs,
                        cs,
                        ms,
                        avs,
                        Some((f, bs)),
                    )
                })
        }
        None => (r_chunks, c_chunks, m_chunks, a_chunks)
            .into_par_iter()
            .enumerate()
            .try_for_each(|(w, (rs, cs, ms, avs))| {
                window_body::<D, M, NREF>(mesh, pack, first + w * WINDOW, rs, cs, ms, avs, None)
            }),
    }
}

/// One window of elements: index pages, then lane groups with a scalar
/// remainder.
#[allow(clippy::too_many_arguments)]
fn window_body<const D: usize, const M: usize, const NREF: usize>(
    mesh: &Mesh,
    pack: &ReferencePack,
    start: usize,
    rs: &mut [u32],
    cs: &mut [u32],
    ms: &mut [f64],
    avs: &mut [f64],
    mut load: Option<(&(dyn Fn(&[f64]) -> f64 + Sync), &mut [f64])>,
) -> Result<()> {
    let block = NREF * NREF;
    let n_local = ms.len() / block;
    for b in 0..n_local {
        let elem = mesh.element(start + b);
        for k in 0..NREF {
            for j in 0..NREF {
                rs[b * block + k * NREF + j] = elem[k];
                cs[b * block + k * NREF + j] = elem[j];
            }
        }
    }
    let mut b = 0;
    while b + LANES <= n_local {
        let out = b * block..(b + LANES) * block;
        let bloc = load
            .as_mut()
            .map(|(f, bs)| (*f, &mut bs[b * NREF..(b + LANES) * NREF]));
        element_tile::<D, M, NREF, LANES>(
            mesh,
            pack,
            start + b,
            &mut ms[out.clone()],
            &mut avs[out],
            bloc,
        )?;
        b += LANES;
    }
    while b < n_local {
        let out = b * block..(b + 1) * block;
        let bloc =
            load.as_mut().map(|(f, bs)| (*f, &mut bs[b * NREF..(b + 1) * NREF]));
        element_tile::<D, M, NREF, 1>(
            mesh,
            pack,
            start + b,
            &mut ms[out.clone()],
            &mut avs[out],
            bloc,
        )?;
        b += 1;
    }
    Ok(())
}

/// Local mass and stiffness matrices of `L` consecutive elements, all
/// quantities held lane-major on the stack.
#[inline]
fn element_tile<const D: usize, const M: usize, const NREF: usize, const L: usize>(
    mesh: &Mesh,
    pack: &ReferencePack,
    e0: usize,
    ms: &mut [f64],
    avs: &mut [f64],
    mut load: Option<(&(dyn Fn(&[f64]) -> f64 + Sync), &mut [f64])>,
) -> Result<()> {
    let q = pack.q();
    let block = NREF * NREF;

    let mut x = [[[0.0; L]; M]; NREF];
    let mut thresh = [0.0; L];
    for l in 0..L {
        let elem = mesh.element(e0 + l);
        for j in 0..NREF {
            let base = elem[j] as usize * M;
            for c in 0..M {
                x[j][c][l] = mesh.nodes[base + c];
            }
        }
        let mut h2: f64 = 0.0;
        for a in 0..=D {
            for bb in a + 1..=D {
                let mut s = 0.0;
                for c in 0..M {
                    let diff = x[a][c][l] - x[bb][c][l];
                    s += diff * diff;
                }
                h2 = h2.max(s);
            }
        }
        thresh[l] = DEGENERACY_TOL * h2.powf(D as f64 / 2.0);
    }

    let mut mloc = [[0.0; L]; 128];
    let mut aloc = [[0.0; L]; 128];
    for i in 0..q {
        let g = pack.grad_at(i);
        // map partials t_k = sum_j x_j d_k phi_j
        let mut t = [[[0.0; L]; M]; D];
        for j in 0..NREF {
            for k in 0..D {
                let gjk = g[j * D + k];
                for c in 0..M {
                    for l in 0..L {
                        t[k][c][l] += x[j][c][l] * gjk;
                    }
                }
            }
        }
        // measure per lane: |det| for bulk, tangent length / cross norm
        // for embedded elements
        let mut measure = [0.0; L];
        if M == D {
            for l in 0..L {
                let mut sq = [[0.0; D]; D];
                for r in 0..D {
                    for c in 0..D {
                        sq[r][c] = t[r][c][l];
                    }
                }
                measure[l] = det_small::<D>(&sq).abs();
            }
        } else if D == 1 {
            for l in 0..L {
                measure[l] = (t[0][0][l] * t[0][0][l] + t[0][1][l] * t[0][1][l]).sqrt();
            }
        } else {
            for l in 0..L {
                let n0 = t[0][1][l] * t[1][2][l] - t[0][2][l] * t[1][1][l];
                let n1 = t[0][2][l] * t[1][0][l] - t[0][0][l] * t[1][2][l];
                let n2 = t[0][0][l] * t[1][1][l] - t[0][1][l] * t[1][0][l];
                measure[l] = (n0 * n0 + n1 * n1 + n2 * n2).sqrt();
            }
        }
        for l in 0..L {
            if !(measure[l] > thresh[l]) {
                return Err(Error::DegenerateElement { element: e0 + l, det: measure[l] });
            }
        }
        let mut wdet = [0.0; L];
        for l in 0..L {
            wdet[l] = pack.w[i] * measure[l];
        }
        if let Some((f, bloc)) = load.as_mut() {
            let phi = pack.fq_at(i);
            for l in 0..L {
                let mut mapped = [0.0f64; M];
                for j in 0..NREF {
                    for c in 0..M {
                        mapped[c] += x[j][c][l] * phi[j];
                    }
                }
                let fval = f(&mapped);
                if !fval.is_finite() {
                    return Err(Error::NonFinite { element: e0 + l });
                }
                let scale = wdet[l] * fval;
                for j in 0..NREF {
                    bloc[l * NREF + j] += scale * phi[j];
                }
            }
        }
        let mq = pack.mq_at(i);
        for kj in 0..block {
            let prod = mq[kj];
            for l in 0..L {
                mloc[kj][l] += wdet[l] * prod;
            }
        }
        // physical gradients through the metric:
        // b_j = T G^{-1} ghat_j with G = T^T T (first fundamental form)
        let mut gram = [[[0.0; L]; D]; D];
        for r in 0..D {
            for s in r..D {
                let mut acc = [0.0; L];
                for c in 0..M {
                    for l in 0..L {
                        acc[l] += t[r][c][l] * t[s][c][l];
                    }
                }
                gram[r][s] = acc;
                gram[s][r] = acc;
            }
        }
        let inv = invert_gram_lanes::<D, L>(&gram, e0, &measure)?;
        let mut gg = [[[0.0; L]; NREF]; D];
        for r in 0..D {
            for j in 0..NREF {
                let mut acc = [0.0; L];
                for s in 0..D {
                    let gs = g[j * D + s];
                    for l in 0..L {
                        acc[l] += inv[r][s][l] * gs;
                    }
                }
                gg[r][j] = acc;
            }
        }
        // one ambient gradient vector per basis function
        let mut bt = [[[0.0; L]; M]; NREF];
        for j in 0..NREF {
            for r in 0..D {
                for c in 0..M {
                    for l in 0..L {
                        bt[j][c][l] += gg[r][j][l] * t[r][c][l];
                    }
                }
            }
        }
        for k in 0..NREF {
            for j in k..NREF {
                let mut s = [0.0; L];
                for c in 0..M {
                    for l in 0..L {
                        s[l] += bt[k][c][l] * bt[j][c][l];
                    }
                }
                let acc = &mut aloc[k * NREF + j];
                for l in 0..L {
                    acc[l] += wdet[l] * s[l];
                }
            }
        }
    }
    for k in 0..NREF {
        for j in 0..k {
            aloc[k * NREF + j] = aloc[j * NREF + k];
        }
    }
    for l in 0..L {
        for kj in 0..block {
            ms[l * block + kj] = mloc[kj][l];
            avs[l * block + kj] = aloc[kj][l];
        }
    }
    Ok(())
}

/// Lane-wise inverse of the symmetric metric; its determinant is checked
/// against zero (the measure check has already rejected degeneracies).
#[inline]
fn invert_gram_lanes<const D: usize, const L: usize>(
    gram: &[[[f64; L]; D]; D],
    e0: usize,
    measure: &[f64; L],
) -> Result<[[[f64; L]; D]; D]> {
    let mut out = [[[0.0; L]; D]; D];
    match D {
        1 => {
            for l in 0..L {
                if gram[0][0][l] == 0.0 {
                    return Err(Error::DegenerateElement { element: e0 + l, det: measure[l] });
                }
                out[0][0][l] = 1.0 / gram[0][0][l];
            }
        }
        2 => {
            for l in 0..L {
                let det = gram[0][0][l] * gram[1][1][l] - gram[0][1][l] * gram[1][0][l];
                if det == 0.0 || !det.is_finite() {
                    return Err(Error::DegenerateElement { element: e0 + l, det: measure[l] });
                }
                let inv_det = 1.0 / det;
                out[0][0][l] = gram[1][1][l] * inv_det;
                out[0][1][l] = -gram[0][1][l] * inv_det;
                out[1][0][l] = -gram[1][0][l] * inv_det;
                out[1][1][l] = gram[0][0][l] * inv_det;
            }
        }
        _ => {
            for l in 0..L {
                let mut a = [[0.0; D]; D];
                for r in 0..D {
                    for c in 0..D {
                        a[r][c] = gram[r][c][l];
                    }
                }
                let inv = invert_small::<D>(&a).ok_or(Error::DegenerateElement {
                    element: e0 + l,
                    det: measure[l],
                })?;
                for r in 0..D {
                    for c in 0..D {
                        out[r][c][l] = inv[r][c];
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Measure factor from the map partials: |det| for bulk, tangent length /
/// cross-product norm for embedded elements.
#[inline]
fn measure_of<const D: usize, const M: usize>(t: &[[f64; M]; D]) -> f64 {
    if M == D {
        let mut sq = [[0.0; D]; D];
        for r in 0..D {
            for c in 0..D {
                sq[r][c] = t[r][c];
            }
        }
        det_small::<D>(&sq).abs()
    } else if D == 1 {
        t[0].iter().map(|v| v * v).sum::<f64>().sqrt()
    } else {
        let n = [
            t[0][1] * t[1][2] - t[0][2] * t[1][1],
            t[0][2] * t[1][0] - t[0][0] * t[1][2],
            t[0][0] * t[1][1] - t[0][1] * t[1][0],
        ];
        (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt()
    }
}

/// Convenience wrapper: batched assembly with defaults, finalized to CSR.
pub fn mass_and_stiffness(mesh: &Mesh) -> Result<(CsrMatrix, CsrMatrix)> {
    assemble_batched(mesh, &AssemblyOptions::default())?.finalize()
}
