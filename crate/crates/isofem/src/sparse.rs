//! Sparse matrices: triplet accumulation, CSR finalize with duplicate
//! summation, matrix-vector products, and the CG solvers used by the
//! problem and flow drivers.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Unsorted (row, col, value) contributions prior to compression.
#[derive(Debug, Clone, Default)]
pub struct Triplets {
    pub n: usize,
    pub rows: Vec<u32>,
    pub cols: Vec<u32>,
    pub vals: Vec<f64>,
}

impl Triplets {
    pub fn new(n: usize) -> Self {
        Self { n, rows: Vec::new(), cols: Vec::new(), vals: Vec::new() }
    }

    pub fn with_capacity(n: usize, cap: usize) -> Self {
        Self {
            n,
            rows: Vec::with_capacity(cap),
            cols: Vec::with_capacity(cap),
            vals: Vec::with_capacity(cap),
        }
    }

    pub fn push(&mut self, row: usize, col: usize, val: f64) {
        self.rows.push(row as u32);
        self.cols.push(col as u32);
        self.vals.push(val);
    }

    pub fn len(&self) -> usize {
        self.vals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vals.is_empty()
    }

    /// Duplicate-summed compressed sparse row form.
    ///
    /// Entries are scattered into row buckets by a parallel counting sort,
    /// each row is sorted by (col, value bits) and summed left to right, so
    /// the result is identical for any permutation of the triplet input.
    /// Cost O(nnz log nnz), dominated by the per-row sorts.
    pub fn finalize(&self) -> Result<CsrMatrix> {
        finalize_rows(self.n, &self.rows, &self.cols, &self.vals)
    }
}

/// Order-preserving bijection between f64 and u64: u64 comparisons agree
/// with `f64::total_cmp`.
#[inline]
fn order_bits(v: f64) -> u64 {
    let b = v.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b ^ (1 << 63)
    }
}

#[inline]
fn from_order_bits(k: u64) -> f64 {
    f64::from_bits(if k >> 63 == 1 { k ^ (1 << 63) } else { !k })
}

/// Raw shared output for parallel scatters into disjoint index sets.
struct SharedOut<T>(*mut T);
unsafe impl<T: Send> Send for SharedOut<T> {}
unsafe impl<T: Send> Sync for SharedOut<T> {}

fn uninit_vec<T>(len: usize) -> Vec<std::mem::MaybeUninit<T>> {
    let mut v = Vec::with_capacity(len);
    // SAFETY: MaybeUninit contents need no initialization.
    unsafe { v.set_len(len) };
    v
}

/// SAFETY: caller guarantees every slot of `raw` has been initialized.
unsafe fn assume_init_vec<T>(raw: Vec<std::mem::MaybeUninit<T>>) -> Vec<T> {
    let mut raw = std::mem::ManuallyDrop::new(raw);
    Vec::from_raw_parts(raw.as_mut_ptr() as *mut T, raw.len(), raw.capacity())
}

pub(crate) fn finalize_rows(n: usize, rows: &[u32], cols: &[u32], vals: &[f64]) -> Result<CsrMatrix> {
    let nnz = rows.len();

    // per-worker row histograms over contiguous input ranges, with the
    // index bounds checked on the way
    let n_workers = rayon::current_num_threads().clamp(1, 16);
    let chunk = nnz.div_ceil(n_workers).max(1);
    let mut histograms: Vec<Vec<u32>> = (0..n_workers)
        .into_par_iter()
        .map(|w| {
            let lo = (w * chunk).min(nnz);
            let hi = ((w + 1) * chunk).min(nnz);
            let mut counts = vec![0u32; n + 1];
            for i in lo..hi {
                if rows[i] as usize >= n || cols[i] as usize >= n {
                    counts[n] += 1; // out-of-range marker
                } else {
                    counts[rows[i] as usize] += 1;
                }
            }
            counts
        })
        .collect();
    if histograms.iter().any(|h| h[n] > 0) {
        let &bad = rows.iter().chain(cols).find(|&&i| i as usize >= n).expect("marker set");
        return Err(Error::IndexOutOfRange { index: bad as usize, n });
    }

    // exclusive offsets: worker w writes row r starting at histograms[w][r]
    let mut row_start = vec![0usize; n + 1];
    for r in 0..n {
        let mut acc = row_start[r];
        for h in histograms.iter_mut() {
            let c = h[r];
            h[r] = acc as u32;
            acc += c as usize;
        }
        row_start[r + 1] = acc;
    }

    // scatter packed (col, value bits) keys into their row ranges; the
    // packed order is exactly (col, total_cmp value) order
    let mut entries_raw = uninit_vec::<u128>(nnz);
    let out = SharedOut(entries_raw.as_mut_ptr() as *mut u128);
    histograms.into_par_iter().enumerate().for_each(|(w, mut cursor)| {
        let lo = (w * chunk).min(nnz);
        let hi = ((w + 1) * chunk).min(nnz);
        let out = &out;
        for i in lo..hi {
            let r = rows[i] as usize;
            let slot = cursor[r] as usize;
            cursor[r] += 1;
            let key = ((cols[i] as u128) << 64) | order_bits(vals[i]) as u128;
            // SAFETY: slots are partitioned by the exclusive per-worker,
            // per-row offsets computed above; no two writes alias.
            unsafe { out.0.add(slot).write(key) };
        }
    });
    // SAFETY: the offsets cover 0..nnz exactly once, so every slot is set.
    let mut entries = unsafe { assume_init_vec(entries_raw) };

    // parallel over fixed row chunks: sort each row, count unique columns
    const CHUNK_ROWS: usize = 4096;
    let mut tasks: Vec<(usize, &mut [u128])> = Vec::with_capacity(n.div_ceil(CHUNK_ROWS) + 1);
    let mut rest: &mut [u128] = &mut entries;
    let mut r0 = 0usize;
    while r0 < n {
        let r1 = (r0 + CHUNK_ROWS).min(n);
        let (head, tail) = rest.split_at_mut(row_start[r1] - row_start[r0]);
        tasks.push((r0, head));
        rest = tail;
        r0 = r1;
    }
    let mut row_nnz = vec![0u32; n];
    {
        let nnz_chunks: Vec<&mut [u32]> = row_nnz.chunks_mut(CHUNK_ROWS).collect();
        tasks.par_iter_mut().zip(nnz_chunks).for_each(|((r0, slice), counts)| {
            let base = row_start[*r0];
            for (k, c) in counts.iter_mut().enumerate() {
                let r = *r0 + k;
                let row = &mut slice[row_start[r] - base..row_start[r + 1] - base];
                row.sort_unstable();
                let mut unique = 0u32;
                let mut last = u128::MAX;
                for &key in row.iter() {
                    if key >> 64 != last {
                        unique += 1;
                        last = key >> 64;
                    }
                }
                *c = unique;
            }
        });
    }

    let mut row_ptr = vec![0usize; n + 1];
    for r in 0..n {
        row_ptr[r + 1] = row_ptr[r] + row_nnz[r] as usize;
    }
    let total = row_ptr[n];

    // emit the deduplicated rows straight into the output arrays
    let mut col_raw = uninit_vec::<u32>(total);
    let mut val_raw = uninit_vec::<f64>(total);
    let col_out = SharedOut(col_raw.as_mut_ptr() as *mut u32);
    let val_out = SharedOut(val_raw.as_mut_ptr() as *mut f64);
    tasks.into_par_iter().for_each(|(r0, slice)| {
        let r1 = (r0 + CHUNK_ROWS).min(n);
        let base = row_start[r0];
        let (col_out, val_out) = (&col_out, &val_out);
        let mut cursor = row_ptr[r0];
        for r in r0..r1 {
            let row = &slice[row_start[r] - base..row_start[r + 1] - base];
            let mut k = 0;
            while k < row.len() {
                let col = (row[k] >> 64) as u64;
                let mut sum = from_order_bits(row[k] as u64);
                k += 1;
                while k < row.len() && (row[k] >> 64) as u64 == col {
                    sum += from_order_bits(row[k] as u64);
                    k += 1;
                }
                // SAFETY: chunks own disjoint cursor ranges given by row_ptr.
                unsafe {
                    col_out.0.add(cursor).write(col as u32);
                    val_out.0.add(cursor).write(sum);
                }
                cursor += 1;
            }
        }
    });
    // SAFETY: the emit pass wrote every slot up to `total`.
    let (col_idx, vals) = unsafe { (assume_init_vec(col_raw), assume_init_vec(val_raw)) };
    Ok(CsrMatrix { n, row_ptr, col_idx, vals })
}

/// Finalize two value arrays over one shared (row, col) pattern in a
/// single scatter pass. Canonical order: (row, col, mass bits, stiffness
/// bits), so the outcome is permutation invariant like [`Triplets::finalize`].
pub(crate) fn finalize_pair_rows(
    n: usize,
    rows: &[u32],
    cols: &[u32],
    mvals: &[f64],
    avals: &[f64],
) -> Result<(CsrMatrix, CsrMatrix)> {
    let nnz = rows.len();
    let n_workers = rayon::current_num_threads().clamp(1, 16);
    let chunk = nnz.div_ceil(n_workers).max(1);
    let mut histograms: Vec<Vec<u32>> = (0..n_workers)
        .into_par_iter()
        .map(|w| {
            let lo = (w * chunk).min(nnz);
            let hi = ((w + 1) * chunk).min(nnz);
            let mut counts = vec![0u32; n + 1];
            for i in lo..hi {
                if rows[i] as usize >= n || cols[i] as usize >= n {
                    counts[n] += 1;
                } else {
                    counts[rows[i] as usize] += 1;
                }
            }
            counts
        })
        .collect();
    if histograms.iter().any(|h| h[n] > 0) {
        let &bad = rows.iter().chain(cols).find(|&&i| i as usize >= n).expect("marker set");
        return Err(Error::IndexOutOfRange { index: bad as usize, n });
    }
    let mut row_start = vec![0usize; n + 1];
    for r in 0..n {
        let mut acc = row_start[r];
        for h in histograms.iter_mut() {
            let c = h[r];
            h[r] = acc as u32;
            acc += c as usize;
        }
        row_start[r + 1] = acc;
    }

    let mut entries_raw = uninit_vec::<[u64; 3]>(nnz);
    let out = SharedOut(entries_raw.as_mut_ptr() as *mut [u64; 3]);
    histograms.into_par_iter().enumerate().for_each(|(w, mut cursor)| {
        let lo = (w * chunk).min(nnz);
        let hi = ((w + 1) * chunk).min(nnz);
        let out = &out;
        for i in lo..hi {
            let r = rows[i] as usize;
            let slot = cursor[r] as usize;
            cursor[r] += 1;
            let item = [cols[i] as u64, order_bits(mvals[i]), order_bits(avals[i])];
            // SAFETY: slots are partitioned by the exclusive per-worker,
            // per-row offsets computed above; no two writes alias.
            unsafe { out.0.add(slot).write(item) };
        }
    });
    // SAFETY: the offsets cover 0..nnz exactly once, so every slot is set.
    let mut entries = unsafe { assume_init_vec(entries_raw) };

    const CHUNK_ROWS: usize = 4096;
    let mut tasks: Vec<(usize, &mut [[u64; 3]])> =
        Vec::with_capacity(n.div_ceil(CHUNK_ROWS) + 1);
    let mut rest: &mut [[u64; 3]] = &mut entries;
    let mut r0 = 0usize;
    while r0 < n {
        let r1 = (r0 + CHUNK_ROWS).min(n);
        let (head, tail) = rest.split_at_mut(row_start[r1] - row_start[r0]);
        tasks.push((r0, head));
        rest = tail;
        r0 = r1;
    }
    let mut row_nnz = vec![0u32; n];
    {
        let nnz_chunks: Vec<&mut [u32]> = row_nnz.chunks_mut(CHUNK_ROWS).collect();
        tasks.par_iter_mut().zip(nnz_chunks).for_each(|((r0, slice), counts)| {
            let base = row_start[*r0];
            for (k, c) in counts.iter_mut().enumerate() {
                let r = *r0 + k;
                let row = &mut slice[row_start[r] - base..row_start[r + 1] - base];
                row.sort_unstable();
                let mut unique = 0u32;
                let mut last = u64::MAX;
                for item in row.iter() {
                    if item[0] != last {
                        unique += 1;
                        last = item[0];
                    }
                }
                *c = unique;
            }
        });
    }

    let mut row_ptr = vec![0usize; n + 1];
    for r in 0..n {
        row_ptr[r + 1] = row_ptr[r] + row_nnz[r] as usize;
    }
    let total = row_ptr[n];

    let mut col_raw = uninit_vec::<u32>(total);
    let mut mval_raw = uninit_vec::<f64>(total);
    let mut aval_raw = uninit_vec::<f64>(total);
    let col_out = SharedOut(col_raw.as_mut_ptr() as *mut u32);
    let mval_out = SharedOut(mval_raw.as_mut_ptr() as *mut f64);
    let aval_out = SharedOut(aval_raw.as_mut_ptr() as *mut f64);
    tasks.into_par_iter().for_each(|(r0, slice)| {
        let r1 = (r0 + CHUNK_ROWS).min(n);
        let base = row_start[r0];
        let (col_out, mval_out, aval_out) = (&col_out, &mval_out, &aval_out);
        let mut cursor = row_ptr[r0];
        for r in r0..r1 {
            let row = &slice[row_start[r] - base..row_start[r + 1] - base];
            let mut k = 0;
            while k < row.len() {
                let col = row[k][0];
                let mut msum = from_order_bits(row[k][1]);
                let mut asum = from_order_bits(row[k][2]);
                k += 1;
                while k < row.len() && row[k][0] == col {
                    msum += from_order_bits(row[k][1]);
                    asum += from_order_bits(row[k][2]);
                    k += 1;
                }
                // SAFETY: chunks own disjoint cursor ranges given by row_ptr.
                unsafe {
                    col_out.0.add(cursor).write(col as u32);
                    mval_out.0.add(cursor).write(msum);
                    aval_out.0.add(cursor).write(asum);
                }
                cursor += 1;
            }
        }
    });
    // SAFETY: the emit pass wrote every slot up to `total`.
    let (col_idx, m_vals, a_vals) = unsafe {
        (assume_init_vec(col_raw), assume_init_vec(mval_raw), assume_init_vec(aval_raw))
    };
    Ok((
        CsrMatrix { n, row_ptr: row_ptr.clone(), col_idx: col_idx.clone(), vals: m_vals },
        CsrMatrix { n, row_ptr, col_idx, vals: a_vals },
    ))
}

/// Compressed sparse row matrix (square).
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<u32>,
    pub vals: Vec<f64>,
}

impl CsrMatrix {
    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[range.clone()], &self.vals[range])
    }

    /// y = A x, parallel over rows with sequential per-row summation.
    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "spmv: vector length {} vs matrix dimension {}",
                x.len(),
                self.n
            )));
        }
        let mut y = vec![0.0; self.n];
        y.par_iter_mut().enumerate().for_each(|(i, yi)| {
            let (cols, vals) = self.row(i);
            *yi = cols.iter().zip(vals).map(|(&c, &v)| v * x[c as usize]).sum();
        });
        Ok(y)
    }

    /// A + alpha B, merging sparsity patterns.
    pub fn add_scaled(&self, other: &CsrMatrix, alpha: f64) -> Result<CsrMatrix> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch(format!(
                "add_scaled: {} vs {}",
                self.n, other.n
            )));
        }
        let mut row_ptr = vec![0usize; self.n + 1];
        let mut col_idx = Vec::with_capacity(self.nnz().max(other.nnz()));
        let mut vals = Vec::with_capacity(self.nnz().max(other.nnz()));
        for i in 0..self.n {
            let (ca, va) = self.row(i);
            let (cb, vb) = other.row(i);
            let (mut ia, mut ib) = (0, 0);
            while ia < ca.len() || ib < cb.len() {
                let next_a = ca.get(ia).copied().unwrap_or(u32::MAX);
                let next_b = cb.get(ib).copied().unwrap_or(u32::MAX);
                if next_a < next_b {
                    col_idx.push(next_a);
                    vals.push(va[ia]);
                    ia += 1;
                } else if next_b < next_a {
                    col_idx.push(next_b);
                    vals.push(alpha * vb[ib]);
                    ib += 1;
                } else {
                    col_idx.push(next_a);
                    vals.push(va[ia] + alpha * vb[ib]);
                    ia += 1;
                    ib += 1;
                }
            }
            row_ptr[i + 1] = col_idx.len();
        }
        Ok(CsrMatrix { n: self.n, row_ptr, col_idx, vals })
    }

    /// Diagonal entries (zero where absent).
    pub fn diag(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            if let Ok(k) = cols.binary_search(&(i as u32)) {
                d[i] = vals[k];
            }
        }
        d
    }

    /// Max-row-sum norm.
    pub fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row(i).1.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// MatrixMarket coordinate output (1-based, general).
    pub fn write_matrix_market(&self, mut out: impl std::io::Write) -> Result<()> {
        writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(out, "{} {} {}", self.n, self.n, self.nnz())?;
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                writeln!(out, "{} {} {:.16e}", i + 1, c as usize + 1, v)?;
            }
        }
        Ok(())
    }
}

/// Preconditioner choice for [`cg_solve`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precond {
    None,
    #[default]
    Jacobi,
}

/// Options and diagnostics for the CG solvers.
#[derive(Debug, Clone)]
pub struct CgOptions {
    pub tol: f64,
    pub max_iter: Option<usize>,
    pub precond: Precond,
    /// Record the quadratic-form value 1/2 x'Ax - b'x per iteration.
    pub log_energy: bool,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: None, precond: Precond::Jacobi, log_energy: false }
    }
}

#[derive(Debug, Clone, Default)]
pub struct CgStats {
    pub iterations: usize,
    pub residual: f64,
    pub energy_log: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Preconditioned conjugate gradients for SPD systems, starting from x0 = 0.
pub fn cg_solve(a: &CsrMatrix, b: &[f64], opts: &CgOptions) -> Result<(Vec<f64>, CgStats)> {
    cg_solve_from(a, b, vec![0.0; a.n], opts, None)
}

/// CG with a caller-supplied initial guess (time stepping reuses the
/// previous state; a zero-residual guess returns unchanged).
pub fn cg_solve_with_guess(
    a: &CsrMatrix,
    b: &[f64],
    x0: Vec<f64>,
    opts: &CgOptions,
) -> Result<(Vec<f64>, CgStats)> {
    cg_solve_from(a, b, x0, opts, None)
}

/// CG with initial guess and an optional per-iteration kernel projection.
fn cg_solve_from(
    a: &CsrMatrix,
    b: &[f64],
    x0: Vec<f64>,
    opts: &CgOptions,
    project: Option<&dyn Fn(&mut Vec<f64>)>,
) -> Result<(Vec<f64>, CgStats)> {
    let n = a.n;
    if b.len() != n || x0.len() != n {
        return Err(Error::DimensionMismatch("cg_solve: rhs length".into()));
    }
    let max_iter = opts.max_iter.unwrap_or(10 * n.max(1));
    let inv_diag: Option<Vec<f64>> = match opts.precond {
        Precond::None => None,
        Precond::Jacobi => {
            Some(a.diag().iter().map(|&d| if d != 0.0 { 1.0 / d } else { 1.0 }).collect())
        }
    };
    let apply_precond = |r: &[f64]| -> Vec<f64> {
        match &inv_diag {
            Some(di) => r.iter().zip(di).map(|(&r, &d)| r * d).collect(),
            None => r.to_vec(),
        }
    };

    let norm_b = norm(b);
    let mut stats = CgStats::default();
    let mut x = x0;
    if let Some(p) = project {
        p(&mut x);
    }
    let ax = a.spmv(&x)?;
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(&b, &ax)| b - ax).collect();
    if norm_b == 0.0 {
        return Ok((vec![0.0; n], stats));
    }
    if norm(&r) / norm_b <= opts.tol {
        stats.residual = norm(&r) / norm_b;
        return Ok((x, stats));
    }
    let mut z = apply_precond(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for iter in 0..max_iter {
        let ap = a.spmv(&p)?;
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::NotPositiveDefinite { iteration: iter });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if let Some(proj) = project {
            proj(&mut x);
        }
        if opts.log_energy {
            // 1/2 x'Ax - b'x expressed through the tracked residual
            stats.energy_log.push(-0.5 * (dot(&x, b) + dot(&x, &r)));
        }
        stats.iterations = iter + 1;
        let rel = norm(&r) / norm_b;
        stats.residual = rel;
        if rel <= opts.tol {
            return Ok((x, stats));
        }
        z = apply_precond(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NoConvergence { iterations: stats.iterations, residual: stats.residual })
}

/// CG for the singular closed-surface stiffness matrix, returning the
/// solution with zero M-weighted mean. The right-hand side is projected
/// onto range(A) first; each iterate is shifted back into the mean-free
/// subspace (the kernel of A is spanned by the constant vector).
pub fn cg_solve_meanfree(
    a: &CsrMatrix,
    b: &[f64],
    mass: &CsrMatrix,
    opts: &CgOptions,
) -> Result<(Vec<f64>, CgStats)> {
    let n = a.n;
    if b.len() != n || mass.n != n {
        return Err(Error::DimensionMismatch("cg_solve_meanfree: sizes".into()));
    }
    let m1 = mass.spmv(&vec![1.0; n])?;
    let total_mass: f64 = m1.iter().sum();
    // compatibility: remove the Euclidean kernel component of b
    let mean_b: f64 = b.iter().sum::<f64>() / n as f64;
    let b_proj: Vec<f64> = b.iter().map(|&v| v - mean_b).collect();
    let project = move |x: &mut Vec<f64>| {
        let shift = dot(x, &m1) / total_mass;
        for v in x.iter_mut() {
            *v -= shift;
        }
    };
    cg_solve_from(a, &b_proj, vec![0.0; n], opts, Some(&project))
}

/// Symmetric elimination of Dirichlet rows/columns: constrained rows and
/// columns are zeroed, the diagonal set to one, and `b` adjusted so that
/// interior equations see the boundary data.
pub fn apply_dirichlet(
    a: &CsrMatrix,
    b: &[f64],
    boundary: &[u32],
    values: &[f64],
) -> Result<(CsrMatrix, Vec<f64>)> {
    let n = a.n;
    if b.len() != n || boundary.len() != values.len() {
        return Err(Error::DimensionMismatch("apply_dirichlet: sizes".into()));
    }
    let mut g = vec![0.0; n];
    let mut constrained = vec![false; n];
    for (&idx, &v) in boundary.iter().zip(values) {
        let idx = idx as usize;
        if idx >= n {
            return Err(Error::IndexOutOfRange { index: idx, n });
        }
        constrained[idx] = true;
        g[idx] = v;
    }
    let mut out = a.clone();
    let mut b_out = b.to_vec();
    for i in 0..n {
        let range = out.row_ptr[i]..out.row_ptr[i + 1];
        if constrained[i] {
            for k in range.clone() {
                out.vals[k] = f64::from(out.col_idx[k] as usize == i);
            }
            b_out[i] = g[i];
        } else {
            for k in range {
                let j = out.col_idx[k] as usize;
                if constrained[j] {
                    b_out[i] -= out.vals[k] * g[j];
                    out.vals[k] = 0.0;
                }
            }
        }
    }
    Ok((out, b_out))
}
