//! Reference elements: Lagrange basis functions, their gradients, and the
//! element-independent tables consumed by the assembly kernels.
//!
//! Supported elements (intrinsic dimension d, order p): the unit interval,
//! triangle and tetrahedron with p = 1, 2. Local nodes are listed
//! anti-clockwise, corners first, then edge midpoints.

use crate::error::{Error, Result};
use crate::quadrature::{quadrature_rule, QuadratureRule};

/// Local edges (by corner pair) whose midpoints carry the p = 2 nodes.
const EDGES_1D: [(usize, usize); 1] = [(0, 1)];
const EDGES_2D: [(usize, usize); 3] = [(0, 1), (1, 2), (2, 0)];
const EDGES_3D: [(usize, usize); 6] = [(0, 1), (1, 2), (2, 0), (0, 3), (1, 3), (2, 3)];

pub fn local_edges(d: usize) -> &'static [(usize, usize)] {
    match d {
        1 => &EDGES_1D,
        2 => &EDGES_2D,
        _ => &EDGES_3D,
    }
}

/// Number of local degrees of freedom, binomial(p+d, d).
pub fn ndof(d: usize, p: usize) -> Result<usize> {
    check_supported(d, p)?;
    Ok(match (d, p) {
        (1, 1) => 2,
        (1, 2) => 3,
        (2, 1) => 3,
        (2, 2) => 6,
        (3, 1) => 4,
        (3, 2) => 10,
        _ => unreachable!(),
    })
}

fn check_supported(d: usize, p: usize) -> Result<()> {
    if (1..=3).contains(&d) && (1..=2).contains(&p) {
        Ok(())
    } else {
        Err(Error::UnsupportedElement { d, p })
    }
}

fn check_inside(d: usize, xi: &[f64]) -> Result<()> {
    if xi.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "reference point has {} coordinates, expected {d}",
            xi.len()
        )));
    }
    const EPS: f64 = 1e-12;
    let sum: f64 = xi.iter().sum();
    if xi.iter().any(|&c| c < -EPS) || sum > 1.0 + EPS {
        return Err(Error::OutsideReference);
    }
    Ok(())
}

/// A reference simplex with its local node layout.
#[derive(Debug, Clone)]
pub struct ReferenceElement {
    pub d: usize,
    pub p: usize,
    pub nref: usize,
    /// Local node coordinates, `nref * d`, node-major.
    pub node_coords: Vec<f64>,
}

impl ReferenceElement {
    pub fn new(d: usize, p: usize) -> Result<Self> {
        let nref = ndof(d, p)?;
        let mut node_coords = vec![0.0; nref * d];
        // corners: origin then unit vectors
        for c in 1..=d {
            node_coords[c * d + (c - 1)] = 1.0;
        }
        if p == 2 {
            for (e, &(a, b)) in local_edges(d).iter().enumerate() {
                let row = (d + 1 + e) * d;
                for k in 0..d {
                    let xa = if a == 0 { 0.0 } else { f64::from(a == k + 1) };
                    let xb = if b == 0 { 0.0 } else { f64::from(b == k + 1) };
                    node_coords[row + k] = 0.5 * (xa + xb);
                }
            }
        }
        Ok(Self { d, p, nref, node_coords })
    }

    pub fn node(&self, j: usize) -> &[f64] {
        &self.node_coords[j * self.d..(j + 1) * self.d]
    }
}

/// Barycentric coordinates (lambda_0, ..., lambda_d) of a reference point.
fn barycentric(xi: &[f64]) -> [f64; 4] {
    let mut lam = [0.0; 4];
    let mut sum = 0.0;
    for (k, &c) in xi.iter().enumerate() {
        lam[k + 1] = c;
        sum += c;
    }
    lam[0] = 1.0 - sum;
    lam
}

/// Lagrange basis values at a reference point, length `nref`.
pub fn basis_eval(d: usize, p: usize, xi: &[f64]) -> Result<Vec<f64>> {
    check_supported(d, p)?;
    check_inside(d, xi)?;
    let lam = barycentric(xi);
    let mut out = Vec::with_capacity(ndof(d, p)?);
    match p {
        1 => out.extend_from_slice(&lam[..=d]),
        _ => {
            for &l in &lam[..=d] {
                out.push(l * (2.0 * l - 1.0));
            }
            for &(a, b) in local_edges(d) {
                out.push(4.0 * lam[a] * lam[b]);
            }
        }
    }
    Ok(out)
}

/// Analytic basis gradients at a reference point, `nref * d`, basis-major.
pub fn basis_grad(d: usize, p: usize, xi: &[f64]) -> Result<Vec<f64>> {
    check_supported(d, p)?;
    check_inside(d, xi)?;
    let lam = barycentric(xi);
    // grad lambda_0 = (-1,..,-1); grad lambda_k = e_{k-1}
    let grad_lam = |i: usize, k: usize| -> f64 {
        if i == 0 {
            -1.0
        } else {
            f64::from(i == k + 1)
        }
    };
    let nref = ndof(d, p)?;
    let mut out = vec![0.0; nref * d];
    match p {
        1 => {
            for i in 0..=d {
                for k in 0..d {
                    out[i * d + k] = grad_lam(i, k);
                }
            }
        }
        _ => {
            for i in 0..=d {
                let scale = 4.0 * lam[i] - 1.0;
                for k in 0..d {
                    out[i * d + k] = scale * grad_lam(i, k);
                }
            }
            for (e, &(a, b)) in local_edges(d).iter().enumerate() {
                let row = (d + 1 + e) * d;
                for k in 0..d {
                    out[row + k] = 4.0 * (lam[b] * grad_lam(a, k) + lam[a] * grad_lam(b, k));
                }
            }
        }
    }
    Ok(out)
}

/// Exact reference matrices available for p = 1, where the element map is
/// affine and quadrature can be skipped entirely.
#[derive(Debug, Clone, PartialEq)]
pub struct P1Tables {
    /// Exact reference mass matrix, `nref * nref`.
    pub m_ref: Vec<f64>,
    /// Stiffness building blocks `a_ref[m][n][k*nref+j] = int d_m phi_k d_n phi_j`,
    /// flattened as `((m * d) + n) * nref^2 + ...`.
    pub a_ref: Vec<f64>,
}

/// All element-independent tables used by assembly: basis values, gradients
/// and pairwise products at the quadrature nodes, plus the weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePack {
    pub d: usize,
    pub p: usize,
    pub nref: usize,
    pub rule: QuadratureRule,
    /// Basis values, `q * nref` (per quadrature node a contiguous row).
    pub fq: Vec<f64>,
    /// Basis gradients, `q * nref * d`, node-major then basis-major.
    pub grad_fq: Vec<f64>,
    /// Pairwise products `phi_k phi_j`, `q * nref * nref`; page i is the
    /// rank-1 outer product of basis row i with itself.
    pub mq: Vec<f64>,
    /// Quadrature weights, `q`.
    pub w: Vec<f64>,
    /// Exact reference matrices (p = 1 only).
    pub p1_exact: Option<P1Tables>,
}

impl ReferencePack {
    pub fn q(&self) -> usize {
        self.w.len()
    }

    /// Basis values at quadrature node `i`.
    pub fn fq_at(&self, i: usize) -> &[f64] {
        &self.fq[i * self.nref..(i + 1) * self.nref]
    }

    /// Basis gradients at quadrature node `i` (`nref * d`, basis-major).
    pub fn grad_at(&self, i: usize) -> &[f64] {
        let stride = self.nref * self.d;
        &self.grad_fq[i * stride..(i + 1) * stride]
    }

    /// Pairwise product page at quadrature node `i` (`nref * nref`).
    pub fn mq_at(&self, i: usize) -> &[f64] {
        let stride = self.nref * self.nref;
        &self.mq[i * stride..(i + 1) * stride]
    }
}

/// Precompute every element-independent table for the given element type.
pub fn precompute(d: usize, p: usize) -> Result<ReferencePack> {
    check_supported(d, p)?;
    let nref = ndof(d, p)?;
    let rule = quadrature_rule(d)?;
    let q = rule.len();

    let mut fq = Vec::with_capacity(q * nref);
    let mut grad_fq = Vec::with_capacity(q * nref * d);
    let mut mq = Vec::with_capacity(q * nref * nref);
    for i in 0..q {
        let xi = rule.node(i);
        let vals = basis_eval(d, p, xi)?;
        let grads = basis_grad(d, p, xi)?;
        for k in 0..nref {
            for j in 0..nref {
                mq.push(vals[k] * vals[j]);
            }
        }
        fq.extend_from_slice(&vals);
        grad_fq.extend_from_slice(&grads);
    }

    let p1_exact = if p == 1 {
        // exact barycentric products: int lam_i lam_j = measure * (1+d_ij) / ((d+1)(d+2))
        let measure = match d {
            1 => 1.0,
            2 => 0.5,
            _ => 1.0 / 6.0,
        };
        let denom = ((d + 1) * (d + 2)) as f64;
        let mut m_ref = vec![0.0; nref * nref];
        for k in 0..nref {
            for j in 0..nref {
                let v = if k == j { 2.0 } else { 1.0 };
                m_ref[k * nref + j] = measure * v / denom;
            }
        }
        // constant gradients: a_ref_mn = measure * g_m g_n^T
        let g = basis_grad(d, p, &vec![0.0; d])?;
        let mut a_ref = vec![0.0; d * d * nref * nref];
        for m in 0..d {
            for n in 0..d {
                let base = (m * d + n) * nref * nref;
                for k in 0..nref {
                    for j in 0..nref {
                        a_ref[base + k * nref + j] = measure * g[k * d + m] * g[j * d + n];
                    }
                }
            }
        }
        Some(P1Tables { m_ref, a_ref })
    } else {
        None
    };

    let w = rule.weights.clone();
    Ok(ReferencePack { d, p, nref, rule, fq, grad_fq, mq, w, p1_exact })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const SUPPORTED: [(usize, usize); 6] = [(1, 1), (1, 2), (2, 1), (2, 2), (3, 1), (3, 2)];

    fn random_reference_point(rng: &mut impl Rng, d: usize) -> Vec<f64> {
        // rejection sampling inside the unit simplex
        loop {
            let xi: Vec<f64> = (0..d).map(|_| rng.gen::<f64>()).collect();
            if xi.iter().sum::<f64>() <= 1.0 {
                return xi;
            }
        }
    }

    #[test]
    fn dof_counts_match_binomials() {
        for &(d, p) in &SUPPORTED {
            let binom = |n: usize, k: usize| -> usize {
                (1..=k).fold(1, |acc, i| acc * (n - k + i) / i)
            };
            assert_eq!(ndof(d, p).unwrap(), binom(p + d, d));
        }
    }

    #[test]
    fn lagrange_property_at_reference_nodes() {
        for &(d, p) in &SUPPORTED {
            let elem = ReferenceElement::new(d, p).unwrap();
            for i in 0..elem.nref {
                let vals = basis_eval(d, p, elem.node(i)).unwrap();
                for (j, &v) in vals.iter().enumerate() {
                    let want = f64::from(i == j);
                    assert!(
                        (v - want).abs() < 1e-14,
                        "(d={d},p={p}) phi_{j} at node {i}: {v}"
                    );
                }
            }
        }
    }

    #[test]
    fn partition_of_unity_and_gradient_sums() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for &(d, p) in &SUPPORTED {
            for _ in 0..1000 {
                let xi = random_reference_point(&mut rng, d);
                let vals = basis_eval(d, p, &xi).unwrap();
                let sum: f64 = vals.iter().sum();
                assert!((sum - 1.0).abs() < 1e-14, "(d={d},p={p}) sum {sum}");
                let grads = basis_grad(d, p, &xi).unwrap();
                for k in 0..d {
                    let gsum: f64 = (0..vals.len()).map(|j| grads[j * d + k]).sum();
                    assert!(gsum.abs() < 1e-13, "(d={d},p={p}) grad sum {gsum}");
                }
            }
        }
    }

    #[test]
    fn p2_triangle_values_at_nodes_and_quarter_point() {
        let v = basis_eval(2, 2, &[0.0, 0.0]).unwrap();
        assert_eq!(v, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let v = basis_eval(2, 2, &[0.5, 0.0]).unwrap();
        assert_eq!(v, vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        // at (1/4,1/4): lambda = (1/2,1/4,1/4); vertex lam(2lam-1), edges 4*lam_a*lam_b
        let v = basis_eval(2, 2, &[0.25, 0.25]).unwrap();
        let want = [0.0, -0.125, -0.125, 0.5, 0.25, 0.5];
        for (got, want) in v.iter().zip(want) {
            assert!((got - want).abs() < 1e-15, "{v:?}");
        }
    }

    #[test]
    fn p1_triangle_values_at_centroid() {
        let v = basis_eval(2, 1, &[1.0 / 3.0, 1.0 / 3.0]).unwrap();
        for got in v {
            assert!((got - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn p1_gradients_are_the_barycentric_constants() {
        let g = basis_grad(2, 1, &[0.3, 0.2]).unwrap();
        // basis-major rows: (-1,-1), (1,0), (0,1)
        assert_eq!(g, vec![-1.0, -1.0, 1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = 1e-6;
        for &(d, p) in &SUPPORTED {
            for _ in 0..25 {
                // keep a margin so the stencil stays inside the element
                let mut xi = random_reference_point(&mut rng, d);
                for c in xi.iter_mut() {
                    *c = 0.05 + 0.8 * *c / (d as f64);
                }
                let grads = basis_grad(d, p, &xi).unwrap();
                let nref = ndof(d, p).unwrap();
                for k in 0..d {
                    let mut xp = xi.clone();
                    let mut xm = xi.clone();
                    xp[k] += h;
                    xm[k] -= h;
                    let vp = basis_eval(d, p, &xp).unwrap();
                    let vm = basis_eval(d, p, &xm).unwrap();
                    for j in 0..nref {
                        let fd = (vp[j] - vm[j]) / (2.0 * h);
                        assert!(
                            (fd - grads[j * d + k]).abs() < 1e-8,
                            "(d={d},p={p}) basis {j} dir {k}: fd {fd} vs {}",
                            grads[j * d + k]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn errors_for_unsupported_and_outside() {
        assert!(matches!(
            basis_eval(2, 3, &[0.1, 0.1]),
            Err(Error::UnsupportedElement { d: 2, p: 3 })
        ));
        assert!(matches!(basis_eval(2, 2, &[0.9, 0.9]), Err(Error::OutsideReference)));
        assert!(matches!(basis_eval(2, 2, &[-0.1, 0.2]), Err(Error::OutsideReference)));
    }

    #[test]
    fn pack_mass_page_is_outer_product() {
        let pack = precompute(2, 2).unwrap();
        for i in 0..pack.q() {
            let f = pack.fq_at(i);
            let mq = pack.mq_at(i);
            for k in 0..pack.nref {
                for j in 0..pack.nref {
                    assert_eq!(mq[k * pack.nref + j], f[k] * f[j]);
                }
            }
        }
    }

    #[test]
    fn p1_exact_mass_matrix_triangle() {
        let pack = precompute(2, 1).unwrap();
        let m = &pack.p1_exact.as_ref().unwrap().m_ref;
        let want = [2.0, 1.0, 1.0, 1.0, 2.0, 1.0, 1.0, 1.0, 2.0].map(|v| v / 24.0);
        for (got, want) in m.iter().zip(want) {
            assert!((got - want).abs() < 1e-16, "{m:?}");
        }
    }

    #[test]
    fn p1_exact_stiffness_block_triangle() {
        let pack = precompute(2, 1).unwrap();
        let a = &pack.p1_exact.as_ref().unwrap().a_ref;
        // block (m=0, n=0): 1/2 * [[1,-1,0],[-1,1,0],[0,0,0]]
        let want = [0.5, -0.5, 0.0, -0.5, 0.5, 0.0, 0.0, 0.0, 0.0];
        for (got, want) in a[..9].iter().zip(want) {
            assert!((got - want).abs() < 1e-16, "{:?}", &a[..9]);
        }
    }

    #[test]
    fn p1_exact_mass_matrices_all_dimensions() {
        // interval: 1/6 [[2,1],[1,2]]; tetrahedron: 1/120 with 2 on the diagonal
        let m1 = precompute(1, 1).unwrap().p1_exact.unwrap().m_ref;
        assert!((m1[0] - 2.0 / 6.0).abs() < 1e-16 && (m1[1] - 1.0 / 6.0).abs() < 1e-16);
        let m3 = precompute(3, 1).unwrap().p1_exact.unwrap().m_ref;
        assert!((m3[0] - 2.0 / 120.0).abs() < 1e-17 && (m3[1] - 1.0 / 120.0).abs() < 1e-17);
    }

    #[test]
    fn precompute_is_deterministic() {
        for &(d, p) in &SUPPORTED {
            let a = precompute(d, p).unwrap();
            let b = precompute(d, p).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn tet_p2_gradient_sums_vanish_at_barycenter() {
        let g = basis_grad(3, 2, &[0.25, 0.25, 0.25]).unwrap();
        for k in 0..3 {
            let sum: f64 = (0..10).map(|j| g[j * 3 + k]).sum();
            assert!(sum.abs() < 1e-14);
        }
    }
}
