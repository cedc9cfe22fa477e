//! Analytic mesh generators: icospheres, circles, disks and balls.

use std::collections::HashMap;

use super::{mesh_preprocess, ImplicitSurface, Mesh, MeshKind};
use crate::error::{Error, Result};

/// Largest element count a generator will attempt.
const MAX_ELEMENTS: usize = 50_000_000;

fn normalize(p: &mut [f64]) {
    let r = p.iter().map(|c| c * c).sum::<f64>().sqrt();
    for c in p.iter_mut() {
        *c /= r;
    }
}

/// Icosahedron subdivided `refinements` times, all nodes projected onto the
/// unit sphere; `20 * 4^r` elements. For p = 2 the edge midpoints are
/// projected as well, so every node of the quadratic mesh lies on the sphere.
pub fn generate_sphere(refinements: usize, p: usize) -> Result<Mesh> {
    if 20usize.saturating_mul(4usize.saturating_pow(refinements as u32)) > MAX_ELEMENTS {
        return Err(Error::Resource { needed_mb: usize::MAX, budget_mb: 0 });
    }
    let phi = (1.0 + 5.0_f64.sqrt()) / 2.0;
    let mut nodes: Vec<f64> = [
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ]
    .concat();
    for p in nodes.chunks_mut(3) {
        normalize(p);
    }
    let mut faces: Vec<u32> = vec![
        0, 11, 5, 0, 5, 1, 0, 1, 7, 0, 7, 10, 0, 10, 11, //
        1, 5, 9, 5, 11, 4, 11, 10, 2, 10, 7, 6, 7, 1, 8, //
        3, 9, 4, 3, 4, 2, 3, 2, 6, 3, 6, 8, 3, 8, 9, //
        4, 9, 5, 2, 4, 11, 6, 2, 10, 8, 6, 7, 9, 8, 1,
    ];
    // enforce outward orientation (positive normal . centroid)
    for f in faces.chunks_mut(3) {
        if triangle_flux(&nodes, f) < 0.0 {
            f.swap(1, 2);
        }
    }

    for _ in 0..refinements {
        let mut midpoints: HashMap<(u32, u32), u32> = HashMap::new();
        let mut new_faces = Vec::with_capacity(faces.len() * 4);
        for f in faces.chunks(3) {
            let mut mids = [0u32; 3];
            for (k, &(a, b)) in [(0, 1), (1, 2), (2, 0)].iter().enumerate() {
                let (u, v) = (f[a], f[b]);
                let key = (u.min(v), u.max(v));
                mids[k] = *midpoints.entry(key).or_insert_with(|| {
                    let idx = (nodes.len() / 3) as u32;
                    let mut mid = [0.0; 3];
                    for c in 0..3 {
                        mid[c] = 0.5
                            * (nodes[u as usize * 3 + c] + nodes[v as usize * 3 + c]);
                    }
                    normalize(&mut mid);
                    nodes.extend_from_slice(&mid);
                    idx
                });
            }
            new_faces.extend_from_slice(&[f[0], mids[0], mids[2]]);
            new_faces.extend_from_slice(&[f[1], mids[1], mids[0]]);
            new_faces.extend_from_slice(&[f[2], mids[2], mids[1]]);
            new_faces.extend_from_slice(&[mids[0], mids[1], mids[2]]);
        }
        faces = new_faces;
    }

    let mesh = Mesh::new(MeshKind::Surface, 2, 1, nodes, faces, None)?;
    match p {
        1 => Ok(mesh),
        2 => {
            let (mut quadratic, _) = mesh_preprocess(&mesh, 2, Some(&ImplicitSurface::sphere()))?;
            for node in quadratic.nodes.chunks_mut(3) {
                normalize(node);
            }
            Ok(quadratic)
        }
        _ => Err(Error::UnsupportedElement { d: 2, p }),
    }
}

fn triangle_flux(nodes: &[f64], f: &[u32]) -> f64 {
    let a = &nodes[f[0] as usize * 3..f[0] as usize * 3 + 3];
    let b = &nodes[f[1] as usize * 3..f[1] as usize * 3 + 3];
    let c = &nodes[f[2] as usize * 3..f[2] as usize * 3 + 3];
    let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
    let n = [
        u[1] * v[2] - u[2] * v[1],
        u[2] * v[0] - u[0] * v[2],
        u[0] * v[1] - u[1] * v[0],
    ];
    n[0] * (a[0] + b[0] + c[0]) + n[1] * (a[1] + b[1] + c[1]) + n[2] * (a[2] + b[2] + c[2])
}

/// Closed polygonal approximation of the unit circle as a 1D surface mesh
/// in R^2, oriented anti-clockwise. For p = 2 the extra node per segment is
/// the arc midpoint.
pub fn generate_circle(nseg: usize, p: usize) -> Result<Mesh> {
    if nseg < 3 {
        return Err(Error::Precondition(format!("circle needs >= 3 segments, got {nseg}")));
    }
    let angle = |k: f64| std::f64::consts::TAU * k / nseg as f64;
    let mut nodes = Vec::with_capacity(nseg * 2 * p);
    for k in 0..nseg {
        let t = angle(k as f64);
        nodes.extend_from_slice(&[t.cos(), t.sin()]);
    }
    let mut elements = Vec::with_capacity(nseg * (p + 1));
    match p {
        1 => {
            for k in 0..nseg as u32 {
                elements.extend_from_slice(&[k, (k + 1) % nseg as u32]);
            }
        }
        2 => {
            for k in 0..nseg {
                let t = angle(k as f64 + 0.5);
                nodes.extend_from_slice(&[t.cos(), t.sin()]);
            }
            for k in 0..nseg as u32 {
                elements.extend_from_slice(&[k, (k + 1) % nseg as u32, nseg as u32 + k]);
            }
        }
        _ => return Err(Error::UnsupportedElement { d: 1, p }),
    }
    Mesh::new(MeshKind::Surface, 1, p, nodes, elements, None)
}

/// P1 bulk mesh of the unit disk: a six-triangle fan refined until the
/// maximum element diameter is at most `h`, boundary nodes projected onto
/// the unit circle. Returns the mesh with its boundary node list attached.
pub fn generate_disk(h: f64) -> Result<Mesh> {
    if h <= 0.0 {
        return Err(Error::Precondition("mesh size h must be positive".into()));
    }
    let mut nodes: Vec<f64> = vec![0.0, 0.0];
    for k in 0..6 {
        let t = std::f64::consts::TAU * k as f64 / 6.0;
        nodes.extend_from_slice(&[t.cos(), t.sin()]);
    }
    let mut elements: Vec<u32> = (0..6u32).flat_map(|k| [0, k + 1, (k + 1) % 6 + 1]).collect();

    loop {
        let mesh = Mesh::new(MeshKind::Bulk, 2, 1, nodes.clone(), elements.clone(), None)?;
        if mesh.max_diameter() <= h {
            break;
        }
        if elements.len() / 3 * 4 > MAX_ELEMENTS {
            return Err(Error::Resource { needed_mb: usize::MAX, budget_mb: 0 });
        }
        (nodes, elements) = refine_triangles(nodes, elements, true)?;
    }

    let boundary = boundary_nodes_2d(&elements, nodes.len() / 2);
    Mesh::new(MeshKind::Bulk, 2, 1, nodes, elements, Some(boundary))
}

/// One uniform refinement step for a P1 triangle mesh; if `project_boundary`
/// is set, midpoints of boundary edges are pushed onto the unit circle.
fn refine_triangles(
    nodes: Vec<f64>,
    elements: Vec<u32>,
    project_boundary: bool,
) -> Result<(Vec<f64>, Vec<u32>)> {
    let mut edge_count: HashMap<(u32, u32), usize> = HashMap::new();
    for f in elements.chunks(3) {
        for &(a, b) in &[(0, 1), (1, 2), (2, 0)] {
            let (u, v) = (f[a], f[b]);
            *edge_count.entry((u.min(v), u.max(v))).or_insert(0) += 1;
        }
    }
    let mut nodes = nodes;
    let mut midpoints: HashMap<(u32, u32), u32> = HashMap::new();
    let mut new_elements = Vec::with_capacity(elements.len() * 4);
    for f in elements.chunks(3) {
        let mut mids = [0u32; 3];
        for (k, &(a, b)) in [(0, 1), (1, 2), (2, 0)].iter().enumerate() {
            let (u, v) = (f[a], f[b]);
            let key = (u.min(v), u.max(v));
            mids[k] = *midpoints.entry(key).or_insert_with(|| {
                let idx = (nodes.len() / 2) as u32;
                let mut mid = [
                    0.5 * (nodes[u as usize * 2] + nodes[v as usize * 2]),
                    0.5 * (nodes[u as usize * 2 + 1] + nodes[v as usize * 2 + 1]),
                ];
                if project_boundary && edge_count[&key] == 1 {
                    normalize(&mut mid);
                }
                nodes.extend_from_slice(&mid);
                idx
            });
        }
        new_elements.extend_from_slice(&[f[0], mids[0], mids[2]]);
        new_elements.extend_from_slice(&[f[1], mids[1], mids[0]]);
        new_elements.extend_from_slice(&[f[2], mids[2], mids[1]]);
        new_elements.extend_from_slice(&[mids[0], mids[1], mids[2]]);
    }
    Ok((nodes, new_elements))
}

fn boundary_nodes_2d(elements: &[u32], num_nodes: usize) -> Vec<u32> {
    let mut edge_count: HashMap<(u32, u32), usize> = HashMap::new();
    for f in elements.chunks(3) {
        for &(a, b) in &[(0, 1), (1, 2), (2, 0)] {
            let (u, v) = (f[a], f[b]);
            *edge_count.entry((u.min(v), u.max(v))).or_insert(0) += 1;
        }
    }
    let mut on_boundary = vec![false; num_nodes];
    for ((u, v), count) in edge_count {
        if count == 1 {
            on_boundary[u as usize] = true;
            on_boundary[v as usize] = true;
        }
    }
    (0..num_nodes as u32).filter(|&i| on_boundary[i as usize]).collect()
}

/// P1 bulk mesh of the unit ball: an octahedron fan refined until the
/// maximum element diameter is at most `h`, boundary nodes projected onto
/// the unit sphere.
pub fn generate_ball(h: f64) -> Result<Mesh> {
    if h <= 0.0 {
        return Err(Error::Precondition("mesh size h must be positive".into()));
    }
    let mut nodes: Vec<f64> = vec![
        0.0, 0.0, 0.0, //
        1.0, 0.0, 0.0, -1.0, 0.0, 0.0, //
        0.0, 1.0, 0.0, 0.0, -1.0, 0.0, //
        0.0, 0.0, 1.0, 0.0, 0.0, -1.0,
    ];
    let octa_faces: [[u32; 3]; 8] = [
        [1, 3, 5],
        [3, 2, 5],
        [2, 4, 5],
        [4, 1, 5],
        [3, 1, 6],
        [2, 3, 6],
        [4, 2, 6],
        [1, 4, 6],
    ];
    let mut elements: Vec<u32> = Vec::new();
    for f in octa_faces {
        elements.extend_from_slice(&[0, f[0], f[1], f[2]]);
    }
    fix_tet_orientation(&nodes, &mut elements);

    loop {
        let mesh = Mesh::new(MeshKind::Bulk, 3, 1, nodes.clone(), elements.clone(), None)?;
        if mesh.max_diameter() <= h {
            break;
        }
        if elements.len() / 4 * 8 > MAX_ELEMENTS {
            return Err(Error::Resource { needed_mb: usize::MAX, budget_mb: 0 });
        }
        (nodes, elements) = refine_tets(nodes, elements)?;
    }

    let boundary = boundary_nodes_3d(&elements, nodes.len() / 3);
    Mesh::new(MeshKind::Bulk, 3, 1, nodes, elements, Some(boundary))
}

fn tet_signed_volume(nodes: &[f64], t: &[u32]) -> f64 {
    let p = |i: u32| &nodes[i as usize * 3..i as usize * 3 + 3];
    let (a, b, c, d) = (p(t[0]), p(t[1]), p(t[2]), p(t[3]));
    let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
    let w = [d[0] - a[0], d[1] - a[1], d[2] - a[2]];
    u[0] * (v[1] * w[2] - v[2] * w[1]) - u[1] * (v[0] * w[2] - v[2] * w[0])
        + u[2] * (v[0] * w[1] - v[1] * w[0])
}

fn fix_tet_orientation(nodes: &[f64], elements: &mut [u32]) {
    for t in elements.chunks_mut(4) {
        if tet_signed_volume(nodes, t) < 0.0 {
            t.swap(2, 3);
        }
    }
}

/// Red refinement of a tet mesh (four corner tets plus an inner octahedron
/// split along a fixed diagonal); boundary-edge midpoints projected onto
/// the unit sphere.
fn refine_tets(nodes: Vec<f64>, elements: Vec<u32>) -> Result<(Vec<f64>, Vec<u32>)> {
    const TET_EDGES: [(usize, usize); 6] = [(0, 1), (1, 2), (2, 0), (0, 3), (1, 3), (2, 3)];
    // boundary faces appear once; their edges get projected midpoints
    let mut face_count: HashMap<[u32; 3], usize> = HashMap::new();
    for t in elements.chunks(4) {
        for f in [[t[0], t[1], t[2]], [t[0], t[1], t[3]], [t[0], t[2], t[3]], [t[1], t[2], t[3]]] {
            let mut key = f;
            key.sort_unstable();
            *face_count.entry(key).or_insert(0) += 1;
        }
    }
    let mut boundary_edges: HashMap<(u32, u32), bool> = HashMap::new();
    for (face, count) in &face_count {
        if *count == 1 {
            for &(a, b) in &[(0, 1), (1, 2), (2, 0)] {
                let (u, v) = (face[a], face[b]);
                boundary_edges.insert((u.min(v), u.max(v)), true);
            }
        }
    }

    let mut nodes = nodes;
    let mut midpoints: HashMap<(u32, u32), u32> = HashMap::new();
    let mut new_elements = Vec::with_capacity(elements.len() * 8);
    for t in elements.chunks(4) {
        let mut mid = [0u32; 6];
        for (k, &(a, b)) in TET_EDGES.iter().enumerate() {
            let (u, v) = (t[a], t[b]);
            let key = (u.min(v), u.max(v));
            mid[k] = *midpoints.entry(key).or_insert_with(|| {
                let idx = (nodes.len() / 3) as u32;
                let mut p = [0.0; 3];
                for c in 0..3 {
                    p[c] = 0.5 * (nodes[u as usize * 3 + c] + nodes[v as usize * 3 + c]);
                }
                if boundary_edges.contains_key(&key) {
                    normalize(&mut p);
                }
                nodes.extend_from_slice(&p);
                idx
            });
        }
        let (m01, m12, m20, m03, m13, m23) = (mid[0], mid[1], mid[2], mid[3], mid[4], mid[5]);
        let children: [[u32; 4]; 8] = [
            [t[0], m01, m20, m03],
            [m01, t[1], m12, m13],
            [m20, m12, t[2], m23],
            [m03, m13, m23, t[3]],
            [m01, m20, m03, m13],
            [m01, m20, m12, m13],
            [m20, m03, m13, m23],
            [m20, m12, m13, m23],
        ];
        for child in children {
            new_elements.extend_from_slice(&child);
        }
    }
    fix_tet_orientation(&nodes, &mut new_elements);
    Ok((nodes, new_elements))
}

fn boundary_nodes_3d(elements: &[u32], num_nodes: usize) -> Vec<u32> {
    let mut face_count: HashMap<[u32; 3], usize> = HashMap::new();
    for t in elements.chunks(4) {
        for f in [[t[0], t[1], t[2]], [t[0], t[1], t[3]], [t[0], t[2], t[3]], [t[1], t[2], t[3]]] {
            let mut key = f;
            key.sort_unstable();
            *face_count.entry(key).or_insert(0) += 1;
        }
    }
    let mut on_boundary = vec![false; num_nodes];
    for (face, count) in face_count {
        if count == 1 {
            for i in face {
                on_boundary[i as usize] = true;
            }
        }
    }
    (0..num_nodes as u32).filter(|&i| on_boundary[i as usize]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::validate;

    #[test]
    fn icosahedron_counts() {
        let mesh = generate_sphere(0, 1).unwrap();
        assert_eq!(mesh.num_nodes(), 12);
        assert_eq!(mesh.num_elements(), 20);
        let mesh = generate_sphere(2, 1).unwrap();
        assert_eq!(mesh.num_elements(), 320);
    }

    #[test]
    fn quadratic_sphere_nodes_lie_on_sphere() {
        let mesh = generate_sphere(2, 2).unwrap();
        for j in 0..mesh.num_nodes() {
            let r: f64 = mesh.node(j).iter().map(|c| c * c).sum::<f64>().sqrt();
            assert!((r - 1.0).abs() <= 1e-14, "node {j}: |x| = {r}");
        }
    }

    #[test]
    fn circle_counts_and_radius() {
        let mesh = generate_circle(4, 1).unwrap();
        assert_eq!(mesh.num_nodes(), 4);
        assert_eq!(mesh.num_elements(), 4);
        for j in 0..4 {
            let r: f64 = mesh.node(j).iter().map(|c| c * c).sum::<f64>().sqrt();
            assert!((r - 1.0).abs() < 1e-15);
        }
        assert!(validate(&mesh).is_ok());
        assert!(validate(&generate_circle(8, 2).unwrap()).is_ok());
    }

    #[test]
    fn disk_boundary_nodes_on_unit_circle() {
        let mesh = generate_disk(0.5).unwrap();
        let boundary = mesh.boundary.as_ref().unwrap();
        assert!(!boundary.is_empty());
        for &i in boundary {
            let r: f64 = mesh.node(i as usize).iter().map(|c| c * c).sum::<f64>().sqrt();
            assert!((r - 1.0).abs() <= 1e-12);
        }
        assert!(mesh.max_diameter() <= 0.5);
        assert!(validate(&mesh).is_ok(), "{}", validate(&mesh));
    }

    #[test]
    fn ball_is_valid_and_within_h() {
        let mesh = generate_ball(0.7).unwrap();
        assert!(mesh.max_diameter() <= 0.7);
        assert!(validate(&mesh).is_ok(), "{}", validate(&mesh));
        for &i in mesh.boundary.as_ref().unwrap() {
            let r: f64 = mesh.node(i as usize).iter().map(|c| c * c).sum::<f64>().sqrt();
            assert!((r - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn tiny_h_hits_resource_guard() {
        assert!(matches!(generate_disk(1e-6), Err(Error::Resource { .. })));
    }
}
