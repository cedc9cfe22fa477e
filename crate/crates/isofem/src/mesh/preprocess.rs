//! P1 -> P2 mesh preprocessing: one new node per unique edge, optionally
//! lifted onto an implicit surface, plus the simplicial refinement of each
//! quadratic element for plotting.

use std::collections::{HashMap, HashSet};

use super::{lift_nodes, unique_edges, ImplicitSurface, Mesh, MeshKind};
use crate::error::{Error, Result};
use crate::reference::local_edges;

/// Splits of a quadratic element into linear sub-elements, by local node.
const PLOT_SPLIT_1D: [[usize; 2]; 2] = [[0, 2], [2, 1]];
const PLOT_SPLIT_2D: [[usize; 3]; 4] = [[0, 3, 5], [1, 4, 3], [2, 5, 4], [3, 4, 5]];
const PLOT_SPLIT_3D: [[usize; 4]; 8] = [
    [0, 4, 6, 7],
    [4, 1, 5, 8],
    [6, 5, 2, 9],
    [7, 8, 9, 3],
    [4, 6, 7, 8],
    [4, 6, 5, 8],
    [6, 7, 8, 9],
    [6, 5, 8, 9],
];

/// Raise a P1 mesh to order `p = 2` by inserting one midpoint node per
/// unique undirected edge (shared edges share their node). When a surface
/// is supplied, the new nodes are lifted onto it: all of them for surface
/// meshes, only boundary-edge midpoints for bulk meshes. The second return
/// value is the P1 plotting connectivity over the new node set.
pub fn mesh_preprocess(
    mesh: &Mesh,
    p: usize,
    lift: Option<&ImplicitSurface>,
) -> Result<(Mesh, Vec<u32>)> {
    if mesh.p != 1 {
        return Err(Error::Precondition(format!(
            "mesh_preprocess expects a P1 mesh, got p = {}",
            mesh.p
        )));
    }
    if p != 2 {
        return Err(Error::UnsupportedElement { d: mesh.d, p });
    }
    let d = mesh.d;
    let m = mesh.m;
    let base_nodes = mesh.num_nodes() as u32;
    let (edges, edge_index) = unique_edges(mesh);

    // midpoint coordinates for every unique edge
    let mut new_coords = vec![0.0; edges.len() * m];
    for (k, &(u, v)) in edges.iter().enumerate() {
        let pu = mesh.node(u as usize);
        let pv = mesh.node(v as usize);
        for c in 0..m {
            new_coords[k * m + c] = 0.5 * (pu[c] + pv[c]);
        }
    }

    if let Some(surface) = lift {
        match mesh.kind {
            MeshKind::Surface => {
                new_coords = lift_nodes(&new_coords, m, surface)?;
            }
            MeshKind::Bulk => {
                let boundary_edge = boundary_edge_set(mesh);
                for (k, key) in edges.iter().enumerate() {
                    if boundary_edge.contains(key) {
                        let lifted =
                            lift_nodes(&new_coords[k * m..(k + 1) * m], m, surface)?;
                        new_coords[k * m..(k + 1) * m].copy_from_slice(&lifted);
                    }
                }
            }
        }
    }

    let mut nodes = mesh.nodes.clone();
    nodes.extend_from_slice(&new_coords);

    let corners = d + 1;
    let nref2 = corners + local_edges(d).len();
    let mut elements = Vec::with_capacity(mesh.num_elements() * nref2);
    for e in 0..mesh.num_elements() {
        let elem = mesh.element(e);
        elements.extend_from_slice(elem);
        for &(a, b) in local_edges(d) {
            let (u, v) = (elem[a], elem[b]);
            let key = (u.min(v), u.max(v));
            elements.push(base_nodes + edge_index[&key]);
        }
    }

    // boundary list gains the lifted/unlifted boundary-edge midpoints
    let boundary = match (&mesh.boundary, mesh.kind) {
        (Some(old), MeshKind::Bulk) => {
            let boundary_edge = boundary_edge_set(mesh);
            let mut list = old.clone();
            for (k, key) in edges.iter().enumerate() {
                if boundary_edge.contains(key) {
                    list.push(base_nodes + k as u32);
                }
            }
            Some(list)
        }
        (b, _) => b.clone(),
    };

    let quadratic = Mesh::new(mesh.kind, d, 2, nodes, elements, boundary)?;

    let mut e_plot = Vec::new();
    for e in 0..quadratic.num_elements() {
        let elem = quadratic.element(e);
        match d {
            1 => {
                for child in PLOT_SPLIT_1D {
                    e_plot.extend(child.iter().map(|&l| elem[l]));
                }
            }
            2 => {
                for child in PLOT_SPLIT_2D {
                    e_plot.extend(child.iter().map(|&l| elem[l]));
                }
            }
            _ => {
                for child in PLOT_SPLIT_3D {
                    e_plot.extend(child.iter().map(|&l| elem[l]));
                }
            }
        }
    }

    Ok((quadratic, e_plot))
}

/// Undirected corner edges lying on the domain boundary of a bulk mesh.
fn boundary_edge_set(mesh: &Mesh) -> HashSet<(u32, u32)> {
    let mut set = HashSet::new();
    match mesh.d {
        2 => {
            let mut count: HashMap<(u32, u32), usize> = HashMap::new();
            for e in 0..mesh.num_elements() {
                let elem = mesh.element(e);
                for &(a, b) in local_edges(2) {
                    let (u, v) = (elem[a], elem[b]);
                    *count.entry((u.min(v), u.max(v))).or_insert(0) += 1;
                }
            }
            set.extend(count.into_iter().filter(|&(_, c)| c == 1).map(|(k, _)| k));
        }
        3 => {
            let mut count: HashMap<[u32; 3], usize> = HashMap::new();
            for e in 0..mesh.num_elements() {
                let t = mesh.element(e);
                for f in
                    [[t[0], t[1], t[2]], [t[0], t[1], t[3]], [t[0], t[2], t[3]], [t[1], t[2], t[3]]]
                {
                    let mut key = f;
                    key.sort_unstable();
                    *count.entry(key).or_insert(0) += 1;
                }
            }
            for (face, c) in count {
                if c == 1 {
                    for &(a, b) in &[(0usize, 1usize), (1, 2), (2, 0)] {
                        let (u, v) = (face[a], face[b]);
                        set.insert((u.min(v), u.max(v)));
                    }
                }
            }
        }
        _ => {
            // 1D bulk is not supported; nothing to do
        }
    }
    set
}
