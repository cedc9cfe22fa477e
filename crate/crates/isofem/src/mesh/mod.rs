//! Mesh data structures, validation, file I/O, analytic generators,
//! P1 -> P2 preprocessing and closest-point lifting.

mod generate;
mod io;
mod lift;
mod preprocess;

pub use generate::{generate_ball, generate_circle, generate_disk, generate_sphere};
pub use io::{read_mesh, read_mesh_from, write_mesh, write_mesh_to};
pub use lift::{lift_nodes, ImplicitSurface};
pub use preprocess::mesh_preprocess;

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::reference::{local_edges, ndof};

/// Bulk domains are flat (ambient dimension = intrinsic dimension);
/// surfaces are embedded with one extra ambient dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshKind {
    Bulk,
    Surface,
}

impl fmt::Display for MeshKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeshKind::Bulk => write!(f, "bulk"),
            MeshKind::Surface => write!(f, "surface"),
        }
    }
}

/// Simplicial mesh of intrinsic dimension `d` and order `p`, embedded in
/// `R^m`. Node coordinates are stored node-major (`|N| * m`), connectivity
/// element-major (`|E| * nref`) with zero-based indices, corners first then
/// edge midpoints, anti-clockwise.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub kind: MeshKind,
    pub d: usize,
    pub p: usize,
    pub m: usize,
    pub nodes: Vec<f64>,
    pub elements: Vec<u32>,
    /// Boundary node indices (bulk meshes only).
    pub boundary: Option<Vec<u32>>,
}

impl Mesh {
    pub fn new(
        kind: MeshKind,
        d: usize,
        p: usize,
        nodes: Vec<f64>,
        elements: Vec<u32>,
        boundary: Option<Vec<u32>>,
    ) -> Result<Self> {
        let nref = ndof(d, p)?;
        let m = match kind {
            MeshKind::Bulk => d,
            MeshKind::Surface => d + 1,
        };
        if nodes.len() % m != 0 {
            return Err(Error::DimensionMismatch(format!(
                "node table length {} not divisible by ambient dimension {m}",
                nodes.len()
            )));
        }
        if elements.len() % nref != 0 {
            return Err(Error::DimensionMismatch(format!(
                "element table length {} not divisible by nref {nref}",
                elements.len()
            )));
        }
        if elements.is_empty() {
            return Err(Error::Precondition("mesh has no elements".into()));
        }
        let n = nodes.len() / m;
        if let Some(&bad) = elements.iter().find(|&&i| i as usize >= n) {
            return Err(Error::IndexOutOfRange { index: bad as usize, n });
        }
        if let Some(b) = &boundary {
            if let Some(&bad) = b.iter().find(|&&i| i as usize >= n) {
                return Err(Error::IndexOutOfRange { index: bad as usize, n });
            }
        }
        Ok(Self { kind, d, p, m, nodes, elements, boundary })
    }

    pub fn nref(&self) -> usize {
        ndof(self.d, self.p).expect("constructed meshes are supported")
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len() / self.m
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len() / self.nref()
    }

    pub fn node(&self, j: usize) -> &[f64] {
        &self.nodes[j * self.m..(j + 1) * self.m]
    }

    pub fn element(&self, e: usize) -> &[u32] {
        let nref = self.nref();
        &self.elements[e * nref..(e + 1) * nref]
    }

    /// Same connectivity over new coordinates (moving meshes).
    pub fn with_nodes(&self, nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() != self.nodes.len() {
            return Err(Error::DimensionMismatch("with_nodes: coordinate count".into()));
        }
        let mut out = self.clone();
        out.nodes = nodes;
        Ok(out)
    }

    /// Maximum Euclidean diameter over element corner nodes.
    pub fn max_diameter(&self) -> f64 {
        let corners = self.d + 1;
        let mut h: f64 = 0.0;
        for e in 0..self.num_elements() {
            let elem = self.element(e);
            for a in 0..corners {
                for b in a + 1..corners {
                    let pa = self.node(elem[a] as usize);
                    let pb = self.node(elem[b] as usize);
                    let d2: f64 =
                        pa.iter().zip(pb).map(|(x, y)| (x - y) * (x - y)).sum();
                    h = h.max(d2);
                }
            }
        }
        h.sqrt()
    }
}

/// A single validation finding.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    IndexOutOfRange { element: usize, index: usize },
    UnreferencedNode { node: usize },
    DuplicateElement { element: usize, first: usize },
    InconsistentOrientation { element: usize },
    NonManifoldEdge { nodes: (usize, usize) },
    NonPositiveMeasure { element: usize, det: f64 },
    MissingBoundaryNode { node: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::IndexOutOfRange { element, index } => {
                write!(f, "element {element}: node index {index} out of range")
            }
            Violation::UnreferencedNode { node } => {
                write!(f, "node {node} is not referenced by any element")
            }
            Violation::DuplicateElement { element, first } => {
                write!(f, "element {element} duplicates element {first}")
            }
            Violation::InconsistentOrientation { element } => {
                write!(f, "element {element} is inconsistently oriented")
            }
            Violation::NonManifoldEdge { nodes } => {
                write!(f, "edge ({}, {}) is shared by more than two elements", nodes.0, nodes.1)
            }
            Violation::NonPositiveMeasure { element, det } => {
                write!(f, "element {element} has non-positive measure ({det:.3e})")
            }
            Violation::MissingBoundaryNode { node } => {
                write!(f, "boundary list contains invalid node {node}")
            }
        }
    }
}

/// Outcome of [`validate`]; empty means the mesh passed every check.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            writeln!(f, "mesh is valid")
        } else {
            for v in &self.violations {
                writeln!(f, "{v}")?;
            }
            Ok(())
        }
    }
}

/// Check all mesh invariants; collects findings instead of aborting.
pub fn validate(mesh: &Mesh) -> ValidationReport {
    let mut report = ValidationReport::default();
    let n = mesh.num_nodes();
    let nref = mesh.nref();

    let mut referenced = vec![false; n];
    let mut structurally_ok = true;
    for e in 0..mesh.num_elements() {
        for &i in mesh.element(e) {
            if (i as usize) >= n {
                report.violations.push(Violation::IndexOutOfRange { element: e, index: i as usize });
                structurally_ok = false;
            } else {
                referenced[i as usize] = true;
            }
        }
    }
    for (j, &r) in referenced.iter().enumerate() {
        if !r {
            report.violations.push(Violation::UnreferencedNode { node: j });
        }
    }
    if let Some(b) = &mesh.boundary {
        for &i in b {
            if (i as usize) >= n {
                report.violations.push(Violation::MissingBoundaryNode { node: i as usize });
            }
        }
    }
    if !structurally_ok {
        return report;
    }

    // duplicate element rows (by sorted node set)
    let mut seen: HashMap<Vec<u32>, usize> = HashMap::new();
    for e in 0..mesh.num_elements() {
        let mut key = mesh.element(e).to_vec();
        key.sort_unstable();
        match seen.get(&key) {
            Some(&first) => {
                report.violations.push(Violation::DuplicateElement { element: e, first })
            }
            None => {
                seen.insert(key, e);
            }
        }
    }
    let _ = nref;

    if mesh.kind == MeshKind::Surface {
        check_surface_orientation(mesh, &mut report);
    } else {
        // bulk orientation: signed corner Jacobian must be positive
        for e in 0..mesh.num_elements() {
            let det = signed_corner_volume(mesh, e);
            if det <= 0.0 {
                report.violations.push(Violation::InconsistentOrientation { element: e });
            }
        }
    }

    // positive measure at every quadrature point
    if let Ok(pack) = crate::reference::precompute(mesh.d, mesh.p) {
        for e in 0..mesh.num_elements() {
            match crate::assembly::element_geometry(mesh, e, &pack) {
                Ok(geo) => {
                    if let Some((_, &det)) =
                        geo.det.iter().enumerate().find(|(_, &d)| d <= 0.0)
                    {
                        report
                            .violations
                            .push(Violation::NonPositiveMeasure { element: e, det });
                    }
                }
                Err(Error::DegenerateElement { element, det }) => {
                    report.violations.push(Violation::NonPositiveMeasure { element, det });
                }
                Err(_) => {}
            }
        }
    }

    report
}

/// Signed volume of the corner simplex of element `e` (bulk meshes).
fn signed_corner_volume(mesh: &Mesh, e: usize) -> f64 {
    let elem = mesh.element(e);
    let d = mesh.d;
    let origin = mesh.node(elem[0] as usize);
    let mut cols = [[0.0; 3]; 3];
    for k in 0..d {
        let pk = mesh.node(elem[k + 1] as usize);
        for c in 0..d {
            cols[k][c] = pk[c] - origin[c];
        }
    }
    match d {
        1 => cols[0][0],
        2 => cols[0][0] * cols[1][1] - cols[0][1] * cols[1][0],
        _ => {
            cols[0][0] * (cols[1][1] * cols[2][2] - cols[1][2] * cols[2][1])
                - cols[1][0] * (cols[0][1] * cols[2][2] - cols[0][2] * cols[2][1])
                + cols[2][0] * (cols[0][1] * cols[1][2] - cols[0][2] * cols[1][1])
        }
    }
}

fn check_surface_orientation(mesh: &Mesh, report: &mut ValidationReport) {
    match mesh.d {
        2 => {
            // each undirected corner edge must be traversed in opposite
            // directions by its (at most two) adjacent elements
            let mut edges: HashMap<(u32, u32), Vec<(usize, bool)>> = HashMap::new();
            for e in 0..mesh.num_elements() {
                let elem = mesh.element(e);
                for &(a, b) in local_edges(2) {
                    let (u, v) = (elem[a], elem[b]);
                    let key = (u.min(v), u.max(v));
                    edges.entry(key).or_default().push((e, u < v));
                }
            }
            for (key, users) in edges {
                if users.len() > 2 {
                    report.violations.push(Violation::NonManifoldEdge {
                        nodes: (key.0 as usize, key.1 as usize),
                    });
                } else if users.len() == 2 && users[0].1 == users[1].1 {
                    // the defect is pairwise; name both elements
                    for &(e, _) in &users {
                        report.violations.push(Violation::InconsistentOrientation { element: e });
                    }
                }
            }
        }
        1 => {
            // a consistently oriented curve enters and leaves each node once
            let n = mesh.num_nodes();
            let mut outgoing = vec![0usize; n];
            let mut incoming = vec![0usize; n];
            for e in 0..mesh.num_elements() {
                let elem = mesh.element(e);
                outgoing[elem[0] as usize] += 1;
                incoming[elem[1] as usize] += 1;
            }
            for e in 0..mesh.num_elements() {
                let elem = mesh.element(e);
                if outgoing[elem[0] as usize] > 1 || incoming[elem[1] as usize] > 1 {
                    report.violations.push(Violation::InconsistentOrientation { element: e });
                }
            }
        }
        _ => {}
    }
}

/// A surface mesh is closed when every corner edge (d = 2) is shared by
/// exactly two elements, or every node (d = 1) is entered and left once.
pub fn is_closed_surface(mesh: &Mesh) -> bool {
    if mesh.kind != MeshKind::Surface {
        return false;
    }
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
            count.values().all(|&c| c == 2)
        }
        1 => {
            let n = mesh.num_nodes();
            let mut outgoing = vec![0usize; n];
            let mut incoming = vec![0usize; n];
            for e in 0..mesh.num_elements() {
                let elem = mesh.element(e);
                outgoing[elem[0] as usize] += 1;
                incoming[elem[1] as usize] += 1;
            }
            (0..n).all(|j| outgoing[j] == incoming[j] && outgoing[j] <= 1)
        }
        _ => false,
    }
}

/// Deduplicated undirected corner edges; maps sorted node pairs to the
/// index at which each edge was first seen.
pub(crate) fn unique_edges(mesh: &Mesh) -> (Vec<(u32, u32)>, HashMap<(u32, u32), u32>) {
    let mut list = Vec::new();
    let mut map = HashMap::new();
    for e in 0..mesh.num_elements() {
        let elem = mesh.element(e);
        for &(a, b) in local_edges(mesh.d) {
            let (u, v) = (elem[a], elem[b]);
            let key = (u.min(v), u.max(v));
            map.entry(key).or_insert_with(|| {
                list.push(key);
                (list.len() - 1) as u32
            });
        }
    }
    (list, map)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn icosphere_is_valid() {
        let mesh = generate_sphere(1, 1).unwrap();
        let report = validate(&mesh);
        assert!(report.is_ok(), "{report}");
    }

    #[test]
    fn swapped_nodes_break_orientation() {
        let mut mesh = generate_sphere(1, 1).unwrap();
        mesh.elements.swap(0, 1);
        let report = validate(&mesh);
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::InconsistentOrientation { element: 0 })));
    }

    #[test]
    fn duplicated_element_is_reported() {
        let mut mesh = generate_sphere(0, 1).unwrap();
        let first: Vec<u32> = mesh.element(0).to_vec();
        mesh.elements.extend_from_slice(&first);
        let report = validate(&mesh);
        assert!(report.violations.iter().any(|v| matches!(
            v,
            Violation::DuplicateElement { element: 20, first: 0 }
        )));
    }

    #[test]
    fn unreferenced_node_is_reported() {
        let mut mesh = generate_sphere(0, 1).unwrap();
        mesh.nodes.extend_from_slice(&[5.0, 5.0, 5.0]);
        let report = validate(&mesh);
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::UnreferencedNode { node: 12 })));
    }

    #[test]
    fn max_diameter_of_single_triangle() {
        let mesh = Mesh::new(
            MeshKind::Bulk,
            2,
            1,
            vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0],
            vec![0, 1, 2],
            None,
        )
        .unwrap();
        assert!((mesh.max_diameter() - 2.0f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn rejects_empty_elements() {
        let err = Mesh::new(MeshKind::Bulk, 2, 1, vec![0.0, 0.0], vec![], None);
        assert!(err.is_err());
    }
}
