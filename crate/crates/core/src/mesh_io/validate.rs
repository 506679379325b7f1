use super::{signed_volume, TetMesh};
use crate::Vec3;

/// Nodes closer than this (meters) are reported as duplicates.
pub const DUPLICATE_NODE_DISTANCE: f64 = 1e-12;

/// A broken [`TetMesh`] invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    IndexOutOfRange { tet: usize, index: usize },
    NonFiniteNode { node: usize },
    NonPositiveVolume { tet: usize, volume: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub node_count: usize,
    pub tet_count: usize,
    pub boundary_face_count: usize,
    pub min_volume: f64,
    pub max_volume: f64,
    /// Smallest dihedral angle over all tets, in degrees.
    pub min_dihedral_deg: f64,
    /// Pairs of distinct nodes closer than [`DUPLICATE_NODE_DISTANCE`].
    pub duplicate_nodes: Vec<(usize, usize)>,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn warning_count(&self) -> usize {
        self.duplicate_nodes.len()
    }
}

pub fn validate_mesh(mesh: &TetMesh) -> ValidationReport {
    let mut violations = Vec::new();
    for (i, p) in mesh.nodes.iter().enumerate() {
        if !p.iter().all(|c| c.is_finite()) {
            violations.push(Violation::NonFiniteNode { node: i });
        }
    }
    let mut min_volume = f64::INFINITY;
    let mut max_volume = f64::NEG_INFINITY;
    let mut min_dihedral = f64::INFINITY;
    for (t, tet) in mesh.tets.iter().enumerate() {
        if let Some(&bad) = tet.iter().find(|&&i| i >= mesh.nodes.len()) {
            violations.push(Violation::IndexOutOfRange { tet: t, index: bad });
            continue;
        }
        let volume = signed_volume(&mesh.nodes, *tet);
        min_volume = min_volume.min(volume);
        max_volume = max_volume.max(volume);
        if !(volume > 0.0) {
            violations.push(Violation::NonPositiveVolume { tet: t, volume });
        }
        min_dihedral = min_dihedral.min(min_dihedral_angle(tet.map(|i| mesh.nodes[i])));
    }
    if mesh.tets.is_empty() {
        min_volume = 0.0;
        max_volume = 0.0;
        min_dihedral = 0.0;
    }
    ValidationReport {
        node_count: mesh.nodes.len(),
        tet_count: mesh.tets.len(),
        boundary_face_count: mesh.surface_tris.len(),
        min_volume,
        max_volume,
        min_dihedral_deg: min_dihedral,
        duplicate_nodes: duplicate_nodes(&mesh.nodes),
        violations,
    }
}

fn min_dihedral_angle(p: [Vec3; 4]) -> f64 {
    const EDGES: [(usize, usize, usize, usize); 6] =
        [(0, 1, 2, 3), (0, 2, 1, 3), (0, 3, 1, 2), (1, 2, 0, 3), (1, 3, 0, 2), (2, 3, 0, 1)];
    let mut min = f64::INFINITY;
    for (a, b, c, d) in EDGES {
        let e = p[b] - p[a];
        let n1 = e.cross(&(p[c] - p[a]));
        let n2 = e.cross(&(p[d] - p[a]));
        let denom = n1.norm() * n2.norm();
        let angle = if denom > 0.0 {
            (n1.dot(&n2) / denom).clamp(-1.0, 1.0).acos()
        } else {
            0.0
        };
        min = min.min(angle.to_degrees());
    }
    min
}

fn duplicate_nodes(nodes: &[Vec3]) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..nodes.len()).filter(|&i| nodes[i].x.is_finite()).collect();
    order.sort_by(|&a, &b| nodes[a].x.total_cmp(&nodes[b].x));
    let mut out = Vec::new();
    for (k, &i) in order.iter().enumerate() {
        for &j in &order[k + 1..] {
            if nodes[j].x - nodes[i].x >= DUPLICATE_NODE_DISTANCE {
                break;
            }
            if (nodes[j] - nodes[i]).norm() < DUPLICATE_NODE_DISTANCE {
                out.push((i.min(j), i.max(j)));
            }
        }
    }
    out.sort_unstable();
    out
}
