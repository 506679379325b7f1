//! Mesh ingestion: STL render surfaces, Gmsh MSH volume meshes, validation and
//! surface embedding.

mod embed;
mod msh;
mod stl;
mod validate;

use std::collections::HashMap;

use thiserror::Error;

use crate::Vec3;

pub use embed::{closest_point_on_tet, embed_surface, EMBED_EPSILON};
pub use msh::{parse_msh, write_msh22, write_msh41};
pub use stl::{parse_stl, WELD_GRID};
pub use validate::{validate_mesh, ValidationReport, Violation, DUPLICATE_NODE_DISTANCE};

/// Errors produced while reading or preparing meshes.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeshError {
    #[error("truncated binary STL: expected {expected} bytes, found {actual}")]
    TruncatedFile { expected: usize, actual: usize },
    #[error("malformed ASCII STL at line {line}: {message}")]
    MalformedAscii { line: usize, message: String },
    #[error("mesh contains no triangles or tetrahedra")]
    EmptyMesh,
    #[error("unsupported MSH format version {0:?} (ASCII 2.2 and 4.1 are supported)")]
    UnsupportedVersion(String),
    #[error("MSH file is missing the {0} section")]
    MissingSection(&'static str),
    #[error("MSH file contains no 4-node tetrahedra")]
    NoTetrahedra,
    #[error("element at line {line} references unknown node tag {tag}")]
    DanglingNodeTag { tag: u64, line: usize },
    #[error("malformed MSH at line {line}: {message}")]
    MalformedMsh { line: usize, message: String },
}

/// Tetrahedral simulation mesh.
///
/// Tetrahedra are stored positively oriented:
/// `det[x1 - x0, x2 - x0, x3 - x0] > 0`. `surface_tris` lists the boundary
/// faces (faces owned by exactly one tetrahedron) wound outward.
#[derive(Debug, Clone, PartialEq)]
pub struct TetMesh {
    pub nodes: Vec<Vec3>,
    pub tets: Vec<[usize; 4]>,
    pub surface_tris: Vec<[usize; 3]>,
}

/// Outward-facing faces of a positively oriented tetrahedron.
const TET_FACES: [[usize; 3]; 4] = [[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]];

impl TetMesh {
    /// Builds a mesh, flipping negatively oriented tetrahedra (swap of the last
    /// two indices) and extracting the boundary surface.
    pub fn new(nodes: Vec<Vec3>, mut tets: Vec<[usize; 4]>) -> Self {
        for tet in &mut tets {
            let in_range = tet.iter().all(|&i| i < nodes.len());
            if in_range && signed_volume(&nodes, *tet) < 0.0 {
                tet.swap(2, 3);
            }
        }
        let surface_tris = boundary_faces(&tets);
        Self {
            nodes,
            tets,
            surface_tris,
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn tet_count(&self) -> usize {
        self.tets.len()
    }

    /// Signed volume of tetrahedron `t`.
    pub fn tet_volume(&self, t: usize) -> f64 {
        signed_volume(&self.nodes, self.tets[t])
    }

    pub fn total_volume(&self) -> f64 {
        (0..self.tets.len()).map(|t| self.tet_volume(t)).sum()
    }

    pub fn tet_centroid(&self, t: usize) -> Vec3 {
        let [a, b, c, d] = self.tets[t];
        (self.nodes[a] + self.nodes[b] + self.nodes[c] + self.nodes[d]) * 0.25
    }

    /// Returns a copy with every coordinate multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            nodes: self.nodes.iter().map(|p| p * factor).collect(),
            tets: self.tets.clone(),
            surface_tris: self.surface_tris.clone(),
        }
    }

    /// Render surface built from the boundary faces, with each vertex embedded
    /// exactly at its node.
    pub fn boundary_surface(&self) -> RenderSurface {
        let mut remap: HashMap<usize, usize> = HashMap::new();
        let mut vertices = Vec::new();
        let mut node_of_vertex = Vec::new();
        let mut triangles = Vec::with_capacity(self.surface_tris.len());
        for tri in &self.surface_tris {
            let mut out = [0usize; 3];
            for (k, &n) in tri.iter().enumerate() {
                out[k] = *remap.entry(n).or_insert_with(|| {
                    vertices.push(self.nodes[n]);
                    node_of_vertex.push(n);
                    vertices.len() - 1
                });
            }
            triangles.push(out);
        }
        // Any tet that owns the node works; pick the first one for determinism.
        let mut owner: Vec<Option<(usize, usize)>> = vec![None; self.nodes.len()];
        for (t, tet) in self.tets.iter().enumerate() {
            for (slot, &n) in tet.iter().enumerate() {
                owner[n].get_or_insert((t, slot));
            }
        }
        let embedding = node_of_vertex
            .iter()
            .map(|&n| {
                let (tet, slot) = owner[n].expect("boundary node belongs to a tet");
                let mut weights = [0.0; 4];
                weights[slot] = 1.0;
                Embedding { tet, weights }
            })
            .collect();
        RenderSurface {
            vertices,
            triangles,
            embedding: Some(embedding),
        }
    }
}

/// Signed volume `det[x1 - x0, x2 - x0, x3 - x0] / 6`.
pub fn signed_volume(nodes: &[Vec3], tet: [usize; 4]) -> f64 {
    let x0 = nodes[tet[0]];
    let e1 = nodes[tet[1]] - x0;
    let e2 = nodes[tet[2]] - x0;
    let e3 = nodes[tet[3]] - x0;
    e1.dot(&e2.cross(&e3)) / 6.0
}

fn boundary_faces(tets: &[[usize; 4]]) -> Vec<[usize; 3]> {
    let mut counts: HashMap<[usize; 3], u32> = HashMap::new();
    for tet in tets {
        for face in TET_FACES {
            let mut key = [tet[face[0]], tet[face[1]], tet[face[2]]];
            key.sort_unstable();
            *counts.entry(key).or_insert(0) += 1;
        }
    }
    let mut out = Vec::new();
    for tet in tets {
        for face in TET_FACES {
            let tri = [tet[face[0]], tet[face[1]], tet[face[2]]];
            let mut key = tri;
            key.sort_unstable();
            if counts[&key] == 1 {
                out.push(tri);
            }
        }
    }
    out
}

/// Location of a render vertex inside the simulation mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Embedding {
    pub tet: usize,
    pub weights: [f64; 4],
}

/// Triangle surface used for display, optionally embedded in a [`TetMesh`].
#[derive(Debug, Clone, PartialEq)]
pub struct RenderSurface {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
    pub embedding: Option<Vec<Embedding>>,
}

impl RenderSurface {
    /// Deformed vertex positions for the given nodal positions (`3N` layout).
    ///
    /// Returns `None` when the surface has not been embedded.
    pub fn deformed_vertices(&self, mesh: &TetMesh, positions: &[f64]) -> Option<Vec<Vec3>> {
        let embedding = self.embedding.as_ref()?;
        Some(
            embedding
                .iter()
                .map(|e| {
                    let tet = mesh.tets[e.tet];
                    let mut p = Vec3::zeros();
                    for (k, &n) in tet.iter().enumerate() {
                        p += e.weights[k]
                            * Vec3::new(positions[3 * n], positions[3 * n + 1], positions[3 * n + 2]);
                    }
                    p
                })
                .collect(),
        )
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            vertices: self.vertices.iter().map(|p| p * factor).collect(),
            triangles: self.triangles.clone(),
            embedding: self.embedding.clone(),
        }
    }
}
