use rayon::prelude::*;

use super::{Embedding, MeshError, RenderSurface, TetMesh};
use crate::{Mat3, Vec3};

/// Tolerance on barycentric coordinates for a vertex to count as inside a tet.
pub const EMBED_EPSILON: f64 = 1e-6;

struct TetFrame {
    origin: Vec3,
    inverse: Mat3,
    lo: Vec3,
    hi: Vec3,
    corners: [Vec3; 4],
}

impl TetFrame {
    fn barycentric(&self, p: &Vec3) -> [f64; 4] {
        let l = self.inverse * (p - self.origin);
        [1.0 - l.x - l.y - l.z, l.x, l.y, l.z]
    }

    fn box_distance_sq(&self, p: &Vec3) -> f64 {
        let mut d = 0.0;
        for k in 0..3 {
            let excess = (self.lo[k] - p[k]).max(p[k] - self.hi[k]).max(0.0);
            d += excess * excess;
        }
        d
    }
}

/// Embeds every surface vertex in the simulation mesh.
///
/// Vertices inside a tet (all barycentric coordinates at least `-EMBED_EPSILON`)
/// keep their exact barycentric weights. Vertices outside every tet are bound to
/// the closest point of the nearest tet, so reconstruction moves them by exactly
/// their distance to the mesh.
pub fn embed_surface(surface: &RenderSurface, mesh: &TetMesh) -> Result<RenderSurface, MeshError> {
    if mesh.tets.is_empty() {
        return Err(MeshError::EmptyMesh);
    }
    let frames: Vec<TetFrame> = mesh
        .tets
        .iter()
        .map(|tet| {
            let corners = tet.map(|i| mesh.nodes[i]);
            let dm = Mat3::from_columns(&[
                corners[1] - corners[0],
                corners[2] - corners[0],
                corners[3] - corners[0],
            ]);
            let mut lo = corners[0];
            let mut hi = corners[0];
            for c in &corners[1..] {
                lo = lo.inf(c);
                hi = hi.sup(c);
            }
            TetFrame {
                origin: corners[0],
                inverse: dm.try_inverse().unwrap_or_else(Mat3::zeros),
                lo,
                hi,
                corners,
            }
        })
        .collect();

    let embedding = surface
        .vertices
        .par_iter()
        .map(|p| locate(p, &frames))
        .collect();
    Ok(RenderSurface {
        vertices: surface.vertices.clone(),
        triangles: surface.triangles.clone(),
        embedding: Some(embedding),
    })
}

fn locate(p: &Vec3, frames: &[TetFrame]) -> Embedding {
    let mut best = (f64::NEG_INFINITY, 0usize, [0.0; 4]);
    for (t, frame) in frames.iter().enumerate() {
        let w = frame.barycentric(p);
        let worst = w.iter().copied().fold(f64::INFINITY, f64::min);
        if worst > best.0 {
            best = (worst, t, w);
        }
    }
    if best.0 >= -EMBED_EPSILON {
        return Embedding {
            tet: best.1,
            weights: best.2,
        };
    }
    let mut nearest = (f64::INFINITY, 0usize, [0.0; 4]);
    for (t, frame) in frames.iter().enumerate() {
        if frame.box_distance_sq(p) >= nearest.0 {
            continue;
        }
        let (q, w) = closest_point_on_tet(p, &frame.corners);
        let d = (q - p).norm_squared();
        if d < nearest.0 {
            nearest = (d, t, w);
        }
    }
    Embedding {
        tet: nearest.1,
        weights: nearest.2,
    }
}

/// Closest point of a tetrahedron to `p` and its barycentric weights.
pub fn closest_point_on_tet(p: &Vec3, corners: &[Vec3; 4]) -> (Vec3, [f64; 4]) {
    let dm = Mat3::from_columns(&[
        corners[1] - corners[0],
        corners[2] - corners[0],
        corners[3] - corners[0],
    ]);
    if let Some(inv) = dm.try_inverse() {
        let l = inv * (p - corners[0]);
        let w = [1.0 - l.x - l.y - l.z, l.x, l.y, l.z];
        if w.iter().all(|&c| c >= 0.0) {
            return (*p, w);
        }
    }
    const FACES: [[usize; 3]; 4] = [[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]];
    let mut best = (f64::INFINITY, Vec3::zeros(), [0.0; 4]);
    for face in FACES {
        let (q, uvw) = closest_point_on_triangle(p, corners[face[0]], corners[face[1]], corners[face[2]]);
        let d = (q - p).norm_squared();
        if d < best.0 {
            let mut w = [0.0; 4];
            for k in 0..3 {
                w[face[k]] = uvw[k];
            }
            best = (d, q, w);
        }
    }
    (best.1, best.2)
}

// Region-based closest point on a triangle (Ericson, Real-Time Collision Detection 5.1.5).
fn closest_point_on_triangle(p: &Vec3, a: Vec3, b: Vec3, c: Vec3) -> (Vec3, [f64; 3]) {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (a, [1.0, 0.0, 0.0]);
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (b, [0.0, 1.0, 0.0]);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (a + ab * v, [1.0 - v, v, 0.0]);
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (c, [0.0, 0.0, 1.0]);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (a + ac * w, [1.0 - w, 0.0, w]);
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (b + (c - b) * w, [0.0, 1.0 - w, w]);
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (a + ab * v + ac * w, [1.0 - v - w, v, w])
}
