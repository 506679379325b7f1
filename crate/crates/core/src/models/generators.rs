//! Procedural benchmark geometries.
//!
//! Every generator builds structured hexahedral blocks and splits each cell
//! into six Kuhn tetrahedra sharing one main diagonal of the cell. Blocks that
//! touch use matching node parameters, matching axis senses and matching index
//! parity at the shared face, so face diagonals (and hence the tetrahedra)
//! conform. Shared nodes are then welded by position.

use std::collections::HashMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::region::{MagnetRegion, Region};
use super::ModelError;
use crate::mesh_io::TetMesh;
use crate::Vec3;

/// Axis orderings for the six Kuhn tetrahedra of a cell.
const KUHN_PERMUTATIONS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

/// Relative distance under which generated nodes are merged.
const WELD_TOLERANCE: f64 = 1e-9;

/// Generated mesh with its regions and marker nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedModel {
    pub mesh: TetMesh,
    pub magnet_regions: Vec<MagnetRegion>,
    pub fixed_regions: Vec<Region>,
    /// Tip nodes (beam end, finger tips, wing tips) in a fixed order.
    pub tips: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BeamParams {
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    /// Remanence magnitude along +x (T).
    pub remanence: f64,
}

impl Default for BeamParams {
    fn default() -> Self {
        Self {
            length: 0.1,
            width: 0.01,
            height: 0.01,
            nx: 40,
            ny: 4,
            nz: 4,
            remanence: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GripperParams {
    pub fingers: usize,
    pub finger_length: f64,
    pub finger_width: f64,
    pub finger_thickness: f64,
    /// Circumradius of the polygonal palm.
    pub palm_radius: f64,
    /// Cells through the thickness.
    pub subdivisions: usize,
    /// Target in-plane cell size.
    pub element_size: f64,
    /// Remanence magnitude along each finger axis (T).
    pub remanence: f64,
}

impl Default for GripperParams {
    fn default() -> Self {
        Self {
            fingers: 3,
            finger_length: 0.04,
            finger_width: 0.008,
            finger_thickness: 0.002,
            palm_radius: 0.012,
            subdivisions: 2,
            element_size: 0.002,
            remanence: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ButterflyParams {
    /// Length of one wing from the body edge to the tip.
    pub wing_span: f64,
    pub wing_chord: f64,
    pub thickness: f64,
    pub body_width: f64,
    /// Cells through the thickness.
    pub subdivisions: usize,
    /// Target in-plane cell size.
    pub element_size: f64,
    /// Remanence magnitude, pointing away from the body in each wing (T).
    pub remanence: f64,
}

impl Default for ButterflyParams {
    fn default() -> Self {
        Self {
            wing_span: 0.03,
            wing_chord: 0.02,
            thickness: 0.001,
            body_width: 0.006,
            subdivisions: 2,
            element_size: 0.002,
            remanence: 0.1,
        }
    }
}

fn invalid(message: impl Into<String>) -> ModelError {
    ModelError::InvalidDimensions(message.into())
}

fn check_positive(name: &str, v: f64) -> Result<(), ModelError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be finite and > 0, got {v}")))
    }
}

fn check_count(name: &str, n: usize) -> Result<(), ModelError> {
    if n >= 1 {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be >= 1")))
    }
}

fn check_remanence(v: f64) -> Result<(), ModelError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("remanence must be finite and >= 0, got {v}")))
    }
}

impl BeamParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        check_positive("length", self.length)?;
        check_positive("width", self.width)?;
        check_positive("height", self.height)?;
        check_count("nx", self.nx)?;
        check_count("ny", self.ny)?;
        check_count("nz", self.nz)?;
        check_remanence(self.remanence)
    }
}

impl GripperParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.fingers == 3 || self.fingers == 4) {
            return Err(invalid(format!("fingers must be 3 or 4, got {}", self.fingers)));
        }
        check_positive("finger_length", self.finger_length)?;
        check_positive("finger_width", self.finger_width)?;
        check_positive("finger_thickness", self.finger_thickness)?;
        check_positive("palm_radius", self.palm_radius)?;
        check_count("subdivisions", self.subdivisions)?;
        check_positive("element_size", self.element_size)?;
        check_remanence(self.remanence)?;
        let side = 2.0 * self.palm_radius * (PI / self.fingers as f64).sin();
        if self.finger_width >= side {
            return Err(invalid(format!(
                "finger_width {} must be smaller than the palm side length {side}",
                self.finger_width
            )));
        }
        Ok(())
    }
}

impl ButterflyParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        check_positive("wing_span", self.wing_span)?;
        check_positive("wing_chord", self.wing_chord)?;
        check_positive("thickness", self.thickness)?;
        check_positive("body_width", self.body_width)?;
        check_count("subdivisions", self.subdivisions)?;
        check_positive("element_size", self.element_size)?;
        check_remanence(self.remanence)
    }
}

fn linspace(a: f64, b: f64, cells: usize) -> Vec<f64> {
    (0..=cells).map(|i| a + (b - a) * (i as f64 / cells as f64)).collect()
}

fn cells_for(length: f64, h: f64) -> usize {
    ((length / h).round() as usize).max(1)
}

/// Structured blocks collected before welding.
#[derive(Default)]
struct Builder {
    nodes: Vec<Vec3>,
    tets: Vec<[usize; 4]>,
}

impl Builder {
    /// Adds a block whose node `(i, j, k)` is `map(a[i], b[j], c[k])`.
    fn add_block(&mut self, a: &[f64], b: &[f64], c: &[f64], map: impl Fn(f64, f64, f64) -> Vec3) {
        let base = self.nodes.len();
        let (na, nb) = (a.len(), b.len());
        for &w in c {
            for &v in b {
                for &u in a {
                    self.nodes.push(map(u, v, w));
                }
            }
        }
        let index = |i: usize, j: usize, k: usize| base + i + na * (j + nb * k);
        for k in 0..c.len() - 1 {
            for j in 0..nb - 1 {
                for i in 0..na - 1 {
                    // Reflect the split in odd cells along each axis. Each cell is
                    // still a Kuhn split and shared faces keep matching diagonals,
                    // but the mesh has no preferred diagonal direction.
                    let flip = [i % 2 == 1, j % 2 == 1, k % 2 == 1];
                    let start = [i + flip[0] as usize, j + flip[1] as usize, k + flip[2] as usize];
                    for perm in KUHN_PERMUTATIONS {
                        let mut corner = start;
                        let mut tet = [index(start[0], start[1], start[2]), 0, 0, 0];
                        for (slot, &axis) in perm.iter().enumerate() {
                            if flip[axis] {
                                corner[axis] -= 1;
                            } else {
                                corner[axis] += 1;
                            }
                            tet[slot + 1] = index(corner[0], corner[1], corner[2]);
                        }
                        self.tets.push(tet);
                    }
                }
            }
        }
    }

    /// Merges coincident nodes (first occurrence wins) and builds the mesh.
    fn finish(self, size: f64) -> TetMesh {
        let tol = WELD_TOLERANCE * size;
        let cell = 16.0 * tol;
        let key = |p: &Vec3| {
            [
                (p.x / cell).floor() as i64,
                (p.y / cell).floor() as i64,
                (p.z / cell).floor() as i64,
            ]
        };
        let mut grid: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        let mut unique: Vec<Vec3> = Vec::new();
        let mut remap = Vec::with_capacity(self.nodes.len());
        for p in &self.nodes {
            let k = key(p);
            let mut found = None;
            'search: for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        if let Some(bucket) = grid.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                            if let Some(&u) = bucket.iter().find(|&&u| (unique[u] - p).norm() <= tol) {
                                found = Some(u);
                                break 'search;
                            }
                        }
                    }
                }
            }
            let id = found.unwrap_or_else(|| {
                unique.push(*p);
                grid.entry(k).or_default().push(unique.len() - 1);
                unique.len() - 1
            });
            remap.push(id);
        }
        let tets = self.tets.iter().map(|t| t.map(|n| remap[n])).collect();
        TetMesh::new(unique, tets)
    }
}

fn nearest_node(mesh: &TetMesh, target: Vec3) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (i, p) in mesh.nodes.iter().enumerate() {
        let d = (p - target).norm_squared();
        if d < best.0 {
            best = (d, i);
        }
    }
    best.1
}

/// Cantilever beam along +x with its clamped end face at `x = 0`, centered on
/// the x axis. The whole beam is magnetized along +x.
pub fn generate_beam(p: &BeamParams) -> Result<GeneratedModel, ModelError> {
    p.validate()?;
    let (hw, hh) = (p.width / 2.0, p.height / 2.0);
    let mut builder = Builder::default();
    builder.add_block(
        &linspace(0.0, p.length, p.nx),
        &linspace(-hw, hw, p.ny),
        &linspace(-hh, hh, p.nz),
        |x, y, z| Vec3::new(x, y, z),
    );
    // A plain grid has no duplicates; skip welding to keep numbering regular.
    let mesh = TetMesh::new(builder.nodes, builder.tets);
    let eps = WELD_TOLERANCE * p.length;
    let whole = Region::aabb(Vec3::new(-eps, -hw - eps, -hh - eps), Vec3::new(p.length + eps, hw + eps, hh + eps));
    let clamp = Region::aabb(Vec3::new(-eps, -hw - eps, -hh - eps), Vec3::new(eps, hw + eps, hh + eps));
    let magnet_regions = if p.remanence > 0.0 {
        vec![MagnetRegion {
            region: whole,
            remanence: Vec3::new(p.remanence, 0.0, 0.0),
        }]
    } else {
        Vec::new()
    };
    let tips = vec![nearest_node(&mesh, Vec3::new(p.length, 0.0, 0.0))];
    Ok(GeneratedModel {
        mesh,
        magnet_regions,
        fixed_regions: vec![clamp],
        tips,
    })
}

/// Gripper lying in the `z = 0` plane: a regular n-gon palm centered at the
/// origin with one rectangular finger leaving each side along its outward
/// normal. Fingers are magnetized outward along their axes, so a field along
/// +z curls them up and toward the palm axis. The palm is fixed.
///
/// The palm is split into n kites (center, side midpoint, corner, next side
/// midpoint). Each kite uses the same node parameters along both of its
/// radial edges so neighbouring kites conform, and the parameters put a node
/// exactly at the finger half-width on every side.
pub fn generate_gripper(p: &GripperParams) -> Result<GeneratedModel, ModelError> {
    p.validate()?;
    let n = p.fingers;
    let half_angle = PI / n as f64;
    let apothem = p.palm_radius * half_angle.cos();
    let half_side = p.palm_radius * half_angle.sin();
    let half_width = p.finger_width / 2.0;
    let h = p.element_size;
    let width_cells = cells_for(half_width, h);
    let rest_cells = cells_for(half_side - half_width, h);
    let length_cells = cells_for(p.finger_length, h);

    let mut side_params = linspace(0.0, half_width / half_side, width_cells);
    side_params.extend(linspace(half_width / half_side, 1.0, rest_cells).into_iter().skip(1));
    let across = linspace(0.0, half_width, width_cells);
    let along = linspace(0.0, p.finger_length, length_cells);
    let ht = p.finger_thickness / 2.0;
    let zs = linspace(-ht, ht, p.subdivisions);

    let frame = |k: usize| {
        let theta = 2.0 * PI * k as f64 / n as f64;
        let d = Vec3::new(theta.cos(), theta.sin(), 0.0);
        let t = Vec3::new(-theta.sin(), theta.cos(), 0.0);
        (d, t)
    };

    let mut builder = Builder::default();
    for k in 0..n {
        let (d, t) = frame(k);
        let (d_next, _) = frame((k + 1) % n);
        let mid = d * apothem;
        let corner = d * apothem + t * half_side;
        let mid_next = d_next * apothem;
        builder.add_block(&side_params, &side_params, &zs, |u, v, z| {
            mid * (u * (1.0 - v)) + corner * (u * v) + mid_next * ((1.0 - u) * v) + Vec3::new(0.0, 0.0, z)
        });
        for sign in [1.0, -1.0] {
            builder.add_block(&along, &across, &zs, |s, q, z| {
                d * (apothem + s) + t * (sign * q) + Vec3::new(0.0, 0.0, z)
            });
        }
    }
    let mesh = builder.finish(p.palm_radius + p.finger_length);

    let eps = WELD_TOLERANCE * (p.palm_radius + p.finger_length);
    let z_axis = Vec3::z();
    let mut palm_planes = vec![(z_axis, ht + eps), (-z_axis, ht + eps)];
    let mut magnet_regions = Vec::new();
    let mut tips = Vec::new();
    for k in 0..n {
        let (d, t) = frame(k);
        palm_planes.push((d, apothem + eps));
        if p.remanence > 0.0 {
            magnet_regions.push(MagnetRegion {
                region: Region::oriented_box(
                    d * (apothem + p.finger_length / 2.0),
                    [d, t, z_axis],
                    [p.finger_length / 2.0 + eps, half_width + eps, ht + eps],
                ),
                remanence: d * p.remanence,
            });
        }
        tips.push(nearest_node(&mesh, d * (apothem + p.finger_length) + z_axis * ht));
    }
    Ok(GeneratedModel {
        mesh,
        magnet_regions,
        fixed_regions: vec![Region::from_planes(palm_planes)],
        tips,
    })
}

/// Butterfly in the `z = 0` plane, mirror-symmetric about `x = 0`: a central
/// body strip `|x| <= body_width / 2` with a wing on each side. Wings are
/// magnetized away from the body (+x on the right, -x on the left), so a field
/// along +z folds both wings up. The body is fixed.
pub fn generate_butterfly(p: &ButterflyParams) -> Result<GeneratedModel, ModelError> {
    p.validate()?;
    let h = p.element_size;
    let hb = p.body_width / 2.0;
    let ht = p.thickness / 2.0;
    let hc = p.wing_chord / 2.0;
    let mut xs = linspace(0.0, hb, cells_for(hb, h));
    xs.extend(linspace(hb, hb + p.wing_span, cells_for(p.wing_span, h)).into_iter().skip(1));
    let ys = linspace(-hc, hc, cells_for(p.wing_chord, h));
    let zs = linspace(-ht, ht, p.subdivisions);

    let mut builder = Builder::default();
    for sign in [1.0, -1.0] {
        builder.add_block(&xs, &ys, &zs, |x, y, z| Vec3::new(sign * x, y, z));
    }
    let reach = hb + p.wing_span;
    let mesh = builder.finish(reach);

    let eps = WELD_TOLERANCE * reach;
    let body = Region::aabb(Vec3::new(-hb - eps, -hc - eps, -ht - eps), Vec3::new(hb + eps, hc + eps, ht + eps));
    let mut magnet_regions = Vec::new();
    if p.remanence > 0.0 {
        magnet_regions.push(MagnetRegion {
            region: Region::aabb(Vec3::new(hb - eps, -hc - eps, -ht - eps), Vec3::new(reach + eps, hc + eps, ht + eps)),
            remanence: Vec3::new(p.remanence, 0.0, 0.0),
        });
        magnet_regions.push(MagnetRegion {
            region: Region::aabb(Vec3::new(-reach - eps, -hc - eps, -ht - eps), Vec3::new(-hb + eps, hc + eps, ht + eps)),
            remanence: Vec3::new(-p.remanence, 0.0, 0.0),
        });
    }
    let tips = vec![
        nearest_node(&mesh, Vec3::new(reach, 0.0, ht)),
        nearest_node(&mesh, Vec3::new(-reach, 0.0, ht)),
    ];
    Ok(GeneratedModel {
        mesh,
        magnet_regions,
        fixed_regions: vec![body],
        tips,
    })
}
