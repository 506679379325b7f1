#![allow(dead_code)]

use magsim_core::mesh_io::TetMesh;
use magsim_core::models::{generate_beam, BeamParams};
use magsim_core::{Mat3, Vec3};
use proptest::prelude::*;

pub fn flat(points: &[Vec3]) -> Vec<f64> {
    points.iter().flat_map(|p| [p.x, p.y, p.z]).collect()
}

pub fn unflat(x: &[f64]) -> Vec<Vec3> {
    x.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect()
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn rotation(axis: Vec3, angle: f64) -> Mat3 {
    let k = axis.normalize();
    let kx = Mat3::new(0.0, -k.z, k.y, k.z, 0.0, -k.x, -k.y, k.x, 0.0);
    Mat3::identity() + kx * angle.sin() + kx * kx * (1.0 - angle.cos())
}

pub fn vec3(range: f64) -> impl Strategy<Value = Vec3> {
    (-range..range, -range..range, -range..range).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

pub fn rotation_strategy() -> impl Strategy<Value = Mat3> {
    (vec3(1.0), -3.1f64..3.1).prop_filter_map("axis too short", |(axis, angle)| {
        (axis.norm() > 0.1).then(|| rotation(axis, angle))
    })
}

/// Well-shaped positively oriented tetrahedron with edge scale about `size`.
pub fn tet_strategy(size: f64) -> impl Strategy<Value = TetMesh> {
    prop::array::uniform4(vec3(size)).prop_filter_map("sliver", move |p| {
        let vol = (p[1] - p[0]).dot(&(p[2] - p[0]).cross(&(p[3] - p[0]))) / 6.0;
        if vol.abs() < 0.02 * size.powi(3) {
            return None;
        }
        let tet = if vol > 0.0 { [0, 1, 2, 3] } else { [0, 2, 1, 3] };
        Some(TetMesh::new(p.to_vec(), vec![tet]))
    })
}

pub fn small_beam(nx: usize, ny: usize, nz: usize) -> TetMesh {
    generate_beam(&BeamParams {
        nx,
        ny,
        nz,
        ..Default::default()
    })
    .unwrap()
    .mesh
}

/// Small beam with every node displaced by up to `amplitude` (m).
pub fn perturbed_beam() -> impl Strategy<Value = (TetMesh, Vec<f64>)> {
    (1usize..4, 1usize..3, 1usize..3).prop_flat_map(|(nx, ny, nz)| {
        let mesh = small_beam(nx, ny, nz);
        let n = mesh.node_count();
        (Just(mesh), prop::collection::vec(-3e-4f64..3e-4, 3 * n))
    })
    .prop_map(|(mesh, noise)| {
        let x = flat(&mesh.nodes).iter().zip(&noise).map(|(a, b)| a + b).collect();
        (mesh, x)
    })
}
