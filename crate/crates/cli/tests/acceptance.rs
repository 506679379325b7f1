//! Acceptance suite A1-A11. Prints one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p magsim-cli --test acceptance`. Pass criterion ids
//! (for example `A4 A10`) as arguments to run a subset.
//!
//! A criterion listed in `KNOWN_FAILURES` is still run against its full
//! tolerance and reported as FAIL; it does not fail the process. If it starts
//! passing, the process fails so the list gets updated.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::{Arc, RwLock};
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::Value;

use magsim_cli::{simulate, sweep, Mode, SimulateOptions, SweepOptions};
use magsim_core::fem::{elastic_forces, precompute_rest, MaterialParams, RestData, SimState};
use magsim_core::magnetics::{element_forces, magnetic_forces, net_wrench, zeeman_energy, MagneticParams};
use magsim_core::mesh_io::{parse_msh, parse_stl, write_msh22, write_msh41, MeshError, TetMesh};
use magsim_core::models::{generate_beam, BeamParams, Model, ModelLibrary};
use magsim_core::stress::{element_stress, von_mises};
use magsim_core::{Mat3, Vec3};
use magsim_service::frame::{decode_frame, encode_frame, Frame};
use magsim_service::{spawn_session, ControlMessage, Inbound, Session};

/// Criteria that fail against their pinned tolerance; the analysis is in the README.
const KNOWN_FAILURES: &[&str] = &["A4"];

/// Vacuum permeability, kept separate from the library constant.
const MU0: f64 = 4.0e-7 * std::f64::consts::PI;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

fn random_vec(rng: &mut StdRng, scale: f64) -> Vec3 {
    Vec3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    ) * scale
}

fn rotation(axis: Vec3, angle: f64) -> Mat3 {
    let k = axis.normalize();
    let kx = Mat3::new(0.0, -k.z, k.y, k.z, 0.0, -k.x, -k.y, k.x, 0.0);
    Mat3::identity() + kx * angle.sin() + kx * kx * (1.0 - angle.cos())
}

fn random_rotation(rng: &mut StdRng) -> Mat3 {
    let axis = random_vec(rng, 1.0) + Vec3::new(1e-3, 0.0, 0.0);
    rotation(axis, rng.random_range(-3.1..3.1))
}

/// Random positively oriented tetrahedron of size `size` with bounded aspect ratio.
fn random_tet(rng: &mut StdRng, size: f64) -> TetMesh {
    loop {
        let p: Vec<Vec3> = (0..4).map(|_| random_vec(rng, size)).collect();
        let vol = (p[1] - p[0]).dot(&(p[2] - p[0]).cross(&(p[3] - p[0]))) / 6.0;
        if vol.abs() < 0.02 * size.powi(3) {
            continue;
        }
        let tet = if vol > 0.0 { [0, 1, 2, 3] } else { [0, 2, 1, 3] };
        return TetMesh::new(p, vec![tet]);
    }
}

fn flat(points: &[Vec3]) -> Vec<f64> {
    points.iter().flat_map(|p| [p.x, p.y, p.z]).collect()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// One random single-tet magnetic configuration.
struct MagCase {
    rest: RestData,
    mag: MagneticParams,
    x: Vec<f64>,
}

fn mag_cases() -> Vec<MagCase> {
    let mut rng = rng(11);
    (0..100)
        .map(|_| {
            let size = 10f64.powf(rng.random_range(-3.0..-1.5));
            let mesh = random_tet(&mut rng, size);
            let rest = precompute_rest(&mesh, &MaterialParams::default()).unwrap();
            let remanence = random_vec(&mut rng, 0.8);
            let field = random_vec(&mut rng, 0.05);
            let x: Vec<f64> = mesh
                .nodes
                .iter()
                .flat_map(|p| {
                    let q = p + random_vec(&mut rng, 0.2 * size);
                    [q.x, q.y, q.z]
                })
                .collect();
            MagCase {
                rest,
                mag: MagneticParams {
                    remanence: vec![remanence],
                    field,
                },
                x,
            }
        })
        .collect()
}

fn a1() -> Outcome {
    let start = Instant::now();
    let cases = mag_cases();
    let mut worst: f64 = 0.0;
    for (k, c) in cases.iter().enumerate() {
        let f = magnetic_forces(&c.rest, &c.mag);
        let size = c.rest.elements[0].volume.cbrt();
        let h = 1e-3 * size;
        let scale = inf_norm(&f);
        ensure!(scale > 0.0, "case {k}: zero force");
        for i in 0..12 {
            let mut xp = c.x.clone();
            let mut xm = c.x.clone();
            xp[i] += h;
            xm[i] -= h;
            let fd = -(zeeman_energy(&xp, &c.rest, &c.mag) - zeeman_energy(&xm, &c.rest, &c.mag)) / (2.0 * h);
            let err = (f[i] - fd).abs() / scale;
            worst = worst.max(err);
            ensure!(err <= 1e-8, "case {k} dof {i}: relative error {err:e}");
        }
        let el = &c.rest.elements[0];
        let nodal = element_forces(el.volume, &el.dm_inv, &c.mag.remanence[0], &c.mag.field);
        let total = nodal[0] + (nodal[1] + nodal[2] + nodal[3]);
        ensure!(total == Vec3::zeros(), "case {k}: element force sum {total:?}");
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    Ok(format!("100 cases, worst relative FD error {worst:.1e}, element sums exactly 0, {elapsed:.2?}"))
}

fn a2() -> Outcome {
    let mut worst: f64 = 0.0;
    for (k, c) in mag_cases().iter().enumerate() {
        let el = &c.rest.elements[0];
        let f = c.rest.deformation_gradient(0, &c.x);
        let m = f * c.mag.remanence[0] * (el.volume / MU0);
        let expected = m.cross(&c.mag.field);
        let torque = net_wrench(&c.x, &c.rest, &c.mag).torque;
        let scale = m.norm() * c.mag.field.norm();
        let err = (torque - expected).norm() / scale;
        worst = worst.max(err);
        ensure!(err <= 1e-8, "case {k}: relative torque error {err:e}");
    }
    let mut rng = rng(12);
    let mut aligned_worst: f64 = 0.0;
    for (k, c) in mag_cases().iter().enumerate() {
        let el = &c.rest.elements[0];
        let fb = c.rest.deformation_gradient(0, &c.x) * c.mag.remanence[0];
        let mag = MagneticParams {
            remanence: c.mag.remanence.clone(),
            field: fb.normalize() * rng.random_range(0.001..0.1),
        };
        let torque = net_wrench(&c.x, &c.rest, &mag).torque.norm();
        let bound = 1e-9 * (el.volume / MU0) * mag.remanence[0].norm() * mag.field.norm();
        aligned_worst = aligned_worst.max(torque / bound * 1e-9);
        ensure!(torque < bound, "aligned case {k}: torque {torque:e} >= {bound:e}");
    }
    Ok(format!(
        "worst relative torque error {worst:.1e}; aligned torque at most {aligned_worst:.1e} of (V/mu0)|Br||B|"
    ))
}

fn builtin(name: &str) -> Model {
    ModelLibrary::builtin().instantiate(name).unwrap()
}

const BENCHMARKS: [&str; 4] = ["beam", "gripper3", "gripper4", "butterfly"];

fn frozen_fd_error(rest: &RestData, x: &[f64], dofs: &[usize]) -> Result<f64, String> {
    let eval = elastic_forces(x, rest, None).map_err(|e| e.to_string())?;
    let scale = inf_norm(&eval.forces);
    let extent = rest.mean_face_area().sqrt();
    let h = 1e-6 * extent;
    let energy = |y: &[f64]| magsim_core::fem::corotational_energy(y, rest, &eval.rotations);
    let mut worst: f64 = 0.0;
    for &i in dofs {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[i] += h;
        xm[i] -= h;
        let fd = -(energy(&xp) - energy(&xm)) / (2.0 * h);
        worst = worst.max((eval.forces[i] - fd).abs() / scale);
    }
    Ok(worst)
}

fn a3() -> Outcome {
    let mut rng = rng(13);
    let mut worst_fd: f64 = 0.0;
    for _ in 0..50 {
        let size = 10f64.powf(rng.random_range(-3.0..-1.5));
        let mesh = random_tet(&mut rng, size);
        let material = MaterialParams {
            poisson_ratio: rng.random_range(0.0..0.49),
            ..Default::default()
        };
        let rest = precompute_rest(&mesh, &material).unwrap();
        let q = random_rotation(&mut rng);
        let x: Vec<Vec3> = mesh.nodes.iter().map(|p| q * p + random_vec(&mut rng, 0.15 * size)).collect();
        worst_fd = worst_fd.max(frozen_fd_error(&rest, &flat(&x), &(0..12).collect::<Vec<_>>())?);
    }
    let mut worst_rigid: f64 = 0.0;
    for name in BENCHMARKS {
        let model = builtin(name);
        let rest = precompute_rest(&model.mesh, &model.material).unwrap();
        let f_ref = model.material.young_modulus * rest.mean_face_area();
        let extent = rest.mean_face_area().sqrt();

        let x: Vec<Vec3> = model.mesh.nodes.iter().map(|p| p + random_vec(&mut rng, 0.05 * extent)).collect();
        let dofs: Vec<usize> = (0..40).map(|_| rng.random_range(0..3 * model.mesh.node_count())).collect();
        worst_fd = worst_fd.max(frozen_fd_error(&rest, &flat(&x), &dofs)?);

        let mut states = vec![model.mesh.nodes.clone()];
        for _ in 0..3 {
            let q = random_rotation(&mut rng);
            let t = random_vec(&mut rng, 0.1);
            states.push(model.mesh.nodes.iter().map(|p| q * p + t).collect());
        }
        for (k, x) in states.iter().enumerate() {
            let forces = elastic_forces(&flat(x), &rest, None).unwrap().forces;
            let r = inf_norm(&forces) / f_ref;
            worst_rigid = worst_rigid.max(r);
            ensure!(r < 1e-9, "{name} state {k}: normalized force {r:e}");
        }
    }
    ensure!(worst_fd <= 1e-5, "frozen-rotation FD error {worst_fd:e}");
    Ok(format!(
        "worst FD error {worst_fd:.1e} (50 tets, 4 meshes); rest/rigid normalized force <= {worst_rigid:.1e}"
    ))
}

struct BeamRun {
    model: Model,
    state: SimState,
    deflection: f64,
    elapsed: Duration,
}

/// Quasi-static beam solve; deflection is the mean z displacement of the free end face.
fn beam_solve(field_z: f64) -> Result<BeamRun, String> {
    let start = Instant::now();
    let model = builtin("beam");
    let mut sim = model.simulator().map_err(|e| e.to_string())?;
    sim.set_field(Vec3::new(0.0, 0.0, field_z));
    let mut state = sim.rest_state();
    let report = sim.quasi_static(&mut state, &mut |_| true).map_err(|e| e.to_string())?;
    ensure!(report.converged, "beam solve did not converge");
    let length = model.mesh.nodes.iter().map(|p| p.x).fold(f64::MIN, f64::max);
    let tip: Vec<usize> = (0..model.mesh.node_count())
        .filter(|&i| (model.mesh.nodes[i].x - length).abs() < 1e-9)
        .collect();
    let deflection = tip
        .iter()
        .map(|&i| state.positions[3 * i + 2] - model.mesh.nodes[i].z)
        .sum::<f64>()
        / tip.len() as f64;
    Ok(BeamRun {
        model,
        state,
        deflection,
        elapsed: start.elapsed(),
    })
}

fn a4() -> Outcome {
    let (length, width, height): (f64, f64, f64) = (0.1, 0.01, 0.01);
    let (young, br, b) = (1.0e6, 0.1, 0.001);
    let area = width * height;
    let inertia = width * height.powi(3) / 12.0;
    let couple = br * b / MU0 * area;
    let oracle = couple * length.powi(3) / (3.0 * young * inertia);

    let run = beam_solve(b)?;
    let m = &run.model;
    ensure!(m.material.young_modulus == young && m.material.poisson_ratio == 0.3, "beam material differs");
    ensure!(m.mesh.node_count() == 41 * 5 * 5 && m.mesh.tet_count() == 40 * 4 * 4 * 6, "beam mesh is not 40x4x4");
    ensure!(
        m.remanence.iter().all(|r| *r == Vec3::new(br, 0.0, 0.0)),
        "beam remanence differs"
    );
    let rel = (run.deflection - oracle) / oracle;
    let detail = format!(
        "tip deflection {:.4} mm vs beam theory {:.4} mm (c = {couple:.3e} N m/m), error {:+.1}%, {:.2?}",
        run.deflection * 1e3,
        oracle * 1e3,
        rel * 100.0,
        run.elapsed
    );
    ensure!(run.elapsed < Duration::from_secs(30), "{detail}: too slow");
    ensure!(rel.abs() <= 0.10, "{detail}: outside 10%");
    Ok(detail)
}

fn a5() -> Outcome {
    let full = beam_solve(0.001)?.deflection;
    let half = beam_solve(0.0005)?.deflection;
    let ratio = half / full;
    let detail = format!("w(B/2)/w(B) = {ratio:.5}");
    ensure!((ratio - 0.5).abs() <= 0.05 * 0.5, "{detail}: outside 5% of 0.5");
    Ok(detail)
}

fn settle(name: &str) -> Result<(Model, Vec<Vec3>), String> {
    let model = builtin(name);
    let mut sim = model.simulator().map_err(|e| e.to_string())?;
    let mut state = sim.rest_state();
    let report = sim.quasi_static(&mut state, &mut |_| true).map_err(|e| e.to_string())?;
    ensure!(report.converged, "{name}: quasi-static solve did not converge");
    let disp = model
        .tips
        .iter()
        .map(|&t| state.position(t) - model.mesh.nodes[t])
        .collect();
    Ok((model, disp))
}

fn spread(values: &[f64]) -> f64 {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let max = values.iter().cloned().fold(f64::MIN, f64::max);
    let min = values.iter().cloned().fold(f64::MAX, f64::min);
    (max - min) / mean
}

fn a6() -> Outcome {
    let mut notes = Vec::new();
    for name in ["gripper3", "gripper4"] {
        let (model, disp) = settle(name)?;
        ensure!(model.default_field.x == 0.0 && model.default_field.y == 0.0, "{name}: field is not axial");
        let mut norms = Vec::new();
        for (k, (&t, d)) in model.tips.iter().zip(&disp).enumerate() {
            let p = model.mesh.nodes[t];
            let radial = Vec3::new(p.x, p.y, 0.0).normalize();
            let inward = -d.dot(&radial);
            ensure!(inward > 0.0, "{name} finger {k}: radial motion {:+.3e} m is outward", -inward);
            norms.push(d.norm());
        }
        let s = spread(&norms);
        ensure!(s < 0.01, "{name}: tip spread {:.3}%", s * 100.0);
        notes.push(format!("{name} tips {:.2} mm, spread {s:.1e}", norms[0] * 1e3));
    }
    let (_, disp) = settle("butterfly")?;
    let (l, r) = (disp[0], disp[1]);
    ensure!(l.z > 0.0 && r.z > 0.0, "wing tips do not move up: {l:?} {r:?}");
    let mismatch = (l - Vec3::new(-r.x, r.y, r.z)).norm() / (0.5 * (l.norm() + r.norm()));
    ensure!(mismatch < 0.01, "butterfly mirror mismatch {:.3}%", mismatch * 100.0);
    notes.push(format!("butterfly tips up {:.2} mm, mismatch {mismatch:.1e}", l.z * 1e3));
    Ok(notes.join("; "))
}

fn a7() -> Outcome {
    let run = beam_solve(0.001)?;
    let model = &run.model;
    let mut sim = model.simulator().map_err(|e| e.to_string())?;
    sim.refresh_rotations(&run.state).map_err(|e| e.to_string())?;
    let stress = element_stress(&run.state.positions, sim.rest(), sim.rotations());
    let hot = stress.argmax().unwrap();
    let clamp_x = model.mesh.nodes.iter().map(|p| p.x).fold(f64::MAX, f64::min);
    let dist = |e: usize| model.mesh.tet_centroid(e).x - clamp_x;
    let rank = (0..model.mesh.tet_count()).filter(|&e| dist(e) < dist(hot)).count();
    let frac = rank as f64 / model.mesh.tet_count() as f64;
    ensure!(frac < 0.10, "max von Mises element ranks at {:.1}% from the clamp", frac * 100.0);

    let mut rest_max: f64 = 0.0;
    for name in BENCHMARKS {
        let m = builtin(name);
        let rest = precompute_rest(&m.mesh, &m.material).unwrap();
        let x = flat(&m.mesh.nodes);
        let rotations = elastic_forces(&x, &rest, None).unwrap().rotations;
        let s = element_stress(&x, &rest, &rotations);
        let r = s.max / m.material.young_modulus;
        rest_max = rest_max.max(r);
        ensure!(r < 1e-6, "{name}: rest von Mises {:.3e} Pa", s.max);
    }

    let mut rng = rng(17);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let a = Mat3::from_fn(|_, _| rng.random_range(-1.0..1.0)) * 10f64.powf(rng.random_range(2.0..7.0));
        let s = (a + a.transpose()) * 0.5;
        let q = random_rotation(&mut rng);
        let v = von_mises(&s);
        let err = (von_mises(&(q * s * q.transpose())) - v).abs() / v;
        worst = worst.max(err);
        ensure!(err <= 1e-9, "rotation changed von Mises by {err:e}");
    }
    Ok(format!(
        "max at {:.1}% of elements from the clamp ({:.0} Pa); rest stress <= {rest_max:.1e} E; rotation error {worst:.1e}",
        frac * 100.0,
        stress.max
    ))
}

fn fixture(name: &str) -> Vec<u8> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name);
    std::fs::read(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn a8() -> Outcome {
    let v22 = parse_msh(&fixture("single_tet_v22.msh")).map_err(|e| e.to_string())?;
    let v41 = parse_msh(&fixture("single_tet_v41.msh")).map_err(|e| e.to_string())?;
    ensure!(v22 == v41, "MSH 2.2 and 4.1 parse differently");
    let expected = [
        Vec3::new(0.0, 0.0, 0.0),
        Vec3::new(0.015625, 0.0, 0.0),
        Vec3::new(0.0, 0.0078125, 0.0),
        Vec3::new(0.0, 0.0, 0.00390625),
    ];
    ensure!(v22.nodes == expected && v22.tet_count() == 1, "unexpected single-tet mesh {v22:?}");
    ensure!((v22.tet_volume(0) - 0.015625 * 0.0078125 * 0.00390625 / 6.0).abs() < 1e-20, "wrong volume");

    let ascii = parse_stl(&fixture("tet_ascii.stl")).map_err(|e| e.to_string())?;
    let binary = parse_stl(&fixture("tet_binary.stl")).map_err(|e| e.to_string())?;
    ensure!(ascii == binary, "ASCII and binary STL differ");
    ensure!(ascii.vertices.len() == 4 && ascii.triangles.len() == 4, "tet surface not welded to 4 vertices");

    let mut truncated = vec![0u8; 100];
    truncated[80..84].copy_from_slice(&2u32.to_le_bytes());
    let cases: Vec<(&str, Result<(), MeshError>, fn(&MeshError) -> bool)> = vec![
        ("truncated binary STL", parse_stl(&truncated).map(|_| ()), |e| {
            matches!(e, MeshError::TruncatedFile { expected: 184, actual: 100 })
        }),
        (
            "malformed ASCII STL",
            parse_stl(b"solid x\nfacet normal 0 0 1\nouter loop\nvertex 0 0\n").map(|_| ()),
            |e| matches!(e, MeshError::MalformedAscii { line: 4, .. }),
        ),
        ("empty STL", parse_stl(b"solid x\nendsolid x\n").map(|_| ()), |e| {
            matches!(e, MeshError::EmptyMesh)
        }),
        (
            "MSH 3.0",
            parse_msh(b"$MeshFormat\n3.0 0 8\n$EndMeshFormat\n").map(|_| ()),
            |e| matches!(e, MeshError::UnsupportedVersion(_)),
        ),
        (
            "MSH without elements",
            parse_msh(b"$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n1\n1 0 0 0\n$EndNodes\n").map(|_| ()),
            |e| matches!(e, MeshError::MissingSection(_)),
        ),
        (
            "MSH with triangles only",
            parse_msh(
                b"$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n3\n1 0 0 0\n2 1 0 0\n3 0 1 0\n$EndNodes\n\
$Elements\n1\n1 2 2 0 1 1 2 3\n$EndElements\n",
            )
            .map(|_| ()),
            |e| matches!(e, MeshError::NoTetrahedra),
        ),
        (
            "MSH dangling node",
            parse_msh(
                b"$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n3\n1 0 0 0\n2 1 0 0\n3 0 1 0\n$EndNodes\n\
$Elements\n1\n1 4 2 0 1 1 2 3 99\n$EndElements\n",
            )
            .map(|_| ()),
            |e| matches!(e, MeshError::DanglingNodeTag { tag: 99, .. }),
        ),
    ];
    for (what, result, expected) in &cases {
        match result {
            Err(e) if expected(e) => {}
            other => return Err(format!("{what}: got {other:?}")),
        }
    }

    // Truncations and byte corruptions must return, never panic.
    let mut rng = rng(18);
    let mut inputs = 0;
    for name in ["single_tet_v22.msh", "single_tet_v41.msh", "tet_ascii.stl", "tet_binary.stl"] {
        let bytes = fixture(name);
        let is_msh = name.ends_with(".msh");
        let mut variants: Vec<Vec<u8>> = (0..bytes.len()).map(|n| bytes[..n].to_vec()).collect();
        for _ in 0..300 {
            let mut b = bytes.clone();
            for _ in 0..rng.random_range(1..4) {
                let i = rng.random_range(0..b.len());
                b[i] = rng.random();
            }
            variants.push(b);
        }
        for v in variants {
            inputs += 1;
            let outcome = catch_unwind(|| {
                if is_msh {
                    let _ = parse_msh(&v);
                } else {
                    let _ = parse_stl(&v);
                }
            });
            ensure!(outcome.is_ok(), "{name}: parser panicked");
        }
    }

    let beam = generate_beam(&BeamParams {
        nx: 6,
        ny: 2,
        nz: 3,
        ..Default::default()
    })
    .unwrap()
    .mesh;
    ensure!(parse_msh(write_msh22(&beam).as_bytes()).ok().as_ref() == Some(&beam), "MSH 2.2 round trip");
    ensure!(parse_msh(write_msh41(&beam).as_bytes()).ok().as_ref() == Some(&beam), "MSH 4.1 round trip");
    Ok(format!(
        "golden files agree; {} error cases as specified; {inputs} corrupted inputs without panic; round trips exact",
        cases.len()
    ))
}

fn a9() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut files = Vec::new();
    for (k, (model, mode)) in [("beam", Mode::Static), ("gripper3", Mode::Dynamic)].into_iter().enumerate() {
        let mut outputs = Vec::new();
        for run in 0..2 {
            let out = dir.path().join(format!("{k}-{run}.vtk"));
            let mut opts = SimulateOptions::new(model, mode);
            opts.steps = 30;
            opts.out = Some(out.clone());
            simulate(&opts).map_err(|e| e.to_string())?;
            outputs.push(std::fs::read(&out).map_err(|e| e.to_string())?);
        }
        ensure!(outputs[0] == outputs[1], "{model}: VTK outputs differ");
        files.push(outputs[0].len());
    }
    let mut csv = Vec::new();
    for run in 0..2 {
        let out = dir.path().join(format!("sweep-{run}.csv"));
        sweep(&SweepOptions {
            model: "beam".into(),
            direction: None,
            magnitudes: vec![0.0, 0.0005, 0.001, 0.0005],
            out: Some(out.clone()),
            models_dir: None,
        })
        .map_err(|e| e.to_string())?;
        csv.push(std::fs::read(&out).map_err(|e| e.to_string())?);
    }
    ensure!(csv[0] == csv[1], "sweep CSV outputs differ");
    Ok(format!(
        "VTK ({} and {} bytes) and CSV ({} bytes) identical across runs",
        files[0],
        files[1],
        csv[0].len()
    ))
}

fn a10() -> Outcome {
    let library = Arc::new(RwLock::new(ModelLibrary::builtin()));
    let mut session = Session::new("bench", library, std::env::temp_dir());
    let load = session
        .handle(ControlMessage::LoadModel {
            name: Some("beam".into()),
            descriptor: None,
        })
        .map_err(|e| e.to_string())?;
    ensure!(load["nodes"] == 1025 && load["tets"] == 3840, "beam size: {load}");
    session
        .handle(ControlMessage::SetField {
            direction: [0.0, 0.0, 1.0],
            magnitude: 0.01,
        })
        .map_err(|e| e.to_string())?;
    session.handle(ControlMessage::Start).map_err(|e| e.to_string())?;
    for _ in 0..5 {
        session.step().map_err(|e| e.to_string())?;
    }
    let steps = 90;
    let start = Instant::now();
    for _ in 0..steps {
        session.step().map_err(|e| e.to_string())?;
        ensure!(session.encoded_frame().is_some(), "no frame");
    }
    let rate = steps as f64 / start.elapsed().as_secs_f64();
    let detail = format!("{rate:.0} implicit steps/s with a frame per step (1025 nodes, 3840 tets)");
    ensure!(rate >= 30.0, "{detail}");
    Ok(detail)
}

fn a11() -> Outcome {
    let mut rng = rng(19);
    for k in 0..300 {
        let n = if k < 5 { k } else { rng.random_range(0..200) };
        let frame = Frame {
            index: rng.random(),
            sim_time: rng.random_range(0.0..1e4),
            positions: (0..n)
                .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
                .collect(),
            von_mises: (0..n).map(|_| rng.random_range(0.0..1e7)).collect(),
            stress_min: rng.random_range(0.0..1.0),
            stress_max: rng.random_range(1.0..1e7),
        };
        let bytes = encode_frame(&frame);
        ensure!(bytes.len() == 21 + 16 * n && bytes[0] == 0x01, "frame {k}: {} bytes", bytes.len());
        ensure!(decode_frame(&bytes).as_ref() == Ok(&frame), "frame {k} does not round trip");
    }
    let three = Frame {
        index: 7,
        sim_time: 0.5,
        positions: vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
        von_mises: vec![0.0, 1.0, 2.0],
        stress_min: 0.0,
        stress_max: 2.0,
    };
    ensure!(encode_frame(&three).len() == 69, "3-vertex frame is {} bytes", encode_frame(&three).len());

    let handle = spawn_session("acceptance".into(), Arc::new(RwLock::new(ModelLibrary::builtin())), std::env::temp_dir());
    let mut outgoing = handle.outgoing;
    let malformed = [
        "",
        "{",
        "null",
        "42",
        "[{\"cmd\": \"start\"}]",
        "{\"cmd\": 5}",
        "{\"command\": \"start\"}",
        "{\"cmd\": \"explode\"}",
        "{\"cmd\": \"start\", \"now\": true}",
        "{\"cmd\": \"set_field\", \"direction\": [0, 0], \"magnitude\": 1}",
        "{\"cmd\": \"set_field\", \"direction\": [0, 0, 1]}",
        "{\"cmd\": \"load_model\", \"name\": 3}",
        "{\"cmd\": \"set_material\", \"material\": {\"young_modulus\": -1}}",
        "{\"cmd\": \"set_field\", \"direction\": [0, 0, 0], \"magnitude\": 0.01}",
    ];
    for m in malformed {
        handle.mailbox.send(Inbound::Text(m.to_string())).map_err(|e| e.to_string())?;
    }
    handle.mailbox.send(Inbound::Binary(12)).map_err(|e| e.to_string())?;
    handle
        .mailbox
        .send(Inbound::Text("{\"cmd\": \"list_models\"}".into()))
        .map_err(|e| e.to_string())?;

    let deadline = Instant::now() + Duration::from_secs(10);
    let mut responses: Vec<Value> = Vec::new();
    while responses.len() < malformed.len() + 2 && Instant::now() < deadline {
        match outgoing.try_recv() {
            Ok(text) => {
                let v: Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
                if v.get("ok").is_some() {
                    responses.push(v);
                }
            }
            Err(_) => std::thread::sleep(Duration::from_millis(5)),
        }
    }
    ensure!(responses.len() == malformed.len() + 2, "{} responses", responses.len());
    for (k, r) in responses[..malformed.len() + 1].iter().enumerate() {
        ensure!(r["ok"] == false, "message {k} accepted: {r}");
        let e = &r["error"];
        ensure!(
            e["kind"].is_string() && e["path"].is_string() && e["message"].is_string(),
            "message {k}: unstructured error {r}"
        );
    }
    ensure!(responses.last().unwrap()["ok"] == true, "session stopped answering");
    std::thread::sleep(Duration::from_millis(100));
    ensure!(outgoing.try_recv().is_err(), "extra responses");
    drop(handle.mailbox);
    let _ = handle.thread.join();
    Ok(format!(
        "300 random frames round trip; 3-vertex frame 69 bytes; {} malformed messages, one structured error each; no UI needed",
        malformed.len() + 1
    ))
}

const CRITERIA: [(&str, &str, fn() -> Outcome); 11] = [
    ("A1", "magnetic force correctness", a1),
    ("A2", "torque law", a2),
    ("A3", "elastic consistency", a3),
    ("A4", "cantilever oracle", a4),
    ("A5", "linearity regime", a5),
    ("A6", "benchmark motion classes", a6),
    ("A7", "stress sanity", a7),
    ("A8", "parsers", a8),
    ("A9", "determinism", a9),
    ("A10", "interactive rate", a10),
    ("A11", "protocol", a11),
];

fn main() {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    std::panic::set_hook(Box::new(|_| {}));
    let mut unexpected = Vec::new();
    let mut passed = 0;
    let mut run = 0;
    for (id, title, check) in CRITERIA {
        if !filter.is_empty() && !filter.iter().any(|f| f == id) {
            continue;
        }
        run += 1;
        let start = Instant::now();
        let outcome = match catch_unwind(AssertUnwindSafe(check)) {
            Ok(o) => o,
            Err(p) => Err(format!(
                "panicked: {}",
                p.downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default()
            )),
        };
        let secs = start.elapsed().as_secs_f64();
        let known = KNOWN_FAILURES.contains(&id);
        match &outcome {
            Ok(detail) => {
                passed += 1;
                println!("{id:<4} PASS  {title}: {detail} [{secs:.2} s]");
                if known {
                    unexpected.push(format!("{id} passes but is listed as a known failure"));
                }
            }
            Err(detail) => {
                let tag = if known { " (known)" } else { "" };
                println!("{id:<4} FAIL{tag}  {title}: {detail} [{secs:.2} s]");
                if !known {
                    unexpected.push(format!("{id} failed"));
                }
            }
        }
    }
    println!("acceptance: {passed}/{run} criteria pass");
    if !unexpected.is_empty() {
        println!("unexpected: {}", unexpected.join("; "));
        std::process::exit(1);
    }
}
