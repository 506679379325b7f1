mod common;

use std::f64::consts::PI;

use common::*;
use magsim_core::fem::MaterialParams;
use magsim_core::mesh_io::{validate_mesh, TetMesh};
use magsim_core::models::{
    generate_beam, generate_butterfly, generate_gripper, instantiate, load_descriptor, BeamParams, BoxSpec,
    ButterflyParams, GripperParams, MagnetRegionSpec, MeshSource, ModelDescriptor, ModelLibrary,
};
use magsim_core::solver::{Preconditioner, SolverConfig};
use magsim_core::{Mat3, Vec3};
use proptest::prelude::*;

fn surface_area(mesh: &TetMesh) -> f64 {
    mesh.surface_tris
        .iter()
        .map(|t| {
            let [a, b, c] = t.map(|i| mesh.nodes[i]);
            (b - a).cross(&(c - a)).norm() / 2.0
        })
        .sum()
}

fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Every node of `mesh` mapped by `map` lands on some node of `mesh`.
fn maps_onto_itself(mesh: &TetMesh, map: impl Fn(&Vec3) -> Vec3, tol: f64) -> bool {
    mesh.nodes.iter().all(|p| {
        let q = map(p);
        mesh.nodes.iter().any(|r| (r - q).norm() <= tol)
    })
}

fn assert_valid(mesh: &TetMesh) -> Result<(), TestCaseError> {
    let report = validate_mesh(mesh);
    prop_assert!(report.is_valid(), "{:?}", report.violations);
    prop_assert!(report.duplicate_nodes.is_empty());
    prop_assert!(report.min_volume > 0.0);
    Ok(())
}

fn beam_params() -> impl Strategy<Value = BeamParams> {
    (0.02f64..0.2, 0.002f64..0.02, 0.002f64..0.02, 1usize..12, 1usize..4, 1usize..4, 0.0f64..0.5).prop_map(
        |(length, width, height, nx, ny, nz, remanence)| BeamParams {
            length,
            width,
            height,
            nx,
            ny,
            nz,
            remanence,
        },
    )
}

fn gripper_params() -> impl Strategy<Value = GripperParams> {
    (
        prop_oneof![Just(3usize), Just(4usize)],
        0.01f64..0.05,
        0.2f64..0.8,
        0.001f64..0.004,
        0.008f64..0.02,
        1usize..3,
        0.003f64..0.006,
        0.01f64..0.3,
    )
        .prop_map(|(fingers, finger_length, width_fraction, finger_thickness, palm_radius, subdivisions, element_size, remanence)| {
            let side = 2.0 * palm_radius * (PI / fingers as f64).sin();
            GripperParams {
                fingers,
                finger_length,
                finger_width: width_fraction * side,
                finger_thickness,
                palm_radius,
                subdivisions,
                element_size,
                remanence,
            }
        })
}

fn butterfly_params() -> impl Strategy<Value = ButterflyParams> {
    (0.01f64..0.04, 0.008f64..0.03, 0.0005f64..0.002, 0.002f64..0.01, 1usize..3, 0.002f64..0.005, 0.01f64..0.3)
        .prop_map(|(wing_span, wing_chord, thickness, body_width, subdivisions, element_size, remanence)| {
            ButterflyParams {
                wing_span,
                wing_chord,
                thickness,
                body_width,
                subdivisions,
                element_size,
                remanence,
            }
        })
}

fn box_spec() -> impl Strategy<Value = BoxSpec> {
    (vec3(0.1), (0.001f64..0.1, 0.001f64..0.1, 0.001f64..0.1)).prop_map(|(lo, (a, b, c))| BoxSpec {
        min: [lo.x, lo.y, lo.z],
        max: [lo.x + a, lo.y + b, lo.z + c],
    })
}

fn descriptor() -> impl Strategy<Value = ModelDescriptor> {
    let source = prop_oneof![
        beam_params().prop_map(MeshSource::Beam),
        gripper_params().prop_map(MeshSource::Gripper),
        butterfly_params().prop_map(MeshSource::Butterfly),
    ];
    let material = (1e4f64..1e8, -0.9f64..0.49, 100.0f64..5000.0, 0.0f64..2.0, 0.0f64..0.5).prop_map(
        |(young_modulus, poisson_ratio, density, rayleigh_mass, rayleigh_stiffness)| MaterialParams {
            young_modulus,
            poisson_ratio,
            density,
            rayleigh_mass,
            rayleigh_stiffness,
        },
    );
    let solver = (1e-4f64..0.05, 1usize..500, 1e-10f64..0.1, 1usize..100, 1usize..30, vec3(10.0), 0usize..3).prop_map(
        |(dt, cg_max_iters, newton_tolerance, newton_max_iters, ramp_steps, gravity, p)| SolverConfig {
            dt,
            cg_max_iters,
            cg_tolerance: newton_tolerance,
            newton_max_iters,
            newton_tolerance,
            ramp_steps,
            gravity,
            preconditioner: [Preconditioner::None, Preconditioner::Jacobi, Preconditioner::Cholesky][p],
        },
    );
    let magnets = prop::collection::vec(
        (box_spec(), vec3(0.5)).prop_map(|(bounds, r)| MagnetRegionSpec {
            bounds,
            remanence: [r.x, r.y, r.z],
        }),
        0..3,
    );
    (
        "[a-z][a-z0-9_ ]{0,12}",
        source,
        0.01f64..100.0,
        material,
        prop::collection::vec(box_spec(), 0..3),
        magnets,
        vec3(0.1),
        solver,
    )
        .prop_map(|(name, mesh_source, scale, material, fixed_regions, magnet_regions, field, solver)| {
            ModelDescriptor {
                name,
                mesh_source,
                scale,
                material,
                fixed_regions,
                magnet_regions,
                default_field: [field.x, field.y, field.z],
                solver,
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn beam_is_valid_and_measured(p in beam_params()) {
        let g = generate_beam(&p).unwrap();
        assert_valid(&g.mesh)?;
        let volume = p.length * p.width * p.height;
        let area = 2.0 * (p.length * p.width + p.length * p.height + p.width * p.height);
        prop_assert!(relative_gap(g.mesh.total_volume(), volume) < 1e-9);
        prop_assert!(relative_gap(surface_area(&g.mesh), area) < 1e-9);
        prop_assert_eq!(g.mesh.node_count(), (p.nx + 1) * (p.ny + 1) * (p.nz + 1));
        prop_assert_eq!(g.mesh.tet_count(), 6 * p.nx * p.ny * p.nz);
    }

    #[test]
    fn gripper_is_valid_and_measured(p in gripper_params()) {
        let g = generate_gripper(&p).unwrap();
        assert_valid(&g.mesh)?;
        let n = p.fingers as f64;
        let r = p.palm_radius;
        let (fl, fw, t) = (p.finger_length, p.finger_width, p.finger_thickness);
        let planar = 0.5 * n * r * r * (2.0 * PI / n).sin() + n * fl * fw;
        let perimeter = n * 2.0 * r * (PI / n).sin() - n * fw + n * (2.0 * fl + fw);
        prop_assert!(relative_gap(g.mesh.total_volume(), planar * t) < 1e-9);
        prop_assert!(relative_gap(surface_area(&g.mesh), 2.0 * planar + perimeter * t) < 1e-9);
        prop_assert_eq!(g.tips.len(), p.fingers);
    }

    #[test]
    fn gripper_has_rotational_symmetry(p in gripper_params()) {
        let g = generate_gripper(&p).unwrap();
        let angle = 2.0 * PI / p.fingers as f64;
        let q = Mat3::new(angle.cos(), -angle.sin(), 0.0, angle.sin(), angle.cos(), 0.0, 0.0, 0.0, 1.0);
        let tol = 1e-9 * (p.palm_radius + p.finger_length);
        prop_assert!(maps_onto_itself(&g.mesh, |x| q * x, tol));
        for k in 0..p.fingers {
            let next = g.tips[(k + 1) % p.fingers];
            prop_assert!((q * g.mesh.nodes[g.tips[k]] - g.mesh.nodes[next]).norm() <= tol);
        }
    }

    #[test]
    fn butterfly_is_valid_and_mirrored(p in butterfly_params()) {
        let g = generate_butterfly(&p).unwrap();
        assert_valid(&g.mesh)?;
        let volume = (p.body_width + 2.0 * p.wing_span) * p.wing_chord * p.thickness;
        prop_assert!(relative_gap(g.mesh.total_volume(), volume) < 1e-9);
        let tol = 1e-9 * (p.body_width + p.wing_span);
        prop_assert!(maps_onto_itself(&g.mesh, |x| Vec3::new(-x.x, x.y, x.z), tol));
        let [right, left] = [g.tips[0], g.tips[1]].map(|i| g.mesh.nodes[i]);
        prop_assert!((right - Vec3::new(-left.x, left.y, left.z)).norm() <= tol);
    }

    #[test]
    fn generators_are_deterministic(b in beam_params(), g in gripper_params(), f in butterfly_params()) {
        prop_assert_eq!(generate_beam(&b).unwrap(), generate_beam(&b).unwrap());
        prop_assert_eq!(generate_gripper(&g).unwrap(), generate_gripper(&g).unwrap());
        prop_assert_eq!(generate_butterfly(&f).unwrap(), generate_butterfly(&f).unwrap());
    }

    #[test]
    fn descriptor_round_trip(d in descriptor()) {
        let back = load_descriptor(&d.to_json()).unwrap();
        prop_assert_eq!(back, d);
    }
}

#[test]
fn builtin_models_instantiate() {
    let lib = ModelLibrary::builtin();
    assert_eq!(lib.names(), ["beam", "butterfly", "gripper3", "gripper4"]);
    for name in lib.names() {
        let model = lib.instantiate(&name).unwrap();
        assert!(validate_mesh(&model.mesh).is_valid(), "{name}");
        assert!(model.constraints.fixed_count() > 0, "{name}");
        assert!(model.magnetized_element_count() > 0, "{name}");
        assert!(!model.tips.is_empty(), "{name}");
        let again = instantiate(lib.descriptor(&name).unwrap(), None).unwrap();
        assert_eq!(model.mesh, again.mesh, "{name}");
        assert_eq!(model.remanence, again.remanence, "{name}");
    }
}
