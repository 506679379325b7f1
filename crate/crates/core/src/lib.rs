//! Simulation engine for hard-magnetic soft robots.
//!
//! The crate is organised bottom-up:
//!
//! * [`mesh_io`] reads STL render surfaces and Gmsh tetrahedral meshes, validates
//!   them and embeds a render surface in the simulation mesh.
//! * [`fem`] holds the corotational linear-elastic tetrahedral model.
//! * [`magnetics`] computes Zeeman energy and forces for a remanent magnetization
//!   that convects with the material under a uniform external field.
//! * [`solver`] advances the coupled system in time (implicit Euler) or drives it
//!   to equilibrium (quasi-static Newton with field ramping).
//! * [`stress`] recovers per-element stress and maps von Mises values to colors.
//! * [`models`] turns declarative model descriptors into ready-to-run models and
//!   generates the benchmark geometries.
//! * [`vtk`] writes legacy ASCII VTK output.

pub mod fem;
pub mod magnetics;
pub mod mesh_io;
pub mod models;
pub mod solver;
pub mod sparse;
pub mod stress;
pub mod vtk;

pub use nalgebra::{Matrix3, Vector3};

/// Convenience alias for a 3-vector in SI units.
pub type Vec3 = Vector3<f64>;
/// Convenience alias for a 3x3 matrix.
pub type Mat3 = Matrix3<f64>;
