//! Model descriptors, the built-in model library and benchmark generators.
//!
//! A descriptor is a strict JSON document:
//!
//! ```json
//! {
//!   "name": "beam",
//!   "mesh_source": { "kind": "beam", "params": { "nx": 40 } },
//!   "scale": 1.0,
//!   "material": { "young_modulus": 1e6, "poisson_ratio": 0.3 },
//!   "fixed_regions": [ { "min": [0, 0, 0], "max": [0.001, 0.01, 0.01] } ],
//!   "magnet_regions": [ { "box": { "min": [0, 0, 0], "max": [1, 1, 1] }, "remanence": [0.1, 0, 0] } ],
//!   "default_field": [0, 0, 0.001],
//!   "solver": { "dt": 0.01 }
//! }
//! ```
//!
//! `mesh_source.kind` is one of `beam`, `gripper`, `butterfly` (generators,
//! `params` optional) or `files` (`params: { "msh": path, "stl": path? }`, paths
//! relative to the descriptor file). Generated models bring their own clamp and
//! magnet regions; descriptor regions are added on top. Regions are in meters
//! after `scale` is applied.

mod generators;
mod region;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub use generators::{
    generate_beam, generate_butterfly, generate_gripper, BeamParams, ButterflyParams, GeneratedModel, GripperParams,
};
pub use region::{BoxSpec, MagnetRegion, Region};

use crate::fem::MaterialParams;
use crate::magnetics::MagneticParams;
use crate::mesh_io::{embed_surface, parse_msh, parse_stl, validate_mesh, MeshError, RenderSurface, TetMesh};
use crate::solver::{ConstraintSet, Simulator, SolverConfig, SolverError};
use crate::Vec3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("schema violation at {path}: {message}")]
    SchemaViolation { path: String, message: String },
    #[error("element {element} lies in magnet regions {first} and {second}")]
    OverlappingMagnetRegions { element: usize, first: usize, second: usize },
    #[error("mesh file not found: {path}")]
    MissingMesh { path: String },
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("unknown model {0:?}")]
    UnknownModel(String),
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

fn violation(path: impl Into<String>, message: impl ToString) -> ModelError {
    ModelError::SchemaViolation {
        path: path.into(),
        message: message.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum MeshSource {
    Beam(BeamParams),
    Gripper(GripperParams),
    Butterfly(ButterflyParams),
    Files(FileSource),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileSource {
    pub msh: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stl: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MagnetRegionSpec {
    #[serde(rename = "box")]
    pub bounds: BoxSpec,
    /// T
    pub remanence: [f64; 3],
}

/// Validated model descriptor. Build one with [`load_descriptor`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelDescriptor {
    pub name: String,
    pub mesh_source: MeshSource,
    pub scale: f64,
    pub material: MaterialParams,
    pub fixed_regions: Vec<BoxSpec>,
    pub magnet_regions: Vec<MagnetRegionSpec>,
    /// T
    pub default_field: [f64; 3],
    pub solver: SolverConfig,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSource {
    kind: String,
    #[serde(default)]
    params: Option<Value>,
}

fn unit_scale() -> f64 {
    1.0
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDescriptor {
    name: String,
    mesh_source: RawSource,
    #[serde(default = "unit_scale")]
    scale: f64,
    #[serde(default)]
    material: MaterialParams,
    #[serde(default)]
    fixed_regions: Vec<BoxSpec>,
    #[serde(default)]
    magnet_regions: Vec<MagnetRegionSpec>,
    #[serde(default)]
    default_field: [f64; 3],
    #[serde(default)]
    solver: SolverConfig,
}

fn parse_at<T: DeserializeOwned>(value: Value, prefix: &str) -> Result<T, ModelError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let inner = e.path().to_string();
        let path = if inner == "." { prefix.to_string() } else { format!("{prefix}.{inner}") };
        violation(path, e.into_inner())
    })
}

/// Parses and validates a descriptor document.
pub fn load_descriptor(text: &str) -> Result<ModelDescriptor, ModelError> {
    let value: Value = serde_json::from_str(text).map_err(|e| violation(".", e))?;
    load_descriptor_value(value)
}

/// Same as [`load_descriptor`] for an already parsed JSON value.
pub fn load_descriptor_value(value: Value) -> Result<ModelDescriptor, ModelError> {
    let raw: RawDescriptor = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        violation(path, e.into_inner())
    })?;
    let params = raw.mesh_source.params.unwrap_or_else(|| Value::Object(Default::default()));
    let at = "mesh_source.params";
    let mesh_source = match raw.mesh_source.kind.as_str() {
        "beam" => MeshSource::Beam(parse_at(params, at)?),
        "gripper" => MeshSource::Gripper(parse_at(params, at)?),
        "butterfly" => MeshSource::Butterfly(parse_at(params, at)?),
        "files" => MeshSource::Files(parse_at(params, at)?),
        other => {
            return Err(violation(
                "mesh_source.kind",
                format!("unknown kind {other:?}, expected beam, gripper, butterfly or files"),
            ))
        }
    };
    let descriptor = ModelDescriptor {
        name: raw.name,
        mesh_source,
        scale: raw.scale,
        material: raw.material,
        fixed_regions: raw.fixed_regions,
        magnet_regions: raw.magnet_regions,
        default_field: raw.default_field,
        solver: raw.solver,
    };
    descriptor.validate()?;
    Ok(descriptor)
}

impl ModelDescriptor {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.name.trim().is_empty() {
            return Err(violation("name", "must not be empty"));
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(violation("scale", "must be finite and > 0"));
        }
        let generated = match &self.mesh_source {
            MeshSource::Beam(p) => p.validate(),
            MeshSource::Gripper(p) => p.validate(),
            MeshSource::Butterfly(p) => p.validate(),
            MeshSource::Files(f) => {
                if f.msh.is_empty() {
                    return Err(violation("mesh_source.params.msh", "must not be empty"));
                }
                Ok(())
            }
        };
        if let Err(ModelError::InvalidDimensions(message)) = generated {
            return Err(violation("mesh_source.params", message));
        }
        if let Err(crate::fem::FemError::InvalidMaterial { field, reason }) = self.material.validate() {
            return Err(violation(format!("material.{field}"), reason));
        }
        if let Err(SolverError::InvalidConfig { field, reason }) = self.solver.validate() {
            return Err(violation(format!("solver.{field}"), reason));
        }
        for (i, b) in self.fixed_regions.iter().enumerate() {
            if !b.has_positive_extent() {
                return Err(violation(format!("fixed_regions[{i}]"), "box must have min < max on every axis"));
            }
        }
        for (i, m) in self.magnet_regions.iter().enumerate() {
            if !m.bounds.has_positive_extent() {
                return Err(violation(
                    format!("magnet_regions[{i}].box"),
                    "box must have min < max on every axis",
                ));
            }
            if !m.remanence.iter().all(|v| v.is_finite()) {
                return Err(violation(format!("magnet_regions[{i}].remanence"), "must be finite"));
            }
        }
        if !self.default_field.iter().all(|v| v.is_finite()) {
            return Err(violation("default_field", "must be finite"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("descriptor serializes")
    }
}

/// A model ready to simulate.
#[derive(Debug, Clone)]
pub struct Model {
    pub name: String,
    pub mesh: TetMesh,
    /// Render surface embedded in `mesh`.
    pub surface: RenderSurface,
    pub material: MaterialParams,
    /// Per-element remanence (T).
    pub remanence: Vec<Vec3>,
    pub constraints: ConstraintSet,
    pub default_field: Vec3,
    pub solver: SolverConfig,
    /// Marker nodes used for tip displacement reports; empty for imported meshes.
    pub tips: Vec<usize>,
}

impl Model {
    pub fn magnetics(&self, field: Vec3) -> MagneticParams {
        MagneticParams {
            remanence: self.remanence.clone(),
            field,
        }
    }

    /// Simulator with the default field.
    pub fn simulator(&self) -> Result<Simulator, SolverError> {
        Simulator::new(
            self.mesh.clone(),
            self.material,
            self.magnetics(self.default_field),
            self.constraints.clone(),
            self.solver,
        )
    }

    pub fn magnetized_element_count(&self) -> usize {
        self.remanence.iter().filter(|b| b.norm() > 0.0).count()
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, ModelError> {
    std::fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            ModelError::MissingMesh {
                path: path.display().to_string(),
            }
        } else {
            ModelError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            }
        }
    })
}

fn resolve(base: Option<&Path>, file: &str) -> PathBuf {
    let p = Path::new(file);
    match base {
        Some(b) if p.is_relative() => b.join(p),
        _ => p.to_path_buf(),
    }
}

/// Assigns per-element remanence from region membership of element centroids.
pub fn assign_remanence(mesh: &TetMesh, regions: &[MagnetRegion]) -> Result<Vec<Vec3>, ModelError> {
    let mut remanence = vec![Vec3::zeros(); mesh.tet_count()];
    for (e, b) in remanence.iter_mut().enumerate() {
        let c = mesh.tet_centroid(e);
        let mut owner: Option<usize> = None;
        for (r, region) in regions.iter().enumerate() {
            if region.region.contains(&c) {
                if let Some(first) = owner {
                    return Err(ModelError::OverlappingMagnetRegions {
                        element: e,
                        first,
                        second: r,
                    });
                }
                owner = Some(r);
                *b = region.remanence;
            }
        }
    }
    Ok(remanence)
}

/// Nodes inside any of the regions.
pub fn fixed_nodes(mesh: &TetMesh, regions: &[Region]) -> ConstraintSet {
    let inside = mesh
        .nodes
        .iter()
        .enumerate()
        .filter(|(_, p)| regions.iter().any(|r| r.contains(p)))
        .map(|(i, _)| i);
    ConstraintSet::from_nodes(mesh.node_count(), inside)
}

/// Builds a model from a descriptor. Relative mesh paths resolve against `base_dir`.
pub fn instantiate(descriptor: &ModelDescriptor, base_dir: Option<&Path>) -> Result<Model, ModelError> {
    descriptor.validate()?;
    let scale = descriptor.scale;
    let (mesh, surface, mut magnet_regions, mut fixed_regions, tips) = match &descriptor.mesh_source {
        MeshSource::Files(files) => {
            let mesh = parse_msh(&read_file(&resolve(base_dir, &files.msh))?)?.scaled(scale);
            let surface = match &files.stl {
                Some(stl) => {
                    let surface = parse_stl(&read_file(&resolve(base_dir, stl))?)?.scaled(scale);
                    embed_surface(&surface, &mesh)?
                }
                None => mesh.boundary_surface(),
            };
            (mesh, surface, Vec::new(), Vec::new(), Vec::new())
        }
        source => {
            let generated = match source {
                MeshSource::Beam(p) => generate_beam(p)?,
                MeshSource::Gripper(p) => generate_gripper(p)?,
                MeshSource::Butterfly(p) => generate_butterfly(p)?,
                MeshSource::Files(_) => unreachable!(),
            };
            let mesh = if scale == 1.0 { generated.mesh } else { generated.mesh.scaled(scale) };
            let magnets = generated
                .magnet_regions
                .into_iter()
                .map(|m| MagnetRegion {
                    region: m.region.scaled(scale),
                    remanence: m.remanence,
                })
                .collect();
            let fixed = generated.fixed_regions.iter().map(|r| r.scaled(scale)).collect();
            let surface = mesh.boundary_surface();
            (mesh, surface, magnets, fixed, generated.tips)
        }
    };
    let report = validate_mesh(&mesh);
    if !report.is_valid() {
        return Err(ModelError::InvalidMesh(format!(
            "{} violation(s), first: {:?}",
            report.violations.len(),
            report.violations[0]
        )));
    }
    magnet_regions.extend(descriptor.magnet_regions.iter().map(|m| MagnetRegion {
        region: m.bounds.region(),
        remanence: Vec3::from(m.remanence),
    }));
    fixed_regions.extend(descriptor.fixed_regions.iter().map(BoxSpec::region));
    let remanence = assign_remanence(&mesh, &magnet_regions)?;
    let constraints = fixed_nodes(&mesh, &fixed_regions);
    Ok(Model {
        name: descriptor.name.clone(),
        mesh,
        surface,
        material: descriptor.material,
        remanence,
        constraints,
        default_field: Vec3::from(descriptor.default_field),
        solver: descriptor.solver,
        tips,
    })
}

const BUILTIN: [(&str, &str); 4] = [
    ("beam", include_str!("../../../../models/beam.json")),
    ("gripper3", include_str!("../../../../models/gripper3.json")),
    ("gripper4", include_str!("../../../../models/gripper4.json")),
    ("butterfly", include_str!("../../../../models/butterfly.json")),
];

/// Built-in descriptor text by name.
pub fn builtin_descriptor(name: &str) -> Option<&'static str> {
    BUILTIN.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

#[derive(Debug, Clone)]
struct LibraryEntry {
    descriptor: ModelDescriptor,
    base_dir: Option<PathBuf>,
}

/// Named descriptors available to the service and the CLI.
#[derive(Debug, Clone, Default)]
pub struct ModelLibrary {
    entries: BTreeMap<String, LibraryEntry>,
}

impl ModelLibrary {
    /// The four shipped benchmark models.
    pub fn builtin() -> Self {
        let mut lib = Self::default();
        for (_, text) in BUILTIN {
            let descriptor = load_descriptor(text).expect("built-in descriptor is valid");
            lib.insert(descriptor, None);
        }
        lib
    }

    /// Adds every `*.json` descriptor in `dir`, replacing entries with the same name.
    pub fn load_dir(&mut self, dir: &Path) -> Result<usize, ModelError> {
        let io = |e: std::io::Error| ModelError::Io {
            path: dir.display().to_string(),
            message: e.to_string(),
        };
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        for path in &paths {
            let descriptor = load_descriptor_file(path)?;
            self.insert(descriptor, Some(dir.to_path_buf()));
        }
        Ok(paths.len())
    }

    pub fn insert(&mut self, descriptor: ModelDescriptor, base_dir: Option<PathBuf>) {
        self.entries
            .insert(descriptor.name.clone(), LibraryEntry { descriptor, base_dir });
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.keys().cloned().collect()
    }

    pub fn descriptor(&self, name: &str) -> Option<&ModelDescriptor> {
        self.entries.get(name).map(|e| &e.descriptor)
    }

    pub fn instantiate(&self, name: &str) -> Result<Model, ModelError> {
        let entry = self
            .entries
            .get(name)
            .ok_or_else(|| ModelError::UnknownModel(name.to_string()))?;
        instantiate(&entry.descriptor, entry.base_dir.as_deref())
    }
}

/// Reads and validates a descriptor file.
pub fn load_descriptor_file(path: &Path) -> Result<ModelDescriptor, ModelError> {
    let text = std::fs::read_to_string(path).map_err(|e| ModelError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    load_descriptor(&text)
}
