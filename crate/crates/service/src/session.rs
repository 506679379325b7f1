//! Synchronous session state machine. The worker thread in [`crate::worker`]
//! owns one `Session` and is its only writer.

use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use base64::Engine;
use serde::Serialize;
use serde_json::{json, Map, Value};

use magsim_core::fem::{self, MaterialParams, SimState};
use magsim_core::models::{instantiate, load_descriptor_value, Model, ModelLibrary};
use magsim_core::solver::{Progress, Simulator, SolverConfig};
use magsim_core::Vec3;

use crate::frame::{build_frame, encode_frame, Frame};
use crate::protocol::{ok_response, ControlMessage, ErrorKind, ServiceError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Idle,
    Running,
    Paused,
    QuasistaticBusy,
}

struct Loaded {
    model: Model,
    sim: Simulator,
    state: SimState,
}

pub struct Session {
    id: String,
    library: Arc<RwLock<ModelLibrary>>,
    upload_dir: PathBuf,
    loaded: Option<Loaded>,
    mode: Mode,
    field: Vec3,
    frame_counter: u32,
    dirty: bool,
}

fn merge<T: Serialize + serde::de::DeserializeOwned>(
    current: &T,
    patch: &Map<String, Value>,
    prefix: &str,
) -> Result<T, ServiceError> {
    let mut value = serde_json::to_value(current).expect("parameters serialize");
    let object = value.as_object_mut().expect("parameters are an object");
    for (k, v) in patch {
        object.insert(k.clone(), v.clone());
    }
    serde_path_to_error::deserialize(value).map_err(|e| {
        let inner = e.path().to_string();
        let path = if inner == "." { prefix.to_string() } else { format!("{prefix}.{inner}") };
        ServiceError::bad_parameter(path, e.into_inner())
    })
}

fn valid_upload_name(name: &str) -> bool {
    !name.is_empty()
        && name.len() <= 64
        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

impl Session {
    pub fn new(id: impl Into<String>, library: Arc<RwLock<ModelLibrary>>, upload_dir: PathBuf) -> Self {
        Self {
            id: id.into(),
            library,
            upload_dir,
            loaded: None,
            mode: Mode::Idle,
            field: Vec3::zeros(),
            frame_counter: 0,
            dirty: false,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn state(&self) -> Option<&SimState> {
        self.loaded.as_ref().map(|l| &l.state)
    }

    pub fn model(&self) -> Option<&Model> {
        self.loaded.as_ref().map(|l| &l.model)
    }

    pub fn simulator(&self) -> Option<&Simulator> {
        self.loaded.as_ref().map(|l| &l.sim)
    }

    pub fn field(&self) -> Vec3 {
        self.field
    }

    /// True when the state changed since the last emitted frame.
    pub fn is_dirty(&self) -> bool {
        self.dirty
    }

    /// Frame interval (s): the time step, but no faster than 60 frames/s.
    pub fn frame_interval(&self) -> f64 {
        let dt = self.loaded.as_ref().map_or(1.0 / 60.0, |l| l.sim.config().dt);
        dt.max(1.0 / 60.0)
    }

    /// Implicit steps per frame so that simulated time keeps pace with wall time.
    pub fn steps_per_frame(&self) -> usize {
        let dt = self.loaded.as_ref().map_or(1.0 / 60.0, |l| l.sim.config().dt);
        ((self.frame_interval() / dt).round() as usize).max(1)
    }

    pub fn list_models(library: &RwLock<ModelLibrary>) -> Value {
        let names = library.read().expect("library lock").names();
        json!({ "models": names })
    }

    /// Applies one control message. `solve_quasistatic` runs to completion here;
    /// the worker uses [`Session::solve_quasistatic`] directly to stay responsive.
    pub fn handle(&mut self, message: ControlMessage) -> Result<Value, ServiceError> {
        let cmd = message.name();
        let body = match message {
            ControlMessage::ListModels => {
                let mut body = Self::list_models(&self.library);
                body["current"] = json!(self.loaded.as_ref().map(|l| l.model.name.clone()));
                body["mode"] = json!(self.mode);
                body
            }
            ControlMessage::LoadModel { name, descriptor } => self.load_model(name, descriptor)?,
            ControlMessage::SetMaterial { material } => self.set_material(&material)?,
            ControlMessage::SetField { direction, magnitude } => self.set_field(direction, magnitude)?,
            ControlMessage::SetSolver { solver } => self.set_solver(&solver)?,
            ControlMessage::Start => {
                self.require_model()?;
                self.mode = Mode::Running;
                json!({ "mode": self.mode })
            }
            ControlMessage::Pause => {
                if self.mode == Mode::Running {
                    self.mode = Mode::Paused;
                }
                json!({ "mode": self.mode })
            }
            ControlMessage::Reset => {
                let loaded = self.loaded.as_mut().ok_or_else(ServiceError::no_model)?;
                loaded.state = loaded.sim.rest_state();
                loaded.sim.reset_caches();
                self.mode = Mode::Idle;
                self.dirty = true;
                json!({ "mode": self.mode })
            }
            ControlMessage::SolveQuasistatic => self.solve_quasistatic(&mut |_| true)?,
            ControlMessage::UploadMesh { name, msh, stl, model } => self.upload_mesh(&name, &msh, stl.as_deref(), model)?,
        };
        Ok(ok_response(cmd, body))
    }

    fn require_model(&self) -> Result<(), ServiceError> {
        if self.loaded.is_some() {
            Ok(())
        } else {
            Err(ServiceError::no_model())
        }
    }

    fn load_model(&mut self, name: Option<String>, descriptor: Option<Value>) -> Result<Value, ServiceError> {
        let model = match (name, descriptor) {
            (Some(name), None) => self
                .library
                .read()
                .expect("library lock")
                .instantiate(&name)
                .map_err(|e| ServiceError::from_model(e, "descriptor"))?,
            (None, Some(value)) => {
                let descriptor = load_descriptor_value(value).map_err(|e| ServiceError::from_model(e, "descriptor"))?;
                instantiate(&descriptor, Some(&self.upload_dir)).map_err(|e| ServiceError::from_model(e, "descriptor"))?
            }
            _ => {
                return Err(ServiceError::new(
                    ErrorKind::MalformedMessage,
                    "name",
                    "give exactly one of name or descriptor",
                ))
            }
        };
        let sim = model
            .simulator()
            .map_err(|e| ServiceError::from_solver(e, "descriptor.solver"))?;
        let state = sim.rest_state();
        self.field = model.default_field;
        let body = json!({
            "name": model.name,
            "nodes": model.mesh.node_count(),
            "tets": model.mesh.tet_count(),
            "surface_vertices": model.surface.vertices.len(),
            "triangles": model.surface.triangles,
            "material": model.material,
            "field": [self.field.x, self.field.y, self.field.z],
            "solver": sim.config(),
            "mode": Mode::Idle,
        });
        self.loaded = Some(Loaded { model, sim, state });
        self.mode = Mode::Idle;
        self.dirty = true;
        Ok(body)
    }

    fn set_material(&mut self, patch: &Map<String, Value>) -> Result<Value, ServiceError> {
        let loaded = self.loaded.as_mut().ok_or_else(ServiceError::no_model)?;
        let material: MaterialParams = merge(&loaded.model.material, patch, "material")?;
        if let Err(fem::FemError::InvalidMaterial { field, reason }) = material.validate() {
            return Err(ServiceError::bad_parameter(format!("material.{field}"), reason));
        }
        loaded
            .sim
            .set_material(material)
            .map_err(|e| ServiceError::from_solver(e, "material"))?;
        loaded.model.material = material;
        Ok(json!({ "material": material }))
    }

    fn set_field(&mut self, direction: [f64; 3], magnitude: f64) -> Result<Value, ServiceError> {
        let loaded = self.loaded.as_mut().ok_or_else(ServiceError::no_model)?;
        if !(magnitude.is_finite() && magnitude >= 0.0) {
            return Err(ServiceError::bad_parameter("magnitude", "must be finite and >= 0 (T)"));
        }
        let d = Vec3::from(direction);
        if !d.iter().all(|v| v.is_finite()) {
            return Err(ServiceError::bad_parameter("direction", "must be finite"));
        }
        let norm = d.norm();
        if magnitude > 0.0 && norm == 0.0 {
            return Err(ServiceError::bad_parameter("direction", "must be nonzero"));
        }
        let field = if magnitude == 0.0 { Vec3::zeros() } else { d * (magnitude / norm) };
        loaded.sim.set_field(field);
        self.field = field;
        Ok(json!({ "field": [field.x, field.y, field.z] }))
    }

    fn set_solver(&mut self, patch: &Map<String, Value>) -> Result<Value, ServiceError> {
        let loaded = self.loaded.as_mut().ok_or_else(ServiceError::no_model)?;
        let config: SolverConfig = merge(loaded.sim.config(), patch, "solver")?;
        loaded
            .sim
            .set_config(config)
            .map_err(|e| ServiceError::from_solver(e, "solver"))?;
        loaded.model.solver = config;
        Ok(json!({ "solver": config }))
    }

    /// Runs a quasi-static solve from the current state. `progress` returning
    /// `false` cancels and restores the state. Ends in `paused`.
    pub fn solve_quasistatic(&mut self, progress: &mut dyn FnMut(&Progress) -> bool) -> Result<Value, ServiceError> {
        let loaded = self.loaded.as_mut().ok_or_else(ServiceError::no_model)?;
        self.mode = Mode::QuasistaticBusy;
        let result = loaded.sim.quasi_static(&mut loaded.state, progress);
        self.mode = Mode::Paused;
        let report = result.map_err(|e| ServiceError::from_solver(e, "solver"))?;
        self.dirty = true;
        Ok(json!({
            "converged": report.converged,
            "iterations": report.total_iterations(),
            "residual": report.final_residual,
            "limit": report.limit,
            "stages": report.stages.len(),
            "mode": self.mode,
        }))
    }

    fn upload_mesh(
        &mut self,
        name: &str,
        msh: &str,
        stl: Option<&str>,
        extra: Option<Map<String, Value>>,
    ) -> Result<Value, ServiceError> {
        if !valid_upload_name(name) {
            return Err(ServiceError::bad_parameter("name", "use 1-64 characters from [A-Za-z0-9_-]"));
        }
        let b64 = base64::engine::general_purpose::STANDARD;
        let msh_bytes = b64
            .decode(msh)
            .map_err(|e| ServiceError::bad_parameter("msh", format!("invalid base64: {e}")))?;
        let stl_bytes = stl
            .map(|s| b64.decode(s))
            .transpose()
            .map_err(|e| ServiceError::bad_parameter("stl", format!("invalid base64: {e}")))?;
        let io = |e: std::io::Error| ServiceError::new(ErrorKind::InvalidMesh, "msh", format!("cannot store upload: {e}"));
        std::fs::create_dir_all(&self.upload_dir).map_err(io)?;
        let msh_file = format!("{name}.msh");
        std::fs::write(self.upload_dir.join(&msh_file), &msh_bytes).map_err(io)?;
        let mut params = json!({ "msh": msh_file });
        if let Some(bytes) = &stl_bytes {
            let stl_file = format!("{name}.stl");
            std::fs::write(self.upload_dir.join(&stl_file), bytes).map_err(io)?;
            params["stl"] = json!(stl_file);
        }
        let mut descriptor = extra.unwrap_or_default();
        for reserved in ["name", "mesh_source"] {
            if descriptor.contains_key(reserved) {
                return Err(ServiceError::bad_parameter(format!("model.{reserved}"), "set by the upload"));
            }
        }
        descriptor.insert("name".into(), json!(name));
        descriptor.insert("mesh_source".into(), json!({ "kind": "files", "params": params }));
        let descriptor =
            load_descriptor_value(Value::Object(descriptor)).map_err(|e| ServiceError::from_model(e, "model"))?;
        let model = instantiate(&descriptor, Some(&self.upload_dir)).map_err(|e| match e {
            magsim_core::models::ModelError::Mesh(m) => ServiceError::new(ErrorKind::InvalidMesh, "msh", m),
            other => ServiceError::from_model(other, "model"),
        })?;
        self.library
            .write()
            .expect("library lock")
            .insert(descriptor, Some(self.upload_dir.clone()));
        Ok(json!({
            "name": name,
            "nodes": model.mesh.node_count(),
            "tets": model.mesh.tet_count(),
            "surface_vertices": model.surface.vertices.len(),
        }))
    }

    /// Advances one implicit step. Only valid while running; a failure pauses
    /// the session.
    pub fn step(&mut self) -> Result<(), ServiceError> {
        if self.mode != Mode::Running {
            return Ok(());
        }
        let loaded = self.loaded.as_mut().ok_or_else(ServiceError::no_model)?;
        match loaded.sim.step(&mut loaded.state) {
            Ok(_) => {
                self.dirty = true;
                Ok(())
            }
            Err(e) => {
                self.mode = Mode::Paused;
                Err(ServiceError::from_solver(e, "solver"))
            }
        }
    }

    /// Frame of the current state; increments the frame counter.
    pub fn frame(&mut self) -> Option<Frame> {
        let loaded = self.loaded.as_ref()?;
        let eval = fem::elastic_forces(&loaded.state.positions, loaded.sim.rest(), Some(loaded.sim.rotations())).ok()?;
        let frame = build_frame(
            self.frame_counter,
            &loaded.model,
            &loaded.state,
            loaded.sim.rest(),
            &eval.rotations,
        );
        self.frame_counter = self.frame_counter.wrapping_add(1);
        self.dirty = false;
        Some(frame)
    }

    pub fn encoded_frame(&mut self) -> Option<Vec<u8>> {
        self.frame().map(|f| encode_frame(&f))
    }
}
