//! Text control messages.
//!
//! Requests are JSON objects tagged by `cmd`. Every request gets exactly one
//! response `{"ok": true, "cmd": ..., ...}` or
//! `{"ok": false, "cmd": ..., "error": {"kind", "path", "message"}}`.
//! Asynchronous notifications carry an `event` tag instead of `ok`.

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use magsim_core::fem::FemError;
use magsim_core::models::ModelError;
use magsim_core::solver::SolverError;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ControlMessage {
    ListModels,
    LoadModel {
        #[serde(default)]
        name: Option<String>,
        #[serde(default)]
        descriptor: Option<Value>,
    },
    /// Partial update: omitted fields keep their current value.
    SetMaterial { material: Map<String, Value> },
    SetField { direction: [f64; 3], magnitude: f64 },
    /// Partial update of the solver settings.
    SetSolver { solver: Map<String, Value> },
    Start,
    Pause,
    Reset,
    SolveQuasistatic,
    /// Base64 encoded Gmsh mesh and optional STL surface. `model` may carry
    /// descriptor fields (`scale`, `material`, `fixed_regions`,
    /// `magnet_regions`, `default_field`, `solver`).
    UploadMesh {
        name: String,
        msh: String,
        #[serde(default)]
        stl: Option<String>,
        #[serde(default)]
        model: Option<Map<String, Value>>,
    },
}

impl ControlMessage {
    pub fn name(&self) -> &'static str {
        match self {
            Self::ListModels => "list_models",
            Self::LoadModel { .. } => "load_model",
            Self::SetMaterial { .. } => "set_material",
            Self::SetField { .. } => "set_field",
            Self::SetSolver { .. } => "set_solver",
            Self::Start => "start",
            Self::Pause => "pause",
            Self::Reset => "reset",
            Self::SolveQuasistatic => "solve_quasistatic",
            Self::UploadMesh { .. } => "upload_mesh",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErrorKind {
    MalformedMessage,
    UnknownModel,
    BadParameter,
    BusySolving,
    NoModelLoaded,
    InvalidMesh,
    StepFailed,
    NotConverged,
    Cancelled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Error)]
#[error("{kind:?} at {path}: {message}")]
pub struct ServiceError {
    pub kind: ErrorKind,
    pub path: String,
    pub message: String,
}

impl ServiceError {
    pub fn new(kind: ErrorKind, path: impl Into<String>, message: impl ToString) -> Self {
        Self {
            kind,
            path: path.into(),
            message: message.to_string(),
        }
    }

    pub fn bad_parameter(path: impl Into<String>, message: impl ToString) -> Self {
        Self::new(ErrorKind::BadParameter, path, message)
    }

    pub fn busy() -> Self {
        Self::new(ErrorKind::BusySolving, "cmd", "a quasi-static solve is in progress")
    }

    pub fn no_model() -> Self {
        Self::new(ErrorKind::NoModelLoaded, "cmd", "load a model first")
    }

    /// Maps a model error; `prefix` is prepended to schema paths.
    pub fn from_model(err: ModelError, prefix: &str) -> Self {
        let join = |p: &str| {
            if prefix.is_empty() {
                p.to_string()
            } else if p == "." || p.is_empty() {
                prefix.to_string()
            } else {
                format!("{prefix}.{p}")
            }
        };
        match err {
            ModelError::UnknownModel(name) => Self::new(ErrorKind::UnknownModel, "name", format!("unknown model {name:?}")),
            ModelError::SchemaViolation { path, message } => Self::bad_parameter(join(&path), message),
            ModelError::Mesh(e) => Self::new(ErrorKind::InvalidMesh, join("mesh_source"), e),
            ModelError::InvalidMesh(m) | ModelError::InvalidDimensions(m) => {
                Self::new(ErrorKind::InvalidMesh, join("mesh_source"), m)
            }
            other => Self::new(ErrorKind::InvalidMesh, join("mesh_source"), other),
        }
    }

    pub fn from_solver(err: SolverError, prefix: &str) -> Self {
        match err {
            SolverError::InvalidConfig { field, reason } => Self::bad_parameter(format!("{prefix}.{field}"), reason),
            SolverError::Fem(FemError::InvalidMaterial { field, reason }) => {
                Self::bad_parameter(format!("material.{field}"), reason)
            }
            SolverError::NotConverged { .. } => Self::new(ErrorKind::NotConverged, "", err),
            SolverError::Cancelled => Self::new(ErrorKind::Cancelled, "", err),
            other => Self::new(ErrorKind::StepFailed, "", other),
        }
    }
}

const UNIT_COMMANDS: [&str; 5] = ["list_models", "start", "pause", "reset", "solve_quasistatic"];

/// Parses one text message. Errors carry the JSON path of the offending field.
pub fn parse_control(text: &str) -> Result<ControlMessage, ServiceError> {
    let value: Value = serde_json::from_str(text)
        .map_err(|e| ServiceError::new(ErrorKind::MalformedMessage, ".", format!("invalid JSON: {e}")))?;
    let Some(object) = value.as_object() else {
        return Err(ServiceError::new(ErrorKind::MalformedMessage, ".", "expected a JSON object"));
    };
    match object.get("cmd") {
        Some(Value::String(_)) => {}
        Some(_) => return Err(ServiceError::new(ErrorKind::MalformedMessage, "cmd", "must be a string")),
        None => return Err(ServiceError::new(ErrorKind::MalformedMessage, "cmd", "missing field")),
    }
    // Rewrite `{"cmd": c, ...rest}` into the externally tagged `{c: rest}` so
    // that error paths point at the offending field.
    let mut rest = object.clone();
    let cmd = match rest.remove("cmd") {
        Some(Value::String(c)) => c,
        _ => unreachable!("checked above"),
    };
    let wire = if rest.is_empty() && UNIT_COMMANDS.contains(&cmd.as_str()) {
        Value::String(cmd.clone())
    } else {
        let mut tagged = Map::new();
        tagged.insert(cmd.clone(), Value::Object(rest));
        Value::Object(tagged)
    };
    serde_path_to_error::deserialize(wire).map_err(|e| {
        let path = e.path().to_string();
        let path = match path.strip_prefix(&format!("{cmd}.")) {
            Some(inner) => inner.to_string(),
            None => "cmd".to_string(),
        };
        ServiceError::new(ErrorKind::MalformedMessage, path, e.into_inner())
    })
}

/// Name of the command in `text`, if it is readable.
pub fn command_name(text: &str) -> Option<String> {
    let value: Value = serde_json::from_str(text).ok()?;
    value.get("cmd")?.as_str().map(str::to_string)
}

pub fn ok_response(cmd: &str, body: Value) -> Value {
    let mut out = Map::new();
    out.insert("ok".into(), Value::Bool(true));
    out.insert("cmd".into(), Value::String(cmd.into()));
    if let Value::Object(fields) = body {
        out.extend(fields);
    }
    Value::Object(out)
}

pub fn error_response(cmd: Option<&str>, err: &ServiceError) -> Value {
    json!({
        "ok": false,
        "cmd": cmd,
        "error": err,
    })
}

pub fn event(name: &str, body: Value) -> Value {
    let mut out = Map::new();
    out.insert("event".into(), Value::String(name.into()));
    if let Value::Object(fields) = body {
        out.extend(fields);
    }
    Value::Object(out)
}
