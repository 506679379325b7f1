//! Headless commands behind the `magsim` binary.
//!
//! Exit codes: 0 success, 1 input or setup error, 2 solver did not converge
//! (outputs are still written).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use magsim_core::fem::SimState;
use magsim_core::models::{instantiate, load_descriptor_file, Model, ModelError, ModelLibrary};
use magsim_core::solver::{Simulator, SolverError};
use magsim_core::stress::{element_stress, StressField};
use magsim_core::vtk::write_vtk;
use magsim_core::Vec3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{context}: {source}")]
    Model { context: String, source: ModelError },
    #[error("{0}")]
    Solver(#[from] SolverError),
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Solver(SolverError::NotConverged { .. }) => 2,
            _ => 1,
        }
    }
}

fn input(message: impl Into<String>) -> CliError {
    CliError::Input(message.into())
}

/// Parses `"x,y,z"`.
pub fn parse_vec3(text: &str) -> Result<Vec3, String> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma separated numbers, got {text:?}"));
    }
    let mut v = [0.0; 3];
    for (slot, part) in v.iter_mut().zip(&parts) {
        *slot = part.parse::<f64>().map_err(|e| format!("{part:?}: {e}"))?;
        if !slot.is_finite() {
            return Err(format!("{part:?} is not finite"));
        }
    }
    Ok(Vec3::from(v))
}

/// Parses a comma separated list of magnitudes.
pub fn parse_list(text: &str) -> Result<Vec<f64>, String> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            Ok(_) => Err(format!("{s:?} is not finite")),
            Err(e) => Err(format!("{s:?}: {e}")),
        })
        .collect()
}

/// Built-in models plus the descriptors in `models_dir`.
pub fn library(models_dir: Option<&Path>) -> Result<ModelLibrary, CliError> {
    let mut lib = ModelLibrary::builtin();
    if let Some(dir) = models_dir {
        lib.load_dir(dir).map_err(|source| CliError::Model {
            context: format!("models directory {}", dir.display()),
            source,
        })?;
    }
    Ok(lib)
}

/// Resolves `spec` as a descriptor file when it names an existing `.json`
/// file, otherwise as a library model name.
pub fn resolve_model(spec: &str, models_dir: Option<&Path>) -> Result<Model, CliError> {
    let path = Path::new(spec);
    if path.extension().is_some_and(|e| e == "json") || path.is_file() {
        let context = path.display().to_string();
        let descriptor = load_descriptor_file(path).map_err(|source| CliError::Model {
            context: context.clone(),
            source,
        })?;
        return instantiate(&descriptor, path.parent()).map_err(|source| CliError::Model { context, source });
    }
    library(models_dir)?.instantiate(spec).map_err(|source| CliError::Model {
        context: format!("model {spec}"),
        source,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Dynamic,
    Static,
}

#[derive(Debug, Clone)]
pub struct SimulateOptions {
    pub model: String,
    /// Defaults to the model's field.
    pub field: Option<Vec3>,
    pub mode: Mode,
    pub steps: usize,
    pub dt: Option<f64>,
    /// Overrides the quasi-static force tolerance.
    pub tolerance: Option<f64>,
    pub out: Option<PathBuf>,
    pub models_dir: Option<PathBuf>,
}

impl SimulateOptions {
    pub fn new(model: impl Into<String>, mode: Mode) -> Self {
        Self {
            model: model.into(),
            field: None,
            mode,
            steps: 100,
            dt: None,
            tolerance: None,
            out: None,
            models_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub model: String,
    pub mode: Mode,
    /// T
    pub field: [f64; 3],
    pub nodes: usize,
    pub tets: usize,
    /// m
    pub max_displacement: f64,
    /// Largest tip marker displacement (m); absent for models without markers.
    pub tip_displacement: Option<f64>,
    /// Displacement vector of that tip marker (m).
    pub tip_vector: Option<[f64; 3]>,
    /// Pa
    pub max_von_mises: f64,
    /// Newton iterations (static) or conjugate gradient iterations (dynamic).
    pub iterations: usize,
    pub steps: usize,
    pub sim_time: f64,
    pub converged: bool,
    pub residual: Option<f64>,
    pub output: Option<PathBuf>,
}

/// Final state of a run plus its summary.
pub struct Run {
    pub model: Model,
    pub state: SimState,
    pub stress: StressField,
    pub summary: Summary,
}

fn displacements(model: &Model, positions: &[f64]) -> Vec<Vec3> {
    model
        .mesh
        .nodes
        .iter()
        .enumerate()
        .map(|(i, p)| Vec3::new(positions[3 * i], positions[3 * i + 1], positions[3 * i + 2]) - p)
        .collect()
}

fn tip(model: &Model, disp: &[Vec3]) -> Option<Vec3> {
    model
        .tips
        .iter()
        .map(|&t| disp[t])
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
}

fn final_stress(sim: &mut Simulator, state: &SimState) -> Result<StressField, CliError> {
    sim.refresh_rotations(state)?;
    Ok(element_stress(&state.positions, sim.rest(), sim.rotations()))
}

fn write_output(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Write {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(path, text).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

/// Runs one simulation. A quasi-static solve that does not converge still
/// returns `Ok` with `summary.converged == false`.
pub fn simulate(opts: &SimulateOptions) -> Result<Run, CliError> {
    let model = resolve_model(&opts.model, opts.models_dir.as_deref())?;
    let mut config = model.solver;
    if let Some(dt) = opts.dt {
        config.dt = dt;
    }
    if let Some(tol) = opts.tolerance {
        config.newton_tolerance = tol;
    }
    let field = opts.field.unwrap_or(model.default_field);
    let mut sim = model.simulator()?;
    sim.set_config(config)?;
    sim.set_field(field);
    let mut state = sim.rest_state();

    let (iterations, steps, converged, residual) = match opts.mode {
        Mode::Static => {
            let report = sim.quasi_static(&mut state, &mut |_| true)?;
            (report.total_iterations(), 0, report.converged, Some(report.final_residual))
        }
        Mode::Dynamic => {
            let mut cg = 0;
            for _ in 0..opts.steps {
                cg += sim.step(&mut state)?.cg_iterations;
            }
            (cg, opts.steps, true, None)
        }
    };

    let stress = final_stress(&mut sim, &state)?;
    let disp = displacements(&model, &state.positions);
    let tip = tip(&model, &disp);
    if let Some(path) = &opts.out {
        let title = format!("magsim {} field {:?},{:?},{:?}", model.name, field.x, field.y, field.z);
        write_output(path, &write_vtk(&title, &state.positions, &model.mesh.tets, &stress.von_mises))?;
    }
    let summary = Summary {
        model: model.name.clone(),
        mode: opts.mode,
        field: [field.x, field.y, field.z],
        nodes: model.mesh.node_count(),
        tets: model.mesh.tet_count(),
        max_displacement: disp.iter().map(|d| d.norm()).fold(0.0, f64::max),
        tip_displacement: tip.map(|t| t.norm()),
        tip_vector: tip.map(|t| [t.x, t.y, t.z]),
        max_von_mises: stress.max,
        iterations,
        steps,
        sim_time: state.time,
        converged,
        residual,
        output: opts.out.clone(),
    };
    Ok(Run {
        model,
        state,
        stress,
        summary,
    })
}

#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub model: String,
    /// Field direction; defaults to the model's field direction.
    pub direction: Option<Vec3>,
    pub magnitudes: Vec<f64>,
    pub out: Option<PathBuf>,
    pub models_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Ok,
    NotConverged,
    Failed,
}

impl RowStatus {
    fn as_str(self) -> &'static str {
        match self {
            RowStatus::Ok => "ok",
            RowStatus::NotConverged => "not_converged",
            RowStatus::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    /// T
    pub magnitude: f64,
    /// Tip displacement for models with tip markers, else max displacement (m).
    pub displacement: f64,
    /// Pa
    pub max_von_mises: f64,
    pub newton_iters: usize,
    pub status: RowStatus,
}

pub const CSV_HEADER: &str = "B_magnitude_T,tip_or_max_displacement_m,max_von_mises_Pa,newton_iters,status";

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{:?},{:?},{:?},{},{}",
            r.magnitude,
            r.displacement,
            r.max_von_mises,
            r.newton_iters,
            r.status.as_str()
        );
    }
    out
}

/// One quasi-static solve per magnitude, in input order. Each solve starts
/// from the previous converged state with a single load stage; if that fails
/// it is retried from rest with the full ramp. A magnitude seen before reuses
/// its row.
pub fn sweep(opts: &SweepOptions) -> Result<Vec<SweepRow>, CliError> {
    if opts.magnitudes.is_empty() {
        return Err(input("sweep needs at least one magnitude"));
    }
    let model = resolve_model(&opts.model, opts.models_dir.as_deref())?;
    let direction = match opts.direction {
        Some(d) => d,
        None => model.default_field,
    };
    if direction.norm() == 0.0 {
        return Err(input("field direction is zero; pass --direction"));
    }
    let direction = direction.normalize();
    let mut sim = model.simulator()?;
    let base = model.solver;
    let rest = sim.rest_state();
    let mut warm: Option<SimState> = None;
    let mut seen: Vec<(f64, SweepRow, Option<SimState>)> = Vec::new();
    let mut rows = Vec::with_capacity(opts.magnitudes.len());

    for &magnitude in &opts.magnitudes {
        if let Some((_, row, state)) = seen.iter().find(|(m, _, _)| m.to_bits() == magnitude.to_bits()) {
            rows.push(row.clone());
            if state.is_some() {
                warm = state.clone();
            }
            continue;
        }
        sim.set_field(direction * magnitude);
        let attempt = |start: &SimState, ramp: usize, sim: &mut Simulator| {
            let mut config = base;
            config.ramp_steps = ramp;
            sim.set_config(config)?;
            let mut state = start.clone();
            let report = sim.quasi_static(&mut state, &mut |_| true)?;
            Ok::<_, SolverError>((state, report))
        };
        let mut outcome = match &warm {
            Some(start) => attempt(start, 1, &mut sim),
            None => attempt(&rest, base.ramp_steps, &mut sim),
        };
        let mut iterations = match &outcome {
            Ok((_, r)) => r.total_iterations(),
            Err(_) => 0,
        };
        let retry = warm.is_some() && !matches!(&outcome, Ok((_, r)) if r.converged);
        if retry {
            sim.reset_caches();
            outcome = attempt(&rest, base.ramp_steps, &mut sim);
            if let Ok((_, r)) = &outcome {
                iterations += r.total_iterations();
            }
        }
        let (row, state) = match outcome {
            Ok((state, report)) => {
                let stress = final_stress(&mut sim, &state)?;
                let disp = displacements(&model, &state.positions);
                let displacement = match tip(&model, &disp) {
                    Some(t) => t.norm(),
                    None => disp.iter().map(|d| d.norm()).fold(0.0, f64::max),
                };
                let status = if report.converged { RowStatus::Ok } else { RowStatus::NotConverged };
                let row = SweepRow {
                    magnitude,
                    displacement,
                    max_von_mises: stress.max,
                    newton_iters: iterations,
                    status,
                };
                (row, report.converged.then_some(state))
            }
            Err(e) => {
                log::warn!("sweep row B = {magnitude} T failed: {e}");
                sim.reset_caches();
                let row = SweepRow {
                    magnitude,
                    displacement: f64::NAN,
                    max_von_mises: f64::NAN,
                    newton_iters: iterations,
                    status: RowStatus::Failed,
                };
                (row, None)
            }
        };
        if state.is_some() {
            warm = state.clone();
        }
        seen.push((magnitude, row.clone(), state));
        rows.push(row);
    }
    if let Some(path) = &opts.out {
        write_output(path, &sweep_csv(&rows))?;
    }
    Ok(rows)
}
