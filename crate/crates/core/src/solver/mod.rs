//! Time integration and equilibrium solves under fixed-node constraints.

mod cg;
mod direct;
mod dynamic;
mod statics;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fem::{self, FemError, MaterialParams, RestData, SimState};
use crate::magnetics::{self, MagneticParams};
use crate::mesh_io::TetMesh;
use crate::sparse::BlockCsr;
use crate::{Mat3, Vec3};

use direct::Cholesky;

pub use cg::{cg_solve, jacobi, CgResult};
pub use dynamic::StepReport;
pub use statics::{Progress, QuasiStaticReport, StageReport};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("non-finite value encountered during the solve")]
    NonFiniteEncountered,
    #[error("quasi-static solve did not converge (residual {residual:e} N > {limit:e} N)")]
    NotConverged { residual: f64, limit: f64 },
    #[error("linear system is singular: conjugate gradients stagnated")]
    SingularSystem,
    #[error("solve cancelled")]
    Cancelled,
    #[error("invalid solver setting {field}: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error(transparent)]
    Fem(#[from] FemError),
}

/// Linear-solver preconditioner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Preconditioner {
    None,
    Jacobi,
    /// Sparse Cholesky factorization of the current system matrix. Falls back
    /// to Jacobi when the matrix is not positive definite.
    #[default]
    Cholesky,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Time step (s).
    pub dt: f64,
    pub cg_max_iters: usize,
    /// Relative residual target for each linear solve.
    pub cg_tolerance: f64,
    pub newton_max_iters: usize,
    /// Quasi-static force tolerance relative to the characteristic force.
    pub newton_tolerance: f64,
    pub ramp_steps: usize,
    /// m/s^2
    pub gravity: Vec3,
    pub preconditioner: Preconditioner,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            cg_max_iters: 200,
            cg_tolerance: 1e-6,
            newton_max_iters: 50,
            newton_tolerance: 1e-6,
            ramp_steps: 10,
            gravity: Vec3::zeros(),
            preconditioner: Preconditioner::Cholesky,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |field, reason: &str| {
            Err(SolverError::InvalidConfig {
                field,
                reason: reason.to_string(),
            })
        };
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad("dt", "must be finite and > 0");
        }
        if !(self.cg_tolerance > 0.0 && self.cg_tolerance < 1.0) {
            return bad("cg_tolerance", "must lie in (0, 1)");
        }
        if !(self.newton_tolerance > 0.0 && self.newton_tolerance < 1.0) {
            return bad("newton_tolerance", "must lie in (0, 1)");
        }
        if self.cg_max_iters < 1 {
            return bad("cg_max_iters", "must be >= 1");
        }
        if self.newton_max_iters < 1 {
            return bad("newton_max_iters", "must be >= 1");
        }
        if self.ramp_steps < 1 {
            return bad("ramp_steps", "must be >= 1");
        }
        if !self.gravity.iter().all(|g| g.is_finite()) {
            return bad("gravity", "must be finite");
        }
        Ok(())
    }
}

/// Nodes held at their current position.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConstraintSet {
    fixed: Vec<bool>,
    count: usize,
}

impl ConstraintSet {
    pub fn none(node_count: usize) -> Self {
        Self {
            fixed: vec![false; node_count],
            count: 0,
        }
    }

    /// Panics if an index is out of range.
    pub fn from_nodes(node_count: usize, nodes: impl IntoIterator<Item = usize>) -> Self {
        let mut set = Self::none(node_count);
        for n in nodes {
            set.fix(n);
        }
        set
    }

    pub fn fix(&mut self, node: usize) {
        if !self.fixed[node] {
            self.fixed[node] = true;
            self.count += 1;
        }
    }

    pub fn is_fixed(&self, node: usize) -> bool {
        self.fixed[node]
    }

    pub fn fixed_count(&self) -> usize {
        self.count
    }

    pub fn node_count(&self) -> usize {
        self.fixed.len()
    }

    pub fn fixed_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.fixed.iter().enumerate().filter(|(_, f)| **f).map(|(i, _)| i)
    }
}

/// Zeroes the three components of every fixed node.
pub fn apply_constraints(v: &mut [f64], constraints: &ConstraintSet) {
    for n in constraints.fixed_nodes() {
        v[3 * n..3 * n + 3].fill(0.0);
    }
}

/// Owns everything needed to advance one model: rest data, masses, material,
/// magnetization, constraints and solver caches.
#[derive(Debug, Clone)]
pub struct Simulator {
    mesh: TetMesh,
    rest: RestData,
    material: MaterialParams,
    mag: MagneticParams,
    constraints: ConstraintSet,
    config: SolverConfig,
    mass: Vec<f64>,
    magnetic: Vec<f64>,
    matrix: BlockCsr,
    rotations: Vec<Mat3>,
    warm_start: Vec<f64>,
    direct: DirectCache,
}

/// Lazily analyzed factorization; clones start empty.
#[derive(Debug, Default)]
struct DirectCache(Option<Cholesky>);

impl Clone for DirectCache {
    fn clone(&self) -> Self {
        Self(None)
    }
}

impl Simulator {
    pub fn new(
        mesh: TetMesh,
        material: MaterialParams,
        mag: MagneticParams,
        constraints: ConstraintSet,
        config: SolverConfig,
    ) -> Result<Self, SolverError> {
        config.validate()?;
        let rest = fem::precompute_rest(&mesh, &material)?;
        if mag.remanence.len() != mesh.tets.len() {
            return Err(FemError::DimensionMismatch {
                expected: mesh.tets.len(),
                found: mag.remanence.len(),
            }
            .into());
        }
        if constraints.node_count() != mesh.nodes.len() {
            return Err(FemError::DimensionMismatch {
                expected: mesh.nodes.len(),
                found: constraints.node_count(),
            }
            .into());
        }
        let mass = fem::lumped_mass(&mesh, &material);
        let magnetic = magnetics::magnetic_forces(&rest, &mag);
        let matrix = BlockCsr::from_tets(mesh.nodes.len(), &mesh.tets);
        let rotations = vec![Mat3::identity(); mesh.tets.len()];
        let warm_start = vec![0.0; 3 * mesh.nodes.len()];
        Ok(Self {
            mesh,
            rest,
            material,
            mag,
            constraints,
            config,
            mass,
            magnetic,
            matrix,
            rotations,
            warm_start,
            direct: DirectCache::default(),
        })
    }

    pub fn mesh(&self) -> &TetMesh {
        &self.mesh
    }

    pub fn rest(&self) -> &RestData {
        &self.rest
    }

    pub fn material(&self) -> &MaterialParams {
        &self.material
    }

    pub fn magnetics(&self) -> &MagneticParams {
        &self.mag
    }

    pub fn constraints(&self) -> &ConstraintSet {
        &self.constraints
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// Element rotations from the latest force evaluation.
    pub fn rotations(&self) -> &[Mat3] {
        &self.rotations
    }

    pub fn rest_state(&self) -> SimState {
        SimState::at_rest(&self.mesh)
    }

    /// Forgets rotations and the warm start so the next run matches a freshly
    /// built simulator.
    pub fn reset_caches(&mut self) {
        self.rotations.iter_mut().for_each(|r| *r = Mat3::identity());
        self.warm_start.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn set_material(&mut self, material: MaterialParams) -> Result<(), SolverError> {
        let rest = fem::precompute_rest(&self.mesh, &material)?;
        self.mass = fem::lumped_mass(&self.mesh, &material);
        self.magnetic = magnetics::magnetic_forces(&rest, &self.mag);
        self.rest = rest;
        self.material = material;
        Ok(())
    }

    pub fn set_field(&mut self, field: Vec3) {
        self.mag.field = field;
        self.magnetic = magnetics::magnetic_forces(&self.rest, &self.mag);
    }

    pub fn set_magnetics(&mut self, mag: MagneticParams) -> Result<(), SolverError> {
        if mag.remanence.len() != self.rest.elements.len() {
            return Err(FemError::DimensionMismatch {
                expected: self.rest.elements.len(),
                found: mag.remanence.len(),
            }
            .into());
        }
        self.magnetic = magnetics::magnetic_forces(&self.rest, &mag);
        self.mag = mag;
        Ok(())
    }

    pub fn set_config(&mut self, config: SolverConfig) -> Result<(), SolverError> {
        config.validate()?;
        self.config = config;
        Ok(())
    }

    /// Recomputes element rotations for `state` (used before stress recovery).
    pub fn refresh_rotations(&mut self, state: &SimState) -> Result<Vec<usize>, SolverError> {
        let eval = fem::elastic_forces(&state.positions, &self.rest, Some(&self.rotations))?;
        self.rotations = eval.rotations;
        Ok(eval.inverted)
    }

    /// Sum of elastic, magnetic and gravity forces with fixed nodes zeroed.
    pub fn residual(&mut self, positions: &[f64]) -> Result<Vec<f64>, SolverError> {
        let eval = fem::elastic_forces(positions, &self.rest, Some(&self.rotations))?;
        self.rotations = eval.rotations;
        let mut f = eval.forces;
        let g = self.config.gravity;
        for (i, fi) in f.iter_mut().enumerate() {
            *fi += self.magnetic[i] + self.mass[i] * g[i % 3];
        }
        apply_constraints(&mut f, &self.constraints);
        Ok(f)
    }

    /// Solves `matrix x = rhs` on the free degrees of freedom.
    /// With `refactor == false` the previous factorization is reused.
    fn solve_linear(&mut self, rhs: &[f64], x0: Option<&[f64]>, refactor: bool) -> Result<CgResult, SolverError> {
        let use_direct = self.config.preconditioner == Preconditioner::Cholesky && {
            if self.direct.0.is_none() {
                self.direct.0 = Cholesky::analyze(&self.matrix);
            }
            match self.direct.0.as_mut() {
                Some(chol) if refactor => chol.factorize(&self.matrix, &self.constraints),
                Some(chol) => chol.is_valid(),
                None => false,
            }
        };
        let Self {
            matrix,
            constraints,
            config,
            direct,
            ..
        } = self;
        let apply = |v: &[f64], out: &mut [f64]| {
            matrix.mul_into(v, out);
            apply_constraints(out, constraints);
        };
        let (tol, max) = (config.cg_tolerance, config.cg_max_iters);
        if use_direct {
            let chol = direct.0.as_mut().expect("factorization present");
            debug_assert!(chol.is_valid());
            return cg_solve(apply, rhs, x0, tol, max, Some(&mut |r: &[f64], z: &mut [f64]| chol.solve(r, z)));
        }
        if config.preconditioner == Preconditioner::None {
            return cg_solve(apply, rhs, x0, tol, max, None);
        }
        let inv_diag: Vec<f64> = matrix
            .diagonal()
            .into_iter()
            .map(|d| if d > 0.0 { 1.0 / d } else { 0.0 })
            .collect();
        let mut precondition = jacobi(&inv_diag);
        cg_solve(apply, rhs, x0, tol, max, Some(&mut precondition))
    }
}

/// One implicit Euler step with a freshly built [`Simulator`].
pub fn implicit_euler_step(
    state: &SimState,
    mesh: &TetMesh,
    material: &MaterialParams,
    mag: &MagneticParams,
    constraints: &ConstraintSet,
    config: &SolverConfig,
) -> Result<SimState, SolverError> {
    let mut sim = Simulator::new(mesh.clone(), *material, mag.clone(), constraints.clone(), *config)?;
    let mut next = state.clone();
    sim.step(&mut next)?;
    Ok(next)
}

/// Quasi-static equilibrium with a freshly built [`Simulator`].
pub fn quasi_static_solve(
    state: &SimState,
    mesh: &TetMesh,
    material: &MaterialParams,
    mag: &MagneticParams,
    constraints: &ConstraintSet,
    config: &SolverConfig,
) -> Result<(SimState, QuasiStaticReport), SolverError> {
    let mut sim = Simulator::new(mesh.clone(), *material, mag.clone(), constraints.clone(), *config)?;
    let mut next = state.clone();
    let report = sim.quasi_static(&mut next, &mut |_| true)?;
    Ok((next, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constraints_examples() {
        let mut v: Vec<f64> = (0..15).map(|i| i as f64 + 1.0).collect();
        let original = v.clone();
        apply_constraints(&mut v, &ConstraintSet::none(5));
        assert_eq!(v, original);

        let mut all = original.clone();
        apply_constraints(&mut all, &ConstraintSet::from_nodes(5, 0..5));
        assert!(all.iter().all(|&x| x == 0.0));

        let node3 = ConstraintSet::from_nodes(5, [3]);
        apply_constraints(&mut v, &node3);
        for (i, (a, b)) in v.iter().zip(&original).enumerate() {
            if (9..12).contains(&i) {
                assert_eq!(*a, 0.0);
            } else {
                assert_eq!(a, b);
            }
        }
        let once = v.clone();
        apply_constraints(&mut v, &node3);
        assert_eq!(v, once);
    }

    #[test]
    fn config_bounds() {
        assert!(SolverConfig::default().validate().is_ok());
        let bad = SolverConfig {
            dt: 0.0,
            ..Default::default()
        };
        assert!(matches!(bad.validate(), Err(SolverError::InvalidConfig { field: "dt", .. })));
        let bad = SolverConfig {
            cg_tolerance: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = SolverConfig {
            ramp_steps: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
