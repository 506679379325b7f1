use super::{apply_constraints, Simulator, SolverError};
use crate::fem::{self, SimState};

/// Diagnostics of one implicit step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub cg_iterations: usize,
    pub cg_residual: f64,
    pub cg_converged: bool,
    /// Elements found inverted during the force evaluation.
    pub inverted: Vec<usize>,
}

impl Simulator {
    /// Advances `state` by one linearised implicit Euler step.
    ///
    /// Solves `(M + h C + h^2 K) dv = h (f - C v) - h^2 K v` with Rayleigh
    /// damping `C = alpha M + beta K`, then `v += dv`, `x += h v`. Fixed nodes
    /// keep zero velocity. On failure `state` is left untouched.
    pub fn step(&mut self, state: &mut SimState) -> Result<StepReport, SolverError> {
        let h = self.config.dt;
        let alpha = self.material.rayleigh_mass;
        let beta = self.material.rayleigh_stiffness;
        let n = state.positions.len();

        let eval = fem::elastic_forces(&state.positions, &self.rest, Some(&self.rotations))?;
        fem::assemble_tangent(&self.rest, &eval.rotations, &mut self.matrix);
        let kv = self.matrix.mul(&state.velocities);

        let g = self.config.gravity;
        let mut rhs = vec![0.0; n];
        for i in 0..n {
            let force = eval.forces[i] + self.magnetic[i] + self.mass[i] * g[i % 3];
            let damping = alpha * self.mass[i] * state.velocities[i] + beta * kv[i];
            rhs[i] = h * (force - damping) - h * h * kv[i];
        }
        apply_constraints(&mut rhs, &self.constraints);

        // System matrix in place: (h beta + h^2) K + (1 + h alpha) M.
        self.matrix.scale(h * beta + h * h);
        self.matrix.add_diagonal(&self.mass, 1.0 + h * alpha);
        let mut warm = self.warm_start.clone();
        apply_constraints(&mut warm, &self.constraints);
        let solve = self.solve_linear(&rhs, Some(&warm), true)?;
        let dv = solve.x;
        if dv.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::NonFiniteEncountered);
        }

        let mut next_v = state.velocities.clone();
        let mut next_x = state.positions.clone();
        for i in 0..n {
            next_v[i] += dv[i];
        }
        apply_constraints(&mut next_v, &self.constraints);
        for i in 0..n {
            next_x[i] += h * next_v[i];
        }
        if next_x.iter().chain(&next_v).any(|v| !v.is_finite()) {
            return Err(SolverError::NonFiniteEncountered);
        }

        state.positions = next_x;
        state.velocities = next_v;
        state.time += h;
        state.step += 1;
        self.rotations = eval.rotations;
        self.warm_start = dv;
        Ok(StepReport {
            cg_iterations: solve.iterations,
            cg_residual: solve.residual,
            cg_converged: solve.converged,
            inverted: eval.inverted,
        })
    }

    /// Kinetic energy `1/2 v^T M v` (J).
    pub fn kinetic_energy(&self, state: &SimState) -> f64 {
        0.5 * state
            .velocities
            .iter()
            .zip(&self.mass)
            .map(|(v, m)| m * v * v)
            .sum::<f64>()
    }
}
