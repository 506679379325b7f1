//! Quasi-static equilibrium: field ramping plus damped Newton iterations.
//!
//! Each Newton step solves `(K + gamma diag(K)) dx = f(x)` on the free degrees of
//! freedom, with `K` the consistent corotational tangent. `gamma` starts at zero
//! and is raised Levenberg-Marquardt style when a step fails to reduce the
//! residual or the linear solve stalls.

use super::{Simulator, SolverError};
use crate::fem::{self, SimState};

const GAMMA_START: f64 = 1e-4;
const GAMMA_FLOOR: f64 = 1e-7;
const GAMMA_CEILING: f64 = 1e8;
const CG_RESTARTS: usize = 3;
/// A restart that shrinks the residual by less than this factor counts as stagnant.
const STAGNATION: f64 = 0.99;
const ARMIJO: f64 = 1e-4;
const LINE_SEARCH_STEPS: usize = 8;

/// Progress notification emitted after every Newton iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct Progress {
    pub stage: usize,
    pub stages: usize,
    pub iteration: usize,
    pub residual: f64,
    pub limit: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageReport {
    /// Field applied in this stage (T).
    pub field: [f64; 3],
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuasiStaticReport {
    pub stages: Vec<StageReport>,
    /// Infinity norm of the free-node force residual at the returned state (N).
    pub final_residual: f64,
    /// Characteristic force `F_ref` of the final stage (N).
    pub reference_force: f64,
    /// Residual bound `newton_tolerance * F_ref` (N).
    pub limit: f64,
    pub converged: bool,
}

impl QuasiStaticReport {
    pub fn total_iterations(&self) -> usize {
        self.stages.iter().map(|s| s.iterations).sum()
    }

    /// Turns a non-converged report into [`SolverError::NotConverged`].
    pub fn ensure_converged(&self) -> Result<(), SolverError> {
        if self.converged {
            Ok(())
        } else {
            Err(SolverError::NotConverged {
                residual: self.final_residual,
                limit: self.limit,
            })
        }
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

enum LinearOutcome {
    Step(Vec<f64>),
    Stalled,
}

impl Simulator {
    /// Drives `state` to equilibrium under the current field, ramped in
    /// `ramp_steps` increments. Velocities are zeroed.
    ///
    /// A solve that exhausts `newton_max_iters` in some stage still returns
    /// `Ok`, with the lowest-residual state found and `converged == false`.
    /// `progress` returning `false` cancels the solve and restores `state`.
    pub fn quasi_static(
        &mut self,
        state: &mut SimState,
        progress: &mut dyn FnMut(&Progress) -> bool,
    ) -> Result<QuasiStaticReport, SolverError> {
        let target = self.mag.field;
        let stages = self.config.ramp_steps;
        let tol = self.config.newton_tolerance;
        let elastic_scale = self.material.young_modulus * self.rest.mean_face_area();
        let original = state.clone();

        let mut x = state.positions.clone();
        let mut reports = Vec::with_capacity(stages);
        let mut reference_force = elastic_scale;
        let mut final_limit = tol * elastic_scale;
        let mut last_residual = 0.0;
        let mut all_converged = true;

        for stage in 1..=stages {
            let field = target * (stage as f64 / stages as f64);
            self.set_field(field);
            let f_mag = inf_norm(&self.magnetic);
            reference_force = f_mag.max(elastic_scale);
            let limit = tol * reference_force;
            final_limit = limit;

            let mut residual_vec = self.residual(&x)?;
            let mut residual = inf_norm(&residual_vec);
            let mut best = (residual, x.clone());
            let mut gamma = 0.0;
            let mut iterations = 0;
            let mut energy = self.energy(&x)?;
            while residual > limit && iterations < self.config.newton_max_iters {
                iterations += 1;
                let outcome = self.newton_direction(&x, &residual_vec, gamma)?;
                let accepted = match outcome {
                    LinearOutcome::Step(dx) => match self.line_search(&x, &dx, &residual_vec, energy)? {
                        Some((trial, trial_residual, trial_energy)) => {
                            x = trial;
                            residual = inf_norm(&trial_residual);
                            residual_vec = trial_residual;
                            energy = trial_energy;
                            true
                        }
                        None => false,
                    },
                    LinearOutcome::Stalled => false,
                };
                if accepted {
                    gamma = if gamma / 10.0 < GAMMA_FLOOR { 0.0 } else { gamma / 10.0 };
                    if residual < best.0 {
                        best = (residual, x.clone());
                    }
                } else {
                    gamma = (gamma * 10.0).max(GAMMA_START);
                    if gamma > GAMMA_CEILING {
                        return Err(SolverError::SingularSystem);
                    }
                }
                let keep_going = progress(&Progress {
                    stage,
                    stages,
                    iteration: iterations,
                    residual,
                    limit,
                });
                if !keep_going {
                    self.set_field(target);
                    *state = original;
                    return Err(SolverError::Cancelled);
                }
            }
            let converged = residual <= limit;
            if !converged {
                all_converged = false;
                x = best.1;
                residual = best.0;
                // Rotations must match the state we keep.
                self.residual(&x)?;
            }
            last_residual = residual;
            reports.push(StageReport {
                field: [field.x, field.y, field.z],
                iterations,
                residual,
                converged,
            });
            if !converged {
                break;
            }
        }
        self.set_field(target);

        state.positions = x;
        state.velocities.iter_mut().for_each(|v| *v = 0.0);
        Ok(QuasiStaticReport {
            stages: reports,
            final_residual: last_residual,
            reference_force,
            limit: final_limit,
            converged: all_converged,
        })
    }

    /// Total potential energy: corotational strain energy minus the work of the
    /// constant magnetic and gravity loads. Updates the cached rotations.
    fn energy(&mut self, x: &[f64]) -> Result<f64, SolverError> {
        let eval = fem::elastic_forces(x, &self.rest, Some(&self.rotations))?;
        let strain = fem::corotational_energy(x, &self.rest, &eval.rotations);
        self.rotations = eval.rotations;
        let g = self.config.gravity;
        let work: f64 = (0..x.len())
            .filter(|i| !self.constraints.is_fixed(i / 3))
            .map(|i| (self.magnetic[i] + self.mass[i] * g[i % 3]) * x[i])
            .sum();
        Ok(strain - work)
    }

    /// Backtracking on the energy along `dx`. A step is taken when it satisfies
    /// the sufficient decrease condition or lowers the residual norm.
    #[allow(clippy::type_complexity)]
    fn line_search(
        &mut self,
        x: &[f64],
        dx: &[f64],
        residual: &[f64],
        energy: f64,
    ) -> Result<Option<(Vec<f64>, Vec<f64>, f64)>, SolverError> {
        let slope = -residual.iter().zip(dx).map(|(r, d)| r * d).sum::<f64>();
        let saved = self.rotations.clone();
        let current = inf_norm(residual);
        let mut alpha = 1.0;
        for _ in 0..LINE_SEARCH_STEPS {
            let trial: Vec<f64> = x.iter().zip(dx).map(|(a, b)| a + alpha * b).collect();
            let trial_energy = self.energy(&trial)?;
            let trial_residual = self.residual(&trial)?;
            let r = inf_norm(&trial_residual);
            let decrease = slope < 0.0 && trial_energy <= energy + ARMIJO * alpha * slope;
            if r.is_finite() && trial_energy.is_finite() && (decrease || r < current) {
                return Ok(Some((trial, trial_residual, trial_energy)));
            }
            self.rotations = saved.clone();
            alpha *= 0.5;
        }
        Ok(None)
    }

    fn newton_direction(&mut self, x: &[f64], rhs: &[f64], gamma: f64) -> Result<LinearOutcome, SolverError> {
        let eval = fem::elastic_forces(x, &self.rest, Some(&self.rotations))?;
        fem::assemble_consistent_tangent(x, &self.rest, &eval.rotations, &mut self.matrix);
        if gamma > 0.0 {
            let diag = self.matrix.diagonal();
            self.matrix.add_diagonal(&diag, gamma);
        }
        let mut dx: Option<Vec<f64>> = None;
        let mut previous = 1.0;
        let mut stagnant = 0;
        for restart in 0..=CG_RESTARTS {
            let result = self.solve_linear(rhs, dx.as_deref(), restart == 0);
            let result = match result {
                Ok(r) => r,
                Err(SolverError::NonFiniteEncountered) => return Ok(LinearOutcome::Stalled),
                Err(e) => return Err(e),
            };
            if result.converged {
                return Ok(LinearOutcome::Step(result.x));
            }
            if result.residual > STAGNATION * previous {
                stagnant += 1;
            } else {
                stagnant = 0;
            }
            previous = result.residual;
            dx = Some(result.x);
            if stagnant >= CG_RESTARTS {
                return Ok(LinearOutcome::Stalled);
            }
        }
        // Inexact but improving: let the residual test decide.
        Ok(dx.map_or(LinearOutcome::Stalled, LinearOutcome::Step))
    }
}

#[cfg(test)]
mod tests {
    use super::super::{ConstraintSet, SolverConfig};
    use super::*;
    use crate::fem::MaterialParams;
    use crate::magnetics::MagneticParams;
    use crate::mesh_io::fixtures::unit_tet;

    #[test]
    fn zero_field_needs_no_iterations() {
        let mesh = unit_tet();
        let mut sim = Simulator::new(
            mesh.clone(),
            MaterialParams::default(),
            MagneticParams::unmagnetized(1),
            ConstraintSet::from_nodes(4, [0]),
            SolverConfig::default(),
        )
        .unwrap();
        let mut state = SimState::at_rest(&mesh);
        let report = sim.quasi_static(&mut state, &mut |_| true).unwrap();
        assert!(report.converged);
        assert_eq!(report.total_iterations(), 0);
        assert_eq!(state, SimState::at_rest(&mesh));
    }

    #[test]
    fn cancel_restores_state() {
        let mesh = unit_tet();
        let mag = MagneticParams {
            remanence: vec![crate::Vec3::new(0.1, 0.0, 0.0)],
            field: crate::Vec3::new(0.0, 0.0, 0.05),
        };
        let mut sim = Simulator::new(
            mesh.clone(),
            MaterialParams::default(),
            mag,
            ConstraintSet::from_nodes(4, [0, 2, 3]),
            SolverConfig::default(),
        )
        .unwrap();
        let mut state = SimState::at_rest(&mesh);
        let r = sim.quasi_static(&mut state, &mut |_| false);
        assert_eq!(r, Err(SolverError::Cancelled));
        assert_eq!(state, SimState::at_rest(&mesh));
        assert_eq!(sim.magnetics().field.z, 0.05);
    }
}
