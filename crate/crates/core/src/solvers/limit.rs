use nalgebra::DVector;

use super::{step_count, Problem, Trajectory};
use crate::error::Result;
use crate::qdd::{solve_step, QddOptions, QddStepInput};

/// Implicit Euler for quantum drift-diffusion: the step solve with
/// `ξ = DRIFT_FACTOR · δt` and no source. Samples are `(t_n, n_n, θ[n_n])`, starting from `θ[n₀]`.
pub fn qdd_limit_run(
    problem: &Problem,
    n0: &DVector<f64>,
    dt: f64,
    t_final: f64,
    options: &QddOptions,
) -> Result<Trajectory> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(crate::Error::InvalidConfig(format!(
            "time step must be positive, got {dt}"
        )));
    }
    let initial = problem.equilibrium(n0)?;
    let mut density = initial.density();
    let mut potential = Some(initial.potential().clone());
    let mut trajectory = Trajectory::default();
    trajectory.push(0.0, density.clone(), initial.operator().clone());
    let zero = DVector::zeros(n0.len());
    for k in 1..=step_count(t_final, dt) {
        let input = QddStepInput {
            n_prev: &density,
            source: &zero,
            xi: super::DRIFT_FACTOR * dt,
            hamiltonians: &problem.hamiltonians,
            derivative: &problem.derivative,
            temperature: problem.temperature,
        };
        let step = solve_step(&input, options, potential.as_ref())?;
        density = step.n_next;
        potential = Some(step.a_next);
        trajectory.push(
            k as f64 * dt,
            density.clone(),
            step.theta_next.operator().clone(),
        );
    }
    Ok(trajectory)
}
