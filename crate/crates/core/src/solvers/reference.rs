//! Strang splitting of the Liouville-BGK flow, used as an accuracy oracle.
//!
//! Each substep `δ` is `R(δ/2) T(δ) R(δ/2)`, where `T` is the exact free
//! transport and `R` the exact relaxation flow
//! `ρ ↦ e^{−τ/ε²} ρ + (1 − e^{−τ/ε²}) θ[n[ρ]]` (exact because relaxation leaves
//! the density, hence `θ`, unchanged). Adjacent half relaxations inside a
//! sample interval are fused into one.

use super::{step_count, Problem, Trajectory};
use crate::equilibrium::{chemical_potential, ChemicalPotential, EquilibriumOptions};
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::operator::DensityOperator;

/// `min(ε², δt)/50`.
pub fn default_substep(epsilon: f64, dt: f64) -> f64 {
    (epsilon * epsilon).min(dt) / 50.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceOptions {
    /// Largest allowed substep; `None` selects [`default_substep`] of the
    /// sample interval.
    pub max_substep: Option<f64>,
    pub equilibrium: EquilibriumOptions,
    /// A warning is recorded when `δ > stiffness_safety · ε²`.
    pub stiffness_safety: f64,
}

impl Default for ReferenceOptions {
    fn default() -> Self {
        Self {
            max_substep: None,
            equilibrium: EquilibriumOptions {
                tolerance: 1e-12,
                ..EquilibriumOptions::default()
            },
            stiffness_safety: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReferenceRun {
    /// Densities `n[ρ]` and operators at multiples of the sample interval.
    pub trajectory: Trajectory,
    pub substep: f64,
    pub warnings: Vec<String>,
}

struct Splitter<'a> {
    problem: &'a Problem,
    options: &'a ReferenceOptions,
    epsilon: f64,
    potential: Option<ChemicalPotential>,
}

impl Splitter<'_> {
    fn relax(&mut self, rho: &mut CMatrix, tau: f64) -> Result<()> {
        let spacing = self.problem.spacing();
        let density = DensityOperator::from_parts_unchecked(rho.clone(), spacing).density();
        let solution = chemical_potential(
            &density,
            self.problem.h(),
            spacing,
            self.problem.temperature,
            &self.options.equilibrium,
            self.potential.as_ref(),
        )?;
        let keep = (-tau / (self.epsilon * self.epsilon)).exp();
        *rho *= num_complex::Complex64::new(keep, 0.0);
        *rho += linalg::to_complex(solution.maxwellian.real_matrix()).scale(1.0 - keep);
        self.potential = Some(solution.potential);
        Ok(())
    }
}

/// Integrates from `rho0` to `t_final`, sampling every `interval`.
pub fn splitstep_run(
    problem: &Problem,
    rho0: DensityOperator,
    epsilon: f64,
    t_final: f64,
    interval: f64,
    options: &ReferenceOptions,
) -> Result<ReferenceRun> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    if !(interval > 0.0 && interval.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "sample interval must be positive, got {interval}"
        )));
    }
    let max_substep = options
        .max_substep
        .unwrap_or_else(|| default_substep(epsilon, interval));
    if !(max_substep > 0.0 && max_substep.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "substep must be positive, got {max_substep}"
        )));
    }
    let per_interval = (interval / max_substep * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    let substep = interval / per_interval as f64;
    let mut warnings = Vec::new();
    if substep > options.stiffness_safety * epsilon * epsilon {
        let message = format!(
            "substep {substep:.3e} exceeds {} ε² = {:.3e}; relaxation is under-resolved",
            options.stiffness_safety,
            options.stiffness_safety * epsilon * epsilon
        );
        log::warn!("{message}");
        warnings.push(message);
    }

    let spacing = problem.spacing();
    let transport = problem.hamiltonians.spectrum().unitary(substep / epsilon);
    let mut splitter = Splitter {
        problem,
        options,
        epsilon,
        potential: None,
    };
    let mut rho = rho0.matrix().clone();
    let mut trajectory = Trajectory::default();
    trajectory.push(0.0, rho0.density(), rho0);
    for k in 1..=step_count(t_final, interval) {
        for i in 0..per_interval {
            splitter.relax(&mut rho, if i == 0 { 0.5 * substep } else { substep })?;
            rho = linalg::conjugate(&transport, &rho);
        }
        splitter.relax(&mut rho, 0.5 * substep)?;
        let mut sample = DensityOperator::from_parts_unchecked(rho.clone(), spacing);
        sample.symmetrize();
        rho = sample.matrix().clone();
        trajectory.push(k as f64 * interval, sample.density(), sample);
    }
    Ok(ReferenceRun {
        trajectory,
        substep,
        warnings,
    })
}
