use nalgebra::DVector;
use num_complex::Complex64;

use super::{step_count, Problem, Trajectory};
use crate::equilibrium::{ChemicalPotential, Temperature};
use crate::error::{Error, Result};
use crate::kernels::{free_unitary, KernelParams, PropagatorBackend};
use crate::linalg::{self, CMatrix};
use crate::operator::DensityOperator;
use crate::qdd::{solve_step, QddOptions, QddStepInput};

/// `(n_n, ϱ_n, t_n)` plus the last chemical potential, kept as a warm start.
#[derive(Debug, Clone)]
pub struct SchemeState {
    pub step_index: usize,
    pub time: f64,
    pub density: DVector<f64>,
    pub rho: DensityOperator,
    pub potential: Option<ChemicalPotential>,
}

impl SchemeState {
    pub fn initial(rho: DensityOperator) -> Result<Self> {
        let density = crate::operator::density(&rho)?;
        if let Some((i, v)) = density.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
            return Err(Error::InvalidState(format!(
                "initial density must be positive, entry {i} is {v}"
            )));
        }
        Ok(Self {
            step_index: 0,
            time: 0.0,
            density,
            rho,
            potential: None,
        })
    }
}

/// Diagnostics of one completed step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    pub mass: f64,
    pub min_eigenvalue: f64,
    /// `max |ϱ − ϱ*|` before symmetrization.
    pub hermiticity_residual: f64,
    /// NaN when the operator has eigenvalues below the allowed floor.
    pub free_energy: f64,
    pub trace_norm: f64,
    pub e2_norm: f64,
    /// `‖j[θ_{n+1}]‖_∞`.
    pub equilibrium_current: f64,
    pub el_residual: f64,
    pub iterations: usize,
    pub positivity_violation: bool,
}

pub type RunRecord = Vec<StepRecord>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApOptions {
    /// Defaults to one Crank–Nicolson substep per time step; the exact
    /// propagator lets high-frequency coherences grow on spectral grids.
    pub propagator: PropagatorBackend,
    pub qdd: QddOptions,
    /// A step is flagged when `min eig ϱ < −positivity_floor · Tr ϱ`.
    pub positivity_floor: f64,
    pub fail_on_negative: bool,
}

impl Default for ApOptions {
    fn default() -> Self {
        Self {
            propagator: PropagatorBackend::CrankNicolson { substeps: 1 },
            qdd: QddOptions::default(),
            positivity_floor: 1e-8,
            fail_on_negative: false,
        }
    }
}

/// Step data that depend only on `(ε, δt)`.
struct Stepper<'a> {
    problem: &'a Problem,
    params: KernelParams,
    options: ApOptions,
    /// `U ≈ e^{−i a_ε H/ε}`.
    u_midpoint: CMatrix,
    /// `U ≈ e^{−i δt H/ε}`.
    u_step: CMatrix,
    xi: f64,
    kappa: f64,
    relaxed: f64,
    damping: f64,
    h: CMatrix,
}

impl<'a> Stepper<'a> {
    fn new(problem: &'a Problem, params: KernelParams, options: ApOptions) -> Result<Self> {
        let eps = params.epsilon();
        let hams = &problem.hamiltonians;
        Ok(Self {
            problem,
            params,
            options,
            u_midpoint: free_unitary(hams, params.a_weighted() / eps, options.propagator)?,
            u_step: free_unitary(hams, params.dt() / eps, options.propagator)?,
            xi: super::DRIFT_FACTOR * params.xi(),
            kappa: params.kappa(),
            relaxed: params.relaxed_fraction(),
            damping: params.damping(),
            h: linalg::to_complex(problem.h()),
        })
    }

    fn step(&self, state: &SchemeState) -> Result<(SchemeState, StepRecord)> {
        let problem = self.problem;
        let eps = self.params.epsilon();
        let spacing = problem.spacing();

        // Density update with the residual current of the free evolution as source.
        let midpoint = DensityOperator::from_parts_unchecked(
            linalg::conjugate(&self.u_midpoint, state.rho.matrix()),
            spacing,
        );
        let source = midpoint.div_current(&problem.derivative) * (-eps * self.relaxed);
        let input = QddStepInput {
            n_prev: &state.density,
            source: &source,
            xi: self.xi,
            hamiltonians: &problem.hamiltonians,
            derivative: &problem.derivative,
            temperature: problem.temperature,
        };
        let solved = solve_step(&input, &self.options.qdd, state.potential.as_ref())?;

        // ϱ_{n+1} = Ŝ ϱ_n + (1 − e^{−δt/ε²}) θ − ε κ_ε(δt) [iH, θ]
        let theta = linalg::to_complex(solved.theta_next.real_matrix());
        let mut next = theta.scale(self.relaxed);
        if self.damping > 0.0 {
            next += linalg::conjugate(&self.u_step, state.rho.matrix()).scale(self.damping);
        }
        let commutator = (&self.h * &theta - &theta * &self.h) * Complex64::new(0.0, 1.0);
        next -= commutator.scale(eps * self.kappa);
        let mut rho = DensityOperator::from_parts_unchecked(next, spacing);
        let hermiticity_residual = rho.symmetrize();

        let equilibrium_current = solved
            .theta_next
            .operator()
            .current(&problem.derivative)
            .amax();
        let diag = operator_diagnostics(&rho, problem, self.options.positivity_floor);
        let step = state.step_index + 1;
        let time = step as f64 * self.params.dt();
        if diag.positivity_violation {
            log::warn!(
                "step {step} (t = {time}): min eigenvalue {:.3e} below -{:.1e}·Tr",
                diag.min_eigenvalue,
                self.options.positivity_floor
            );
            if self.options.fail_on_negative {
                return Err(Error::NumericalFailure(format!(
                    "positivity lost at step {step}: min eigenvalue {:.6e}",
                    diag.min_eigenvalue
                )));
            }
        }
        let record = StepRecord {
            step,
            time,
            mass: rho.trace(),
            min_eigenvalue: diag.min_eigenvalue,
            hermiticity_residual,
            free_energy: diag.free_energy,
            trace_norm: diag.trace_norm,
            e2_norm: diag.e2_norm,
            equilibrium_current,
            el_residual: solved.residual,
            iterations: solved.iterations,
            positivity_violation: diag.positivity_violation,
        };
        let state = SchemeState {
            step_index: step,
            time,
            density: solved.n_next,
            rho,
            potential: Some(solved.a_next),
        };
        Ok((state, record))
    }
}

pub(crate) struct OperatorDiagnostics {
    pub min_eigenvalue: f64,
    pub free_energy: f64,
    pub trace_norm: f64,
    pub e2_norm: f64,
    pub positivity_violation: bool,
}

/// Spectral diagnostics from a single eigendecomposition.
pub(crate) fn operator_diagnostics(
    rho: &DensityOperator,
    problem: &Problem,
    floor: f64,
) -> OperatorDiagnostics {
    let spec = rho.spectral_decomposition();
    let trace = rho.trace();
    let min_eigenvalue = spec
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let h0_vectors = linalg::to_complex(problem.h0()) * &spec.eigenvectors;
    let mut trace_norm = 0.0;
    let mut e2_norm = 0.0;
    for (p, l) in spec.eigenvalues.iter().enumerate() {
        trace_norm += l.abs();
        e2_norm += l.abs() * (1.0 + h0_vectors.column(p).norm_squared());
    }
    let free_energy =
        free_energy_from_spectrum(&spec.eigenvalues, rho, problem.h(), problem.temperature)
            .unwrap_or(f64::NAN);
    OperatorDiagnostics {
        min_eigenvalue,
        free_energy,
        trace_norm,
        e2_norm,
        positivity_violation: min_eigenvalue < -floor * trace.abs(),
    }
}

fn free_energy_from_spectrum(
    eigenvalues: &DVector<f64>,
    rho: &DensityOperator,
    h: &nalgebra::DMatrix<f64>,
    temperature: Temperature,
) -> Option<f64> {
    let lowest = eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if lowest < -1e-10 * rho.trace().abs() {
        return None;
    }
    let entropy: f64 = eigenvalues
        .iter()
        .map(|&l| {
            if l > 1e-300 {
                l * l.ln() - l
            } else {
                -l.max(0.0)
            }
        })
        .sum();
    let energy = (linalg::to_complex(h) * rho.matrix()).trace().re;
    Some(temperature.value() * entropy + energy)
}

/// One step of the scheme.
pub fn ap_step(
    state: &SchemeState,
    params: &KernelParams,
    problem: &Problem,
    options: &ApOptions,
) -> Result<(SchemeState, StepRecord)> {
    Stepper::new(problem, *params, *options)?.step(state)
}

#[derive(Debug, Clone)]
pub struct ApRun {
    pub final_state: SchemeState,
    pub records: RunRecord,
    /// Scheme densities `n_n` and operators `ϱ_n`, including `t = 0`.
    pub trajectory: Trajectory,
}

/// Runs `floor(t_final/δt)` steps from `rho0`.
pub fn ap_run(
    problem: &Problem,
    rho0: DensityOperator,
    params: &KernelParams,
    t_final: f64,
    options: &ApOptions,
) -> Result<ApRun> {
    let stepper = Stepper::new(problem, *params, *options)?;
    let mut state = SchemeState::initial(rho0)?;
    let mut trajectory = Trajectory::default();
    trajectory.push(0.0, state.density.clone(), state.rho.clone());
    let steps = step_count(t_final, params.dt());
    let mut records = Vec::with_capacity(steps);
    for _ in 0..steps {
        let (next, record) = stepper.step(&state)?;
        state = next;
        trajectory.push(state.time, state.density.clone(), state.rho.clone());
        records.push(record);
    }
    Ok(ApRun {
        final_state: state,
        records,
        trajectory,
    })
}
