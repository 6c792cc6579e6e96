//! Time integrators: the asymptotic-preserving scheme, the split-step
//! reference, the drift-diffusion limit, plus the residual probe and error
//! metrics used to compare them.

mod ap;
mod lemma;
mod limit;
mod metrics;
mod reference;

pub use ap::{ap_run, ap_step, ApOptions, ApRun, RunRecord, SchemeState, StepRecord};
pub use lemma::{sigma1_residual, Sigma1Residual};
pub use limit::qdd_limit_run;
pub use metrics::{error_metrics, fitted_order, ErrorSeries};
pub use reference::{default_substep, splitstep_run, ReferenceOptions, ReferenceRun};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::equilibrium::{self, QuantumMaxwellian, Temperature};
use crate::error::{check_len, Error, Result};
use crate::grid::{DerivativeMethod, DerivativeOperator, GridSpec, HamiltonianSet};
use crate::operator::DensityOperator;

/// Static data shared by every solver: Hamiltonians, derivative, temperature.
#[derive(Debug, Clone)]
pub struct Problem {
    pub hamiltonians: HamiltonianSet,
    pub derivative: DerivativeOperator,
    pub temperature: Temperature,
}

impl Problem {
    pub fn new(
        grid: &GridSpec,
        potential: DVector<f64>,
        method: DerivativeMethod,
        temperature: f64,
    ) -> Result<Self> {
        Ok(Self {
            hamiltonians: HamiltonianSet::new(grid, potential, method)?,
            derivative: DerivativeOperator::new(grid, method),
            temperature: Temperature::new(temperature)?,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        self.hamiltonians.grid()
    }

    pub fn spacing(&self) -> f64 {
        self.grid().spacing()
    }

    pub fn h(&self) -> &DMatrix<f64> {
        self.hamiltonians.h()
    }

    pub fn h0(&self) -> &DMatrix<f64> {
        self.hamiltonians.h0()
    }

    /// `θ[n]`.
    pub fn equilibrium(&self, density: &DVector<f64>) -> Result<QuantumMaxwellian> {
        equilibrium::equilibrium(density, self.h(), self.spacing(), self.temperature)
    }

    /// `n(x) = (mass/L)(1 + amplitude·cos(k_mode x))`.
    pub fn cosine_density(&self, mass: f64, amplitude: f64, mode: usize) -> Result<DVector<f64>> {
        let grid = self.grid();
        if amplitude.abs() >= 1.0 {
            return Err(Error::InvalidConfig(format!(
                "density amplitude must be below one, got {amplitude}"
            )));
        }
        let k = grid.wavenumber(mode);
        Ok(grid
            .nodes()
            .map(|x| mass / grid.length() * (1.0 + amplitude * (k * x).cos())))
    }

    /// Local equilibrium `θ[n₀]`.
    pub fn well_prepared(&self, density: &DVector<f64>) -> Result<DensityOperator> {
        Ok(self.equilibrium(density)?.operator().clone())
    }

    /// Gibbs state `exp(−H/T_e)` with total mass `mass`, mixed with the pure
    /// state `ψ` at weight `weight`.
    pub fn ill_prepared(
        &self,
        mass: f64,
        weight: f64,
        psi: &DVector<Complex64>,
    ) -> Result<DensityOperator> {
        check_len(self.grid().n_points(), psi.len())?;
        if !(0.0..=1.0).contains(&weight) {
            return Err(Error::InvalidConfig(format!(
                "mixture weight must lie in [0, 1], got {weight}"
            )));
        }
        let norm = psi.norm();
        if !(norm > 0.0) {
            return Err(Error::InvalidConfig("pure state must be nonzero".into()));
        }
        let t_e = self.temperature.value();
        let gibbs = self.hamiltonians.spectrum().map(|l| (-l / t_e).exp());
        let gibbs = gibbs.scale(mass / gibbs.trace());
        let psi = psi.unscale(norm);
        let pure = &psi * psi.adjoint();
        let matrix =
            crate::linalg::to_complex(&gibbs).scale(1.0 - weight) + pure.scale(weight * mass);
        let mut rho = DensityOperator::from_parts_unchecked(matrix, self.spacing());
        rho.symmetrize();
        Ok(rho)
    }
}

/// Densities and operators sampled at increasing times.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub densities: Vec<DVector<f64>>,
    pub rhos: Vec<DensityOperator>,
}

impl Trajectory {
    pub fn push(&mut self, time: f64, density: DVector<f64>, rho: DensityOperator) {
        self.times.push(time);
        self.densities.push(density);
        self.rhos.push(rho);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Index of the sample closest to `t`.
    pub fn nearest(&self, t: f64) -> Option<usize> {
        self.times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
            .map(|(i, _)| i)
    }
}

/// With `H₀ = −Δ` and `j = 2 Im(ψ* ∇ψ)`, the equilibrium satisfies
/// `j[i[H, θ[n]]] = −2 n ∇A[n]`, so the drift term of the density equation
/// carries this factor in front of `ξ`.
pub const DRIFT_FACTOR: f64 = 2.0;

/// Number of whole steps of size `dt` that fit in `t_final`.
pub(crate) fn step_count(t_final: f64, dt: f64) -> usize {
    ((t_final / dt) * (1.0 + 1e-12)).floor() as usize
}
