//! Implicit density step of the scheme.
//!
//! Given `n_prev`, a zero-mean source `f` and the weight `ξ`, the new
//! chemical potential `A` minimizes
//!
//! ```text
//! J(A) = (ξ/2) h Σ n_prev (DA)² + h Σ (n_prev + f) A + T_e Tr exp(−(H + A)/T_e)
//! ```
//!
//! and the new density is the density of `θ[A]`. The Euler–Lagrange equation
//! is `n_next − n_prev + ξ D(n_prev ∘ DA) = f`; with `ξ = δt` and `f = 0` it is
//! the implicit Euler step of quantum drift-diffusion.

use nalgebra::{DMatrix, DVector};

use crate::equilibrium::{
    self, ChemicalPotential, QuantumMaxwellian, Temperature, ThermalOperator,
};
use crate::error::{check_len, Error, Result};
use crate::grid::{DerivativeOperator, HamiltonianSet};
use crate::optimize::{self, Backend, ConvexObjective, Evaluation, OptimizerOptions};

/// Everything one implicit step needs.
#[derive(Debug, Clone, Copy)]
pub struct QddStepInput<'a> {
    pub n_prev: &'a DVector<f64>,
    pub source: &'a DVector<f64>,
    pub xi: f64,
    pub hamiltonians: &'a HamiltonianSet,
    pub derivative: &'a DerivativeOperator,
    pub temperature: Temperature,
}

#[derive(Debug, Clone)]
pub struct QddStepResult {
    pub a_next: ChemicalPotential,
    pub n_next: DVector<f64>,
    pub theta_next: QuantumMaxwellian,
    /// `‖n_next − n_prev + ξ D(n_prev ∘ DA) − f‖₁`.
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QddOptions {
    /// Absolute L¹ tolerance on the Euler–Lagrange residual.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub backend: Backend,
}

impl Default for QddOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 500,
            backend: Backend::Hybrid {
                switch_residual: 1e-3,
            },
        }
    }
}

impl QddStepInput<'_> {
    fn spacing(&self) -> f64 {
        self.hamiltonians.grid().spacing()
    }

    fn validate(&self) -> Result<()> {
        let n = self.hamiltonians.grid().n_points();
        check_len(n, self.n_prev.len())?;
        check_len(n, self.source.len())?;
        check_len(n, self.derivative.matrix().nrows())?;
        if let Some((i, v)) = self
            .n_prev
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v > 0.0 && v.is_finite()))
        {
            return Err(Error::InvalidInput(format!(
                "previous density must be positive, entry {i} is {v}"
            )));
        }
        if !(self.xi >= 0.0 && self.xi.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "xi must be nonnegative, got {}",
                self.xi
            )));
        }
        let total = self.source.sum();
        let scale = self.source.lp_norm(1);
        if total.abs() > 1e-10 * scale {
            return Err(Error::InvalidInput(format!(
                "source must have zero mean (sum {total:.3e}, L1 {scale:.3e})"
            )));
        }
        if self.source.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("source must be finite".into()));
        }
        Ok(())
    }

    /// Right-hand side weight `n_prev + f`, with the rounding-level mean of
    /// `f` removed so that mass is conserved exactly.
    fn load(&self) -> DVector<f64> {
        let mean = self.source.mean();
        self.n_prev + self.source.add_scalar(-mean)
    }
}

/// `J` with its load vector precomputed.
struct StepFunctional<'a> {
    input: QddStepInput<'a>,
    load: DVector<f64>,
    stiffness: DMatrix<f64>,
}

impl<'a> StepFunctional<'a> {
    fn new(input: QddStepInput<'a>) -> Self {
        let d = input.derivative.matrix();
        let h = input.spacing();
        // ξ h Dᵀ diag(n_prev) D
        let weighted = DMatrix::from_fn(d.nrows(), d.ncols(), |i, j| d[(i, j)] * input.n_prev[i]);
        let stiffness = d.transpose() * weighted * (input.xi * h);
        Self {
            load: input.load(),
            stiffness,
            input,
        }
    }

    fn transport_gradient(&self, a: &DVector<f64>) -> DVector<f64> {
        &self.stiffness * a
    }
}

impl ConvexObjective for StepFunctional<'_> {
    type Cache = ThermalOperator;

    fn evaluate(&self, a: &DVector<f64>) -> Result<Evaluation<ThermalOperator>> {
        let h = self.input.spacing();
        let thermal = ThermalOperator::new(self.input.hamiltonians.h(), a, self.input.temperature)?;
        let transport = self.transport_gradient(a);
        let value = 0.5 * a.dot(&transport)
            + h * self.load.dot(a)
            + self.input.temperature.value() * thermal.trace();
        let gradient = transport + &self.load * h - thermal.diagonal();
        Ok(Evaluation {
            value,
            gradient,
            cache: thermal,
        })
    }

    fn hessian(&self, _: &DVector<f64>, eval: &Evaluation<ThermalOperator>) -> DMatrix<f64> {
        &self.stiffness + eval.cache.hessian()
    }
}

/// `J(A)`.
pub fn evaluate_j(a: &DVector<f64>, input: &QddStepInput<'_>) -> Result<f64> {
    input.validate()?;
    check_len(input.n_prev.len(), a.len())?;
    Ok(StepFunctional::new(*input).evaluate(a)?.value)
}

/// `∇J(A)`; its component `i` is `−h` times the pointwise Euler–Lagrange
/// residual at node `i`.
pub fn gradient_j(a: &DVector<f64>, input: &QddStepInput<'_>) -> Result<DVector<f64>> {
    input.validate()?;
    check_len(input.n_prev.len(), a.len())?;
    Ok(StepFunctional::new(*input).evaluate(a)?.gradient)
}

/// Minimizes `J`, starting from `warm_start` when given.
pub fn solve_step(
    input: &QddStepInput<'_>,
    options: &QddOptions,
    warm_start: Option<&ChemicalPotential>,
) -> Result<QddStepResult> {
    input.validate()?;
    let functional = StepFunctional::new(*input);
    let h = input.spacing();
    let mass = h * functional.load.sum();
    let x0 = match warm_start {
        Some(a) => {
            check_len(input.n_prev.len(), a.values().len())?;
            a.values().clone()
        }
        None => equilibrium::initial_potential(
            input.n_prev,
            input.hamiltonians.h(),
            h,
            input.temperature,
            mass,
        )?,
    };
    let opts = OptimizerOptions {
        tolerance: options.tolerance,
        max_iterations: options.max_iterations,
        backend: options.backend,
    };
    let minimum = optimize::minimize(&functional, x0, &opts)?;
    let mut a = minimum.x;
    let mut thermal = minimum.eval.cache;
    equilibrium::match_mass(&mut thermal, &mut a, mass);
    let gradient = functional.transport_gradient(&a) + &functional.load * h - thermal.diagonal();
    let residual = gradient.lp_norm(1);
    let a_next = ChemicalPotential::new(a)?;
    let theta_next =
        QuantumMaxwellian::from_thermal(&thermal, a_next.clone(), input.temperature, h);
    Ok(QddStepResult {
        n_next: theta_next.density(),
        a_next,
        theta_next,
        residual,
        iterations: minimum.iterations,
    })
}
