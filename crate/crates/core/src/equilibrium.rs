//! Quantum free energy, quantum Maxwellians `θ[A] = exp(−(H + A)/T_e)` and the
//! density-to-chemical-potential map.
//!
//! The chemical potential for a target density `n` is the minimizer of the
//! strictly convex dual functional
//!
//! ```text
//! G(A) = h Σ n_i A_i + T_e Tr exp(−(H + A)/T_e),
//! ```
//!
//! whose gradient `h n_i − θ_ii` vanishes exactly when `θ[A]` reproduces `n`.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::linalg::{self, Spectrum};
use crate::operator::DensityOperator;
use crate::optimize::{self, ConvexObjective, Evaluation, OptimizerOptions};

/// Largest exponent accepted before `exp` overflows.
const MAX_EXPONENT: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Temperature(f64);

impl Temperature {
    pub fn new(t_e: f64) -> Result<Self> {
        if t_e > 0.0 && t_e.is_finite() {
            Ok(Self(t_e))
        } else {
            Err(Error::InvalidConfig(format!(
                "temperature must be positive, got {t_e}"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChemicalPotential {
    values: DVector<f64>,
}

impl ChemicalPotential {
    pub fn new(values: DVector<f64>) -> Result<Self> {
        if values.iter().all(|v| v.is_finite()) {
            Ok(Self { values })
        } else {
            Err(Error::InvalidInput(
                "chemical potential must be finite".into(),
            ))
        }
    }

    pub fn constant(n: usize, value: f64) -> Self {
        Self {
            values: DVector::from_element(n, value),
        }
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn into_values(self) -> DVector<f64> {
        self.values
    }
}

/// `exp(−(H + A)/T_e)` evaluated through the spectrum of `H + diag(A)`.
#[derive(Debug, Clone)]
pub struct ThermalOperator {
    spectrum: Spectrum,
    weights: DVector<f64>,
    temperature: f64,
}

impl ThermalOperator {
    pub fn new(
        h: &DMatrix<f64>,
        potential: &DVector<f64>,
        temperature: Temperature,
    ) -> Result<Self> {
        check_len(h.nrows(), potential.len())?;
        let mut m = h.clone();
        for (i, a) in potential.iter().enumerate() {
            m[(i, i)] += a;
        }
        let spectrum = Spectrum::of(&m);
        let t_e = temperature.value();
        let lowest = spectrum.values()[0];
        if !lowest.is_finite() || -lowest / t_e > MAX_EXPONENT {
            return Err(Error::NumericalFailure(format!(
                "exp(-(H+A)/T_e) overflows: eigenvalue {lowest:.6e} at T_e = {t_e}"
            )));
        }
        let weights = spectrum.values().map(|l| (-l / t_e).exp());
        Ok(Self {
            spectrum,
            weights,
            temperature: t_e,
        })
    }

    pub fn trace(&self) -> f64 {
        self.weights.sum()
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    /// Eigenvalues of the operator itself, ascending in energy.
    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn diagonal(&self) -> DVector<f64> {
        let v = self.spectrum.vectors();
        let n = self.weights.len();
        DVector::from_fn(n, |i, _| {
            (0..n).map(|p| v[(i, p)].powi(2) * self.weights[p]).sum()
        })
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let theta = self.spectrum.map_weights(&self.weights);
        (&theta + theta.transpose()) * 0.5
    }

    /// Multiplies the operator by `factor`, which is the effect of shifting
    /// the potential by `−T_e ln factor`.
    fn rescale(&mut self, factor: f64) {
        self.weights *= factor;
    }

    /// Hessian of `A ↦ T_e Tr exp(−(H + A)/T_e)`, assembled from the
    /// first divided differences of the exponential.
    pub fn hessian(&self) -> DMatrix<f64> {
        let n = self.weights.len();
        let v = self.spectrum.vectors();
        let lambda = self.spectrum.values();
        let t_e = self.temperature;
        let pairs = n * (n + 1) / 2;
        let mut z = DMatrix::zeros(n, pairs);
        let mut weighted = DMatrix::zeros(n, pairs);
        let mut col = 0;
        for p in 0..n {
            for q in p..n {
                // λ ascending, so λ_p ≤ λ_q and the weight of p is the larger one.
                let gap = (lambda[q] - lambda[p]) / t_e;
                let g = self.weights[p] / t_e * relative_decay(gap);
                let multiplicity = if p == q { 1.0 } else { 2.0 };
                for i in 0..n {
                    let zi = v[(i, p)] * v[(i, q)];
                    z[(i, col)] = zi;
                    weighted[(i, col)] = zi * g * multiplicity;
                }
                col += 1;
            }
        }
        let hessian = weighted * z.transpose();
        (&hessian + hessian.transpose()) * 0.5
    }
}

/// `(1 − e^{−u})/u` for `u ≥ 0`, equal to one at zero.
fn relative_decay(u: f64) -> f64 {
    if u < 1e-8 {
        1.0 - 0.5 * u
    } else {
        -(-u).exp_m1() / u
    }
}

/// Equilibrium `θ[A] = exp(−(H + A)/T_e)` with its potential.
#[derive(Debug, Clone)]
pub struct QuantumMaxwellian {
    operator: DensityOperator,
    potential: ChemicalPotential,
    temperature: Temperature,
    real_matrix: DMatrix<f64>,
    min_eigenvalue: f64,
}

impl QuantumMaxwellian {
    pub(crate) fn from_thermal(
        thermal: &ThermalOperator,
        potential: ChemicalPotential,
        temperature: Temperature,
        spacing: f64,
    ) -> Self {
        let real_matrix = thermal.matrix();
        let operator =
            DensityOperator::from_parts_unchecked(linalg::to_complex(&real_matrix), spacing);
        let min_eigenvalue = thermal
            .weights()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        Self {
            operator,
            potential,
            temperature,
            real_matrix,
            min_eigenvalue,
        }
    }

    pub fn operator(&self) -> &DensityOperator {
        &self.operator
    }

    /// The same operator as a real symmetric matrix.
    pub fn real_matrix(&self) -> &DMatrix<f64> {
        &self.real_matrix
    }

    pub fn potential(&self) -> &ChemicalPotential {
        &self.potential
    }

    pub fn temperature(&self) -> Temperature {
        self.temperature
    }

    pub fn density(&self) -> DVector<f64> {
        self.operator.density()
    }

    /// Smallest eigenvalue, from the functional calculus (strictly positive
    /// unless it underflows).
    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eigenvalue
    }
}

pub fn maxwellian_from_potential(
    potential: &ChemicalPotential,
    h: &DMatrix<f64>,
    spacing: f64,
    temperature: Temperature,
) -> Result<QuantumMaxwellian> {
    let thermal = ThermalOperator::new(h, potential.values(), temperature)?;
    Ok(QuantumMaxwellian::from_thermal(
        &thermal,
        potential.clone(),
        temperature,
        spacing,
    ))
}

/// Eigenvalues of σ at or below this value contribute zero to `λ log λ`.
const ENTROPY_FLOOR: f64 = 1e-300;

/// `F(σ) = T_e Tr(σ log σ − σ) + Tr(H σ)`.
pub fn free_energy(
    sigma: &DensityOperator,
    h: &DMatrix<f64>,
    temperature: Temperature,
) -> Result<f64> {
    check_len(sigma.dim(), h.nrows())?;
    let eigenvalues = sigma.eigenvalues();
    let trace = sigma.trace();
    let lowest = eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if lowest < -1e-10 * trace.abs() {
        return Err(Error::InvalidState(format!(
            "free energy needs a nonnegative operator, lowest eigenvalue {lowest:.3e}"
        )));
    }
    let entropy: f64 = eigenvalues
        .iter()
        .map(|&l| {
            if l > ENTROPY_FLOOR {
                l * l.ln() - l
            } else {
                -l.max(0.0)
            }
        })
        .sum();
    let energy: f64 = (linalg::to_complex(h) * sigma.matrix()).trace().re;
    Ok(temperature.value() * entropy + energy)
}

/// The dual functional `G` for a fixed target density.
pub struct DualFunctional<'a> {
    pub target: &'a DVector<f64>,
    pub h: &'a DMatrix<f64>,
    pub spacing: f64,
    pub temperature: Temperature,
}

impl DualFunctional<'_> {
    pub fn value(&self, potential: &DVector<f64>) -> Result<f64> {
        Ok(self.evaluate(potential)?.value)
    }

    pub fn gradient(&self, potential: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.evaluate(potential)?.gradient)
    }
}

impl ConvexObjective for DualFunctional<'_> {
    type Cache = ThermalOperator;

    fn evaluate(&self, potential: &DVector<f64>) -> Result<Evaluation<ThermalOperator>> {
        let thermal = ThermalOperator::new(self.h, potential, self.temperature)?;
        let value =
            self.spacing * self.target.dot(potential) + self.temperature.value() * thermal.trace();
        let gradient = self.target * self.spacing - thermal.diagonal();
        Ok(Evaluation {
            value,
            gradient,
            cache: thermal,
        })
    }

    fn hessian(&self, _: &DVector<f64>, eval: &Evaluation<ThermalOperator>) -> DMatrix<f64> {
        eval.cache.hessian()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumOptions {
    /// Relative L¹ tolerance on the density mismatch.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub backend: optimize::Backend,
}

impl Default for EquilibriumOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 200,
            backend: optimize::Backend::Newton,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ChemicalPotentialSolution {
    pub potential: ChemicalPotential,
    pub maxwellian: QuantumMaxwellian,
    /// `‖n[θ] − n‖₁` in grid L¹ norm.
    pub residual: f64,
    pub iterations: usize,
}

/// Potential that is exact when `H = 0`, shifted so that the total mass of
/// `exp(−(H + A)/T_e)` matches `mass`.
pub(crate) fn initial_potential(
    density: &DVector<f64>,
    h: &DMatrix<f64>,
    spacing: f64,
    temperature: Temperature,
    mass: f64,
) -> Result<DVector<f64>> {
    let t_e = temperature.value();
    let mut a = density.map(|n| -t_e * (spacing * n).ln());
    // H + A may have a very negative spectrum when n is large; start from the
    // shift that keeps the lowest eigenvalue at zero, then match the mass.
    let mut m = h.clone();
    for (i, v) in a.iter().enumerate() {
        m[(i, i)] += v;
    }
    let lowest = m.symmetric_eigenvalues().min();
    a.add_scalar_mut(-lowest);
    let thermal = ThermalOperator::new(h, &a, temperature)?;
    a.add_scalar_mut(t_e * (thermal.trace() / mass).ln());
    Ok(a)
}

/// Shifts the potential by the constant that makes the trace exactly `mass`.
pub(crate) fn match_mass(thermal: &mut ThermalOperator, potential: &mut DVector<f64>, mass: f64) {
    let factor = mass / thermal.trace();
    if factor.is_finite() && factor > 0.0 {
        potential.add_scalar_mut(-thermal.temperature * factor.ln());
        thermal.rescale(factor);
    }
}

fn validate_target(target: &DVector<f64>, h: &DMatrix<f64>) -> Result<()> {
    check_len(h.nrows(), target.len())?;
    if let Some((i, v)) = target
        .iter()
        .enumerate()
        .find(|(_, v)| !(**v > 0.0 && v.is_finite()))
    {
        return Err(Error::InvalidInput(format!(
            "target density must be positive and finite, entry {i} is {v}"
        )));
    }
    Ok(())
}

/// Solves `n[θ[A]] = n_target` for `A`, optionally warm-started.
pub fn chemical_potential(
    target: &DVector<f64>,
    h: &DMatrix<f64>,
    spacing: f64,
    temperature: Temperature,
    options: &EquilibriumOptions,
    initial: Option<&ChemicalPotential>,
) -> Result<ChemicalPotentialSolution> {
    validate_target(target, h)?;
    let mass = spacing * target.sum();
    let x0 = match initial {
        Some(a) => {
            check_len(target.len(), a.values().len())?;
            a.values().clone()
        }
        None => initial_potential(target, h, spacing, temperature, mass)?,
    };
    let functional = DualFunctional {
        target,
        h,
        spacing,
        temperature,
    };
    let norm = spacing * target.sum();
    let opts = OptimizerOptions {
        tolerance: options.tolerance * norm,
        max_iterations: options.max_iterations,
        backend: options.backend,
    };
    let minimum = optimize::minimize(&functional, x0, &opts)?;
    let mut potential = minimum.x;
    let mut thermal = minimum.eval.cache;
    match_mass(&mut thermal, &mut potential, mass);
    let residual = (target * spacing - thermal.diagonal()).lp_norm(1);
    let potential = ChemicalPotential::new(potential)?;
    let maxwellian =
        QuantumMaxwellian::from_thermal(&thermal, potential.clone(), temperature, spacing);
    Ok(ChemicalPotentialSolution {
        potential,
        maxwellian,
        residual,
        iterations: minimum.iterations,
    })
}

/// The map `n ↦ θ[n]` with default solver settings.
pub fn equilibrium(
    target: &DVector<f64>,
    h: &DMatrix<f64>,
    spacing: f64,
    temperature: Temperature,
) -> Result<QuantumMaxwellian> {
    Ok(chemical_potential(
        target,
        h,
        spacing,
        temperature,
        &EquilibriumOptions::default(),
        None,
    )?
    .maxwellian)
}
