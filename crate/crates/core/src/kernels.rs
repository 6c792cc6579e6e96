//! Scalar time kernels of the scheme and the damped free evolution.
//!
//! With `x = τ/ε²`:
//!
//! ```text
//! κ_ε(τ)  = 1 − e^{−x} − x e^{−x}
//! ξ_ε(δt) = ∫₀^δt κ_ε = δt (1 + e^{−x}) − 2ε² (1 − e^{−x})
//! a_ε(δt) = ∫₀^δt r e^{−r/ε²} dr / ∫₀^δt e^{−r/ε²} dr = ε² − δt/(e^x − 1)
//! ```
//!
//! All three cancel catastrophically for small `x`, so Taylor series are used
//! below `x = 1`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::HamiltonianSet;
use crate::linalg::{self, CMatrix};
use crate::operator::{crank_nicolson_propagator, propagate_exact, DensityOperator};

const SERIES_LIMIT: f64 = 1.0;
const SERIES_TERMS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    epsilon: f64,
    dt: f64,
}

impl KernelParams {
    pub fn new(epsilon: f64, dt: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "time step must be positive, got {dt}"
            )));
        }
        Ok(Self { epsilon, dt })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// `δt/ε²`.
    pub fn stiffness(&self) -> f64 {
        self.dt / (self.epsilon * self.epsilon)
    }

    /// `e^{−δt/ε²}`.
    pub fn damping(&self) -> f64 {
        (-self.stiffness()).exp()
    }

    /// `1 − e^{−δt/ε²}`.
    pub fn relaxed_fraction(&self) -> f64 {
        -(-self.stiffness()).exp_m1()
    }

    pub fn kappa(&self) -> f64 {
        kappa(self.epsilon, self.dt)
    }

    pub fn xi(&self) -> f64 {
        xi(self.epsilon, self.dt)
    }

    pub fn a_weighted(&self) -> f64 {
        a_weighted(self.epsilon, self.dt)
    }
}

/// `1 − e^{−x} − x e^{−x}`.
fn kappa_unit(x: f64) -> f64 {
    if x < SERIES_LIMIT {
        // Σ_{k≥2} (−1)^k (k − 1) x^k / k!
        let mut power = x * x / 2.0;
        let mut sum = 0.0;
        for k in 2..SERIES_TERMS {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            sum += sign * (k as f64 - 1.0) * power;
            power *= x / (k as f64 + 1.0);
        }
        sum
    } else {
        let decay = (-x).exp();
        1.0 - decay - x * decay
    }
}

/// `x + x e^{−x} − 2 (1 − e^{−x})`.
fn xi_unit(x: f64) -> f64 {
    if x < SERIES_LIMIT {
        // Σ_{k≥3} (−1)^k (2 − k) x^k / k!
        let mut power = x * x * x / 6.0;
        let mut sum = 0.0;
        for k in 3..SERIES_TERMS {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            sum += sign * (2.0 - k as f64) * power;
            power *= x / (k as f64 + 1.0);
        }
        sum
    } else {
        x * (1.0 + (-x).exp()) + 2.0 * (-x).exp_m1()
    }
}

/// Bernoulli numbers B₂, B₄, …, B₂₂.
const BERNOULLI_EVEN: [f64; 11] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
    43867.0 / 798.0,
    -174611.0 / 330.0,
    854513.0 / 138.0,
];

/// `a/δt = 1/x − 1/(e^x − 1)`.
fn a_fraction(x: f64) -> f64 {
    if x < SERIES_LIMIT {
        // x/(e^x − 1) = 1 − x/2 + Σ B_{2k} x^{2k}/(2k)!
        let mut sum = 0.5;
        let mut factorial = 1.0;
        let mut power = 1.0;
        for (k, b) in BERNOULLI_EVEN.iter().enumerate() {
            let n = 2 * (k + 1);
            factorial *= ((n - 1) * n) as f64;
            power = if k == 0 { x } else { power * x * x };
            sum -= b * power / factorial;
        }
        sum
    } else {
        1.0 / x - 1.0 / x.exp_m1()
    }
}

/// `κ_ε(τ)`; zero at `τ = 0`, increasing to one.
pub fn kappa(epsilon: f64, tau: f64) -> f64 {
    if tau <= 0.0 {
        return 0.0;
    }
    kappa_unit(tau / (epsilon * epsilon))
}

/// `ξ_ε(δt) = ∫₀^δt κ_ε(r) dr`.
pub fn xi(epsilon: f64, dt: f64) -> f64 {
    if dt <= 0.0 {
        return 0.0;
    }
    let eps2 = epsilon * epsilon;
    let x = dt / eps2;
    if x < SERIES_LIMIT {
        // δt·(g(x)/x) keeps full relative precision when ε² is huge.
        dt * xi_unit(x) / x
    } else {
        eps2 * xi_unit(x)
    }
}

/// Mean of `r` under the weight `e^{−r/ε²}` on `[0, δt]`.
pub fn a_weighted(epsilon: f64, dt: f64) -> f64 {
    if dt <= 0.0 {
        return 0.0;
    }
    dt * a_fraction(dt / (epsilon * epsilon))
}

/// Propagator used for the free evolution `e^{−itH}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PropagatorBackend {
    /// Functional calculus on the cached spectrum of `H`.
    #[default]
    Exact,
    /// Cayley transform with the given number of substeps.
    CrankNicolson { substeps: usize },
}

/// Approximation of `e^{−itH}` by the chosen backend.
pub fn free_unitary(
    hamiltonians: &HamiltonianSet,
    t: f64,
    backend: PropagatorBackend,
) -> Result<CMatrix> {
    match backend {
        PropagatorBackend::Exact => Ok(hamiltonians.spectrum().unitary(t)),
        PropagatorBackend::CrankNicolson { substeps } => {
            crank_nicolson_propagator(hamiltonians.h(), t, substeps)
        }
    }
}

/// `S_{ε,τ}σ = e^{−τ} e^{−iετH} σ e^{iετH}`.
pub fn damped_free_map(
    sigma: &DensityOperator,
    epsilon: f64,
    tau: f64,
    hamiltonians: &HamiltonianSet,
) -> DensityOperator {
    propagate_exact(sigma, hamiltonians.spectrum(), epsilon * tau).scaled((-tau).exp())
}

/// `Ŝ σ = e^{−δt/ε²} U σ U*` with `U` the Crank–Nicolson approximation of
/// `e^{−iδtH/ε}`.
pub fn discrete_damped_free_map(
    sigma: &DensityOperator,
    epsilon: f64,
    dt: f64,
    h: &DMatrix<f64>,
    substeps: usize,
) -> Result<DensityOperator> {
    let u = crank_nicolson_propagator(h, dt / epsilon, substeps)?;
    let damping = (-dt / (epsilon * epsilon)).exp();
    let conjugated = linalg::conjugate(&u, sigma.matrix());
    Ok(DensityOperator::from_parts_unchecked(
        conjugated.scale(damping),
        sigma.spacing(),
    ))
}
