use num_complex::Complex64;

use super::{Problem, ReferenceRun};
use crate::error::{Error, Result};
use crate::kernels::{damped_free_map, kappa};
use crate::linalg;
use crate::operator::{e2_norm, DensityOperator};

/// Norms of the remainder `ς₁(s, t)` in the expansion of the mild solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sigma1Residual {
    pub s: f64,
    pub t: f64,
    pub e2_norm_value: f64,
    /// `‖∇·j[ς₁]‖₁` in grid L¹.
    pub div_current_l1: f64,
}

/// Largest reference substep accepted, as a fraction of `ε²`.
const RESOLUTION: f64 = 0.1;

/// ```text
/// ς₁ = ρ(t) − S_{ε,(t−s)/ε²}[ρ(s)] − θ[n(t)](1 − e^{−(t−s)/ε²}) + iε κ_ε(t−s) [H, θ[n(t)]]
/// ```
/// evaluated on a reference trajectory that samples both `s` and `t`.
pub fn sigma1_residual(
    problem: &Problem,
    reference: &ReferenceRun,
    s: f64,
    t: f64,
    epsilon: f64,
) -> Result<Sigma1Residual> {
    if !(epsilon > 0.0) || !(t >= s) {
        return Err(Error::InvalidInput(format!(
            "need ε > 0 and t ≥ s, got ε = {epsilon}, s = {s}, t = {t}"
        )));
    }
    if reference.substep > RESOLUTION * epsilon * epsilon {
        return Err(Error::InvalidInput(format!(
            "reference substep {:.3e} does not resolve ε² = {:.3e}",
            reference.substep,
            epsilon * epsilon
        )));
    }
    let sample = |time: f64| -> Result<&DensityOperator> {
        let traj = &reference.trajectory;
        let i = traj
            .nearest(time)
            .ok_or_else(|| Error::InvalidInput("empty reference trajectory".into()))?;
        if (traj.times[i] - time).abs() > 1e-9 * time.abs().max(1.0) {
            return Err(Error::InvalidInput(format!(
                "time {time} is not a reference sample (nearest {})",
                traj.times[i]
            )));
        }
        Ok(&traj.rhos[i])
    };
    let (rho_s, rho_t) = (sample(s)?, sample(t)?);
    let gap = t - s;
    let x = gap / (epsilon * epsilon);
    let theta = problem.equilibrium(&rho_t.density())?;
    let theta = linalg::to_complex(theta.real_matrix());
    let h = linalg::to_complex(problem.h());
    let commutator = &h * &theta - &theta * &h;
    let free = damped_free_map(rho_s, epsilon, x, &problem.hamiltonians);
    let residual = rho_t.matrix() - free.matrix() - theta.scale(-(-x).exp_m1())
        + commutator * Complex64::new(0.0, epsilon * kappa(epsilon, gap));
    let mut residual = DensityOperator::from_parts_unchecked(residual, problem.spacing());
    residual.symmetrize();
    let div = residual.div_current(&problem.derivative);
    Ok(Sigma1Residual {
        s,
        t,
        e2_norm_value: e2_norm(&residual, problem.h0()),
        div_current_l1: problem.grid().l1_norm(&div),
    })
}
