//! Density operators on the grid and their observables.
//!
//! Operators are stored in kernel scaling: the matrix entry `(i, j)` is
//! `h·ϱ(x_i, x_j)`, so the matrix trace equals `∫ n dx` and the local density
//! is the diagonal divided by `h`. The matrix also represents the action of
//! the operator on grid values, so its eigenvalues are those of the operator.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::DerivativeOperator;
use crate::linalg::{self, CMatrix, Spectrum};

/// Relative Hermiticity tolerance accepted by the observables.
pub const HERMITICITY_TOL: f64 = 1e-12;

/// Hermitian operator in kernel scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    matrix: CMatrix,
    spacing: f64,
}

/// Eigenvalues in descending order with orthonormal eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: CMatrix,
}

impl SpectralDecomposition {
    pub fn reconstruct(&self) -> CMatrix {
        let n = self.eigenvalues.len();
        let scaled = CMatrix::from_fn(n, n, |i, p| self.eigenvectors[(i, p)] * self.eigenvalues[p]);
        scaled * self.eigenvectors.adjoint()
    }
}

/// Local density, current and divergence of the current.
#[derive(Debug, Clone, PartialEq)]
pub struct Observables {
    pub density: DVector<f64>,
    pub current: DVector<f64>,
    pub div_current: DVector<f64>,
}

impl DensityOperator {
    /// Wraps a matrix; fails if it is not square or not Hermitian to
    /// [`HERMITICITY_TOL`] relative to its largest entry.
    pub fn new(matrix: CMatrix, spacing: f64) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::InvalidState(format!(
                "operator must be square, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if !(spacing > 0.0) {
            return Err(Error::InvalidState(format!(
                "spacing must be positive, got {spacing}"
            )));
        }
        if matrix
            .iter()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::InvalidState(
                "operator has non-finite entries".into(),
            ));
        }
        let op = Self { matrix, spacing };
        op.check_hermitian()?;
        Ok(op)
    }

    pub fn from_real(matrix: &DMatrix<f64>, spacing: f64) -> Result<Self> {
        Self::new(linalg::to_complex(matrix), spacing)
    }

    /// `(h/L)·I`-style uniform state with the requested total mass.
    pub fn uniform(n: usize, spacing: f64, mass: f64) -> Self {
        let value = Complex64::new(mass / n as f64, 0.0);
        Self {
            matrix: CMatrix::from_diagonal_element(n, n, value),
            spacing,
        }
    }

    /// Wraps without validation; the caller guarantees Hermiticity.
    pub(crate) fn from_parts_unchecked(matrix: CMatrix, spacing: f64) -> Self {
        Self { matrix, spacing }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.matrix.diagonal().iter().map(|z| z.re).sum()
    }

    pub fn hermiticity_residual(&self) -> f64 {
        linalg::hermiticity_residual(&self.matrix)
    }

    fn check_hermitian(&self) -> Result<()> {
        let residual = self.hermiticity_residual();
        let scale = linalg::max_abs(&self.matrix);
        if residual > HERMITICITY_TOL * scale.max(f64::MIN_POSITIVE) && residual > 0.0 {
            return Err(Error::InvalidState(format!(
                "operator is not Hermitian (residual {residual:.3e}, scale {scale:.3e})"
            )));
        }
        Ok(())
    }

    /// Replaces the matrix by its Hermitian part; returns the residual before.
    pub fn symmetrize(&mut self) -> f64 {
        let residual = self.hermiticity_residual();
        self.matrix = linalg::hermitian_part(&self.matrix);
        residual
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::from_parts_unchecked(self.matrix.scale(factor), self.spacing)
    }

    pub fn spectral_decomposition(&self) -> SpectralDecomposition {
        let (eigenvalues, eigenvectors) = linalg::hermitian_eigen(&self.matrix);
        SpectralDecomposition {
            eigenvalues,
            eigenvectors,
        }
    }

    pub fn eigenvalues(&self) -> DVector<f64> {
        linalg::hermitian_eigenvalues(&self.matrix)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn density(&self) -> DVector<f64> {
        DVector::from_fn(self.dim(), |i, _| self.matrix[(i, i)].re / self.spacing)
    }

    /// `j_i = (2/h) Im (D M)_ii`.
    pub fn current(&self, derivative: &DerivativeOperator) -> DVector<f64> {
        let d = derivative.matrix();
        let n = self.dim();
        DVector::from_fn(n, |i, _| {
            let diag: Complex64 = (0..n).map(|k| self.matrix[(k, i)] * d[(i, k)]).sum();
            2.0 * diag.im / self.spacing
        })
    }

    pub fn div_current(&self, derivative: &DerivativeOperator) -> DVector<f64> {
        derivative.apply(&self.current(derivative))
    }

    pub fn observables(&self, derivative: &DerivativeOperator) -> Observables {
        let current = self.current(derivative);
        let div_current = derivative.apply(&current);
        Observables {
            density: self.density(),
            current,
            div_current,
        }
    }
}

impl std::ops::Sub for &DensityOperator {
    type Output = DensityOperator;

    fn sub(self, rhs: &DensityOperator) -> DensityOperator {
        DensityOperator::from_parts_unchecked(&self.matrix - &rhs.matrix, self.spacing)
    }
}

/// Local density `n_i = Re M_ii / h`; rejects non-Hermitian input.
pub fn density(rho: &DensityOperator) -> Result<DVector<f64>> {
    rho.check_hermitian()?;
    Ok(rho.density())
}

pub fn current(rho: &DensityOperator, derivative: &DerivativeOperator) -> Result<DVector<f64>> {
    rho.check_hermitian()?;
    check_shape(rho.dim(), derivative.matrix().nrows())?;
    Ok(rho.current(derivative))
}

pub fn div_current(rho: &DensityOperator, derivative: &DerivativeOperator) -> Result<DVector<f64>> {
    rho.check_hermitian()?;
    check_shape(rho.dim(), derivative.matrix().nrows())?;
    Ok(rho.div_current(derivative))
}

fn check_shape(expected: usize, found: usize) -> Result<()> {
    crate::error::check_len(expected, found)
}

/// `AB − BA`.
pub fn commutator(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    if !a.is_square() || a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            expected: a.nrows(),
            found: b.nrows(),
        });
    }
    Ok(a * b - b * a)
}

/// `Tr |σ| = Σ |λ_p|`.
pub fn trace_norm(sigma: &DensityOperator) -> f64 {
    sigma.eigenvalues().iter().map(|l| l.abs()).sum()
}

/// `Tr |σ| + Tr(H₀ |σ| H₀) = Σ |λ_p| (1 + ‖H₀ ψ_p‖²)`.
pub fn e2_norm(sigma: &DensityOperator, h0: &DMatrix<f64>) -> f64 {
    let spec = sigma.spectral_decomposition();
    let h0_vectors = linalg::to_complex(h0) * &spec.eigenvectors;
    spec.eigenvalues
        .iter()
        .enumerate()
        .map(|(p, l)| l.abs() * (1.0 + h0_vectors.column(p).norm_squared()))
        .sum()
}

/// `e^{−itH} σ e^{itH}` from the cached spectrum of `H`.
pub fn propagate_exact(sigma: &DensityOperator, spectrum: &Spectrum, t: f64) -> DensityOperator {
    if t == 0.0 {
        return sigma.clone();
    }
    let u = spectrum.unitary(t);
    DensityOperator::from_parts_unchecked(linalg::conjugate(&u, sigma.matrix()), sigma.spacing())
}

/// Cayley (Crank–Nicolson) approximation of `e^{−iτH}` applied `substeps` times
/// with step `τ/substeps`.
pub fn crank_nicolson_propagator(h: &DMatrix<f64>, tau: f64, substeps: usize) -> Result<CMatrix> {
    if substeps == 0 {
        return Err(Error::InvalidInput("substeps must be at least 1".into()));
    }
    if !tau.is_finite() {
        return Err(Error::InvalidInput(format!(
            "time step must be finite, got {tau}"
        )));
    }
    let n = h.nrows();
    let identity = CMatrix::identity(n, n);
    if tau == 0.0 {
        return Ok(identity);
    }
    let half = Complex64::new(0.0, 0.5 * tau / substeps as f64);
    let hc = linalg::to_complex(h);
    let implicit = &identity + hc.map(|z| z * half);
    let explicit = &identity - hc.map(|z| z * half);
    let step = implicit
        .lu()
        .solve(&explicit)
        .ok_or_else(|| Error::NumericalFailure("singular Crank-Nicolson system".into()))?;
    let mut u = step.clone();
    for _ in 1..substeps {
        u = &step * u;
    }
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_hermitian() {
        let mut m = CMatrix::identity(2, 2);
        m[(0, 1)] = Complex64::new(1.0, 0.0);
        assert!(matches!(
            DensityOperator::new(m, 0.5),
            Err(Error::InvalidState(_))
        ));
    }

    #[test]
    fn trace_norm_and_e2_of_signed_diagonal() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]));
        let sigma = DensityOperator::from_real(&m, 1.0).unwrap();
        assert!((trace_norm(&sigma) - 2.0).abs() < 1e-14);
        assert!((e2_norm(&sigma, &DMatrix::zeros(2, 2)) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn commutator_shape_mismatch() {
        let a = CMatrix::identity(2, 2);
        let b = CMatrix::identity(3, 3);
        assert!(commutator(&a, &b).is_err());
    }

    #[test]
    fn crank_nicolson_zero_step_is_identity() {
        let h = DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]);
        let u = crank_nicolson_propagator(&h, 0.0, 3).unwrap();
        assert_eq!(u, CMatrix::identity(2, 2));
        assert!(crank_nicolson_propagator(&h, 0.1, 0).is_err());
    }
}
