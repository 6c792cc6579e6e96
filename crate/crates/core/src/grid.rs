//! Periodic one-dimensional grid, differentiation matrices and Hamiltonians.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::linalg::Spectrum;

/// Uniform periodic grid on `[0, length)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    n_points: usize,
    length: f64,
    spacing: f64,
}

impl GridSpec {
    pub fn new(n_points: usize, length: f64) -> Result<Self> {
        if n_points < 2 {
            return Err(Error::InvalidConfig(format!(
                "grid needs at least 2 points, got {n_points}"
            )));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "grid length must be positive and finite, got {length}"
            )));
        }
        Ok(Self {
            n_points,
            length,
            spacing: length / n_points as f64,
        })
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn node(&self, i: usize) -> f64 {
        i as f64 * self.spacing
    }

    pub fn nodes(&self) -> DVector<f64> {
        DVector::from_fn(self.n_points, |i, _| self.node(i))
    }

    /// Grid quadrature `h Σ u_i`.
    pub fn integrate(&self, values: &DVector<f64>) -> f64 {
        self.spacing * values.sum()
    }

    /// Discrete L¹ norm `h Σ |u_i|`.
    pub fn l1_norm(&self, values: &DVector<f64>) -> f64 {
        self.spacing * values.iter().map(|v| v.abs()).sum::<f64>()
    }

    /// Angular wavenumber of Fourier mode `m`.
    pub fn wavenumber(&self, m: usize) -> f64 {
        2.0 * PI * m as f64 / self.length
    }
}

/// Same as [`GridSpec::new`].
pub fn build_grid(n_points: usize, length: f64) -> Result<GridSpec> {
    GridSpec::new(n_points, length)
}

/// Discretization backend for first and second derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DerivativeMethod {
    #[default]
    Spectral,
    CentralDifference,
}

/// Real antisymmetric first-derivative matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeOperator {
    matrix: DMatrix<f64>,
    method: DerivativeMethod,
}

impl DerivativeOperator {
    pub fn new(grid: &GridSpec, method: DerivativeMethod) -> Self {
        let n = grid.n_points();
        let mut matrix = DMatrix::zeros(n, n);
        match method {
            DerivativeMethod::Spectral => {
                // Resolved modes 1..=max_mode; the Nyquist mode has a zero multiplier.
                let max_mode = (n - 1) / 2;
                for j in 0..n {
                    for l in (j + 1)..n {
                        let d = grid.node(j) - grid.node(l);
                        let entry = -(2.0 / n as f64)
                            * (1..=max_mode)
                                .map(|m| {
                                    let k = grid.wavenumber(m);
                                    k * (k * d).sin()
                                })
                                .sum::<f64>();
                        matrix[(j, l)] = entry;
                        matrix[(l, j)] = -entry;
                    }
                }
            }
            DerivativeMethod::CentralDifference => {
                let c = 0.5 / grid.spacing();
                for i in 0..n {
                    matrix[(i, (i + 1) % n)] += c;
                    matrix[(i, (i + n - 1) % n)] -= c;
                }
            }
        }
        Self { matrix, method }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn method(&self) -> DerivativeMethod {
        self.method
    }

    pub fn apply(&self, values: &DVector<f64>) -> DVector<f64> {
        &self.matrix * values
    }
}

pub fn build_derivative(grid: &GridSpec, method: DerivativeMethod) -> DerivativeOperator {
    DerivativeOperator::new(grid, method)
}

/// Negative Laplacian with periodic closure, symmetric and positive semidefinite.
pub fn negative_laplacian(grid: &GridSpec, method: DerivativeMethod) -> DMatrix<f64> {
    let n = grid.n_points();
    let mut h0 = DMatrix::zeros(n, n);
    match method {
        DerivativeMethod::Spectral => {
            let max_mode = (n - 1) / 2;
            let nyquist = if n.is_multiple_of(2) {
                Some(grid.wavenumber(n / 2).powi(2))
            } else {
                None
            };
            for j in 0..n {
                for l in j..n {
                    let d = grid.node(j) - grid.node(l);
                    let mut entry = 2.0
                        * (1..=max_mode)
                            .map(|m| {
                                let k = grid.wavenumber(m);
                                k * k * (k * d).cos()
                            })
                            .sum::<f64>();
                    if let Some(k2) = nyquist {
                        entry += if (l - j) % 2 == 0 { k2 } else { -k2 };
                    }
                    entry /= n as f64;
                    h0[(j, l)] = entry;
                    h0[(l, j)] = entry;
                }
            }
        }
        DerivativeMethod::CentralDifference => {
            let c = 1.0 / grid.spacing().powi(2);
            for i in 0..n {
                h0[(i, i)] += 2.0 * c;
                h0[(i, (i + 1) % n)] -= c;
                h0[(i, (i + n - 1) % n)] -= c;
            }
        }
    }
    h0
}

/// `H₀ = −Δ`, the potential `V` and `H = H₀ + V`, with the spectrum of `H`
/// computed once at construction.
#[derive(Debug, Clone)]
pub struct HamiltonianSet {
    grid: GridSpec,
    method: DerivativeMethod,
    h0: DMatrix<f64>,
    potential: DVector<f64>,
    h: DMatrix<f64>,
    spectrum: Spectrum,
}

impl HamiltonianSet {
    pub fn new(grid: &GridSpec, potential: DVector<f64>, method: DerivativeMethod) -> Result<Self> {
        check_len(grid.n_points(), potential.len())
            .map_err(|e| Error::InvalidConfig(format!("potential: {e}")))?;
        if potential.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("potential must be finite".into()));
        }
        let h0 = negative_laplacian(grid, method);
        let mut h = h0.clone();
        for (i, v) in potential.iter().enumerate() {
            h[(i, i)] += v;
        }
        let spectrum = Spectrum::of(&h);
        Ok(Self {
            grid: *grid,
            method,
            h0,
            potential,
            h,
            spectrum,
        })
    }

    pub fn free(grid: &GridSpec, method: DerivativeMethod) -> Result<Self> {
        Self::new(grid, DVector::zeros(grid.n_points()), method)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn method(&self) -> DerivativeMethod {
        self.method
    }

    pub fn h0(&self) -> &DMatrix<f64> {
        &self.h0
    }

    pub fn potential(&self) -> &DVector<f64> {
        &self.potential
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    /// Cached eigendecomposition of `H`.
    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }
}

pub fn build_hamiltonians(
    grid: &GridSpec,
    potential: DVector<f64>,
    method: DerivativeMethod,
) -> Result<HamiltonianSet> {
    HamiltonianSet::new(grid, potential, method)
}
