#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use qlbgk_core::linalg::CMatrix;
use qlbgk_core::{build_grid, DensityOperator, DerivativeMethod, GridSpec, Problem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// N = 32, L = 2π, T_e = 1, V = 0, spectral.
pub fn standard_problem() -> Problem {
    problem(32, 2.0 * PI, DerivativeMethod::Spectral)
}

pub fn problem(n: usize, length: f64, method: DerivativeMethod) -> Problem {
    let grid = build_grid(n, length).unwrap();
    Problem::new(&grid, DVector::zeros(n), method, 1.0).unwrap()
}

/// `(mass/L)(1 + Σ a_m cos(k_m x + φ_m))` over the first three modes with
/// `Σ |a_m| ≤ 0.6`.
pub fn smooth_density(rng: &mut impl Rng, grid: &GridSpec, mass: f64) -> DVector<f64> {
    let modes: Vec<(f64, f64, f64)> = (1..=3)
        .map(|m| {
            (
                rng.gen_range(-0.2..0.2),
                rng.gen_range(0.0..2.0 * PI),
                grid.wavenumber(m),
            )
        })
        .collect();
    grid.nodes().map(|x| {
        let wave: f64 = modes
            .iter()
            .map(|(a, phi, k)| a * (k * x + phi).cos())
            .sum();
        mass / grid.length() * (1.0 + wave)
    })
}

pub fn random_complex(rng: &mut impl Rng, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| {
        Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    })
}

pub fn random_hermitian(rng: &mut impl Rng, n: usize) -> CMatrix {
    let g = random_complex(rng, n, n);
    (&g + g.adjoint()).scale(0.5)
}

/// Random PSD operator `G G*` of rank `rank`, scaled to trace `trace`.
pub fn random_psd(
    rng: &mut impl Rng,
    n: usize,
    rank: usize,
    spacing: f64,
    trace: f64,
) -> DensityOperator {
    let g = random_complex(rng, n, rank);
    let m = &g * g.adjoint();
    let m = m.scale(trace / m.trace().re);
    let m = (&m + m.adjoint()).scale(0.5);
    DensityOperator::new(m, spacing).unwrap()
}

pub fn random_vector(rng: &mut impl Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(-scale..scale))
}

/// Central finite-difference gradient with step `step`.
pub fn fd_gradient(f: impl Fn(&DVector<f64>) -> f64, x: &DVector<f64>, step: f64) -> DVector<f64> {
    DVector::from_fn(x.len(), |i, _| {
        let mut plus = x.clone();
        let mut minus = x.clone();
        plus[i] += step;
        minus[i] -= step;
        (f(&plus) - f(&minus)) / (2.0 * step)
    })
}

/// Double-exponential quadrature on `[a, b]`, split at multiples of
/// `scale` so that boundary layers of width `scale` are resolved.
pub fn integrate(f: impl Fn(f64) -> f64 + Copy, a: f64, b: f64, scale: f64, tolerance: f64) -> f64 {
    let mut breaks = vec![a];
    let mut x = a + scale;
    while x < b && breaks.len() < 64 {
        breaks.push(x);
        x += scale * breaks.len() as f64;
    }
    breaks.push(b);
    breaks
        .windows(2)
        .map(|w| quadrature::integrate(f, w[0], w[1], tolerance).integral)
        .sum()
}

pub fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn real_max_abs(m: &DMatrix<f64>) -> f64 {
    m.amax()
}
