//! wasm-bindgen bindings for `www/index.html`.
//!
//! The `*_values` functions and [`Evolution`] are plain Rust so they can be
//! tested natively; the exported wrappers only translate errors.

use nalgebra::DVector;
use qlbgk_core::solvers::{ap_step, ApOptions, SchemeState};
use qlbgk_core::{a_weighted, build_grid, kappa, xi, DerivativeMethod, KernelParams, Problem};
use wasm_bindgen::prelude::*;

fn problem(n_points: usize) -> Result<Problem, String> {
    let grid = build_grid(n_points, std::f64::consts::TAU).map_err(|e| e.to_string())?;
    Problem::new(
        &grid,
        DVector::zeros(n_points),
        DerivativeMethod::Spectral,
        1.0,
    )
    .map_err(|e| e.to_string())
}

/// `[δt, κ_ε(δt), ξ_ε(δt), a_ε(δt)]` repeated for `samples` step sizes
/// spaced logarithmically in `[1e−4, dt_max]`.
pub fn kernel_values(epsilon: f64, dt_max: f64, samples: usize) -> Result<Vec<f64>, String> {
    if !(epsilon > 0.0 && dt_max > 1e-4 && samples >= 2) {
        return Err(format!(
            "need ε > 0, δt_max > 1e−4, samples ≥ 2 (got {epsilon}, {dt_max}, {samples})"
        ));
    }
    let (lo, hi) = (1e-4f64.ln(), dt_max.ln());
    Ok((0..samples)
        .flat_map(|i| {
            let dt = (lo + (hi - lo) * i as f64 / (samples - 1) as f64).exp();
            [
                dt,
                kappa(epsilon, dt),
                xi(epsilon, dt),
                a_weighted(epsilon, dt),
            ]
        })
        .collect())
}

/// Chemical potential of a positive profile followed by the density of the
/// resulting equilibrium, concatenated.
pub fn equilibrium_values(profile: &[f64]) -> Result<Vec<f64>, String> {
    if profile.iter().any(|v| !(*v > 0.0)) {
        return Err("profile must be positive".into());
    }
    let p = problem(profile.len())?;
    let theta = p
        .equilibrium(&DVector::from_column_slice(profile))
        .map_err(|e| e.to_string())?;
    let mut out: Vec<f64> = theta.potential().values().iter().copied().collect();
    out.extend(theta.density().iter());
    Ok(out)
}

/// AP evolution of `θ[n₀]` with `n₀ = (1 + amplitude cos x)/2π`.
#[wasm_bindgen]
pub struct Evolution {
    problem: Problem,
    params: KernelParams,
    options: ApOptions,
    state: SchemeState,
}

impl Evolution {
    pub fn create(n_points: usize, epsilon: f64, dt: f64, amplitude: f64) -> Result<Self, String> {
        let problem = problem(n_points)?;
        let params = KernelParams::new(epsilon, dt).map_err(|e| e.to_string())?;
        let n0 = problem
            .cosine_density(1.0, amplitude, 1)
            .map_err(|e| e.to_string())?;
        let rho = problem.well_prepared(&n0).map_err(|e| e.to_string())?;
        let state = SchemeState::initial(rho).map_err(|e| e.to_string())?;
        Ok(Self {
            problem,
            params,
            options: ApOptions::default(),
            state,
        })
    }

    pub fn advance(&mut self, steps: usize) -> Result<(), String> {
        for _ in 0..steps {
            let (next, _) = ap_step(&self.state, &self.params, &self.problem, &self.options)
                .map_err(|e| e.to_string())?;
            self.state = next;
        }
        Ok(())
    }
}

#[wasm_bindgen]
impl Evolution {
    #[wasm_bindgen(constructor)]
    pub fn new(
        n_points: usize,
        epsilon: f64,
        dt: f64,
        amplitude: f64,
    ) -> Result<Evolution, JsError> {
        Self::create(n_points, epsilon, dt, amplitude).map_err(|e| JsError::new(&e))
    }

    pub fn step(&mut self, steps: usize) -> Result<(), JsError> {
        self.advance(steps).map_err(|e| JsError::new(&e))
    }

    pub fn time(&self) -> f64 {
        self.state.time
    }

    pub fn density(&self) -> Vec<f64> {
        self.state.density.iter().copied().collect()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.state.rho.eigenvalues().min()
    }
}

#[wasm_bindgen]
pub fn kernel_curves(epsilon: f64, dt_max: f64, samples: usize) -> Result<Vec<f64>, JsError> {
    kernel_values(epsilon, dt_max, samples).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn equilibrium(profile: &[f64]) -> Result<Vec<f64>, JsError> {
    equilibrium_values(profile).map_err(|e| JsError::new(&e))
}
