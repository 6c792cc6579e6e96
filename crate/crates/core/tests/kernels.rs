mod common;

use std::f64::consts::{E, PI};

use approx::assert_abs_diff_eq;
use qlbgk_core::kernels::{damped_free_map, discrete_damped_free_map};
use qlbgk_core::{
    a_weighted, build_grid, kappa, xi, DensityOperator, DerivativeMethod, HamiltonianSet,
};

fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// κ in units of x = τ/ε²: `∫₀^x s e^{−s} ds`.
fn kappa_oracle(x: f64) -> f64 {
    let f = |s: f64| s * (-s).exp();
    common::integrate(f, 0.0, x, 1.0, 1e-17)
}

/// `ξ = ε² ∫₀^X κ = ε² ∫₀^X (X − s) s e^{−s} ds`.
fn xi_oracle(epsilon: f64, dt: f64) -> f64 {
    let big_x = dt / (epsilon * epsilon);
    let f = move |s: f64| (big_x - s) * s * (-s).exp();
    epsilon * epsilon * common::integrate(f, 0.0, big_x, 1.0, 1e-17 * big_x.powi(3).min(big_x))
}

/// Mean of `r` under `e^{−r/ε²}` on `[0, δt]`.
fn a_oracle(epsilon: f64, dt: f64) -> f64 {
    let big_x = dt / (epsilon * epsilon);
    let moment = common::integrate(
        |s: f64| s * (-s).exp(),
        0.0,
        big_x,
        1.0,
        1e-17 * big_x.powi(2).min(1.0),
    );
    let mass = common::integrate(|s: f64| (-s).exp(), 0.0, big_x, 1.0, 1e-17 * big_x.min(1.0));
    epsilon * epsilon * moment / mass
}

#[test]
fn kappa_examples() {
    assert_eq!(kappa(0.5, 0.0), 0.0);
    assert_abs_diff_eq!(kappa(1.0, 1.0), 1.0 - 2.0 / E, epsilon = 1e-15);
    assert_abs_diff_eq!(kappa(1.0, 1.0), 0.264241, epsilon = 1e-6);
    assert_abs_diff_eq!(kappa(1e-3, 1.0), 1.0, epsilon = 1e-12);
}

#[test]
fn kappa_matches_quadrature() {
    for x in log_space(1e-8, 200.0, 41) {
        let oracle = kappa_oracle(x);
        let value = kappa(1.0, x);
        assert!(
            common::relative(value, oracle) <= 1e-12,
            "x = {x}: {value} vs {oracle}"
        );
    }
}

#[test]
fn xi_and_a_match_quadrature() {
    let mut worst: (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    for eps in log_space(1e-3, 10.0, 13) {
        for dt in log_space(1e-4, 1.0, 13) {
            let (x_err, a_err) = (
                common::relative(xi(eps, dt), xi_oracle(eps, dt)),
                common::relative(a_weighted(eps, dt), a_oracle(eps, dt)),
            );
            if x_err.max(a_err) > worst.0.max(worst.1) {
                worst = (x_err, a_err, eps, dt);
            }
        }
    }
    assert!(worst.0 <= 1e-12 && worst.1 <= 1e-12, "{worst:?}");
}

#[test]
fn xi_small_and_unit_cases() {
    // ε = 1, δt = 1e−3: ξ ≈ δt x²/6 with x = δt
    let v = xi(1.0, 1e-3);
    assert!(common::relative(v, xi_oracle(1.0, 1e-3)) <= 1e-12);
    assert!(common::relative(v, 1e-3 * 1e-6 / 6.0) <= 1e-3);
    assert!(common::relative(xi(1.0, 1.0), xi_oracle(1.0, 1.0)) <= 1e-12);
    assert_abs_diff_eq!(
        xi(1.0, 1.0),
        1.0 + 1.0 / E - 2.0 * (1.0 - 1.0 / E),
        epsilon = 1e-15
    );
}

#[test]
fn xi_approaches_dt_minus_two_eps_squared() {
    // For δt/ε² ≥ 50 the exponentials are below 2e−22, leaving δt − 2ε².
    for (eps, dt) in [(0.01, 0.005), (0.001, 0.01), (1e-4, 0.02)] {
        assert!(dt / (eps * eps) >= 50.0);
        assert!(common::relative(xi(eps, dt), dt - 2.0 * eps * eps) <= 1e-10);
    }
    assert!(common::relative(xi(1e-6, 0.01), 0.01) <= 1e-9);
}

#[test]
fn a_examples() {
    // x = δt/ε² = 1e−4 shifts the mean below δt/2 by δt·x/12.
    assert!(common::relative(a_weighted(10.0, 0.01), 0.005) <= 2e-5);
    assert!(common::relative(a_weighted(10.0, 0.01), 0.01 * (0.5 - 1e-4 / 12.0)) <= 1e-12);
    assert!(common::relative(a_weighted(0.01, 1.0), 1e-4) <= 1e-12);
    assert!(common::relative(a_weighted(0.01, 1e4), 1e-4) <= 1e-12);
}

#[test]
fn a_satisfies_the_moment_condition() {
    for eps in log_space(1e-3, 10.0, 9) {
        for dt in log_space(1e-4, 1.0, 9) {
            let a = a_weighted(eps, dt);
            let e2 = eps * eps;
            let w = move |r: f64| (-r / e2).exp();
            let mass = common::integrate(w, 0.0, dt, e2, 1e-18 * dt);
            let moment =
                common::integrate(move |r: f64| (r - a) * w(r), 0.0, dt, e2, 1e-18 * dt * dt);
            assert!(
                moment.abs() <= 1e-12 * dt * mass,
                "ε = {eps}, δt = {dt}: {moment:e}"
            );
        }
    }
}

#[test]
fn damped_free_map_examples() {
    let g = build_grid(8, 2.0 * PI).unwrap();
    let hams = HamiltonianSet::free(&g, DerivativeMethod::Spectral).unwrap();
    let mut rng = common::rng(30);
    let sigma = common::random_psd(&mut rng, 8, 8, g.spacing(), 1.0);
    assert_eq!(
        damped_free_map(&sigma, 0.3, 0.0, &hams).matrix(),
        sigma.matrix()
    );
    for tau in [0.1, 1.0, 7.0] {
        let out = damped_free_map(&sigma, 0.3, tau, &hams);
        assert!(common::relative(out.trace(), (-tau).exp() * sigma.trace()) <= 1e-12);
    }
    let f_h =
        DensityOperator::from_real(&hams.spectrum().map(|l| 1.0 / (1.0 + l)), g.spacing()).unwrap();
    let out = damped_free_map(&f_h, 0.5, 0.8, &hams);
    assert!(common::max_abs(&(out.matrix() - f_h.matrix().scale((-0.8f64).exp()))) <= 1e-13);
}

#[test]
fn discrete_damped_map_converges_at_second_order() {
    let g = build_grid(8, 2.0 * PI).unwrap();
    let hams = HamiltonianSet::free(&g, DerivativeMethod::Spectral).unwrap();
    let mut rng = common::rng(31);
    let sigma = common::random_psd(&mut rng, 8, 8, g.spacing(), 1.0);
    let (eps, dt) = (0.5, 0.1);
    let exact = damped_free_map(&sigma, eps, dt / (eps * eps), &hams);
    let err = |m: usize| {
        let approx = discrete_damped_free_map(&sigma, eps, dt, hams.h(), m).unwrap();
        common::max_abs(&(approx.matrix() - exact.matrix()))
    };
    let errors: Vec<f64> = [8, 16, 32].iter().map(|&m| err(m)).collect();
    for w in errors.windows(2) {
        let ratio = w[0] / w[1];
        assert!((3.8..4.2).contains(&ratio), "{errors:?}");
    }
    let same = discrete_damped_free_map(&sigma, eps, 0.0, hams.h(), 3).unwrap();
    assert!(common::max_abs(&(same.matrix() - sigma.matrix())) <= 1e-15);
    let out = discrete_damped_free_map(&sigma, 1e-3, 1.0, hams.h(), 1).unwrap();
    assert_eq!(out.trace(), 0.0);
}
