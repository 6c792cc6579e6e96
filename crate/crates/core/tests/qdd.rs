mod common;

use std::f64::consts::PI;

use approx::assert_abs_diff_eq;
use nalgebra::DVector;
use qlbgk_core::equilibrium::DualFunctional;
use qlbgk_core::optimize::Backend;
use qlbgk_core::qdd::{evaluate_j, gradient_j};
use qlbgk_core::{solve_step, DerivativeMethod, Problem, QddOptions, QddStepInput};
use rand::Rng;

fn input<'a>(
    p: &'a Problem,
    n_prev: &'a DVector<f64>,
    source: &'a DVector<f64>,
    xi: f64,
) -> QddStepInput<'a> {
    QddStepInput {
        n_prev,
        source,
        xi,
        hamiltonians: &p.hamiltonians,
        derivative: &p.derivative,
        temperature: p.temperature,
    }
}

fn zero_mean(rng: &mut impl Rng, n: usize, scale: f64) -> DVector<f64> {
    let v = common::random_vector(rng, n, scale);
    let mean = v.mean();
    v.add_scalar(-mean)
}

/// `n_next − n_prev + ξ D(n_prev ∘ DA) − f`.
fn euler_lagrange(
    p: &Problem,
    inp: &QddStepInput,
    a: &DVector<f64>,
    n_next: &DVector<f64>,
) -> DVector<f64> {
    let d = &p.derivative;
    let flux = inp.n_prev.component_mul(&d.apply(a));
    n_next - inp.n_prev + d.apply(&flux) * inp.xi - inp.source
}

#[test]
fn j_at_zero_is_the_partition_function() {
    let p = common::standard_problem();
    let mut rng = common::rng(40);
    let n = common::smooth_density(&mut rng, p.grid(), 1.0);
    let f = zero_mean(&mut rng, 32, 0.1);
    let z: f64 = p
        .hamiltonians
        .spectrum()
        .values()
        .iter()
        .map(|l| (-l).exp())
        .sum();
    let j = evaluate_j(&DVector::zeros(32), &input(&p, &n, &f, 0.3)).unwrap();
    assert_abs_diff_eq!(j, z, epsilon = 1e-12 * z);
}

#[test]
fn without_transport_and_source_j_is_the_dual_functional() {
    let p = common::standard_problem();
    let mut rng = common::rng(41);
    let n = common::smooth_density(&mut rng, p.grid(), 1.0);
    let zero = DVector::zeros(32);
    let dual = DualFunctional {
        target: &n,
        h: p.h(),
        spacing: p.spacing(),
        temperature: p.temperature,
    };
    for _ in 0..5 {
        let a = common::random_vector(&mut rng, 32, 1.0);
        let j = evaluate_j(&a, &input(&p, &n, &zero, 0.0)).unwrap();
        let g = dual.value(&a).unwrap();
        assert_abs_diff_eq!(j, g, epsilon = 1e-12 * g.abs());
    }
    let theta = p.equilibrium(&n).unwrap();
    let grad = gradient_j(theta.potential().values(), &input(&p, &n, &zero, 0.0)).unwrap();
    assert!(grad.lp_norm(1) <= 1e-9);
}

#[test]
fn gradient_matches_finite_differences() {
    let p = common::problem(16, 2.0 * PI, DerivativeMethod::Spectral);
    let mut rng = common::rng(42);
    for _ in 0..10 {
        let mass = rng.gen_range(0.5..2.0);
        let n = common::smooth_density(&mut rng, p.grid(), mass);
        let f = zero_mean(&mut rng, 16, 0.05);
        let xi = rng.gen_range(0.0..0.05);
        let inp = input(&p, &n, &f, xi);
        let a = common::random_vector(&mut rng, 16, 1.0);
        let exact = gradient_j(&a, &inp).unwrap();
        let fd = common::fd_gradient(|x| evaluate_j(x, &inp).unwrap(), &a, 1e-5);
        let rel = (&exact - &fd).norm() / exact.norm();
        assert!(rel <= 1e-6, "{rel:e}");
    }
}

#[test]
fn gradient_is_scaled_euler_lagrange_residual() {
    let p = common::standard_problem();
    let mut rng = common::rng(43);
    let n = common::smooth_density(&mut rng, p.grid(), 1.0);
    let f = zero_mean(&mut rng, 32, 0.05);
    let inp = input(&p, &n, &f, 0.02);
    let a = common::random_vector(&mut rng, 32, 0.5);
    let theta = qlbgk_core::equilibrium::maxwellian_from_potential(
        &qlbgk_core::ChemicalPotential::new(a.clone()).unwrap(),
        p.h(),
        p.spacing(),
        p.temperature,
    )
    .unwrap();
    let residual = euler_lagrange(&p, &inp, &a, &theta.density());
    let grad = gradient_j(&a, &inp).unwrap();
    assert_abs_diff_eq!(grad, -residual * p.spacing(), epsilon = 1e-12);
}

#[test]
fn j_is_convex() {
    let p = common::problem(16, 2.0 * PI, DerivativeMethod::Spectral);
    let mut rng = common::rng(44);
    let n = common::smooth_density(&mut rng, p.grid(), 1.0);
    let f = zero_mean(&mut rng, 16, 0.05);
    let inp = input(&p, &n, &f, 0.1);
    for _ in 0..50 {
        let a = common::random_vector(&mut rng, 16, 2.0);
        let b = common::random_vector(&mut rng, 16, 2.0);
        let mid = (&a + &b) * 0.5;
        let (ja, jb, jm) = (
            evaluate_j(&a, &inp).unwrap(),
            evaluate_j(&b, &inp).unwrap(),
            evaluate_j(&mid, &inp).unwrap(),
        );
        assert!(jm <= 0.5 * (ja + jb) + 1e-10 * (ja.abs() + jb.abs()));
    }
}

#[test]
fn constant_density_is_stationary() {
    let p = common::standard_problem();
    let n = DVector::from_element(32, 0.8);
    let zero = DVector::zeros(32);
    let step = solve_step(&input(&p, &n, &zero, 0.05), &QddOptions::default(), None).unwrap();
    assert!(step.residual <= 1e-10);
    assert!((&step.n_next - &n).amax() <= 1e-10);
    let a = step.a_next.values();
    assert!(a.max() - a.min() <= 1e-10);
}

#[test]
fn step_solves_the_euler_lagrange_equation_and_conserves_mass() {
    let p = common::standard_problem();
    let mut rng = common::rng(45);
    for k in 0..6 {
        let n = common::smooth_density(&mut rng, p.grid(), 1.0);
        let f = zero_mean(&mut rng, 32, 0.02);
        let xi = [0.0, 1e-4, 1e-3, 0.01, 0.04, 0.1][k];
        let inp = input(&p, &n, &f, xi);
        let step = solve_step(&inp, &QddOptions::default(), None).unwrap();
        let residual = euler_lagrange(&p, &inp, step.a_next.values(), &step.n_next);
        assert!(
            residual.lp_norm(1) <= 1e-9,
            "ξ = {xi}: {:e}",
            residual.lp_norm(1)
        );
        assert!(step.n_next.min() > 0.0);
        assert_eq!(step.n_next, step.theta_next.density());
        let h = p.spacing();
        let before = h * (n.sum() + f.sum());
        assert!(common::relative(h * step.n_next.sum(), before) <= 1e-10);
    }
}

#[test]
fn newton_and_gradient_descent_agree() {
    let p = common::problem(16, 2.0 * PI, DerivativeMethod::Spectral);
    let mut rng = common::rng(46);
    for _ in 0..4 {
        let n = common::smooth_density(&mut rng, p.grid(), 1.0);
        let f = zero_mean(&mut rng, 16, 0.02);
        let inp = input(&p, &n, &f, 0.02);
        let newton = QddOptions {
            backend: Backend::Newton,
            tolerance: 1e-11,
            ..Default::default()
        };
        let gd = QddOptions {
            backend: Backend::GradientDescent,
            tolerance: 1e-11,
            max_iterations: 20_000,
        };
        let a = solve_step(&inp, &newton, None).unwrap().a_next;
        let b = solve_step(&inp, &gd, None).unwrap().a_next;
        assert!((a.values() - b.values()).amax() <= 1e-6);
    }
}

#[test]
fn warm_start_reaches_the_same_minimizer() {
    let p = common::standard_problem();
    let mut rng = common::rng(47);
    let n = common::smooth_density(&mut rng, p.grid(), 1.0);
    let f = zero_mean(&mut rng, 32, 0.02);
    let inp = input(&p, &n, &f, 0.01);
    let cold = solve_step(&inp, &QddOptions::default(), None).unwrap();
    let guess = p.equilibrium(&n).unwrap();
    let warm = solve_step(&inp, &QddOptions::default(), Some(guess.potential())).unwrap();
    assert!((cold.a_next.values() - warm.a_next.values()).amax() <= 1e-8);
}

#[test]
fn budget_exhaustion_is_reported() {
    let p = common::standard_problem();
    let mut rng = common::rng(48);
    let n = common::smooth_density(&mut rng, p.grid(), 1.0);
    let zero = DVector::zeros(32);
    let opts = QddOptions {
        max_iterations: 1,
        tolerance: 1e-14,
        ..Default::default()
    };
    let err = solve_step(&input(&p, &n, &zero, 0.05), &opts, None).unwrap_err();
    assert!(matches!(err, qlbgk_core::Error::NonConvergence { .. }));
}
