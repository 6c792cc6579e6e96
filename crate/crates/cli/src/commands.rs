use std::path::PathBuf;

use nalgebra::DVector;
use qlbgk_core::equilibrium::DualFunctional;
use qlbgk_core::kernels::free_unitary;
use qlbgk_core::linalg::{self, CMatrix};
use qlbgk_core::qdd::{evaluate_j, gradient_j};
use qlbgk_core::solvers::{
    ap_run, error_metrics, fitted_order, qdd_limit_run, sigma1_residual, splitstep_run,
    ReferenceRun,
};
use qlbgk_core::{kappa, xi, KernelParams, Problem, PropagatorBackend, QddStepInput};
use rayon::prelude::*;
use serde_json::json;

use crate::config::{GridConfig, RunConfig, SweepMetric};
use crate::error::CliError;
use crate::output::{self, LemmaRow, SweepRow};

/// Paths written by a subcommand.
#[derive(Debug, Default)]
pub struct Written {
    pub files: Vec<PathBuf>,
}

fn snapshot(command: &str, epsilon: Option<f64>, dt: Option<f64>) -> serde_json::Value {
    json!({ "command": command, "epsilon": epsilon, "dt": dt })
}

pub fn run_ap(config: &RunConfig) -> Result<Written, CliError> {
    let epsilon = config.require("epsilon", config.epsilon)?;
    let dt = config.require("dt", config.dt)?;
    let t_final = config.require("t_final", config.t_final)?;
    let problem = config.problem()?;
    let rho0 = config.initial_state(&problem)?;
    let params = KernelParams::new(epsilon, dt)?;
    let run = ap_run(&problem, rho0, &params, t_final, &config.ap_options()).map_err(|e| {
        CliError::from(e).with_snapshot(snapshot("run-ap", Some(epsilon), Some(dt)))
    })?;
    let dir = config.output_dir();
    let densities = dir.join(&config.output.densities);
    let diagnostics = dir.join(&config.output.diagnostics);
    output::write_density_series(&densities, &run.trajectory.times, &run.trajectory.densities)?;
    output::write_diagnostics(&diagnostics, &run.records)?;
    let violations = run
        .records
        .iter()
        .filter(|r| r.positivity_violation)
        .count();
    if violations > 0 {
        log::warn!("{violations} step(s) fell below the positivity floor");
    }
    Ok(Written {
        files: vec![densities, diagnostics],
    })
}

pub fn run_split(config: &RunConfig) -> Result<Written, CliError> {
    let epsilon = config.require("epsilon", config.epsilon)?;
    let dt = config.require("dt", config.dt)?;
    let t_final = config.require("t_final", config.t_final)?;
    let problem = config.problem()?;
    let rho0 = config.initial_state(&problem)?;
    let run = splitstep_run(
        &problem,
        rho0,
        epsilon,
        t_final,
        dt,
        &config.reference_options(epsilon, dt),
    )
    .map_err(|e| CliError::from(e).with_snapshot(snapshot("run-split", Some(epsilon), Some(dt))))?;
    for w in &run.warnings {
        log::warn!("{w}");
    }
    let path = config.output_dir().join(&config.output.densities);
    output::write_density_series(&path, &run.trajectory.times, &run.trajectory.densities)?;
    Ok(Written { files: vec![path] })
}

pub fn run_qdd(config: &RunConfig) -> Result<Written, CliError> {
    let dt = config.require("dt", config.dt)?;
    let t_final = config.require("t_final", config.t_final)?;
    let problem = config.problem()?;
    let n0 = config.initial_density(&problem)?;
    let trajectory = qdd_limit_run(&problem, &n0, dt, t_final, &config.qdd_options())
        .map_err(|e| CliError::from(e).with_snapshot(snapshot("run-qdd", None, Some(dt))))?;
    let path = config.output_dir().join(&config.output.densities);
    output::write_density_series(&path, &trajectory.times, &trajectory.densities)?;
    Ok(Written { files: vec![path] })
}

/// Checks that every value is an integer multiple of `unit`.
fn check_multiples(field: &str, unit: f64, values: &[f64]) -> Result<(), CliError> {
    for (i, &v) in values.iter().enumerate() {
        let ratio = v / unit;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
            return Err(CliError::Config {
                field: format!("{field}[{i}]"),
                message: format!("{v} is not a multiple of {unit}"),
            });
        }
    }
    Ok(())
}

fn min_of(values: &[f64]) -> f64 {
    values.iter().cloned().fold(f64::INFINITY, f64::min)
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::io(&PathBuf::from("<thread pool>"), std::io::Error::other(e)))
}

/// One cell per `ε`: a reference run at the finest `δt`, then every `δt`.
fn sweep_cell(
    config: &RunConfig,
    problem: &Problem,
    epsilon: f64,
    dts: &[f64],
    metric: SweepMetric,
) -> Result<Vec<SweepRow>, CliError> {
    let t_final = config.require("t_final", config.t_final)?;
    let rho0 = config.initial_state(problem)?;
    let interval = min_of(dts);
    let reference = splitstep_run(
        problem,
        rho0.clone(),
        epsilon,
        t_final,
        interval,
        &config.reference_options(epsilon, interval),
    )
    .map_err(|e| {
        CliError::from(e).with_snapshot(snapshot("sweep/reference", Some(epsilon), Some(interval)))
    })?;
    for w in &reference.warnings {
        log::warn!("ε = {epsilon}: {w}");
    }
    let mut rows = vec![];
    for &dt in dts {
        let fail = |e| CliError::from(e).with_snapshot(snapshot("sweep", Some(epsilon), Some(dt)));
        let params = KernelParams::new(epsilon, dt).map_err(fail)?;
        let run = ap_run(
            problem,
            rho0.clone(),
            &params,
            t_final,
            &config.ap_options(),
        )
        .map_err(fail)?;
        let errors =
            error_metrics(&run.trajectory, &reference.trajectory, problem.h0()).map_err(fail)?;
        rows.push(SweepRow {
            epsilon,
            dt,
            max_l1_density_error: errors.max_density_l1(),
            max_e2_operator_error: errors.max_operator_e2(),
            fitted_order: f64::NAN,
        });
    }
    let errors: Vec<f64> = rows
        .iter()
        .map(|r| match metric {
            SweepMetric::DensityL1 => r.max_l1_density_error,
            SweepMetric::OperatorE2 => r.max_e2_operator_error,
        })
        .collect();
    let order = fitted_order(dts, &errors).unwrap_or(f64::NAN);
    rows.iter_mut().for_each(|r| r.fitted_order = order);
    Ok(rows)
}

pub fn sweep(config: &RunConfig) -> Result<(Written, Vec<SweepRow>), CliError> {
    let spec = config.sweep.as_ref().ok_or_else(|| CliError::Config {
        field: "sweep".into(),
        message: "required by this subcommand".into(),
    })?;
    config.require("t_final", config.t_final)?;
    check_multiples("sweep.dts", min_of(&spec.dts), &spec.dts)?;
    let problem = config.problem()?;
    let cells: Vec<Result<Vec<SweepRow>, CliError>> = pool(spec.workers)?.install(|| {
        spec.epsilons
            .par_iter()
            .map(|&eps| sweep_cell(config, &problem, eps, &spec.dts, spec.metric))
            .collect()
    });
    let mut table = vec![];
    for cell in cells {
        table.extend(cell?);
    }
    let path = config.output_dir().join(&config.output.errors);
    output::write_sweep(&path, &table)?;
    Ok((Written { files: vec![path] }, table))
}

pub fn check_lemma(config: &RunConfig) -> Result<(Written, Vec<LemmaRow>), CliError> {
    let spec = config.lemma.as_ref().ok_or_else(|| CliError::Config {
        field: "lemma".into(),
        message: "required by this subcommand".into(),
    })?;
    let epsilons = if spec.epsilons.is_empty() {
        vec![config.require("epsilon", config.epsilon)?]
    } else {
        spec.epsilons.clone()
    };
    let interval = min_of(&spec.gaps);
    check_multiples("lemma.gaps", interval, &spec.gaps)?;
    check_multiples("lemma.s", interval, &[spec.s])?;
    let t_end = spec.s + spec.gaps.iter().cloned().fold(0.0, f64::max);
    let problem = config.problem()?;
    let rho0 = config.initial_state(&problem)?;
    let workers = config.sweep.as_ref().map_or(0, |s| s.workers);
    let cells: Vec<Result<Vec<LemmaRow>, CliError>> = pool(workers)?.install(|| {
        epsilons
            .par_iter()
            .map(|&eps| {
                let fail = |e| {
                    CliError::from(e).with_snapshot(snapshot(
                        "check-lemma",
                        Some(eps),
                        Some(interval),
                    ))
                };
                let reference: ReferenceRun = splitstep_run(
                    &problem,
                    rho0.clone(),
                    eps,
                    t_end,
                    interval,
                    &config.reference_options(eps, interval),
                )
                .map_err(fail)?;
                spec.gaps
                    .iter()
                    .map(|&gap| {
                        let r = sigma1_residual(&problem, &reference, spec.s, spec.s + gap, eps)
                            .map_err(fail)?;
                        Ok(LemmaRow {
                            epsilon: eps,
                            s: r.s,
                            t: r.t,
                            e2_norm: r.e2_norm_value,
                            div_current_l1: r.div_current_l1,
                        })
                    })
                    .collect()
            })
            .collect()
    });
    let mut table = vec![];
    for cell in cells {
        table.extend(cell?);
    }
    let path = config.output_dir().join(&config.output.lemma);
    output::write_lemma(&path, &table)?;
    Ok((Written { files: vec![path] }, table))
}

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.value <= self.tolerance
    }
}

fn selftest_problem(config: Option<&RunConfig>) -> Result<Problem, CliError> {
    match config {
        Some(c) => c.problem(),
        None => RunConfig {
            grid: GridConfig {
                n_points: 16,
                length: std::f64::consts::TAU,
                derivative: Default::default(),
            },
            ..crate::default_config()
        }
        .problem(),
    }
}

/// Invariant checks on a small grid.
pub fn selftest(config: Option<&RunConfig>) -> Result<Vec<Check>, CliError> {
    let problem = selftest_problem(config)?;
    let g = problem.grid();
    let n_points = g.n_points();
    let mut checks = vec![];

    let below = f64::from_bits(1f64.to_bits() - 1);
    checks.push(Check {
        name: "kernel series matches closed form at x = 1",
        value: ((xi(1.0, below) - xi(1.0, 1.0)) / xi(1.0, 1.0)).abs()
            + (kappa(1.0, below) - kappa(1.0, 1.0)).abs(),
        tolerance: 1e-12,
    });

    let k = g.wavenumber(1);
    let target = g.nodes().map(|x| (1.0 + 0.3 * (k * x).cos()) / g.length());
    let theta = problem.equilibrium(&target)?;
    checks.push(Check {
        name: "equilibrium reproduces its density",
        value: g.l1_norm(&(theta.density() - &target)) / g.l1_norm(&target),
        tolerance: 1e-8,
    });
    checks.push(Check {
        name: "equilibrium carries no current",
        value: theta.operator().current(&problem.derivative).amax(),
        tolerance: 1e-12 * target.amax(),
    });

    let a = DVector::from_fn(n_points, |i, _| 0.2 * (i as f64).sin());
    let dual = DualFunctional {
        target: &target,
        h: problem.h(),
        spacing: g.spacing(),
        temperature: problem.temperature,
    };
    let exact = dual.gradient(&a)?;
    let fd = DVector::from_fn(n_points, |i, _| {
        let mut plus = a.clone();
        let mut minus = a.clone();
        plus[i] += 1e-5;
        minus[i] -= 1e-5;
        (dual.value(&plus).unwrap_or(f64::NAN) - dual.value(&minus).unwrap_or(f64::NAN)) / 2e-5
    });
    checks.push(Check {
        name: "dual gradient matches finite differences",
        value: (&exact - &fd).norm() / exact.norm(),
        tolerance: 1e-6,
    });

    let zero = DVector::zeros(n_points);
    let input = QddStepInput {
        n_prev: &target,
        source: &zero,
        xi: 0.02,
        hamiltonians: &problem.hamiltonians,
        derivative: &problem.derivative,
        temperature: problem.temperature,
    };
    let exact = gradient_j(&a, &input)?;
    let fd = DVector::from_fn(n_points, |i, _| {
        let mut plus = a.clone();
        let mut minus = a.clone();
        plus[i] += 1e-5;
        minus[i] -= 1e-5;
        (evaluate_j(&plus, &input).unwrap_or(f64::NAN)
            - evaluate_j(&minus, &input).unwrap_or(f64::NAN))
            / 2e-5
    });
    checks.push(Check {
        name: "step functional gradient matches finite differences",
        value: (&exact - &fd).norm() / exact.norm(),
        tolerance: 1e-6,
    });

    let u = free_unitary(
        &problem.hamiltonians,
        0.37,
        PropagatorBackend::CrankNicolson { substeps: 1 },
    )?;
    checks.push(Check {
        name: "Cayley propagator is unitary",
        value: linalg::max_abs(&(u.adjoint() * &u - CMatrix::identity(n_points, n_points))),
        tolerance: 1e-12,
    });

    let rho0 = theta.operator().clone();
    let run = ap_run(
        &problem,
        rho0,
        &KernelParams::new(0.1, 0.01)?,
        0.1,
        &Default::default(),
    )?;
    let mass0 = run.trajectory.rhos[0].trace();
    checks.push(Check {
        name: "AP run conserves mass",
        value: run
            .records
            .iter()
            .map(|r| ((r.mass - mass0) / mass0).abs())
            .fold(0.0, f64::max),
        tolerance: 1e-10,
    });

    let flat = DVector::from_element(n_points, 1.0 / g.length());
    let rho_flat = problem.well_prepared(&flat)?;
    let run = ap_run(
        &problem,
        rho_flat,
        &KernelParams::new(0.1, 0.01)?,
        0.1,
        &Default::default(),
    )?;
    checks.push(Check {
        name: "constant equilibrium is a fixed point",
        value: run
            .trajectory
            .densities
            .iter()
            .map(|n| (n - &flat).amax())
            .fold(0.0, f64::max),
        tolerance: 1e-9,
    });

    Ok(checks)
}
