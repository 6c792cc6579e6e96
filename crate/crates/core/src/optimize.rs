//! Minimizers for smooth strictly convex functionals.
//!
//! Both the dual functional of the chemical-potential problem and the
//! functional of the implicit density step are handled here. Each objective
//! exposes its value, gradient and Hessian; the driver offers damped Newton,
//! Barzilai–Borwein gradient descent and a hybrid of the two, all globalized
//! by Armijo backtracking.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Value, gradient and whatever the objective wants to keep for the Hessian.
#[derive(Debug, Clone)]
pub struct Evaluation<C> {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub cache: C,
}

pub trait ConvexObjective {
    type Cache;

    fn evaluate(&self, x: &DVector<f64>) -> Result<Evaluation<Self::Cache>>;

    fn hessian(&self, x: &DVector<f64>, eval: &Evaluation<Self::Cache>) -> DMatrix<f64>;

    /// Stopping measure; the L¹ norm of the gradient by default.
    fn residual(&self, eval: &Evaluation<Self::Cache>) -> f64 {
        eval.gradient.lp_norm(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Backend {
    /// Damped Newton; falls back to a gradient step when the Newton direction
    /// is unusable or makes no progress.
    Newton,
    /// Gradient descent with Barzilai–Borwein step seeding.
    GradientDescent,
    /// Gradient descent until the residual drops below `switch_residual`,
    /// Newton afterwards.
    Hybrid { switch_residual: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub backend: Backend,
}

impl OptimizerOptions {
    pub fn newton(tolerance: f64, max_iterations: usize) -> Self {
        Self {
            tolerance,
            max_iterations,
            backend: Backend::Newton,
        }
    }

    pub fn with_backend(mut self, backend: Backend) -> Self {
        self.backend = backend;
        self
    }
}

#[derive(Debug, Clone)]
pub struct Minimum<C> {
    pub x: DVector<f64>,
    pub eval: Evaluation<C>,
    pub residual: f64,
    pub iterations: usize,
    pub history: Vec<f64>,
}

const ARMIJO_C: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

/// Minimizes `objective` from `x0` until its residual falls below
/// `options.tolerance` (absolute).
pub fn minimize<O: ConvexObjective>(
    objective: &O,
    x0: DVector<f64>,
    options: &OptimizerOptions,
) -> Result<Minimum<O::Cache>> {
    let mut x = x0;
    let mut eval = objective.evaluate(&x)?;
    let mut history = Vec::new();
    let mut previous: Option<(DVector<f64>, DVector<f64>)> = None;

    for iteration in 0..=options.max_iterations {
        let residual = objective.residual(&eval);
        history.push(residual);
        if residual <= options.tolerance {
            return Ok(Minimum {
                x,
                eval,
                residual,
                iterations: iteration,
                history,
            });
        }
        if iteration == options.max_iterations {
            break;
        }

        let use_newton = match options.backend {
            Backend::Newton => true,
            Backend::GradientDescent => false,
            Backend::Hybrid { switch_residual } => residual < switch_residual,
        };

        let mut accepted = None;
        if use_newton {
            if let Some(direction) = newton_direction(objective, &x, &eval) {
                accepted = line_search(objective, &x, &eval, &direction, 1.0, residual);
            }
        }
        if accepted.is_none() {
            let direction = -&eval.gradient;
            let step = bb_step(previous.as_ref(), &x, &eval.gradient)
                .unwrap_or_else(|| 1.0 / eval.gradient.amax().max(1.0));
            accepted = line_search(objective, &x, &eval, &direction, step, residual);
        }

        match accepted {
            Some((x_new, eval_new)) => {
                previous = Some((x.clone(), eval.gradient.clone()));
                x = x_new;
                eval = eval_new;
            }
            None => {
                return Err(Error::NonConvergence {
                    iterations: iteration,
                    residual,
                    history,
                });
            }
        }
    }

    let residual = *history.last().unwrap_or(&f64::INFINITY);
    Err(Error::NonConvergence {
        iterations: options.max_iterations,
        residual,
        history,
    })
}

fn newton_direction<O: ConvexObjective>(
    objective: &O,
    x: &DVector<f64>,
    eval: &Evaluation<O::Cache>,
) -> Option<DVector<f64>> {
    let hessian = objective.hessian(x, eval);
    let direction = hessian.cholesky()?.solve(&(-&eval.gradient));
    let slope = direction.dot(&eval.gradient);
    (slope < 0.0 && direction.iter().all(|v| v.is_finite())).then_some(direction)
}

fn bb_step(
    previous: Option<&(DVector<f64>, DVector<f64>)>,
    x: &DVector<f64>,
    gradient: &DVector<f64>,
) -> Option<f64> {
    let (x_prev, g_prev) = previous?;
    let s = x - x_prev;
    let y = gradient - g_prev;
    let sy = s.dot(&y);
    let step = s.norm_squared() / sy;
    (sy > 0.0 && step.is_finite()).then_some(step)
}

/// Armijo backtracking. Near the minimizer the decrease in value drops below
/// the rounding level of the value itself, so a step that keeps the value
/// within rounding and reduces the residual is accepted as well.
fn line_search<O: ConvexObjective>(
    objective: &O,
    x: &DVector<f64>,
    eval: &Evaluation<O::Cache>,
    direction: &DVector<f64>,
    initial_step: f64,
    residual: f64,
) -> Option<(DVector<f64>, Evaluation<O::Cache>)> {
    let slope = direction.dot(&eval.gradient);
    if !(slope < 0.0) {
        return None;
    }
    let rounding = 1e-13 * (eval.value.abs() + 1.0);
    let mut step = initial_step;
    for _ in 0..MAX_BACKTRACKS {
        let trial = x + direction * step;
        if let Ok(candidate) = objective.evaluate(&trial) {
            if candidate.value.is_finite() {
                let armijo = candidate.value <= eval.value + ARMIJO_C * step * slope;
                let flat = candidate.value <= eval.value + rounding
                    && objective.residual(&candidate) < residual;
                if armijo || flat {
                    return Some((trial, candidate));
                }
            }
        }
        step *= 0.5;
    }
    None
}
