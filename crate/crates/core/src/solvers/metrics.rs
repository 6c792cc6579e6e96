use nalgebra::DMatrix;

use super::Trajectory;
use crate::error::{check_len, Error, Result};
use crate::operator::e2_norm;

const TIME_MATCH: f64 = 1e-9;

/// Pointwise-in-time errors between two trajectories.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ErrorSeries {
    pub times: Vec<f64>,
    /// `h Σ |n_a − n_b|`.
    pub density_l1: Vec<f64>,
    /// `‖ρ_a − ρ_b‖_{E²}`.
    pub operator_e2: Vec<f64>,
}

impl ErrorSeries {
    pub fn max_density_l1(&self) -> f64 {
        self.density_l1.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_operator_e2(&self) -> f64 {
        self.operator_e2.iter().copied().fold(0.0, f64::max)
    }
}

/// Compares `a` with `b` at each sample time of `a`, taking the nearest
/// sample of `b`, which must coincide with it.
pub fn error_metrics(a: &Trajectory, b: &Trajectory, h0: &DMatrix<f64>) -> Result<ErrorSeries> {
    if b.is_empty() {
        return Err(Error::InvalidInput(
            "cannot compare against an empty trajectory".into(),
        ));
    }
    let mut series = ErrorSeries::default();
    for (i, &t) in a.times.iter().enumerate() {
        let j = b.nearest(t).expect("non-empty");
        if (b.times[j] - t).abs() > TIME_MATCH * t.abs().max(1.0) {
            return Err(Error::InvalidInput(format!(
                "no sample at t = {t} (nearest is {})",
                b.times[j]
            )));
        }
        let (na, nb) = (&a.densities[i], &b.densities[j]);
        check_len(na.len(), nb.len())?;
        check_len(h0.nrows(), na.len())?;
        let (ra, rb) = (&a.rhos[i], &b.rhos[j]);
        if (ra.spacing() - rb.spacing()).abs() > 1e-12 * ra.spacing() {
            return Err(Error::InvalidInput(format!(
                "grid spacings differ: {} vs {}",
                ra.spacing(),
                rb.spacing()
            )));
        }
        series.times.push(t);
        series.density_l1.push(ra.spacing() * (na - nb).lp_norm(1));
        series.operator_e2.push(e2_norm(&(ra - rb), h0));
    }
    Ok(series)
}

/// Least-squares slope of `log error` against `log δt`.
pub fn fitted_order(dts: &[f64], errors: &[f64]) -> Result<f64> {
    check_len(dts.len(), errors.len())?;
    if dts.len() < 2 {
        return Err(Error::InvalidInput(
            "need at least two points to fit an order".into(),
        ));
    }
    if dts
        .iter()
        .chain(errors)
        .any(|v| !(*v > 0.0 && v.is_finite()))
    {
        return Err(Error::InvalidInput(
            "step sizes and errors must be positive".into(),
        ));
    }
    let xs: Vec<f64> = dts.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidInput(
            "step sizes must not all be equal".into(),
        ));
    }
    Ok(sxy / sxx)
}
