//! CSV writers. Floats use 17 significant digits, which round-trips every `f64`.

use std::path::Path;

use nalgebra::DVector;
use qlbgk_core::solvers::StepRecord;

use crate::error::CliError;

pub fn format_float(value: f64) -> String {
    format!("{value:.16e}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub epsilon: f64,
    pub dt: f64,
    pub max_l1_density_error: f64,
    pub max_e2_operator_error: f64,
    /// Order fitted over all `δt` at this `ε`.
    pub fitted_order: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LemmaRow {
    pub epsilon: f64,
    pub s: f64,
    pub t: f64,
    pub e2_norm: f64,
    pub div_current_l1: f64,
}

fn write_rows(
    path: &Path,
    header: &[String],
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<(), CliError> {
    let io = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(e) => CliError::io(path, e),
        other => CliError::io(path, std::io::Error::other(format!("{other:?}"))),
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    let mut writer = csv::Writer::from_path(path).map_err(io)?;
    writer.write_record(header).map_err(io)?;
    for row in rows {
        writer.write_record(&row).map_err(io)?;
    }
    writer.flush().map_err(|e| CliError::io(path, e))
}

/// Columns: `time`, then `n_0 … n_{N−1}`.
pub fn write_density_series(
    path: &Path,
    times: &[f64],
    densities: &[DVector<f64>],
) -> Result<(), CliError> {
    let nodes = densities.first().map_or(0, |d| d.len());
    let header: Vec<String> = std::iter::once("time".to_string())
        .chain((0..nodes).map(|i| format!("n_{i}")))
        .collect();
    let rows = times.iter().zip(densities).map(|(t, n)| {
        std::iter::once(format_float(*t))
            .chain(n.iter().map(|v| format_float(*v)))
            .collect()
    });
    write_rows(path, &header, rows)
}

pub const DIAGNOSTICS_HEADER: [&str; 12] = [
    "step",
    "time",
    "mass",
    "min_eigenvalue",
    "hermiticity_residual",
    "free_energy",
    "trace_norm",
    "e2_norm",
    "equilibrium_current",
    "el_residual",
    "iterations",
    "positivity_violation",
];

pub fn write_diagnostics(path: &Path, records: &[StepRecord]) -> Result<(), CliError> {
    let header: Vec<String> = DIAGNOSTICS_HEADER.iter().map(|s| s.to_string()).collect();
    let rows = records.iter().map(|r| {
        vec![
            r.step.to_string(),
            format_float(r.time),
            format_float(r.mass),
            format_float(r.min_eigenvalue),
            format_float(r.hermiticity_residual),
            format_float(r.free_energy),
            format_float(r.trace_norm),
            format_float(r.e2_norm),
            format_float(r.equilibrium_current),
            format_float(r.el_residual),
            r.iterations.to_string(),
            u8::from(r.positivity_violation).to_string(),
        ]
    });
    write_rows(path, &header, rows)
}

pub const SWEEP_HEADER: [&str; 5] = [
    "epsilon",
    "dt",
    "max_l1_density_error",
    "max_e2_operator_error",
    "fitted_order",
];

pub fn write_sweep(path: &Path, table: &[SweepRow]) -> Result<(), CliError> {
    let header: Vec<String> = SWEEP_HEADER.iter().map(|s| s.to_string()).collect();
    let rows = table.iter().map(|r| {
        [
            r.epsilon,
            r.dt,
            r.max_l1_density_error,
            r.max_e2_operator_error,
            r.fitted_order,
        ]
        .iter()
        .map(|v| format_float(*v))
        .collect()
    });
    write_rows(path, &header, rows)
}

pub fn write_lemma(path: &Path, table: &[LemmaRow]) -> Result<(), CliError> {
    let header: Vec<String> = ["epsilon", "s", "t", "e2_norm", "div_current_l1"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let rows = table.iter().map(|r| {
        [r.epsilon, r.s, r.t, r.e2_norm, r.div_current_l1]
            .iter()
            .map(|v| format_float(*v))
            .collect()
    });
    write_rows(path, &header, rows)
}

/// Header and numeric rows of a CSV written by this module.
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), CliError> {
    let invalid = |msg: String| {
        CliError::io(
            path,
            std::io::Error::new(std::io::ErrorKind::InvalidData, msg),
        )
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| invalid(e.to_string()))?;
    let header = reader
        .headers()
        .map_err(|e| invalid(e.to_string()))?
        .iter()
        .map(String::from)
        .collect();
    let mut rows = vec![];
    for record in reader.records() {
        let record = record.map_err(|e| invalid(e.to_string()))?;
        let row = record
            .iter()
            .map(|field| {
                field
                    .parse::<f64>()
                    .map_err(|e| invalid(format!("{field}: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}
