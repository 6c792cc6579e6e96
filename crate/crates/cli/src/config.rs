//! JSON run configuration.

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use num_complex::Complex64;
use qlbgk_core::optimize::Backend;
use qlbgk_core::solvers::{ApOptions, ReferenceOptions};
use qlbgk_core::{
    build_grid, DensityOperator, DerivativeMethod, Problem, PropagatorBackend, QddOptions,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable that replaces `output.directory`.
pub const OUTPUT_DIR_ENV: &str = "QLBGK_OUTPUT_DIR";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub grid: GridConfig,
    #[serde(default)]
    pub potential: PotentialSpec,
    #[serde(default = "one")]
    pub temperature: f64,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub t_final: Option<f64>,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub lemma: Option<LemmaConfig>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n_points: usize,
    #[serde(default = "two_pi")]
    pub length: f64,
    #[serde(default)]
    pub derivative: DerivativeKind,
}

fn two_pi() -> f64 {
    std::f64::consts::TAU
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeKind {
    #[default]
    Spectral,
    CentralDifference,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    #[default]
    Zero,
    /// `V(x) = amplitude · cos(k_mode x)`.
    Cosine {
        amplitude: f64,
        #[serde(default = "first_mode")]
        mode: usize,
    },
    Table {
        values: Vec<f64>,
    },
}

fn first_mode() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensitySpec {
    Constant {
        mass: f64,
    },
    /// `(mass/L)(1 + amplitude · cos(k_mode x))`.
    Cosine {
        mass: f64,
        amplitude: f64,
        #[serde(default = "first_mode")]
        mode: usize,
    },
    Table {
        values: Vec<f64>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    /// `θ[n₀]`.
    WellPrepared { density: DensitySpec },
    /// Gibbs state mixed with a random pure state drawn from `seed`, whose
    /// Fourier coefficients are restricted to `|k| ≤ modes`.
    IllPrepared {
        mass: f64,
        weight: f64,
        #[serde(default = "default_modes")]
        modes: usize,
    },
}

fn default_modes() -> usize {
    3
}

impl Default for InitialSpec {
    fn default() -> Self {
        Self::WellPrepared {
            density: DensitySpec::Cosine {
                mass: 1.0,
                amplitude: 0.5,
                mode: 1,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropagatorKind {
    Exact,
    #[default]
    CrankNicolson,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Newton,
    GradientDescent,
    #[default]
    Hybrid,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub optimizer: OptimizerKind,
    pub propagator: PropagatorKind,
    pub substeps: usize,
    pub positivity_floor: f64,
    pub fail_on_negative: bool,
    /// The reference substep is `min(ε², sample interval) / reference_fraction`.
    pub reference_fraction: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let qdd = QddOptions::default();
        let ap = ApOptions::default();
        Self {
            tolerance: qdd.tolerance,
            max_iterations: qdd.max_iterations,
            optimizer: OptimizerKind::default(),
            propagator: PropagatorKind::default(),
            substeps: 1,
            positivity_floor: ap.positivity_floor,
            fail_on_negative: ap.fail_on_negative,
            reference_fraction: 50.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub densities: String,
    pub diagnostics: String,
    pub errors: String,
    pub lemma: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("output"),
            densities: "densities.csv".into(),
            diagnostics: "diagnostics.csv".into(),
            errors: "errors.csv".into(),
            lemma: "lemma.csv".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMetric {
    /// Fit orders to the max-over-time L¹ density error.
    #[default]
    DensityL1,
    /// Fit orders to the max-over-time E² operator error.
    OperatorE2,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub epsilons: Vec<f64>,
    pub dts: Vec<f64>,
    #[serde(default)]
    pub metric: SweepMetric,
    /// Worker threads; 0 uses all available cores.
    #[serde(default)]
    pub workers: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LemmaConfig {
    pub s: f64,
    pub gaps: Vec<f64>,
    #[serde(default)]
    pub epsilons: Vec<f64>,
}

fn field_error(field: &str, message: impl Into<String>) -> CliError {
    CliError::Config {
        field: field.into(),
        message: message.into(),
    }
}

fn positive(field: &str, value: f64) -> Result<f64, CliError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(field_error(
            field,
            format!("must be positive and finite, got {value}"),
        ))
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            field_error(
                if path == "." { "" } else { &path },
                e.into_inner().to_string(),
            )
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(field_error(
                "schema_version",
                format!(
                    "unsupported version {}, expected {SCHEMA_VERSION}",
                    self.schema_version
                ),
            ));
        }
        if self.grid.n_points == 0 {
            return Err(field_error("grid.n_points", "must be at least 1"));
        }
        positive("grid.length", self.grid.length)?;
        positive("temperature", self.temperature)?;
        for (name, value) in [
            ("epsilon", self.epsilon),
            ("dt", self.dt),
            ("t_final", self.t_final),
        ] {
            if let Some(v) = value {
                positive(name, v)?;
            }
        }
        positive("solver.tolerance", self.solver.tolerance)?;
        positive("solver.reference_fraction", self.solver.reference_fraction)?;
        if self.solver.substeps == 0 {
            return Err(field_error("solver.substeps", "must be at least 1"));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.epsilons.is_empty() {
                return Err(field_error("sweep.epsilons", "must not be empty"));
            }
            if sweep.dts.is_empty() {
                return Err(field_error("sweep.dts", "must not be empty"));
            }
            for (i, &e) in sweep.epsilons.iter().enumerate() {
                positive(&format!("sweep.epsilons[{i}]"), e)?;
            }
            for (i, &d) in sweep.dts.iter().enumerate() {
                positive(&format!("sweep.dts[{i}]"), d)?;
            }
        }
        if let Some(lemma) = &self.lemma {
            if !(lemma.s >= 0.0) {
                return Err(field_error("lemma.s", "must be nonnegative"));
            }
            if lemma.gaps.is_empty() {
                return Err(field_error("lemma.gaps", "must not be empty"));
            }
            for (i, &g) in lemma.gaps.iter().enumerate() {
                positive(&format!("lemma.gaps[{i}]"), g)?;
            }
        }
        Ok(())
    }

    pub fn require(&self, field: &str, value: Option<f64>) -> Result<f64, CliError> {
        value.ok_or_else(|| field_error(field, "required by this subcommand"))
    }

    pub fn output_dir(&self) -> PathBuf {
        std::env::var_os(OUTPUT_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| self.output.directory.clone())
    }

    pub fn problem(&self) -> Result<Problem, CliError> {
        let grid = build_grid(self.grid.n_points, self.grid.length)
            .map_err(|e| field_error("grid", e.to_string()))?;
        let potential = match &self.potential {
            PotentialSpec::Zero => DVector::zeros(grid.n_points()),
            PotentialSpec::Cosine { amplitude, mode } => {
                let k = grid.wavenumber(*mode);
                grid.nodes().map(|x| amplitude * (k * x).cos())
            }
            PotentialSpec::Table { values } => {
                if values.len() != grid.n_points() {
                    return Err(field_error(
                        "potential.values",
                        format!(
                            "expected {} values, found {}",
                            grid.n_points(),
                            values.len()
                        ),
                    ));
                }
                DVector::from_column_slice(values)
            }
        };
        let method = match self.grid.derivative {
            DerivativeKind::Spectral => DerivativeMethod::Spectral,
            DerivativeKind::CentralDifference => DerivativeMethod::CentralDifference,
        };
        Problem::new(&grid, potential, method, self.temperature)
            .map_err(|e| field_error("grid", e.to_string()))
    }

    pub fn initial_density(&self, problem: &Problem) -> Result<DVector<f64>, CliError> {
        let grid = problem.grid();
        let spec = match &self.initial {
            InitialSpec::WellPrepared { density } => density,
            InitialSpec::IllPrepared { .. } => {
                return Ok(self.initial_state(problem)?.density());
            }
        };
        let n = match spec {
            DensitySpec::Constant { mass } => {
                positive("initial.density.mass", *mass)?;
                DVector::from_element(grid.n_points(), mass / grid.length())
            }
            DensitySpec::Cosine {
                mass,
                amplitude,
                mode,
            } => {
                positive("initial.density.mass", *mass)?;
                problem
                    .cosine_density(*mass, *amplitude, *mode)
                    .map_err(|e| field_error("initial.density.amplitude", e.to_string()))?
            }
            DensitySpec::Table { values } => {
                if values.len() != grid.n_points() {
                    return Err(field_error(
                        "initial.density.values",
                        format!(
                            "expected {} values, found {}",
                            grid.n_points(),
                            values.len()
                        ),
                    ));
                }
                if values.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                    return Err(field_error(
                        "initial.density.values",
                        "densities must be positive",
                    ));
                }
                DVector::from_column_slice(values)
            }
        };
        Ok(n)
    }

    /// Initial density operator. Randomness is confined to this function.
    pub fn initial_state(&self, problem: &Problem) -> Result<DensityOperator, CliError> {
        match &self.initial {
            InitialSpec::WellPrepared { .. } => {
                let n = self.initial_density(problem)?;
                problem.well_prepared(&n).map_err(CliError::numerical)
            }
            InitialSpec::IllPrepared {
                mass,
                weight,
                modes,
            } => {
                positive("initial.mass", *mass)?;
                let grid = problem.grid();
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                let coefficients: Vec<(i64, Complex64)> = (-(*modes as i64)..=*modes as i64)
                    .map(|k| {
                        (
                            k,
                            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                        )
                    })
                    .collect();
                let psi = DVector::from_fn(grid.n_points(), |i, _| {
                    let x = grid.node(i);
                    coefficients
                        .iter()
                        .map(|(k, c)| {
                            c * Complex64::from_polar(
                                1.0,
                                *k as f64 * std::f64::consts::TAU / grid.length() * x,
                            )
                        })
                        .sum::<Complex64>()
                });
                problem
                    .ill_prepared(*mass, *weight, &psi)
                    .map_err(|e| field_error("initial", e.to_string()))
            }
        }
    }

    pub fn qdd_options(&self) -> QddOptions {
        let backend = match self.solver.optimizer {
            OptimizerKind::Newton => Backend::Newton,
            OptimizerKind::GradientDescent => Backend::GradientDescent,
            OptimizerKind::Hybrid => QddOptions::default().backend,
        };
        QddOptions {
            tolerance: self.solver.tolerance,
            max_iterations: self.solver.max_iterations,
            backend,
        }
    }

    pub fn ap_options(&self) -> ApOptions {
        ApOptions {
            propagator: match self.solver.propagator {
                PropagatorKind::Exact => PropagatorBackend::Exact,
                PropagatorKind::CrankNicolson => PropagatorBackend::CrankNicolson {
                    substeps: self.solver.substeps,
                },
            },
            qdd: self.qdd_options(),
            positivity_floor: self.solver.positivity_floor,
            fail_on_negative: self.solver.fail_on_negative,
        }
    }

    pub fn reference_options(&self, epsilon: f64, interval: f64) -> ReferenceOptions {
        ReferenceOptions {
            max_substep: Some((epsilon * epsilon).min(interval) / self.solver.reference_fraction),
            ..Default::default()
        }
    }
}
