//! Harness for the asymptotic-preserving solver: JSON configs, batch runs and
//! CSV output.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde_json::json;

pub use config::RunConfig;
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "qlbgk",
    version,
    about = "Quantum Liouville-BGK diffusion-limit solver"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the asymptotic-preserving scheme.
    RunAp(ConfigArg),
    /// Run the split-step reference solver.
    RunSplit(ConfigArg),
    /// Run the drift-diffusion limit.
    RunQdd(ConfigArg),
    /// Sweep ε × δt against the reference and fit orders.
    Sweep(ConfigArg),
    /// Measure the one-interval residual on a reference trajectory.
    CheckLemma(ConfigArg),
    /// Run the invariant checks.
    Selftest(OptionalConfigArg),
}

#[derive(Debug, clap::Args)]
pub struct ConfigArg {
    #[arg(long)]
    pub config: PathBuf,
}

#[derive(Debug, clap::Args)]
pub struct OptionalConfigArg {
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// N = 32, L = 2π, T_e = 1, V = 0 and a cosine well-prepared state.
pub fn default_config() -> RunConfig {
    RunConfig::from_json(r#"{"schema_version": 1, "grid": {"n_points": 32}}"#)
        .expect("built-in config is valid")
}

fn summary(command: &str, files: &[PathBuf]) -> serde_json::Value {
    json!({
        "command": command,
        "outputs": files.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
    })
}

/// Executes one subcommand and returns the JSON summary printed on success.
pub fn execute(command: &Command) -> Result<serde_json::Value, CliError> {
    match command {
        Command::RunAp(arg) => Ok(summary(
            "run-ap",
            &commands::run_ap(&RunConfig::load(&arg.config)?)?.files,
        )),
        Command::RunSplit(arg) => Ok(summary(
            "run-split",
            &commands::run_split(&RunConfig::load(&arg.config)?)?.files,
        )),
        Command::RunQdd(arg) => Ok(summary(
            "run-qdd",
            &commands::run_qdd(&RunConfig::load(&arg.config)?)?.files,
        )),
        Command::Sweep(arg) => {
            let (written, table) = commands::sweep(&RunConfig::load(&arg.config)?)?;
            let mut out = summary("sweep", &written.files);
            let mut orders: Vec<(f64, f64)> =
                table.iter().map(|r| (r.epsilon, r.fitted_order)).collect();
            orders.dedup();
            out["fitted_orders"] = orders
                .iter()
                .map(|(e, o)| json!({ "epsilon": e, "order": if o.is_finite() { json!(o) } else { json!(null) } }))
                .collect();
            Ok(out)
        }
        Command::CheckLemma(arg) => {
            let (written, _) = commands::check_lemma(&RunConfig::load(&arg.config)?)?;
            Ok(summary("check-lemma", &written.files))
        }
        Command::Selftest(arg) => {
            let config = arg.config.as_deref().map(RunConfig::load).transpose()?;
            let checks = commands::selftest(config.as_ref())?;
            let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
            for c in &checks {
                println!(
                    "{:<width$}  {}  {:.2e} (tol {:.0e})",
                    c.name,
                    if c.passed() { "pass" } else { "FAIL" },
                    c.value,
                    c.tolerance
                );
            }
            let failed = checks.iter().filter(|c| !c.passed()).count();
            if failed > 0 {
                return Err(CliError::SelfTest(failed));
            }
            Ok(json!({ "command": "selftest", "checks": checks.len(), "failed": 0 }))
        }
    }
}
