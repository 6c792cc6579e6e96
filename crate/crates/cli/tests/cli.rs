use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nalgebra::DVector;
use qlbgk_cli::output::{self, SweepRow};
use qlbgk_cli::{CliError, RunConfig};
use qlbgk_core::solvers::StepRecord;
use serde_json::{json, Value};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn qlbgk(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qlbgk"))
        .args(args)
        .env("QLBGK_OUTPUT_DIR", out)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, value: &Value) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

fn small(extra: Value) -> Value {
    let mut base = json!({
        "schema_version": 1,
        "grid": { "n_points": 8 },
        "initial": {
            "kind": "well_prepared",
            "density": { "kind": "cosine", "mass": 1.0, "amplitude": 0.3, "mode": 1 }
        }
    });
    for (k, v) in extra.as_object().unwrap() {
        base[k] = v.clone();
    }
    base
}

fn error_report(out: &Output) -> Value {
    serde_json::from_slice(out.stderr.trim_ascii()).expect("stderr is a JSON report")
}

#[test]
fn bundled_configs_parse() {
    let mut count = 0;
    for entry in std::fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        RunConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        count += 1;
    }
    assert!(count >= 6);
}

#[test]
fn unknown_keys_and_versions_are_rejected() {
    let err =
        RunConfig::from_json(r#"{"schema_version": 1, "grid": {"n_points": 8}, "epsilonn": 0.1}"#)
            .unwrap_err();
    assert!(matches!(err, CliError::Config { .. }));
    assert_eq!(err.exit_code(), 2);

    let err = RunConfig::from_json(
        r#"{"schema_version": 1, "grid": {"n_points": 8}, "initial": {"kind": "well_prepared", "density": {"kind": "constant", "mass": 1, "extra": 2}}}"#,
    )
    .unwrap_err();
    let CliError::Config { field, .. } = err else {
        panic!()
    };
    assert!(field.starts_with("initial"), "{field}");

    let err =
        RunConfig::from_json(r#"{"schema_version": 2, "grid": {"n_points": 8}}"#).unwrap_err();
    let CliError::Config { field, .. } = err else {
        panic!()
    };
    assert_eq!(field, "schema_version");

    let err = RunConfig::from_json(r#"{"schema_version": 1, "grid": {"n_points": 8}, "dt": -1}"#)
        .unwrap_err();
    let CliError::Config { field, .. } = err else {
        panic!()
    };
    assert_eq!(field, "dt");
}

#[test]
fn malformed_config_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(
        dir.path(),
        &json!({ "schema_version": 1, "grid": { "n_points": 8, "bogus": 1 } }),
    );
    let out = qlbgk(&["run-ap", "--config", path.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let report = error_report(&out);
    assert_eq!(report["kind"], "config");
    assert_eq!(report["field"], "grid.bogus");

    // missing required field for the subcommand
    let path = write_config(dir.path(), &small(json!({ "dt": 0.01, "t_final": 0.05 })));
    let out = qlbgk(&["run-ap", "--config", path.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_report(&out)["field"], "epsilon");
}

#[test]
fn numerical_failure_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let config = small(json!({
        "epsilon": 0.1, "dt": 0.01, "t_final": 0.05,
        "solver": { "max_iterations": 1, "tolerance": 1e-15 }
    }));
    let path = write_config(dir.path(), &config);
    let out = qlbgk(&["run-ap", "--config", path.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(3));
    let report = error_report(&out);
    assert_eq!(report["kind"], "numerical");
    assert_eq!(report["snapshot"]["epsilon"], 0.1);
    assert!(report["residual_history"].is_array());
}

#[test]
fn equilibrium_fixed_point_gives_constant_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("equilibrium-fixed-point.json");
    let out = qlbgk(&["run-ap", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let (header, rows) = output::read_table(&dir.path().join("densities.csv")).unwrap();
    assert_eq!(header.len(), 33);
    assert_eq!(rows.len(), 101);
    let n0 = 1.0 / std::f64::consts::TAU;
    for row in &rows {
        for v in &row[1..] {
            assert!((v - n0).abs() <= 1e-9);
        }
    }
    let (header, rows) = output::read_table(&dir.path().join("diagnostics.csv")).unwrap();
    assert_eq!(header, output::DIAGNOSTICS_HEADER);
    assert_eq!(rows.len(), 100);
}

#[test]
fn seeded_runs_are_reproducible() {
    let run = |seed: u64| {
        let dir = tempfile::tempdir().unwrap();
        let config = small(json!({
            "epsilon": 0.3, "dt": 0.01, "t_final": 0.05, "seed": seed,
            "initial": { "kind": "ill_prepared", "mass": 1.0, "weight": 0.3, "modes": 2 }
        }));
        let path = write_config(dir.path(), &config);
        let out = qlbgk(&["run-ap", "--config", path.to_str().unwrap()], dir.path());
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        std::fs::read(dir.path().join("densities.csv")).unwrap()
    };
    let a = run(11);
    assert_eq!(a, run(11));
    assert_ne!(a, run(12));
}

#[test]
fn sweep_writes_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let config = small(json!({
        "t_final": 0.04,
        "sweep": { "epsilons": [1.0, 0.1, 0.01], "dts": [0.02, 0.01, 0.005], "workers": 2 }
    }));
    let path = write_config(dir.path(), &config);
    let out = qlbgk(&["sweep", "--config", path.to_str().unwrap()], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["fitted_orders"].as_array().unwrap().len(), 3);
    let (header, rows) = output::read_table(&dir.path().join("errors.csv")).unwrap();
    assert_eq!(header, output::SWEEP_HEADER);
    assert_eq!(rows.len(), 9);
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(row[0], [1.0, 0.1, 0.01][i / 3]);
        assert_eq!(row[1], [0.02, 0.01, 0.005][i % 3]);
        assert!(row[2] > 0.0 && row[3] > 0.0);
        assert_eq!(row[4], rows[3 * (i / 3)][4]);
    }
}

#[test]
fn sweep_rejects_incommensurate_steps() {
    let config: RunConfig = serde_json::from_value(small(json!({
        "t_final": 0.04,
        "sweep": { "epsilons": [1.0], "dts": [0.02, 0.015] }
    })))
    .unwrap();
    let err = qlbgk_cli::commands::sweep(&config).unwrap_err();
    let CliError::Config { field, .. } = err else {
        panic!("{err}")
    };
    assert_eq!(field, "sweep.dts[0]");
}

#[test]
fn lemma_probe_writes_residuals() {
    let dir = tempfile::tempdir().unwrap();
    let config = small(json!({
        "lemma": { "s": 0.02, "gaps": [0.02, 0.01], "epsilons": [0.3] }
    }));
    let path = write_config(dir.path(), &config);
    let out = qlbgk(
        &["check-lemma", "--config", path.to_str().unwrap()],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let (_, rows) = output::read_table(&dir.path().join("lemma.csv")).unwrap();
    assert_eq!(rows.len(), 2);
    // larger gap, larger residual
    assert!(rows[0][3] > rows[1][3]);
}

#[test]
fn qdd_and_split_runs_write_densities() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(
        dir.path(),
        &small(json!({ "epsilon": 0.3, "dt": 0.01, "t_final": 0.03 })),
    );
    for cmd in ["run-qdd", "run-split"] {
        let out = qlbgk(&[cmd, "--config", path.to_str().unwrap()], dir.path());
        assert!(
            out.status.success(),
            "{cmd}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        let (_, rows) = output::read_table(&dir.path().join("densities.csv")).unwrap();
        assert_eq!(rows.len(), 4);
        let mass = |r: &Vec<f64>| r[1..].iter().sum::<f64>();
        assert!((mass(&rows[3]) - mass(&rows[0])).abs() <= 1e-10 * mass(&rows[0]));
    }
}

#[test]
fn selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = qlbgk(&["selftest"], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(!text.contains("FAIL"));
}

#[test]
fn csv_round_trip_is_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nested/densities.csv");
    let values = [
        0.1,
        1.0 / 3.0,
        f64::MIN_POSITIVE,
        1e300,
        -2.5e-17,
        std::f64::consts::PI,
    ];
    let densities = vec![
        DVector::from_column_slice(&values),
        DVector::from_column_slice(&values).map(|v| v * 7.0),
    ];
    output::write_density_series(&path, &[0.0, 0.1], &densities).unwrap();
    let (header, rows) = output::read_table(&path).unwrap();
    assert_eq!(header[0], "time");
    for (row, n) in rows.iter().zip(&densities) {
        for (a, b) in row[1..].iter().zip(n.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
    assert_eq!(output::format_float(0.1), "1.0000000000000001e-1");
}

#[test]
fn empty_tables_are_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let diag = dir.path().join("d.csv");
    output::write_diagnostics(&diag, &Vec::<StepRecord>::new()).unwrap();
    assert_eq!(std::fs::read_to_string(&diag).unwrap().lines().count(), 1);
    let sweep = dir.path().join("s.csv");
    output::write_sweep(&sweep, &Vec::<SweepRow>::new()).unwrap();
    assert_eq!(
        std::fs::read_to_string(&sweep).unwrap().trim(),
        "epsilon,dt,max_l1_density_error,max_e2_operator_error,fitted_order"
    );
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let err = output::write_sweep(&blocker.join("sub/errors.csv"), &[]).unwrap_err();
    assert!(matches!(err, CliError::Io { .. }));
    assert!(err.to_string().contains("file"));
}
