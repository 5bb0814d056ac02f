use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

use swimmer_cli::output::Manifest;

fn swimmer(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_swimmer"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.toml");
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

fn run_ok(args: &[&str]) -> Output {
    let out = swimmer(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_owned).collect();
    let rows = lines
        .map(|l| l.split(',').map(|c| c.parse().unwrap_or(f64::NAN)).collect())
        .collect();
    (header, rows)
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    for text in [
        "[medium]\nkind = \"granular\"\nc_t = 3.0\nc_n = 1.0\n",
        "[geometry]\nlinks = 4\n",
        "[grid]\nlimit = \"60 degrees\"\n",
        "not toml at all",
    ] {
        let cfg = write_config(dir.path(), text);
        for verb in ["simulate", "selfcheck"] {
            let out = swimmer(&[verb, "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
            assert_eq!(out.status.code(), Some(2), "{verb} {text}");
            assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: config"));
        }
    }
    let out = swimmer(&["sweep", "--param", "medium.kind", "--values", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn solver_failures_exit_with_3() {
    // Isotropic drag has no positive height-function region to optimize over.
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[medium]\nkind = \"viscous\"\nc_t = 1.0\nc_n = 1.0\n[grid]\nresolution = 21\n",
    );
    let out = swimmer(&[
        "optimize",
        "--config",
        &cfg,
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no positive region"));
}

#[test]
fn canonical_config_is_a_fixed_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "# comment\n[gait]\nkind = \"circular\"\namplitude = \"45deg\"\n[compliance]\nkind = \"cable\"\ng = 0.5\n",
    );
    let first = run_ok(&["config", "--config", &cfg]).stdout;
    let again = write_config(dir.path(), std::str::from_utf8(&first).unwrap());
    assert_eq!(run_ok(&["config", "--config", &again]).stdout, first);
    assert!(std::str::from_utf8(&first)
        .unwrap()
        .contains("amplitude = 7.8539816339744828e-1"));
}

#[test]
fn height_function_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[grid]\nresolution = 11\n");
    let out = dir.path().join("hf");
    let start = Instant::now();
    run_ok(&[
        "height-function",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--quiet",
    ]);
    assert!(start.elapsed().as_secs_f64() < 5.0);
    let m = Manifest::read(&out).unwrap();
    m.verify(&out).unwrap();
    let (header, rows) = read_csv(&out.join("heightfunction.csv"));
    assert_eq!(header[..5], ["alpha1_rad", "alpha2_rad", "Hx", "Hy", "Htheta"]);
    assert_eq!(rows.len(), 121);
    // Display columns are the internal values in BL/rad^2 scaled by 100.
    for r in &rows {
        assert!((r[5] - r[2] / 0.3 * 100.0).abs() <= 1e-12 * r[5].abs().max(1.0));
    }
    assert!(m.summary["max_abs_hx_display"] > 0.1);

    let iso = write_config(
        dir.path(),
        "[grid]\nresolution = 11\n[medium]\nkind = \"viscous\"\nc_n = 1.0\n",
    );
    let out = dir.path().join("iso");
    run_ok(&[
        "height-function",
        "--config",
        &iso,
        "--out",
        out.to_str().unwrap(),
        "--quiet",
    ]);
    assert!(Manifest::read(&out).unwrap().summary["max_abs_hx_display"] < 1e-10);
}

#[test]
fn default_height_function_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_ok(&["height-function", "--out", a.to_str().unwrap(), "--quiet"]);
    run_ok(&[
        "height-function",
        "--out",
        b.to_str().unwrap(),
        "--quiet",
        "--threads",
        "2",
    ]);
    let (_, rows) = read_csv(&a.join("connection.csv"));
    assert_eq!(rows.len(), 101 * 101);
    assert_eq!(swimmer_cli::checks::compare_trees(&a, &b), Ok(4));
}

#[test]
fn rigid_simulation_columns_track_the_command() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    let stdout = run_ok(&["simulate", "--out", out.to_str().unwrap()]).stdout;
    assert!(String::from_utf8_lossy(&stdout).contains("mean_dx"));
    let (header, rows) = read_csv(&out.join("trajectory.csv"));
    assert_eq!(
        header,
        ["t", "psi1", "psi2", "alpha1", "alpha2", "x", "y", "theta", "residual"]
    );
    assert_eq!(rows.len(), 7 * 1000 + 1);
    for r in &rows {
        assert!((r[1] - r[3]).abs() < 1e-9 && (r[2] - r[4]).abs() < 1e-9);
    }
    let json: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("displacement.json")).unwrap()).unwrap();
    assert_eq!(json["per_cycle"].as_array().unwrap().len(), 7);
    assert_eq!(json["discarded_cycles"], 2);
}

#[test]
fn sweep_over_compliance_levels() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    run_ok(&[
        "sweep",
        "--param",
        "compliance.g",
        "--values",
        "0,0.25,0.5,0.75,1,1.25",
        "--out",
        out.to_str().unwrap(),
        "--quiet",
    ]);
    let (header, rows) = read_csv(&out.join("sweep.csv"));
    assert_eq!(header[0], "compliance.g");
    assert_eq!(rows.len(), 6);
    let dx: Vec<f64> = rows.iter().map(|r| r[1]).collect();
    assert!((dx[1] - dx[0]).abs() < 0.1 * dx[0]);
    assert!(dx[5] < 0.6 * dx[0]);
    Manifest::read(&out).unwrap().verify(&out).unwrap();
}

#[test]
fn optimize_writes_coefficients_and_verification() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[compliance]\nkind = \"cable\"\ng = 1.0\n");
    let out = dir.path().join("opt");
    run_ok(&["optimize", "--config", &cfg, "--out", out.to_str().unwrap(), "--quiet"]);
    let m = Manifest::read(&out).unwrap();
    let names: Vec<&str> = m.files.iter().map(|f| f.name.as_str()).collect();
    assert_eq!(
        names,
        ["optimal_gait.json", "suggested_gait.csv", "verification_trajectory.csv"]
    );
    assert!(m.summary["shape_error"] < 0.05);
    assert!(m.summary["realized_dx"] > 1.5 * m.summary["baseline_dx"]);
    let json: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("optimal_gait.json")).unwrap()).unwrap();
    assert_eq!(json["coefficients"].as_array().unwrap().len(), 40);
    let (header, rows) = read_csv(&out.join("suggested_gait.csv"));
    assert_eq!(header.last().unwrap(), "mode2");
    assert_eq!(rows.len(), 400);
}
