//! The CLI verbs. Each writes its artifacts into one directory and returns the manifest.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use swimmer_core::compliance::{simulate_emergent, DisplacementSummary, EmergentTrajectory, FourierGait};
use swimmer_core::connection::{build_connection_field, height_function as curl, Displacement, Row};
use swimmer_core::gaitopt::{optimize_for_compliance, OptimizationResult};

use crate::config::{Format, GridConfig, MediumConfig, RunConfig};
use crate::error::CliError;
use crate::output::{csv_bytes, Artifacts, Cell, Manifest};

/// Height-function values are shown multiplied by this factor.
pub const DISPLAY_SCALE: f64 = 100.0;

const TRAJECTORY_HEADER: [&str; 9] = ["t", "psi1", "psi2", "alpha1", "alpha2", "x", "y", "theta", "residual"];

fn trajectory_csv(traj: &EmergentTrajectory) -> Result<Vec<u8>, CliError> {
    csv_bytes(
        &TRAJECTORY_HEADER,
        traj.samples.iter().map(|s| {
            vec![
                s.t.into(),
                s.psi.alpha1.into(),
                s.psi.alpha2.into(),
                s.alpha.alpha1.into(),
                s.alpha.alpha2.into(),
                s.pose.x.into(),
                s.pose.y.into(),
                s.pose.theta.into(),
                s.residual.into(),
            ]
        }),
    )
}

#[derive(Serialize)]
struct HeightFunctionMeta<'a> {
    grid: &'a GridConfig,
    medium: &'a MediumConfig,
    geometry: &'a crate::config::GeometryConfig,
    body_length_m: f64,
    display_scale: f64,
    units: BTreeMap<&'static str, &'static str>,
    max_abs_display: BTreeMap<&'static str, f64>,
}

pub fn height_function(cfg: &RunConfig, out: &Path) -> Result<Manifest, CliError> {
    let geom = cfg.geometry();
    let bl = geom.body_length();
    let field = build_connection_field(&cfg.medium.to_medium(), &geom, &cfg.grid_spec())?;
    let hf = curl(&field);
    let grid = hf.grid;
    let node = |k: usize| grid.node(k % grid.resolution, k / grid.resolution);

    let mut art = Artifacts::create(out)?;
    // Translational rows are shown in body lengths.
    let display = [DISPLAY_SCALE / bl, DISPLAY_SCALE / bl, DISPLAY_SCALE];
    let mut max_display = BTreeMap::new();
    for (row, name) in [(Row::X, "hx"), (Row::Y, "hy"), (Row::Theta, "htheta")] {
        max_display.insert(name, hf.max_abs(row) * display[row.index()]);
    }
    if cfg.output.wants(Format::Csv) {
        let rows = hf.values.iter().enumerate().map(|(k, h)| {
            let a = node(k);
            vec![
                a.alpha1.into(),
                a.alpha2.into(),
                h.x.into(),
                h.y.into(),
                h.z.into(),
                (h.x * display[0]).into(),
                (h.y * display[1]).into(),
                (h.z * display[2]).into(),
            ]
        });
        let header = [
            "alpha1_rad",
            "alpha2_rad",
            "Hx",
            "Hy",
            "Htheta",
            "Hx_display",
            "Hy_display",
            "Htheta_display",
        ];
        art.write("heightfunction.csv", &csv_bytes(&header, rows)?)?;

        let rows = field.values.iter().enumerate().map(|(k, m)| {
            let a = node(k);
            let mut row: Vec<Cell> = vec![a.alpha1.into(), a.alpha2.into()];
            row.extend((0..3).flat_map(|r| (0..2).map(move |c| Cell::F(m[(r, c)]))));
            row
        });
        let header = [
            "alpha1_rad",
            "alpha2_rad",
            "A_x1",
            "A_x2",
            "A_y1",
            "A_y2",
            "A_theta1",
            "A_theta2",
        ];
        art.write("connection.csv", &csv_bytes(&header, rows)?)?;
    }
    if cfg.output.wants(Format::Json) {
        let units = BTreeMap::from([
            ("A_x, A_y", "m/rad"),
            ("A_theta", "rad/rad"),
            ("Hx, Hy", "m/rad^2"),
            ("Htheta", "1/rad"),
            ("Hx_display, Hy_display", "BL/rad^2 x 100"),
            ("Htheta_display", "1/rad x 100"),
        ]);
        art.write_json(
            "heightfunction.json",
            &HeightFunctionMeta {
                grid: &cfg.grid,
                medium: &cfg.medium,
                geometry: &cfg.geometry,
                body_length_m: bl,
                display_scale: DISPLAY_SCALE,
                units,
                max_abs_display: max_display.clone(),
            },
        )?;
    }
    let summary = max_display
        .into_iter()
        .map(|(k, v)| (format!("max_abs_{k}_display"), v))
        .collect();
    art.finish("height-function", cfg.to_canonical(), summary)
}

/// Summary metrics shared by `simulate` and each `sweep` row.
pub fn simulation_metrics(traj: &EmergentTrajectory) -> BTreeMap<String, f64> {
    let s = traj.summary();
    let tracking = traj
        .samples
        .iter()
        .map(|p| (p.alpha.as_vector() - p.psi.as_vector()).amax())
        .fold(0.0, f64::max);
    BTreeMap::from([
        ("mean_dx".into(), s.mean.dx),
        ("mean_dy".into(), s.mean.dy),
        ("mean_dtheta".into(), s.mean.dtheta),
        ("std_dx".into(), s.std_dx),
        ("loop_area".into(), traj.loop_area()),
        ("max_residual".into(), traj.max_residual()),
        ("max_tracking_error".into(), tracking),
    ])
}

#[derive(Serialize)]
struct DisplacementRecord<'a> {
    /// dx, dy in body lengths; dtheta in rad.
    per_cycle: &'a [Displacement],
    discarded_cycles: usize,
    mean: Displacement,
    std_dx: f64,
    loop_area_rad2: f64,
}

impl<'a> DisplacementRecord<'a> {
    fn new(s: &'a DisplacementSummary, traj: &EmergentTrajectory) -> Self {
        Self {
            per_cycle: &s.per_cycle,
            discarded_cycles: s.discarded,
            mean: s.mean,
            std_dx: s.std_dx,
            loop_area_rad2: traj.loop_area(),
        }
    }
}

pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<Manifest, CliError> {
    let traj = simulate_emergent(
        &cfg.gait.to_gait(),
        &cfg.compliance.to_spec(),
        &cfg.medium.to_medium(),
        &cfg.geometry(),
        &cfg.sim_options(),
    )?;
    let mut art = Artifacts::create(out)?;
    if cfg.output.wants(Format::Csv) {
        art.write("trajectory.csv", &trajectory_csv(&traj)?)?;
    }
    if cfg.output.wants(Format::Json) {
        let s = traj.summary();
        art.write_json("displacement.json", &DisplacementRecord::new(&s, &traj))?;
    }
    art.finish("simulate", cfg.to_canonical(), simulation_metrics(&traj))
}

#[derive(Serialize)]
struct OptimalGaitRecord<'a> {
    suggested_gait: &'a FourierGait,
    /// a1, b1, a2, b2 concatenated.
    coefficients: Vec<f64>,
    predicted_displacement: Displacement,
    realized: DisplacementRecord<'a>,
    baseline_mean_dx: f64,
    fit_residual_rms_rad: f64,
    shape_error: f64,
    saturated_samples: usize,
    period: f64,
    optimal_emergent: Vec<[f64; 2]>,
}

pub fn optimize(cfg: &RunConfig, out: &Path) -> Result<Manifest, CliError> {
    let medium = cfg.medium.to_medium();
    let geom = cfg.geometry();
    let spec = cfg.compliance.to_spec();
    let r = optimize_for_compliance(&spec, &medium, &geom, &cfg.optimizer_options())?;
    let baseline = simulate_emergent(&cfg.gait.to_gait(), &spec, &medium, &geom, &cfg.sim_options())
        .map_err(|e| e.at_stage("baseline simulation"))?;
    let baseline_dx = baseline.summary().mean.dx;

    let mut art = Artifacts::create(out)?;
    if cfg.output.wants(Format::Json) {
        art.write_json(
            "optimal_gait.json",
            &OptimalGaitRecord {
                suggested_gait: &r.suggested_gait,
                coefficients: r.suggested_gait.flatten(),
                predicted_displacement: r.predicted_displacement,
                realized: DisplacementRecord::new(&r.realized, &r.verification),
                baseline_mean_dx: baseline_dx,
                fit_residual_rms_rad: r.fit_residual_rms,
                shape_error: r.shape_error,
                saturated_samples: r.inverse.saturated_samples(),
                period: r.optimal_emergent.period,
                optimal_emergent: r.optimal_emergent.points.iter().map(|p| [p.alpha1, p.alpha2]).collect(),
            },
        )?;
    }
    if cfg.output.wants(Format::Csv) {
        art.write("suggested_gait.csv", &suggested_csv(&r)?)?;
        art.write("verification_trajectory.csv", &trajectory_csv(&r.verification)?)?;
    }
    let summary = BTreeMap::from([
        ("predicted_dx".into(), r.predicted_displacement.dx),
        ("realized_dx".into(), r.realized.mean.dx),
        ("realized_std_dx".into(), r.realized.std_dx),
        ("baseline_dx".into(), baseline_dx),
        ("shape_error".into(), r.shape_error),
        ("fit_residual_rms".into(), r.fit_residual_rms),
        ("saturated_samples".into(), r.inverse.saturated_samples() as f64),
        ("max_residual".into(), r.verification.max_residual()),
    ]);
    art.finish("optimize", cfg.to_canonical(), summary)
}

fn suggested_csv(r: &OptimizationResult) -> Result<Vec<u8>, CliError> {
    let inv = &r.inverse;
    let header = [
        "t", "alpha1", "alpha2", "psi1", "psi2", "psi1_fit", "psi2_fit", "tau1", "tau2", "mode1", "mode2",
    ];
    let rows = (0..inv.times.len()).map(|k| {
        let t = inv.times[k];
        let (fit, _) = swimmer_core::compliance::SuggestedGait::Fourier(r.suggested_gait.clone()).eval(t);
        vec![
            t.into(),
            inv.alpha[k].alpha1.into(),
            inv.alpha[k].alpha2.into(),
            inv.psi[k].alpha1.into(),
            inv.psi[k].alpha2.into(),
            fit.x.into(),
            fit.y.into(),
            inv.spring_torque[k][0].into(),
            inv.spring_torque[k][1].into(),
            inv.modes[k][0].label().into(),
            inv.modes[k][1].label().into(),
        ]
    });
    csv_bytes(&header, rows)
}

/// Columns of `sweep.csv` after the swept value.
const SWEEP_SIM_COLUMNS: [&str; 7] = [
    "mean_dx",
    "std_dx",
    "mean_dy",
    "mean_dtheta",
    "loop_area",
    "max_residual",
    "max_tracking_error",
];
const SWEEP_OPT_COLUMNS: [&str; 4] = ["optimized_dx", "optimized_std_dx", "predicted_dx", "shape_error"];

pub fn sweep(
    cfg: &RunConfig,
    out: &Path,
    key: &str,
    values: &[String],
    with_optimizer: bool,
) -> Result<Manifest, CliError> {
    if values.is_empty() {
        return Err(CliError::Config("sweep needs at least one value".into()));
    }
    let configs = values
        .iter()
        .map(|v| cfg.with_value(key, v))
        .collect::<Result<Vec<_>, _>>()?;
    let rows = configs
        .par_iter()
        .map(|c| sweep_row(c, key, with_optimizer))
        .collect::<Result<Vec<_>, CliError>>()?;

    let mut header = vec![key];
    header.extend(SWEEP_SIM_COLUMNS);
    if with_optimizer {
        header.extend(SWEEP_OPT_COLUMNS);
    }
    let mut art = Artifacts::create(out)?;
    let table: Vec<Vec<f64>> = rows
        .iter()
        .map(|(v, m)| std::iter::once(*v).chain(header[1..].iter().map(|h| m[*h])).collect())
        .collect();
    if cfg.output.wants(Format::Csv) {
        let cells = table.iter().map(|r| r.iter().map(|v| Cell::F(*v)).collect());
        art.write("sweep.csv", &csv_bytes(&header, cells)?)?;
    }
    if cfg.output.wants(Format::Json) {
        let records: Vec<BTreeMap<&str, f64>> = table
            .iter()
            .map(|r| header.iter().copied().zip(r.iter().copied()).collect())
            .collect();
        art.write_json("sweep.json", &records)?;
    }
    let mut summary = BTreeMap::from([("rows".to_owned(), rows.len() as f64)]);
    for (i, (_, m)) in rows.iter().enumerate() {
        summary.insert(format!("row{i}.mean_dx"), m["mean_dx"]);
        if with_optimizer {
            summary.insert(format!("row{i}.optimized_dx"), m["optimized_dx"]);
        }
    }
    art.finish(&format!("sweep {key}"), cfg.to_canonical(), summary)
}

fn sweep_row(cfg: &RunConfig, key: &str, with_optimizer: bool) -> Result<(f64, BTreeMap<String, f64>), CliError> {
    let value = lookup_number(cfg, key);
    let medium = cfg.medium.to_medium();
    let geom = cfg.geometry();
    let spec = cfg.compliance.to_spec();
    let traj = simulate_emergent(&cfg.gait.to_gait(), &spec, &medium, &geom, &cfg.sim_options())?;
    let mut m = simulation_metrics(&traj);
    if with_optimizer {
        let r = optimize_for_compliance(&spec, &medium, &geom, &cfg.optimizer_options())?;
        m.insert("optimized_dx".into(), r.realized.mean.dx);
        m.insert("optimized_std_dx".into(), r.realized.std_dx);
        m.insert("predicted_dx".into(), r.predicted_displacement.dx);
        m.insert("shape_error".into(), r.shape_error);
    }
    Ok((value, m))
}

fn lookup_number(cfg: &RunConfig, key: &str) -> f64 {
    let mut v = toml::Value::try_from(cfg).expect("config serializes");
    for part in key.split('.') {
        v = v[part].clone();
    }
    match v {
        toml::Value::Integer(i) => i as f64,
        toml::Value::Float(f) => f,
        _ => f64::NAN,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> RunConfig {
        RunConfig::parse("[grid]\nresolution = 21\n[simulation]\nn_cycles = 2\ndiscard_cycles = 1\ndt = 0.05\n")
            .unwrap()
    }

    #[test]
    fn height_function_writes_listed_files() {
        let dir = tempfile::tempdir().unwrap();
        let m = height_function(&quick(), dir.path()).unwrap();
        let names: Vec<&str> = m.files.iter().map(|f| f.name.as_str()).collect();
        assert_eq!(names, ["heightfunction.csv", "connection.csv", "heightfunction.json"]);
        m.verify(dir.path()).unwrap();
        let csv = std::fs::read_to_string(dir.path().join("heightfunction.csv")).unwrap();
        assert_eq!(csv.lines().count(), 1 + 21 * 21);
        assert!(csv.starts_with("alpha1_rad,alpha2_rad,Hx,Hy,Htheta,"));
    }

    #[test]
    fn rigid_simulation_tracks_the_command() {
        let dir = tempfile::tempdir().unwrap();
        let m = simulate(&quick(), dir.path()).unwrap();
        assert!(m.summary["max_tracking_error"] < 1e-9);
        let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
        assert_eq!(csv.lines().next().unwrap(), TRAJECTORY_HEADER.join(","));
    }

    #[test]
    fn single_value_sweep_matches_simulate() {
        let cfg = quick();
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let sim = simulate(&cfg, a.path()).unwrap();
        let sw = sweep(&cfg, b.path(), "compliance.g", &["0".into()], false).unwrap();
        assert_eq!(sw.summary["row0.mean_dx"], sim.summary["mean_dx"]);
        let csv = std::fs::read_to_string(b.path().join("sweep.csv")).unwrap();
        assert_eq!(csv.lines().count(), 2);
    }

    #[test]
    fn sweep_rejects_non_numeric_keys() {
        let dir = tempfile::tempdir().unwrap();
        let err = sweep(&quick(), dir.path(), "medium.kind", &["1".into()], false).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
