//! Release checks, one per acceptance criterion.

use std::f64::consts::PI;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use swimmer_core::compliance::{
    simulate_emergent, CableScheme, ComplianceSpec, FourierGait, SimOptions, SuggestedGait,
};
use swimmer_core::connection::{
    build_connection_field, displacement_line_integral, displacement_surface_integral, height_function, Displacement,
    GaitPath, GridSpec, LineIntegralMode, Row,
};
use swimmer_core::gaitopt::{optimize_with_plan, plan_optimal_gait, OptimizerOptions};
use swimmer_core::geometry::{ShapeState, SwimmerGeometry};
use swimmer_core::media::{GranularParams, Medium, ViscousParams};

use crate::commands;
use crate::config::RunConfig;
use crate::error::CliError;

pub const SWEEP_G: [f64; 6] = [0.0, 0.25, 0.5, 0.75, 1.0, 1.25];

#[derive(Debug, Clone)]
pub struct CheckReport {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
    pub budget: Option<f64>,
}

impl CheckReport {
    /// One-line summary without the timing, so reports can be compared across runs.
    pub fn line(&self) -> String {
        format!(
            "C{:<2} {:<28} {}  {}",
            self.id,
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.detail
        )
    }
}

type Outcome = Result<(bool, String), CliError>;

struct Check {
    id: usize,
    name: &'static str,
    budget: Option<f64>,
    run: fn(u64) -> Outcome,
}

const CHECKS: [Check; 10] = [
    Check {
        id: 1,
        name: "rigid identity",
        budget: Some(10.0),
        run: rigid_identity,
    },
    Check {
        id: 2,
        name: "stokes consistency",
        budget: Some(60.0),
        run: stokes_consistency,
    },
    Check {
        id: 3,
        name: "scallop null",
        budget: Some(30.0),
        run: scallop_null,
    },
    Check {
        id: 4,
        name: "isotropy null",
        budget: Some(60.0),
        run: isotropy_null,
    },
    Check {
        id: 5,
        name: "mirror symmetry",
        budget: Some(30.0),
        run: mirror_symmetry,
    },
    Check {
        id: 6,
        name: "compliance trend",
        budget: Some(300.0),
        run: compliance_trend,
    },
    Check {
        id: 7,
        name: "optimizer dominance",
        budget: Some(600.0),
        run: optimizer_dominance,
    },
    Check {
        id: 8,
        name: "round-trip inverse dynamics",
        budget: Some(120.0),
        run: round_trip,
    },
    Check {
        id: 9,
        name: "numerical convergence",
        budget: Some(600.0),
        run: convergence,
    },
    Check {
        id: 10,
        name: "determinism",
        budget: None,
        run: determinism,
    },
];

pub fn ids() -> Vec<usize> {
    CHECKS.iter().map(|c| c.id).collect()
}

pub fn run(id: usize, seed: u64) -> CheckReport {
    let check = CHECKS.iter().find(|c| c.id == id).expect("known check id");
    let start = Instant::now();
    let outcome = (check.run)(seed);
    let seconds = start.elapsed().as_secs_f64();
    let (mut passed, mut detail) = match outcome {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e}")),
    };
    if let Some(b) = check.budget {
        if seconds > b {
            passed = false;
            detail.push_str(&format!("; over the {b:.0} s budget"));
        }
    }
    CheckReport {
        id,
        name: check.name,
        passed,
        detail,
        seconds,
        budget: check.budget,
    }
}

pub fn run_all(seed: u64) -> Vec<CheckReport> {
    CHECKS.iter().map(|c| run(c.id, seed)).collect()
}

fn granular() -> Medium {
    Medium::Granular(GranularParams::default())
}

fn viscous() -> Medium {
    Medium::Viscous(ViscousParams::default())
}

fn cable(g: f64) -> ComplianceSpec {
    ComplianceSpec::Cable(CableScheme {
        g,
        ..Default::default()
    })
}

fn mean(
    gait: &SuggestedGait,
    spec: &ComplianceSpec,
    medium: &Medium,
    opts: &SimOptions,
) -> Result<Displacement, CliError> {
    Ok(
        simulate_emergent(gait, spec, medium, &SwimmerGeometry::default(), opts)?
            .summary()
            .mean,
    )
}

fn circular_dx(g: f64, opts: &SimOptions) -> Result<f64, CliError> {
    Ok(mean(&SuggestedGait::default(), &cable(g), &granular(), opts)?.dx)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn rigid_identity(_: u64) -> Outcome {
    let traj = simulate_emergent(
        &SuggestedGait::default(),
        &cable(0.0),
        &granular(),
        &SwimmerGeometry::default(),
        &SimOptions::default(),
    )?;
    let err = traj
        .samples
        .iter()
        .map(|s| (s.alpha.as_vector() - s.psi.as_vector()).amax())
        .fold(0.0, f64::max);
    Ok((
        err < 1e-6,
        format!("max |alpha - psi| = {err:.2e} rad over {} cycles", traj.n_cycles()),
    ))
}

fn random_loop(rng: &mut ChaCha8Rng, limit: f64) -> GaitPath {
    let a = rng.gen_range(0.05..=0.2);
    let b = rng.gen_range(0.05..=a);
    let reach = limit - a - 0.02;
    let center = ShapeState::new(rng.gen_range(-reach..reach), rng.gen_range(-reach..reach));
    let path = GaitPath::ellipse(center, a, b, rng.gen_range(0.0..PI), 200, 10.0);
    if rng.gen_bool(0.5) {
        path.reversed()
    } else {
        path
    }
}

fn stokes_consistency(seed: u64) -> Outcome {
    let geom = SwimmerGeometry::default();
    let grid = GridSpec::default();
    let mut worst = 0.0f64;
    let mut failures = 0;
    for (k, medium) in [granular(), viscous()].into_iter().enumerate() {
        let hf = height_function(&build_connection_field(&medium, &geom, &grid)?);
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
        let loops: Vec<GaitPath> = (0..50).map(|_| random_loop(&mut rng, grid.limit)).collect();
        let errs = loops
            .par_iter()
            .map(|p| {
                let line = displacement_line_integral(p, &medium, &geom, LineIntegralMode::FirstOrder)?;
                let surf = displacement_surface_integral(p, &hf, &geom)?;
                // Error in units of the allowed tolerance.
                Ok((surf.dx - line.dx).abs() / (0.02 * line.dx.abs()).max(1e-4))
            })
            .collect::<Result<Vec<f64>, CliError>>()?;
        failures += errs.iter().filter(|e| **e > 1.0).count();
        worst = errs.iter().copied().fold(worst, f64::max);
    }
    Ok((
        failures == 0,
        format!("100 loops, worst error {:.3} of tolerance, {failures} over", worst),
    ))
}

/// Cosine-only series trace the same curve forward and back.
fn reciprocal_gait(rng: &mut ChaCha8Rng) -> SuggestedGait {
    let mut g = FourierGait::zeros(10, 10.0);
    for p in 0..3 {
        g.a1[p] = rng.gen_range(-0.4..0.4) / (p + 1) as f64;
        g.a2[p] = rng.gen_range(-0.4..0.4) / (p + 1) as f64;
    }
    SuggestedGait::Fourier(g)
}

fn scallop_null(seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gaits: Vec<SuggestedGait> = (0..3).map(|_| reciprocal_gait(&mut rng)).collect();
    let cases: Vec<(SuggestedGait, Medium)> = gaits
        .iter()
        .flat_map(|g| [granular(), viscous()].map(|m| (g.clone(), m)))
        .collect();
    let worst = cases
        .par_iter()
        .map(|(g, m)| Ok(mean(g, &ComplianceSpec::Rigid, m, &SimOptions::default())?.dx.abs()))
        .collect::<Result<Vec<f64>, CliError>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok((
        worst < 1e-3,
        format!("{} reciprocal runs, max |dx| = {worst:.2e} BL", cases.len()),
    ))
}

fn isotropy_null(_: u64) -> Outcome {
    let geom = SwimmerGeometry::default();
    let grid = GridSpec::default();
    let iso = Medium::Viscous(ViscousParams { c_t: 1.0, c_n: 1.0 });
    let aniso = Medium::Viscous(ViscousParams { c_t: 1.0, c_n: 2.0 });
    let h_iso = height_function(&build_connection_field(&iso, &geom, &grid)?).max_abs(Row::X);
    let h_aniso = height_function(&build_connection_field(&aniso, &geom, &grid)?).max_abs(Row::X);
    let ratio = h_iso / h_aniso;
    let dx = mean(
        &SuggestedGait::default(),
        &ComplianceSpec::Rigid,
        &iso,
        &SimOptions::default(),
    )?
    .dx;
    Ok((
        ratio < 1e-6 && dx.abs() < 1e-3,
        format!("max|Hx| ratio = {ratio:.2e}, circular |dx| = {:.2e} BL", dx.abs()),
    ))
}

fn mirror_symmetry(seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = FourierGait::zeros(10, 10.0);
    for p in 0..3 {
        let s = 0.35 / (p + 1) as f64;
        f.a1[p] = rng.gen_range(-s..s);
        f.b1[p] = rng.gen_range(-s..s);
        f.a2[p] = rng.gen_range(-s..s);
        f.b2[p] = rng.gen_range(-s..s);
    }
    let gaits = [SuggestedGait::default(), SuggestedGait::Fourier(f)];
    let mut cases = Vec::new();
    for g in &gaits {
        for m in [granular(), viscous()] {
            for s in [ComplianceSpec::Rigid, cable(0.75)] {
                cases.push((g.clone(), m, s));
            }
        }
    }
    let worst = cases
        .par_iter()
        .map(|(g, m, s)| {
            let opts = SimOptions::default();
            let (a, b) = (mean(g, s, m, &opts)?, mean(&g.mirrored(), s, m, &opts)?);
            Ok((a.dx - b.dx)
                .abs()
                .max((a.dy + b.dy).abs())
                .max((a.dtheta + b.dtheta).abs()))
        })
        .collect::<Result<Vec<f64>, CliError>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok((
        worst < 1e-6,
        format!("{} gait pairs, max deviation {worst:.2e}", cases.len()),
    ))
}

fn circular_sweep() -> Result<Vec<f64>, CliError> {
    SWEEP_G
        .par_iter()
        .map(|g| circular_dx(*g, &SimOptions::default()))
        .collect()
}

fn format_row(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" ")
}

fn compliance_trend(_: u64) -> Outcome {
    let dx = circular_sweep()?;
    let plateau = dx[1..]
        .iter()
        .zip(&SWEEP_G[1..])
        .filter(|(_, g)| **g <= 0.25)
        .all(|(d, _)| rel(*d, dx[0]) <= 0.1);
    let drop = 1.0 - dx[5] / dx[0];
    Ok((
        plateau && drop >= 0.4,
        format!("dx(G) = [{}] BL, drop at 1.25 = {:.0}%", format_row(&dx), 100.0 * drop),
    ))
}

struct OptimizedSweep {
    circular: Vec<f64>,
    optimized: Vec<f64>,
}

fn optimized_sweep(opts: &OptimizerOptions) -> Result<OptimizedSweep, CliError> {
    let (medium, geom) = (granular(), SwimmerGeometry::default());
    let plan = plan_optimal_gait(&medium, &geom, opts)?;
    let rows = SWEEP_G
        .par_iter()
        .map(|&g| {
            let r = optimize_with_plan(&plan, &cable(g), &medium, &geom, opts)?;
            Ok((circular_dx(g, &opts.sim)?, r.realized.mean.dx))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(OptimizedSweep {
        circular: rows.iter().map(|r| r.0).collect(),
        optimized: rows.iter().map(|r| r.1).collect(),
    })
}

fn optimizer_dominance(_: u64) -> Outcome {
    let s = optimized_sweep(&OptimizerOptions::default())?;
    let dominates = s
        .optimized
        .iter()
        .zip(&s.circular)
        .all(|(o, c)| *o >= c - 0.05 * c.abs());
    let gain = s.optimized[4] / s.circular[4];
    Ok((
        dominates && gain >= 1.5,
        format!(
            "optimized [{}] vs circular [{}] BL, gain at G=1 = {gain:.2}x",
            format_row(&s.optimized),
            format_row(&s.circular)
        ),
    ))
}

fn round_trip(_: u64) -> Outcome {
    let (medium, geom) = (granular(), SwimmerGeometry::default());
    let opts = OptimizerOptions::default();
    let plan = plan_optimal_gait(&medium, &geom, &opts)?;
    let errs = SWEEP_G[..5]
        .par_iter()
        .map(|&g| Ok(optimize_with_plan(&plan, &cable(g), &medium, &geom, &opts)?.shape_error))
        .collect::<Result<Vec<f64>, CliError>>()?;
    let worst = errs.iter().copied().fold(0.0, f64::max);
    Ok((
        worst < 0.05,
        format!(
            "shape error for G <= 1: [{}], worst {:.1}%",
            format_row(&errs),
            100.0 * worst
        ),
    ))
}

fn convergence(_: u64) -> Outcome {
    let (medium, geom) = (granular(), SwimmerGeometry::default());
    let base = SimOptions::default();
    let half = SimOptions {
        dt: base.dt / 2.0,
        ..base
    };
    let gs = [0.0, 0.5, 1.0];
    let dt_changes = gs
        .par_iter()
        .map(|&g| Ok(rel(circular_dx(g, &half)?, circular_dx(g, &base)?)))
        .collect::<Result<Vec<f64>, CliError>>()?;

    // The optimized gait at G = 1 under a halved step and a doubled grid.
    let run = |opts: &OptimizerOptions| -> Result<(f64, f64), CliError> {
        let plan = plan_optimal_gait(&medium, &geom, opts)?;
        let r = optimize_with_plan(&plan, &cable(1.0), &medium, &geom, opts)?;
        Ok((r.predicted_displacement.dx, r.realized.mean.dx))
    };
    let opts = OptimizerOptions::default();
    let fine_dt = OptimizerOptions {
        sim: half,
        ..opts.clone()
    };
    let fine_grid = OptimizerOptions {
        grid: GridSpec {
            resolution: 2 * opts.grid.resolution - 1,
            ..opts.grid
        },
        ..opts.clone()
    };
    let (base_run, (dt_run, grid_run)) =
        rayon::join(|| run(&opts), || rayon::join(|| run(&fine_dt), || run(&fine_grid)));
    let ((p0, r0), (_, r_dt), (p_grid, r_grid)) = (base_run?, dt_run?, grid_run?);
    let worst_dt = dt_changes.iter().copied().fold(rel(r_dt, r0), f64::max);
    let worst_grid = rel(p_grid, p0).max(rel(r_grid, r0));
    Ok((
        worst_dt < 0.01 && worst_grid < 0.01,
        format!(
            "dt/2 change {:.3}%, grid x2 change {:.3}%",
            100.0 * worst_dt,
            100.0 * worst_grid
        ),
    ))
}

/// Config used for the determinism check: small grid, default physics.
pub fn determinism_config() -> RunConfig {
    RunConfig::parse("[grid]\nresolution = 31\n[compliance]\nkind = \"cable\"\ng = 1.0\n").expect("valid")
}

fn run_verbs(cfg: &RunConfig, dir: &Path) -> Result<(), CliError> {
    commands::height_function(cfg, &dir.join("height-function"))?;
    commands::simulate(cfg, &dir.join("simulate"))?;
    commands::optimize(cfg, &dir.join("optimize"))?;
    commands::sweep(cfg, &dir.join("sweep"), "compliance.g", &["0".into(), "1".into()], true)?;
    Ok(())
}

/// Every file under `a` has a byte-identical twin under `b`, and vice versa.
pub fn compare_trees(a: &Path, b: &Path) -> Result<usize, String> {
    fn files(root: &Path) -> Vec<std::path::PathBuf> {
        let mut out = Vec::new();
        let mut stack = vec![root.to_path_buf()];
        while let Some(d) = stack.pop() {
            for e in std::fs::read_dir(&d).into_iter().flatten().flatten() {
                let p = e.path();
                if p.is_dir() {
                    stack.push(p);
                } else {
                    out.push(p.strip_prefix(root).expect("under root").to_path_buf());
                }
            }
        }
        out.sort();
        out
    }
    let (fa, fb) = (files(a), files(b));
    if fa != fb {
        return Err(format!("file lists differ: {fa:?} vs {fb:?}"));
    }
    for f in &fa {
        if std::fs::read(a.join(f)).ok() != std::fs::read(b.join(f)).ok() {
            return Err(format!("{} differs", f.display()));
        }
    }
    Ok(fa.len())
}

fn determinism(_: u64) -> Outcome {
    let cfg = determinism_config();
    let (a, b) = (tempfile::tempdir()?, tempfile::tempdir()?);
    run_verbs(&cfg, a.path())?;
    run_verbs(&cfg, b.path())?;
    Ok(match compare_trees(a.path(), b.path()) {
        Ok(n) => (true, format!("4 verbs run twice, {n} files byte-identical")),
        Err(e) => (false, e),
    })
}
