//! Optimal gaits for compliant joints.
//!
//! The displacement-optimal emergent gait is the boundary of the positive
//! region of a height function, truncated to the joint limits. Inverting the
//! joint balance along that path gives the command that produces it.

use std::collections::HashMap;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::compliance::{
    simulate_emergent, CableScheme, ComplianceSpec, DisplacementSummary, EmergentTrajectory, FourierGait, Regime,
    SimOptions, SuggestedGait,
};
use crate::connection::{
    build_connection_field, height_function, raster_integral, solve_body_velocity, surface_integral, Displacement,
    GaitPath, GridSpec, HeightFunction, Row, SolverOptions,
};
use crate::error::{Result, SwimmerError};
use crate::geometry::{velocity_map, ShapeState, SwimmerGeometry};
use crate::media::{generalized_forces, Medium};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointLimits {
    /// Largest allowed |alpha_i| [rad].
    pub limit: f64,
}

impl Default for JointLimits {
    fn default() -> Self {
        Self {
            limit: 60f64.to_radians(),
        }
    }
}

impl JointLimits {
    pub fn validate(&self) -> Result<()> {
        if self.limit > 0.0 && self.limit.is_finite() {
            Ok(())
        } else {
            Err(SwimmerError::invalid("limits.limit must be > 0"))
        }
    }
}

pub const DEFAULT_PATH_POINTS: usize = 400;
pub const DEFAULT_PERIOD: f64 = 10.0;

/// Boundary of the best positive region of `hf`, with the defaults of 400
/// samples and a 10 s period.
pub fn optimal_emergent_gait(hf: &HeightFunction, limits: &JointLimits, row: Row) -> Result<GaitPath> {
    optimal_emergent_gait_with(hf, limits, row, DEFAULT_PATH_POINTS, DEFAULT_PERIOD)
}

/// Extract the zero contour of one height-function row, clip it to the
/// joint-limit box and return the loop enclosing the largest integral,
/// counterclockwise and resampled at uniform arc length.
pub fn optimal_emergent_gait_with(
    hf: &HeightFunction,
    limits: &JointLimits,
    row: Row,
    points: usize,
    period: f64,
) -> Result<GaitPath> {
    limits.validate()?;
    if points < 8 {
        return Err(SwimmerError::invalid("path_points must be >= 8"));
    }
    let values = hf.row(row);
    let scale = hf.values.iter().map(|v| v.amax()).fold(0.0, f64::max);
    let level = 1e-9 * scale;
    let grid = hf.grid;
    let lim = limits.limit.min(grid.limit);
    let any_positive = (0..grid.len()).any(|k| {
        let p = grid.node(k % grid.resolution, k / grid.resolution);
        p.within_limit(lim + 1e-12) && values[k] > level
    });
    if !any_positive {
        return Err(SwimmerError::NoPositiveRegion);
    }

    let sign = |pts: &[ShapeState]| {
        if crate::connection::signed_area(pts) >= 0.0 {
            1.0
        } else {
            -1.0
        }
    };
    let mut best: Option<(f64, f64, Vec<ShapeState>)> = None;
    for contour in marching_squares(&values, &grid, level) {
        let clipped = clip_to_box(&contour, lim);
        if clipped.len() < 4 {
            continue;
        }
        let area = crate::connection::signed_area(&clipped);
        if area.abs() < 1e-14 {
            continue;
        }
        let integral = sign(&clipped) * raster_integral(&clipped, hf)[row.index()];
        let centroid = clipped.iter().map(|p| p.as_vector()).sum::<Vector2<f64>>() / clipped.len() as f64;
        let dist = centroid.norm();
        let better = match &best {
            None => true,
            Some((bi, bd, _)) => {
                let tie = (integral - bi).abs() <= 1e-12 * bi.abs().max(integral.abs());
                if tie {
                    dist < *bd
                } else {
                    integral > *bi
                }
            }
        };
        if better {
            best = Some((integral, dist, clipped));
        }
    }
    let (integral, _, mut loop_pts) = best.ok_or(SwimmerError::NoPositiveRegion)?;
    if integral <= 0.0 {
        return Err(SwimmerError::NoPositiveRegion);
    }
    if crate::connection::signed_area(&loop_pts) < 0.0 {
        loop_pts.reverse();
    }
    // Start at the vertex with the largest alpha1 so the phase is canonical.
    loop_pts.pop();
    let start = (0..loop_pts.len())
        .max_by(|&a, &b| {
            let (p, q) = (loop_pts[a], loop_pts[b]);
            p.alpha1.total_cmp(&q.alpha1).then(q.alpha2.total_cmp(&p.alpha2))
        })
        .unwrap_or(0);
    loop_pts.rotate_left(start);
    Ok(GaitPath::new(loop_pts, period).resample_uniform(points))
}

/// Key of a lattice edge in the padded grid: horizontal edges run from
/// node `(i, j)` to `(i + 1, j)`, vertical ones from `(i, j)` to `(i, j + 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Edge {
    H(usize, usize),
    V(usize, usize),
}

/// Closed contours of `{f > level}`, counterclockwise around the positive
/// side. Nodes outside the lattice count as strongly negative, so regions
/// touching the lattice edge close along it.
fn marching_squares(values: &[f64], grid: &GridSpec, level: f64) -> Vec<Vec<ShapeState>> {
    let n = grid.resolution;
    let h = grid.spacing();
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let pad = -1e12 * scale;
    // Padded indices run 0..n+2; padded node (i, j) is lattice node (i-1, j-1).
    let f = |i: usize, j: usize| -> f64 {
        if i == 0 || j == 0 || i == n + 1 || j == n + 1 {
            pad
        } else {
            values[grid.index(i - 1, j - 1)] - level
        }
    };
    let pos = |i: usize, j: usize| -> ShapeState {
        ShapeState::new(-grid.limit + (i as f64 - 1.0) * h, -grid.limit + (j as f64 - 1.0) * h)
    };
    let crossing = |e: Edge| -> ShapeState {
        let ((i0, j0), (i1, j1)) = match e {
            Edge::H(i, j) => ((i, j), (i + 1, j)),
            Edge::V(i, j) => ((i, j), (i, j + 1)),
        };
        let (f0, f1) = (f(i0, j0), f(i1, j1));
        let t = f0 / (f0 - f1);
        let (p0, p1) = (pos(i0, j0).as_vector(), pos(i1, j1).as_vector());
        ShapeState::from_vector(p0 + t * (p1 - p0))
    };

    let mut next: HashMap<Edge, Edge> = HashMap::new();
    let mut order: Vec<Edge> = Vec::new();
    for j in 0..n + 1 {
        for i in 0..n + 1 {
            // Corners counterclockwise from bottom-left, each followed by the
            // edge leading to the next corner.
            let corners = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)];
            let edges = [Edge::H(i, j), Edge::V(i + 1, j), Edge::H(i, j + 1), Edge::V(i, j)];
            let vals = corners.map(|(a, b)| f(a, b));
            let inside = vals.map(|v| v > 0.0);
            // Walking the cell boundary counterclockwise, record where it
            // leaves (+ to -) and enters (- to +) the positive region.
            let mut events: Vec<(usize, bool)> = Vec::new();
            for k in 0..4 {
                let (a, b) = (inside[k], inside[(k + 1) % 4]);
                if a != b {
                    events.push((k, a));
                }
            }
            if events.is_empty() {
                continue;
            }
            let center_positive = vals.iter().sum::<f64>() > 0.0;
            let m = events.len();
            for (idx, &(k, leaving)) in events.iter().enumerate() {
                if !leaving {
                    continue;
                }
                // Separated positive corners pair each exit with the entry
                // just before it; a connected centre pairs it with the next.
                let partner = if m == 4 && center_positive {
                    events[(idx + 1) % m]
                } else {
                    events[(idx + m - 1) % m]
                };
                if m == 2 {
                    debug_assert!(!partner.1);
                }
                next.insert(edges[k], edges[partner.0]);
                order.push(edges[k]);
            }
        }
    }

    let mut loops = Vec::new();
    let mut used: HashMap<Edge, bool> = HashMap::new();
    for &start in &order {
        if used.contains_key(&start) {
            continue;
        }
        let mut pts = Vec::new();
        let mut e = start;
        loop {
            used.insert(e, true);
            pts.push(crossing(e));
            match next.get(&e) {
                Some(&nx) if nx == start => break,
                Some(&nx) if !used.contains_key(&nx) => e = nx,
                _ => break,
            }
        }
        pts.push(pts[0]);
        loops.push(pts);
    }
    loops
}

/// Sutherland-Hodgman clip of a closed polygon to `[-lim, lim]^2`.
fn clip_to_box(poly: &[ShapeState], lim: f64) -> Vec<ShapeState> {
    let mut pts: Vec<Vector2<f64>> = poly.iter().map(|p| p.as_vector()).collect();
    if pts.first() == pts.last() {
        pts.pop();
    }
    // (axis, sign): keep sign * coord <= lim.
    for (axis, sign) in [(0usize, 1.0f64), (0, -1.0), (1, 1.0), (1, -1.0)] {
        if pts.is_empty() {
            break;
        }
        let inside = |p: &Vector2<f64>| sign * p[axis] <= lim;
        let mut out = Vec::with_capacity(pts.len() + 4);
        for k in 0..pts.len() {
            let cur = pts[k];
            let prev = pts[(k + pts.len() - 1) % pts.len()];
            let intersect = || {
                let t = (sign * lim - prev[axis]) / (cur[axis] - prev[axis]);
                let mut p = prev + t * (cur - prev);
                p[axis] = sign * lim;
                p
            };
            match (inside(&prev), inside(&cur)) {
                (true, true) => out.push(cur),
                (true, false) => out.push(intersect()),
                (false, true) => {
                    out.push(intersect());
                    out.push(cur);
                }
                (false, false) => {}
            }
        }
        pts = out;
    }
    // Drop repeated vertices.
    pts.dedup_by(|a, b| (*a - *b).norm() < 1e-15);
    if pts.len() > 1 && (pts[0] - pts[pts.len() - 1]).norm() < 1e-15 {
        pts.pop();
    }
    let mut closed: Vec<ShapeState> = pts.into_iter().map(ShapeState::from_vector).collect();
    if let Some(first) = closed.first().copied() {
        closed.push(first);
    }
    closed
}

/// Joint state label along an inverse-dynamics solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointMode {
    /// Joint held at the command.
    Locked,
    /// Linear spring toward the command.
    Spring,
    Cable(Regime),
    /// Command clipped to the gait amplitude; the torque is not fully realized.
    Saturated,
}

impl JointMode {
    pub fn label(self) -> &'static str {
        match self {
            JointMode::Locked => "locked",
            JointMode::Spring => "spring",
            JointMode::Cable(r) => r.label(),
            JointMode::Saturated => "saturated",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct InverseOptions {
    /// Clip commands beyond the cable amplitude instead of failing.
    pub saturate: bool,
}

/// Commanded angles that realize a target emergent path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InverseSolution {
    pub times: Vec<f64>,
    pub alpha: Vec<ShapeState>,
    pub psi: Vec<ShapeState>,
    /// Torque the joint springs must supply [N m].
    pub spring_torque: Vec<[f64; 2]>,
    pub modes: Vec<[JointMode; 2]>,
}

impl InverseSolution {
    pub fn saturated_samples(&self) -> usize {
        self.modes.iter().filter(|m| m.contains(&JointMode::Saturated)).count()
    }
}

const MAX_REGIME_ITERATIONS: usize = 10;

/// Command angle that puts the cable bound `which` at `target`.
fn invert_bound(c: &CableScheme, which: Regime, target: f64) -> f64 {
    let gamma = c.gamma();
    let gc = c.amplitude.min(gamma);
    let k = c.l0 / c.r_p;
    match which {
        // lo(psi) = psi for psi >= gamma, k psi + gc - k gamma below.
        Regime::Lower => {
            if target >= gamma {
                target
            } else {
                let psi = (target - gc + k * gamma) / k;
                if psi < gamma {
                    psi
                } else {
                    gamma
                }
            }
        }
        // hi(psi) = psi for psi <= -gamma, k psi - gc + k gamma above.
        _ => {
            if target <= -gamma {
                target
            } else {
                let psi = (target + gc - k * gamma) / k;
                if psi > -gamma {
                    psi
                } else {
                    -gamma
                }
            }
        }
    }
}

fn invert_cable(
    c: &CableScheme,
    alpha: f64,
    tau: f64,
    t: f64,
    joint: usize,
    opts: &InverseOptions,
) -> Result<(f64, JointMode)> {
    // Torque the engaged cable must add on top of the skin.
    let e = tau + c.k_skin * alpha;
    let mut assumed = if e >= 0.0 { Regime::Lower } else { Regime::Upper };
    for _ in 0..MAX_REGIME_ITERATIONS {
        let psi = invert_bound(c, assumed, alpha + e / c.k_cable);
        if psi.abs() > c.amplitude * (1.0 + 1e-12) {
            if opts.saturate {
                return Ok((psi.clamp(-c.amplitude, c.amplitude), JointMode::Saturated));
            }
            return Err(SwimmerError::TorqueExceedsCapacity {
                t,
                joint,
                psi,
                amplitude: c.amplitude,
            });
        }
        let implied = c.regime(alpha, psi);
        // A vanishing cable torque leaves the joint on the boundary itself.
        if implied == assumed || e.abs() < 1e-14 {
            return Ok((psi, JointMode::Cable(assumed)));
        }
        assumed = match implied {
            Regime::Deadband => {
                if assumed == Regime::Lower {
                    Regime::Upper
                } else {
                    Regime::Lower
                }
            }
            other => other,
        };
    }
    Err(SwimmerError::RegimeNonConvergence { t })
}

/// Solve the joint balance along `path` for the commanded angles.
///
/// Joint rates come from centred differences of the periodic samples; the
/// body twist from the force balance; the required spring torque cancels the
/// medium's joint torque.
pub fn inverse_dynamics(
    path: &GaitPath,
    spec: &ComplianceSpec,
    medium: &Medium,
    geom: &SwimmerGeometry,
    opts: &InverseOptions,
) -> Result<InverseSolution> {
    let m = path.len();
    if m < 3 || !path.is_closed() {
        return Err(SwimmerError::invalid(
            "inverse dynamics needs a closed path with at least 3 intervals",
        ));
    }
    let dt = path.dt();
    let solver = SolverOptions::default();
    let mut out = InverseSolution {
        times: Vec::with_capacity(m),
        alpha: Vec::with_capacity(m),
        psi: Vec::with_capacity(m),
        spring_torque: Vec::with_capacity(m),
        modes: Vec::with_capacity(m),
    };
    for k in 0..m {
        let t = k as f64 * dt;
        let alpha = path.points[k];
        let next = path.points[k + 1].as_vector();
        let prev = path.points[(k + m - 1) % m].as_vector();
        let rate = (next - prev) / (2.0 * dt);
        let (psi, tau, modes) = if spec.is_rigid() {
            (alpha, [0.0; 2], [JointMode::Locked; 2])
        } else {
            let map = velocity_map(alpha, geom);
            let xi = solve_body_velocity(&map, &rate, medium, &solver)?;
            let q = generalized_forces(&map, &xi, &rate, medium, false).torques();
            let tau = [-q.x, -q.y];
            let mut psi = [0.0; 2];
            let mut modes = [JointMode::Spring; 2];
            let a = [alpha.alpha1, alpha.alpha2];
            for j in 0..2 {
                match spec {
                    ComplianceSpec::Constant { k } => psi[j] = a[j] + tau[j] / k[j],
                    ComplianceSpec::Cable(c) => {
                        let (p, mode) = invert_cable(c, a[j], tau[j], t, j, opts)?;
                        psi[j] = p;
                        modes[j] = mode;
                    }
                    ComplianceSpec::Rigid => unreachable!("rigid handled above"),
                }
            }
            (ShapeState::new(psi[0], psi[1]), tau, modes)
        };
        out.times.push(t);
        out.alpha.push(alpha);
        out.psi.push(psi);
        out.spring_torque.push(tau);
        out.modes.push(modes);
    }
    Ok(out)
}

/// Project samples taken uniformly over one period (endpoint excluded) onto
/// a zero-mean Fourier series of the given order.
pub fn fit_fourier(samples: &[ShapeState], order: usize, period: f64) -> FourierGait {
    let m = samples.len();
    let mut gait = FourierGait::zeros(order, period);
    let norm = 2.0 / m as f64;
    for p in 1..=order {
        let (mut a1, mut b1, mut a2, mut b2) = (0.0, 0.0, 0.0, 0.0);
        for (k, s) in samples.iter().enumerate() {
            // Reduce the phase index first so large orders keep full precision.
            let phase = 2.0 * std::f64::consts::PI * ((p * k) % m) as f64 / m as f64;
            let (sn, cs) = phase.sin_cos();
            a1 += s.alpha1 * cs;
            b1 += s.alpha1 * sn;
            a2 += s.alpha2 * cs;
            b2 += s.alpha2 * sn;
        }
        // The Nyquist term is represented by its cosine alone.
        let w = if 2 * p == m { 0.5 } else { 1.0 };
        gait.a1[p - 1] = w * norm * a1;
        gait.b1[p - 1] = w * norm * b1;
        gait.a2[p - 1] = w * norm * a2;
        gait.b2[p - 1] = w * norm * b2;
    }
    gait
}

/// RMS distance between samples and a fitted series at the sample times [rad].
pub fn fit_residual_rms(samples: &[ShapeState], gait: &FourierGait) -> f64 {
    let m = samples.len();
    let g = SuggestedGait::Fourier(gait.clone());
    let sum: f64 = samples
        .iter()
        .enumerate()
        .map(|(k, s)| (g.eval(gait.period * k as f64 / m as f64).0 - s.as_vector()).norm_squared())
        .sum();
    (sum / m as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerOptions {
    pub grid: GridSpec,
    pub limits: JointLimits,
    pub row: Row,
    pub path_points: usize,
    pub fourier_order: usize,
    /// [s]
    pub period: f64,
    pub sim: SimOptions,
    pub inverse: InverseOptions,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            grid: GridSpec::default(),
            limits: JointLimits::default(),
            row: Row::X,
            path_points: DEFAULT_PATH_POINTS,
            fourier_order: 10,
            period: DEFAULT_PERIOD,
            sim: SimOptions::default(),
            inverse: InverseOptions { saturate: true },
        }
    }
}

/// Compliance-independent part of the optimization: the height function and
/// the optimal emergent path it implies.
#[derive(Debug, Clone, PartialEq)]
pub struct GaitPlan {
    pub height_function: HeightFunction,
    pub path: GaitPath,
    pub predicted: Displacement,
}

pub fn plan_optimal_gait(medium: &Medium, geom: &SwimmerGeometry, opts: &OptimizerOptions) -> Result<GaitPlan> {
    medium.validate()?;
    geom.validate()?;
    let field = build_connection_field(medium, geom, &opts.grid).map_err(|e| e.at_stage("connection field"))?;
    let hf = height_function(&field);
    let path = optimal_emergent_gait_with(&hf, &opts.limits, opts.row, opts.path_points, opts.period)
        .map_err(|e| e.at_stage("optimal emergent gait"))?;
    let predicted = surface_integral(&path, &hf, geom.body_length()).map_err(|e| e.at_stage("surface integral"))?;
    Ok(GaitPlan {
        height_function: hf,
        path,
        predicted,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub optimal_emergent: GaitPath,
    pub predicted_displacement: Displacement,
    pub inverse: InverseSolution,
    pub suggested_gait: FourierGait,
    /// [rad]
    pub fit_residual_rms: f64,
    pub verification: EmergentTrajectory,
    pub realized: DisplacementSummary,
    /// RMS distance between the last simulated cycle and the target path,
    /// relative to the path amplitude.
    pub shape_error: f64,
}

impl OptimizationResult {
    pub fn regime_trace(&self) -> &[[JointMode; 2]] {
        &self.inverse.modes
    }
}

/// Half of the larger per-joint range of a path [rad].
pub fn path_amplitude(path: &GaitPath) -> f64 {
    (0..2)
        .map(|j| {
            let v = path.points.iter().map(|p| p.as_vector()[j]);
            let (lo, hi) = v.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), x| (l.min(x), h.max(x)));
            0.5 * (hi - lo)
        })
        .fold(0.0, f64::max)
}

/// RMS distance between the last simulated cycle and `target`, relative to the
/// target's amplitude.
pub fn shape_error(traj: &EmergentTrajectory, target: &GaitPath) -> f64 {
    let start = traj.period * (traj.n_cycles() - 1) as f64;
    let m = target.len();
    let sum: f64 = (0..m)
        .map(|k| {
            let t = k as f64 * target.dt();
            (traj.alpha_at(start + t).as_vector() - target.points[k].as_vector()).norm_squared()
        })
        .sum();
    (sum / m as f64).sqrt() / path_amplitude(target)
}

/// Inverse dynamics, Fourier fit and a verification run for one compliance
/// setting, reusing a precomputed plan.
pub fn optimize_with_plan(
    plan: &GaitPlan,
    spec: &ComplianceSpec,
    medium: &Medium,
    geom: &SwimmerGeometry,
    opts: &OptimizerOptions,
) -> Result<OptimizationResult> {
    spec.validate()?;
    let inverse =
        inverse_dynamics(&plan.path, spec, medium, geom, &opts.inverse).map_err(|e| e.at_stage("inverse dynamics"))?;
    let suggested_gait = fit_fourier(&inverse.psi, opts.fourier_order, plan.path.period);
    let fit_rms = fit_residual_rms(&inverse.psi, &suggested_gait);
    let verification = simulate_emergent(
        &SuggestedGait::Fourier(suggested_gait.clone()),
        spec,
        medium,
        geom,
        &opts.sim,
    )
    .map_err(|e| e.at_stage("verification simulation"))?;
    let realized = verification.summary();
    let shape_error = shape_error(&verification, &plan.path);
    Ok(OptimizationResult {
        optimal_emergent: plan.path.clone(),
        predicted_displacement: plan.predicted,
        inverse,
        suggested_gait,
        fit_residual_rms: fit_rms,
        verification,
        realized,
        shape_error,
    })
}

/// Full pipeline: connection field, height function, optimal emergent gait,
/// inverse dynamics, Fourier fit and verification simulation.
pub fn optimize_for_compliance(
    spec: &ComplianceSpec,
    medium: &Medium,
    geom: &SwimmerGeometry,
    opts: &OptimizerOptions,
) -> Result<OptimizationResult> {
    let plan = plan_optimal_gait(medium, geom, opts)?;
    optimize_with_plan(&plan, spec, medium, geom, opts)
}

/// Integral of each height-function row over the region enclosed by a
/// closed polygon, in raw units and signed by orientation.
pub fn enclosed_integral(points: &[ShapeState], hf: &HeightFunction) -> Vector3<f64> {
    let sign = if crate::connection::signed_area(points) >= 0.0 {
        1.0
    } else {
        -1.0
    };
    sign * raster_integral(points, hf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::media::ViscousParams;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn box_limits() -> JointLimits {
        JointLimits {
            limit: 37.5f64.to_radians(),
        }
    }

    fn disk_hf(resolution: usize, r: f64) -> HeightFunction {
        let grid = GridSpec {
            resolution,
            limit: box_limits().limit,
        };
        HeightFunction::from_fn(grid, |p| 1.0 - (p.alpha1.powi(2) + p.alpha2.powi(2)) / (r * r))
    }

    #[test]
    fn disk_contour_converges_to_circle() {
        let mut last = f64::INFINITY;
        for n in [21, 41, 81, 161] {
            let path = optimal_emergent_gait(&disk_hf(n, 0.4), &box_limits(), Row::X).unwrap();
            let err = path
                .points
                .iter()
                .map(|p| (p.as_vector().norm() - 0.4).abs())
                .fold(0.0, f64::max);
            assert!(err < last, "n = {n}: {err} !< {last}");
            last = err;
            assert!(path.signed_area() > 0.0);
            assert_eq!(path.len(), 400);
        }
        assert!(last < 1e-3, "{last}");
    }

    #[test]
    fn large_disk_is_clipped_to_limits() {
        let limits = box_limits();
        let l = limits.limit;
        let hf = disk_hf(101, 0.9);
        let path = optimal_emergent_gait(&hf, &limits, Row::X).unwrap();
        let cell = hf.grid.spacing() * 2f64.sqrt();
        for p in &path.points {
            assert!(p.alpha1.abs() <= l + 1e-12 && p.alpha2.abs() <= l + 1e-12);
            assert!(p.as_vector().norm() <= 0.9 + cell);
        }
        // Box with the four corners cut by the circle.
        let corner = (0.9f64 * 0.9 - l * l).sqrt();
        let seg = l - corner;
        let chord_area = 0.5 * (0.9f64 * 0.9) * (2.0 * (l / 0.9).acos() - (2.0 * (l / 0.9).acos()).sin());
        let expected = PI * 0.81 - 4.0 * chord_area;
        assert!(seg > 0.0);
        assert!(
            (path.signed_area() - expected).abs() < 2e-3 * expected,
            "{} vs {expected}",
            path.signed_area()
        );
    }

    #[test]
    fn clipped_limit_smaller_than_grid() {
        let hf = disk_hf(101, 0.9);
        let limits = JointLimits { limit: 0.3 };
        let path = optimal_emergent_gait(&hf, &limits, Row::X).unwrap();
        assert_abs_diff_eq!(path.signed_area(), 0.36, epsilon = 1e-9);
    }

    #[test]
    fn no_positive_region() {
        let grid = GridSpec {
            resolution: 21,
            ..Default::default()
        };
        let hf = HeightFunction::from_fn(grid, |p| -1.0 - p.alpha1.powi(2));
        assert!(matches!(
            optimal_emergent_gait(&hf, &JointLimits::default(), Row::X),
            Err(SwimmerError::NoPositiveRegion)
        ));
    }

    #[test]
    fn picks_largest_lobe() {
        let grid = GridSpec {
            resolution: 81,
            ..Default::default()
        };
        let bump = |p: ShapeState, c: (f64, f64), r: f64| {
            1.0 - ((p.alpha1 - c.0).powi(2) + (p.alpha2 - c.1).powi(2)) / (r * r)
        };
        let hf = HeightFunction::from_fn(grid, |p| bump(p, (-0.35, 0.0), 0.15).max(bump(p, (0.3, 0.2), 0.25)));
        let path = optimal_emergent_gait(&hf, &JointLimits::default(), Row::X).unwrap();
        let c = path.points.iter().map(|p| p.as_vector()).sum::<Vector2<f64>>() / path.points.len() as f64;
        assert!((c - Vector2::new(0.3, 0.2)).norm() < 0.02, "{c:?}");
    }

    #[test]
    fn saddle_cells_keep_loops_simple() {
        let grid = GridSpec {
            resolution: 41,
            ..Default::default()
        };
        let hf = HeightFunction::from_fn(grid, |p| (6.0 * p.alpha1).sin() * (6.0 * p.alpha2).sin());
        let values = hf.row(Row::X);
        for lp in marching_squares(&values, &grid, 0.0) {
            let path = GaitPath::new(lp, 1.0);
            assert!(!path.is_self_intersecting());
            assert!(path.signed_area() > 0.0);
        }
    }

    #[test]
    fn fourier_single_cosine() {
        let m = 400;
        let samples: Vec<ShapeState> = (0..m)
            .map(|k| ShapeState::new((2.0 * PI * k as f64 / m as f64).cos(), 0.0))
            .collect();
        let f = fit_fourier(&samples, 10, 10.0);
        assert_abs_diff_eq!(f.a1[0], 1.0, epsilon = 1e-12);
        let others = f.flatten().iter().skip(1).fold(0.0f64, |m, c| m.max(c.abs()));
        assert!(others < 1e-10, "{others}");
    }

    #[test]
    fn fourier_of_circular_gait() {
        let gait = SuggestedGait::default();
        let m = 400;
        let samples: Vec<ShapeState> = (0..m)
            .map(|k| ShapeState::from_vector(gait.eval(10.0 * k as f64 / m as f64).0))
            .collect();
        let f = fit_fourier(&samples, 10, 10.0);
        assert_abs_diff_eq!(f.a1[0], PI / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.b2[0], PI / 3.0, epsilon = 1e-12);
        assert!(f.b1.iter().chain(&f.a2).all(|c| c.abs() < 1e-12));
    }

    proptest! {
        #[test]
        fn fourier_reconstructs_low_order(coef in prop::collection::vec(-1.0f64..1.0, 20)) {
            let truth = FourierGait {
                period: 3.0,
                a1: coef[0..5].to_vec(),
                b1: coef[5..10].to_vec(),
                a2: coef[10..15].to_vec(),
                b2: coef[15..20].to_vec(),
            };
            let g = SuggestedGait::Fourier(truth);
            let samples: Vec<ShapeState> = (0..400).map(|k| ShapeState::from_vector(g.eval(3.0 * k as f64 / 400.0).0)).collect();
            let fit = fit_fourier(&samples, 10, 3.0);
            prop_assert!(fit_residual_rms(&samples, &fit) < 1e-10);
        }

        #[test]
        fn fourier_residual_non_increasing(vals in prop::collection::vec(-1.0f64..1.0, 64)) {
            let samples: Vec<ShapeState> = vals.chunks(2).map(|c| ShapeState::new(c[0], c[1])).collect();
            let mut last = f64::INFINITY;
            for order in 1..=12 {
                let r = fit_residual_rms(&samples, &fit_fourier(&samples, order, 1.0));
                prop_assert!(r <= last + 1e-12);
                last = r;
            }
        }

        #[test]
        fn cable_inversion_is_consistent(
            g in 0.05f64..1.25, u in -1.0f64..1.0, tau in -0.05f64..0.05,
        ) {
            let c = CableScheme { g, ..Default::default() };
            let alpha = 0.5 * u * c.amplitude;
            if let Ok((psi, mode)) = invert_cable(&c, alpha, tau, 0.0, 0, &InverseOptions::default()) {
                let JointMode::Cable(regime) = mode else { panic!("unexpected {mode:?}") };
                let (torque, _) = c.torque(alpha, psi);
                prop_assert!((torque - tau).abs() < 1e-12, "{} vs {}", torque, tau);
                if (tau + c.k_skin * alpha).abs() > 1e-12 {
                    prop_assert_eq!(c.regime(alpha, psi), regime);
                }
            }
        }
    }

    #[test]
    fn rigid_inverse_is_identity() {
        let path = GaitPath::circle(ShapeState::new(0.05, 0.0), 0.3, 100, 10.0);
        let sol = inverse_dynamics(
            &path,
            &ComplianceSpec::Rigid,
            &Medium::default(),
            &SwimmerGeometry::default(),
            &InverseOptions::default(),
        )
        .unwrap();
        assert_eq!(&sol.psi[..], &path.points[..100]);
    }

    #[test]
    fn dragless_medium_needs_no_torque() {
        let path = GaitPath::circle(ShapeState::default(), 0.3, 100, 10.0);
        let medium = Medium::Viscous(ViscousParams { c_t: 0.0, c_n: 0.0 });
        let spec = ComplianceSpec::Constant { k: [0.2, 0.4] };
        let sol = inverse_dynamics(
            &path,
            &spec,
            &medium,
            &SwimmerGeometry::default(),
            &InverseOptions::default(),
        )
        .unwrap();
        for (a, p) in sol.alpha.iter().zip(&sol.psi) {
            assert_eq!(a, p);
        }
    }

    #[test]
    fn unreachable_command_is_reported() {
        let path = GaitPath::circle(ShapeState::default(), 0.6, 100, 10.0);
        let spec = ComplianceSpec::Cable(CableScheme {
            g: 1.25,
            ..Default::default()
        });
        let geom = SwimmerGeometry::default();
        let err = inverse_dynamics(&path, &spec, &Medium::default(), &geom, &InverseOptions::default()).unwrap_err();
        assert!(matches!(err, SwimmerError::TorqueExceedsCapacity { .. }));
        let sol = inverse_dynamics(
            &path,
            &spec,
            &Medium::default(),
            &geom,
            &InverseOptions { saturate: true },
        )
        .unwrap();
        assert!(sol.saturated_samples() > 0);
    }
}
