//! Local connection, height functions and displacement predictions.

use nalgebra::{Matrix3, Matrix3x2, Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SwimmerError};
use crate::geometry::{velocity_map, BodyVelocity, Pose2, ShapeState, SwimmerGeometry, VelocityMap};
use crate::media::{generalized_forces, Medium, MediumModel};

/// Settings for the force-balance solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Wrench norm below which a solve counts as converged [N, N m].
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 100,
        }
    }
}

/// Solve `A x = b`, falling back to the minimum-norm solution when `A` is singular.
pub(crate) fn solve3(a: Matrix3<f64>, b: Vector3<f64>) -> Vector3<f64> {
    a.lu()
        .solve(&b)
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .unwrap_or_else(|| {
            a.svd(true, true)
                .solve(&b, 1e-14 * a.amax().max(f64::MIN_POSITIVE))
                .unwrap_or_else(|_| Vector3::zeros())
        })
}

/// Body twist that balances the medium forces for the given joint rates.
///
/// Linear media are solved directly; nonlinear media use a damped Newton
/// iteration seeded with the linear-drag solution.
pub fn solve_body_velocity(
    map: &VelocityMap,
    alphadot: &Vector2<f64>,
    medium: &Medium,
    opts: &SolverOptions,
) -> Result<BodyVelocity> {
    let linear = medium.linearized();
    let xi0 = BodyVelocity::default();
    let g = generalized_forces(map, &xi0, alphadot, &linear, true);
    let jac = g.jacobian.expect("jacobian requested");
    let m = jac.fixed_view::<3, 3>(0, 0).into_owned();
    let mut xi = solve3(m, -g.forces.fixed_rows::<3>(0).into_owned());
    if medium.is_linear() {
        return Ok(BodyVelocity::from_vector(xi));
    }

    let eval = |xi: &Vector3<f64>, with_jac: bool| {
        generalized_forces(map, &BodyVelocity::from_vector(*xi), alphadot, medium, with_jac)
    };
    let mut current = eval(&xi, true);
    let mut res = current.forces.fixed_rows::<3>(0).norm();
    for _ in 0..opts.max_iter {
        if res < opts.tol {
            return Ok(BodyVelocity::from_vector(xi));
        }
        let jac = current.jacobian.as_ref().expect("jacobian requested");
        let m = jac.fixed_view::<3, 3>(0, 0).into_owned();
        let step = solve3(m, -current.forces.fixed_rows::<3>(0).into_owned());
        let mut lambda = 1.0;
        loop {
            let trial = xi + lambda * step;
            let g = eval(&trial, true);
            let r = g.forces.fixed_rows::<3>(0).norm();
            if r < (1.0 - 1e-4 * lambda) * res || lambda < 1e-10 {
                xi = trial;
                current = g;
                res = r;
                break;
            }
            lambda *= 0.5;
        }
    }
    if res < opts.tol {
        Ok(BodyVelocity::from_vector(xi))
    } else {
        Err(SwimmerError::NonConvergence {
            alpha: map.alpha,
            residual: res,
        })
    }
}

/// The 3x2 local connection: column `k` is the body twist produced by a unit
/// positive rate of joint `k`.
pub type LocalConnection = Matrix3x2<f64>;

pub fn solve_local_connection(alpha: ShapeState, medium: &Medium, geom: &SwimmerGeometry) -> Result<LocalConnection> {
    connection_at(&velocity_map(alpha, geom), medium, &SolverOptions::default())
}

fn connection_at(map: &VelocityMap, medium: &Medium, opts: &SolverOptions) -> Result<LocalConnection> {
    let c1 = solve_body_velocity(map, &Vector2::new(1.0, 0.0), medium, opts)?;
    let c2 = solve_body_velocity(map, &Vector2::new(0.0, 1.0), medium, opts)?;
    Ok(Matrix3x2::from_columns(&[c1.as_vector(), c2.as_vector()]))
}

/// Regular square lattice over `[-limit, limit]^2` in shape space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Nodes per axis.
    pub resolution: usize,
    /// Half-width of the lattice [rad].
    pub limit: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            resolution: 101,
            limit: 60f64.to_radians(),
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.resolution < 11 {
            return Err(SwimmerError::invalid("grid.resolution must be >= 11"));
        }
        if !(self.limit > 0.0 && self.limit.is_finite()) {
            return Err(SwimmerError::invalid("grid.limit must be > 0"));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.limit / (self.resolution - 1) as f64
    }

    pub fn coord(&self, i: usize) -> f64 {
        -self.limit + i as f64 * self.spacing()
    }

    pub fn node(&self, i: usize, j: usize) -> ShapeState {
        ShapeState::new(self.coord(i), self.coord(j))
    }

    /// Flat index, with `i` running along alpha1.
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.resolution + i
    }

    pub fn len(&self) -> usize {
        self.resolution * self.resolution
    }

    pub fn is_empty(&self) -> bool {
        self.resolution == 0
    }

    pub fn contains(&self, alpha: ShapeState) -> bool {
        let eps = 1e-12 * self.limit;
        alpha.alpha1.abs() <= self.limit + eps && alpha.alpha2.abs() <= self.limit + eps
    }

    /// Cell index and fractional position along one axis, clamped to the lattice.
    fn locate(&self, x: f64) -> (usize, f64) {
        let h = self.spacing();
        let s = ((x + self.limit) / h).clamp(0.0, (self.resolution - 1) as f64);
        let i = (s.floor() as usize).min(self.resolution - 2);
        (i, s - i as f64)
    }

    fn bilinear<T>(&self, values: &[T], alpha: ShapeState) -> T
    where
        T: Copy + std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T>,
    {
        let (i, fx) = self.locate(alpha.alpha1);
        let (j, fy) = self.locate(alpha.alpha2);
        let v00 = values[self.index(i, j)];
        let v10 = values[self.index(i + 1, j)];
        let v01 = values[self.index(i, j + 1)];
        let v11 = values[self.index(i + 1, j + 1)];
        v00 * ((1.0 - fx) * (1.0 - fy)) + v10 * (fx * (1.0 - fy)) + v01 * ((1.0 - fx) * fy) + v11 * (fx * fy)
    }
}

/// `A(alpha)` sampled on a [`GridSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectionField {
    pub grid: GridSpec,
    pub values: Vec<LocalConnection>,
}

impl ConnectionField {
    pub fn at(&self, i: usize, j: usize) -> &LocalConnection {
        &self.values[self.grid.index(i, j)]
    }

    /// Bilinear interpolation (clamped to the lattice).
    pub fn interpolate(&self, alpha: ShapeState) -> LocalConnection {
        self.grid.bilinear(&self.values, alpha)
    }
}

/// Evaluate the local connection at every node. Nodes are independent and
/// computed in parallel.
pub fn build_connection_field(medium: &Medium, geom: &SwimmerGeometry, grid: &GridSpec) -> Result<ConnectionField> {
    grid.validate()?;
    let opts = SolverOptions::default();
    let values = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let alpha = grid.node(k % grid.resolution, k / grid.resolution);
            connection_at(&velocity_map(alpha, geom), medium, &opts)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConnectionField { grid: *grid, values })
}

/// Curl of each row of the local connection over shape space.
///
/// Internal units: [m/rad^2] for the x and y rows, [1/rad] for the rotation row.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightFunction {
    pub grid: GridSpec,
    pub values: Vec<Vector3<f64>>,
}

/// Which component of the body motion a height function or gait targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Row {
    X,
    Y,
    Theta,
}

impl Row {
    pub fn index(self) -> usize {
        match self {
            Row::X => 0,
            Row::Y => 1,
            Row::Theta => 2,
        }
    }
}

impl HeightFunction {
    pub fn from_values(grid: GridSpec, values: Vec<Vector3<f64>>) -> Self {
        assert_eq!(values.len(), grid.len(), "height function size mismatch");
        Self { grid, values }
    }

    /// Build from a scalar function; the same value is stored in all three rows.
    pub fn from_fn(grid: GridSpec, f: impl Fn(ShapeState) -> f64) -> Self {
        let values = (0..grid.len())
            .map(|k| {
                let h = f(grid.node(k % grid.resolution, k / grid.resolution));
                Vector3::new(h, h, h)
            })
            .collect();
        Self { grid, values }
    }

    pub fn at(&self, i: usize, j: usize) -> Vector3<f64> {
        self.values[self.grid.index(i, j)]
    }

    pub fn interpolate(&self, alpha: ShapeState) -> Vector3<f64> {
        self.grid.bilinear(&self.values, alpha)
    }

    pub fn row(&self, row: Row) -> Vec<f64> {
        self.values.iter().map(|v| v[row.index()]).collect()
    }

    pub fn max_abs(&self, row: Row) -> f64 {
        self.values.iter().map(|v| v[row.index()].abs()).fold(0.0, f64::max)
    }
}

/// Second-order finite difference of `f` along one lattice axis.
fn derivative(f: impl Fn(usize) -> f64, k: usize, n: usize, h: f64) -> f64 {
    if k == 0 {
        (-3.0 * f(0) + 4.0 * f(1) - f(2)) / (2.0 * h)
    } else if k == n - 1 {
        (3.0 * f(n - 1) - 4.0 * f(n - 2) + f(n - 3)) / (2.0 * h)
    } else {
        (f(k + 1) - f(k - 1)) / (2.0 * h)
    }
}

/// `H_r = dA_{r,2}/d alpha1 - dA_{r,1}/d alpha2` by finite differences.
pub fn height_function(field: &ConnectionField) -> HeightFunction {
    let grid = field.grid;
    let n = grid.resolution;
    let h = grid.spacing();
    let values = (0..grid.len())
        .map(|k| {
            let (i, j) = (k % n, k / n);
            Vector3::from_fn(|r, _| {
                let d2_d1 = derivative(|ii| field.at(ii, j)[(r, 1)], i, n, h);
                let d1_d2 = derivative(|jj| field.at(i, jj)[(r, 0)], j, n, h);
                d2_d1 - d1_d2
            })
        })
        .collect();
    HeightFunction { grid, values }
}

/// Net body motion over one gait cycle, relative to the starting body frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Displacement {
    /// Forward displacement [body lengths].
    pub dx: f64,
    /// Lateral displacement [body lengths].
    pub dy: f64,
    /// Rotation [rad].
    pub dtheta: f64,
}

impl Displacement {
    pub fn component(&self, row: Row) -> f64 {
        match row {
            Row::X => self.dx,
            Row::Y => self.dy,
            Row::Theta => self.dtheta,
        }
    }

    /// Convert a pose change in metres to body lengths.
    pub fn from_pose(pose: &Pose2, body_length: f64) -> Self {
        Self {
            dx: pose.x / body_length,
            dy: pose.y / body_length,
            dtheta: pose.theta,
        }
    }
}

/// A closed, time-parametrized loop in shape space.
///
/// `points` holds `M + 1` samples with the last equal to the first; sample `k`
/// is reached at time `k * period / M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaitPath {
    pub points: Vec<ShapeState>,
    pub period: f64,
}

impl GaitPath {
    /// Close the polyline if needed.
    pub fn new(mut points: Vec<ShapeState>, period: f64) -> Self {
        if let (Some(first), Some(last)) = (points.first().copied(), points.last().copied()) {
            if first != last {
                points.push(first);
            }
        }
        Self { points, period }
    }

    /// Counterclockwise circle sampled at `m` points, starting on the +alpha1 axis.
    pub fn circle(center: ShapeState, radius: f64, m: usize, period: f64) -> Self {
        Self::ellipse(center, radius, radius, 0.0, m, period)
    }

    pub fn ellipse(center: ShapeState, a: f64, b: f64, tilt: f64, m: usize, period: f64) -> Self {
        let (s, c) = tilt.sin_cos();
        let mut points: Vec<ShapeState> = (0..m)
            .map(|k| {
                let phi = 2.0 * std::f64::consts::PI * k as f64 / m as f64;
                let (u, v) = (a * phi.cos(), b * phi.sin());
                ShapeState::new(center.alpha1 + c * u - s * v, center.alpha2 + s * u + c * v)
            })
            .collect();
        points.push(points[0]);
        Self { points, period }
    }

    /// Number of intervals.
    pub fn len(&self) -> usize {
        self.points.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_closed(&self) -> bool {
        self.points.len() >= 2 && self.points.first() == self.points.last()
    }

    pub fn dt(&self) -> f64 {
        self.period / self.len() as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|k| k as f64 * self.dt()).collect()
    }

    pub fn reversed(&self) -> Self {
        let mut points = self.points.clone();
        points.reverse();
        Self {
            points,
            period: self.period,
        }
    }

    /// Image under `(alpha1, alpha2) -> (-alpha1, -alpha2)`, the shape-space
    /// effect of reflecting the body left-to-right.
    pub fn mirrored(&self) -> Self {
        let points = self
            .points
            .iter()
            .map(|p| ShapeState::new(-p.alpha1, -p.alpha2))
            .collect();
        Self {
            points,
            period: self.period,
        }
    }

    /// Shoelace area; positive for counterclockwise loops.
    pub fn signed_area(&self) -> f64 {
        signed_area(&self.points)
    }

    pub fn arc_length(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].as_vector() - w[0].as_vector()).norm())
            .sum()
    }

    /// Position at time `t` (periodic), by linear interpolation between samples.
    pub fn sample_at(&self, t: f64) -> ShapeState {
        let m = self.len();
        let s = (t / self.dt()).rem_euclid(m as f64);
        let k = (s.floor() as usize).min(m - 1);
        let f = s - k as f64;
        let a = self.points[k].as_vector();
        let b = self.points[k + 1].as_vector();
        ShapeState::from_vector(a + f * (b - a))
    }

    /// Resample to `m` intervals of equal arc length, starting at the first point.
    pub fn resample_uniform(&self, m: usize) -> Self {
        let pts: Vec<Vector2<f64>> = self.points.iter().map(|p| p.as_vector()).collect();
        let mut cum = vec![0.0];
        for w in pts.windows(2) {
            cum.push(cum.last().unwrap() + (w[1] - w[0]).norm());
        }
        let total = *cum.last().unwrap();
        let mut out = Vec::with_capacity(m + 1);
        let mut seg = 0;
        for k in 0..m {
            let s = total * k as f64 / m as f64;
            while seg + 1 < cum.len() - 1 && cum[seg + 1] <= s {
                seg += 1;
            }
            let len = cum[seg + 1] - cum[seg];
            let f = if len > 0.0 { (s - cum[seg]) / len } else { 0.0 };
            out.push(ShapeState::from_vector(pts[seg] + f * (pts[seg + 1] - pts[seg])));
        }
        out.push(out[0]);
        Self {
            points: out,
            period: self.period,
        }
    }

    /// Largest distance between consecutive samples.
    pub fn max_step(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].as_vector() - w[0].as_vector()).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_self_intersecting(&self) -> bool {
        polygon_self_intersects(&self.points)
    }
}

pub(crate) fn signed_area(points: &[ShapeState]) -> f64 {
    0.5 * points
        .windows(2)
        .map(|w| w[0].alpha1 * w[1].alpha2 - w[1].alpha1 * w[0].alpha2)
        .sum::<f64>()
}

fn orient(a: Vector2<f64>, b: Vector2<f64>, c: Vector2<f64>) -> f64 {
    (b - a).perp(&(c - a))
}

fn segments_cross(p1: Vector2<f64>, p2: Vector2<f64>, q1: Vector2<f64>, q2: Vector2<f64>) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

/// Proper crossings between non-adjacent edges of a closed polyline.
fn polygon_self_intersects(points: &[ShapeState]) -> bool {
    let pts: Vec<Vector2<f64>> = points.iter().map(|p| p.as_vector()).collect();
    let m = pts.len().saturating_sub(1);
    if m < 4 {
        return false;
    }
    let bbox = |i: usize| {
        let (a, b) = (pts[i], pts[i + 1]);
        (a.x.min(b.x), a.x.max(b.x), a.y.min(b.y), a.y.max(b.y))
    };
    let boxes: Vec<_> = (0..m).map(bbox).collect();
    for i in 0..m {
        for j in (i + 2)..m {
            if i == 0 && j == m - 1 {
                continue;
            }
            let (a, b) = (boxes[i], boxes[j]);
            if a.1 < b.0 || b.1 < a.0 || a.3 < b.2 || b.3 < a.2 {
                continue;
            }
            if segments_cross(pts[i], pts[i + 1], pts[j], pts[j + 1]) {
                return true;
            }
        }
    }
    false
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineIntegralMode {
    /// Sum of `A(alpha) d alpha` in the body frame.
    FirstOrder,
    /// Compose the per-step body motions on SE(2), solving the force balance
    /// for each step's actual joint-rate direction.
    ExactSe2,
}

/// Displacement over one traversal of `path`, from the local connection.
///
/// Both modes evaluate the connection at the midpoint of every path interval.
pub fn displacement_line_integral(
    path: &GaitPath,
    medium: &Medium,
    geom: &SwimmerGeometry,
    mode: LineIntegralMode,
) -> Result<Displacement> {
    let opts = SolverOptions::default();
    let bl = geom.body_length();
    let dt = path.dt();
    let steps: Vec<(ShapeState, Vector2<f64>)> = path
        .points
        .windows(2)
        .map(|w| {
            let mid = ShapeState::from_vector(0.5 * (w[0].as_vector() + w[1].as_vector()));
            (mid, w[1].as_vector() - w[0].as_vector())
        })
        .collect();
    match mode {
        LineIntegralMode::FirstOrder => {
            let parts = steps
                .par_iter()
                .map(|(mid, d)| Ok(connection_at(&velocity_map(*mid, geom), medium, &opts)? * d))
                .collect::<Result<Vec<Vector3<f64>>>>()?;
            let total = parts.iter().fold(Vector3::zeros(), |acc, v| acc + v);
            Ok(Displacement {
                dx: total.x / bl,
                dy: total.y / bl,
                dtheta: total.z,
            })
        }
        LineIntegralMode::ExactSe2 => {
            let twists = steps
                .par_iter()
                .map(|(mid, d)| solve_body_velocity(&velocity_map(*mid, geom), &(d / dt), medium, &opts))
                .collect::<Result<Vec<_>>>()?;
            let pose = twists
                .iter()
                .fold(Pose2::IDENTITY, |g, xi| g.compose(&Pose2::exp(xi, dt)));
            Ok(Displacement::from_pose(&pose, bl))
        }
    }
}

/// Rows per lattice cell used when rasterizing enclosed regions.
const ROWS_PER_CELL: usize = 32;

/// Integral of `hf` over the region enclosed by `path` (even-odd rule), signed
/// by the path orientation. The x and y components are returned in body
/// lengths when `body_length` is the swimmer's; pass 1.0 for raw units.
pub fn surface_integral(path: &GaitPath, hf: &HeightFunction, body_length: f64) -> Result<Displacement> {
    if path.is_self_intersecting() {
        return Err(SwimmerError::SelfIntersecting);
    }
    let raw = raster_integral(&path.points, hf);
    let sign = if path.signed_area() >= 0.0 { 1.0 } else { -1.0 };
    Ok(Displacement {
        dx: sign * raw.x / body_length,
        dy: sign * raw.y / body_length,
        dtheta: sign * raw.z,
    })
}

/// Displacement predicted by integrating the height function over the region
/// enclosed by `path`.
pub fn displacement_surface_integral(
    path: &GaitPath,
    hf: &HeightFunction,
    geom: &SwimmerGeometry,
) -> Result<Displacement> {
    surface_integral(path, hf, geom.body_length())
}

/// Unsigned even-odd integral of the three rows over a closed polyline.
///
/// Horizontal scan lines at `ROWS_PER_CELL` per lattice cell; along each line
/// the bilinear interpolant is piecewise linear and integrated exactly.
pub(crate) fn raster_integral(points: &[ShapeState], hf: &HeightFunction) -> Vector3<f64> {
    let grid = hf.grid;
    let h = grid.spacing();
    let (ymin, ymax) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        (lo.min(p.alpha2), hi.max(p.alpha2))
    });
    let ymin = ymin.max(-grid.limit);
    let ymax = ymax.min(grid.limit);
    if ymax <= ymin {
        return Vector3::zeros();
    }
    let extent = ymax - ymin;
    let dy = (h / ROWS_PER_CELL as f64).min(extent / 64.0);
    let rows = (extent / dy).ceil() as usize;
    let dy = extent / rows as f64;

    let mut total = Vector3::zeros();
    let mut crossings = Vec::new();
    for r in 0..rows {
        let y = ymin + (r as f64 + 0.5) * dy;
        crossings.clear();
        for w in points.windows(2) {
            let (a, b) = (w[0], w[1]);
            if (a.alpha2 <= y) != (b.alpha2 <= y) {
                let f = (y - a.alpha2) / (b.alpha2 - a.alpha2);
                crossings.push(a.alpha1 + f * (b.alpha1 - a.alpha1));
            }
        }
        crossings.sort_by(|a, b| a.total_cmp(b));
        for pair in crossings.chunks_exact(2) {
            let x0 = pair[0].max(-grid.limit);
            let x1 = pair[1].min(grid.limit);
            if x1 > x0 {
                total += dy * row_integral(hf, y, x0, x1);
            }
        }
    }
    total
}

/// Exact integral of the bilinear interpolant along `alpha2 = y` over `[x0, x1]`.
fn row_integral(hf: &HeightFunction, y: f64, x0: f64, x1: f64) -> Vector3<f64> {
    let grid = hf.grid;
    let h = grid.spacing();
    let at = |x: f64| hf.interpolate(ShapeState::new(x, y));
    let mut sum = Vector3::zeros();
    let mut a = x0;
    while a < x1 {
        // Next lattice line strictly after `a`.
        let mut k = ((a + grid.limit) / h).floor() + 1.0;
        if -grid.limit + k * h <= a {
            k += 1.0;
        }
        let b = (-grid.limit + k * h).min(x1);
        sum += 0.5 * (b - a) * (at(a) + at(b));
        a = b;
    }
    sum
}
