//! Joint compliance models and the emergent-gait simulator.
//!
//! A joint driven to the commanded angle `psi` through a compliant element
//! settles where the element's torque balances the medium. The simulator
//! couples that balance with the body force balance at every time step.

use std::f64::consts::PI;

use nalgebra::{Matrix5, Vector2, Vector5};
use serde::{Deserialize, Serialize};

use crate::connection::{signed_area, solve_body_velocity, Displacement, GaitPath, SolverOptions};
use crate::error::{Result, SwimmerError};
use crate::geometry::{velocity_map, BodyVelocity, Pose2, ShapeState, SwimmerGeometry, VelocityMap};
use crate::media::{generalized_forces, Medium};

/// `psi_1 = A cos(2 pi f t)`, `psi_2 = A sin(2 pi f t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircularGait {
    /// [rad]
    pub amplitude: f64,
    /// [Hz]
    pub frequency: f64,
}

impl Default for CircularGait {
    fn default() -> Self {
        Self {
            amplitude: PI / 3.0,
            frequency: 0.1,
        }
    }
}

/// Zero-mean Fourier series per joint:
/// `psi_i(t) = sum_p a_i[p-1] cos(2 pi p t / T) + b_i[p-1] sin(2 pi p t / T)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierGait {
    /// [s]
    pub period: f64,
    pub a1: Vec<f64>,
    pub b1: Vec<f64>,
    pub a2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl FourierGait {
    pub fn zeros(order: usize, period: f64) -> Self {
        Self {
            period,
            a1: vec![0.0; order],
            b1: vec![0.0; order],
            a2: vec![0.0; order],
            b2: vec![0.0; order],
        }
    }

    pub fn order(&self) -> usize {
        self.a1.len().max(self.b1.len()).max(self.a2.len()).max(self.b2.len())
    }

    fn coeffs(&self, joint: usize) -> (&[f64], &[f64]) {
        if joint == 0 {
            (&self.a1, &self.b1)
        } else {
            (&self.a2, &self.b2)
        }
    }

    /// All coefficients in the order a1, b1, a2, b2.
    pub fn flatten(&self) -> Vec<f64> {
        [&self.a1, &self.b1, &self.a2, &self.b2]
            .iter()
            .flat_map(|v| v.iter().copied())
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(SwimmerError::invalid("gait.period must be > 0"));
        }
        if self.flatten().iter().any(|c| !c.is_finite()) {
            return Err(SwimmerError::invalid("gait coefficients must be finite"));
        }
        Ok(())
    }

    fn eval(&self, t: f64) -> (Vector2<f64>, Vector2<f64>) {
        let w = 2.0 * PI / self.period;
        let mut psi = Vector2::zeros();
        let mut dpsi = Vector2::zeros();
        for joint in 0..2 {
            let (a, b) = self.coeffs(joint);
            for p in 1..=a.len().max(b.len()) {
                let ap = a.get(p - 1).copied().unwrap_or(0.0);
                let bp = b.get(p - 1).copied().unwrap_or(0.0);
                let wp = w * p as f64;
                let (s, c) = (wp * t).sin_cos();
                psi[joint] += ap * c + bp * s;
                dpsi[joint] += wp * (bp * c - ap * s);
            }
        }
        (psi, dpsi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SuggestedGait {
    Circular(CircularGait),
    Fourier(FourierGait),
}

impl Default for SuggestedGait {
    fn default() -> Self {
        SuggestedGait::Circular(CircularGait::default())
    }
}

impl SuggestedGait {
    pub fn validate(&self) -> Result<()> {
        match self {
            SuggestedGait::Circular(c) => {
                if !(c.amplitude >= 0.0 && c.amplitude.is_finite()) {
                    return Err(SwimmerError::invalid("gait.amplitude must be >= 0"));
                }
                if !(c.frequency > 0.0 && c.frequency.is_finite()) {
                    return Err(SwimmerError::invalid("gait.frequency must be > 0"));
                }
                Ok(())
            }
            SuggestedGait::Fourier(f) => f.validate(),
        }
    }

    /// [s]
    pub fn period(&self) -> f64 {
        match self {
            SuggestedGait::Circular(c) => 1.0 / c.frequency,
            SuggestedGait::Fourier(f) => f.period,
        }
    }

    /// Commanded angles and their time derivatives.
    pub fn eval(&self, t: f64) -> (Vector2<f64>, Vector2<f64>) {
        match self {
            SuggestedGait::Circular(c) => {
                let w = 2.0 * PI * c.frequency;
                let (s, co) = (w * t).sin_cos();
                (
                    Vector2::new(c.amplitude * co, c.amplitude * s),
                    Vector2::new(-w * c.amplitude * s, w * c.amplitude * co),
                )
            }
            SuggestedGait::Fourier(f) => f.eval(t),
        }
    }

    /// The gait with both commanded angles negated.
    pub fn mirrored(&self) -> Self {
        match self {
            SuggestedGait::Circular(c) => {
                let mut f = FourierGait::zeros(1, 1.0 / c.frequency);
                f.a1[0] = -c.amplitude;
                f.b2[0] = -c.amplitude;
                SuggestedGait::Fourier(f)
            }
            SuggestedGait::Fourier(f) => {
                let neg = |v: &Vec<f64>| v.iter().map(|x| -x).collect();
                SuggestedGait::Fourier(FourierGait {
                    period: f.period,
                    a1: neg(&f.a1),
                    b1: neg(&f.b1),
                    a2: neg(&f.a2),
                    b2: neg(&f.b2),
                })
            }
        }
    }
}

/// Bilateral cable drive with a tunable slack deadband.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CableScheme {
    /// Generalized compliance: 0 rigid, 0.5 directionally compliant, 1 bidirectionally compliant.
    pub g: f64,
    /// Commanded gait amplitude the cables are set up for [rad].
    pub amplitude: f64,
    /// [N m/rad]
    pub k_skin: f64,
    /// [N m/rad]
    pub k_cable: f64,
    /// Slack paid out per radian of command past the switch angle [m/rad].
    pub l0: f64,
    /// Pulley moment arm [m].
    pub r_p: f64,
    /// Cable length at zero joint angle [m].
    pub rest_length: f64,
}

impl Default for CableScheme {
    fn default() -> Self {
        Self {
            g: 0.0,
            amplitude: PI / 3.0,
            k_skin: 0.05,
            k_cable: 2.0,
            l0: 0.022,
            r_p: 0.02,
            rest_length: 0.1,
        }
    }
}

/// Which side of the deadband a joint is on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// Below the deadband: the right cable pulls the joint up.
    Lower,
    Deadband,
    /// Above the deadband: the left cable pulls the joint down.
    Upper,
}

impl Regime {
    pub fn label(self) -> &'static str {
        match self {
            Regime::Lower => "lower",
            Regime::Deadband => "deadband",
            Regime::Upper => "upper",
        }
    }
}

impl CableScheme {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.g >= 0.0 && self.g.is_finite(), "compliance.g must be >= 0"),
            (
                self.amplitude > 0.0 && self.amplitude.is_finite(),
                "compliance.amplitude must be > 0",
            ),
            (
                self.k_skin > 0.0 && self.k_skin.is_finite(),
                "compliance.k_skin must be > 0",
            ),
            (
                self.k_cable > 0.0 && self.k_cable.is_finite(),
                "compliance.k_cable must be > 0",
            ),
            (self.l0 > 0.0 && self.l0.is_finite(), "compliance.l0 must be > 0"),
            (self.r_p > 0.0 && self.r_p.is_finite(), "compliance.r_p must be > 0"),
            (
                self.rest_length > 0.0 && self.rest_length.is_finite(),
                "compliance.rest_length must be > 0",
            ),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(SwimmerError::invalid(*msg)),
            None => Ok(()),
        }
    }

    /// Switch angle of the slack schedule [rad].
    pub fn gamma(&self) -> f64 {
        (2.0 * self.g - 1.0) * self.amplitude
    }

    /// Taut length of the left cable at joint angle `alpha`.
    pub fn left_taut(&self, alpha: f64) -> f64 {
        self.rest_length + self.r_p * alpha
    }

    /// Taut length of the right cable at joint angle `alpha`.
    pub fn right_taut(&self, alpha: f64) -> f64 {
        self.rest_length - self.r_p * alpha
    }

    fn check_amplitude(&self, psi: f64) -> Result<()> {
        if psi.abs() > self.amplitude * (1.0 + 1e-12) {
            Err(SwimmerError::AmplitudeExceeded {
                psi,
                amplitude: self.amplitude,
            })
        } else {
            Ok(())
        }
    }

    /// Left and right cable lengths for the commanded angle [m].
    pub fn cable_lengths(&self, psi: f64) -> Result<(f64, f64)> {
        self.check_amplitude(psi)?;
        Ok(self.cable_lengths_unchecked(psi))
    }

    fn cable_lengths_unchecked(&self, psi: f64) -> (f64, f64) {
        let gamma = self.gamma();
        let gc = self.amplitude.min(gamma);
        let left = if psi <= -gamma {
            self.left_taut(psi)
        } else {
            self.left_taut(-gc) + self.l0 * (gamma + psi)
        };
        let right = if psi >= gamma {
            self.right_taut(psi)
        } else {
            self.right_taut(gc) + self.l0 * (gamma - psi)
        };
        (left, right)
    }

    /// Joint angles reachable with both cables slack, `[lo, hi]`.
    pub fn deadband(&self, psi: f64) -> Result<(f64, f64)> {
        self.check_amplitude(psi)?;
        Ok(self.deadband_unchecked(psi))
    }

    /// As [`CableScheme::deadband`], extending the schedule linearly past the amplitude.
    pub fn deadband_unchecked(&self, psi: f64) -> (f64, f64) {
        if self.g <= 0.0 {
            return (psi, psi);
        }
        let (left, right) = self.cable_lengths_unchecked(psi);
        (
            (self.rest_length - right) / self.r_p,
            (left - self.rest_length) / self.r_p,
        )
    }

    pub fn regime(&self, alpha: f64, psi: f64) -> Regime {
        let (lo, hi) = self.deadband_unchecked(psi);
        if alpha > hi {
            Regime::Upper
        } else if alpha < lo {
            Regime::Lower
        } else {
            Regime::Deadband
        }
    }

    /// Restoring torque on the joint and its derivative in `alpha`.
    pub fn torque(&self, alpha: f64, psi: f64) -> (f64, f64) {
        let (lo, hi) = self.deadband_unchecked(psi);
        let mut tau = -self.k_skin * alpha;
        let mut slope = -self.k_skin;
        if alpha > hi {
            tau -= self.k_cable * (alpha - hi);
            slope -= self.k_cable;
        } else if alpha < lo {
            tau += self.k_cable * (lo - alpha);
            slope -= self.k_cable;
        }
        (tau, slope)
    }

    /// Equilibrium angle with no external load: the deadband point nearest zero.
    pub fn rest_angle(&self, psi: f64) -> f64 {
        let (lo, hi) = self.deadband_unchecked(psi);
        0.0f64.clamp(lo, hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ComplianceSpec {
    Rigid,
    /// Linear spring toward the commanded angle.
    Constant {
        /// [N m/rad] per joint.
        k: [f64; 2],
    },
    Cable(CableScheme),
}

impl Default for ComplianceSpec {
    fn default() -> Self {
        ComplianceSpec::Cable(CableScheme::default())
    }
}

impl ComplianceSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            ComplianceSpec::Rigid => Ok(()),
            ComplianceSpec::Constant { k } => {
                if k.iter().all(|k| *k > 0.0 && k.is_finite()) {
                    Ok(())
                } else {
                    Err(SwimmerError::invalid("compliance.k must be > 0"))
                }
            }
            ComplianceSpec::Cable(c) => c.validate(),
        }
    }

    /// A cable scheme with no slack holds the joint at the commanded angle.
    pub fn is_rigid(&self) -> bool {
        match self {
            ComplianceSpec::Rigid => true,
            ComplianceSpec::Constant { .. } => false,
            ComplianceSpec::Cable(c) => c.g <= 0.0,
        }
    }

    /// Restoring torque and its derivative in `alpha` for one joint.
    pub fn torque(&self, joint: usize, alpha: f64, psi: f64) -> (f64, f64) {
        match self {
            ComplianceSpec::Rigid => (0.0, f64::NEG_INFINITY),
            ComplianceSpec::Constant { k } => (k[joint] * (psi - alpha), -k[joint]),
            ComplianceSpec::Cable(c) => c.torque(alpha, psi),
        }
    }

    pub fn regime(&self, alpha: f64, psi: f64) -> Regime {
        match self {
            ComplianceSpec::Cable(c) => c.regime(alpha, psi),
            _ => Regime::Deadband,
        }
    }

    /// Stiffness and rest angle of the locally linear spring law, such that
    /// the torque is `K (rest - alpha)`.
    pub fn effective_stiffness(&self, joint: usize, alpha: f64, psi: f64) -> (f64, f64) {
        match self {
            ComplianceSpec::Rigid => (f64::INFINITY, psi),
            ComplianceSpec::Constant { k } => (k[joint], psi),
            ComplianceSpec::Cable(c) => {
                let (lo, hi) = c.deadband_unchecked(psi);
                let k = c.k_skin + c.k_cable;
                if alpha > hi {
                    (k, c.k_cable * hi / k)
                } else if alpha < lo {
                    (k, c.k_cable * lo / k)
                } else {
                    (c.k_skin, 0.0)
                }
            }
        }
    }

    /// Joint angle at rest under the commanded angle.
    pub fn rest_angle(&self, psi: f64) -> f64 {
        match self {
            ComplianceSpec::Cable(c) if c.g > 0.0 => c.rest_angle(psi),
            _ => psi,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimOptions {
    /// [s]
    pub dt: f64,
    pub n_cycles: usize,
    /// Leading cycles excluded from summaries.
    pub discard_cycles: usize,
    /// Residual norm for the per-step solve.
    pub tol: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            dt: 0.01,
            n_cycles: 7,
            discard_cycles: 2,
            tol: 1e-9,
        }
    }
}

impl SimOptions {
    pub fn validate(&self, period: f64) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(SwimmerError::invalid("simulation.dt must be > 0"));
        }
        if self.dt > period / 200.0 * (1.0 + 1e-12) {
            return Err(SwimmerError::invalid(format!(
                "simulation.dt must be <= period/200 = {}",
                period / 200.0
            )));
        }
        if self.n_cycles == 0 {
            return Err(SwimmerError::invalid("simulation.n_cycles must be >= 1"));
        }
        if self.discard_cycles >= self.n_cycles {
            return Err(SwimmerError::invalid("simulation.discard_cycles must be < n_cycles"));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(SwimmerError::invalid("simulation.tol must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    /// [s]
    pub t: f64,
    pub psi: ShapeState,
    pub alpha: ShapeState,
    /// World-frame body pose [m, m, rad].
    pub pose: Pose2,
    /// Residual of the step that ended at this sample.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisplacementSummary {
    pub per_cycle: Vec<Displacement>,
    pub discarded: usize,
    pub mean: Displacement,
    pub std_dx: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmergentTrajectory {
    pub samples: Vec<TrajectorySample>,
    pub steps_per_cycle: usize,
    pub period: f64,
    pub body_length: f64,
    pub discard_cycles: usize,
}

impl EmergentTrajectory {
    pub fn n_cycles(&self) -> usize {
        (self.samples.len() - 1) / self.steps_per_cycle
    }

    /// Body motion over cycle `c`, in the body frame at its start.
    pub fn cycle_displacement(&self, c: usize) -> Displacement {
        let n = self.steps_per_cycle;
        let g0 = self.samples[c * n].pose;
        let g1 = self.samples[(c + 1) * n].pose;
        Displacement::from_pose(&g0.inverse().compose(&g1), self.body_length)
    }

    pub fn cycle_displacements(&self) -> Vec<Displacement> {
        (0..self.n_cycles()).map(|c| self.cycle_displacement(c)).collect()
    }

    /// Mean and spread over the cycles after the discarded transient.
    pub fn summary(&self) -> DisplacementSummary {
        let per_cycle = self.cycle_displacements();
        let kept = &per_cycle[self.discard_cycles.min(per_cycle.len() - 1)..];
        let n = kept.len() as f64;
        let mean = Displacement {
            dx: kept.iter().map(|d| d.dx).sum::<f64>() / n,
            dy: kept.iter().map(|d| d.dy).sum::<f64>() / n,
            dtheta: kept.iter().map(|d| d.dtheta).sum::<f64>() / n,
        };
        let std_dx = (kept.iter().map(|d| (d.dx - mean.dx).powi(2)).sum::<f64>() / n).sqrt();
        DisplacementSummary {
            discarded: per_cycle.len() - kept.len(),
            per_cycle,
            mean,
            std_dx,
        }
    }

    /// Emergent shapes over cycle `c` as a closed path.
    pub fn cycle_path(&self, c: usize) -> GaitPath {
        let n = self.steps_per_cycle;
        let points = self.samples[c * n..=(c + 1) * n].iter().map(|s| s.alpha).collect();
        GaitPath {
            points,
            period: self.period,
        }
    }

    /// Shoelace area enclosed by the emergent loop in the last cycle [rad^2].
    pub fn loop_area(&self) -> f64 {
        let path = self.cycle_path(self.n_cycles() - 1);
        signed_area(&path.points).abs()
    }

    /// Emergent shape at time `t` by linear interpolation between samples.
    pub fn alpha_at(&self, t: f64) -> ShapeState {
        let dt = self.period / self.steps_per_cycle as f64;
        let s = (t / dt).clamp(0.0, (self.samples.len() - 1) as f64);
        let k = (s.floor() as usize).min(self.samples.len() - 2);
        let f = s - k as f64;
        let a = self.samples[k].alpha.as_vector();
        let b = self.samples[k + 1].alpha.as_vector();
        ShapeState::from_vector(a + f * (b - a))
    }

    pub fn max_residual(&self) -> f64 {
        self.samples.iter().map(|s| s.residual).fold(0.0, f64::max)
    }
}

/// Regime switches tolerated within one step before the step is split.
const MAX_REGIME_FLIPS: usize = 4;
/// Maximum number of times a step may be halved.
const MAX_BISECTIONS: usize = 6;
const MAX_NEWTON: usize = 60;

struct StepState {
    alpha: Vector2<f64>,
    xi: BodyVelocity,
    rate: Vector2<f64>,
}

enum StepFailure {
    Residual(f64),
    Chatter,
}

struct Simulator<'a> {
    gait: &'a SuggestedGait,
    spec: &'a ComplianceSpec,
    medium: &'a Medium,
    geom: &'a SwimmerGeometry,
    tol: f64,
}

impl Simulator<'_> {
    /// `[wrench; spring + medium joint torque]` with the medium evaluated at a fixed shape.
    fn residual(
        &self,
        map: &VelocityMap,
        alpha0: &Vector2<f64>,
        psi1: &Vector2<f64>,
        dt: f64,
        x: &Vector5<f64>,
        with_jac: bool,
    ) -> (Vector5<f64>, Option<Matrix5<f64>>, [Regime; 2]) {
        let xi = BodyVelocity::new(x[0], x[1], x[2]);
        let rate = Vector2::new(x[3], x[4]);
        let g = generalized_forces(map, &xi, &rate, self.medium, with_jac);
        let mut r = g.forces;
        let mut jac = g.jacobian;
        let mut regimes = [Regime::Deadband; 2];
        for j in 0..2 {
            let a1 = alpha0[j] + dt * rate[j];
            let (tau, slope) = self.spec.torque(j, a1, psi1[j]);
            r[3 + j] += tau;
            if let Some(m) = jac.as_mut() {
                m[(3 + j, 3 + j)] += dt * slope;
            }
            regimes[j] = self.spec.regime(a1, psi1[j]);
        }
        (r, jac, regimes)
    }

    /// Damped semi-smooth Newton on the five step unknowns.
    fn newton(
        &self,
        map: &VelocityMap,
        alpha0: &Vector2<f64>,
        psi1: &Vector2<f64>,
        dt: f64,
        x0: Vector5<f64>,
    ) -> std::result::Result<(Vector5<f64>, f64), StepFailure> {
        let mut x = x0;
        let (mut r, mut jac, mut regimes) = self.residual(map, alpha0, psi1, dt, &x, true);
        let mut res = r.norm();
        let mut flips = 0;
        for _ in 0..MAX_NEWTON {
            if res < self.tol {
                return Ok((x, res));
            }
            let m = jac.take().expect("jacobian requested");
            let step = m
                .lu()
                .solve(&-r)
                .filter(|s| s.iter().all(|v| v.is_finite()))
                .ok_or(StepFailure::Residual(res))?;
            let mut lambda = 1.0;
            loop {
                let trial = x + lambda * step;
                let (rt, jt, gt) = self.residual(map, alpha0, psi1, dt, &trial, true);
                let nt = rt.norm();
                if nt < (1.0 - 1e-4 * lambda) * res || lambda < 1e-8 {
                    if gt != regimes {
                        flips += 1;
                    }
                    x = trial;
                    r = rt;
                    jac = jt;
                    regimes = gt;
                    res = nt;
                    break;
                }
                lambda *= 0.5;
            }
            if flips > MAX_REGIME_FLIPS && res >= self.tol {
                return Err(StepFailure::Chatter);
            }
        }
        if res < self.tol {
            Ok((x, res))
        } else {
            Err(StepFailure::Residual(res))
        }
    }

    /// Backward-Euler step for the joint angles with the medium evaluated at
    /// the step's midpoint shape, found by fixed-point iteration.
    fn compliant_step(&self, s: &StepState, t0: f64, dt: f64) -> std::result::Result<(StepState, f64), StepFailure> {
        let psi1 = self.gait.eval(t0 + dt).0;
        let mut x = Vector5::new(s.xi.xi_x, s.xi.xi_y, s.xi.xi_theta, s.rate.x, s.rate.y);
        let mut mid = s.alpha + 0.5 * dt * s.rate;
        let mut res = f64::INFINITY;
        for _ in 0..20 {
            let map = velocity_map(ShapeState::from_vector(mid), self.geom);
            let (xn, _) = self.newton(&map, &s.alpha, &psi1, dt, x)?;
            x = xn;
            let new_mid = s.alpha + 0.5 * dt * Vector2::new(x[3], x[4]);
            let moved = (new_mid - mid).amax();
            mid = new_mid;
            if moved < 1e-12 {
                let map = velocity_map(ShapeState::from_vector(mid), self.geom);
                res = self.residual(&map, &s.alpha, &psi1, dt, &x, false).0.norm();
                if res < self.tol {
                    let rate = Vector2::new(x[3], x[4]);
                    return Ok((
                        StepState {
                            alpha: s.alpha + dt * rate,
                            xi: BodyVelocity::new(x[0], x[1], x[2]),
                            rate,
                        },
                        res,
                    ));
                }
            }
        }
        Err(StepFailure::Residual(res))
    }

    /// Advance by `dt`, halving the step on failure. Returns the new state,
    /// the pose increment and the worst residual.
    fn advance(&self, s: &StepState, t0: f64, dt: f64, depth: usize) -> Result<(StepState, Pose2, f64)> {
        match self.compliant_step(s, t0, dt) {
            Ok((next, res)) => {
                let dg = Pose2::exp(&next.xi, dt);
                Ok((next, dg, res))
            }
            Err(failure) if depth >= MAX_BISECTIONS => Err(match failure {
                StepFailure::Chatter => SwimmerError::StiffnessRegimeChatter { t: t0 },
                StepFailure::Residual(residual) => SwimmerError::StepNonConvergence { t: t0, residual },
            }),
            Err(_) => {
                let h = 0.5 * dt;
                let (mid, g1, r1) = self.advance(s, t0, h, depth + 1)?;
                let (end, g2, r2) = self.advance(&mid, t0 + h, h, depth + 1)?;
                Ok((end, g1.compose(&g2), r1.max(r2)))
            }
        }
    }
}

/// Simulate the joint angles and body motion produced by a commanded gait.
///
/// The trajectory holds one sample per step boundary, starting at rest at
/// `t = 0` with the body frame at the world origin.
pub fn simulate_emergent(
    gait: &SuggestedGait,
    spec: &ComplianceSpec,
    medium: &Medium,
    geom: &SwimmerGeometry,
    opts: &SimOptions,
) -> Result<EmergentTrajectory> {
    gait.validate()?;
    spec.validate()?;
    medium.validate()?;
    geom.validate()?;
    let period = gait.period();
    opts.validate(period)?;
    let n = (period / opts.dt).round() as usize;
    let dt = period / n as f64;
    let total = n * opts.n_cycles;
    let time = |k: usize| period * (k / n) as f64 + dt * (k % n) as f64;

    let mut samples = Vec::with_capacity(total + 1);
    let psi0 = gait.eval(0.0).0;
    let mut pose = Pose2::IDENTITY;

    if spec.is_rigid() {
        let solver = SolverOptions {
            tol: opts.tol,
            ..Default::default()
        };
        samples.push(TrajectorySample {
            t: 0.0,
            psi: ShapeState::from_vector(psi0),
            alpha: ShapeState::from_vector(psi0),
            pose,
            residual: 0.0,
        });
        for k in 0..total {
            let t0 = time(k);
            let (mid, rate) = gait.eval(t0 + 0.5 * dt);
            let map = velocity_map(ShapeState::from_vector(mid), geom);
            let xi = solve_body_velocity(&map, &rate, medium, &solver)?;
            let residual = generalized_forces(&map, &xi, &rate, medium, false).wrench().norm();
            pose = pose.compose(&Pose2::exp(&xi, dt));
            let t1 = time(k + 1);
            let psi1 = ShapeState::from_vector(gait.eval(t1).0);
            samples.push(TrajectorySample {
                t: t1,
                psi: psi1,
                alpha: psi1,
                pose,
                residual,
            });
        }
    } else {
        let sim = Simulator {
            gait,
            spec,
            medium,
            geom,
            tol: opts.tol,
        };
        let alpha0 = Vector2::new(spec.rest_angle(psi0[0]), spec.rest_angle(psi0[1]));
        let mut state = StepState {
            alpha: alpha0,
            xi: BodyVelocity::default(),
            rate: Vector2::zeros(),
        };
        samples.push(TrajectorySample {
            t: 0.0,
            psi: ShapeState::from_vector(psi0),
            alpha: ShapeState::from_vector(alpha0),
            pose,
            residual: 0.0,
        });
        for k in 0..total {
            let t0 = time(k);
            let (next, dg, residual) = sim.advance(&state, t0, dt, 0)?;
            state = next;
            pose = pose.compose(&dg);
            let t1 = time(k + 1);
            samples.push(TrajectorySample {
                t: t1,
                psi: ShapeState::from_vector(gait.eval(t1).0),
                alpha: ShapeState::from_vector(state.alpha),
                pose,
                residual,
            });
        }
    }

    Ok(EmergentTrajectory {
        samples,
        steps_per_cycle: n,
        period,
        body_length: geom.body_length(),
        discard_cycles: opts.discard_cycles,
    })
}
