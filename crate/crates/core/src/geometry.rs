//! Planar kinematics of the three-link swimmer.
//!
//! Conventions used throughout the crate:
//!
//! * The head is link 1 and the body points toward +x of the body frame.
//! * A link heading is the direction from its posterior end to its anterior end.
//! * Joint 1 sits between link 1 (head) and link 2 (middle), joint 2 between
//!   link 2 and link 3 (tail). A positive joint angle turns the more posterior
//!   link counterclockwise relative to the anterior one, so
//!   `heading(link 2) = heading(link 1) + alpha1` and
//!   `heading(link 3) = heading(link 2) + alpha2`.
//! * The body frame origin is the length-weighted centroid of every resistive
//!   segment (links and head bar). Its orientation is the length-weighted
//!   circular mean of the three link headings.

use std::f64::consts::PI;

use nalgebra::{Matrix2x5, Vector2, Vector3, Vector5};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SwimmerError};

pub const N_LINKS: usize = 3;

/// Rotate a planar vector by +90 degrees.
#[inline]
pub(crate) fn perp(v: Vector2<f64>) -> Vector2<f64> {
    Vector2::new(-v.y, v.x)
}

#[inline]
pub(crate) fn rotate(v: Vector2<f64>, angle: f64) -> Vector2<f64> {
    let (s, c) = angle.sin_cos();
    Vector2::new(c * v.x - s * v.y, s * v.x + c * v.y)
}

/// Wrap an angle into `(-pi, pi]`.
pub fn normalize_angle(theta: f64) -> f64 {
    let r = theta.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// A rigid-body pose in the plane (an element of SE(2)).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Default for Pose2 {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Pose2 {
    pub const IDENTITY: Pose2 = Pose2 {
        x: 0.0,
        y: 0.0,
        theta: 0.0,
    };

    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta }
    }

    pub fn translation(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }

    /// `self * other`: express `other` (given in this frame) in the parent frame.
    pub fn compose(&self, other: &Pose2) -> Pose2 {
        let t = self.transform_point(other.translation());
        Pose2::new(t.x, t.y, normalize_angle(self.theta + other.theta))
    }

    pub fn inverse(&self) -> Pose2 {
        let t = rotate(-self.translation(), -self.theta);
        Pose2::new(t.x, t.y, normalize_angle(-self.theta))
    }

    pub fn transform_point(&self, p: Vector2<f64>) -> Vector2<f64> {
        self.translation() + rotate(p, self.theta)
    }

    pub fn transform_vector(&self, v: Vector2<f64>) -> Vector2<f64> {
        rotate(v, self.theta)
    }

    /// Group exponential of a body twist held for `dt`.
    pub fn exp(twist: &BodyVelocity, dt: f64) -> Pose2 {
        let th = twist.xi_theta * dt;
        let (vx, vy) = (twist.xi_x * dt, twist.xi_y * dt);
        // sin(th)/th and (1 - cos(th))/th, with series near zero
        let (a, b) = if th.abs() < 1e-6 {
            let th2 = th * th;
            (1.0 - th2 / 6.0, th / 2.0 - th * th2 / 24.0)
        } else {
            (th.sin() / th, (1.0 - th.cos()) / th)
        };
        Pose2::new(a * vx - b * vy, b * vx + a * vy, normalize_angle(th))
    }

    /// Reflection across the world x axis.
    pub fn mirrored(&self) -> Pose2 {
        Pose2::new(self.x, -self.y, normalize_angle(-self.theta))
    }
}

/// The pair of (emergent) joint angles: a point in shape space.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ShapeState {
    pub alpha1: f64,
    pub alpha2: f64,
}

impl ShapeState {
    pub fn new(alpha1: f64, alpha2: f64) -> Self {
        Self { alpha1, alpha2 }
    }

    pub fn as_vector(&self) -> Vector2<f64> {
        Vector2::new(self.alpha1, self.alpha2)
    }

    pub fn from_vector(v: Vector2<f64>) -> Self {
        Self::new(v.x, v.y)
    }

    pub fn within_limit(&self, limit: f64) -> bool {
        self.alpha1.abs() <= limit && self.alpha2.abs() <= limit
    }
}

/// Body-frame twist `(xi_x, xi_y, xi_theta)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BodyVelocity {
    pub xi_x: f64,
    pub xi_y: f64,
    pub xi_theta: f64,
}

impl BodyVelocity {
    pub fn new(xi_x: f64, xi_y: f64, xi_theta: f64) -> Self {
        Self { xi_x, xi_y, xi_theta }
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.xi_x, self.xi_y, self.xi_theta)
    }

    pub fn from_vector(v: Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    pub fn is_finite(&self) -> bool {
        self.xi_x.is_finite() && self.xi_y.is_finite() && self.xi_theta.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwimmerGeometry {
    /// Length of each of the three links [m].
    pub link_length: f64,
    /// Half the width of the transverse head bar [m]; zero disables the bar.
    pub head_bar_halfwidth: f64,
    /// Quadrature segments per link (and for the head bar).
    pub segments_per_link: usize,
}

impl Default for SwimmerGeometry {
    fn default() -> Self {
        Self {
            link_length: 0.10,
            head_bar_halfwidth: 0.0375,
            segments_per_link: 10,
        }
    }
}

impl SwimmerGeometry {
    pub fn validate(&self) -> Result<()> {
        if !(self.link_length > 0.0 && self.link_length.is_finite()) {
            return Err(SwimmerError::invalid("geometry.link_length must be > 0"));
        }
        if !(self.head_bar_halfwidth >= 0.0 && self.head_bar_halfwidth.is_finite()) {
            return Err(SwimmerError::invalid("geometry.head_bar_halfwidth must be >= 0"));
        }
        if self.segments_per_link < 2 {
            return Err(SwimmerError::invalid("geometry.segments_per_link must be >= 2"));
        }
        Ok(())
    }

    /// Body length used to normalize displacements.
    pub fn body_length(&self) -> f64 {
        N_LINKS as f64 * self.link_length
    }

    pub fn total_segment_length(&self) -> f64 {
        self.body_length() + 2.0 * self.head_bar_halfwidth
    }

    fn has_head_bar(&self) -> bool {
        self.head_bar_halfwidth > 0.0
    }
}

/// Which body part a resistive segment belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SegmentOwner {
    Link(usize),
    HeadBar,
}

/// One quadrature element in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub owner: SegmentOwner,
    pub midpoint: Vector2<f64>,
    /// Unit tangent.
    pub tangent: Vector2<f64>,
    pub length: f64,
}

/// World-frame realization of a shape at a given body pose.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkConfiguration {
    /// Pose of each link: midpoint and heading. Index 0 is the head link.
    pub link_poses: [Pose2; N_LINKS],
    /// Posterior and anterior endpoints of each link.
    pub link_endpoints: [(Vector2<f64>, Vector2<f64>); N_LINKS],
    pub segments: Vec<Segment>,
}

/// (owner, point, tangent, length, d point / d alpha_i)
type LayoutSegment = (SegmentOwner, Vector2<f64>, Vector2<f64>, f64, [Vector2<f64>; 2]);

/// Everything about a shape expressed in the middle-link frame, with the
/// derivatives needed by the velocity map.
struct MiddleFrameLayout {
    segments: Vec<LayoutSegment>,
    link_poses: [Pose2; N_LINKS],
    link_endpoints: [(Vector2<f64>, Vector2<f64>); N_LINKS],
}

fn middle_frame_layout(alpha: ShapeState, geom: &SwimmerGeometry) -> MiddleFrameLayout {
    let l = geom.link_length;
    let n = geom.segments_per_link;
    let headings = [-alpha.alpha1, 0.0, alpha.alpha2];
    let t: [Vector2<f64>; 3] = headings.map(|h| Vector2::new(h.cos(), h.sin()));
    let joint1 = Vector2::new(0.5 * l, 0.0);
    let joint2 = Vector2::new(-0.5 * l, 0.0);

    // Posterior and anterior endpoints.
    let ends = [
        (joint1, joint1 + l * t[0]),
        (joint2, joint1),
        (joint2 - l * t[2], joint2),
    ];
    let link_poses = [0, 1, 2].map(|i| {
        let mid = 0.5 * (ends[i].0 + ends[i].1);
        Pose2::new(mid.x, mid.y, headings[i])
    });

    let zero = Vector2::zeros();
    let mut segments = Vec::with_capacity(4 * n);
    let ds = l / n as f64;
    for (i, &(tail, _)) in ends.iter().enumerate() {
        for k in 0..n {
            let q = tail + ((k as f64 + 0.5) * ds) * t[i];
            let dq = match i {
                // Head link swings about joint 1 with angle -alpha1.
                0 => [-perp(q - joint1), zero],
                1 => [zero, zero],
                _ => [zero, perp(q - joint2)],
            };
            segments.push((SegmentOwner::Link(i), q, t[i], ds, dq));
        }
    }
    if geom.has_head_bar() {
        let tip = ends[0].1;
        let bar_dir = perp(t[0]);
        let w = geom.head_bar_halfwidth;
        let dsb = 2.0 * w / n as f64;
        for k in 0..n {
            let q = tip + (-w + (k as f64 + 0.5) * dsb) * bar_dir;
            segments.push((SegmentOwner::HeadBar, q, bar_dir, dsb, [-perp(q - joint1), zero]));
        }
    }
    MiddleFrameLayout {
        segments,
        link_poses,
        link_endpoints: ends,
    }
}

/// Body-frame offset `(centroid, mean heading)` in the middle-link frame, with
/// its derivatives with respect to the joint angles.
fn body_offset(alpha: ShapeState, layout: &MiddleFrameLayout) -> (Vector2<f64>, f64, [Vector2<f64>; 2], [f64; 2]) {
    let mut total = 0.0;
    let mut c = Vector2::zeros();
    let mut dc = [Vector2::zeros(); 2];
    for (_, q, _, ds, dq) in &layout.segments {
        total += ds;
        c += *ds * q;
        dc[0] += *ds * dq[0];
        dc[1] += *ds * dq[1];
    }
    c /= total;
    dc[0] /= total;
    dc[1] /= total;

    let (a1, a2) = (alpha.alpha1, alpha.alpha2);
    let s = -a1.sin() + a2.sin();
    let cc = a1.cos() + 1.0 + a2.cos();
    let beta = s.atan2(cc);
    let r2 = s * s + cc * cc;
    let dbeta = [
        (cc * (-a1.cos()) - s * (-a1.sin())) / r2,
        (cc * a2.cos() - s * (-a2.sin())) / r2,
    ];
    (c, beta, dc, dbeta)
}

/// Pose of the body frame relative to the middle-link frame.
pub fn body_frame(alpha: ShapeState, geom: &SwimmerGeometry) -> Pose2 {
    let layout = middle_frame_layout(alpha, geom);
    let (c, beta, _, _) = body_offset(alpha, &layout);
    Pose2::new(c.x, c.y, beta)
}

/// Place the swimmer with shape `alpha` so that its body frame sits at `body_pose`.
pub fn forward_kinematics(alpha: ShapeState, body_pose: Pose2, geom: &SwimmerGeometry) -> LinkConfiguration {
    let layout = middle_frame_layout(alpha, geom);
    let (c, beta, _, _) = body_offset(alpha, &layout);
    let middle = body_pose.compose(&Pose2::new(c.x, c.y, beta).inverse());

    let link_poses = layout.link_poses.map(|p| middle.compose(&p));
    let link_endpoints = layout
        .link_endpoints
        .map(|(a, b)| (middle.transform_point(a), middle.transform_point(b)));
    let segments = layout
        .segments
        .iter()
        .map(|(owner, q, t, ds, _)| Segment {
            owner: *owner,
            midpoint: middle.transform_point(*q),
            tangent: middle.transform_vector(*t),
            length: *ds,
        })
        .collect();
    LinkConfiguration {
        link_poses,
        link_endpoints,
        segments,
    }
}

/// Body-frame kinematics of one segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentKinematics {
    pub owner: SegmentOwner,
    pub position: Vector2<f64>,
    pub tangent: Vector2<f64>,
    pub length: f64,
    /// Maps `(xi_x, xi_y, xi_theta, alphadot1, alphadot2)` to the body-frame
    /// velocity of the segment midpoint.
    pub rate_jacobian: Matrix2x5<f64>,
}

impl SegmentKinematics {
    pub fn velocity(&self, xi: &BodyVelocity, alphadot: &Vector2<f64>) -> Vector2<f64> {
        self.rate_jacobian * stack_rates(xi, alphadot)
    }

    /// Unit normal (tangent rotated by +90 degrees).
    pub fn normal(&self) -> Vector2<f64> {
        perp(self.tangent)
    }
}

pub(crate) fn stack_rates(xi: &BodyVelocity, alphadot: &Vector2<f64>) -> Vector5<f64> {
    Vector5::new(xi.xi_x, xi.xi_y, xi.xi_theta, alphadot.x, alphadot.y)
}

/// Linear map from `(xi, alphadot)` to every segment's velocity, in the body
/// frame of the given shape.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityMap {
    pub alpha: ShapeState,
    pub segments: Vec<SegmentKinematics>,
}

impl VelocityMap {
    pub fn segment_velocities(&self, xi: &BodyVelocity, alphadot: &Vector2<f64>) -> Vec<Vector2<f64>> {
        let u = stack_rates(xi, alphadot);
        self.segments.iter().map(|s| s.rate_jacobian * u).collect()
    }
}

pub fn velocity_map(alpha: ShapeState, geom: &SwimmerGeometry) -> VelocityMap {
    let layout = middle_frame_layout(alpha, geom);
    let (c, beta, dc, dbeta) = body_offset(alpha, &layout);
    let segments = layout
        .segments
        .iter()
        .map(|(owner, q, t, ds, dq)| {
            let p = rotate(q - c, -beta);
            let tangent = rotate(*t, -beta);
            let dp = [0, 1].map(|i| rotate(dq[i] - dc[i], -beta) - dbeta[i] * perp(p));
            #[rustfmt::skip]
            let rate_jacobian = Matrix2x5::new(
                1.0, 0.0, -p.y, dp[0].x, dp[1].x,
                0.0, 1.0,  p.x, dp[0].y, dp[1].y,
            );
            SegmentKinematics {
                owner: *owner,
                position: p,
                tangent,
                length: *ds,
                rate_jacobian,
            }
        })
        .collect();
    VelocityMap { alpha, segments }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn geom() -> SwimmerGeometry {
        SwimmerGeometry::default()
    }

    #[test]
    fn pose_inverse_roundtrip() {
        let p = Pose2::new(0.3, -1.2, 2.9);
        let id = p.compose(&p.inverse());
        assert_abs_diff_eq!(id.x, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(id.y, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(id.theta, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn angle_normalization_range() {
        assert_eq!(normalize_angle(PI), PI);
        assert_eq!(normalize_angle(-PI), PI);
        assert_abs_diff_eq!(normalize_angle(3.0 * PI + 0.1), -PI + 0.1, epsilon = 1e-12);
    }

    #[test]
    fn straight_configuration() {
        let cfg = forward_kinematics(
            ShapeState::default(),
            Pose2::IDENTITY,
            &SwimmerGeometry {
                head_bar_halfwidth: 0.0,
                ..geom()
            },
        );
        let (j2, j1) = cfg.link_endpoints[1];
        assert_abs_diff_eq!(j1.x, 0.05, epsilon = 1e-15);
        assert_abs_diff_eq!(j2.x, -0.05, epsilon = 1e-15);
        for s in &cfg.segments {
            assert_abs_diff_eq!(s.midpoint.y, 0.0, epsilon = 1e-15);
            assert_abs_diff_eq!(s.tangent.x, 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn equal_angles_are_mirror_symmetric() {
        let a = 0.4;
        let cfg = forward_kinematics(ShapeState::new(a, a), Pose2::IDENTITY, &geom());
        // Frame of the middle link.
        let m = cfg.link_poses[1];
        let to_mid = |p: Vector2<f64>| m.inverse().transform_point(p);
        let head_tip = to_mid(cfg.link_endpoints[0].1);
        let tail = to_mid(cfg.link_endpoints[2].0);
        assert_abs_diff_eq!(head_tip.x, -tail.x, epsilon = 1e-12);
        assert_abs_diff_eq!(head_tip.y, tail.y, epsilon = 1e-12);
    }

    #[test]
    fn s_shape_joint_positions_by_composition() {
        let g = geom();
        let alpha = ShapeState::new(0.3, -0.3);
        let cfg = forward_kinematics(alpha, Pose2::IDENTITY, &g);
        // Oracle: walk from the middle link pose to each link pose.
        let l = g.link_length;
        let mid = cfg.link_poses[1];
        let j1 = mid.compose(&Pose2::new(0.5 * l, 0.0, 0.0));
        let head = j1
            .compose(&Pose2::new(0.0, 0.0, -alpha.alpha1))
            .compose(&Pose2::new(0.5 * l, 0.0, 0.0));
        let j2 = mid.compose(&Pose2::new(-0.5 * l, 0.0, 0.0));
        let tail = j2
            .compose(&Pose2::new(0.0, 0.0, alpha.alpha2))
            .compose(&Pose2::new(-0.5 * l, 0.0, 0.0));
        for (oracle, got) in [(head, cfg.link_poses[0]), (tail, cfg.link_poses[2])] {
            assert_abs_diff_eq!(oracle.x, got.x, epsilon = 1e-12);
            assert_abs_diff_eq!(oracle.y, got.y, epsilon = 1e-12);
            assert_abs_diff_eq!(oracle.theta, got.theta, epsilon = 1e-12);
        }
        assert!((cfg.link_endpoints[0].0 - j1.translation()).norm() < 1e-12);
        assert!((cfg.link_endpoints[2].1 - j2.translation()).norm() < 1e-12);
    }

    #[test]
    fn body_frame_straight_is_middle_frame_without_head() {
        let g = SwimmerGeometry {
            head_bar_halfwidth: 0.0,
            ..geom()
        };
        let b = body_frame(ShapeState::default(), &g);
        assert_abs_diff_eq!(b.x, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b.y, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b.theta, 0.0, epsilon = 1e-15);
        // The head bar pulls the centroid forward but leaves it on the axis.
        let b = body_frame(ShapeState::default(), &geom());
        assert!(b.x > 0.0);
        assert_abs_diff_eq!(b.y, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn body_frame_equal_angles() {
        let g = SwimmerGeometry {
            head_bar_halfwidth: 0.0,
            ..geom()
        };
        let b = body_frame(ShapeState::new(0.5, 0.5), &g);
        assert_abs_diff_eq!(b.theta, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b.x, 0.0, epsilon = 1e-15);
        assert!(b.y.abs() > 1e-3);
    }

    #[test]
    fn body_frame_matches_brute_force_average() {
        let g = geom();
        let alpha = ShapeState::new(0.5, 0.2);
        let b = body_frame(alpha, &g);
        // Oracle from the middle-link-frame configuration.
        let cfg = forward_kinematics(alpha, Pose2::IDENTITY, &g);
        let mid = cfg.link_poses[1].inverse();
        let total: f64 = cfg.segments.iter().map(|s| s.length).sum();
        let c = cfg.segments.iter().fold(Vector2::zeros(), |acc, s| {
            acc + s.length * mid.transform_point(s.midpoint)
        }) / total;
        let heading = |i: usize| mid.compose(&cfg.link_poses[i]).theta;
        let (s, co) = (0..3).fold((0.0, 0.0), |(s, c), i| (s + heading(i).sin(), c + heading(i).cos()));
        assert_abs_diff_eq!(b.x, c.x, epsilon = 1e-12);
        assert_abs_diff_eq!(b.y, c.y, epsilon = 1e-12);
        assert_abs_diff_eq!(b.theta, s.atan2(co), epsilon = 1e-12);
    }

    #[test]
    fn segment_lengths_sum() {
        let g = geom();
        let cfg = forward_kinematics(ShapeState::new(0.2, -0.6), Pose2::new(1.0, 2.0, 0.3), &g);
        let total: f64 = cfg.segments.iter().map(|s| s.length).sum();
        assert_abs_diff_eq!(total, 0.3 + 0.075, epsilon = 1e-12);
        assert_eq!(cfg.segments.len(), 40);
    }

    #[test]
    fn pure_translation_and_rotation() {
        let map = velocity_map(ShapeState::new(0.3, 0.1), &geom());
        let zero = Vector2::zeros();
        for s in &map.segments {
            let v = s.velocity(&BodyVelocity::new(1.0, 0.0, 0.0), &zero);
            assert_abs_diff_eq!(v.x, 1.0, epsilon = 1e-15);
            assert_abs_diff_eq!(v.y, 0.0, epsilon = 1e-15);
            let w = s.velocity(&BodyVelocity::new(0.0, 0.0, 1.0), &zero);
            assert_abs_diff_eq!(w.norm(), s.position.norm(), epsilon = 1e-15);
            assert_abs_diff_eq!(w.dot(&s.position), 0.0, epsilon = 1e-15);
        }
    }

    /// World-frame segment midpoints when the body frame moves with twist `xi`
    /// for time `h` while the shape moves with `alphadot`.
    fn positions_after(alpha: ShapeState, xi: BodyVelocity, alphadot: Vector2<f64>, h: f64) -> Vec<Vector2<f64>> {
        let g = geom();
        let pose = Pose2::exp(&xi, h);
        let a = ShapeState::new(alpha.alpha1 + h * alphadot.x, alpha.alpha2 + h * alphadot.y);
        forward_kinematics(a, pose, &g)
            .segments
            .iter()
            .map(|s| s.midpoint)
            .collect()
    }

    fn fd_velocity_error(alpha: ShapeState, xi: BodyVelocity, alphadot: Vector2<f64>) -> f64 {
        let h = 1e-6;
        let plus = positions_after(alpha, xi, alphadot, h);
        let minus = positions_after(alpha, xi, alphadot, -h);
        let map = velocity_map(alpha, &geom());
        let v = map.segment_velocities(&xi, &alphadot);
        plus.iter()
            .zip(&minus)
            .zip(&v)
            .map(|((p, m), v)| ((p - m) / (2.0 * h) - v).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn joint_rate_at_straight_matches_finite_difference() {
        let err = fd_velocity_error(ShapeState::default(), BodyVelocity::default(), Vector2::new(1.0, 0.0));
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn left_right_reflection() {
        let g = geom();
        let a = forward_kinematics(ShapeState::new(0.4, -0.7), Pose2::IDENTITY, &g);
        let b = forward_kinematics(ShapeState::new(-0.4, 0.7), Pose2::IDENTITY, &g);
        // The bar is traversed in the opposite order after reflection.
        let bar = |c: &LinkConfiguration| -> Vec<Vector2<f64>> {
            c.segments
                .iter()
                .filter(|s| s.owner == SegmentOwner::HeadBar)
                .map(|s| s.midpoint)
                .collect()
        };
        let links = |c: &LinkConfiguration| -> Vec<Vector2<f64>> {
            c.segments
                .iter()
                .filter(|s| s.owner != SegmentOwner::HeadBar)
                .map(|s| s.midpoint)
                .collect()
        };
        let mut bb = bar(&b);
        bb.reverse();
        for (pa, pb) in links(&a).iter().zip(&links(&b)).chain(bar(&a).iter().zip(&bb)) {
            assert_abs_diff_eq!(pa.x, pb.x, epsilon = 1e-15);
            assert_abs_diff_eq!(pa.y, -pb.y, epsilon = 1e-15);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn velocity_map_matches_finite_differences(
            a1 in -1.2f64..1.2, a2 in -1.2f64..1.2,
            x in -1.0f64..1.0, y in -1.0f64..1.0, w in -2.0f64..2.0,
            d1 in -2.0f64..2.0, d2 in -2.0f64..2.0,
        ) {
            let err = fd_velocity_error(ShapeState::new(a1, a2), BodyVelocity::new(x, y, w), Vector2::new(d1, d2));
            prop_assert!(err < 1e-6, "err = {}", err);
        }

        #[test]
        fn joints_stay_connected(a1 in -PI..PI, a2 in -PI..PI, x in -5.0f64..5.0, th in -PI..PI) {
            let cfg = forward_kinematics(ShapeState::new(a1, a2), Pose2::new(x, -x, th), &geom());
            prop_assert!((cfg.link_endpoints[0].0 - cfg.link_endpoints[1].1).norm() < 1e-12);
            prop_assert!((cfg.link_endpoints[1].0 - cfg.link_endpoints[2].1).norm() < 1e-12);
        }
    }
}
