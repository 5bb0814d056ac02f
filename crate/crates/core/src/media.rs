//! Resistive force laws and their integration over the body.

use nalgebra::{Matrix2, Matrix5, Vector2, Vector3, Vector5};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SwimmerError};
use crate::geometry::{stack_rates, BodyVelocity, VelocityMap};

/// A local resistive force law.
///
/// Velocities and forces are expressed in the segment frame: component 0 is
/// along the tangent, component 1 along the normal.
pub trait MediumModel {
    /// Force per unit length exerted by the medium on a segment moving with `v_local`.
    fn force_per_length(&self, v_local: Vector2<f64>) -> Vector2<f64>;

    /// Derivative of [`MediumModel::force_per_length`] with respect to `v_local`.
    fn force_jacobian(&self, v_local: Vector2<f64>) -> Matrix2<f64>;

    /// Whether the force is linear in velocity.
    fn is_linear(&self) -> bool;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViscousParams {
    /// Tangential drag coefficient [N s / m^2].
    pub c_t: f64,
    /// Normal drag coefficient [N s / m^2].
    pub c_n: f64,
}

impl Default for ViscousParams {
    fn default() -> Self {
        Self { c_t: 1.0, c_n: 2.0 }
    }
}

impl ViscousParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c_t > 0.0 && self.c_t.is_finite()) {
            return Err(SwimmerError::invalid("medium.c_t must be > 0"));
        }
        if !(self.c_n >= self.c_t && self.c_n.is_finite()) {
            return Err(SwimmerError::invalid("medium.c_n must be >= medium.c_t"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GranularParams {
    /// Tangential stress scale [N/m].
    pub c_t: f64,
    /// Normal stress scale [N/m].
    pub c_n: f64,
    /// Speed below which the law turns linear [m/s].
    pub v_reg: f64,
    /// Small linear damping added for well-posedness [N s / m^2].
    pub c_visc_reg: f64,
}

impl Default for GranularParams {
    fn default() -> Self {
        Self {
            c_t: 1.0,
            c_n: 3.0,
            v_reg: 1e-3,
            c_visc_reg: 0.01,
        }
    }
}

impl GranularParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c_t > 0.0 && self.c_t.is_finite()) {
            return Err(SwimmerError::invalid("medium.c_t must be > 0"));
        }
        if !(self.c_n > self.c_t && self.c_n.is_finite()) {
            return Err(SwimmerError::invalid("medium.c_n must be > medium.c_t"));
        }
        if !(self.v_reg > 0.0 && self.v_reg.is_finite()) {
            return Err(SwimmerError::invalid("medium.v_reg must be > 0"));
        }
        if !(self.c_visc_reg >= 0.0 && self.c_visc_reg.is_finite()) {
            return Err(SwimmerError::invalid("medium.c_visc_reg must be >= 0"));
        }
        Ok(())
    }
}

/// Linear drag with separate tangential and normal coefficients.
pub fn viscous_force(v_local: Vector2<f64>, p: &ViscousParams) -> Vector2<f64> {
    Vector2::new(-p.c_t * v_local.x, -p.c_n * v_local.y)
}

/// Regularized rate-independent granular law.
///
/// `f = -(C_t v_t, C_n v_n) / sqrt(|v|^2 + v_reg^2) - c_visc_reg v`
pub fn granular_force(v_local: Vector2<f64>, p: &GranularParams) -> Vector2<f64> {
    let s = (v_local.norm_squared() + p.v_reg * p.v_reg).sqrt();
    Vector2::new(-p.c_t * v_local.x / s, -p.c_n * v_local.y / s) - p.c_visc_reg * v_local
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Medium {
    Viscous(ViscousParams),
    Granular(GranularParams),
}

impl Default for Medium {
    fn default() -> Self {
        Medium::Granular(GranularParams::default())
    }
}

impl Medium {
    pub fn validate(&self) -> Result<()> {
        match self {
            Medium::Viscous(p) => p.validate(),
            Medium::Granular(p) => p.validate(),
        }
    }

    /// Linear drag with the same anisotropy, used to seed nonlinear solves.
    pub fn linearized(&self) -> ViscousParams {
        match self {
            Medium::Viscous(p) => *p,
            Medium::Granular(p) => ViscousParams { c_t: p.c_t, c_n: p.c_n },
        }
    }
}

impl MediumModel for ViscousParams {
    fn force_per_length(&self, v_local: Vector2<f64>) -> Vector2<f64> {
        viscous_force(v_local, self)
    }

    fn force_jacobian(&self, _v_local: Vector2<f64>) -> Matrix2<f64> {
        Matrix2::new(-self.c_t, 0.0, 0.0, -self.c_n)
    }

    fn is_linear(&self) -> bool {
        true
    }
}

impl MediumModel for GranularParams {
    fn force_per_length(&self, v_local: Vector2<f64>) -> Vector2<f64> {
        granular_force(v_local, self)
    }

    fn force_jacobian(&self, v: Vector2<f64>) -> Matrix2<f64> {
        let s2 = v.norm_squared() + self.v_reg * self.v_reg;
        let s = s2.sqrt();
        let d = Matrix2::new(self.c_t, 0.0, 0.0, self.c_n);
        let dv = d * v;
        -d / s + dv * v.transpose() / (s2 * s) - Matrix2::identity() * self.c_visc_reg
    }

    fn is_linear(&self) -> bool {
        false
    }
}

impl MediumModel for Medium {
    fn force_per_length(&self, v_local: Vector2<f64>) -> Vector2<f64> {
        match self {
            Medium::Viscous(p) => p.force_per_length(v_local),
            Medium::Granular(p) => p.force_per_length(v_local),
        }
    }

    fn force_jacobian(&self, v_local: Vector2<f64>) -> Matrix2<f64> {
        match self {
            Medium::Viscous(p) => p.force_jacobian(v_local),
            Medium::Granular(p) => p.force_jacobian(v_local),
        }
    }

    fn is_linear(&self) -> bool {
        match self {
            Medium::Viscous(_) => true,
            Medium::Granular(_) => false,
        }
    }
}

/// Net force and moment on the body, in the body frame, about its origin.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Wrench {
    pub fx: f64,
    pub fy: f64,
    pub moment: f64,
}

impl Wrench {
    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.fx, self.fy, self.moment)
    }

    pub fn norm(&self) -> f64 {
        self.as_vector().norm()
    }
}

/// Generalized forces conjugate to `(xi, alphadot)` and, optionally, their
/// Jacobian with respect to the same rates.
///
/// Entries 0..3 are the net wrench and entries 3..5 the joint torques.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedForces {
    pub forces: Vector5<f64>,
    pub jacobian: Option<Matrix5<f64>>,
}

impl GeneralizedForces {
    pub fn wrench(&self) -> Wrench {
        Wrench {
            fx: self.forces[0],
            fy: self.forces[1],
            moment: self.forces[2],
        }
    }

    pub fn torques(&self) -> Vector2<f64> {
        Vector2::new(self.forces[3], self.forces[4])
    }
}

/// Midpoint quadrature of the medium force over every segment, projected on
/// the body twist and the joint rates.
pub fn generalized_forces<M: MediumModel + ?Sized>(
    map: &VelocityMap,
    xi: &BodyVelocity,
    alphadot: &Vector2<f64>,
    medium: &M,
    with_jacobian: bool,
) -> GeneralizedForces {
    let u = stack_rates(xi, alphadot);
    let mut forces = Vector5::zeros();
    let mut jac = Matrix5::zeros();
    for seg in &map.segments {
        let t = seg.tangent;
        let n = seg.normal();
        // Columns: tangent, normal.
        let frame = Matrix2::new(t.x, n.x, t.y, n.y);
        let v = seg.rate_jacobian * u;
        let v_local = frame.transpose() * v;
        let f = frame * medium.force_per_length(v_local);
        forces += seg.length * (seg.rate_jacobian.transpose() * f);
        if with_jacobian {
            let df = frame * medium.force_jacobian(v_local) * frame.transpose();
            jac += seg.length * (seg.rate_jacobian.transpose() * df * seg.rate_jacobian);
        }
    }
    GeneralizedForces {
        forces,
        jacobian: with_jacobian.then_some(jac),
    }
}

pub fn net_wrench<M: MediumModel + ?Sized>(
    map: &VelocityMap,
    xi: &BodyVelocity,
    alphadot: &Vector2<f64>,
    medium: &M,
) -> Wrench {
    generalized_forces(map, xi, alphadot, medium, false).wrench()
}

/// Generalized forces the medium exerts on the two joint coordinates.
///
/// These resist motion (`alphadot . tau <= 0` at force balance); the torque a
/// joint spring must supply is the negation.
pub fn joint_torques<M: MediumModel + ?Sized>(
    map: &VelocityMap,
    xi: &BodyVelocity,
    alphadot: &Vector2<f64>,
    medium: &M,
) -> Vector2<f64> {
    generalized_forces(map, xi, alphadot, medium, false).torques()
}
