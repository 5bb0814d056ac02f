use thiserror::Error;

use crate::geometry::ShapeState;

pub type Result<T, E = SwimmerError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum SwimmerError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("force balance did not converge at alpha = ({:.6}, {:.6}): residual {residual:.3e}", alpha.alpha1, alpha.alpha2)]
    NonConvergence { alpha: ShapeState, residual: f64 },

    #[error("gait path crosses itself; split it into simple loops")]
    SelfIntersecting,

    #[error("commanded angle {psi:.6} exceeds the gait amplitude {amplitude:.6}")]
    AmplitudeExceeded { psi: f64, amplitude: f64 },

    #[error("time step at t = {t:.6} s did not converge: residual {residual:.3e}")]
    StepNonConvergence { t: f64, residual: f64 },

    #[error("stiffness regime kept switching inside the step at t = {t:.6} s")]
    StiffnessRegimeChatter { t: f64 },

    #[error("height function has no positive region")]
    NoPositiveRegion,

    #[error("stiffness regime did not settle at sample t = {t:.6} s")]
    RegimeNonConvergence { t: f64 },

    #[error("joint {joint} needs command {psi:.6} rad at t = {t:.6} s, beyond the amplitude {amplitude:.6}")]
    TorqueExceedsCapacity {
        t: f64,
        joint: usize,
        psi: f64,
        amplitude: f64,
    },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<SwimmerError>,
    },
}

impl SwimmerError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        SwimmerError::InvalidParameter(msg.into())
    }

    pub fn at_stage(self, stage: &'static str) -> Self {
        SwimmerError::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping stage labels.
    pub fn root(&self) -> &SwimmerError {
        match self {
            SwimmerError::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}
