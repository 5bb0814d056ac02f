//! Kinematics, resistive-force media and gait tools for a three-link swimmer
//! with a T-shaped head.

pub mod compliance;
pub mod connection;
pub mod error;
pub mod gaitopt;
pub mod geometry;
pub mod media;

pub use error::{Result, SwimmerError};
