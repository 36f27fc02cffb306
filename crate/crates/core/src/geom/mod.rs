//! Rotation and pose algebra, interpolation, sampling and forward kinematics.
//!
//! Angles are radians everywhere in this module.

mod bezier;
mod kinematics;
mod pose;
mod quat;
mod sampling;

pub use bezier::{cubic_bezier, BezierPath};
pub use kinematics::{forward_kinematics, HandModel, Joint, KinematicTree};
pub use pose::{lerp_pose, Pose};
pub use quat::{UnitQuat, DESERIALIZE_NORM_TOLERANCE};
pub use sampling::{orthonormal_basis, parabola, sample_in_cone, uniform_in_box};

use thiserror::Error;

pub type Vec3 = nalgebra::Vector3<f64>;

#[derive(Debug, Error, PartialEq)]
pub enum GeomError {
    #[error("quaternion ({w}, {x}, {y}, {z}) cannot be normalized")]
    InvalidQuaternion { w: f64, x: f64, y: f64, z: f64 },
    #[error("stored quaternion has norm {norm}, expected 1")]
    NonUnitQuaternion { norm: f64 },
    #[error("invalid sampling range: {0}")]
    InvalidRange(String),
    #[error("need at least {needed} {what}, got {got}")]
    TooFew {
        what: &'static str,
        needed: usize,
        got: usize,
    },
    #[error("non-finite anchor at index {0}")]
    NonFiniteAnchor(usize),
    #[error("expected {expected} joint angles, got {got}")]
    AngleCount { expected: usize, got: usize },
    #[error("invalid kinematic tree: {0}")]
    InvalidTree(String),
}

/// `a (1 - u) + b u`, which reproduces `a` at `u = 0` and `b` at `u = 1` exactly.
pub fn lerp_vec(a: &Vec3, b: &Vec3, u: f64) -> Vec3 {
    a * (1.0 - u) + b * u
}

pub fn lerp_scalar(a: f64, b: f64, u: f64) -> f64 {
    a * (1.0 - u) + b * u
}

/// Evenly spaced parameters `j / (n - 1)` for `j in 0..n`; `[0.0]` when `n == 1`.
pub fn unit_parameters(n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![0.0; n];
    }
    let last = (n - 1) as f64;
    (0..n).map(|j| j as f64 / last).collect()
}

/// Serialize `Vec3` as a `[x, y, z]` array.
pub mod serde_vec3 {
    use super::Vec3;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Vec3, s: S) -> Result<S::Ok, S::Error> {
        [v.x, v.y, v.z].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec3, D::Error> {
        let a = <[f64; 3]>::deserialize(d)?;
        Ok(Vec3::from(a))
    }
}

/// Serialize `Vec<Vec3>` as an array of `[x, y, z]` arrays.
pub mod serde_vec3_list {
    use super::Vec3;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[Vec3], s: S) -> Result<S::Ok, S::Error> {
        let arrays: Vec<[f64; 3]> = v.iter().map(|p| [p.x, p.y, p.z]).collect();
        arrays.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec3>, D::Error> {
        let a = Vec::<[f64; 3]>::deserialize(d)?;
        Ok(a.into_iter().map(Vec3::from).collect())
    }
}

/// Serialize `Option<Vec3>` as `null` or `[x, y, z]`.
pub mod serde_opt_vec3 {
    use super::Vec3;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<Vec3>, s: S) -> Result<S::Ok, S::Error> {
        v.map(|p| [p.x, p.y, p.z]).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec3>, D::Error> {
        let a = Option::<[f64; 3]>::deserialize(d)?;
        Ok(a.map(Vec3::from))
    }
}
