use serde::{Deserialize, Serialize};

use super::{lerp_vec, UnitQuat, Vec3};

/// A rigid transform: rotation followed by translation (meters).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    #[serde(rename = "p", with = "super::serde_vec3")]
    pub position: Vec3,
    #[serde(rename = "q")]
    pub orientation: UnitQuat,
}

impl Pose {
    pub fn new(position: Vec3, orientation: UnitQuat) -> Self {
        Self {
            position,
            orientation,
        }
    }

    pub fn identity() -> Self {
        Self::new(Vec3::zeros(), UnitQuat::identity())
    }

    pub fn from_translation(position: Vec3) -> Self {
        Self::new(position, UnitQuat::identity())
    }

    pub fn from_rotation(orientation: UnitQuat) -> Self {
        Self::new(Vec3::zeros(), orientation)
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            position: self.orientation.rotate(&other.position) + self.position,
            orientation: self.orientation * other.orientation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.orientation.inverse();
        Pose {
            position: -inv.rotate(&self.position),
            orientation: inv,
        }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.orientation.rotate(p) + self.position
    }

    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.orientation.rotate(v)
    }

    /// `self^-1 ∘ other`: `other` expressed in the frame of `self`.
    pub fn relative_to(&self, other: &Pose) -> Pose {
        self.inverse().compose(other)
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|c| c.is_finite())
            && self.orientation.to_array().iter().all(|c| c.is_finite())
    }

    /// Translation distance and geodesic rotation angle to `other`.
    pub fn distance_to(&self, other: &Pose) -> (f64, f64) {
        (
            (self.position - other.position).norm(),
            self.orientation.angle_to(&other.orientation),
        )
    }
}

/// `p=(x, y, z) q=(w, x, y, z)`.
impl std::fmt::Display for Pose {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let p = self.position;
        let [w, x, y, z] = self.orientation.to_array();
        write!(f, "p=({:.4}, {:.4}, {:.4}) q=({w:.4}, {x:.4}, {y:.4}, {z:.4})", p.x, p.y, p.z)
    }
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

/// Linear position, slerp orientation. Exact at `u = 0` and `u = 1`.
pub fn lerp_pose(p0: &Pose, p1: &Pose, u: f64) -> Pose {
    if u <= 0.0 {
        return *p0;
    }
    if u >= 1.0 {
        return *p1;
    }
    Pose {
        position: lerp_vec(&p0.position, &p1.position, u),
        orientation: p0.orientation.slerp(&p1.orientation, u),
    }
}
