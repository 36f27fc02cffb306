//! Object geometry, resting poses, contact predicates and the workspace box.

mod hull;
mod object;
mod stable;

pub use hull::{ConvexHull, Facet};
pub use object::{hand_object_clearance, ObjectModel, RotatableRegion};
pub use stable::{enumerate_stable_poses, ground_penetration, StablePose, STABILITY_MARGIN};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{serde_vec3, uniform_in_box, Vec3};

#[derive(Debug, Error, PartialEq)]
pub enum SceneError {
    #[error("degenerate convex hull: {0}")]
    DegenerateHull(String),
    #[error("object needs at least 4 keypoints, got {0}")]
    TooFewKeypoints(usize),
    #[error("scale must be positive and finite, got {0}")]
    InvalidScale(f64),
    #[error("invalid object: {0}")]
    Invalid(String),
    #[error("invalid workspace: {0}")]
    InvalidWorkspace(String),
    #[error("object file: {0}")]
    Parse(String),
}

/// Axis-aligned box the synthesizers sample positions from; the ground is `z = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WorkspaceBounds", into = "WorkspaceBounds")]
pub struct Workspace {
    min: Vec3,
    max: Vec3,
}

#[derive(Serialize, Deserialize)]
struct WorkspaceBounds {
    #[serde(with = "serde_vec3")]
    min: Vec3,
    #[serde(with = "serde_vec3")]
    max: Vec3,
}

impl Workspace {
    pub fn new(min: Vec3, max: Vec3) -> Result<Self, SceneError> {
        for k in 0..3 {
            if !(min[k] < max[k]) || !min[k].is_finite() || !max[k].is_finite() {
                return Err(SceneError::InvalidWorkspace(format!(
                    "axis {k}: min {} must be below max {}",
                    min[k], max[k]
                )));
            }
        }
        Ok(Self { min, max })
    }

    pub fn min(&self) -> Vec3 {
        self.min
    }

    pub fn max(&self) -> Vec3 {
        self.max
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec3 {
        uniform_in_box(&self.min, &self.max, rng)
    }

    /// Same box with the lower z bound raised to at least `z`.
    pub fn above(&self, z: f64) -> Result<Self, SceneError> {
        let mut min = self.min;
        min.z = min.z.max(z);
        Workspace::new(min, self.max)
    }
}

impl Default for Workspace {
    fn default() -> Self {
        Self {
            min: Vec3::new(-0.5, -0.5, 0.0),
            max: Vec3::new(0.5, 0.5, 0.8),
        }
    }
}

impl TryFrom<WorkspaceBounds> for Workspace {
    type Error = SceneError;

    fn try_from(b: WorkspaceBounds) -> Result<Self, SceneError> {
        Workspace::new(b.min, b.max)
    }
}

impl From<Workspace> for WorkspaceBounds {
    fn from(w: Workspace) -> Self {
        WorkspaceBounds {
            min: w.min,
            max: w.max,
        }
    }
}
