use serde::{Deserialize, Serialize};

use super::{ConvexHull, SceneError};
use crate::geom::{serde_opt_vec3, serde_vec3, serde_vec3_list, Pose, Vec3};

/// Part of an object that may turn about the object's rotation axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RotatableRegion {
    /// Sampled surface points in the object frame.
    Points {
        #[serde(with = "serde_vec3_list")]
        points: Vec<Vec3>,
    },
    /// Cylinder of `radius` about the rotation axis through `center`,
    /// extending `half_length` along the axis on either side.
    Cylinder {
        #[serde(with = "serde_vec3")]
        center: Vec3,
        radius: f64,
        half_length: f64,
    },
}

impl RotatableRegion {
    /// Distance from `p` (object frame) to the region's surface.
    pub fn surface_distance(&self, p: &Vec3, axis: &Vec3) -> f64 {
        match self {
            RotatableRegion::Points { points } => points
                .iter()
                .map(|q| (p - q).norm())
                .fold(f64::INFINITY, f64::min),
            RotatableRegion::Cylinder {
                center,
                radius,
                half_length,
            } => {
                let v = p - center;
                let t = v.dot(axis);
                let radial = (v - axis * t).norm();
                let axial_excess = t.abs() - half_length;
                if axial_excess <= 0.0 {
                    (radial - radius).abs()
                } else {
                    let radial_excess = (radial - radius).max(0.0);
                    axial_excess.hypot(radial_excess)
                }
            }
        }
    }

    fn scaled(&self, s: f64) -> Self {
        match self {
            RotatableRegion::Points { points } => RotatableRegion::Points {
                points: points.iter().map(|p| p * s).collect(),
            },
            RotatableRegion::Cylinder {
                center,
                radius,
                half_length,
            } => RotatableRegion::Cylinder {
                center: center * s,
                radius: radius * s,
                half_length: half_length * s,
            },
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ObjectFile {
    id: String,
    #[serde(with = "serde_vec3_list")]
    keypoints: Vec<Vec3>,
    #[serde(with = "serde_vec3_list")]
    hull: Vec<Vec3>,
    #[serde(with = "serde_vec3")]
    com: Vec3,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rotatable: Option<RotatableRegion>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "serde_opt_vec3")]
    axis: Option<Vec3>,
    #[serde(default = "unit_scale")]
    scale: f64,
}

fn unit_scale() -> f64 {
    1.0
}

/// Rigid object described by surface keypoints and a convex hull (meters,
/// object frame).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "ObjectFile", into = "ObjectFile")]
pub struct ObjectModel {
    pub id: String,
    keypoints: Vec<Vec3>,
    hull: ConvexHull,
    com: Vec3,
    rotatable: Option<RotatableRegion>,
    axis: Option<Vec3>,
    scale: f64,
}

impl ObjectModel {
    pub fn new(
        id: impl Into<String>,
        keypoints: Vec<Vec3>,
        hull_points: &[Vec3],
        com: Vec3,
    ) -> Result<Self, SceneError> {
        if keypoints.len() < 4 {
            return Err(SceneError::TooFewKeypoints(keypoints.len()));
        }
        if !com.iter().all(|c| c.is_finite()) {
            return Err(SceneError::Invalid("center of mass is not finite".into()));
        }
        Ok(Self {
            id: id.into(),
            keypoints,
            hull: ConvexHull::new(hull_points)?,
            com,
            rotatable: None,
            axis: None,
            scale: 1.0,
        })
    }

    pub fn with_rotatable(mut self, region: RotatableRegion, axis: Vec3) -> Result<Self, SceneError> {
        let n = axis.norm();
        if !(n > 1e-12 && n.is_finite()) {
            return Err(SceneError::Invalid("rotation axis has zero length".into()));
        }
        self.rotatable = Some(region);
        self.axis = Some(axis / n);
        Ok(self)
    }

    pub fn keypoints(&self) -> &[Vec3] {
        &self.keypoints
    }

    pub fn hull(&self) -> &ConvexHull {
        &self.hull
    }

    pub fn com(&self) -> Vec3 {
        self.com
    }

    pub fn rotatable(&self) -> Option<&RotatableRegion> {
        self.rotatable.as_ref()
    }

    pub fn axis(&self) -> Option<Vec3> {
        self.axis
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Keypoints `P^o` in world coordinates for the given object pose.
    pub fn world_keypoints(&self, pose: &Pose) -> Vec<Vec3> {
        self.keypoints.iter().map(|k| pose.transform_point(k)).collect()
    }

    /// Uniformly scale every geometric quantity about the object origin.
    ///
    /// The stored scale accumulates multiplicatively, so a nominal object
    /// scaled by `s` reports `scale() == s`.
    pub fn apply_scale(&self, s: f64) -> Result<Self, SceneError> {
        if !(s > 0.0 && s.is_finite()) {
            return Err(SceneError::InvalidScale(s));
        }
        Ok(Self {
            id: self.id.clone(),
            keypoints: self.keypoints.iter().map(|k| k * s).collect(),
            hull: self.hull.scaled(s),
            com: self.com * s,
            rotatable: self.rotatable.as_ref().map(|r| r.scaled(s)),
            axis: self.axis,
            scale: self.scale * s,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, SceneError> {
        serde_json::from_str(text).map_err(|e| SceneError::Parse(e.to_string()))
    }

    /// Built-in objects shipped with the crate: `cube`, `bottle`, `hammer`,
    /// `tetrahedron`.
    pub fn builtin(id: &str) -> Option<Self> {
        let text = match id {
            "cube" => include_str!("../../assets/objects/cube.json"),
            "bottle" => include_str!("../../assets/objects/bottle.json"),
            "hammer" => include_str!("../../assets/objects/hammer.json"),
            "tetrahedron" => include_str!("../../assets/objects/tetrahedron.json"),
            _ => return None,
        };
        Some(Self::from_json(text).expect("built-in object is valid"))
    }
}

impl TryFrom<ObjectFile> for ObjectModel {
    type Error = SceneError;

    fn try_from(f: ObjectFile) -> Result<Self, SceneError> {
        let mut obj = ObjectModel::new(f.id, f.keypoints, &f.hull, f.com)?;
        match (f.rotatable, f.axis) {
            (Some(region), Some(axis)) => obj = obj.with_rotatable(region, axis)?,
            (Some(_), None) => {
                return Err(SceneError::Invalid(
                    "rotatable region requires a rotation axis".into(),
                ))
            }
            (None, Some(axis)) => {
                let n = axis.norm();
                if !(n > 1e-12 && n.is_finite()) {
                    return Err(SceneError::Invalid("rotation axis has zero length".into()));
                }
                obj.axis = Some(axis / n);
            }
            (None, None) => {}
        }
        if !(f.scale > 0.0 && f.scale.is_finite()) {
            return Err(SceneError::InvalidScale(f.scale));
        }
        obj.scale = f.scale;
        Ok(obj)
    }
}

impl From<ObjectModel> for ObjectFile {
    fn from(o: ObjectModel) -> Self {
        ObjectFile {
            id: o.id,
            keypoints: o.keypoints,
            hull: o.hull.vertices().to_vec(),
            com: o.com,
            rotatable: o.rotatable,
            axis: o.axis,
            scale: o.scale,
        }
    }
}

/// Signed distance of the closest hand point to the object's hull
/// (negative means at least one point is inside).
pub fn hand_object_clearance(hand_points: &[Vec3], obj: &ObjectModel, obj_pose: &Pose) -> f64 {
    let inv = obj_pose.inverse();
    hand_points
        .iter()
        .map(|p| obj.hull().signed_distance(&inv.transform_point(p)))
        .fold(f64::INFINITY, f64::min)
}
