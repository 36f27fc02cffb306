use serde::{Deserialize, Serialize};

use super::{ObjectModel, SceneError};
use crate::geom::{Pose, UnitQuat, Vec3};

/// Minimum inset of the center-of-mass projection from the support polygon edges.
pub const STABILITY_MARGIN: f64 = 1e-6;
const MERGE_ANGLE_DEG: f64 = 1.0;

/// A resting pose on the ground plane `z = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StablePose {
    pub pose: Pose,
    /// Index of the supporting facet in the object's hull.
    pub support_face: usize,
}

/// Every hull facet the object can statically rest on.
///
/// A facet qualifies when the center of mass, projected along the facet
/// normal, falls strictly inside the facet polygon. The object is rotated
/// so that facet faces straight down, lifted so it touches `z = 0`, and
/// centered so the center of mass sits above the origin. Orientations
/// within one degree of an earlier pose are dropped.
pub fn enumerate_stable_poses(obj: &ObjectModel) -> Result<Vec<StablePose>, SceneError> {
    let hull = obj.hull();
    let verts = hull.vertices();
    if hull.facets().is_empty() {
        return Err(SceneError::DegenerateHull("hull has no facets".into()));
    }
    let com = obj.com();
    let mut poses: Vec<StablePose> = Vec::new();
    for (fi, facet) in hull.facets().iter().enumerate() {
        let n = facet.normal;
        let proj = com - n * facet.signed_distance(&com);
        let poly = &facet.polygon;
        let inside = (0..poly.len()).all(|k| {
            let a = verts[poly[k]];
            let b = verts[poly[(k + 1) % poly.len()]];
            let edge = b - a;
            edge.cross(&(proj - a)).dot(&n) / edge.norm() >= STABILITY_MARGIN
        });
        if !inside {
            continue;
        }
        let q = UnitQuat::from_two_vectors(&n, &-Vec3::z());
        let min_z = verts
            .iter()
            .map(|v| q.rotate(v).z)
            .fold(f64::INFINITY, f64::min);
        let c = q.rotate(&com);
        let pose = Pose::new(Vec3::new(-c.x, -c.y, -min_z), q);
        let duplicate = poses
            .iter()
            .any(|p| p.pose.orientation.angle_to(&q) < MERGE_ANGLE_DEG.to_radians());
        if !duplicate {
            poses.push(StablePose {
                pose,
                support_face: fi,
            });
        }
    }
    Ok(poses)
}

/// Depth below the ground plane of the lowest point; `0` when none penetrate.
pub fn ground_penetration(points: &[Vec3]) -> f64 {
    let min_z = points.iter().map(|p| p.z).fold(f64::INFINITY, f64::min);
    (-min_z).max(0.0)
}
