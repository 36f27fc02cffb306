//! Static grasp configurations: ingestion, validation, rigid retargeting and
//! nearest-neighbor queries.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{serde_vec3_list, HandModel, Pose, Vec3};
use crate::scene::ObjectModel;

/// Allowed deviation between stored joint positions and forward kinematics.
pub const FK_TOLERANCE: f64 = 5e-3;
/// Allowed deviation between stored object keypoints and the posed model.
pub const OBJECT_KEYPOINT_TOLERANCE: f64 = 1e-6;
const LIMIT_SLACK: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum GraspError {
    #[error("reading grasp file: {0}")]
    Io(String),
    #[error("grasp file schema: {0}")]
    Schema(String),
    #[error("empty set: grasp set contains no grasps")]
    Empty,
    #[error("grasp set is for hand model {found:?}, expected {expected:?}")]
    HandMismatch { expected: String, found: String },
    #[error("grasp set is for object {found:?}, expected {expected:?}")]
    ObjectMismatch { expected: String, found: String },
    #[error("{} invalid grasp(s): {}", .0.len(), format_issues(.0))]
    Invalid(Vec<GraspIssue>),
    #[error("object {0:?} has no rotatable region")]
    NoRotatableRegion(String),
}

fn format_issues(issues: &[GraspIssue]) -> String {
    issues
        .iter()
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// One invariant violation of the grasp at `index`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GraspIssue {
    pub index: usize,
    pub kind: IssueKind,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IssueKind {
    AngleCount { expected: usize, got: usize },
    JointCount { expected: usize, got: usize },
    ObjectKeypointCount { expected: usize, got: usize },
    NonFinite,
    FkMismatch { max_error: f64 },
    ObjectKeypointMismatch { max_error: f64 },
    JointLimit { dof: usize, value: f64 },
}

impl fmt::Display for GraspIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "grasp {}: ", self.index)?;
        match &self.kind {
            IssueKind::AngleCount { expected, got } => {
                write!(f, "expected {expected} finger angles, got {got}")
            }
            IssueKind::JointCount { expected, got } => {
                write!(f, "expected {expected} joint positions, got {got}")
            }
            IssueKind::ObjectKeypointCount { expected, got } => {
                write!(f, "expected {expected} object keypoints, got {got}")
            }
            IssueKind::NonFinite => write!(f, "non-finite value"),
            IssueKind::FkMismatch { max_error } => {
                write!(f, "joint positions deviate from kinematics by {max_error:.4} m")
            }
            IssueKind::ObjectKeypointMismatch { max_error } => {
                write!(f, "object keypoints deviate from object pose by {max_error:.3e} m")
            }
            IssueKind::JointLimit { dof, value } => {
                write!(f, "angle {value:.4} of dof {dof} outside joint limits")
            }
        }
    }
}

/// One static hand + object state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraspConfiguration {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub wrist: Pose,
    pub theta: Vec<f64>,
    /// Hand keypoints `P^h` (world frame).
    #[serde(with = "serde_vec3_list")]
    pub joints: Vec<Vec3>,
    #[serde(rename = "obj")]
    pub object_pose: Pose,
    /// Object keypoints `P^o` (world frame).
    #[serde(rename = "obj_kp", with = "serde_vec3_list")]
    pub object_keypoints: Vec<Vec3>,
}

impl GraspConfiguration {
    /// Builds a configuration whose derived fields come straight from the models.
    pub fn from_state(
        hand: &HandModel,
        obj: &ObjectModel,
        wrist: Pose,
        theta: Vec<f64>,
        object_pose: Pose,
    ) -> Result<Self, crate::geom::GeomError> {
        Ok(Self {
            id: None,
            joints: hand.keypoint_positions(&wrist, &theta)?,
            object_keypoints: obj.world_keypoints(&object_pose),
            wrist,
            theta,
            object_pose,
        })
    }

    /// Wrist pose expressed in the object frame.
    pub fn wrist_in_object(&self) -> Pose {
        self.object_pose.relative_to(&self.wrist)
    }

    /// Every invariant violation of this grasp against the given models.
    pub fn issues(&self, hand: &HandModel, obj: &ObjectModel) -> Vec<IssueKind> {
        let mut out = Vec::new();
        let finite = self.wrist.is_finite()
            && self.object_pose.is_finite()
            && self.theta.iter().all(|t| t.is_finite())
            && self.joints.iter().all(|p| p.iter().all(|c| c.is_finite()))
            && self.object_keypoints.iter().all(|p| p.iter().all(|c| c.is_finite()));
        if !finite {
            out.push(IssueKind::NonFinite);
            return out;
        }
        if self.theta.len() != hand.dof() {
            out.push(IssueKind::AngleCount {
                expected: hand.dof(),
                got: self.theta.len(),
            });
        } else {
            if let Err(dof) = hand.tree().within_limits(&self.theta, LIMIT_SLACK) {
                out.push(IssueKind::JointLimit {
                    dof,
                    value: self.theta[dof],
                });
            }
            if self.joints.len() != hand.keypoint_count() {
                out.push(IssueKind::JointCount {
                    expected: hand.keypoint_count(),
                    got: self.joints.len(),
                });
            } else if let Ok(fk) = hand.keypoint_positions(&self.wrist, &self.theta) {
                let err = max_deviation(&fk, &self.joints);
                if err > FK_TOLERANCE {
                    out.push(IssueKind::FkMismatch { max_error: err });
                }
            }
        }
        if self.object_keypoints.len() != obj.keypoints().len() {
            out.push(IssueKind::ObjectKeypointCount {
                expected: obj.keypoints().len(),
                got: self.object_keypoints.len(),
            });
        } else {
            let err = max_deviation(&obj.world_keypoints(&self.object_pose), &self.object_keypoints);
            if err > OBJECT_KEYPOINT_TOLERANCE {
                out.push(IssueKind::ObjectKeypointMismatch { max_error: err });
            }
        }
        out
    }
}

fn max_deviation(a: &[Vec3], b: &[Vec3]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (p - q).norm())
        .fold(0.0, f64::max)
}

/// Non-empty list of grasps sharing one hand model and one object.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GraspSetFile")]
pub struct GraspSet {
    pub hand_model: String,
    pub object: String,
    grasps: Vec<GraspConfiguration>,
}

#[derive(Deserialize)]
struct GraspSetFile {
    hand_model: String,
    object: String,
    grasps: Vec<GraspConfiguration>,
}

impl TryFrom<GraspSetFile> for GraspSet {
    type Error = GraspError;

    fn try_from(f: GraspSetFile) -> Result<Self, GraspError> {
        GraspSet::new(f.hand_model, f.object, f.grasps)
    }
}

impl GraspSet {
    pub fn new(
        hand_model: impl Into<String>,
        object: impl Into<String>,
        grasps: Vec<GraspConfiguration>,
    ) -> Result<Self, GraspError> {
        if grasps.is_empty() {
            return Err(GraspError::Empty);
        }
        Ok(Self {
            hand_model: hand_model.into(),
            object: object.into(),
            grasps,
        })
    }

    pub fn grasps(&self) -> &[GraspConfiguration] {
        &self.grasps
    }

    pub fn len(&self) -> usize {
        self.grasps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grasps.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&GraspConfiguration> {
        self.grasps.get(i)
    }

    /// Index of the grasp whose id is `id`.
    pub fn position_of(&self, id: &str) -> Option<usize> {
        self.grasps.iter().position(|g| g.id.as_deref() == Some(id))
    }

    /// Every issue of every grasp, in index order.
    pub fn issues(&self, hand: &HandModel, obj: &ObjectModel) -> Vec<GraspIssue> {
        self.grasps
            .iter()
            .enumerate()
            .flat_map(|(index, g)| {
                g.issues(hand, obj)
                    .into_iter()
                    .map(move |kind| GraspIssue { index, kind })
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("grasp set serializes")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LoadMode {
    /// Any invalid grasp rejects the whole file.
    Strict,
    /// Invalid grasps are dropped and reported.
    Lenient,
}

/// A validated grasp set plus the issues of any grasps that were dropped.
#[derive(Clone, Debug)]
pub struct LoadedGrasps {
    pub set: GraspSet,
    pub dropped: Vec<GraspIssue>,
}

/// Parses and validates a grasp set document against the given models.
pub fn parse_grasp_set(
    text: &str,
    hand: &HandModel,
    obj: &ObjectModel,
    mode: LoadMode,
) -> Result<LoadedGrasps, GraspError> {
    let file: GraspSetFile =
        serde_json::from_str(text).map_err(|e| GraspError::Schema(e.to_string()))?;
    if file.grasps.is_empty() {
        return Err(GraspError::Empty);
    }
    if file.hand_model != hand.id() {
        return Err(GraspError::HandMismatch {
            expected: hand.id().to_string(),
            found: file.hand_model,
        });
    }
    if file.object != obj.id {
        return Err(GraspError::ObjectMismatch {
            expected: obj.id.clone(),
            found: file.object,
        });
    }
    let set = GraspSet::new(file.hand_model, file.object, file.grasps)?;
    let issues = set.issues(hand, obj);
    if issues.is_empty() {
        return Ok(LoadedGrasps {
            set,
            dropped: Vec::new(),
        });
    }
    match mode {
        LoadMode::Strict => Err(GraspError::Invalid(issues)),
        LoadMode::Lenient => {
            let bad: Vec<usize> = issues.iter().map(|i| i.index).collect();
            let kept = set
                .grasps
                .into_iter()
                .enumerate()
                .filter(|(i, _)| !bad.contains(i))
                .map(|(_, g)| g)
                .collect();
            Ok(LoadedGrasps {
                set: GraspSet::new(set.hand_model, set.object, kept)?,
                dropped: issues,
            })
        }
    }
}

pub fn load_grasp_set(
    path: impl AsRef<Path>,
    hand: &HandModel,
    obj: &ObjectModel,
    mode: LoadMode,
) -> Result<LoadedGrasps, GraspError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| GraspError::Io(format!("{}: {e}", path.display())))?;
    parse_grasp_set(&text, hand, obj, mode)
}

/// Applies the rigid transform `t` to every pose and point of `g`.
pub fn transform_grasp(g: &GraspConfiguration, t: &Pose) -> GraspConfiguration {
    GraspConfiguration {
        id: g.id.clone(),
        wrist: t.compose(&g.wrist),
        theta: g.theta.clone(),
        joints: g.joints.iter().map(|p| t.transform_point(p)).collect(),
        object_pose: t.compose(&g.object_pose),
        object_keypoints: g.object_keypoints.iter().map(|p| t.transform_point(p)).collect(),
    }
}

/// Moves `g` rigidly so its object lands on `target`.
///
/// The object pose of the result is `target` exactly.
pub fn retarget_grasp(g: &GraspConfiguration, target: &Pose) -> GraspConfiguration {
    let t = target.compose(&g.object_pose.inverse());
    let mut out = transform_grasp(g, &t);
    out.object_pose = *target;
    out
}

/// Weights of the grasp distance (per meter, per radian, per radian).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraspMetric {
    pub w_p: f64,
    pub w_r: f64,
    pub w_theta: f64,
}

impl Default for GraspMetric {
    fn default() -> Self {
        Self {
            w_p: 1.0,
            w_r: 1.0,
            w_theta: 1.0,
        }
    }
}

/// Distance between two grasps with both wrists expressed in their object's frame.
pub fn grasp_distance(a: &GraspConfiguration, b: &GraspConfiguration, w: &GraspMetric) -> f64 {
    let (ra, rb) = (a.wrist_in_object(), b.wrist_in_object());
    let (dp, dr) = ra.distance_to(&rb);
    let n = a.theta.len().max(b.theta.len());
    let dtheta = if n == 0 {
        0.0
    } else {
        a.theta
            .iter()
            .zip(&b.theta)
            .map(|(x, y)| (x - y).abs())
            .sum::<f64>()
            / n as f64
    };
    w.w_p * dp + w.w_r * dr + w.w_theta * dtheta
}

/// Closest grasp in `pool`; ties go to the lowest index. `None` for an empty pool.
pub fn nearest_grasp(
    g: &GraspConfiguration,
    pool: &[GraspConfiguration],
    w: &GraspMetric,
) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in pool.iter().enumerate() {
        let d = grasp_distance(g, c, w);
        if best.map_or(true, |(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    best
}

/// Greedy nearest-neighbor chain of `k + 1` distinct grasps starting at `start`.
pub fn greedy_chain(
    pool: &[GraspConfiguration],
    start: usize,
    k: usize,
    w: &GraspMetric,
) -> Vec<usize> {
    let mut chain = vec![start];
    let mut remaining: Vec<usize> = (0..pool.len()).filter(|&i| i != start).collect();
    while chain.len() < k + 1 && !remaining.is_empty() {
        let cur = &pool[*chain.last().unwrap()];
        let candidates: Vec<GraspConfiguration> =
            remaining.iter().map(|&i| pool[i].clone()).collect();
        let (slot, _) = nearest_grasp(cur, &candidates, w).unwrap();
        chain.push(remaining.remove(slot));
    }
    chain
}

/// Whether at least `min_contacts` fingertips lie within `epsilon` of the
/// object's rotatable region.
pub fn contacts_rotatable_region(
    g: &GraspConfiguration,
    hand: &HandModel,
    obj: &ObjectModel,
    epsilon: f64,
    min_contacts: usize,
) -> Result<bool, GraspError> {
    let (region, axis) = match (obj.rotatable(), obj.axis()) {
        (Some(r), Some(a)) => (r, a),
        _ => return Err(GraspError::NoRotatableRegion(obj.id.clone())),
    };
    let to_obj = g.object_pose.inverse();
    let hits = hand
        .fingertip_slots()
        .iter()
        .filter_map(|&s| g.joints.get(s))
        .filter(|p| region.surface_distance(&to_obj.transform_point(p), &axis) <= epsilon)
        .count();
    Ok(hits >= min_contacts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::UnitQuat;
    use approx::assert_abs_diff_eq;

    fn models() -> (HandModel, ObjectModel) {
        (
            HandModel::builtin("mano").unwrap(),
            ObjectModel::builtin("cube").unwrap(),
        )
    }

    fn sample_grasp(hand: &HandModel, obj: &ObjectModel) -> GraspConfiguration {
        let wrist = Pose::new(
            Vec3::new(-0.08, 0.0, 0.12),
            UnitQuat::from_axis_angle(&Vec3::y(), 0.3),
        );
        let theta = vec![0.2; hand.dof()];
        let obj_pose = Pose::new(Vec3::new(0.0, 0.0, 0.03), UnitQuat::identity());
        GraspConfiguration::from_state(hand, obj, wrist, theta, obj_pose).unwrap()
    }

    fn document(grasps: &[GraspConfiguration]) -> String {
        serde_json::json!({"hand_model": "mano", "object": "cube", "grasps": grasps}).to_string()
    }

    #[test]
    fn empty_set_rejected() {
        let (hand, obj) = models();
        let err = parse_grasp_set(&document(&[]), &hand, &obj, LoadMode::Strict).unwrap_err();
        assert_eq!(err, GraspError::Empty);
        assert!(err.to_string().contains("empty set"));
    }

    #[test]
    fn offset_object_keypoints_flagged() {
        let (hand, obj) = models();
        let good = sample_grasp(&hand, &obj);
        let mut bad = good.clone();
        bad.object_keypoints[0].x += 0.01;
        let doc = document(&[good.clone(), bad, good]);
        match parse_grasp_set(&doc, &hand, &obj, LoadMode::Strict).unwrap_err() {
            GraspError::Invalid(issues) => {
                assert_eq!(issues.len(), 1);
                assert_eq!(issues[0].index, 1);
                assert!(matches!(issues[0].kind, IssueKind::ObjectKeypointMismatch { .. }));
            }
            e => panic!("unexpected {e:?}"),
        }
        let loaded = parse_grasp_set(&doc, &hand, &obj, LoadMode::Lenient).unwrap();
        assert_eq!(loaded.set.len(), 2);
        assert_eq!(loaded.dropped.len(), 1);
    }

    #[test]
    fn fk_and_limit_violations() {
        let (hand, obj) = models();
        let mut g = sample_grasp(&hand, &obj);
        g.joints[3].z += 0.004;
        assert!(g.issues(&hand, &obj).is_empty(), "4 mm is inside the tolerance");
        g.joints[3].z += 0.002;
        assert!(matches!(g.issues(&hand, &obj)[0], IssueKind::FkMismatch { .. }));
        let mut g = sample_grasp(&hand, &obj);
        g.theta[0] = 3.0;
        assert!(g
            .issues(&hand, &obj)
            .iter()
            .any(|k| matches!(k, IssueKind::JointLimit { dof: 0, .. })));
    }

    #[test]
    fn schema_errors() {
        let (hand, obj) = models();
        let g = sample_grasp(&hand, &obj);
        let mut v = serde_json::to_value(&g).unwrap();
        v["wrist"]["p"] = serde_json::json!([0.0, 1.0]);
        let doc = serde_json::json!({"hand_model": "mano", "object": "cube", "grasps": [v]}).to_string();
        assert!(matches!(
            parse_grasp_set(&doc, &hand, &obj, LoadMode::Strict),
            Err(GraspError::Schema(_))
        ));
        let doc = document(&[g]).replace("\"mano\"", "\"allegro\"");
        assert!(matches!(
            parse_grasp_set(&doc, &hand, &obj, LoadMode::Strict),
            Err(GraspError::HandMismatch { .. })
        ));
    }

    #[test]
    fn retarget_identity_and_translation() {
        let (hand, obj) = models();
        let g = sample_grasp(&hand, &obj);
        let same = retarget_grasp(&g, &g.object_pose);
        assert_abs_diff_eq!(same.wrist.position, g.wrist.position, epsilon = 1e-15);
        for (a, b) in same.joints.iter().zip(&g.joints) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
        let d = Vec3::new(0.1, -0.2, 0.05);
        let target = Pose::new(g.object_pose.position + d, g.object_pose.orientation);
        let moved = retarget_grasp(&g, &target);
        assert_abs_diff_eq!(moved.wrist.position, g.wrist.position + d, epsilon = 1e-12);
        for (a, b) in moved.joints.iter().zip(&g.joints) {
            assert_abs_diff_eq!(*a, b + d, epsilon = 1e-12);
        }
        assert_eq!(moved.theta, g.theta);
        assert!(moved.issues(&hand, &obj).is_empty());
    }

    #[test]
    fn nearest_prefers_smaller_rotation() {
        let (hand, obj) = models();
        let g = sample_grasp(&hand, &obj);
        let rotated = |deg: f64| {
            let mut c = g.clone();
            c.wrist.orientation =
                UnitQuat::from_axis_angle(&Vec3::z(), deg.to_radians()) * g.wrist.orientation;
            c
        };
        let pool = vec![rotated(20.0), rotated(10.0)];
        assert_eq!(nearest_grasp(&g, &pool, &GraspMetric::default()).unwrap().0, 1);
        let pool = vec![rotated(20.0), g.clone(), g.clone()];
        let (i, d) = nearest_grasp(&g, &pool, &GraspMetric::default()).unwrap();
        assert_eq!((i, d), (1, 0.0));
        assert!(nearest_grasp(&g, &[], &GraspMetric::default()).is_none());
    }

    #[test]
    fn rotatable_region_requires_region() {
        let (hand, obj) = models();
        let g = sample_grasp(&hand, &obj);
        assert!(matches!(
            contacts_rotatable_region(&g, &hand, &obj, 0.008, 2),
            Err(GraspError::NoRotatableRegion(_))
        ));
    }
}
