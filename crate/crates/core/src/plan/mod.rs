//! Keypoint manipulation plans: parsing, densification into a wrist path, and
//! fusion with a grasp into a full demonstration.

use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::geom::{cubic_bezier, lerp_scalar, unit_parameters, GeomError, HandModel, Pose, UnitQuat, Vec3};
use crate::grasp::{GraspConfiguration, GraspSet};
use crate::scene::ObjectModel;
use crate::synth::{Frame, Meta, Phase, Skill, Trajectory};

/// Quaternions within this distance of unit norm are normalized on parse.
pub const QUAT_NORM_TOLERANCE: f64 = 1e-3;
/// Rotation below which a segment keeps a single slerp between its ends.
pub const STATIC_SEGMENT_ANGLE: f64 = 1.0 * std::f64::consts::PI / 180.0;
pub const GRASP_TRANSLATION_TOLERANCE: f64 = 0.01;
pub const GRASP_ANGLE_TOLERANCE: f64 = 10.0 * std::f64::consts::PI / 180.0;

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("plan is not valid JSON: {0}")]
    Syntax(String),
    #[error("{path}: {message}")]
    Field { path: String, message: String },
    #[error("selected grasp {0} is not in the grasp set")]
    UnknownGrasp(String),
    #[error("plan is for object {plan:?} but {other} is {found:?}")]
    ObjectMismatch {
        plan: String,
        other: &'static str,
        found: String,
    },
    #[error(
        "grasp keypoint wrist {plan_pose} is {translation:.4} m / {angle_deg:.2} deg from the selected grasp's wrist {grasp_pose}"
    )]
    IncompatibleGrasp {
        plan_pose: String,
        grasp_pose: String,
        translation: f64,
        angle_deg: f64,
    },
    #[error("samples per keypoint must be >= 2, got {0}")]
    Samples(usize),
    #[error(transparent)]
    Geom(#[from] GeomError),
}

fn field(path: impl Into<String>, message: impl Into<String>) -> PlanError {
    PlanError::Field {
        path: path.into(),
        message: message.into(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Action {
    Start,
    Approach,
    Grasp,
    Transport,
    Release,
    Retreat,
    End,
}

impl Action {
    pub const ALL: [Action; 7] = [
        Action::Start,
        Action::Approach,
        Action::Grasp,
        Action::Transport,
        Action::Release,
        Action::Retreat,
        Action::End,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Action::Start => "start",
            Action::Approach => "approach",
            Action::Grasp => "grasp",
            Action::Transport => "transport",
            Action::Release => "release",
            Action::Retreat => "retreat",
            Action::End => "end",
        }
    }

    pub fn from_label(s: &str) -> Option<Action> {
        Action::ALL.into_iter().find(|a| a.label() == s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlanKeypoint {
    pub index: u64,
    pub pose: Pose,
    pub action: Action,
}

/// The grasp a plan asks for: a position in the grasp set or a grasp id.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GraspRef {
    Index(usize),
    Id(String),
}

impl std::fmt::Display for GraspRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GraspRef::Index(i) => write!(f, "#{i}"),
            GraspRef::Id(s) => write!(f, "{s:?}"),
        }
    }
}

impl GraspRef {
    pub fn resolve(&self, set: &GraspSet) -> Option<usize> {
        match self {
            GraspRef::Index(i) => (*i < set.len()).then_some(*i),
            GraspRef::Id(id) => set.position_of(id),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManipulationPlan {
    pub object: String,
    pub selected_grasp: GraspRef,
    pub grasp_index: u64,
    pub release_index: u64,
    pub keypoints: Vec<PlanKeypoint>,
}

fn get<'a>(obj: &'a Map<String, Value>, key: &str, path: &str) -> Result<&'a Value, PlanError> {
    obj.get(key)
        .ok_or_else(|| field(join(path, key), "missing required field"))
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn as_index(v: &Value, path: &str) -> Result<u64, PlanError> {
    v.as_u64()
        .ok_or_else(|| field(path, format!("expected a non-negative integer, got {v}")))
}

fn as_numbers<const N: usize>(v: &Value, path: &str) -> Result<[f64; N], PlanError> {
    let arr = v
        .as_array()
        .ok_or_else(|| field(path, format!("expected an array of {N} numbers")))?;
    if arr.len() != N {
        return Err(field(path, format!("expected {N} numbers, got {}", arr.len())));
    }
    let mut out = [0.0; N];
    for (k, (o, x)) in out.iter_mut().zip(arr).enumerate() {
        *o = x
            .as_f64()
            .filter(|f| f.is_finite())
            .ok_or_else(|| field(format!("{path}[{k}]"), format!("expected a finite number, got {x}")))?;
    }
    Ok(out)
}

fn parse_quat(v: &Value, path: &str) -> Result<UnitQuat, PlanError> {
    let [w, x, y, z] = as_numbers::<4>(v, path)?;
    let norm = (w * w + x * x + y * y + z * z).sqrt();
    if (norm - 1.0).abs() > QUAT_NORM_TOLERANCE {
        return Err(field(
            path,
            format!("quaternion norm {norm} is not within {QUAT_NORM_TOLERANCE} of 1"),
        ));
    }
    UnitQuat::new(w, x, y, z).map_err(|e| field(path, e.to_string()))
}

/// Parses and validates a plan document. Never panics on any input.
pub fn parse_plan(text: &str) -> Result<ManipulationPlan, PlanError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| PlanError::Syntax(e.to_string()))?;
    plan_from_value(&doc)
}

pub fn plan_from_value(doc: &Value) -> Result<ManipulationPlan, PlanError> {
    let root = doc
        .as_object()
        .ok_or_else(|| field("$", "expected a JSON object"))?;
    let object = get(root, "object", "")?
        .as_str()
        .ok_or_else(|| field("object", "expected a string"))?
        .to_string();
    let selected_grasp = match get(root, "selected_grasp", "")? {
        Value::String(s) => GraspRef::Id(s.clone()),
        v => GraspRef::Index(
            as_index(v, "selected_grasp")
                .map_err(|_| field("selected_grasp", "expected a grasp id string or a non-negative index"))?
                as usize,
        ),
    };
    let grasp_index = as_index(get(root, "grasp_index", "")?, "grasp_index")?;
    let release_index = as_index(get(root, "release_index", "")?, "release_index")?;
    let raw = get(root, "keypoints", "")?
        .as_array()
        .ok_or_else(|| field("keypoints", "expected an array"))?;
    let mut keypoints = Vec::with_capacity(raw.len());
    for (k, kp) in raw.iter().enumerate() {
        let path = format!("keypoints[{k}]");
        let o = kp
            .as_object()
            .ok_or_else(|| field(&path, "expected an object"))?;
        let index = as_index(get(o, "index", &path)?, &join(&path, "index"))?;
        let p = as_numbers::<3>(get(o, "p", &path)?, &join(&path, "p"))?;
        let q = parse_quat(get(o, "q", &path)?, &join(&path, "q"))?;
        let label = get(o, "action", &path)?
            .as_str()
            .ok_or_else(|| field(join(&path, "action"), "expected a string"))?;
        let action = Action::from_label(label).ok_or_else(|| {
            field(
                join(&path, "action"),
                format!(
                    "unknown action {label:?}; expected one of {}",
                    Action::ALL.map(|a| a.label()).join(", ")
                ),
            )
        })?;
        if let Some(prev) = keypoints.last().map(|p: &PlanKeypoint| p.index) {
            if index <= prev {
                return Err(field(
                    join(&path, "index"),
                    format!("indices must be strictly increasing, got {index} after {prev}"),
                ));
            }
        }
        keypoints.push(PlanKeypoint {
            index,
            pose: Pose::new(Vec3::from(p), q),
            action,
        });
    }
    if keypoints.len() < 2 {
        return Err(field("keypoints", format!("need at least 2 keypoints, got {}", keypoints.len())));
    }
    if grasp_index >= release_index {
        return Err(field(
            "grasp_index",
            format!("grasp index {grasp_index} must come before release index {release_index}"),
        ));
    }
    for (name, index, action) in [
        ("grasp_index", grasp_index, Action::Grasp),
        ("release_index", release_index, Action::Release),
    ] {
        let labelled: Vec<usize> = keypoints
            .iter()
            .enumerate()
            .filter(|(_, k)| k.action == action)
            .map(|(i, _)| i)
            .collect();
        if labelled.len() != 1 {
            return Err(field(
                "keypoints",
                format!("exactly one keypoint must have action {:?}, found {}", action.label(), labelled.len()),
            ));
        }
        let at = keypoints[labelled[0]].index;
        if at != index {
            return Err(field(
                name,
                format!("{index} does not match keypoints[{}] labelled {:?} (index {at})", labelled[0], action.label()),
            ));
        }
    }
    Ok(ManipulationPlan {
        object,
        selected_grasp,
        grasp_index,
        release_index,
        keypoints,
    })
}

impl ManipulationPlan {
    /// Position of the keypoint with the given plan index.
    pub fn position_of(&self, index: u64) -> Option<usize> {
        self.keypoints.iter().position(|k| k.index == index)
    }

    pub fn grasp_position(&self) -> usize {
        self.position_of(self.grasp_index).expect("validated plan")
    }

    pub fn release_position(&self) -> usize {
        self.position_of(self.release_index).expect("validated plan")
    }

    pub fn to_value(&self) -> Value {
        json!({
            "object": self.object,
            "selected_grasp": match &self.selected_grasp {
                GraspRef::Index(i) => json!(i),
                GraspRef::Id(s) => json!(s),
            },
            "grasp_index": self.grasp_index,
            "release_index": self.release_index,
            "keypoints": self.keypoints.iter().map(|k| json!({
                "index": k.index,
                "p": [k.pose.position.x, k.pose.position.y, k.pose.position.z],
                "q": k.pose.orientation.to_array(),
                "action": k.action.label(),
            })).collect::<Vec<_>>(),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensePlan {
    pub fps: f64,
    pub poses: Vec<Pose>,
    /// Sample index of each plan keypoint.
    pub keypoint_samples: Vec<usize>,
    pub grasp_sample: usize,
    pub release_sample: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct DensifyParams {
    pub samples_per_keypoint: usize,
    pub tangent_scale: f64,
    pub fps: f64,
}

impl Default for DensifyParams {
    fn default() -> Self {
        Self {
            samples_per_keypoint: 20,
            tangent_scale: 1.0 / 6.0,
            fps: 60.0,
        }
    }
}

/// Orientations with signs flipped so consecutive dot products are >= 0.
fn sign_continuous(qs: &[UnitQuat]) -> Vec<UnitQuat> {
    let mut out: Vec<UnitQuat> = Vec::with_capacity(qs.len());
    for q in qs {
        let q = match out.last() {
            Some(prev) if prev.dot(q) < 0.0 => -*q,
            _ => *q,
        };
        out.push(q);
    }
    out
}

/// Densifies one semantic segment (anchors `a..=b`). Returns all samples,
/// including both ends.
fn densify_segment(
    positions: &[Vec3],
    orientations: &[UnitQuat],
    params: &DensifyParams,
) -> Result<Vec<Pose>, PlanError> {
    let n = positions.len();
    if n == 1 {
        return Ok(vec![Pose::new(positions[0], orientations[0])]);
    }
    let s = params.samples_per_keypoint;
    let pos = cubic_bezier(positions, params.tangent_scale, s)?;
    let per_pair = unit_parameters(s);
    let first = orientations[0];
    let is_static = orientations.iter().all(|q| first.angle_to(q) < STATIC_SEGMENT_ANGLE);
    let total = pos.len();
    let mut rots = Vec::with_capacity(total);
    if is_static {
        let last = orientations[n - 1];
        for (j, u) in unit_parameters(total).into_iter().enumerate() {
            rots.push(if j == 0 {
                first
            } else if j == total - 1 {
                last
            } else {
                first.slerp(&last, u)
            });
        }
    } else {
        for pair in 0..n - 1 {
            let (q0, q1) = (orientations[pair], orientations[pair + 1]);
            for (k, &u) in per_pair.iter().enumerate() {
                if pair > 0 && k == 0 {
                    continue;
                }
                rots.push(if k == 0 {
                    q0
                } else if k == s - 1 {
                    q1
                } else {
                    q0.slerp(&q1, u)
                });
            }
        }
    }
    Ok(pos.into_iter().zip(rots).map(|(p, q)| Pose::new(p, q)).collect())
}

/// Dense wrist path: the start→grasp, grasp→release and release→end segments
/// are interpolated independently and joined without repeating boundary samples.
pub fn densify_plan(plan: &ManipulationPlan, params: &DensifyParams) -> Result<DensePlan, PlanError> {
    if params.samples_per_keypoint < 2 {
        return Err(PlanError::Samples(params.samples_per_keypoint));
    }
    if !(params.fps.is_finite() && params.fps > 0.0) {
        return Err(field("fps", format!("must be positive, got {}", params.fps)));
    }
    let positions: Vec<Vec3> = plan.keypoints.iter().map(|k| k.pose.position).collect();
    let orientations = sign_continuous(&plan.keypoints.iter().map(|k| k.pose.orientation).collect::<Vec<_>>());
    let (g, r) = (plan.grasp_position(), plan.release_position());
    let last = plan.keypoints.len() - 1;
    let mut poses: Vec<Pose> = Vec::new();
    for (a, b) in [(0, g), (g, r), (r, last)] {
        let seg = densify_segment(&positions[a..=b], &orientations[a..=b], params)?;
        let skip = usize::from(!poses.is_empty());
        poses.extend(seg.into_iter().skip(skip));
    }
    let keypoint_samples: Vec<usize> = (0..plan.keypoints.len())
        .map(|i| i * (params.samples_per_keypoint - 1))
        .collect();
    Ok(DensePlan {
        fps: params.fps,
        grasp_sample: keypoint_samples[g],
        release_sample: keypoint_samples[r],
        keypoint_samples,
        poses,
    })
}

/// Fuses a dense wrist path with the plan's selected grasp.
///
/// Before the grasp the object rests where the grasp puts it relative to the
/// grasp keypoint while the fingers close from zero; between grasp and release
/// it follows the wrist rigidly; afterwards it stays at the release pose while
/// the fingers open again.
pub fn plan_to_demonstration(
    plan: &ManipulationPlan,
    dense: &DensePlan,
    hand: &HandModel,
    grasps: &GraspSet,
    obj: &ObjectModel,
) -> Result<Trajectory, PlanError> {
    if plan.object != obj.id {
        return Err(PlanError::ObjectMismatch {
            plan: plan.object.clone(),
            other: "the object model",
            found: obj.id.clone(),
        });
    }
    if plan.object != grasps.object {
        return Err(PlanError::ObjectMismatch {
            plan: plan.object.clone(),
            other: "the grasp set",
            found: grasps.object.clone(),
        });
    }
    let gi = plan
        .selected_grasp
        .resolve(grasps)
        .ok_or_else(|| PlanError::UnknownGrasp(plan.selected_grasp.to_string()))?;
    let g: &GraspConfiguration = &grasps.grasps()[gi];
    let w_grasp = dense.poses[dense.grasp_sample];
    let (dt, dr) = w_grasp.distance_to(&g.wrist);
    if dt > GRASP_TRANSLATION_TOLERANCE || dr > GRASP_ANGLE_TOLERANCE {
        return Err(PlanError::IncompatibleGrasp {
            plan_pose: format!("{w_grasp}"),
            grasp_pose: format!("{}", g.wrist),
            translation: dt,
            angle_deg: dr.to_degrees(),
        });
    }
    let rel_inv = g.wrist_in_object().inverse();
    let start_obj = w_grasp.compose(&rel_inv);
    let release_obj = dense.poses[dense.release_sample].compose(&rel_inv);
    let fingers = hand.fingertip_count();
    let n = dense.poses.len();
    let (gs, rs) = (dense.grasp_sample, dense.release_sample);
    let mut frames = Vec::with_capacity(n);
    for (t, &wrist) in dense.poses.iter().enumerate() {
        let (object, theta, contact, phase) = if t < gs {
            let u = t as f64 / gs as f64;
            let theta = g.theta.iter().map(|&x| lerp_scalar(0.0, x, u)).collect();
            (start_obj, theta, false, Phase::Grasp)
        } else if t <= rs {
            (wrist.compose(&rel_inv), g.theta.clone(), true, Phase::Move)
        } else {
            let u = (t - rs) as f64 / (n - 1 - rs) as f64;
            let theta = g.theta.iter().map(|&x| lerp_scalar(x, 0.0, u)).collect();
            (release_obj, theta, false, Phase::Place)
        };
        frames.push(Frame::build(hand, Some((obj, object)), wrist, theta, vec![contact; fingers], phase)?);
    }
    Ok(Trajectory {
        meta: Meta {
            fps: dense.fps,
            hand_model: hand.id().to_string(),
            object: Some(obj.id.clone()),
            skills: vec![Skill::Grasp, Skill::Move, Skill::Place],
            seed: None,
            scale: obj.scale(),
            grasps: vec![gi],
        },
        frames,
    })
}
