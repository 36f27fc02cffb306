//! Meta-skill trajectory synthesis: frames, trajectories, the skill
//! generators and cross-skill composition.

mod chain;
mod skills;

pub use chain::synth_chain;
pub use skills::{
    replication_counts, synth_catch, synth_free_move, synth_grasp, synth_move, synth_place,
    synth_regrasp, synth_rotate_general, synth_rotate_simple, synth_throw, MoveBoundary,
};

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{serde_vec3_list, GeomError, HandModel, Pose, Vec3};
use crate::grasp::{GraspMetric, GraspSet};
use crate::scene::{enumerate_stable_poses, ObjectModel, SceneError, StablePose, Workspace};

/// Tolerance for derived frame fields recomputed from the stored state.
pub const FRAME_TOLERANCE: f64 = 1e-6;
/// Boundary agreement required when stitching clips.
pub const JOIN_TRANSLATION_TOL: f64 = 1e-3;
pub const JOIN_ANGLE_TOL: f64 = 1.0 * std::f64::consts::PI / 180.0;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("object {0:?} has no stable resting pose")]
    NoStablePoses(String),
    #[error("{skill}: resample budget of {attempts} attempts exhausted")]
    BudgetExhausted { skill: Skill, attempts: usize },
    #[error("object {0:?} has no rotatable region and axis")]
    NoRotatableRegion(String),
    #[error("no grasp contacts the rotatable region of {0:?}")]
    NoRegionContact(String),
    #[error("grasp pool too small: need {needed}, have {got}")]
    PoolTooSmall { needed: usize, got: usize },
    #[error("clip {index} does not start where clip {} ends: {translation:.4} m, {angle_deg:.3} deg apart", .index - 1)]
    BoundaryMismatch {
        index: usize,
        translation: f64,
        angle_deg: f64,
    },
    #[error("cannot compose: {0}")]
    Incompatible(String),
    #[error("nothing to compose")]
    Empty,
    #[error("unsupported skill sequence: {0}")]
    UnsupportedChain(String),
    #[error("invalid synthesis config: {0}")]
    Config(String),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Scene(#[from] SceneError),
}

/// Phase label carried by every frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    FreeMove,
    Grasp,
    Place,
    Move,
    Rotate,
    Catch,
    Throw,
    Regrasp,
    Transition,
}

/// A synthesizable skill. Both rotate variants label their frames [`Phase::Rotate`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Skill {
    FreeMove,
    Grasp,
    Place,
    Move,
    Rotate,
    GeneralRotate,
    Catch,
    Throw,
    Regrasp,
}

impl Skill {
    pub const ALL: [Skill; 9] = [
        Skill::FreeMove,
        Skill::Grasp,
        Skill::Place,
        Skill::Move,
        Skill::Rotate,
        Skill::GeneralRotate,
        Skill::Catch,
        Skill::Throw,
        Skill::Regrasp,
    ];

    pub fn phase(self) -> Phase {
        match self {
            Skill::FreeMove => Phase::FreeMove,
            Skill::Grasp => Phase::Grasp,
            Skill::Place => Phase::Place,
            Skill::Move => Phase::Move,
            Skill::Rotate | Skill::GeneralRotate => Phase::Rotate,
            Skill::Catch => Phase::Catch,
            Skill::Throw => Phase::Throw,
            Skill::Regrasp => Phase::Regrasp,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Skill::FreeMove => "free_move",
            Skill::Grasp => "grasp",
            Skill::Place => "place",
            Skill::Move => "move",
            Skill::Rotate => "rotate",
            Skill::GeneralRotate => "general_rotate",
            Skill::Catch => "catch",
            Skill::Throw => "throw",
            Skill::Regrasp => "regrasp",
        }
    }
}

impl fmt::Display for Skill {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Skill {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Skill::ALL
            .into_iter()
            .find(|k| k.name() == key)
            .ok_or_else(|| {
                let names: Vec<_> = Skill::ALL.iter().map(|k| k.name()).collect();
                format!("unknown skill {s:?} (expected one of {})", names.join(", "))
            })
    }
}

/// One time step of a demonstration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub wrist: Pose,
    pub theta: Vec<f64>,
    /// Hand keypoints `P^h` (world frame), forward kinematics of `wrist`, `theta`.
    #[serde(with = "serde_vec3_list")]
    pub joints: Vec<Vec3>,
    #[serde(rename = "obj")]
    pub object: Option<Pose>,
    /// Object keypoints `P^o` (world frame); empty without an object.
    #[serde(rename = "obj_kp", with = "serde_vec3_list")]
    pub object_keypoints: Vec<Vec3>,
    pub contact: Vec<bool>,
    pub phase: Phase,
}

impl Frame {
    /// Builds a frame, deriving `joints` and `object_keypoints` from the models.
    pub fn build(
        hand: &HandModel,
        object: Option<(&ObjectModel, Pose)>,
        wrist: Pose,
        theta: Vec<f64>,
        contact: Vec<bool>,
        phase: Phase,
    ) -> Result<Self, GeomError> {
        let joints = hand.keypoint_positions(&wrist, &theta)?;
        let (object, object_keypoints) = match object {
            Some((obj, pose)) => (Some(pose), obj.world_keypoints(&pose)),
            None => (None, Vec::new()),
        };
        Ok(Self {
            wrist,
            theta,
            joints,
            object,
            object_keypoints,
            contact,
            phase,
        })
    }

    /// Wrist pose in the object frame, if there is an object.
    pub fn wrist_in_object(&self) -> Option<Pose> {
        self.object.map(|o| o.relative_to(&self.wrist))
    }

    /// Every invariant violation of this frame.
    pub fn issues(&self, hand: &HandModel, obj: Option<&ObjectModel>) -> Vec<String> {
        let mut out = Vec::new();
        let finite = self.wrist.is_finite()
            && self.theta.iter().all(|t| t.is_finite())
            && self.joints.iter().all(|p| p.iter().all(|c| c.is_finite()))
            && self.object.map_or(true, |o| o.is_finite())
            && self.object_keypoints.iter().all(|p| p.iter().all(|c| c.is_finite()));
        if !finite {
            out.push("non-finite value".to_string());
            return out;
        }
        if self.theta.len() != hand.dof() {
            out.push(format!("expected {} finger angles, got {}", hand.dof(), self.theta.len()));
        } else if self.joints.len() != hand.keypoint_count() {
            out.push(format!(
                "expected {} hand keypoints, got {}",
                hand.keypoint_count(),
                self.joints.len()
            ));
        } else if let Ok(fk) = hand.keypoint_positions(&self.wrist, &self.theta) {
            let err = max_deviation(&fk, &self.joints);
            if err > FRAME_TOLERANCE {
                out.push(format!("hand keypoints deviate from kinematics by {err:.3e} m"));
            }
        }
        if self.contact.len() != hand.fingertip_count() {
            out.push(format!(
                "expected {} contact flags, got {}",
                hand.fingertip_count(),
                self.contact.len()
            ));
        }
        match (self.object, obj) {
            (Some(pose), Some(obj)) => {
                if self.object_keypoints.len() != obj.keypoints().len() {
                    out.push(format!(
                        "expected {} object keypoints, got {}",
                        obj.keypoints().len(),
                        self.object_keypoints.len()
                    ));
                } else {
                    let err = max_deviation(&obj.world_keypoints(&pose), &self.object_keypoints);
                    if err > FRAME_TOLERANCE {
                        out.push(format!("object keypoints deviate from object pose by {err:.3e} m"));
                    }
                }
            }
            (None, _) if !self.object_keypoints.is_empty() => {
                out.push("object keypoints present without an object pose".to_string());
            }
            _ => {}
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

/// Provenance and timing of a trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub fps: f64,
    pub hand_model: String,
    pub object: Option<String>,
    pub skills: Vec<Skill>,
    /// Seed the clip was generated from, when generated from a seed.
    pub seed: Option<u64>,
    pub scale: f64,
    /// Indices into the grasp set of the grasps used, in order of use.
    #[serde(default)]
    pub grasps: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub meta: Meta,
    pub frames: Vec<Frame>,
}

/// One violated trajectory invariant; `frame` is `None` for clip-level issues.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub frame: Option<usize>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.frame {
            Some(i) => write!(f, "frame {i}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Every violated frame and trajectory invariant.
    ///
    /// `obj` must be the object at the trajectory's scale for the keypoint
    /// check; pass `None` to skip it.
    pub fn violations(
        &self,
        hand: &HandModel,
        obj: Option<&ObjectModel>,
        max_wrist_speed: f64,
    ) -> Vec<Violation> {
        let mut out = Vec::new();
        let clip = |message: String| Violation {
            frame: None,
            message,
        };
        if self.frames.len() < 2 {
            out.push(clip(format!("need at least 2 frames, got {}", self.frames.len())));
        }
        let fps = self.meta.fps;
        if !(fps > 0.0 && fps.is_finite()) {
            out.push(clip(format!("fps must be positive, got {fps}")));
        }
        if self.meta.hand_model != hand.id() {
            out.push(clip(format!(
                "trajectory hand model {:?} does not match {:?}",
                self.meta.hand_model,
                hand.id()
            )));
            return out;
        }
        let step_bound = max_wrist_speed / fps;
        for (i, f) in self.frames.iter().enumerate() {
            for message in f.issues(hand, obj) {
                out.push(Violation {
                    frame: Some(i),
                    message,
                });
            }
            if i > 0 && fps > 0.0 {
                let step = (f.wrist.position - self.frames[i - 1].wrist.position).norm();
                if step > step_bound * (1.0 + 1e-9) {
                    out.push(Violation {
                        frame: Some(i),
                        message: format!(
                            "wrist moved {step:.4} m in one frame (bound {step_bound:.4} m)"
                        ),
                    });
                }
            }
        }
        out
    }
}

/// Time-reverses a clip and relabels every frame with `skill`'s phase.
pub fn reverse_trajectory(t: &Trajectory, skill: Skill) -> Trajectory {
    let phase = skill.phase();
    let frames = t
        .frames
        .iter()
        .rev()
        .map(|f| Frame {
            phase,
            ..f.clone()
        })
        .collect();
    let mut meta = t.meta.clone();
    meta.skills = vec![skill];
    Trajectory { meta, frames }
}

/// Concatenates clips whose boundary frames agree, dropping each duplicated
/// boundary frame.
pub fn compose(clips: &[Trajectory]) -> Result<Trajectory, SynthError> {
    let first = clips.first().ok_or(SynthError::Empty)?;
    let mut out = first.clone();
    for (index, clip) in clips.iter().enumerate().skip(1) {
        if clip.meta.fps != out.meta.fps {
            return Err(SynthError::Incompatible(format!(
                "clip {index} runs at {} fps, expected {}",
                clip.meta.fps, out.meta.fps
            )));
        }
        if clip.meta.hand_model != out.meta.hand_model || clip.meta.object != out.meta.object {
            return Err(SynthError::Incompatible(format!(
                "clip {index} uses a different hand model or object"
            )));
        }
        let (a, b) = match (out.frames.last(), clip.frames.first()) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(SynthError::Incompatible(format!("clip {index} is empty"))),
        };
        let (mut dt, mut dr) = a.wrist.distance_to(&b.wrist);
        match (a.object, b.object) {
            (Some(oa), Some(ob)) => {
                let (t, r) = oa.distance_to(&ob);
                dt = dt.max(t);
                dr = dr.max(r);
            }
            (None, None) => {}
            _ => {
                return Err(SynthError::Incompatible(format!(
                    "clip {index} disagrees on object presence at the boundary"
                )))
            }
        }
        if dt > JOIN_TRANSLATION_TOL || dr > JOIN_ANGLE_TOL {
            return Err(SynthError::BoundaryMismatch {
                index,
                translation: dt,
                angle_deg: dr.to_degrees(),
            });
        }
        out.frames.extend(clip.frames.iter().skip(1).cloned());
        out.meta.skills.extend(clip.meta.skills.iter().copied());
        out.meta.grasps.extend(clip.meta.grasps.iter().copied());
    }
    Ok(out)
}

/// Grasp-cone parameters (radians, meters).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConeParams {
    pub half_angle: f64,
    pub r_min: f64,
    pub r_max: f64,
}

impl Default for ConeParams {
    fn default() -> Self {
        Self {
            half_angle: 30f64.to_radians(),
            r_min: 0.15,
            r_max: 0.35,
        }
    }
}

/// Simple rotate: keyframe count, per-step angle range and replication.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RotateParams {
    pub keyframes: usize,
    /// Per-keyframe rotation is drawn from `[-max_step, max_step]` (radians).
    pub max_step: f64,
    pub n_min: usize,
    /// Replication frames per radian of rotation.
    pub frames_per_radian: f64,
    pub contact_epsilon: f64,
    pub min_contacts: usize,
}

impl Default for RotateParams {
    fn default() -> Self {
        Self {
            keyframes: 4,
            max_step: 60f64.to_radians(),
            n_min: 5,
            frames_per_radian: 40.0,
            contact_epsilon: 0.008,
            min_contacts: 2,
        }
    }
}

/// Nearest-neighbor chains (general rotate, regrasp).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainParams {
    pub steps: usize,
    pub hold_frames: usize,
}

impl Default for ChainParams {
    fn default() -> Self {
        Self {
            steps: 3,
            hold_frames: 15,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CatchParams {
    pub gravity: f64,
    /// Pre-grasp frames whose hand-object clearance falls below this are rejected.
    pub clearance_threshold: f64,
    /// Lowest object height at the catch moment.
    pub min_catch_height: f64,
}

impl Default for CatchParams {
    fn default() -> Self {
        Self {
            gravity: 9.81,
            clearance_threshold: -0.005,
            min_catch_height: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub workspace: Workspace,
    /// Frames per clip `T` (frames are indexed `0..T`).
    pub clip_frames: usize,
    pub fps: f64,
    pub max_wrist_speed: f64,
    pub cone: ConeParams,
    /// Trailing frames of a grasp approach labeled as in contact.
    pub contact_window: usize,
    pub rotate: RotateParams,
    pub general_rotate: ChainParams,
    pub regrasp: ChainParams,
    pub catch: CatchParams,
    pub resample_budget: usize,
    pub metric: GraspMetric,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            workspace: Workspace::default(),
            clip_frames: 60,
            fps: 60.0,
            max_wrist_speed: 20.0,
            cone: ConeParams::default(),
            contact_window: 6,
            rotate: RotateParams::default(),
            general_rotate: ChainParams::default(),
            regrasp: ChainParams::default(),
            catch: CatchParams::default(),
            resample_budget: 100,
            metric: GraspMetric::default(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::Config(m.to_string()));
        if self.clip_frames < 2 {
            return bad("clip_frames must be at least 2");
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return bad("fps must be positive");
        }
        if !(self.max_wrist_speed > 0.0) {
            return bad("max_wrist_speed must be positive");
        }
        if self.resample_budget == 0 {
            return bad("resample_budget must be at least 1");
        }
        if self.rotate.n_min == 0 || self.general_rotate.hold_frames == 0 || self.regrasp.hold_frames == 0 {
            return bad("replication counts must be at least 1");
        }
        if self.rotate.keyframes == 0 {
            return bad("rotate.keyframes must be at least 1");
        }
        Ok(())
    }
}

/// Models and grasps a synthesizer draws from.
#[derive(Clone, Debug)]
pub struct SkillInputs<'a> {
    pub hand: &'a HandModel,
    pub object: &'a ObjectModel,
    pub grasps: &'a GraspSet,
    pub stable: Vec<StablePose>,
}

impl<'a> SkillInputs<'a> {
    pub fn new(
        hand: &'a HandModel,
        object: &'a ObjectModel,
        grasps: &'a GraspSet,
    ) -> Result<Self, SynthError> {
        Ok(Self {
            hand,
            object,
            grasps,
            stable: enumerate_stable_poses(object)?,
        })
    }
}

/// Synthesizes one clip of `skill` from a seed.
pub fn synthesize(
    skill: Skill,
    cfg: &SynthConfig,
    inputs: &SkillInputs<'_>,
    seed: u64,
) -> Result<Trajectory, SynthError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rng = &mut rng;
    let mut t = match skill {
        Skill::FreeMove => synth_free_move(cfg, inputs.hand, rng)?,
        Skill::Grasp => synth_grasp(cfg, inputs, rng)?,
        Skill::Place => synth_place(cfg, inputs, rng)?,
        Skill::Move => synth_move(cfg, inputs, rng, &MoveBoundary::default())?,
        Skill::Rotate => synth_rotate_simple(cfg, inputs, rng)?,
        Skill::GeneralRotate => synth_rotate_general(cfg, inputs, rng, cfg.general_rotate.steps)?,
        Skill::Catch => synth_catch(cfg, inputs, rng)?,
        Skill::Throw => synth_throw(cfg, inputs, rng)?,
        Skill::Regrasp => synth_regrasp(cfg, inputs, rng, cfg.regrasp.steps)?,
    };
    t.meta.seed = Some(seed);
    Ok(t)
}
