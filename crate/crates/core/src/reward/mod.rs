//! Multiplicative hand-object imitation reward and tracking metrics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Vec3;
use crate::synth::{Frame, Phase, Trajectory};

#[derive(Debug, Error, PartialEq)]
pub enum RewardError {
    #[error("{what} count mismatch: rollout {rollout}, reference {reference}")]
    CountMismatch {
        what: &'static str,
        rollout: usize,
        reference: usize,
    },
    #[error("object present in only one of the frames")]
    ObjectMismatch,
    #[error("trajectory lengths differ: rollout {rollout}, reference {reference}")]
    LengthMismatch { rollout: usize, reference: usize },
    #[error("frame rates differ: rollout {rollout}, reference {reference}")]
    FpsMismatch { rollout: f64, reference: f64 },
    #[error("empty trajectory")]
    Empty,
    #[error("invalid reward config: {0}")]
    Config(String),
    #[error("at frame {frame}: {source}")]
    AtFrame {
        frame: usize,
        #[source]
        source: Box<RewardError>,
    },
}

/// Distance-dependent boost of the interaction weight.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InteractScaling {
    pub d_near: f64,
    pub d_far: f64,
    pub gain: f64,
}

impl Default for InteractScaling {
    fn default() -> Self {
        Self {
            d_near: 0.02,
            d_far: 0.2,
            gain: 4.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub lambda_p: f64,
    pub lambda_r: f64,
    pub lambda_p_regrasp: f64,
    pub lambda_r_regrasp: f64,
    pub lambda_wp: f64,
    pub lambda_wr: f64,
    pub lambda_op: f64,
    pub lambda_or: f64,
    /// Base value; see [`dynamic_interact_lambda`].
    pub lambda_interact: f64,
    pub lambda_contact: f64,
    pub interact_scaling: InteractScaling,
    /// Velocity terms are never part of the reward; kept so configs say so explicitly.
    pub exclude_velocity: bool,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            lambda_p: 20.0,
            lambda_r: 20.0,
            lambda_p_regrasp: 200.0,
            lambda_r_regrasp: 200.0,
            lambda_wp: 20.0,
            lambda_wr: 20.0,
            lambda_op: 50.0,
            lambda_or: 50.0,
            lambda_interact: 20.0,
            lambda_contact: 5.0,
            interact_scaling: InteractScaling::default(),
            exclude_velocity: true,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), RewardError> {
        let lambdas = [
            ("lambda_p", self.lambda_p),
            ("lambda_r", self.lambda_r),
            ("lambda_p_regrasp", self.lambda_p_regrasp),
            ("lambda_r_regrasp", self.lambda_r_regrasp),
            ("lambda_wp", self.lambda_wp),
            ("lambda_wr", self.lambda_wr),
            ("lambda_op", self.lambda_op),
            ("lambda_or", self.lambda_or),
            ("lambda_interact", self.lambda_interact),
            ("lambda_contact", self.lambda_contact),
        ];
        for (name, v) in lambdas {
            if !(v.is_finite() && v > 0.0) {
                return Err(RewardError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        let s = &self.interact_scaling;
        if !(s.d_near.is_finite() && s.d_far.is_finite() && s.d_near < s.d_far) {
            return Err(RewardError::Config(format!(
                "need d_near < d_far, got {} and {}",
                s.d_near, s.d_far
            )));
        }
        if !(s.gain.is_finite() && s.gain >= 0.0) {
            return Err(RewardError::Config(format!("gain must be >= 0, got {}", s.gain)));
        }
        if !self.exclude_velocity {
            return Err(RewardError::Config("velocity terms are not supported".into()));
        }
        Ok(())
    }
}

/// `exp(-λ e)`.
pub fn sub_reward(error: f64, lambda: f64) -> f64 {
    (-lambda * error).exp()
}

/// `base (1 + gain · clamp((d_far - d) / (d_far - d_near), 0, 1))`.
pub fn dynamic_interact_lambda(d: f64, cfg: &RewardConfig) -> f64 {
    let s = &cfg.interact_scaling;
    let ramp = ((s.d_far - d) / (s.d_far - s.d_near)).clamp(0.0, 1.0);
    cfg.lambda_interact * (1.0 + s.gain * ramp)
}

/// Per-term tracking errors of one frame pair.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardErrors {
    pub p: f64,
    pub r: f64,
    pub wp: f64,
    pub wr: f64,
    pub op: f64,
    pub or: f64,
    pub interact: f64,
    pub contact: f64,
}

/// Per-term sub-rewards of one frame pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardComponents {
    pub p: f64,
    pub r: f64,
    pub wp: f64,
    pub wr: f64,
    pub op: f64,
    pub or: f64,
    pub interact: f64,
    pub contact: f64,
}

impl RewardComponents {
    pub fn hand(&self) -> f64 {
        self.p * self.r
    }

    pub fn wrist(&self) -> f64 {
        self.wp * self.wr
    }

    pub fn object(&self) -> f64 {
        self.op * self.or
    }

    pub fn as_array(&self) -> [f64; 8] {
        [
            self.p,
            self.r,
            self.wp,
            self.wr,
            self.op,
            self.or,
            self.interact,
            self.contact,
        ]
    }

    pub const NAMES: [&'static str; 8] = ["p", "r", "wp", "wr", "op", "or", "interact", "contact"];
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameReward {
    pub total: f64,
    pub components: RewardComponents,
    pub errors: RewardErrors,
    /// λ^interact actually used for this frame.
    pub lambda_interact: f64,
}

/// A rollout frame matched with its reference.
#[derive(Clone, Copy, Debug)]
pub struct FramePair<'a> {
    pub rollout: &'a Frame,
    pub reference: &'a Frame,
}

impl<'a> FramePair<'a> {
    pub fn new(rollout: &'a Frame, reference: &'a Frame) -> Result<Self, RewardError> {
        let check = |what, a: usize, b: usize| {
            if a == b {
                Ok(())
            } else {
                Err(RewardError::CountMismatch {
                    what,
                    rollout: a,
                    reference: b,
                })
            }
        };
        check("hand keypoint", rollout.joints.len(), reference.joints.len())?;
        check("joint angle", rollout.theta.len(), reference.theta.len())?;
        check(
            "object keypoint",
            rollout.object_keypoints.len(),
            reference.object_keypoints.len(),
        )?;
        check("contact flag", rollout.contact.len(), reference.contact.len())?;
        if rollout.object.is_some() != reference.object.is_some() {
            return Err(RewardError::ObjectMismatch);
        }
        Ok(Self { rollout, reference })
    }
}

fn mean(it: impl Iterator<Item = f64>, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        it.sum::<f64>() / n as f64
    }
}

/// Smallest hand-keypoint to object-keypoint distance in a frame; infinite
/// without object keypoints.
pub fn hand_object_distance(frame: &Frame) -> f64 {
    let mut d = f64::INFINITY;
    for h in &frame.joints {
        for o in &frame.object_keypoints {
            d = d.min((o - h).norm());
        }
    }
    d
}

/// Mean over all (hand keypoint, object keypoint) pairs of the difference
/// between the rollout and reference offset vectors.
fn interaction_error(a: &Frame, b: &Frame) -> f64 {
    let n = a.joints.len() * a.object_keypoints.len();
    let mut sum = 0.0;
    for (ha, hb) in a.joints.iter().zip(&b.joints) {
        for (oa, ob) in a.object_keypoints.iter().zip(&b.object_keypoints) {
            let va: Vec3 = oa - ha;
            let vb: Vec3 = ob - hb;
            sum += (va - vb).norm();
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

pub fn frame_errors(fp: &FramePair<'_>) -> RewardErrors {
    let (a, b) = (fp.rollout, fp.reference);
    let (wp, wr) = a.wrist.distance_to(&b.wrist);
    let (op, or) = match (a.object, b.object) {
        (Some(x), Some(y)) => x.distance_to(&y),
        _ => (0.0, 0.0),
    };
    RewardErrors {
        p: mean(
            a.joints.iter().zip(&b.joints).map(|(x, y)| (x - y).norm()),
            a.joints.len(),
        ),
        r: mean(
            a.theta.iter().zip(&b.theta).map(|(x, y)| (x - y).abs()),
            a.theta.len(),
        ),
        wp,
        wr,
        op,
        or,
        interact: interaction_error(a, b),
        contact: mean(
            a.contact
                .iter()
                .zip(&b.contact)
                .map(|(x, y)| if x == y { 0.0 } else { 1.0 }),
            a.contact.len(),
        ),
    }
}

pub fn frame_reward(fp: &FramePair<'_>, cfg: &RewardConfig, phase: Phase) -> FrameReward {
    let e = frame_errors(fp);
    let (lp, lr) = if phase == Phase::Regrasp {
        (cfg.lambda_p_regrasp, cfg.lambda_r_regrasp)
    } else {
        (cfg.lambda_p, cfg.lambda_r)
    };
    let li = dynamic_interact_lambda(hand_object_distance(fp.reference), cfg);
    let c = RewardComponents {
        p: sub_reward(e.p, lp),
        r: sub_reward(e.r, lr),
        wp: sub_reward(e.wp, cfg.lambda_wp),
        wr: sub_reward(e.wr, cfg.lambda_wr),
        op: sub_reward(e.op, cfg.lambda_op),
        or: sub_reward(e.or, cfg.lambda_or),
        interact: sub_reward(e.interact, li),
        contact: sub_reward(e.contact, cfg.lambda_contact),
    };
    FrameReward {
        total: c.hand() * c.wrist() * c.object() * c.interact * c.contact,
        components: c,
        errors: e,
        lambda_interact: li,
    }
}

fn check_aligned(rollout: &Trajectory, reference: &Trajectory) -> Result<(), RewardError> {
    if rollout.len() != reference.len() {
        return Err(RewardError::LengthMismatch {
            rollout: rollout.len(),
            reference: reference.len(),
        });
    }
    if rollout.is_empty() {
        return Err(RewardError::Empty);
    }
    Ok(())
}

/// Frame rewards for every aligned pair, scored in parallel. The phase used
/// for weight overrides is the reference frame's.
pub fn frame_rewards(
    rollout: &Trajectory,
    reference: &Trajectory,
    cfg: &RewardConfig,
) -> Result<Vec<FrameReward>, RewardError> {
    check_aligned(rollout, reference)?;
    if rollout.meta.fps != reference.meta.fps {
        return Err(RewardError::FpsMismatch {
            rollout: rollout.meta.fps,
            reference: reference.meta.fps,
        });
    }
    cfg.validate()?;
    rollout
        .frames
        .par_iter()
        .zip(reference.frames.par_iter())
        .enumerate()
        .map(|(i, (a, b))| {
            let fp = FramePair::new(a, b).map_err(|e| RewardError::AtFrame {
                frame: i,
                source: Box::new(e),
            })?;
            Ok(frame_reward(&fp, cfg, b.phase))
        })
        .collect()
}

/// `(1/T) Σ r_t`.
pub fn trajectory_mean_reward(
    rollout: &Trajectory,
    reference: &Trajectory,
    cfg: &RewardConfig,
) -> Result<f64, RewardError> {
    let rewards = frame_rewards(rollout, reference, cfg)?;
    // summed in frame order so the result does not depend on thread count
    Ok(rewards.iter().map(|r| r.total).sum::<f64>() / rewards.len() as f64)
}

/// Per-frame success predicate for SR.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuccessThresholds {
    /// Object position error bound, meters.
    pub position: f64,
    /// Object orientation error bound, degrees.
    pub angle_deg: f64,
}

impl Default for SuccessThresholds {
    fn default() -> Self {
        Self {
            position: 0.10,
            angle_deg: 45.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackingMetrics {
    /// Mean object position error, cm.
    pub e_op: f64,
    /// Mean object orientation error, degrees.
    pub e_or: f64,
    /// Mean per-keypoint hand position error, cm.
    pub e_h: f64,
    /// Fraction of frames within both object thresholds.
    pub sr: f64,
}

/// Frames without an object count as successful and contribute zero object error.
pub fn tracking_metrics(
    rollout: &Trajectory,
    reference: &Trajectory,
    thresholds: &SuccessThresholds,
) -> Result<TrackingMetrics, RewardError> {
    check_aligned(rollout, reference)?;
    let n = rollout.len() as f64;
    let (mut op, mut or, mut h, mut ok) = (0.0, 0.0, 0.0, 0usize);
    for (i, (a, b)) in rollout.frames.iter().zip(&reference.frames).enumerate() {
        let fp = FramePair::new(a, b).map_err(|e| RewardError::AtFrame {
            frame: i,
            source: Box::new(e),
        })?;
        let e = frame_errors(&fp);
        op += e.op;
        or += e.or.to_degrees();
        h += e.p;
        if e.op < thresholds.position && e.or.to_degrees() < thresholds.angle_deg {
            ok += 1;
        }
    }
    Ok(TrackingMetrics {
        e_op: 100.0 * op / n,
        e_or: or / n,
        e_h: 100.0 * h / n,
        sr: ok as f64 / n,
    })
}

/// Summary written by the `score` command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub frames: usize,
    pub mean_reward: f64,
    pub min_reward: f64,
    /// Mean of each sub-reward, keyed by term name.
    pub component_means: std::collections::BTreeMap<String, f64>,
    pub metrics: TrackingMetrics,
}

pub fn score(
    rollout: &Trajectory,
    reference: &Trajectory,
    cfg: &RewardConfig,
    thresholds: &SuccessThresholds,
) -> Result<ScoreReport, RewardError> {
    let rewards = frame_rewards(rollout, reference, cfg)?;
    let n = rewards.len() as f64;
    let mut sums = [0.0; 8];
    for r in &rewards {
        for (s, c) in sums.iter_mut().zip(r.components.as_array()) {
            *s += c;
        }
    }
    Ok(ScoreReport {
        frames: rewards.len(),
        mean_reward: rewards.iter().map(|r| r.total).sum::<f64>() / n,
        min_reward: rewards.iter().map(|r| r.total).fold(f64::INFINITY, f64::min),
        component_means: RewardComponents::NAMES
            .iter()
            .zip(sums)
            .map(|(k, s)| (k.to_string(), s / n))
            .collect(),
        metrics: tracking_metrics(rollout, reference, thresholds)?,
    })
}
