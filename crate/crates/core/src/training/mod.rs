//! Deterministic control logic around an external trainer: adaptive clip
//! sampling, the randomization curriculum, and the distillation schedule.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{GeomError, HandModel, Pose, UnitQuat, Vec3};
use crate::scene::ObjectModel;
use crate::synth::{Frame, Phase};

#[derive(Debug, Error)]
pub enum TrainingError {
    #[error("no trajectories to sample from")]
    Empty,
    #[error("mean reward {value} at index {index} is not finite")]
    NonFiniteReward { index: usize, value: f64 },
    #[error("lambda_s must be finite and >= 0, got {0}")]
    InvalidLambda(f64),
    #[error("invalid curriculum config: {0}")]
    Config(String),
    #[error(transparent)]
    Geom(#[from] GeomError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingState {
    pub mean_rewards: Vec<f64>,
    #[serde(default = "default_lambda_s")]
    pub lambda_s: f64,
}

fn default_lambda_s() -> f64 {
    10.0
}

/// `p_i ∝ exp(-λ_s r̄_i)`: clips the policy tracks badly are drawn more often.
pub fn sampling_probabilities(state: &SamplingState) -> Result<Vec<f64>, TrainingError> {
    if state.mean_rewards.is_empty() {
        return Err(TrainingError::Empty);
    }
    if !(state.lambda_s.is_finite() && state.lambda_s >= 0.0) {
        return Err(TrainingError::InvalidLambda(state.lambda_s));
    }
    for (index, &value) in state.mean_rewards.iter().enumerate() {
        if !value.is_finite() {
            return Err(TrainingError::NonFiniteReward { index, value });
        }
    }
    let logits: Vec<f64> = state.mean_rewards.iter().map(|r| -state.lambda_s * r).collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / z).collect())
}

/// Draws a clip index from `probs` (inverse CDF).
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len().saturating_sub(1)
}

/// Initial-state noise bounds; each is the half-width of a uniform draw.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Amplitudes {
    /// Finger joint angles, rad.
    pub dof: f64,
    /// Finger joint velocities, rad/s.
    pub dof_vel: f64,
    /// Object linear velocity, m/s.
    pub obj_vel: f64,
    /// Object rotation, rad.
    pub obj_rot: f64,
    /// Object position, m (non-contact frames).
    pub obj_pos: f64,
}

impl Default for Amplitudes {
    fn default() -> Self {
        Self {
            dof: PI / 8.0,
            dof_vel: 0.1,
            obj_vel: 0.02,
            obj_rot: 0.02,
            obj_pos: 0.02,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerturbProbability {
    pub regrasp: f64,
    pub other: f64,
}

impl Default for PerturbProbability {
    fn default() -> Self {
        Self {
            regrasp: 0.5,
            other: 0.3,
        }
    }
}

impl PerturbProbability {
    pub fn for_phase(&self, phase: Phase) -> f64 {
        if phase == Phase::Regrasp {
            self.regrasp
        } else {
            self.other
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistillConfig {
    pub stage2_start: u64,
    pub stage3_start: u64,
    pub stage4_start: u64,
    pub ev_threshold: f64,
    /// Consecutive windows above the threshold that open the policy-gradient gate.
    pub ev_windows: usize,
    /// Epochs per explained-variance evaluation window.
    pub window_epochs: u64,
    pub final_weights: LossWeights,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            stage2_start: 500,
            stage3_start: 5000,
            stage4_start: 7000,
            ev_threshold: 0.6,
            ev_windows: 3,
            window_epochs: 100,
            final_weights: LossWeights {
                expert: 0.1,
                policy_gradient: 1.0,
                value: 0.5,
                boundary: 0.01,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurriculumConfig {
    pub scale_probability: f64,
    pub scale_range: [f64; 2],
    pub perturb_probability: PerturbProbability,
    pub amplitudes: Amplitudes,
    /// Object-position noise on contact frames, relative to `amplitudes.obj_pos`.
    pub contact_position_factor: f64,
    /// First epoch of curriculum stage 2.
    pub stage2_epoch: u64,
    /// Stage-2 amplitude multiplier ramps linearly from 1 to `amplitude_cap`.
    pub amplitude_cap: f64,
    pub ramp_epochs: u64,
    pub distill: DistillConfig,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        Self {
            scale_probability: 0.2,
            scale_range: [0.75, 1.5],
            perturb_probability: PerturbProbability::default(),
            amplitudes: Amplitudes::default(),
            contact_position_factor: 0.25,
            stage2_epoch: 10_000,
            amplitude_cap: 1.5,
            ramp_epochs: 2000,
            distill: DistillConfig::default(),
        }
    }
}

impl CurriculumConfig {
    pub fn validate(&self) -> Result<(), TrainingError> {
        let prob = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(TrainingError::Config(format!("{name} must be in [0, 1], got {p}")))
            }
        };
        prob("scale_probability", self.scale_probability)?;
        prob("perturb_probability.regrasp", self.perturb_probability.regrasp)?;
        prob("perturb_probability.other", self.perturb_probability.other)?;
        prob("contact_position_factor", self.contact_position_factor)?;
        let [lo, hi] = self.scale_range;
        if !(lo.is_finite() && hi.is_finite() && 0.0 < lo && lo <= hi) {
            return Err(TrainingError::Config(format!("scale_range [{lo}, {hi}] is not ordered and positive")));
        }
        let a = &self.amplitudes;
        for (name, v) in [
            ("dof", a.dof),
            ("dof_vel", a.dof_vel),
            ("obj_vel", a.obj_vel),
            ("obj_rot", a.obj_rot),
            ("obj_pos", a.obj_pos),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(TrainingError::Config(format!("amplitude {name} must be >= 0, got {v}")));
            }
        }
        if !(self.amplitude_cap.is_finite() && self.amplitude_cap >= 1.0) {
            return Err(TrainingError::Config(format!("amplitude_cap must be >= 1, got {}", self.amplitude_cap)));
        }
        let d = &self.distill;
        if !(d.stage2_start <= d.stage3_start && d.stage3_start <= d.stage4_start) {
            return Err(TrainingError::Config("distillation stage boundaries must be ordered".into()));
        }
        if d.stage2_start == d.stage3_start {
            return Err(TrainingError::Config("stage II must span at least one epoch".into()));
        }
        if d.ev_windows == 0 || d.window_epochs == 0 {
            return Err(TrainingError::Config("ev_windows and window_epochs must be positive".into()));
        }
        Ok(())
    }

    /// Curriculum stage and noise multiplier at `epoch`.
    pub fn stage_at(&self, epoch: u64) -> CurriculumStage {
        if epoch < self.stage2_epoch {
            return CurriculumStage {
                stage: 1,
                amplitude_multiplier: 1.0,
            };
        }
        let ramp = if self.ramp_epochs == 0 {
            1.0
        } else {
            ((epoch - self.stage2_epoch) as f64 / self.ramp_epochs as f64).min(1.0)
        };
        CurriculumStage {
            stage: 2,
            amplitude_multiplier: 1.0 + (self.amplitude_cap - 1.0) * ramp,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurriculumStage {
    pub stage: u8,
    pub amplitude_multiplier: f64,
}

impl CurriculumStage {
    pub fn one() -> Self {
        Self {
            stage: 1,
            amplitude_multiplier: 1.0,
        }
    }
}

/// Stage 1 keeps the nominal size; stage 2 rescales with the configured probability.
pub fn sample_object_scale<R: Rng + ?Sized>(cfg: &CurriculumConfig, rng: &mut R, stage: &CurriculumStage) -> f64 {
    if stage.stage < 2 {
        return 1.0;
    }
    if rng.gen::<f64>() < cfg.scale_probability {
        let [lo, hi] = cfg.scale_range;
        rng.gen_range(lo..=hi)
    } else {
        1.0
    }
}

/// A perturbed start state; the velocities are zero when no noise was applied.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbedState {
    pub frame: Frame,
    pub joint_velocities: Vec<f64>,
    #[serde(with = "crate::geom::serde_vec3")]
    pub object_velocity: Vec3,
    pub perturbed: bool,
}

fn symmetric<R: Rng + ?Sized>(rng: &mut R, a: f64) -> f64 {
    if a > 0.0 {
        rng.gen_range(-a..=a)
    } else {
        0.0
    }
}

fn random_unit<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    loop {
        let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Bounded zero-mean noise on a reference start frame.
///
/// Frames with any fingertip in contact get a quarter of the object-position
/// noise and rotate only about the world vertical; others get full 3D noise.
/// Hand keypoints and object keypoints are recomputed afterwards.
pub fn perturb_initial_state<R: Rng + ?Sized>(
    frame: &Frame,
    hand: &HandModel,
    obj: Option<&ObjectModel>,
    cfg: &CurriculumConfig,
    stage: &CurriculumStage,
    rng: &mut R,
) -> Result<PerturbedState, TrainingError> {
    let dof = frame.theta.len();
    let p = cfg.perturb_probability.for_phase(frame.phase);
    if !(rng.gen::<f64>() < p) {
        return Ok(PerturbedState {
            frame: frame.clone(),
            joint_velocities: vec![0.0; dof],
            object_velocity: Vec3::zeros(),
            perturbed: false,
        });
    }
    let m = stage.amplitude_multiplier;
    let a = &cfg.amplitudes;
    let mut theta: Vec<f64> = frame.theta.iter().map(|t| t + symmetric(rng, a.dof * m)).collect();
    hand.tree().clamp_to_limits(&mut theta);
    let joint_velocities = (0..dof).map(|_| symmetric(rng, a.dof_vel * m)).collect();
    let in_contact = frame.contact.iter().any(|&c| c);
    let mut object_velocity = Vec3::zeros();
    let object = match (frame.object, obj) {
        (Some(pose), Some(model)) => {
            let pos_amp = a.obj_pos * m * if in_contact { cfg.contact_position_factor } else { 1.0 };
            let offset = Vec3::new(symmetric(rng, pos_amp), symmetric(rng, pos_amp), symmetric(rng, pos_amp));
            let axis = if in_contact { Vec3::z() } else { random_unit(rng) };
            let spin = UnitQuat::from_axis_angle(&axis, symmetric(rng, a.obj_rot * m));
            object_velocity = Vec3::new(
                symmetric(rng, a.obj_vel * m),
                symmetric(rng, a.obj_vel * m),
                symmetric(rng, a.obj_vel * m),
            );
            Some((model, Pose::new(pose.position + offset, spin * pose.orientation)))
        }
        _ => None,
    };
    let out = Frame::build(hand, object, frame.wrist, theta, frame.contact.clone(), frame.phase)?;
    Ok(PerturbedState {
        frame: out,
        joint_velocities,
        object_velocity,
        perturbed: true,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DistillStage {
    I,
    II,
    III,
    IV,
}

impl DistillStage {
    pub fn label(&self) -> &'static str {
        match self {
            DistillStage::I => "I",
            DistillStage::II => "II",
            DistillStage::III => "III",
            DistillStage::IV => "IV",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub expert: f64,
    pub policy_gradient: f64,
    pub value: f64,
    pub boundary: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DistillState {
    pub epoch: u64,
    /// Explained variance per evaluation window, oldest first.
    #[serde(default)]
    pub ev_history: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistillStep {
    pub stage: DistillStage,
    pub teacher_probability: f64,
    pub weights: LossWeights,
    pub pg_gate_open: bool,
}

/// True once `windows` consecutive entries of `history` exceeded `threshold`.
/// The gate stays open afterwards.
pub fn ev_gate_open(history: &[f64], threshold: f64, windows: usize) -> bool {
    let mut run = 0;
    for &ev in history {
        run = if ev > threshold { run + 1 } else { 0 };
        if run >= windows {
            return true;
        }
    }
    false
}

pub fn distill_schedule(state: &DistillState, cfg: &DistillConfig) -> DistillStep {
    let e = state.epoch;
    let gate = ev_gate_open(&state.ev_history, cfg.ev_threshold, cfg.ev_windows);
    let expert_only = LossWeights {
        expert: 1.0,
        policy_gradient: 0.0,
        value: 0.0,
        boundary: 0.0,
    };
    if e < cfg.stage2_start {
        DistillStep {
            stage: DistillStage::I,
            teacher_probability: 1.0,
            weights: expert_only,
            pg_gate_open: gate,
        }
    } else if e < cfg.stage3_start {
        let span = (cfg.stage3_start - cfg.stage2_start) as f64;
        DistillStep {
            stage: DistillStage::II,
            teacher_probability: (cfg.stage3_start - e) as f64 / span,
            weights: expert_only,
            pg_gate_open: gate,
        }
    } else if e < cfg.stage4_start {
        DistillStep {
            stage: DistillStage::III,
            teacher_probability: 0.0,
            weights: LossWeights {
                expert: 1.0,
                policy_gradient: if gate { cfg.final_weights.policy_gradient } else { 0.0 },
                value: cfg.final_weights.value,
                boundary: 0.0,
            },
            pg_gate_open: gate,
        }
    } else {
        DistillStep {
            stage: DistillStage::IV,
            teacher_probability: 0.0,
            weights: cfg.final_weights,
            pg_gate_open: gate,
        }
    }
}

/// CSV rows `epoch,stage,teacher_prob,expert,policy_gradient,value,boundary`
/// for `epochs` in steps of `step`. The EV history visible at epoch `e` is the
/// prefix of `ev_history` covering the windows that ended by `e`.
pub fn schedule_csv(cfg: &DistillConfig, epochs: u64, step: u64, ev_history: &[f64]) -> String {
    let mut out = String::from("epoch,stage,teacher_prob,expert,policy_gradient,value,boundary\n");
    let step = step.max(1);
    let mut e = 0;
    while e <= epochs {
        let seen = ((e / cfg.window_epochs) as usize).min(ev_history.len());
        let s = distill_schedule(
            &DistillState {
                epoch: e,
                ev_history: ev_history[..seen].to_vec(),
            },
            cfg,
        );
        let w = s.weights;
        let _ = writeln!(
            out,
            "{e},{},{},{},{},{},{}",
            s.stage.label(),
            s.teacher_probability,
            w.expert,
            w.policy_gradient,
            w.value,
            w.boundary
        );
        e += step;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_examples() {
        let p = sampling_probabilities(&SamplingState {
            mean_rewards: vec![0.5, 1.0],
            lambda_s: 10.0,
        })
        .unwrap();
        assert!((p[0] - 1.0 / (1.0 + (-5.0f64).exp())).abs() < 1e-12);
        let u = sampling_probabilities(&SamplingState {
            mean_rewards: vec![0.1, 0.9, 0.4],
            lambda_s: 0.0,
        })
        .unwrap();
        assert!(u.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));
        assert!(sampling_probabilities(&SamplingState {
            mean_rewards: vec![],
            lambda_s: 1.0
        })
        .is_err());
    }

    #[test]
    fn schedule_examples() {
        let cfg = DistillConfig::default();
        let at = |epoch, ev: &[f64]| {
            distill_schedule(
                &DistillState {
                    epoch,
                    ev_history: ev.to_vec(),
                },
                &cfg,
            )
        };
        assert_eq!(at(0, &[]).stage, DistillStage::I);
        assert_eq!(at(0, &[]).teacher_probability, 1.0);
        assert_eq!(at(2750, &[]).teacher_probability, 0.5);
        assert_eq!(at(5000, &[0.7, 0.7, 0.7]).weights.policy_gradient, 1.0);
        assert_eq!(at(5000, &[0.7, 0.5, 0.7]).weights.policy_gradient, 0.0);
        assert_eq!(at(7000, &[]).weights, cfg.final_weights);
    }

    #[test]
    fn csv_dump_shape() {
        let csv = schedule_csv(&DistillConfig::default(), 8000, 500, &[]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 1 + 17);
        assert_eq!(lines[1], "0,I,1,1,0,0,0");
        assert!(lines[17].starts_with("8000,IV,0,0.1,1,0.5,0.01"));
    }
}
