use std::f64::consts::TAU;

use rand::Rng;

use super::{reverse_trajectory, Frame, Meta, Phase, Skill, SkillInputs, SynthConfig, SynthError, Trajectory};
use crate::geom::{
    lerp_pose, lerp_scalar, lerp_vec, parabola, sample_in_cone, unit_parameters, HandModel, Pose,
    UnitQuat, Vec3,
};
use crate::grasp::{
    contacts_rotatable_region, greedy_chain, retarget_grasp, transform_grasp, GraspConfiguration,
};
use crate::scene::{ground_penetration, hand_object_clearance};

fn meta(inputs: &SkillInputs<'_>, skill: Skill, fps: f64, grasps: Vec<usize>) -> Meta {
    Meta {
        fps,
        hand_model: inputs.hand.id().to_string(),
        object: Some(inputs.object.id.clone()),
        skills: vec![skill],
        seed: None,
        scale: inputs.object.scale(),
        grasps,
    }
}

fn object_frame(
    inputs: &SkillInputs<'_>,
    wrist: Pose,
    theta: Vec<f64>,
    object: Pose,
    contact: bool,
    phase: Phase,
) -> Result<Frame, SynthError> {
    Ok(Frame::build(
        inputs.hand,
        Some((inputs.object, object)),
        wrist,
        theta,
        vec![contact; inputs.hand.fingertip_count()],
        phase,
    )?)
}

/// A resting pose with a random planar position inside the workspace and a
/// random heading about the vertical.
fn random_placement<R: Rng + ?Sized>(
    cfg: &SynthConfig,
    inputs: &SkillInputs<'_>,
    rng: &mut R,
) -> Result<Pose, SynthError> {
    if inputs.stable.is_empty() {
        return Err(SynthError::NoStablePoses(inputs.object.id.clone()));
    }
    let h = inputs.stable[rng.gen_range(0..inputs.stable.len())].pose;
    let yaw = UnitQuat::from_axis_angle(&Vec3::z(), rng.gen::<f64>() * TAU);
    let xy = cfg.workspace.sample(rng);
    let p = yaw.rotate(&h.position);
    Ok(Pose::new(Vec3::new(p.x + xy.x, p.y + xy.y, p.z), yaw * h.orientation))
}

/// Moves `g` to a random spot on its own support height with a random heading.
fn random_planar_shift<R: Rng + ?Sized>(
    cfg: &SynthConfig,
    g: &GraspConfiguration,
    rng: &mut R,
) -> GraspConfiguration {
    let yaw = UnitQuat::from_axis_angle(&Vec3::z(), rng.gen::<f64>() * TAU);
    let xy = cfg.workspace.sample(rng);
    let target = Pose::new(
        Vec3::new(xy.x, xy.y, g.object_pose.position.z),
        yaw * g.object_pose.orientation,
    );
    retarget_grasp(g, &target)
}

fn random_free_pose<R: Rng + ?Sized>(cfg: &SynthConfig, rng: &mut R) -> Pose {
    let p = cfg.workspace.sample(rng);
    Pose::new(p, UnitQuat::random(rng))
}

/// Free Move: the bare hand between two random poses and finger configurations.
pub fn synth_free_move<R: Rng + ?Sized>(
    cfg: &SynthConfig,
    hand: &HandModel,
    rng: &mut R,
) -> Result<Trajectory, SynthError> {
    let w0 = random_free_pose(cfg, rng);
    let w1 = random_free_pose(cfg, rng);
    let th0 = hand.tree().random_angles(rng);
    let th1 = hand.tree().random_angles(rng);
    let frames = unit_parameters(cfg.clip_frames)
        .into_iter()
        .map(|u| {
            let theta = th0.iter().zip(&th1).map(|(a, b)| lerp_scalar(*a, *b, u)).collect();
            Frame::build(
                hand,
                None,
                lerp_pose(&w0, &w1, u),
                theta,
                vec![false; hand.fingertip_count()],
                Phase::FreeMove,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Trajectory {
        meta: Meta {
            fps: cfg.fps,
            hand_model: hand.id().to_string(),
            object: None,
            skills: vec![Skill::FreeMove],
            seed: None,
            scale: 1.0,
            grasps: Vec::new(),
        },
        frames,
    })
}

/// Approach from a cone-sampled wrist position to a grasp on a resting object.
pub(super) fn grasp_clip<R: Rng + ?Sized>(
    cfg: &SynthConfig,
    inputs: &SkillInputs<'_>,
    rng: &mut R,
    pool: &[usize],
    end: Option<&Frame>,
) -> Result<Trajectory, SynthError> {
    let hand = inputs.hand;
    let n = cfg.clip_frames;
    let window_start = n.saturating_sub(cfg.contact_window);
    if end.is_none() && inputs.stable.is_empty() {
        return Err(SynthError::NoStablePoses(inputs.object.id.clone()));
    }
    if end.is_none() && pool.is_empty() {
        return Err(SynthError::PoolTooSmall { needed: 1, got: 0 });
    }
    'attempt: for _ in 0..cfg.resample_budget {
        let (wrist_end, theta_end, obj_pose, used) = match end {
            Some(f) => {
                let obj_pose = f.object.ok_or_else(|| {
                    SynthError::UnsupportedChain("grasp boundary frame has no object".into())
                })?;
                (f.wrist, f.theta.clone(), obj_pose, Vec::new())
            }
            None => {
                let gi = pool[rng.gen_range(0..pool.len())];
                let target = random_placement(cfg, inputs, rng)?;
                let g_end = retarget_grasp(&inputs.grasps.grasps()[gi], &target);
                (g_end.wrist, g_end.theta, target, vec![gi])
            }
        };
        let end_joints = hand.keypoint_positions(&wrist_end, &theta_end)?;
        if ground_penetration(&end_joints) > 0.0 {
            continue;
        }
        let com = obj_pose.transform_point(&inputs.object.com());
        let axis = end_joints[hand.index_base_slot()] - com;
        let start = sample_in_cone(
            &wrist_end.position,
            &axis,
            cfg.cone.half_angle,
            cfg.cone.r_min,
            cfg.cone.r_max,
            rng,
        )?;
        let mut frames = Vec::with_capacity(n);
        for (t, u) in unit_parameters(n).into_iter().enumerate() {
            let wrist = Pose::new(lerp_vec(&start, &wrist_end.position, u), wrist_end.orientation);
            let theta = theta_end.iter().map(|th| lerp_scalar(0.0, *th, u)).collect();
            let f = object_frame(inputs, wrist, theta, obj_pose, t >= window_start, Phase::Grasp)?;
            if ground_penetration(&f.joints) > 0.0 {
                continue 'attempt;
            }
            frames.push(f);
        }
        return Ok(Trajectory {
            meta: meta(inputs, Skill::Grasp, cfg.fps, used),
            frames,
        });
    }
    Err(SynthError::BudgetExhausted {
        skill: Skill::Grasp,
        attempts: cfg.resample_budget,
    })
}

/// Grasp: the hand approaches and closes on an object at rest.
pub fn synth_grasp<R: Rng + ?Sized>(
    cfg: &SynthConfig,
    inputs: &SkillInputs<'_>,
    rng: &mut R,
) -> Result<Trajectory, SynthError> {
    let pool: Vec<usize> = (0..inputs.grasps.len()).collect();
    grasp_clip(cfg, inputs, rng, &pool, None)
}

/// Place: a time-reversed grasp.
pub fn synth_place<R: Rng + ?Sized>(
    cfg: &SynthConfig,
    inputs: &SkillInputs<'_>,
    rng: &mut R,
) -> Result<Trajectory, SynthError> {
    Ok(reverse_trajectory(&synth_grasp(cfg, inputs, rng)?, Skill::Place))
}

/// Frames a Move clip must start and/or end on exactly.
#[derive(Clone, Debug, Default)]
pub struct MoveBoundary {
    pub start: Option<Frame>,
    pub end: Option<Frame>,
}

/// Move: the object travels while the hand holds a fixed relative grasp.
pub fn synth_move<R: Rng + ?Sized>(
    cfg: &SynthConfig,
    inputs: &SkillInputs<'_>,
    rng: &mut R,
    boundary: &MoveBoundary,
) -> Result<Trajectory, SynthError> {
    let held = |f: &Frame| -> Result<(Pose, Pose), SynthError> {
        let obj = f.object.ok_or_else(|| {
            SynthError::UnsupportedChain("move boundary frame has no object".into())
        })?;
        Ok((obj, obj.relative_to(&f.wrist)))
    };
    let (rel, theta, used) = match (&boundary.start, &boundary.end) {
        (Some(f), _) | (None, Some(f)) => (held(f)?.1, f.theta.clone(), Vec::new()),
        (None, None) => {
            let gi = rng.gen_range(0..inputs.grasps.len());
            let g = &inputs.grasps.grasps()[gi];
            (g.wrist_in_object(), g.theta.clone(), vec![gi])
        }
    };
    if let (Some(s), Some(e)) = (&boundary.start, &boundary.end) {
        let (dt, dr) = held(s)?.1.distance_to(&held(e)?.1);
        let dtheta = s.theta.iter().zip(&e.theta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if dt > 1e-9 || dr > 1e-9 || dtheta > 1e-12 || s.theta.len() != e.theta.len() {
            return Err(SynthError::UnsupportedChain(
                "move start and end boundaries hold different grasps".into(),
            ));
        }
    }
    let init = match &boundary.start {
        Some(f) => held(f)?.0,
        None => random_free_pose(cfg, rng),
    };
    let fin = match &boundary.end {
        Some(f) => held(f)?.0,
        None => random_free_pose(cfg, rng),
    };
    let n = cfg.clip_frames;
    let mut frames = Vec::with_capacity(n);
    for (t, u) in unit_parameters(n).into_iter().enumerate() {
        let pinned = match (t, &boundary.start, &boundary.end) {
            (0, Some(f), _) => Some(f),
            (t, _, Some(f)) if t == n - 1 => Some(f),
            _ => None,
        };
        let frame = match pinned {
            Some(f) => Frame {
                contact: vec![true; inputs.hand.fingertip_count()],
                phase: Phase::Move,
                ..f.clone()
            },
            None => {
                let obj = lerp_pose(&init, &fin, u);
                object_frame(inputs, obj.compose(&rel), theta.clone(), obj, true, Phase::Move)?
            }
        };
        frames.push(frame);
    }
    Ok(Trajectory {
        meta: meta(inputs, Skill::Move, cfg.fps, used),
        frames,
    })
}

/// Frames to hold a keyframe reached by a rotation of `delta` radians.
pub fn replication_count(delta: f64, n_min: usize, frames_per_radian: f64) -> usize {
    let n = (frames_per_radian * delta.abs()).round();
    (n as usize).max(n_min)
}

/// Replication counts of a keyframe sequence given the angle gaps between
/// consecutive keyframes; the first keyframe is held `n_min` frames.
pub fn replication_counts(gaps: &[f64], n_min: usize, frames_per_radian: f64) -> Vec<usize> {
    std::iter::once(n_min)
        .chain(gaps.iter().map(|d| replication_count(*d, n_min, frames_per_radian)))
        .collect()
}

fn grasp_from_frame(f: &Frame) -> Option<GraspConfiguration> {
    Some(GraspConfiguration {
        id: None,
        wrist: f.wrist,
        theta: f.theta.clone(),
        joints: f.joints.clone(),
        object_pose: f.object?,
        object_keypoints: f.object_keypoints.clone(),
    })
}

/// Rotate with the wrist and fingers held still while the object turns about
/// its axis; `start` pins the first keyframe.
pub(super) fn rotate_clip<R: Rng + ?Sized>(
    cfg: &SynthConfig,
    inputs: &SkillInputs<'_>,
    rng: &mut R,
    start: Option<&Frame>,
) -> Result<Trajectory, SynthError> {
    let obj = inputs.object;
    let axis = match (obj.rotatable(), obj.axis()) {
        (Some(_), Some(a)) => a,
        _ => return Err(SynthError::NoRotatableRegion(obj.id.clone())),
    };
    let p = &cfg.rotate;
    let touches = |g: &GraspConfiguration| {
        contacts_rotatable_region(g, inputs.hand, obj, p.contact_epsilon, p.min_contacts)
            .unwrap_or(false)
    };
    let (base, used) = match start {
        Some(f) => {
            let g = grasp_from_frame(f).ok_or_else(|| {
                SynthError::UnsupportedChain("rotate boundary frame has no object".into())
            })?;
            if !touches(&g) {
                return Err(SynthError::NoRegionContact(obj.id.clone()));
            }
            (g, Vec::new())
        }
        None => {
            let eligible: Vec<usize> = (0..inputs.grasps.len())
                .filter(|&i| touches(&inputs.grasps.grasps()[i]))
                .collect();
            if eligible.is_empty() {
                return Err(SynthError::NoRegionContact(obj.id.clone()));
            }
            let gi = eligible[rng.gen_range(0..eligible.len())];
            (random_planar_shift(cfg, &inputs.grasps.grasps()[gi], rng), vec![gi])
        }
    };
    let mut poses = vec![base.object_pose];
    let mut gaps = Vec::new();
    for _ in 1..p.keyframes {
        let alpha = rng.gen_range(-p.max_step..=p.max_step);
        let prev = *poses.last().unwrap();
        let next = prev.compose(&Pose::from_rotation(UnitQuat::from_axis_angle(&axis, alpha)));
        gaps.push(prev.orientation.angle_to(&next.orientation));
        poses.push(next);
    }
    let counts = replication_counts(&gaps, p.n_min, p.frames_per_radian);
    let mut frames = Vec::with_capacity(counts.iter().sum());
    for (i, (pose, count)) in poses.iter().zip(&counts).enumerate() {
        let key = match (i, start) {
            (0, Some(f)) => Frame {
                contact: vec![true; inputs.hand.fingertip_count()],
                phase: Phase::Rotate,
                ..f.clone()
            },
            _ => object_frame(inputs, base.wrist, base.theta.clone(), *pose, true, Phase::Rotate)?,
        };
        frames.extend(std::iter::repeat(key).take(*count));
    }
    Ok(Trajectory {
        meta: meta(inputs, Skill::Rotate, cfg.fps, used),
        frames,
    })
}

/// Rotate (simple): keyframes turn the object about its axis, each held for
/// a number of frames proportional to the rotation reaching it.
pub fn synth_rotate_simple<R: Rng + ?Sized>(
    cfg: &SynthConfig,
    inputs: &SkillInputs<'_>,
    rng: &mut R,
) -> Result<Trajectory, SynthError> {
    rotate_clip(cfg, inputs, rng, None)
}

#[derive(Clone, Copy, PartialEq)]
enum Align {
    Wrist,
    Object,
}

fn chain_clip<R: Rng + ?Sized>(
    cfg: &SynthConfig,
    inputs: &SkillInputs<'_>,
    rng: &mut R,
    k: usize,
    align: Align,
) -> Result<Trajectory, SynthError> {
    let pool = inputs.grasps.grasps();
    if pool.len() < k + 1 {
        return Err(SynthError::PoolTooSmall {
            needed: k + 1,
            got: pool.len(),
        });
    }
    let start = rng.gen_range(0..pool.len());
    let chain = greedy_chain(pool, start, k, &cfg.metric);
    let first = random_planar_shift(cfg, &pool[start], rng);
    let (skill, phase, hold) = match align {
        Align::Wrist => (Skill::GeneralRotate, Phase::Rotate, cfg.general_rotate.hold_frames),
        Align::Object => (Skill::Regrasp, Phase::Regrasp, cfg.regrasp.hold_frames),
    };
    let mut frames = Vec::with_capacity(chain.len() * hold);
    for &gi in &chain {
        let g = &pool[gi];
        let aligned = match align {
            Align::Wrist => {
                let t = first.wrist.compose(&g.wrist.inverse());
                let mut a = transform_grasp(g, &t);
                a.wrist = first.wrist;
                a
            }
            Align::Object => retarget_grasp(g, &first.object_pose),
        };
        let key = object_frame(inputs, aligned.wrist, aligned.theta, aligned.object_pose, true, phase)?;
        frames.extend(std::iter::repeat(key).take(hold));
    }
    Ok(Trajectory {
        meta: meta(inputs, skill, cfg.fps, chain),
        frames,
    })
}

/// General rotate: a greedy nearest-grasp chain re-posed to share the first wrist pose.
pub fn synth_rotate_general<R: Rng + ?Sized>(
    cfg: &SynthConfig,
    inputs: &SkillInputs<'_>,
    rng: &mut R,
    k: usize,
) -> Result<Trajectory, SynthError> {
    chain_clip(cfg, inputs, rng, k, Align::Wrist)
}

/// Regrasp: the same chain re-posed to share the first object pose.
pub fn synth_regrasp<R: Rng + ?Sized>(
    cfg: &SynthConfig,
    inputs: &SkillInputs<'_>,
    rng: &mut R,
    k: usize,
) -> Result<Trajectory, SynthError> {
    chain_clip(cfg, inputs, rng, k, Align::Object)
}

/// Catch: the object flies ballistically into a still hand that closes on it.
pub fn synth_catch<R: Rng + ?Sized>(
    cfg: &SynthConfig,
    inputs: &SkillInputs<'_>,
    rng: &mut R,
) -> Result<Trajectory, SynthError> {
    let n = cfg.clip_frames;
    let window_start = n.saturating_sub(cfg.contact_window);
    let flight_time = (n - 1) as f64 / cfg.fps;
    let catch_zone = cfg.workspace.above(cfg.catch.min_catch_height)?;
    'attempt: for _ in 0..cfg.resample_budget {
        let gi = rng.gen_range(0..inputs.grasps.len());
        let end = Pose::new(catch_zone.sample(rng), UnitQuat::random(rng));
        let g_end = retarget_grasp(&inputs.grasps.grasps()[gi], &end);
        let start = random_free_pose(cfg, rng);
        let path = parabola(
            &start.position,
            &end.position,
            &start.orientation,
            &end.orientation,
            flight_time,
            cfg.catch.gravity,
            cfg.fps,
        )?;
        if path.len() != n {
            return Err(SynthError::Config(format!(
                "flight of {flight_time} s at {} fps yields {} frames, expected {n}",
                cfg.fps,
                path.len()
            )));
        }
        let mut frames = Vec::with_capacity(n);
        for (t, (u, obj)) in unit_parameters(n).into_iter().zip(path).enumerate() {
            let theta = g_end.theta.iter().map(|th| lerp_scalar(0.0, *th, u)).collect();
            let f = object_frame(inputs, g_end.wrist, theta, obj, t >= window_start, Phase::Catch)?;
            if t < window_start
                && hand_object_clearance(&f.joints, inputs.object, &obj) < cfg.catch.clearance_threshold
            {
                continue 'attempt;
            }
            frames.push(f);
        }
        return Ok(Trajectory {
            meta: meta(inputs, Skill::Catch, cfg.fps, vec![gi]),
            frames,
        });
    }
    Err(SynthError::BudgetExhausted {
        skill: Skill::Catch,
        attempts: cfg.resample_budget,
    })
}

/// Throw: a time-reversed catch.
pub fn synth_throw<R: Rng + ?Sized>(
    cfg: &SynthConfig,
    inputs: &SkillInputs<'_>,
    rng: &mut R,
) -> Result<Trajectory, SynthError> {
    Ok(reverse_trajectory(&synth_catch(cfg, inputs, rng)?, Skill::Throw))
}
