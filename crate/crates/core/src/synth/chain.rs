use rand::Rng;

use super::skills::{grasp_clip, rotate_clip, synth_move, MoveBoundary};
use super::{compose, reverse_trajectory, Frame, Phase, Skill, SkillInputs, SynthConfig, SynthError, Trajectory};
use crate::geom::{Pose, UnitQuat, Vec3};
use crate::grasp::contacts_rotatable_region;
use crate::scene::ground_penetration;

/// A held object set down on a random resting pose, with the hand above ground,
/// together with a Place clip that leaves from it.
fn resting_end_frame<R: Rng + ?Sized>(
    cfg: &SynthConfig,
    inputs: &SkillInputs<'_>,
    rng: &mut R,
    rel: &Pose,
    theta: &[f64],
) -> Result<(Frame, Trajectory), SynthError> {
    for _ in 0..cfg.resample_budget {
        let h = inputs.stable[rng.gen_range(0..inputs.stable.len())].pose;
        let xy = cfg.workspace.sample(rng);
        let obj = Pose::new(
            Vec3::new(h.position.x + xy.x, h.position.y + xy.y, h.position.z),
            h.orientation,
        );
        let f = Frame::build(
            inputs.hand,
            Some((inputs.object, obj)),
            obj.compose(rel),
            theta.to_vec(),
            vec![true; inputs.hand.fingertip_count()],
            Phase::Move,
        )?;
        if ground_penetration(&f.joints) > 0.0 {
            continue;
        }
        match grasp_clip(cfg, inputs, rng, &[], Some(&f)) {
            Ok(g) => return Ok((f, reverse_trajectory(&g, Skill::Place))),
            Err(SynthError::BudgetExhausted { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(SynthError::BudgetExhausted {
        skill: Skill::Move,
        attempts: cfg.resample_budget,
    })
}

/// Synthesizes a multi-skill demonstration whose clips are pinned to each
/// other's boundary frames, then stitches them.
///
/// Supported: an optional leading Grasp, then any mix of Move and Rotate,
/// optionally ending with Place right after a Move or the Grasp. A Move directly before Place ends with the
/// object at rest so the Place can start there.
pub fn synth_chain<R: Rng + ?Sized>(
    cfg: &SynthConfig,
    inputs: &SkillInputs<'_>,
    skills: &[Skill],
    rng: &mut R,
) -> Result<Trajectory, SynthError> {
    cfg.validate()?;
    if skills.is_empty() {
        return Err(SynthError::Empty);
    }
    if inputs.stable.is_empty() {
        return Err(SynthError::NoStablePoses(inputs.object.id.clone()));
    }
    let mut pool: Vec<usize> = (0..inputs.grasps.len()).collect();
    if skills.contains(&Skill::Rotate) {
        let p = &cfg.rotate;
        pool.retain(|&i| {
            contacts_rotatable_region(
                &inputs.grasps.grasps()[i],
                inputs.hand,
                inputs.object,
                p.contact_epsilon,
                p.min_contacts,
            )
            .unwrap_or(false)
        });
        if pool.is_empty() {
            return Err(SynthError::NoRegionContact(inputs.object.id.clone()));
        }
    }
    let mut clips: Vec<Trajectory> = Vec::with_capacity(skills.len());
    let mut last: Option<Frame> = None;
    let mut pending_place: Option<Trajectory> = None;
    for (i, &skill) in skills.iter().enumerate() {
        let next = skills.get(i + 1).copied();
        if i > 0 && skills[i - 1] == Skill::Place {
            return Err(SynthError::UnsupportedChain("place must be the last skill".into()));
        }
        if skill == Skill::Place && i > 0 && !matches!(skills[i - 1], Skill::Move | Skill::Grasp) {
            return Err(SynthError::UnsupportedChain(
                "place must follow a move or a grasp".into(),
            ));
        }
        let clip = match skill {
            Skill::Grasp if last.is_none() => grasp_clip(cfg, inputs, rng, &pool, None)?,
            Skill::Move => {
                let mut used = Vec::new();
                let start = match &last {
                    Some(f) => f.clone(),
                    None => {
                        let gi = pool[rng.gen_range(0..pool.len())];
                        used.push(gi);
                        let g = &inputs.grasps.grasps()[gi];
                        let obj = Pose::new(cfg.workspace.sample(rng), UnitQuat::random(rng));
                        Frame::build(
                            inputs.hand,
                            Some((inputs.object, obj)),
                            obj.compose(&g.wrist_in_object()),
                            g.theta.clone(),
                            vec![true; inputs.hand.fingertip_count()],
                            Phase::Move,
                        )?
                    }
                };
                let end = if next == Some(Skill::Place) {
                    let rel = start.wrist_in_object().expect("held frame has an object");
                    let (f, place) = resting_end_frame(cfg, inputs, rng, &rel, &start.theta)?;
                    pending_place = Some(place);
                    Some(f)
                } else {
                    None
                };
                let boundary = MoveBoundary {
                    start: Some(start),
                    end,
                };
                let mut m = synth_move(cfg, inputs, rng, &boundary)?;
                m.meta.grasps = used;
                m
            }
            Skill::Rotate => rotate_clip(cfg, inputs, rng, last.as_ref())?,
            Skill::Place if pending_place.is_some() => pending_place.take().unwrap(),
            Skill::Place => {
                let g = grasp_clip(cfg, inputs, rng, &pool, last.as_ref())?;
                reverse_trajectory(&g, Skill::Place)
            }
            other => {
                return Err(SynthError::UnsupportedChain(format!(
                    "{other} cannot appear at position {i}"
                )))
            }
        };
        last = clip.frames.last().cloned();
        clips.push(clip);
    }
    compose(&clips)
}
