use std::f64::consts::PI;

use hopkit::geom::{HandModel, Pose, UnitQuat, Vec3};
use hopkit::grasp::{load_grasp_set, LoadMode};
use hopkit::scene::ObjectModel;
use hopkit::synth::{synthesize, Frame, Phase, Skill, SkillInputs, SynthConfig};
use hopkit::training::{
    distill_schedule, perturb_initial_state, sample_index, sample_object_scale,
    sampling_probabilities, schedule_csv, CurriculumConfig, CurriculumStage, DistillConfig,
    DistillStage, DistillState, SamplingState,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn bottle_grasp() -> (HandModel, ObjectModel, Vec<Frame>) {
    let hand = HandModel::builtin("mano").unwrap();
    let obj = ObjectModel::builtin("bottle").unwrap();
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/bottle_mano.json");
    let grasps = load_grasp_set(path, &hand, &obj, LoadMode::Strict).unwrap().set;
    let inputs = SkillInputs::new(&hand, &obj, &grasps).unwrap();
    let t = synthesize(Skill::Grasp, &SynthConfig::default(), &inputs, 11).unwrap();
    (hand.clone(), obj.clone(), t.frames)
}

fn always() -> CurriculumConfig {
    let mut cfg = CurriculumConfig::default();
    cfg.perturb_probability.regrasp = 1.0;
    cfg.perturb_probability.other = 1.0;
    cfg
}

#[test]
fn object_scale_by_stage() {
    let cfg = CurriculumConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let one = CurriculumStage::one();
    assert!((0..1000).all(|_| sample_object_scale(&cfg, &mut rng, &one) == 1.0));
    let two = cfg.stage_at(cfg.stage2_epoch);
    let n = 100_000;
    let mut scaled = 0;
    for _ in 0..n {
        let s = sample_object_scale(&cfg, &mut rng, &two);
        assert!((0.75..=1.5).contains(&s));
        if s != 1.0 {
            scaled += 1;
        }
    }
    let frac = scaled as f64 / n as f64;
    assert!((frac - 0.2).abs() < 0.01, "{frac}");
    let mut never = cfg.clone();
    never.scale_probability = 0.0;
    assert!((0..1000).all(|_| sample_object_scale(&never, &mut rng, &two) == 1.0));
}

#[test]
fn stage_ramp() {
    let cfg = CurriculumConfig::default();
    assert_eq!(cfg.stage_at(0).stage, 1);
    assert_eq!(cfg.stage_at(9_999).amplitude_multiplier, 1.0);
    assert_eq!(cfg.stage_at(10_000).amplitude_multiplier, 1.0);
    assert_eq!(cfg.stage_at(11_000).amplitude_multiplier, 1.25);
    assert_eq!(cfg.stage_at(12_000).amplitude_multiplier, 1.5);
    assert_eq!(cfg.stage_at(50_000).amplitude_multiplier, 1.5);
}

#[test]
fn zero_probability_leaves_frame_alone() {
    let (hand, obj, frames) = bottle_grasp();
    let mut cfg = CurriculumConfig::default();
    cfg.perturb_probability.other = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for f in &frames {
        let p = perturb_initial_state(f, &hand, Some(&obj), &cfg, &CurriculumStage::one(), &mut rng).unwrap();
        assert_eq!(&p.frame, f);
        assert!(!p.perturbed);
        assert!(p.joint_velocities.iter().all(|&v| v == 0.0));
    }
}

#[test]
fn finger_noise_is_bounded_and_uniform() {
    let (hand, _, _) = bottle_grasp();
    let limits: Vec<[f64; 2]> = hand.tree().limits().collect();
    let mid: Vec<f64> = limits.iter().map(|l| 0.5 * (l[0] + l[1])).collect();
    let frame = Frame::build(&hand, None, Pose::new(Vec3::new(0.0, 0.0, 0.3), UnitQuat::IDENTITY), mid.clone(), vec![false; 5], Phase::FreeMove).unwrap();
    let cfg = always();
    for stage in [CurriculumStage::one(), cfg.stage_at(20_000)] {
        let amp = PI / 8.0 * stage.amplitude_multiplier;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (mut max, mut sum, mut count) = (0.0f64, 0.0, 0usize);
        let mut vel_max = 0.0f64;
        for _ in 0..10_000 {
            let p = perturb_initial_state(&frame, &hand, None, &cfg, &stage, &mut rng).unwrap();
            assert!(hand.tree().within_limits(&p.frame.theta, 0.0).is_ok());
            assert!(p.frame.issues(&hand, None).is_empty());
            for (i, (a, b)) in p.frame.theta.iter().zip(&mid).enumerate() {
                let d = (a - b).abs();
                max = max.max(d);
                // only joints wide enough that clamping never kicks in
                if limits[i][1] - limits[i][0] >= 2.0 * amp {
                    sum += d;
                    count += 1;
                }
            }
            vel_max = p.joint_velocities.iter().fold(vel_max, |m, v| m.max(v.abs()));
        }
        assert!(max <= amp + 1e-12);
        assert!(count > 0);
        let mean = sum / count as f64;
        assert!((mean - amp / 2.0).abs() < 0.01 * amp, "mean {mean} vs {}", amp / 2.0);
        assert!(vel_max <= 0.1 * stage.amplitude_multiplier + 1e-12);
    }
}

#[test]
fn object_noise_depends_on_contact() {
    let (hand, obj, frames) = bottle_grasp();
    let cfg = always();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let free = &frames[0];
    let held = &frames[59];
    assert!(free.contact.iter().all(|c| !c) && held.contact.iter().all(|&c| c));
    let mut tilted = false;
    for _ in 0..2000 {
        let p = perturb_initial_state(held, &hand, Some(&obj), &cfg, &CurriculumStage::one(), &mut rng).unwrap();
        let (o0, o1) = (held.object.unwrap(), p.frame.object.unwrap());
        let d = o1.position - o0.position;
        assert!(d.iter().all(|c| c.abs() <= 0.005 + 1e-12));
        let (axis, angle) = (o1.orientation * o0.orientation.inverse()).axis_angle();
        assert!(angle <= 0.02 + 1e-12);
        if angle > 1e-9 {
            assert!(axis.cross(&Vec3::z()).norm() < 1e-9);
        }
        // the object's tilt from vertical is unchanged
        let up0 = o0.orientation.rotate(&Vec3::z()).z;
        let up1 = o1.orientation.rotate(&Vec3::z()).z;
        assert!((up0 - up1).abs() < 1e-12);
        assert!(p.frame.issues(&hand, Some(&obj)).is_empty());
        assert!(p.object_velocity.iter().all(|c| c.abs() <= 0.02));

        let q = perturb_initial_state(free, &hand, Some(&obj), &cfg, &CurriculumStage::one(), &mut rng).unwrap();
        let (o0, o1) = (free.object.unwrap(), q.frame.object.unwrap());
        assert!((o1.position - o0.position).iter().all(|c| c.abs() <= 0.02 + 1e-12));
        let (axis, angle) = (o1.orientation * o0.orientation.inverse()).axis_angle();
        assert!(angle <= 0.02 + 1e-12);
        if angle > 1e-3 && axis.z.abs() < 0.9 {
            tilted = true;
        }
    }
    assert!(tilted, "non-contact frames should get off-axis rotation noise");
}

#[test]
fn regrasp_frames_use_their_own_probability() {
    let (hand, obj, frames) = bottle_grasp();
    let mut f = frames[59].clone();
    f.phase = Phase::Regrasp;
    let cfg = CurriculumConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 20_000;
    let hits = (0..n)
        .filter(|_| perturb_initial_state(&f, &hand, Some(&obj), &cfg, &CurriculumStage::one(), &mut rng).unwrap().perturbed)
        .count();
    assert!((hits as f64 / n as f64 - 0.5).abs() < 0.015);
    let hits = (0..n)
        .filter(|_| perturb_initial_state(&frames[59], &hand, Some(&obj), &cfg, &CurriculumStage::one(), &mut rng).unwrap().perturbed)
        .count();
    assert!((hits as f64 / n as f64 - 0.3).abs() < 0.015);
}

#[test]
fn teacher_probability_is_continuous_and_non_increasing() {
    let cfg = DistillConfig::default();
    let mut prev = 1.0;
    for epoch in 0..10_000 {
        let s = distill_schedule(&DistillState { epoch, ev_history: vec![] }, &cfg);
        assert!(s.teacher_probability <= prev);
        assert!(prev - s.teacher_probability <= 1.0 / 4500.0 + 1e-12);
        prev = s.teacher_probability;
    }
    let stage = |epoch| distill_schedule(&DistillState { epoch, ev_history: vec![] }, &cfg).stage;
    assert_eq!(stage(499), DistillStage::I);
    assert_eq!(stage(500), DistillStage::II);
    assert_eq!(stage(4999), DistillStage::II);
    assert_eq!(stage(5000), DistillStage::III);
    assert_eq!(stage(7000), DistillStage::IV);
}

#[test]
fn policy_gradient_gate() {
    let cfg = DistillConfig::default();
    let pg = |h: &[f64]| distill_schedule(&DistillState { epoch: 6000, ev_history: h.to_vec() }, &cfg).weights.policy_gradient;
    assert_eq!(pg(&[0.7, 0.7, 0.7]), 1.0);
    assert_eq!(pg(&[0.7, 0.5, 0.7]), 0.0);
    assert_eq!(pg(&[0.6, 0.7, 0.7]), 0.0);
    assert_eq!(pg(&[0.7, 0.7, 0.7, 0.2]), 1.0);
    assert_eq!(pg(&[0.1, 0.61, 0.9, 0.65]), 1.0);
    let early = distill_schedule(&DistillState { epoch: 100, ev_history: vec![0.9; 5] }, &cfg);
    assert_eq!(early.weights.policy_gradient, 0.0);
    let csv = schedule_csv(&cfg, 7000, 100, &[0.7; 100]);
    assert!(csv.lines().any(|l| l.starts_with("5000,III,0,1,1,0.5,0")));
}

#[test]
fn sampling_hits_hard_clips_more() {
    let p = sampling_probabilities(&SamplingState { mean_rewards: vec![0.2, 0.9, 0.5], lambda_s: 10.0 }).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut counts = [0usize; 3];
    let n = 100_000;
    for _ in 0..n {
        counts[sample_index(&p, &mut rng)] += 1;
    }
    for (c, q) in counts.iter().zip(&p) {
        assert!((*c as f64 / n as f64 - q).abs() < 0.01);
    }
}

proptest! {
    #[test]
    fn softmax_properties(r in prop::collection::vec(-5.0..5.0f64, 1..20), lambda in 0.0..50.0f64, shift in -100.0..100.0f64) {
        let p = sampling_probabilities(&SamplingState { mean_rewards: r.clone(), lambda_s: lambda }).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // order reverses that of the mean rewards
        for i in 0..r.len() {
            for j in 0..r.len() {
                if r[i] < r[j] && lambda > 0.0 && lambda * (r[j] - r[i]) > 1e-9 {
                    prop_assert!(p[i] > p[j]);
                }
            }
        }
        let shifted: Vec<f64> = r.iter().map(|x| x + shift).collect();
        let ps = sampling_probabilities(&SamplingState { mean_rewards: shifted, lambda_s: lambda }).unwrap();
        for (a, b) in p.iter().zip(&ps) {
            prop_assert!((a - b).abs() < 1e-9);
        }
        let mut rev = r.clone();
        rev.reverse();
        let pr = sampling_probabilities(&SamplingState { mean_rewards: rev, lambda_s: lambda }).unwrap();
        for (a, b) in p.iter().zip(pr.iter().rev()) {
            prop_assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn equal_rewards_are_uniform(v in -3.0..3.0f64, n in 1usize..30, lambda in 0.0..100.0f64) {
        let p = sampling_probabilities(&SamplingState { mean_rewards: vec![v; n], lambda_s: lambda }).unwrap();
        for x in p {
            prop_assert!((x - 1.0 / n as f64).abs() < 1e-15);
        }
    }
}
