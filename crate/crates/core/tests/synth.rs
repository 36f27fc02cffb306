use hopkit::geom::{HandModel, Pose, UnitQuat, Vec3};
use hopkit::grasp::{grasp_distance, load_grasp_set, retarget_grasp, GraspSet, LoadMode};
use hopkit::scene::{hand_object_clearance, ObjectModel};
use hopkit::synth::{
    compose, replication_counts, synth_chain, synth_free_move, synth_move, synth_regrasp,
    synth_rotate_general, synth_rotate_simple, synthesize, MoveBoundary, Phase, Skill, SkillInputs,
    SynthConfig, SynthError, Trajectory,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

struct Fixture {
    hand: HandModel,
    obj: ObjectModel,
    grasps: GraspSet,
}

impl Fixture {
    fn new(object: &str) -> Self {
        let hand = HandModel::builtin("mano").unwrap();
        let obj = ObjectModel::builtin(object).unwrap();
        let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
            .join(format!("tests/fixtures/{object}_mano.json"));
        let grasps = load_grasp_set(path, &hand, &obj, LoadMode::Strict).unwrap().set;
        Fixture { hand, obj, grasps }
    }

    fn inputs(&self) -> SkillInputs<'_> {
        SkillInputs::new(&self.hand, &self.obj, &self.grasps).unwrap()
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn assert_valid(t: &Trajectory, f: &Fixture, cfg: &SynthConfig) {
    let obj = t.meta.object.as_ref().map(|_| &f.obj);
    let v = t.violations(&f.hand, obj, cfg.max_wrist_speed);
    assert!(v.is_empty(), "{:?}", &v[..v.len().min(3)]);
}

#[test]
fn free_move_endpoints_and_workspace() {
    let f = Fixture::new("cube");
    let cfg = SynthConfig::default();
    for seed in 0..1000 {
        let t = synth_free_move(&cfg, &f.hand, &mut rng(seed)).unwrap();
        assert_eq!(t.len(), 60);
        for fr in &t.frames {
            assert!(cfg.workspace.contains(&fr.wrist.position));
            assert!(fr.object.is_none() && fr.contact.iter().all(|c| !c));
        }
        if seed < 20 {
            assert_valid(&t, &f, &cfg);
            // replaying the draws gives the exact endpoints
            let mut r = rng(seed);
            let w0 = Pose::new(cfg.workspace.sample(&mut r), UnitQuat::random(&mut r));
            let w1 = Pose::new(cfg.workspace.sample(&mut r), UnitQuat::random(&mut r));
            let th0 = f.hand.tree().random_angles(&mut r);
            let th1 = f.hand.tree().random_angles(&mut r);
            assert_eq!(t.frames[0].wrist, w0);
            assert_eq!(t.frames[59].wrist, w1);
            assert_eq!(t.frames[0].theta, th0);
            assert_eq!(t.frames[59].theta, th1);
        }
    }
}

#[test]
fn grasp_clip_structure() {
    let f = Fixture::new("bottle");
    let inputs = f.inputs();
    let cfg = SynthConfig::default();
    for seed in 0..50 {
        let t = synthesize(Skill::Grasp, &cfg, &inputs, seed).unwrap();
        assert_valid(&t, &f, &cfg);
        let last = t.frames.last().unwrap();
        let obj = last.object.unwrap();
        assert!(t.frames.iter().all(|fr| fr.object == Some(obj)));
        let g_end = retarget_grasp(&f.grasps.grasps()[t.meta.grasps[0]], &obj);
        assert_eq!(last.wrist, g_end.wrist);
        assert_eq!(last.theta, g_end.theta);
        assert!(t.frames[0].theta.iter().all(|&x| x == 0.0));
        assert!(t.frames.iter().all(|fr| fr.wrist.orientation == g_end.wrist.orientation));
        for (i, fr) in t.frames.iter().enumerate() {
            assert_eq!(fr.contact.iter().all(|&c| c), i >= 54);
            assert_eq!(fr.phase, Phase::Grasp);
        }
        // the approach starts inside the cone around the grasped wrist
        let d = (t.frames[0].wrist.position - last.wrist.position).norm();
        assert!((0.15 - 1e-9..=0.35 + 1e-9).contains(&d));
    }
}

#[test]
fn grasp_never_penetrates_ground() {
    let f = Fixture::new("bottle");
    let inputs = f.inputs();
    let cfg = SynthConfig::default();
    let mut min_z = f64::INFINITY;
    for seed in 0..500 {
        let t = synthesize(Skill::Grasp, &cfg, &inputs, seed).unwrap();
        for fr in &t.frames {
            min_z = fr.joints.iter().map(|p| p.z).fold(min_z, f64::min);
        }
    }
    assert!(min_z >= 0.0, "min keypoint height {min_z}");
}

#[test]
fn place_is_reversed_grasp() {
    let f = Fixture::new("cube");
    let inputs = f.inputs();
    let cfg = SynthConfig::default();
    for seed in 0..100 {
        let g = synthesize(Skill::Grasp, &cfg, &inputs, seed).unwrap();
        let p = synthesize(Skill::Place, &cfg, &inputs, seed).unwrap();
        let n = g.len();
        assert_eq!(p.len(), n);
        for t in 0..n {
            let (a, b) = (&p.frames[t], &g.frames[n - 1 - t]);
            assert_eq!(a.wrist, b.wrist);
            assert_eq!(a.object, b.object);
            assert_eq!(a.theta, b.theta);
            assert_eq!(a.joints, b.joints);
            assert_eq!(a.phase, Phase::Place);
        }
        assert!(p.frames[0].contact.iter().all(|&c| c));
        assert!(p.frames[n - 1].contact.iter().all(|&c| !c));
        let back = hopkit::synth::reverse_trajectory(&p, Skill::Grasp);
        assert_eq!(back.frames, g.frames);
    }
}

#[test]
fn move_rigidity_and_boundaries() {
    let f = Fixture::new("bottle");
    let inputs = f.inputs();
    let cfg = SynthConfig::default();
    for seed in 0..100 {
        let t = synthesize(Skill::Move, &cfg, &inputs, seed).unwrap();
        assert_valid(&t, &f, &cfg);
        let rel0 = t.frames[0].wrist_in_object().unwrap();
        for fr in &t.frames {
            let (dt, dr) = fr.wrist_in_object().unwrap().distance_to(&rel0);
            assert!(dt < 1e-9 && dr < 1e-9);
            assert!(fr.contact.iter().all(|&c| c));
            assert_eq!(fr.theta, t.frames[0].theta);
        }
        // the object path endpoints are the sampled poses
        let mut r = rng(seed);
        use rand::Rng;
        let _gi = r.gen_range(0..f.grasps.len());
        let a = Pose::new(cfg.workspace.sample(&mut r), UnitQuat::random(&mut r));
        let b = Pose::new(cfg.workspace.sample(&mut r), UnitQuat::random(&mut r));
        assert_eq!(t.frames[0].object, Some(a));
        assert_eq!(t.frames[59].object, Some(b));
    }
    let grasp = synthesize(Skill::Grasp, &cfg, &inputs, 5).unwrap();
    let boundary = MoveBoundary {
        start: Some(grasp.frames.last().unwrap().clone()),
        end: None,
    };
    let m = synth_move(&cfg, &inputs, &mut rng(9), &boundary).unwrap();
    let (a, b) = (&m.frames[0], grasp.frames.last().unwrap());
    assert_eq!((a.wrist, a.object, &a.theta, &a.joints), (b.wrist, b.object, &b.theta, &b.joints));
}

#[test]
fn rotate_replication() {
    assert_eq!(replication_counts(&[0.5, 1.0, 2.0], 5, 40.0)[1..], [20, 40, 80]);
    assert_eq!(replication_counts(&[0.0], 5, 40.0), vec![5, 5]);
    let f = Fixture::new("hammer");
    let inputs = f.inputs();
    let mut cfg = SynthConfig::default();
    cfg.rotate.keyframes = 1;
    let t = synth_rotate_simple(&cfg, &inputs, &mut rng(1)).unwrap();
    assert_eq!(t.len(), 5);
    assert!(t.frames.windows(2).all(|w| w[0] == w[1]));
    cfg.rotate.keyframes = 4;
    for seed in 0..30 {
        let t = synth_rotate_simple(&cfg, &inputs, &mut rng(seed)).unwrap();
        assert_valid(&t, &f, &cfg);
        assert!(f.grasps.grasps()[t.meta.grasps[0]].id.as_deref().unwrap().starts_with("handle"));
        // run-length decode the keyframes and recheck every count
        let mut runs: Vec<(Pose, usize)> = Vec::new();
        for fr in &t.frames {
            assert_eq!(fr.wrist, t.frames[0].wrist);
            assert_eq!(fr.theta, t.frames[0].theta);
            match runs.last_mut() {
                Some((p, n)) if *p == fr.object.unwrap() => *n += 1,
                _ => runs.push((fr.object.unwrap(), 1)),
            }
        }
        assert_eq!(runs.len(), 4);
        assert_eq!(runs[0].1, 5);
        for w in runs.windows(2) {
            let delta = w[0].0.orientation.angle_to(&w[1].0.orientation);
            assert!(delta <= 60f64.to_radians() + 1e-9);
            assert_eq!(w[1].1, ((40.0 * delta).round() as usize).max(5));
            // the turn is about the object axis, through the object origin
            let rel = w[0].0.relative_to(&w[1].0);
            assert!(rel.position.norm() < 1e-12);
            let (axis, angle) = rel.orientation.axis_angle();
            if angle > 1e-6 {
                assert!(axis.cross(&Vec3::x()).norm() < 1e-6);
            }
        }
    }
    let bottle = Fixture::new("cube");
    assert!(matches!(
        synth_rotate_simple(&cfg, &bottle.inputs(), &mut rng(0)),
        Err(SynthError::NoRotatableRegion(_))
    ));
}

fn greedy_oracle(f: &Fixture, start: usize, k: usize) -> Vec<usize> {
    let g = f.grasps.grasps();
    let w = SynthConfig::default().metric;
    let mut chain = vec![start];
    while chain.len() < k + 1 {
        let cur = *chain.last().unwrap();
        let mut best = (usize::MAX, f64::INFINITY);
        for j in 0..g.len() {
            if chain.contains(&j) {
                continue;
            }
            let d = grasp_distance(&g[cur], &g[j], &w);
            if d < best.1 {
                best = (j, d);
            }
        }
        chain.push(best.0);
    }
    chain
}

#[test]
fn general_rotate_and_regrasp_chains() {
    let f = Fixture::new("cube");
    let inputs = f.inputs();
    let cfg = SynthConfig::default();
    for seed in 0..40 {
        let gr = synth_rotate_general(&cfg, &inputs, &mut rng(seed), 3).unwrap();
        let rg = synth_regrasp(&cfg, &inputs, &mut rng(seed), 3).unwrap();
        assert_valid(&gr, &f, &cfg);
        assert_valid(&rg, &f, &cfg);
        assert_eq!(gr.meta.grasps, greedy_oracle(&f, gr.meta.grasps[0], 3));
        assert_eq!(gr.meta.grasps, rg.meta.grasps);
        assert_eq!(gr.len(), 4 * 15);
        for fr in &gr.frames {
            let (dt, dr) = fr.wrist.distance_to(&gr.frames[0].wrist);
            assert!(dt < 1e-9 && dr < 1e-9);
            assert_eq!(fr.phase, Phase::Rotate);
        }
        for fr in &rg.frames {
            assert_eq!(fr.object, rg.frames[0].object);
            assert_eq!(fr.phase, Phase::Regrasp);
        }
    }
    let single = synth_rotate_general(&cfg, &inputs, &mut rng(3), 0).unwrap();
    assert_eq!(single.len(), 15);
    assert!(single.frames.windows(2).all(|w| w[0] == w[1]));
    let hold = synth_regrasp(&cfg, &inputs, &mut rng(3), 0).unwrap();
    assert!(hold.frames.windows(2).all(|w| w[0] == w[1]));
    assert!(matches!(
        synth_regrasp(&cfg, &inputs, &mut rng(3), 8),
        Err(SynthError::PoolTooSmall { needed: 9, got: 8 })
    ));
}

#[test]
fn catch_and_throw() {
    let f = Fixture::new("bottle");
    let inputs = f.inputs();
    let cfg = SynthConfig::default();
    let dt = 1.0 / cfg.fps;
    for seed in 0..60 {
        let c = synthesize(Skill::Catch, &cfg, &inputs, seed).unwrap();
        let t = synthesize(Skill::Throw, &cfg, &inputs, seed).unwrap();
        assert_valid(&c, &f, &cfg);
        let n = c.len();
        assert_eq!(n, 60);
        let zs: Vec<f64> = c.frames.iter().map(|fr| fr.object.unwrap().position.z).collect();
        for w in zs.windows(3) {
            assert!((w[2] - 2.0 * w[1] + w[0] + 9.81 * dt * dt).abs() < 1e-9);
        }
        let last = c.frames.last().unwrap();
        let g_end = retarget_grasp(&f.grasps.grasps()[c.meta.grasps[0]], &last.object.unwrap());
        assert_eq!(last.wrist, g_end.wrist);
        assert_eq!(last.theta, g_end.theta);
        for fr in &c.frames[..n - cfg.contact_window] {
            assert!(hand_object_clearance(&fr.joints, &f.obj, &fr.object.unwrap()) >= -0.005);
            assert!(fr.contact.iter().all(|&x| !x));
        }
        for k in 0..n {
            assert_eq!(t.frames[k].wrist, c.frames[n - 1 - k].wrist);
            assert_eq!(t.frames[k].object, c.frames[n - 1 - k].object);
            assert_eq!(t.frames[k].theta, c.frames[n - 1 - k].theta);
        }
        let tz: Vec<f64> = t.frames.iter().map(|fr| fr.object.unwrap().position.z).collect();
        for w in tz.windows(3) {
            assert!((w[2] - 2.0 * w[1] + w[0] + 9.81 * dt * dt).abs() < 1e-9);
        }
        assert!(t.frames[0].contact.iter().all(|&x| x));
        assert!(t.frames[n - 1].contact.iter().all(|&x| !x));
    }
}

#[test]
fn compose_rules() {
    let f = Fixture::new("bottle");
    let inputs = f.inputs();
    let cfg = SynthConfig::default();
    let a = synthesize(Skill::Grasp, &cfg, &inputs, 1).unwrap();
    assert_eq!(compose(std::slice::from_ref(&a)).unwrap(), a);
    let chain = synth_chain(&cfg, &inputs, &[Skill::Grasp, Skill::Move, Skill::Place], &mut rng(4)).unwrap();
    assert_eq!(chain.len(), 3 * 60 - 2);
    assert_eq!(chain.meta.skills, vec![Skill::Grasp, Skill::Move, Skill::Place]);
    assert_valid(&chain, &f, &cfg);
    let rel = chain.frames[59].wrist_in_object().unwrap();
    for fr in &chain.frames[59..119] {
        let (dt, dr) = fr.wrist_in_object().unwrap().distance_to(&rel);
        assert!(dt < 1e-9 && dr < 1e-9);
    }
    let mut b = synthesize(Skill::Move, &cfg, &inputs, 2).unwrap();
    let end = a.frames.last().unwrap().clone();
    b.frames[0] = end.clone();
    assert!(compose(&[a.clone(), b.clone()]).is_ok());
    b.frames[0].wrist.position += Vec3::new(0.02, 0.0, 0.0);
    assert!(matches!(
        compose(&[a, b]),
        Err(SynthError::BoundaryMismatch { index: 1, .. })
    ));
}

#[test]
fn rotate_chain_on_hammer() {
    let f = Fixture::new("hammer");
    let inputs = f.inputs();
    let cfg = SynthConfig::default();
    for seed in 0..10 {
        let skills = [Skill::Grasp, Skill::Move, Skill::Rotate, Skill::Move, Skill::Place];
        let t = synth_chain(&cfg, &inputs, &skills, &mut rng(seed)).unwrap();
        assert_valid(&t, &f, &cfg);
        let last = t.frames.last().unwrap();
        assert!(last.contact.iter().all(|&c| !c));
        assert!(hopkit::scene::ground_penetration(&last.object_keypoints) < 1e-9);
    }
    let bad = [Skill::Grasp, Skill::Rotate, Skill::Place];
    assert!(matches!(
        synth_chain(&cfg, &inputs, &bad, &mut rng(0)),
        Err(SynthError::UnsupportedChain(_))
    ));
}

#[test]
fn synthesis_is_deterministic() {
    let f = Fixture::new("bottle");
    let inputs = f.inputs();
    let cfg = SynthConfig::default();
    for skill in [Skill::FreeMove, Skill::Grasp, Skill::Place, Skill::Move, Skill::Rotate, Skill::GeneralRotate, Skill::Catch, Skill::Throw, Skill::Regrasp] {
        let a = synthesize(skill, &cfg, &inputs, 77).unwrap();
        let b = synthesize(skill, &cfg, &inputs, 77).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap(),
            "{skill}"
        );
        assert_valid(&a, &f, &cfg);
    }
}

