//! Regenerates the grasp-set and plan fixtures under `tests/fixtures/`.
//!
//! Grasps are built by placing the wrist around the object and curling each
//! finger until its tip meets the target surface.
//!
//!     cargo run -p hopkit --example gen_fixtures

use std::f64::consts::{PI, TAU};
use std::fs;
use std::path::PathBuf;

use hopkit::geom::{HandModel, Pose, UnitQuat, Vec3};
use hopkit::grasp::{GraspConfiguration, GraspSet};
use hopkit::scene::{ObjectModel, RotatableRegion};
use serde_json::json;

const DOF_PER_FINGER: usize = 9;
const KP_PER_FINGER: usize = 4;

/// Signed distance to whatever surface the fingertips should touch (object frame).
type Surface<'a> = Box<dyn Fn(&Vec3) -> f64 + 'a>;

fn hull_surface(obj: &ObjectModel) -> Surface<'_> {
    Box::new(move |p| obj.hull().signed_distance(p))
}

fn handle_surface(obj: &ObjectModel) -> Surface<'_> {
    let axis = obj.axis().unwrap();
    let region = obj.rotatable().unwrap().clone();
    Box::new(move |p| {
        let d = region.surface_distance(p, &axis);
        match &region {
            RotatableRegion::Cylinder {
                center,
                radius,
                half_length,
            } => {
                let v = p - center;
                let t = v.dot(&axis);
                let inside = t.abs() <= *half_length && (v - axis * t).norm() < *radius;
                if inside {
                    -d
                } else {
                    d
                }
            }
            RotatableRegion::Points { .. } => d,
        }
    })
}

/// Curls every finger of a MANO hand until its tip is closest to the surface.
fn close_fingers(
    hand: &HandModel,
    wrist: &Pose,
    object_pose: &Pose,
    surface: &Surface<'_>,
) -> Vec<f64> {
    let to_obj = object_pose.inverse();
    let mut theta = vec![0.0; hand.dof()];
    let fingers = hand.dof() / DOF_PER_FINGER;
    for f in 0..fingers {
        let mut best = (f64::INFINITY, 0.0);
        for step in 0..=180 {
            let flex = -0.2 + 1.8 * step as f64 / 180.0;
            for j in 0..3 {
                theta[f * DOF_PER_FINGER + 3 * j] = flex;
            }
            let kp = hand.keypoint_positions(wrist, &theta).unwrap();
            let tip = kp[hand.fingertip_slots()[f]];
            let mut cost = surface(&to_obj.transform_point(&tip)).abs();
            for p in &kp[f * KP_PER_FINGER..(f + 1) * KP_PER_FINGER] {
                cost += 10.0 * (-surface(&to_obj.transform_point(p)) - 0.003).max(0.0);
            }
            if cost < best.0 {
                best = (cost, flex);
            }
        }
        for j in 0..3 {
            theta[f * DOF_PER_FINGER + 3 * j] = best.1;
        }
    }
    theta
}

fn make_grasp(
    hand: &HandModel,
    obj: &ObjectModel,
    wrist: Pose,
    object_pose: Pose,
    surface: &Surface<'_>,
    id: String,
) -> GraspConfiguration {
    let theta = close_fingers(hand, &wrist, &object_pose, surface);
    let mut g = GraspConfiguration::from_state(hand, obj, wrist, theta, object_pose).unwrap();
    g.id = Some(id);
    g
}

/// Wrist pose whose palm faces `-outward`, fingers along `along`, palm
/// center roughly `standoff` from `contact`.
fn palm_facing(contact: Vec3, outward: Vec3, along: Vec3, standoff: f64) -> Pose {
    let z = outward.normalize();
    let x = (along - z * along.dot(&z)).normalize();
    let q = UnitQuat::from_frame_axes(&x, &z.cross(&x));
    Pose::new(contact + z * standoff - x * 0.05, q)
}

fn bottle(hand: &HandModel) -> GraspSet {
    let obj = ObjectModel::builtin("bottle").unwrap();
    let object_pose = Pose::from_translation(Vec3::new(0.1, 0.0, 0.0));
    let surface = hull_surface(&obj);
    let mut grasps = Vec::new();
    for (level, (z, count)) in [(0.07, 7), (0.12, 7), (0.175, 6)].into_iter().enumerate() {
        for k in 0..count {
            let phi = PI + (k as f64 - (count - 1) as f64 / 2.0) * 0.45 + 0.2 * level as f64;
            let out = Vec3::new(phi.cos(), phi.sin(), 0.0);
            let tangent = Vec3::z().cross(&out);
            let contact = object_pose.position + out * 0.035 + Vec3::z() * z;
            let wrist = palm_facing(contact, out, tangent, 0.02);
            grasps.push(make_grasp(
                hand,
                &obj,
                wrist,
                object_pose,
                &surface,
                format!("side-{level}-{k}"),
            ));
        }
    }
    GraspSet::new("mano", "bottle", grasps).unwrap()
}

fn cube(hand: &HandModel) -> GraspSet {
    let obj = ObjectModel::builtin("cube").unwrap();
    let object_pose = Pose::from_translation(Vec3::new(0.0, 0.0, 0.03));
    let surface = hull_surface(&obj);
    let grasps = (0..8)
        .map(|k| {
            let yaw = TAU * k as f64 / 8.0 + 0.1 * (k % 3) as f64;
            let along = Vec3::new(yaw.cos(), yaw.sin(), 0.0);
            let top = object_pose.position + Vec3::z() * 0.03;
            let wrist = palm_facing(top, Vec3::z(), along, 0.025 + 0.002 * k as f64);
            make_grasp(hand, &obj, wrist, object_pose, &surface, format!("top-{k}"))
        })
        .collect();
    GraspSet::new("mano", "cube", grasps).unwrap()
}

fn hammer(hand: &HandModel) -> GraspSet {
    let obj = ObjectModel::builtin("hammer").unwrap();
    let object_pose = Pose::from_translation(Vec3::new(0.0, 0.0, 0.1));
    let handle = handle_surface(&obj);
    let hull = hull_surface(&obj);
    let mut grasps = Vec::new();
    for (k, x) in [-0.12, -0.09, -0.06, -0.03, 0.0, 0.02].into_iter().enumerate() {
        let alpha = 0.3 * (k as f64 - 2.5);
        let out = Vec3::new(0.0, alpha.sin(), alpha.cos());
        let along = out.cross(&Vec3::x());
        let contact = object_pose.position + Vec3::new(x, 0.0, 0.0) + out * 0.015;
        let wrist = palm_facing(contact, out, along, 0.02);
        grasps.push(make_grasp(hand, &obj, wrist, object_pose, &handle, format!("handle-{k}")));
    }
    for k in 0..4 {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let along = Vec3::new(0.0, sign, 0.0);
        let top = object_pose.position + Vec3::new(0.12, 0.0, 0.06);
        let wrist = palm_facing(top, Vec3::z(), along, 0.02 + 0.01 * (k / 2) as f64);
        grasps.push(make_grasp(hand, &obj, wrist, object_pose, &hull, format!("head-{k}")));
    }
    GraspSet::new("mano", "hammer", grasps).unwrap()
}

fn quat_json(q: &UnitQuat) -> serde_json::Value {
    json!(q.to_array())
}

fn bottle_plan(set: &GraspSet) -> serde_json::Value {
    let g = set.get(0).unwrap();
    let p = g.wrist.position;
    let q = g.wrist.orientation;
    let out = {
        let r = p - g.object_pose.position;
        Vec3::new(r.x, r.y, 0.0).normalize()
    };
    let yaw = |deg: f64| UnitQuat::from_axis_angle(&Vec3::z(), deg.to_radians()) * q;
    let keypoints = [
        (1, p + out * 0.20 + Vec3::z() * 0.10, q, "start"),
        (2, p + out * 0.07 + Vec3::z() * 0.02, q, "approach"),
        (3, p, q, "grasp"),
        (4, p + Vec3::new(0.0, 0.0, 0.10), q, "transport"),
        (5, p + Vec3::new(0.05, 0.05, 0.15), yaw(5.0), "transport"),
        (6, p + Vec3::new(0.10, 0.10, 0.15), yaw(12.0), "transport"),
        (7, p + Vec3::new(0.15, 0.12, 0.05), yaw(18.0), "transport"),
        (8, p + Vec3::new(0.15, 0.12, 0.0), yaw(20.0), "release"),
        (9, p + Vec3::new(0.15, 0.12, 0.0) + out * 0.15 + Vec3::z() * 0.10, yaw(20.0), "end"),
    ];
    json!({
        "object": "bottle",
        "selected_grasp": 0,
        "grasp_index": 3,
        "release_index": 8,
        "keypoints": keypoints.iter().map(|(i, p, q, a)| json!({
            "index": i,
            "p": [p.x, p.y, p.z],
            "q": quat_json(q),
            "action": a,
        })).collect::<Vec<_>>(),
    })
}

fn main() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    fs::create_dir_all(&dir).unwrap();
    let hand = HandModel::builtin("mano").unwrap();
    let bottle_set = bottle(&hand);
    let write = |name: &str, text: String| {
        fs::write(dir.join(name), text + "\n").unwrap();
        println!("wrote {name}");
    };
    write("bottle_mano.json", bottle_set.to_json());
    write("cube_mano.json", cube(&hand).to_json());
    write("hammer_mano.json", hammer(&hand).to_json());
    write(
        "bottle_plan.json",
        serde_json::to_string_pretty(&bottle_plan(&bottle_set)).unwrap(),
    );
}
