use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{GeomError, Pose, UnitQuat, Vec3};

/// One node of a kinematic tree.
///
/// The joint frame sits at `offset` in its parent's frame and is then
/// rotated about each of `axes` in order by the corresponding angle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    pub name: String,
    pub parent: Option<usize>,
    #[serde(with = "super::serde_vec3")]
    pub offset: Vec3,
    #[serde(default, with = "super::serde_vec3_list")]
    pub axes: Vec<Vec3>,
    #[serde(default)]
    pub limits: Vec<[f64; 2]>,
}

/// Topologically sorted joints; joint 0 is the wrist root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Joint>", into = "Vec<Joint>")]
pub struct KinematicTree {
    joints: Vec<Joint>,
    dof_offsets: Vec<usize>,
    dof: usize,
}

impl KinematicTree {
    pub fn new(joints: Vec<Joint>) -> Result<Self, GeomError> {
        if joints.is_empty() {
            return Err(GeomError::InvalidTree("no joints".into()));
        }
        let mut dof_offsets = Vec::with_capacity(joints.len());
        let mut dof = 0;
        for (i, j) in joints.iter().enumerate() {
            match (i, j.parent) {
                (0, None) => {}
                (0, Some(_)) => {
                    return Err(GeomError::InvalidTree("joint 0 must be the root".into()))
                }
                (_, None) => {
                    return Err(GeomError::InvalidTree(format!(
                        "joint {i} ({}) has no parent",
                        j.name
                    )))
                }
                (_, Some(p)) if p >= i => {
                    return Err(GeomError::InvalidTree(format!(
                        "joint {i} ({}) has parent {p}, expected < {i}",
                        j.name
                    )))
                }
                _ => {}
            }
            if j.axes.len() > 3 {
                return Err(GeomError::InvalidTree(format!(
                    "joint {} has {} axes (max 3)",
                    j.name,
                    j.axes.len()
                )));
            }
            if j.axes.len() != j.limits.len() {
                return Err(GeomError::InvalidTree(format!(
                    "joint {} has {} axes but {} limits",
                    j.name,
                    j.axes.len(),
                    j.limits.len()
                )));
            }
            if let Some(a) = j.axes.iter().find(|a| (a.norm() - 1.0).abs() > 1e-9) {
                return Err(GeomError::InvalidTree(format!(
                    "joint {} axis {a:?} is not unit length",
                    j.name
                )));
            }
            if let Some(l) = j.limits.iter().find(|l| !(l[0] <= l[1])) {
                return Err(GeomError::InvalidTree(format!(
                    "joint {} limit {l:?} is not ordered",
                    j.name
                )));
            }
            if !j.offset.iter().all(|c| c.is_finite()) {
                return Err(GeomError::InvalidTree(format!(
                    "joint {} offset not finite",
                    j.name
                )));
            }
            dof_offsets.push(dof);
            dof += j.axes.len();
        }
        Ok(Self {
            joints,
            dof_offsets,
            dof,
        })
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn joint_count(&self) -> usize {
        self.joints.len()
    }

    pub fn dof(&self) -> usize {
        self.dof
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|j| j.name == name)
    }

    /// `(lo, hi)` per degree of freedom, in DoF order.
    pub fn limits(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        self.joints.iter().flat_map(|j| j.limits.iter().copied())
    }

    pub fn within_limits(&self, angles: &[f64], tol: f64) -> Result<(), usize> {
        for (i, (a, l)) in angles.iter().zip(self.limits()).enumerate() {
            if !(*a >= l[0] - tol && *a <= l[1] + tol) {
                return Err(i);
            }
        }
        Ok(())
    }

    pub fn clamp_to_limits(&self, angles: &mut [f64]) {
        for (a, l) in angles.iter_mut().zip(self.limits()) {
            *a = a.clamp(l[0], l[1]);
        }
    }

    /// Uniform angles within the joint limits.
    pub fn random_angles<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.limits()
            .map(|l| l[0] + rng.gen::<f64>() * (l[1] - l[0]))
            .collect()
    }

    /// World frame of every joint.
    pub fn joint_frames(&self, wrist: &Pose, angles: &[f64]) -> Result<Vec<Pose>, GeomError> {
        if angles.len() != self.dof {
            return Err(GeomError::AngleCount {
                expected: self.dof,
                got: angles.len(),
            });
        }
        let mut frames: Vec<Pose> = Vec::with_capacity(self.joints.len());
        for (i, j) in self.joints.iter().enumerate() {
            let parent = match j.parent {
                Some(p) => frames[p],
                None => *wrist,
            };
            let off = self.dof_offsets[i];
            let local_rot = j
                .axes
                .iter()
                .zip(&angles[off..off + j.axes.len()])
                .fold(UnitQuat::identity(), |q, (axis, &a)| {
                    q * UnitQuat::from_axis_angle(axis, a)
                });
            frames.push(parent.compose(&Pose::new(j.offset, local_rot)));
        }
        Ok(frames)
    }
}

impl TryFrom<Vec<Joint>> for KinematicTree {
    type Error = GeomError;

    fn try_from(joints: Vec<Joint>) -> Result<Self, GeomError> {
        KinematicTree::new(joints)
    }
}

impl From<KinematicTree> for Vec<Joint> {
    fn from(t: KinematicTree) -> Vec<Joint> {
        t.joints
    }
}

/// World positions of all joints of `tree`, root first.
pub fn forward_kinematics(
    tree: &KinematicTree,
    wrist: &Pose,
    angles: &[f64],
) -> Result<Vec<Vec3>, GeomError> {
    Ok(tree
        .joint_frames(wrist, angles)?
        .into_iter()
        .map(|f| f.position)
        .collect())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct HandModelFile {
    id: String,
    joints: KinematicTree,
    #[serde(default)]
    keypoints: Option<Vec<String>>,
    fingertips: Vec<String>,
    index_base: String,
}

/// A hand morphology: kinematic tree plus the named joints the synthesizers
/// need (exported keypoints, fingertips, first joint of the index finger).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "HandModelFile", into = "HandModelFile")]
pub struct HandModel {
    id: String,
    tree: KinematicTree,
    keypoints: Vec<usize>,
    /// Positions into `keypoints`, not joint indices.
    fingertips: Vec<usize>,
    index_base: usize,
}

impl HandModel {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn tree(&self) -> &KinematicTree {
        &self.tree
    }

    pub fn dof(&self) -> usize {
        self.tree.dof()
    }

    pub fn keypoint_count(&self) -> usize {
        self.keypoints.len()
    }

    pub fn fingertip_count(&self) -> usize {
        self.fingertips.len()
    }

    /// Positions of the fingertips inside the keypoint list.
    pub fn fingertip_slots(&self) -> &[usize] {
        &self.fingertips
    }

    /// Position of the index finger's first joint inside the keypoint list.
    pub fn index_base_slot(&self) -> usize {
        self.index_base
    }

    /// Hand keypoints `P^h` in world coordinates.
    pub fn keypoint_positions(&self, wrist: &Pose, angles: &[f64]) -> Result<Vec<Vec3>, GeomError> {
        let all = forward_kinematics(&self.tree, wrist, angles)?;
        Ok(self.keypoints.iter().map(|&i| all[i]).collect())
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Built-in morphologies: `mano` (45 finger DoF), `shadow` (20), `allegro` (16).
    pub fn builtin(id: &str) -> Option<Self> {
        let text = match id {
            "mano" => include_str!("../../assets/hands/mano.json"),
            "shadow" => include_str!("../../assets/hands/shadow.json"),
            "allegro" => include_str!("../../assets/hands/allegro.json"),
            _ => return None,
        };
        Some(Self::from_json(text).expect("built-in hand model is valid"))
    }
}

impl TryFrom<HandModelFile> for HandModel {
    type Error = GeomError;

    fn try_from(f: HandModelFile) -> Result<Self, GeomError> {
        let tree = f.joints;
        let lookup = |name: &str| {
            tree.joint_index(name)
                .ok_or_else(|| GeomError::InvalidTree(format!("unknown joint name {name:?}")))
        };
        let keypoints: Vec<usize> = match &f.keypoints {
            Some(names) => names.iter().map(|n| lookup(n)).collect::<Result<_, _>>()?,
            None => (1..tree.joint_count()).collect(),
        };
        let slot = |name: &str| -> Result<usize, GeomError> {
            let j = lookup(name)?;
            keypoints.iter().position(|&k| k == j).ok_or_else(|| {
                GeomError::InvalidTree(format!("joint {name:?} is not an exported keypoint"))
            })
        };
        let fingertips = f
            .fingertips
            .iter()
            .map(|n| slot(n))
            .collect::<Result<Vec<_>, _>>()?;
        let index_base = slot(&f.index_base)?;
        Ok(Self {
            id: f.id,
            tree,
            keypoints,
            fingertips,
            index_base,
        })
    }
}

impl From<HandModel> for HandModelFile {
    fn from(h: HandModel) -> Self {
        let name = |i: usize| h.tree.joints()[i].name.clone();
        HandModelFile {
            keypoints: Some(h.keypoints.iter().map(|&i| name(i)).collect()),
            fingertips: h.fingertips.iter().map(|&s| name(h.keypoints[s])).collect(),
            index_base: name(h.keypoints[h.index_base]),
            id: h.id,
            joints: h.tree,
        }
    }
}
