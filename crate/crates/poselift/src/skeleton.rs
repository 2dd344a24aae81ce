//! Joint model: skeleton layout, root-relative convention, and the
//! three-way joint grouping used to weight the temporal smoothness penalty.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// The three disjoint joint groups. Torso and head joints are predicted
/// with low error; leg and especially arm joints move faster and occlude
/// more, so their temporal derivatives get larger penalty weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointGroup {
    TorsoHead,
    LimbLeg,
    LimbArm,
}

impl JointGroup {
    pub const ALL: [JointGroup; 3] = [JointGroup::TorsoHead, JointGroup::LimbLeg, JointGroup::LimbArm];

    pub fn name(&self) -> &'static str {
        match self {
            JointGroup::TorsoHead => "torso_head",
            JointGroup::LimbLeg => "limb_leg",
            JointGroup::LimbArm => "limb_arm",
        }
    }

    pub fn parse(s: &str) -> Result<JointGroup> {
        match s {
            "torso_head" => Ok(JointGroup::TorsoHead),
            "limb_leg" => Ok(JointGroup::LimbLeg),
            "limb_arm" => Ok(JointGroup::LimbArm),
            other => Err(Error::InvalidArgument(format!("unknown joint group `{other}`"))),
        }
    }
}

/// On-disk form of a skeleton definition.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct SkeletonFile {
    joint_names: Vec<String>,
    root: String,
    groups: BTreeMap<String, Vec<String>>,
}

/// Joint layout plus the group assignment of every non-root joint.
/// Immutable after construction; safe to share across workers.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonSpec {
    joint_names: Vec<String>,
    root_index: usize,
    assignment: Vec<Option<JointGroup>>, // None exactly at the root
}

impl SkeletonSpec {
    pub fn new(
        joint_names: Vec<String>,
        root_index: usize,
        groups: &[(JointGroup, Vec<String>)],
    ) -> Result<Self> {
        if joint_names.is_empty() {
            return Err(Error::InvalidSkeleton("no joints".into()));
        }
        if root_index >= joint_names.len() {
            return Err(Error::InvalidSkeleton(format!(
                "root index {root_index} out of range for {} joints",
                joint_names.len()
            )));
        }
        let index_of: BTreeMap<&str, usize> = joint_names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();
        if index_of.len() != joint_names.len() {
            return Err(Error::InvalidSkeleton("duplicate joint names".into()));
        }

        let mut assignment: Vec<Option<JointGroup>> = vec![None; joint_names.len()];
        for (group, members) in groups {
            for name in members {
                let &idx = index_of.get(name.as_str()).ok_or_else(|| {
                    Error::InvalidSkeleton(format!("group member `{name}` is not a joint"))
                })?;
                if idx == root_index {
                    return Err(Error::InvalidSkeleton(format!(
                        "root joint `{name}` cannot belong to a group"
                    )));
                }
                if let Some(prev) = assignment[idx] {
                    return Err(Error::InvalidSkeleton(format!(
                        "joint `{name}` assigned to both {} and {}",
                        prev.name(),
                        group.name()
                    )));
                }
                assignment[idx] = Some(*group);
            }
        }
        for (i, slot) in assignment.iter().enumerate() {
            if i != root_index && slot.is_none() {
                return Err(Error::InvalidSkeleton(format!(
                    "joint `{}` is not assigned to any group",
                    joint_names[i]
                )));
            }
        }

        Ok(SkeletonSpec {
            joint_names,
            root_index,
            assignment,
        })
    }

    /// The default 17-joint skeleton. Hips, spine, thorax, neck, head and
    /// shoulders form the torso/head group; knees and ankles the leg group;
    /// elbows and wrists the arm group.
    pub fn default_17() -> SkeletonSpec {
        let names: Vec<String> = [
            "hip",
            "right_hip",
            "right_knee",
            "right_ankle",
            "left_hip",
            "left_knee",
            "left_ankle",
            "spine",
            "thorax",
            "neck",
            "head",
            "left_shoulder",
            "left_elbow",
            "left_wrist",
            "right_shoulder",
            "right_elbow",
            "right_wrist",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        let to_vec = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        SkeletonSpec::new(
            names,
            0,
            &[
                (
                    JointGroup::TorsoHead,
                    to_vec(&[
                        "right_hip",
                        "left_hip",
                        "spine",
                        "thorax",
                        "neck",
                        "head",
                        "left_shoulder",
                        "right_shoulder",
                    ]),
                ),
                (
                    JointGroup::LimbLeg,
                    to_vec(&["right_knee", "right_ankle", "left_knee", "left_ankle"]),
                ),
                (
                    JointGroup::LimbArm,
                    to_vec(&["left_elbow", "left_wrist", "right_elbow", "right_wrist"]),
                ),
            ],
        )
        .expect("built-in skeleton is valid")
    }

    pub fn n_joints(&self) -> usize {
        self.joint_names.len()
    }

    pub fn root_index(&self) -> usize {
        self.root_index
    }

    pub fn joint_names(&self) -> &[String] {
        &self.joint_names
    }

    pub fn group_of(&self, joint: usize) -> Option<JointGroup> {
        self.assignment.get(joint).copied().flatten()
    }

    /// Position of `joint` in the root-removed ordering.
    pub fn non_root_position(&self, joint: usize) -> Option<usize> {
        if joint == self.root_index || joint >= self.n_joints() {
            None
        } else if joint < self.root_index {
            Some(joint)
        } else {
            Some(joint - 1)
        }
    }

    /// Coordinate indices (into a root-removed flat pose of dimension
    /// `(n_joints - 1) * dim`) belonging to `group`. The three group masks
    /// partition all coordinate indices.
    pub fn group_mask(&self, group: JointGroup, dim: usize) -> Vec<usize> {
        let mut out = Vec::new();
        for joint in 0..self.n_joints() {
            if self.assignment[joint] == Some(group) {
                let pos = self.non_root_position(joint).expect("non-root joint");
                for axis in 0..dim {
                    out.push(pos * dim + axis);
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut groups: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for g in JointGroup::ALL {
            groups.insert(g.name().to_string(), Vec::new());
        }
        for (i, slot) in self.assignment.iter().enumerate() {
            if let Some(g) = slot {
                groups
                    .get_mut(g.name())
                    .expect("all groups present")
                    .push(self.joint_names[i].clone());
            }
        }
        let file = SkeletonFile {
            joint_names: self.joint_names.clone(),
            root: self.joint_names[self.root_index].clone(),
            groups,
        };
        serde_json::to_string_pretty(&file).expect("skeleton serializes")
    }

    pub fn from_json(text: &str) -> Result<SkeletonSpec> {
        let file: SkeletonFile = serde_json::from_str(text)?;
        let root_index = file
            .joint_names
            .iter()
            .position(|n| *n == file.root)
            .ok_or_else(|| Error::InvalidSkeleton(format!("root `{}` is not a joint", file.root)))?;
        let mut groups = Vec::new();
        for (name, members) in &file.groups {
            groups.push((JointGroup::parse(name)?, members.clone()));
        }
        SkeletonSpec::new(file.joint_names, root_index, &groups)
    }

    pub fn from_json_file(path: &std::path::Path) -> Result<SkeletonSpec> {
        SkeletonSpec::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Flat per-frame joint coordinates: 3D in millimeters, 2D in pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    pub coords: Vec<f64>,
    pub dim: usize,
}

impl Pose {
    pub fn new(coords: Vec<f64>, dim: usize) -> Result<Pose> {
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidArgument(format!("pose dim must be 2 or 3, got {dim}")));
        }
        if coords.len() % dim != 0 {
            return Err(Error::dim_mismatch(
                "Pose::new",
                format!("multiple of {dim}"),
                coords.len(),
            ));
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite("Pose::new"));
        }
        Ok(Pose { coords, dim })
    }

    pub fn n_joints(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn joint(&self, j: usize) -> &[f64] {
        &self.coords[j * self.dim..(j + 1) * self.dim]
    }
}

/// Subtracts the root joint from every joint and removes the root entry,
/// producing a root-relative pose of length `(n_joints - 1) * dim`.
pub fn root_center(pose: &Pose, spec: &SkeletonSpec) -> Result<Pose> {
    let centered = root_center_frame(&pose.coords, pose.dim, spec)?;
    Ok(Pose {
        coords: centered,
        dim: pose.dim,
    })
}

/// Slice-level form of [`root_center`], used by the data pipeline on raw
/// frame buffers.
pub fn root_center_frame(frame: &[f64], dim: usize, spec: &SkeletonSpec) -> Result<Vec<f64>> {
    if frame.len() != spec.n_joints() * dim {
        return Err(Error::dim_mismatch(
            "root_center",
            spec.n_joints() * dim,
            frame.len(),
        ));
    }
    let root = &frame[spec.root_index() * dim..(spec.root_index() + 1) * dim];
    let root = root.to_vec();
    let mut out = Vec::with_capacity((spec.n_joints() - 1) * dim);
    for j in 0..spec.n_joints() {
        if j == spec.root_index() {
            continue;
        }
        for axis in 0..dim {
            out.push(frame[j * dim + axis] - root[axis]);
        }
    }
    Ok(out)
}
