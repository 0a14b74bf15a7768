//! 24-joint kinematic body model: forward kinematics, linear blend skinning
//! over a small surrogate mesh, and the joint partition used by the
//! region-specific position metrics.
//!
//! The skeleton is a fixed humanoid (~1.7 m stature) shipped as a versioned
//! JSON data file; prediction and ground truth always share it.

use crate::error::{Error, Result};
use crate::rotmath::{rot6d_to_matrix, v_add, v_cross, v_norm, v_scale, v_sub, Rot6D, RotMat, Vec3};
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

pub const JOINT_COUNT: usize = 24;

/// Joint indices in the fixed skeleton order (Pelvis = 0 .. Right Hand = 23).
pub mod joints {
    pub const PELVIS: usize = 0;
    pub const LEFT_HIP: usize = 1;
    pub const RIGHT_HIP: usize = 2;
    pub const SPINE1: usize = 3;
    pub const LEFT_KNEE: usize = 4;
    pub const RIGHT_KNEE: usize = 5;
    pub const SPINE2: usize = 6;
    pub const LEFT_ANKLE: usize = 7;
    pub const RIGHT_ANKLE: usize = 8;
    pub const SPINE3: usize = 9;
    pub const LEFT_FOOT: usize = 10;
    pub const RIGHT_FOOT: usize = 11;
    pub const NECK: usize = 12;
    pub const LEFT_COLLAR: usize = 13;
    pub const RIGHT_COLLAR: usize = 14;
    pub const HEAD: usize = 15;
    pub const LEFT_SHOULDER: usize = 16;
    pub const RIGHT_SHOULDER: usize = 17;
    pub const LEFT_ELBOW: usize = 18;
    pub const RIGHT_ELBOW: usize = 19;
    pub const LEFT_WRIST: usize = 20;
    pub const RIGHT_WRIST: usize = 21;
    pub const LEFT_HAND: usize = 22;
    pub const RIGHT_HAND: usize = 23;
}

/// Kinematic tree: per-joint parent (root sentinel -1) and rest offsets
/// from the parent joint, in meters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KinematicTree {
    pub parent: Vec<i64>,
    pub rest_offset: Vec<Vec3>,
    pub joint_names: Vec<String>,
}

impl KinematicTree {
    pub fn parent_of(&self, j: usize) -> Option<usize> {
        let p = self.parent[j];
        (p >= 0).then_some(p as usize)
    }

    pub fn validate(&self) -> Result<()> {
        if self.parent.len() != JOINT_COUNT
            || self.rest_offset.len() != JOINT_COUNT
            || self.joint_names.len() != JOINT_COUNT
        {
            return Err(Error::DataShapeMismatch(format!(
                "kinematic tree must have {JOINT_COUNT} joints"
            )));
        }
        if self.parent[0] != -1 || self.rest_offset[0] != [0.0; 3] {
            return Err(Error::DataShapeMismatch(
                "root must have sentinel parent and zero offset".to_string(),
            ));
        }
        for (j, &p) in self.parent.iter().enumerate().skip(1) {
            if p < 0 || p as usize >= j {
                return Err(Error::DataShapeMismatch(format!(
                    "joint {j} parent {p} breaks topological order"
                )));
            }
        }
        Ok(())
    }

    /// Joint positions in the rest pose (identity rotations, zero root).
    pub fn rest_positions(&self) -> Vec<Vec3> {
        let mut pos = vec![[0.0; 3]; JOINT_COUNT];
        for j in 1..JOINT_COUNT {
            let p = self.parent[j] as usize;
            pos[j] = v_add(pos[p], self.rest_offset[j]);
        }
        pos
    }
}

/// One body configuration: global root translation plus 24 joint rotations
/// in the 6D encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub trans: Vec3,
    pub rot: Vec<Rot6D>,
}

impl Pose {
    pub fn identity() -> Pose {
        Pose {
            trans: [0.0; 3],
            rot: vec![Rot6D::IDENTITY; JOINT_COUNT],
        }
    }
}

/// Surrogate mesh: rest-pose vertices with per-joint skinning weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SkinnedMesh {
    pub vertices: Vec<Vec3>,
    pub weights: Vec<Vec<f64>>,
}

impl SkinnedMesh {
    pub fn validate(&self) -> Result<()> {
        if self.vertices.len() != self.weights.len() {
            return Err(Error::DataShapeMismatch(
                "vertex/weight count mismatch".to_string(),
            ));
        }
        for (i, w) in self.weights.iter().enumerate() {
            if w.len() != JOINT_COUNT {
                return Err(Error::DataShapeMismatch(format!(
                    "vertex {i} weight row has {} entries",
                    w.len()
                )));
            }
            let sum: f64 = w.iter().sum();
            if (sum - 1.0).abs() > 1e-9 || w.iter().any(|&x| x < 0.0) {
                return Err(Error::DataShapeMismatch(format!(
                    "vertex {i} weights must be non-negative and sum to 1 (sum {sum})"
                )));
            }
        }
        Ok(())
    }
}

/// Skeleton plus surrogate mesh, as stored in the versioned data file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BodyModel {
    pub format_version: u32,
    #[serde(flatten)]
    pub tree: KinematicTree,
    #[serde(flatten)]
    pub mesh: SkinnedMesh,
}

static BUILTIN: OnceLock<BodyModel> = OnceLock::new();

impl BodyModel {
    /// The skeleton shipped with the crate (`data/skeleton.json`).
    pub fn builtin() -> &'static BodyModel {
        BUILTIN.get_or_init(|| {
            let model: BodyModel = serde_json::from_str(include_str!("../data/skeleton.json"))
                .expect("embedded skeleton.json is valid");
            model.tree.validate().expect("embedded skeleton tree");
            model.mesh.validate().expect("embedded skeleton mesh");
            model
        })
    }

    pub fn load(path: &std::path::Path) -> Result<BodyModel> {
        let text = std::fs::read_to_string(path)?;
        let model: BodyModel =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("skeleton file: {e}")))?;
        model.tree.validate()?;
        model.mesh.validate()?;
        Ok(model)
    }

    /// Procedural construction: hard-coded humanoid offsets and a 120-vertex
    /// mesh placed along the bones. This is the generator for the shipped
    /// data file; `builtin()` is the one used at runtime.
    pub fn procedural() -> BodyModel {
        let tree = humanoid_tree();
        let mesh = procedural_mesh(&tree);
        BodyModel {
            format_version: 1,
            tree,
            mesh,
        }
    }
}

fn humanoid_tree() -> KinematicTree {
    let names = [
        "Pelvis",
        "Left Hip",
        "Right Hip",
        "Spine1",
        "Left Knee",
        "Right Knee",
        "Spine2",
        "Left Ankle",
        "Right Ankle",
        "Spine3",
        "Left Foot",
        "Right Foot",
        "Neck",
        "Left Collar",
        "Right Collar",
        "Head",
        "Left Shoulder",
        "Right Shoulder",
        "Left Elbow",
        "Right Elbow",
        "Left Wrist",
        "Right Wrist",
        "Left Hand",
        "Right Hand",
    ];
    let parent: Vec<i64> = vec![
        -1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21,
    ];
    // Z-up, body facing +x, T-pose with arms along +/-y. ~1.7 m stature.
    let rest_offset: Vec<Vec3> = vec![
        [0.0, 0.0, 0.0],
        [0.0, 0.09, -0.06],
        [0.0, -0.09, -0.06],
        [0.0, 0.0, 0.11],
        [0.0, 0.0, -0.42],
        [0.0, 0.0, -0.42],
        [0.0, 0.0, 0.12],
        [0.0, 0.0, -0.42],
        [0.0, 0.0, -0.42],
        [0.0, 0.0, 0.12],
        [0.13, 0.0, -0.06],
        [0.13, 0.0, -0.06],
        [0.0, 0.0, 0.14],
        [0.0, 0.07, 0.10],
        [0.0, -0.07, 0.10],
        [0.0, 0.0, 0.12],
        [0.0, 0.11, 0.03],
        [0.0, -0.11, 0.03],
        [0.0, 0.26, 0.0],
        [0.0, -0.26, 0.0],
        [0.0, 0.25, 0.0],
        [0.0, -0.25, 0.0],
        [0.0, 0.08, 0.0],
        [0.0, -0.08, 0.0],
    ];
    KinematicTree {
        parent,
        rest_offset,
        joint_names: names.iter().map(|s| s.to_string()).collect(),
    }
}

/// 5 vertices per bone (23 bones) plus 5 around the pelvis = 120 vertices,
/// each weighted by inverse distance to its two nearest joints.
fn procedural_mesh(tree: &KinematicTree) -> SkinnedMesh {
    let rest = tree.rest_positions();
    let mut vertices: Vec<Vec3> = Vec::with_capacity(120);
    let radius = 0.05;
    for j in 1..JOINT_COUNT {
        let p = tree.parent[j] as usize;
        let a = rest[p];
        let b = rest[j];
        let axis = v_sub(b, a);
        let axis_n = v_norm(axis);
        let dir = if axis_n > 1e-12 {
            v_scale(axis, 1.0 / axis_n)
        } else {
            [0.0, 0.0, 1.0]
        };
        // Any unit vector perpendicular to the bone.
        let seed = if dir[0].abs() < 0.9 {
            [1.0, 0.0, 0.0]
        } else {
            [0.0, 1.0, 0.0]
        };
        let u = {
            let c = v_cross(dir, seed);
            v_scale(c, 1.0 / v_norm(c))
        };
        let w = v_cross(dir, u);
        for k in 0..5 {
            let frac = 0.1 + 0.2 * k as f64;
            let angle = 2.0 * std::f64::consts::PI * k as f64 / 5.0;
            let radial = v_add(
                v_scale(u, radius * angle.cos()),
                v_scale(w, radius * angle.sin()),
            );
            vertices.push(v_add(v_add(a, v_scale(axis, frac)), radial));
        }
    }
    for k in 0..5 {
        let angle = 2.0 * std::f64::consts::PI * k as f64 / 5.0;
        vertices.push(v_add(
            rest[0],
            [0.1 * angle.cos(), 0.1 * angle.sin(), 0.02],
        ));
    }

    let weights = vertices
        .iter()
        .map(|&v| {
            let mut dists: Vec<(usize, f64)> = rest
                .iter()
                .enumerate()
                .map(|(j, &p)| (j, v_norm(v_sub(v, p))))
                .collect();
            dists.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
            let (j0, d0) = dists[0];
            let (j1, d1) = dists[1];
            let w0 = 1.0 / (d0 + 1e-6);
            let w1 = 1.0 / (d1 + 1e-6);
            let mut row = vec![0.0; JOINT_COUNT];
            row[j0] = w0 / (w0 + w1);
            row[j1] = w1 / (w0 + w1);
            row
        })
        .collect();

    SkinnedMesh { vertices, weights }
}

/// Forward kinematics: world positions and orientations for every joint.
///
/// `position[root] = pose.trans`; each child's position is its parent's
/// position plus the parent orientation applied to the rest offset.
pub fn forward_kinematics(
    tree: &KinematicTree,
    pose: &Pose,
) -> Result<(Vec<Vec3>, Vec<RotMat>)> {
    if pose.rot.len() != JOINT_COUNT {
        return Err(Error::DataShapeMismatch(format!(
            "pose has {} rotations, expected {JOINT_COUNT}",
            pose.rot.len()
        )));
    }
    let mut positions = vec![[0.0; 3]; JOINT_COUNT];
    let mut orientations = vec![RotMat::IDENTITY; JOINT_COUNT];
    positions[0] = pose.trans;
    orientations[0] = rot6d_to_matrix(&pose.rot[0])?;
    for j in 1..JOINT_COUNT {
        let p = tree.parent[j] as usize;
        let local = rot6d_to_matrix(&pose.rot[j])?;
        positions[j] = v_add(positions[p], orientations[p].apply(tree.rest_offset[j]));
        orientations[j] = orientations[p].mul(&local);
    }
    Ok((positions, orientations))
}

/// Linear blend skinning: each vertex is the weight-blended image of its
/// rest position under the per-joint rigid transforms from FK.
pub fn skin_vertices(tree: &KinematicTree, pose: &Pose, mesh: &SkinnedMesh) -> Result<Vec<Vec3>> {
    let (positions, orientations) = forward_kinematics(tree, pose)?;
    let rest = tree.rest_positions();
    let mut out = Vec::with_capacity(mesh.vertices.len());
    for (v, wrow) in mesh.vertices.iter().zip(&mesh.weights) {
        let mut acc = [0.0; 3];
        for (j, &w) in wrow.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let moved = v_add(positions[j], orientations[j].apply(v_sub(*v, rest[j])));
            acc = v_add(acc, v_scale(moved, w));
        }
        out.push(acc);
    }
    Ok(out)
}

/// Disjoint cover of the 23 non-pelvis joints: lower body is hips, knees,
/// ankles, and feet; upper body is everything else.
pub fn joint_partition() -> (Vec<usize>, Vec<usize>) {
    use joints::*;
    let lower = vec![
        LEFT_HIP,
        RIGHT_HIP,
        LEFT_KNEE,
        RIGHT_KNEE,
        LEFT_ANKLE,
        RIGHT_ANKLE,
        LEFT_FOOT,
        RIGHT_FOOT,
    ];
    let upper: Vec<usize> = (1..JOINT_COUNT).filter(|j| !lower.contains(j)).collect();
    (upper, lower)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rotmath::{matrix_to_rot6d, quat_to_matrix, random_rotation, Quat};

    fn rot6d_about_z(angle: f64) -> Rot6D {
        matrix_to_rot6d(&quat_to_matrix(&Quat::from_axis_angle(
            [0.0, 0.0, 1.0],
            angle,
        )))
    }

    #[test]
    fn builtin_matches_procedural() {
        let built = BodyModel::builtin();
        let proc_model = BodyModel::procedural();
        assert_eq!(
            serde_json::to_string(built).unwrap(),
            serde_json::to_string(&proc_model).unwrap()
        );
        assert_eq!(built.mesh.vertices.len(), 120);
    }

    #[test]
    fn identity_fk_is_cumulative_offsets() {
        let model = BodyModel::builtin();
        let pose = Pose::identity();
        let (pos, orient) = forward_kinematics(&model.tree, &pose).unwrap();
        let rest = model.tree.rest_positions();
        for j in 0..JOINT_COUNT {
            assert_eq!(pos[j], rest[j]);
            assert!(orient[j].frobenius_dist(&RotMat::IDENTITY) < 1e-15);
        }
    }

    #[test]
    fn root_rotation_rotates_chain() {
        // Analog of the hand-rotated two-joint chain: with identity locals,
        // every joint lands at R_root * rest_position.
        let model = BodyModel::builtin();
        let mut pose = Pose::identity();
        pose.rot[0] = rot6d_about_z(std::f64::consts::FRAC_PI_2);
        let (pos, _) = forward_kinematics(&model.tree, &pose).unwrap();
        let root_mat = rot6d_to_matrix(&pose.rot[0]).unwrap();
        for (j, &rest) in model.tree.rest_positions().iter().enumerate() {
            let expect = root_mat.apply(rest);
            let d = v_norm(v_sub(pos[j], expect));
            assert!(d < 1e-12, "joint {j}: {d}");
        }
        // Spot check: a point offset along +x maps to +y under a 90 deg z-turn.
        let mapped = root_mat.apply([1.0, 0.0, 0.0]);
        assert!(v_norm(v_sub(mapped, [0.0, 1.0, 0.0])) < 1e-12);
    }

    #[test]
    fn translation_shifts_all_joints() {
        let model = BodyModel::builtin();
        let mut pose = Pose::identity();
        pose.rot[5] = rot6d_about_z(0.7);
        let (base, _) = forward_kinematics(&model.tree, &pose).unwrap();
        pose.trans = [0.5, 0.0, 0.0];
        let (shifted, _) = forward_kinematics(&model.tree, &pose).unwrap();
        for j in 0..JOINT_COUNT {
            let d = v_sub(shifted[j], base[j]);
            assert!(v_norm(v_sub(d, [0.5, 0.0, 0.0])) < 1e-12);
        }
    }

    #[test]
    fn fk_global_rotation_equivariance() {
        let model = BodyModel::builtin();
        for seed in 0..20u64 {
            let mut pose = Pose::identity();
            for j in 0..JOINT_COUNT {
                pose.rot[j] = matrix_to_rot6d(&random_rotation(seed * 100 + j as u64));
            }
            let (base, _) = forward_kinematics(&model.tree, &pose).unwrap();
            let extra = random_rotation(seed + 7777);
            let mut rotated = pose.clone();
            rotated.rot[0] =
                matrix_to_rot6d(&extra.mul(&rot6d_to_matrix(&pose.rot[0]).unwrap()));
            let (got, _) = forward_kinematics(&model.tree, &rotated).unwrap();
            for j in 0..JOINT_COUNT {
                let expect = extra.apply(base[j]);
                assert!(v_norm(v_sub(got[j], expect)) < 1e-9, "seed {seed} joint {j}");
            }
        }
    }

    #[test]
    fn skinning_identity_pose_is_rest() {
        let model = BodyModel::builtin();
        let verts = skin_vertices(&model.tree, &Pose::identity(), &model.mesh).unwrap();
        for (got, want) in verts.iter().zip(&model.mesh.vertices) {
            assert!(v_norm(v_sub(*got, *want)) < 1e-12);
        }
    }

    #[test]
    fn skinning_single_weight_follows_joint() {
        let model = BodyModel::builtin();
        let mut mesh = model.mesh.clone();
        // Pin vertex 0 fully to the left knee.
        let mut row = vec![0.0; JOINT_COUNT];
        row[joints::LEFT_KNEE] = 1.0;
        mesh.weights[0] = row;
        let mut pose = Pose::identity();
        pose.rot[joints::LEFT_HIP] = rot6d_about_z(0.9);
        pose.trans = [0.1, 0.2, 0.3];
        let verts = skin_vertices(&model.tree, &pose, &mesh).unwrap();
        let (pos, orient) = forward_kinematics(&model.tree, &pose).unwrap();
        let rest = model.tree.rest_positions();
        let expect = v_add(
            pos[joints::LEFT_KNEE],
            orient[joints::LEFT_KNEE].apply(v_sub(mesh.vertices[0], rest[joints::LEFT_KNEE])),
        );
        assert!(v_norm(v_sub(verts[0], expect)) < 1e-12);
    }

    #[test]
    fn skinning_half_half_is_midpoint() {
        let model = BodyModel::builtin();
        let (ja, jb) = (joints::LEFT_ELBOW, joints::LEFT_WRIST);
        let mut pose = Pose::identity();
        pose.rot[joints::LEFT_SHOULDER] = rot6d_about_z(0.5);
        pose.rot[joints::LEFT_ELBOW] = rot6d_about_z(-0.4);

        let single = |j: usize| {
            let mut mesh = model.mesh.clone();
            let mut row = vec![0.0; JOINT_COUNT];
            row[j] = 1.0;
            mesh.weights[0] = row;
            skin_vertices(&model.tree, &pose, &mesh).unwrap()[0]
        };
        let a = single(ja);
        let b = single(jb);

        let mut mesh = model.mesh.clone();
        let mut row = vec![0.0; JOINT_COUNT];
        row[ja] = 0.5;
        row[jb] = 0.5;
        mesh.weights[0] = row;
        let blended = skin_vertices(&model.tree, &pose, &mesh).unwrap()[0];
        let mid = v_scale(v_add(a, b), 0.5);
        assert!(v_norm(v_sub(blended, mid)) < 1e-9);
    }

    #[test]
    fn partition_covers_23_joints() {
        let (upper, lower) = joint_partition();
        assert!(lower.contains(&joints::LEFT_KNEE));
        assert!(upper.contains(&joints::RIGHT_WRIST));
        assert_eq!(upper.len() + lower.len(), 23);
        assert!(!upper.contains(&joints::PELVIS) && !lower.contains(&joints::PELVIS));
        for j in &lower {
            assert!(!upper.contains(j));
        }
    }
}
