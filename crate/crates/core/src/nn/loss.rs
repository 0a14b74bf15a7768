//! The four training objectives: per-joint weighted pose loss, root
//! translation loss, the uncertainty-weighted teacher combination, and the
//! two distillation terms. Each exists as a plain scalar function (the
//! operation contract) and as a graph builder used during training; a test
//! pins the two routes together.

use super::graph::{Graph, Var};
use super::model::{OUTPUT_WIDTH, ROTATION_WIDTH};
use super::tensor::Tensor;
use crate::body::JOINT_COUNT;
use crate::error::{Error, Result};
use crate::rotmath::Rot6D;
use serde::{Deserialize, Serialize};

/// Per-joint weights of the pose loss. The defaults emphasize the pelvis
/// and limb joints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub per_joint: [f64; JOINT_COUNT],
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            per_joint: [
                1.0, // Pelvis
                0.2, // Left Hip
                0.2, // Right Hip
                0.1, // Spine1
                0.3, // Left Knee
                0.3, // Right Knee
                0.1, // Spine2
                0.3, // Left Ankle
                0.3, // Right Ankle
                0.1, // Spine3
                0.3, // Left Foot
                0.3, // Right Foot
                0.1, // Neck
                0.3, // Left Collar
                0.3, // Right Collar
                0.3, // Head
                0.2, // Left Shoulder
                0.2, // Right Shoulder
                0.3, // Left Elbow
                0.3, // Right Elbow
                0.4, // Left Wrist
                0.4, // Right Wrist
                0.4, // Left Hand
                0.4, // Right Hand
            ],
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if self.per_joint.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::InvalidInput(
                "per-joint weights must be positive".to_string(),
            ));
        }
        Ok(())
    }

    /// `[1, 144]` row: weight of each 6D component, pre-divided by J.
    pub fn expanded_row(&self) -> Tensor {
        let mut data = Vec::with_capacity(ROTATION_WIDTH);
        for w in self.per_joint {
            for _ in 0..6 {
                data.push(w / JOINT_COUNT as f64);
            }
        }
        Tensor::row(data)
    }
}

fn check_joint_count(n: usize) -> Result<()> {
    if n != JOINT_COUNT {
        return Err(Error::ShapeMismatch(format!(
            "expected {JOINT_COUNT} joint rotations, got {n}"
        )));
    }
    Ok(())
}

/// Weighted mean squared error over the 6D joint rotations:
/// `(1/J) sum_j w_j ||theta_j - theta_hat_j||^2`.
pub fn loss_pose(pred: &[Rot6D], gt: &[Rot6D], w: &LossWeights) -> Result<f64> {
    check_joint_count(pred.len())?;
    check_joint_count(gt.len())?;
    let mut acc = 0.0;
    for j in 0..JOINT_COUNT {
        let mut sq = 0.0;
        for e in 0..6 {
            let d = pred[j].0[e] - gt[j].0[e];
            sq += d * d;
        }
        acc += w.per_joint[j] * sq;
    }
    Ok(acc / JOINT_COUNT as f64)
}

/// Squared Euclidean distance between predicted and reference root positions.
pub fn loss_trans(pred: [f64; 3], gt: [f64; 3]) -> f64 {
    let mut acc = 0.0;
    for e in 0..3 {
        let d = pred[e] - gt[e];
        acc += d * d;
    }
    acc
}

/// Uncertainty-weighted combination with variances stored as log-variances:
/// `L_pose * exp(-s_pose) + s_pose + L_trans * exp(-s_trans) + s_trans`.
pub fn loss_teacher(l_pose: f64, l_trans: f64, s_pose: f64, s_trans: f64) -> f64 {
    l_pose * (-s_pose).exp() + s_pose + l_trans * (-s_trans).exp() + s_trans
}

/// Output distillation: unweighted mean squared error over 6D rotations,
/// `(1/J) sum_j ||theta_T_j - theta_S_j||^2`.
pub fn loss_kd_output(pred_teacher: &[Rot6D], pred_student: &[Rot6D]) -> Result<f64> {
    check_joint_count(pred_teacher.len())?;
    check_joint_count(pred_student.len())?;
    let mut acc = 0.0;
    for j in 0..JOINT_COUNT {
        for e in 0..6 {
            let d = pred_teacher[j].0[e] - pred_student[j].0[e];
            acc += d * d;
        }
    }
    Ok(acc / JOINT_COUNT as f64)
}

/// Feature distillation: `(1/d) ||U_teacher - U_student||^2`.
pub fn loss_kd_feat(u_teacher: &[f64], u_student: &[f64]) -> Result<f64> {
    if u_teacher.len() != u_student.len() {
        return Err(Error::ShapeMismatch(format!(
            "feature widths {} vs {}",
            u_teacher.len(),
            u_student.len()
        )));
    }
    let d = u_teacher.len() as f64;
    Ok(u_teacher
        .iter()
        .zip(u_student)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / d)
}

/// Weighted sum of the student objectives. The decay schedule is applied by
/// the training pipeline, not here.
pub fn loss_student(
    l_motion: f64,
    l_output: f64,
    l_feat: f64,
    lambda_motion: f64,
    lambda_output: f64,
    lambda_feat: f64,
) -> f64 {
    lambda_motion * l_motion + lambda_output * l_output + lambda_feat * l_feat
}

/// Slice per-frame outputs into rotation and translation blocks.
pub fn split_output(g: &mut Graph, out: Var) -> Result<(Var, Var)> {
    let rot = g.slice_cols(out, 0, ROTATION_WIDTH)?;
    let trans = g.slice_cols(out, ROTATION_WIDTH, OUTPUT_WIDTH)?;
    Ok((rot, trans))
}

/// Mean over frames and batch of the weighted pose loss, as a graph node.
/// `gt_rot[t]` is `[batch, 144]`.
pub fn pose_loss_graph(
    g: &mut Graph,
    outputs: &[Var],
    gt_rot: &[Tensor],
    w: &LossWeights,
) -> Result<Var> {
    if outputs.len() != gt_rot.len() {
        return Err(Error::LengthMismatch {
            left: outputs.len(),
            right: gt_rot.len(),
        });
    }
    let batch = gt_rot[0].rows();
    let w_row = g.leaf(w.expanded_row());
    let mut acc: Option<Var> = None;
    for (out, gt) in outputs.iter().zip(gt_rot) {
        let (rot, _) = split_output(g, *out)?;
        let gtv = g.leaf(gt.clone());
        let diff = g.sub(rot, gtv)?;
        let sq = g.mul(diff, diff)?;
        let wsq = g.mul_row(sq, w_row)?;
        let s = g.sum_all(wsq);
        acc = Some(match acc {
            Some(a) => g.add(a, s)?,
            None => s,
        });
    }
    Ok(g.scale(acc.unwrap(), 1.0 / (batch * outputs.len()) as f64))
}

/// Mean over frames and batch of the squared root-translation error.
pub fn trans_loss_graph(g: &mut Graph, outputs: &[Var], gt_trans: &[Tensor]) -> Result<Var> {
    if outputs.len() != gt_trans.len() {
        return Err(Error::LengthMismatch {
            left: outputs.len(),
            right: gt_trans.len(),
        });
    }
    let batch = gt_trans[0].rows();
    let mut acc: Option<Var> = None;
    for (out, gt) in outputs.iter().zip(gt_trans) {
        let (_, trans) = split_output(g, *out)?;
        let gtv = g.leaf(gt.clone());
        let diff = g.sub(trans, gtv)?;
        let sq = g.mul(diff, diff)?;
        let s = g.sum_all(sq);
        acc = Some(match acc {
            Some(a) => g.add(a, s)?,
            None => s,
        });
    }
    Ok(g.scale(acc.unwrap(), 1.0 / (batch * outputs.len()) as f64))
}

/// Eq-style uncertainty weighting on graph nodes; `s_*` are the log-variance
/// parameter leaves.
pub fn teacher_loss_graph(
    g: &mut Graph,
    l_pose: Var,
    l_trans: Var,
    s_pose: Var,
    s_trans: Var,
) -> Result<Var> {
    let np = g.scale(s_pose, -1.0);
    let wp = g.exp(np);
    let tp = g.mul(l_pose, wp)?;
    let tp = g.add(tp, s_pose)?;
    let nt = g.scale(s_trans, -1.0);
    let wt = g.exp(nt);
    let tt = g.mul(l_trans, wt)?;
    let tt = g.add(tt, s_trans)?;
    g.add(tp, tt)
}

/// Output-distillation loss over frames: teacher rotations enter as plain
/// tensors (the teacher is frozen).
pub fn kd_output_loss_graph(
    g: &mut Graph,
    student_outputs: &[Var],
    teacher_rot: &[Tensor],
) -> Result<Var> {
    if student_outputs.len() != teacher_rot.len() {
        return Err(Error::LengthMismatch {
            left: student_outputs.len(),
            right: teacher_rot.len(),
        });
    }
    let batch = teacher_rot[0].rows();
    let mut acc: Option<Var> = None;
    for (out, t_rot) in student_outputs.iter().zip(teacher_rot) {
        let (rot, _) = split_output(g, *out)?;
        let tv = g.leaf(t_rot.clone());
        let diff = g.sub(rot, tv)?;
        let sq = g.mul(diff, diff)?;
        let s = g.sum_all(sq);
        acc = Some(match acc {
            Some(a) => g.add(a, s)?,
            None => s,
        });
    }
    let denom = (JOINT_COUNT * batch * student_outputs.len()) as f64;
    Ok(g.scale(acc.unwrap(), 1.0 / denom))
}

/// Feature-distillation loss over frames: `(1/d)||U_tea - U_stu||^2`
/// averaged over batch and frames.
pub fn kd_feat_loss_graph(
    g: &mut Graph,
    student_features: &[Var],
    teacher_features: &[Tensor],
) -> Result<Var> {
    if student_features.len() != teacher_features.len() {
        return Err(Error::LengthMismatch {
            left: student_features.len(),
            right: teacher_features.len(),
        });
    }
    let batch = teacher_features[0].rows();
    let d = teacher_features[0].cols();
    let mut acc: Option<Var> = None;
    for (u_s, u_t) in student_features.iter().zip(teacher_features) {
        let tv = g.leaf(u_t.clone());
        let diff = g.sub(*u_s, tv)?;
        let sq = g.mul(diff, diff)?;
        let s = g.sum_all(sq);
        acc = Some(match acc {
            Some(a) => g.add(a, s)?,
            None => s,
        });
    }
    let denom = (d * batch * student_features.len()) as f64;
    Ok(g.scale(acc.unwrap(), 1.0 / denom))
}

/// `lambda_motion * L_motion + lambda_output * L_out + lambda_feat * L_feat`.
pub fn student_loss_graph(
    g: &mut Graph,
    l_motion: Var,
    l_output: Var,
    l_feat: Var,
    lambda_motion: f64,
    lambda_output: f64,
    lambda_feat: f64,
) -> Result<Var> {
    let a = g.scale(l_motion, lambda_motion);
    let b = g.scale(l_output, lambda_output);
    let c = g.scale(l_feat, lambda_feat);
    let ab = g.add(a, b)?;
    g.add(ab, c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::joints;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn identity_pose() -> Vec<Rot6D> {
        vec![Rot6D::IDENTITY; JOINT_COUNT]
    }

    #[test]
    fn pose_loss_zero_on_equal() {
        let w = LossWeights::default();
        let p = identity_pose();
        assert_eq!(loss_pose(&p, &p, &w).unwrap(), 0.0);
    }

    #[test]
    fn pose_loss_single_joint_constructions() {
        let w = LossWeights::default();
        let gt = identity_pose();
        // Pelvis differs by the all-ones 6-vector: (1/24) * 1.0 * 6 = 0.25.
        let mut pred = identity_pose();
        for e in 0..6 {
            pred[joints::PELVIS].0[e] += 1.0;
        }
        assert!((loss_pose(&pred, &gt, &w).unwrap() - 0.25).abs() < 1e-12);

        // Left wrist differs by a unit first component:
        // (1/24) * 0.4 * 1 = 1/60.
        let mut pred = identity_pose();
        pred[joints::LEFT_WRIST].0[0] += 1.0;
        let got = loss_pose(&pred, &gt, &w).unwrap();
        assert!((got - 0.4 / 24.0).abs() < 1e-12);
        assert!((got - 0.016_666_666_666_666_666).abs() < 1e-12);
    }

    #[test]
    fn trans_loss_three_four_five() {
        assert_eq!(loss_trans([0.0; 3], [0.0; 3]), 0.0);
        let got = loss_trans([0.03, 0.0, 0.04], [0.0; 3]);
        assert!((got - 0.0025).abs() < 1e-18);
    }

    #[test]
    fn teacher_loss_cases() {
        // s = 0 means unit variances: plain sum.
        assert_eq!(loss_teacher(1.25, 0.75, 0.0, 0.0), 2.0);
        // L_pose = 1, s_pose = ln 2: 1/2 + ln 2.
        let got = loss_teacher(1.0, 0.0, 2f64.ln(), 0.0);
        assert!((got - (0.5 + 2f64.ln())).abs() < 1e-15);
    }

    #[test]
    fn teacher_loss_optimum_matches_analytic_variance() {
        // d/ds [L e^{-s} + s] = 0  <=>  e^s = L, i.e. the optimal variance
        // equals the loss. Check the analytic gradient sign flip around it.
        let l: f64 = 0.7;
        let s_opt = l.ln();
        let grad = |s: f64| -l * (-s).exp() + 1.0;
        assert!(grad(s_opt).abs() < 1e-12);
        assert!(grad(s_opt - 0.1) < 0.0);
        assert!(grad(s_opt + 0.1) > 0.0);
    }

    #[test]
    fn kd_output_cases() {
        let a = identity_pose();
        assert_eq!(loss_kd_output(&a, &a).unwrap(), 0.0);
        let mut b = identity_pose();
        for e in 0..6 {
            b[5].0[e] += 1.0;
        }
        assert!((loss_kd_output(&a, &b).unwrap() - 0.25).abs() < 1e-12);
        // Symmetric.
        assert_eq!(
            loss_kd_output(&a, &b).unwrap(),
            loss_kd_output(&b, &a).unwrap()
        );
    }

    #[test]
    fn kd_feat_cases() {
        let a = vec![0.5; 128];
        assert_eq!(loss_kd_feat(&a, &a).unwrap(), 0.0);
        let b = vec![1.5; 128];
        assert!((loss_kd_feat(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        assert!(loss_kd_feat(&a, &vec![0.0; 64]).is_err());
    }

    #[test]
    fn student_loss_linear_combination() {
        assert_eq!(loss_student(1.0, 2.0, 4.0, 0.0, 0.0, 0.0), 0.0);
        assert_eq!(loss_student(1.0, 2.0, 4.0, 1.0, 0.5, 0.5), 4.0);
    }

    #[test]
    fn graph_losses_match_plain_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut rand6 = || Rot6D([0; 6].map(|_| rng.gen_range(-1.0..1.0)));
        let pred: Vec<Rot6D> = (0..JOINT_COUNT).map(|_| rand6()).collect();
        let gt: Vec<Rot6D> = (0..JOINT_COUNT).map(|_| rand6()).collect();
        let w = LossWeights::default();
        let plain = loss_pose(&pred, &gt, &w).unwrap();

        // One frame, batch of one, translation pinned to zero.
        let mut out_row = Vec::with_capacity(OUTPUT_WIDTH);
        for r in &pred {
            out_row.extend_from_slice(&r.0);
        }
        out_row.extend_from_slice(&[0.0; 3]);
        let mut gt_row = Vec::with_capacity(ROTATION_WIDTH);
        for r in &gt {
            gt_row.extend_from_slice(&r.0);
        }
        let mut g = Graph::new();
        let out = g.leaf(Tensor::row(out_row));
        let lp = pose_loss_graph(&mut g, &[out], &[Tensor::row(gt_row.clone())], &w).unwrap();
        assert!((g.value(lp).item() - plain).abs() < 1e-12);

        let kd_plain = loss_kd_output(&pred, &gt).unwrap();
        let kd = kd_output_loss_graph(&mut g, &[out], &[Tensor::row(gt_row)]).unwrap();
        assert!((g.value(kd).item() - kd_plain).abs() < 1e-12);
    }

    #[test]
    fn teacher_loss_graph_matches_plain() {
        let mut g = Graph::new();
        let lp = g.leaf(Tensor::scalar(1.3));
        let lt = g.leaf(Tensor::scalar(0.4));
        let sp = g.leaf(Tensor::scalar(0.2));
        let st = g.leaf(Tensor::scalar(-0.5));
        let total = teacher_loss_graph(&mut g, lp, lt, sp, st).unwrap();
        let want = loss_teacher(1.3, 0.4, 0.2, -0.5);
        assert!((g.value(total).item() - want).abs() < 1e-15);
    }
}
