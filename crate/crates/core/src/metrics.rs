//! Evaluation metrics over predicted vs reference motion: mean per-joint
//! position error (raw and Procrustes-aligned), mean joint rotation error,
//! mean per-vertex error, root position error, and the upper/lower-body
//! split. Internals stay in meters; centimeters appear only at reporting.

use crate::body::{
    forward_kinematics, joint_partition, skin_vertices, KinematicTree, Pose, SkinnedMesh,
    JOINT_COUNT,
};
use crate::error::{Error, Result};
use crate::rotmath::{geodesic_angle, v_norm, v_sub, RotMat, Vec3};
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mpjpe_cm: f64,
    pub pa_mpjpe_cm: f64,
    pub mpjre_deg: f64,
    pub mpjve_cm: f64,
    pub root_pe_cm: f64,
    pub upper_pe_cm: f64,
    pub lower_pe_cm: f64,
    /// One entry per evaluated window, same fields, for the breakdown table.
    pub per_window: Vec<WindowMetrics>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowMetrics {
    pub mpjpe_cm: f64,
    pub pa_mpjpe_cm: f64,
    pub mpjre_deg: f64,
    pub mpjve_cm: f64,
    pub root_pe_cm: f64,
    pub upper_pe_cm: f64,
    pub lower_pe_cm: f64,
}

fn check_lengths(pred: &[Pose], gt: &[Pose]) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: gt.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::EmptyStream);
    }
    Ok(())
}

fn pelvis_centered(positions: &[Vec3]) -> Vec<Vec3> {
    let pelvis = positions[0];
    positions.iter().map(|p| v_sub(*p, pelvis)).collect()
}

/// Mean per-joint position error with the pelvis aligned, centimeters.
pub fn mpjpe(pred: &[Pose], gt: &[Pose], tree: &KinematicTree) -> Result<f64> {
    check_lengths(pred, gt)?;
    let mut acc = 0.0;
    for (p, g) in pred.iter().zip(gt) {
        let (pp, _) = forward_kinematics(tree, p)?;
        let (gp, _) = forward_kinematics(tree, g)?;
        let pp = pelvis_centered(&pp);
        let gp = pelvis_centered(&gp);
        for j in 0..JOINT_COUNT {
            acc += v_norm(v_sub(pp[j], gp[j]));
        }
    }
    Ok(acc / (JOINT_COUNT * pred.len()) as f64 * 100.0)
}

/// Similarity transform (rotation, translation, scale) minimizing
/// `sum ||s R p_i + t - q_i||^2`, closed form via the SVD of the centered
/// covariance with a reflection guard.
pub fn procrustes_align(p: &[Vec3], q: &[Vec3]) -> Result<(RotMat, Vec3, f64)> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    let n = p.len();
    if n < 3 {
        return Err(Error::DegenerateConfiguration(format!(
            "need at least 3 points, got {n}"
        )));
    }
    let mean = |pts: &[Vec3]| -> Vector3<f64> {
        let mut m = Vector3::zeros();
        for x in pts {
            m += Vector3::new(x[0], x[1], x[2]);
        }
        m / n as f64
    };
    let mp = mean(p);
    let mq = mean(q);
    let mut cov = Matrix3::<f64>::zeros();
    let mut var_p = 0.0;
    for (a, b) in p.iter().zip(q) {
        let pa = Vector3::new(a[0], a[1], a[2]) - mp;
        let qb = Vector3::new(b[0], b[1], b[2]) - mq;
        cov += qb * pa.transpose();
        var_p += pa.norm_squared();
    }
    cov /= n as f64;
    var_p /= n as f64;
    if var_p < 1e-18 {
        return Err(Error::DegenerateConfiguration(
            "coincident source points".to_string(),
        ));
    }
    let svd = cov.svd(true, true);
    let u = svd.u.ok_or_else(|| {
        Error::DegenerateConfiguration("covariance SVD failed".to_string())
    })?;
    let vt = svd.v_t.ok_or_else(|| {
        Error::DegenerateConfiguration("covariance SVD failed".to_string())
    })?;
    let sv = svd.singular_values;
    // Rank 1 means the points are collinear and the rotation about the line
    // is unconstrained.
    if sv[1] <= 1e-12 * sv[0].max(1.0) {
        return Err(Error::DegenerateConfiguration(
            "collinear point set".to_string(),
        ));
    }
    // Reflection guard: force det(R) = +1 by flipping the smallest axis.
    let mut d = Vector3::new(1.0, 1.0, 1.0);
    if (u * vt).determinant() < 0.0 {
        d[2] = -1.0;
    }
    let r = u * Matrix3::from_diagonal(&d) * vt;
    let scale = (sv[0] * d[0] + sv[1] * d[1] + sv[2] * d[2]) / var_p;
    let t = mq - scale * r * mp;
    let rot = RotMat([
        [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
        [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
        [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
    ]);
    Ok((rot, [t[0], t[1], t[2]], scale))
}

fn apply_similarity(rot: &RotMat, t: Vec3, s: f64, p: Vec3) -> Vec3 {
    let rp = rot.apply(p);
    [s * rp[0] + t[0], s * rp[1] + t[1], s * rp[2] + t[2]]
}

/// Mean per-joint position error after per-frame Procrustes alignment of
/// the predicted joints to the reference joints, centimeters.
pub fn pa_mpjpe(pred: &[Pose], gt: &[Pose], tree: &KinematicTree) -> Result<f64> {
    check_lengths(pred, gt)?;
    let mut acc = 0.0;
    for (p, g) in pred.iter().zip(gt) {
        let (pp, _) = forward_kinematics(tree, p)?;
        let (gp, _) = forward_kinematics(tree, g)?;
        let (rot, t, s) = procrustes_align(&pp, &gp)?;
        for j in 0..JOINT_COUNT {
            let aligned = apply_similarity(&rot, t, s, pp[j]);
            acc += v_norm(v_sub(aligned, gp[j]));
        }
    }
    Ok(acc / (JOINT_COUNT * pred.len()) as f64 * 100.0)
}

/// Mean geodesic angle between global joint orientations after aligning the
/// predicted root orientation to the reference, degrees.
pub fn mpjre(pred: &[Pose], gt: &[Pose], tree: &KinematicTree) -> Result<f64> {
    check_lengths(pred, gt)?;
    let mut acc = 0.0;
    for (p, g) in pred.iter().zip(gt) {
        let (_, po) = forward_kinematics(tree, p)?;
        let (_, go) = forward_kinematics(tree, g)?;
        // R_align maps the predicted root orientation onto the reference.
        let align = go[0].mul(&po[0].transpose());
        for j in 0..JOINT_COUNT {
            let adjusted = align.mul(&po[j]);
            acc += geodesic_angle(&adjusted, &go[j]);
        }
    }
    Ok((acc / (JOINT_COUNT * pred.len()) as f64).to_degrees())
}

/// Mean per-vertex error over the surrogate mesh with the pelvis aligned,
/// centimeters.
pub fn mpjve(pred: &[Pose], gt: &[Pose], tree: &KinematicTree, mesh: &SkinnedMesh) -> Result<f64> {
    check_lengths(pred, gt)?;
    let mut acc = 0.0;
    for (p, g) in pred.iter().zip(gt) {
        let pv = skin_vertices(tree, p, mesh)?;
        let gv = skin_vertices(tree, g, mesh)?;
        let (pp, _) = forward_kinematics(tree, p)?;
        let (gp, _) = forward_kinematics(tree, g)?;
        for (a, b) in pv.iter().zip(&gv) {
            let a = v_sub(*a, pp[0]);
            let b = v_sub(*b, gp[0]);
            acc += v_norm(v_sub(a, b));
        }
    }
    Ok(acc / (pred.len() * mesh.vertices.len()) as f64 * 100.0)
}

/// Root position error in global coordinates, no alignment, centimeters.
pub fn root_pe(pred: &[Pose], gt: &[Pose]) -> Result<f64> {
    check_lengths(pred, gt)?;
    let acc: f64 = pred
        .iter()
        .zip(gt)
        .map(|(p, g)| v_norm(v_sub(p.trans, g.trans)))
        .sum();
    Ok(acc / pred.len() as f64 * 100.0)
}

/// Pelvis-aligned position error restricted to the upper and lower joint
/// partitions, centimeters.
pub fn region_pe(pred: &[Pose], gt: &[Pose], tree: &KinematicTree) -> Result<(f64, f64)> {
    check_lengths(pred, gt)?;
    let (upper, lower) = joint_partition();
    let mut acc_u = 0.0;
    let mut acc_l = 0.0;
    for (p, g) in pred.iter().zip(gt) {
        let (pp, _) = forward_kinematics(tree, p)?;
        let (gp, _) = forward_kinematics(tree, g)?;
        let pp = pelvis_centered(&pp);
        let gp = pelvis_centered(&gp);
        for &j in &upper {
            acc_u += v_norm(v_sub(pp[j], gp[j]));
        }
        for &j in &lower {
            acc_l += v_norm(v_sub(pp[j], gp[j]));
        }
    }
    let n = pred.len() as f64;
    Ok((
        acc_u / (upper.len() as f64 * n) * 100.0,
        acc_l / (lower.len() as f64 * n) * 100.0,
    ))
}

/// All metrics for one window.
pub fn window_metrics(
    pred: &[Pose],
    gt: &[Pose],
    tree: &KinematicTree,
    mesh: &SkinnedMesh,
) -> Result<WindowMetrics> {
    let (upper_pe_cm, lower_pe_cm) = region_pe(pred, gt, tree)?;
    Ok(WindowMetrics {
        mpjpe_cm: mpjpe(pred, gt, tree)?,
        pa_mpjpe_cm: pa_mpjpe(pred, gt, tree)?,
        mpjre_deg: mpjre(pred, gt, tree)?,
        mpjve_cm: mpjve(pred, gt, tree, mesh)?,
        root_pe_cm: root_pe(pred, gt)?,
        upper_pe_cm,
        lower_pe_cm,
    })
}

/// Aggregate per-window metrics into a report (plain means).
pub fn aggregate(per_window: Vec<WindowMetrics>) -> Result<MetricsReport> {
    if per_window.is_empty() {
        return Err(Error::EmptyStream);
    }
    let n = per_window.len() as f64;
    let mean = |f: fn(&WindowMetrics) -> f64| per_window.iter().map(f).sum::<f64>() / n;
    Ok(MetricsReport {
        mpjpe_cm: mean(|w| w.mpjpe_cm),
        pa_mpjpe_cm: mean(|w| w.pa_mpjpe_cm),
        mpjre_deg: mean(|w| w.mpjre_deg),
        mpjve_cm: mean(|w| w.mpjve_cm),
        root_pe_cm: mean(|w| w.root_pe_cm),
        upper_pe_cm: mean(|w| w.upper_pe_cm),
        lower_pe_cm: mean(|w| w.lower_pe_cm),
        per_window,
    })
}

impl MetricsReport {
    /// CSV with one row per window plus a summary row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "window,mpjpe_cm,pa_mpjpe_cm,mpjre_deg,mpjve_cm,root_pe_cm,upper_pe_cm,lower_pe_cm\n",
        );
        for (i, w) in self.per_window.iter().enumerate() {
            out.push_str(&format!(
                "{i},{},{},{},{},{},{},{}\n",
                w.mpjpe_cm,
                w.pa_mpjpe_cm,
                w.mpjre_deg,
                w.mpjve_cm,
                w.root_pe_cm,
                w.upper_pe_cm,
                w.lower_pe_cm
            ));
        }
        out.push_str(&format!(
            "mean,{},{},{},{},{},{},{}\n",
            self.mpjpe_cm,
            self.pa_mpjpe_cm,
            self.mpjre_deg,
            self.mpjve_cm,
            self.root_pe_cm,
            self.upper_pe_cm,
            self.lower_pe_cm
        ));
        out
    }
}
