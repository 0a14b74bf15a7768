//! Simulated localization output for the head: forward-kinematics head poses
//! with a global scale mismatch and a slowly accumulating drift, mirroring
//! what a monocular tracking module hands downstream.

use super::{MotionSequence, SensorSite, SiteId};
use crate::body::{forward_kinematics, KinematicTree};
use crate::error::{Error, Result};
use crate::rotmath::{quat_to_matrix, v_add, v_scale, Quat, Vec3};
use crate::streams::{HeadPose, TimedStream};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Simulate head poses with translation scale `scale` and a drift whose
/// expected magnitude grows like `drift_rate * t` (a random constant drift
/// velocity plus a diffusive walk). Rotation noise stays under one degree.
pub fn simulate_slam_head(
    seq: &MotionSequence,
    tree: &KinematicTree,
    drift_rate: f64,
    scale: f64,
    seed: u64,
) -> Result<TimedStream<HeadPose>> {
    if !(scale > 0.0) {
        return Err(Error::InvalidInput(format!(
            "scale must be positive, got {scale}"
        )));
    }
    if !(drift_rate >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "drift_rate must be >= 0, got {drift_rate}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dt = 1.0 / seq.rate_hz;

    // Per-run constant drift velocity with |v| ~ drift_rate, plus wobble.
    let sigma_v = drift_rate / 3f64.sqrt();
    let drift_vel: Vec3 = [
        sigma_v * rng.sample::<f64, _>(StandardNormal),
        sigma_v * rng.sample::<f64, _>(StandardNormal),
        sigma_v * rng.sample::<f64, _>(StandardNormal),
    ];
    let walk_sigma = drift_rate * 0.1 * dt.sqrt();
    let rot_sigma = 0.25f64.to_radians();
    let rot_cap = 1f64.to_radians();

    let head = SensorSite::default_for(SiteId::Head);
    let mut drift = [0.0; 3];
    let mut samples = Vec::with_capacity(seq.frames.len());
    for pose in &seq.frames {
        let (pos, orient) = forward_kinematics(tree, pose)?;
        let head_rot = orient[head.mount_joint];
        let head_pos = v_add(pos[head.mount_joint], head_rot.apply(head.mount_offset));

        drift = v_add(drift, v_scale(drift_vel, dt));
        if walk_sigma > 0.0 {
            drift = v_add(
                drift,
                [
                    walk_sigma * rng.sample::<f64, _>(StandardNormal),
                    walk_sigma * rng.sample::<f64, _>(StandardNormal),
                    walk_sigma * rng.sample::<f64, _>(StandardNormal),
                ],
            );
        }

        let rotation = if drift_rate > 0.0 {
            let axis: Vec3 = [
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
            ];
            let angle = (rot_sigma * rng.sample::<f64, _>(StandardNormal)).clamp(-rot_cap, rot_cap);
            head_rot.mul(&quat_to_matrix(&Quat::from_axis_angle(axis, angle)))
        } else {
            head_rot
        };

        samples.push(HeadPose {
            rotation,
            translation: v_add(v_scale(head_pos, scale), drift),
        });
    }
    TimedStream::new(seq.timestamps(), samples, seq.rate_hz)
}
