//! Procedural motion generator: walking, waving, sitting, and mixed
//! activity, deterministic per seed.

use super::MotionSequence;
use crate::body::{joints, Pose, JOINT_COUNT};
use crate::error::{Error, Result};
use crate::rotmath::{matrix_to_rot6d, quat_to_matrix, Quat, RotMat};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionKind {
    Walk,
    Wave,
    Sit,
    Mixed,
}

/// Hard bound on any generated joint angle, radians.
const MAX_JOINT_ANGLE: f64 = 2.8;

/// Per-joint low-amplitude wobble applied on top of the activity pattern so
/// that every joint carries some signal.
struct JointWobble {
    amp: f64,
    freq: f64,
    phase: f64,
    axis: [f64; 3],
}

fn rot_about(axis: [f64; 3], angle: f64) -> RotMat {
    quat_to_matrix(&Quat::from_axis_angle(axis, angle))
}

/// Generate a deterministic motion of `duration` seconds at `rate_hz`.
///
/// Joint angles stay within +/-2.8 rad and the root moves slower than
/// 2.5 m/s, keeping per-frame steps under 0.1 m at 25 Hz.
pub fn gen_motion(kind: MotionKind, duration: f64, rate_hz: f64, seed: u64) -> Result<MotionSequence> {
    if !(duration > 0.0) || !(rate_hz > 0.0) {
        return Err(Error::InvalidInput(
            "duration and rate must be positive".to_string(),
        ));
    }
    let n = (duration * rate_hz).round() as usize;
    if n == 0 {
        return Err(Error::InvalidInput("duration too short".to_string()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let wobbles: Vec<JointWobble> = (0..JOINT_COUNT)
        .map(|_| JointWobble {
            amp: rng.gen_range(0.02..0.10),
            freq: rng.gen_range(0.3..1.4),
            phase: rng.gen_range(0.0..std::f64::consts::TAU),
            axis: {
                let a = [
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0f64),
                ];
                let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt().max(1e-9);
                [a[0] / n, a[1] / n, a[2] / n]
            },
        })
        .collect();

    // Activity-level randomness, drawn once per sequence. The heading keeps
    // turning so the walker circles inside a room-sized area instead of
    // wandering off.
    let walk_freq = rng.gen_range(0.8..1.2);
    let walk_speed = rng.gen_range(0.9..1.4);
    let turn_rate = rng.gen_range(0.3..0.6) * if rng.gen::<bool>() { 1.0 } else { -1.0 };
    let yaw_amp = rng.gen_range(0.2..0.6);
    let yaw_freq = rng.gen_range(0.05..0.15);
    let wave_freq = rng.gen_range(1.6..2.4);
    let sit_start = duration * rng.gen_range(0.25..0.4);
    let sit_rise = duration * rng.gen_range(0.65..0.8);
    let mix_a = rng.gen_range(0.3..0.7);
    let mix_b = rng.gen_range(0.3..0.7);

    let mut frames = Vec::with_capacity(n);
    let dt = 1.0 / rate_hz;
    let mut root_xy = [0.0f64, 0.0f64];

    for i in 0..n {
        let t = i as f64 * dt;
        let mut angles = vec![(0.0f64, [0.0, 1.0, 0.0]); JOINT_COUNT];

        let phase = std::f64::consts::TAU * walk_freq * t;
        let walk_w = match kind {
            MotionKind::Walk => 1.0,
            MotionKind::Mixed => mix_a,
            _ => 0.0,
        };
        let wave_w = match kind {
            MotionKind::Wave => 1.0,
            MotionKind::Mixed => mix_b,
            _ => 0.0,
        };
        let sit_w = match kind {
            MotionKind::Sit => 1.0,
            _ => 0.0,
        };

        // Leg swing about the y axis (pitch), antiphase left/right.
        angles[joints::LEFT_HIP] = (walk_w * 0.5 * phase.sin(), [0.0, 1.0, 0.0]);
        angles[joints::RIGHT_HIP] = (walk_w * 0.5 * (phase + std::f64::consts::PI).sin(), [0.0, 1.0, 0.0]);
        angles[joints::LEFT_KNEE] = (walk_w * 0.35 * (1.0 - phase.cos()), [0.0, 1.0, 0.0]);
        angles[joints::RIGHT_KNEE] = (
            walk_w * 0.35 * (1.0 - (phase + std::f64::consts::PI).cos()),
            [0.0, 1.0, 0.0],
        );
        angles[joints::LEFT_ANKLE] = (walk_w * 0.15 * phase.sin(), [0.0, 1.0, 0.0]);
        angles[joints::RIGHT_ANKLE] = (walk_w * -0.15 * phase.sin(), [0.0, 1.0, 0.0]);
        // Counter-swinging arms.
        angles[joints::LEFT_SHOULDER] = (walk_w * 0.3 * (phase + std::f64::consts::PI).sin(), [0.0, 1.0, 0.0]);
        angles[joints::RIGHT_SHOULDER] = (walk_w * 0.3 * phase.sin(), [0.0, 1.0, 0.0]);

        if wave_w > 0.0 {
            // Right arm raised (rotation about x brings the T-pose arm up),
            // forearm oscillating.
            let raise = wave_w * 1.2;
            let (a, ax) = angles[joints::RIGHT_SHOULDER];
            angles[joints::RIGHT_SHOULDER] = (a + 0.0 * ax[0], ax);
            angles[joints::RIGHT_SHOULDER] = (raise, [1.0, 0.0, 0.0]);
            angles[joints::RIGHT_ELBOW] = (
                wave_w * (0.5 + 0.4 * (std::f64::consts::TAU * wave_freq * t).sin()),
                [1.0, 0.0, 0.0],
            );
            angles[joints::RIGHT_WRIST] = (
                wave_w * 0.3 * (std::f64::consts::TAU * wave_freq * t + 0.7).sin(),
                [1.0, 0.0, 0.0],
            );
        }

        let mut root_z = 0.95;
        if sit_w > 0.0 {
            // Smooth descent into a chair and back up.
            let ease = |x: f64| 0.5 * (1.0 - (std::f64::consts::PI * x.clamp(0.0, 1.0)).cos());
            let down = ease((t - sit_start) / 1.2) * (1.0 - ease((t - sit_rise) / 1.2));
            angles[joints::LEFT_HIP] = (-1.3 * down, [0.0, 1.0, 0.0]);
            angles[joints::RIGHT_HIP] = (-1.3 * down, [0.0, 1.0, 0.0]);
            angles[joints::LEFT_KNEE] = (1.4 * down, [0.0, 1.0, 0.0]);
            angles[joints::RIGHT_KNEE] = (1.4 * down, [0.0, 1.0, 0.0]);
            angles[joints::SPINE1] = (-0.2 * down, [0.0, 1.0, 0.0]);
            root_z -= 0.35 * down;
        }

        // Continuously turning heading with a slow wander on top; the root
        // follows it when walking, tracing a loop of radius speed/turn_rate.
        let heading = turn_rate * t + yaw_amp * (std::f64::consts::TAU * yaw_freq * t).sin();
        if walk_w > 0.0 {
            let speed = walk_w * walk_speed;
            root_xy[0] += speed * heading.cos() * dt;
            root_xy[1] += speed * heading.sin() * dt;
            root_z += 0.02 * (2.0 * phase).sin();
        }

        let mut pose = Pose::identity();
        pose.trans = [root_xy[0], root_xy[1], root_z];
        for j in 0..JOINT_COUNT {
            let w = &wobbles[j];
            let wobble = w.amp * (std::f64::consts::TAU * w.freq * t + w.phase).sin();
            let (base_angle, base_axis) = angles[j];
            let mut m = rot_about(base_axis, base_angle.clamp(-MAX_JOINT_ANGLE, MAX_JOINT_ANGLE));
            m = m.mul(&rot_about(w.axis, wobble));
            if j == joints::PELVIS {
                m = rot_about([0.0, 0.0, 1.0], heading).mul(&m);
            }
            pose.rot[j] = matrix_to_rot6d(&m);
        }
        frames.push(pose);
    }

    Ok(MotionSequence {
        rate_hz,
        start_time: 0.0,
        frames,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rotmath::{geodesic_angle, rot6d_to_matrix, v_norm, v_sub};

    #[test]
    fn frame_count_is_duration_times_rate() {
        let seq = gen_motion(MotionKind::Walk, 2.0, 25.0, 1).unwrap();
        assert_eq!(seq.frames.len(), 50);
    }

    #[test]
    fn same_seed_bit_identical() {
        let a = gen_motion(MotionKind::Mixed, 3.0, 50.0, 99).unwrap();
        let b = gen_motion(MotionKind::Mixed, 3.0, 50.0, 99).unwrap();
        assert_eq!(a, b);
        let c = gen_motion(MotionKind::Mixed, 3.0, 50.0, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn sit_sweeps_knees_at_least_45_degrees() {
        let seq = gen_motion(MotionKind::Sit, 6.0, 50.0, 5).unwrap();
        let mut min_a = f64::INFINITY;
        let mut max_a = f64::NEG_INFINITY;
        for f in &seq.frames {
            let m = rot6d_to_matrix(&f.rot[joints::LEFT_KNEE]).unwrap();
            let a = geodesic_angle(&m, &RotMat::IDENTITY);
            min_a = min_a.min(a);
            max_a = max_a.max(a);
        }
        assert!(
            max_a - min_a >= 45f64.to_radians(),
            "knee sweep {:.1} deg",
            (max_a - min_a).to_degrees()
        );
    }

    #[test]
    fn root_steps_bounded() {
        for kind in [MotionKind::Walk, MotionKind::Wave, MotionKind::Sit, MotionKind::Mixed] {
            let seq = gen_motion(kind, 4.0, 25.0, 11).unwrap();
            for w in seq.frames.windows(2) {
                let step = v_norm(v_sub(w[1].trans, w[0].trans));
                assert!(step < 0.1, "{kind:?} step {step}");
            }
        }
    }

    #[test]
    fn joint_angles_bounded() {
        for kind in [MotionKind::Walk, MotionKind::Wave, MotionKind::Sit, MotionKind::Mixed] {
            let seq = gen_motion(kind, 4.0, 25.0, 23).unwrap();
            for f in &seq.frames {
                for r in &f.rot {
                    let m = rot6d_to_matrix(r).unwrap();
                    assert!(geodesic_angle(&m, &RotMat::IDENTITY) <= 2.8 + 1e-9);
                }
            }
        }
    }
}
