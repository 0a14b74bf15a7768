//! Ideal IMU simulation from a motion sequence: orientation by forward
//! kinematics, acceleration by second finite differences plus gravity,
//! expressed in the sensor's local frame.

use super::{MotionSequence, SensorSite, GRAVITY};
use crate::body::{forward_kinematics, KinematicTree};
use crate::error::{Error, Result};
use crate::rotmath::{v_add, v_scale, v_sub, RotMat, Vec3};
use crate::streams::{ImuSample, TimedStream};

/// Simulate an IMU at `site` over the sequence.
///
/// Orientation is the mount joint's global orientation composed with the
/// mount rotation. Acceleration is the second central finite difference of
/// the site's world position plus gravity `(0, 0, -9.81)`, rotated into the
/// sensor frame; the endpoints reuse the one-sided difference of their
/// neighbor. Rates of at least 50 Hz keep the differences stable.
pub fn simulate_imu(
    seq: &MotionSequence,
    tree: &KinematicTree,
    site: &SensorSite,
) -> Result<TimedStream<ImuSample>> {
    let n = seq.frames.len();
    if n < 3 {
        return Err(Error::SequenceTooShort { need: 3, got: n });
    }
    let mut world_pos: Vec<Vec3> = Vec::with_capacity(n);
    let mut world_rot: Vec<RotMat> = Vec::with_capacity(n);
    for pose in &seq.frames {
        let (pos, orient) = forward_kinematics(tree, pose)?;
        let joint_rot = orient[site.mount_joint];
        world_pos.push(v_add(
            pos[site.mount_joint],
            joint_rot.apply(site.mount_offset),
        ));
        world_rot.push(joint_rot.mul(&site.mount_rotation));
    }

    let dt = 1.0 / seq.rate_hz;
    let second_diff = |i: usize| -> Vec3 {
        v_scale(
            v_add(
                v_sub(world_pos[i + 1], v_scale(world_pos[i], 2.0)),
                world_pos[i - 1],
            ),
            1.0 / (dt * dt),
        )
    };

    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let lin = if i == 0 {
            second_diff(1)
        } else if i == n - 1 {
            second_diff(n - 2)
        } else {
            second_diff(i)
        };
        let specific = v_add(lin, GRAVITY);
        samples.push(ImuSample {
            orientation: world_rot[i],
            accel: world_rot[i].transpose().apply(specific),
        });
    }
    TimedStream::new(seq.timestamps(), samples, seq.rate_hz)
}
