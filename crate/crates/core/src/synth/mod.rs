//! Oracle-grade synthetic data: procedural motions, simulated IMU, camera
//! and localization streams, consumer-device noise, and the two alignment
//! gestures. Every generator is a pure function of its inputs and a seed.

mod camera;
mod gesture;
mod imu;
mod motion;
mod noise;
mod slam;

pub use camera::{simulate_camera_features, OcclusionInterval};
pub use gesture::{gen_gesture1, gen_gesture2};
pub use imu::simulate_imu;
pub use motion::{gen_motion, MotionKind};
pub use noise::apply_consumer_noise;
pub use slam::simulate_slam_head;

use crate::body::{joints, Pose};
use crate::rotmath::{RotMat, Vec3};
use serde::{Deserialize, Serialize};

/// World-frame gravity, z-up.
pub const GRAVITY: Vec3 = [0.0, 0.0, -9.81];

/// Body locations carrying a sensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SiteId {
    Head,
    LeftWrist,
    RightWrist,
    LeftHip,
    RightHip,
}

impl SiteId {
    pub const ALL: [SiteId; 5] = [
        SiteId::Head,
        SiteId::LeftWrist,
        SiteId::RightWrist,
        SiteId::LeftHip,
        SiteId::RightHip,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SiteId::Head => "head",
            SiteId::LeftWrist => "left_wrist",
            SiteId::RightWrist => "right_wrist",
            SiteId::LeftHip => "left_hip",
            SiteId::RightHip => "right_hip",
        }
    }
}

/// Camera viewpoints on the glasses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CameraView {
    Forward,
    DownLeft,
    DownRight,
}

impl CameraView {
    pub const ALL: [CameraView; 3] = [
        CameraView::Forward,
        CameraView::DownLeft,
        CameraView::DownRight,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            CameraView::Forward => "forward",
            CameraView::DownLeft => "down_left",
            CameraView::DownRight => "down_right",
        }
    }
}

/// Where a sensor is mounted: the joint it rides on and the rigid transform
/// from that joint's frame to the sensor frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorSite {
    pub site: SiteId,
    pub mount_joint: usize,
    pub mount_rotation: RotMat,
    pub mount_offset: Vec3,
}

impl SensorSite {
    /// Default mounting for a site: earbud-level head sensor, watch on the
    /// wrist, phone at the hip pocket.
    pub fn default_for(site: SiteId) -> SensorSite {
        let (mount_joint, mount_offset) = match site {
            SiteId::Head => (joints::HEAD, [0.06, 0.0, 0.04]),
            SiteId::LeftWrist => (joints::LEFT_WRIST, [0.0, 0.03, 0.02]),
            SiteId::RightWrist => (joints::RIGHT_WRIST, [0.0, -0.03, 0.02]),
            SiteId::LeftHip => (joints::LEFT_HIP, [0.09, 0.05, 0.12]),
            SiteId::RightHip => (joints::RIGHT_HIP, [0.09, -0.05, 0.12]),
        };
        SensorSite {
            site,
            mount_joint,
            mount_rotation: RotMat::IDENTITY,
            mount_offset,
        }
    }
}

/// A trajectory of poses at a fixed rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionSequence {
    pub rate_hz: f64,
    pub start_time: f64,
    pub frames: Vec<Pose>,
}

impl MotionSequence {
    pub fn timestamps(&self) -> Vec<f64> {
        (0..self.frames.len())
            .map(|i| self.start_time + i as f64 / self.rate_hz)
            .collect()
    }

    pub fn duration(&self) -> f64 {
        self.frames.len() as f64 / self.rate_hz
    }
}

/// Consumer-grade IMU imperfections: white noise, bias random walk, slow
/// attachment wobble, and sample dropout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// White noise on each acceleration axis, m/s^2.
    pub accel_white_sigma: f64,
    /// Per-sample orientation perturbation, radians.
    pub orientation_white_sigma: f64,
    /// Accelerometer bias random walk, m/s^2 per sqrt(s).
    pub bias_walk_sigma: f64,
    /// Stationary magnitude of the slow attachment wobble, degrees.
    pub attachment_jitter_deg: f64,
    /// Per-sample probability of the sample being dropped.
    pub dropout_prob: f64,
    pub seed: u64,
}

impl NoiseConfig {
    pub fn none() -> NoiseConfig {
        NoiseConfig {
            accel_white_sigma: 0.0,
            orientation_white_sigma: 0.0,
            bias_walk_sigma: 0.0,
            attachment_jitter_deg: 0.0,
            dropout_prob: 0.0,
            seed: 0,
        }
    }

    /// Loose-wear consumer defaults used by the dataset generator.
    pub fn consumer(seed: u64) -> NoiseConfig {
        NoiseConfig {
            accel_white_sigma: 0.4,
            orientation_white_sigma: 0.02,
            bias_walk_sigma: 0.05,
            attachment_jitter_deg: 4.0,
            dropout_prob: 0.02,
            seed,
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        let sigmas = [
            self.accel_white_sigma,
            self.orientation_white_sigma,
            self.bias_walk_sigma,
            self.attachment_jitter_deg,
        ];
        if sigmas.iter().any(|s| !(*s >= 0.0)) {
            return Err(crate::Error::InvalidInput(
                "noise sigmas must be >= 0".to_string(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_prob) {
            return Err(crate::Error::InvalidInput(format!(
                "dropout_prob must be in [0, 1), got {}",
                self.dropout_prob
            )));
        }
        Ok(())
    }
}
