//! Consumer-device degradation of an ideal IMU stream: white noise, bias
//! random walk, slow attachment wobble, and sample dropout.

use super::NoiseConfig;
use crate::error::Result;
use crate::rotmath::{quat_to_matrix, v_add, v_norm, Quat, RotMat, Vec3};
use crate::streams::{ImuSample, TimedStream};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn gauss3<R: Rng>(rng: &mut R, sigma: f64) -> Vec3 {
    [
        sigma * rng.sample::<f64, _>(StandardNormal),
        sigma * rng.sample::<f64, _>(StandardNormal),
        sigma * rng.sample::<f64, _>(StandardNormal),
    ]
}

/// Small rotation from a rotation vector.
fn rot_from_vec(v: Vec3) -> RotMat {
    let angle = v_norm(v);
    if angle == 0.0 {
        return RotMat::IDENTITY;
    }
    quat_to_matrix(&Quat::from_axis_angle(v, angle))
}

/// Corrupt a stream the way loosely worn consumer hardware does.
///
/// White noise is added to acceleration, the orientation is perturbed by
/// small random rotations, the accelerometer bias follows a seeded random
/// walk, and the attachment wobble is an Ornstein-Uhlenbeck rotation offset
/// with a 2 s time constant. Dropped samples are removed from the stream.
/// An all-zero config returns the input unchanged.
pub fn apply_consumer_noise(
    stream: &TimedStream<ImuSample>,
    cfg: &NoiseConfig,
) -> Result<TimedStream<ImuSample>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dt = 1.0 / stream.native_rate_hz();
    let tau = 2.0;
    let ou_decay = (-dt / tau).exp();
    let ou_sigma = cfg.attachment_jitter_deg.to_radians();
    let ou_step = ou_sigma * (1.0 - ou_decay * ou_decay).sqrt();

    let mut bias = [0.0; 3];
    let mut wobble = [0.0; 3];
    let mut timestamps = Vec::with_capacity(stream.len());
    let mut samples = Vec::with_capacity(stream.len());

    for (&t, s) in stream.timestamps().iter().zip(stream.samples()) {
        if cfg.bias_walk_sigma > 0.0 {
            bias = v_add(bias, gauss3(&mut rng, cfg.bias_walk_sigma * dt.sqrt()));
        }
        if ou_sigma > 0.0 {
            let kick = gauss3(&mut rng, ou_step);
            wobble = v_add(
                [
                    wobble[0] * ou_decay,
                    wobble[1] * ou_decay,
                    wobble[2] * ou_decay,
                ],
                kick,
            );
        }
        let mut accel = s.accel;
        if cfg.accel_white_sigma > 0.0 {
            accel = v_add(accel, gauss3(&mut rng, cfg.accel_white_sigma));
        }
        accel = v_add(accel, bias);
        let mut orientation = s.orientation;
        if ou_sigma > 0.0 {
            orientation = orientation.mul(&rot_from_vec(wobble));
        }
        if cfg.orientation_white_sigma > 0.0 {
            orientation = orientation.mul(&rot_from_vec(gauss3(
                &mut rng,
                cfg.orientation_white_sigma,
            )));
        }
        let dropped = cfg.dropout_prob > 0.0 && rng.gen::<f64>() < cfg.dropout_prob;
        if !dropped {
            timestamps.push(t);
            samples.push(ImuSample {
                orientation,
                accel,
            });
        }
    }
    TimedStream::new(timestamps, samples, stream.native_rate_hz())
}
