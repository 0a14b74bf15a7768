//! The two calibration gestures used for temporal alignment: three vertical
//! arm raises (z-acceleration peaks on phone and reference hand sensor) and
//! one quick rightward head turn (yaw extremum on camera and head sensor).
//!
//! Both return stream pairs whose true relative shift equals `offset`: an
//! event at reference time `tau` appears at `tau + offset` in the first
//! stream and at `tau` in the second.

use crate::error::{Error, Result};
use crate::streams::TimedStream;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const MAX_OFFSET: f64 = 5.0;

/// Event times of the three raises, seconds from gesture start.
const RAISE_TIMES: [f64; 3] = [1.5, 3.0, 4.5];
const GESTURE1_DURATION: f64 = 6.5;
const PHONE_RATE: f64 = 100.0;
const REFERENCE_RATE: f64 = 240.0;

/// Turn apex time, seconds from gesture start.
const TURN_TIME: f64 = 3.0;
const GESTURE2_DURATION: f64 = 6.0;
const CAMERA_RATE: f64 = 30.0;

fn sample_signal(
    rate: f64,
    duration: f64,
    time_shift: f64,
    noise_sigma: f64,
    rng: &mut ChaCha8Rng,
    f: impl Fn(f64) -> f64,
) -> TimedStream<f64> {
    let n = (duration * rate) as usize;
    let timestamps: Vec<f64> = (0..n).map(|i| i as f64 / rate).collect();
    let samples: Vec<f64> = timestamps
        .iter()
        .map(|&t| f(t - time_shift) + noise_sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    TimedStream::new(timestamps, samples, rate).unwrap()
}

/// Three vertical arm raises: z-acceleration streams for the handheld phone
/// (offset clock) and the reference hand sensor (reference clock).
pub fn gen_gesture1(offset: f64, seed: u64) -> Result<(TimedStream<f64>, TimedStream<f64>)> {
    if offset.abs() > MAX_OFFSET {
        return Err(Error::InvalidInput(format!(
            "offset {offset} outside +/-{MAX_OFFSET} s"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let signal = |t: f64| -> f64 {
        let mut v = 0.0;
        for &c in &RAISE_TIMES {
            v += 3.0 * (-((t - c) / 0.12).powi(2)).exp();
        }
        v
    };
    // Phone events land at tau + offset on its own clock, so the underlying
    // signal is evaluated at (t - offset).
    let phone = sample_signal(
        PHONE_RATE,
        GESTURE1_DURATION + offset.max(0.0),
        offset,
        0.04,
        &mut rng,
        signal,
    );
    let reference = sample_signal(
        REFERENCE_RATE,
        GESTURE1_DURATION,
        0.0,
        0.04,
        &mut rng,
        signal,
    );
    Ok((phone, reference))
}

/// Quick rightward head turn and return: yaw streams for the camera clock
/// and the reference head sensor.
pub fn gen_gesture2(offset: f64, seed: u64) -> Result<(TimedStream<f64>, TimedStream<f64>)> {
    if offset.abs() > MAX_OFFSET {
        return Err(Error::InvalidInput(format!(
            "offset {offset} outside +/-{MAX_OFFSET} s"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let signal = |t: f64| -> f64 {
        let u = (t - TURN_TIME) / 0.8;
        if u.abs() < 1.0 {
            // Raised-cosine dip to -1.2 rad (rightward is negative yaw).
            -1.2 * 0.5 * (1.0 + (std::f64::consts::PI * u).cos())
        } else {
            0.0
        }
    };
    let camera = sample_signal(
        CAMERA_RATE,
        GESTURE2_DURATION + offset.max(0.0),
        offset,
        0.005,
        &mut rng,
        signal,
    );
    let reference = sample_signal(
        REFERENCE_RATE,
        GESTURE2_DURATION,
        0.0,
        0.005,
        &mut rng,
        signal,
    );
    Ok((camera, reference))
}
