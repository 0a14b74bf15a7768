//! Resampling, smoothing, translation normalization, and window splitting.

use super::{ImuSample, TimedStream};
use crate::body::{forward_kinematics, joints, KinematicTree};
use crate::error::{Error, Result};
use crate::rotmath::{v_sub, RotMat, Vec3};
use crate::synth::MotionSequence;
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::ops::Range;

/// Indices of the nearest input timestamp for each grid point, ties broken
/// toward the earlier sample.
pub(crate) fn nearest_indices(timestamps: &[f64], grid: &[f64]) -> Vec<usize> {
    let mut out = Vec::with_capacity(grid.len());
    let mut lo = 0usize;
    for &g in grid {
        while lo + 1 < timestamps.len() && timestamps[lo + 1] <= g {
            lo += 1;
        }
        // lo is the last index with timestamp <= g (or 0 if none are).
        let pick = if lo + 1 < timestamps.len() {
            let d_lo = (g - timestamps[lo]).abs();
            let d_hi = (timestamps[lo + 1] - g).abs();
            if d_hi < d_lo {
                lo + 1
            } else {
                lo
            }
        } else {
            lo
        };
        out.push(pick);
    }
    out
}

/// Nearest-neighbor resampling onto a uniform grid that starts at the first
/// input timestamp, spaced `1/target_hz`, extending to the last input
/// timestamp. Payloads are copied, never interpolated.
pub fn resample_nn<T: Clone>(s: &TimedStream<T>, target_hz: f64) -> Result<TimedStream<T>> {
    if s.is_empty() {
        return Err(Error::EmptyStream);
    }
    if !(target_hz > 0.0) || target_hz > s.native_rate_hz() {
        return Err(Error::InvalidInput(format!(
            "target rate {target_hz} must be in (0, native {}]",
            s.native_rate_hz()
        )));
    }
    let t0 = s.timestamps()[0];
    let t_end = *s.timestamps().last().unwrap();
    let n = ((t_end - t0) * target_hz).floor() as usize + 1;
    let grid: Vec<f64> = (0..n).map(|k| t0 + k as f64 / target_hz).collect();
    let idx = nearest_indices(s.timestamps(), &grid);
    let samples = idx.iter().map(|&i| s.samples()[i].clone()).collect();
    TimedStream::new(grid, samples, target_hz)
}

/// Nearest-neighbor sampling onto an externally supplied grid, used to put
/// several modalities on one shared timeline.
pub fn resample_to_grid<T: Clone>(s: &TimedStream<T>, grid: &[f64]) -> Result<Vec<T>> {
    if s.is_empty() {
        return Err(Error::EmptyStream);
    }
    let idx = nearest_indices(s.timestamps(), grid);
    Ok(idx.iter().map(|&i| s.samples()[i].clone()).collect())
}

/// Centered moving average over the acceleration channels, window shrinking
/// at the edges. Orientation channels are never filtered.
pub fn smooth(s: &TimedStream<ImuSample>, window: usize) -> Result<TimedStream<ImuSample>> {
    if window == 0 || window % 2 == 0 {
        return Err(Error::InvalidInput(format!(
            "smoothing window must be odd and >= 1, got {window}"
        )));
    }
    let half = window / 2;
    let n = s.len();
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let lo = i.saturating_sub(half);
        let hi = (i + half).min(n.saturating_sub(1));
        let mut acc = [0.0; 3];
        for j in lo..=hi {
            let a = s.samples()[j].accel;
            acc = [acc[0] + a[0], acc[1] + a[1], acc[2] + a[2]];
        }
        let count = (hi - lo + 1) as f64;
        samples.push(ImuSample {
            orientation: s.samples()[i].orientation,
            accel: [acc[0] / count, acc[1] / count, acc[2] / count],
        });
    }
    TimedStream::new(s.timestamps().to_vec(), samples, s.native_rate_hz())
}

/// The first-frame transform removed by [`relativize_translations`]:
/// the head-derived orientation and the root translation of frame 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameTransform {
    pub rotation: RotMat,
    pub translation: Vec3,
}

/// Express every root translation relative to the first frame's head-derived
/// coordinate frame. Frame 0's translation becomes zero; rotations are left
/// untouched. Invertible through [`derelativize_translations`].
pub fn relativize_translations(
    tree: &KinematicTree,
    seq: &MotionSequence,
) -> Result<(MotionSequence, FrameTransform)> {
    let first = seq.frames.first().ok_or(Error::EmptyStream)?;
    let (_, orient) = forward_kinematics(tree, first)?;
    let base = FrameTransform {
        rotation: orient[joints::HEAD],
        translation: first.trans,
    };
    let inv = base.rotation.transpose();
    let mut out = seq.clone();
    for pose in &mut out.frames {
        pose.trans = inv.apply(v_sub(pose.trans, base.translation));
    }
    Ok((out, base))
}

pub fn derelativize_translations(seq: &MotionSequence, base: &FrameTransform) -> MotionSequence {
    let mut out = seq.clone();
    for pose in &mut out.frames {
        let world = base.rotation.apply(pose.trans);
        pose.trans = [
            world[0] + base.translation[0],
            world[1] + base.translation[1],
            world[2] + base.translation[2],
        ];
    }
    out
}

/// Non-overlapping windows of exactly `n` frames; the remainder is dropped.
pub fn window_ranges(total_frames: usize, n: usize) -> Result<Vec<Range<usize>>> {
    if n == 0 {
        return Err(Error::InvalidInput("window size must be >= 1".to_string()));
    }
    if total_frames < n {
        return Err(Error::SequenceTooShort {
            need: n,
            got: total_frames,
        });
    }
    Ok((0..total_frames / n).map(|k| k * n..(k + 1) * n).collect())
}

/// Window membership after the seeded 80/10/10 shuffle split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Split `count` windows into train/val/test of sizes
/// `floor(0.8 n) / floor(0.1 n) / rest`, deterministically given the seed.
pub fn split_assignment(count: usize, seed: u64) -> SplitAssignment {
    let mut indices: Vec<usize> = (0..count).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    let n_train = (0.8 * count as f64).floor() as usize;
    let n_val = (0.1 * count as f64).floor() as usize;
    SplitAssignment {
        train: indices[..n_train].to_vec(),
        val: indices[n_train..n_train + n_val].to_vec(),
        test: indices[n_train + n_val..].to_vec(),
    }
}
