//! Window-set assembly: simulate a batch of sequences, put every modality on
//! the shared 25 Hz grid, normalize coordinates, and cut non-overlapping
//! training windows with the seeded 80/10/10 split.

use super::SensorSelection;
use crate::body::{BodyModel, Pose};
use crate::error::{Error, Result};
use crate::rotmath::v_sub;
use crate::streams::{
    relativize_translations, resample_to_grid, smooth, split_assignment, window_ranges, HeadPose,
    ImuSample, SplitAssignment, TimedStream,
};
use crate::synth::{
    apply_consumer_noise, gen_motion, simulate_camera_features, simulate_imu, simulate_slam_head,
    CameraView, MotionKind, MotionSequence, NoiseConfig, OcclusionInterval, SensorSite, SiteId,
};
use crate::util::subseed;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Acceleration channels are scaled by 1/|g| at input assembly so every
/// network input is O(1).
pub const ACCEL_SCALE: f64 = 1.0 / 9.81;

/// A noisy sensor stream is held at its last sample; gaps longer than this
/// zero the sensor's sub-vector instead.
pub const HOLD_LAST_MAX_GAP_S: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub num_sequences: usize,
    pub seq_duration_s: f64,
    /// Motion and dense-IMU rate.
    pub motion_rate_hz: f64,
    /// Camera and head-pose rate.
    pub camera_rate_hz: f64,
    /// Shared grid rate after alignment.
    pub target_rate_hz: f64,
    /// Raw visual feature width.
    pub feature_dim: usize,
    /// Noise template for the student's consumer sensors (re-seeded per
    /// sequence and site).
    pub noise: NoiseConfig,
    pub slam_drift_rate: f64,
    pub slam_scale: f64,
    /// Fraction of each sequence covered by camera-occlusion episodes.
    pub occlusion_fraction: f64,
    pub smooth_window: usize,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            num_sequences: 8,
            seq_duration_s: 52.0,
            motion_rate_hz: 100.0,
            camera_rate_hz: 30.0,
            target_rate_hz: 25.0,
            feature_dim: 512,
            noise: NoiseConfig::consumer(0),
            slam_drift_rate: 0.01,
            slam_scale: 0.8,
            occlusion_fraction: 0.2,
            smooth_window: 5,
            seed: 0,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_sequences < 1 || !(self.seq_duration_s > 0.0) {
            return Err(Error::Config(
                "need at least one sequence of positive duration".to_string(),
            ));
        }
        if !(self.target_rate_hz > 0.0)
            || self.target_rate_hz > self.motion_rate_hz
            || self.target_rate_hz > self.camera_rate_hz
        {
            return Err(Error::Config(
                "target rate must be positive and not above the native rates".to_string(),
            ));
        }
        self.noise.validate()?;
        Ok(())
    }
}

/// One training window: per-frame network inputs plus ground truth.
#[derive(Debug, Clone)]
pub struct TrainingWindow {
    /// N x (5 * 12) clean dense channels.
    pub teacher_imu: Vec<Vec<f64>>,
    /// N x (3 * 12) noisy sparse channels with validity applied.
    pub student_imu: Vec<Vec<f64>>,
    /// Per view: N x feature_dim.
    pub vis: [Vec<Vec<f64>>; 3],
    /// N x 12 first-frame-relative head pose.
    pub head: Vec<Vec<f64>>,
    /// N x 144.
    pub gt_rot: Vec<Vec<f64>>,
    /// N x 3.
    pub gt_trans: Vec<Vec<f64>>,
    /// Ground-truth poses (relativized), for the metric suite.
    pub gt_poses: Vec<Pose>,
}

#[derive(Debug, Clone)]
pub struct WindowSet {
    pub windows: Vec<TrainingWindow>,
    pub split: SplitAssignment,
    pub feature_dim: usize,
    pub window_len: usize,
}

impl WindowSet {
    pub fn frames_per_window(&self) -> usize {
        self.window_len
    }
}

fn imu_channels(sample: &ImuSample) -> [f64; 12] {
    let r = sample.orientation.as_flat();
    [
        r[0],
        r[1],
        r[2],
        r[3],
        r[4],
        r[5],
        r[6],
        r[7],
        r[8],
        sample.accel[0] * ACCEL_SCALE,
        sample.accel[1] * ACCEL_SCALE,
        sample.accel[2] * ACCEL_SCALE,
    ]
}

/// Hold-last sampling of a (possibly gappy) stream onto the grid, zeroing
/// the 12 channels whenever the last sample is older than the gap limit.
pub fn hold_last_imu_channels(stream: &TimedStream<ImuSample>, grid: &[f64]) -> Vec<[f64; 12]> {
    let ts = stream.timestamps();
    let mut out = Vec::with_capacity(grid.len());
    let mut last: Option<usize> = None;
    let mut cursor = 0usize;
    for &t in grid {
        while cursor < ts.len() && ts[cursor] <= t {
            last = Some(cursor);
            cursor += 1;
        }
        match last {
            Some(i) if t - ts[i] <= HOLD_LAST_MAX_GAP_S => {
                out.push(imu_channels(&stream.samples()[i]));
            }
            _ => out.push([0.0; 12]),
        }
    }
    out
}

fn head_pose_channels(pose: &HeadPose, base: &HeadPose) -> [f64; 12] {
    // First-frame-relative: the tracking module's world frame is arbitrary,
    // so inputs are expressed against the first sample of the sequence.
    let rel_rot = base.rotation.transpose().mul(&pose.rotation);
    let rel_t = base
        .rotation
        .transpose()
        .apply(v_sub(pose.translation, base.translation));
    let r = rel_rot.as_flat();
    [
        r[0], r[1], r[2], r[3], r[4], r[5], r[6], r[7], r[8], rel_t[0], rel_t[1], rel_t[2],
    ]
}

fn pose_rows(pose: &Pose) -> (Vec<f64>, Vec<f64>) {
    let mut rot = Vec::with_capacity(144);
    for r in &pose.rot {
        rot.extend_from_slice(&r.0);
    }
    (rot, pose.trans.to_vec())
}

/// Seeded occlusion episodes covering roughly `fraction` of the duration.
fn occlusion_intervals(
    duration: f64,
    fraction: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<OcclusionInterval> {
    if fraction <= 0.0 {
        return Vec::new();
    }
    let mut intervals = Vec::new();
    let mut covered = 0.0;
    let target = fraction * duration;
    while covered < target {
        let len = rng.gen_range(0.5..2.0f64).min(target - covered + 0.2);
        let start = rng.gen_range(0.0..(duration - len).max(0.1));
        intervals.push(OcclusionInterval {
            start,
            end: start + len,
        });
        covered += len;
    }
    intervals
}

/// One sequence's streams in the post-alignment state: a shared clock, dense
/// clean IMU, sparse noisy IMU, per-view features, head poses, and ground
/// truth motion.
#[derive(Debug, Clone)]
pub struct SequenceStreams {
    pub clean: Vec<(SiteId, TimedStream<ImuSample>)>,
    pub noisy: Vec<(SiteId, TimedStream<ImuSample>)>,
    pub feats: Vec<TimedStream<Vec<f64>>>,
    pub head: TimedStream<HeadPose>,
    pub motion: MotionSequence,
}

/// Simulate one sequence's streams on a shared clock.
pub fn simulate_sequence_streams(
    cfg: &DatasetConfig,
    selection: &SensorSelection,
    seq_index: usize,
) -> Result<SequenceStreams> {
    let model = BodyModel::builtin();
    let kinds = [
        MotionKind::Mixed,
        MotionKind::Walk,
        MotionKind::Wave,
        MotionKind::Sit,
    ];
    let seq_seed = subseed(cfg.seed, &format!("sequence_{seq_index}"));
    let kind = kinds[seq_index % kinds.len()];
    let motion = gen_motion(kind, cfg.seq_duration_s, cfg.motion_rate_hz, seq_seed)?;

    // Dense IMU streams at motion rate. Consumer noise corrupts the raw
    // signal; the smoothing filter is a preprocessing step and so runs after.
    let mut clean: Vec<(SiteId, TimedStream<ImuSample>)> = Vec::new();
    let mut noisy: Vec<(SiteId, TimedStream<ImuSample>)> = Vec::new();
    for &site in &selection.teacher {
        let raw = simulate_imu(&motion, &model.tree, &SensorSite::default_for(site))?;
        if selection.student.contains(&site) {
            let noise = NoiseConfig {
                seed: subseed(seq_seed, &format!("noise_{}", site.name())),
                ..cfg.noise.clone()
            };
            let corrupted = apply_consumer_noise(&raw, &noise)?;
            noisy.push((site, smooth(&corrupted, cfg.smooth_window)?));
        }
        clean.push((site, smooth(&raw, cfg.smooth_window)?));
    }
    noisy.sort_by_key(|(site, _)| {
        selection
            .student
            .iter()
            .position(|s| s == site)
            .expect("student site")
    });

    // Camera-rate motion for features and head poses.
    let cam_frames: Vec<Pose> = {
        let step = cfg.motion_rate_hz / cfg.camera_rate_hz;
        let count = (motion.frames.len() as f64 / step).floor() as usize;
        (0..count)
            .map(|i| motion.frames[(i as f64 * step).round() as usize % motion.frames.len()].clone())
            .collect()
    };
    let cam_motion = MotionSequence {
        rate_hz: cfg.camera_rate_hz,
        start_time: 0.0,
        frames: cam_frames,
    };
    let mut occ_rng = ChaCha8Rng::seed_from_u64(subseed(seq_seed, "occlusion"));
    let occlusion = occlusion_intervals(cfg.seq_duration_s, cfg.occlusion_fraction, &mut occ_rng);
    let feats: Vec<TimedStream<Vec<f64>>> = CameraView::ALL
        .iter()
        .map(|&view| {
            simulate_camera_features(
                &cam_motion,
                &model.tree,
                view,
                &occlusion,
                cfg.feature_dim,
                subseed(cfg.seed, "camera_map"),
            )
        })
        .collect::<Result<_>>()?;
    let head = simulate_slam_head(
        &cam_motion,
        &model.tree,
        cfg.slam_drift_rate,
        cfg.slam_scale,
        subseed(seq_seed, "slam"),
    )?;
    Ok(SequenceStreams {
        clean,
        noisy,
        feats,
        head,
        motion,
    })
}

/// Cut one aligned sequence into training windows: shared 25 Hz grid,
/// nearest-neighbor clean channels, hold-last noisy channels, first-frame
/// relative head poses, and relativized ground truth.
pub fn windows_from_streams(
    seq: &SequenceStreams,
    target_rate_hz: f64,
    window_len: usize,
) -> Result<Vec<TrainingWindow>> {
    let model = BodyModel::builtin();
    let motion = &seq.motion;

    // Shared grid across all modalities.
    let t0 = seq.feats[0].timestamps()[0]
        .max(seq.head.timestamps()[0])
        .max(motion.start_time);
    let t_end = seq.feats[0]
        .timestamps()
        .last()
        .unwrap()
        .min(*seq.head.timestamps().last().unwrap())
        .min(motion.start_time + (motion.frames.len() - 1) as f64 / motion.rate_hz);
    if t_end <= t0 {
        return Err(Error::SequenceTooShort {
            need: window_len,
            got: 0,
        });
    }
    let n_grid = ((t_end - t0) * target_rate_hz).floor() as usize + 1;
    let grid: Vec<f64> = (0..n_grid).map(|k| t0 + k as f64 / target_rate_hz).collect();

    // Ground truth on the grid, then relativized.
    let motion_ts = motion.timestamps();
    let gt_stream = TimedStream::new(motion_ts, motion.frames.clone(), motion.rate_hz)?;
    let gt_frames = resample_to_grid(&gt_stream, &grid)?;
    let gt_on_grid = MotionSequence {
        rate_hz: target_rate_hz,
        start_time: t0,
        frames: gt_frames,
    };
    let (gt_rel, _) = relativize_translations(&model.tree, &gt_on_grid)?;

    // Teacher channels: nearest-neighbor clean samples.
    let teacher_rows: Vec<Vec<[f64; 12]>> = seq
        .clean
        .iter()
        .map(|(_, stream)| {
            resample_to_grid(stream, &grid)
                .map(|samples| samples.iter().map(imu_channels).collect())
        })
        .collect::<Result<_>>()?;
    // Student channels: hold-last with gap zeroing.
    let student_rows: Vec<Vec<[f64; 12]>> = seq
        .noisy
        .iter()
        .map(|(_, stream)| Ok(hold_last_imu_channels(stream, &grid)))
        .collect::<Result<_>>()?;

    let feat_rows: Vec<Vec<Vec<f64>>> = seq
        .feats
        .iter()
        .map(|stream| resample_to_grid(stream, &grid))
        .collect::<Result<_>>()?;
    let head_samples = resample_to_grid(&seq.head, &grid)?;
    let head_base = head_samples[0].clone();
    let head_rows: Vec<[f64; 12]> = head_samples
        .iter()
        .map(|h| head_pose_channels(h, &head_base))
        .collect();

    let mut windows = Vec::new();
    for range in window_ranges(grid.len(), window_len)? {
        let teacher_imu: Vec<Vec<f64>> = range
            .clone()
            .map(|t| {
                teacher_rows
                    .iter()
                    .flat_map(|site| site[t].iter().copied())
                    .collect()
            })
            .collect();
        let student_imu: Vec<Vec<f64>> = range
            .clone()
            .map(|t| {
                student_rows
                    .iter()
                    .flat_map(|site| site[t].iter().copied())
                    .collect()
            })
            .collect();
        let vis = [
            feat_rows[0][range.clone()].to_vec(),
            feat_rows[1][range.clone()].to_vec(),
            feat_rows[2][range.clone()].to_vec(),
        ];
        let head: Vec<Vec<f64>> = range.clone().map(|t| head_rows[t].to_vec()).collect();
        let mut gt_rot = Vec::with_capacity(window_len);
        let mut gt_trans = Vec::with_capacity(window_len);
        let mut gt_poses = Vec::with_capacity(window_len);
        for t in range {
            let (r, tr) = pose_rows(&gt_rel.frames[t]);
            gt_rot.push(r);
            gt_trans.push(tr);
            gt_poses.push(gt_rel.frames[t].clone());
        }
        windows.push(TrainingWindow {
            teacher_imu,
            student_imu,
            vis,
            head,
            gt_rot,
            gt_trans,
            gt_poses,
        });
    }
    Ok(windows)
}

/// Build the full window set from simulated sequences. The streams come out
/// already aligned (the offset-recovery path is exercised by the file-based
/// pipeline and its own tests).
pub fn build_window_set(
    cfg: &DatasetConfig,
    selection: &SensorSelection,
    window_len: usize,
    split_seed: u64,
) -> Result<WindowSet> {
    cfg.validate()?;
    selection.validate()?;
    let mut windows = Vec::new();
    for s in 0..cfg.num_sequences {
        let seq = simulate_sequence_streams(cfg, selection, s)?;
        windows.extend(windows_from_streams(&seq, cfg.target_rate_hz, window_len)?);
    }
    if windows.is_empty() {
        return Err(Error::SequenceTooShort {
            need: window_len,
            got: 0,
        });
    }
    let split = split_assignment(windows.len(), split_seed);
    Ok(WindowSet {
        feature_dim: cfg.feature_dim,
        window_len,
        windows,
        split,
    })
}

impl TrainingWindow {
    pub fn frames(&self) -> usize {
        self.gt_rot.len()
    }
}
