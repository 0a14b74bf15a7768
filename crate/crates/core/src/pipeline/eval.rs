//! Evaluation over a window set with ablation masking: ablated input
//! channels are zeroed (validity cleared), mirroring how a missing modality
//! reaches the network.

use super::dataset::WindowSet;
use super::train::batch_inputs;
use super::SensorSelection;
use crate::body::{BodyModel, Pose, JOINT_COUNT};
use crate::error::{Error, Result};
use crate::metrics::{aggregate, window_metrics, MetricsReport};
use crate::nn::graph::Graph;
use crate::nn::model::{model_forward, BatchInputs, BoundParams, ModelParams, ROTATION_WIDTH};
use crate::rotmath::Rot6D;
use crate::synth::SiteId;
use crate::util::subseed;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// All modalities as trained.
    Full,
    /// Visual features and head poses zeroed: inertial channels only.
    ImuOnly,
    /// All IMU channels zeroed: cameras only.
    CamsOnly,
    /// One sensor site's channels zeroed.
    DropSite(SiteId),
    /// Camera features zeroed on a seeded fraction of frames.
    OccludeCams { fraction: f64, seed: u64 },
}

impl EvalMode {
    pub fn name(&self) -> String {
        match self {
            EvalMode::Full => "full".to_string(),
            EvalMode::ImuOnly => "imu_only".to_string(),
            EvalMode::CamsOnly => "cams_only".to_string(),
            EvalMode::DropSite(site) => format!("drop_{}", site.name()),
            EvalMode::OccludeCams { fraction, .. } => format!("occlude_cams_{fraction}"),
        }
    }

    pub fn parse(s: &str) -> Result<EvalMode> {
        match s {
            "full" => Ok(EvalMode::Full),
            "imu_only" => Ok(EvalMode::ImuOnly),
            "cams_only" => Ok(EvalMode::CamsOnly),
            other => {
                if let Some(site) = other.strip_prefix("drop_") {
                    for s in SiteId::ALL {
                        if s.name() == site {
                            return Ok(EvalMode::DropSite(s));
                        }
                    }
                    return Err(Error::Config(format!("unknown site in mode {other:?}")));
                }
                if let Some(frac) = other.strip_prefix("occlude_cams_") {
                    let fraction: f64 = frac
                        .parse()
                        .map_err(|_| Error::Config(format!("bad occlusion fraction {frac:?}")))?;
                    return Ok(EvalMode::OccludeCams { fraction, seed: 0 });
                }
                Err(Error::Config(format!("unknown eval mode {other:?}")))
            }
        }
    }
}

fn zero_tensor_rows(t: &mut crate::nn::tensor::Tensor) {
    for v in t.data_mut() {
        *v = 0.0;
    }
}

fn zero_cols(t: &mut crate::nn::tensor::Tensor, start: usize, end: usize) {
    let cols = t.cols();
    let rows = t.rows();
    let data = t.data_mut();
    for r in 0..rows {
        for c in start..end {
            data[r * cols + c] = 0.0;
        }
    }
}

fn zero_row_cols(t: &mut crate::nn::tensor::Tensor, row: usize) {
    let cols = t.cols();
    let data = t.data_mut();
    for c in 0..cols {
        data[row * cols + c] = 0.0;
    }
}

/// Apply the ablation mask in place. `sites` is the ordered site list the
/// IMU channel blocks follow; `window_ids` give each batch row's global
/// window index for the seeded occlusion mask.
fn apply_mode(
    inputs: &mut BatchInputs,
    mode: &EvalMode,
    sites: &[SiteId],
    window_ids: &[usize],
) {
    match mode {
        EvalMode::Full => {}
        EvalMode::ImuOnly => {
            for view in &mut inputs.vis {
                for t in view.iter_mut() {
                    zero_tensor_rows(t);
                }
            }
            for t in &mut inputs.head {
                zero_tensor_rows(t);
            }
        }
        EvalMode::CamsOnly => {
            for t in &mut inputs.imu {
                zero_tensor_rows(t);
            }
        }
        EvalMode::DropSite(site) => {
            if let Some(block) = sites.iter().position(|s| s == site) {
                for t in &mut inputs.imu {
                    zero_cols(t, block * 12, (block + 1) * 12);
                }
            }
        }
        EvalMode::OccludeCams { fraction, seed } => {
            for (row, &widx) in window_ids.iter().enumerate() {
                let mut rng = ChaCha8Rng::seed_from_u64(subseed(*seed, &format!("occl_{widx}")));
                for t in 0..inputs.vis[0].len() {
                    let masked = rng.gen::<f64>() < *fraction;
                    if masked {
                        for view in &mut inputs.vis {
                            zero_row_cols(&mut view[t], row);
                        }
                    }
                }
            }
        }
    }
}

/// Convert one window's network outputs into poses.
fn outputs_to_poses(rows: &[Vec<f64>]) -> Vec<Pose> {
    rows.iter()
        .map(|row| {
            let mut rot = Vec::with_capacity(JOINT_COUNT);
            for j in 0..JOINT_COUNT {
                let o = 6 * j;
                rot.push(Rot6D([
                    row[o],
                    row[o + 1],
                    row[o + 2],
                    row[o + 3],
                    row[o + 4],
                    row[o + 5],
                ]));
            }
            Pose {
                trans: [
                    row[ROTATION_WIDTH],
                    row[ROTATION_WIDTH + 1],
                    row[ROTATION_WIDTH + 2],
                ],
                rot,
            }
        })
        .collect()
}

/// Evaluate a model over the listed windows, applying the masks in order
/// (they compose), and aggregate the metric suite.
pub fn evaluate(
    params: &ModelParams,
    ws: &WindowSet,
    indices: &[usize],
    modes: &[EvalMode],
    selection: &SensorSelection,
    batch_size: usize,
) -> Result<MetricsReport> {
    if indices.is_empty() {
        return Err(Error::EmptyStream);
    }
    let model = BodyModel::builtin();
    let use_student = params.config.num_sensors == selection.student.len();
    let sites: &[SiteId] = if use_student {
        &selection.student
    } else {
        &selection.teacher
    };
    let mut per_window = Vec::with_capacity(indices.len());
    for chunk in indices.chunks(batch_size.max(1)) {
        let mut inputs = batch_inputs(&ws.windows, chunk, use_student, ws.feature_dim);
        for mode in modes {
            apply_mode(&mut inputs, mode, sites, chunk);
        }
        let mut g = Graph::new();
        let bp = BoundParams::bind(&mut g, params);
        let out = model_forward(&mut g, &bp, &params.config, &inputs)?;
        for (row, &widx) in chunk.iter().enumerate() {
            let rows: Vec<Vec<f64>> = out
                .outputs
                .iter()
                .map(|v| {
                    let t = g.value(*v);
                    t.data()[row * t.cols()..(row + 1) * t.cols()].to_vec()
                })
                .collect();
            let pred = outputs_to_poses(&rows);
            per_window.push(window_metrics(
                &pred,
                &ws.windows[widx].gt_poses,
                &model.tree,
                &model.mesh,
            )?);
        }
    }
    aggregate(per_window)
}

/// Evaluate ground truth against itself through the same plumbing: a
/// self-check that the prediction path is lossless.
pub fn evaluate_ground_truth(ws: &WindowSet, indices: &[usize]) -> Result<MetricsReport> {
    let model = BodyModel::builtin();
    let mut per_window = Vec::with_capacity(indices.len());
    for &i in indices {
        let w = &ws.windows[i];
        // Rebuild poses from the flat rows exactly as predictions would be.
        let rows: Vec<Vec<f64>> = w
            .gt_rot
            .iter()
            .zip(&w.gt_trans)
            .map(|(r, t)| {
                let mut row = r.clone();
                row.extend_from_slice(t);
                row
            })
            .collect();
        let pred = outputs_to_poses(&rows);
        per_window.push(window_metrics(
            &pred,
            &w.gt_poses,
            &model.tree,
            &model.mesh,
        )?);
    }
    aggregate(per_window)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::dataset::{build_window_set, DatasetConfig};
    use crate::pipeline::train::train_teacher;
    use crate::pipeline::TrainConfig;

    fn tiny() -> (WindowSet, ModelParams) {
        let ws = build_window_set(
            &DatasetConfig {
                num_sequences: 1,
                seq_duration_s: 5.0,
                feature_dim: 8,
                seed: 5,
                ..DatasetConfig::default()
            },
            &SensorSelection::default(),
            25,
            3,
        )
        .unwrap();
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 4,
            hidden_size: 8,
            visual_adapter_dim: 4,
            seed: 11,
            ..TrainConfig::default()
        };
        let teacher = train_teacher(&ws, &cfg).unwrap();
        (ws, teacher.params)
    }

    #[test]
    fn ground_truth_scores_zero() {
        let (ws, _) = tiny();
        let idx: Vec<usize> = (0..ws.windows.len()).collect();
        let report = evaluate_ground_truth(&ws, &idx).unwrap();
        assert!(report.mpjpe_cm < 1e-9);
        assert!(report.mpjve_cm < 1e-9);
        assert!(report.root_pe_cm < 1e-9);
        assert!(report.mpjre_deg < 1e-6);
    }

    #[test]
    fn masked_modes_change_predictions() {
        let (ws, params) = tiny();
        let idx: Vec<usize> = (0..2).collect();
        let sel = SensorSelection::default();
        let full = evaluate(&params, &ws, &idx, &[EvalMode::Full], &sel, 4).unwrap();
        let imu_only = evaluate(&params, &ws, &idx, &[EvalMode::ImuOnly], &sel, 4).unwrap();
        let cams_only = evaluate(&params, &ws, &idx, &[EvalMode::CamsOnly], &sel, 4).unwrap();
        assert_ne!(full.mpjpe_cm, imu_only.mpjpe_cm);
        assert_ne!(full.mpjpe_cm, cams_only.mpjpe_cm);
        let dropped = evaluate(
            &params,
            &ws,
            &idx,
            &[EvalMode::DropSite(SiteId::Head)],
            &sel,
            4,
        )
        .unwrap();
        assert_ne!(full.mpjpe_cm, dropped.mpjpe_cm);
    }

    #[test]
    fn occlusion_mask_deterministic() {
        let (ws, params) = tiny();
        let idx: Vec<usize> = (0..2).collect();
        let sel = SensorSelection::default();
        let mode = EvalMode::OccludeCams {
            fraction: 0.5,
            seed: 9,
        };
        let combined = evaluate(
            &params,
            &ws,
            &idx,
            &[EvalMode::CamsOnly, mode],
            &sel,
            4,
        )
        .unwrap();
        assert!(combined.mpjpe_cm.is_finite());
        let a = evaluate(&params, &ws, &idx, &[mode], &sel, 4).unwrap();
        let b = evaluate(&params, &ws, &idx, &[mode], &sel, 1).unwrap();
        // Same mask regardless of batching.
        assert_eq!(a.mpjpe_cm, b.mpjpe_cm);
    }

    #[test]
    fn mode_names_roundtrip() {
        for mode in [
            EvalMode::Full,
            EvalMode::ImuOnly,
            EvalMode::CamsOnly,
            EvalMode::DropSite(SiteId::LeftWrist),
        ] {
            let parsed = EvalMode::parse(&mode.name()).unwrap();
            assert_eq!(parsed, mode);
        }
        assert!(EvalMode::parse("bogus").is_err());
    }
}
