//! Teacher training, student initialization, and distillation.

use super::dataset::{TrainingWindow, WindowSet};
use super::schedule::lambda_at_epoch;
use super::TrainConfig;
use crate::error::{Error, Result};
use crate::nn::adam::{adam_step, AdamHyper, AdamState};
use crate::nn::graph::Graph;
use crate::nn::loss::{
    kd_feat_loss_graph, kd_output_loss_graph, pose_loss_graph, student_loss_graph,
    teacher_loss_graph, trans_loss_graph, LossWeights,
};
use crate::nn::model::{
    model_forward, BatchInputs, BoundParams, ModelConfig, ModelParams, ENCODER_PARAM_NAMES,
    ROTATION_WIDTH,
};
use crate::nn::tensor::Tensor;
use crate::util::subseed;
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub epoch: usize,
    pub loss_train: f64,
    pub loss_val: f64,
    pub lambda_output: f64,
    pub lambda_feat: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub curve: Vec<TrainRecord>,
}

impl TrainOutcome {
    pub fn curve_csv(&self) -> String {
        let mut out = String::from("epoch,loss_train,loss_val,lambda_output,lambda_feat\n");
        for r in &self.curve {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.epoch, r.loss_train, r.loss_val, r.lambda_output, r.lambda_feat
            ));
        }
        out
    }
}

fn stack_rows(rows: impl Iterator<Item = Vec<f64>>, cols: usize) -> Tensor {
    let mut data = Vec::new();
    let mut count = 0;
    for row in rows {
        debug_assert_eq!(row.len(), cols);
        data.extend_from_slice(&row);
        count += 1;
    }
    Tensor::matrix(count, cols, data).expect("stacked rows")
}

/// Time-major batch tensors for the listed windows.
pub fn batch_inputs(
    windows: &[TrainingWindow],
    idxs: &[usize],
    use_student_imu: bool,
    feature_dim: usize,
) -> BatchInputs {
    let n = windows[idxs[0]].frames();
    let imu_cols = if use_student_imu {
        windows[idxs[0]].student_imu[0].len()
    } else {
        windows[idxs[0]].teacher_imu[0].len()
    };
    let frame_imu = |t: usize| {
        stack_rows(
            idxs.iter().map(|&i| {
                if use_student_imu {
                    windows[i].student_imu[t].clone()
                } else {
                    windows[i].teacher_imu[t].clone()
                }
            }),
            imu_cols,
        )
    };
    let frame_vis = |view: usize, t: usize| {
        stack_rows(idxs.iter().map(|&i| windows[i].vis[view][t].clone()), feature_dim)
    };
    let frame_head =
        |t: usize| stack_rows(idxs.iter().map(|&i| windows[i].head[t].clone()), 12);
    BatchInputs {
        imu: (0..n).map(frame_imu).collect(),
        vis: [
            (0..n).map(|t| frame_vis(0, t)).collect(),
            (0..n).map(|t| frame_vis(1, t)).collect(),
            (0..n).map(|t| frame_vis(2, t)).collect(),
        ],
        head: (0..n).map(frame_head).collect(),
    }
}

fn batch_gt(windows: &[TrainingWindow], idxs: &[usize]) -> (Vec<Tensor>, Vec<Tensor>) {
    let n = windows[idxs[0]].frames();
    let rot = (0..n)
        .map(|t| stack_rows(idxs.iter().map(|&i| windows[i].gt_rot[t].clone()), 144))
        .collect();
    let trans = (0..n)
        .map(|t| stack_rows(idxs.iter().map(|&i| windows[i].gt_trans[t].clone()), 3))
        .collect();
    (rot, trans)
}

fn teacher_model_config(ws: &WindowSet, cfg: &TrainConfig) -> ModelConfig {
    ModelConfig {
        num_sensors: 5,
        feature_dim: ws.feature_dim,
        visual_adapter_dim: cfg.visual_adapter_dim,
        hidden_size: cfg.hidden_size,
    }
}

fn check_finite(loss: f64, what: &str) -> Result<()> {
    if !loss.is_finite() {
        return Err(Error::NumericFailure(format!("{what} loss is {loss}")));
    }
    Ok(())
}

/// Forward + uncertainty-weighted loss for one batch; returns the scalar
/// loss value and, when `train` is set, applies one optimizer step.
fn teacher_batch(
    params: &mut ModelParams,
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    inputs: &BatchInputs,
    gt: &(Vec<Tensor>, Vec<Tensor>),
    weights: &LossWeights,
    state: Option<&mut AdamState>,
) -> Result<f64> {
    let mut g = Graph::new();
    let bp = BoundParams::bind(&mut g, params);
    let out = model_forward(&mut g, &bp, model_cfg, inputs)?;
    let lp = pose_loss_graph(&mut g, &out.outputs, &gt.0, weights)?;
    let lt = trans_loss_graph(&mut g, &out.outputs, &gt.1)?;
    let loss = teacher_loss_graph(
        &mut g,
        lp,
        lt,
        bp.var("log_var.pose"),
        bp.var("log_var.trans"),
    )?;
    let value = g.value(loss).item();
    if let Some(state) = state {
        let grads = g.backward(loss)?;
        let named = bp.collect_grads(params, &grads);
        adam_step(params, &named, state, &AdamHyper::default(), &|_| {
            cfg.lr_teacher
        });
    }
    Ok(value)
}

/// Train the teacher on the training split, logging per-epoch train and
/// validation loss. Deterministic given the config seed.
pub fn train_teacher(ws: &WindowSet, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let model_cfg = teacher_model_config(ws, cfg);
    let mut params = ModelParams::init(model_cfg, subseed(cfg.seed, "teacher_init"));
    let weights = LossWeights::default();
    let mut state = AdamState::new();
    let mut curve = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut order = ws.split.train.clone();
        let mut rng =
            ChaCha8Rng::seed_from_u64(subseed(cfg.seed, &format!("teacher_shuffle_{epoch}")));
        order.shuffle(&mut rng);

        let mut train_loss = 0.0;
        let mut seen = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let inputs = batch_inputs(&ws.windows, chunk, false, ws.feature_dim);
            let gt = batch_gt(&ws.windows, chunk);
            let loss = teacher_batch(
                &mut params,
                cfg,
                &model_cfg,
                &inputs,
                &gt,
                &weights,
                Some(&mut state),
            )?;
            check_finite(loss, "teacher train")?;
            train_loss += loss * chunk.len() as f64;
            seen += chunk.len();
        }
        train_loss /= seen.max(1) as f64;

        let loss_val = if ws.split.val.is_empty() {
            f64::NAN
        } else {
            let mut total = 0.0;
            for chunk in ws.split.val.chunks(cfg.batch_size) {
                let inputs = batch_inputs(&ws.windows, chunk, false, ws.feature_dim);
                let gt = batch_gt(&ws.windows, chunk);
                total += teacher_batch(
                    &mut params,
                    cfg,
                    &model_cfg,
                    &inputs,
                    &gt,
                    &weights,
                    None,
                )? * chunk.len() as f64;
            }
            total / ws.split.val.len() as f64
        };

        curve.push(TrainRecord {
            epoch,
            loss_train: train_loss,
            loss_val,
            lambda_output: 0.0,
            lambda_feat: 0.0,
        });
    }
    if !params.all_finite() {
        return Err(Error::NumericFailure(
            "non-finite teacher parameters".to_string(),
        ));
    }
    Ok(TrainOutcome { params, curve })
}

/// Copy every teacher parameter except the IMU encoder, which is freshly
/// initialized for the student's sensor count.
pub fn init_student_from_teacher(
    teacher: &ModelParams,
    num_sensors: usize,
    seed: u64,
) -> ModelParams {
    teacher.with_fresh_encoder(num_sensors, seed)
}

/// Frozen-teacher predictions per window: per-frame rotation rows and
/// encoder features, computed once up front (the teacher never changes
/// during distillation, so per-batch recomputation would be identical).
struct TeacherCache {
    /// window -> frame -> 144 rotation values per batch row.
    rot: Vec<Vec<Vec<f64>>>,
    /// window -> frame -> 128 feature values.
    feat: Vec<Vec<Vec<f64>>>,
}

fn build_teacher_cache(
    ws: &WindowSet,
    teacher: &ModelParams,
    cfg: &TrainConfig,
) -> Result<TeacherCache> {
    let model_cfg = teacher.config;
    let all: Vec<usize> = (0..ws.windows.len()).collect();
    let mut rot = vec![Vec::new(); ws.windows.len()];
    let mut feat = vec![Vec::new(); ws.windows.len()];
    for chunk in all.chunks(cfg.batch_size) {
        let inputs = batch_inputs(&ws.windows, chunk, false, ws.feature_dim);
        let mut g = Graph::new();
        let bp = BoundParams::bind(&mut g, teacher);
        let out = model_forward(&mut g, &bp, &model_cfg, &inputs)?;
        for (t, (o, f)) in out.outputs.iter().zip(&out.imu_features).enumerate() {
            let ov = g.value(*o);
            let fv = g.value(*f);
            for (row, &widx) in chunk.iter().enumerate() {
                let or = &ov.data()[row * ov.cols()..row * ov.cols() + ROTATION_WIDTH];
                let fr = &fv.data()[row * fv.cols()..(row + 1) * fv.cols()];
                if t == 0 && rot[widx].is_empty() {
                    rot[widx] = Vec::with_capacity(inputs.imu.len());
                    feat[widx] = Vec::with_capacity(inputs.imu.len());
                }
                rot[widx].push(or.to_vec());
                feat[widx].push(fr.to_vec());
            }
        }
    }
    Ok(TeacherCache { rot, feat })
}

struct StudentBatchLosses {
    total: f64,
}

#[allow(clippy::too_many_arguments)]
fn student_batch(
    params: &mut ModelParams,
    cfg: &TrainConfig,
    ws: &WindowSet,
    cache: &TeacherCache,
    chunk: &[usize],
    weights: &LossWeights,
    lambda_output: f64,
    lambda_feat: f64,
    state: Option<&mut AdamState>,
) -> Result<StudentBatchLosses> {
    let model_cfg = params.config;
    let inputs = batch_inputs(&ws.windows, chunk, true, ws.feature_dim);
    let gt = batch_gt(&ws.windows, chunk);
    let n = inputs.frames();
    let teacher_rot: Vec<Tensor> = (0..n)
        .map(|t| stack_rows(chunk.iter().map(|&i| cache.rot[i][t].clone()), 144))
        .collect();
    let teacher_feat: Vec<Tensor> = (0..n)
        .map(|t| {
            stack_rows(
                chunk.iter().map(|&i| cache.feat[i][t].clone()),
                cache.feat[chunk[0]][t].len(),
            )
        })
        .collect();

    let mut g = Graph::new();
    let bp = BoundParams::bind(&mut g, params);
    let out = model_forward(&mut g, &bp, &model_cfg, &inputs)?;
    let lp = pose_loss_graph(&mut g, &out.outputs, &gt.0, weights)?;
    let lt = trans_loss_graph(&mut g, &out.outputs, &gt.1)?;
    let l_motion = teacher_loss_graph(
        &mut g,
        lp,
        lt,
        bp.var("log_var.pose"),
        bp.var("log_var.trans"),
    )?;
    let l_out = kd_output_loss_graph(&mut g, &out.outputs, &teacher_rot)?;
    let l_feat = kd_feat_loss_graph(&mut g, &out.imu_features, &teacher_feat)?;
    let total = student_loss_graph(
        &mut g,
        l_motion,
        l_out,
        l_feat,
        cfg.lambda_motion,
        lambda_output,
        lambda_feat,
    )?;
    let value = g.value(total).item();
    if let Some(state) = state {
        let grads = g.backward(total)?;
        let named = bp.collect_grads(params, &grads);
        adam_step(params, &named, state, &AdamHyper::default(), &|name| {
            if ENCODER_PARAM_NAMES.contains(&name) {
                cfg.lr_student_encoder
            } else {
                cfg.lr_student_rest
            }
        });
    }
    Ok(StudentBatchLosses { total: value })
}

/// Distill the frozen teacher into a student running on sparse noisy
/// sensors. The encoder trains at `lr_student_encoder`, everything else at
/// `lr_student_rest`; the distillation lambdas decay on the configured
/// schedule.
pub fn train_student(
    ws: &WindowSet,
    teacher: &ModelParams,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let num_sensors = ws.windows[0].student_imu[0].len() / 12;
    let mut params =
        init_student_from_teacher(teacher, num_sensors, subseed(cfg.seed, "student_encoder_init"));
    let weights = LossWeights::default();
    let cache = build_teacher_cache(ws, teacher, cfg)?;
    let mut state = AdamState::new();
    let mut curve = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let lambda_output =
            lambda_at_epoch(cfg.lambda_output, cfg.lambda_decay, cfg.lambda_decay_every, epoch);
        let lambda_feat =
            lambda_at_epoch(cfg.lambda_feat, cfg.lambda_decay, cfg.lambda_decay_every, epoch);

        let mut order = ws.split.train.clone();
        let mut rng =
            ChaCha8Rng::seed_from_u64(subseed(cfg.seed, &format!("student_shuffle_{epoch}")));
        order.shuffle(&mut rng);

        let mut train_loss = 0.0;
        let mut seen = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let losses = student_batch(
                &mut params,
                cfg,
                ws,
                &cache,
                chunk,
                &weights,
                lambda_output,
                lambda_feat,
                Some(&mut state),
            )?;
            check_finite(losses.total, "student train")?;
            train_loss += losses.total * chunk.len() as f64;
            seen += chunk.len();
        }
        train_loss /= seen.max(1) as f64;

        let loss_val = if ws.split.val.is_empty() {
            f64::NAN
        } else {
            let mut total = 0.0;
            for chunk in ws.split.val.chunks(cfg.batch_size) {
                total += student_batch(
                    &mut params,
                    cfg,
                    ws,
                    &cache,
                    chunk,
                    &weights,
                    lambda_output,
                    lambda_feat,
                    None,
                )?
                .total
                    * chunk.len() as f64;
            }
            total / ws.split.val.len() as f64
        };

        curve.push(TrainRecord {
            epoch,
            loss_train: train_loss,
            loss_val,
            lambda_output,
            lambda_feat,
        });
    }
    if !params.all_finite() {
        return Err(Error::NumericFailure(
            "non-finite student parameters".to_string(),
        ));
    }
    Ok(TrainOutcome { params, curve })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::dataset::{build_window_set, DatasetConfig};
    use crate::pipeline::SensorSelection;

    fn tiny_dataset() -> WindowSet {
        let cfg = DatasetConfig {
            num_sequences: 1,
            seq_duration_s: 5.0,
            feature_dim: 8,
            seed: 5,
            ..DatasetConfig::default()
        };
        build_window_set(&cfg, &SensorSelection::default(), 25, 3).unwrap()
    }

    fn tiny_train_cfg() -> TrainConfig {
        TrainConfig {
            epochs: 2,
            batch_size: 4,
            hidden_size: 8,
            visual_adapter_dim: 4,
            seed: 11,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn teacher_training_runs_and_is_deterministic() {
        let ws = tiny_dataset();
        let cfg = tiny_train_cfg();
        let a = train_teacher(&ws, &cfg).unwrap();
        let b = train_teacher(&ws, &cfg).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.curve.len(), 2);
        assert!(a.curve.iter().all(|r| r.loss_train.is_finite()));
    }

    #[test]
    fn student_distillation_runs_and_is_deterministic() {
        let ws = tiny_dataset();
        let cfg = tiny_train_cfg();
        let teacher = train_teacher(&ws, &cfg).unwrap();
        let a = train_student(&ws, &teacher.params, &cfg).unwrap();
        let b = train_student(&ws, &teacher.params, &cfg).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.curve[0].lambda_output, 0.5);
        assert_eq!(a.params.config.num_sensors, 3);
    }

    #[test]
    fn teacher_frozen_during_distillation() {
        let ws = tiny_dataset();
        let cfg = tiny_train_cfg();
        let teacher = train_teacher(&ws, &cfg).unwrap();
        let before = teacher.params.clone();
        let _ = train_student(&ws, &teacher.params, &cfg).unwrap();
        assert_eq!(teacher.params, before);
    }

    #[test]
    fn student_init_copies_everything_but_encoder() {
        let ws = tiny_dataset();
        let cfg = tiny_train_cfg();
        let teacher = train_teacher(&ws, &cfg).unwrap();
        let s1 = init_student_from_teacher(&teacher.params, 3, 1);
        let s2 = init_student_from_teacher(&teacher.params, 3, 2);
        assert_eq!(s1.enc_w1.shape(), &[36, 256]);
        assert_eq!(s1.lstm_fwd_wx, teacher.params.lstm_fwd_wx);
        assert_eq!(s1.log_var_pose, teacher.params.log_var_pose);
        assert_ne!(s1.enc_w1, s2.enc_w1);
        assert_eq!(s1.head_w, s2.head_w);
    }
}
