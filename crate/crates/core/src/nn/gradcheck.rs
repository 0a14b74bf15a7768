//! Central finite-difference validation of the analytic gradients, layer by
//! layer and loss by loss. Used by the test suites and runnable through the
//! `gradient_check` example.

use super::graph::{Graph, Var};
use super::loss::{
    kd_feat_loss_graph, kd_output_loss_graph, pose_loss_graph, student_loss_graph,
    teacher_loss_graph, trans_loss_graph, LossWeights,
};
use super::model::{model_forward, BatchInputs, BoundParams, ModelConfig, ModelParams, PARAM_NAMES};
use super::tensor::Tensor;
use crate::error::Result;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Finite-difference step.
const FD_STEP: f64 = 1e-5;
/// Guard for the relative-error denominator, keeping near-zero gradients
/// from blowing up the ratio.
const DENOM_GUARD: f64 = 1e-2;
/// Entries sampled per tensor when a tensor is too large to sweep fully.
const MAX_ENTRIES_PER_LEAF: usize = 24;

pub type LossBuilder = dyn Fn(&mut Graph, &[Var]) -> Result<Var>;

/// Worst relative error between analytic and central-difference gradients
/// over (a sample of) the entries of the checked leaves.
pub fn finite_diff_worst_error(
    leaves: &[Tensor],
    checked: &[usize],
    build: &LossBuilder,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let mut g = Graph::new();
    let vars: Vec<Var> = leaves.iter().map(|t| g.leaf(t.clone())).collect();
    let root = build(&mut g, &vars)?;
    let grads = g.backward(root)?;

    let eval = |perturbed: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = perturbed.iter().map(|t| g.leaf(t.clone())).collect();
        let root = build(&mut g, &vars)?;
        Ok(g.value(root).item())
    };

    let mut worst = 0.0f64;
    for &li in checked {
        let len = leaves[li].len();
        let mut entries: Vec<usize> = (0..len).collect();
        if len > MAX_ENTRIES_PER_LEAF {
            entries.shuffle(rng);
            entries.truncate(MAX_ENTRIES_PER_LEAF);
        }
        for e in entries {
            let mut plus = leaves.to_vec();
            plus[li].data_mut()[e] += FD_STEP;
            let mut minus = leaves.to_vec();
            minus[li].data_mut()[e] -= FD_STEP;
            let numeric = (eval(&plus)? - eval(&minus)?) / (2.0 * FD_STEP);
            let analytic = grads[vars[li].0]
                .as_ref()
                .map(|t| t.data()[e])
                .unwrap_or(0.0);
            let rel =
                (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(DENOM_GUARD);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone)]
pub struct CaseResult {
    pub name: &'static str,
    pub instances: usize,
    pub worst_rel_err: f64,
}

impl CaseResult {
    pub fn pass(&self, tolerance: f64) -> bool {
        self.worst_rel_err < tolerance
    }
}

fn rand_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Tensor {
    Tensor::matrix(
        rows,
        cols,
        (0..rows * cols)
            .map(|_| scale * rng.gen_range(-1.0..1.0))
            .collect(),
    )
    .expect("shape")
}

fn tiny_config(num_sensors: usize) -> ModelConfig {
    ModelConfig {
        num_sensors,
        feature_dim: 4,
        visual_adapter_dim: 2,
        hidden_size: 3,
    }
}

/// Leaf layout for model cases: the 20 parameters in `PARAM_NAMES` order,
/// followed by the per-frame inputs.
fn model_leaves(
    rng: &mut ChaCha8Rng,
    cfg: &ModelConfig,
    frames: usize,
    batch: usize,
) -> Vec<Tensor> {
    let params = ModelParams::init(*cfg, rng.gen());
    let mut leaves: Vec<Tensor> = PARAM_NAMES
        .iter()
        .map(|n| {
            // Parameters perturbed around their init so activations vary.
            let mut t = params.get(n).clone();
            for v in t.data_mut() {
                *v += 0.05 * rng.gen_range(-1.0..1.0f64);
            }
            t
        })
        .collect();
    for _ in 0..frames {
        leaves.push(rand_tensor(rng, batch, cfg.imu_input_width(), 0.8));
    }
    for _ in 0..3 {
        for _ in 0..frames {
            leaves.push(rand_tensor(rng, batch, cfg.feature_dim, 0.8));
        }
    }
    for _ in 0..frames {
        leaves.push(rand_tensor(rng, batch, 12, 0.8));
    }
    leaves
}

fn model_inputs_from_leaves(
    vars: &[Var],
    g: &Graph,
    frames: usize,
) -> (BoundParams, BatchInputs) {
    let bp = BoundParams {
        vars: PARAM_NAMES.iter().copied().zip(vars.iter().copied()).collect(),
    };
    let base = PARAM_NAMES.len();
    let grab = |offset: usize| -> Vec<Tensor> {
        (0..frames)
            .map(|t| g.value(vars[base + offset + t]).clone())
            .collect()
    };
    let inputs = BatchInputs {
        imu: grab(0),
        vis: [grab(frames), grab(2 * frames), grab(3 * frames)],
        head: grab(4 * frames),
    };
    (bp, inputs)
}

/// Run the standard battery: each named layer and loss, plus the full
/// teacher and student composites, `instances` random instances each.
pub fn run_standard_checks(instances: usize, seed: u64) -> Result<Vec<CaseResult>> {
    let mut results = Vec::new();
    let frames = 3;
    let batch = 2;

    // Aliases for leaf indices of the model layout.
    let param_idx = |name: &str| PARAM_NAMES.iter().position(|n| *n == name).unwrap();

    struct Case {
        name: &'static str,
        make: Box<dyn Fn(&mut ChaCha8Rng) -> (Vec<Tensor>, Vec<usize>, Box<LossBuilderOwned>)>,
    }
    type LossBuilderOwned = dyn Fn(&mut Graph, &[Var]) -> Result<Var>;

    let gt_rot = move |rng: &mut ChaCha8Rng| -> Vec<Tensor> {
        (0..frames).map(|_| rand_tensor(rng, batch, 144, 0.7)).collect()
    };
    let gt_trans = move |rng: &mut ChaCha8Rng| -> Vec<Tensor> {
        (0..frames).map(|_| rand_tensor(rng, batch, 3, 0.7)).collect()
    };

    let cases: Vec<Case> = vec![
        Case {
            name: "mlp_encoder",
            make: Box::new(move |rng| {
                let cfg = tiny_config(1);
                let leaves = model_leaves(rng, &cfg, 1, batch);
                let checked: Vec<usize> = ["enc.w1", "enc.b1", "enc.w2", "enc.b2"]
                    .iter()
                    .map(|n| param_idx(n))
                    .chain([PARAM_NAMES.len()])
                    .collect();
                let builder = move |g: &mut Graph, vars: &[Var]| -> Result<Var> {
                    let bp = BoundParams {
                        vars: PARAM_NAMES.iter().copied().zip(vars.iter().copied()).collect(),
                    };
                    let out = super::model::encoder_forward(g, &bp, vars[PARAM_NAMES.len()])?;
                    let sq = g.mul(out, out)?;
                    Ok(g.mean_all(sq))
                };
                (leaves, checked, Box::new(builder))
            }),
        },
        Case {
            name: "visual_adapter",
            make: Box::new(move |rng| {
                let cfg = tiny_config(1);
                let leaves = model_leaves(rng, &cfg, 1, batch);
                let base = PARAM_NAMES.len();
                let checked: Vec<usize> = ["vis.forward.w", "vis.forward.b"]
                    .iter()
                    .map(|n| param_idx(n))
                    .chain([base + 1])
                    .collect();
                let builder = move |g: &mut Graph, vars: &[Var]| -> Result<Var> {
                    let w = vars[PARAM_NAMES.iter().position(|n| *n == "vis.forward.w").unwrap()];
                    let b = vars[PARAM_NAMES.iter().position(|n| *n == "vis.forward.b").unwrap()];
                    let x = vars[PARAM_NAMES.len() + 1];
                    let y = g.matmul(x, w)?;
                    let y = g.add_row(y, b)?;
                    let sq = g.mul(y, y)?;
                    Ok(g.mean_all(sq))
                };
                (leaves, checked, Box::new(builder))
            }),
        },
        Case {
            name: "bilstm_head",
            make: Box::new(move |rng| {
                let cfg = tiny_config(1);
                let leaves = model_leaves(rng, &cfg, frames, batch);
                let mut checked: Vec<usize> = [
                    "lstm.fwd.wx",
                    "lstm.fwd.wh",
                    "lstm.fwd.b",
                    "lstm.bwd.wx",
                    "lstm.bwd.wh",
                    "lstm.bwd.b",
                    "head.w",
                    "head.b",
                ]
                .iter()
                .map(|n| param_idx(n))
                .collect();
                checked.push(PARAM_NAMES.len() + 1);
                let builder = move |g: &mut Graph, vars: &[Var]| -> Result<Var> {
                    let cfg = tiny_config(1);
                    let bp = BoundParams {
                        vars: PARAM_NAMES.iter().copied().zip(vars.iter().copied()).collect(),
                    };
                    // Random fused vectors stand in for the concatenated
                    // features; reuse the imu leaf slots widened to the
                    // fusion width via the encoder.
                    let (bp2, inputs) = (bp, ());
                    let _ = inputs;
                    let fused: Vec<Var> = (0..frames)
                        .map(|t| {
                            let x = vars[PARAM_NAMES.len() + t];
                            let u = super::model::encoder_forward(g, &bp2, x)?;
                            let head_leaf = vars[vars.len() - frames + t];
                            let pad = g.slice_cols(head_leaf, 0, 12)?;
                            let vis = g.slice_cols(u, 0, 3 * cfg.visual_adapter_dim)?;
                            g.concat_cols(&[u, vis, pad])
                        })
                        .collect::<Result<Vec<_>>>()?;
                    let outs = super::model::bilstm_head_forward(
                        g,
                        &bp2,
                        &fused,
                        cfg.hidden_size,
                        batch,
                    )?;
                    let mut acc: Option<Var> = None;
                    for o in outs {
                        let sq = g.mul(o, o)?;
                        let s = g.sum_all(sq);
                        acc = Some(match acc {
                            Some(a) => g.add(a, s)?,
                            None => s,
                        });
                    }
                    Ok(g.scale(acc.unwrap(), 1e-2))
                };
                (leaves, checked, Box::new(builder))
            }),
        },
        Case {
            name: "loss_pose",
            make: Box::new(move |rng| {
                let out: Vec<Tensor> =
                    (0..frames).map(|_| rand_tensor(rng, batch, 147, 0.7)).collect();
                let gts = gt_rot(rng);
                let leaves = out;
                let checked = vec![0, 1, 2];
                let builder = move |g: &mut Graph, vars: &[Var]| -> Result<Var> {
                    pose_loss_graph(g, vars, &gts, &LossWeights::default())
                };
                (leaves, checked, Box::new(builder))
            }),
        },
        Case {
            name: "loss_trans",
            make: Box::new(move |rng| {
                let out: Vec<Tensor> =
                    (0..frames).map(|_| rand_tensor(rng, batch, 147, 0.7)).collect();
                let gts = gt_trans(rng);
                let checked = vec![0, 1, 2];
                let builder = move |g: &mut Graph, vars: &[Var]| -> Result<Var> {
                    trans_loss_graph(g, vars, &gts)
                };
                (out, checked, Box::new(builder))
            }),
        },
        Case {
            name: "loss_teacher_uncertainty",
            make: Box::new(move |rng| {
                // Leaves: raw pose/trans "losses" (kept positive) and the
                // two log-variances.
                let leaves = vec![
                    Tensor::scalar(rng.gen_range(0.1..2.0)),
                    Tensor::scalar(rng.gen_range(0.1..2.0)),
                    Tensor::scalar(rng.gen_range(-1.0..1.0)),
                    Tensor::scalar(rng.gen_range(-1.0..1.0)),
                ];
                let checked = vec![0, 1, 2, 3];
                let builder = |g: &mut Graph, vars: &[Var]| -> Result<Var> {
                    teacher_loss_graph(g, vars[0], vars[1], vars[2], vars[3])
                };
                (leaves, checked, Box::new(builder))
            }),
        },
        Case {
            name: "loss_kd_output",
            make: Box::new(move |rng| {
                let out: Vec<Tensor> =
                    (0..frames).map(|_| rand_tensor(rng, batch, 147, 0.7)).collect();
                let teacher = gt_rot(rng);
                let checked = vec![0, 1, 2];
                let builder = move |g: &mut Graph, vars: &[Var]| -> Result<Var> {
                    kd_output_loss_graph(g, vars, &teacher)
                };
                (out, checked, Box::new(builder))
            }),
        },
        Case {
            name: "loss_kd_feat",
            make: Box::new(move |rng| {
                let feats: Vec<Tensor> =
                    (0..frames).map(|_| rand_tensor(rng, batch, 16, 0.7)).collect();
                let teacher: Vec<Tensor> =
                    (0..frames).map(|_| rand_tensor(rng, batch, 16, 0.7)).collect();
                let checked = vec![0, 1, 2];
                let builder = move |g: &mut Graph, vars: &[Var]| -> Result<Var> {
                    kd_feat_loss_graph(g, vars, &teacher)
                };
                (feats, checked, Box::new(builder))
            }),
        },
        Case {
            name: "loss_student_combination",
            make: Box::new(move |rng| {
                let leaves = vec![
                    Tensor::scalar(rng.gen_range(0.1..2.0)),
                    Tensor::scalar(rng.gen_range(0.1..2.0)),
                    Tensor::scalar(rng.gen_range(0.1..2.0)),
                ];
                let lambdas = (
                    rng.gen_range(0.1..1.5),
                    rng.gen_range(0.1..1.5),
                    rng.gen_range(0.1..1.5),
                );
                let checked = vec![0, 1, 2];
                let builder = move |g: &mut Graph, vars: &[Var]| -> Result<Var> {
                    student_loss_graph(g, vars[0], vars[1], vars[2], lambdas.0, lambdas.1, lambdas.2)
                };
                (leaves, checked, Box::new(builder))
            }),
        },
        Case {
            name: "teacher_composite",
            make: Box::new(move |rng| {
                let cfg = tiny_config(2);
                let leaves = model_leaves(rng, &cfg, frames, batch);
                let gts_rot = gt_rot(rng);
                let gts_trans = gt_trans(rng);
                // Every parameter of the tiny teacher net.
                let checked: Vec<usize> = (0..PARAM_NAMES.len()).collect();
                let builder = move |g: &mut Graph, vars: &[Var]| -> Result<Var> {
                    let cfg = tiny_config(2);
                    let (bp, inputs) = model_inputs_from_leaves(vars, g, frames);
                    let out = model_forward(g, &bp, &cfg, &inputs)?;
                    let lp = pose_loss_graph(g, &out.outputs, &gts_rot, &LossWeights::default())?;
                    let lt = trans_loss_graph(g, &out.outputs, &gts_trans)?;
                    teacher_loss_graph(
                        g,
                        lp,
                        lt,
                        bp.var("log_var.pose"),
                        bp.var("log_var.trans"),
                    )
                };
                (leaves, checked, Box::new(builder))
            }),
        },
        Case {
            name: "student_composite",
            make: Box::new(move |rng| {
                let cfg = tiny_config(2);
                let leaves = model_leaves(rng, &cfg, frames, batch);
                let gts_rot = gt_rot(rng);
                let gts_trans = gt_trans(rng);
                let teacher_rot = gt_rot(rng);
                let teacher_feat: Vec<Tensor> = (0..frames)
                    .map(|_| rand_tensor(rng, batch, super::model::ENCODER_OUT, 0.5))
                    .collect();
                let checked: Vec<usize> = (0..PARAM_NAMES.len()).collect();
                let builder = move |g: &mut Graph, vars: &[Var]| -> Result<Var> {
                    let cfg = tiny_config(2);
                    let (bp, inputs) = model_inputs_from_leaves(vars, g, frames);
                    let out = model_forward(g, &bp, &cfg, &inputs)?;
                    let lp = pose_loss_graph(g, &out.outputs, &gts_rot, &LossWeights::default())?;
                    let lt = trans_loss_graph(g, &out.outputs, &gts_trans)?;
                    let lm = teacher_loss_graph(
                        g,
                        lp,
                        lt,
                        bp.var("log_var.pose"),
                        bp.var("log_var.trans"),
                    )?;
                    let lo = kd_output_loss_graph(g, &out.outputs, &teacher_rot)?;
                    let lf = kd_feat_loss_graph(g, &out.imu_features, &teacher_feat)?;
                    student_loss_graph(g, lm, lo, lf, 1.0, 0.5, 0.5)
                };
                (leaves, checked, Box::new(builder))
            }),
        },
    ];

    for case in cases {
        let mut worst = 0.0f64;
        for k in 0..instances {
            let mut rng = ChaCha8Rng::seed_from_u64(
                seed ^ (k as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
            );
            let (leaves, checked, builder) = (case.make)(&mut rng);
            let err = finite_diff_worst_error(&leaves, &checked, builder.as_ref(), &mut rng)?;
            worst = worst.max(err);
        }
        results.push(CaseResult {
            name: case.name,
            instances,
            worst_rel_err: worst,
        });
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_battery_passes_at_1e4() {
        // Fewer instances than the acceptance run, same tolerance.
        let results = run_standard_checks(3, 42).unwrap();
        assert_eq!(results.len(), 11);
        for r in &results {
            assert!(
                r.pass(1e-4),
                "{}: worst relative error {}",
                r.name,
                r.worst_rel_err
            );
        }
    }
}
