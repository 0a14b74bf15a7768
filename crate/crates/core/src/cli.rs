//! File-based command implementations behind the `wearmocap` binary:
//! dataset generation, alignment, training, distillation, evaluation, the
//! capture-synchronization simulator, and report merging. Every command is
//! reproducible from (config, seed) and writes a resolved-config snapshot.

use crate::capture::{run_capture_sim, verify_log};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use crate::nn::model::{load_checkpoint, save_checkpoint};
use crate::pipeline::{
    evaluate, simulate_sequence_streams, train_student, train_teacher, windows_from_streams,
    EvalMode, SensorSelection, SequenceStreams, WindowSet,
};
use crate::streams::{
    estimate_offset_extremum, estimate_offset_peaks, read_jsonl, resample_to_grid, split_assignment,
    write_jsonl, HeadPose, ImuSample, StreamPayload, TimedStream,
};
use crate::synth::{gen_gesture1, gen_gesture2, CameraView, MotionSequence, SiteId};
use crate::util::subseed;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

fn json_io(e: serde_json::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(json_io)?;
    fs::write(path, text + "\n")?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let file = fs::File::open(path)?;
    serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::DataShapeMismatch(format!("{}: {e}", path.display())))
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

fn write_stream<T: StreamPayload>(
    path: &Path,
    stream: &TimedStream<T>,
    site: &str,
) -> Result<()> {
    let mut buf = Vec::new();
    write_jsonl(stream, site, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

fn read_stream<T: StreamPayload>(path: &Path) -> Result<TimedStream<T>> {
    let file = fs::File::open(path)?;
    let (stream, _) = read_jsonl(BufReader::new(file))?;
    Ok(stream)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SequenceEntry {
    pub dir: String,
    pub imu_offset_s: f64,
    pub cam_offset_s: f64,
    pub files: BTreeMap<String, String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub seed: u64,
    pub sequences: Vec<SequenceEntry>,
}

/// Generate the raw dataset: per-sequence motion, clean and noisy sensor
/// streams on their own clocks, gesture segments, and a checksummed
/// manifest.
pub fn cmd_synth(cfg: &RunConfig, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    cfg.write_snapshot(out, "synth")?;
    let mut sequences = Vec::new();

    for s in 0..cfg.dataset.num_sequences {
        let dir_name = format!("seq_{s:03}");
        let seq_dir = out.join(&dir_name);
        fs::create_dir_all(&seq_dir)?;

        let streams = simulate_sequence_streams(&cfg.dataset, &cfg.selection, s)?;
        let draw_offset = |name: &str| -> f64 {
            let mut rng = ChaCha8Rng::seed_from_u64(subseed(cfg.seed, &format!("{name}_{s}")));
            rng.gen_range(-2.0..2.0)
        };
        let imu_offset = cfg.offsets.imu_offset_s.unwrap_or_else(|| draw_offset("imu_offset"));
        let cam_offset = cfg.offsets.cam_offset_s.unwrap_or_else(|| draw_offset("cam_offset"));

        let mut files: BTreeMap<String, String> = BTreeMap::new();
        let mut save = |name: String| -> PathBuf {
            let p = seq_dir.join(&name);
            files.insert(name, String::new());
            p
        };

        write_json(&save("motion.json".to_string()), &streams.motion)?;
        for (site, stream) in &streams.clean {
            let name = format!("imu_{}.jsonl", site.name());
            write_stream(&save(name), stream, site.name())?;
        }
        for (site, stream) in &streams.noisy {
            let name = format!("imu_{}_noisy.jsonl", site.name());
            write_stream(&save(name), &stream.shifted(imu_offset), site.name())?;
        }
        for (view, stream) in CameraView::ALL.iter().zip(&streams.feats) {
            let name = format!("feat_{}.jsonl", view.name());
            write_stream(&save(name), &stream.shifted(cam_offset), view.name())?;
        }
        write_stream(
            &save("head_pose.jsonl".to_string()),
            &streams.head.shifted(cam_offset),
            "head",
        )?;

        let (phone, reference) =
            gen_gesture1(imu_offset, subseed(cfg.seed, &format!("gesture1_{s}")))?;
        write_stream(&save("gesture1_phone.jsonl".to_string()), &phone, "g1_phone")?;
        write_stream(&save("gesture1_ref.jsonl".to_string()), &reference, "g1_ref")?;
        let (cam, reference) =
            gen_gesture2(cam_offset, subseed(cfg.seed, &format!("gesture2_{s}")))?;
        write_stream(&save("gesture2_cam.jsonl".to_string()), &cam, "g2_cam")?;
        write_stream(&save("gesture2_ref.jsonl".to_string()), &reference, "g2_ref")?;

        for (name, sum) in files.iter_mut() {
            *sum = sha256_file(&seq_dir.join(name.as_str()))?;
        }
        sequences.push(SequenceEntry {
            dir: dir_name,
            imu_offset_s: imu_offset,
            cam_offset_s: cam_offset,
            files,
        });
    }

    write_json(
        &out.join("manifest.json"),
        &DatasetManifest {
            schema_version: crate::config::SCHEMA_VERSION,
            seed: cfg.seed,
            sequences,
        },
    )?;
    Ok(())
}

/// Raw-stream loading needed by alignment.
fn noisy_sites(entry: &SequenceEntry) -> Vec<SiteId> {
    SiteId::ALL
        .iter()
        .filter(|s| entry.files.contains_key(&format!("imu_{}_noisy.jsonl", s.name())))
        .copied()
        .collect()
}

fn clean_sites(entry: &SequenceEntry) -> Vec<SiteId> {
    SiteId::ALL
        .iter()
        .filter(|s| entry.files.contains_key(&format!("imu_{}.jsonl", s.name())))
        .copied()
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SequenceAlignment {
    pub dir: String,
    pub status: String,
    pub imu_offset_estimated_s: Option<f64>,
    pub imu_offset_injected_s: f64,
    pub imu_offset_error_s: Option<f64>,
    pub cam_offset_estimated_s: Option<f64>,
    pub cam_offset_injected_s: f64,
    pub cam_offset_error_s: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub schema_version: u32,
    pub sequences: Vec<SequenceAlignment>,
}

/// Estimate and correct per-sequence clock offsets from the gesture
/// segments, then emit corrected streams and a shared-grid bundle per
/// sequence, plus the recovery report. Per-sequence failures are recorded
/// and skipped.
pub fn cmd_align(cfg: &RunConfig, dataset_dir: &Path, out: &Path) -> Result<()> {
    let manifest: DatasetManifest = read_json(&dataset_dir.join("manifest.json"))?;
    fs::create_dir_all(out)?;
    cfg.write_snapshot(out, "align")?;
    let mut report = AlignmentReport {
        schema_version: crate::config::SCHEMA_VERSION,
        sequences: Vec::new(),
    };

    for entry in &manifest.sequences {
        let seq_dir = dataset_dir.join(&entry.dir);
        let result = align_sequence(cfg, entry, &seq_dir, &out.join(&entry.dir));
        match result {
            Ok((imu_est, cam_est)) => report.sequences.push(SequenceAlignment {
                dir: entry.dir.clone(),
                status: "ok".to_string(),
                imu_offset_estimated_s: Some(imu_est),
                imu_offset_injected_s: entry.imu_offset_s,
                imu_offset_error_s: Some(imu_est - entry.imu_offset_s),
                cam_offset_estimated_s: Some(cam_est),
                cam_offset_injected_s: entry.cam_offset_s,
                cam_offset_error_s: Some(cam_est - entry.cam_offset_s),
            }),
            Err(e) => report.sequences.push(SequenceAlignment {
                dir: entry.dir.clone(),
                status: format!("error: {e}"),
                imu_offset_estimated_s: None,
                imu_offset_injected_s: entry.imu_offset_s,
                imu_offset_error_s: None,
                cam_offset_estimated_s: None,
                cam_offset_injected_s: entry.cam_offset_s,
                cam_offset_error_s: None,
            }),
        }
    }
    write_json(&out.join("alignment_report.json"), &report)?;
    Ok(())
}

fn align_sequence(
    cfg: &RunConfig,
    entry: &SequenceEntry,
    seq_dir: &Path,
    out_dir: &Path,
) -> Result<(f64, f64)> {
    let phone: TimedStream<f64> = read_stream(&seq_dir.join("gesture1_phone.jsonl"))?;
    let g1_ref: TimedStream<f64> = read_stream(&seq_dir.join("gesture1_ref.jsonl"))?;
    let imu_offset = estimate_offset_peaks(&phone, &g1_ref)?;
    let cam: TimedStream<f64> = read_stream(&seq_dir.join("gesture2_cam.jsonl"))?;
    let g2_ref: TimedStream<f64> = read_stream(&seq_dir.join("gesture2_ref.jsonl"))?;
    let cam_offset = estimate_offset_extremum(&cam, &g2_ref)?;

    let aligned = out_dir.join("aligned");
    let bundle = out_dir.join("bundle");
    fs::create_dir_all(&aligned)?;
    fs::create_dir_all(&bundle)?;

    let motion: MotionSequence = read_json(&seq_dir.join("motion.json"))?;
    write_json(&aligned.join("motion.json"), &motion)?;

    // Corrected native-rate streams.
    let mut clean: Vec<(SiteId, TimedStream<ImuSample>)> = Vec::new();
    for site in clean_sites(entry) {
        let s: TimedStream<ImuSample> =
            read_stream(&seq_dir.join(format!("imu_{}.jsonl", site.name())))?;
        write_stream(
            &aligned.join(format!("imu_{}.jsonl", site.name())),
            &s,
            site.name(),
        )?;
        clean.push((site, s));
    }
    for site in noisy_sites(entry) {
        let s: TimedStream<ImuSample> =
            read_stream(&seq_dir.join(format!("imu_{}_noisy.jsonl", site.name())))?;
        let corrected = s.shifted(-imu_offset);
        write_stream(
            &aligned.join(format!("imu_{}_noisy.jsonl", site.name())),
            &corrected,
            site.name(),
        )?;
    }
    let mut feats: Vec<TimedStream<Vec<f64>>> = Vec::new();
    for view in CameraView::ALL {
        let s: TimedStream<Vec<f64>> =
            read_stream(&seq_dir.join(format!("feat_{}.jsonl", view.name())))?;
        let corrected = s.shifted(-cam_offset);
        write_stream(
            &aligned.join(format!("feat_{}.jsonl", view.name())),
            &corrected,
            view.name(),
        )?;
        feats.push(corrected);
    }
    let head: TimedStream<HeadPose> = read_stream(&seq_dir.join("head_pose.jsonl"))?;
    let head = head.shifted(-cam_offset);
    write_stream(&aligned.join("head_pose.jsonl"), &head, "head")?;

    // Shared-grid bundle at the target rate: identical timestamp vectors
    // across all modalities.
    let rate = cfg.dataset.target_rate_hz;
    let t0 = feats[0].timestamps()[0]
        .max(head.timestamps()[0])
        .max(clean.iter().map(|(_, s)| s.timestamps()[0]).fold(0.0, f64::max));
    let t_end = feats[0]
        .timestamps()
        .last()
        .unwrap()
        .min(*head.timestamps().last().unwrap())
        .min(clean
            .iter()
            .map(|(_, s)| *s.timestamps().last().unwrap())
            .fold(f64::INFINITY, f64::min));
    if t_end <= t0 {
        return Err(Error::SequenceTooShort { need: 1, got: 0 });
    }
    let n = ((t_end - t0) * rate).floor() as usize + 1;
    let grid: Vec<f64> = (0..n).map(|k| t0 + k as f64 / rate).collect();
    for (site, s) in &clean {
        let samples = resample_to_grid(s, &grid)?;
        let stream = TimedStream::new(grid.clone(), samples, rate)?;
        write_stream(
            &bundle.join(format!("imu_{}.jsonl", site.name())),
            &stream,
            site.name(),
        )?;
    }
    for (view, s) in CameraView::ALL.iter().zip(&feats) {
        let samples = resample_to_grid(s, &grid)?;
        let stream = TimedStream::new(grid.clone(), samples, rate)?;
        write_stream(
            &bundle.join(format!("feat_{}.jsonl", view.name())),
            &stream,
            view.name(),
        )?;
    }
    let samples = resample_to_grid(&head, &grid)?;
    let stream = TimedStream::new(grid.clone(), samples, rate)?;
    write_stream(&bundle.join("head_pose.jsonl"), &stream, "head")?;

    Ok((imu_offset, cam_offset))
}

/// Load the aligned per-sequence streams back into memory for training.
pub fn load_aligned_sequences(
    aligned_root: &Path,
    selection: &SensorSelection,
) -> Result<Vec<SequenceStreams>> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(aligned_root)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.is_dir()
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("seq_"))
        })
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::DataShapeMismatch(format!(
            "no seq_* directories under {}",
            aligned_root.display()
        )));
    }
    let mut out = Vec::new();
    for dir in dirs {
        let aligned = dir.join("aligned");
        if !aligned.exists() {
            // Sequence whose alignment failed; skip it.
            continue;
        }
        let motion: MotionSequence = read_json(&aligned.join("motion.json"))?;
        let mut clean = Vec::new();
        for &site in &selection.teacher {
            let s = read_stream(&aligned.join(format!("imu_{}.jsonl", site.name())))?;
            clean.push((site, s));
        }
        let mut noisy = Vec::new();
        for &site in &selection.student {
            let s = read_stream(&aligned.join(format!("imu_{}_noisy.jsonl", site.name())))?;
            noisy.push((site, s));
        }
        let mut feats = Vec::new();
        for view in CameraView::ALL {
            feats.push(read_stream(&aligned.join(format!(
                "feat_{}.jsonl",
                view.name()
            )))?);
        }
        let head = read_stream(&aligned.join("head_pose.jsonl"))?;
        out.push(SequenceStreams {
            clean,
            noisy,
            feats,
            head,
            motion,
        });
    }
    if out.is_empty() {
        return Err(Error::DataShapeMismatch(
            "every sequence failed alignment".to_string(),
        ));
    }
    Ok(out)
}

fn window_set_from_aligned(cfg: &RunConfig, aligned_root: &Path) -> Result<WindowSet> {
    let sequences = load_aligned_sequences(aligned_root, &cfg.selection)?;
    let mut windows = Vec::new();
    for seq in &sequences {
        windows.extend(windows_from_streams(
            seq,
            cfg.dataset.target_rate_hz,
            cfg.train.window,
        )?);
    }
    if windows.is_empty() {
        return Err(Error::SequenceTooShort {
            need: cfg.train.window,
            got: 0,
        });
    }
    let split = split_assignment(windows.len(), subseed(cfg.seed, "split"));
    Ok(WindowSet {
        feature_dim: cfg.dataset.feature_dim,
        window_len: cfg.train.window,
        windows,
        split,
    })
}

pub fn cmd_train_teacher(cfg: &RunConfig, aligned_dir: &Path, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    cfg.write_snapshot(out, "train-teacher")?;
    let ws = window_set_from_aligned(cfg, aligned_dir)?;
    let outcome = train_teacher(&ws, &cfg.train)?;
    save_checkpoint(&outcome.params, &out.join("teacher.ckpt.json"))?;
    fs::write(out.join("teacher_curve.csv"), outcome.curve_csv())?;
    Ok(())
}

pub fn cmd_distill(
    cfg: &RunConfig,
    aligned_dir: &Path,
    teacher_ckpt: &Path,
    out: &Path,
) -> Result<()> {
    fs::create_dir_all(out)?;
    cfg.write_snapshot(out, "distill")?;
    let ws = window_set_from_aligned(cfg, aligned_dir)?;
    let teacher = load_checkpoint(teacher_ckpt)?;
    let outcome = train_student(&ws, &teacher, &cfg.train)?;
    save_checkpoint(&outcome.params, &out.join("student.ckpt.json"))?;
    fs::write(out.join("student_curve.csv"), outcome.curve_csv())?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EvalOutput {
    pub schema_version: u32,
    pub mode: String,
    pub checkpoint: String,
    pub report: MetricsReport,
}

pub fn cmd_eval(
    cfg: &RunConfig,
    aligned_dir: &Path,
    ckpt: &Path,
    mode: &EvalMode,
    out: &Path,
) -> Result<()> {
    fs::create_dir_all(out)?;
    cfg.write_snapshot(out, "eval")?;
    let ws = window_set_from_aligned(cfg, aligned_dir)?;
    let params = load_checkpoint(ckpt)?;
    let report = evaluate(
        &params,
        &ws,
        &ws.split.test.clone(),
        std::slice::from_ref(mode),
        &cfg.selection,
        cfg.train.batch_size,
    )?;
    fs::write(out.join("metrics.csv"), report.to_csv())?;
    write_json(
        &out.join("metrics.json"),
        &EvalOutput {
            schema_version: crate::config::SCHEMA_VERSION,
            mode: mode.name(),
            checkpoint: ckpt.display().to_string(),
            report,
        },
    )?;
    Ok(())
}

pub fn cmd_sync_sim(cfg: &RunConfig, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    cfg.write_snapshot(out, "sync-sim")?;
    let log = run_capture_sim(&cfg.capture)?;
    let report = verify_log(&log);
    write_json(&out.join("capture_log.json"), &log)?;
    write_json(&out.join("sync_report.json"), &report)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct ReportRow {
    variant: String,
    mpjpe_cm: f64,
    pa_mpjpe_cm: f64,
    mpjre_deg: f64,
    mpjve_cm: f64,
    root_pe_cm: f64,
    upper_pe_cm: f64,
    lower_pe_cm: f64,
}

/// Merge every `metrics.json` found one level under `dir` into a single
/// table with one row per variant.
pub fn cmd_report(dir: &Path, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    let mut rows: Vec<ReportRow> = Vec::new();
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .collect();
    entries.sort();
    for entry in entries {
        let metrics = if entry.is_dir() {
            entry.join("metrics.json")
        } else {
            continue;
        };
        if !metrics.exists() {
            continue;
        }
        let parsed: EvalOutput = read_json(&metrics)?;
        let variant = entry
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or("unknown")
            .to_string();
        let r = &parsed.report;
        rows.push(ReportRow {
            variant,
            mpjpe_cm: r.mpjpe_cm,
            pa_mpjpe_cm: r.pa_mpjpe_cm,
            mpjre_deg: r.mpjre_deg,
            mpjve_cm: r.mpjve_cm,
            root_pe_cm: r.root_pe_cm,
            upper_pe_cm: r.upper_pe_cm,
            lower_pe_cm: r.lower_pe_cm,
        });
    }
    if rows.is_empty() {
        return Err(Error::DataShapeMismatch(format!(
            "no metrics.json files found under {}",
            dir.display()
        )));
    }
    let mut csv = String::from(
        "variant,mpjpe_cm,pa_mpjpe_cm,mpjre_deg,mpjve_cm,root_pe_cm,upper_pe_cm,lower_pe_cm\n",
    );
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.variant,
            r.mpjpe_cm,
            r.pa_mpjpe_cm,
            r.mpjre_deg,
            r.mpjve_cm,
            r.root_pe_cm,
            r.upper_pe_cm,
            r.lower_pe_cm
        ));
    }
    fs::write(out.join("report.csv"), csv)?;
    write_json(&out.join("report.json"), &rows)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::DatasetConfig;

    fn small_config(seed: u64) -> RunConfig {
        RunConfig {
            dataset: DatasetConfig {
                num_sequences: 1,
                seq_duration_s: 6.0,
                feature_dim: 8,
                ..DatasetConfig::default()
            },
            train: crate::pipeline::TrainConfig {
                window: 25,
                epochs: 1,
                batch_size: 4,
                hidden_size: 8,
                visual_adapter_dim: 4,
                ..Default::default()
            },
            ..RunConfig::default()
        }
        .with_seed(seed)
    }

    #[test]
    fn synth_align_roundtrip_recovers_offsets() {
        let tmp = tempfile::tempdir().unwrap();
        let raw = tmp.path().join("raw");
        let aligned = tmp.path().join("aligned");
        let cfg = small_config(3);
        cmd_synth(&cfg, &raw).unwrap();
        assert!(raw.join("manifest.json").exists());
        assert!(raw.join("seq_000/imu_head.jsonl").exists());
        assert!(raw.join("seq_000/imu_right_hip_noisy.jsonl").exists());

        cmd_align(&cfg, &raw, &aligned).unwrap();
        let report: AlignmentReport =
            read_json(&aligned.join("alignment_report.json")).unwrap();
        assert_eq!(report.sequences.len(), 1);
        let seq = &report.sequences[0];
        assert_eq!(seq.status, "ok");
        assert!(seq.imu_offset_error_s.unwrap().abs() <= 0.01);
        assert!(seq.cam_offset_error_s.unwrap().abs() <= 1.0 / 30.0);

        // Bundle streams share one grid.
        let a: TimedStream<ImuSample> =
            read_stream(&aligned.join("seq_000/bundle/imu_head.jsonl")).unwrap();
        let b: TimedStream<Vec<f64>> =
            read_stream(&aligned.join("seq_000/bundle/feat_forward.jsonl")).unwrap();
        assert_eq!(a.timestamps(), b.timestamps());
    }

    #[test]
    fn synth_reruns_are_byte_identical() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = small_config(9);
        let a = tmp.path().join("a");
        let b = tmp.path().join("b");
        cmd_synth(&cfg, &a).unwrap();
        cmd_synth(&cfg, &b).unwrap();
        let ma: DatasetManifest = read_json(&a.join("manifest.json")).unwrap();
        let mb: DatasetManifest = read_json(&b.join("manifest.json")).unwrap();
        assert_eq!(ma.sequences[0].files, mb.sequences[0].files);
        // Different seeds change content.
        let c = tmp.path().join("c");
        cmd_synth(&small_config(10), &c).unwrap();
        let mc: DatasetManifest = read_json(&c.join("manifest.json")).unwrap();
        assert_ne!(ma.sequences[0].files, mc.sequences[0].files);
    }

    #[test]
    fn missing_gesture_isolated_per_sequence() {
        let tmp = tempfile::tempdir().unwrap();
        let raw = tmp.path().join("raw");
        let mut cfg = small_config(4);
        cfg.dataset.num_sequences = 2;
        cmd_synth(&cfg, &raw).unwrap();
        fs::remove_file(raw.join("seq_000/gesture1_phone.jsonl")).unwrap();
        let aligned = tmp.path().join("aligned");
        cmd_align(&cfg, &raw, &aligned).unwrap();
        let report: AlignmentReport =
            read_json(&aligned.join("alignment_report.json")).unwrap();
        assert!(report.sequences[0].status.starts_with("error"));
        assert_eq!(report.sequences[1].status, "ok");
    }
}
