//! Multi-camera software synchronization: a barrier-triggered capture loop,
//! a shared global frame index, and asynchronous per-camera storage workers,
//! plus a verifier over the produced logs.
//!
//! The workers are real threads coordinated by a real barrier; time is
//! virtual and seeded, so runs are reproducible and fast. Each cycle every
//! camera waits at the barrier, the first thread out assigns the next global
//! index (the rest adopt it), captures with its own latency draw, and hands
//! the frame to its writer thread through a queue. A frame index is flushed
//! only once every camera has submitted it.

use crate::error::{Error, Result};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, VecDeque};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::mpsc;
use std::sync::{Arc, Barrier, Mutex, OnceLock};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaptureConfig {
    pub num_cameras: usize,
    pub num_cycles: usize,
    /// Uniform bounds on per-cycle capture latency, ms. The latency is also
    /// the pacing of the loop: with zero width all cameras tick in lockstep.
    pub capture_latency_ms: (f64, f64),
    /// Uniform bounds on per-frame writer latency, ms.
    pub writer_latency_ms: (f64, f64),
    /// Bounded queue capacity per camera; `None` means unbounded.
    pub queue_capacity: Option<usize>,
    /// Max tolerated spread between barrier arrivals within one cycle, ms.
    pub barrier_timeout_ms: f64,
    pub seed: u64,
}

impl Default for CaptureConfig {
    fn default() -> Self {
        CaptureConfig {
            num_cameras: 3,
            num_cycles: 100,
            capture_latency_ms: (33.0, 38.0),
            writer_latency_ms: (5.0, 10.0),
            queue_capacity: Some(64),
            barrier_timeout_ms: 1000.0,
            seed: 0,
        }
    }
}

impl CaptureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_cameras < 1 || self.num_cycles < 1 {
            return Err(Error::InvalidInput(
                "need at least 1 camera and 1 cycle".to_string(),
            ));
        }
        if self.queue_capacity == Some(0) {
            return Err(Error::InvalidInput(
                "queue_capacity must be >= 1 when bounded".to_string(),
            ));
        }
        for (lo, hi) in [self.capture_latency_ms, self.writer_latency_ms] {
            if !(lo >= 0.0) || hi < lo {
                return Err(Error::InvalidInput(format!(
                    "latency bounds ({lo}, {hi}) invalid"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaptureRecord {
    pub index: u64,
    pub capture_ms: f64,
    pub write_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlushEvent {
    pub index: u64,
    pub flush_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptureLog {
    pub per_camera: Vec<Vec<CaptureRecord>>,
    pub flush_events: Vec<FlushEvent>,
}

/// The writer's virtual clock: it pops a frame as soon as it is free and the
/// frame has been enqueued, then spends the drawn latency writing it.
#[derive(Debug, Default)]
struct WriterClock {
    write_end: f64,
}

impl WriterClock {
    fn advance(&mut self, enqueue_ms: f64, latency_ms: f64) -> (f64, f64) {
        let dequeue = self.write_end.max(enqueue_ms);
        let write = dequeue + latency_ms;
        self.write_end = write;
        (dequeue, write)
    }
}

fn draw_latencies(seed: u64, stream: u64, bounds: (f64, f64), n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    (0..n)
        .map(|_| {
            if bounds.1 > bounds.0 {
                rng.gen_range(bounds.0..bounds.1)
            } else {
                bounds.0
            }
        })
        .collect()
}

/// Run the synchronized capture simulation.
pub fn run_capture_sim(cfg: &CaptureConfig) -> Result<CaptureLog> {
    cfg.validate()?;
    let cams = cfg.num_cameras;
    let cycles = cfg.num_cycles;

    let capture_lat: Vec<Vec<f64>> = (0..cams)
        .map(|i| draw_latencies(cfg.seed, 1 + i as u64, cfg.capture_latency_ms, cycles))
        .collect();
    let writer_lat: Arc<Vec<Vec<f64>>> = Arc::new(
        (0..cams)
            .map(|i| draw_latencies(cfg.seed, 1001 + i as u64, cfg.writer_latency_ms, cycles))
            .collect(),
    );

    let barrier = Arc::new(Barrier::new(cams));
    let counter = Arc::new(AtomicU64::new(0));
    let slots: Arc<Vec<OnceLock<u64>>> = Arc::new((0..cycles).map(|_| OnceLock::new()).collect());
    let arrivals: Arc<[Vec<AtomicU64>; 2]> = Arc::new([
        (0..cams).map(|_| AtomicU64::new(0)).collect(),
        (0..cams).map(|_| AtomicU64::new(0)).collect(),
    ]);
    let stop_after = Arc::new(AtomicUsize::new(usize::MAX));
    let failures: Arc<Mutex<Vec<(usize, usize, Error)>>> = Arc::new(Mutex::new(Vec::new()));
    let flush_state: Arc<Mutex<BTreeMap<u64, (usize, f64)>>> =
        Arc::new(Mutex::new(BTreeMap::new()));
    let flush_events: Arc<Mutex<Vec<FlushEvent>>> = Arc::new(Mutex::new(Vec::new()));

    let mut camera_handles = Vec::with_capacity(cams);
    let mut writer_handles = Vec::with_capacity(cams);

    for cam in 0..cams {
        let (tx, rx) = mpsc::channel::<(u64, f64)>();
        let wl = Arc::clone(&writer_lat);
        writer_handles.push(std::thread::spawn(move || {
            let mut clock = WriterClock::default();
            let mut records = Vec::new();
            let mut j = 0usize;
            while let Ok((index, capture_ms)) = rx.recv() {
                let (_, write_ms) = clock.advance(capture_ms, wl[cam][j]);
                records.push(CaptureRecord {
                    index,
                    capture_ms,
                    write_ms,
                });
                j += 1;
            }
            records
        }));

        let lat = capture_lat[cam].clone();
        let wl = Arc::clone(&writer_lat);
        let barrier = Arc::clone(&barrier);
        let counter = Arc::clone(&counter);
        let slots = Arc::clone(&slots);
        let arrivals = Arc::clone(&arrivals);
        let stop_after = Arc::clone(&stop_after);
        let failures = Arc::clone(&failures);
        let flush_state = Arc::clone(&flush_state);
        let flush_events = Arc::clone(&flush_events);
        let cfg = cfg.clone();

        camera_handles.push(std::thread::spawn(move || {
            let mut arrival = 0.0f64;
            // The camera mirrors its writer's clock to track virtual queue
            // occupancy; pending holds the dequeue times of queued frames.
            let mut shadow = WriterClock::default();
            let mut pending: VecDeque<f64> = VecDeque::new();

            for cycle in 0..cfg.num_cycles {
                let parity = cycle & 1;
                arrivals[parity][cam].store(arrival.to_bits(), Ordering::Release);
                barrier.wait();
                // Threads agree to break at the watermark cycle: a store of
                // cycle+1 during some body can never flip this cycle's own
                // checks, so the barrier never desynchronizes.
                if cycle >= stop_after.load(Ordering::Acquire) {
                    break;
                }
                let mut release = f64::NEG_INFINITY;
                let mut earliest = f64::INFINITY;
                for a in &arrivals[parity] {
                    let t = f64::from_bits(a.load(Ordering::Acquire));
                    release = release.max(t);
                    earliest = earliest.min(t);
                }
                let spread = release - earliest;
                if spread > cfg.barrier_timeout_ms {
                    failures.lock().unwrap().push((
                        cycle,
                        cam,
                        Error::BarrierTimeout {
                            cycle,
                            spread_ms: spread,
                            timeout_ms: cfg.barrier_timeout_ms,
                        },
                    ));
                    stop_after.fetch_min(cycle + 1, Ordering::AcqRel);
                }

                // First thread out of the barrier assigns the index; the
                // rest reuse it for this cycle.
                let index = *slots[cycle].get_or_init(|| counter.fetch_add(1, Ordering::Relaxed));

                let capture_ms = release + lat[cycle];
                let enqueue_ms = capture_ms;

                let (dequeue_ms, _) = shadow.advance(enqueue_ms, wl[cam][cycle]);
                pending.push_back(dequeue_ms);
                // Only frames the writer has not yet picked up occupy the
                // queue; dequeue times are monotone, so front pops suffice.
                while pending.front().is_some_and(|&dq| dq <= enqueue_ms) {
                    pending.pop_front();
                }
                if let Some(capacity) = cfg.queue_capacity {
                    if pending.len() > capacity {
                        failures.lock().unwrap().push((
                            cycle,
                            cam,
                            Error::QueueOverflow {
                                camera: cam,
                                cycle,
                                capacity,
                            },
                        ));
                        stop_after.fetch_min(cycle + 1, Ordering::AcqRel);
                        arrival = capture_ms;
                        continue;
                    }
                }

                tx.send((index, capture_ms)).expect("writer alive");
                {
                    let mut state = flush_state.lock().unwrap();
                    let entry = state.entry(index).or_insert((0, f64::NEG_INFINITY));
                    entry.0 += 1;
                    entry.1 = entry.1.max(enqueue_ms);
                    if entry.0 == cfg.num_cameras {
                        flush_events.lock().unwrap().push(FlushEvent {
                            index,
                            flush_ms: entry.1,
                        });
                    }
                }
                arrival = capture_ms;
            }
            drop(tx);
        }));
    }

    for h in camera_handles {
        h.join().expect("camera thread");
    }
    let mut per_camera = Vec::with_capacity(cams);
    for h in writer_handles {
        per_camera.push(h.join().expect("writer thread"));
    }

    let mut failures = failures.lock().unwrap();
    if !failures.is_empty() {
        failures.sort_by_key(|(cycle, cam, _)| (*cycle, *cam));
        return Err(failures.remove(0).2);
    }

    let mut flush_events = flush_events.lock().unwrap().clone();
    flush_events.sort_by_key(|e| e.index);
    Ok(CaptureLog {
        per_camera,
        flush_events,
    })
}

/// Per-camera writer backpressure statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackpressureStats {
    pub max_write_delay_ms: f64,
    pub mean_write_delay_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncReport {
    /// Every camera's index sequence is strictly increasing with no gaps.
    pub gapless_indices: bool,
    /// All cameras saw exactly the same index set.
    pub index_sets_equal: bool,
    /// Largest capture-timestamp spread within one global index.
    pub max_cycle_spread_ms: f64,
    /// Flush events stamped before some camera enqueued that index, or
    /// flushing an index missing from some camera.
    pub flush_violations: usize,
    pub backpressure: Vec<BackpressureStats>,
    pub pass: bool,
}

/// Check the synchronization properties over a capture log.
pub fn verify_log(log: &CaptureLog) -> SyncReport {
    let mut gapless = true;
    for records in &log.per_camera {
        for (k, rec) in records.iter().enumerate() {
            if rec.index != k as u64 {
                gapless = false;
            }
        }
    }

    let index_set = |records: &[CaptureRecord]| -> Vec<u64> {
        let mut v: Vec<u64> = records.iter().map(|r| r.index).collect();
        v.sort_unstable();
        v
    };
    let first = log.per_camera.first().map(|r| index_set(r)).unwrap_or_default();
    let index_sets_equal = log.per_camera.iter().all(|r| index_set(r) == first);

    let mut by_index: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for records in &log.per_camera {
        for rec in records {
            by_index.entry(rec.index).or_default().push(rec.capture_ms);
        }
    }
    let max_cycle_spread_ms = by_index
        .values()
        .map(|ts| {
            let max = ts.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let min = ts.iter().cloned().fold(f64::INFINITY, f64::min);
            max - min
        })
        .fold(0.0, f64::max);

    let mut flush_violations = 0;
    for ev in &log.flush_events {
        let mut seen = 0;
        let mut violated = false;
        for records in &log.per_camera {
            match records.iter().find(|r| r.index == ev.index) {
                Some(rec) => {
                    seen += 1;
                    if ev.flush_ms < rec.capture_ms {
                        violated = true;
                    }
                }
                None => violated = true,
            }
        }
        if seen != log.per_camera.len() || violated {
            flush_violations += 1;
        }
    }

    let backpressure = log
        .per_camera
        .iter()
        .map(|records| {
            let delays: Vec<f64> = records
                .iter()
                .map(|r| r.write_ms - r.capture_ms)
                .collect();
            let max = delays.iter().cloned().fold(0.0, f64::max);
            let mean = if delays.is_empty() {
                0.0
            } else {
                delays.iter().sum::<f64>() / delays.len() as f64
            };
            BackpressureStats {
                max_write_delay_ms: max,
                mean_write_delay_ms: mean,
            }
        })
        .collect();

    let pass = gapless && index_sets_equal && flush_violations == 0;
    SyncReport {
        gapless_indices: gapless,
        index_sets_equal,
        max_cycle_spread_ms,
        flush_violations,
        backpressure,
        pass,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_cfg() -> CaptureConfig {
        CaptureConfig {
            num_cameras: 3,
            num_cycles: 10,
            capture_latency_ms: (33.0, 33.0),
            writer_latency_ms: (5.0, 5.0),
            queue_capacity: Some(16),
            barrier_timeout_ms: 100.0,
            seed: 7,
        }
    }

    #[test]
    fn zero_jitter_identical_timestamps() {
        let log = run_capture_sim(&base_cfg()).unwrap();
        for records in &log.per_camera {
            let indices: Vec<u64> = records.iter().map(|r| r.index).collect();
            assert_eq!(indices, (0..10).collect::<Vec<u64>>());
        }
        for k in 0..10 {
            let ts: Vec<f64> = log.per_camera.iter().map(|r| r[k].capture_ms).collect();
            assert!(ts.iter().all(|&t| t == ts[0]), "cycle {k}: {ts:?}");
        }
        let report = verify_log(&log);
        assert!(report.pass);
        assert_eq!(report.max_cycle_spread_ms, 0.0);
    }

    #[test]
    fn jittered_run_keeps_indices_synchronized() {
        let cfg = CaptureConfig {
            num_cycles: 1000,
            capture_latency_ms: (33.0, 38.0),
            seed: 42,
            queue_capacity: Some(64),
            ..base_cfg()
        };
        let log = run_capture_sim(&cfg).unwrap();
        let report = verify_log(&log);
        assert!(report.pass);
        assert!(report.gapless_indices);
        assert!(report.index_sets_equal);
        assert!(report.max_cycle_spread_ms <= 5.0 + 1e-9);
        assert_eq!(report.flush_violations, 0);
        assert_eq!(log.flush_events.len(), 1000);
    }

    #[test]
    fn deterministic_given_seed() {
        let cfg = CaptureConfig {
            num_cycles: 200,
            capture_latency_ms: (30.0, 40.0),
            writer_latency_ms: (2.0, 60.0),
            seed: 5,
            ..base_cfg()
        };
        let a = run_capture_sim(&cfg).unwrap();
        let b = run_capture_sim(&cfg).unwrap();
        assert_eq!(a, b);
    }

    /// Independent queue arithmetic for fixed latencies: capture period p,
    /// writer latency l, capacity q -> first overflowing cycle.
    fn overflow_cycle_oracle(p: f64, l: f64, q: usize, cycles: usize) -> Option<usize> {
        let mut write_end = 0.0f64;
        let mut dequeues: Vec<f64> = Vec::new();
        for k in 0..cycles {
            let enqueue = (k + 1) as f64 * p;
            let dequeue = write_end.max(enqueue);
            write_end = dequeue + l;
            dequeues.push(dequeue);
            let occupancy = dequeues.iter().filter(|&&d| d > enqueue).count();
            if occupancy > q {
                return Some(k);
            }
        }
        None
    }

    #[test]
    fn queue_overflow_at_deterministic_cycle() {
        let (p, l, q) = (10.0, 35.0, 4usize);
        let cfg = CaptureConfig {
            num_cameras: 3,
            num_cycles: 100,
            capture_latency_ms: (p, p),
            writer_latency_ms: (l, l),
            queue_capacity: Some(q),
            barrier_timeout_ms: 1000.0,
            seed: 1,
        };
        let expected = overflow_cycle_oracle(p, l, q, 100).expect("oracle overflows");
        match run_capture_sim(&cfg) {
            Err(Error::QueueOverflow {
                cycle, capacity, ..
            }) => {
                assert_eq!(cycle, expected);
                assert_eq!(capacity, q);
            }
            other => panic!("expected QueueOverflow, got {other:?}"),
        }
        // Same run with unbounded queues completes.
        let log = run_capture_sim(&CaptureConfig {
            queue_capacity: None,
            ..cfg
        })
        .unwrap();
        assert!(verify_log(&log).pass);
    }

    #[test]
    fn barrier_timeout_detected() {
        let cfg = CaptureConfig {
            num_cycles: 50,
            capture_latency_ms: (0.0, 50.0),
            barrier_timeout_ms: 10.0,
            seed: 3,
            ..base_cfg()
        };
        match run_capture_sim(&cfg) {
            Err(Error::BarrierTimeout { spread_ms, .. }) => {
                assert!(spread_ms > 10.0);
            }
            other => panic!("expected BarrierTimeout, got {other:?}"),
        }
    }

    #[test]
    fn capture_pace_independent_of_writer_latency() {
        let cfg = CaptureConfig {
            num_cycles: 500,
            capture_latency_ms: (30.0, 40.0),
            writer_latency_ms: (5.0, 6.0),
            queue_capacity: None,
            seed: 9,
            ..base_cfg()
        };
        let slow = CaptureConfig {
            writer_latency_ms: (50.0, 60.0),
            ..cfg.clone()
        };
        let mean_interval = |log: &CaptureLog| {
            let ts: Vec<f64> = log.per_camera[0].iter().map(|r| r.capture_ms).collect();
            ts.windows(2).map(|w| w[1] - w[0]).sum::<f64>() / (ts.len() - 1) as f64
        };
        let a = mean_interval(&run_capture_sim(&cfg).unwrap());
        let b = mean_interval(&run_capture_sim(&slow).unwrap());
        assert!((a - b).abs() / a < 0.05, "intervals {a} vs {b}");
    }

    #[test]
    fn verifier_flags_constructed_violations() {
        let log = run_capture_sim(&CaptureConfig {
            num_cycles: 20,
            ..base_cfg()
        })
        .unwrap();
        assert!(verify_log(&log).pass);

        // Delete one index from camera 2.
        let mut mutated = log.clone();
        mutated.per_camera[2].remove(7);
        let report = verify_log(&mutated);
        assert!(!report.index_sets_equal);
        assert!(!report.gapless_indices);
        assert!(!report.pass);

        // Stamp one flush before its enqueues.
        let mut mutated = log.clone();
        mutated.flush_events[5].flush_ms = 0.0;
        let report = verify_log(&mutated);
        assert_eq!(report.flush_violations, 1);
        assert!(!report.pass);
    }
}
