//! Timestamped-stream algebra: the stream container, its JSON-lines file
//! format, offset estimation from alignment gestures, resampling, smoothing,
//! and coordinate normalization.

mod offset;
mod ops;

pub use offset::{estimate_offset_extremum, estimate_offset_peaks, find_peaks, Peak};
pub use ops::{
    derelativize_translations, relativize_translations, resample_nn, resample_to_grid, smooth,
    split_assignment, window_ranges, FrameTransform, SplitAssignment,
};

use crate::error::{Error, Result};
use crate::rotmath::{RotMat, Vec3};
use crate::synth::{CameraView, SiteId};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, Write};

/// Orientation plus acceleration from one body-mounted sensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImuSample {
    pub orientation: RotMat,
    pub accel: Vec3,
}

/// A head pose as produced by the localization module: rotation plus a
/// translation whose scale may differ from meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadPose {
    pub rotation: RotMat,
    pub translation: Vec3,
}

pub type FeatureVec = Vec<f64>;

/// Timestamped samples at a native rate. Timestamps are strictly increasing
/// and always equal in count to the payload list.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedStream<T> {
    timestamps: Vec<f64>,
    samples: Vec<T>,
    native_rate_hz: f64,
}

impl<T> TimedStream<T> {
    pub fn new(timestamps: Vec<f64>, samples: Vec<T>, native_rate_hz: f64) -> Result<Self> {
        if timestamps.len() != samples.len() {
            return Err(Error::LengthMismatch {
                left: timestamps.len(),
                right: samples.len(),
            });
        }
        if !(native_rate_hz > 0.0) {
            return Err(Error::InvalidInput(format!(
                "native_rate_hz must be positive, got {native_rate_hz}"
            )));
        }
        if timestamps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(
                "timestamps must be strictly increasing".to_string(),
            ));
        }
        Ok(TimedStream {
            timestamps,
            samples,
            native_rate_hz,
        })
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn native_rate_hz(&self) -> f64 {
        self.native_rate_hz
    }

    pub fn into_parts(self) -> (Vec<f64>, Vec<T>, f64) {
        (self.timestamps, self.samples, self.native_rate_hz)
    }

    /// Shift every timestamp by `dt` seconds.
    pub fn shifted(&self, dt: f64) -> TimedStream<T>
    where
        T: Clone,
    {
        TimedStream {
            timestamps: self.timestamps.iter().map(|t| t + dt).collect(),
            samples: self.samples.clone(),
            native_rate_hz: self.native_rate_hz,
        }
    }
}

/// One line of the stream file format.
///
/// The format is one JSON object per line: a header
/// `{"native_rate_hz": <float>, "site": <string>}` followed by samples
/// `{"t": <seconds>, "kind": "imu"|"head"|"feat"|"scalar", ...payload}`.
#[derive(Debug, Serialize, Deserialize)]
struct SampleRecord {
    t: f64,
    kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    rot: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    acc: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    trans: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    vec: Option<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct StreamHeader {
    native_rate_hz: f64,
    site: String,
}

/// Payloads that can live in the stream file format.
pub trait StreamPayload: Sized {
    const KIND: &'static str;
    fn to_record(&self, t: f64) -> SampleRecordParts;
    fn from_record(rec: SampleRecordParts) -> Result<Self>;
}

/// Payload fields of a sample record, without timestamp and kind.
#[derive(Debug, Default)]
pub struct SampleRecordParts {
    pub rot: Option<Vec<f64>>,
    pub acc: Option<Vec<f64>>,
    pub trans: Option<Vec<f64>>,
    pub vec: Option<Vec<f64>>,
}

fn take3(v: Option<Vec<f64>>, what: &str) -> Result<Vec3> {
    let v = v.ok_or_else(|| Error::DataShapeMismatch(format!("missing field {what}")))?;
    if v.len() != 3 {
        return Err(Error::DataShapeMismatch(format!(
            "{what} must have 3 entries, got {}",
            v.len()
        )));
    }
    Ok([v[0], v[1], v[2]])
}

fn take9(v: Option<Vec<f64>>, what: &str) -> Result<RotMat> {
    let v = v.ok_or_else(|| Error::DataShapeMismatch(format!("missing field {what}")))?;
    if v.len() != 9 {
        return Err(Error::DataShapeMismatch(format!(
            "{what} must have 9 entries, got {}",
            v.len()
        )));
    }
    Ok(RotMat::from_flat(&v))
}

impl StreamPayload for ImuSample {
    const KIND: &'static str = "imu";

    fn to_record(&self, _t: f64) -> SampleRecordParts {
        SampleRecordParts {
            rot: Some(self.orientation.as_flat().to_vec()),
            acc: Some(self.accel.to_vec()),
            ..Default::default()
        }
    }

    fn from_record(rec: SampleRecordParts) -> Result<Self> {
        Ok(ImuSample {
            orientation: take9(rec.rot, "rot")?,
            accel: take3(rec.acc, "acc")?,
        })
    }
}

impl StreamPayload for HeadPose {
    const KIND: &'static str = "head";

    fn to_record(&self, _t: f64) -> SampleRecordParts {
        SampleRecordParts {
            rot: Some(self.rotation.as_flat().to_vec()),
            trans: Some(self.translation.to_vec()),
            ..Default::default()
        }
    }

    fn from_record(rec: SampleRecordParts) -> Result<Self> {
        Ok(HeadPose {
            rotation: take9(rec.rot, "rot")?,
            translation: take3(rec.trans, "trans")?,
        })
    }
}

impl StreamPayload for FeatureVec {
    const KIND: &'static str = "feat";

    fn to_record(&self, _t: f64) -> SampleRecordParts {
        SampleRecordParts {
            vec: Some(self.clone()),
            ..Default::default()
        }
    }

    fn from_record(rec: SampleRecordParts) -> Result<Self> {
        rec.vec
            .ok_or_else(|| Error::DataShapeMismatch("missing field vec".to_string()))
    }
}

impl StreamPayload for f64 {
    const KIND: &'static str = "scalar";

    fn to_record(&self, _t: f64) -> SampleRecordParts {
        SampleRecordParts {
            vec: Some(vec![*self]),
            ..Default::default()
        }
    }

    fn from_record(rec: SampleRecordParts) -> Result<Self> {
        let v = rec
            .vec
            .ok_or_else(|| Error::DataShapeMismatch("missing field vec".to_string()))?;
        if v.len() != 1 {
            return Err(Error::DataShapeMismatch(format!(
                "scalar sample must have 1 entry, got {}",
                v.len()
            )));
        }
        Ok(v[0])
    }
}

/// Write a stream in the JSON-lines file format.
pub fn write_jsonl<T: StreamPayload, W: Write>(
    stream: &TimedStream<T>,
    site: &str,
    mut w: W,
) -> Result<()> {
    let header = StreamHeader {
        native_rate_hz: stream.native_rate_hz,
        site: site.to_string(),
    };
    serde_json::to_writer(&mut w, &header).map_err(io_err)?;
    w.write_all(b"\n")?;
    for (t, s) in stream.timestamps.iter().zip(&stream.samples) {
        let parts = s.to_record(*t);
        let rec = SampleRecord {
            t: *t,
            kind: T::KIND.to_string(),
            rot: parts.rot,
            acc: parts.acc,
            trans: parts.trans,
            vec: parts.vec,
        };
        serde_json::to_writer(&mut w, &rec).map_err(io_err)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Read a stream from the JSON-lines file format. Returns the stream and the
/// header's site string.
pub fn read_jsonl<T: StreamPayload, R: BufRead>(r: R) -> Result<(TimedStream<T>, String)> {
    let mut lines = r.lines();
    let header_line = lines.next().ok_or(Error::EmptyStream)??;
    let header: StreamHeader = serde_json::from_str(&header_line)
        .map_err(|e| Error::DataShapeMismatch(format!("stream header: {e}")))?;
    let mut timestamps = Vec::new();
    let mut samples = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SampleRecord = serde_json::from_str(&line)
            .map_err(|e| Error::DataShapeMismatch(format!("stream sample: {e}")))?;
        if rec.kind != T::KIND {
            return Err(Error::DataShapeMismatch(format!(
                "expected kind {:?}, got {:?}",
                T::KIND,
                rec.kind
            )));
        }
        timestamps.push(rec.t);
        samples.push(T::from_record(SampleRecordParts {
            rot: rec.rot,
            acc: rec.acc,
            trans: rec.trans,
            vec: rec.vec,
        })?);
    }
    Ok((
        TimedStream::new(timestamps, samples, header.native_rate_hz)?,
        header.site,
    ))
}

fn io_err(e: serde_json::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Per-modality streams sharing one timestamp grid.
#[derive(Debug, Clone)]
pub struct AlignedBundle {
    pub grid: Vec<f64>,
    pub rate_hz: f64,
    pub imu: BTreeMap<SiteId, Vec<ImuSample>>,
    pub features: BTreeMap<CameraView, Vec<FeatureVec>>,
    pub head: Vec<HeadPose>,
}

impl AlignedBundle {
    pub fn validate(&self) -> Result<()> {
        let n = self.grid.len();
        for (site, s) in &self.imu {
            if s.len() != n {
                return Err(Error::LengthMismatch {
                    left: s.len(),
                    right: n,
                })
                .map_err(|_| {
                    Error::DataShapeMismatch(format!("imu stream {site:?} length != grid"))
                });
            }
        }
        for (view, s) in &self.features {
            if s.len() != n {
                return Err(Error::DataShapeMismatch(format!(
                    "feature stream {view:?} length != grid"
                )));
            }
        }
        if self.head.len() != n {
            return Err(Error::DataShapeMismatch(
                "head stream length != grid".to_string(),
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stream_rejects_bad_inputs() {
        assert!(TimedStream::new(vec![0.0, 0.0], vec![1.0, 2.0], 10.0).is_err());
        assert!(TimedStream::new(vec![0.0, 1.0], vec![1.0], 10.0).is_err());
        assert!(TimedStream::new(vec![0.0], vec![1.0], 0.0).is_err());
    }

    #[test]
    fn jsonl_roundtrip_imu() {
        let s = TimedStream::new(
            vec![0.0, 0.01, 0.02],
            vec![
                ImuSample {
                    orientation: RotMat::IDENTITY,
                    accel: [0.0, 0.1, -9.81],
                };
                3
            ],
            100.0,
        )
        .unwrap();
        let mut buf = Vec::new();
        write_jsonl(&s, "head", &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("{\"native_rate_hz\":100.0,\"site\":\"head\"}"));
        assert!(text.lines().nth(1).unwrap().contains("\"kind\":\"imu\""));
        let (back, site) = read_jsonl::<ImuSample, _>(&buf[..]).unwrap();
        assert_eq!(site, "head");
        assert_eq!(back, s);
    }

    #[test]
    fn jsonl_roundtrip_scalar_and_feat() {
        let s = TimedStream::new(vec![0.0, 0.5], vec![1.5, -2.5], 2.0).unwrap();
        let mut buf = Vec::new();
        write_jsonl(&s, "g1_phone", &mut buf).unwrap();
        let (back, _) = read_jsonl::<f64, _>(&buf[..]).unwrap();
        assert_eq!(back, s);

        let f = TimedStream::new(vec![0.0], vec![vec![1.0, 2.0, 3.0]], 30.0).unwrap();
        let mut buf = Vec::new();
        write_jsonl(&f, "forward", &mut buf).unwrap();
        let (back, _) = read_jsonl::<FeatureVec, _>(&buf[..]).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn jsonl_kind_mismatch_rejected() {
        let s = TimedStream::new(vec![0.0], vec![1.0], 2.0).unwrap();
        let mut buf = Vec::new();
        write_jsonl(&s, "x", &mut buf).unwrap();
        assert!(read_jsonl::<ImuSample, _>(&buf[..]).is_err());
    }
}
