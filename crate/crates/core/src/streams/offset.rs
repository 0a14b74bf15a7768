//! Time-offset estimation from the two alignment gestures: matched
//! acceleration-peak triples and the yaw extremum.

use super::TimedStream;
use crate::error::{Error, Result};

/// A local maximum and its prominence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub index: usize,
    pub time: f64,
    pub height: f64,
    pub prominence: f64,
}

/// Local maxima with their topographic prominence: the drop from the peak to
/// the highest saddle separating it from higher terrain on either side.
pub fn find_peaks(values: &[f64], times: &[f64]) -> Vec<Peak> {
    let n = values.len();
    let mut peaks = Vec::new();
    for i in 1..n.saturating_sub(1) {
        if values[i] > values[i - 1] && values[i] >= values[i + 1] {
            let h = values[i];
            let saddle = |range: Box<dyn Iterator<Item = usize>>| -> f64 {
                let mut min_v = h;
                for j in range {
                    if values[j] > h {
                        return min_v;
                    }
                    min_v = min_v.min(values[j]);
                }
                min_v
            };
            let left = saddle(Box::new((0..i).rev()));
            let right = saddle(Box::new(i + 1..n));
            peaks.push(Peak {
                index: i,
                time: times[i],
                height: h,
                prominence: h - left.max(right),
            });
        }
    }
    peaks
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

fn median_abs_deviation(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    let m = median(&mut v);
    let mut dev: Vec<f64> = values.iter().map(|x| (x - m).abs()).collect();
    median(&mut dev)
}

/// The three most prominent peaks, ordered by time. Errors unless at least
/// three peaks reach a prominence of twice the stream's median absolute
/// deviation.
fn top3_peak_times(s: &TimedStream<f64>) -> Result<[f64; 3]> {
    let mad = median_abs_deviation(s.samples());
    let min_prominence = 2.0 * mad;
    let mut peaks: Vec<Peak> = find_peaks(s.samples(), s.timestamps())
        .into_iter()
        .filter(|p| p.prominence >= min_prominence && mad > 0.0)
        .collect();
    if peaks.len() < 3 {
        return Err(Error::InsufficientPeaks {
            need: 3,
            found: peaks.len(),
            min_prominence,
        });
    }
    peaks.sort_by(|a, b| b.prominence.partial_cmp(&a.prominence).unwrap());
    let mut times = [peaks[0].time, peaks[1].time, peaks[2].time];
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(times)
}

/// Estimate the time offset between two scalar streams carrying the same
/// three-peak gesture: the difference of the median peak times.
///
/// Positive result means events in `a` carry later timestamps than the same
/// events in `b`; subtracting it from `a`'s timestamps aligns the streams.
pub fn estimate_offset_peaks(a: &TimedStream<f64>, b: &TimedStream<f64>) -> Result<f64> {
    let ta = top3_peak_times(a)?;
    let tb = top3_peak_times(b)?;
    Ok(ta[1] - tb[1])
}

/// Largest deviation from the stream's median level, with an ambiguity check:
/// samples within 1% of the extremal deviation must not spread over more than
/// 0.5 s, and the extremum must be interior.
fn extremum_time(s: &TimedStream<f64>) -> Result<f64> {
    if s.len() < 3 {
        return Err(Error::AmbiguousExtremum(
            "stream too short for an extremum".to_string(),
        ));
    }
    let mut v = s.samples().to_vec();
    let level = median(&mut v);
    let dev: Vec<f64> = s.samples().iter().map(|x| (x - level).abs()).collect();
    let (best, &best_dev) = dev
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap();
    if best_dev <= 0.0 {
        return Err(Error::AmbiguousExtremum("flat stream".to_string()));
    }
    if best == 0 || best == s.len() - 1 {
        return Err(Error::AmbiguousExtremum(
            "extremum at stream boundary; no turn-and-return found".to_string(),
        ));
    }
    let near: Vec<usize> = dev
        .iter()
        .enumerate()
        .filter(|(_, &d)| d >= 0.99 * best_dev)
        .map(|(i, _)| i)
        .collect();
    let t_first = s.timestamps()[*near.first().unwrap()];
    let t_last = s.timestamps()[*near.last().unwrap()];
    if t_last - t_first > 0.5 {
        return Err(Error::AmbiguousExtremum(format!(
            "samples within 1% of the extremum span {:.3} s",
            t_last - t_first
        )));
    }
    Ok(s.timestamps()[best])
}

/// Estimate the time offset between two yaw streams carrying the same
/// head-turn gesture: the difference of their extremum times. Same sign
/// convention as [`estimate_offset_peaks`].
pub fn estimate_offset_extremum(a: &TimedStream<f64>, b: &TimedStream<f64>) -> Result<f64> {
    Ok(extremum_time(a)? - extremum_time(b)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bump_signal(rate: f64, duration: f64, centers: &[f64], amp: f64) -> TimedStream<f64> {
        let n = (duration * rate) as usize;
        let ts: Vec<f64> = (0..n).map(|i| i as f64 / rate).collect();
        let xs: Vec<f64> = ts
            .iter()
            .map(|&t| {
                let mut v = 0.05 * (13.0 * t).sin();
                for &c in centers {
                    v += amp * (-((t - c) / 0.12).powi(2)).exp();
                }
                v
            })
            .collect();
        TimedStream::new(ts, xs, rate).unwrap()
    }

    #[test]
    fn peaks_found_with_prominence() {
        let s = bump_signal(100.0, 6.0, &[1.5, 3.0, 4.5], 3.0);
        let peaks = find_peaks(s.samples(), s.timestamps());
        let big: Vec<&Peak> = peaks.iter().filter(|p| p.prominence > 1.0).collect();
        assert_eq!(big.len(), 3);
        assert!((big[0].time - 1.5).abs() < 0.05);
    }

    #[test]
    fn offset_zero_and_injected() {
        let a = bump_signal(100.0, 6.0, &[1.5, 3.0, 4.5], 3.0);
        let b = bump_signal(240.0, 6.0, &[1.5, 3.0, 4.5], 2.0);
        let off = estimate_offset_peaks(&a, &b).unwrap();
        assert!(off.abs() <= 1.0 / 100.0, "offset {off}");

        let shifted = a.shifted(1.3);
        let off = estimate_offset_peaks(&shifted, &b).unwrap();
        assert!((off - 1.3).abs() <= 1.0 / 100.0, "offset {off}");
    }

    #[test]
    fn flat_stream_insufficient_peaks() {
        let ts: Vec<f64> = (0..100).map(|i| i as f64 * 0.01).collect();
        let s = TimedStream::new(ts.clone(), vec![1.0; 100], 100.0).unwrap();
        let b = bump_signal(100.0, 6.0, &[1.5, 3.0, 4.5], 3.0);
        assert!(matches!(
            estimate_offset_peaks(&s, &b),
            Err(Error::InsufficientPeaks { .. })
        ));
    }

    fn yaw_signal(rate: f64, duration: f64, turn_at: f64) -> TimedStream<f64> {
        let n = (duration * rate) as usize;
        let ts: Vec<f64> = (0..n).map(|i| i as f64 / rate).collect();
        let xs: Vec<f64> = ts
            .iter()
            .map(|&t| {
                let u = (t - turn_at) / 0.8;
                if u.abs() < 1.0 {
                    -1.2 * 0.5 * (1.0 + (std::f64::consts::PI * u).cos())
                } else {
                    0.0
                }
            })
            .collect();
        TimedStream::new(ts, xs, rate).unwrap()
    }

    #[test]
    fn extremum_offset_recovery() {
        let a = yaw_signal(30.0, 6.0, 3.0);
        let b = yaw_signal(240.0, 6.0, 3.0);
        let off = estimate_offset_extremum(&a, &b).unwrap();
        assert!(off.abs() <= 1.0 / 30.0, "offset {off}");

        let shifted = a.shifted(-0.7);
        let off = estimate_offset_extremum(&shifted, &b).unwrap();
        assert!((off + 0.7).abs() <= 1.0 / 30.0, "offset {off}");
    }

    #[test]
    fn monotone_ramp_is_ambiguous() {
        let ts: Vec<f64> = (0..200).map(|i| i as f64 / 30.0).collect();
        let xs: Vec<f64> = ts.iter().map(|&t| -0.2 * t).collect();
        let ramp = TimedStream::new(ts, xs, 30.0).unwrap();
        let b = yaw_signal(240.0, 6.0, 3.0);
        assert!(matches!(
            estimate_offset_extremum(&ramp, &b),
            Err(Error::AmbiguousExtremum(_))
        ));
    }

    #[test]
    fn offset_correction_is_idempotent() {
        let a = bump_signal(100.0, 6.0, &[1.5, 3.0, 4.5], 3.0).shifted(0.87);
        let b = bump_signal(240.0, 6.0, &[1.5, 3.0, 4.5], 2.0);
        let off = estimate_offset_peaks(&a, &b).unwrap();
        let corrected = a.shifted(-off);
        let residual = estimate_offset_peaks(&corrected, &b).unwrap();
        assert!(residual.abs() <= 1.0 / 100.0, "residual {residual}");
    }
}
