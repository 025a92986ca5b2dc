//! Per-frame monitoring observables extracted from correlation traces.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;

use crate::correlator::{diff_phase, local_max, subsample_fit_with, CorrTrace, PeakFit};
use crate::error::{Error, Result};
use crate::frontend::fft_in_place;

/// A scalar observable sampled once per frame. `None` marks a gap.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub t0: f64,
    pub dt: f64,
    pub values: Vec<Option<f64>>,
    pub label: String,
}

impl TimeSeries {
    pub fn new(t0: f64, dt: f64, values: Vec<f64>, label: impl Into<String>) -> Self {
        TimeSeries {
            t0,
            dt,
            values: values.into_iter().map(Some).collect(),
            label: label.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn gap_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }

    /// Values as a plain vector; fails when the series has gaps.
    pub fn dense(&self) -> Result<Vec<f64>> {
        let gaps = self.gap_count();
        if gaps > 0 {
            return Err(Error::SeriesGaps(gaps));
        }
        Ok(self.values.iter().map(|v| v.unwrap_or_default()).collect())
    }

    /// Present values only.
    pub fn present(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().flatten().copied()
    }

    pub fn mean(&self) -> Option<f64> {
        let (s, n) = self.present().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
        (n > 0).then(|| s / n as f64)
    }

    pub fn std_dev(&self) -> Option<f64> {
        let m = self.mean()?;
        let (s, n) = self
            .present()
            .fold((0.0, 0usize), |(s, n), v| (s + (v - m).powi(2), n + 1));
        (n > 1).then(|| (s / (n - 1) as f64).sqrt())
    }

    pub fn peak_to_peak(&self) -> Option<f64> {
        let (lo, hi) = self
            .present()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        (lo <= hi).then_some(hi - lo)
    }

    /// CSV with header `t_seconds,value,label`; gaps leave `value` empty.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "t_seconds,value,label")?;
        for (k, v) in self.values.iter().enumerate() {
            match v {
                Some(v) => writeln!(w, "{},{},{}", self.time(k), v, self.label)?,
                None => writeln!(w, "{},,{}", self.time(k), self.label)?,
            }
        }
        Ok(())
    }
}

fn frame_timing(traces: &[CorrTrace]) -> (f64, f64) {
    let t0 = traces.first().map_or(0.0, |t| t.epoch);
    let dt = match traces {
        [a, b, ..] => b.epoch - a.epoch,
        _ => 1.0,
    };
    (t0, if dt > 0.0 { dt } else { 1.0 })
}

/// Round-trip time between two reflection peaks, per frame.
///
/// Each peak is re-located as the strongest bin within `search_radius` of
/// its nominal bin; a maximum on the edge of that window is a gap.
pub fn rtt_series(
    traces: &[CorrTrace],
    input_bin: usize,
    output_bin: usize,
    search_radius: usize,
    fit: PeakFit,
) -> TimeSeries {
    let (t0, dt) = frame_timing(traces);
    let locate = |t: &CorrTrace, nominal: usize| -> Option<f64> {
        let bin = local_max(t, nominal, search_radius)?;
        if search_radius > 0 && bin.abs_diff(nominal) == search_radius {
            return None;
        }
        let f = subsample_fit_with(t, bin, fit).ok()?;
        (!f.edge_fallback).then_some(f.delay)
    };
    let values = traces
        .iter()
        .map(|t| Some(locate(t, output_bin)? - locate(t, input_bin)?))
        .collect();
    TimeSeries {
        t0,
        dt,
        values,
        label: "rtt_seconds".into(),
    }
}

/// Backscattered power at one bin, per frame.
pub fn amplitude_series(traces: &[CorrTrace], bin: usize) -> TimeSeries {
    let (t0, dt) = frame_timing(traces);
    TimeSeries {
        t0,
        dt,
        values: traces.iter().map(|t| t.values.get(bin).map(|v| v.norm_sqr())).collect(),
        label: format!("power_bin{bin}"),
    }
}

/// Unwrapped phase of `bin_b` relative to `bin_a`, per frame.
///
/// Frames where either magnitude is at or below `min_magnitude` are gaps.
pub fn phase_series(traces: &[CorrTrace], bin_a: usize, bin_b: usize, min_magnitude: f64) -> TimeSeries {
    let (t0, dt) = frame_timing(traces);
    let wrapped = traces
        .iter()
        .map(|t| {
            let ok = |b: usize| t.values.get(b).is_some_and(|v| v.norm() > min_magnitude);
            if ok(bin_a) && ok(bin_b) {
                diff_phase(t, bin_a, bin_b).ok()
            } else {
                None
            }
        })
        .collect();
    unwrap(&TimeSeries {
        t0,
        dt,
        values: wrapped,
        label: format!("phase_bin{bin_a}_bin{bin_b}"),
    })
}

/// Remove 2 pi jumps between successive present samples.
///
/// A step of exactly pi is left as is.
pub fn unwrap(series: &TimeSeries) -> TimeSeries {
    let mut offset = 0.0;
    let mut prev: Option<f64> = None;
    let values = series
        .values
        .iter()
        .map(|v| {
            let v = (*v)?;
            if let Some(p) = prev {
                let d = v - p;
                if d.abs() > PI {
                    offset -= 2.0 * PI * (d / (2.0 * PI)).round();
                }
            }
            prev = Some(v);
            Some(v + offset)
        })
        .collect();
    TimeSeries {
        values,
        ..series.clone()
    }
}

/// Dominant tone of a series within a frequency band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToneReport {
    pub frequency: f64,
    pub amplitude: f64,
    /// Peak-to-peak of the band-passed series.
    pub peak_to_peak: f64,
    /// Peak periodogram power over the in-band median, dB.
    pub snr_db: f64,
}

fn detrend(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let tm = (n - 1.0) / 2.0;
    let xm = x.iter().sum::<f64>() / n;
    let (sxy, sxx) = x.iter().enumerate().fold((0.0, 0.0), |(sxy, sxx), (k, &v)| {
        let dt = k as f64 - tm;
        (sxy + dt * (v - xm), sxx + dt * dt)
    });
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    x.iter()
        .enumerate()
        .map(|(k, &v)| v - xm - slope * (k as f64 - tm))
        .collect()
}

/// Periodogram peak of the linearly detrended series in `[f_min, f_max]`.
pub fn tone_detect(series: &TimeSeries, f_min: f64, f_max: f64) -> Result<ToneReport> {
    let x = series.dense()?;
    let n = x.len();
    let fs = 1.0 / series.dt;
    if !(f_min >= 0.0 && f_max > f_min) {
        return Err(Error::ToneBand(format!("invalid band [{f_min}, {f_max}] Hz")));
    }
    let duration = n as f64 * series.dt;
    if n < 4 || (f_min > 0.0 && duration < 2.0 / f_min) {
        return Err(Error::ToneBand(format!(
            "{n} samples ({duration} s) cover fewer than two periods of {f_min} Hz"
        )));
    }
    let df = fs / n as f64;
    let half = n / 2;
    let k_lo = (f_min / df).ceil().max(1.0) as usize;
    let k_hi = ((f_max / df).floor() as usize).min(half);
    if k_lo > k_hi {
        return Err(Error::ToneBand(format!("no periodogram bins in [{f_min}, {f_max}] Hz")));
    }

    let mut spec: Vec<Complex64> = detrend(&x).into_iter().map(|v| Complex64::new(v, 0.0)).collect();
    fft_in_place(&mut spec, false);
    let mag: Vec<f64> = spec.iter().map(|v| v.norm()).collect();
    let k = (k_lo..=k_hi).max_by(|&a, &b| mag[a].total_cmp(&mag[b])).unwrap_or(k_lo);

    // Three-point parabolic refinement on magnitude.
    let (mut offset, mut peak) = (0.0, mag[k]);
    if k > 0 && k < half {
        let (y0, y1, y2) = (mag[k - 1], mag[k], mag[k + 1]);
        let curv = y0 - 2.0 * y1 + y2;
        if curv < 0.0 {
            offset = (0.5 * (y0 - y2) / curv).clamp(-0.5, 0.5);
            peak = y1 - 0.25 * (y0 - y2) * offset;
        }
    }
    let amplitude = 2.0 * peak / n as f64;

    let mut band: Vec<f64> = (k_lo..=k_hi).map(|j| mag[j] * mag[j]).collect();
    let floor = {
        let mid = band.len() / 2;
        *band.select_nth_unstable_by(mid, f64::total_cmp).1
    };
    let snr_db = if floor > 0.0 {
        10.0 * (mag[k] * mag[k] / floor).log10()
    } else {
        f64::INFINITY
    };

    // Band-pass by zeroing bins outside the band (both halves).
    let mut bp = spec.clone();
    for (j, v) in bp.iter_mut().enumerate() {
        let f_bin = j.min(n - j);
        if f_bin < k_lo || f_bin > k_hi {
            *v = Complex64::new(0.0, 0.0);
        }
    }
    fft_in_place(&mut bp, true);
    let (lo, hi) = bp
        .iter()
        .map(|v| v.re / n as f64)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));

    Ok(ToneReport {
        frequency: (k as f64 + offset) * df,
        amplitude,
        peak_to_peak: hi - lo,
        snr_db,
    })
}

/// Relative fiber temperature from a round-trip-time series.
pub fn temp_estimate(rtt: &TimeSeries, fiber_km: f64, thermal_coeff_ps: f64) -> Result<TimeSeries> {
    if !(fiber_km > 0.0) {
        return Err(Error::InvalidParameter(format!("fiber_km must be > 0, got {fiber_km}")));
    }
    let base = rtt
        .values
        .iter()
        .flatten()
        .next()
        .copied()
        .ok_or_else(|| Error::InvalidParameter("RTT series has no values".into()))?;
    let per_kelvin = 2.0 * thermal_coeff_ps * 1e-12 * fiber_km;
    Ok(TimeSeries {
        t0: rtt.t0,
        dt: rtt.dt,
        values: rtt.values.iter().map(|v| v.map(|v| (v - base) / per_kelvin)).collect(),
        label: "delta_t_kelvin".into(),
    })
}
