//! Cross-correlation of received frames with the probe, and the per-trace
//! measurements built on it: fingerprints, peaks, sub-sample delays and
//! phases.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fibermodel::SPEED_OF_LIGHT;
use crate::frontend::{fft_in_place, RxFrame, Samples};

/// Correlation output indexed by round-trip delay sample.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrTrace {
    pub values: Vec<Complex64>,
    pub sample_period: f64,
    pub epoch: f64,
    pub num_averaged: usize,
}

impl CorrTrace {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn magnitude(&self, bin: usize) -> f64 {
        self.values[bin].norm()
    }

    fn check_bin(&self, bin: usize) -> Result<()> {
        if bin >= self.values.len() {
            return Err(Error::BinOutOfRange {
                bin,
                len: self.values.len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub bin: usize,
    pub refined_delay: f64,
    pub magnitude: f64,
    pub phase: f64,
}

/// Sub-sample delay estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayFit {
    pub delay: f64,
    /// Offset from the peak bin, in samples.
    pub offset: f64,
    /// True when a neighbor was missing and the raw bin was returned.
    pub edge_fallback: bool,
}

/// Interpolation used to refine a correlation peak.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PeakFit {
    /// Vertex of the parabola through three magnitudes.
    #[default]
    Parabolic,
    /// Apex of the symmetric triangle through three magnitudes, matching the
    /// autocorrelation of rectangular bits.
    Triangular,
}

/// How `average` combines complex traces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AverageMode {
    /// Mean of complex values; frames must share the LO phase.
    Complex,
    /// Root of the mean power; discards phase.
    Power,
}

/// Linear cross-correlation `out[k] = sum_j x[j + k] * r[j]`, for lags
/// `0..x.len()`, with `x` taken as zero beyond its end.
pub fn xcorr(x: &[Complex64], reference: &[f64]) -> Vec<Complex64> {
    let n = x.len();
    let m = reference.len();
    if n == 0 || m == 0 {
        return vec![Complex64::new(0.0, 0.0); n];
    }
    let size = (n + m - 1).next_power_of_two();
    let mut a = x.to_vec();
    a.resize(size, Complex64::new(0.0, 0.0));
    let mut b: Vec<Complex64> = reference.iter().map(|&r| Complex64::new(r, 0.0)).collect();
    b.resize(size, Complex64::new(0.0, 0.0));
    fft_in_place(&mut a, false);
    fft_in_place(&mut b, false);
    // Real reference: correlation is multiplication by the conjugate spectrum.
    a.iter_mut().zip(&b).for_each(|(x, y)| *x *= y.conj());
    fft_in_place(&mut a, true);
    let scale = 1.0 / size as f64;
    a.truncate(n);
    a.iter_mut().for_each(|v| *v *= scale);
    a
}

/// Circular cross-correlation of equal-length sequences,
/// `out[k] = sum_j x[(j + k) mod n] * r[j]`.
pub fn circular_xcorr(x: &[f64], reference: &[f64]) -> Result<Vec<f64>> {
    if x.len() != reference.len() {
        return Err(Error::TraceMismatch(format!(
            "lengths {} and {}",
            x.len(),
            reference.len()
        )));
    }
    let mut a: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut b: Vec<Complex64> = reference.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_in_place(&mut a, false);
    fft_in_place(&mut b, false);
    a.iter_mut().zip(&b).for_each(|(x, y)| *x *= y.conj());
    fft_in_place(&mut a, true);
    let scale = 1.0 / x.len() as f64;
    Ok(a.iter().map(|v| v.re * scale).collect())
}

/// Correlate a frame with the transmitted waveform.
///
/// Direct-detection frames use the mean-removed reference, since the
/// photocurrent sits on a DC pedestal; coherent frames use it as given.
pub fn correlate(frame: &RxFrame, reference: &[f64]) -> Result<CorrTrace> {
    if reference.len() > frame.samples.len() {
        return Err(Error::ReferenceTooLong {
            reference: reference.len(),
            frame: frame.samples.len(),
        });
    }
    let values = match &frame.samples {
        Samples::Real(x) => {
            let mean = reference.iter().sum::<f64>() / reference.len() as f64;
            let r: Vec<f64> = reference.iter().map(|v| v - mean).collect();
            let xc: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            xcorr(&xc, &r).into_iter().map(|v| Complex64::new(v.re, 0.0)).collect()
        }
        Samples::Complex(x) => xcorr(x, reference),
    };
    Ok(CorrTrace {
        values,
        sample_period: 1.0 / frame.sample_rate,
        epoch: frame.epoch,
        num_averaged: 1,
    })
}

/// Element-wise mean of traces.
pub fn average(traces: &[CorrTrace], mode: AverageMode) -> Result<CorrTrace> {
    let first = traces
        .first()
        .ok_or_else(|| Error::TraceMismatch("no traces to average".into()))?;
    let n = first.values.len();
    for t in traces {
        if t.values.len() != n {
            return Err(Error::TraceMismatch(format!("lengths {} and {}", n, t.values.len())));
        }
        if (t.sample_period - first.sample_period).abs() > 1e-9 * first.sample_period {
            return Err(Error::TraceMismatch("sample periods differ".into()));
        }
    }
    let count = traces.len() as f64;
    let values = match mode {
        AverageMode::Complex => {
            let mut acc = vec![Complex64::new(0.0, 0.0); n];
            for t in traces {
                acc.iter_mut().zip(&t.values).for_each(|(a, v)| *a += v);
            }
            acc.into_iter().map(|a| a / count).collect()
        }
        AverageMode::Power => {
            let mut acc = vec![0.0; n];
            for t in traces {
                acc.iter_mut().zip(&t.values).for_each(|(a, v)| *a += v.norm_sqr());
            }
            acc.into_iter()
                .map(|a| Complex64::new((a / count).sqrt(), 0.0))
                .collect()
        }
    };
    Ok(CorrTrace {
        values,
        sample_period: first.sample_period,
        epoch: first.epoch,
        num_averaged: traces.iter().map(|t| t.num_averaged).sum(),
    })
}

/// Backscatter power versus distance.
#[derive(Debug, Clone, PartialEq)]
pub struct Fingerprint {
    pub power: Vec<f64>,
    /// Round-trip delay of each bin, seconds.
    pub delay: Vec<f64>,
    /// Fiber position of each bin, meters.
    pub distance: Vec<f64>,
}

pub fn fingerprint(trace: &CorrTrace, group_index: f64) -> Fingerprint {
    let power = trace.values.iter().map(|v| v.norm_sqr()).collect();
    let delay: Vec<f64> = (0..trace.len()).map(|k| k as f64 * trace.sample_period).collect();
    let distance = delay.iter().map(|t| SPEED_OF_LIGHT * t / (2.0 * group_index)).collect();
    Fingerprint { power, delay, distance }
}

/// Mean power of several traces, bin by bin.
pub fn mean_power(traces: &[CorrTrace]) -> Vec<f64> {
    let Some(first) = traces.first() else {
        return Vec::new();
    };
    let mut acc = vec![0.0; first.len()];
    for t in traces {
        acc.iter_mut().zip(&t.values).for_each(|(a, v)| *a += v.norm_sqr());
    }
    let n = traces.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

pub const DEFAULT_MEDIAN_WINDOW: usize = 1001;

fn median(buf: &mut [f64]) -> f64 {
    let mid = buf.len() / 2;
    let (_, m, _) = buf.select_nth_unstable_by(mid, f64::total_cmp);
    *m
}

/// Sliding median of `fp` over a centered window of `window` bins.
pub fn sliding_median(fp: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    let n = fp.len();
    // Evaluate on a stride and hold; the floor varies slowly.
    let stride = (half / 8).max(1);
    let mut out = vec![0.0; n];
    let mut scratch = Vec::with_capacity(window + 1);
    let mut k = 0;
    while k < n {
        let lo = k.saturating_sub(half);
        let hi = (k + half + 1).min(n);
        scratch.clear();
        scratch.extend_from_slice(&fp[lo..hi]);
        let m = median(&mut scratch);
        let end = (k + stride).min(n);
        out[k..end].iter_mut().for_each(|o| *o = m);
        k = end;
    }
    out
}

/// Bins of local maxima exceeding the sliding-median floor by `threshold_db`.
pub fn find_peak_bins(fp: &[f64], threshold_db: f64, window: usize) -> Vec<usize> {
    let floor = sliding_median(fp, window.max(3));
    let ratio = 10f64.powf(threshold_db / 10.0);
    (0..fp.len())
        .filter(|&k| {
            let left = if k > 0 { fp[k - 1] } else { f64::NEG_INFINITY };
            let right = fp.get(k + 1).copied().unwrap_or(f64::NEG_INFINITY);
            fp[k] > left && fp[k] >= right && fp[k] > floor[k] * ratio && fp[k] > 0.0
        })
        .collect()
}

/// Peaks of `fp` with magnitude, phase and refined delay read from `trace`.
pub fn find_peaks(fp: &[f64], threshold_db: f64, trace: &CorrTrace) -> Result<Vec<Peak>> {
    find_peaks_with(fp, threshold_db, DEFAULT_MEDIAN_WINDOW, trace, PeakFit::Parabolic)
}

pub fn find_peaks_with(
    fp: &[f64],
    threshold_db: f64,
    window: usize,
    trace: &CorrTrace,
    fit: PeakFit,
) -> Result<Vec<Peak>> {
    if !(threshold_db > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "threshold_db must be > 0, got {threshold_db}"
        )));
    }
    if fp.len() != trace.len() {
        return Err(Error::TraceMismatch("fingerprint and trace lengths differ".into()));
    }
    find_peak_bins(fp, threshold_db, window)
        .into_iter()
        .map(|bin| {
            let v = trace.values[bin];
            Ok(Peak {
                bin,
                refined_delay: subsample_fit_with(trace, bin, fit)?.delay,
                magnitude: v.norm(),
                phase: v.arg(),
            })
        })
        .collect()
}

/// Parabolic sub-sample refinement of the peak at `bin`.
pub fn subsample_fit(trace: &CorrTrace, bin: usize) -> Result<DelayFit> {
    subsample_fit_with(trace, bin, PeakFit::Parabolic)
}

pub fn subsample_fit_with(trace: &CorrTrace, bin: usize, fit: PeakFit) -> Result<DelayFit> {
    trace.check_bin(bin)?;
    let raw = DelayFit {
        delay: bin as f64 * trace.sample_period,
        offset: 0.0,
        edge_fallback: true,
    };
    if bin == 0 || bin + 1 >= trace.len() {
        return Ok(raw);
    }
    let y0 = trace.magnitude(bin - 1);
    let y1 = trace.magnitude(bin);
    let y2 = trace.magnitude(bin + 1);
    let offset = match fit {
        PeakFit::Parabolic => {
            let curvature = y0 - 2.0 * y1 + y2;
            if curvature >= 0.0 {
                0.0
            } else {
                0.5 * (y0 - y2) / curvature
            }
        }
        PeakFit::Triangular => {
            let drop = y1 - y0.min(y2);
            if drop <= 0.0 {
                0.0
            } else {
                0.5 * (y2 - y0) / drop
            }
        }
    }
    .clamp(-1.0, 1.0);
    Ok(DelayFit {
        delay: (bin as f64 + offset) * trace.sample_period,
        offset,
        edge_fallback: false,
    })
}

/// Index of the largest magnitude within `center ± radius`.
pub fn local_max(trace: &CorrTrace, center: usize, radius: usize) -> Option<usize> {
    if trace.is_empty() {
        return None;
    }
    let lo = center.saturating_sub(radius);
    let hi = (center + radius).min(trace.len() - 1);
    if lo > hi {
        return None;
    }
    (lo..=hi).max_by(|&a, &b| trace.values[a].norm_sqr().total_cmp(&trace.values[b].norm_sqr()))
}

pub fn phase_at(trace: &CorrTrace, bin: usize) -> Result<f64> {
    trace.check_bin(bin)?;
    let v = trace.values[bin];
    if v.norm_sqr() == 0.0 {
        return Err(Error::UndefinedPhase(bin));
    }
    Ok(wrap_phase(v.arg()))
}

/// Phase of `bin_b` relative to `bin_a`.
pub fn diff_phase(trace: &CorrTrace, bin_a: usize, bin_b: usize) -> Result<f64> {
    trace.check_bin(bin_a)?;
    trace.check_bin(bin_b)?;
    let a = trace.values[bin_a];
    let b = trace.values[bin_b];
    if a.norm_sqr() == 0.0 {
        return Err(Error::UndefinedPhase(bin_a));
    }
    if b.norm_sqr() == 0.0 {
        return Err(Error::UndefinedPhase(bin_b));
    }
    Ok(wrap_phase((b * a.conj()).arg()))
}

/// Map an angle into (-pi, pi].
pub fn wrap_phase(x: f64) -> f64 {
    let w = x.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}
