//! Probe propagation, photodetection and ADC models.

use std::cell::RefCell;
use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fibermodel::ImpulseResponse;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectionMode {
    Direct,
    Coherent,
}

fn one() -> f64 {
    1.0
}

fn sixteen() -> u8 {
    16
}

fn one_usize() -> usize {
    1
}

/// Receiver configuration.
///
/// `thermal_noise_sigma` is the per-sample standard deviation after
/// detection; in coherent mode it applies to I and Q separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionConfig {
    pub mode: DetectionMode,
    #[serde(default)]
    pub thermal_noise_sigma: f64,
    /// Residual laser linewidth seen by the self-homodyne receiver, Hz.
    #[serde(default)]
    pub lo_linewidth: f64,
    #[serde(default = "one")]
    pub lo_power_gain: f64,
    #[serde(default = "sixteen")]
    pub adc_bits: u8,
    /// Half-range of the quantizer; auto-ranged per frame when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub full_scale: Option<f64>,
    #[serde(default = "one_usize")]
    pub num_averages: usize,
}

impl DetectionConfig {
    pub fn new(mode: DetectionMode) -> Self {
        DetectionConfig {
            mode,
            thermal_noise_sigma: 0.0,
            lo_linewidth: 0.0,
            lo_power_gain: 1.0,
            adc_bits: 16,
            full_scale: None,
            num_averages: 1,
        }
    }

    pub fn check(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(1..=16).contains(&self.adc_bits) {
            out.push(format!("adc_bits must be in [1, 16], got {}", self.adc_bits));
        }
        if self.num_averages < 1 {
            out.push("num_averages must be >= 1".into());
        }
        if !(self.thermal_noise_sigma >= 0.0) {
            out.push(format!(
                "thermal_noise_sigma must be >= 0, got {}",
                self.thermal_noise_sigma
            ));
        }
        if !(self.lo_linewidth >= 0.0) {
            out.push(format!("lo_linewidth must be >= 0, got {}", self.lo_linewidth));
        }
        if !(self.lo_power_gain > 0.0) {
            out.push(format!("lo_power_gain must be > 0, got {}", self.lo_power_gain));
        }
        if let Some(fs) = self.full_scale {
            if !(fs > 0.0) {
                out.push(format!("full_scale must be > 0, got {fs}"));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Samples {
    Real(Vec<f64>),
    Complex(Vec<Complex64>),
}

impl Samples {
    pub fn len(&self) -> usize {
        match self {
            Samples::Real(v) => v.len(),
            Samples::Complex(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_complex(&self) -> bool {
        matches!(self, Samples::Complex(_))
    }
}

/// One detected acquisition.
#[derive(Debug, Clone, PartialEq)]
pub struct RxFrame {
    pub samples: Samples,
    pub sample_rate: f64,
    pub epoch: f64,
    pub detection: DetectionMode,
}

impl RxFrame {
    /// Element-wise mean of frames with identical shape.
    pub fn mean(frames: &[RxFrame]) -> Result<RxFrame> {
        let first = frames
            .first()
            .ok_or_else(|| Error::TraceMismatch("no frames to average".into()))?;
        let n = first.samples.len();
        if frames
            .iter()
            .any(|f| f.samples.len() != n || f.samples.is_complex() != first.samples.is_complex())
        {
            return Err(Error::TraceMismatch("frame shapes differ".into()));
        }
        let scale = 1.0 / frames.len() as f64;
        let samples = match &first.samples {
            Samples::Real(_) => {
                let mut acc = vec![0.0; n];
                for f in frames {
                    if let Samples::Real(v) = &f.samples {
                        acc.iter_mut().zip(v).for_each(|(a, x)| *a += x);
                    }
                }
                acc.iter_mut().for_each(|a| *a *= scale);
                Samples::Real(acc)
            }
            Samples::Complex(_) => {
                let mut acc = vec![Complex64::new(0.0, 0.0); n];
                for f in frames {
                    if let Samples::Complex(v) = &f.samples {
                        acc.iter_mut().zip(v).for_each(|(a, x)| *a += x);
                    }
                }
                acc.iter_mut().for_each(|a| *a *= scale);
                Samples::Complex(acc)
            }
        };
        Ok(RxFrame {
            samples,
            sample_rate: first.sample_rate,
            epoch: first.epoch,
            detection: first.detection,
        })
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub(crate) fn fft_in_place(buf: &mut [Complex64], inverse: bool) {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        let fft = if inverse {
            p.plan_fft_inverse(buf.len())
        } else {
            p.plan_fft_forward(buf.len())
        };
        fft.process(buf);
    });
}

/// Linear convolution of a real probe with the complex taps, zero-padded to
/// `frame_len` samples.
pub fn propagate(probe: &[f64], h: &ImpulseResponse, frame_len: usize) -> Result<Vec<Complex64>> {
    if probe.is_empty() {
        return Err(Error::EmptySequence);
    }
    let needed = probe.len() + h.taps.len() - 1;
    if frame_len < needed {
        return Err(Error::FrameTooShort { needed, frame_len });
    }
    let nonzero: Vec<(usize, Complex64)> = h
        .taps
        .iter()
        .enumerate()
        .filter(|(_, t)| t.re != 0.0 || t.im != 0.0)
        .map(|(k, &t)| (k, t))
        .collect();
    let mut out = vec![Complex64::new(0.0, 0.0); frame_len];
    // Sparse responses (reflectors only) are cheaper to sum directly.
    if nonzero.len() * probe.len() <= 64 * needed {
        for (k, t) in nonzero {
            for (o, &p) in out[k..k + probe.len()].iter_mut().zip(probe) {
                *o += t * p;
            }
        }
        return Ok(out);
    }
    let n = needed.next_power_of_two();
    let mut a: Vec<Complex64> = probe.iter().map(|&p| Complex64::new(p, 0.0)).collect();
    a.resize(n, Complex64::new(0.0, 0.0));
    let mut b = h.taps.clone();
    b.resize(n, Complex64::new(0.0, 0.0));
    fft_in_place(&mut a, false);
    fft_in_place(&mut b, false);
    a.iter_mut().zip(&b).for_each(|(x, y)| *x *= y);
    fft_in_place(&mut a, true);
    let scale = 1.0 / n as f64;
    for (o, x) in out[..needed].iter_mut().zip(&a) {
        *o = x * scale;
    }
    Ok(out)
}

/// Square-law photodetection plus additive Gaussian noise.
pub fn detect_direct(field: &[Complex64], cfg: &DetectionConfig, noise_seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let sigma = cfg.thermal_noise_sigma;
    field
        .iter()
        .map(|f| {
            let p = f.norm_sqr();
            if sigma > 0.0 {
                let n: f64 = StandardNormal.sample(&mut rng);
                p + sigma * n
            } else {
                p
            }
        })
        .collect()
}

/// Wiener phase walk with per-sample increment variance `2 pi linewidth dt`.
pub fn wiener_phase(n: usize, sample_rate: f64, linewidth: f64, initial: f64, rng: &mut impl Rng) -> Vec<f64> {
    let step = (2.0 * PI * linewidth / sample_rate).sqrt();
    let mut theta = initial;
    (0..n)
        .map(|_| {
            let current = theta;
            if step > 0.0 {
                let z: f64 = StandardNormal.sample(rng);
                theta += step * z;
            }
            current
        })
        .collect()
}

/// Coherent (self-homodyne) detection starting from LO phase zero.
pub fn detect_coherent(
    field: &[Complex64],
    sample_rate: f64,
    cfg: &DetectionConfig,
    noise_seed: u64,
) -> Vec<Complex64> {
    detect_coherent_from(field, sample_rate, cfg, noise_seed, 0.0)
}

/// Coherent detection with the residual laser phase starting at `initial_phase`.
pub fn detect_coherent_from(
    field: &[Complex64],
    sample_rate: f64,
    cfg: &DetectionConfig,
    noise_seed: u64,
    initial_phase: f64,
) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let gain = cfg.lo_power_gain.sqrt();
    let sigma = cfg.thermal_noise_sigma;
    let theta = if cfg.lo_linewidth > 0.0 || initial_phase != 0.0 {
        Some(wiener_phase(
            field.len(),
            sample_rate,
            cfg.lo_linewidth,
            initial_phase,
            &mut rng,
        ))
    } else {
        None
    };
    field
        .iter()
        .enumerate()
        .map(|(k, f)| {
            let mut y = f * gain;
            if let Some(th) = &theta {
                y *= Complex64::from_polar(1.0, -th[k]);
            }
            if sigma > 0.0 {
                let ni: f64 = StandardNormal.sample(&mut rng);
                let nq: f64 = StandardNormal.sample(&mut rng);
                y += Complex64::new(sigma * ni, sigma * nq);
            }
            y
        })
        .collect()
}

fn quantize(x: f64, full_scale: f64, bits: u8) -> f64 {
    let levels = (1u32 << bits) as f64;
    let step = 2.0 * full_scale / levels;
    let top = full_scale - step / 2.0;
    (step * ((x / step).floor() + 0.5)).clamp(-top, top)
}

fn slice(x: f64, threshold: f64) -> f64 {
    if x >= threshold {
        1.0
    } else {
        -1.0
    }
}

/// Quantize real samples.
///
/// One bit slices at the sample mean (the midpoint of a unipolar signal);
/// more bits quantize mid-rise over `[-full_scale, full_scale]`.
pub fn adc_real(samples: &[f64], cfg: &DetectionConfig) -> Result<Vec<f64>> {
    if cfg.adc_bits == 1 {
        let mean = samples.iter().sum::<f64>() / samples.len().max(1) as f64;
        return Ok(samples.iter().map(|&x| slice(x, mean)).collect());
    }
    let fs = resolve_full_scale(cfg, samples.iter().map(|x| x.abs()))?;
    match fs {
        Some(fs) => Ok(samples.iter().map(|&x| quantize(x, fs, cfg.adc_bits)).collect()),
        None => Ok(samples.to_vec()),
    }
}

/// Quantize I and Q independently; one bit slices each at zero.
pub fn adc_complex(samples: &[Complex64], cfg: &DetectionConfig) -> Result<Vec<Complex64>> {
    if cfg.adc_bits == 1 {
        return Ok(samples
            .iter()
            .map(|x| Complex64::new(slice(x.re, 0.0), slice(x.im, 0.0)))
            .collect());
    }
    let fs = resolve_full_scale(cfg, samples.iter().map(|x| x.re.abs().max(x.im.abs())))?;
    match fs {
        Some(fs) => Ok(samples
            .iter()
            .map(|x| Complex64::new(quantize(x.re, fs, cfg.adc_bits), quantize(x.im, fs, cfg.adc_bits)))
            .collect()),
        None => Ok(samples.to_vec()),
    }
}

fn resolve_full_scale(cfg: &DetectionConfig, mags: impl Iterator<Item = f64>) -> Result<Option<f64>> {
    if !(1..=16).contains(&cfg.adc_bits) {
        return Err(Error::InvalidParameter(format!(
            "adc_bits must be in [1, 16], got {}",
            cfg.adc_bits
        )));
    }
    match cfg.full_scale {
        Some(fs) if fs > 0.0 => Ok(Some(fs)),
        Some(fs) => Err(Error::InvalidFullScale(fs)),
        None => {
            let peak = mags.fold(0.0f64, f64::max);
            Ok((peak > 0.0).then_some(peak))
        }
    }
}

pub fn adc(samples: &Samples, cfg: &DetectionConfig) -> Result<Samples> {
    Ok(match samples {
        Samples::Real(v) => Samples::Real(adc_real(v, cfg)?),
        Samples::Complex(v) => Samples::Complex(adc_complex(v, cfg)?),
    })
}

/// Detect and digitize one propagated field.
pub fn receive(
    field: &[Complex64],
    sample_rate: f64,
    epoch: f64,
    cfg: &DetectionConfig,
    noise_seed: u64,
    initial_phase: f64,
) -> Result<RxFrame> {
    let raw = match cfg.mode {
        DetectionMode::Direct => Samples::Real(detect_direct(field, cfg, noise_seed)),
        DetectionMode::Coherent => {
            Samples::Complex(detect_coherent_from(field, sample_rate, cfg, noise_seed, initial_phase))
        }
    };
    Ok(RxFrame {
        samples: adc(&raw, cfg)?,
        sample_rate,
        epoch,
        detection: cfg.mode,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fibermodel::{build_static_response, FiberSpec, Reflector};

    fn impulse(taps: Vec<Complex64>) -> ImpulseResponse {
        let mut spec = FiberSpec::new(1.0, 1.5);
        spec.backscatter_coeff = -300.0;
        let mut h = build_static_response(&spec, 1e9, 1550e-9).unwrap();
        h.taps = taps;
        h
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn unit_tap_delays_probe() {
        let probe = [1.0, -1.0, 1.0, 1.0];
        let mut taps = vec![c(0.0, 0.0); 6];
        taps[3] = c(1.0, 0.0);
        let out = propagate(&probe, &impulse(taps), 12).unwrap();
        let re: Vec<f64> = out.iter().map(|x| x.re).collect();
        assert_eq!(re, vec![0.0, 0.0, 0.0, 1.0, -1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(matches!(
            propagate(&probe, &impulse(vec![c(1.0, 0.0); 6]), 8),
            Err(Error::FrameTooShort { .. })
        ));
    }

    #[test]
    fn fft_path_matches_direct_sum() {
        let probe: Vec<f64> = (0..300).map(|k| if (k * 7919) % 13 < 6 { 1.0 } else { -1.0 }).collect();
        let taps: Vec<Complex64> = (0..400)
            .map(|k| c(((k * 31) % 17) as f64 * 1e-3, ((k * 11) % 7) as f64 * -1e-3))
            .collect();
        let out = propagate(&probe, &impulse(taps.clone()), 800).unwrap();
        for n in [0usize, 1, 150, 299, 400, 698] {
            let mut want = c(0.0, 0.0);
            for (k, t) in taps.iter().enumerate() {
                if n >= k && n - k < probe.len() {
                    want += t * probe[n - k];
                }
            }
            assert!((out[n] - want).norm() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn two_taps_add_coherently_and_energy_adds_without_overlap() {
        let probe: Vec<f64> = vec![1.0, -1.0, -1.0, 1.0, 1.0];
        let mut taps = vec![c(0.0, 0.0); 20];
        taps[0] = c(0.3, 0.0);
        taps[10] = c(0.0, 0.4);
        let out = propagate(&probe, &impulse(taps), 30).unwrap();
        let energy: f64 = out.iter().map(|x| x.norm_sqr()).sum();
        assert!((energy - (0.09 + 0.16) * 5.0).abs() < 1e-12);
    }

    #[test]
    fn direct_detection_is_square_law() {
        let cfg = DetectionConfig::new(DetectionMode::Direct);
        let field = vec![c(0.5, 0.5), c(-1.0, 0.0), c(0.0, 2.0)];
        let a = detect_direct(&field, &cfg, 1);
        let scaled: Vec<Complex64> = field.iter().map(|x| x * 3.0).collect();
        let b = detect_direct(&scaled, &cfg, 1);
        for (x, y) in a.iter().zip(&b) {
            assert!((y - 9.0 * x).abs() < 1e-12);
        }
        assert_eq!(a, vec![0.5, 1.0, 4.0]);
        // Two in-phase echoes of equal field: four times one echo's power.
        let one = detect_direct(&[c(0.1, 0.0)], &cfg, 0)[0];
        let two = detect_direct(&[c(0.2, 0.0)], &cfg, 0)[0];
        assert!((two / one - 4.0).abs() < 1e-12);
    }

    #[test]
    fn noiseless_coherent_is_linear() {
        let cfg = DetectionConfig {
            lo_power_gain: 4.0,
            ..DetectionConfig::new(DetectionMode::Coherent)
        };
        let field = vec![c(0.5, 0.5), c(-1.0, 0.0)];
        let out = detect_coherent(&field, 1e9, &cfg, 3);
        assert_eq!(out, vec![c(1.0, 1.0), c(-2.0, 0.0)]);
    }

    #[test]
    fn coherent_linearity_with_phase_noise() {
        let cfg = DetectionConfig {
            lo_linewidth: 1e6,
            ..DetectionConfig::new(DetectionMode::Coherent)
        };
        let field: Vec<Complex64> = (0..50).map(|k| c(k as f64, 1.0)).collect();
        let scaled: Vec<Complex64> = field.iter().map(|x| x * c(0.0, 2.0)).collect();
        let a = detect_coherent(&field, 1e9, &cfg, 9);
        let b = detect_coherent(&scaled, 1e9, &cfg, 9);
        for (x, y) in a.iter().zip(&b) {
            assert!((y - x * c(0.0, 2.0)).norm() < 1e-9);
        }
    }

    #[test]
    fn wiener_variance_grows_linearly() {
        let fs = 1e9;
        let lw = 1e5;
        let k = 200;
        let seeds = 2000;
        let mut acc = 0.0;
        for s in 0..seeds {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let th = wiener_phase(k + 1, fs, lw, 0.0, &mut rng);
            acc += th[k] * th[k];
        }
        let var = acc / seeds as f64;
        let want = 2.0 * PI * lw / fs * k as f64;
        // Sample variance of a Gaussian: relative sd sqrt(2/2000) ~ 3.2%.
        assert!((var / want - 1.0).abs() < 0.12, "{var} vs {want}");
    }

    #[test]
    fn one_bit_positive_constant() {
        let cfg = DetectionConfig {
            adc_bits: 1,
            ..DetectionConfig::new(DetectionMode::Coherent)
        };
        let out = adc_complex(&[c(0.3, 0.2); 5], &cfg).unwrap();
        assert!(out.iter().all(|x| *x == c(1.0, 1.0)));
        let cfg = DetectionConfig {
            adc_bits: 1,
            ..DetectionConfig::new(DetectionMode::Direct)
        };
        let out = adc_real(&[0.0, 1.0, 1.0, 0.0], &cfg).unwrap();
        assert_eq!(out, vec![-1.0, 1.0, 1.0, -1.0]);
    }

    #[test]
    fn one_bit_mean_follows_erf() {
        // Mean of sign(s + n) is erf(s / (sigma sqrt 2)); compare on a grid.
        let cfg = DetectionConfig {
            adc_bits: 1,
            thermal_noise_sigma: 1.0,
            ..DetectionConfig::new(DetectionMode::Coherent)
        };
        for (s, erf) in [
            (0.0, 0.0),
            (0.5, 0.382_924_922_548_026),
            (1.0, 0.682_689_492_137_086),
            (2.0, 0.954_499_736_103_642),
        ] {
            let field = vec![c(s, 0.0); 100_000];
            let det = detect_coherent(&field, 1e9, &cfg, 5);
            let q = adc_complex(&det, &cfg).unwrap();
            let mean = q.iter().map(|x| x.re).sum::<f64>() / q.len() as f64;
            assert!((mean - erf).abs() < 0.01, "s={s}: {mean} vs {erf}");
        }
    }

    #[test]
    fn sixteen_bit_sine_snr() {
        let cfg = DetectionConfig {
            full_scale: Some(1.0),
            ..DetectionConfig::new(DetectionMode::Direct)
        };
        let n = 1 << 16;
        let x: Vec<f64> = (0..n)
            .map(|k| (2.0 * PI * 1001.0 * k as f64 / n as f64).sin())
            .collect();
        let q = adc_real(&x, &cfg).unwrap();
        let sig: f64 = x.iter().map(|v| v * v).sum();
        let err: f64 = x.iter().zip(&q).map(|(a, b)| (a - b).powi(2)).sum();
        let snr = 10.0 * (sig / err).log10();
        assert!((snr - (6.02 * 16.0 + 1.76)).abs() < 0.5, "{snr}");
    }

    #[test]
    fn zero_full_scale_is_error() {
        let cfg = DetectionConfig {
            full_scale: Some(0.0),
            ..DetectionConfig::new(DetectionMode::Direct)
        };
        assert!(matches!(adc_real(&[1.0], &cfg), Err(Error::InvalidFullScale(_))));
    }

    #[test]
    fn receive_builds_frame() {
        let mut spec = FiberSpec::new(2.0, 1.5);
        spec.backscatter_coeff = -300.0;
        spec.reflectors.push(Reflector::new(1.0, 20.0));
        let h = build_static_response(&spec, 1e9, 1550e-9).unwrap();
        let field = propagate(&[1.0, 0.0, 1.0], &h, 40).unwrap();
        let cfg = DetectionConfig::new(DetectionMode::Direct);
        let f = receive(&field, 1e9, 0.0, &cfg, 0, 0.0).unwrap();
        assert_eq!(f.samples.len(), 40);
        assert!(!f.samples.is_complex());
    }
}
