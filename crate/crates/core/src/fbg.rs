//! Fiber Bragg grating interrogation by a tunable-wavelength probe.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{LN_2, PI};

use crate::correlator::{find_peak_bins, DEFAULT_MEDIAN_WINDOW};
use crate::error::{Error, Result};
use crate::fibermodel::{round_trip_delay, FiberSpec, Reflector};
use crate::frontend::DetectionConfig;
use crate::pipeline::{derive_seed, Acquisition};
use crate::probegen::ProbeSpec;

/// Smallest power reflectivity used for a grating far off resonance.
pub const REFLECTIVITY_FLOOR: f64 = 1e-15;

/// Sinusoidal variation of the Bragg wavelength along the grating array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Detuning {
    /// Peak wavelength offset, meters.
    pub amplitude: f64,
    /// Spatial period along the fiber, meters.
    pub period: f64,
    #[serde(default)]
    pub phase: f64,
}

fn default_threshold() -> f64 {
    10.0
}

fn default_window() -> usize {
    DEFAULT_MEDIAN_WINDOW
}

/// Grating array and wavelength sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FbgScenario {
    pub num_gratings: usize,
    /// Meters between gratings.
    pub spacing: f64,
    /// Position of the first grating, meters.
    pub first_position: f64,
    /// Explicit Bragg wavelengths; derived from `bragg_wavelength` and
    /// `detuning` when empty.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub center_wavelengths: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bragg_wavelength: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detuning: Option<Detuning>,
    /// Return loss at the Bragg wavelength, dB.
    pub peak_return_loss: f64,
    /// Full width at half maximum of the reflection spectrum, meters.
    pub fwhm: f64,
    pub sweep_start: f64,
    pub sweep_stop: f64,
    pub sweep_step: f64,
    #[serde(default = "default_threshold")]
    pub peak_threshold_db: f64,
    #[serde(default = "default_window")]
    pub median_window: usize,
}

impl FbgScenario {
    pub fn check(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.num_gratings == 0 {
            out.push("num_gratings must be >= 1".into());
        }
        if !(self.spacing > 0.0) {
            out.push(format!("spacing must be > 0, got {}", self.spacing));
        }
        if !(self.sweep_step > 0.0) {
            out.push(format!("sweep_step must be > 0, got {}", self.sweep_step));
        }
        if !(self.sweep_stop >= self.sweep_start && self.sweep_start > 0.0) {
            out.push(format!(
                "sweep range [{}, {}] is empty or non-positive",
                self.sweep_start, self.sweep_stop
            ));
        }
        if !(self.fwhm > 0.0) {
            out.push(format!("fwhm must be > 0, got {}", self.fwhm));
        }
        if !(self.peak_return_loss > 0.0) {
            out.push(format!("peak_return_loss must be > 0, got {}", self.peak_return_loss));
        }
        if self.center_wavelengths.is_empty() {
            if self.bragg_wavelength.is_none_or(|w| !(w > 0.0)) {
                out.push("either center_wavelengths or a positive bragg_wavelength is required".into());
            }
        } else if self.center_wavelengths.len() != self.num_gratings {
            out.push(format!(
                "center_wavelengths has {} entries for {} gratings",
                self.center_wavelengths.len(),
                self.num_gratings
            ));
        }
        if let Some(d) = &self.detuning {
            if !(d.period > 0.0) {
                out.push(format!("detuning.period must be > 0, got {}", d.period));
            }
        }
        if !(self.peak_threshold_db > 0.0) {
            out.push(format!("peak_threshold_db must be > 0, got {}", self.peak_threshold_db));
        }
        out
    }

    pub fn positions(&self) -> Vec<f64> {
        (0..self.num_gratings)
            .map(|k| self.first_position + k as f64 * self.spacing)
            .collect()
    }

    /// Bragg wavelength of every grating.
    pub fn centers(&self) -> Vec<f64> {
        if !self.center_wavelengths.is_empty() {
            return self.center_wavelengths.clone();
        }
        let nominal = self.bragg_wavelength.unwrap_or(0.0);
        self.positions()
            .iter()
            .map(|&z| match &self.detuning {
                Some(d) => nominal + d.amplitude * (2.0 * PI * (z - self.first_position) / d.period + d.phase).sin(),
                None => nominal,
            })
            .collect()
    }

    pub fn wavelengths(&self) -> Vec<f64> {
        let n = ((self.sweep_stop - self.sweep_start) / self.sweep_step + 1e-9).floor() as usize + 1;
        (0..n).map(|k| self.sweep_start + k as f64 * self.sweep_step).collect()
    }

    /// Power reflectivity of a grating centered at `center` seen at `wavelength`.
    pub fn reflectivity(&self, center: f64, wavelength: f64) -> f64 {
        let peak = 10f64.powf(-self.peak_return_loss / 10.0);
        let x = (wavelength - center) / self.fwhm;
        (peak * (-4.0 * LN_2 * x * x).exp()).max(REFLECTIVITY_FLOOR)
    }

    /// The gratings as reflectors at one probe wavelength.
    pub fn reflectors_at(&self, wavelength: f64) -> Vec<Reflector> {
        self.positions()
            .into_iter()
            .zip(self.centers())
            .map(|(z, c)| Reflector::new(z, -10.0 * self.reflectivity(c, wavelength).log10()))
            .collect()
    }
}

/// Result of a wavelength sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct FbgSweep {
    pub wavelengths: Vec<f64>,
    /// Correlation bin of each grating.
    pub bins: Vec<usize>,
    /// Detected power, `spectra[grating][wavelength]`.
    pub spectra: Vec<Vec<f64>>,
    /// Estimated Bragg wavelengths.
    pub centers: Vec<f64>,
}

/// Vertex of a parabola through the log-spectrum around its maximum.
pub fn fit_center(wavelengths: &[f64], power: &[f64]) -> f64 {
    let Some(k) = (0..power.len()).max_by(|&a, &b| power[a].total_cmp(&power[b])) else {
        return f64::NAN;
    };
    if k == 0 || k + 1 >= power.len() || power[k - 1] <= 0.0 || power[k + 1] <= 0.0 {
        return wavelengths[k];
    }
    let (l0, l1, l2) = (power[k - 1].ln(), power[k].ln(), power[k + 1].ln());
    let curvature = l0 - 2.0 * l1 + l2;
    if curvature >= 0.0 {
        return wavelengths[k];
    }
    let offset = (0.5 * (l0 - l2) / curvature).clamp(-1.0, 1.0);
    let step = wavelengths[k + 1] - wavelengths[k];
    wavelengths[k] + offset * step
}

/// Sweep the probe wavelength, run the coherent chain at each step and
/// read every grating's peak power.
pub fn fbg_sweep(
    scenario: &FbgScenario,
    fiber: &FiberSpec,
    probe: &ProbeSpec,
    detection: &DetectionConfig,
    seed: u64,
) -> Result<FbgSweep> {
    let problems = scenario.check();
    if !problems.is_empty() {
        return Err(Error::InvalidParameter(problems.join("; ")));
    }
    let wavelengths = scenario.wavelengths();
    let traces = wavelengths
        .par_iter()
        .enumerate()
        .map(|(k, &wl)| {
            let mut f = fiber.clone();
            f.reflectors.extend(scenario.reflectors_at(wl));
            let acq = Acquisition {
                probe: ProbeSpec {
                    wavelength: wl,
                    ..probe.clone()
                },
                fiber: f,
                perturbations: Vec::new(),
                detection: detection.clone(),
                frames: 1,
                frame_rate: 1.0 / probe.frame_period,
                seed: derive_seed(seed, k as u64, u64::MAX),
            };
            acq.synthesizer()?.trace(0)
        })
        .collect::<Result<Vec<_>>>()?;

    let len = traces[0].len();
    let envelope: Vec<f64> = (0..len)
        .map(|j| traces.iter().map(|t| t.values[j].norm_sqr()).fold(0.0, f64::max))
        .collect();
    let detected = find_peak_bins(&envelope, scenario.peak_threshold_db, scenario.median_window);

    let fs = probe.sample_rate();
    let tolerance = (probe.samples_per_bit / 2).max(1);
    let mut bins = Vec::with_capacity(scenario.num_gratings);
    let mut unresolved = Vec::new();
    for (g, z) in scenario.positions().into_iter().enumerate() {
        let expected = (round_trip_delay(fiber, z)? * fs).round() as usize;
        match detected.iter().copied().min_by_key(|b| b.abs_diff(expected)) {
            Some(b) if b.abs_diff(expected) <= tolerance => bins.push(b),
            _ => {
                unresolved.push(g);
                bins.push(expected);
            }
        }
    }
    for g in 1..bins.len() {
        if bins[g] == bins[g - 1] {
            unresolved.extend([g - 1, g]);
        }
    }
    if !unresolved.is_empty() {
        unresolved.sort_unstable();
        unresolved.dedup();
        return Err(Error::UnresolvedGratings(format!("{unresolved:?}")));
    }

    let spectra: Vec<Vec<f64>> = bins
        .iter()
        .map(|&b| traces.iter().map(|t| t.values[b].norm_sqr()).collect())
        .collect();
    let centers = spectra.iter().map(|s| fit_center(&wavelengths, s)).collect();
    Ok(FbgSweep {
        wavelengths,
        bins,
        spectra,
        centers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::DetectionMode;
    use crate::probegen::Modulation;

    fn single(center: f64) -> FbgScenario {
        FbgScenario {
            num_gratings: 1,
            spacing: 0.05,
            first_position: 2.0,
            center_wavelengths: vec![center],
            bragg_wavelength: None,
            detuning: None,
            peak_return_loss: 30.0,
            fwhm: 100e-12,
            sweep_start: 1549.7e-9,
            sweep_stop: 1550.3e-9,
            sweep_step: 8e-12,
            peak_threshold_db: 10.0,
            median_window: 201,
        }
    }

    #[test]
    fn gaussian_profile() {
        let s = single(1550e-9);
        assert!((s.reflectivity(1550e-9, 1550e-9) - 1e-3).abs() < 1e-15);
        assert!((s.reflectivity(1550e-9, 1550.05e-9) - 0.5e-3).abs() < 1e-12);
        assert_eq!(s.reflectivity(1550e-9, 1560e-9), REFLECTIVITY_FLOOR);
    }

    #[test]
    fn log_parabola_recovers_gaussian_center() {
        let s = single(1550.0123e-9);
        let wl = s.wavelengths();
        assert_eq!(wl.len(), 76);
        let p: Vec<f64> = wl.iter().map(|&w| s.reflectivity(1550.0123e-9, w)).collect();
        assert!((fit_center(&wl, &p) - 1550.0123e-9).abs() < 1e-16);
    }

    #[test]
    fn detuning_map() {
        let s = FbgScenario {
            num_gratings: 10,
            center_wavelengths: vec![],
            bragg_wavelength: Some(1550e-9),
            detuning: Some(Detuning {
                amplitude: 150e-12,
                period: 0.5,
                phase: 0.0,
            }),
            ..single(0.0)
        };
        let c = s.centers();
        assert!((c[0] - 1550e-9).abs() < 1e-18);
        // Quarter period is 2.5 gratings: grating 5 sits at half a period.
        assert!((c[5] - 1550e-9).abs() < 1e-18);
        assert!(c.iter().all(|&w| (w - 1550e-9).abs() <= 150e-12 + 1e-18));
        assert!(s.check().is_empty());
    }

    #[test]
    fn sweep_recovers_single_center() {
        let mut fiber = FiberSpec::new(3.0, 1.5);
        fiber.rng_seed = 3;
        let probe = ProbeSpec {
            prbs_order: 9,
            extended: true,
            modulation: Modulation::Bpsk,
            bit_rate: 5e9,
            samples_per_bit: 2,
            wavelength: 1550e-9,
            frame_period: 200e-9,
            seed: None,
        };
        let mut det = DetectionConfig::new(DetectionMode::Coherent);
        det.thermal_noise_sigma = 1e-3;
        let s = single(1550.0417e-9);
        let out = fbg_sweep(&s, &fiber, &probe, &det, 5).unwrap();
        assert_eq!(out.bins, vec![200]);
        assert!((out.centers[0] - 1550.0417e-9).abs() < 4e-12, "{}", out.centers[0]);
    }

    #[test]
    fn missing_grating_is_reported() {
        let fiber = FiberSpec::new(3.0, 1.5);
        let probe = ProbeSpec {
            prbs_order: 7,
            extended: false,
            modulation: Modulation::Bpsk,
            bit_rate: 5e9,
            samples_per_bit: 2,
            wavelength: 1550e-9,
            frame_period: 200e-9,
            seed: None,
        };
        let det = DetectionConfig::new(DetectionMode::Coherent);
        // Sweep far from the Bragg wavelength: the grating never lights up.
        let s = FbgScenario {
            sweep_start: 1560e-9,
            sweep_stop: 1560.1e-9,
            ..single(1550e-9)
        };
        assert!(matches!(
            fbg_sweep(&s, &fiber, &probe, &det, 1),
            Err(Error::UnresolvedGratings(_))
        ));
    }
}
