//! Round-trip impulse response of the fiber under test.
//!
//! The fiber is a list of point echoes: randomly placed Rayleigh scatterers
//! plus deterministic Fresnel reflectors. Each echo carries a complex field
//! amplitude and a round-trip delay; binning them onto the receiver sample
//! grid yields the taps the front end convolves with.
//!
//! Reflectors are binned with linear interpolation between the two nearest
//! samples so that sub-sample delays (and thermal shifts of a few
//! picoseconds) survive into the correlation peak shape. Scatterers go to the
//! nearest sample, which keeps the expected backscattered power per bin
//! unbiased.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::TimeSeries;
use crate::error::{Error, Result};

/// Vacuum speed of light, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Refractive-index change per kelvin of silica fiber.
pub const THERMO_OPTIC_COEFF: f64 = 1.0e-5;

fn default_backscatter() -> f64 {
    -70.0
}

fn default_thermal_coeff() -> f64 {
    35.0
}

/// A discrete Fresnel reflection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reflector {
    /// Meters from the fiber input.
    pub position: f64,
    /// Return loss in dB (positive).
    pub return_loss: f64,
    /// Reflection phase in radians.
    #[serde(default)]
    pub phase: f64,
}

impl Reflector {
    pub fn new(position: f64, return_loss: f64) -> Self {
        Reflector {
            position,
            return_loss,
            phase: 0.0,
        }
    }

    pub fn field_reflectivity(&self) -> f64 {
        10f64.powf(-self.return_loss / 20.0)
    }
}

/// Static description of the fiber under test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberSpec {
    /// Meters.
    pub length: f64,
    /// dB/km.
    pub attenuation: f64,
    pub group_index: f64,
    /// Backscatter coefficient in dB per meter.
    #[serde(default = "default_backscatter")]
    pub backscatter_coeff: f64,
    /// Mean scatterer spacing in meters; one per receiver sample when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scatterer_spacing: Option<f64>,
    /// One-way thermal coefficient of delay, ps/(K km).
    #[serde(default = "default_thermal_coeff")]
    pub thermal_coeff: f64,
    #[serde(default)]
    pub reflectors: Vec<Reflector>,
    #[serde(default)]
    pub rng_seed: u64,
}

impl FiberSpec {
    pub fn new(length: f64, group_index: f64) -> Self {
        FiberSpec {
            length,
            attenuation: 0.0,
            group_index,
            backscatter_coeff: default_backscatter(),
            scatterer_spacing: None,
            thermal_coeff: default_thermal_coeff(),
            reflectors: Vec::new(),
            rng_seed: 0,
        }
    }

    /// Type invariants; returns one message per violation.
    pub fn check(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.length > 0.0) {
            out.push(format!("length must be > 0, got {}", self.length));
        }
        if !(1.4..=1.6).contains(&self.group_index) {
            out.push(format!("group_index must be in [1.4, 1.6], got {}", self.group_index));
        }
        if !(self.backscatter_coeff < 0.0) {
            out.push(format!(
                "backscatter_coeff must be < 0 dB/m, got {}",
                self.backscatter_coeff
            ));
        }
        if !(self.attenuation >= 0.0) {
            out.push(format!("attenuation must be >= 0, got {}", self.attenuation));
        }
        if let Some(s) = self.scatterer_spacing {
            if !(s > 0.0) {
                out.push(format!("scatterer_spacing must be > 0, got {s}"));
            }
        }
        for (i, r) in self.reflectors.iter().enumerate() {
            if !(r.position > 0.0 && r.position < self.length) {
                out.push(format!(
                    "reflectors[{i}].position {} must lie strictly inside (0, {})",
                    r.position, self.length
                ));
            }
            if !(r.return_loss > 0.0) {
                out.push(format!(
                    "reflectors[{i}].return_loss must be > 0, got {}",
                    r.return_loss
                ));
            }
        }
        out
    }

    /// Group delay per meter of one-way propagation, s/m.
    pub fn delay_per_meter(&self) -> f64 {
        self.group_index / SPEED_OF_LIGHT
    }

    /// Two-way power attenuation factor for an echo at `z` meters.
    pub fn round_trip_power_loss(&self, z: f64) -> f64 {
        10f64.powf(-2.0 * self.attenuation * (z / 1000.0) / 10.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PerturbationKind {
    AcousticTone {
        /// Hz.
        frequency: f64,
        /// Peak refractive-index change.
        index_amplitude: f64,
    },
    TemperatureStep {
        /// Kelvin.
        delta_t: f64,
        /// Seconds; the step is applied for `t >= start_time`.
        #[serde(default)]
        start_time: f64,
    },
    TemperatureSeries {
        /// Sample spacing of `values`, seconds.
        dt: f64,
        /// Temperature change in kelvin, held between samples.
        values: Vec<f64>,
    },
}

/// Environmental disturbance of one fiber section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    /// Section center, meters.
    pub center: f64,
    /// Section length, meters.
    pub extent: f64,
    #[serde(flatten)]
    pub kind: PerturbationKind,
}

impl Perturbation {
    pub fn start(&self) -> f64 {
        self.center - self.extent / 2.0
    }

    pub fn end(&self) -> f64 {
        self.center + self.extent / 2.0
    }

    pub fn check(&self, fiber_length: f64) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.extent > 0.0) {
            out.push(format!("extent must be > 0, got {}", self.extent));
        }
        if self.start() < 0.0 || self.end() > fiber_length {
            out.push(format!(
                "section [{}, {}] m not inside the fiber [0, {fiber_length}] m",
                self.start(),
                self.end()
            ));
        }
        match &self.kind {
            PerturbationKind::AcousticTone { frequency, .. } if !(*frequency >= 0.0) => {
                out.push(format!("frequency must be >= 0, got {frequency}"));
            }
            PerturbationKind::TemperatureSeries { dt, values } => {
                if !(*dt > 0.0) {
                    out.push(format!("dt must be > 0, got {dt}"));
                }
                if values.is_empty() {
                    out.push("temperature series is empty".into());
                }
            }
            _ => {}
        }
        out
    }

    /// Refractive-index change and temperature change at time `t`.
    fn state_at(&self, t: f64) -> (f64, f64) {
        match &self.kind {
            PerturbationKind::AcousticTone {
                frequency,
                index_amplitude,
            } => (index_amplitude * (2.0 * PI * frequency * t).sin(), 0.0),
            PerturbationKind::TemperatureStep { delta_t, start_time } => {
                let dt = if t >= *start_time { *delta_t } else { 0.0 };
                (THERMO_OPTIC_COEFF * dt, dt)
            }
            PerturbationKind::TemperatureSeries { dt, values } => {
                let idx = ((t / dt).floor() as usize).min(values.len() - 1);
                let d = values[idx];
                (THERMO_OPTIC_COEFF * d, d)
            }
        }
    }

    /// Peak one-way phase excursion over the section, radians.
    pub fn peak_one_way_phase(&self, wavelength: f64) -> f64 {
        let peak_dn = match &self.kind {
            PerturbationKind::AcousticTone { index_amplitude, .. } => index_amplitude.abs(),
            PerturbationKind::TemperatureStep { delta_t, .. } => THERMO_OPTIC_COEFF * delta_t.abs(),
            PerturbationKind::TemperatureSeries { values, .. } => {
                THERMO_OPTIC_COEFF * values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
            }
        };
        index_phase(peak_dn, self.extent, wavelength)
    }
}

/// One-way optical phase accumulated over `extent` meters by an index change.
pub fn index_phase(delta_n: f64, extent: f64, wavelength: f64) -> f64 {
    2.0 * PI * delta_n * extent / wavelength
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EchoKind {
    Scatterer,
    Reflector,
}

/// A point contribution to the round-trip response.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Echo {
    pub position: f64,
    /// Round-trip delay, seconds.
    pub delay: f64,
    /// Complex field reflectivity including two-way attenuation.
    pub amplitude: Complex64,
    pub kind: EchoKind,
}

/// Complex round-trip response sampled on the receiver grid.
#[derive(Debug, Clone)]
pub struct ImpulseResponse {
    pub taps: Vec<Complex64>,
    pub sample_period: f64,
    /// Time at which the response was frozen, seconds.
    pub epoch: f64,
    pub wavelength: f64,
    /// Set when two reflectors are closer than one sample period.
    pub merged_reflectors: bool,
    echoes: Arc<Vec<Echo>>,
}

impl ImpulseResponse {
    pub fn echoes(&self) -> &[Echo] {
        &self.echoes
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }
}

fn tap_count(spec: &FiberSpec, sample_period: f64) -> usize {
    let max_delay = 2.0 * spec.length * spec.delay_per_meter();
    (max_delay / sample_period).floor() as usize + 2
}

fn bin_echoes(echoes: &[Echo], sample_period: f64, count: usize) -> Vec<Complex64> {
    let mut taps = vec![Complex64::new(0.0, 0.0); count];
    for e in echoes {
        let x = e.delay / sample_period;
        if x < 0.0 {
            continue;
        }
        match e.kind {
            EchoKind::Scatterer => {
                let k = x.round() as usize;
                if k < count {
                    taps[k] += e.amplitude;
                }
            }
            EchoKind::Reflector => {
                let k = x.floor() as usize;
                let frac = x - k as f64;
                if k < count {
                    taps[k] += e.amplitude * (1.0 - frac);
                }
                if frac > 0.0 && k + 1 < count {
                    taps[k + 1] += e.amplitude * frac;
                }
            }
        }
    }
    taps
}

/// Place scatterers and reflectors and bin them at `sample_rate`.
pub fn build_static_response(spec: &FiberSpec, sample_rate: f64, wavelength: f64) -> Result<ImpulseResponse> {
    if !(sample_rate > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "sample_rate must be > 0, got {sample_rate}"
        )));
    }
    let problems = spec.check();
    if !problems.is_empty() {
        return Err(Error::InvalidParameter(problems.join("; ")));
    }
    let sample_period = 1.0 / sample_rate;
    let tau_per_m = 2.0 * spec.delay_per_meter();
    let spacing = spec.scatterer_spacing.unwrap_or(sample_period / tau_per_m);
    let power_per_scatterer = 10f64.powf(spec.backscatter_coeff / 10.0) * spacing;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let mut echoes = Vec::new();
    let mut z = 0.0;
    loop {
        // Poisson placement: exponential gaps with the configured mean.
        let u: f64 = rng.random();
        z += -spacing * (1.0 - u).ln();
        if z > spec.length {
            break;
        }
        // Rayleigh amplitude with E|a|^2 = power_per_scatterer, uniform phase.
        let v: f64 = rng.random();
        let mag = (-power_per_scatterer * (1.0 - v).ln()).sqrt();
        let phase = 2.0 * PI * rng.random::<f64>();
        let loss = spec.round_trip_power_loss(z).sqrt();
        echoes.push(Echo {
            position: z,
            delay: tau_per_m * z,
            amplitude: Complex64::from_polar(mag * loss, phase),
            kind: EchoKind::Scatterer,
        });
    }
    for r in &spec.reflectors {
        let loss = spec.round_trip_power_loss(r.position).sqrt();
        echoes.push(Echo {
            position: r.position,
            delay: tau_per_m * r.position,
            amplitude: Complex64::from_polar(r.field_reflectivity() * loss, r.phase),
            kind: EchoKind::Reflector,
        });
    }

    let mut delays: Vec<f64> = spec.reflectors.iter().map(|r| tau_per_m * r.position).collect();
    delays.sort_by(f64::total_cmp);
    let merged_reflectors = delays.windows(2).any(|w| w[1] - w[0] < sample_period);

    let count = tap_count(spec, sample_period);
    let taps = bin_echoes(&echoes, sample_period, count);
    Ok(ImpulseResponse {
        taps,
        sample_period,
        epoch: 0.0,
        wavelength,
        merged_reflectors,
        echoes: Arc::new(echoes),
    })
}

/// Freeze the response at time `t` under the given perturbations.
///
/// Every echo behind a perturbed section picks up twice the one-way phase of
/// the section; echoes inside it get the share of the section lying in front
/// of them. Temperature perturbations shift the delays in the same way.
pub fn apply_perturbations(
    base: &ImpulseResponse,
    spec: &FiberSpec,
    perturbations: &[Perturbation],
    t: f64,
    wavelength: f64,
) -> Result<ImpulseResponse> {
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!("t must be >= 0, got {t}")));
    }
    let states: Vec<(f64, f64, f64, f64)> = perturbations
        .iter()
        .map(|p| {
            let (dn, dtemp) = p.state_at(t);
            let phase = index_phase(dn, p.extent, wavelength);
            let shift = 2.0 * thermal_delay_shift(spec, p.extent / 1000.0, dtemp);
            (p.start(), p.end(), phase, shift)
        })
        .collect();

    let mut echoes: Vec<Echo> = base.echoes.as_ref().clone();
    for e in echoes.iter_mut() {
        let mut phase = 0.0;
        let mut shift = 0.0;
        for &(start, end, p_phase, p_shift) in &states {
            if e.position <= start {
                continue;
            }
            let share = ((e.position - start) / (end - start)).min(1.0);
            phase += 2.0 * p_phase * share;
            shift += p_shift * share;
        }
        if phase != 0.0 {
            e.amplitude *= Complex64::from_polar(1.0, phase);
        }
        if shift != 0.0 {
            e.delay += shift;
        }
    }
    let taps = bin_echoes(&echoes, base.sample_period, base.taps.len());
    Ok(ImpulseResponse {
        taps,
        sample_period: base.sample_period,
        epoch: t,
        wavelength,
        merged_reflectors: base.merged_reflectors,
        echoes: Arc::new(echoes),
    })
}

/// Round-trip group delay to `position`.
pub fn round_trip_delay(spec: &FiberSpec, position: f64) -> Result<f64> {
    if !(0.0..=spec.length).contains(&position) {
        return Err(Error::PositionOutOfRange {
            position,
            length: spec.length,
        });
    }
    Ok(2.0 * spec.group_index * position / SPEED_OF_LIGHT)
}

/// One-way delay change of a section of `section_km` warmed by `delta_t` K.
pub fn thermal_delay_shift(spec: &FiberSpec, section_km: f64, delta_t: f64) -> f64 {
    spec.thermal_coeff * 1e-12 * section_km * delta_t
}

/// First-order thermal lag of a buried fiber behind the air temperature.
pub fn thermal_lag(air_temp: &TimeSeries, tau: f64) -> Result<TimeSeries> {
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter(format!("tau must be > 0, got {tau}")));
    }
    let dt = air_temp.dt;
    if dt >= tau {
        return Err(Error::UnstableDiscretization { dt, tau });
    }
    let air = air_temp.dense()?;
    let mut out = Vec::with_capacity(air.len());
    if let Some(&first) = air.first() {
        let mut tf = first;
        out.push(tf);
        for &ta in &air[..air.len() - 1] {
            tf += dt / tau * (ta - tf);
            out.push(tf);
        }
    }
    Ok(TimeSeries::new(air_temp.t0, dt, out, "fiber_temperature"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bare_fiber(length: f64) -> FiberSpec {
        FiberSpec {
            backscatter_coeff: -300.0,
            ..FiberSpec::new(length, 1.5)
        }
    }

    #[test]
    fn single_reflector_tap_magnitude() {
        // 0.4 m at n_g=1.5 -> 4.0028 ns; sample rate chosen to land on a sample.
        let mut spec = bare_fiber(1.0);
        spec.attenuation = 0.2;
        let z = 0.4;
        spec.reflectors.push(Reflector::new(z, 40.0));
        let tau = round_trip_delay(&spec, z).unwrap();
        let fs = 100.0 / tau;
        let h = build_static_response(&spec, fs, 1550e-9).unwrap();
        let expected = 1e-2 * 10f64.powf(-2.0 * 0.2 * (z / 1000.0) / 10.0).sqrt();
        let (k, peak) = h
            .taps
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
            .unwrap();
        assert_eq!(k, 100);
        assert!((peak.norm() - expected).abs() < 1e-12);
        let rest: f64 = h.taps.iter().map(|t| t.norm()).sum::<f64>() - peak.norm();
        assert!(rest < 1e-12);
    }

    #[test]
    fn reflector_between_samples_splits_linearly() {
        let mut spec = bare_fiber(1.0);
        spec.reflectors.push(Reflector::new(0.5, 20.0));
        let tau = round_trip_delay(&spec, 0.5).unwrap();
        let ts = tau / 10.3;
        let h = build_static_response(&spec, 1.0 / ts, 1550e-9).unwrap();
        assert!((h.taps[10].re - 0.1 * 0.7).abs() < 1e-12);
        assert!((h.taps[11].re - 0.1 * 0.3).abs() < 1e-12);
    }

    #[test]
    fn backscatter_power_per_meter() {
        let mut spec = FiberSpec::new(1.0, 1.5);
        spec.scatterer_spacing = Some(0.01);
        let seeds = 200;
        let mut total = 0.0;
        for seed in 0..seeds {
            spec.rng_seed = seed;
            let h = build_static_response(&spec, 10e9, 1550e-9).unwrap();
            total += h.echoes().iter().map(|e| e.amplitude.norm_sqr()).sum::<f64>();
        }
        let mean = total / seeds as f64;
        // 100 scatterers/m, each exponential power: relative sd ~ 0.1/sqrt(200).
        assert!((mean / 1e-7 - 1.0).abs() < 0.03, "mean {mean}");
    }

    #[test]
    fn seeds_control_speckle() {
        let mut spec = FiberSpec::new(20.0, 1.47);
        let a = build_static_response(&spec, 1e9, 1550e-9).unwrap();
        let b = build_static_response(&spec, 1e9, 1550e-9).unwrap();
        assert_eq!(a.taps, b.taps);
        spec.rng_seed = 1;
        let c = build_static_response(&spec, 1e9, 1550e-9).unwrap();
        assert_ne!(a.taps, c.taps);
    }

    #[test]
    fn per_bin_power_matches_across_seeds() {
        // Mean power per bin over many seeds equals backscatter x bin length.
        let spec0 = FiberSpec::new(50.0, 1.5);
        let fs = 1e9;
        let bin_m = SPEED_OF_LIGHT / (2.0 * 1.5 * fs);
        let seeds = 100;
        let mut acc = Vec::new();
        for seed in 0..seeds {
            let spec = FiberSpec {
                rng_seed: seed,
                ..spec0.clone()
            };
            let h = build_static_response(&spec, fs, 1550e-9).unwrap();
            if acc.is_empty() {
                acc = vec![0.0; h.len()];
            }
            for (a, t) in acc.iter_mut().zip(&h.taps) {
                *a += t.norm_sqr();
            }
        }
        let inner = &acc[5..acc.len() - 5];
        let mean = inner.iter().sum::<f64>() / (inner.len() as f64 * seeds as f64);
        assert!((mean / (1e-7 * bin_m) - 1.0).abs() < 0.1, "mean {mean}");
    }

    #[test]
    fn rtt_values() {
        let spec = FiberSpec::new(400.0, 1.5);
        let t = round_trip_delay(&spec, 400.0).unwrap();
        assert!((t - 4.0028e-6).abs() < 1e-10);
        assert_eq!(round_trip_delay(&spec, 0.0).unwrap(), 0.0);
        let long = FiberSpec::new(100_000.0, 1.468);
        let t = round_trip_delay(&long, 100_000.0).unwrap();
        assert!((t - 979.344e-6).abs() < 1e-9, "{t}");
        assert!(round_trip_delay(&spec, 401.0).is_err());
        assert!(round_trip_delay(&spec, -1.0).is_err());
    }

    #[test]
    fn thermal_shift_values() {
        let spec = FiberSpec::new(1000.0, 1.5);
        assert!((thermal_delay_shift(&spec, 1.0, 1.0) - 35e-12).abs() < 1e-24);
        assert_eq!(thermal_delay_shift(&spec, 3.0, 0.0), 0.0);
        assert!((thermal_delay_shift(&spec, 10.0, 2.0) - 700e-12).abs() < 1e-22);
    }

    #[test]
    fn index_change_phase_over_ten_cm() {
        let phi = index_phase(1e-6, 0.1, 1550e-9);
        assert!((phi - 0.405_366).abs() < 1e-5, "{phi}");
    }

    #[test]
    fn zero_perturbation_is_bit_exact() {
        let mut spec = FiberSpec::new(30.0, 1.5);
        spec.reflectors.push(Reflector::new(25.0, 30.0));
        let base = build_static_response(&spec, 2e9, 1550e-9).unwrap();
        let p = Perturbation {
            center: 10.0,
            extent: 2.0,
            kind: PerturbationKind::AcousticTone {
                frequency: 120.0,
                index_amplitude: 0.0,
            },
        };
        let out = apply_perturbations(&base, &spec, &[p], 0.37, 1550e-9).unwrap();
        assert_eq!(out.taps, base.taps);
    }

    #[test]
    fn tone_phase_behind_section_is_sinusoidal() {
        let mut spec = FiberSpec::new(30.0, 1.5);
        spec.reflectors.push(Reflector::new(25.0, 30.0));
        let base = build_static_response(&spec, 2e9, 1550e-9).unwrap();
        let dn = 1e-7;
        let p = Perturbation {
            center: 10.0,
            extent: 2.0,
            kind: PerturbationKind::AcousticTone {
                frequency: 120.0,
                index_amplitude: dn,
            },
        };
        let phi_max = index_phase(dn, 2.0, 1550e-9);
        let start_bin = (round_trip_delay(&spec, 11.0).unwrap() / base.sample_period).ceil() as usize + 1;
        let far_sum = |h: &ImpulseResponse| h.taps[start_bin..].iter().sum::<Complex64>();
        let ref_phase = far_sum(&base).arg();
        for k in 0..40 {
            let t = k as f64 / 2000.0;
            let h = apply_perturbations(&base, &spec, std::slice::from_ref(&p), t, 1550e-9).unwrap();
            let got = far_sum(&h).arg() - ref_phase;
            let want = 2.0 * phi_max * (2.0 * PI * 120.0 * t).sin();
            let d = (got - want + PI).rem_euclid(2.0 * PI) - PI;
            assert!(d.abs() < 1e-9, "frame {k}: {got} vs {want}");
        }
    }

    #[test]
    fn temperature_step_shifts_far_reflector() {
        let mut spec = bare_fiber(1000.0);
        spec.reflectors.push(Reflector::new(999.0, 30.0));
        let base = build_static_response(&spec, 1e9, 1550e-9).unwrap();
        let p = Perturbation {
            center: 500.0,
            extent: 900.0,
            kind: PerturbationKind::TemperatureStep {
                delta_t: 1.0,
                start_time: 0.5,
            },
        };
        let before = apply_perturbations(&base, &spec, std::slice::from_ref(&p), 0.4, 1550e-9).unwrap();
        let after = apply_perturbations(&base, &spec, std::slice::from_ref(&p), 0.6, 1550e-9).unwrap();
        let refl = |h: &ImpulseResponse| h.echoes().iter().find(|e| e.kind == EchoKind::Reflector).unwrap().delay;
        assert_eq!(refl(&before), refl(&base));
        assert!((refl(&after) - refl(&base) - 2.0 * 35e-12 * 0.9).abs() < 1e-18);
    }

    #[test]
    fn thermal_lag_step_response() {
        let tau = 12.7 * 86_400.0;
        let dt = tau / 1000.0;
        let mut v = vec![0.0];
        v.extend(std::iter::repeat_n(1.0, 3000));
        let air = TimeSeries::new(0.0, dt, v, "air");
        let out = thermal_lag(&air, tau).unwrap().dense().unwrap();
        // Step applied at sample 1, so t = tau is one sample later.
        let at_tau = out[1001];
        assert!((at_tau - (1.0 - (-1.0f64).exp())).abs() < 0.002, "{at_tau}");
        assert!((out[3000] - 1.0).abs() < 0.06);
    }

    #[test]
    fn thermal_lag_constant_and_unstable() {
        let air = TimeSeries::new(0.0, 1.0, vec![3.0; 50], "air");
        let out = thermal_lag(&air, 10.0).unwrap();
        assert!(out.dense().unwrap().iter().all(|&v| v == 3.0));
        assert!(matches!(
            thermal_lag(&air, 1.0),
            Err(Error::UnstableDiscretization { .. })
        ));
    }

    #[test]
    fn thermal_lag_sinusoid_attenuation() {
        let tau = 10.0;
        let period = 100.0;
        let dt = 0.01;
        let n = (20.0 * period / dt) as usize;
        let v: Vec<f64> = (0..n).map(|k| (2.0 * PI * k as f64 * dt / period).sin()).collect();
        let out = thermal_lag(&TimeSeries::new(0.0, dt, v, "air"), tau)
            .unwrap()
            .dense()
            .unwrap();
        let tail = &out[n / 2..];
        let amp = (tail.iter().cloned().fold(f64::MIN, f64::max) - tail.iter().cloned().fold(f64::MAX, f64::min)) / 2.0;
        let want = 1.0 / (1.0 + (2.0 * PI * tau / period).powi(2)).sqrt();
        assert!((amp / want - 1.0).abs() < 0.01, "{amp} vs {want}");
    }
}
