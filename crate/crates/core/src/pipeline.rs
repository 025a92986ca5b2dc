//! Frame synthesis: fiber response, detection and correlation per frame.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::f64::consts::PI;

use crate::correlator::{average, correlate, AverageMode, CorrTrace};
use crate::error::{Error, Result};
use crate::fibermodel::{apply_perturbations, build_static_response, FiberSpec, ImpulseResponse, Perturbation};
use crate::frontend::{propagate, receive, DetectionConfig, DetectionMode, RxFrame};
use crate::probegen::ProbeSpec;

/// Independent 64-bit seed for `(seed, frame, index)`.
pub fn derive_seed(seed: u64, frame: u64, index: u64) -> u64 {
    let mut x = seed;
    for v in [frame, index] {
        x = splitmix(x ^ splitmix(v.wrapping_add(0x9E37_79B9_7F4A_7C15)));
    }
    x
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Everything needed to synthesize a stream of correlation traces.
#[derive(Debug, Clone)]
pub struct Acquisition {
    pub probe: ProbeSpec,
    pub fiber: FiberSpec,
    pub perturbations: Vec<Perturbation>,
    pub detection: DetectionConfig,
    pub frames: usize,
    pub frame_rate: f64,
    pub seed: u64,
}

/// Prepared state shared by all frames of an acquisition.
pub struct Synthesizer<'a> {
    acq: &'a Acquisition,
    waveform: Vec<f64>,
    base: ImpulseResponse,
    frame_len: usize,
}

impl Acquisition {
    /// How `num_averages` receptions of one frame are combined.
    ///
    /// Without laser phase noise every reception shares the LO phase and is
    /// averaged as samples; otherwise the phase is lost and power is averaged.
    pub fn average_mode(&self) -> AverageMode {
        match self.detection.mode {
            DetectionMode::Coherent if self.detection.lo_linewidth > 0.0 && self.detection.num_averages > 1 => {
                AverageMode::Power
            }
            _ => AverageMode::Complex,
        }
    }

    pub fn synthesizer(&self) -> Result<Synthesizer<'_>> {
        if self.frames == 0 {
            return Err(Error::InvalidParameter("frames must be >= 1".into()));
        }
        if !(self.frame_rate > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "frame_rate must be > 0, got {}",
                self.frame_rate
            )));
        }
        let waveform = self.probe.waveform()?;
        let base = build_static_response(&self.fiber, self.probe.sample_rate(), self.probe.wavelength)?;
        let frame_len = self.probe.frame_len();
        let needed = waveform.len() + base.len() - 1;
        if frame_len < needed {
            return Err(Error::FrameTooShort { needed, frame_len });
        }
        Ok(Synthesizer {
            acq: self,
            waveform,
            base,
            frame_len,
        })
    }

    /// All frames, in order.
    pub fn traces(&self) -> Result<Vec<CorrTrace>> {
        self.synthesizer()?.traces()
    }
}

impl Synthesizer<'_> {
    pub fn reference(&self) -> &[f64] {
        &self.waveform
    }

    pub fn base_response(&self) -> &ImpulseResponse {
        &self.base
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    /// Response frozen at the epoch of `frame`.
    pub fn response_at(&self, frame: usize) -> Result<ImpulseResponse> {
        let t = frame as f64 / self.acq.frame_rate;
        if self.acq.perturbations.is_empty() {
            let mut h = self.base.clone();
            h.epoch = t;
            return Ok(h);
        }
        apply_perturbations(
            &self.base,
            &self.acq.fiber,
            &self.acq.perturbations,
            t,
            self.acq.probe.wavelength,
        )
    }

    /// Averaged correlation trace of one frame.
    pub fn trace(&self, frame: usize) -> Result<CorrTrace> {
        let acq = self.acq;
        let h = self.response_at(frame)?;
        let field = propagate(&self.waveform, &h, self.frame_len)?;
        let fs = acq.probe.sample_rate();
        let t = h.epoch;
        let n = acq.detection.num_averages.max(1);
        let random_phase = acq.detection.mode == DetectionMode::Coherent && acq.detection.lo_linewidth > 0.0;
        let rx = |k: usize| -> Result<RxFrame> {
            let seed = derive_seed(acq.seed, frame as u64, k as u64);
            let phase0 = if random_phase {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5DEE_CE66_D1CE_4E5B);
                2.0 * PI * rng.random::<f64>()
            } else {
                0.0
            };
            receive(&field, fs, t, &acq.detection, seed, phase0)
        };
        let mut trace = match acq.average_mode() {
            AverageMode::Complex => {
                let frames = (0..n).map(rx).collect::<Result<Vec<_>>>()?;
                let mut tr = correlate(&RxFrame::mean(&frames)?, &self.waveform)?;
                tr.num_averaged = n;
                tr
            }
            AverageMode::Power => {
                let traces = (0..n)
                    .map(|k| correlate(&rx(k)?, &self.waveform))
                    .collect::<Result<Vec<_>>>()?;
                average(&traces, AverageMode::Power)?
            }
        };
        trace.epoch = t;
        Ok(trace)
    }

    /// All frames in order, synthesized in parallel.
    pub fn traces(&self) -> Result<Vec<CorrTrace>> {
        (0..self.acq.frames).into_par_iter().map(|f| self.trace(f)).collect()
    }
}
