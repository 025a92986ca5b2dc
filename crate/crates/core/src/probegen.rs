//! PRBS probe sequences and their sampled baseband waveforms.
//!
//! Sequences come from a Fibonacci LFSR whose feedback taps are taken from a
//! fixed table of maximal-length polynomials, so a given `(order, seed)` pair
//! produces the same bits everywhere. The "extended" variant pads one period
//! to a power-of-two length by inserting a single zero after the longest run
//! of zeros.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Feedback taps (1-based register stages) of maximal-length polynomials.
const FEEDBACK_TAPS: [&[u32]; 15] = [
    &[2, 1],
    &[3, 2],
    &[4, 3],
    &[5, 3],
    &[6, 5],
    &[7, 6],
    &[8, 6, 5, 4],
    &[9, 5],
    &[10, 7],
    &[11, 9],
    &[12, 6, 4, 1],
    &[13, 4, 3, 1],
    &[14, 5, 3, 1],
    &[15, 14],
    &[16, 15, 13, 4],
];

pub const MIN_ORDER: u32 = 2;
pub const MAX_ORDER: u32 = 16;

/// Feedback taps for `order`, if the table has an entry.
pub fn feedback_taps(order: u32) -> Option<&'static [u32]> {
    if (MIN_ORDER..=MAX_ORDER).contains(&order) {
        Some(FEEDBACK_TAPS[(order - MIN_ORDER) as usize])
    } else {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modulation {
    Ook,
    Bpsk,
}

/// Probe sequence, modulation format and timing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSpec {
    pub prbs_order: u32,
    #[serde(default)]
    pub extended: bool,
    pub modulation: Modulation,
    /// Bits per second.
    pub bit_rate: f64,
    pub samples_per_bit: usize,
    /// Carrier wavelength in meters.
    pub wavelength: f64,
    /// Acquisition window of one frame, seconds.
    pub frame_period: f64,
    /// LFSR seed, one entry per register stage; all ones when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<Vec<u8>>,
}

impl ProbeSpec {
    pub fn sample_rate(&self) -> f64 {
        self.bit_rate * self.samples_per_bit as f64
    }

    pub fn sample_period(&self) -> f64 {
        1.0 / self.sample_rate()
    }

    /// Number of bits in one probe sequence.
    pub fn sequence_len(&self) -> usize {
        let base = (1usize << self.prbs_order) - 1;
        if self.extended {
            base + 1
        } else {
            base
        }
    }

    pub fn sequence_duration(&self) -> f64 {
        self.sequence_len() as f64 / self.bit_rate
    }

    /// Samples in one acquisition frame.
    pub fn frame_len(&self) -> usize {
        (self.frame_period * self.sample_rate()).round() as usize
    }

    fn seed_bits(&self) -> Vec<bool> {
        match &self.seed {
            Some(s) => s.iter().map(|&b| b != 0).collect(),
            None => vec![true; self.prbs_order as usize],
        }
    }

    /// The probe bit sequence (extended if configured).
    pub fn bits(&self) -> Result<Vec<bool>> {
        let seq = gen_prbs(self.prbs_order, &self.seed_bits())?;
        if self.extended {
            extend_prbs(&seq)
        } else {
            Ok(seq)
        }
    }

    /// The sampled transmit waveform.
    pub fn waveform(&self) -> Result<Vec<f64>> {
        modulate(&self.bits()?, self.modulation, self.samples_per_bit)
    }
}

/// One period of the maximal-length sequence of `order`, starting from `seed`.
///
/// `seed[i]` is the initial content of register stage `i + 1`; the output bit
/// is the last stage.
pub fn gen_prbs(order: u32, seed: &[bool]) -> Result<Vec<bool>> {
    let taps = feedback_taps(order).ok_or(Error::UnsupportedOrder(order))?;
    if seed.len() != order as usize {
        return Err(Error::SeedLength { order, got: seed.len() });
    }
    let mut state: u32 = seed
        .iter()
        .enumerate()
        .filter(|(_, &b)| b)
        .fold(0, |acc, (i, _)| acc | (1 << i));
    if state == 0 {
        return Err(Error::DegenerateSeed);
    }
    let mask = (1u32 << order) - 1;
    let feedback_mask = taps.iter().fold(0u32, |acc, &t| acc | (1 << (t - 1)));
    let len = (1usize << order) - 1;
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        out.push(state >> (order - 1) & 1 == 1);
        let fb = (state & feedback_mask).count_ones() & 1;
        state = ((state << 1) | fb) & mask;
    }
    Ok(out)
}

/// Location of the longest zero run in the cyclic sequence as
/// `(start, run_length)`. Ties resolve to the earliest start.
pub fn longest_zero_run(seq: &[bool]) -> (usize, usize) {
    let n = seq.len();
    let mut best = (0, 0);
    // Start scanning just after a one so wrap-around runs are seen whole.
    let Some(anchor) = seq.iter().position(|&b| b) else {
        return (0, n);
    };
    let mut run_start = None;
    let mut run_len = 0;
    for step in 1..=n {
        let i = (anchor + step) % n;
        if seq[i] {
            if let Some(s) = run_start.take() {
                if run_len > best.1 || (run_len == best.1 && s < best.0) {
                    best = (s, run_len);
                }
            }
            run_len = 0;
        } else {
            if run_start.is_none() {
                run_start = Some(i);
            }
            run_len += 1;
        }
    }
    best
}

/// Pad a maximal-length sequence to `2^order` bits with one extra zero,
/// inserted immediately after its longest zero run.
pub fn extend_prbs(seq: &[bool]) -> Result<Vec<bool>> {
    let n = seq.len();
    if n < 3 || !(n + 1).is_power_of_two() {
        return Err(Error::NotMaximalLength(n));
    }
    let (start, len) = longest_zero_run(seq);
    let insert_at = (start + len) % n;
    // A run that wraps past the end: appending keeps it contiguous cyclically.
    let insert_at = if insert_at == 0 { n } else { insert_at };
    let mut out = Vec::with_capacity(n + 1);
    out.extend_from_slice(&seq[..insert_at]);
    out.push(false);
    out.extend_from_slice(&seq[insert_at..]);
    Ok(out)
}

/// Map bits to a rectangular-pulse waveform: OOK {0,1} or BPSK {-1,+1}.
pub fn modulate(bits: &[bool], modulation: Modulation, samples_per_bit: usize) -> Result<Vec<f64>> {
    if bits.is_empty() {
        return Err(Error::EmptySequence);
    }
    if samples_per_bit == 0 {
        return Err(Error::InvalidParameter("samples_per_bit must be >= 1".into()));
    }
    let level = |b: bool| match (modulation, b) {
        (Modulation::Ook, true) => 1.0,
        (Modulation::Ook, false) => 0.0,
        (Modulation::Bpsk, true) => 1.0,
        (Modulation::Bpsk, false) => -1.0,
    };
    Ok(bits
        .iter()
        .flat_map(|&b| std::iter::repeat_n(level(b), samples_per_bit))
        .collect())
}
