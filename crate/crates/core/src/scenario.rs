//! Declarative JSON scenarios and their validation.

use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

use crate::correlator::{PeakFit, DEFAULT_MEDIAN_WINDOW};
use crate::error::{Error, Result};
use crate::fbg::FbgScenario;
use crate::fibermodel::{FiberSpec, Perturbation, PerturbationKind};
use crate::frontend::{DetectionConfig, DetectionMode};
use crate::pipeline::Acquisition;
use crate::probegen::{feedback_taps, Modulation, ProbeSpec};

fn default_threshold() -> f64 {
    20.0
}

fn default_window() -> usize {
    DEFAULT_MEDIAN_WINDOW
}

fn default_radius() -> usize {
    3
}

fn default_tone_snr() -> f64 {
    20.0
}

/// One evaluation to run on the synthesized traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Analysis {
    /// Round-trip time between two reflection peaks.
    Rtt {
        input: f64,
        output: f64,
        #[serde(default = "default_radius")]
        search_radius: usize,
        #[serde(default)]
        label: Option<String>,
    },
    /// Backscattered power at one position.
    Amplitude {
        position: f64,
        #[serde(default)]
        label: Option<String>,
    },
    /// Differential phase of `b` relative to `a`.
    Phase {
        a: f64,
        b: f64,
        #[serde(default)]
        min_magnitude: f64,
        #[serde(default)]
        label: Option<String>,
    },
    /// Dominant tone of an earlier series.
    Tone {
        series: String,
        f_min: f64,
        f_max: f64,
        #[serde(default = "default_tone_snr")]
        min_snr_db: f64,
    },
    /// Temperature from an earlier RTT series.
    Temp {
        series: String,
        section_km: f64,
        #[serde(default)]
        label: Option<String>,
    },
    /// Wavelength sweep of the grating array.
    Fbg,
}

impl Analysis {
    /// Name of the series this directive produces, if any.
    pub fn label(&self) -> Option<String> {
        match self {
            Analysis::Rtt { label, .. } => Some(label.clone().unwrap_or_else(|| "rtt".into())),
            Analysis::Amplitude { position, label } => {
                Some(label.clone().unwrap_or_else(|| format!("amplitude_{position}m")))
            }
            Analysis::Phase { a, b, label, .. } => Some(label.clone().unwrap_or_else(|| format!("phase_{a}m_{b}m"))),
            Analysis::Temp { series, label, .. } => Some(label.clone().unwrap_or_else(|| format!("temp_{series}"))),
            Analysis::Tone { .. } | Analysis::Fbg => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub seed: u64,
    pub frames: usize,
    /// Frames per second.
    pub frame_rate: f64,
    pub probe: ProbeSpec,
    pub fiber: FiberSpec,
    #[serde(default)]
    pub perturbations: Vec<Perturbation>,
    pub detection: DetectionConfig,
    #[serde(default)]
    pub peak_fit: PeakFit,
    /// Peak detection threshold above the sliding median, dB.
    #[serde(default = "default_threshold")]
    pub peak_threshold_db: f64,
    #[serde(default = "default_window")]
    pub median_window: usize,
    #[serde(default)]
    pub analyses: Vec<Analysis>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fbg: Option<FbgScenario>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Warning,
    Error,
}

/// A validation finding tied to a field of the scenario file.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub severity: Severity,
    /// 1-based line in the source text, when known.
    pub line: Option<usize>,
    /// Dotted field path, e.g. `fiber.reflectors[1].position`.
    pub path: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        match self.line {
            Some(l) => write!(f, "{sev}: line {l}: {}: {}", self.path, self.message),
            None => write!(f, "{sev}: {}: {}", self.path, self.message),
        }
    }
}

pub fn has_errors(diags: &[Diagnostic]) -> bool {
    diags.iter().any(|d| d.severity == Severity::Error)
}

enum Segment<'a> {
    Key(&'a str),
    Index(usize),
}

fn segments(path: &str) -> Vec<Segment<'_>> {
    let mut out = Vec::new();
    for part in path.split('.') {
        let (key, rest) = part.split_once('[').unwrap_or((part, ""));
        if !key.is_empty() {
            out.push(Segment::Key(key));
        }
        for idx in rest.split('[') {
            if let Ok(i) = idx.trim_end_matches(']').parse() {
                out.push(Segment::Index(i));
            }
        }
    }
    out
}

fn find_key(text: &str, from: usize, key: &str) -> Option<usize> {
    let needle = format!("\"{key}\"");
    let mut start = from;
    while let Some(off) = text[start..].find(&needle) {
        let at = start + off;
        let after = text[at + needle.len()..].trim_start();
        if after.starts_with(':') {
            return Some(at);
        }
        start = at + needle.len();
    }
    None
}

/// Best-effort line of a field path in JSON text; falls back to the
/// deepest ancestor that can be found.
pub fn locate(text: &str, path: &str) -> Option<usize> {
    let segs = segments(path);
    let mut pos: Option<usize> = None;
    let mut skip = 0;
    for (i, seg) in segs.iter().enumerate() {
        let from = pos.unwrap_or(0);
        match seg {
            Segment::Key(k) => {
                let mut at = find_key(text, from, k);
                for _ in 0..skip {
                    at = at.and_then(|a| find_key(text, a + 1, k));
                }
                skip = 0;
                match at {
                    Some(a) => pos = Some(a),
                    None => break,
                }
            }
            Segment::Index(n) => {
                if i + 1 < segs.len() {
                    skip = *n;
                } else {
                    let mut at = text[from..].find('[').map(|o| from + o);
                    for _ in 0..=*n {
                        at = at.and_then(|a| text[a + 1..].find('{').map(|o| a + 1 + o));
                    }
                    if let Some(a) = at {
                        pos = Some(a);
                    }
                }
            }
        }
    }
    pos.map(|p| text[..p].matches('\n').count() + 1)
}

struct Collector<'a> {
    text: Option<&'a str>,
    out: Vec<Diagnostic>,
}

impl Collector<'_> {
    fn push(&mut self, severity: Severity, path: impl Into<String>, message: impl Into<String>) {
        let path = path.into();
        let line = self.text.and_then(|t| locate(t, &path));
        self.out.push(Diagnostic {
            severity,
            line,
            path,
            message: message.into(),
        });
    }

    fn error(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.push(Severity::Error, path, message);
    }

    fn warn(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.push(Severity::Warning, path, message);
    }

    /// Messages from type checks start with the offending field name.
    fn nested(&mut self, parent: &str, messages: Vec<String>) {
        for m in messages {
            let head = m.split_whitespace().next().unwrap_or("");
            let is_field = head
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '[' | ']' | '.'));
            let path = if is_field && !head.is_empty() {
                format!("{parent}.{head}")
            } else {
                parent.to_string()
            };
            self.error(path, m);
        }
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Scenario> {
        serde_json::from_str(text).map_err(|e| Error::ScenarioParse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    /// Parse and validate; validation errors are returned as one error.
    pub fn load(path: impl AsRef<Path>) -> Result<Scenario> {
        let text = std::fs::read_to_string(path)?;
        let scn = Scenario::from_json(&text)?;
        let diags = scn.validate_with_source(Some(&text));
        if has_errors(&diags) {
            let lines: Vec<String> = diags.iter().map(|d| d.to_string()).collect();
            return Err(Error::ScenarioInvalid(lines.join("\n")));
        }
        Ok(scn)
    }

    pub fn acquisition(&self) -> Acquisition {
        let mut fiber = self.fiber.clone();
        if let Some(f) = &self.fbg {
            fiber.reflectors.extend(f.reflectors_at(self.probe.wavelength));
        }
        Acquisition {
            probe: self.probe.clone(),
            fiber,
            perturbations: self.perturbations.clone(),
            detection: self.detection.clone(),
            frames: self.frames,
            frame_rate: self.frame_rate,
            seed: self.seed,
        }
    }

    /// Observation span in seconds.
    pub fn duration(&self) -> f64 {
        self.frames as f64 / self.frame_rate
    }

    pub fn validate(&self) -> Vec<Diagnostic> {
        self.validate_with_source(None)
    }

    /// All type and cross-field checks; `source` adds line numbers.
    pub fn validate_with_source(&self, source: Option<&str>) -> Vec<Diagnostic> {
        let mut c = Collector {
            text: source,
            out: Vec::new(),
        };
        let probe_ok = self.check_probe(&mut c);
        self.check_fiber(&mut c);
        c.nested("detection", self.detection.check());
        if self.detection.mode == DetectionMode::Direct && self.probe.modulation == Modulation::Bpsk {
            c.error(
                "detection.mode",
                "direct detection of a BPSK probe sees a constant intensity; use ook or coherent detection",
            );
        }
        if self.frames == 0 {
            c.error("frames", "frames must be >= 1");
        }
        if !(self.frame_rate > 0.0) {
            c.error("frame_rate", format!("frame_rate must be > 0, got {}", self.frame_rate));
        } else if probe_ok && 1.0 / self.frame_rate < self.probe.frame_period {
            c.error(
                "frame_rate",
                format!(
                    "frame interval {} s is shorter than frame_period {} s",
                    1.0 / self.frame_rate,
                    self.probe.frame_period
                ),
            );
        }
        if probe_ok && self.fiber.length > 0.0 {
            self.check_timing(&mut c);
        }
        self.check_perturbations(&mut c);
        if !(self.peak_threshold_db > 0.0) {
            c.error("peak_threshold_db", "peak_threshold_db must be > 0");
        }
        if self.median_window < 3 {
            c.error("median_window", "median_window must be >= 3");
        }
        self.check_analyses(&mut c);
        if let Some(f) = &self.fbg {
            c.nested("fbg", f.check());
            for (g, z) in f.positions().into_iter().enumerate() {
                if !(z > 0.0 && z < self.fiber.length) {
                    c.error(
                        "fbg.first_position",
                        format!("grating {g} at {z} m lies outside the fiber"),
                    );
                    break;
                }
            }
            if self.detection.mode != DetectionMode::Coherent {
                c.error("detection.mode", "grating interrogation needs coherent detection");
            }
        }
        c.out.sort_by_key(|d| std::cmp::Reverse(d.severity));
        c.out
    }

    fn check_probe(&self, c: &mut Collector) -> bool {
        let p = &self.probe;
        let before = c.out.len();
        if feedback_taps(p.prbs_order).is_none() {
            c.error(
                "probe.prbs_order",
                format!("no feedback polynomial for order {}", p.prbs_order),
            );
        }
        if p.samples_per_bit < 1 {
            c.error("probe.samples_per_bit", "samples_per_bit must be >= 1");
        }
        if !(p.bit_rate > 0.0) {
            c.error("probe.bit_rate", format!("bit_rate must be > 0, got {}", p.bit_rate));
        }
        if !(p.wavelength > 0.0) {
            c.error(
                "probe.wavelength",
                format!("wavelength must be > 0, got {}", p.wavelength),
            );
        }
        if !(p.frame_period > 0.0) {
            c.error(
                "probe.frame_period",
                format!("frame_period must be > 0, got {}", p.frame_period),
            );
        }
        if let Some(seed) = &p.seed {
            if seed.len() != p.prbs_order as usize {
                c.error(
                    "probe.seed",
                    format!("seed has {} stages, order is {}", seed.len(), p.prbs_order),
                );
            } else if seed.iter().all(|&b| b == 0) {
                c.error("probe.seed", "degenerate LFSR seed");
            }
        }
        c.out.len() == before
    }

    fn check_fiber(&self, c: &mut Collector) {
        c.nested("fiber", self.fiber.check());
        let tau = 2.0 * self.fiber.delay_per_meter();
        let ts = 1.0 / self.probe.sample_rate();
        let mut order: Vec<(usize, f64)> = self.fiber.reflectors.iter().map(|r| r.position).enumerate().collect();
        order.sort_by(|a, b| a.1.total_cmp(&b.1));
        for w in order.windows(2) {
            if (w[1].1 - w[0].1) * tau < ts {
                c.warn(
                    format!("fiber.reflectors[{}].position", w[1].0),
                    format!(
                        "reflectors {} and {} are closer than one sample period; their peaks merge",
                        w[0].0, w[1].0
                    ),
                );
            }
        }
    }

    fn check_timing(&self, c: &mut Collector) {
        let p = &self.probe;
        let fs = p.sample_rate();
        let max_rtt = 2.0 * self.fiber.length * self.fiber.delay_per_meter();
        let taps = (max_rtt * fs).floor() as usize + 2;
        let needed = p.sequence_len() * p.samples_per_bit + taps - 1;
        if p.frame_len() < needed {
            c.error(
                "probe.frame_period",
                format!(
                    "frame_period {} s holds {} samples; sequence ({} s) plus round trip ({} s) needs {}",
                    p.frame_period,
                    p.frame_len(),
                    p.sequence_duration(),
                    max_rtt,
                    needed
                ),
            );
        }
    }

    fn check_perturbations(&self, c: &mut Collector) {
        for (i, p) in self.perturbations.iter().enumerate() {
            let path = format!("perturbations[{i}]");
            c.nested(&path, p.check(self.fiber.length));
            if let PerturbationKind::AcousticTone { frequency, .. } = p.kind {
                if self.frame_rate > 0.0 && frequency >= self.frame_rate / 2.0 {
                    c.error(
                        format!("{path}.frequency"),
                        format!(
                            "tone at {frequency} Hz is above the Nyquist limit {} Hz of the frame rate",
                            self.frame_rate / 2.0
                        ),
                    );
                } else if self.frame_rate > 0.0 && self.probe.wavelength > 0.0 {
                    // Largest round-trip phase change between frames must stay below pi.
                    let step =
                        2.0 * p.peak_one_way_phase(self.probe.wavelength) * 2.0 * PI * frequency / self.frame_rate;
                    if step >= PI {
                        c.error(
                            format!("{path}.index_amplitude"),
                            format!("phase can change by {step:.3} rad between frames; unwrapping needs < pi"),
                        );
                    }
                }
            }
        }
    }

    fn check_analyses(&self, c: &mut Collector) {
        let mut labels: HashSet<String> = HashSet::new();
        let mut rtt_labels: HashSet<String> = HashSet::new();
        let length = self.fiber.length;
        let nyquist = self.frame_rate / 2.0;
        for (i, a) in self.analyses.iter().enumerate() {
            let path = format!("analyses[{i}]");
            let inside = |c: &mut Collector, key: &str, z: f64| {
                if !(0.0..=length).contains(&z) {
                    c.error(
                        format!("{path}.{key}"),
                        format!("position {z} m is outside the fiber [0, {length}] m"),
                    );
                }
            };
            match a {
                Analysis::Rtt { input, output, .. } => {
                    inside(c, "input", *input);
                    inside(c, "output", *output);
                    if output <= input {
                        c.error(format!("{path}.output"), "output must lie beyond input");
                    }
                }
                Analysis::Amplitude { position, .. } => inside(c, "position", *position),
                Analysis::Phase { a, b, .. } => {
                    inside(c, "a", *a);
                    inside(c, "b", *b);
                    if self.detection.mode != DetectionMode::Coherent {
                        c.error(format!("{path}.type"), "phase analysis needs coherent detection");
                    } else if self.acquisition().average_mode() == crate::correlator::AverageMode::Power {
                        c.error(
                            format!("{path}.type"),
                            "phase is discarded when averaging with laser phase noise; set num_averages to 1",
                        );
                    }
                }
                Analysis::Tone {
                    series, f_min, f_max, ..
                } => {
                    if !labels.contains(series) {
                        c.error(format!("{path}.series"), format!("no earlier series named {series:?}"));
                    }
                    if !(*f_min >= 0.0 && f_max > f_min) {
                        c.error(format!("{path}.f_max"), format!("invalid band [{f_min}, {f_max}] Hz"));
                    } else if *f_max > nyquist {
                        c.error(
                            format!("{path}.f_max"),
                            format!("f_max {f_max} Hz exceeds Nyquist {nyquist} Hz"),
                        );
                    }
                    if *f_min > 0.0 && self.duration() < 2.0 / f_min {
                        c.error(
                            format!("{path}.f_min"),
                            format!(
                                "observation of {} s covers fewer than two periods of {f_min} Hz",
                                self.duration()
                            ),
                        );
                    }
                }
                Analysis::Temp { series, section_km, .. } => {
                    if !rtt_labels.contains(series) {
                        c.error(
                            format!("{path}.series"),
                            format!("no earlier rtt series named {series:?}"),
                        );
                    }
                    if !(*section_km > 0.0) {
                        c.error(format!("{path}.section_km"), "section_km must be > 0");
                    }
                }
                Analysis::Fbg => {
                    if self.fbg.is_none() {
                        c.error(format!("{path}.type"), "fbg analysis needs an fbg block");
                    }
                }
            }
            if let Some(l) = a.label() {
                if !labels.insert(l.clone()) {
                    c.error(format!("{path}.label"), format!("duplicate series label {l:?}"));
                }
                if matches!(a, Analysis::Rtt { .. }) {
                    rtt_labels.insert(l);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
  "name": "t",
  "seed": 1,
  "frames": 1000,
  "frame_rate": 2000,
  "probe": {
    "prbs_order": 7,
    "modulation": "bpsk",
    "bit_rate": 1e9,
    "samples_per_bit": 2,
    "wavelength": 1.55e-6,
    "frame_period": 4e-7
  },
  "fiber": {
    "length": 20,
    "attenuation": 0.2,
    "group_index": 1.5,
    "reflectors": [
      {"position": 1, "return_loss": 40},
      {"position": 19, "return_loss": 40}
    ]
  },
  "perturbations": [
    {"kind": "acoustic_tone", "center": 10, "extent": 1, "frequency": 120, "index_amplitude": 1e-7}
  ],
  "detection": {"mode": "coherent", "thermal_noise_sigma": 0.001},
  "analyses": [
    {"type": "phase", "a": 1, "b": 19, "label": "e2e"},
    {"type": "tone", "series": "e2e", "f_min": 10, "f_max": 500}
  ]
}"#;

    fn errors(text: &str) -> Vec<Diagnostic> {
        let s = Scenario::from_json(text).unwrap();
        s.validate_with_source(Some(text))
            .into_iter()
            .filter(|d| d.severity == Severity::Error)
            .collect()
    }

    #[test]
    fn base_is_clean() {
        let s = Scenario::from_json(BASE).unwrap();
        assert_eq!(s.validate(), vec![]);
        assert_eq!(s.peak_fit, PeakFit::Parabolic);
        assert_eq!(s.detection.adc_bits, 16);
    }

    #[test]
    fn short_frame_is_an_error_with_line() {
        let text = BASE.replace("\"frame_period\": 4e-7", "\"frame_period\": 2e-7");
        let e = errors(&text);
        assert_eq!(e.len(), 1, "{e:?}");
        assert_eq!(e[0].path, "probe.frame_period");
        assert_eq!(e[0].line, Some(12));
    }

    #[test]
    fn nyquist_violation() {
        let text = BASE.replace("\"frame_rate\": 2000", "\"frame_rate\": 100");
        let e = errors(&text);
        assert!(
            e.iter()
                .any(|d| d.path == "perturbations[0].frequency" && d.line == Some(24)),
            "{e:?}"
        );
    }

    #[test]
    fn nested_paths_resolve_to_lines() {
        let text = BASE.replace("{\"position\": 19,", "{\"position\": 25,");
        let e = errors(&text);
        assert_eq!(e[0].path, "fiber.reflectors[1].position");
        assert_eq!(e[0].line, Some(20));
        assert!(e[0]
            .to_string()
            .starts_with("error: line 20: fiber.reflectors[1].position"));
    }

    #[test]
    fn direct_bpsk_and_phase_analysis_rejected() {
        let text = BASE.replace("\"mode\": \"coherent\"", "\"mode\": \"direct\"");
        let e = errors(&text);
        assert!(e.iter().any(|d| d.path == "detection.mode"));
        assert!(e.iter().any(|d| d.path == "analyses[0].type"));
    }

    #[test]
    fn unknown_series_and_fields() {
        let text = BASE.replace("\"series\": \"e2e\"", "\"series\": \"nope\"");
        assert!(errors(&text).iter().any(|d| d.path == "analyses[1].series"));
        let bad = BASE.replace("\"seed\": 1,", "\"seed\": 1, \"bogus\": 2,");
        match Scenario::from_json(&bad) {
            Err(Error::ScenarioParse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn merged_reflectors_warn() {
        let text = BASE.replace("{\"position\": 19,", "{\"position\": 1.01,");
        let s = Scenario::from_json(&text).unwrap();
        let d = s.validate();
        assert!(!has_errors(&d));
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].severity, Severity::Warning);
    }

    #[test]
    fn fast_tone_breaks_unwrapping() {
        let text = BASE.replace("\"index_amplitude\": 1e-7", "\"index_amplitude\": 2e-6");
        assert!(errors(&text)
            .iter()
            .any(|d| d.path == "perturbations[0].index_amplitude"));
    }
}
