//! Scenario execution and output files.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::analysis::{amplitude_series, phase_series, rtt_series, temp_estimate, tone_detect, TimeSeries, ToneReport};
use crate::archive::TraceArchive;
use crate::correlator::{average, find_peaks_with, fingerprint, mean_power, AverageMode, CorrTrace, Fingerprint, Peak};
use crate::error::{Error, Result};
use crate::fbg::{fbg_sweep, FbgSweep};
use crate::fibermodel::round_trip_delay;
use crate::scenario::{Analysis, Scenario};

/// Tone search outcome for one series.
#[derive(Debug, Clone, PartialEq)]
pub struct ToneOutcome {
    pub series: String,
    pub min_snr_db: f64,
    pub report: std::result::Result<ToneReport, String>,
}

impl ToneOutcome {
    /// A line counts as detected when it clears `min_snr_db`.
    pub fn detected(&self) -> Option<&ToneReport> {
        self.report.as_ref().ok().filter(|r| r.snr_db >= self.min_snr_db)
    }
}

/// Everything computed for a scenario.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub traces: Vec<CorrTrace>,
    pub fingerprint: Fingerprint,
    pub peaks: Vec<Peak>,
    pub series: Vec<TimeSeries>,
    pub tones: Vec<ToneOutcome>,
    pub fbg: Option<FbgSweep>,
}

impl RunResult {
    pub fn series(&self, label: &str) -> Option<&TimeSeries> {
        self.series.iter().find(|s| s.label == label)
    }
}

/// Nominal bin of position `z`, moved to the strongest fingerprint bin
/// within half a bit.
pub fn snap_bin(scn: &Scenario, power: &[f64], z: f64) -> Result<usize> {
    let fs = scn.probe.sample_rate();
    let nominal = (round_trip_delay(&scn.fiber, z)? * fs).round() as usize;
    let half = scn.probe.samples_per_bit / 2;
    let lo = nominal.saturating_sub(half);
    let hi = (nominal + half).min(power.len().saturating_sub(1));
    Ok((lo..=hi)
        .max_by(|&a, &b| power[a].total_cmp(&power[b]))
        .unwrap_or(nominal))
}

/// Synthesize all frames and evaluate the scenario's analyses.
pub fn run(scn: &Scenario) -> Result<RunResult> {
    let traces = scn.acquisition().traces()?;
    analyze(scn, traces)
}

/// Evaluate the analyses on existing traces.
pub fn analyze(scn: &Scenario, traces: Vec<CorrTrace>) -> Result<RunResult> {
    let power = mean_power(&traces);
    let mean_trace = average(&traces, AverageMode::Power)?;
    let fp = fingerprint(&mean_trace, scn.fiber.group_index);
    let peaks = find_peaks_with(
        &power,
        scn.peak_threshold_db,
        scn.median_window,
        &mean_trace,
        scn.peak_fit,
    )?;

    let mut series: Vec<TimeSeries> = Vec::new();
    let mut tones = Vec::new();
    let mut fbg = None;
    for a in &scn.analyses {
        let label = a.label();
        let mut s = match a {
            Analysis::Rtt {
                input,
                output,
                search_radius,
                ..
            } => {
                let bi = snap_bin(scn, &power, *input)?;
                let bo = snap_bin(scn, &power, *output)?;
                rtt_series(&traces, bi, bo, *search_radius, scn.peak_fit)
            }
            Analysis::Amplitude { position, .. } => amplitude_series(&traces, snap_bin(scn, &power, *position)?),
            Analysis::Phase {
                a, b, min_magnitude, ..
            } => {
                let ba = snap_bin(scn, &power, *a)?;
                let bb = snap_bin(scn, &power, *b)?;
                phase_series(&traces, ba, bb, *min_magnitude)
            }
            Analysis::Temp {
                series: src,
                section_km,
                ..
            } => {
                let rtt = lookup(&series, src)?;
                temp_estimate(rtt, *section_km, scn.fiber.thermal_coeff)?
            }
            Analysis::Tone {
                series: src,
                f_min,
                f_max,
                min_snr_db,
            } => {
                let s = lookup(&series, src)?;
                tones.push(ToneOutcome {
                    series: src.clone(),
                    min_snr_db: *min_snr_db,
                    report: tone_detect(s, *f_min, *f_max).map_err(|e| e.to_string()),
                });
                continue;
            }
            Analysis::Fbg => {
                let f = scn
                    .fbg
                    .as_ref()
                    .ok_or_else(|| Error::InvalidParameter("fbg analysis needs an fbg block".into()))?;
                fbg = Some(fbg_sweep(f, &scn.fiber, &scn.probe, &scn.detection, scn.seed)?);
                continue;
            }
        };
        if let Some(l) = label {
            s.label = l;
        }
        series.push(s);
    }
    let result = RunResult {
        traces,
        fingerprint: fp,
        peaks,
        series,
        tones,
        fbg,
    };
    check_finite(&result)?;
    Ok(result)
}

fn lookup<'a>(series: &'a [TimeSeries], label: &str) -> Result<&'a TimeSeries> {
    series
        .iter()
        .find(|s| s.label == label)
        .ok_or_else(|| Error::InvalidParameter(format!("no series named {label:?}")))
}

fn check_finite(r: &RunResult) -> Result<()> {
    if r.traces
        .iter()
        .any(|t| t.values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()))
    {
        return Err(Error::NonFinite("correlation traces".into()));
    }
    if r.fingerprint.power.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite("fingerprint".into()));
    }
    for s in &r.series {
        if s.present().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("series {}", s.label)));
        }
    }
    if let Some(f) = &r.fbg {
        if f.spectra.iter().flatten().chain(&f.centers).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("fbg spectra".into()));
        }
    }
    Ok(())
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

pub fn write_fingerprint(fp: &Fingerprint, mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "z_meters,delay_seconds,power")?;
    for ((z, t), p) in fp.distance.iter().zip(&fp.delay).zip(&fp.power) {
        writeln!(w, "{z},{t},{p}")?;
    }
    Ok(())
}

fn write_fbg(f: &FbgSweep, scn: &Scenario, dir: &Path) -> Result<()> {
    let mut w = create(dir, "fbg_spectra.csv")?;
    write!(w, "wavelength_m")?;
    for g in 0..f.bins.len() {
        write!(w, ",grating_{g}")?;
    }
    writeln!(w)?;
    for (k, wl) in f.wavelengths.iter().enumerate() {
        write!(w, "{wl}")?;
        for s in &f.spectra {
            write!(w, ",{}", s[k])?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    let mut w = create(dir, "fbg_centers.csv")?;
    writeln!(w, "grating,position_m,bin,center_m,configured_center_m")?;
    if let Some(cfg) = &scn.fbg {
        for (g, ((z, truth), (bin, c))) in cfg
            .positions()
            .iter()
            .zip(cfg.centers())
            .zip(f.bins.iter().zip(&f.centers))
            .enumerate()
        {
            writeln!(w, "{g},{z},{bin},{c},{truth}")?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Write fingerprint, trace archive, per-series CSVs and the summary.
pub fn write_outputs(scn: &Scenario, r: &RunResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = create(dir, "fingerprint.csv")?;
    write_fingerprint(&r.fingerprint, &mut w)?;
    w.flush()?;
    let mut w = create(dir, "traces.cotd")?;
    TraceArchive::from_traces(&r.traces)?.write(&mut w)?;
    w.flush()?;
    for s in &r.series {
        let mut w = create(dir, &format!("{}.csv", s.label))?;
        s.write_csv(&mut w)?;
        w.flush()?;
    }
    if let Some(f) = &r.fbg {
        write_fbg(f, scn, dir)?;
    }
    std::fs::write(dir.join("summary.txt"), summary(scn, r))?;
    Ok(())
}

/// Plain-text report of peaks, series statistics, tones and temperatures.
pub fn summary(scn: &Scenario, r: &RunResult) -> String {
    let mut s = String::new();
    let fs = scn.probe.sample_rate();
    let _ = writeln!(s, "scenario: {}", scn.name);
    if !scn.description.is_empty() {
        let _ = writeln!(s, "description: {}", scn.description);
    }
    let _ = writeln!(s, "seed: {}", scn.seed);
    let _ = writeln!(s, "frames: {} at {} Hz", r.traces.len(), scn.frame_rate);
    let _ = writeln!(s, "sample rate: {fs:.6e} Hz");
    let _ = writeln!(s, "trace length: {} bins", r.traces.first().map_or(0, |t| t.len()));
    let _ = writeln!(s, "averages per frame: {}", scn.detection.num_averages);
    let _ = writeln!(s);
    let _ = writeln!(s, "peaks above {} dB: {}", scn.peak_threshold_db, r.peaks.len());
    for p in &r.peaks {
        let z = r.fingerprint.distance[p.bin];
        let _ = writeln!(
            s,
            "  bin {:>7}  z {:>12.4} m  delay {:.6e} s  power {:.4e}",
            p.bin,
            z,
            p.refined_delay,
            p.magnitude * p.magnitude
        );
    }
    for ts in &r.series {
        let _ = writeln!(s);
        let _ = writeln!(s, "series {}: {} frames, {} gaps", ts.label, ts.len(), ts.gap_count());
        if let (Some(m), Some(sd), Some(pp)) = (ts.mean(), ts.std_dev(), ts.peak_to_peak()) {
            let _ = writeln!(s, "  mean {m:.6e}  std {sd:.6e}  peak-to-peak {pp:.6e}");
        }
    }
    for t in &r.tones {
        let _ = writeln!(s);
        match (&t.report, t.detected()) {
            (_, Some(rep)) => {
                let _ = writeln!(
                    s,
                    "tone in {}: {:.3} Hz  amplitude {:.4e}  peak-to-peak {:.4e}  snr {:.1} dB",
                    t.series, rep.frequency, rep.amplitude, rep.peak_to_peak, rep.snr_db
                );
            }
            (Ok(rep), None) => {
                let _ = writeln!(
                    s,
                    "tone in {}: no line above {} dB (strongest {:.3} Hz at {:.1} dB)",
                    t.series, t.min_snr_db, rep.frequency, rep.snr_db
                );
            }
            (Err(e), None) => {
                let _ = writeln!(s, "tone in {}: unavailable ({e})", t.series);
            }
        }
    }
    if let Some(f) = &r.fbg {
        let _ = writeln!(s);
        let _ = writeln!(s, "gratings: {} resolved", f.bins.len());
        let truth = scn.fbg.as_ref().map(|c| c.centers()).unwrap_or_default();
        for (g, (bin, c)) in f.bins.iter().zip(&f.centers).enumerate() {
            let err = truth.get(g).map(|t| (c - t) * 1e12);
            let _ = match err {
                Some(e) => writeln!(s, "  grating {g:>3}  bin {bin:>6}  center {c:.6e} m  error {e:+.3} pm"),
                None => writeln!(s, "  grating {g:>3}  bin {bin:>6}  center {c:.6e} m"),
            };
        }
    }
    s
}
