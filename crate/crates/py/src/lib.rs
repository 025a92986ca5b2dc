//! Python bindings: scenario validation and runs, archives and a few
//! standalone models.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use cotdr::archive::TraceArchive;
use cotdr::scenario::{has_errors, Scenario};
use cotdr::{fibermodel, probegen, runner, Error};

fn runtime_err(e: Error) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn load(path: &PathBuf, seed: Option<u64>, frames: Option<usize>) -> PyResult<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| PyValueError::new_err(format!("{}: {e}", path.display())))?;
    let mut scn = Scenario::from_json(&text).map_err(|e| PyValueError::new_err(e.to_string()))?;
    if let Some(s) = seed {
        scn.seed = s;
    }
    if let Some(f) = frames {
        scn.frames = f;
    }
    let diags = scn.validate_with_source(Some(&text));
    if has_errors(&diags) {
        let msg: Vec<String> = diags.iter().map(|d| d.to_string()).collect();
        return Err(PyValueError::new_err(msg.join("\n")));
    }
    Ok(scn)
}

/// One period of the maximal-length sequence of `order` as 0/1 values.
#[pyfunction]
#[pyo3(signature = (order, extended=false))]
fn prbs(order: u32, extended: bool) -> PyResult<Vec<u32>> {
    let seq =
        probegen::gen_prbs(order, &vec![true; order as usize]).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let seq = if extended {
        probegen::extend_prbs(&seq).map_err(|e| PyValueError::new_err(e.to_string()))?
    } else {
        seq
    };
    Ok(seq.into_iter().map(u32::from).collect())
}

/// Diagnostics for a scenario file; an empty list means it is clean.
#[pyfunction]
fn validate(path: PathBuf) -> PyResult<Vec<String>> {
    let text = std::fs::read_to_string(&path).map_err(|e| PyValueError::new_err(format!("{}: {e}", path.display())))?;
    match Scenario::from_json(&text) {
        Ok(scn) => Ok(scn
            .validate_with_source(Some(&text))
            .iter()
            .map(|d| d.to_string())
            .collect()),
        Err(e) => Ok(vec![format!("error: {e}")]),
    }
}

/// Run a scenario and return its results as plain Python values.
#[pyfunction]
#[pyo3(signature = (path, seed=None, frames=None, out_dir=None))]
fn run<'py>(
    py: Python<'py>,
    path: PathBuf,
    seed: Option<u64>,
    frames: Option<usize>,
    out_dir: Option<PathBuf>,
) -> PyResult<Bound<'py, PyDict>> {
    let scn = load(&path, seed, frames)?;
    let r = py.detach(|| runner::run(&scn)).map_err(runtime_err)?;
    if let Some(dir) = &out_dir {
        runner::write_outputs(&scn, &r, dir).map_err(runtime_err)?;
    }

    let out = PyDict::new(py);
    out.set_item("name", &scn.name)?;
    out.set_item("summary", runner::summary(&scn, &r))?;
    out.set_item("frame_interval", 1.0 / scn.frame_rate)?;

    let fp = PyDict::new(py);
    fp.set_item("z_meters", &r.fingerprint.distance)?;
    fp.set_item("delay_seconds", &r.fingerprint.delay)?;
    fp.set_item("power", &r.fingerprint.power)?;
    out.set_item("fingerprint", fp)?;

    let peaks: Vec<Bound<'py, PyDict>> = r
        .peaks
        .iter()
        .map(|p| {
            let d = PyDict::new(py);
            d.set_item("bin", p.bin)?;
            d.set_item("delay", p.refined_delay)?;
            d.set_item("magnitude", p.magnitude)?;
            d.set_item("phase", p.phase)?;
            Ok(d)
        })
        .collect::<PyResult<_>>()?;
    out.set_item("peaks", peaks)?;

    let series = PyDict::new(py);
    for s in &r.series {
        series.set_item(&s.label, &s.values)?;
    }
    out.set_item("series", series)?;

    let tones = PyDict::new(py);
    for t in &r.tones {
        let d = PyDict::new(py);
        match &t.report {
            Ok(rep) => {
                d.set_item("frequency", rep.frequency)?;
                d.set_item("amplitude", rep.amplitude)?;
                d.set_item("peak_to_peak", rep.peak_to_peak)?;
                d.set_item("snr_db", rep.snr_db)?;
            }
            Err(e) => d.set_item("error", e)?,
        }
        d.set_item("detected", t.detected().is_some())?;
        tones.set_item(&t.series, d)?;
    }
    out.set_item("tones", tones)?;

    if let Some(f) = &r.fbg {
        let d = PyDict::new(py);
        d.set_item("bins", &f.bins)?;
        d.set_item("centers", &f.centers)?;
        d.set_item("wavelengths", &f.wavelengths)?;
        d.set_item("spectra", &f.spectra)?;
        out.set_item("fbg", d)?;
    }
    Ok(out)
}

/// Decode a trace archive; frames are lists of complex values.
#[pyfunction]
fn read_archive<'py>(py: Python<'py>, path: PathBuf) -> PyResult<Bound<'py, PyDict>> {
    let file = std::fs::File::open(&path).map_err(|e| PyValueError::new_err(format!("{}: {e}", path.display())))?;
    let arc = TraceArchive::read(std::io::BufReader::new(file)).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let out = PyDict::new(py);
    out.set_item("sample_rate", arc.sample_rate)?;
    out.set_item("complex", arc.complex)?;
    out.set_item("frame_len", arc.frame_len)?;
    out.set_item("frames", arc.frames)?;
    Ok(out)
}

/// One-way phase, in radians, of an index change over `extent` meters.
#[pyfunction]
fn index_phase(delta_n: f64, extent: f64, wavelength: f64) -> f64 {
    fibermodel::index_phase(delta_n, extent, wavelength)
}

/// First-order lag of a buried fiber behind an air temperature record.
#[pyfunction]
fn thermal_lag(values: Vec<f64>, dt: f64, tau: f64) -> PyResult<Vec<f64>> {
    let air = cotdr::analysis::TimeSeries::new(0.0, dt, values, "air");
    let lagged = fibermodel::thermal_lag(&air, tau).map_err(|e| PyValueError::new_err(e.to_string()))?;
    lagged.dense().map_err(runtime_err)
}

#[pymodule(name = "cotdr")]
fn cotdr_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(prbs, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(read_archive, m)?)?;
    m.add_function(wrap_pyfunction!(index_phase, m)?)?;
    m.add_function(wrap_pyfunction!(thermal_lag, m)?)?;
    Ok(())
}
