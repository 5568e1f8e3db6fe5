//! Python bindings over the pbgsim core: run scenes from TOML text, sweep
//! and search injection speeds, and pull the same JSON-shaped reports the
//! command line writes, as plain dicts.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde_json::Value;

use pbgsim::analysis::{von_neumann_entropy, FinalStateReport};
use pbgsim::config::{figure, RunConfig, FIGURES};
use pbgsim::defect::{g0_from_microcavity, MicrocavityCalibration};
use pbgsim::dynamics::integrate;
use pbgsim::export::{report_json, search_json, sweep_json, timeseries_csv, Provenance};
use pbgsim::sweep::{run_sweep, search_bell_velocity, search_w_velocities, VelocityRange};

fn err_of(e: pbgsim::Error) -> PyErr {
    match e.exit_code() {
        1 => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn value_to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match n.as_i64() {
            Some(i) => i.into_pyobject(py)?.into_any(),
            None => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(value_to_py(py, item)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (key, item) in map {
                dict.set_item(key, value_to_py(py, item)?)?;
            }
            dict.into_any()
        }
    })
}

fn config_of(text: &str) -> PyResult<RunConfig> {
    RunConfig::from_toml_str(text).map_err(err_of)
}

fn provenance_of(cfg: &RunConfig) -> PyResult<Provenance> {
    Ok(Provenance::new(cfg.sha256_hex().map_err(err_of)?))
}

fn range_of(r: (f64, f64, usize)) -> PyResult<VelocityRange> {
    VelocityRange::new(r.0, r.1, r.2).map_err(err_of)
}

/// Ids of the built-in scenes, in registry order.
#[pyfunction]
fn figure_ids() -> Vec<String> {
    FIGURES.iter().map(|f| f.id.to_string()).collect()
}

/// One-line description of a built-in scene.
#[pyfunction]
fn figure_description(id: &str) -> PyResult<String> {
    figure(id)
        .map(|f| f.description.to_string())
        .ok_or_else(|| PyValueError::new_err(format!("unknown figure {id:?}")))
}

/// (stem, config_toml) pairs for a built-in scene's runs.
#[pyfunction]
fn figure_runs(id: &str) -> PyResult<Vec<(String, String)>> {
    let recipe =
        figure(id).ok_or_else(|| PyValueError::new_err(format!("unknown figure {id:?}")))?;
    Ok(recipe
        .runs
        .iter()
        .map(|(stem, text)| (stem.to_string(), text.to_string()))
        .collect())
}

/// Integrate one configured run and return its final-state report.
///
/// `vb`/`vc` override the second and third atoms' injection speeds.
#[pyfunction]
#[pyo3(signature = (config_toml, vb=None, vc=None))]
fn simulate<'py>(
    py: Python<'py>,
    config_toml: &str,
    vb: Option<f64>,
    vc: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = config_of(config_toml)?;
    let problem = cfg.build_problem_with_speeds(vb, vc).map_err(err_of)?;
    let series = integrate(&problem).map_err(err_of)?;
    let report = FinalStateReport::from_series(&series).map_err(err_of)?;
    value_to_py(py, &report_json(&report, &provenance_of(&cfg)?))
}

/// Integrate one configured run and return its sampled time series as CSV
/// text, identical to the file the command line writes.
#[pyfunction]
fn time_series_csv(config_toml: &str) -> PyResult<String> {
    let cfg = config_of(config_toml)?;
    let problem = cfg.build_problem().map_err(err_of)?;
    let series = integrate(&problem).map_err(err_of)?;
    timeseries_csv(&series).map_err(err_of)
}

/// Integrate the scene across a grid of injection speeds.
///
/// `vb` and `vc` are (lo, hi, n) ranges; omit `vc` for a one-axis sweep.
#[pyfunction]
#[pyo3(signature = (config_toml, vb, vc=None, parallel=true))]
fn sweep<'py>(
    py: Python<'py>,
    config_toml: &str,
    vb: (f64, f64, usize),
    vc: Option<(f64, f64, usize)>,
    parallel: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = config_of(config_toml)?;
    let vb_vals = range_of(vb)?.values();
    let vc_vals = match vc {
        Some(r) => Some(range_of(r)?.values()),
        None => None,
    };
    let points = run_sweep(&vb_vals, vc_vals.as_deref(), parallel, |b, c| {
        cfg.build_problem_with_speeds(Some(b), c)
    })
    .map_err(err_of)?;
    value_to_py(
        py,
        &sweep_json(&vb_vals, vc_vals.as_deref(), &points, &provenance_of(&cfg)?),
    )
}

/// Search injection speeds for the best entangled final state.
///
/// `target` is "bell" (two atoms, one searched speed) or "w" (three atoms,
/// two searched speeds; `vc` defaults to the `vb` range).
#[pyfunction]
#[pyo3(signature = (config_toml, target, vb, vc=None))]
fn search<'py>(
    py: Python<'py>,
    config_toml: &str,
    target: &str,
    vb: (f64, f64, usize),
    vc: Option<(f64, f64, usize)>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = config_of(config_toml)?;
    let vb_range = range_of(vb)?;
    let outcome = match target {
        "bell" => search_bell_velocity(&vb_range, |v| cfg.build_problem_with_speeds(Some(v), None))
            .map_err(err_of)?,
        "w" => {
            let vc_range = range_of(vc.unwrap_or(vb))?;
            search_w_velocities(&vb_range, &vc_range, |b, c| {
                cfg.build_problem_with_speeds(Some(b), Some(c))
            })
            .map_err(err_of)?
        }
        other => {
            return Err(PyValueError::new_err(format!(
                "target must be \"bell\" or \"w\", got {other:?}"
            )))
        }
    };
    value_to_py(py, &search_json(target, &outcome, &provenance_of(&cfg)?))
}

/// Entanglement entropy of a two-atom split with excited population `p`
/// on the first atom, in nats.
#[pyfunction]
fn entanglement_entropy(p: f64) -> PyResult<f64> {
    von_neumann_entropy(p).map_err(err_of)
}

/// Peak atom-mode coupling rate, rad/s, from a microcavity calibration:
/// cavity mode volume in cm^3, vacuum Rabi frequency in kHz, defect
/// radius in m.
#[pyfunction]
fn coupling_rate_from_cavity(v_cav_cm3: f64, rabi_khz: f64, r_def_m: f64) -> PyResult<f64> {
    let cal = MicrocavityCalibration::new(
        v_cav_cm3 * 1e-6,
        std::f64::consts::TAU * rabi_khz * 1e3,
        r_def_m,
    )
    .map_err(err_of)?;
    Ok(g0_from_microcavity(&cal))
}

#[pymodule(name = "pbgsim")]
fn pbgsim_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(figure_ids, m)?)?;
    m.add_function(wrap_pyfunction!(figure_description, m)?)?;
    m.add_function(wrap_pyfunction!(figure_runs, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(time_series_csv, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(search, m)?)?;
    m.add_function(wrap_pyfunction!(entanglement_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(coupling_rate_from_cavity, m)?)?;
    Ok(())
}
