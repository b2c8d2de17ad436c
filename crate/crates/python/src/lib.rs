//! Python bindings: run sweeps from JSON configs and evaluate the closed-form
//! analysis helpers.

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use otfs_sync::analysis::{self, Technique};
use otfs_sync::harness::report::to_csv;
use otfs_sync::harness::validate::{run_validation, ValidateOptions};
use otfs_sync::harness::{run_experiment, ExperimentConfig, ResultRecord};
use otfs_sync::SyncError;

fn to_py(e: SyncError) -> PyErr {
    if e.is_config() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn tag<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_value(v).ok().and_then(|j| j.as_str().map(str::to_string)).unwrap_or_default()
}

fn records(config_json: &str) -> PyResult<Vec<ResultRecord>> {
    let cfg = ExperimentConfig::from_json(config_json).map_err(to_py)?;
    run_experiment(&cfg).map_err(to_py)
}

/// Runs a sweep and returns one dict per (point, variant).
#[pyfunction]
fn run<'py>(py: Python<'py>, config_json: &str) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let recs = py.detach(|| records(config_json))?;
    recs.iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("experiment_id", &r.experiment_id)?;
            d.set_item("variant", &r.variant)?;
            d.set_item("M", r.m)?;
            d.set_item("N", r.n)?;
            d.set_item("Q", r.q)?;
            d.set_item("scheme", tag(&r.scheme))?;
            d.set_item("pilot_structure", tag(&r.pilot_structure))?;
            d.set_item("snr_db", r.snr_db)?;
            d.set_item("kappa_max", r.kappa_max)?;
            d.set_item("cfo_point", r.cfo_point)?;
            d.set_item("trials", r.trials)?;
            d.set_item("to_err_mean", r.to_err_mean)?;
            d.set_item("to_err_var", r.to_err_var)?;
            d.set_item("to_err_bias", r.to_err_bias)?;
            d.set_item("cfo_mse", r.cfo_mse)?;
            d.set_item("nmse", r.nmse)?;
            d.set_item("nmse_db", r.nmse_db)?;
            d.set_item("seed", r.seed)?;
            Ok(d)
        })
        .collect()
}

/// Runs a sweep and returns the CSV text the CLI would write.
#[pyfunction]
fn run_csv(py: Python<'_>, config_json: &str) -> PyResult<String> {
    py.detach(|| records(config_json).map(|r| to_csv(&r)))
}

/// Zadoff-Chu samples of length `length` for user `user`.
#[pyfunction]
#[pyo3(signature = (length, root = 1, user = 0, amplitude = 1.0))]
fn zadoff_chu(length: usize, root: i64, user: usize, amplitude: f64) -> PyResult<Vec<Complex64>> {
    otfs_sync::numerics::zadoff_chu(length, root, user, amplitude).map(|z| z.samples).map_err(to_py)
}

#[pyfunction]
fn doppler_energy(alpha: f64) -> PyResult<f64> {
    analysis::doppler_energy_concentration(alpha).map_err(to_py)
}

/// Complex multiplications per frame for `technique` in
/// {"su-pcp", "mu-pcp", "absorbed-cfo"}.
#[pyfunction]
fn complexity(technique: &str, m: usize, n: usize, q: usize, l_ch: usize, kappa_max: f64) -> PyResult<f64> {
    let t = match technique {
        "su-pcp" => Technique::SuPcp,
        "mu-pcp" => Technique::MuPcp,
        "absorbed-cfo" => Technique::AbsorbedCfo,
        other => return Err(PyValueError::new_err(format!("unknown technique {other}"))),
    };
    Ok(analysis::complexity_cms(t, m, n, q, l_ch, kappa_max))
}

/// Runs the invariant checks; returns `(criterion, name, passed, detail)`.
#[pyfunction]
#[pyo3(signature = (quick = true, seed = 2024))]
fn validate(py: Python<'_>, quick: bool, seed: u64) -> PyResult<Vec<(u32, String, bool, String)>> {
    let opts = ValidateOptions { trial_scale: if quick { 0.1 } else { 1.0 }, seed };
    let checks = py.detach(|| run_validation(&opts)).map_err(to_py)?;
    Ok(checks.into_iter().map(|c| (c.criterion as u32, c.name.to_string(), c.passed, c.detail)).collect())
}

#[pymodule]
fn otfs_sync_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(run_csv, m)?)?;
    m.add_function(wrap_pyfunction!(zadoff_chu, m)?)?;
    m.add_function(wrap_pyfunction!(doppler_energy, m)?)?;
    m.add_function(wrap_pyfunction!(complexity, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    Ok(())
}
