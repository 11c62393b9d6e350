//! Python bindings: constants, Wasserstein distances and experiment runs.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use tci_spde::concentration::wasserstein;
use tci_spde::constants::{self, T1ConstantQuery, T2ConstantQuery};
use tci_spde::experiment::{self, ExperimentConfig, Subcommand};
use tci_spde::ModelKind;

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Optimal `C(T, K₂, C_B)` of the quadratic transportation inequality.
///
/// Returns a dict with keys `value`, `eps1`, `eps2` and `warnings`.
#[pyfunction]
#[pyo3(signature = (t, k2, c_b, c1 = constants::default_c1()))]
fn t2_constant<'py>(py: Python<'py>, t: f64, k2: f64, c_b: f64, c1: f64) -> PyResult<Bound<'py, PyDict>> {
    let r = constants::t2_constant(&T2ConstantQuery::new(t, k2, c_b, c1)).map_err(value_error)?;
    let d = PyDict::new(py);
    d.set_item("value", r.value)?;
    d.set_item("eps1", r.eps1)?;
    d.set_item("eps2", r.eps2)?;
    d.set_item("warnings", r.warnings)?;
    Ok(d)
}

/// Constant of the first-order transportation inequality.
#[pyfunction]
#[pyo3(signature = (lambda0, c, theta, f_tilde_integral, mu_moment = 1.0))]
fn t1_constant(lambda0: f64, c: f64, theta: f64, f_tilde_integral: f64, mu_moment: f64) -> PyResult<f64> {
    constants::t1_constant(&T1ConstantQuery {
        lambda0,
        c,
        theta,
        f_tilde_integral,
        mu_moment,
    })
    .map_err(value_error)
}

/// Gaussian-concentration constant `D = b²e/(2a√π)`.
#[pyfunction]
fn ccr_constant(a: f64, b: f64) -> PyResult<f64> {
    constants::ccr_constant(a, b).map_err(value_error)
}

/// Exact `W₂` between two equal-size samples on the line.
#[pyfunction]
fn w2_sorted_1d(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    wasserstein::w2_sorted_1d(&a, &b).map_err(value_error)
}

/// Exact `W₂` between two equal-size point clouds (lists of points).
#[pyfunction]
fn w2_small_cloud(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>) -> PyResult<f64> {
    wasserstein::w2_small_cloud(&a, &b).map_err(value_error)
}

/// Reference configuration of `"heat"`, `"burgers"` or `"ns2d"` as JSON.
#[pyfunction]
fn reference_config(kind: &str) -> PyResult<String> {
    let kind = match kind {
        "heat" => ModelKind::Heat,
        "burgers" => ModelKind::Burgers,
        "ns2d" => ModelKind::Ns2d,
        other => return Err(value_error(format!("unknown model kind {other:?}"))),
    };
    serde_json::to_string_pretty(&experiment::reference_config(kind)).map_err(value_error)
}

/// Runs a subcommand on a JSON configuration and returns
/// `(report_json, failures)`. The report carries no timestamp and nothing is
/// written to disk.
#[pyfunction]
fn run(py: Python<'_>, subcommand: &str, config_json: &str) -> PyResult<(String, usize)> {
    let sub: Subcommand = subcommand.parse().map_err(value_error)?;
    let cfg = ExperimentConfig::from_json(config_json).map_err(value_error)?;
    let out = py.detach(|| experiment::run(sub, &cfg)).map_err(value_error)?;
    let text = serde_json::to_string_pretty(&out.report).map_err(value_error)?;
    Ok((text, out.failures()))
}

#[pymodule]
fn tci_spde_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(t2_constant, m)?)?;
    m.add_function(wrap_pyfunction!(t1_constant, m)?)?;
    m.add_function(wrap_pyfunction!(ccr_constant, m)?)?;
    m.add_function(wrap_pyfunction!(w2_sorted_1d, m)?)?;
    m.add_function(wrap_pyfunction!(w2_small_cloud, m)?)?;
    m.add_function(wrap_pyfunction!(reference_config, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
