//! Python bindings: the engines, verifiers, and reports, exchanged as JSON
//! strings in the same schemas the CLI reads and writes.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use clinch::combinatorial::run_combinatorial as run_combinatorial_impl;
use clinch::divisible::{preprocessed_instance, run_divisible as run_divisible_impl};
use clinch::error::EngineError;
use clinch::io;
use clinch::marginal::{demo_instance, marginal_deviation_grid, run_counterexample};
use clinch::rounding::{run_rounds as run_rounds_impl, DEFAULT_LAMBDA_CAP};
use clinch::selftest::run_selftest;
use clinch::verify::{ic_deviation_grid, Engine};

fn to_py_err(e: EngineError) -> PyErr {
    match e.exit_code() {
        2 => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Parse and validate an instance document; returns the normalized document.
#[pyfunction]
fn parse_instance(instance_json: &str) -> PyResult<String> {
    let inst = io::parse_instance(instance_json).map_err(to_py_err)?;
    Ok(io::to_json(&io::instance_to_doc(&inst)))
}

/// Run the divisible-slots clinching auction.
/// Returns `(allocation_json, trace_json)`.
#[pyfunction]
fn run_divisible(instance_json: &str) -> PyResult<(String, String)> {
    let inst = io::parse_instance(instance_json).map_err(to_py_err)?;
    let (alloc, trace) = run_divisible_impl(&inst).map_err(to_py_err)?;
    let pre = preprocessed_instance(&inst);
    Ok((
        io::to_json(&io::divisible_to_doc(&pre.slots, &alloc)),
        io::to_json(&io::trace_to_doc("divisible", &trace)),
    ))
}

/// Run the rounding pipeline for multi-round indivisible slots.
/// Returns `(allocation_json, trace_json)`.
#[pyfunction]
#[pyo3(signature = (instance_json, seed, lambda_cap=None))]
fn run_rounds(
    instance_json: &str,
    seed: u64,
    lambda_cap: Option<u64>,
) -> PyResult<(String, String)> {
    let inst = io::parse_instance(instance_json).map_err(to_py_err)?;
    let outcome = run_rounds_impl(&inst, seed, lambda_cap.unwrap_or(DEFAULT_LAMBDA_CAP))
        .map_err(to_py_err)?;
    let pre = preprocessed_instance(&inst);
    Ok((
        io::to_json(&io::rounds_to_doc(&pre.slots, &outcome)),
        io::to_json(&io::trace_to_doc("rounds", &outcome.trace)),
    ))
}

/// Run the single-valued combinatorial clinching auction.
/// Returns `(allocation_json, trace_json)`.
#[pyfunction]
fn run_combinatorial(instance_json: &str) -> PyResult<(String, String)> {
    let inst = io::parse_instance(instance_json).map_err(to_py_err)?;
    let (alloc, trace) = run_combinatorial_impl(&inst).map_err(to_py_err)?;
    Ok((
        io::to_json(&io::combinatorial_to_doc(&alloc)),
        io::to_json(&io::trace_to_doc("combinatorial", &trace)),
    ))
}

/// Check legality and Pareto optimality of an allocation document.
#[pyfunction]
fn verify(instance_json: &str, allocation_json: &str) -> PyResult<String> {
    let inst = io::parse_instance(instance_json).map_err(to_py_err)?;
    let doc = io::verify_allocation(&inst, allocation_json).map_err(to_py_err)?;
    Ok(io::to_json(&doc))
}

/// Exhaustive deviation grid for one engine ("divisible", "rounds",
/// "combinatorial") over valuation profiles in {1..vmax}^n.
#[pyfunction]
#[pyo3(signature = (engine, vmax, instance_json))]
fn ic_grid(engine: &str, vmax: u64, instance_json: &str) -> PyResult<String> {
    let template = io::parse_instance(instance_json).map_err(to_py_err)?;
    let verify_engine = match engine {
        "divisible" => Engine::Divisible,
        "rounds" => Engine::Rounds,
        "combinatorial" => Engine::Combinatorial,
        other => return Err(PyValueError::new_err(format!("unknown engine {other:?}"))),
    };
    let devs = ic_deviation_grid(&template, verify_engine, vmax).map_err(to_py_err)?;
    Ok(io::to_json(&io::deviations_to_doc(
        engine,
        vmax,
        template.n(),
        &devs,
    )))
}

/// Deviation grid for the diminishing-marginals demo instance.
#[pyfunction]
fn marginal_grid(vmax: u64) -> PyResult<Vec<(usize, Vec<u64>, String, String)>> {
    let devs = marginal_deviation_grid(&demo_instance(), vmax).map_err(to_py_err)?;
    Ok(devs
        .into_iter()
        .map(|d| {
            (
                d.bidder,
                d.reported_marginals,
                clinch::rational::fmt_rat(&d.truthful_utility),
                clinch::rational::fmt_rat(&d.deviating_utility),
            )
        })
        .collect())
}

/// Run the impossibility demo and return its report document.
#[pyfunction]
fn demo_theorem7() -> PyResult<String> {
    let report = run_counterexample().map_err(to_py_err)?;
    Ok(io::to_json(&io::counterexample_to_doc(&report)))
}

/// Run the built-in smoke checks; returns `(name, passed)` pairs.
#[pyfunction]
fn selftest() -> Vec<(String, bool)> {
    run_selftest()
        .into_iter()
        .map(|c| (c.name, c.passed))
        .collect()
}

#[pymodule]
fn clinch_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(parse_instance, m)?)?;
    m.add_function(wrap_pyfunction!(run_divisible, m)?)?;
    m.add_function(wrap_pyfunction!(run_rounds, m)?)?;
    m.add_function(wrap_pyfunction!(run_combinatorial, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(ic_grid, m)?)?;
    m.add_function(wrap_pyfunction!(marginal_grid, m)?)?;
    m.add_function(wrap_pyfunction!(demo_theorem7, m)?)?;
    m.add_function(wrap_pyfunction!(selftest, m)?)?;
    Ok(())
}
