//! Python bindings: the guard pipeline, detector, reconstructor, corpus
//! generator and evaluator, exposed as plain functions over dicts.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyDict, PyFloat, PyInt, PyList, PyString, PyTuple};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use srpg_core::{
    evaluate_corpus, generate_synthetic, inject_pii, DetectionPolicy, GuardMethod, GuardPipeline,
    InjectionBank, MathContext, PiiDetector, Reconstructor, TemplateBank, Weights,
};

fn value_to_py(py: Python<'_>, value: &Value) -> PyResult<Py<PyAny>> {
    Ok(match value {
        Value::Null => py.None(),
        Value::Bool(b) => PyBool::new(py, *b).to_owned().into_any().unbind(),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                i.into_pyobject(py)?.into_any().unbind()
            } else {
                n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any().unbind()
            }
        }
        Value::String(s) => PyString::new(py, s).into_any().unbind(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(value_to_py(py, item)?)?;
            }
            list.into_any().unbind()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, v) in map {
                dict.set_item(k, value_to_py(py, v)?)?;
            }
            dict.into_any().unbind()
        }
    })
}

fn py_to_value(obj: &Bound<'_, PyAny>) -> PyResult<Value> {
    if obj.is_none() {
        return Ok(Value::Null);
    }
    if let Ok(b) = obj.cast::<PyBool>() {
        return Ok(Value::Bool(b.is_true()));
    }
    if let Ok(i) = obj.cast::<PyInt>() {
        return Ok(Value::from(i.extract::<i64>()?));
    }
    if let Ok(f) = obj.cast::<PyFloat>() {
        return Ok(serde_json::Number::from_f64(f.extract::<f64>()?)
            .map(Value::Number)
            .unwrap_or(Value::Null));
    }
    if let Ok(s) = obj.cast::<PyString>() {
        return Ok(Value::String(s.extract::<String>()?));
    }
    if let Ok(list) = obj.cast::<PyList>() {
        let mut items = Vec::with_capacity(list.len());
        for item in list.iter() {
            items.push(py_to_value(&item)?);
        }
        return Ok(Value::Array(items));
    }
    if let Ok(tuple) = obj.cast::<PyTuple>() {
        let mut items = Vec::with_capacity(tuple.len());
        for item in tuple.iter() {
            items.push(py_to_value(&item)?);
        }
        return Ok(Value::Array(items));
    }
    if let Ok(dict) = obj.cast::<PyDict>() {
        let mut map = serde_json::Map::new();
        for (k, v) in dict.iter() {
            map.insert(k.extract::<String>()?, py_to_value(&v)?);
        }
        return Ok(Value::Object(map));
    }
    Err(PyValueError::new_err(format!(
        "unsupported value of type {}",
        obj.get_type().name().map(|n| n.to_string()).unwrap_or_default()
    )))
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let json = serde_json::to_value(value)
        .map_err(|e| PyRuntimeError::new_err(format!("serialization failure: {e}")))?;
    value_to_py(py, &json)
}

fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>, what: &str) -> PyResult<T> {
    let value = py_to_value(obj)?;
    serde_json::from_value(value)
        .map_err(|e| PyValueError::new_err(format!("invalid {what}: {e}")))
}

fn parse_method(method: &str) -> PyResult<GuardMethod> {
    method.parse().map_err(|e: String| PyValueError::new_err(e))
}

/// Guard one message; returns the full guard output as a dict.
#[pyfunction]
#[pyo3(signature = (text, method = "srpg"))]
fn guard_text(py: Python<'_>, text: &str, method: &str) -> PyResult<Py<PyAny>> {
    let method = parse_method(method)?;
    let pipeline = GuardPipeline::bundled_deterministic();
    let output = pipeline
        .guard(method, text)
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    to_py(py, &output)
}

/// Locate PII spans in the text under the given policy.
#[pyfunction]
#[pyo3(signature = (text, strict = true))]
fn detect_pii(py: Python<'_>, text: &str, strict: bool) -> PyResult<Py<PyAny>> {
    let policy = if strict { DetectionPolicy::strict() } else { DetectionPolicy::standard() };
    let spans = PiiDetector::bundled(policy).detect(text);
    to_py(py, &spans)
}

/// Strict sanitization stream: masked text plus the placeholder audit.
#[pyfunction]
fn strict_mask(py: Python<'_>, text: &str) -> PyResult<Py<PyAny>> {
    let detector = PiiDetector::bundled(DetectionPolicy::strict());
    to_py(py, &srpg_core::strict_mask(text, &detector))
}

/// Deterministic context reconstruction.
#[pyfunction]
fn reconstruct(py: Python<'_>, text: &str) -> PyResult<Py<PyAny>> {
    to_py(py, &Reconstructor::bundled().reconstruct_deterministic(text))
}

/// Canonical single-line serialization of a context dict.
#[pyfunction]
fn canonical_serialize(context: &Bound<'_, PyAny>) -> PyResult<String> {
    let ctx: MathContext = from_py(context, "math context")?;
    Ok(srpg_core::canonical_serialize(&ctx))
}

/// Exact-match comparison of two context dicts.
#[pyfunction]
fn contexts_equal(a: &Bound<'_, PyAny>, b: &Bound<'_, PyAny>) -> PyResult<bool> {
    let a: MathContext = from_py(a, "math context")?;
    let b: MathContext = from_py(b, "math context")?;
    Ok(srpg_core::contexts_equal(&a, &b))
}

/// Deterministic fusion of masked text and a context dict.
#[pyfunction]
fn fuse(masked_text: &str, context: &Bound<'_, PyAny>) -> PyResult<String> {
    let ctx: MathContext = from_py(context, "math context")?;
    Ok(srpg_core::fuse(masked_text, &ctx))
}

/// Run the canonical-matching adversary against gold PII records.
#[pyfunction]
fn attack(py: Python<'_>, output_text: &str, pii: &Bound<'_, PyAny>) -> PyResult<Py<PyAny>> {
    let records: Vec<srpg_core::PiiRecord> = from_py(pii, "pii records")?;
    to_py(py, &srpg_core::attack(output_text, &records))
}

/// Generate a synthetic dialogue corpus.
#[pyfunction]
fn generate_corpus(py: Python<'_>, seed: u64, count: usize) -> PyResult<Py<PyAny>> {
    let bank = TemplateBank::bundled();
    let items =
        generate_synthetic(seed, count, &bank).map_err(|e| PyValueError::new_err(e.to_string()))?;
    to_py(py, &items)
}

/// Generate and PII-inject a corpus with the bundled profiles.
#[pyfunction]
fn generate_injected(py: Python<'_>, seed: u64, count: usize) -> PyResult<Py<PyAny>> {
    let injected = build_injected(seed, count)?;
    to_py(py, &injected)
}

fn build_injected(seed: u64, count: usize) -> PyResult<Vec<srpg_core::InjectedItem>> {
    let bank = TemplateBank::bundled();
    let items =
        generate_synthetic(seed, count, &bank).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let profiles = InjectionBank::bundled_profiles();
    let injection = InjectionBank::bundled();
    Ok(items
        .iter()
        .enumerate()
        .map(|(i, item)| inject_pii(item, &profiles[i % profiles.len()], seed, &injection))
        .collect())
}

/// Full offline experiment: generate, inject, guard with the method, and
/// score. Returns the metrics report as a dict.
#[pyfunction]
#[pyo3(signature = (method, seed = 42, count = 100))]
fn evaluate(py: Python<'_>, method: &str, seed: u64, count: usize) -> PyResult<Py<PyAny>> {
    let method = parse_method(method)?;
    let injected = build_injected(seed, count)?;
    let pipeline = GuardPipeline::bundled_deterministic();
    let report = evaluate_corpus(
        &injected,
        method,
        &pipeline,
        &TemplateBank::bundled(),
        &Reconstructor::bundled(),
        &Weights::default(),
    )
    .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    to_py(py, &report)
}

#[pymodule]
fn srpg_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(guard_text, m)?)?;
    m.add_function(wrap_pyfunction!(detect_pii, m)?)?;
    m.add_function(wrap_pyfunction!(strict_mask, m)?)?;
    m.add_function(wrap_pyfunction!(reconstruct, m)?)?;
    m.add_function(wrap_pyfunction!(canonical_serialize, m)?)?;
    m.add_function(wrap_pyfunction!(contexts_equal, m)?)?;
    m.add_function(wrap_pyfunction!(fuse, m)?)?;
    m.add_function(wrap_pyfunction!(attack, m)?)?;
    m.add_function(wrap_pyfunction!(generate_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(generate_injected, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    Ok(())
}
