//! Python module `avgmdp_py`: load models, solve them, level them, compute
//! lower bounds and simulate learners. Results come back as plain Python
//! dicts and lists.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde_json::{json, Value};

use avgmdp::io::{load_model, model_from_json, model_to_json, pair_list, pair_map};
use avgmdp::learner::LearnerConfig;
use avgmdp::leveling::level as level_model;
use avgmdp::lowerbound::{bernoulli_kl, default_levels, regularized_lower_bound, vanilla_lower_bound, Regularization};
use avgmdp::sim::{regret, run_seeds};
use avgmdp::solve::{optimal_pairs, solve_optimal};
use avgmdp::{MdpError, MdpModel, PairId};

fn to_py(e: MdpError) -> PyErr {
    if e.is_non_convergence() {
        PyRuntimeError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
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
        Value::Array(xs) => {
            let items = xs.iter().map(|x| value_to_py(py, x)).collect::<PyResult<Vec<_>>>()?;
            PyList::new(py, items)?.into_any()
        }
        Value::Object(map) => {
            let d = PyDict::new(py);
            for (k, x) in map {
                d.set_item(k, value_to_py(py, x)?)?;
            }
            d.into_any()
        }
    })
}

/// An immutable MDP with Bernoulli rewards.
#[pyclass(name = "Model", frozen)]
struct PyModel {
    inner: MdpModel,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        load_model(path).map(|inner| Self { inner }).map_err(to_py)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        model_from_json(text).map(|inner| Self { inner }).map_err(to_py)
    }

    fn to_json(&self) -> String {
        model_to_json(&self.inner).to_string()
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name().to_string()
    }

    #[getter]
    fn n_states(&self) -> usize {
        self.inner.n_states()
    }

    #[getter]
    fn n_pairs(&self) -> usize {
        self.inner.n_pairs()
    }

    fn pair_labels(&self) -> Vec<String> {
        (0..self.inner.n_pairs()).map(|p| self.inner.pair_label(PairId(p))).collect()
    }

    fn is_communicating(&self) -> bool {
        self.inner.is_communicating()
    }

    fn __repr__(&self) -> String {
        format!("Model({:?}, states={}, pairs={})", self.inner.name(), self.inner.n_states(), self.inner.n_pairs())
    }
}

/// Optimal gain, bias, gaps and optimal pairs.
#[pyfunction]
fn solve<'py>(py: Python<'py>, model: &PyModel) -> PyResult<Bound<'py, PyAny>> {
    let m = &model.inner;
    let sol = solve_optimal(m).map_err(to_py)?;
    let opt = optimal_pairs(m).map_err(to_py)?;
    let v = json!({
        "gain": sol.gain,
        "bias": sol.bias,
        "gaps": pair_map(m, &sol.gaps),
        "optimal": pair_list(m, &opt),
    });
    value_to_py(py, &v)
}

/// Leveled model and the labels of the raised pairs.
#[pyfunction]
fn level(model: &PyModel, epsilon: f64) -> PyResult<(PyModel, Vec<String>)> {
    let lv = level_model(&model.inner, epsilon).map_err(to_py)?;
    let bumped = lv.bumped.iter().map(|&p| model.inner.pair_label(PairId(p))).collect();
    Ok((PyModel { inner: lv.model }, bumped))
}

/// Regularized bound at one level when all three regularizers are given,
/// the vanilla bound along the default levels otherwise.
#[pyfunction]
#[pyo3(signature = (model, eflat=None, eunif=None, ereg=None))]
fn lower_bound<'py>(
    py: Python<'py>,
    model: &PyModel,
    eflat: Option<f64>,
    eunif: Option<f64>,
    ereg: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let m = &model.inner;
    let v = match (eflat, eunif, ereg) {
        (Some(f), Some(u), Some(r)) => {
            let sol = regularized_lower_bound(m, Regularization::new(f, u, r)).map_err(to_py)?;
            json!({"value": sol.value, "measure": pair_map(m, &sol.measure), "converged": sol.converged})
        }
        (None, None, None) => {
            let v = vanilla_lower_bound(m, &default_levels()).map_err(to_py)?;
            json!({"value": v.value, "values": v.values, "converged": v.converged})
        }
        _ => return Err(PyValueError::new_err("give all of eflat, eunif, ereg or none")),
    };
    value_to_py(py, &v)
}

/// Runs a learner for `horizon` steps on each seed and returns regret curves.
#[pyfunction]
#[pyo3(signature = (model, algo="ecoe", horizon=10_000, seeds=vec![0], schedule=None, start_state=0))]
fn simulate<'py>(
    py: Python<'py>,
    model: &PyModel,
    algo: &str,
    horizon: u64,
    seeds: Vec<u64>,
    schedule: Option<&str>,
    start_state: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let mut cfg = LearnerConfig::named(algo);
    if let Some(s) = schedule {
        cfg.schedule = serde_json::from_str(s).map_err(|e| PyValueError::new_err(e.to_string()))?;
    }
    let m = &model.inner;
    let traces = py.detach(|| run_seeds(m, &cfg, horizon, &seeds, start_state)).map_err(to_py)?;
    let mut runs = Vec::new();
    for t in &traces {
        let r = regret(t, m).map_err(to_py)?;
        runs.push(json!({
            "seed": t.seed,
            "grid": r.grid,
            "pseudo_regret": r.pseudo,
            "empirical_regret": r.empirical,
            "counts": t.counts,
            "panics": t.counters.panics,
            "travels": t.counters.travels,
        }));
    }
    value_to_py(py, &Value::Array(runs))
}

/// Bernoulli divergence `kl(p, q)`.
#[pyfunction]
fn kl(p: f64, q: f64) -> f64 {
    bernoulli_kl(p, q)
}

#[pymodule]
fn avgmdp_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(level, m)?)?;
    m.add_function(wrap_pyfunction!(lower_bound, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(kl, m)?)?;
    Ok(())
}
