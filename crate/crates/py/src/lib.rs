//! Python bindings: the `pyspn` extension module.

use pyo3::create_exception;
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use spn_core::inference::{evaluate_partition, log_likelihood, log_probability};
use spn_core::io::{self, GeneratorConfig};
use spn_core::learn::{self, normalize_locally};
use spn_core::mixture::{self, cardinality};
use spn_core::{Algorithm, Dataset, IoError, LearnError, LearnerConfig, SpnGraph, TrainRun, WeightVector};

create_exception!(pyspn, ZeroProbabilityError, PyValueError, "A training instance has zero probability.");

fn io_err(e: IoError) -> PyErr {
    match e {
        IoError::Read { .. } | IoError::Write { .. } => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn learn_err(e: LearnError) -> PyErr {
    match e {
        LearnError::ZeroProbabilityInstance { .. } => ZeroProbabilityError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// A validated network together with its sum-edge weights.
#[pyclass(name = "Spn", module = "pyspn", frozen)]
struct PySpn {
    graph: SpnGraph,
    weights: WeightVector,
}

impl PySpn {
    fn dataset(&self, rows: Vec<Vec<u8>>) -> PyResult<Dataset> {
        Dataset::from_rows(self.graph.num_vars(), &rows).map_err(io_err)
    }

    fn with_weights(&self, weights: WeightVector) -> PySpn {
        PySpn { graph: self.graph.clone(), weights }
    }
}

fn run_dict<'py>(py: Python<'py>, run: &TrainRun) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("algorithm", run.algorithm.name())?;
    d.set_item("ll_curve", run.ll_curve.clone())?;
    d.set_item("gammas", run.gammas.clone())?;
    d.set_item("iterations", run.iters_used)?;
    d.set_item("stop_reason", run.stop_reason.to_string())?;
    d.set_item("final_weights", run.final_w.as_slice().to_vec())?;
    d.set_item("wall_time", run.wall_time)?;
    Ok(d)
}

#[pymethods]
impl PySpn {
    /// Parses the text model format.
    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        let (graph, weights) = io::parse_spn(text).map_err(io_err)?;
        Ok(PySpn { graph, weights })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let (graph, weights) = io::load_spn(path).map_err(io_err)?;
        Ok(PySpn { graph, weights })
    }

    /// Random layered structure with seeded, locally normalized weights.
    #[staticmethod]
    #[pyo3(signature = (num_vars, depth = 2, sum_fanout = 2, prod_fanout = 2, seed = 0))]
    fn generate(num_vars: usize, depth: usize, sum_fanout: usize, prod_fanout: usize, seed: u64) -> PyResult<Self> {
        if num_vars == 0 || sum_fanout == 0 || prod_fanout == 0 {
            return Err(PyValueError::new_err("num_vars and fan-outs must be at least 1"));
        }
        let graph = io::generate_random_spn(GeneratorConfig { num_vars, depth, sum_fanout, prod_fanout, seed });
        let weights = normalize_locally(&graph, &learn::initial_weights(&graph, seed)).map_err(learn_err)?;
        Ok(PySpn { graph, weights })
    }

    fn to_text(&self) -> String {
        io::serialize_spn(&self.graph, &self.weights)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        io::save_spn(&self.graph, &self.weights, path).map_err(io_err)
    }

    #[getter]
    fn num_vars(&self) -> usize {
        self.graph.num_vars()
    }

    #[getter]
    fn num_nodes(&self) -> usize {
        self.graph.num_nodes()
    }

    #[getter]
    fn num_edges(&self) -> usize {
        self.graph.num_edges()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.weights.as_slice().to_vec()
    }

    /// Copy of this network with different weights.
    fn with_weights_list(&self, weights: Vec<f64>) -> PyResult<Self> {
        if weights.len() != self.graph.num_edges() {
            return Err(PyValueError::new_err(format!(
                "expected {} weights, got {}",
                self.graph.num_edges(),
                weights.len()
            )));
        }
        Ok(self.with_weights(WeightVector::new(weights).map_err(value_err)?))
    }

    /// Violation messages; empty when the structure is valid.
    fn validate(&self) -> Vec<String> {
        self.graph.validate().violations.iter().map(|v| v.to_string()).collect()
    }

    /// `log Pr(x)` for a query such as `"1,0,*"`, where `*` marginalizes.
    fn log_prob(&self, query: &str) -> PyResult<f64> {
        let x = io::parse_query(query, self.graph.num_vars()).map_err(io_err)?;
        log_probability(&self.graph, &self.weights, &x).map_err(value_err)
    }

    fn log_partition(&self) -> PyResult<f64> {
        evaluate_partition(&self.graph, &self.weights).map_err(value_err)
    }

    /// Total log-likelihood of 0/1 rows.
    fn log_likelihood(&self, rows: Vec<Vec<u8>>) -> PyResult<f64> {
        log_likelihood(&self.graph, &self.weights, &self.dataset(rows)?).map_err(value_err)
    }

    /// Exact number of induced trees.
    fn cardinality<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let digits = cardinality(&self.graph).exact.to_string();
        py.import("builtins")?.getattr("int")?.call1((digits,))
    }

    /// Natural log of the number of induced trees.
    fn log_cardinality(&self) -> f64 {
        cardinality(&self.graph).log_approx
    }

    /// Sorted sum-edge indices of every induced tree, refusing above `limit`.
    #[pyo3(signature = (limit = 100_000))]
    fn induced_trees(&self, limit: u64) -> PyResult<Vec<Vec<usize>>> {
        let trees = mixture::enumerate_trees(&self.graph, limit).map_err(value_err)?;
        Ok(trees.map(|t| t.sum_edges).collect())
    }

    /// `(g1, g2)`: data and partition terms of the log-likelihood gradient.
    fn gradient(&self, rows: Vec<Vec<u8>>) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let g = learn::gradient(&self.graph, &self.weights, &self.dataset(rows)?).map_err(learn_err)?;
        Ok((g.g1, g.g2))
    }

    fn normalize(&self) -> PyResult<Self> {
        Ok(self.with_weights(normalize_locally(&self.graph, &self.weights).map_err(learn_err)?))
    }

    #[pyo3(signature = (rows, smoothing = 1e-3))]
    fn cccp_step(&self, rows: Vec<Vec<u8>>, smoothing: f64) -> PyResult<Self> {
        let w = learn::cccp_step(&self.graph, &self.weights, &self.dataset(rows)?, smoothing).map_err(learn_err)?;
        Ok(self.with_weights(w))
    }

    /// Trains from seeded random weights, or from this network's weights
    /// when `warm_start` is true. Returns the run as a dict.
    #[pyo3(signature = (rows, algo = "cccp", max_iters = 50, tol = 1e-3, step = 1.0, shrink = 0.8, margin = 0.01, smoothing = 1e-3, seed = 0, warm_start = false))]
    #[allow(clippy::too_many_arguments)]
    fn train<'py>(
        &self,
        py: Python<'py>,
        rows: Vec<Vec<u8>>,
        algo: &str,
        max_iters: usize,
        tol: f64,
        step: f64,
        shrink: f64,
        margin: f64,
        smoothing: f64,
        seed: u64,
        warm_start: bool,
    ) -> PyResult<Bound<'py, PyDict>> {
        let algorithm: Algorithm = algo.parse().map_err(learn_err)?;
        let config = LearnerConfig {
            algorithm,
            max_iters,
            stop_tol: tol,
            init_step: step,
            shrink,
            proj_margin: margin,
            smoothing,
            seed,
        };
        let data = self.dataset(rows)?;
        let run = if warm_start {
            learn::train_from(&self.graph, &data, &config, self.weights.clone())
        } else {
            learn::train(&self.graph, &data, &config)
        }
        .map_err(learn_err)?;
        run_dict(py, &run)
    }

    /// All four algorithms from the same seeded start, keyed by name.
    #[pyo3(signature = (rows, seed = 0))]
    fn compare<'py>(&self, py: Python<'py>, rows: Vec<Vec<u8>>, seed: u64) -> PyResult<Bound<'py, PyDict>> {
        let config = LearnerConfig { seed, ..LearnerConfig::default() };
        let runs = learn::compare(&self.graph, &self.dataset(rows)?, &config).map_err(learn_err)?;
        let out = PyDict::new(py);
        for run in &runs {
            out.set_item(run.algorithm.name(), run_dict(py, run)?)?;
        }
        Ok(out)
    }

    fn __repr__(&self) -> String {
        format!(
            "Spn(num_vars={}, num_nodes={}, num_edges={})",
            self.graph.num_vars(),
            self.graph.num_nodes(),
            self.graph.num_edges()
        )
    }
}

/// Reads comma-separated 0/1 rows.
#[pyfunction]
fn load_dataset(path: &str) -> PyResult<Vec<Vec<u32>>> {
    let data = io::load_dataset(path).map_err(io_err)?;
    // u32 rather than u8: a Vec<u8> would arrive in Python as bytes.
    Ok(data.rows().map(|r| r.iter().map(|&b| u32::from(b)).collect()).collect())
}

/// Violation messages for a model file's text; empty when valid.
#[pyfunction]
fn validate_text(text: &str) -> PyResult<Vec<String>> {
    match io::parse_spn(text) {
        Ok(_) => Ok(Vec::new()),
        Err(IoError::Invalid { report, .. }) => Ok(report.violations.iter().map(|v| v.to_string()).collect()),
        Err(e) => Err(io_err(e)),
    }
}

#[pymodule]
pub fn pyspn(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySpn>()?;
    m.add_function(wrap_pyfunction!(load_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(validate_text, m)?)?;
    m.add("ZeroProbabilityError", m.py().get_type::<ZeroProbabilityError>())?;
    Ok(())
}
