//! Python module `adgan`: synthetic data, training, evaluation and
//! checkpoints of the core crate.

use std::path::PathBuf;

use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use adgan_core::adgan::ParameterSet;
use adgan_core::dataset::{prepare, PreparedData};
use adgan_core::diffnet::Matrix;
use adgan_core::evalmetrics::{compute_metrics, ConfusionMatrix, MetricsReport};
use adgan_core::experiment::{baseline, evaluate};
use adgan_core::features::{read_labels, read_surveys, read_transactions, CategoryScheme};
use adgan_core::synthgen::{default_desk_preset, generate};
use adgan_core::trainer::{self, checkpoint_load, checkpoint_save, TrainConfig, TrainLog};
use adgan_core::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::NonFinite(_) => PyArithmeticError::new_err(e.to_string()),
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn metrics_dict<'py>(py: Python<'py>, m: &MetricsReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("per_class_f1", m.per_class_f1.to_vec())?;
    d.set_item("macro_precision", m.macro_precision)?;
    d.set_item("macro_recall", m.macro_recall)?;
    d.set_item("macro_f1", m.macro_f1)?;
    d.set_item("accuracy", m.accuracy)?;
    Ok(d)
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Matrix> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("ragged rows"));
    }
    let n = rows.len();
    Matrix::new(n, cols, rows.into_iter().flatten().collect()).map_err(to_py)
}

/// Training hyperparameters, built from a preset plus `key = value`
/// overrides using the config-file field names.
#[pyclass(name = "TrainConfig", from_py_object)]
#[derive(Clone)]
struct PyTrainConfig {
    inner: TrainConfig,
}

#[pymethods]
impl PyTrainConfig {
    #[new]
    #[pyo3(signature = (preset = "desk", **overrides))]
    fn new(preset: &str, overrides: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let mut inner = TrainConfig::preset(preset).map_err(to_py)?;
        if let Some(kw) = overrides {
            for (k, v) in kw.iter() {
                let key: String = k.extract()?;
                inner.apply(&key, &v.str()?.to_string()).map_err(to_py)?;
            }
        }
        inner.validate().map_err(to_py)?;
        Ok(PyTrainConfig { inner })
    }

    /// The config-file form.
    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    fn hash(&self) -> String {
        self.inner.hash()
    }

    #[getter]
    fn step(&self) -> usize {
        self.inner.step
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn strategy(&self) -> String {
        self.inner.strategy.to_string()
    }

    fn __repr__(&self) -> String {
        format!(
            "TrainConfig(step={}, strategy={}, seed={})",
            self.inner.step, self.inner.strategy, self.inner.seed
        )
    }
}

/// Prepared training and held-out data.
#[pyclass(name = "Dataset")]
struct PyDataset {
    inner: PreparedData,
}

#[pymethods]
impl PyDataset {
    /// Generates the desk-scale synthetic preset with optional generator
    /// overrides (`n_total`, `n_paired`, `signal_strength`, ...).
    #[staticmethod]
    #[pyo3(signature = (seed = 0, test_fraction = 0.3, split_seed = 0, **overrides))]
    fn synthetic(
        seed: u64,
        test_fraction: f64,
        split_seed: u64,
        overrides: Option<&Bound<'_, PyDict>>,
    ) -> PyResult<Self> {
        let mut config = default_desk_preset();
        config.seed = seed;
        if let Some(kw) = overrides {
            for (k, v) in kw.iter() {
                let key: String = k.extract()?;
                config.apply(&key, &v.str()?.to_string()).map_err(to_py)?;
            }
        }
        let d = generate(&config).map_err(to_py)?;
        let inner = prepare(
            &d.transactions,
            &d.surveys,
            &d.labels,
            &CategoryScheme::default(),
            test_fraction,
            split_seed,
        )
        .map_err(to_py)?;
        Ok(PyDataset { inner })
    }

    /// Reads `transactions.csv`, `surveys.csv` and `labels.csv` from `dir`.
    #[staticmethod]
    #[pyo3(signature = (dir, test_fraction = 0.3, split_seed = 0))]
    fn from_dir(dir: PathBuf, test_fraction: f64, split_seed: u64) -> PyResult<Self> {
        let tx = read_transactions(&dir.join("transactions.csv")).map_err(to_py)?;
        let surveys = read_surveys(&dir.join("surveys.csv")).map_err(to_py)?;
        let labels = read_labels(&dir.join("labels.csv")).map_err(to_py)?;
        let inner = prepare(
            &tx,
            &surveys,
            &labels,
            &CategoryScheme::default(),
            test_fraction,
            split_seed,
        )
        .map_err(to_py)?;
        Ok(PyDataset { inner })
    }

    #[getter]
    fn n_paired(&self) -> usize {
        self.inner.train.paired_labels.len()
    }

    #[getter]
    fn n_test(&self) -> usize {
        self.inner.test.labels.len()
    }

    #[getter]
    fn n_unpaired(&self) -> usize {
        self.inner.train.unpaired_labels.len()
    }

    /// Held-out consumer vectors, compressed surveys and labels.
    fn test_split(&self) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<usize>) {
        let t = &self.inner.test;
        let rows = |m: &Matrix| (0..m.rows()).map(|r| m.row(r).to_vec()).collect();
        (rows(&t.u), rows(&t.s), t.labels.clone())
    }

    /// Logistic-regression reference on the paired training consumers.
    fn baseline<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        metrics_dict(py, &baseline(&self.inner).map_err(to_py)?)
    }
}

/// Trained generator and discriminator weights.
#[pyclass(name = "Model")]
struct PyModel {
    params: ParameterSet,
}

fn log_rows<'py>(py: Python<'py>, log: &TrainLog) -> PyResult<Vec<Bound<'py, PyDict>>> {
    log.records
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("epoch", r.epoch)?;
            d.set_item("d_total", r.discriminator.total)?;
            d.set_item("d_gradient_penalty", r.discriminator.gradient_penalty_term)?;
            d.set_item("g_total", r.align.total)?;
            d.set_item("g_weight", r.align.weight)?;
            Ok(d)
        })
        .collect()
}

#[pymethods]
impl PyModel {
    /// Trains on `dataset`; returns the model and one dict per epoch.
    #[staticmethod]
    fn train<'py>(
        py: Python<'py>,
        dataset: &PyDataset,
        config: &PyTrainConfig,
    ) -> PyResult<(PyModel, Vec<Bound<'py, PyDict>>)> {
        let (params, log) = trainer::train(&dataset.inner.train, &config.inner).map_err(to_py)?;
        Ok((PyModel { params }, log_rows(py, &log)?))
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyModel {
            params: checkpoint_load(&path).map_err(to_py)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        checkpoint_save(&self.params, &path).map_err(to_py)
    }

    /// Predicted classes for rows of consumer vectors `u` and surveys `s`.
    fn predict(&self, u: Vec<Vec<f64>>, s: Vec<Vec<f64>>) -> PyResult<Vec<usize>> {
        trainer::predict(&self.params, &matrix(u)?, &matrix(s)?).map_err(to_py)
    }

    fn evaluate<'py>(&self, py: Python<'py>, dataset: &PyDataset) -> PyResult<Bound<'py, PyDict>> {
        metrics_dict(py, &evaluate(&self.params, &dataset.inner.test).map_err(to_py)?)
    }

    fn __eq__(&self, other: &PyModel) -> bool {
        self.params == other.params
    }
}

/// Per-class F1, macro precision/recall/F1 and accuracy.
#[pyfunction(name = "compute_metrics")]
fn py_compute_metrics<'py>(py: Python<'py>, truth: Vec<usize>, predicted: Vec<usize>) -> PyResult<Bound<'py, PyDict>> {
    let cm = ConfusionMatrix::from_predictions(&truth, &predicted).map_err(to_py)?;
    metrics_dict(py, &compute_metrics(&cm).map_err(to_py)?)
}

#[pymodule]
fn adgan(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTrainConfig>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(py_compute_metrics, m)?)?;
    Ok(())
}
