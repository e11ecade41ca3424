//! Python module `dstfs_py`: sparse networks, importance scores, synthetic data,
//! evaluation helpers and the cost model. Matrices travel as lists of rows.

use std::collections::BTreeMap;
use std::path::Path;

use dstfs::cli::{cmd_select, ConfigFile};
use dstfs::data::{self, Dataset, SyntheticConfig};
use dstfs::dst::Strategy;
use dstfs::eval::{self, AccuracyRecord};
use dstfs::flops::{self, FlopsRequest};
use dstfs::importance::{self, AccumulationMode};
use dstfs::net::{self, Activation};
use dstfs::pipeline::{self, Baseline, ExperimentConfig};
use ndarray::Array2;
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: dstfs::Error) -> PyErr {
    match e {
        dstfs::Error::Numeric(_) => PyRuntimeError::new_err(e.to_string()),
        dstfs::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Array2<f64>> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(PyValueError::new_err("rows must all have the same length"));
    }
    Array2::from_shape_vec((n, d), rows.into_iter().flatten().collect())
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

fn rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Sparse multilayer perceptron with ReLU hidden layers.
#[pyclass(name = "Network", module = "dstfs_py")]
struct PyNetwork {
    inner: net::Network,
}

#[pymethods]
impl PyNetwork {
    #[new]
    #[pyo3(signature = (n_features, n_classes, sparsity=0.0, seed=0, hidden=None))]
    fn new(
        n_features: usize,
        n_classes: usize,
        sparsity: f64,
        seed: u64,
        hidden: Option<Vec<usize>>,
    ) -> PyResult<Self> {
        let hidden = hidden.unwrap_or_else(|| net::DEFAULT_HIDDEN.to_vec());
        let inner = net::Network::with_hidden(
            n_features,
            &hidden,
            n_classes,
            sparsity,
            Activation::Relu,
            seed,
        )
        .map_err(py_err)?;
        Ok(PyNetwork { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let (inner, _) = net::load_checkpoint(Path::new(path)).map_err(py_err)?;
        Ok(PyNetwork { inner })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        net::save_checkpoint(&self.inner, serde_json::Value::Null, Path::new(path)).map_err(py_err)
    }

    #[getter]
    fn shape(&self) -> Vec<usize> {
        self.inner.shape()
    }

    #[getter]
    fn nnz(&self) -> usize {
        self.inner.nnz()
    }

    /// Active weights per layer.
    fn layer_nnz(&self) -> Vec<usize> {
        self.inner.layers().iter().map(|l| l.nnz()).collect()
    }

    fn logits(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let x = matrix(x)?;
        Ok(rows(&self.inner.forward(x.view()).map_err(py_err)?.logits))
    }

    fn predict_proba(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let x = matrix(x)?;
        Ok(rows(
            &self.inner.forward(x.view()).map_err(py_err)?.probabilities,
        ))
    }

    fn predict(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<usize>> {
        let x = matrix(x)?;
        self.inner.predict(x.view()).map_err(py_err)
    }

    /// Sum of absolute first-layer weights per input feature.
    fn strength(&self) -> Vec<f64> {
        importance::neuron_strength(&self.inner)
    }

    /// Batch mean of `|d logit_i / d x_j|` as a classes-by-features matrix.
    fn attribution(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let x = matrix(x)?;
        Ok(rows(
            &importance::attribution(&self.inner, x.view())
                .map_err(py_err)?
                .values,
        ))
    }

    fn __repr__(&self) -> String {
        format!(
            "Network(shape={:?}, nnz={})",
            self.inner.shape(),
            self.inner.nnz()
        )
    }
}

type Synthetic = (Vec<Vec<f64>>, Vec<usize>, Vec<usize>);

/// Balanced binary data; returns `(x, y, informative)`.
#[pyfunction]
#[pyo3(signature = (n_samples, n_features=200, n_informative=100, seed=0))]
fn generate_synthetic(
    n_samples: usize,
    n_features: usize,
    n_informative: usize,
    seed: u64,
) -> PyResult<Synthetic> {
    let ds = data::generate_synthetic(&SyntheticConfig {
        n_samples,
        n_features,
        n_informative,
        seed,
    })
    .map_err(py_err)?;
    Ok((rows(&ds.x), ds.y, ds.informative.unwrap_or_default()))
}

/// Trains one network on `(x, y)` (split and standardized internally) and returns the
/// accumulated per-feature importance.
#[pyfunction]
#[pyo3(signature = (x, y, baseline="SET-Attr", sparsity=0.9, l2=1e-4, max_epochs=10, patience=5, seed=0, mode="all_epochs", hidden=None, split_seed=0))]
#[allow(clippy::too_many_arguments)]
fn train_importance(
    x: Vec<Vec<f64>>,
    y: Vec<usize>,
    baseline: &str,
    sparsity: f64,
    l2: f64,
    max_epochs: usize,
    patience: usize,
    seed: u64,
    mode: &str,
    hidden: Option<Vec<usize>>,
    split_seed: u64,
) -> PyResult<Vec<f64>> {
    let ds = prepared(x, y, split_seed)?;
    let baseline: Baseline = baseline.parse().map_err(py_err)?;
    let mut cfg = ExperimentConfig::new(baseline, 1);
    cfg.max_epochs = max_epochs;
    cfg.patience = patience;
    cfg.mode = mode.parse().map_err(py_err)?;
    if let Some(h) = hidden {
        cfg.hidden = h;
    }
    let sparsity = if baseline.method == pipeline::Method::Dense {
        0.0
    } else {
        sparsity
    };
    let train = cfg.train_config(ds.n_samples(), l2);
    let dst_cfg = cfg.dst_config(sparsity);
    let net = pipeline::init_network(&ds, &train, &dst_cfg, seed).map_err(py_err)?;
    let out = pipeline::train_with_importance(
        net,
        &ds,
        &train,
        &dst_cfg,
        baseline.metric,
        cfg.mode,
        seed,
    )
    .map_err(py_err)?;
    Ok(out.accumulator.scores())
}

fn prepared(x: Vec<Vec<f64>>, y: Vec<usize>, split_seed: u64) -> PyResult<Dataset> {
    let ds = Dataset::new(matrix(x)?, y).map_err(py_err)?;
    pipeline::prepare_dataset(ds, split_seed).map_err(py_err)
}

/// Runs the `select` command from a TOML configuration string; returns a summary dict.
#[pyfunction]
#[pyo3(signature = (config, out_dir, overrides=Vec::new()))]
fn select(
    config: &str,
    out_dir: &str,
    overrides: Vec<String>,
) -> PyResult<BTreeMap<String, Py<PyAny>>> {
    let cfg = ConfigFile::parse(config, &overrides).map_err(py_err)?;
    let result = cmd_select(&cfg, Path::new(out_dir)).map_err(py_err)?;
    Python::attach(|py| {
        let mut out = BTreeMap::new();
        out.insert(
            "baseline".into(),
            result
                .baseline
                .clone()
                .into_pyobject(py)?
                .into_any()
                .unbind(),
        );
        out.insert(
            "chosen_sparsity".into(),
            result
                .chosen_sparsity
                .into_pyobject(py)?
                .into_any()
                .unbind(),
        );
        out.insert(
            "chosen_l2".into(),
            result.chosen_l2.into_pyobject(py)?.into_any().unbind(),
        );
        out.insert(
            "accuracy_mean".into(),
            result.accuracy.mean.into_pyobject(py)?.into_any().unbind(),
        );
        out.insert(
            "accuracy_std".into(),
            result.accuracy.std.into_pyobject(py)?.into_any().unbind(),
        );
        out.insert(
            "selected".into(),
            result.runs[0]
                .selected
                .clone()
                .into_pyobject(py)?
                .into_any()
                .unbind(),
        );
        Ok(out)
    })
}

#[pyfunction]
fn select_top_k(scores: Vec<f64>, k: usize) -> PyResult<Vec<usize>> {
    importance::select_top_k(&scores, k).map_err(py_err)
}

#[pyfunction]
fn coverage(selected: Vec<usize>, informative: Vec<usize>) -> PyResult<f64> {
    eval::coverage(&selected, &informative).map_err(py_err)
}

/// Downstream linear-classifier accuracy of a feature subset.
#[pyfunction]
#[pyo3(signature = (x, y, features, seed=0, split_seed=0))]
fn evaluate_subset(
    x: Vec<Vec<f64>>,
    y: Vec<usize>,
    features: Vec<usize>,
    seed: u64,
    split_seed: u64,
) -> PyResult<f64> {
    let ds = prepared(x, y, split_seed)?;
    eval::evaluate_subset(&ds, &features, &eval::EvalConfig::default(), seed).map_err(py_err)
}

/// `records`: `(method, experiment, accuracy)` triples. Returns `(method, score)` pairs.
#[pyfunction]
fn average_ranking(records: Vec<(String, String, f64)>) -> PyResult<Vec<(String, f64)>> {
    let records: Vec<AccuracyRecord> = records
        .into_iter()
        .map(|(method, experiment, accuracy)| AccuracyRecord {
            method,
            experiment,
            accuracy,
        })
        .collect();
    eval::average_ranking(&records).map_err(py_err)
}

/// Training cost under the documented convention, as a dict of counts.
#[pyfunction]
#[pyo3(signature = (shape, sparsity, epochs, samples, strategy="set", grad_batch_size=100))]
fn estimate_flops(
    shape: Vec<usize>,
    sparsity: f64,
    epochs: usize,
    samples: usize,
    strategy: &str,
    grad_batch_size: usize,
) -> PyResult<BTreeMap<String, u64>> {
    let strategy = match strategy.to_ascii_lowercase().as_str() {
        "set" => Strategy::Set,
        "rigl" => Strategy::RigL,
        "none" | "dense" => Strategy::None,
        other => return Err(PyValueError::new_err(format!("unknown strategy {other:?}"))),
    };
    let r = flops::estimate_flops(&FlopsRequest {
        shape,
        sparsity,
        epochs_run: epochs,
        samples_per_epoch: samples,
        strategy,
        grad_batch_size,
    })
    .map_err(py_err)?;
    Ok(BTreeMap::from([
        ("forward_per_sample".to_string(), r.forward_per_sample),
        ("backward_per_sample".to_string(), r.backward_per_sample),
        ("train_total".to_string(), r.train_total),
        ("dst_overhead".to_string(), r.dst_overhead),
        ("attribution_total".to_string(), r.attribution_total),
    ]))
}

#[pyfunction]
fn accumulation_modes() -> Vec<&'static str> {
    AccumulationMode::ALL.iter().map(|m| m.name()).collect()
}

#[pymodule]
fn dstfs_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyNetwork>()?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(train_importance, m)?)?;
    m.add_function(wrap_pyfunction!(select, m)?)?;
    m.add_function(wrap_pyfunction!(select_top_k, m)?)?;
    m.add_function(wrap_pyfunction!(coverage, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_subset, m)?)?;
    m.add_function(wrap_pyfunction!(average_ranking, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_flops, m)?)?;
    m.add_function(wrap_pyfunction!(accumulation_modes, m)?)?;
    m.add("FLOPS_CONVENTION", flops::CONVENTION)?;
    Ok(())
}
