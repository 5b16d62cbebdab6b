//! Python bindings for `ddmp`.
//!
//! Matrices cross the boundary as lists of rows and candidate sets as lists
//! of class indices. Features are used as given; standardize them first if
//! the training data was standardized.

use std::collections::HashMap;
use std::path::PathBuf;

use ddmp::data::{make_blobs as blobs, partialize as make_partial, PartialDataset};
use ddmp::diffusion::{self, DiffusionSchedule, NoisedLabel};
use ddmp::disambig::{self, candidate_mask};
use ddmp::eval;
use ddmp::pipeline::{self, TrainConfig, TrainedModel};
use ddmp::{Error, Matrix};
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(err: Error) -> PyErr {
    match err {
        Error::Io { .. } => PyIOError::new_err(err.to_string()),
        Error::Config { .. } | Error::Data(_) | Error::Shape { .. } | Error::Parse { .. } => {
            PyValueError::new_err(err.to_string())
        }
        Error::NonFinite { .. } | Error::Numeric(_) => PyRuntimeError::new_err(err.to_string()),
    }
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<Matrix> {
    if rows.is_empty() {
        return Err(PyValueError::new_err("matrix needs at least one row"));
    }
    Matrix::from_rows(rows).map_err(to_py)
}

fn config(overrides: Option<HashMap<String, String>>) -> PyResult<TrainConfig> {
    let mut cfg = TrainConfig::default();
    for (k, v) in overrides.unwrap_or_default() {
        cfg.apply_kv(&k, &v).map_err(to_py)?;
    }
    cfg.validate().map_err(to_py)?;
    Ok(cfg)
}

/// Linear β schedule with cumulative products and posterior coefficients.
#[pyclass(frozen)]
struct Schedule {
    inner: DiffusionSchedule,
}

#[pymethods]
impl Schedule {
    #[new]
    #[pyo3(signature = (steps = 1000, beta_start = 1e-4, beta_end = 0.02))]
    fn new(steps: usize, beta_start: f64, beta_end: f64) -> PyResult<Self> {
        Ok(Self { inner: DiffusionSchedule::linear(steps, beta_start, beta_end).map_err(to_py)? })
    }

    #[getter]
    fn steps(&self) -> usize {
        self.inner.steps()
    }

    fn beta(&self, t: usize) -> PyResult<f64> {
        self.inner.check_t(t).map_err(to_py)?;
        Ok(self.inner.beta(t))
    }

    fn alpha_bar(&self, t: usize) -> PyResult<f64> {
        if t > self.inner.steps() {
            return Err(PyValueError::new_err(format!("t={t} exceeds {}", self.inner.steps())));
        }
        Ok(self.inner.alpha_bar(t))
    }

    /// `(gamma0, gamma1, gamma2, variance)` of the one-step posterior.
    fn posterior(&self, t: usize) -> PyResult<(f64, f64, f64, f64)> {
        let c = self.inner.posterior(t).map_err(to_py)?;
        Ok((c.gamma0, c.gamma1, c.gamma2, c.variance))
    }

    /// Closed-form sample of `S_t` from `s0` for the given standard noise.
    fn forward(&self, s0: Vec<f64>, prior: Vec<f64>, t: usize, noise: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(diffusion::forward_sample(&s0, &prior, t, &noise, &self.inner).map_err(to_py)?.value)
    }

    fn predict_s0(&self, st: Vec<f64>, t: usize, prior: Vec<f64>, eps: Vec<f64>) -> PyResult<Vec<f64>> {
        diffusion::predict_s0(&NoisedLabel { t, value: st }, &prior, &eps, &self.inner).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("Schedule(steps={})", self.inner.steps())
    }
}

#[pyfunction]
fn make_trajectory(steps: usize, length: usize) -> PyResult<Vec<usize>> {
    diffusion::make_trajectory(steps, length).map_err(to_py)
}

#[pyfunction]
fn jaccard(a: Vec<usize>, b: Vec<usize>) -> f64 {
    disambig::jaccard(&a, &b)
}

/// Symmetric k-nearest-neighbour lists.
#[pyfunction]
fn knn(features: Vec<Vec<f64>>, k: usize) -> PyResult<Vec<Vec<usize>>> {
    let adj = disambig::knn_adjacency(&matrix(&features)?, k).map_err(to_py)?;
    Ok((0..adj.len()).map(|i| adj.neighbors(i).to_vec()).collect())
}

/// Graph-based initial pseudo-clean labels.
#[pyfunction]
#[pyo3(signature = (features, candidates, classes, k = 10))]
fn initial_labels(features: Vec<Vec<f64>>, candidates: Vec<Vec<usize>>, classes: usize, k: usize) -> PyResult<Vec<Vec<f64>>> {
    let adj = disambig::knn_adjacency(&matrix(&features)?, k).map_err(to_py)?;
    Ok(disambig::init_pseudo_clean_sparse(&adj, &candidates, classes).map_err(to_py)?.to_rows())
}

#[pyfunction]
fn estimate_transition(labels: Vec<Vec<f64>>, candidates: Vec<Vec<usize>>, classes: usize) -> PyResult<Vec<Vec<f64>>> {
    let mask = candidate_mask(&candidates, classes).map_err(to_py)?;
    Ok(disambig::estimate_transition(&matrix(&labels)?, &mask).map_err(to_py)?.to_rows())
}

/// Gaussian blobs: `(features, labels)`.
#[pyfunction]
#[pyo3(signature = (n, classes, dim, separation = 6.0, seed = 0))]
fn make_blobs(n: usize, classes: usize, dim: usize, separation: f64, seed: u64) -> PyResult<(Vec<Vec<f64>>, Vec<usize>)> {
    let clean = blobs(n, classes, dim, separation, seed).map_err(to_py)?;
    Ok((clean.features.to_rows(), clean.labels))
}

/// Candidate sets holding the true label plus each other label with probability `q`.
#[pyfunction]
#[pyo3(signature = (labels, classes, q, seed = 0))]
fn partialize(labels: Vec<usize>, classes: usize, q: f64, seed: u64) -> PyResult<Vec<Vec<usize>>> {
    let clean = ddmp::data::CleanDataset { features: Matrix::zeros(labels.len(), 1), labels, classes };
    Ok(make_partial(&clean, q, seed).map_err(to_py)?.candidates)
}

#[pyfunction]
fn accuracy(predictions: Vec<usize>, truth: Vec<usize>) -> PyResult<f64> {
    eval::accuracy(&predictions, &truth).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (probs, truth, n_bins = 10))]
fn ece(probs: Vec<Vec<f64>>, truth: Vec<usize>, n_bins: usize) -> PyResult<f64> {
    Ok(eval::ece(&matrix(&probs)?, &truth, n_bins).map_err(to_py)?.0)
}

/// A trained noise model with its frozen prior and final label state.
#[pyclass(frozen)]
struct Model {
    inner: TrainedModel,
}

#[pymethods]
impl Model {
    /// `(probabilities, predictions)` averaged over `n_draws` reverse samples.
    #[pyo3(signature = (features, n_draws = None))]
    fn predict(&self, py: Python<'_>, features: Vec<Vec<f64>>, n_draws: Option<usize>) -> PyResult<(Vec<Vec<f64>>, Vec<usize>)> {
        let x = matrix(&features)?;
        let t = &self.inner;
        let draws = n_draws.unwrap_or(t.config.n_draws);
        let out = py.detach(|| pipeline::infer_labels(&t.model, &t.encoder, &x, &t.config, draws)).map_err(to_py)?;
        Ok((out.probs.to_rows(), out.predictions))
    }

    /// Prior network output for `features`.
    fn prior(&self, features: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        Ok(self.inner.encoder.prior(&matrix(&features)?).map_err(to_py)?.to_rows())
    }

    #[getter]
    fn pseudo_labels(&self) -> Vec<Vec<f64>> {
        self.inner.state.s.to_rows()
    }

    #[getter]
    fn transition(&self) -> Vec<Vec<f64>> {
        self.inner.state.transition.to_rows()
    }

    /// `(epoch, loss, train_accuracy, transition_drift)` per epoch.
    #[getter]
    fn log(&self) -> Vec<(usize, f64, Option<f64>, f64)> {
        self.inner.log.iter().map(|e| (e.epoch, e.loss, e.train_acc, e.t_drift)).collect()
    }

    #[getter]
    fn config(&self) -> std::collections::BTreeMap<String, String> {
        self.inner.config.to_map()
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(to_py)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: TrainedModel::load(&path).map_err(to_py)? })
    }
}

/// Pretrains the prior and trains the noise model. `config` maps option
/// names (as accepted by the CLI, without dashes) to string values.
#[pyfunction]
#[pyo3(signature = (features, candidates, classes, config = None, truth = None))]
fn train(
    py: Python<'_>,
    features: Vec<Vec<f64>>,
    candidates: Vec<Vec<usize>>,
    classes: usize,
    config: Option<HashMap<String, String>>,
    truth: Option<Vec<usize>>,
) -> PyResult<Model> {
    let cfg = self::config(config)?;
    let data = PartialDataset::new(matrix(&features)?, candidates, truth, classes).map_err(to_py)?;
    let inner = py.detach(|| pipeline::train(&data, &cfg)).map_err(to_py)?;
    Ok(Model { inner })
}

#[pymodule]
fn pyddmp(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Schedule>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(make_trajectory, m)?)?;
    m.add_function(wrap_pyfunction!(jaccard, m)?)?;
    m.add_function(wrap_pyfunction!(knn, m)?)?;
    m.add_function(wrap_pyfunction!(initial_labels, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_transition, m)?)?;
    m.add_function(wrap_pyfunction!(make_blobs, m)?)?;
    m.add_function(wrap_pyfunction!(partialize, m)?)?;
    m.add_function(wrap_pyfunction!(accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(ece, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    Ok(())
}
