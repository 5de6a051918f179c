use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use arc_core as core;

fn to_py(e: core::Error) -> PyErr {
    match e {
        core::Error::Io(io) => PyIOError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn thresholds(beta: f64, gamma: f64) -> PyResult<core::Thresholds> {
    core::Thresholds::new(beta, gamma).map_err(to_py)
}

fn parse<T: std::str::FromStr<Err = String>>(s: &str) -> PyResult<T> {
    s.parse().map_err(PyValueError::new_err)
}

/// Expandable linear classification head.
#[pyclass(name = "LinearHead", module = "arc_cl", skip_from_py_object)]
#[derive(Clone)]
struct PyLinearHead {
    inner: core::LinearHead,
}

#[pymethods]
impl PyLinearHead {
    #[new]
    fn new(dim: usize, step: usize) -> PyResult<Self> {
        Ok(Self {
            inner: core::LinearHead::new(dim, step).map_err(to_py)?,
        })
    }

    /// Builds a head from row-major weights of shape `(step * tasks, dim)`.
    #[staticmethod]
    fn from_parts(
        dim: usize,
        step: usize,
        visible_tasks: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> PyResult<Self> {
        Ok(Self {
            inner: core::LinearHead::from_parts(dim, step, visible_tasks, weights, bias)
                .map_err(to_py)?,
        })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn step(&self) -> usize {
        self.inner.step()
    }

    #[getter]
    fn visible_tasks(&self) -> usize {
        self.inner.visible_tasks()
    }

    #[getter]
    fn classes(&self) -> usize {
        self.inner.classes()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights().to_vec()
    }

    #[getter]
    fn bias(&self) -> Vec<f64> {
        self.inner.bias().to_vec()
    }

    fn forward(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.forward(&x).map_err(to_py)
    }

    /// Returns a copy with one more task's zero rows.
    fn expanded(&self, num_tasks: usize) -> PyResult<Self> {
        let layout = core::TaskLayout::new(num_tasks, self.inner.step()).map_err(to_py)?;
        Ok(Self {
            inner: self.inner.expanded(&layout).map_err(to_py)?,
        })
    }

    fn sgd_step(&self, weight_grad: Vec<f64>, bias_grad: Vec<f64>, lr: f64) -> PyResult<Self> {
        let grad = core::HeadGradient {
            weights: weight_grad,
            bias: bias_grad,
        };
        Ok(Self {
            inner: self.inner.sgd_step(&grad, lr).map_err(to_py)?,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "LinearHead(dim={}, step={}, visible_tasks={})",
            self.inner.dim(),
            self.inner.step(),
            self.inner.visible_tasks()
        )
    }
}

/// Class-incremental stream of labeled feature vectors.
#[pyclass(name = "TaskStream", module = "arc_cl", skip_from_py_object)]
#[derive(Clone)]
struct PyTaskStream {
    inner: core::TaskStream,
}

#[pymethods]
impl PyTaskStream {
    #[getter]
    fn num_tasks(&self) -> usize {
        self.inner.num_tasks()
    }

    #[getter]
    fn step(&self) -> usize {
        self.inner.layout().step()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn num_examples(&self) -> usize {
        self.inner.num_examples()
    }

    /// `(features, labels)` of one split of task `task` (1-based).
    #[pyo3(signature = (task, split = "train"))]
    fn split(&self, task: usize, split: &str) -> PyResult<(Vec<Vec<f64>>, Vec<usize>)> {
        if task == 0 || task > self.inner.num_tasks() {
            return Err(PyValueError::new_err(format!("task {task} out of range")));
        }
        let data = self.inner.task(task);
        let examples = match split {
            "train" => &data.train,
            "test" => &data.test,
            other => return Err(PyValueError::new_err(format!("unknown split `{other}`"))),
        };
        Ok((
            examples.iter().map(|e| e.feature.clone()).collect(),
            examples.iter().map(|e| e.label).collect(),
        ))
    }

    fn write(&self, path: &str) -> PyResult<()> {
        core::write_embeddings(&self.inner, path).map_err(to_py)
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }
}

#[pyfunction]
fn softmax(z: Vec<f64>) -> PyResult<Vec<f64>> {
    core::softmax(&z).map_err(to_py)
}

#[pyfunction]
fn cross_entropy(p: Vec<f64>, label: usize) -> PyResult<f64> {
    core::cross_entropy(&p, label).map_err(to_py)
}

#[pyfunction]
fn entropy(p: Vec<f64>) -> f64 {
    core::entropy(&p)
}

/// `(weight_grad, bias_grad, loss)` of cross-entropy plus entropy at `x`.
#[pyfunction]
#[pyo3(signature = (head, x, label, loss = "both"))]
fn retention_gradient(
    head: &PyLinearHead,
    x: Vec<f64>,
    label: usize,
    loss: &str,
) -> PyResult<(Vec<f64>, Vec<f64>, f64)> {
    let (g, l) = core::loss_gradient(&head.inner, &x, label, parse(loss)?).map_err(to_py)?;
    Ok((g.weights, g.bias, l))
}

/// `(predicted_class, max_softmax)`.
#[pyfunction]
fn confidence(z: Vec<f64>) -> PyResult<(usize, f64)> {
    core::confidence(&z).map_err(to_py)
}

#[pyfunction]
fn masked_confidence(z: Vec<f64>, t: usize, s: usize) -> PyResult<f64> {
    core::masked_confidence(&z, t, s).map_err(to_py)
}

/// `(decision, predicted_class, c, c_hat, w)`.
#[pyfunction]
#[pyo3(signature = (z, t, s, beta = 0.8, gamma = 0.8, w_mode = "ratio"))]
fn classify_sample(
    z: Vec<f64>,
    t: usize,
    s: usize,
    beta: f64,
    gamma: f64,
    w_mode: &str,
) -> PyResult<(String, usize, f64, Option<f64>, Option<f64>)> {
    let (d, r) = core::classify_sample_with(&z, t, s, &thresholds(beta, gamma)?, parse(w_mode)?)
        .map_err(to_py)?;
    Ok((d.as_str().to_string(), r.predicted_class, r.c, r.c_hat, r.w))
}

#[pyfunction]
#[pyo3(signature = (z, t, s, temperature = 2.0))]
fn tss(z: Vec<f64>, t: usize, s: usize, temperature: f64) -> PyResult<Vec<f64>> {
    Ok(core::tss(&z, t, s, temperature).map_err(to_py)?.0)
}

/// `(task, class, scores)`, task 1-based.
#[pyfunction]
#[pyo3(signature = (z, t, s, temperature = 2.0))]
fn adaptive_correction(
    z: Vec<f64>,
    t: usize,
    s: usize,
    temperature: f64,
) -> PyResult<(usize, usize, Vec<f64>)> {
    let (task, class, scores) = core::adaptive_correction(&z, t, s, temperature).map_err(to_py)?;
    Ok((task, class, scores.0))
}

#[pyfunction]
#[pyo3(signature = (
    num_tasks = 10, step = 10, dim = 64, mean_scale = 1.0, noise_sigma = 0.6,
    train_per_class = 100, test_per_class = 100, seed = 0
))]
#[allow(clippy::too_many_arguments)]
fn generate_synthetic(
    num_tasks: usize,
    step: usize,
    dim: usize,
    mean_scale: f64,
    noise_sigma: f64,
    train_per_class: usize,
    test_per_class: usize,
    seed: u64,
) -> PyResult<PyTaskStream> {
    let spec = core::SyntheticSpec {
        num_tasks,
        step,
        dim,
        mean_scale,
        noise_sigma,
        train_per_class,
        test_per_class,
        seed,
    };
    Ok(PyTaskStream {
        inner: core::generate_synthetic(&spec).map_err(to_py)?,
    })
}

#[pyfunction]
fn load_embeddings(path: &str) -> PyResult<PyTaskStream> {
    Ok(PyTaskStream {
        inner: core::load_embeddings(path).map_err(to_py)?,
    })
}

fn rmatrix(rows: Vec<Vec<f64>>) -> PyResult<core::RMatrix> {
    core::RMatrix::from_rows(rows).map_err(to_py)
}

#[pyfunction]
fn average_accuracy(rows: Vec<Vec<f64>>) -> PyResult<f64> {
    core::average_accuracy(&rmatrix(rows)?).map_err(to_py)
}

#[pyfunction]
fn forgetting(rows: Vec<Vec<f64>>) -> PyResult<f64> {
    core::forgetting(&rmatrix(rows)?).map_err(to_py)
}

/// Trains over `stream` and evaluates every stage with and without ARC.
/// Returns a dict with both accuracy matrices and their summary metrics.
#[pyfunction]
#[pyo3(signature = (
    stream, seed = 0, epochs = 5, lr = 1.0, batch_size = 16, replay_per_class = 0,
    beta = 0.8, gamma = 0.8, temperature = 2.0, arc_lr = 0.01, arc_batch_size = 64,
    retention = true, correction = true, arc_last = false
))]
#[allow(clippy::too_many_arguments)]
fn run_stream<'py>(
    py: Python<'py>,
    stream: &PyTaskStream,
    seed: u64,
    epochs: usize,
    lr: f64,
    batch_size: usize,
    replay_per_class: usize,
    beta: f64,
    gamma: f64,
    temperature: f64,
    arc_lr: f64,
    arc_batch_size: usize,
    retention: bool,
    correction: bool,
    arc_last: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let train = core::TrainConfig {
        epochs,
        lr,
        batch_size,
        replay_per_class,
        seed,
    };
    let arc = core::ArcConfig {
        thresholds: thresholds(beta, gamma)?,
        temperature,
        lr: arc_lr,
        batch_size: arc_batch_size,
        retention_enabled: retention,
        correction_enabled: correction,
        arc_last,
        ..core::ArcConfig::default()
    };
    let run = py
        .detach(|| core::run_stream(&stream.inner, &train, &arc))
        .map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("arc_r", run.arc.r.rows().to_vec())?;
    out.set_item("baseline_r", run.baseline.r.rows().to_vec())?;
    out.set_item("arc_average_accuracy", run.arc_report.average_accuracy)?;
    out.set_item("baseline_average_accuracy", run.baseline_report.average_accuracy)?;
    out.set_item("arc_forgetting", run.arc_report.forgetting)?;
    out.set_item("baseline_forgetting", run.baseline_report.forgetting)?;
    out.set_item("updates", run.arc.updates)?;
    Ok(out)
}

#[pymodule]
fn arc_cl(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyLinearHead>()?;
    m.add_class::<PyTaskStream>()?;
    m.add_function(wrap_pyfunction!(softmax, m)?)?;
    m.add_function(wrap_pyfunction!(cross_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(entropy, m)?)?;
    m.add_function(wrap_pyfunction!(retention_gradient, m)?)?;
    m.add_function(wrap_pyfunction!(confidence, m)?)?;
    m.add_function(wrap_pyfunction!(masked_confidence, m)?)?;
    m.add_function(wrap_pyfunction!(classify_sample, m)?)?;
    m.add_function(wrap_pyfunction!(tss, m)?)?;
    m.add_function(wrap_pyfunction!(adaptive_correction, m)?)?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(load_embeddings, m)?)?;
    m.add_function(wrap_pyfunction!(average_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(forgetting, m)?)?;
    m.add_function(wrap_pyfunction!(run_stream, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
