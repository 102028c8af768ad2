//! Python module `qhybrid_py`: statevectors, circuit layouts and gradients,
//! hybrid models and the experiment runner.

use num_complex::Complex64;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use qhybrid::runner;
use qhybrid::{Error, Matrix, OutputSelection};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn selection(name: &str) -> PyResult<OutputSelection> {
    name.parse().map_err(py_err)
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Matrix> {
    Matrix::from_rows(&rows).map_err(py_err)
}

type Rows = Vec<Vec<f64>>;

fn rows(m: &Matrix) -> Rows {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

#[pyclass(name = "StateVector")]
struct PyStateVector(qhybrid::StateVector);

#[pymethods]
impl PyStateVector {
    /// `|0…0⟩` on `num_qubits` qubits.
    #[new]
    fn new(num_qubits: usize) -> PyResult<Self> {
        qhybrid::StateVector::init_zero(num_qubits)
            .map(Self)
            .map_err(py_err)
    }

    #[getter]
    fn num_qubits(&self) -> usize {
        self.0.num_qubits()
    }

    fn amplitudes(&self) -> Vec<Complex64> {
        self.0.amplitudes().to_vec()
    }

    fn probabilities(&self) -> Vec<f64> {
        self.0.probabilities()
    }

    fn norm_sqr(&self) -> f64 {
        self.0.norm_sqr()
    }

    fn apply_u1(&mut self, qubit: usize, alpha: f64, beta: f64, gamma: f64) -> PyResult<()> {
        self.0
            .apply_u1(&qhybrid::GateU1::new(qubit, alpha, beta, gamma))
            .map_err(py_err)
    }

    fn apply_u2(
        &mut self,
        qubit_j: usize,
        qubit_k: usize,
        theta: f64,
        phi: f64,
        eta: f64,
    ) -> PyResult<()> {
        self.0
            .apply_u2(&qhybrid::GateU2::new(qubit_j, qubit_k, theta, phi, eta))
            .map_err(py_err)
    }
}

#[pyclass(name = "CircuitLayout")]
struct PyCircuitLayout(qhybrid::CircuitLayout);

#[pymethods]
impl PyCircuitLayout {
    /// Builds a layout from comma-separated tokens such as `"u1-all,u2-even,u1-all"`.
    #[new]
    fn new(num_qubits: usize, layout: &str) -> PyResult<Self> {
        qhybrid::CircuitLayout::parse(num_qubits, layout)
            .map(Self)
            .map_err(py_err)
    }

    #[getter]
    fn num_qubits(&self) -> usize {
        self.0.num_qubits()
    }

    #[getter]
    fn num_params(&self) -> usize {
        self.0.num_params()
    }

    fn tokens(&self) -> String {
        self.0.to_tokens()
    }

    fn state(&self, angles: Vec<f64>) -> PyResult<PyStateVector> {
        self.0.state(&angles).map(PyStateVector).map_err(py_err)
    }

    #[pyo3(signature = (angles, selection = "full"))]
    fn forward(&self, angles: Vec<f64>, selection: &str) -> PyResult<Vec<f64>> {
        self.0
            .forward(&angles, self::selection(selection)?)
            .map_err(py_err)
    }

    /// Exact `∂p_k/∂w_m` as a `Q₁ × M` nested list.
    #[pyo3(signature = (angles, selection = "full"))]
    fn gradient_exact(&self, angles: Vec<f64>, selection: &str) -> PyResult<Vec<Vec<f64>>> {
        let g = self
            .0
            .gradient_exact(&angles, self::selection(selection)?)
            .map_err(py_err)?;
        Ok((0..g.rows()).map(|r| g.row(r).to_vec()).collect())
    }

    #[pyo3(signature = (angles, shots, seed, selection = "full"))]
    fn gradient_sampled(
        &self,
        angles: Vec<f64>,
        shots: u64,
        seed: u64,
        selection: &str,
    ) -> PyResult<Vec<Vec<f64>>> {
        let g = self
            .0
            .gradient_sampled(&angles, self::selection(selection)?, shots, seed)
            .map_err(py_err)?;
        Ok((0..g.rows()).map(|r| g.row(r).to_vec()).collect())
    }

    fn shifted_angles(&self, angles: Vec<f64>, param: usize) -> PyResult<Vec<f64>> {
        self.0.shifted_angles(&angles, param).map_err(py_err)
    }

    fn derivative_state(&self, angles: Vec<f64>, param: usize) -> PyResult<PyStateVector> {
        self.0
            .derivative_state(&angles, param)
            .map(PyStateVector)
            .map_err(py_err)
    }

    #[pyo3(signature = (selection = "full"))]
    fn circuit_count(&self, selection: &str) -> PyResult<u64> {
        Ok(qhybrid::circuit_count(&self.0, self::selection(selection)?))
    }
}

/// `min(2^N·M, 2·Q₁·(M+1))`.
#[pyfunction]
fn circuit_count(num_qubits: usize, num_params: u64, num_outputs: u64) -> u64 {
    qhybrid::circuit::circuit_count_for(num_qubits, num_params, num_outputs)
}

#[pyfunction]
fn sample_bound(
    num_outputs: usize,
    num_params: usize,
    epsilon: f64,
    max_variance: f64,
) -> PyResult<u64> {
    qhybrid::sample_bound(&qhybrid::ComplexityQuery {
        num_outputs,
        num_params,
        epsilon,
        max_variance,
    })
    .map_err(py_err)
}

/// Returns `(θ, dθ/dx)` for `θ = π·σ(x)` applied row-wise.
#[pyfunction]
fn angle_map(raw: Vec<Vec<f64>>) -> PyResult<(Rows, Rows)> {
    let (theta, d) = qhybrid::angle_map(&matrix(raw)?);
    Ok((rows(&theta), rows(&d)))
}

#[pyclass(name = "RunConfig")]
struct PyRunConfig(runner::RunConfig);

#[pymethods]
impl PyRunConfig {
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        runner::parse_config(text).map(Self).map_err(py_err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        runner::load_config(path).map(Self).map_err(py_err)
    }

    #[getter]
    fn k_tot(&self) -> usize {
        self.0.k_tot
    }

    #[getter]
    fn epochs(&self) -> usize {
        self.0.train.epochs
    }

    #[setter]
    fn set_epochs(&mut self, epochs: usize) {
        self.0.train.epochs = epochs;
    }

    #[getter]
    fn out_dir(&self) -> String {
        self.0.out_dir.display().to_string()
    }

    #[setter]
    fn set_out_dir(&mut self, dir: String) {
        self.0.out_dir = dir.into();
    }

    fn to_text(&self) -> String {
        self.0.to_text()
    }
}

fn record_dict<'py>(py: Python<'py>, r: &runner::RunRecord) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("seed", r.seed)?;
    d.set_item("k_tot", r.k_tot)?;
    d.set_item("final_train_acc", r.final_train_acc)?;
    d.set_item("final_val_acc", r.final_val_acc)?;
    d.set_item("wall_clock_s", r.wall_clock.as_secs_f64())?;
    let epochs: Vec<(usize, f64, f64, f64)> = r
        .epochs
        .iter()
        .map(|m| (m.epoch, m.train_loss, m.train_acc, m.val_acc))
        .collect();
    d.set_item("epochs", epochs)?;
    Ok(d)
}

/// Trains once and returns the run record as a dict.
#[pyfunction]
fn run_training<'py>(
    py: Python<'py>,
    config: PyRef<'_, PyRunConfig>,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let record = runner::run_training(&config.0, seed).map_err(py_err)?;
    record_dict(py, &record)
}

/// Median, 68% interval, TR90 and VR90 of `(train_acc, val_acc)` pairs.
#[pyfunction]
fn summarize<'py>(py: Python<'py>, accuracies: Vec<(f64, f64)>) -> PyResult<Bound<'py, PyDict>> {
    let records: Vec<runner::RunRecord> = accuracies
        .iter()
        .enumerate()
        .map(|(k, &(train, val))| runner::RunRecord {
            seed: k as u64,
            k_tot: 0,
            epochs: Vec::new(),
            final_train_acc: train,
            final_val_acc: val,
            wall_clock: std::time::Duration::ZERO,
        })
        .collect();
    let s = runner::summarize(&records, 0).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("runs", s.runs)?;
    d.set_item("median_val_acc", s.median_val_acc)?;
    d.set_item("ci68", (s.ci_low, s.ci_high))?;
    d.set_item("ci_degenerate", s.ci_degenerate)?;
    d.set_item("median_train_acc", s.median_train_acc)?;
    d.set_item("tr90", s.tr90)?;
    d.set_item("vr90", s.vr90)?;
    d.set_item("histogram_underflow", s.histogram.underflow)?;
    d.set_item("histogram_counts", s.histogram.counts)?;
    Ok(d)
}

#[pyclass(name = "Model")]
struct PyModel {
    model: qhybrid::MainModel,
    optimizers: qhybrid::Optimizers,
}

#[pymethods]
impl PyModel {
    /// Freshly initialized model for `config`, weights drawn from `seed`.
    #[staticmethod]
    fn from_config(config: PyRef<'_, PyRunConfig>, seed: u64) -> PyResult<Self> {
        let spec = config.0.model_spec().map_err(py_err)?;
        let model = qhybrid::MainModel::init(&spec, &mut ChaCha8Rng::seed_from_u64(seed))
            .map_err(py_err)?;
        let optimizers = qhybrid::Optimizers::for_model(&model);
        Ok(PyModel { model, optimizers })
    }

    #[getter]
    fn num_params(&self) -> usize {
        self.model.num_params()
    }

    fn predict(&self, batch: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let logits = self.model.predict(&matrix(batch)?).map_err(py_err)?;
        Ok(rows(&logits))
    }

    /// One Adam step; returns `(loss, accuracy)` of the batch before the update.
    fn train_step(
        &mut self,
        batch: Vec<Vec<f64>>,
        labels: Vec<usize>,
        learning_rate: f64,
    ) -> PyResult<(f64, f64)> {
        self.model
            .train_step(
                &matrix(batch)?,
                &labels,
                &mut self.optimizers,
                learning_rate,
            )
            .map_err(py_err)
    }

    fn evaluate(&self, batch: Vec<Vec<f64>>, labels: Vec<usize>) -> PyResult<f64> {
        self.model
            .evaluate(&matrix(batch)?, &labels)
            .map_err(py_err)
    }
}

#[pymodule]
fn qhybrid_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyStateVector>()?;
    m.add_class::<PyCircuitLayout>()?;
    m.add_class::<PyRunConfig>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(circuit_count, m)?)?;
    m.add_function(wrap_pyfunction!(sample_bound, m)?)?;
    m.add_function(wrap_pyfunction!(angle_map, m)?)?;
    m.add_function(wrap_pyfunction!(run_training, m)?)?;
    m.add_function(wrap_pyfunction!(summarize, m)?)?;
    Ok(())
}
