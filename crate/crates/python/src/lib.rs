//! Python bindings for the `emff` crate.
//!
//! Vectors and matrices cross the boundary as nested lists of floats;
//! DCMs are 3x3 row-major lists. Library errors become `ValueError`
//! (configuration, input and domain), `ArithmeticError` (numeric faults) or
//! `OSError` (I/O).

use std::path::PathBuf;

use nalgebra::Matrix3;
use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use emff::field_exact::{self, DipoleMoment, QMatrix};
use emff::frames::Dcm;
use emff::sim::export::{to_toml_string, RunSummary};
use emff::sim::{self, ModelSelector, Scenario as CoreScenario};
use emff::surrogate::{self, io, SampleRegion};
use emff::{Error, Vec3};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(io) => PyOSError::new_err(io.to_string()),
        e @ (Error::Numeric(_) | Error::Singular(_)) => {
            PyArithmeticError::new_err(e.to_string())
        }
        e => PyValueError::new_err(e.to_string()),
    }
}

fn dcm(m: [[f64; 3]; 3]) -> PyResult<Dcm> {
    let mat = Matrix3::from_fn(|i, j| m[i][j]);
    Dcm::new(mat).map_err(to_py)
}

fn q_rows(q: &QMatrix) -> Vec<Vec<f64>> {
    (0..6).map(|i| (0..9).map(|j| q.0[(i, j)]).collect()).collect()
}

fn parse_model(name: &str) -> PyResult<ModelSelector> {
    name.parse().map_err(to_py)
}

/// Triaxial air-core coil.
#[pyclass(module = "emff_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct CoilSpec {
    inner: field_exact::CoilSpec,
}

#[pymethods]
impl CoilSpec {
    #[new]
    #[pyo3(signature = (radius=0.15, turns=100.0, guard_margin=None))]
    fn new(radius: f64, turns: f64, guard_margin: Option<f64>) -> PyResult<Self> {
        let mut inner = field_exact::CoilSpec::new(radius, turns).map_err(to_py)?;
        if let Some(g) = guard_margin {
            inner = inner.with_guard_margin(g);
        }
        Ok(CoilSpec { inner })
    }

    #[getter]
    fn radius(&self) -> f64 {
        self.inner.radius()
    }

    #[getter]
    fn turns(&self) -> f64 {
        self.inner.turns()
    }

    #[getter]
    fn area(&self) -> f64 {
        self.inner.area()
    }

    #[getter]
    fn min_separation(&self) -> f64 {
        self.inner.min_separation()
    }

    fn __repr__(&self) -> String {
        format!("CoilSpec(radius={}, turns={})", self.inner.radius(), self.inner.turns())
    }
}

/// Exact 6x9 coefficient matrix by loop quadrature.
#[pyfunction]
#[pyo3(signature = (r_jk, dcm_j, dcm_k, coil, n_quad=64))]
fn q_matrix_exact(
    r_jk: [f64; 3],
    dcm_j: [[f64; 3]; 3],
    dcm_k: [[f64; 3]; 3],
    coil: &CoilSpec,
    n_quad: usize,
) -> PyResult<Vec<Vec<f64>>> {
    let q = field_exact::q_matrix_exact(&Vec3::from(r_jk), &dcm(dcm_j)?, &dcm(dcm_k)?, &coil.inner, n_quad)
        .map_err(to_py)?;
    Ok(q_rows(&q))
}

/// Dipole far-field 6x9 coefficient matrix.
#[pyfunction]
fn q_matrix_farfield(r_jk: [f64; 3], dcm_j: [[f64; 3]; 3], dcm_k: [[f64; 3]; 3]) -> PyResult<Vec<Vec<f64>>> {
    let q = emff::field_farfield::q_matrix_farfield(&Vec3::from(r_jk), &dcm(dcm_j)?, &dcm(dcm_k)?)
        .map_err(to_py)?;
    Ok(q_rows(&q))
}

/// Force and torque `[fx, fy, fz, tx, ty, tz]` on j from body-axis moments.
#[pyfunction]
fn pair_wrench(q: [[f64; 9]; 6], mu_k: [f64; 3], mu_j: [f64; 3]) -> [f64; 6] {
    let mut m = QMatrix::zeros();
    for (i, row) in q.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            m.0[(i, j)] = *v;
        }
    }
    let w = field_exact::pair_wrench(&m, &DipoleMoment(Vec3::from(mu_k)), &DipoleMoment(Vec3::from(mu_j)));
    w.to_array()
}

/// Labelled canonical geometries.
#[pyclass(module = "emff_py", frozen, skip_from_py_object)]
struct Dataset {
    inner: surrogate::Dataset,
}

#[pymethods]
impl Dataset {
    #[staticmethod]
    #[pyo3(signature = (n_samples, n_quad=128, seed=0, r_min=None, r_max=None, coil_radius=None))]
    fn sample(
        py: Python<'_>,
        n_samples: usize,
        n_quad: usize,
        seed: u64,
        r_min: Option<f64>,
        r_max: Option<f64>,
        coil_radius: Option<f64>,
    ) -> PyResult<Self> {
        let r = SampleRegion::reference();
        let region = SampleRegion::new(r_min.unwrap_or(r.r_min), r_max.unwrap_or(r.r_max), coil_radius.unwrap_or(r.coil_radius))
            .map_err(to_py)?;
        let inner = py
            .detach(|| surrogate::sample_dataset(&region, n_samples, n_quad, seed))
            .map_err(to_py)?;
        Ok(Dataset { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Dataset { inner: io::load_dataset(&path).map_err(to_py)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        io::save_dataset(&path, &self.inner).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Row `i` as `(input, label)`.
    fn row(&self, i: usize) -> PyResult<([f64; 4], [f64; 6])> {
        if i >= self.inner.len() {
            return Err(PyValueError::new_err(format!("row {i} out of range")));
        }
        Ok((self.inner.input(i), self.inner.label(i)))
    }

    #[getter]
    fn region(&self) -> (f64, f64, f64) {
        let r = &self.inner.region;
        (r.r_min, r.r_max, r.coil_radius)
    }
}

fn report_dict<'py>(py: Python<'py>, report: &surrogate::RegressionReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    let channel = |c: &surrogate::ChannelMetrics| -> PyResult<Bound<'py, PyDict>> {
        let m = PyDict::new(py);
        m.set_item("r2", c.r2)?;
        m.set_item("mae", c.mae)?;
        m.set_item("rmse", c.rmse)?;
        m.set_item("maxe", c.maxe)?;
        Ok(m)
    };
    let channels = report.channels.iter().map(channel).collect::<PyResult<Vec<_>>>()?;
    d.set_item("channels", channels)?;
    d.set_item("aggregate", channel(&report.aggregate)?)?;
    d.set_item("min_r2", report.min_r2())?;
    Ok(d)
}

/// Trained network together with its training region.
#[pyclass(module = "emff_py", frozen, skip_from_py_object)]
struct Surrogate {
    inner: surrogate::Surrogate,
}

#[pymethods]
impl Surrogate {
    /// Trains on `dataset`; returns the model and a held-out metric dict.
    #[staticmethod]
    #[pyo3(signature = (dataset, epochs=300, batch_size=8192, learning_rate=3e-3, seed=0))]
    fn train<'py>(
        py: Python<'py>,
        dataset: &Dataset,
        epochs: usize,
        batch_size: usize,
        learning_rate: f64,
        seed: u64,
    ) -> PyResult<(Self, Bound<'py, PyDict>)> {
        let cfg = surrogate::TrainConfig {
            epochs,
            batch_size,
            learning_rate,
            seed,
            ..surrogate::TrainConfig::default()
        };
        let out = py.detach(|| surrogate::train_mlp(&dataset.inner, &cfg)).map_err(to_py)?;
        let inner = surrogate::Surrogate::new(out.params, dataset.inner.region).map_err(to_py)?;
        Ok((Surrogate { inner }, report_dict(py, &out.report)?))
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Surrogate { inner: io::load_model(&path).map_err(to_py)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        io::save_model(&path, &self.inner).map_err(to_py)
    }

    fn evaluate<'py>(&self, py: Python<'py>, dataset: &Dataset) -> PyResult<Bound<'py, PyDict>> {
        let report = surrogate::evaluate(self.inner.params(), &dataset.inner).map_err(to_py)?;
        report_dict(py, &report)
    }

    /// Network output for one canonical input `[x, z, phi1, phi2]`.
    fn predict(&self, input: [f64; 4]) -> PyResult<Vec<f64>> {
        surrogate::mlp_forward(self.inner.params(), &input).map_err(to_py)
    }

    /// Surrogate Q matrix and whether any axis pair left the training region.
    #[pyo3(signature = (r_jk, dcm_j, dcm_k, coil, gamma=None))]
    fn q_matrix(
        &self,
        r_jk: [f64; 3],
        dcm_j: [[f64; 3]; 3],
        dcm_k: [[f64; 3]; 3],
        coil: &CoilSpec,
        gamma: Option<f64>,
    ) -> PyResult<(Vec<Vec<f64>>, bool)> {
        let s = self.inner.clone().with_policy(surrogate::ExtrapolationPolicy::Ignore);
        let gamma = gamma.unwrap_or_else(|| s.scale_for(&coil.inner));
        let out = surrogate::q_matrix_surrogate(&Vec3::from(r_jk), &dcm(dcm_j)?, &dcm(dcm_k)?, &coil.inner, &s, gamma)
            .map_err(to_py)?;
        Ok((q_rows(&out.q), out.extrapolated))
    }

    #[getter]
    fn layers(&self) -> Vec<usize> {
        self.inner.params().sizes().to_vec()
    }
}

/// Docking scenario (TOML schema of the command-line tool).
#[pyclass(module = "emff_py", skip_from_py_object)]
struct Scenario {
    inner: CoreScenario,
}

#[pymethods]
impl Scenario {
    /// The nominal scenario.
    #[new]
    fn new() -> Self {
        Scenario { inner: CoreScenario::default() }
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(Scenario { inner: CoreScenario::from_toml(text).map_err(to_py)? })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Scenario { inner: CoreScenario::load(&path).map_err(to_py)? })
    }

    fn to_toml(&self) -> PyResult<String> {
        self.inner.to_toml().map_err(to_py)
    }

    #[getter]
    fn model(&self) -> String {
        self.inner.run.model.to_string()
    }

    #[setter]
    fn set_model(&mut self, name: &str) -> PyResult<()> {
        self.inner.run.model = parse_model(name)?;
        Ok(())
    }

    #[getter]
    fn duration(&self) -> f64 {
        self.inner.run.duration
    }

    #[setter]
    fn set_duration(&mut self, d: f64) {
        self.inner.run.duration = d;
    }

    #[getter]
    fn rel_pos(&self) -> [f64; 3] {
        self.inner.initial.rel_pos
    }

    #[setter]
    fn set_rel_pos(&mut self, p: [f64; 3]) {
        self.inner.initial.rel_pos = p;
    }

    /// Runs the docking loop. Returns a summary dict plus the logged
    /// times and relative positions.
    #[pyo3(signature = (surrogate=None))]
    fn simulate<'py>(&self, py: Python<'py>, surrogate: Option<&Surrogate>) -> PyResult<Bound<'py, PyDict>> {
        let log = py
            .detach(|| sim::run_docking(&self.inner, surrogate.map(|s| &s.inner)))
            .map_err(to_py)?;
        let summary = RunSummary::new(&self.inner, &log);
        let d = PyDict::new(py);
        d.set_item("outcome", &summary.outcome)?;
        d.set_item("outcome_time", summary.outcome_time)?;
        d.set_item("exit_code", log.outcome.exit_code())?;
        d.set_item("terminal_position_error", summary.terminal_position_error)?;
        d.set_item("terminal_attitude_error_deg", summary.terminal_attitude_error_deg)?;
        d.set_item("peak_chaser_current", summary.peak_chaser_current)?;
        d.set_item("summary_toml", to_toml_string(&summary).map_err(to_py)?)?;
        d.set_item("t", log.records.iter().map(|r| r.t).collect::<Vec<_>>())?;
        let pos: Vec<[f64; 3]> = log.records.iter().map(|r| r.state.rel_pos.into()).collect();
        d.set_item("rel_pos", pos)?;
        Ok(d)
    }
}

#[pymodule]
fn emff_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<CoilSpec>()?;
    m.add_class::<Dataset>()?;
    m.add_class::<Surrogate>()?;
    m.add_class::<Scenario>()?;
    m.add_function(wrap_pyfunction!(q_matrix_exact, m)?)?;
    m.add_function(wrap_pyfunction!(q_matrix_farfield, m)?)?;
    m.add_function(wrap_pyfunction!(pair_wrench, m)?)?;
    m.add("MU0_OVER_4PI", emff::MU0_OVER_4PI)?;
    Ok(())
}
