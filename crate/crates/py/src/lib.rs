use deepo_core::deepo::{offline_init, DeepoConfig, DeepoSnapshot, DeepoState};
use deepo_core::harness::acceptance::{run_acceptance, run_criterion, AcceptanceReport};
use deepo_core::harness::{run_adaptation_scenario, simulate, ScenarioConfig};
use deepo_core::numerics::{nested_rows, Matrix, Vector};
use deepo_core::plant::PlantModel;
use deepo_core::realization::{build_xi_matrix, reduce_svd as core_reduce_svd, stack_window, IoHistory};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Matrix> {
    nested_rows::from_rows(&rows).map_err(value_err)
}

fn vector(v: Vec<f64>) -> Vector {
    Vector::from_vec(v)
}

fn list(v: &Vector) -> Vec<f64> {
    v.iter().copied().collect()
}

fn history(inputs: Vec<Vec<f64>>, outputs: Vec<Vec<f64>>) -> PyResult<IoHistory> {
    IoHistory::new(inputs.into_iter().map(vector).collect(), outputs.into_iter().map(vector).collect()).map_err(value_err)
}

/// Discrete LTI plant with Gaussian process and measurement noise.
#[pyclass(name = "Plant")]
struct PyPlant {
    inner: PlantModel,
}

#[pymethods]
impl PyPlant {
    #[new]
    #[pyo3(signature = (a, b, c, process_std = 0.0, measurement_std = 0.0, seed = 0))]
    fn new(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>, c: Vec<Vec<f64>>, process_std: f64, measurement_std: f64, seed: u64) -> PyResult<Self> {
        let inner = PlantModel::new(matrix(a)?, matrix(b)?, matrix(c)?, process_std, measurement_std, seed).map_err(value_err)?;
        Ok(Self { inner })
    }

    /// Returns `y_t` and advances the state with input `u_t`.
    fn step(&mut self, u: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.step(&vector(u)).map(|y| list(&y)).map_err(runtime_err)
    }

    #[getter]
    fn state(&self) -> Vec<f64> {
        list(self.inner.state())
    }

    #[setter]
    fn set_state(&mut self, x: Vec<f64>) -> PyResult<()> {
        self.inner.set_state(vector(x)).map_err(value_err)
    }
}

/// Online policy-optimization engine.
#[pyclass(name = "Engine")]
struct PyEngine {
    inner: DeepoState,
}

#[pymethods]
impl PyEngine {
    /// Initializes from offline input and output samples (one list per time step).
    #[staticmethod]
    #[pyo3(signature = (inputs, outputs, lag, eta0 = 1e-4, probe_std = 0.01, r_override = None, seed = 0))]
    fn offline_init(
        inputs: Vec<Vec<f64>>,
        outputs: Vec<Vec<f64>>,
        lag: usize,
        eta0: f64,
        probe_std: f64,
        r_override: Option<usize>,
        seed: u64,
    ) -> PyResult<Self> {
        let mut config = DeepoConfig::new(lag);
        config.eta0 = eta0;
        config.probe_std = probe_std;
        config.r_override = r_override;
        config.seed = seed;
        let inner = offline_init(&history(inputs, outputs)?, &config).map_err(value_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_snapshot(json: &str) -> PyResult<Self> {
        let snap = DeepoSnapshot::from_json(json).map_err(value_err)?;
        Ok(Self {
            inner: DeepoState::from_snapshot(snap).map_err(value_err)?,
        })
    }

    fn snapshot(&self) -> String {
        self.inner.snapshot().to_json()
    }

    /// Stacks the window from the most recent `lag` samples.
    fn window(&self, inputs: Vec<Vec<f64>>, outputs: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        let h = history(inputs, outputs)?;
        let w = stack_window(&h, h.len(), self.inner.lag()).map_err(value_err)?;
        Ok(list(&w.xi))
    }

    fn reduce(&self, window: Vec<f64>) -> PyResult<Vec<f64>> {
        let z = self.inner.reduce(&deepo_core::realization::IoWindow { xi: vector(window) }).map_err(value_err)?;
        Ok(list(&z))
    }

    /// Returns `(u, z)` for the given window.
    fn control_step(&mut self, window: Vec<f64>) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let a = self
            .inner
            .control_step(&deepo_core::realization::IoWindow { xi: vector(window) })
            .map_err(value_err)?;
        Ok((list(&a.u), list(&a.z)))
    }

    /// Absorbs one transition and updates the gain. Returns the step record as JSON.
    fn ingest_and_update(&mut self, u: Vec<f64>, z: Vec<f64>, z_next: Vec<f64>) -> PyResult<String> {
        let rec = self.inner.ingest_and_update(&vector(u), &vector(z), &vector(z_next)).map_err(runtime_err)?;
        serde_json::to_string(&rec).map_err(runtime_err)
    }

    #[getter]
    fn gain(&self) -> Vec<Vec<f64>> {
        nested_rows::to_rows(self.inner.gain())
    }

    #[getter]
    fn t_matrix(&self) -> Vec<Vec<f64>> {
        nested_rows::to_rows(&self.inner.map().t_matrix)
    }

    #[getter]
    fn reduced_dim(&self) -> usize {
        self.inner.reduced_dim()
    }

    #[getter]
    fn lag(&self) -> usize {
        self.inner.lag()
    }

    #[getter]
    fn adaptive(&self) -> bool {
        self.inner.is_adaptive()
    }

    #[setter]
    fn set_adaptive(&mut self, adaptive: bool) {
        self.inner.set_adaptive(adaptive);
    }

    fn data_cost(&self) -> Option<f64> {
        self.inner.data_cost()
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.inner.warnings().to_vec()
    }
}

/// SVD reduction of the window matrix. Returns `(T, r, singular_values)`.
#[pyfunction]
#[pyo3(signature = (inputs, outputs, lag, r_override = None, gap_ratio = 1.8))]
fn reduce_svd(
    inputs: Vec<Vec<f64>>,
    outputs: Vec<Vec<f64>>,
    lag: usize,
    r_override: Option<usize>,
    gap_ratio: f64,
) -> PyResult<(Vec<Vec<f64>>, usize, Vec<f64>)> {
    let h = history(inputs, outputs)?;
    if h.len() <= lag {
        return Err(value_err(format!("need more than {lag} samples")));
    }
    let xi = build_xi_matrix(&h, h.len() - lag, lag).map_err(value_err)?;
    let map = core_reduce_svd(&xi, h.input_dim() * lag, r_override, gap_ratio).map_err(value_err)?;
    Ok((nested_rows::to_rows(&map.t_matrix), map.reduced_dim, map.singular_values))
}

/// Simulates a scenario config (JSON). Returns `(summary_json, trace_csv)`.
#[pyfunction]
#[pyo3(signature = (config_json, adaptive = true))]
fn run_scenario(py: Python<'_>, config_json: &str, adaptive: bool) -> PyResult<(String, String)> {
    let cfg = ScenarioConfig::from_json(config_json).map_err(value_err)?;
    let out = py.detach(|| simulate(&cfg, adaptive)).map_err(runtime_err)?;
    let summary = serde_json::to_string_pretty(&out.summary).map_err(runtime_err)?;
    Ok((summary, out.trace.to_csv_string().map_err(runtime_err)?))
}

/// Runs a scenario adaptive and frozen. Returns the comparison summary as JSON.
#[pyfunction]
fn run_adaptation(py: Python<'_>, config_json: &str) -> PyResult<String> {
    let mut cfg = ScenarioConfig::from_json(config_json).map_err(value_err)?;
    cfg.output.dir = None;
    let out = py.detach(|| run_adaptation_scenario(&cfg)).map_err(runtime_err)?;
    serde_json::to_string_pretty(&out.summary).map_err(runtime_err)
}

/// Runs the acceptance criteria (all when `criteria` is None). Returns the report as JSON.
#[pyfunction]
#[pyo3(signature = (criteria = None))]
fn acceptance(py: Python<'_>, criteria: Option<Vec<u8>>) -> PyResult<String> {
    if let Some(ids) = &criteria {
        if let Some(bad) = ids.iter().find(|&&id| !(1..=10).contains(&id)) {
            return Err(value_err(format!("no criterion {bad}")));
        }
    }
    let report = py.detach(|| match criteria {
        None => run_acceptance(),
        Some(ids) => {
            let criteria: Vec<_> = ids.into_iter().map(run_criterion).collect();
            let passed = criteria.iter().all(|c| c.passed);
            AcceptanceReport { criteria, passed }
        }
    });
    Ok(report.to_json())
}

#[pymodule]
fn deepo_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPlant>()?;
    m.add_class::<PyEngine>()?;
    m.add_function(wrap_pyfunction!(reduce_svd, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(run_adaptation, m)?)?;
    m.add_function(wrap_pyfunction!(acceptance, m)?)?;
    m.add("SCHEMA_VERSION", deepo_core::harness::SCHEMA_VERSION)?;
    Ok(())
}
