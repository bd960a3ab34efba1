//! Python bindings. Matrices cross the boundary as lists of rows, vectors
//! as flat lists. Configuration errors raise `ValueError`, everything else
//! `RuntimeError`.

use hkf_core::experiment::{self, BatchOptions};
use hkf_core::hkf::{self, build_schedule, Hgmm, HypothesizedSchedule, LocalEstimateState, ScheduleInit};
use hkf_core::linalg::{Mat, Vector};
use hkf_core::model::{PlantModel, SensorModel};
use hkf_core::ncs::{run_closed_loop, Scenario};
use hkf_core::scenario::ScenarioConfig;
use hkf_core::verify::{self, Fault, VerifyOptions};
use hkf_core::{trace, Error};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

fn py_err(e: Error) -> PyErr {
    if e.is_config() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn to_mat(rows: &[Vec<f64>], what: &str) -> PyResult<Mat> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(PyValueError::new_err(format!(
            "{what}: expected a non-empty rectangular list of rows"
        )));
    }
    Ok(Mat::from_fn(r, c, |i, j| rows[i][j]))
}

fn rows(m: &Mat) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn list(v: &Vector) -> Vec<f64> {
    v.iter().copied().collect()
}

/// `(H, Theta)` as lists of rows.
type SensorRows = (Vec<Vec<f64>>, Vec<Vec<f64>>);

fn json_to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Closed-loop scenario built from a JSON configuration.
#[pyclass(name = "Scenario", module = "hkf_py")]
struct PyScenario {
    config: ScenarioConfig,
    scenario: Scenario,
}

impl PyScenario {
    fn from_config(config: ScenarioConfig) -> PyResult<Self> {
        let scenario = config.build().map_err(py_err)?;
        Ok(Self { config, scenario })
    }

    fn batch(&self, runs: usize, base_seed: Option<u64>, parallel: bool) -> BatchOptions {
        BatchOptions {
            runs,
            base_seed: base_seed.unwrap_or(self.config.seed),
            parallel,
        }
    }
}

#[pymethods]
impl PyScenario {
    #[new]
    fn new(config_json: &str) -> PyResult<Self> {
        Self::from_config(ScenarioConfig::from_json(config_json).map_err(py_err)?)
    }

    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        Self::from_config(ScenarioConfig::load(&path).map_err(py_err)?)
    }

    #[staticmethod]
    fn scalar_example() -> PyResult<Self> {
        Self::from_config(ScenarioConfig::scalar_example())
    }

    fn to_json(&self) -> String {
        self.config.to_json()
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.scenario.horizon
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.scenario.seed
    }

    #[getter]
    fn state_dim(&self) -> usize {
        self.scenario.state_dim()
    }

    #[getter]
    fn num_sensors(&self) -> usize {
        self.scenario.num_sensors()
    }

    /// Single closed-loop run. `estimate[k]` and `applied_origin[k]` are
    /// `None` when unavailable.
    #[pyo3(signature = (seed=None))]
    fn run<'py>(&self, py: Python<'py>, seed: Option<u64>) -> PyResult<Bound<'py, PyDict>> {
        let scenario = seed.map_or_else(|| self.scenario.clone(), |s| self.scenario.with_seed(s));
        let out = run_closed_loop(&scenario).map_err(py_err)?;
        let d = PyDict::new(py);
        let recs = &out.records;
        d.set_item("step", recs.iter().map(|r| r.step).collect::<Vec<_>>())?;
        d.set_item("x_true", recs.iter().map(|r| list(&r.x_true)).collect::<Vec<_>>())?;
        d.set_item("u", recs.iter().map(|r| list(&r.u_applied)).collect::<Vec<_>>())?;
        d.set_item(
            "estimate",
            recs.iter().map(|r| r.estimate.as_ref().map(list)).collect::<Vec<_>>(),
        )?;
        d.set_item(
            "applied_origin",
            recs.iter().map(|r| r.applied_origin).collect::<Vec<_>>(),
        )?;
        d.set_item("cost", recs.iter().map(|r| r.running_cost).collect::<Vec<_>>())?;
        d.set_item("total_cost", out.total_cost)?;
        d.set_item("trace_csv", trace::trace_to_string(recs).map_err(py_err)?)?;
        Ok(d)
    }

    /// Summary with the same fields as `summary.json`.
    #[pyo3(signature = (runs, base_seed=None, parallel=false))]
    fn monte_carlo<'py>(
        &self,
        py: Python<'py>,
        runs: usize,
        base_seed: Option<u64>,
        parallel: bool,
    ) -> PyResult<Bound<'py, PyAny>> {
        let opts = self.batch(runs, base_seed, parallel);
        let summary = py
            .detach(|| experiment::monte_carlo(&self.scenario, opts))
            .map_err(py_err)?;
        json_to_py(py, &summary)
    }

    /// One row per scaling of the matched HGMM.
    #[pyo3(signature = (alphas, runs, base_seed=None, parallel=false))]
    fn hgmm_sweep<'py>(
        &self,
        py: Python<'py>,
        alphas: Vec<f64>,
        runs: usize,
        base_seed: Option<u64>,
        parallel: bool,
    ) -> PyResult<Bound<'py, PyAny>> {
        let opts = self.batch(runs, base_seed, parallel);
        let rows = py
            .detach(|| experiment::hgmm_sweep(&self.scenario, &alphas, opts))
            .map_err(py_err)?;
        json_to_py(py, &rows)
    }

    #[pyo3(signature = (inject_fault=false))]
    fn verify<'py>(&self, py: Python<'py>, inject_fault: bool) -> PyResult<Bound<'py, PyDict>> {
        let opts = VerifyOptions {
            fault: inject_fault.then_some(Fault::CorruptDelta),
        };
        let report = verify::verify(&self.scenario, &opts).map_err(py_err)?;
        let identities = PyList::empty(py);
        for r in &report.results {
            let item = PyDict::new(py);
            item.set_item("name", r.name)?;
            item.set_item("worst", r.worst)?;
            item.set_item("tolerance", r.tolerance)?;
            item.set_item("checked", r.checked)?;
            item.set_item("skipped", r.skipped.clone())?;
            item.set_item("passed", r.passed())?;
            identities.append(item)?;
        }
        let d = PyDict::new(py);
        d.set_item("passed", report.passed())?;
        d.set_item("identities", identities)?;
        d.set_item("report", report.to_string())?;
        Ok(d)
    }
}

/// Hypothesized gain schedule for a fixed plant, sensor set and HGMM.
#[pyclass(name = "Schedule", module = "hkf_py")]
struct PySchedule {
    model: PlantModel,
    sensors: Vec<SensorModel>,
    schedule: HypothesizedSchedule,
}

#[pymethods]
impl PySchedule {
    /// `sensors` is a list of `(H, Theta)` pairs. `hgmm=None` uses the
    /// matched value; `prior_cov` selects prior initialization.
    #[new]
    #[pyo3(signature = (a, xi, sensors, horizon, hgmm=None, prior_cov=None))]
    fn new(
        a: Vec<Vec<f64>>,
        xi: Vec<Vec<f64>>,
        sensors: Vec<SensorRows>,
        horizon: usize,
        hgmm: Option<Vec<Vec<f64>>>,
        prior_cov: Option<Vec<Vec<f64>>>,
    ) -> PyResult<Self> {
        let a = to_mat(&a, "a")?;
        let n = a.nrows();
        let p0 = match &prior_cov {
            Some(p) => to_mat(p, "prior_cov")?,
            None => Mat::identity(n, n),
        };
        let model =
            PlantModel::new(a, Mat::zeros(n, 1), to_mat(&xi, "xi")?, Vector::zeros(n), p0.clone()).map_err(py_err)?;
        let sensors = sensors
            .iter()
            .enumerate()
            .map(|(i, (h, theta))| SensorModel::new(i, to_mat(h, "H")?, to_mat(theta, "Theta")?).map_err(py_err))
            .collect::<PyResult<Vec<_>>>()?;
        let hgmm = match hgmm {
            Some(h) => Hgmm::constant(to_mat(&h, "hgmm")?),
            None => Hgmm::matched(&sensors),
        }
        .map_err(py_err)?;
        let init = if prior_cov.is_some() {
            ScheduleInit::Prior(p0)
        } else {
            ScheduleInit::Measurement
        };
        let schedule = build_schedule(&model, &sensors, &hgmm, init, horizon).map_err(py_err)?;
        Ok(Self {
            model,
            sensors,
            schedule,
        })
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.schedule.horizon()
    }

    #[getter]
    fn num_sensors(&self) -> usize {
        self.schedule.num_sensors()
    }

    /// Hypothesized filtered covariance `C_k`.
    fn cx(&self, k: usize) -> PyResult<Vec<Vec<f64>>> {
        Ok(rows(self.schedule.cx(k).map_err(py_err)?))
    }

    /// `K_k`.
    fn gain(&self, k: usize) -> PyResult<Vec<Vec<f64>>> {
        Ok(rows(self.schedule.gain(k).map_err(py_err)?))
    }

    /// `L^i_k`.
    fn sensor_gain(&self, i: usize, k: usize) -> PyResult<Vec<Vec<f64>>> {
        Ok(rows(self.schedule.sensor_gain(i, k).map_err(py_err)?))
    }
}

impl PySchedule {
    fn sensor(&self, i: usize) -> PyResult<&SensorModel> {
        self.sensors
            .get(i)
            .ok_or_else(|| PyValueError::new_err(format!("no sensor {i}")))
    }
}

/// Local information-form variables `(x_i, Δ_i)` of one sensor.
#[pyclass(name = "LocalState", module = "hkf_py", skip_from_py_object)]
#[derive(Clone)]
struct PyLocalState(LocalEstimateState);

#[pymethods]
impl PyLocalState {
    #[staticmethod]
    fn from_measurement(schedule: PyRef<'_, PySchedule>, sensor: usize, z: Vec<f64>) -> PyResult<Self> {
        let s = schedule.sensor(sensor)?;
        LocalEstimateState::init_from_measurement(&schedule.schedule, s, &Vector::from_vec(z))
            .map(Self)
            .map_err(py_err)
    }

    #[staticmethod]
    fn from_prior(
        schedule: PyRef<'_, PySchedule>,
        sensor: usize,
        mean: Vec<f64>,
        cov: Vec<Vec<f64>>,
    ) -> PyResult<Self> {
        schedule.sensor(sensor)?;
        LocalEstimateState::init_from_prior(
            &schedule.schedule,
            sensor,
            &Vector::from_vec(mean),
            &to_mat(&cov, "cov")?,
        )
        .map(Self)
        .map_err(py_err)
    }

    /// Prediction followed by the filter step with measurement `z`.
    fn step(&self, schedule: PyRef<'_, PySchedule>, z: Vec<f64>) -> PyResult<Self> {
        let s = schedule.sensor(self.0.sensor_id)?;
        self.0
            .predict(&schedule.model)
            .and_then(|p| p.filter(&schedule.schedule, s, &Vector::from_vec(z)))
            .map(Self)
            .map_err(py_err)
    }

    #[getter]
    fn sensor_id(&self) -> usize {
        self.0.sensor_id
    }

    #[getter]
    fn step_index(&self) -> usize {
        self.0.step
    }

    #[getter]
    fn x_info(&self) -> Vec<f64> {
        list(&self.0.x_info)
    }

    #[getter]
    fn delta(&self) -> Vec<Vec<f64>> {
        rows(&self.0.delta)
    }
}

/// `(x_f, Δ_f)`, the sums over states of one step.
#[pyfunction]
fn fuse(states: Vec<PyRef<'_, PyLocalState>>) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
    let owned: Vec<LocalEstimateState> = states.iter().map(|s| s.0.clone()).collect();
    let (x, delta) = hkf::fuse(&owned).map_err(py_err)?;
    Ok((list(&x), rows(&delta)))
}

/// `Δ_f⁻¹ (x_f + x^u_f)`, or `None` when `Δ_f` is too ill-conditioned.
#[pyfunction]
#[pyo3(signature = (x, delta, xu=None, min_rcond=1e-10))]
fn debias(x: Vec<f64>, delta: Vec<Vec<f64>>, xu: Option<Vec<f64>>, min_rcond: f64) -> PyResult<Option<Vec<f64>>> {
    let x = Vector::from_vec(x);
    let delta = to_mat(&delta, "delta")?;
    if delta.nrows() != x.len() || delta.ncols() != x.len() {
        return Err(PyValueError::new_err("delta must be square with the size of x"));
    }
    let xu = xu.map_or_else(|| Vector::zeros(x.len()), Vector::from_vec);
    if xu.len() != x.len() {
        return Err(PyValueError::new_err("xu must have the size of x"));
    }
    Ok(hkf::debias(&x, &delta, &xu, min_rcond).as_ref().map(list))
}

#[pymodule]
fn hkf_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenario>()?;
    m.add_class::<PySchedule>()?;
    m.add_class::<PyLocalState>()?;
    m.add_function(wrap_pyfunction!(fuse, m)?)?;
    m.add_function(wrap_pyfunction!(debias, m)?)?;
    m.add("TRACE_SCHEMA_VERSION", trace::TRACE_SCHEMA_VERSION)?;
    Ok(())
}
