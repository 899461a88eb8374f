//! Python bindings: scenarios, the KKT oracle, the assembled closed loop and
//! its simulation. Vectors cross the boundary as lists of floats, reports as
//! dicts.

use std::path::PathBuf;

use hps_core::analysis::{consumption_reduction as reduction, metrics, MetricReport};
use hps_core::dynamics::{assemble_closed_loop, equilibrium, initial_state, spectrum, split_state, ClosedLoopSystem};
use hps_core::integrator::{simulate, Method, SimConfig};
use hps_core::kkt::{solve_kkt, KktSolution};
use hps_core::model::{ScenarioParams, SocialCase};
use hps_core::scenario::{apply_override, load_scenario, load_scenario_str, parse_override, paper_table2};
use hps_core::{HpsError, HpsModel};
use nalgebra::DVector;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: HpsError) -> PyErr {
    match e {
        HpsError::Singular { .. } | HpsError::NotHurwitz { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

pub fn parse_case(case: &str) -> Result<SocialCase, String> {
    case.parse()
}

pub fn parse_method(method: &str) -> Result<Method, String> {
    match method {
        "exact" => Ok(Method::ExactExp),
        "rk4" => Ok(Method::Rk4),
        other => Err(format!("unknown method `{other}` (expected exact or rk4)")),
    }
}

fn list(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

/// A validated scenario. Immutable: the `with_*` methods return new objects.
#[pyclass(name = "Scenario", module = "hps_sim", frozen)]
pub struct PyScenario {
    params: ScenarioParams,
}

#[pymethods]
impl PyScenario {
    /// The bundled four-prosumer scenario.
    #[staticmethod]
    fn bundled() -> Self {
        Self { params: paper_table2() }
    }

    #[staticmethod]
    #[pyo3(signature = (path, overrides = None, case = None))]
    fn load(path: PathBuf, overrides: Option<Vec<String>>, case: Option<&str>) -> PyResult<Self> {
        let overrides = parse_overrides(overrides.unwrap_or_default())?;
        let case = case.map(parse_case).transpose().map_err(PyValueError::new_err)?;
        Ok(Self {
            params: load_scenario(&path, &overrides, case).map_err(to_py)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (text, overrides = None, case = None))]
    fn from_json(text: &str, overrides: Option<Vec<String>>, case: Option<&str>) -> PyResult<Self> {
        let overrides = parse_overrides(overrides.unwrap_or_default())?;
        let case = case.map(parse_case).transpose().map_err(PyValueError::new_err)?;
        Ok(Self {
            params: load_scenario_str(text, &overrides, case).map_err(to_py)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.params).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn with_case(&self, case: &str) -> PyResult<Self> {
        let mut params = self.params.clone();
        params.social_case = parse_case(case).map_err(PyValueError::new_err)?;
        Ok(Self { params })
    }

    /// Sets a dotted path such as `nodes.3.pi_c` and revalidates.
    fn with_override(&self, key: &str, value: &str) -> PyResult<Self> {
        let mut doc = serde_json::to_value(&self.params).map_err(|e| PyValueError::new_err(e.to_string()))?;
        apply_override(&mut doc, key, value).map_err(to_py)?;
        let params: ScenarioParams = serde_json::from_value(doc).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Self {
            params: hps_core::model::validate(params).map_err(to_py)?,
        })
    }

    #[getter]
    fn n_nodes(&self) -> usize {
        self.params.n_nodes()
    }

    #[getter]
    fn n_lines(&self) -> usize {
        self.params.n_lines()
    }

    #[getter]
    fn social_case(&self) -> &'static str {
        match self.params.social_case {
            SocialCase::CaseI => "i",
            SocialCase::CaseII => "ii",
        }
    }

    fn model(&self) -> PyResult<PyModel> {
        Ok(PyModel {
            model: HpsModel::new(self.params.clone()).map_err(to_py)?,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(n_nodes={}, n_lines={}, social_case='{}')",
            self.n_nodes(),
            self.n_lines(),
            self.social_case()
        )
    }
}

fn parse_overrides(raw: Vec<String>) -> PyResult<Vec<(String, String)>> {
    raw.iter().map(|r| parse_override(r).map_err(to_py)).collect()
}

/// Scenario plus every derived matrix.
#[pyclass(name = "Model", module = "hps_sim", frozen)]
pub struct PyModel {
    model: HpsModel,
}

fn kkt_dict<'py>(py: Python<'py>, sol: &KktSolution) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    let p = &sol.primal;
    for (name, v) in [
        ("z_l", &p.z_l),
        ("i_td", &p.i_td),
        ("i_tq", &p.i_tq),
        ("u_d", &p.u_d),
        ("u_q", &p.u_q),
        ("v_d", &p.v_d),
        ("s", &p.s),
        ("lambda_a", &sol.dual.lambda_a),
        ("lambda_b", &sol.dual.lambda_b),
        ("lambda_c", &sol.dual.lambda_c),
        ("lambda_d", &sol.dual.lambda_d),
        ("lambda_e", &sol.dual.lambda_e),
    ] {
        d.set_item(name, v.clone())?;
    }
    d.set_item("objective_value", sol.objective_value)?;
    d.set_item("dual_value", sol.dual_value)?;
    d.set_item("stationarity_residual", sol.stationarity_residual)?;
    d.set_item("feasibility_residual", sol.feasibility_residual)?;
    d.set_item("current_sharing_error", sol.current_sharing_error)?;
    d.set_item("condition_number", sol.condition_number)?;
    Ok(d)
}

fn metrics_dict<'py>(py: Python<'py>, m: &MetricReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("consumption_reduction_amps", m.consumption_reduction_amps)?;
    d.set_item("consumption_reduction_percent", m.consumption_reduction_percent)?;
    d.set_item("current_sharing_error", m.current_sharing_error)?;
    d.set_item("voltage_rmse", m.voltage_rmse)?;
    d.set_item("max_abs_v_q", m.max_abs_v_q)?;
    d.set_item("current_matching_residual", m.current_matching_residual)?;
    Ok(d)
}

#[pymethods]
impl PyModel {
    #[getter]
    fn n(&self) -> usize {
        self.model.n()
    }

    /// Steady personal norms `p̄` of the scenario's social case.
    fn steady_norms(&self) -> Vec<f64> {
        list(&self.model.p_bar)
    }

    /// Optimal setpoints, multipliers and diagnostics of the welfare problem.
    fn solve_kkt<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let sol = solve_kkt(&self.model, &self.model.p_bar).map_err(to_py)?;
        kkt_dict(py, &sol)
    }

    /// Closed loop with the default incentive-port weight.
    fn closed_loop(&self) -> PyResult<PyClosedLoop> {
        let p1 = self.model.default_p1().map_err(to_py)?;
        Ok(PyClosedLoop {
            model: self.model.clone(),
            sys: assemble_closed_loop(&self.model, &p1).map_err(to_py)?,
        })
    }
}

/// The assembled LTI system `ẋ = M x + b`.
#[pyclass(name = "ClosedLoop", module = "hps_sim", frozen)]
pub struct PyClosedLoop {
    model: HpsModel,
    sys: ClosedLoopSystem,
}

#[pymethods]
impl PyClosedLoop {
    #[getter]
    fn dim(&self) -> usize {
        self.sys.dim()
    }

    fn coordinate_names(&self) -> Vec<String> {
        self.sys.layout.coordinate_names()
    }

    /// Row-major `M` as a list of rows.
    fn matrix(&self) -> Vec<Vec<f64>> {
        (0..self.sys.dim())
            .map(|i| self.sys.m.row(i).iter().copied().collect())
            .collect()
    }

    fn offset(&self) -> Vec<f64> {
        list(&self.sys.b)
    }

    fn rhs(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        if x.len() != self.sys.dim() {
            return Err(PyValueError::new_err(format!("expected {} entries, got {}", self.sys.dim(), x.len())));
        }
        Ok(list(&self.sys.rhs(&DVector::from_vec(x))))
    }

    fn equilibrium(&self) -> PyResult<Vec<f64>> {
        Ok(list(&equilibrium(&self.sys).map_err(to_py)?))
    }

    fn spectrum<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let rep = spectrum(&self.sys.m);
        let d = PyDict::new(py);
        d.set_item("max_real", rep.max_real)?;
        d.set_item("min_abs_real", rep.min_abs_real)?;
        d.set_item("max_abs", rep.max_abs)?;
        d.set_item("stable", rep.is_stable(1e-9))?;
        let (re, im): (Vec<f64>, Vec<f64>) = rep.eigenvalues.iter().map(|z| (z.re, z.im)).unzip();
        d.set_item("eigenvalues_real", re)?;
        d.set_item("eigenvalues_imag", im)?;
        Ok(d)
    }

    /// Integrates from `z_l = p = p0`, all other states zero.
    #[pyo3(signature = (t_final = 60.0, output_step = 0.01, p0 = 0.8, method = "exact", tol = None))]
    fn simulate<'py>(
        &self,
        py: Python<'py>,
        t_final: f64,
        output_step: f64,
        p0: f64,
        method: &str,
        tol: Option<f64>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let config = SimConfig {
            t_final,
            output_step,
            method: parse_method(method).map_err(PyValueError::new_err)?,
            convergence_tol: tol,
            ..SimConfig::default()
        };
        let x0 = initial_state(&self.sys.layout, &vec![p0; self.model.n()]).map_err(to_py)?;
        let traj = py.detach(|| simulate(&self.sys, &x0, &config)).map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("times", traj.times.clone())?;
        d.set_item("states", traj.states.iter().map(list).collect::<Vec<_>>())?;
        d.set_item("residuals", traj.residuals.clone())?;
        d.set_item("converged", traj.converged)?;
        d.set_item("convergence_tol", traj.convergence_tol)?;
        Ok(d)
    }

    /// Welfare metrics of a closed-loop state (typically the equilibrium).
    fn metrics<'py>(&self, py: Python<'py>, x: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
        let (xs, _) = split_state(&self.sys.layout, &DVector::from_vec(x)).map_err(to_py)?;
        metrics_dict(py, &metrics(&self.model, &xs))
    }
}

/// `(amps, percent)` reduction of `Σ I_Ld` when loads scale by `z`.
#[pyfunction]
fn consumption_reduction(i_ld: Vec<f64>, z: Vec<f64>) -> PyResult<(f64, f64)> {
    if i_ld.len() != z.len() {
        return Err(PyValueError::new_err("i_ld and z differ in length"));
    }
    Ok(reduction(&i_ld, &z))
}

#[pymodule]
fn hps_sim(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenario>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyClosedLoop>()?;
    m.add_function(wrap_pyfunction!(consumption_reduction, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
