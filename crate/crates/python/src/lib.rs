//! Python bindings. Structured inputs (instances, objectives, benchmark
//! configs) cross the boundary as JSON strings in the same format the CLI
//! reads; everything else is plain lists and floats.

use droc_core::bench::{self, BenchConfig};
use droc_core::calibrate::{self, bootstrap_tune, candidate_grid, DroModel};
use droc_core::cones::{self, OrderCone};
use droc_core::model::{self, AxisBox, DecisionSpec, PiecewiseObjective};
use droc_core::oracle::{product_grid, worst_case_expectation, FiniteInstance};
use droc_core::partition::{self, build_nominal, partition_from_data, RegionCount};
use droc_core::reformulate::{self, reduce_drow, reduce_saa, solve_reduced};
use droc_core::DroError;
use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(pydroc, InfeasibleAmbiguityError, PyValueError);
create_exception!(pydroc, NoReliableCandidateError, PyValueError);

fn py_err(e: DroError) -> PyErr {
    match e {
        DroError::InfeasibleAmbiguity => InfeasibleAmbiguityError::new_err(e.to_string()),
        DroError::NoReliableCandidate(_) => NoReliableCandidateError::new_err(e.to_string()),
        DroError::Solver(_) | DroError::Io(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn json_err(e: serde_json::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Order cone `{p : A p >= 0}` over region probabilities.
#[pyclass(name = "OrderCone", module = "pydroc", frozen)]
struct PyOrderCone {
    inner: OrderCone,
}

#[pymethods]
impl PyOrderCone {
    #[staticmethod]
    fn trivial(n: usize) -> Self {
        PyOrderCone {
            inner: OrderCone::trivial(n),
        }
    }

    #[staticmethod]
    fn simple(n: usize) -> PyResult<Self> {
        Ok(PyOrderCone {
            inner: cones::make_simple_order(n).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn tree(n: usize) -> PyResult<Self> {
        Ok(PyOrderCone {
            inner: cones::make_tree_order(n).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn star(n: usize) -> PyResult<Self> {
        Ok(PyOrderCone {
            inner: cones::make_star_shaped(n).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn umbrella(n: usize, mode: usize) -> PyResult<Self> {
        Ok(PyOrderCone {
            inner: cones::make_umbrella(n, mode).map_err(py_err)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (ratios, tolerance = 0.1))]
    fn ratio(ratios: Vec<f64>, tolerance: f64) -> PyResult<Self> {
        Ok(PyOrderCone {
            inner: cones::make_ratio_cone(&ratios, tolerance).map_err(py_err)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (probabilities, tolerance = 0.1))]
    fn from_probabilities(probabilities: Vec<f64>, tolerance: f64) -> PyResult<Self> {
        Ok(PyOrderCone {
            inner: cones::ratio_cone_from_probabilities(&probabilities, tolerance).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn custom(n: usize, matrix: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(PyOrderCone {
            inner: OrderCone::custom(n, matrix).map_err(py_err)?,
        })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn matrix(&self) -> Vec<Vec<f64>> {
        self.inner.matrix.clone()
    }

    fn contains(&self, p: Vec<f64>) -> PyResult<bool> {
        self.inner.contains(&p).map_err(py_err)
    }

    fn min_radius(&self, p_hat: Vec<f64>) -> PyResult<f64> {
        reformulate::min_radius_feasible(&self.inner, &p_hat).map_err(py_err)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(json_err)
    }

    fn __repr__(&self) -> String {
        format!("OrderCone(kind={:?}, dim={}, rows={})", self.inner.kind, self.inner.dim(), self.inner.rows())
    }
}

/// Axis-aligned partition of a box support.
#[pyclass(name = "Partition", module = "pydroc", frozen)]
struct PyPartition {
    inner: model::PartitionScheme,
}

#[pymethods]
impl PyPartition {
    /// Clusters `samples` and fits the region tree. Pass `k` for a fixed
    /// count or `k_max` for the elbow rule.
    #[staticmethod]
    #[pyo3(signature = (samples, lower, upper, k = None, k_max = None, seed = 0))]
    fn fit(
        samples: Vec<Vec<f64>>,
        lower: Vec<f64>,
        upper: Vec<f64>,
        k: Option<usize>,
        k_max: Option<usize>,
        seed: u64,
    ) -> PyResult<Self> {
        let count = match (k, k_max) {
            (Some(k), None) => RegionCount::Fixed(k),
            (None, Some(k_max)) => RegionCount::Elbow { k_max },
            _ => return Err(PyValueError::new_err("give exactly one of k and k_max")),
        };
        let support = AxisBox::new(lower, upper).map_err(py_err)?;
        Ok(PyPartition {
            inner: partition_from_data(&samples, &support, count, seed).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn single(lower: Vec<f64>, upper: Vec<f64>) -> PyResult<Self> {
        Ok(PyPartition {
            inner: model::PartitionScheme::single(AxisBox::new(lower, upper).map_err(py_err)?),
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// `(lower, upper)` per region.
    fn regions(&self) -> Vec<(Vec<f64>, Vec<f64>)> {
        self.inner
            .regions
            .iter()
            .map(|r| (r.lower.clone(), r.upper.clone()))
            .collect()
    }

    fn classify(&self, point: Vec<f64>) -> Option<usize> {
        self.inner.classify(&point)
    }

    /// Nominal weights and per-region atoms of `samples`.
    fn nominal(&self, samples: Vec<Vec<f64>>) -> PyResult<(Vec<f64>, Vec<Vec<Vec<f64>>>)> {
        let nom = build_nominal(&samples, &self.inner).map_err(py_err)?;
        Ok((nom.weights, nom.atoms))
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(json_err)
    }
}

/// Piecewise objective `f(x, xi)`.
#[pyclass(name = "Objective", module = "pydroc", frozen)]
struct PyObjective {
    inner: PiecewiseObjective,
}

#[pymethods]
impl PyObjective {
    #[staticmethod]
    fn newsvendor(h: f64, b: f64) -> PyResult<Self> {
        Ok(PyObjective {
            inner: bench::newsvendor_objective(h, b).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn multi_item_newsvendor(h: Vec<f64>, b: Vec<f64>) -> PyResult<Self> {
        Ok(PyObjective {
            inner: bench::multi_item_newsvendor_objective(&h, &b).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn cournot() -> Self {
        PyObjective {
            inner: bench::cournot_objective(),
        }
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyObjective {
            inner: serde_json::from_str(text).map_err(json_err)?,
        })
    }

    fn __call__(&self, x: Vec<f64>, xi: Vec<f64>) -> f64 {
        self.inner.eval(&x, &xi)
    }

    #[getter]
    fn separable(&self) -> bool {
        self.inner.is_separable()
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(json_err)
    }
}

fn solution_dict<'py>(py: Python<'py>, sol: &reformulate::DroSolution) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("x", sol.x.clone())?;
    d.set_item("certificate", sol.certificate)?;
    d.set_item("status", format!("{:?}", sol.solution.status))?;
    d.set_item("iterations", sol.solution.iterations)?;
    Ok(d)
}

/// Full problem instance.
#[pyclass(name = "Instance", module = "pydroc", frozen)]
struct PyInstance {
    inner: model::Instance,
}

#[pymethods]
impl PyInstance {
    #[new]
    #[pyo3(signature = (objective, partition, samples, decision_lower, decision_upper, cone, epsilon, rho))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        objective: &PyObjective,
        partition: &PyPartition,
        samples: Vec<Vec<f64>>,
        decision_lower: Vec<f64>,
        decision_upper: Vec<f64>,
        cone: &PyOrderCone,
        epsilon: f64,
        rho: f64,
    ) -> PyResult<Self> {
        let nominal = build_nominal(&samples, &partition.inner).map_err(py_err)?;
        let inner = model::Instance {
            decision: DecisionSpec::boxed(decision_lower, decision_upper),
            objective: objective.inner.clone(),
            partition: partition.inner.clone(),
            nominal,
            ambiguity: model::AmbiguityParams {
                epsilon,
                rho,
                cone: cone.inner.clone(),
            },
        };
        let violations = inner.validate();
        if let Some(v) = violations.first() {
            return Err(PyValueError::new_err(format!("{}: {}", v.invariant, v.detail)));
        }
        Ok(PyInstance { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyInstance {
            inner: model::Instance::from_json(text).map_err(py_err)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(py_err)
    }

    /// Invariant violations as `"name: detail"` strings.
    fn validate(&self) -> Vec<String> {
        self.inner
            .validate()
            .into_iter()
            .map(|v| format!("{}: {}", v.invariant, v.detail))
            .collect()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.nominal.weights.clone()
    }

    #[pyo3(signature = (tol = 1e-8))]
    fn solve<'py>(&self, py: Python<'py>, tol: f64) -> PyResult<Bound<'py, PyDict>> {
        let inst = self.inner.clone();
        let sol = py
            .detach(move || reformulate::solve_instance(&inst, tol))
            .map_err(py_err)?;
        solution_dict(py, &sol)
    }

    #[pyo3(signature = (x, tol = 1e-8))]
    fn worst_case(&self, py: Python<'_>, x: Vec<f64>, tol: f64) -> PyResult<f64> {
        let inst = self.inner.clone();
        py.detach(move || reformulate::worst_case_at(&inst, &x, tol)).map_err(py_err)
    }

    /// Brute-force worst case on product grids with `density` interior
    /// points per coordinate.
    #[pyo3(signature = (x, density = 0))]
    fn oracle<'py>(&self, py: Python<'py>, x: Vec<f64>, density: usize) -> PyResult<Bound<'py, PyDict>> {
        let inst = &self.inner;
        let grids = inst
            .partition
            .regions
            .iter()
            .zip(&inst.nominal.atoms)
            .map(|(r, atoms)| {
                let extra: Vec<Vec<f64>> = (0..r.dim())
                    .map(|c| {
                        (1..=density)
                            .map(|k| r.lower[c] + (r.upper[c] - r.lower[c]) * k as f64 / (density + 1) as f64)
                            .collect()
                    })
                    .collect();
                product_grid(r, atoms, &extra)
            })
            .collect();
        let fi = FiniteInstance::new(inst, grids).map_err(py_err)?;
        let wc = worst_case_expectation(&x, &fi).map_err(py_err)?;
        let d = PyDict::new(py);
        d.set_item("value", wc.value)?;
        d.set_item("p", wc.p)?;
        Ok(d)
    }
}

#[pyfunction]
fn solve_saa<'py>(
    py: Python<'py>,
    samples: Vec<Vec<f64>>,
    objective: &PyObjective,
    lower: Vec<f64>,
    upper: Vec<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let prog = reduce_saa(&samples, &objective.inner, &DecisionSpec::boxed(lower, upper)).map_err(py_err)?;
    solution_dict(py, &solve_reduced(&prog, 1e-10).map_err(py_err)?)
}

#[pyfunction]
#[allow(clippy::too_many_arguments)]
fn solve_wasserstein<'py>(
    py: Python<'py>,
    samples: Vec<Vec<f64>>,
    objective: &PyObjective,
    lower: Vec<f64>,
    upper: Vec<f64>,
    epsilon: f64,
    support_lower: Vec<f64>,
    support_upper: Vec<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let support = AxisBox::new(support_lower, support_upper).map_err(py_err)?;
    let prog = reduce_drow(&samples, &objective.inner, &DecisionSpec::boxed(lower, upper), epsilon, &support)
        .map_err(py_err)?;
    solution_dict(py, &solve_reduced(&prog, 1e-10).map_err(py_err)?)
}

/// k-means with k-means++ restarts: `(centroids, labels, distortion)`.
#[pyfunction]
#[pyo3(signature = (points, k, seed = 0))]
fn kmeans(points: Vec<Vec<f64>>, k: usize, seed: u64) -> PyResult<(Vec<Vec<f64>>, Vec<usize>, f64)> {
    let m = partition::kmeans(&points, k, seed).map_err(py_err)?;
    Ok((m.centroids, m.labels, m.distortion))
}

#[pyfunction]
fn chi2_quantile(dof: usize, q: f64) -> PyResult<f64> {
    calibrate::chi2_quantile(dof, q).map_err(py_err)
}

#[pyfunction]
fn radius_total_variation(n: usize, regions: usize, beta: f64) -> PyResult<f64> {
    calibrate::radius_total_variation(n, regions, beta).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (n, regions, beta, phi_dd1 = 1.0))]
fn radius_phi_divergence(n: usize, regions: usize, beta: f64, phi_dd1: f64) -> PyResult<f64> {
    calibrate::radius_phi_divergence(n, regions, beta, phi_dd1).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (n_i, beta, dim, a = 2.0, b = 1.0, c = 1.0))]
fn epsilon_concentration(n_i: usize, beta: f64, dim: usize, a: f64, b: f64, c: f64) -> PyResult<f64> {
    calibrate::epsilon_concentration(n_i, beta, dim, a, b, c).map_err(py_err)
}

/// Bootstrap tuning. `model_json` is a serialized model as accepted by the
/// CLI `tune` config. Returns the selected candidate and the candidate table
/// as CSV text.
#[pyfunction]
#[pyo3(signature = (samples, model_json, epsilons, rhos, beta = 0.15, kboot = 50, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn tune<'py>(
    py: Python<'py>,
    samples: Vec<Vec<f64>>,
    model_json: &str,
    epsilons: Vec<f64>,
    rhos: Vec<f64>,
    beta: f64,
    kboot: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let model: DroModel = serde_json::from_str(model_json).map_err(json_err)?;
    let grid = candidate_grid(&epsilons, &rhos);
    let r = py
        .detach(move || bootstrap_tune(&samples, &model, &grid, beta, kboot, seed))
        .map_err(py_err)?;
    let d = PyDict::new(py);
    let c = r.candidate.expect("tuning succeeded with a candidate");
    d.set_item("epsilon", c.epsilon)?;
    d.set_item("rho", c.rho)?;
    d.set_item("x", r.solution.as_ref().map(|s| s.x.clone()))?;
    d.set_item("certificate", r.solution.as_ref().map(|s| s.certificate))?;
    d.set_item("table", r.to_csv_string().map_err(py_err)?)?;
    Ok(d)
}

/// Runs a benchmark config (JSON with `"schema": 1`); returns the CSV text
/// and the summary as JSON text.
#[pyfunction]
fn run_benchmark(py: Python<'_>, config_json: &str) -> PyResult<(String, String)> {
    let config = BenchConfig::from_json(config_json).map_err(py_err)?;
    let result = py.detach(move || bench::run_benchmark(&config)).map_err(py_err)?;
    let csv = bench::csv_string(&result).map_err(py_err)?;
    let summary = serde_json::to_string(&bench::summarize(&result)).map_err(json_err)?;
    Ok((csv, summary))
}

/// JSON of a preset benchmark config: `single_item`, `multi_item` or `cournot`.
#[pyfunction]
fn benchmark_preset(name: &str, n_grid: Vec<usize>, trials: usize, seed: u64) -> PyResult<String> {
    let config = match name {
        "single_item" => BenchConfig::single_item(n_grid, trials, seed),
        "multi_item" => BenchConfig::multi_item(n_grid, trials, seed),
        "cournot" => BenchConfig::cournot(n_grid, trials, seed),
        _ => return Err(PyValueError::new_err(format!("unknown preset {name}"))),
    };
    serde_json::to_string(&config).map_err(json_err)
}

#[pymodule]
fn pydroc(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyOrderCone>()?;
    m.add_class::<PyPartition>()?;
    m.add_class::<PyObjective>()?;
    m.add_class::<PyInstance>()?;
    m.add_function(wrap_pyfunction!(solve_saa, m)?)?;
    m.add_function(wrap_pyfunction!(solve_wasserstein, m)?)?;
    m.add_function(wrap_pyfunction!(kmeans, m)?)?;
    m.add_function(wrap_pyfunction!(chi2_quantile, m)?)?;
    m.add_function(wrap_pyfunction!(radius_total_variation, m)?)?;
    m.add_function(wrap_pyfunction!(radius_phi_divergence, m)?)?;
    m.add_function(wrap_pyfunction!(epsilon_concentration, m)?)?;
    m.add_function(wrap_pyfunction!(tune, m)?)?;
    m.add_function(wrap_pyfunction!(run_benchmark, m)?)?;
    m.add_function(wrap_pyfunction!(benchmark_preset, m)?)?;
    m.add("InfeasibleAmbiguityError", m.py().get_type::<InfeasibleAmbiguityError>())?;
    m.add("NoReliableCandidateError", m.py().get_type::<NoReliableCandidateError>())?;
    Ok(())
}
