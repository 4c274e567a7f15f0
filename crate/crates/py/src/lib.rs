//! Python bindings for the center-manifold learning toolkit.
//!
//! Exposes the main pipeline pieces: example systems and dataset generation,
//! kernels, greedy center selection, constrained fitting, residual and
//! trajectory diagnostics, and the pinned example check suites.

use std::fs::File;
use std::io::{BufReader, BufWriter};

use cmlearn::analysis::{self, TestGrid};
use cmlearn::dynsys::{register_example, SplitSystem, VecF};
use cmlearn::greedy::{p_greedy, p_greedy_constrained};
use cmlearn::integrate::{generate_dataset, simulate_reduced, IntegratorConfig};
use cmlearn::kernels::KernelSpec;
use cmlearn::manifold::{fit as fit_model, Approximant, FitConfig};
use cmlearn::report::{run_example1, run_example2, run_example3, Check};
use cmlearn::ManifoldModel;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py_err(e: cmlearn::Error) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn vec_to_vecf(v: Vec<f64>, dim: usize, what: &str) -> PyResult<VecF> {
    if v.len() != dim {
        return Err(PyValueError::new_err(format!(
            "{what}: expected {dim} components, got {}",
            v.len()
        )));
    }
    Ok(VecF::from_vec(v))
}

fn points_to_vecf(points: Vec<Vec<f64>>) -> PyResult<Vec<VecF>> {
    let Some(first) = points.first() else {
        return Err(PyValueError::new_err("point list is empty"));
    };
    let dim = first.len();
    if dim == 0 {
        return Err(PyValueError::new_err("points must have at least 1 component"));
    }
    points
        .into_iter()
        .enumerate()
        .map(|(i, p)| vec_to_vecf(p, dim, &format!("point {i}")))
        .collect()
}

/// A positive-definite kernel on R^d.
#[pyclass(frozen, skip_from_py_object)]
#[derive(Clone)]
struct Kernel {
    spec: KernelSpec,
}

#[pymethods]
impl Kernel {
    /// Polynomial kernel (1 + gamma * <x, y>)^degree.
    #[staticmethod]
    fn polynomial(gamma: f64, degree: u32) -> PyResult<Self> {
        Ok(Kernel {
            spec: KernelSpec::polynomial(gamma, degree).map_err(to_py_err)?,
        })
    }

    /// Gaussian kernel exp(-eps * |x - y|^2).
    #[staticmethod]
    fn gaussian(eps: f64) -> PyResult<Self> {
        Ok(Kernel {
            spec: KernelSpec::gaussian(eps).map_err(to_py_err)?,
        })
    }

    /// Compactly supported Wendland kernel (1 - r)+^3 (1 + 3r).
    #[staticmethod]
    fn wendland() -> Self {
        Kernel {
            spec: KernelSpec::Wendland,
        }
    }

    #[getter]
    fn name(&self) -> String {
        self.spec.name()
    }

    fn eval(&self, x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
        if x.len() != y.len() {
            return Err(PyValueError::new_err("x and y must have equal length"));
        }
        self.spec.eval(&x, &y).map_err(to_py_err)
    }

    /// Gradient of k(x, .) with respect to the second argument, at y.
    fn grad(&self, x: Vec<f64>, y: Vec<f64>) -> PyResult<Vec<f64>> {
        if x.len() != y.len() {
            return Err(PyValueError::new_err("x and y must have equal length"));
        }
        self.spec.grad2(&x, &y).map_err(to_py_err)
    }

    fn __repr__(&self) -> String {
        format!("Kernel({})", self.spec.name())
    }
}

/// A fitted manifold model y = h(x) with exact h(0) = 0 and Dh(0) = 0.
#[pyclass(frozen)]
struct Model {
    inner: Approximant,
}

impl Model {
    fn check_dim(&self, x: &[f64]) -> PyResult<()> {
        let d = self.inner.dim_in();
        if x.len() != d {
            return Err(PyValueError::new_err(format!(
                "expected {d} components, got {}",
                x.len()
            )));
        }
        Ok(())
    }
}

#[pymethods]
impl Model {
    #[getter]
    fn dim_in(&self) -> usize {
        self.inner.dim_in()
    }

    #[getter]
    fn num_centers(&self) -> usize {
        self.inner.centers.len()
    }

    #[getter]
    fn centers(&self) -> Vec<Vec<f64>> {
        self.inner
            .centers
            .iter()
            .map(|c| c.iter().copied().collect())
            .collect()
    }

    #[getter]
    fn alpha(&self) -> Vec<f64> {
        self.inner.alpha.clone()
    }

    #[getter(lambda_)]
    fn lambda_(&self) -> f64 {
        self.inner.lambda
    }

    fn value(&self, x: Vec<f64>) -> PyResult<f64> {
        self.check_dim(&x)?;
        Ok(self.inner.value(&VecF::from_vec(x)))
    }

    fn gradient(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.check_dim(&x)?;
        Ok(self.inner.gradient(&VecF::from_vec(x)).iter().copied().collect())
    }

    /// Taylor coefficients of h at the origin, up to the given total degree,
    /// as a list of (multi_index, coefficient) pairs.
    fn taylor(&self, order: u32) -> PyResult<Vec<(Vec<u32>, f64)>> {
        self.inner.taylor(order).map_err(to_py_err)
    }

    fn save(&self, path: String) -> PyResult<()> {
        let file = File::create(&path)
            .map_err(|e| PyRuntimeError::new_err(format!("create {path}: {e}")))?;
        let mut w = BufWriter::new(file);
        self.inner.write_text(&mut w).map_err(to_py_err)
    }

    #[staticmethod]
    fn load(path: String) -> PyResult<Self> {
        let file =
            File::open(&path).map_err(|e| PyRuntimeError::new_err(format!("open {path}: {e}")))?;
        let mut r = BufReader::new(file);
        Ok(Model {
            inner: Approximant::read_text(&mut r).map_err(to_py_err)?,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(kernel={}, centers={}, dim_in={})",
            self.inner.kernel.name(),
            self.inner.centers.len(),
            self.inner.dim_in()
        )
    }
}

/// One of the built-in split dynamical systems (ids 1, 2, 3).
#[pyclass(frozen)]
struct System {
    sys: SplitSystem,
    id: u32,
}

impl System {
    fn integrator(t_final: f64, dt: f64) -> IntegratorConfig {
        IntegratorConfig {
            t_final,
            dt,
            ..IntegratorConfig::default()
        }
    }
}

#[pymethods]
impl System {
    #[staticmethod]
    fn example(id: u32) -> PyResult<Self> {
        Ok(System {
            sys: register_example(id).map_err(to_py_err)?,
            id,
        })
    }

    #[getter]
    fn dim_reduced(&self) -> usize {
        self.sys.d
    }

    /// Simulate from the standard corner grid of initial conditions and
    /// harvest the near-origin (x, y) samples. Returns (points, targets).
    #[pyo3(signature = (t_final=1000.0, dt=0.1))]
    fn generate_dataset(&self, t_final: f64, dt: f64) -> PyResult<(Vec<Vec<f64>>, Vec<f64>)> {
        let ds = generate_dataset(&self.sys, &Self::integrator(t_final, dt)).map_err(to_py_err)?;
        let x = ds.x.iter().map(|p| p.iter().copied().collect()).collect();
        let y = ds.y.iter().map(|p| p[0]).collect();
        Ok((x, y))
    }

    /// Defect of the invariance equation for the given model at x.
    fn residual(&self, model: &Model, x: Vec<f64>) -> PyResult<f64> {
        let x = vec_to_vecf(x, self.sys.d, "x")?;
        Ok(analysis::residual(&self.sys, &model.inner, &x))
    }

    /// Max invariance defect over the standard test grid [-0.1, 0.1]^d.
    fn max_residual(&self, model: &Model) -> PyResult<f64> {
        let grid = TestGrid::standard(self.sys.d).map_err(to_py_err)?;
        Ok(analysis::max_residual(&self.sys, &model.inner, &grid))
    }

    /// Integrate the reduced dynamics x' = L1 x + N1(x, h(x)) from x0.
    /// Returns (times, states).
    /// `newton_tol` may need loosening above the default when the model's
    /// evaluation noise exceeds the implicit-Euler Newton residual target.
    #[pyo3(signature = (model, x0, t_final=350.0, dt=0.1, newton_tol=None))]
    fn simulate_reduced(
        &self,
        model: &Model,
        x0: Vec<f64>,
        t_final: f64,
        dt: f64,
        newton_tol: Option<f64>,
    ) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
        let x0 = vec_to_vecf(x0, self.sys.d, "x0")?;
        let mut cfg = Self::integrator(t_final, dt);
        if let Some(tol) = newton_tol {
            cfg.newton_tol = tol;
        }
        let traj = simulate_reduced(&self.sys, &model.inner, &x0, &cfg).map_err(to_py_err)?;
        let states = traj
            .states
            .iter()
            .map(|s| s.iter().copied().collect())
            .collect();
        Ok((traj.times, states))
    }

    fn __repr__(&self) -> String {
        format!("System(example={}, dim_reduced={})", self.id, self.sys.d)
    }
}

/// Fit the constrained kernel model to scalar targets y at points x.
#[pyfunction]
#[pyo3(name = "fit")]
fn fit_py(x: Vec<Vec<f64>>, y: Vec<f64>, kernel: &Kernel, lambda: f64) -> PyResult<Model> {
    let xs = points_to_vecf(x)?;
    if xs.len() != y.len() {
        return Err(PyValueError::new_err("x and y must have equal length"));
    }
    let config = FitConfig::new(lambda, kernel.spec.clone()).map_err(to_py_err)?;
    Ok(Model {
        inner: fit_model(&xs, &y, &config).map_err(to_py_err)?,
    })
}

/// P-greedy center selection. Returns (selected_indices, power_history).
///
/// With `constrained=True` the power function is conditioned on the origin
/// value and gradient functionals, matching the space the constrained fit
/// searches; this is what the built-in example pipelines use.
#[pyfunction]
#[pyo3(signature = (x, kernel, eps_tol, max_points, constrained=true))]
fn greedy_select(
    x: Vec<Vec<f64>>,
    kernel: &Kernel,
    eps_tol: f64,
    max_points: usize,
    constrained: bool,
) -> PyResult<(Vec<usize>, Vec<f64>)> {
    let xs = points_to_vecf(x)?;
    let r = if constrained {
        p_greedy_constrained(&xs, &kernel.spec, eps_tol, max_points)
    } else {
        p_greedy(&xs, &kernel.spec, eps_tol, max_points)
    }
    .map_err(to_py_err)?;
    Ok((r.indices, r.power_history))
}

/// Run the full pinned pipeline for one example and return its check list as
/// (name, expected, measured, tolerance, passed) tuples.
#[pyfunction]
fn run_example_checks(id: u32) -> PyResult<Vec<(String, String, String, String, bool)>> {
    let checks: Vec<Check> = match id {
        1 => run_example1().map_err(to_py_err)?.checks,
        2 => run_example2().map_err(to_py_err)?.checks,
        3 => run_example3().map_err(to_py_err)?.checks,
        _ => return Err(PyValueError::new_err("example id must be 1, 2, or 3")),
    };
    Ok(checks
        .into_iter()
        .map(|c| (c.name, c.expected, c.measured, c.tolerance, c.pass))
        .collect())
}

#[pymodule]
fn cmlearn_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Kernel>()?;
    m.add_class::<Model>()?;
    m.add_class::<System>()?;
    m.add_function(wrap_pyfunction!(fit_py, m)?)?;
    m.add_function(wrap_pyfunction!(greedy_select, m)?)?;
    m.add_function(wrap_pyfunction!(run_example_checks, m)?)?;
    Ok(())
}
