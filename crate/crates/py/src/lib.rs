//! Python bindings. Reports come back as plain dicts.

use convex_reduction::alpha1d::{self, AlphaConcave1D};
use convex_reduction::ballbodies::{self, ballbody_radial};
use convex_reduction::bodies::{
    isotropic_normalize, isotropy_data, ConvexBody, IsotropyMethod, DEFAULT_MC_SAMPLES,
};
use convex_reduction::combinatorics;
use convex_reduction::covariogram::Covariogram;
use convex_reduction::verifier::{self, Theorem1Config};
use convex_reduction::Error;
use nalgebra::DMatrix;
use num_bigint::BigInt;
use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Quadrature(_) => PyArithmeticError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_dict<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

#[pyfunction]
fn dn(n: u64) -> PyResult<f64> {
    Ok(combinatorics::dn(n).map_err(to_py)?.value())
}

/// `D_n` to `digits` decimal places, exact up to the stored precision.
#[pyfunction]
#[pyo3(signature = (n, digits = 30))]
fn dn_decimal(n: u64, digits: usize) -> PyResult<String> {
    Ok(combinatorics::dn(n).map_err(to_py)?.to_decimal(digits))
}

#[pyfunction]
fn dn_le_sqrt2(n: u64) -> PyResult<bool> {
    combinatorics::dn_le_sqrt2_exact(n).map_err(to_py)
}

#[pyfunction]
fn catalan(n: u64) -> BigInt {
    combinatorics::catalan(n)
}

#[pyfunction]
fn binomial(n: u64, k: u64) -> PyResult<BigInt> {
    combinatorics::binom_int(n, k).map_err(to_py)
}

#[pyfunction]
fn lemma41_holds(n: u64) -> PyResult<bool> {
    combinatorics::lemma41_holds(n).map_err(to_py)
}

#[pyfunction]
fn lemma42_holds(n: u64) -> PyResult<bool> {
    combinatorics::lemma42_holds(n).map_err(to_py)
}

#[pyfunction]
fn volume_bound(n: usize) -> PyResult<f64> {
    ballbodies::volume_bound(n).map_err(to_py)
}

#[pyclass(name = "Body", module = "convex_reduction", frozen)]
#[derive(Clone)]
struct PyBody(ConvexBody);

#[pymethods]
impl PyBody {
    #[staticmethod]
    #[pyo3(signature = (dim, side = 1.0))]
    fn cube(dim: usize, side: f64) -> PyResult<Self> {
        ConvexBody::cube(dim, side).map(PyBody).map_err(to_py)
    }

    #[staticmethod]
    #[pyo3(signature = (dim, radius = 1.0))]
    fn ball(dim: usize, radius: f64) -> PyResult<Self> {
        ConvexBody::ball(dim, radius).map(PyBody).map_err(to_py)
    }

    #[staticmethod]
    fn regular_simplex(dim: usize) -> PyResult<Self> {
        ConvexBody::regular_simplex(dim).map(PyBody).map_err(to_py)
    }

    #[staticmethod]
    fn polytope(vertices: Vec<Vec<f64>>) -> PyResult<Self> {
        ConvexBody::polytope(vertices).map(PyBody).map_err(to_py)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        ConvexBody::from_json(text).map(PyBody).map_err(to_py)
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().map_err(to_py)
    }

    /// `x -> matrix x + shift`.
    fn affine(&self, matrix: Vec<Vec<f64>>, shift: Vec<f64>) -> PyResult<Self> {
        let n = matrix.len();
        if matrix.iter().any(|r| r.len() != n) {
            return Err(PyValueError::new_err("matrix must be square"));
        }
        let m = DMatrix::from_row_iterator(n, n, matrix.into_iter().flatten());
        self.0.clone().affine(m, shift).map(PyBody).map_err(to_py)
    }

    /// Volume-one isotropic position.
    #[pyo3(signature = (samples = DEFAULT_MC_SAMPLES, seed = 7))]
    fn normalized(&self, samples: usize, seed: u64) -> PyResult<Self> {
        let data = isotropy_data(&self.0, method(&self.0, samples, seed)).map_err(to_py)?;
        isotropic_normalize(&self.0, &data)
            .map(PyBody)
            .map_err(to_py)
    }

    #[pyo3(signature = (samples = DEFAULT_MC_SAMPLES, seed = 7))]
    fn isotropic_constant(&self, samples: usize, seed: u64) -> PyResult<(f64, f64)> {
        let data = isotropy_data(&self.0, method(&self.0, samples, seed)).map_err(to_py)?;
        Ok((data.isotropic_constant.value, data.isotropic_constant.error))
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn name(&self) -> String {
        self.0.name()
    }

    fn volume(&self) -> PyResult<f64> {
        Ok(self.0.volume().map_err(to_py)?.value)
    }

    fn contains(&self, x: Vec<f64>) -> PyResult<bool> {
        self.0.contains(&x).map_err(to_py)
    }

    fn minkowski_functional(&self, x: Vec<f64>) -> PyResult<f64> {
        self.0.minkowski_functional(&x).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("Body({})", self.0.name())
    }
}

fn method(body: &ConvexBody, samples: usize, seed: u64) -> IsotropyMethod {
    if body.exact_moments().is_some() {
        IsotropyMethod::Exact
    } else {
        IsotropyMethod::MonteCarlo { samples, seed }
    }
}

#[pyclass(name = "Covariogram", module = "convex_reduction", frozen)]
struct PyCovariogram(Covariogram);

#[pymethods]
impl PyCovariogram {
    /// `backend` is "auto", "closed" or "mc".
    #[new]
    #[pyo3(signature = (body, backend = "auto", samples = DEFAULT_MC_SAMPLES, seed = 7))]
    fn new(body: &PyBody, backend: &str, samples: usize, seed: u64) -> PyResult<Self> {
        let b = body.0.clone();
        let g = match backend {
            "auto" => Covariogram::auto(b, samples, seed),
            "closed" => Covariogram::closed_form(b),
            "mc" => Covariogram::monte_carlo(b, samples, seed),
            other => return Err(PyValueError::new_err(format!("unknown backend '{other}'"))),
        };
        g.map(PyCovariogram).map_err(to_py)
    }

    /// `(value, error)` at `x`.
    fn __call__(&self, x: Vec<f64>) -> PyResult<(f64, f64)> {
        let e = self.0.eval(&x).map_err(to_py)?;
        Ok((e.value, e.error))
    }

    #[getter]
    fn is_closed_form(&self) -> bool {
        self.0.is_closed_form()
    }

    #[pyo3(signature = (u, p, tol = 1e-10))]
    fn ray_moment(&self, u: Vec<f64>, p: f64, tol: f64) -> PyResult<(f64, f64)> {
        let e = self.0.ray_moment(&u, p, tol).map_err(to_py)?;
        Ok((e.value, e.error))
    }

    /// Radial function of the Ball body `K_p(g)` in direction `u`.
    #[pyo3(signature = (u, p, tol = 1e-10))]
    fn ballbody_radial(&self, u: Vec<f64>, p: f64, tol: f64) -> PyResult<(f64, f64)> {
        let e = ballbody_radial(&self.0, p, &u, tol).map_err(to_py)?;
        Ok((e.value, e.error))
    }
}

#[pyfunction]
#[pyo3(signature = (body, dirs = None, seed = 7, samples = DEFAULT_MC_SAMPLES, tol = 1e-9, force_monte_carlo = false))]
fn theorem1<'py>(
    py: Python<'py>,
    body: &PyBody,
    dirs: Option<usize>,
    seed: u64,
    samples: usize,
    tol: f64,
    force_monte_carlo: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let mut cfg = Theorem1Config {
        seed,
        mc_samples: samples,
        quad_tol: tol,
        force_monte_carlo,
        ..Default::default()
    };
    if let Some(d) = dirs {
        cfg.dirs_2d = d;
        cfg.dirs_nd = d;
    }
    let body = body.0.clone();
    let r = py
        .allow_threads(|| verifier::theorem1_verify(&body, &cfg))
        .map_err(to_py)?;
    to_dict(py, &r)
}

/// `G(p)` of `phi^(1/alpha)` for a concave piecewise-linear `phi` given at `knots`.
#[pyfunction]
#[pyo3(signature = (alpha, knots, phi, p, tol = 1e-10))]
fn alpha_g(alpha: f64, knots: Vec<f64>, phi: Vec<f64>, p: f64, tol: f64) -> PyResult<f64> {
    let f = AlphaConcave1D::new(alpha, knots, phi).map_err(to_py)?;
    Ok(f.g(p, tol).map_err(to_py)?.value)
}

#[pyfunction]
#[pyo3(signature = (trials, alpha, seed = 7, tol = 1e-7, p_grid = vec![0.5, 1.0, 2.0, 4.0, 8.0]))]
fn monotonicity_suite<'py>(
    py: Python<'py>,
    trials: usize,
    alpha: f64,
    seed: u64,
    tol: f64,
    p_grid: Vec<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let r = py
        .allow_threads(|| alpha1d::monotonicity_suite(trials, alpha, &p_grid, seed, tol))
        .map_err(to_py)?;
    to_dict(py, &r)
}

#[pymodule]
#[pyo3(name = "convex_reduction")]
fn py_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(dn, m)?)?;
    m.add_function(wrap_pyfunction!(dn_decimal, m)?)?;
    m.add_function(wrap_pyfunction!(dn_le_sqrt2, m)?)?;
    m.add_function(wrap_pyfunction!(catalan, m)?)?;
    m.add_function(wrap_pyfunction!(binomial, m)?)?;
    m.add_function(wrap_pyfunction!(lemma41_holds, m)?)?;
    m.add_function(wrap_pyfunction!(lemma42_holds, m)?)?;
    m.add_function(wrap_pyfunction!(volume_bound, m)?)?;
    m.add_function(wrap_pyfunction!(theorem1, m)?)?;
    m.add_function(wrap_pyfunction!(alpha_g, m)?)?;
    m.add_function(wrap_pyfunction!(monotonicity_suite, m)?)?;
    m.add_class::<PyBody>()?;
    m.add_class::<PyCovariogram>()?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
