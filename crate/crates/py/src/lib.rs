//! Python bindings for the `fuzzstoch` core crate.

use fuzzstoch::fuzzy::{FuzzyVariable as CoreFuzzy, Knot};
use fuzzstoch::homog;
use fuzzstoch::microdata::{self, FiberMapSpec, PhaseModuli, Provenance};
use fuzzstoch::randfield;
use fuzzstoch::solver::{self, ProblemSpec};
use fuzzstoch::stats;
use fuzzstoch::validate::{self, ValidationSettings};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(fuzzstoch, FuzzstochError, PyException);

fn err(e: impl std::fmt::Display) -> PyErr {
    FuzzstochError::new_err(e.to_string())
}

fn provenance(name: &str) -> PyResult<Provenance> {
    match name {
        "extracted" => Ok(Provenance::Extracted),
        "bootstrap" => Ok(Provenance::Bootstrap),
        other => Err(err(format!("unknown provenance {other:?}"))),
    }
}

/// Rows of 1D compliance samples on a uniform grid.
#[pyclass(name = "SampleSet", module = "fuzzstoch")]
pub struct PySampleSet {
    inner: microdata::SampleSet,
}

#[pymethods]
impl PySampleSet {
    #[new]
    #[pyo3(signature = (h, rows, provenance = "extracted"))]
    fn new(h: f64, rows: Vec<Vec<f64>>, provenance: &str) -> PyResult<Self> {
        let p = self::provenance(provenance)?;
        Ok(Self { inner: microdata::SampleSet::from_rows(h, rows, p).map_err(err)? })
    }

    #[staticmethod]
    #[pyo3(signature = (text, provenance = "extracted"))]
    fn from_csv(text: &str, provenance: &str) -> PyResult<Self> {
        let p = self::provenance(provenance)?;
        Ok(Self { inner: microdata::SampleSet::from_csv(text, p).map_err(err)? })
    }

    #[getter]
    fn h(&self) -> f64 {
        self.inner.h
    }

    #[getter]
    fn n_samples(&self) -> usize {
        self.inner.n_samples()
    }

    #[getter]
    fn n_x(&self) -> usize {
        self.inner.n_x()
    }

    #[getter]
    fn length(&self) -> f64 {
        self.inner.length()
    }

    fn samples(&self) -> Vec<Vec<f64>> {
        self.inner.samples().map(|r| r.to_vec()).collect()
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }

    /// Resamples to `m` samples of `length` um.
    fn bootstrap(&self, py: Python<'_>, m: usize, length: f64, seed: u64) -> PyResult<Self> {
        let s = py.detach(|| microdata::bootstrap(&self.inner, m, length, seed)).map_err(err)?;
        Ok(Self { inner: s })
    }

    fn homogenize(&self, window: f64) -> PyResult<Self> {
        Ok(Self { inner: homog::homogenize_set(&self.inner, window).map_err(err)? })
    }

    fn __repr__(&self) -> String {
        format!("SampleSet(n_samples={}, n_x={}, h={})", self.inner.n_samples(), self.inner.n_x(), self.inner.h)
    }
}

/// Piecewise-linear convex fuzzy number.
#[pyclass(name = "FuzzyVariable", module = "fuzzstoch")]
pub struct PyFuzzyVariable {
    inner: CoreFuzzy,
}

#[pymethods]
impl PyFuzzyVariable {
    #[new]
    fn new(knots: Vec<(f64, f64)>) -> PyResult<Self> {
        let knots = knots.into_iter().map(|(z, mu)| Knot { z, mu }).collect();
        Ok(Self { inner: CoreFuzzy::from_knots(knots).map_err(err)? })
    }

    #[staticmethod]
    fn triangular(lo: f64, peak: f64, hi: f64) -> PyResult<Self> {
        Ok(Self { inner: CoreFuzzy::triangular(lo, peak, hi).map_err(err)? })
    }

    #[staticmethod]
    fn trapezoidal(lo: f64, top_lo: f64, top_hi: f64, hi: f64) -> PyResult<Self> {
        Ok(Self { inner: CoreFuzzy::trapezoidal(lo, top_lo, top_hi, hi).map_err(err)? })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: CoreFuzzy::from_json(text).map_err(err)? })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn knots(&self) -> Vec<(f64, f64)> {
        self.inner.knots().iter().map(|k| (k.z, k.mu)).collect()
    }

    fn membership(&self, z: f64) -> f64 {
        self.inner.membership(z)
    }

    fn alpha_cut(&self, alpha: f64) -> (f64, f64) {
        let c = self.inner.alpha_cut(alpha);
        (c.lo, c.hi)
    }

    fn __repr__(&self) -> String {
        format!("FuzzyVariable({:?})", self.knots())
    }
}

/// Synthetic fiber map, rasterized and cut into 1D samples.
#[pyfunction]
#[pyo3(signature = (width = 1700.0, height = 500.0, volume_fraction = 0.63, seed = 42, pixel = 1.0, strip = 10.0, element = 10.0))]
#[allow(clippy::too_many_arguments)]
fn synthesize<'py>(
    py: Python<'py>,
    width: f64,
    height: f64,
    volume_fraction: f64,
    seed: u64,
    pixel: f64,
    strip: f64,
    element: f64,
) -> PyResult<(PySampleSet, Bound<'py, PyDict>)> {
    let (map, bm, s) = py
        .detach(|| -> Result<_, microdata::MicroError> {
            let map = microdata::generate_microstructure(&FiberMapSpec::new(width, height, volume_fraction, seed))?;
            let bm = microdata::rasterize(&map, pixel)?;
            let s = microdata::extract_1d_samples(&bm, &PhaseModuli::default(), strip, element)?;
            Ok((map, bm, s))
        })
        .map_err(err)?;
    let info = PyDict::new(py);
    info.set_item("disks", map.disks.len())?;
    info.set_item("area_fraction", map.area_fraction())?;
    info.set_item("raster_fraction", bm.fiber_fraction())?;
    Ok((PySampleSet { inner: s }, info))
}

/// Pointwise mean, std, skewness and excess kurtosis curves.
#[pyfunction]
fn pointwise_moments<'py>(py: Python<'py>, s: PyRef<'_, PySampleSet>) -> PyResult<Bound<'py, PyDict>> {
    let c = stats::pointwise_moments(&s.inner).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("x", c.x)?;
    d.set_item("mu", c.mu)?;
    d.set_item("sigma", c.sigma)?;
    d.set_item("gamma1", c.gamma1)?;
    d.set_item("gamma2", c.gamma2)?;
    Ok(d)
}

#[pyfunction]
fn correlation(sample: Vec<f64>, h: f64, max_lag: usize) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let c = stats::correlation_function(&sample, h, max_lag).map_err(err)?;
    Ok((c.lags, c.c))
}

/// Fuzzy (mu, sigma, gamma1, gamma2) from the moment histograms.
#[pyfunction]
#[pyo3(signature = (s, n_bins = 10))]
fn fuzzy_moments(s: PyRef<'_, PySampleSet>, n_bins: usize) -> PyResult<Vec<PyFuzzyVariable>> {
    let v = randfield::fuzzy_moments(&s.inner, n_bins).map_err(err)?;
    Ok(v.components.into_iter().map(|inner| PyFuzzyVariable { inner }).collect())
}

#[pyfunction]
#[pyo3(signature = (length, h, ell, preserved_std_fraction = 0.85))]
fn kl_decompose<'py>(py: Python<'py>, length: f64, h: f64, ell: f64, preserved_std_fraction: f64) -> PyResult<Bound<'py, PyDict>> {
    let kl = py.detach(|| randfield::kl_decompose(length, h, ell, preserved_std_fraction)).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("n_terms", kl.n_terms)?;
    d.set_item("preserved_fraction", kl.preserved_fraction)?;
    d.set_item("orthonormality_residual", kl.orthonormality_residual())?;
    d.set_item("eigenvalues", kl.eigenvalues)?;
    Ok(d)
}

/// Four-parameter beta `(p, q, loc, scale)` matching the given moments.
#[pyfunction]
#[pyo3(signature = (mu, sigma, gamma1, gamma2, project = false))]
fn beta_from_moments(mu: f64, sigma: f64, gamma1: f64, gamma2: f64, project: bool) -> PyResult<(f64, f64, f64, f64)> {
    let bp = if project {
        randfield::beta_from_moments_projected(mu, sigma, gamma1, gamma2).map_err(err)?.0
    } else {
        randfield::beta_from_moments(mu, sigma, gamma1, gamma2).map_err(err)?
    };
    Ok((bp.p, bp.q, bp.loc, bp.scale))
}

#[pyfunction]
fn homogenize(sample: Vec<f64>, h: f64, window: f64) -> PyResult<Vec<f64>> {
    homog::homogenize(&sample, h, window).map_err(err)
}

/// RVE scatter per candidate length and the selected length (or None).
#[pyfunction]
#[pyo3(signature = (s, lengths, tol = 0.05))]
fn rve_length<'py>(py: Python<'py>, s: PyRef<'_, PySampleSet>, lengths: Vec<f64>, tol: f64) -> PyResult<Bound<'py, PyDict>> {
    let report = match homog::rve_length(&s.inner, &lengths, tol) {
        Ok(r) | Err(homog::HomogError::NoRve(r)) => r,
        Err(e) => return Err(err(e)),
    };
    let d = PyDict::new(py);
    d.set_item("lengths", report.lengths)?;
    d.set_item("epsilon", report.epsilon)?;
    d.set_item("l_rve", report.l_rve)?;
    Ok(d)
}

/// Displacement at `x0` (m) for compliance `b` on nodes `j h` (um).
#[pyfunction]
#[pyo3(signature = (b, h, length = 1e6, load_end = 0.5e6, x0 = 0.75e6))]
fn qoi_direct(b: Vec<f64>, h: f64, length: f64, load_end: f64, x0: f64) -> PyResult<f64> {
    let spec = ProblemSpec { length_um: length, load_end_um: load_end, x0_um: x0 };
    solver::qoi_direct(&b, h, &spec).map_err(err)
}

/// Local validation over a grid of correlation lengths.
#[pyfunction]
#[pyo3(signature = (s, ells, m_s = 10_000, m_f = 100, n_b = 20, m_tilde = 50, seed = 1))]
#[allow(clippy::too_many_arguments)]
fn validate_local<'py>(
    py: Python<'py>,
    s: PyRef<'_, PySampleSet>,
    ells: Vec<f64>,
    m_s: usize,
    m_f: usize,
    n_b: usize,
    m_tilde: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let settings = ValidationSettings { m_s, m_f, n_b, m_tilde, seed, ..Default::default() };
    let inner = &s.inner;
    let v = py.detach(|| validate::validate_local(inner, &ells, &settings)).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("selected_ell", v.report.selected_ell)?;
    d.set_item("containment", v.report.containment.clone())?;
    d.set_item("sweep", v.report.sweep.iter().map(|e| (e.ell, e.n_terms, e.containment.clone())).collect::<Vec<_>>())?;
    d.set_item("band_csv", v.band.to_csv())?;
    Ok(d)
}

#[pymodule]
#[pyo3(name = "fuzzstoch")]
fn fuzzstoch_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("FuzzstochError", m.py().get_type::<FuzzstochError>())?;
    m.add_class::<PySampleSet>()?;
    m.add_class::<PyFuzzyVariable>()?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(pointwise_moments, m)?)?;
    m.add_function(wrap_pyfunction!(correlation, m)?)?;
    m.add_function(wrap_pyfunction!(fuzzy_moments, m)?)?;
    m.add_function(wrap_pyfunction!(kl_decompose, m)?)?;
    m.add_function(wrap_pyfunction!(beta_from_moments, m)?)?;
    m.add_function(wrap_pyfunction!(homogenize, m)?)?;
    m.add_function(wrap_pyfunction!(rve_length, m)?)?;
    m.add_function(wrap_pyfunction!(qoi_direct, m)?)?;
    m.add_function(wrap_pyfunction!(validate_local, m)?)?;
    Ok(())
}
