//! Python module `gravcollapse_py`.
//!
//! Structured results are returned as plain Python objects (dicts, lists,
//! floats). Invalid input raises `ValueError`; `NumericError` and
//! `ResourceError` mirror the library's other failure classes.

use pyo3::create_exception;
use pyo3::exceptions::{PyArithmeticError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use gravcollapse::kernel::SelfTermMode;
use gravcollapse::mass::{MassDistribution, RegulatorShape, SmearedPoint, SuperpositionScenario, Vec3};
use gravcollapse::planck::{self, KernelSettings};
use gravcollapse::rate;
use gravcollapse::self_energy::{self, QuadratureSettings, DEFAULT_CELLS_PER_LENGTH};
use gravcollapse::stochastic;
use gravcollapse::testmass::{self, FourVolume, TestMassConfig};

create_exception!(gravcollapse_py, NumericError, PyArithmeticError);
create_exception!(gravcollapse_py, ResourceError, PyRuntimeError);

fn py_err(e: gravcollapse::Error) -> PyErr {
    match e {
        gravcollapse::Error::Domain(m) => PyValueError::new_err(m),
        gravcollapse::Error::Numeric(m) => NumericError::new_err(m),
        gravcollapse::Error::Resource(m) => ResourceError::new_err(m),
    }
}

trait IntoPyResult<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPyResult<T> for gravcollapse::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

/// Converts any serializable value to the equivalent Python object.
fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// A mass density for one branch.
#[pyclass(module = "gravcollapse_py", frozen)]
struct Distribution {
    inner: MassDistribution,
}

#[pymethods]
impl Distribution {
    #[staticmethod]
    #[pyo3(signature = (mass, sigma, center = [0.0; 3]))]
    fn gaussian(mass: f64, sigma: f64, center: Vec3) -> PyResult<Self> {
        Ok(Self {
            inner: MassDistribution::gaussian(center, mass, sigma).py()?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (mass, radius, center = [0.0; 3]))]
    fn uniform_sphere(mass: f64, radius: f64, center: Vec3) -> PyResult<Self> {
        Ok(Self {
            inner: MassDistribution::uniform_sphere(center, mass, radius).py()?,
        })
    }

    /// `points` is a list of `(position, mass, regulator_radius)` tuples.
    #[staticmethod]
    #[pyo3(signature = (points, gaussian_regulator = false))]
    fn smeared_points(points: Vec<(Vec3, f64, f64)>, gaussian_regulator: bool) -> PyResult<Self> {
        let shape = if gaussian_regulator {
            RegulatorShape::Gaussian
        } else {
            RegulatorShape::UniformBall
        };
        let points = points
            .into_iter()
            .map(|(position, mass, regulator_radius)| SmearedPoint {
                position,
                mass,
                regulator_radius,
                regulator_shape: shape,
            })
            .collect();
        Ok(Self {
            inner: MassDistribution::smeared_points(points).py()?,
        })
    }

    /// Parses the `{"kind": ...}` JSON form.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: MassDistribution = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        inner.validate().py()?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("distribution serializes")
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind_name()
    }

    #[getter]
    fn total_mass(&self) -> f64 {
        self.inner.total_mass()
    }

    fn __repr__(&self) -> String {
        format!("Distribution({})", self.to_json())
    }
}

/// A distribution and its copy displaced by `displacement` (m).
#[pyclass(module = "gravcollapse_py", frozen)]
struct Scenario {
    inner: SuperpositionScenario,
}

#[pymethods]
impl Scenario {
    #[new]
    fn new(distribution: &Distribution, displacement: Vec3) -> PyResult<Self> {
        Ok(Self {
            inner: SuperpositionScenario::new(distribution.inner.clone(), displacement).py()?,
        })
    }

    #[getter]
    fn separation(&self) -> f64 {
        self.inner.separation()
    }

    #[getter]
    fn displacement(&self) -> Vec3 {
        self.inner.displacement
    }

    #[getter]
    fn convention(&self) -> &'static str {
        self.inner.convention.tag()
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario({}, displacement={:?})",
            serde_json::to_string(&self.inner.distribution).expect("distribution serializes"),
            self.inner.displacement
        )
    }
}

/// Lattice settings for grid sums and noise grids.
#[pyclass(module = "gravcollapse_py", frozen)]
struct Quadrature {
    inner: QuadratureSettings,
}

#[pymethods]
impl Quadrature {
    #[new]
    #[pyo3(signature = (cell_size, padding, self_term = true, max_cells = None))]
    fn new(cell_size: f64, padding: f64, self_term: bool, max_cells: Option<usize>) -> PyResult<Self> {
        let mut inner = QuadratureSettings::new(cell_size, padding);
        inner.self_term = if self_term { SelfTermMode::Calibrated } else { SelfTermMode::None };
        if let Some(n) = max_cells {
            inner.max_cells = n;
        }
        inner.validate().py()?;
        Ok(Self { inner })
    }

    /// Defaults scaled to the smallest length of `distribution`.
    #[staticmethod]
    #[pyo3(signature = (distribution, cells_per_length = DEFAULT_CELLS_PER_LENGTH))]
    fn for_distribution(distribution: &Distribution, cells_per_length: f64) -> Self {
        Self {
            inner: QuadratureSettings::for_distribution(&distribution.inner, cells_per_length),
        }
    }

    #[getter]
    fn cell_size(&self) -> f64 {
        self.inner.cell_size
    }

    #[getter]
    fn padding(&self) -> f64 {
        self.inner.padding
    }

    fn __repr__(&self) -> String {
        format!(
            "Quadrature(cell_size={}, padding={}, self_term={:?}, max_cells={})",
            self.inner.cell_size, self.inner.padding, self.inner.self_term, self.inner.max_cells
        )
    }
}

fn settings(s: &Scenario, q: Option<&Quadrature>) -> QuadratureSettings {
    q.map_or_else(
        || QuadratureSettings::for_distribution(&s.inner.distribution, DEFAULT_CELLS_PER_LENGTH),
        |q| q.inner,
    )
}

/// Dict with `e_delta` (J), `lambda` (1/s), `tau` (s or None) and diagnostics.
#[pyfunction]
#[pyo3(signature = (scenario, quadrature = None))]
fn collapse_rate<'py>(py: Python<'py>, scenario: &Scenario, quadrature: Option<&Quadrature>) -> PyResult<Bound<'py, PyAny>> {
    let q = settings(scenario, quadrature);
    let s = &scenario.inner;
    let r = py.detach(|| rate::collapse_rate(s, &q)).py()?;
    to_py(py, &r)
}

/// Self-energy excess `E_Δ` in joules.
#[pyfunction]
#[pyo3(signature = (scenario, quadrature = None))]
fn e_delta(py: Python<'_>, scenario: &Scenario, quadrature: Option<&Quadrature>) -> PyResult<f64> {
    let q = settings(scenario, quadrature);
    let s = &scenario.inner;
    Ok(py.detach(|| self_energy::e_delta(s, &q)).py()?.value)
}

/// `E_Δ` by the direct double sum over the lattice, J.
#[pyfunction]
#[pyo3(signature = (scenario, quadrature = None))]
fn e_delta_bruteforce(py: Python<'_>, scenario: &Scenario, quadrature: Option<&Quadrature>) -> PyResult<f64> {
    let q = settings(scenario, quadrature);
    let s = &scenario.inner;
    py.detach(|| self_energy::e_delta_bruteforce(s, &q)).py()
}

/// List of row dicts, one per separation (m).
#[pyfunction]
#[pyo3(signature = (scenario, separations, quadrature = None))]
fn sweep_separation<'py>(
    py: Python<'py>,
    scenario: &Scenario,
    separations: Vec<f64>,
    quadrature: Option<&Quadrature>,
) -> PyResult<Bound<'py, PyAny>> {
    let q = settings(scenario, quadrature);
    let s = &scenario.inner;
    let rows = py.detach(|| rate::sweep_separation(s, &separations, &q)).py()?;
    to_py(py, &rows)
}

/// Minimizer and minimum of `a γ + b/γ`.
#[pyfunction]
fn tradeoff_minimum(a: f64, b: f64) -> PyResult<(f64, f64)> {
    rate::tradeoff_minimum(a, b).py()
}

/// Dephasing ensemble; dict with the variance and decoherence curves, the
/// fitted slope and the grid rate.
#[pyfunction]
#[pyo3(signature = (scenario, total_time, steps, trajectories, seed, quadrature = None))]
fn dephasing_sim<'py>(
    py: Python<'py>,
    scenario: &Scenario,
    total_time: f64,
    steps: usize,
    trajectories: usize,
    seed: u64,
    quadrature: Option<&Quadrature>,
) -> PyResult<Bound<'py, PyAny>> {
    let q = settings(scenario, quadrature);
    let s = &scenario.inner;
    let run = py
        .detach(|| stochastic::dephasing_sim(s, &q, total_time, steps, trajectories, seed))
        .py()?;
    let out = to_py(py, &run)?;
    out.set_item("slope_ratio", run.slope_ratio())?;
    Ok(out)
}

/// `(branches, times)`: branch indices 1 or 2 and waiting times (s).
#[pyfunction]
fn collapse_mc(py: Python<'_>, tau: f64, n: usize, seed: u64) -> PyResult<(Vec<u8>, Vec<f64>)> {
    let e = py.detach(|| stochastic::collapse_mc(tau, n, seed)).py()?;
    Ok(e.outcomes.iter().map(|o| (o.branch.index(), o.time)).unzip())
}

/// Noise sample `δΦ` (J/kg) at two points `r` apart, lane 0 of `seed`.
#[pyfunction]
#[pyo3(signature = (r, dt, seed, step, cell_size = 1.0))]
fn sample_noise_pair(r: f64, dt: f64, seed: u64, step: u64, cell_size: f64) -> PyResult<(f64, f64)> {
    let g = stochastic::NoiseGrid::from_points(
        vec![[0.0; 3], [r, 0.0, 0.0]],
        cell_size,
        SelfTermMode::Calibrated.coefficient(),
    )
    .py()?;
    let x = stochastic::sample_noise(&g, dt, seed, step).py()?;
    Ok((x[0], x[1]))
}

fn testmass_config(mass: f64, r: f64, t: f64, volume: Option<f64>) -> PyResult<TestMassConfig> {
    let c = TestMassConfig { mass, r, t, volume };
    c.validate().py()?;
    Ok(c)
}

/// `(quantum, gravity)` uncertainties of the measured acceleration, m/s².
#[pyfunction]
#[pyo3(signature = (mass, r, t, volume = None))]
fn g_uncertainties(mass: f64, r: f64, t: f64, volume: Option<f64>) -> PyResult<(f64, f64)> {
    let c = testmass_config(mass, r, t, volume)?;
    Ok((testmass::quantum_g_uncertainty(&c), testmass::gravity_g_uncertainty(&c)))
}

#[pyfunction]
fn optimal_testmass(r: f64, t: f64) -> f64 {
    testmass::optimal_testmass(r, t)
}

#[pyfunction]
fn optimal_precision(volume: f64, t: f64) -> f64 {
    testmass::optimal_precision(volume, t)
}

#[pyfunction]
fn retention_time(mass: f64, r: f64) -> f64 {
    testmass::retention_time(mass, r)
}

#[pyfunction]
fn freefall_phase(mass: f64, g: f64, t: f64) -> PyResult<f64> {
    testmass::freefall_phase(mass, g, t).py()
}

/// `(T, M)` with `T` equal to the retention time of the optimal mass.
#[pyfunction]
fn self_consistent_time(r: f64) -> PyResult<(f64, f64)> {
    let p = testmass::self_consistent_time(r).py()?;
    Ok((p.t, p.mass))
}

/// Difference of the powers of `c` on the two sides of the fluctuation
/// bound, as a fraction string; `"0"` when `c` cancels.
#[pyfunction]
#[pyo3(signature = (with_c = true))]
fn unruh_c_difference(with_c: bool) -> String {
    let fv = if with_c { FourVolume::WithC } else { FourVolume::WithoutC };
    testmass::unruh_check(fv).difference.to_string()
}

fn kernel_settings(
    k_max: Option<f64>,
    k_min: Option<f64>,
    resolution: Option<usize>,
    theta_width: Option<f64>,
    time_window: Option<f64>,
    tolerance: Option<f64>,
) -> PyResult<KernelSettings> {
    let d = KernelSettings::default();
    let ks = KernelSettings {
        k_max: k_max.unwrap_or(d.k_max),
        k_min: k_min.unwrap_or(d.k_min),
        resolution: resolution.unwrap_or(d.resolution),
        theta_width: theta_width.unwrap_or(d.theta_width),
        time_window: time_window.unwrap_or(d.time_window),
        tolerance: tolerance.unwrap_or(d.tolerance),
    };
    ks.validate().py()?;
    Ok(ks)
}

/// Radial-quadrature value of `1/(4πr)`, 1/m.
#[pyfunction]
#[pyo3(signature = (r, k_max = None, k_min = None, resolution = None, tolerance = None))]
fn newtonian_transform(
    py: Python<'_>,
    r: f64,
    k_max: Option<f64>,
    k_min: Option<f64>,
    resolution: Option<usize>,
    tolerance: Option<f64>,
) -> PyResult<f64> {
    let ks = kernel_settings(k_max, k_min, resolution, None, None, tolerance)?;
    Ok(py.detach(|| planck::newtonian_transform(r, &ks)).py()?.value)
}

/// Windowed `Φ` correlation table over `r_values × c_values`.
#[pyfunction]
#[pyo3(signature = (
    r_values, c_values, k_max = None, k_min = None, resolution = None,
    theta_width = None, time_window = None, tolerance = None
))]
#[allow(clippy::too_many_arguments)]
fn newtonian_limit_check<'py>(
    py: Python<'py>,
    r_values: Vec<f64>,
    c_values: Vec<f64>,
    k_max: Option<f64>,
    k_min: Option<f64>,
    resolution: Option<usize>,
    theta_width: Option<f64>,
    time_window: Option<f64>,
    tolerance: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let ks = kernel_settings(k_max, k_min, resolution, theta_width, time_window, tolerance)?;
    let table = py
        .detach(|| planck::newtonian_limit_check(&r_values, &c_values, &ks))
        .py()?;
    to_py(py, &table)
}

#[pymodule]
fn gravcollapse_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("NumericError", m.py().get_type::<NumericError>())?;
    m.add("ResourceError", m.py().get_type::<ResourceError>())?;
    m.add("HBAR", gravcollapse::quantity::HBAR)?;
    m.add("G", gravcollapse::quantity::G)?;
    m.add("C", gravcollapse::quantity::C)?;
    m.add_class::<Distribution>()?;
    m.add_class::<Scenario>()?;
    m.add_class::<Quadrature>()?;
    m.add_function(wrap_pyfunction!(collapse_rate, m)?)?;
    m.add_function(wrap_pyfunction!(e_delta, m)?)?;
    m.add_function(wrap_pyfunction!(e_delta_bruteforce, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_separation, m)?)?;
    m.add_function(wrap_pyfunction!(tradeoff_minimum, m)?)?;
    m.add_function(wrap_pyfunction!(dephasing_sim, m)?)?;
    m.add_function(wrap_pyfunction!(collapse_mc, m)?)?;
    m.add_function(wrap_pyfunction!(sample_noise_pair, m)?)?;
    m.add_function(wrap_pyfunction!(g_uncertainties, m)?)?;
    m.add_function(wrap_pyfunction!(optimal_testmass, m)?)?;
    m.add_function(wrap_pyfunction!(optimal_precision, m)?)?;
    m.add_function(wrap_pyfunction!(retention_time, m)?)?;
    m.add_function(wrap_pyfunction!(freefall_phase, m)?)?;
    m.add_function(wrap_pyfunction!(self_consistent_time, m)?)?;
    m.add_function(wrap_pyfunction!(unruh_c_difference, m)?)?;
    m.add_function(wrap_pyfunction!(newtonian_transform, m)?)?;
    m.add_function(wrap_pyfunction!(newtonian_limit_check, m)?)?;
    Ok(())
}
