//! Python bindings. Frequencies in GHz/MHz, gains in dB, like the CLI.

use nhdimer_core::config::RunConfig;
use nhdimer_core::integrator::{integrate, IntegratorConfig};
use nhdimer_core::model::{OperatingPoint, PhysicalParams};
use nhdimer_core::{analytics, experiments, spectral, stability, units, validate, Error};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: Error) -> PyErr {
    if e.is_numerical() {
        PyRuntimeError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

/// Device parameters. Rates are exposed in MHz (ordinary frequency).
#[pyclass(name = "Params", frozen)]
struct PyParams {
    inner: PhysicalParams,
}

#[pymethods]
impl PyParams {
    /// Defaults, or the `physical` block of a run-config JSON string.
    #[new]
    #[pyo3(signature = (config=None))]
    fn new(config: Option<&str>) -> PyResult<Self> {
        let cfg = match config {
            Some(text) => RunConfig::from_json_str(text).map_err(err)?,
            None => RunConfig::default(),
        };
        let inner = cfg.params();
        inner.validate().map_err(err)?;
        Ok(PyParams { inner })
    }

    /// Equal-dissipation preset used by the closed forms.
    #[staticmethod]
    fn symmetric() -> Self {
        PyParams { inner: PhysicalParams::symmetric() }
    }

    #[getter]
    fn omega_c_ghz(&self) -> f64 {
        units::to_ghz(self.inner.omega_c)
    }
    #[getter]
    fn kappa_int_mhz(&self) -> (f64, f64) {
        (units::to_mhz(self.inner.kappa_int[0]), units::to_mhz(self.inner.kappa_int[1]))
    }
    #[getter]
    fn kappa_c_mhz(&self) -> f64 {
        units::to_mhz(self.inner.kappa_c)
    }
    #[getter]
    fn j_c_mhz(&self) -> f64 {
        units::to_mhz(self.inner.j_c)
    }
    #[getter]
    fn n_sat(&self) -> f64 {
        self.inner.n_sat()
    }

    fn __repr__(&self) -> String {
        format!(
            "Params(omega_c_ghz={}, kappa_c_mhz={}, j_c_mhz={})",
            self.omega_c_ghz(),
            self.kappa_c_mhz(),
            self.j_c_mhz()
        )
    }
}

/// Linear stability of the undriven dimer at one (ΔG, φ).
#[pyclass(name = "StabilityReport", frozen, get_all)]
struct PyStabilityReport {
    stable: bool,
    /// 1/s
    max_re_eigenvalue: f64,
    kappa0_mhz: f64,
    j0_mhz: f64,
}

#[pymethods]
impl PyStabilityReport {
    fn __repr__(&self) -> String {
        format!("StabilityReport(stable={}, max_re_eigenvalue={:e})", self.stable, self.max_re_eigenvalue)
    }
}

fn params(p: Option<PyRef<'_, PyParams>>) -> PhysicalParams {
    p.map_or_else(PhysicalParams::default, |p| p.inner)
}

fn integrator(n_samples: usize, span_kappa_c: f64) -> IntegratorConfig {
    IntegratorConfig {
        n_samples,
        span_kappa_c,
        ..IntegratorConfig::default()
    }
}

fn op(p: &PhysicalParams, delta_g_db: f64, phi: f64, drive_freq_ghz: Option<f64>, p_d_dbm: Option<f64>) -> OperatingPoint {
    let omega_d = drive_freq_ghz.map_or(p.omega_c, units::ghz);
    OperatingPoint::new(delta_g_db, phi, omega_d, p_d_dbm)
}

/// The default run configuration as JSON.
#[pyfunction]
fn default_config() -> String {
    RunConfig::default().to_json_string()
}

/// Instability threshold ΔG*(φ) in dB, or None.
#[pyfunction]
#[pyo3(signature = (phi, params=None))]
fn threshold_gain(phi: f64, params: Option<PyRef<'_, PyParams>>) -> Option<f64> {
    stability::threshold_gain(&self::params(params), phi)
}

/// Linear stability of the undriven dimer.
#[pyfunction]
#[pyo3(signature = (delta_g_db, phi, params=None))]
fn is_stable(delta_g_db: f64, phi: f64, params: Option<PyRef<'_, PyParams>>) -> PyStabilityReport {
    let p = self::params(params);
    let r = stability::is_stable(&p, &OperatingPoint::undriven(&p, delta_g_db, phi));
    PyStabilityReport {
        stable: r.stable,
        max_re_eigenvalue: r.max_re_eigenvalue,
        kappa0_mhz: units::to_mhz(r.kappa0),
        j0_mhz: units::to_mhz(r.j0),
    }
}

/// Closed-form limit cycle (photons, ω_c − ω_LC in MHz, convergence rate in 1/s), or None.
#[pyfunction]
#[pyo3(signature = (delta_g_db, phi, params=None))]
fn lc_solution<'py>(
    py: Python<'py>,
    delta_g_db: f64,
    phi: f64,
    params: Option<PyRef<'py, PyParams>>,
) -> PyResult<Option<Bound<'py, PyDict>>> {
    let p = self::params(params);
    let Some(s) = analytics::lc_solution(&p, &OperatingPoint::undriven(&p, delta_g_db, phi)) else {
        return Ok(None);
    };
    let d = PyDict::new(py);
    d.set_item("n_lc", s.n_lc)?;
    d.set_item("power_dbm", spectral::photons_to_dbm(&p, s.n_lc).map_err(err)?)?;
    d.set_item("domega_lc_mhz", units::to_mhz(s.domega_lc))?;
    d.set_item("kappa_lc", s.kappa_lc)?;
    Ok(Some(d))
}

/// One trajectory. Returns times, photon numbers of both cavities and the
/// limit-cycle observation (undriven) or S21 in dB (driven).
#[pyfunction]
#[pyo3(signature = (delta_g_db, phi, drive_freq_ghz=None, p_d_dbm=None, n_samples=20_000, span_kappa_c=2_000.0, params=None))]
#[allow(clippy::too_many_arguments)]
fn simulate<'py>(
    py: Python<'py>,
    delta_g_db: f64,
    phi: f64,
    drive_freq_ghz: Option<f64>,
    p_d_dbm: Option<f64>,
    n_samples: usize,
    span_kappa_c: f64,
    params: Option<PyRef<'py, PyParams>>,
) -> PyResult<Bound<'py, PyDict>> {
    let p = self::params(params);
    let o = op(&p, delta_g_db, phi, drive_freq_ghz, p_d_dbm);
    let cfg = integrator(n_samples, span_kappa_c);
    let traj = py.detach(|| integrate(&p, &o, &cfg)).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("t", &traj.t)?;
    d.set_item("n1", traj.states.iter().map(|s| s.a1.norm_sqr()).collect::<Vec<_>>())?;
    d.set_item("n2", traj.states.iter().map(|s| s.a2.norm_sqr()).collect::<Vec<_>>())?;
    if traj.is_driven() {
        let dc = spectral::dc_component(&traj, spectral::DEFAULT_DISCARD).map_err(err)?;
        d.set_item("s21_db", spectral::s21_db(&p, dc, traj.epsilon).map_err(err)?)?;
    } else {
        let obs = spectral::lc_extract(&p, &traj).map_err(err)?;
        d.set_item("limit_cycle", obs.present)?;
        d.set_item("amp_dbm", obs.amp_dbm)?;
        d.set_item("freq_offset_hz", obs.freq_offset)?;
    }
    Ok(d)
}

/// Limit-cycle power (dBm) and frequency offset (MHz) maps, row-major in
/// (phi, delta_g). Masked frequencies are NaN.
#[pyfunction]
#[pyo3(signature = (phis, delta_gs, n_samples=20_000, span_kappa_c=2_000.0, workers=0, params=None))]
fn phase_diagram<'py>(
    py: Python<'py>,
    phis: Vec<f64>,
    delta_gs: Vec<f64>,
    n_samples: usize,
    span_kappa_c: f64,
    workers: usize,
    params: Option<PyRef<'py, PyParams>>,
) -> PyResult<Bound<'py, PyDict>> {
    let p = self::params(params);
    let cfg = integrator(n_samples, span_kappa_c);
    let pd = py
        .detach(|| experiments::lc_phase_diagram(&p, &phis, &delta_gs, &cfg, workers))
        .map_err(err)?;
    let masked = |g: &experiments::SweepGrid| -> Vec<f64> {
        g.cells.iter().zip(&g.valid).map(|(v, ok)| if *ok { *v } else { f64::NAN }).collect()
    };
    let d = PyDict::new(py);
    d.set_item("amp_dbm", masked(&pd.amp_dbm))?;
    d.set_item("freq_offset_mhz", masked(&pd.freq_offset_mhz))?;
    d.set_item("shape", (phis.len(), delta_gs.len()))?;
    Ok(d)
}

/// Runs one acceptance check (1-11); returns (passed, summary line).
#[pyfunction]
#[pyo3(signature = (criterion, workers=1))]
fn run_criterion(py: Python<'_>, criterion: u8, workers: usize) -> PyResult<(bool, String)> {
    if !(1..=11).contains(&criterion) {
        return Err(PyValueError::new_err("criterion must be in 1..=11"));
    }
    let r = py.detach(|| validate::run(criterion, workers));
    Ok((r.passed, r.to_string()))
}

#[pymodule]
fn nhdimer(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyParams>()?;
    m.add_class::<PyStabilityReport>()?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(threshold_gain, m)?)?;
    m.add_function(wrap_pyfunction!(is_stable, m)?)?;
    m.add_function(wrap_pyfunction!(lc_solution, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(phase_diagram, m)?)?;
    m.add_function(wrap_pyfunction!(run_criterion, m)?)?;
    Ok(())
}
