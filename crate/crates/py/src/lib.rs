//! Python bindings: model parameters, time evolution, `G²`, visibilities,
//! sweeps and the closed-form references.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use franson_core::detection::{central_peak_of, SweepSpec};
use franson_core::oracle::{self, AnalyticParams};
use franson_core::{Error, TruncationPolicy};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::InvalidParams(_) => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// Simulation parameters. Units follow `gamma_a`: times are in `1/gamma_a`
/// if `gamma_a = 1`.
#[pyclass(name = "ModelParams", module = "franson", skip_from_py_object)]
#[derive(Clone)]
struct PyModelParams {
    #[pyo3(get, set)]
    gamma_a: f64,
    #[pyo3(get, set)]
    gamma_b: f64,
    #[pyo3(get, set)]
    dt: f64,
    #[pyo3(get, set)]
    n_steps: usize,
    #[pyo3(get, set)]
    m: usize,
    #[pyo3(get, set)]
    phi_fb: f64,
    #[pyo3(get, set)]
    n_t: usize,
    #[pyo3(get, set)]
    phi_t: f64,
    #[pyo3(get, set)]
    feedback_enabled: bool,
    #[pyo3(get, set)]
    epsilon: f64,
    #[pyo3(get, set)]
    max_bond: Option<usize>,
    #[pyo3(get, set)]
    photon_cutoff: usize,
}

impl PyModelParams {
    fn core(&self) -> franson_core::ModelParams {
        franson_core::ModelParams {
            gamma_a: self.gamma_a,
            gamma_b: self.gamma_b,
            dt: self.dt,
            n_steps: self.n_steps,
            m: self.m,
            phi_fb: self.phi_fb,
            n_t: self.n_t,
            phi_t: self.phi_t,
            feedback_enabled: self.feedback_enabled,
            truncation: TruncationPolicy { epsilon: self.epsilon, max_bond: self.max_bond },
            photon_cutoff: self.photon_cutoff,
        }
    }

    fn from_core(p: &franson_core::ModelParams) -> Self {
        Self {
            gamma_a: p.gamma_a,
            gamma_b: p.gamma_b,
            dt: p.dt,
            n_steps: p.n_steps,
            m: p.m,
            phi_fb: p.phi_fb,
            n_t: p.n_t,
            phi_t: p.phi_t,
            feedback_enabled: p.feedback_enabled,
            epsilon: p.truncation.epsilon,
            max_bond: p.truncation.max_bond,
            photon_cutoff: p.photon_cutoff,
        }
    }
}

#[pymethods]
impl PyModelParams {
    #[new]
    #[pyo3(signature = (gamma_a, gamma_b, dt, n_steps, n_t, m=0, phi_fb=0.0, phi_t=0.0, feedback_enabled=false, epsilon=0.0, max_bond=None, photon_cutoff=2))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        gamma_a: f64,
        gamma_b: f64,
        dt: f64,
        n_steps: usize,
        n_t: usize,
        m: usize,
        phi_fb: f64,
        phi_t: f64,
        feedback_enabled: bool,
        epsilon: f64,
        max_bond: Option<usize>,
        photon_cutoff: usize,
    ) -> Self {
        Self { gamma_a, gamma_b, dt, n_steps, m, phi_fb, n_t, phi_t, feedback_enabled, epsilon, max_bond, photon_cutoff }
    }

    /// No feedback, `Γ_aT = 2.5`, `Γ_bT = 10`.
    #[staticmethod]
    fn benchmark() -> Self {
        Self::from_core(&franson_core::ModelParams::benchmark())
    }

    /// `Γ_aT = Γ_bT = 4` with feedback at `Γ_aτ_FB = 1`.
    #[staticmethod]
    fn feedback_visibility() -> Self {
        Self::from_core(&franson_core::ModelParams::feedback_visibility())
    }

    #[staticmethod]
    fn dynamics() -> Self {
        Self::from_core(&franson_core::ModelParams::dynamics())
    }

    /// Checked copy with phases reduced to `[0, 2π)`; raises `ValueError`
    /// listing every violation.
    fn validate(&self) -> PyResult<Self> {
        self.core().validate().map(|p| Self::from_core(&p)).map_err(py_err)
    }

    fn t_max(&self) -> f64 {
        self.core().t_max()
    }

    fn delay_time(&self) -> f64 {
        self.core().delay_time()
    }

    fn feedback_delay(&self) -> f64 {
        self.core().feedback_delay()
    }

    fn __repr__(&self) -> String {
        let cap = self.max_bond.map_or("None".to_string(), |b| b.to_string());
        let fb = if self.feedback_enabled { "True" } else { "False" };
        format!(
            "ModelParams(gamma_a={}, gamma_b={}, dt={}, n_steps={}, n_t={}, m={}, phi_fb={}, phi_t={}, \
             feedback_enabled={fb}, epsilon={}, max_bond={cap}, photon_cutoff={})",
            self.gamma_a,
            self.gamma_b,
            self.dt,
            self.n_steps,
            self.n_t,
            self.m,
            self.phi_fb,
            self.phi_t,
            self.epsilon,
            self.photon_cutoff
        )
    }
}

/// Population time series of one run.
#[pyclass(module = "franson", frozen, get_all)]
struct Evolution {
    times: Vec<f64>,
    pop_a: Vec<f64>,
    pop_b: Vec<f64>,
    norm: Vec<f64>,
    norm_drift: f64,
    max_bond: usize,
    warnings: Vec<String>,
}

/// `G²(τ)` on the lag grid, plus the flattened two-time map
/// (`two_time[j * n_det + k]`, `j` on detector 1).
#[pyclass(module = "franson", frozen, get_all)]
struct G2Curve {
    dt: f64,
    n_det: usize,
    tau: Vec<f64>,
    g2: Vec<f64>,
    two_time: Vec<f64>,
    central_peak: f64,
    central_peak_tau: f64,
}

#[pyclass(module = "franson", frozen, get_all)]
struct Visibility {
    visibility: f64,
    peak_0: f64,
    peak_half_pi: f64,
    peak_tau: f64,
    steps: usize,
    residual: f64,
    max_bond: usize,
    warnings: Vec<String>,
}

/// Visibility map; entries are `None` where a point failed.
#[pyclass(module = "franson", frozen, get_all)]
struct VisibilityMap {
    gamma_a_t: Vec<f64>,
    gamma_b_t: Vec<f64>,
    v_no_fb: Vec<Vec<Option<f64>>>,
    v_fb: Vec<Vec<Option<f64>>>,
    failures: Vec<String>,
    warnings: Vec<String>,
}

#[pyfunction]
fn evolve(py: Python<'_>, params: PyRef<'_, PyModelParams>) -> PyResult<Evolution> {
    let p = params.core();
    let rec = py.detach(|| franson_core::evolve(&p)).map_err(py_err)?;
    Ok(Evolution {
        times: rec.times,
        pop_a: rec.pop_a,
        pop_b: rec.pop_b,
        norm: rec.norm,
        norm_drift: rec.norm_drift,
        max_bond: rec.max_bond,
        warnings: rec.warnings,
    })
}

/// Evolves and evaluates `G²` at `params.phi_t`.
#[pyfunction]
fn g2(py: Python<'_>, params: PyRef<'_, PyModelParams>) -> PyResult<G2Curve> {
    let p = params.core();
    let (grid, peak) = py
        .detach(|| {
            let p = p.validate()?;
            let grid = franson_core::g2_curve(&p)?;
            let peak = central_peak_of(&grid, &p)?;
            Ok((grid, peak))
        })
        .map_err(py_err)?;
    Ok(G2Curve {
        dt: grid.dt,
        n_det: grid.n_det,
        tau: grid.taus(),
        g2: grid.g2_tau,
        two_time: grid.g2_two_time,
        central_peak: peak.height,
        central_peak_tau: peak.tau,
    })
}

#[pyfunction]
fn visibility(py: Python<'_>, params: PyRef<'_, PyModelParams>) -> PyResult<Visibility> {
    let p = params.core();
    let r = py.detach(|| franson_core::visibility(&p)).map_err(py_err)?;
    Ok(Visibility {
        visibility: r.visibility,
        peak_0: r.peak_0.height,
        peak_half_pi: r.peak_half_pi.height,
        peak_tau: r.peak_0.tau,
        steps: r.steps,
        residual: r.residual,
        max_bond: r.max_bond,
        warnings: r.warnings,
    })
}

/// Visibility with and without feedback over a grid of `Γ_aT`, `Γ_bT`;
/// times in units of `T`.
#[pyfunction]
#[pyo3(signature = (gamma_a_t, gamma_b_t, fb_delay=0.25, dt=0.05, phi_fb=0.0, residual_tol=1e-4, max_steps=4000))]
#[allow(clippy::too_many_arguments)]
fn visibility_sweep(
    py: Python<'_>,
    gamma_a_t: Vec<f64>,
    gamma_b_t: Vec<f64>,
    fb_delay: f64,
    dt: f64,
    phi_fb: f64,
    residual_tol: f64,
    max_steps: usize,
) -> PyResult<VisibilityMap> {
    let spec = SweepSpec { gamma_a_t, gamma_b_t, fb_delay, dt, phi_fb, residual_tol, max_steps, ..SweepSpec::default() };
    let map = py.detach(|| franson_core::visibility_sweep(&spec)).map_err(py_err)?;
    Ok(VisibilityMap {
        failures: map
            .failures
            .iter()
            .map(|f| format!("({}, {}) feedback={}: {}", f.gamma_a_t, f.gamma_b_t, f.feedback, f.message))
            .collect(),
        gamma_a_t: map.gamma_a_t,
        gamma_b_t: map.gamma_b_t,
        v_no_fb: map.v_no_fb,
        v_fb: map.v_fb,
        warnings: map.warnings,
    })
}

/// Closed-form no-feedback `G²(τ)` (η = 1) at each lag.
#[pyfunction]
fn g2_closed_form(tau: Vec<f64>, gamma_a: f64, gamma_b: f64, delay: f64, phi_t: f64) -> PyResult<Vec<f64>> {
    let p = AnalyticParams { gamma_a, gamma_b, delay, phi_t };
    p.validate().map_err(py_err)?;
    Ok(tau.iter().map(|&t| oracle::g2_closed_form(t, &p)).collect())
}

#[pyfunction]
fn visibility_closed_form(gamma_a_t: f64, gamma_b_t: f64) -> f64 {
    oracle::visibility_closed_form(gamma_a_t, gamma_b_t)
}

/// Weisskopf-Wigner `(pop_a, pop_b)` at time `t`.
#[pyfunction]
fn ww_populations(t: f64, gamma_a: f64, gamma_b: f64) -> (f64, f64) {
    oracle::ww_populations(t, gamma_a, gamma_b)
}

/// Upper-level population with feedback, from the delay equation.
#[pyfunction]
fn dde_population(times: Vec<f64>, gamma_a: f64, gamma_b: f64, tau_fb: f64, phi_fb: f64) -> PyResult<Vec<f64>> {
    oracle::dde_population(&times, gamma_a, gamma_b, tau_fb, phi_fb).map_err(py_err)
}

#[pymodule]
fn franson(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModelParams>()?;
    m.add_class::<Evolution>()?;
    m.add_class::<G2Curve>()?;
    m.add_class::<Visibility>()?;
    m.add_class::<VisibilityMap>()?;
    m.add_function(wrap_pyfunction!(evolve, m)?)?;
    m.add_function(wrap_pyfunction!(g2, m)?)?;
    m.add_function(wrap_pyfunction!(visibility, m)?)?;
    m.add_function(wrap_pyfunction!(visibility_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(g2_closed_form, m)?)?;
    m.add_function(wrap_pyfunction!(visibility_closed_form, m)?)?;
    m.add_function(wrap_pyfunction!(ww_populations, m)?)?;
    m.add_function(wrap_pyfunction!(dde_population, m)?)?;
    Ok(())
}
