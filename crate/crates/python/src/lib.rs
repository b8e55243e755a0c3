//! Python bindings: model presets, the two simulators, and the experiment
//! drivers behind the command line.

use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use spikefield::analysis::{self, Series, SweepOptions};
use spikefield::cli;
use spikefield::fvm::{self, AdaptiveOptions, GridSpec};
use spikefield::particle::{self, OverflowPolicy, RunSpec};
use spikefield::{Error, InitialCondition};

fn to_py(e: Error) -> PyErr {
    match cli::exit_code(&e) {
        cli::EXIT_CONFIG => PyValueError::new_err(e.to_string()),
        cli::EXIT_IO => PyOSError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Network parameters. Build with `ModelParams.preset(name)` or from TOML.
#[pyclass(module = "spikefield_py", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct ModelParams {
    inner: spikefield::ModelParams,
}

#[pymethods]
impl ModelParams {
    #[staticmethod]
    fn preset(name: &str) -> PyResult<Self> {
        let inner = spikefield::ModelParams::preset(name).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn preset_names() -> Vec<&'static str> {
        spikefield::model::PRESET_NAMES.to_vec()
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        let inner: spikefield::ModelParams = toml::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    fn to_toml(&self) -> PyResult<String> {
        toml::to_string(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    /// Copy with the coupling `J` replaced.
    fn with_coupling(&self, j: f64) -> PyResult<Self> {
        let inner = self.inner.with_coupling(j);
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter(J)]
    fn coupling(&self) -> f64 {
        self.inner.coupling
    }
    #[getter(I)]
    fn input(&self) -> f64 {
        self.inner.input
    }
    #[getter]
    fn tau_w(&self) -> f64 {
        self.inner.tau_w
    }
    #[getter]
    fn b(&self) -> f64 {
        self.inner.b
    }
    #[getter]
    fn v_reset(&self) -> f64 {
        self.inner.v_reset
    }
    #[getter]
    fn w_jump(&self) -> f64 {
        self.inner.w_jump
    }

    fn f(&self, v: f64) -> f64 {
        self.inner.eval_f(v)
    }

    fn rate(&self, v: f64) -> f64 {
        self.inner.eval_rate(v)
    }

    /// `(dv/dt, dw/dt)` at `(v, w)` with network rate `psi`.
    #[pyo3(signature = (v, w, psi = 0.0))]
    fn drift(&self, v: f64, w: f64, psi: f64) -> (f64, f64) {
        self.inner.drift(v, w, psi)
    }

    fn __repr__(&self) -> String {
        format!("ModelParams({:?})", self.inner)
    }
}

/// Finite-volume grid; `Grid.for_preset(name, n_v, n_w)` or an explicit box.
#[pyclass(module = "spikefield_py", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct Grid {
    inner: fvm::Grid2D,
}

#[pymethods]
impl Grid {
    #[staticmethod]
    fn for_preset(name: &str, n_v: usize, n_w: usize) -> PyResult<Self> {
        let p = spikefield::ModelParams::preset(name).map_err(to_py)?;
        let spec = GridSpec::for_preset(name, n_v, n_w).map_err(to_py)?;
        let (inner, _) = fvm::build_grid(&p, &spec).map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Grid near the box `[v_min, v_max] x [w_min, w_max]`, aligned to the
    /// reset potential and jump size of `params`.
    #[staticmethod]
    #[allow(clippy::too_many_arguments)]
    fn aligned(params: &ModelParams, v_min: f64, v_max: f64, w_min: f64, w_max: f64, n_v: usize, n_w: usize) -> PyResult<Self> {
        let spec = GridSpec::aligned(&params.inner, v_min, v_max, w_min, w_max, n_v, n_w).map_err(to_py)?;
        let (inner, _) = fvm::build_grid(&params.inner, &spec).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn n_v(&self) -> usize {
        self.inner.n_v
    }
    #[getter]
    fn n_w(&self) -> usize {
        self.inner.n_w
    }
    #[getter]
    fn dv(&self) -> f64 {
        self.inner.dv
    }
    #[getter]
    fn dw(&self) -> f64 {
        self.inner.dw
    }
    #[getter]
    fn v_nodes(&self) -> Vec<f64> {
        (0..self.inner.n_v).map(|i| self.inner.v(i)).collect()
    }
    #[getter]
    fn w_nodes(&self) -> Vec<f64> {
        (0..self.inner.n_w).map(|j| self.inner.w(j)).collect()
    }
    #[getter]
    fn i_reset(&self) -> usize {
        self.inner.i_reset
    }
    #[getter]
    fn j_shift(&self) -> usize {
        self.inner.j_shift
    }

    fn __repr__(&self) -> String {
        format!("Grid({:?})", self.inner)
    }
}

fn initial(v0: Option<(f64, f64)>) -> InitialCondition {
    match v0 {
        Some((v0, w0)) => InitialCondition::PointMass { v0, w0 },
        None => InitialCondition::STANDARD,
    }
}

fn series_dict<'py>(py: Python<'py>, s: &Series) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("t", s.t.clone())?;
    d.set_item("mean_v", s.v.clone())?;
    Ok(d)
}

/// Runs the N-neuron network from the standard Gaussian law (or a point mass
/// at `start = (v0, w0)`). Returns a dict of trace columns.
#[pyfunction]
#[pyo3(signature = (params, n, dt, t_end, seed, sample_every = 0.01, saturate = false, start = None))]
#[allow(clippy::too_many_arguments)]
fn simulate_particle<'py>(
    py: Python<'py>,
    params: &ModelParams,
    n: usize,
    dt: f64,
    t_end: f64,
    seed: u64,
    sample_every: f64,
    saturate: bool,
    start: Option<(f64, f64)>,
) -> PyResult<Bound<'py, PyDict>> {
    let p = params.inner;
    let mut spec = RunSpec::new(dt, t_end, sample_every);
    if saturate {
        spec.step.overflow = OverflowPolicy::Saturate;
    }
    let trace = py
        .detach(|| {
            let mut state = particle::init_particles(&p, &initial(start), n, seed)?;
            particle::run(&p, &mut state, &spec)
        })
        .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("t", trace.times)?;
    d.set_item("mean_v", trace.mean_v)?;
    d.set_item("firing_rate", trace.firing_rate)?;
    d.set_item("n_spikes", trace.n_spikes)?;
    Ok(d)
}

/// Adaptive mean-field run. Returns the step log columns and the final density
/// (row-major, shape `(n_w, n_v)`).
#[pyfunction]
#[pyo3(signature = (params, grid, t_end, eps = 1e-2, dt_max = None, start = None))]
fn simulate_meanfield<'py>(
    py: Python<'py>,
    params: &ModelParams,
    grid: &Grid,
    t_end: f64,
    eps: f64,
    dt_max: Option<f64>,
    start: Option<(f64, f64)>,
) -> PyResult<Bound<'py, PyDict>> {
    let (p, g) = (params.inner, grid.inner);
    let opts = AdaptiveOptions {
        eps,
        dt_max,
        ..AdaptiveOptions::default()
    };
    let run = py
        .detach(|| {
            let d = fvm::discretize_initial(&initial(start), &g)?;
            fvm::adaptive_advance(&p, &g, d, t_end, &opts, |_, _| std::ops::ControlFlow::Continue(()))
        })
        .map_err(to_py)?;
    let accepted: Vec<_> = run.log.iter().filter(|r| r.accepted).collect();
    let d = PyDict::new(py);
    d.set_item("t", accepted.iter().map(|r| r.t).collect::<Vec<_>>())?;
    d.set_item("dt", accepted.iter().map(|r| r.dt).collect::<Vec<_>>())?;
    d.set_item("mean_v", accepted.iter().map(|r| r.mean_v).collect::<Vec<_>>())?;
    d.set_item("psi", accepted.iter().map(|r| r.psi).collect::<Vec<_>>())?;
    d.set_item("mass", accepted.iter().map(|r| r.mass).collect::<Vec<_>>())?;
    d.set_item("rejected", run.rejected())?;
    d.set_item("density", run.density.mu)?;
    d.set_item("t_final", run.density.t)?;
    Ok(d)
}

/// Mean-field sweep over couplings; one dict entry per column of the summary.
#[pyfunction]
#[pyo3(signature = (params, grid, j_values, t_end, eps = 0.3, dt_max = 0.1, transient_fraction = 0.5, amplitude_floor = 1e-3))]
#[allow(clippy::too_many_arguments)]
fn hopf_sweep<'py>(
    py: Python<'py>,
    params: &ModelParams,
    grid: &Grid,
    j_values: Vec<f64>,
    t_end: f64,
    eps: f64,
    dt_max: f64,
    transient_fraction: f64,
    amplitude_floor: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let (p, g) = (params.inner, grid.inner);
    let opts = SweepOptions {
        stepping: AdaptiveOptions {
            eps,
            dt_max: Some(dt_max),
            ..AdaptiveOptions::default()
        },
        t_end,
        transient_fraction,
        amplitude_floor,
    };
    let r = py
        .detach(|| analysis::hopf_sweep(&p, &g, &InitialCondition::STANDARD, &j_values, &opts))
        .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("J", r.j_values.clone())?;
    d.set_item("amplitude", r.amplitudes.clone())?;
    d.set_item("period", r.periods.clone())?;
    d.set_item("oscillatory", r.oscillatory())?;
    let traces: Vec<_> = r.traces.iter().map(|s| series_dict(py, s)).collect::<PyResult<_>>()?;
    d.set_item("traces", traces)?;
    Ok(d)
}

/// Pearson correlation of two neurons over `m` independent networks of size `n`.
#[pyfunction]
#[pyo3(signature = (params, n, m, dt, t_end, seed, saturate = true))]
#[allow(clippy::too_many_arguments)]
fn pair_correlation(
    py: Python<'_>,
    params: &ModelParams,
    n: usize,
    m: usize,
    dt: f64,
    t_end: f64,
    seed: u64,
    saturate: bool,
) -> PyResult<f64> {
    let p = params.inner;
    let mut spec = RunSpec::new(dt, t_end, t_end);
    if saturate {
        spec.step.overflow = OverflowPolicy::Saturate;
    }
    py.detach(|| particle::pair_correlation_experiment(&p, &InitialCondition::STANDARD, n, m, &spec, seed, 10))
        .map(|r| r.rho)
        .map_err(to_py)
}

/// Validates a TOML run configuration and returns it in resolved form.
#[pyfunction]
fn check_config(text: &str) -> PyResult<String> {
    let cfg = cli::parse_config(text).map_err(to_py)?;
    cfg.to_toml().map_err(to_py)
}

/// Runs a TOML run configuration and returns the results directory.
#[pyfunction]
#[pyo3(signature = (text, out_dir = None))]
fn run_config(py: Python<'_>, text: &str, out_dir: Option<PathBuf>) -> PyResult<PathBuf> {
    let cfg = cli::parse_config(text).map_err(to_py)?;
    let dir = out_dir.unwrap_or_else(|| cli::output_dir(&cfg));
    py.detach(|| cli::dispatch(&cfg, &dir)).map_err(to_py)?;
    Ok(dir)
}

#[pymodule]
fn spikefield_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<ModelParams>()?;
    m.add_class::<Grid>()?;
    m.add_function(wrap_pyfunction!(simulate_particle, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_meanfield, m)?)?;
    m.add_function(wrap_pyfunction!(hopf_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(pair_correlation, m)?)?;
    m.add_function(wrap_pyfunction!(check_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
