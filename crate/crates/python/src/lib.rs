//! Python bindings for the `homdetect` core crate.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use homdetect_core::{self as core, bayes, fock_oracle, montecarlo, photon_stats, sweep, Error};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidParameter { .. }
        | Error::WrongProtocol { .. }
        | Error::Degenerate(_)
        | Error::MismatchedHypotheses(_)
        | Error::OutcomeOutOfRange { .. }
        | Error::FockTruncation { .. }
        | Error::FockIndex { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(to_py)
}

/// Emitter, apparatus and noise parameters for one protocol.
#[pyclass(name = "ProtocolParams", frozen, from_py_object)]
#[derive(Clone)]
struct PyParams {
    inner: core::ProtocolParams,
}

#[pymethods]
impl PyParams {
    #[new]
    #[pyo3(signature = (protocol = "coherent-hom", xi = 0.1, eta = 0.8, epsilon = 0.9, n_c = 1.0, n_e = 0.8, n_i = 0.8, cos_theta = None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        protocol: &str,
        xi: f64,
        eta: f64,
        epsilon: f64,
        n_c: f64,
        n_e: f64,
        n_i: f64,
        cos_theta: Option<f64>,
    ) -> PyResult<Self> {
        let protocol: core::Protocol = parse(protocol)?;
        let inner = match protocol {
            core::Protocol::Direct => core::ProtocolParams::direct(xi, eta, n_e, n_i),
            _ => core::ProtocolParams {
                protocol,
                xi,
                eta,
                epsilon,
                n_c,
                n_e,
                n_i,
                cos_theta: cos_theta.unwrap_or(if protocol == core::Protocol::CoherentHom { 1.0 } else { 0.0 }),
            },
        };
        inner.validate().map_err(to_py)?;
        Ok(PyParams { inner })
    }

    #[getter]
    fn protocol(&self) -> &'static str {
        self.inner.protocol.name()
    }
    #[getter]
    fn xi(&self) -> f64 {
        self.inner.xi
    }
    #[getter]
    fn eta(&self) -> f64 {
        self.inner.eta
    }
    #[getter]
    fn epsilon(&self) -> f64 {
        self.inner.epsilon
    }
    #[getter]
    fn n_c(&self) -> f64 {
        self.inner.n_c
    }
    #[getter]
    fn n_e(&self) -> f64 {
        self.inner.n_e
    }
    #[getter]
    fn n_i(&self) -> f64 {
        self.inner.n_i
    }
    #[getter]
    fn cos_theta(&self) -> f64 {
        self.inner.cos_theta
    }

    /// `(n_bar, n_n)`: total detected mean and noise mean.
    fn derived_means(&self) -> (f64, f64) {
        let m = core::derived_means(&self.inner);
        (m.n_bar, m.n_n)
    }

    fn with_protocol(&self, protocol: &str) -> PyResult<Self> {
        let inner = self.inner.with_protocol(parse(protocol)?);
        inner.validate().map_err(to_py)?;
        Ok(PyParams { inner })
    }

    fn with_xi(&self, xi: f64) -> PyResult<Self> {
        let inner = self.inner.with_xi(xi);
        inner.validate().map_err(to_py)?;
        Ok(PyParams { inner })
    }

    fn with_n_c(&self, n_c: f64) -> PyResult<Self> {
        let inner = self.inner.with_n_c(n_c);
        inner.validate().map_err(to_py)?;
        Ok(PyParams { inner })
    }

    fn __repr__(&self) -> String {
        let p = &self.inner;
        format!(
            "ProtocolParams(protocol='{}', xi={}, eta={}, epsilon={}, n_c={}, n_e={}, n_i={}, cos_theta={})",
            p.protocol, p.xi, p.eta, p.epsilon, p.n_c, p.n_e, p.n_i, p.cos_theta
        )
    }
}

/// Enumerated photon-count table.
#[pyclass(name = "CountDistribution", frozen)]
struct PyDistribution {
    inner: core::CountDistribution,
}

#[pymethods]
impl PyDistribution {
    #[getter]
    fn k_max(&self) -> usize {
        self.inner.k_max()
    }
    #[getter]
    fn tail_mass(&self) -> f64 {
        self.inner.tail_mass()
    }
    #[getter]
    fn saturation(&self) -> Option<usize> {
        self.inner.saturation()
    }
    #[getter]
    fn probs(&self) -> Vec<f64> {
        self.inner.probs().to_vec()
    }

    /// `(j, k)` pairs in table order; `k` is 0 for direct detection.
    fn outcomes(&self) -> Vec<(usize, usize)> {
        self.inner.iter().map(|(o, _)| (o.j, o.k)).collect()
    }

    #[pyo3(signature = (j, k = 0))]
    fn prob(&self, j: usize, k: usize) -> Option<f64> {
        self.inner.prob(core::Outcome::new(j, k))
    }

    fn total(&self) -> f64 {
        self.inner.total()
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

#[pyfunction]
#[pyo3(signature = (params, saturation = None, tail_tol = photon_stats::DEFAULT_TAIL_TOL))]
fn distribution(params: &PyParams, saturation: Option<usize>, tail_tol: f64) -> PyResult<PyDistribution> {
    let inner = photon_stats::build_detected(&params.inner, saturation, tail_tol).map_err(to_py)?;
    Ok(PyDistribution { inner })
}

/// Single-outcome probability; `k` is ignored for direct detection.
#[pyfunction]
#[pyo3(signature = (params, j, k = 0))]
fn pmf(params: &PyParams, j: usize, k: usize) -> PyResult<f64> {
    photon_stats::pmf(&params.inner, core::Outcome::new(j, k)).map_err(to_py)
}

/// Per-measurement log-likelihood-ratio moments under each hypothesis.
#[pyclass(name = "LogLikMoments", frozen, get_all, skip_from_py_object)]
#[derive(Clone)]
struct PyMoments {
    mu_present: f64,
    sigma_present: f64,
    mu_absent: f64,
    sigma_absent: f64,
}

impl PyMoments {
    fn core(&self) -> bayes::LogLikMoments {
        bayes::LogLikMoments {
            mu_present: self.mu_present,
            sigma_present: self.sigma_present,
            mu_absent: self.mu_absent,
            sigma_absent: self.sigma_absent,
        }
    }
}

#[pymethods]
impl PyMoments {
    #[new]
    fn new(mu_present: f64, sigma_present: f64, mu_absent: f64, sigma_absent: f64) -> Self {
        PyMoments {
            mu_present,
            sigma_present,
            mu_absent,
            sigma_absent,
        }
    }

    fn __repr__(&self) -> String {
        format!(
            "LogLikMoments(mu_present={}, sigma_present={}, mu_absent={}, sigma_absent={})",
            self.mu_present, self.sigma_present, self.mu_absent, self.sigma_absent
        )
    }
}

/// Distributions with and without the emitter on a common table.
#[pyclass(name = "HypothesisPair", frozen)]
struct PyPair {
    inner: core::HypothesisPair,
}

#[pymethods]
impl PyPair {
    #[new]
    #[pyo3(signature = (params, saturation = None, tail_tol = photon_stats::DEFAULT_TAIL_TOL))]
    fn new(params: &PyParams, saturation: Option<usize>, tail_tol: f64) -> PyResult<Self> {
        let inner = core::HypothesisPair::new(&params.inner, saturation, tail_tol).map_err(to_py)?;
        Ok(PyPair { inner })
    }

    fn present(&self) -> PyDistribution {
        PyDistribution {
            inner: self.inner.present().clone(),
        }
    }

    fn absent(&self) -> PyDistribution {
        PyDistribution {
            inner: self.inner.absent().clone(),
        }
    }

    /// `ln(p_absent / p_present)` per table entry.
    fn log_ratios(&self) -> Vec<f64> {
        self.inner.log_ratios()
    }

    /// `((j, k), p_present - p_absent)` per table entry.
    fn differences(&self) -> Vec<((usize, usize), f64)> {
        self.inner.differences().into_iter().map(|(o, d)| ((o.j, o.k), d)).collect()
    }

    #[pyo3(signature = (j, k = 0))]
    fn likelihood_ratio(&self, j: usize, k: usize) -> PyResult<f64> {
        bayes::likelihood_ratio(&self.inner, core::Outcome::new(j, k)).map_err(to_py)
    }

    /// Posterior of emitter presence after each outcome, starting from 0.5.
    fn posterior_trajectory(&self, outcomes: Vec<(usize, usize)>) -> PyResult<Vec<f64>> {
        let outcomes: Vec<_> = outcomes.into_iter().map(|(j, k)| core::Outcome::new(j, k)).collect();
        bayes::posterior_trajectory(&self.inner, &outcomes).map_err(to_py)
    }

    fn moments(&self) -> PyMoments {
        let m = bayes::loglik_moments(&self.inner);
        PyMoments::new(m.mu_present, m.sigma_present, m.mu_absent, m.sigma_absent)
    }
}

/// Returns `(c_present, c_absent, c_total)`.
#[pyfunction]
fn confidence(n: f64, moments: &PyMoments) -> PyResult<(f64, f64, f64)> {
    let c = bayes::confidence_real(n, &moments.core()).map_err(to_py)?;
    Ok((c.c_present, c.c_absent, c.c_total))
}

#[pyfunction]
fn n_for_confidence(c_target: f64, moments: &PyMoments) -> PyResult<u64> {
    bayes::n_for_confidence(c_target, &moments.core()).map_err(to_py)
}

#[pyfunction]
fn mean_posterior(mu_y: f64, sigma_y: f64) -> PyResult<f64> {
    bayes::mean_posterior(mu_y, sigma_y).map_err(to_py)
}

/// Per-step posterior statistics of a simulated ensemble.
#[pyclass(name = "Ensemble", frozen, get_all)]
struct PyEnsemble {
    mean: Vec<f64>,
    q25: Vec<f64>,
    q75: Vec<f64>,
    empirical_confidence: f64,
    analytic_confidence: Option<f64>,
    seed: u64,
}

#[pyfunction]
#[pyo3(signature = (pair, truth = "present", n_measurements = 50, n_trajectories = montecarlo::DEFAULT_TRAJECTORIES, seed = 0))]
fn simulate(
    py: Python<'_>,
    pair: &PyPair,
    truth: &str,
    n_measurements: usize,
    n_trajectories: usize,
    seed: u64,
) -> PyResult<PyEnsemble> {
    let cfg = montecarlo::EnsembleConfig {
        n_trajectories,
        ..montecarlo::EnsembleConfig::new(&pair.inner, parse(truth)?, n_measurements, seed)
    };
    let (ensemble, summary) = py
        .detach(|| {
            let e = montecarlo::simulate_ensemble(&cfg)?;
            let s = montecarlo::summarize(&cfg, &e);
            Ok::<_, Error>((e, s))
        })
        .map_err(to_py)?;
    Ok(PyEnsemble {
        mean: ensemble.mean,
        q25: ensemble.q25,
        q75: ensemble.q75,
        empirical_confidence: summary.empirical_confidence,
        analytic_confidence: summary.analytic_confidence,
        seed,
    })
}

#[pyfunction]
#[pyo3(signature = (params, saturation = None, c_target = sweep::TWO_SIGMA))]
fn n_two_sigma(params: &PyParams, saturation: Option<usize>, c_target: f64) -> PyResult<u64> {
    sweep::n_two_sigma(&params.inner, saturation, c_target).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (params, saturation = None, c_target = sweep::TWO_SIGMA))]
fn speedup(params: &PyParams, saturation: Option<usize>, c_target: f64) -> PyResult<f64> {
    sweep::speedup(&params.inner, saturation, c_target).map_err(to_py)
}

#[pyclass(name = "NcOptimum", frozen, get_all)]
struct PyNcOptimum {
    n_c_star: f64,
    n_star: u64,
    n_star_real: f64,
    at_bound: bool,
}

#[pyfunction]
#[pyo3(signature = (params, saturation = None, c_target = sweep::TWO_SIGMA, bounds = sweep::DEFAULT_NC_BOUNDS))]
fn optimize_nc(
    py: Python<'_>,
    params: &PyParams,
    saturation: Option<usize>,
    c_target: f64,
    bounds: (f64, f64),
) -> PyResult<PyNcOptimum> {
    let o = py
        .detach(|| sweep::optimize_nc(&params.inner, saturation, c_target, bounds))
        .map_err(to_py)?;
    Ok(PyNcOptimum {
        n_c_star: o.n_c_star,
        n_star: o.n_star,
        n_star_real: o.n_star_real,
        at_bound: o.at_bound,
    })
}

/// Runs a sweep given a preset name or a JSON specification; returns CSV text.
#[pyfunction]
#[pyo3(signature = (preset = None, spec_json = None))]
fn run_sweep(py: Python<'_>, preset: Option<&str>, spec_json: Option<&str>) -> PyResult<String> {
    let spec = match (preset, spec_json) {
        (Some(name), None) => sweep::SweepSpec::preset(name).map_err(to_py)?,
        (None, Some(text)) => serde_json_spec(text)?,
        _ => return Err(PyValueError::new_err("pass exactly one of `preset` or `spec_json`")),
    };
    let result = py.detach(|| sweep::run_sweep(&spec)).map_err(to_py)?;
    Ok(result.to_csv())
}

fn serde_json_spec(text: &str) -> PyResult<sweep::SweepSpec> {
    let spec: sweep::SweepSpec =
        serde_json::from_str(text).map_err(|e| PyValueError::new_err(format!("invalid sweep spec: {e}")))?;
    spec.validate().map_err(to_py)?;
    Ok(spec)
}

/// Returns `(max_abs, (j, k), outcomes_checked)` over `j + k <= 10`.
#[pyfunction]
#[pyo3(signature = (params, fock_dim = fock_oracle::DEFAULT_FOCK_DIM))]
fn validate_oracle(py: Python<'_>, params: &PyParams, fock_dim: usize) -> PyResult<(f64, (usize, usize), usize)> {
    let cfg = fock_oracle::OracleConfig::with_fock_dim(params.inner, fock_dim);
    let dev = py.detach(|| fock_oracle::compare_closed_form(&cfg, 10)).map_err(to_py)?;
    Ok((dev.max_abs, (dev.worst.j, dev.worst.k), dev.outcomes_checked))
}

#[pymodule]
#[pyo3(name = "homdetect")]
fn homdetect_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyParams>()?;
    m.add_class::<PyDistribution>()?;
    m.add_class::<PyPair>()?;
    m.add_class::<PyMoments>()?;
    m.add_class::<PyEnsemble>()?;
    m.add_class::<PyNcOptimum>()?;
    m.add_function(wrap_pyfunction!(distribution, m)?)?;
    m.add_function(wrap_pyfunction!(pmf, m)?)?;
    m.add_function(wrap_pyfunction!(confidence, m)?)?;
    m.add_function(wrap_pyfunction!(n_for_confidence, m)?)?;
    m.add_function(wrap_pyfunction!(mean_posterior, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(n_two_sigma, m)?)?;
    m.add_function(wrap_pyfunction!(speedup, m)?)?;
    m.add_function(wrap_pyfunction!(optimize_nc, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(validate_oracle, m)?)?;
    m.add("PRESETS", sweep::PRESETS.to_vec())?;
    Ok(())
}
