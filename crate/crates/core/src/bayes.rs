//! Likelihood ratios, sequential posteriors and the log-normal confidence model.
//!
//! Convention: the single-measurement likelihood ratio is
//! `lambda = p_absent / p_present`, so `P_e = 1 / (1 + Lambda)` and the
//! emitter is declared present when `Lambda < 1`.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{Error, Result};
use crate::params::ProtocolParams;
use crate::photon_stats::{apply_saturation, build_distribution, build_with_k_max, CountDistribution, Outcome};
use crate::quad;

/// Probabilities are floored here before forming ratios.
pub const PROBABILITY_FLOOR: f64 = 1e-300;
/// Largest measurement count searched by [`n_for_confidence`].
pub const MAX_MEASUREMENTS: f64 = 1e15;

/// Outcome tables with the emitter present (at `xi`) and absent (`xi = 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisPair {
    present: CountDistribution,
    absent: CountDistribution,
}

impl HypothesisPair {
    /// Builds both tables on a common enumeration bound, then saturates them
    /// at `saturation` if given.
    pub fn new(params: &ProtocolParams, saturation: Option<usize>, tail_tol: f64) -> Result<Self> {
        let absent_params = params.with_xi(0.0);
        let present = build_distribution(params, tail_tol)?;
        let absent = build_distribution(&absent_params, tail_tol)?;
        let (present, absent) = match present.k_max().cmp(&absent.k_max()) {
            std::cmp::Ordering::Equal => (present, absent),
            std::cmp::Ordering::Less => (build_with_k_max(params, absent.k_max())?, absent),
            std::cmp::Ordering::Greater => {
                let k_max = present.k_max();
                (present, build_with_k_max(&absent_params, k_max)?)
            }
        };
        let (present, absent) = match saturation {
            Some(t) => (apply_saturation(&present, t)?, apply_saturation(&absent, t)?),
            None => (present, absent),
        };
        Self::from_distributions(present, absent)
    }

    pub fn from_distributions(present: CountDistribution, absent: CountDistribution) -> Result<Self> {
        let mismatch = |what: &str| Err(Error::MismatchedHypotheses(what.to_string()));
        if absent.params().xi != 0.0 {
            return mismatch("absent hypothesis must have xi = 0");
        }
        if present.params().with_xi(0.0) != *absent.params() {
            return mismatch("parameters differ in more than xi");
        }
        if present.saturation() != absent.saturation() {
            return mismatch("saturation thresholds differ");
        }
        if present.k_max() != absent.k_max() {
            return mismatch("enumeration bounds differ");
        }
        Ok(HypothesisPair { present, absent })
    }

    pub fn present(&self) -> &CountDistribution {
        &self.present
    }

    pub fn absent(&self) -> &CountDistribution {
        &self.absent
    }

    pub fn params(&self) -> &ProtocolParams {
        self.present.params()
    }

    pub fn truth(&self, truth_present: bool) -> &CountDistribution {
        if truth_present {
            &self.present
        } else {
            &self.absent
        }
    }

    /// `ln lambda` for every table entry, in table order.
    pub fn log_ratios(&self) -> Vec<f64> {
        self.present
            .probs()
            .iter()
            .zip(self.absent.probs())
            .map(|(&pp, &pa)| log_ratio(pp, pa))
            .collect()
    }

    /// `p_present - p_absent` per outcome.
    pub fn differences(&self) -> Vec<(Outcome, f64)> {
        self.present
            .iter()
            .zip(self.absent.probs())
            .map(|((o, pp), &pa)| (o, pp - pa))
            .collect()
    }
}

fn log_ratio(p_present: f64, p_absent: f64) -> f64 {
    p_absent.max(PROBABILITY_FLOOR).ln() - p_present.max(PROBABILITY_FLOOR).ln()
}

/// Single-measurement likelihood ratio `p_absent / p_present`.
pub fn likelihood_ratio(pair: &HypothesisPair, outcome: Outcome) -> Result<f64> {
    let index = pair.present.index_of(outcome).ok_or(Error::OutcomeOutOfRange {
        j: outcome.j,
        k: outcome.k,
        k_max: pair.present.k_max(),
    })?;
    let pa = pair.absent.probs()[index].max(PROBABILITY_FLOOR);
    let pp = pair.present.probs()[index].max(PROBABILITY_FLOOR);
    Ok(pa / pp)
}

/// Posterior that the emitter is present given `ln Lambda`, with prior 1/2.
pub fn posterior_from_log_lambda(log_lambda: f64) -> f64 {
    if log_lambda > 0.0 {
        let e = (-log_lambda).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + log_lambda.exp())
    }
}

/// `P_e` before any measurement and after each of `outcomes`.
pub fn posterior_trajectory(pair: &HypothesisPair, outcomes: &[Outcome]) -> Result<Vec<f64>> {
    let mut log_lambda = 0.0;
    let mut out = Vec::with_capacity(outcomes.len() + 1);
    out.push(0.5);
    for &o in outcomes {
        log_lambda += likelihood_ratio(pair, o)?.ln();
        out.push(posterior_from_log_lambda(log_lambda));
    }
    Ok(out)
}

/// Mean and standard deviation of `ln lambda` for one measurement, under
/// each hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLikMoments {
    pub mu_present: f64,
    pub sigma_present: f64,
    pub mu_absent: f64,
    pub sigma_absent: f64,
}

impl LogLikMoments {
    /// `(mu_y, sigma_y)` of `ln Lambda` after `n` measurements.
    pub fn scaled(&self, n: f64, truth_present: bool) -> (f64, f64) {
        let (mu, sigma) = if truth_present {
            (self.mu_present, self.sigma_present)
        } else {
            (self.mu_absent, self.sigma_absent)
        };
        (n * mu, n.sqrt() * sigma)
    }
}

pub fn loglik_moments(pair: &HypothesisPair) -> LogLikMoments {
    let x = pair.log_ratios();
    let moments = |dist: &CountDistribution| {
        let weighted = || dist.probs().iter().zip(&x).filter(|(&p, _)| p > 0.0);
        let mu: f64 = weighted().map(|(&p, &xi)| p * xi).sum();
        let var: f64 = weighted().map(|(&p, &xi)| p * (xi - mu) * (xi - mu)).sum();
        (mu, var.max(0.0).sqrt())
    };
    let (mu_present, sigma_present) = moments(&pair.present);
    let (mu_absent, sigma_absent) = moments(&pair.absent);
    LogLikMoments {
        mu_present,
        sigma_present,
        mu_absent,
        sigma_absent,
    }
}

/// Log-normal density of the overall likelihood ratio.
pub fn lognormal_pdf(lambda: f64, mu_y: f64, sigma_y: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::invalid("Lambda", format!("{lambda} must be positive")));
    }
    if !(sigma_y > 0.0) {
        return Err(Error::DegenerateSigma);
    }
    let z = (lambda.ln() - mu_y) / sigma_y;
    Ok((-0.5 * z * z).exp() / (lambda * sigma_y * (2.0 * std::f64::consts::PI).sqrt()))
}

/// Probability of a correct decision under each hypothesis and overall.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceReport {
    pub c_present: f64,
    pub c_absent: f64,
    pub c_total: f64,
    pub n: f64,
}

fn check_sigmas(m: &LogLikMoments) -> Result<()> {
    if m.sigma_present > 0.0 && m.sigma_absent > 0.0 {
        Ok(())
    } else {
        Err(Error::DegenerateSigma)
    }
}

fn confidence_unchecked(n: f64, m: &LogLikMoments) -> ConfidenceReport {
    let scale = (n / 2.0).sqrt();
    let c_present = 0.5 * (1.0 - erf(scale * m.mu_present / m.sigma_present));
    let c_absent = 0.5 * (1.0 + erf(scale * m.mu_absent / m.sigma_absent));
    ConfidenceReport {
        c_present,
        c_absent,
        c_total: 0.5 * (c_present + c_absent),
        n,
    }
}

/// Analytic confidence after `n` measurements in the log-normal model.
pub fn confidence(n: u64, moments: &LogLikMoments) -> Result<ConfidenceReport> {
    if n < 1 {
        return Err(Error::invalid("n", "at least one measurement is required"));
    }
    confidence_real(n as f64, moments)
}

/// As [`confidence`], for a real-valued measurement count.
pub fn confidence_real(n: f64, moments: &LogLikMoments) -> Result<ConfidenceReport> {
    if !(n > 0.0) {
        return Err(Error::invalid("n", "must be positive"));
    }
    check_sigmas(moments)?;
    Ok(confidence_unchecked(n, moments))
}

fn check_target(c_target: f64, m: &LogLikMoments) -> Result<()> {
    if !(c_target > 0.5 && c_target < 1.0) {
        return Err(Error::invalid("c-target", format!("{c_target} must lie in (0.5, 1)")));
    }
    check_sigmas(m)?;
    if !(m.mu_present < 0.0 && m.mu_absent > 0.0) {
        return Err(Error::Indistinguishable(format!(
            "need mu_present < 0 < mu_absent, got {} and {}",
            m.mu_present, m.mu_absent
        )));
    }
    Ok(())
}

/// Real `N` at which the analytic confidence reaches `c_target`; never below 1.
pub fn n_for_confidence_real(c_target: f64, moments: &LogLikMoments) -> Result<f64> {
    check_target(c_target, moments)?;
    let c = |n: f64| confidence_unchecked(n, moments).c_total;
    if c(1.0) >= c_target {
        return Ok(1.0);
    }
    let mut lo = 1.0;
    let mut hi = 2.0;
    while c(hi) < c_target {
        lo = hi;
        hi *= 2.0;
        if hi > MAX_MEASUREMENTS {
            return Err(Error::Unreachable {
                target: c_target,
                limit: MAX_MEASUREMENTS,
            });
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if c(mid) >= c_target {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    Ok(hi)
}

/// Smallest integer `N` with `confidence(N).c_total >= c_target`.
pub fn n_for_confidence(c_target: f64, moments: &LogLikMoments) -> Result<u64> {
    let root = n_for_confidence_real(c_target, moments)?;
    let c = |n: u64| confidence_unchecked(n as f64, moments).c_total;
    let mut n = root.ceil().max(1.0) as u64;
    while c(n) < c_target {
        n += 1;
    }
    while n > 1 && c(n - 1) >= c_target {
        n -= 1;
    }
    Ok(n)
}

/// Expected posterior `<P_e>` when `ln Lambda ~ Normal(mu_y, sigma_y)`.
pub fn mean_posterior(mu_y: f64, sigma_y: f64) -> Result<f64> {
    if !(sigma_y > 0.0) {
        return Err(Error::DegenerateSigma);
    }
    let norm = 1.0 / (sigma_y * (2.0 * std::f64::consts::PI).sqrt());
    let integrand = |y: f64| {
        let z = (y - mu_y) / sigma_y;
        posterior_from_log_lambda(y) * norm * (-0.5 * z * z).exp()
    };
    quad::integrate(integrand, mu_y - 10.0 * sigma_y, mu_y + 10.0 * sigma_y, 1e-10, 20)
}
