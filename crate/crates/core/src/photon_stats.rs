//! Closed-form photon-count distributions for direct and extended-HOM detection.
//!
//! Both protocols share a Poissonian envelope over the noise-only mean,
//! modulated by a low-order polynomial in the counts that carries the
//! emitter's signature. The polynomials are evaluated in expanded form so
//! that `xi = 0`, `xi = 1` and `n_n = 0` need no special casing.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::io::format_float;
use crate::params::{derived_means, Protocol, ProtocolParams};

/// Probabilities in `[-NEGATIVE_TOLERANCE, 0)` are rounding noise and clamp to zero.
pub const NEGATIVE_TOLERANCE: f64 = 1e-15;
pub const DEFAULT_TAIL_TOL: f64 = 1e-12;
/// Hard cap on the per-detector enumeration bound.
pub const MAX_K_MAX: usize = 10_000;

/// Detector counts for one measurement. `k` is always 0 for direct detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Outcome {
    pub j: usize,
    pub k: usize,
}

impl Outcome {
    pub fn new(j: usize, k: usize) -> Self {
        Outcome { j, k }
    }

    pub fn single(j: usize) -> Self {
        Outcome { j, k: 0 }
    }

    pub fn saturate(self, t: usize) -> Self {
        Outcome {
            j: self.j.min(t),
            k: self.k.min(t),
        }
    }
}

fn ln_factorial(n: usize) -> f64 {
    ln_gamma(n as f64 + 1.0)
}

/// `ln P(k; mean)` for a Poisson law; `-inf` where the pmf vanishes.
pub fn ln_poisson(k: usize, mean: f64) -> f64 {
    if mean == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    k as f64 * mean.ln() - mean - ln_factorial(k)
}

pub fn poisson_pmf(k: usize, mean: f64) -> f64 {
    ln_poisson(k, mean).exp()
}

fn clamp_probability(p: f64, j: usize, k: usize) -> Result<f64> {
    if p >= 0.0 {
        Ok(p)
    } else if p >= -NEGATIVE_TOLERANCE {
        Ok(0.0)
    } else {
        Err(Error::NegativeProbability { j, k, p })
    }
}

fn require_protocol(params: &ProtocolParams, hom: bool) -> Result<()> {
    if params.protocol.is_hom() == hom {
        return Ok(());
    }
    Err(Error::WrongProtocol {
        expected: if hom { "coherent-hom or incoherent-hom" } else { "direct" },
        actual: params.protocol.name(),
    })
}

/// Count distribution of the single direct detector.
///
/// Bernoulli(`eta * xi`) emitter clicks on top of Poisson(`n_n`) noise,
/// written as a two-term Poisson mixture so that `n_n = 0` is exact.
pub fn direct_pmf(params: &ProtocolParams, k: usize) -> Result<f64> {
    require_protocol(params, false)?;
    params.validate()?;
    Ok(DirectKernel::new(params).pmf(k))
}

struct DirectKernel {
    n_n: f64,
    detect: f64,
}

impl DirectKernel {
    fn new(params: &ProtocolParams) -> Self {
        DirectKernel {
            n_n: derived_means(params).n_n,
            detect: params.eta * params.xi,
        }
    }

    fn pmf(&self, k: usize) -> f64 {
        let no_click = (1.0 - self.detect) * poisson_pmf(k, self.n_n);
        let click = if k == 0 {
            0.0
        } else {
            self.detect * poisson_pmf(k - 1, self.n_n)
        };
        no_click + click
    }
}

/// Expanded extended-HOM polynomial and its Poissonian envelope.
struct HomKernel {
    n_bar: f64,
    ln_half_mean: f64,
    constant: f64,
    total_coeff: f64,
    imbalance_sq_coeff: f64,
    imbalance_coeff: f64,
}

impl HomKernel {
    fn new(params: &ProtocolParams) -> Result<Self> {
        let p = params;
        let means = derived_means(p);
        let n_bar = means.n_bar;
        if n_bar == 0.0 {
            if p.xi > 0.0 {
                return Err(Error::Degenerate(
                    "extended HOM with zero detected mean photon number and xi > 0 is undefined; \
                     use direct detection with eta = 0 instead"
                        .into(),
                ));
            }
            return Ok(HomKernel {
                n_bar,
                ln_half_mean: f64::NEG_INFINITY,
                constant: 1.0,
                total_coeff: 0.0,
                imbalance_sq_coeff: 0.0,
                imbalance_coeff: 0.0,
            });
        }
        let eta_xi = p.eta * p.xi;
        let cos_theta = p.effective_cos_theta();
        Ok(HomKernel {
            n_bar,
            ln_half_mean: (n_bar / 2.0).ln(),
            constant: 1.0 - eta_xi,
            total_coeff: eta_xi * means.n_n / n_bar,
            imbalance_sq_coeff: p.eta * p.eta * p.xi * p.epsilon * p.n_c,
            imbalance_coeff: -2.0 * p.eta * cos_theta * (p.xi * (1.0 - p.xi) * p.epsilon * p.n_c).sqrt(),
        })
    }

    /// `ln` of the per-detector envelope factor; the pmf is `exp(row[j] + row[k])` times the bracket.
    fn ln_row(&self, j: usize) -> f64 {
        if self.n_bar == 0.0 {
            return if j == 0 { 0.0 } else { f64::NEG_INFINITY };
        }
        j as f64 * self.ln_half_mean - self.n_bar / 2.0 - ln_factorial(j)
    }

    fn bracket(&self, j: usize, k: usize) -> f64 {
        if self.n_bar == 0.0 {
            return self.constant;
        }
        let total = (j + k) as f64 / self.n_bar;
        let imbalance = (j as f64 - k as f64) / self.n_bar;
        self.constant
            + self.total_coeff * total
            + self.imbalance_sq_coeff * imbalance * imbalance
            + self.imbalance_coeff * imbalance
    }

    fn pmf_from_rows(&self, ln_j: f64, ln_k: f64, j: usize, k: usize) -> Result<f64> {
        let envelope = (ln_j + ln_k).exp();
        if envelope == 0.0 {
            return Ok(0.0);
        }
        clamp_probability(envelope * self.bracket(j, k), j, k)
    }
}

/// Joint count distribution of the two HOM detectors.
///
/// Incoherent HOM is the same expression with the phase-sensitive term
/// removed (`cos_theta = 0`).
pub fn hom_pmf(params: &ProtocolParams, j: usize, k: usize) -> Result<f64> {
    require_protocol(params, true)?;
    params.validate()?;
    let kernel = HomKernel::new(params)?;
    kernel.pmf_from_rows(kernel.ln_row(j), kernel.ln_row(k), j, k)
}

/// Probability of `outcome` under either protocol.
pub fn pmf(params: &ProtocolParams, outcome: Outcome) -> Result<f64> {
    match params.protocol {
        Protocol::Direct => direct_pmf(params, outcome.j),
        _ => hom_pmf(params, outcome.j, outcome.k),
    }
}

/// Enumerated probability table over detector outcomes.
///
/// Entries are stored row-major, `j` then `k`, on a square grid
/// `0..=k_max` per detector (a single row for direct detection).
#[derive(Debug, Clone, PartialEq)]
pub struct CountDistribution {
    params: ProtocolParams,
    saturation: Option<usize>,
    k_max: usize,
    tail_mass: f64,
    probs: Vec<f64>,
}

impl CountDistribution {
    pub fn params(&self) -> &ProtocolParams {
        &self.params
    }

    pub fn protocol(&self) -> Protocol {
        self.params.protocol
    }

    pub fn saturation(&self) -> Option<usize> {
        self.saturation
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    fn side(&self) -> usize {
        self.k_max + 1
    }

    pub fn outcome_at(&self, index: usize) -> Outcome {
        if self.params.protocol.is_hom() {
            Outcome::new(index / self.side(), index % self.side())
        } else {
            Outcome::single(index)
        }
    }

    /// Table index of `outcome`. Saturated tables map counts above the
    /// threshold onto the boundary bin.
    pub fn index_of(&self, outcome: Outcome) -> Option<usize> {
        let o = match self.saturation {
            Some(t) => outcome.saturate(t),
            None => outcome,
        };
        if o.j > self.k_max || o.k > self.k_max {
            return None;
        }
        if self.params.protocol.is_hom() {
            Some(o.j * self.side() + o.k)
        } else if o.k == 0 {
            Some(o.j)
        } else {
            None
        }
    }

    pub fn prob(&self, outcome: Outcome) -> Option<f64> {
        self.index_of(outcome).map(|i| self.probs[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (Outcome, f64)> + '_ {
        self.probs.iter().enumerate().map(|(i, &p)| (self.outcome_at(i), p))
    }

    /// Sum of all enumerated entries.
    pub fn total(&self) -> f64 {
        neumaier_sum(self.probs.iter().copied())
    }

    pub fn to_csv(&self) -> String {
        let hom = self.params.protocol.is_hom();
        let mut out = String::from(if hom { "j,k,p\n" } else { "j,p\n" });
        for (o, p) in self.iter() {
            if hom {
                out.push_str(&format!("{},{},{}\n", o.j, o.k, format_float(p)));
            } else {
                out.push_str(&format!("{},{}\n", o.j, format_float(p)));
            }
        }
        out
    }

    pub fn to_document(&self) -> DistributionDocument {
        let hom = self.params.protocol.is_hom();
        DistributionDocument {
            params: self.params,
            saturation: self.saturation,
            k_max: self.k_max,
            tail_mass: self.tail_mass,
            entries: self
                .iter()
                .map(|(o, p)| Entry {
                    j: o.j,
                    k: hom.then_some(o.k),
                    p,
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("distribution serializes")
    }
}

/// JSON form of a [`CountDistribution`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionDocument {
    pub params: ProtocolParams,
    pub saturation: Option<usize>,
    pub k_max: usize,
    pub tail_mass: f64,
    pub entries: Vec<Entry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub j: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub k: Option<usize>,
    pub p: f64,
}

pub(crate) fn neumaier_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Initial per-detector bound: the Poisson envelope mean plus twelve
/// standard deviations, at least 20.
pub fn initial_k_max(params: &ProtocolParams) -> usize {
    let means = derived_means(params);
    let per_detector = if params.protocol.is_hom() {
        means.n_bar / 2.0
    } else {
        means.n_n
    };
    let bound = (per_detector + 12.0 * (per_detector + 1.0).sqrt()).ceil() as usize;
    bound.max(20)
}

/// Enumerates the count distribution until the un-enumerated mass is at
/// most `tail_tol`.
pub fn build_distribution(params: &ProtocolParams, tail_tol: f64) -> Result<CountDistribution> {
    if !(tail_tol > 0.0 && tail_tol <= 1e-6) {
        return Err(Error::invalid("tail-tol", format!("{tail_tol} is outside (0, 1e-6]")));
    }
    params.validate()?;
    let mut k_max = initial_k_max(params);
    loop {
        let dist = build_with_k_max(params, k_max)?;
        if dist.tail_mass <= tail_tol {
            return Ok(dist);
        }
        k_max = (k_max as f64 * 1.5).ceil() as usize;
        if k_max > MAX_K_MAX {
            return Err(Error::TruncationDidNotConverge { k_max });
        }
    }
}

/// Enumerates the distribution on a fixed per-detector bound.
pub fn build_with_k_max(params: &ProtocolParams, k_max: usize) -> Result<CountDistribution> {
    params.validate()?;
    if k_max > MAX_K_MAX {
        return Err(Error::TruncationDidNotConverge { k_max });
    }
    let side = k_max + 1;
    let probs = match params.protocol {
        Protocol::Direct => {
            let kernel = DirectKernel::new(params);
            (0..side).map(|k| kernel.pmf(k)).collect::<Vec<_>>()
        }
        Protocol::CoherentHom | Protocol::IncoherentHom => {
            let kernel = HomKernel::new(params)?;
            let rows: Vec<f64> = (0..side).map(|j| kernel.ln_row(j)).collect();
            let mut probs = Vec::with_capacity(side * side);
            for (j, &ln_j) in rows.iter().enumerate() {
                for (k, &ln_k) in rows.iter().enumerate() {
                    probs.push(kernel.pmf_from_rows(ln_j, ln_k, j, k)?);
                }
            }
            probs
        }
    };
    let tail_mass = (1.0 - neumaier_sum(probs.iter().copied())).max(0.0);
    Ok(CountDistribution {
        params: *params,
        saturation: None,
        k_max,
        tail_mass,
        probs,
    })
}

/// Folds all counts above `t` into the threshold bin of each detector.
///
/// The un-enumerated tail of the source table lands in the all-saturated
/// bin, so the result has zero tail mass.
pub fn apply_saturation(dist: &CountDistribution, t: usize) -> Result<CountDistribution> {
    if t < 1 {
        return Err(Error::invalid("saturation", "threshold must be at least 1"));
    }
    if dist.saturation.is_some() {
        return Err(Error::invalid("saturation", "distribution is already saturated"));
    }
    let hom = dist.params.protocol.is_hom();
    let side = t + 1;
    let mut probs = vec![0.0; if hom { side * side } else { side }];
    let index = |o: Outcome| if hom { o.j * side + o.k } else { o.j };
    for (o, p) in dist.iter() {
        probs[index(o.saturate(t))] += p;
    }
    probs[index(Outcome::new(t, if hom { t } else { 0 }))] += dist.tail_mass;
    Ok(CountDistribution {
        params: dist.params,
        saturation: Some(t),
        k_max: t,
        tail_mass: 0.0,
        probs,
    })
}

/// Builds the table and optionally saturates it.
pub fn build_detected(params: &ProtocolParams, saturation: Option<usize>, tail_tol: f64) -> Result<CountDistribution> {
    let dist = build_distribution(params, tail_tol)?;
    match saturation {
        Some(t) => apply_saturation(&dist, t),
        None => Ok(dist),
    }
}
