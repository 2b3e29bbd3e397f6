//! Simulated measurement records and ensemble statistics of the posterior.
//!
//! Trajectory `i` draws from its own ChaCha8 stream (`seed`, stream `i`),
//! so results do not depend on how trajectories are scheduled over threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bayes::{confidence, loglik_moments, posterior_from_log_lambda, HypothesisPair};
use crate::error::{Error, Result};
use crate::io::format_float;
use crate::photon_stats::{CountDistribution, Outcome};

pub const DEFAULT_TRAJECTORIES: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Truth {
    Present,
    Absent,
}

impl Truth {
    pub fn is_present(self) -> bool {
        matches!(self, Truth::Present)
    }

    /// Whether a run ending at `ln Lambda` decides correctly. `Lambda = 1`
    /// is a tie and counts as wrong.
    pub fn decides_correctly(self, log_lambda: f64) -> bool {
        match self {
            Truth::Present => log_lambda < 0.0,
            Truth::Absent => log_lambda > 0.0,
        }
    }
}

impl std::str::FromStr for Truth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "present" => Ok(Truth::Present),
            "absent" => Ok(Truth::Absent),
            other => Err(Error::invalid("truth", format!("expected `present` or `absent`, got `{other}`"))),
        }
    }
}

/// Inverse-CDF sampler over a table, in row-major outcome order.
pub struct OutcomeSampler<'a> {
    dist: &'a CountDistribution,
    cdf: Vec<f64>,
}

impl<'a> OutcomeSampler<'a> {
    pub fn new(dist: &'a CountDistribution) -> Self {
        let mut acc = 0.0;
        let cdf = dist
            .probs()
            .iter()
            .map(|&p| {
                acc += p;
                acc
            })
            .collect();
        OutcomeSampler { dist, cdf }
    }

    /// Draws a table index. The un-enumerated tail is excluded, i.e. the
    /// table is renormalized to its enumerated mass.
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cdf.last().expect("non-empty table");
        let u = rng.random::<f64>() * total;
        self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Outcome {
        self.dist.outcome_at(self.sample_index(rng))
    }
}

/// One draw from `dist`. Build an [`OutcomeSampler`] for repeated draws.
pub fn sample_outcome<R: Rng + ?Sized>(dist: &CountDistribution, rng: &mut R) -> Outcome {
    OutcomeSampler::new(dist).sample(rng)
}

/// Random stream for trajectory `index`.
pub fn trajectory_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, Copy)]
pub struct EnsembleConfig<'a> {
    pub pair: &'a HypothesisPair,
    pub truth: Truth,
    pub n_measurements: usize,
    pub n_trajectories: usize,
    pub seed: u64,
    /// Keep the final `ln Lambda` of every trajectory.
    pub retain_final: bool,
}

impl<'a> EnsembleConfig<'a> {
    pub fn new(pair: &'a HypothesisPair, truth: Truth, n_measurements: usize, seed: u64) -> Self {
        EnsembleConfig {
            pair,
            truth,
            n_measurements,
            n_trajectories: DEFAULT_TRAJECTORIES,
            seed,
            retain_final: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_measurements < 1 {
            return Err(Error::invalid("n-measurements", "must be at least 1"));
        }
        if self.n_trajectories < 1 {
            return Err(Error::invalid("n-trajectories", "must be at least 1"));
        }
        Ok(())
    }
}

/// Per-step posterior statistics over an ensemble of trajectories.
///
/// Index `s` of each vector is the state after `s + 1` measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEnsemble {
    pub truth: Truth,
    pub seed: u64,
    pub n_trajectories: usize,
    pub mean: Vec<f64>,
    pub q25: Vec<f64>,
    pub q75: Vec<f64>,
    /// Fraction of trajectories deciding correctly after the last step.
    pub empirical_confidence: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub final_log_lambda: Option<Vec<f64>>,
}

impl TrajectoryEnsemble {
    pub fn n_measurements(&self) -> usize {
        self.mean.len()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,mean_Pe,q25,q75\n");
        for s in 0..self.mean.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                s + 1,
                format_float(self.mean[s]),
                format_float(self.q25[s]),
                format_float(self.q75[s])
            ));
        }
        out
    }
}

/// Run summary written next to the per-step table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub empirical_confidence: f64,
    /// Log-normal prediction for the same truth; absent when the
    /// log-likelihood spread is zero.
    pub analytic_confidence: Option<f64>,
    #[serde(rename = "N")]
    pub n: usize,
    pub seed: u64,
    pub truth: Truth,
    pub n_trajectories: usize,
}

pub fn summarize(cfg: &EnsembleConfig<'_>, ensemble: &TrajectoryEnsemble) -> EnsembleSummary {
    let moments = loglik_moments(cfg.pair);
    let analytic = confidence(cfg.n_measurements as u64, &moments).ok().map(|c| {
        if cfg.truth.is_present() {
            c.c_present
        } else {
            c.c_absent
        }
    });
    EnsembleSummary {
        empirical_confidence: ensemble.empirical_confidence,
        analytic_confidence: analytic,
        n: cfg.n_measurements,
        seed: cfg.seed,
        truth: cfg.truth,
        n_trajectories: cfg.n_trajectories,
    }
}

/// Nearest-rank quantile of sorted data.
pub fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

fn run_trajectories(cfg: &EnsembleConfig<'_>, mut visit: impl FnMut(usize, &[f64]) + Send) -> Result<()> {
    cfg.validate()?;
    let log_ratios = cfg.pair.log_ratios();
    let sampler = OutcomeSampler::new(cfg.pair.truth(cfg.truth.is_present()));
    let n = cfg.n_measurements;
    // Chunked so memory stays bounded for long records.
    const CHUNK: usize = 4096;
    let mut start = 0;
    while start < cfg.n_trajectories {
        let end = (start + CHUNK).min(cfg.n_trajectories);
        let mut buf = vec![0.0; (end - start) * n];
        buf.par_chunks_mut(n).enumerate().for_each(|(offset, row)| {
            let mut rng = trajectory_rng(cfg.seed, (start + offset) as u64);
            let mut log_lambda = 0.0;
            for slot in row.iter_mut() {
                log_lambda += log_ratios[sampler.sample_index(&mut rng)];
                *slot = log_lambda;
            }
        });
        for (offset, row) in buf.chunks(n).enumerate() {
            visit(start + offset, row);
        }
        start = end;
    }
    Ok(())
}

/// Final `ln Lambda` of every trajectory, in trajectory order.
pub fn simulate_final_log_lambda(cfg: &EnsembleConfig<'_>) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(cfg.n_trajectories);
    run_trajectories(cfg, |_, row| out.push(*row.last().expect("n >= 1")))?;
    Ok(out)
}

pub fn simulate_ensemble(cfg: &EnsembleConfig<'_>) -> Result<TrajectoryEnsemble> {
    let n = cfg.n_measurements;
    let m = cfg.n_trajectories;
    // step-major posterior matrix
    let mut posteriors = vec![0.0; n * m];
    let mut finals = Vec::with_capacity(m);
    run_trajectories(cfg, |i, row| {
        for (s, &l) in row.iter().enumerate() {
            posteriors[s * m + i] = posterior_from_log_lambda(l);
        }
        finals.push(row[n - 1]);
    })?;

    let stats: Vec<(f64, f64, f64)> = posteriors
        .par_chunks_mut(m)
        .map(|column| {
            let mean = column.iter().sum::<f64>() / m as f64;
            column.sort_unstable_by(f64::total_cmp);
            (mean, nearest_rank(column, 0.25), nearest_rank(column, 0.75))
        })
        .collect();

    let correct = finals.iter().filter(|&&l| cfg.truth.decides_correctly(l)).count();
    Ok(TrajectoryEnsemble {
        truth: cfg.truth,
        seed: cfg.seed,
        n_trajectories: m,
        mean: stats.iter().map(|s| s.0).collect(),
        q25: stats.iter().map(|s| s.1).collect(),
        q75: stats.iter().map(|s| s.2).collect(),
        empirical_confidence: correct as f64 / m as f64,
        final_log_lambda: cfg.retain_final.then_some(finals),
    })
}

/// Histogram of the final `ln Lambda` with the normal overlay parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLambdaHistogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub sample_mean: f64,
    pub sample_variance: f64,
    /// `N mu_x` under the simulated truth.
    pub mu_y: f64,
    /// `sqrt(N) sigma_x` under the simulated truth.
    pub sigma_y: f64,
    pub samples: Vec<f64>,
}

pub fn loglambda_histogram(cfg: &EnsembleConfig<'_>, bins: usize) -> Result<LogLambdaHistogram> {
    if bins < 1 {
        return Err(Error::invalid("bins", "must be at least 1"));
    }
    let samples = simulate_final_log_lambda(cfg)?;
    let count = samples.len() as f64;
    let sample_mean = samples.iter().sum::<f64>() / count;
    let sample_variance = if samples.len() > 1 {
        samples.iter().map(|x| (x - sample_mean).powi(2)).sum::<f64>() / (count - 1.0)
    } else {
        0.0
    };
    let (mut lo, mut hi) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    if lo == hi {
        lo -= 0.5;
        hi += 0.5;
    }
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| lo + width * i as f64).collect();
    let mut counts = vec![0u64; bins];
    for &x in &samples {
        let b = (((x - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let (mu_y, sigma_y) = loglik_moments(cfg.pair).scaled(cfg.n_measurements as f64, cfg.truth.is_present());
    Ok(LogLambdaHistogram {
        edges,
        counts,
        sample_mean,
        sample_variance,
        mu_y,
        sigma_y,
        samples,
    })
}
