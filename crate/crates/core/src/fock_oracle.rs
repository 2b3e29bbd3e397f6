//! Brute-force truncated Fock-space evaluation of the extended-HOM interferometer.
//!
//! The output state is built directly from the operator picture: the
//! emitter's creation operator, split over the two detector modes and the
//! two loss modes, acts on a product of four coherent states (the coherent
//! field after the beamsplitter and the loss beamsplitters). Amplitudes are
//! complex, so the coherent field's phase enters exactly as it does
//! physically. Loss modes are traced by explicit summation and detector
//! noise is added by explicit convolution. Nothing here shares code with
//! the closed forms in [`crate::photon_stats`].

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{derived_means, ProtocolParams};
use crate::photon_stats::{hom_pmf, poisson_pmf, Outcome};

pub const DEFAULT_FOCK_DIM: usize = 40;
/// Largest allowed un-represented coherent-state weight per mode.
pub const NORM_DEFICIT_BOUND: f64 = 1e-10;
/// Largest allowed weight dropped from the loss-mode trace.
pub const LOSS_RESIDUAL_BOUND: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub params: ProtocolParams,
    /// Per-mode Fock dimension; indices run over `0..fock_dim`.
    pub fock_dim: usize,
    /// Loss-mode indices summed in the trace run over `0..loss_sum_max`.
    pub loss_sum_max: usize,
}

impl OracleConfig {
    pub fn new(params: ProtocolParams) -> Self {
        Self::with_fock_dim(params, DEFAULT_FOCK_DIM)
    }

    pub fn with_fock_dim(params: ProtocolParams, fock_dim: usize) -> Self {
        OracleConfig {
            params,
            fock_dim,
            loss_sum_max: fock_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.params.protocol.is_hom() {
            return Err(Error::WrongProtocol {
                expected: "coherent-hom or incoherent-hom",
                actual: self.params.protocol.name(),
            });
        }
        self.params.validate()?;
        if self.fock_dim < 2 {
            return Err(Error::invalid("fock-dim", "must be at least 2"));
        }
        if self.loss_sum_max == 0 || self.loss_sum_max > self.fock_dim {
            return Err(Error::invalid("loss-sum-max", "must lie in 1..=fock_dim"));
        }
        let deficit = poisson_upper_tail(self.params.n_c, self.fock_dim);
        if deficit > NORM_DEFICIT_BOUND {
            return Err(Error::FockTruncation {
                residual: deficit,
                bound: NORM_DEFICIT_BOUND,
            });
        }
        // The creation operator shifts one index down, hence `- 1`.
        let p = &self.params;
        let loss_mean = (1.0 - p.eta) * p.epsilon * p.n_c / 2.0;
        let residual = 2.0 * poisson_upper_tail(loss_mean, self.loss_sum_max - 1);
        if residual > LOSS_RESIDUAL_BOUND {
            return Err(Error::FockTruncation {
                residual,
                bound: LOSS_RESIDUAL_BOUND,
            });
        }
        Ok(())
    }
}

/// `P(X >= from)` for `X ~ Poisson(mean)`, summed term by term.
fn poisson_upper_tail(mean: f64, from: usize) -> f64 {
    if mean == 0.0 {
        return if from == 0 { 1.0 } else { 0.0 };
    }
    let mut total = 0.0;
    let mut k = from;
    loop {
        let term = poisson_pmf(k, mean);
        total += term;
        if k as f64 > mean && term <= total * 1e-17 {
            return total;
        }
        k += 1;
    }
}

/// Coherent-state amplitudes `<n|beta>` for `n < dim`.
fn coherent_amplitudes(beta: Complex64, dim: usize) -> Vec<Complex64> {
    let mut amps = Vec::with_capacity(dim);
    amps.push(Complex64::new((-beta.norm_sqr() / 2.0).exp(), 0.0));
    for n in 1..dim {
        let prev = amps[n - 1];
        amps.push(prev * beta / (n as f64).sqrt());
    }
    amps
}

/// Precomputed mode amplitudes for one configuration and phase.
pub struct FockOracle {
    cfg: OracleConfig,
    // detector 1, detector 2, loss 1, loss 2
    modes: [Vec<Complex64>; 4],
    vacuum_weight: f64,
    to_detector: f64,
    to_loss: f64,
    noise_mean_per_detector: f64,
}

impl FockOracle {
    /// Uses the phase implied by `cos_theta` (incoherent HOM: `theta = pi/2`).
    pub fn new(cfg: &OracleConfig) -> Result<Self> {
        let theta = cfg.params.effective_cos_theta().clamp(-1.0, 1.0).acos();
        Self::with_phase(cfg, theta)
    }

    pub fn with_phase(cfg: &OracleConfig, theta: f64) -> Result<Self> {
        cfg.validate()?;
        let p = &cfg.params;
        let alpha_c = Complex64::from_polar(p.n_c.sqrt(), theta);
        let alpha_d = alpha_c * (p.eta * p.epsilon / 2.0).sqrt();
        let alpha_l = alpha_c * ((1.0 - p.eta) * p.epsilon / 2.0).sqrt();
        let dim = cfg.fock_dim;
        Ok(FockOracle {
            cfg: *cfg,
            modes: [
                coherent_amplitudes(-alpha_d, dim),
                coherent_amplitudes(alpha_d, dim),
                coherent_amplitudes(-alpha_l, dim),
                coherent_amplitudes(alpha_l, dim),
            ],
            vacuum_weight: (1.0 - p.xi).sqrt(),
            to_detector: (p.xi * p.eta / 2.0).sqrt(),
            to_loss: (p.xi * (1.0 - p.eta) / 2.0).sqrt(),
            noise_mean_per_detector: derived_means(p).n_n / 2.0,
        })
    }

    pub fn config(&self) -> &OracleConfig {
        &self.cfg
    }

    fn check(&self, index: usize) -> Result<()> {
        if index >= self.cfg.fock_dim {
            Err(Error::FockIndex {
                index,
                dim: self.cfg.fock_dim,
            })
        } else {
            Ok(())
        }
    }

    /// `<n|beta>` and `<n|a^dagger|beta> = sqrt(n) <n-1|beta>` for one mode.
    fn pair(&self, mode: usize, n: usize) -> (Complex64, Complex64) {
        let amps = &self.modes[mode];
        let raised = if n == 0 {
            Complex64::new(0.0, 0.0)
        } else {
            amps[n - 1] * (n as f64).sqrt()
        };
        (amps[n], raised)
    }

    fn amplitude(&self, k: usize, l: usize, m: usize, n: usize) -> Complex64 {
        let (a1, r1) = self.pair(0, k);
        let (a2, r2) = self.pair(1, l);
        let (a3, r3) = self.pair(2, m);
        let (a4, r4) = self.pair(3, n);
        let detectors = a1 * a2;
        let detector_raised = r1 * a2 + a1 * r2;
        let losses = a3 * a4;
        let loss_raised = r3 * a4 + a3 * r4;
        (detectors * self.vacuum_weight + detector_raised * self.to_detector) * losses
            + detectors * loss_raised * self.to_loss
    }

    /// Probability of `k, l` photons at the detectors and `m, n` in the loss modes.
    pub fn joint_pmf(&self, k: usize, l: usize, m: usize, n: usize) -> Result<f64> {
        for i in [k, l, m, n] {
            self.check(i)?;
        }
        Ok(self.amplitude(k, l, m, n).norm_sqr())
    }

    /// Noise-free detector distribution, loss modes traced out.
    pub fn traced_pmf(&self, k: usize, l: usize) -> Result<f64> {
        self.check(k)?;
        self.check(l)?;
        let cut = self.cfg.loss_sum_max;
        let mut total = 0.0;
        for m in 0..cut {
            for n in 0..cut {
                total += self.amplitude(k, l, m, n).norm_sqr();
            }
        }
        Ok(total)
    }

    fn noise(&self, count: usize) -> f64 {
        poisson_pmf(count, self.noise_mean_per_detector)
    }

    /// Detected distribution including Poissonian noise on each detector.
    pub fn oracle_pmf(&self, j: usize, k: usize) -> Result<f64> {
        self.check(j)?;
        self.check(k)?;
        let mut total = 0.0;
        for p in 0..=j {
            for q in 0..=k {
                total += self.traced_pmf(p, q)? * self.noise(j - p) * self.noise(k - q);
            }
        }
        Ok(total)
    }

    /// `oracle_pmf` on the square `0..=bound`, sharing one trace table.
    pub fn oracle_table(&self, bound: usize) -> Result<Vec<Vec<f64>>> {
        self.check(bound)?;
        let side = bound + 1;
        let mut traced = vec![vec![0.0; side]; side];
        for (p, row) in traced.iter_mut().enumerate() {
            for (q, v) in row.iter_mut().enumerate() {
                *v = self.traced_pmf(p, q)?;
            }
        }
        let noise: Vec<f64> = (0..side).map(|c| self.noise(c)).collect();
        let mut out = vec![vec![0.0; side]; side];
        for j in 0..side {
            for k in 0..side {
                let mut total = 0.0;
                for p in 0..=j {
                    for q in 0..=k {
                        total += traced[p][q] * noise[j - p] * noise[k - q];
                    }
                }
                out[j][k] = total;
            }
        }
        Ok(out)
    }
}

pub fn joint_pmf(cfg: &OracleConfig, k: usize, l: usize, m: usize, n: usize) -> Result<f64> {
    FockOracle::new(cfg)?.joint_pmf(k, l, m, n)
}

pub fn traced_pmf(cfg: &OracleConfig, k: usize, l: usize) -> Result<f64> {
    FockOracle::new(cfg)?.traced_pmf(k, l)
}

pub fn oracle_pmf(cfg: &OracleConfig, j: usize, k: usize) -> Result<f64> {
    FockOracle::new(cfg)?.oracle_pmf(j, k)
}

/// Oracle averaged over `phases` equally spaced coherent-field phases.
pub fn phase_averaged_table(cfg: &OracleConfig, bound: usize, phases: usize) -> Result<Vec<Vec<f64>>> {
    let mut acc = vec![vec![0.0; bound + 1]; bound + 1];
    for i in 0..phases {
        let theta = 2.0 * std::f64::consts::PI * i as f64 / phases as f64;
        let table = FockOracle::with_phase(cfg, theta)?.oracle_table(bound)?;
        for (a, row) in acc.iter_mut().zip(table) {
            for (x, v) in a.iter_mut().zip(row) {
                *x += v / phases as f64;
            }
        }
    }
    Ok(acc)
}

/// Largest disagreement between the closed form and the oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub max_abs: f64,
    pub worst: Outcome,
    pub outcomes_checked: usize,
}

/// Compares [`hom_pmf`] with the oracle over all `j + k <= max_total`.
pub fn compare_closed_form(cfg: &OracleConfig, max_total: usize) -> Result<Deviation> {
    let oracle = FockOracle::new(cfg)?;
    let table = oracle.oracle_table(max_total)?;
    let mut dev = Deviation {
        max_abs: 0.0,
        worst: Outcome::new(0, 0),
        outcomes_checked: 0,
    };
    for j in 0..=max_total {
        for k in 0..=(max_total - j) {
            let diff = (hom_pmf(&cfg.params, j, k)? - table[j][k]).abs();
            dev.outcomes_checked += 1;
            if diff > dev.max_abs || diff.is_nan() {
                dev.max_abs = diff;
                dev.worst = Outcome::new(j, k);
            }
        }
    }
    Ok(dev)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: usize) -> f64 {
        (1..=n).map(|i| i as f64).product()
    }

    fn fig1b() -> ProtocolParams {
        ProtocolParams::coherent_hom(0.1, 0.8, 0.9, 1.0, 0.8, 0.8, 1.0)
    }

    #[test]
    fn no_emitter_is_four_poissons() {
        let p = ProtocolParams::coherent_hom(0.0, 0.7, 0.9, 2.0, 0.0, 0.0, 1.0);
        let o = FockOracle::new(&OracleConfig::new(p)).unwrap();
        let nd: f64 = 0.7 * 0.9 * 2.0 / 2.0;
        let nl: f64 = 0.3 * 0.9 * 2.0 / 2.0;
        let nh: f64 = 0.9 * 2.0;
        for (k, l, m, n) in [(0, 0, 0, 0), (1, 2, 0, 1), (3, 0, 2, 2), (4, 1, 1, 0)] {
            let expected = (-nh).exp() * nd.powi((k + l) as i32) * nl.powi((m + n) as i32)
                / (factorial(k) * factorial(l) * factorial(m) * factorial(n));
            assert!((o.joint_pmf(k, l, m, n).unwrap() - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn perfect_emission_and_detection_has_no_loss_and_no_balance() {
        let p = ProtocolParams::coherent_hom(1.0, 1.0, 1.0, 2.0, 0.0, 0.0, 1.0);
        let o = FockOracle::new(&OracleConfig::new(p)).unwrap();
        for k in 0..8 {
            for l in 0..8 {
                for (m, n) in [(1, 0), (0, 1), (2, 3)] {
                    assert_eq!(o.joint_pmf(k, l, m, n).unwrap(), 0.0);
                }
            }
            assert!(o.joint_pmf(k, k, 0, 0).unwrap() < 1e-30);
        }
        assert!(o.joint_pmf(1, 0, 0, 0).unwrap() > 0.0);
    }

    #[test]
    fn joint_distribution_sums_to_one() {
        let o = FockOracle::new(&OracleConfig::with_fock_dim(fig1b(), 20)).unwrap();
        let mut total = 0.0;
        for k in 0..20 {
            for l in 0..20 {
                for m in 0..20 {
                    for n in 0..20 {
                        total += o.joint_pmf(k, l, m, n).unwrap();
                    }
                }
            }
        }
        assert!((total - 1.0).abs() < 1e-9, "{total}");
    }

    #[test]
    fn joint_matches_real_expanded_form_at_zero_phase() {
        // Squared-bracket form of the four-mode probability, real alpha_c.
        let p = fig1b();
        let o = FockOracle::new(&OracleConfig::new(p)).unwrap();
        let nd = p.eta * p.epsilon * p.n_c / 2.0;
        let nl = (1.0 - p.eta) * p.epsilon * p.n_c / 2.0;
        let nh = p.epsilon * p.n_c;
        let a = (1.0 - p.xi).sqrt();
        let b = (p.xi / p.epsilon).sqrt() / p.n_c.sqrt();
        for (k, l, m, n) in [(0, 0, 0, 0), (2, 1, 0, 1), (0, 3, 1, 1), (4, 2, 2, 0)] {
            let lk = l as f64 - k as f64;
            let nm = n as f64 - m as f64;
            let bracket = (a + b * lk).powi(2) + 2.0 * b * (a + b * lk) * nm + p.xi / p.epsilon * nm * nm / p.n_c;
            let expected = (-nh).exp() * nd.powi((k + l) as i32) * nl.powi((m + n) as i32)
                / (factorial(k) * factorial(l) * factorial(m) * factorial(n))
                * bracket;
            assert!((o.joint_pmf(k, l, m, n).unwrap() - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn traced_matches_noise_free_closed_form() {
        for (xi, eta, eps, n_c, c) in [(0.1, 0.8, 0.9, 1.0, 1.0), (0.5, 0.6, 1.0, 3.0, 1.0), (0.3, 0.9, 0.8, 2.0, 0.0)] {
            let p = ProtocolParams::coherent_hom(xi, eta, eps, n_c, 0.0, 0.0, c);
            let o = FockOracle::new(&OracleConfig::new(p)).unwrap();
            for k in 0..=8usize {
                for l in 0..=(8 - k) {
                    let lk = l as f64 - k as f64;
                    let mean = eta * eps * n_c;
                    let expected = (-mean).exp() / (factorial(k) * factorial(l)) * (mean / 2.0).powi((k + l) as i32)
                        * (1.0 - eta * xi + xi / eps * lk * lk / n_c + 2.0 * c * ((1.0 - xi) * xi / (eps * n_c)).sqrt() * lk);
                    let got = o.traced_pmf(k, l).unwrap();
                    assert!((got - expected).abs() < 1e-9, "({k},{l}) {got} vs {expected}");
                }
            }
        }
    }

    #[test]
    fn lossless_trace_keeps_only_vacuum_loss_modes() {
        let p = ProtocolParams::coherent_hom(0.4, 1.0, 0.9, 1.5, 0.0, 0.0, 1.0);
        let o = FockOracle::new(&OracleConfig::new(p)).unwrap();
        for (k, l) in [(0, 0), (1, 2), (3, 1)] {
            assert_eq!(o.traced_pmf(k, l).unwrap(), o.joint_pmf(k, l, 0, 0).unwrap());
        }
    }

    #[test]
    fn empty_convolution_is_identity() {
        let p = ProtocolParams::coherent_hom(0.2, 0.7, 1.0, 1.5, 0.0, 0.0, 1.0);
        let o = FockOracle::new(&OracleConfig::new(p)).unwrap();
        for (j, k) in [(0, 0), (2, 1), (1, 4)] {
            assert_eq!(o.oracle_pmf(j, k).unwrap(), o.traced_pmf(j, k).unwrap());
        }
    }

    #[test]
    fn no_emitter_oracle_is_poisson_product() {
        let p = ProtocolParams::coherent_hom(0.0, 0.8, 0.9, 1.0, 0.8, 0.8, 1.0);
        let o = FockOracle::new(&OracleConfig::new(p)).unwrap();
        let half = derived_means(&p).n_bar / 2.0;
        for (j, k) in [(0, 0), (2, 1), (3, 3), (5, 0)] {
            let expected = poisson_pmf(j, half) * poisson_pmf(k, half);
            assert!((o.oracle_pmf(j, k).unwrap() - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn table_matches_pointwise() {
        let o = FockOracle::new(&OracleConfig::new(fig1b())).unwrap();
        let t = o.oracle_table(5).unwrap();
        for j in 0..=5 {
            for k in 0..=5 {
                assert!((t[j][k] - o.oracle_pmf(j, k).unwrap()).abs() < 1e-16);
            }
        }
    }

    #[test]
    fn fig1b_closed_form_agrees() {
        let dev = compare_closed_form(&OracleConfig::new(fig1b()), 10).unwrap();
        assert!(dev.max_abs < 1e-8, "{dev:?}");
        assert_eq!(dev.outcomes_checked, 66);
    }

    #[test]
    fn index_and_config_validation() {
        let o = FockOracle::new(&OracleConfig::with_fock_dim(fig1b(), 20)).unwrap();
        assert!(matches!(o.joint_pmf(20, 0, 0, 0), Err(Error::FockIndex { .. })));
        let big = fig1b().with_n_c(30.0);
        assert!(matches!(
            OracleConfig::with_fock_dim(big, 10).validate(),
            Err(Error::FockTruncation { .. })
        ));
        let direct = ProtocolParams::direct(0.1, 0.8, 0.0, 1.0);
        assert!(OracleConfig::new(direct).validate().is_err());
        assert!(OracleConfig::with_fock_dim(fig1b(), 1).validate().is_err());
    }
}
