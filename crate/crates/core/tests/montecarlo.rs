use std::collections::HashMap;

use homdetect::bayes::{loglik_moments, HypothesisPair};
use homdetect::montecarlo::{simulate_ensemble, simulate_final_log_lambda, EnsembleConfig, Truth};
use homdetect::params::ProtocolParams;
use homdetect::photon_stats::DEFAULT_TAIL_TOL;

fn fig_s2_pair() -> HypothesisPair {
    HypothesisPair::new(&ProtocolParams::direct(0.1, 0.8, 0.0, 1.0), None, DEFAULT_TAIL_TOL).unwrap()
}

fn key(y: f64) -> i64 {
    (y * 1e9).round() as i64
}

/// Count vectors of `n` draws over `categories` outcomes.
fn compositions(n: usize, categories: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if prefix.len() + 1 == categories {
        prefix.push(n);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for c in 0..=n {
        prefix.push(c);
        compositions(n - c, categories, prefix, out);
        prefix.pop();
    }
}

fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|i| (i as f64).ln()).sum()
}

// Short records give ln Lambda a lattice of atoms. The heaviest atom's mass
// is an exact multinomial probability.
#[test]
fn short_records_concentrate_on_discrete_atoms() {
    let pair = fig_s2_pair();
    let n = 10;
    let ratios = pair.log_ratios();
    let categories = 8;
    for (truth, seed) in [(Truth::Present, 5), (Truth::Absent, 6)] {
        let p = pair.truth(truth.is_present()).probs();
        let mut vectors = Vec::new();
        compositions(n, categories, &mut Vec::new(), &mut vectors);
        let (best, ln_mass) = vectors
            .iter()
            .map(|c| {
                let ln = ln_factorial(n)
                    + c.iter().enumerate().map(|(i, &ci)| ci as f64 * p[i].ln() - ln_factorial(ci)).sum::<f64>();
                (c, ln)
            })
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        let exact = ln_mass.exp();
        let atom: f64 = best.iter().enumerate().map(|(i, &ci)| ci as f64 * ratios[i]).sum();

        let trajectories = 50_000;
        let cfg = EnsembleConfig {
            n_trajectories: trajectories,
            ..EnsembleConfig::new(&pair, truth, n, seed)
        };
        let y = simulate_final_log_lambda(&cfg).unwrap();
        let hits = y.iter().filter(|&&v| key(v) == key(atom)).count() as f64;
        let freq = hits / trajectories as f64;
        let se = (exact * (1.0 - exact) / trajectories as f64).sqrt();
        assert!((freq - exact).abs() < 5.0 * se, "{truth:?}: atom frequency {freq} vs exact {exact}");
        assert!(exact > 0.01, "{truth:?}: heaviest atom holds only {exact}");
    }
}

#[test]
fn atoms_spread_out_with_record_length() {
    let pair = fig_s2_pair();
    let heaviest = |n: usize| {
        let cfg = EnsembleConfig {
            n_trajectories: 50_000,
            ..EnsembleConfig::new(&pair, Truth::Present, n, 17)
        };
        let mut counts: HashMap<i64, usize> = HashMap::new();
        for v in simulate_final_log_lambda(&cfg).unwrap() {
            *counts.entry(key(v)).or_default() += 1;
        }
        *counts.values().max().unwrap() as f64 / 50_000.0
    };
    let (short, long) = (heaviest(10), heaviest(50));
    assert!(short > 5.0 * long, "N=10 atom {short}, N=50 atom {long}");
}

#[test]
fn confidence_tracks_log_normal_prediction() {
    let pair = fig_s2_pair();
    let moments = loglik_moments(&pair);
    for truth in [Truth::Present, Truth::Absent] {
        let cfg = EnsembleConfig {
            n_trajectories: 20_000,
            ..EnsembleConfig::new(&pair, truth, 200, 3)
        };
        let e = simulate_ensemble(&cfg).unwrap();
        let c = homdetect::bayes::confidence(200, &moments).unwrap();
        let predicted = if truth.is_present() { c.c_present } else { c.c_absent };
        assert!((e.empirical_confidence - predicted).abs() < 0.02, "{truth:?}: {} vs {predicted}", e.empirical_confidence);
    }
}

#[test]
fn seeds_and_streams_are_independent() {
    let pair = fig_s2_pair();
    let base = EnsembleConfig {
        n_trajectories: 2_000,
        ..EnsembleConfig::new(&pair, Truth::Present, 20, 1)
    };
    let a = simulate_final_log_lambda(&base).unwrap();
    let b = simulate_final_log_lambda(&EnsembleConfig { seed: 2, ..base }).unwrap();
    assert_ne!(a, b);
    // a prefix of the ensemble does not depend on the ensemble size
    let short = simulate_final_log_lambda(&EnsembleConfig {
        n_trajectories: 500,
        ..base
    })
    .unwrap();
    assert_eq!(&a[..500], &short[..]);
}
