#![allow(dead_code)]

use mgcfa::kernel::normal;
use mgcfa::params::ParameterSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const GRID_POINTS: usize = 20_001;

/// Composite Simpson integral of `f` against N(mean, var) on ±12 SD.
pub fn grid_expectation(mean: f64, var: f64, f: impl Fn(f64) -> f64) -> f64 {
    let sd = var.sqrt();
    let (a, b) = (mean - 12.0 * sd, mean + 12.0 * sd);
    let n = GRID_POINTS - 1;
    let h = (b - a) / n as f64;
    let mut s = 0.0;
    for i in 0..=n {
        let x = a + i as f64 * h;
        let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(x) * normal::pdf((x - mean) / sd) / sd;
    }
    s * h / 3.0
}

/// P(y = k | η) written out directly from the normal CDF.
pub fn direct_probability(lambda: f64, tau: &[f64], eta: f64, k: usize) -> f64 {
    let up = if k == tau.len() + 1 { 1.0 } else { normal::cdf(tau[k - 1] - lambda * eta) };
    let lo = if k == 1 { 0.0 } else { normal::cdf(tau[k - 2] - lambda * eta) };
    up - lo
}

pub fn likelihood_given_eta(p: &ParameterSet<f64>, g: usize, resp: &[Option<u8>], eta: f64) -> f64 {
    resp.iter()
        .enumerate()
        .filter_map(|(j, r)| r.map(|k| direct_probability(p.loadings[g][j], &p.thresholds[g][j], eta, usize::from(k))))
        .product()
}

/// Marginal log-likelihood and posterior mean/SD by brute-force integration.
pub fn grid_oracle(p: &ParameterSet<f64>, g: usize, resp: &[Option<u8>]) -> (f64, f64, f64) {
    let (m, v) = (p.latent_mean[g], p.latent_variance[g]);
    let l = |e: f64| likelihood_given_eta(p, g, resp, e);
    let z = grid_expectation(m, v, l);
    let mean = grid_expectation(m, v, |e| e * l(e)) / z;
    let second = grid_expectation(m, v, |e| (e - mean).powi(2) * l(e)) / z;
    (z.ln(), mean, second.sqrt())
}

/// A reproducible toy model: one group, 1–4 items with 2–5 categories,
/// plus a response pattern (possibly with missing entries).
pub fn toy(seed: u64) -> (ParameterSet<f64>, Vec<Option<u8>>) {
    toy_in(seed, 1.0, (0.6, 1.4), 0.5)
}

/// Steep loadings and narrow categories: sharp integrands for fixed quadrature.
pub fn hard_toy(seed: u64) -> (ParameterSet<f64>, Vec<Option<u8>>) {
    toy_in(seed, 1.5, (0.5, 2.0), 0.2)
}

fn toy_in(seed: u64, max_loading: f64, var: (f64, f64), min_gap: f64) -> (ParameterSet<f64>, Vec<Option<u8>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_items = rng.gen_range(1..=4);
    let cats: Vec<u8> = (0..n_items).map(|_| rng.gen_range(2..=5)).collect();
    let mut p = ParameterSet::<f64>::neutral(1, &cats);
    for j in 0..n_items {
        p.loadings[0][j] = rng.gen_range(-max_loading..max_loading);
        let mut t = rng.gen_range(-2.0..-0.5);
        for k in 0..usize::from(cats[j]) - 1 {
            p.thresholds[0][j][k] = t;
            t += rng.gen_range(min_gap..1.2);
        }
    }
    p.latent_mean[0] = rng.gen_range(-1.0..1.0);
    p.latent_variance[0] = rng.gen_range(var.0..var.1);
    let resp = cats
        .iter()
        .map(|&k| if rng.gen_bool(0.15) { None } else { Some(rng.gen_range(1..=k)) })
        .collect();
    (p, resp)
}
