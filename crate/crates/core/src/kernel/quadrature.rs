//! Gauss–Hermite rules normalized against the standard normal density.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Nodes and weights such that `Σ w_q f(x_q) ≈ E[f(Z)]`, `Z ~ N(0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRule<T> {
    pub nodes: Vec<T>,
    pub weights: Vec<T>,
}

impl<T: Scalar> QuadratureRule<T> {
    /// Probabilists' Gauss–Hermite rule with `count` points (odd, ≥ 3).
    pub fn gauss_hermite(count: usize) -> Result<Self> {
        if count < 3 || count % 2 == 0 {
            return Err(Error::InvalidArgument(format!(
                "quadrature point count must be odd and ≥ 3 (got {count})"
            )));
        }
        let (x, w) = physicists_rule(count);
        let sqrt2 = std::f64::consts::SQRT_2;
        let total: f64 = w.iter().sum();
        let mut nodes: Vec<f64> = x.iter().map(|z| z * sqrt2).collect();
        nodes[count / 2] = 0.0;
        Ok(Self {
            nodes: nodes.into_iter().map(T::lit).collect(),
            weights: w.iter().map(|v| T::lit(v / total)).collect(),
        })
    }

    pub fn count(&self) -> usize {
        self.nodes.len()
    }

    /// Nodes rescaled to N(mean, variance).
    pub fn nodes_for(&self, mean: T, variance: T) -> impl Iterator<Item = T> + '_ {
        let sd = variance.sqrt();
        self.nodes.iter().map(move |&x| mean + sd * x)
    }

    pub fn log_weights(&self) -> Vec<T> {
        self.weights.iter().map(|w| w.ln()).collect()
    }
}

/// Nodes (ascending) and weights for ∫ e^{−x²} f(x) dx, by Newton iteration on
/// the orthonormal Hermite recurrence.
fn physicists_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    const PIM4: f64 = 0.751_125_544_464_942_5; // π^(-1/4)
    let nf = n as f64;
    let m = n.div_ceil(2);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut z = 0.0_f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.855_75 * (2.0 * nf + 1.0).powf(-0.166_67),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..200 {
            let mut p1 = PIM4;
            let mut p2 = 0.0;
            for j in 1..=n {
                let jf = j as f64;
                let p3 = p2;
                p2 = p1;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let step = p1 / pp;
            z -= step;
            if step.abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    x.reverse();
    w.reverse();
    (x, w)
}
