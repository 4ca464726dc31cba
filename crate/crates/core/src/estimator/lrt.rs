//! Chi-square tail probabilities and nested-model likelihood-ratio tests.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::FitResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrtResult {
    pub loglik_restricted: f64,
    pub loglik_unrestricted: f64,
    /// `2·(ℓ_u − ℓ_r)` before clamping.
    pub raw_delta_chisq: f64,
    pub delta_chisq: f64,
    pub delta_df: usize,
    pub p_value: f64,
}

/// Upper-tail probability of χ²(df) at `x`.
pub fn chisq_sf(x: f64, df: usize) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::InvalidArgument(format!("chi-square statistic must be ≥ 0 (got {x})")));
    }
    if df < 1 {
        return Err(Error::InvalidArgument("degrees of freedom must be ≥ 1".into()));
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    Ok(gamma_q(df as f64 / 2.0, x / 2.0))
}

/// Regularized upper incomplete gamma function Q(a, x).
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x.is_infinite() {
        return 0.0;
    }
    let log_prefix = -x + a * x.ln() - libm::lgamma(a);
    if x < a + 1.0 {
        // Series for P(a, x).
        let mut ap = a;
        let mut del = 1.0 / a;
        let mut sum = del;
        for _ in 0..10_000 {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if del.abs() < sum.abs() * 1e-17 {
                break;
            }
        }
        (1.0 - sum * log_prefix.exp()).clamp(0.0, 1.0)
    } else {
        // Lentz continued fraction for Q(a, x).
        const TINY: f64 = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..10_000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < TINY {
                d = TINY;
            }
            c = b + an / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        (h * log_prefix.exp()).clamp(0.0, 1.0)
    }
}

/// Likelihood-ratio test of `restricted` against `unrestricted`.
pub fn lrt(restricted: &FitResult, unrestricted: &FitResult) -> Result<LrtResult> {
    if !restricted.constraints.is_nested_in(&unrestricted.constraints) {
        return Err(Error::NotNested(format!(
            "{} is not nested in {}",
            restricted.spec_echo.constraint_level, unrestricted.spec_echo.constraint_level
        )));
    }
    for fit in [restricted, unrestricted] {
        if !fit.converged {
            return Err(Error::NotConverged(format!(
                "{} fit did not converge",
                fit.spec_echo.constraint_level
            )));
        }
    }
    if unrestricted.n_free <= restricted.n_free {
        return Err(Error::NotNested(format!(
            "degrees of freedom difference {} is not positive",
            unrestricted.n_free as i64 - restricted.n_free as i64
        )));
    }
    let delta_df = unrestricted.n_free - restricted.n_free;
    let raw = 2.0 * (unrestricted.loglik - restricted.loglik);
    let delta_chisq = raw.max(0.0);
    Ok(LrtResult {
        loglik_restricted: restricted.loglik,
        loglik_unrestricted: unrestricted.loglik,
        raw_delta_chisq: raw,
        delta_chisq,
        delta_df,
        p_value: chisq_sf(delta_chisq, delta_df)?,
    })
}
