//! Ordinal probit likelihood: category probabilities, per-respondent
//! marginal likelihood over the latent trait, and posterior summaries.

pub mod normal;
pub mod quadrature;

use rayon::prelude::*;

use crate::data::OrdinalDataset;
use crate::error::{Error, Result};
use crate::params::{GroupParams, ParameterSet};
use crate::scalar::Scalar;

pub use quadrature::QuadratureRule;

/// Smallest probability carried into a logarithm.
const PROB_FLOOR: f64 = 1e-300;

/// P(y = k | η) for one item, `k` 1-based.
///
/// `P = Φ((τ_k − λη)/σ) − Φ((τ_{k−1} − λη)/σ)` with τ₀ = −∞ and τ_K = +∞.
pub fn category_probability<T: Scalar>(
    loading: T,
    thresholds: &[T],
    residual_variance: T,
    eta: T,
    k: usize,
) -> Result<T> {
    if thresholds.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::NonMonotoneThresholds(
            thresholds.iter().map(|t| t.to_f64().unwrap_or(f64::NAN)).collect(),
        ));
    }
    if !(residual_variance > T::zero()) {
        return Err(Error::InvalidParameters("residual variance must be positive".into()));
    }
    if k == 0 || k > thresholds.len() + 1 {
        return Err(Error::InvalidArgument(format!(
            "category {k} outside 1..={}",
            thresholds.len() + 1
        )));
    }
    Ok(probability_unchecked(loading, thresholds, residual_variance.sqrt(), eta, k))
}

#[inline]
pub(crate) fn probability_unchecked<T: Scalar>(
    loading: T,
    thresholds: &[T],
    sd: T,
    eta: T,
    k: usize,
) -> T {
    let shift = loading * eta;
    let lower = if k == 1 {
        T::neg_infinity()
    } else {
        (thresholds[k - 2] - shift) / sd
    };
    let upper = if k == thresholds.len() + 1 {
        T::infinity()
    } else {
        (thresholds[k - 1] - shift) / sd
    };
    normal::interval(lower, upper)
}

/// Respondent's observed-data outcome for the structural part: `(Y, X)`.
#[derive(Debug, Clone, Copy)]
pub struct OutcomeObs<'a, T> {
    pub y: T,
    pub covariates: &'a [T],
}

/// Log of the integrand at each quadrature node:
/// `log w_q + Σ_j log P(y_j | η_q) [+ log N(Y; α + βη_q + γᵀX, ψ)]`.
fn node_log_terms<T: Scalar>(
    responses: &[Option<u8>],
    outcome: Option<OutcomeObs<'_, T>>,
    group: &GroupParams<'_, T>,
    rule: &QuadratureRule<T>,
) -> Vec<T> {
    let floor = T::lit(PROB_FLOOR);
    let sds: Vec<T> = group.residual_variance.iter().map(|v| v.sqrt()).collect();
    let outcome = outcome.and_then(|o| group.structural.map(|s| (o, s)));
    rule.nodes_for(group.mean, group.variance)
        .zip(&rule.weights)
        .map(|(eta, &w)| {
            let mut acc = w.ln();
            for (j, resp) in responses.iter().enumerate() {
                if let Some(k) = *resp {
                    let p = probability_unchecked(
                        group.loadings[j],
                        &group.thresholds[j],
                        sds[j],
                        eta,
                        usize::from(k),
                    );
                    acc = acc + p.max(floor).ln();
                }
            }
            if let Some((o, s)) = outcome {
                let mut mean = s.intercept + s.slope * eta;
                for (g, x) in s.covariates.iter().zip(o.covariates) {
                    mean = mean + *g * *x;
                }
                let sd = s.residual_variance.sqrt();
                acc = acc + normal::log_pdf((o.y - mean) / sd) - sd.ln();
            }
            acc
        })
        .collect()
}

pub fn log_sum_exp<T: Scalar>(v: &[T]) -> T {
    let m = v.iter().copied().fold(T::neg_infinity(), T::max);
    if !m.is_finite() {
        return m;
    }
    let s = v.iter().fold(T::zero(), |acc, &x| acc + (x - m).exp());
    m + s.ln()
}

/// Pairwise (cascade) summation; result depends only on element order.
pub fn pairwise_sum<T: Scalar>(v: &[T]) -> T {
    const BLOCK: usize = 32;
    if v.len() <= BLOCK {
        return v.iter().fold(T::zero(), |a, &b| a + b);
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

/// Marginal log-likelihood of one respondent's item responses.
///
/// A respondent with no observed items contributes exactly 0.
pub fn respondent_loglik<T: Scalar>(
    responses: &[Option<u8>],
    group: &GroupParams<'_, T>,
    rule: &QuadratureRule<T>,
) -> T {
    respondent_loglik_with_outcome(responses, None, group, rule)
}

pub fn respondent_loglik_with_outcome<T: Scalar>(
    responses: &[Option<u8>],
    outcome: Option<OutcomeObs<'_, T>>,
    group: &GroupParams<'_, T>,
    rule: &QuadratureRule<T>,
) -> T {
    let uses_outcome = outcome.is_some() && group.structural.is_some();
    if !uses_outcome && responses.iter().all(Option::is_none) {
        return T::zero();
    }
    log_sum_exp(&node_log_terms(responses, outcome, group, rule))
}

/// Sum of respondent log-likelihoods. Items of `dataset` must be in the same
/// order as those of `params`; the outcome enters whenever `params` carries
/// structural parameters.
pub fn total_loglik<T: Scalar>(
    dataset: &OrdinalDataset,
    params: &ParameterSet<T>,
    rule: &QuadratureRule<T>,
) -> Result<T> {
    if params.n_items() != dataset.n_items() && !dataset.rows.is_empty() {
        return Err(Error::InvalidParameters(format!(
            "parameters cover {} items, dataset has {}",
            params.n_items(),
            dataset.n_items()
        )));
    }
    params.check(None)?;
    let n_cov = params.structural.as_ref().map_or(0, |s| s.first().map_or(0, |g| g.covariates.len()));
    let per_row: Vec<T> = dataset
        .rows
        .par_iter()
        .map(|row| {
            let group = params.group(row.group);
            let obs = params.structural.as_ref().and(row.structural_obs(n_cov));
            let cov: Vec<T> = obs.map_or_else(Vec::new, |(_, x)| x.iter().map(|&v| T::lit(v)).collect());
            let outcome = obs.map(|(y, _)| OutcomeObs { y: T::lit(y), covariates: &cov });
            respondent_loglik_with_outcome(&row.responses, outcome, &group, rule)
        })
        .collect();
    Ok(pairwise_sum(&per_row))
}

/// Posterior mean and standard deviation of η given item responses.
///
/// With no observed items this is the group prior, `(μ_g, √φ_g)`.
pub fn posterior_moments<T: Scalar>(
    responses: &[Option<u8>],
    group: &GroupParams<'_, T>,
    rule: &QuadratureRule<T>,
) -> (T, T) {
    if responses.iter().all(Option::is_none) {
        return (group.mean, group.variance.sqrt());
    }
    let terms = node_log_terms(responses, None, group, rule);
    let lse = log_sum_exp(&terms);
    let mut mean = T::zero();
    for (eta, l) in rule.nodes_for(group.mean, group.variance).zip(&terms) {
        mean = mean + (*l - lse).exp() * eta;
    }
    // Centre before squaring to avoid cancellation.
    let mut var = T::zero();
    for (eta, l) in rule.nodes_for(group.mean, group.variance).zip(&terms) {
        let d = eta - mean;
        var = var + (*l - lse).exp() * d * d;
    }
    (mean, var.max(T::zero()).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ParameterSet;

    fn rule() -> QuadratureRule<f64> {
        QuadratureRule::gauss_hermite(31).unwrap()
    }

    #[test]
    fn zero_loading_single_threshold_gives_half() {
        for eta in [-3.0, 0.0, 2.7] {
            let p = category_probability(0.0, &[0.0], 1.0, eta, 1).unwrap();
            assert_eq!(p, 0.5);
        }
    }

    #[test]
    fn first_category_matches_phi_of_minus_one() {
        let p: f64 = category_probability(1.0, &[-1.0, 0.0, 1.0], 1.0, 0.0, 1).unwrap();
        assert!((p - 0.158_655_253_931_457).abs() < 1e-12);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let tau = [-0.7, 0.2, 1.1];
        let s: f64 = (1..=4).map(|k| category_probability(0.8, &tau, 1.0, 0.63, k).unwrap()).sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unordered_thresholds_rejected() {
        assert!(matches!(
            category_probability(1.0, &[0.5, 0.1], 1.0, 0.0, 1),
            Err(Error::NonMonotoneThresholds(_))
        ));
    }

    #[test]
    fn empty_respondent_contributes_zero() {
        let p = ParameterSet::<f64>::neutral(1, &[2, 2]);
        assert_eq!(respondent_loglik(&[None, None], &p.group(0), &rule()), 0.0);
    }

    #[test]
    fn eta_independent_item_gives_log_half() {
        let mut p = ParameterSet::<f64>::neutral(1, &[2]);
        p.loadings[0][0] = 0.0;
        for k in [1, 2] {
            let l = respondent_loglik(&[Some(k)], &p.group(0), &rule());
            assert!((l - 0.5f64.ln()).abs() < 1e-14);
        }
    }

    #[test]
    fn uninformative_items_leave_prior_unchanged() {
        let mut p = ParameterSet::<f64>::neutral(2, &[4, 4]);
        p.loadings[1] = vec![0.0, 0.0];
        p.latent_mean[1] = 0.4;
        p.latent_variance[1] = 2.0;
        let (m, sd) = posterior_moments(&[Some(4), Some(1)], &p.group(1), &rule());
        assert!((m - 0.4).abs() < 1e-12);
        assert!((sd - 2f64.sqrt()).abs() < 1e-10);
        let (m, sd) = posterior_moments(&[None, None], &p.group(1), &rule());
        assert_eq!((m, sd), (0.4, 2f64.sqrt()));
    }

    #[test]
    fn pairwise_sum_matches_naive_on_integers() {
        let v: Vec<f64> = (0..1000).map(f64::from).collect();
        assert_eq!(pairwise_sum(&v), 499_500.0);
    }
}
