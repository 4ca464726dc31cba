//! Marginal log-likelihood with its analytic gradient, evaluated from
//! per-(group, item, category, node) probability tables.

use rayon::prelude::*;

use crate::data::OrdinalDataset;
use crate::kernel::{log_sum_exp, normal, pairwise_sum, QuadratureRule};
use crate::params::ParameterSet;

const PROB_FLOOR: f64 = 1e-300;
const CHUNK: usize = 512;

/// Model-ordered responses in a compact layout (0 = missing).
#[derive(Debug, Clone)]
pub(crate) struct Prepared {
    pub n_groups: usize,
    pub n_items: usize,
    pub categories: Vec<u8>,
    max_k: usize,
    groups: Vec<usize>,
    responses: Vec<u8>,
    /// Outcome and covariates for rows entering the structural part.
    outcomes: Vec<Option<(f64, Vec<f64>)>>,
}

impl Prepared {
    /// `columns` are dataset item indices in model order.
    pub fn new(dataset: &OrdinalDataset, columns: &[usize], structural: bool) -> Self {
        let n_cov = dataset.n_covariates();
        let mut responses = Vec::with_capacity(dataset.rows.len() * columns.len());
        let mut outcomes = Vec::with_capacity(dataset.rows.len());
        for row in &dataset.rows {
            responses.extend(columns.iter().map(|&j| row.responses[j].unwrap_or(0)));
            outcomes.push(if structural {
                row.structural_obs(n_cov).map(|(y, x)| (y, x.to_vec()))
            } else {
                None
            });
        }
        let categories: Vec<u8> = columns.iter().map(|&j| dataset.items[j].n_categories).collect();
        Self {
            n_groups: dataset.n_groups(),
            n_items: columns.len(),
            max_k: categories.iter().copied().max().map_or(0, usize::from),
            categories,
            groups: dataset.rows.iter().map(|r| r.group).collect(),
            responses,
            outcomes,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.groups.len()
    }

    fn row(&self, i: usize) -> &[u8] {
        &self.responses[i * self.n_items..(i + 1) * self.n_items]
    }
}

/// Per-group tables at the quadrature nodes.
struct Tables {
    q: usize,
    max_k: usize,
    n_items: usize,
    /// η at each node, per group.
    eta: Vec<Vec<f64>>,
    log_w: Vec<f64>,
    /// `[g][j][k][q]`, flattened.
    log_p: Vec<f64>,
    /// ∂log P/∂(upper threshold) and −∂log P/∂(lower threshold).
    upper: Vec<f64>,
    lower: Vec<f64>,
}

impl Tables {
    fn idx(&self, g: usize, j: usize, k: usize, q: usize) -> usize {
        ((g * self.n_items + j) * self.max_k + k) * self.q + q
    }

    fn build(data: &Prepared, p: &ParameterSet<f64>, rule: &QuadratureRule<f64>) -> Self {
        let q = rule.count();
        let mut t = Tables {
            q,
            max_k: data.max_k,
            n_items: data.n_items,
            eta: (0..data.n_groups)
                .map(|g| rule.nodes_for(p.latent_mean[g], p.latent_variance[g]).collect())
                .collect(),
            log_w: rule.log_weights(),
            log_p: vec![0.0; data.n_groups * data.n_items * data.max_k * q],
            upper: vec![0.0; data.n_groups * data.n_items * data.max_k * q],
            lower: vec![0.0; data.n_groups * data.n_items * data.max_k * q],
        };
        for g in 0..data.n_groups {
            for j in 0..data.n_items {
                let lambda = p.loadings[g][j];
                let tau = &p.thresholds[g][j];
                let sd = p.residual_variance[g][j].sqrt();
                let kk = usize::from(data.categories[j]);
                for qi in 0..q {
                    let shift = lambda * t.eta[g][qi];
                    for k in 0..kk {
                        let zl = if k == 0 { f64::NEG_INFINITY } else { (tau[k - 1] - shift) / sd };
                        let zu = if k == kk - 1 { f64::INFINITY } else { (tau[k] - shift) / sd };
                        let prob = normal::interval(zl, zu);
                        let i = t.idx(g, j, k, qi);
                        if prob > PROB_FLOOR {
                            t.log_p[i] = prob.ln();
                            t.upper[i] = if zu.is_finite() { normal::pdf(zu) / (sd * prob) } else { 0.0 };
                            t.lower[i] = if zl.is_finite() { normal::pdf(zl) / (sd * prob) } else { 0.0 };
                        } else {
                            t.log_p[i] = PROB_FLOOR.ln();
                        }
                    }
                }
            }
        }
        t
    }
}

/// Accumulators for one chunk of respondents.
struct Partial {
    loglik: Vec<f64>,
    /// Posterior mass per `[g][j][k][q]`.
    mass: Vec<f64>,
    /// Outcome-term contribution to ∂/∂η per `[g][q]`.
    eta_struct: Vec<f64>,
    /// Per group: α, β, γ…, ψ.
    structural: Vec<Vec<f64>>,
}

pub(crate) struct Evaluation {
    pub loglik: f64,
    /// Gradient in the natural scale, shaped like the parameters.
    pub gradient: Option<ParameterSet<f64>>,
}

/// Log-likelihood and (optionally) its gradient with respect to every coordinate.
pub(crate) fn evaluate(
    data: &Prepared,
    p: &ParameterSet<f64>,
    rule: &QuadratureRule<f64>,
    want_gradient: bool,
) -> Evaluation {
    let t = Tables::build(data, p, rule);
    let q = t.q;
    let n_struct = p.structural.as_ref().map_or(0, |s| s[0].covariates.len() + 3);

    let chunks: Vec<usize> = (0..data.n_rows()).step_by(CHUNK).collect();
    let partials: Vec<Partial> = chunks
        .par_iter()
        .map(|&start| {
            let end = (start + CHUNK).min(data.n_rows());
            let mut part = Partial {
                loglik: Vec::with_capacity(end - start),
                mass: if want_gradient { vec![0.0; t.log_p.len()] } else { Vec::new() },
                eta_struct: if want_gradient { vec![0.0; data.n_groups * q] } else { Vec::new() },
                structural: vec![vec![0.0; n_struct]; if want_gradient { data.n_groups } else { 0 }],
            };
            let mut terms = vec![0.0; q];
            let mut resid = vec![0.0; q];
            for i in start..end {
                let g = data.groups[i];
                let resp = data.row(i);
                let outcome = match (&data.outcomes[i], &p.structural) {
                    (Some(o), Some(s)) => Some((o, &s[g])),
                    _ => None,
                };
                if outcome.is_none() && resp.iter().all(|&k| k == 0) {
                    part.loglik.push(0.0);
                    continue;
                }
                terms.copy_from_slice(&t.log_w);
                for (j, &k) in resp.iter().enumerate() {
                    if k > 0 {
                        let base = t.idx(g, j, usize::from(k) - 1, 0);
                        for (acc, lp) in terms.iter_mut().zip(&t.log_p[base..base + q]) {
                            *acc += lp;
                        }
                    }
                }
                if let Some(((y, x), s)) = outcome {
                    let fixed_part = y - s.intercept
                        - s.covariates.iter().zip(x).map(|(g, x)| g * x).sum::<f64>();
                    let log_norm = -0.5 * (std::f64::consts::TAU * s.residual_variance).ln();
                    for qi in 0..q {
                        let e = fixed_part - s.slope * t.eta[g][qi];
                        resid[qi] = e;
                        terms[qi] += log_norm - 0.5 * e * e / s.residual_variance;
                    }
                }
                let ll = log_sum_exp(&terms);
                part.loglik.push(ll);
                if !want_gradient {
                    continue;
                }
                for v in terms.iter_mut() {
                    *v = (*v - ll).exp();
                }
                for (j, &k) in resp.iter().enumerate() {
                    if k > 0 {
                        let base = t.idx(g, j, usize::from(k) - 1, 0);
                        for (m, r) in part.mass[base..base + q].iter_mut().zip(&terms) {
                            *m += r;
                        }
                    }
                }
                if let Some(((_, x), s)) = outcome {
                    let psi = s.residual_variance;
                    let acc = &mut part.structural[g];
                    let mut e_mean = 0.0;
                    for qi in 0..q {
                        let (r, e) = (terms[qi], resid[qi]);
                        e_mean += r * e;
                        acc[1] += r * e * t.eta[g][qi] / psi;
                        acc[n_struct - 1] += r * (-0.5 / psi + 0.5 * e * e / (psi * psi));
                        part.eta_struct[g * q + qi] += r * s.slope * e / psi;
                    }
                    acc[0] += e_mean / psi;
                    for (c, xc) in x.iter().enumerate() {
                        acc[2 + c] += e_mean * xc / psi;
                    }
                }
            }
            part
        })
        .collect();

    let per_row: Vec<f64> = partials.iter().flat_map(|p| p.loglik.iter().copied()).collect();
    let loglik = pairwise_sum(&per_row);
    if !want_gradient {
        return Evaluation { loglik, gradient: None };
    }

    let mut mass = vec![0.0; t.log_p.len()];
    let mut eta_struct = vec![0.0; data.n_groups * q];
    let mut structural = vec![vec![0.0; n_struct]; data.n_groups];
    for part in &partials {
        for (a, b) in mass.iter_mut().zip(&part.mass) {
            *a += b;
        }
        for (a, b) in eta_struct.iter_mut().zip(&part.eta_struct) {
            *a += b;
        }
        for (a, b) in structural.iter_mut().zip(&part.structural) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    let mut grad = p.clone();
    for g in 0..data.n_groups {
        let mut d_eta = eta_struct[g * q..(g + 1) * q].to_vec();
        for j in 0..data.n_items {
            let kk = usize::from(data.categories[j]);
            let lambda = p.loadings[g][j];
            let mut d_lambda = 0.0;
            let mut d_tau = vec![0.0; kk - 1];
            for k in 0..kk {
                for qi in 0..q {
                    let i = t.idx(g, j, k, qi);
                    let w = mass[i];
                    if w == 0.0 {
                        continue;
                    }
                    let diff = t.upper[i] - t.lower[i];
                    d_lambda -= w * t.eta[g][qi] * diff;
                    d_eta[qi] -= w * lambda * diff;
                    if k < kk - 1 {
                        d_tau[k] += w * t.upper[i];
                    }
                    if k > 0 {
                        d_tau[k - 1] -= w * t.lower[i];
                    }
                }
            }
            grad.loadings[g][j] = d_lambda;
            grad.thresholds[g][j] = d_tau;
            // Residual variances are always fixed; no gradient is carried.
            grad.residual_variance[g][j] = 0.0;
        }
        let sd = p.latent_variance[g].sqrt();
        grad.latent_mean[g] = d_eta.iter().sum();
        grad.latent_variance[g] =
            d_eta.iter().zip(&rule.nodes).map(|(d, x)| d * x).sum::<f64>() / (2.0 * sd);
        if let Some(s) = grad.structural.as_mut() {
            let acc = &structural[g];
            let sg = &mut s[g];
            sg.intercept = acc[0];
            sg.slope = acc[1];
            for (c, v) in sg.covariates.iter_mut().enumerate() {
                *v = acc[2 + c];
            }
            sg.residual_variance = acc[n_struct - 1];
        }
    }
    grad.latent_intercepts.iter_mut().for_each(|v| *v = 0.0);
    Evaluation { loglik, gradient: Some(grad) }
}
