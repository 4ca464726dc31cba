//! Marginal maximum likelihood under a [`ConstraintSet`].
//!
//! Thresholds are optimized as (first threshold, log gaps) and variances on
//! the log scale, so every quasi-Newton step stays inside the parameter space.
//! The gradient is analytic; standard errors come from a central-difference
//! Hessian of that gradient in the natural parameterization.

mod bfgs;
pub(crate) mod layout;
pub mod lrt;
pub(crate) mod objective;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::constraints::{build_constraints, ConstraintSet};
use crate::data::{ItemRole, OrdinalDataset};
use crate::error::{Error, Result};
use crate::kernel::{normal, QuadratureRule};
use crate::params::{Coord, ParameterSet};
use crate::spec::ModelSpec;

pub use lrt::{chisq_sf, lrt, LrtResult};

use layout::Layout;
use objective::{evaluate, Prepared};

pub const START_LOADING: f64 = 0.8;

#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Warm start; coordinates are read through the model's ties and fixes.
    pub start: Option<ParameterSet<f64>>,
    pub standard_errors: bool,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { start: None, standard_errors: true, max_iter: 500 }
    }
}

impl FitOptions {
    /// Point estimates only.
    pub fn fast() -> Self {
        Self { standard_errors: false, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardErrors {
    pub coords: Vec<Coord>,
    /// `None` where the Hessian gives no usable curvature.
    pub se: Vec<Option<f64>>,
    /// Inverse observed information over `coords`, when positive definite.
    pub covariance: Option<Vec<Vec<f64>>>,
}

impl StandardErrors {
    pub fn get(&self, c: Coord) -> Option<f64> {
        self.coords.iter().position(|&x| x == c).and_then(|i| self.se[i])
    }

    pub fn covariance(&self, a: Coord, b: Coord) -> Option<f64> {
        let i = self.coords.iter().position(|&x| x == a)?;
        let j = self.coords.iter().position(|&x| x == b)?;
        self.covariance.as_ref().map(|c| c[i][j])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: ParameterSet<f64>,
    pub loglik: f64,
    pub n_free: usize,
    pub converged: bool,
    pub iterations: usize,
    /// Infinity-norm of the gradient in the optimizer's coordinates.
    pub gradient_norm: f64,
    pub gradient_tolerance: f64,
    pub free_coords: Vec<Coord>,
    pub standard_errors: Option<StandardErrors>,
    pub spec_echo: ModelSpec,
    pub constraints: ConstraintSet,
    pub group_labels: Vec<String>,
    /// Dataset roles of the model's items, in model order.
    pub item_roles: Vec<ItemRole>,
    /// Log-likelihood after each accepted optimizer step.
    pub trace: Vec<f64>,
}

impl FitResult {
    pub fn reference(&self) -> usize {
        self.constraints.reference
    }

    pub fn is_free(&self, c: Coord) -> bool {
        self.free_coords.contains(&c)
    }

    pub fn label(&self, c: Coord) -> String {
        c.label(&self.spec_echo.item_names, &self.group_labels)
    }

    /// Structural slope per group (zeros when the fit has none).
    pub fn structural_slopes(&self) -> Vec<f64> {
        self.params
            .structural
            .as_ref()
            .map_or_else(|| vec![0.0; self.params.n_groups()], |s| s.iter().map(|s| s.slope).collect())
    }
}

/// Working state shared by fitting and Hessian evaluation.
struct Problem {
    constraints: ConstraintSet,
    layout: Layout,
    data: Prepared,
    rule: QuadratureRule<f64>,
}

impl Problem {
    fn new(dataset: &OrdinalDataset, spec: &ModelSpec) -> Result<Self> {
        let constraints = build_constraints(spec, dataset)?;
        let layout = Layout::new(&constraints)?;
        let columns = spec.item_columns(dataset)?;
        let data = Prepared::new(dataset, &columns, spec.include_structural);
        let rule = QuadratureRule::gauss_hermite(spec.quadrature_points)?;
        Ok(Self { constraints, layout, data, rule })
    }

    /// −ℓ and its θ-gradient.
    fn objective(&self, theta: &[f64]) -> Option<(f64, Vec<f64>)> {
        let p = self.layout.to_params(theta)?;
        let e = evaluate(&self.data, &p, &self.rule, true);
        if !e.loglik.is_finite() {
            return None;
        }
        let full = e.gradient?;
        let nat = self.layout.natural_gradient(&full);
        let g = self.layout.theta_gradient(theta, &nat, &p);
        if g.iter().any(|v| !v.is_finite()) {
            return None;
        }
        Some((-e.loglik, g.into_iter().map(|v| -v).collect()))
    }

    /// ∂ℓ/∂(free natural coordinates) at natural values `v`.
    fn natural_score(&self, v: &[f64]) -> Option<Vec<f64>> {
        let p = self.layout.from_natural(v);
        p.check(None).ok()?;
        let e = evaluate(&self.data, &p, &self.rule, true);
        Some(self.layout.natural_gradient(&e.gradient?))
    }
}

/// Data-informed starting values: loadings 0.8, thresholds from each group's
/// cumulative category proportions through the probit inverse (rescaled to
/// the conditional metric), μ = 0, φ = 1.
pub fn starting_values(dataset: &OrdinalDataset, spec: &ModelSpec) -> Result<ParameterSet<f64>> {
    let constraints = build_constraints(spec, dataset)?;
    let layout = Layout::new(&constraints)?;
    let columns = spec.item_columns(dataset)?;
    let mut p = layout.template().clone();
    let scale = |lambda: f64| (1.0 + lambda * lambda).sqrt();
    for g in 0..dataset.n_groups() {
        for (j, &col) in columns.iter().enumerate() {
            let coord = Coord::Loading { group: g, item: j };
            let lambda = constraints.fixed_value(coord).unwrap_or(START_LOADING);
            p.loadings[g][j] = lambda;
            let k = usize::from(dataset.items[col].n_categories);
            let mut counts = vec![0usize; k];
            for row in dataset.rows.iter().filter(|r| r.group == g) {
                if let Some(c) = row.responses[col] {
                    counts[usize::from(c) - 1] += 1;
                }
            }
            let n: usize = counts.iter().sum();
            let nf = n.max(1) as f64;
            let mut cum = 0usize;
            let mut prev = f64::NEG_INFINITY;
            for (t, count) in counts.iter().take(k - 1).enumerate() {
                cum += count;
                let prop = (cum as f64 / nf).clamp(0.5 / nf, 1.0 - 0.5 / nf);
                let mut tau = normal::quantile(prop) * scale(lambda);
                if tau < prev + 0.05 {
                    tau = prev + 0.05;
                }
                p.thresholds[g][j][t] = tau;
                prev = tau;
            }
        }
    }
    if let Some(s) = p.structural.as_mut() {
        let n_cov = dataset.n_covariates();
        for (g, sg) in s.iter_mut().enumerate() {
            let ys: Vec<f64> = dataset
                .rows
                .iter()
                .filter(|r| r.group == g)
                .filter_map(|r| r.structural_obs(n_cov).map(|(y, _)| y))
                .collect();
            if ys.len() >= 2 {
                let m = ys.iter().sum::<f64>() / ys.len() as f64;
                let v = ys.iter().map(|y| (y - m).powi(2)).sum::<f64>() / (ys.len() - 1) as f64;
                sg.intercept = m;
                sg.residual_variance = v.max(1e-3);
            }
        }
    }
    for f in &constraints.fixed {
        p.set(f.coord, f.value);
    }
    Ok(p)
}

/// Fits `spec` with default options (standard errors included).
pub fn fit(dataset: &OrdinalDataset, spec: &ModelSpec) -> Result<FitResult> {
    fit_with(dataset, spec, &FitOptions::default())
}

pub fn fit_with(dataset: &OrdinalDataset, spec: &ModelSpec, opts: &FitOptions) -> Result<FitResult> {
    let problem = Problem::new(dataset, spec)?;
    let mut start = starting_values(dataset, spec)?;
    if let Some(warm) = &opts.start {
        if warm.n_groups() != start.n_groups() || warm.n_items() != start.n_items() {
            return Err(Error::InvalidArgument("warm start has the wrong shape".into()));
        }
        for c in problem.layout.coords() {
            start.set(c, warm.get(c));
        }
    }
    let theta0 = problem.layout.to_theta(&start)?;
    // Re-expand so tied coordinates take their reference values.
    let probe = problem.layout.to_params(&theta0).ok_or_else(|| {
        Error::InvalidParameters("starting values outside the parameter space".into())
    })?;
    let f0 = evaluate(&problem.data, &probe, &problem.rule, false).loglik.abs();
    let loose = 1e-4_f64.max(1e-8 * f0);
    let settings = bfgs::Settings { max_iter: opts.max_iter, loose_gtol: loose, ..Default::default() };
    let min = bfgs::minimize(|th| problem.objective(th), theta0, &settings)
        .ok_or_else(|| Error::InvalidParameters("objective undefined at starting values".into()))?;

    let params = problem.layout.to_params(&min.x).expect("accepted iterate is in the domain");
    let gradient_norm = min.grad.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let mut result = FitResult {
        params,
        loglik: -min.f,
        n_free: problem.constraints.n_free(),
        converged: min.converged,
        iterations: min.iterations,
        gradient_norm,
        gradient_tolerance: settings.loose_gtol,
        free_coords: problem.layout.coords(),
        standard_errors: None,
        spec_echo: spec.clone(),
        constraints: problem.constraints.clone(),
        group_labels: dataset.groups.clone(),
        item_roles: spec.item_columns(dataset)?.iter().map(|&c| dataset.items[c].role).collect(),
        trace: min.trace.iter().map(|f| -f).collect(),
    };
    if opts.standard_errors && result.converged {
        result.standard_errors = Some(hessian_standard_errors(&problem, &result.params));
    }
    Ok(result)
}

/// Standard errors from the inverse of the central-difference Hessian of −ℓ.
pub fn standard_errors(fit: &FitResult, dataset: &OrdinalDataset) -> Result<StandardErrors> {
    if !fit.converged {
        return Err(Error::NotConverged("standard errors need a converged fit".into()));
    }
    let problem = Problem::new(dataset, &fit.spec_echo)?;
    Ok(hessian_standard_errors(&problem, &fit.params))
}

fn hessian_standard_errors(problem: &Problem, params: &ParameterSet<f64>) -> StandardErrors {
    let coords = problem.layout.coords();
    let v = problem.layout.natural(params);
    let n = v.len();
    let mut hess = DMatrix::<f64>::zeros(n, n);
    let mut ok = vec![true; n];
    for i in 0..n {
        let mut h = 1e-4 * v[i].abs().max(1.0);
        let mut column = None;
        for _ in 0..8 {
            let mut plus = v.clone();
            plus[i] += h;
            let mut minus = v.clone();
            minus[i] -= h;
            if let (Some(gp), Some(gm)) = (problem.natural_score(&plus), problem.natural_score(&minus)) {
                column = Some(gp.iter().zip(&gm).map(|(a, b)| -(a - b) / (2.0 * h)).collect::<Vec<_>>());
                break;
            }
            h *= 0.1;
        }
        match column {
            Some(c) => {
                for (j, x) in c.into_iter().enumerate() {
                    hess[(j, i)] = x;
                }
            }
            None => ok[i] = false,
        }
    }
    let hess = (&hess + hess.transpose()) * 0.5;
    let eig = SymmetricEigen::new(hess);
    let max_ev = eig.eigenvalues.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let tol = 1e-10 * max_ev.max(1e-300);
    let good: Vec<bool> = eig.eigenvalues.iter().map(|&e| e > tol).collect();
    let all_good = good.iter().all(|&b| b) && ok.iter().all(|&b| b);

    let mut cov = vec![vec![0.0; n]; n];
    for (k, &use_k) in good.iter().enumerate() {
        if !use_k {
            continue;
        }
        let inv = 1.0 / eig.eigenvalues[k];
        for i in 0..n {
            for j in 0..n {
                cov[i][j] += eig.eigenvectors[(i, k)] * eig.eigenvectors[(j, k)] * inv;
            }
        }
    }
    let se = (0..n)
        .map(|i| {
            let degenerate: f64 = (0..n)
                .filter(|&k| !good[k])
                .map(|k| eig.eigenvectors[(i, k)].powi(2))
                .sum();
            (ok[i] && degenerate < 1e-6 && cov[i][i] > 0.0).then(|| cov[i][i].sqrt())
        })
        .collect();
    StandardErrors { coords, se, covariance: all_good.then_some(cov) }
}

/// Log-likelihood at arbitrary parameters for the model described by `spec`.
pub fn loglik_at(dataset: &OrdinalDataset, spec: &ModelSpec, params: &ParameterSet<f64>) -> Result<f64> {
    let columns = spec.item_columns(dataset)?;
    let data = Prepared::new(dataset, &columns, spec.include_structural);
    let rule = QuadratureRule::gauss_hermite(spec.quadrature_points)?;
    params.check(None)?;
    Ok(evaluate(&data, params, &rule, false).loglik)
}

/// Natural-scale score vector over the fit's free coordinates.
pub fn score_at(dataset: &OrdinalDataset, fit: &FitResult) -> Result<Vec<f64>> {
    let problem = Problem::new(dataset, &fit.spec_echo)?;
    problem
        .natural_score(&problem.layout.natural(&fit.params))
        .ok_or_else(|| Error::InvalidParameters("score undefined at fitted parameters".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Item, ItemRole, Row};
    use crate::spec::ConstraintLevel;

    fn single_item(n1: usize, n2: usize) -> OrdinalDataset {
        let mut rows = vec![Row::new(0, vec![Some(1)]); n1];
        rows.extend(vec![Row::new(0, vec![Some(2)]); n2]);
        OrdinalDataset {
            items: vec![Item::new("y", 2, ItemRole::ChildRearing)],
            groups: vec!["all".into()],
            rows,
            covariate_names: vec![],
        }
    }

    fn fixed_loading_spec(d: &OrdinalDataset, lambda: f64) -> ModelSpec {
        let mut s = ModelSpec::new(d, ConstraintLevel::Configural);
        s.fixed_loadings = vec![("y".into(), lambda)];
        s
    }

    #[test]
    fn balanced_binary_item_gives_zero_threshold() {
        let d = single_item(500, 500);
        let f = fit(&d, &fixed_loading_spec(&d, 1.0)).unwrap();
        assert!(f.converged);
        assert!(f.params.thresholds[0][0][0].abs() < 1e-6);
    }

    #[test]
    fn threshold_recovers_probit_inverse() {
        // Marginal P(y = 1) = Φ(τ / √(1 + λ²)).
        let n = 100_000;
        let n1 = (n as f64 * normal::cdf(-1.0)).round() as usize;
        let p_hat = n1 as f64 / n as f64;
        let d = single_item(n1, n - n1);
        let f0 = fit(&d, &fixed_loading_spec(&d, 0.0)).unwrap();
        assert!((f0.params.thresholds[0][0][0] - normal::quantile(p_hat)).abs() < 1e-6);
        assert!((f0.params.thresholds[0][0][0] + 1.0).abs() < 1e-3);
        let f1 = fit(&d, &fixed_loading_spec(&d, 1.0)).unwrap();
        let expect = normal::quantile(p_hat) * 2f64.sqrt();
        assert!((f1.params.thresholds[0][0][0] - expect).abs() < 1e-5);
    }

    #[test]
    fn single_threshold_se_matches_delta_method() {
        // τ̂ = Φ⁻¹(p̂) ⇒ SE = √(p(1−p)/N) / φ(τ̂) when λ = 0.
        let (n1, n2) = (300, 700);
        let d = single_item(n1, n2);
        let f = fit(&d, &fixed_loading_spec(&d, 0.0)).unwrap();
        let p = n1 as f64 / (n1 + n2) as f64;
        let tau = normal::quantile(p);
        let oracle = (p * (1.0 - p) / (n1 + n2) as f64).sqrt() / normal::pdf(tau);
        let se = f.standard_errors.as_ref().unwrap().get(Coord::Threshold { group: 0, item: 0, k: 0 }).unwrap();
        assert!((se / oracle - 1.0).abs() < 0.1, "{se} vs {oracle}");
        // Fixed loading has no standard error entry.
        assert!(f.standard_errors.unwrap().get(Coord::Loading { group: 0, item: 0 }).is_none());
    }
}
