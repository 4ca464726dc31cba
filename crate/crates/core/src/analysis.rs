//! Post-fit summaries: threshold differences, latent mean gaps, EAP scores
//! and the implied outcome difference `β·Δη`.

use log::warn;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ItemRole, OrdinalDataset};
use crate::error::{Error, Result};
use crate::estimator::{fit_with, FitOptions, FitResult, StandardErrors};
use crate::kernel::{posterior_moments, QuadratureRule};
use crate::params::{Coord, ParameterSet};
use crate::spec::ModelSpec;

/// Groups with fewer outcome-complete rows share one structural slope.
pub const MIN_ROWS_PER_GROUP_SLOPE: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdDiff {
    pub group: String,
    pub item: String,
    /// 1-based threshold index.
    pub k: usize,
    pub tau_focal: f64,
    pub tau_reference: f64,
    pub delta: f64,
    /// From the joint covariance of the two estimates.
    pub se: Option<f64>,
    /// Equal by constraint rather than by estimation.
    pub constrained: bool,
    pub role: ItemRole,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdDiffTable {
    pub reference_group: String,
    pub rows: Vec<ThresholdDiff>,
}

impl ThresholdDiffTable {
    pub fn get(&self, item: &str, k: usize) -> Option<&ThresholdDiff> {
        self.rows.iter().find(|r| r.item == item && r.k == k)
    }
}

/// Focal-minus-reference thresholds for every non-reference group of `fit`.
pub fn threshold_differences(fit: &FitResult) -> Result<ThresholdDiffTable> {
    let tied = |c: Coord| fit.constraints.tie_target(c).is_some();
    threshold_differences_from(
        &fit.params,
        &fit.spec_echo.item_names,
        &fit.item_roles,
        &fit.group_labels,
        fit.reference(),
        fit.standard_errors.as_ref(),
        &tied,
    )
}

/// Table from bare parameter values. `tied` reports coordinates held equal
/// to the reference by constraint.
pub fn threshold_differences_from(
    params: &ParameterSet<f64>,
    items: &[String],
    roles: &[ItemRole],
    groups: &[String],
    reference: usize,
    se: Option<&StandardErrors>,
    tied: &dyn Fn(Coord) -> bool,
) -> Result<ThresholdDiffTable> {
    if params.n_groups() < 2 {
        return Err(Error::TooFewGroups(params.n_groups()));
    }
    let mut rows = Vec::new();
    for g in (0..params.n_groups()).filter(|&g| g != reference) {
        for (j, name) in items.iter().enumerate() {
            for k in 0..params.thresholds[g][j].len() {
                let cf = Coord::Threshold { group: g, item: j, k };
                let cr = Coord::Threshold { group: reference, item: j, k };
                let (tf, tr) = (params.get(cf), params.get(cr));
                let constrained = tied(cf);
                let joint = se.and_then(|s| {
                    let var = s.covariance(cf, cf)? + s.covariance(cr, cr)? - 2.0 * s.covariance(cf, cr)?;
                    (var >= 0.0).then(|| var.sqrt())
                });
                rows.push(ThresholdDiff {
                    group: groups[g].clone(),
                    item: name.clone(),
                    k: k + 1,
                    tau_focal: tf,
                    tau_reference: tr,
                    delta: tf - tr,
                    se: if constrained { Some(0.0) } else { joint },
                    constrained,
                    role: roles.get(j).copied().unwrap_or(ItemRole::ChildRearing),
                });
            }
        }
    }
    Ok(ThresholdDiffTable { reference_group: groups[reference].clone(), rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatentGap {
    pub group: usize,
    /// μ̂ of `group` minus the reference mean (fixed at 0).
    pub delta_eta: f64,
    pub se: Option<f64>,
}

/// Gap of the first non-reference group.
pub fn latent_gap(fit: &FitResult) -> Result<LatentGap> {
    latent_gaps(fit)?
        .into_iter()
        .next()
        .ok_or(Error::TooFewGroups(fit.params.n_groups()))
}

/// Gaps of every non-reference group, in group order.
pub fn latent_gaps(fit: &FitResult) -> Result<Vec<LatentGap>> {
    let r = fit.reference();
    (0..fit.params.n_groups())
        .filter(|&g| g != r)
        .map(|g| {
            let c = Coord::Mean { group: g };
            if !fit.is_free(c) {
                return Err(Error::MeanNotIdentified(fit.spec_echo.constraint_level.to_string()));
            }
            Ok(LatentGap {
                group: g,
                delta_eta: fit.params.latent_mean[g] - fit.params.latent_mean[r],
                se: fit.standard_errors.as_ref().and_then(|s| s.get(c)),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EapScore {
    pub score: f64,
    pub sd: f64,
}

/// Posterior mean and SD of η for each row of `dataset`, in row order.
pub fn eap_scores(fit: &FitResult, dataset: &OrdinalDataset) -> Result<Vec<EapScore>> {
    let columns = fit.spec_echo.item_columns(dataset)?;
    let rule = QuadratureRule::gauss_hermite(fit.spec_echo.quadrature_points)?;
    eap_scores_at(&fit.params, dataset, &columns, &rule)
}

/// EAP scores under arbitrary parameters; `columns` maps model items to
/// dataset columns.
pub fn eap_scores_at(
    params: &ParameterSet<f64>,
    dataset: &OrdinalDataset,
    columns: &[usize],
    rule: &QuadratureRule<f64>,
) -> Result<Vec<EapScore>> {
    params.check(None)?;
    if columns.len() != params.n_items() || dataset.n_groups() != params.n_groups() {
        return Err(Error::InvalidParameters("parameters do not match the dataset".into()));
    }
    Ok(dataset
        .rows
        .par_iter()
        .map(|row| {
            let resp: Vec<Option<u8>> = columns.iter().map(|&c| row.responses[c]).collect();
            let (score, sd) = posterior_moments(&resp, &params.group(row.group), rule);
            EapScore { score, sd }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructuralMode {
    /// OLS of the outcome on EAP scores.
    TwoStep,
    /// Outcome enters the likelihood as a normal indicator of η.
    Joint,
}

impl std::str::FromStr for StructuralMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two_step" | "two-step" => Ok(StructuralMode::TwoStep),
            "joint" => Ok(StructuralMode::Joint),
            other => Err(Error::InvalidArgument(format!("unknown structural mode {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuralOptions {
    pub mode: StructuralMode,
    /// z-score the outcome over outcome-complete rows first.
    pub standardize_outcome: bool,
    pub use_covariates: bool,
    pub outcome_name: String,
}

impl Default for StructuralOptions {
    fn default() -> Self {
        Self {
            mode: StructuralMode::Joint,
            standardize_outcome: true,
            use_covariates: true,
            outcome_name: "outcome".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSlope {
    pub group: String,
    pub beta: f64,
    pub se: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyEffect {
    pub outcome: String,
    pub mode: StructuralMode,
    pub standardized_outcome: bool,
    /// One slope shared by all groups.
    pub pooled: bool,
    pub slopes: Vec<GroupSlope>,
    /// Focal group the gap and slope refer to.
    pub focal_group: String,
    pub beta: f64,
    pub beta_se: Option<f64>,
    pub delta_eta: f64,
    pub delta_eta_se: Option<f64>,
    pub delta_policy: f64,
    pub delta_policy_se: Option<f64>,
    /// The SE of `delta_policy` ignores the (β, Δη) covariance.
    pub se_assumes_independence: bool,
    pub converged: bool,
    pub warnings: Vec<String>,
}

/// Slope of the outcome on η and the implied outcome gap `β·Δη`.
///
/// `spec` describes the measurement model and must free the focal latent
/// mean. The slope reported is the focal group's.
pub fn structural_effect(
    dataset: &OrdinalDataset,
    spec: &ModelSpec,
    opts: &StructuralOptions,
) -> Result<PolicyEffect> {
    if !dataset.has_outcome() {
        return Err(Error::InvalidSpec("structural model requires an outcome column".into()));
    }
    if !spec.constraint_level.frees_latent_mean() {
        return Err(Error::MeanNotIdentified(spec.constraint_level.to_string()));
    }
    let mut data = dataset.clone();
    if !opts.use_covariates {
        data.covariate_names.clear();
        data.rows.iter_mut().for_each(|r| r.covariates = None);
    }
    if opts.standardize_outcome {
        standardize_outcome(&mut data)?;
    }
    check_collinearity(&data)?;

    let n_cov = data.n_covariates();
    let mut counts = vec![0usize; data.n_groups()];
    for r in &data.rows {
        if r.structural_obs(n_cov).is_some() {
            counts[r.group] += 1;
        }
    }
    let pooled = counts.iter().any(|&c| c < MIN_ROWS_PER_GROUP_SLOPE);
    let mut warnings = Vec::new();
    if pooled {
        warnings.push(format!(
            "fewer than {MIN_ROWS_PER_GROUP_SLOPE} outcome-complete rows in a group; slope pooled across groups"
        ));
    }
    let reference = spec.reference_index(&data)?;
    let focal = (0..data.n_groups())
        .find(|&g| g != reference)
        .ok_or(Error::TooFewGroups(data.n_groups()))?;

    let mut measurement = spec.clone();
    measurement.include_structural = false;
    let effect = match opts.mode {
        StructuralMode::Joint => {
            let mut joint = spec.clone();
            joint.include_structural = true;
            joint.pooled_structural = pooled;
            let fit = fit_with(&data, &joint, &FitOptions::default())?;
            joint_effect(&fit, focal, pooled)
        }
        StructuralMode::TwoStep => {
            let fit = fit_with(&data, &measurement, &FitOptions::default())?;
            two_step_effect(&fit, &data, focal, pooled)?
        }
    };
    let mut effect = effect;
    effect.outcome = opts.outcome_name.clone();
    effect.standardized_outcome = opts.standardize_outcome;
    effect.warnings.extend(warnings);
    for w in &effect.warnings {
        warn!("{w}");
    }
    Ok(effect)
}

fn joint_effect(fit: &FitResult, focal: usize, pooled: bool) -> PolicyEffect {
    let p = fit.structural_slopes();
    let se = fit.standard_errors.as_ref();
    let mean_c = Coord::Mean { group: focal };
    // Under pooling the focal slope is tied to the reference one.
    let slope_c = fit
        .constraints
        .tie_target(Coord::StructSlope { group: focal })
        .unwrap_or(Coord::StructSlope { group: focal });
    let beta = p[focal];
    let delta_eta = fit.params.latent_mean[focal];
    let beta_se = se.and_then(|s| s.get(slope_c));
    let delta_eta_se = se.and_then(|s| s.get(mean_c));
    let cov = se.and_then(|s| s.covariance(slope_c, mean_c));
    let (delta_policy_se, independent) = policy_se(beta, beta_se, delta_eta, delta_eta_se, cov);
    PolicyEffect {
        outcome: String::new(),
        mode: StructuralMode::Joint,
        standardized_outcome: false,
        pooled,
        slopes: p
            .iter()
            .enumerate()
            .map(|(g, &b)| {
                let c = fit
                    .constraints
                    .tie_target(Coord::StructSlope { group: g })
                    .unwrap_or(Coord::StructSlope { group: g });
                GroupSlope { group: fit.group_labels[g].clone(), beta: b, se: se.and_then(|s| s.get(c)) }
            })
            .collect(),
        focal_group: fit.group_labels[focal].clone(),
        beta,
        beta_se,
        delta_eta,
        delta_eta_se,
        delta_policy: beta * delta_eta,
        delta_policy_se,
        se_assumes_independence: independent,
        converged: fit.converged,
        warnings: Vec::new(),
    }
}

fn two_step_effect(fit: &FitResult, data: &OrdinalDataset, focal: usize, pooled: bool) -> Result<PolicyEffect> {
    let scores = eap_scores(fit, data)?;
    let n_cov = data.n_covariates();
    let n_groups = data.n_groups();
    let mut slopes = Vec::with_capacity(n_groups);
    if pooled {
        // Group intercepts, one slope, shared covariate effects.
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (r, s) in data.rows.iter().zip(&scores) {
            if let Some((yy, cov)) = r.structural_obs(n_cov) {
                let mut row = vec![0.0; n_groups];
                row[r.group] = 1.0;
                row.push(s.score);
                row.extend_from_slice(cov);
                x.push(row);
                y.push(yy);
            }
        }
        let (b, se) = ols(&x, &y)?;
        for g in 0..n_groups {
            slopes.push(GroupSlope { group: data.groups[g].clone(), beta: b[n_groups], se: se[n_groups] });
        }
    } else {
        for g in 0..n_groups {
            let mut x = Vec::new();
            let mut y = Vec::new();
            for (r, s) in data.rows.iter().zip(&scores).filter(|(r, _)| r.group == g) {
                if let Some((yy, cov)) = r.structural_obs(n_cov) {
                    let mut row = vec![1.0, s.score];
                    row.extend_from_slice(cov);
                    x.push(row);
                    y.push(yy);
                }
            }
            let (b, se) = ols(&x, &y)?;
            slopes.push(GroupSlope { group: data.groups[g].clone(), beta: b[1], se: se[1] });
        }
    }
    let gap = latent_gaps(fit)?
        .into_iter()
        .find(|l| l.group == focal)
        .ok_or(Error::TooFewGroups(n_groups))?;
    let beta = slopes[focal].beta;
    let beta_se = slopes[focal].se;
    let (delta_policy_se, independent) = policy_se(beta, beta_se, gap.delta_eta, gap.se, None);
    Ok(PolicyEffect {
        outcome: String::new(),
        mode: StructuralMode::TwoStep,
        standardized_outcome: false,
        pooled,
        slopes,
        focal_group: data.groups[focal].clone(),
        beta,
        beta_se,
        delta_eta: gap.delta_eta,
        delta_eta_se: gap.se,
        delta_policy: beta * gap.delta_eta,
        delta_policy_se,
        se_assumes_independence: independent,
        converged: fit.converged,
        warnings: Vec::new(),
    })
}

/// Delta-method SE of `β·Δη`, and whether the covariance term was missing.
fn policy_se(
    beta: f64,
    beta_se: Option<f64>,
    gap: f64,
    gap_se: Option<f64>,
    cov: Option<f64>,
) -> (Option<f64>, bool) {
    match (beta_se, gap_se) {
        (Some(sb), Some(sg)) => {
            let c = cov.unwrap_or(0.0);
            let var = gap * gap * sb * sb + beta * beta * sg * sg + 2.0 * beta * gap * c;
            ((var >= 0.0).then(|| var.sqrt()), cov.is_none())
        }
        _ => (None, cov.is_none()),
    }
}

/// Ordinary least squares: coefficients and their conventional SEs.
pub fn ols(x: &[Vec<f64>], y: &[f64]) -> Result<(Vec<f64>, Vec<Option<f64>>)> {
    let n = y.len();
    let p = x.first().map_or(0, Vec::len);
    if n <= p {
        return Err(Error::InvalidArgument(format!("{n} observations for {p} regression coefficients")));
    }
    let xm = DMatrix::from_fn(n, p, |i, j| x[i][j]);
    let yv = DVector::from_column_slice(y);
    let xtx = xm.transpose() * &xm;
    let inv = xtx
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Collinear(vec!["regression design".into()]))?;
    let b = &inv * xm.transpose() * &yv;
    let resid = &yv - &xm * &b;
    let s2 = resid.norm_squared() / (n - p) as f64;
    let se = (0..p)
        .map(|j| {
            let v = s2 * inv[(j, j)];
            (v >= 0.0).then(|| v.sqrt())
        })
        .collect();
    Ok((b.iter().copied().collect(), se))
}

fn standardize_outcome(data: &mut OrdinalDataset) -> Result<()> {
    let ys: Vec<f64> = data.rows.iter().filter_map(|r| r.outcome).collect();
    if ys.len() < 2 {
        return Err(Error::InvalidArgument("fewer than 2 observed outcomes".into()));
    }
    let m = ys.iter().sum::<f64>() / ys.len() as f64;
    let sd = (ys.iter().map(|y| (y - m).powi(2)).sum::<f64>() / (ys.len() - 1) as f64).sqrt();
    if !(sd > 0.0) {
        return Err(Error::InvalidArgument("outcome has zero variance".into()));
    }
    for r in &mut data.rows {
        if let Some(y) = r.outcome.as_mut() {
            *y = (*y - m) / sd;
        }
    }
    Ok(())
}

/// Rejects covariates that are constant or linear combinations of earlier
/// ones (with an intercept), naming the offending columns.
pub fn check_collinearity(data: &OrdinalDataset) -> Result<()> {
    let n_cov = data.n_covariates();
    if n_cov == 0 {
        return Ok(());
    }
    let rows: Vec<&[f64]> = data.rows.iter().filter_map(|r| r.structural_obs(n_cov).map(|(_, x)| x)).collect();
    let n = rows.len();
    let mut basis: Vec<Vec<f64>> = vec![vec![1.0 / (n as f64).sqrt(); n]];
    let mut bad = Vec::new();
    for c in 0..n_cov {
        let mut v: Vec<f64> = rows.iter().map(|r| r[c]).collect();
        let norm0 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        for b in &basis {
            let d: f64 = v.iter().zip(b).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(b).for_each(|(a, b)| *a -= d * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm <= 1e-9 * norm0.max(1.0) {
            bad.push(data.covariate_names[c].clone());
        } else {
            basis.push(v.iter().map(|a| a / norm).collect());
        }
    }
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Error::Collinear(bad))
    }
}
