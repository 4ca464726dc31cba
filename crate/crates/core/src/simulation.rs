//! Monte Carlo study of group-difference estimators when some items carry
//! threshold non-invariance.
//!
//! Eight items: the first four shift the focal group's continuous response by
//! δ, the last four are invariant anchors. Three estimators of the latent
//! mean gap are compared against the true gap Δ: a standardized item-mean
//! scale, a full-scalar CFA and an anchor-identified partial-scalar CFA.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{Item, ItemRole, OrdinalDataset, Row};
use crate::error::{Error, Result};
use crate::estimator::{fit_with, FitOptions};
use crate::spec::{ConstraintLevel, ModelSpec};

pub const N_DIF_ITEMS: usize = 4;
pub const N_ANCHORS: usize = 4;
pub const N_ITEMS: usize = N_DIF_ITEMS + N_ANCHORS;
pub const GROUP_LABELS: [&str; 2] = ["reference", "focal"];

/// Column names of the generated items.
pub fn item_names() -> Vec<String> {
    (1..=N_DIF_ITEMS)
        .map(|j| format!("auth_{j}"))
        .chain((1..=N_ANCHORS).map(|j| format!("anchor_{j}")))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemSet {
    DifOnly4,
    All8,
}

impl ItemSet {
    pub fn names(self) -> Vec<String> {
        let all = item_names();
        match self {
            ItemSet::DifOnly4 => all[..N_DIF_ITEMS].to_vec(),
            ItemSet::All8 => all,
        }
    }
}

/// How the raw scale difference is put on the latent SD metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleMetric {
    /// Divide by the pooled within-group SD of the scale score.
    PooledSd,
    /// Additionally divide by √α (pooled within-group Cronbach's alpha), so
    /// the difference estimates a gap in true-score SD units.
    Disattenuated,
}

/// Outcome generated as `Y = β·η + γ·X + ε`, `X ~ N(0, 1)`, `ε ~ N(0, σ²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeModel {
    pub beta: f64,
    #[serde(default)]
    pub covariate_effect: Option<f64>,
    pub noise_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimCondition {
    /// Threshold shift δ on the first four items, focal group.
    pub delta: f64,
    /// Common loading, unless `loadings` is given.
    pub lambda: f64,
    #[serde(default)]
    pub loadings: Option<Vec<f64>>,
    pub resid_var: f64,
    pub n_categories: u8,
    pub n: usize,
    #[serde(default = "default_gap")]
    pub true_gap: f64,
    #[serde(default = "default_scale_items")]
    pub scale_items: ItemSet,
    #[serde(default = "default_full_scalar_items")]
    pub full_scalar_items: ItemSet,
    #[serde(default = "default_scale_metric")]
    pub scale_metric: ScaleMetric,
    pub replications: usize,
    pub base_seed: u64,
    #[serde(default)]
    pub outcome: Option<OutcomeModel>,
}

fn default_gap() -> f64 {
    0.2
}
fn default_scale_items() -> ItemSet {
    ItemSet::DifOnly4
}
fn default_full_scalar_items() -> ItemSet {
    ItemSet::All8
}
fn default_scale_metric() -> ScaleMetric {
    ScaleMetric::Disattenuated
}

impl SimCondition {
    pub fn new(delta: f64, lambda: f64, resid_var: f64, n_categories: u8, n: usize) -> Self {
        Self {
            delta,
            lambda,
            loadings: None,
            resid_var,
            n_categories,
            n,
            true_gap: default_gap(),
            scale_items: default_scale_items(),
            full_scalar_items: default_full_scalar_items(),
            scale_metric: default_scale_metric(),
            replications: 1,
            base_seed: 0,
            outcome: None,
        }
    }

    pub fn with_replications(mut self, reps: usize, base_seed: u64) -> Self {
        self.replications = reps;
        self.base_seed = base_seed;
        self
    }

    pub fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return bad("delta must be a finite value ≥ 0");
        }
        if !(self.resid_var > 0.0 && self.resid_var.is_finite()) {
            return bad("resid_var must be positive");
        }
        if self.n_categories < 2 {
            return bad("n_categories must be ≥ 2");
        }
        if self.n < 2 || self.n % 2 != 0 {
            return bad("n must be even and ≥ 2");
        }
        if self.replications < 1 {
            return bad("replications must be ≥ 1");
        }
        if let Some(l) = &self.loadings {
            if l.len() != N_ITEMS || l.iter().any(|v| !v.is_finite()) {
                return bad("loadings must list 8 finite values");
            }
        }
        if let Some(o) = &self.outcome {
            if !(o.noise_sd > 0.0) {
                return bad("outcome noise_sd must be positive");
            }
        }
        Ok(())
    }

    pub fn loading(&self, j: usize) -> f64 {
        self.loadings.as_ref().map_or(self.lambda, |l| l[j])
    }

    /// Stable key over the data-generating settings only, so conditions that
    /// differ just in estimator options share replications.
    fn key(&self) -> String {
        let mut parts = vec![
            format!("{:016x}", self.delta.to_bits()),
            format!("{:016x}", self.resid_var.to_bits()),
            self.n_categories.to_string(),
            self.n.to_string(),
            format!("{:016x}", self.true_gap.to_bits()),
        ];
        parts.extend((0..N_ITEMS).map(|j| format!("{:016x}", self.loading(j).to_bits())));
        if let Some(o) = &self.outcome {
            parts.push(format!("{:016x}", o.beta.to_bits()));
            parts.push(format!("{:016x}", o.covariate_effect.map_or(u64::MAX, f64::to_bits)));
            parts.push(format!("{:016x}", o.noise_sd.to_bits()));
        }
        parts.join(",")
    }

    fn rng(&self, rep: usize) -> ChaCha20Rng {
        let mut h = Sha256::new();
        h.update(format!("{}|{}|{}", self.base_seed, self.key(), rep).as_bytes());
        ChaCha20Rng::from_seed(h.finalize().into())
    }
}

/// Cut points for `k` categories: (−1, 0, 1) when `k = 4`, otherwise `k − 1`
/// equally spaced values spanning [−1.5, 1.5].
pub fn cut_points(k: u8) -> Vec<f64> {
    if k == 4 {
        return vec![-1.0, 0.0, 1.0];
    }
    let m = usize::from(k) - 1;
    if m == 1 {
        return vec![0.0];
    }
    (0..m).map(|i| -1.5 + 3.0 * i as f64 / (m - 1) as f64).collect()
}

/// 1 + number of cuts strictly below `y`, so `y` equal to a cut falls in the
/// lower category.
pub fn categorize(y: f64, cuts: &[f64]) -> u8 {
    1 + cuts.iter().filter(|&&c| c < y).count() as u8
}

/// Latent draws behind one replication.
#[derive(Debug, Clone)]
pub struct LatentDraws {
    pub eta: Vec<f64>,
    /// `[respondent][item]` continuous responses before cutting.
    pub continuous: Vec<Vec<f64>>,
}

pub fn generate_replication(cond: &SimCondition, rep: usize) -> Result<OrdinalDataset> {
    generate_with_latent(cond, rep).map(|(d, _)| d)
}

/// Dataset plus the latent draws it was cut from.
pub fn generate_with_latent(cond: &SimCondition, rep: usize) -> Result<(OrdinalDataset, LatentDraws)> {
    cond.check()?;
    let mut rng = cond.rng(rep);
    let cuts = cut_points(cond.n_categories);
    let sd = cond.resid_var.sqrt();
    let half = cond.n / 2;
    let mut rows = Vec::with_capacity(cond.n);
    let mut eta_all = Vec::with_capacity(cond.n);
    let mut cont_all = Vec::with_capacity(cond.n);
    for i in 0..cond.n {
        let g = usize::from(i >= half);
        let z: f64 = StandardNormal.sample(&mut rng);
        let eta = g as f64 * cond.true_gap + z;
        let mut cont = Vec::with_capacity(N_ITEMS);
        let mut resp = Vec::with_capacity(N_ITEMS);
        for j in 0..N_ITEMS {
            let e: f64 = StandardNormal.sample(&mut rng);
            let mut y = cond.loading(j) * eta + sd * e;
            if j < N_DIF_ITEMS && g == 1 {
                y += cond.delta;
            }
            cont.push(y);
            resp.push(Some(categorize(y, &cuts)));
        }
        let mut row = Row::new(g, resp);
        if let Some(o) = &cond.outcome {
            let e: f64 = StandardNormal.sample(&mut rng);
            let mut y = o.beta * eta + o.noise_sd * e;
            if let Some(gamma) = o.covariate_effect {
                let x: f64 = StandardNormal.sample(&mut rng);
                y += gamma * x;
                row.covariates = Some(vec![x]);
            }
            row.outcome = Some(y);
        }
        rows.push(row);
        eta_all.push(eta);
        cont_all.push(cont);
    }
    let items = item_names()
        .into_iter()
        .enumerate()
        .map(|(j, n)| {
            let role = if j < N_DIF_ITEMS { ItemRole::ChildRearing } else { ItemRole::Anchor };
            Item::new(n, cond.n_categories, role)
        })
        .collect();
    let has_cov = cond.outcome.as_ref().is_some_and(|o| o.covariate_effect.is_some());
    let data = OrdinalDataset {
        items,
        groups: GROUP_LABELS.iter().map(|s| s.to_string()).collect(),
        rows,
        covariate_names: if has_cov { vec!["covariate".into()] } else { Vec::new() },
    };
    Ok((data, LatentDraws { eta: eta_all, continuous: cont_all }))
}

/// Standardized difference in mean item scores, focal minus reference.
pub fn estimate_scale(dataset: &OrdinalDataset, cond: &SimCondition) -> Result<f64> {
    scale_difference(dataset, &cond.scale_items.names(), cond.scale_metric)
}

pub fn scale_difference(dataset: &OrdinalDataset, items: &[String], metric: ScaleMetric) -> Result<f64> {
    if dataset.n_groups() != 2 {
        return Err(Error::InvalidArgument("scale difference needs exactly 2 groups".into()));
    }
    let cols: Vec<usize> = items
        .iter()
        .map(|n| dataset.item_index(n).ok_or_else(|| Error::InvalidSpec(format!("item {n} not present in dataset"))))
        .collect::<Result<_>>()?;
    let k = cols.len();
    // Per group: count, item sums, item cross-products (complete rows only).
    let mut n = [0usize; 2];
    let mut sums = vec![vec![0.0; k]; 2];
    let mut cross = vec![vec![vec![0.0; k]; k]; 2];
    for r in &dataset.rows {
        let vals: Option<Vec<f64>> = cols.iter().map(|&c| r.responses[c].map(f64::from)).collect();
        let Some(v) = vals else { continue };
        let g = r.group;
        n[g] += 1;
        for a in 0..k {
            sums[g][a] += v[a];
            for b in 0..k {
                cross[g][a][b] += v[a] * v[b];
            }
        }
    }
    if n.iter().any(|&c| c < 2) {
        return Err(Error::InvalidArgument("each group needs at least 2 complete rows".into()));
    }
    // Pooled within-group covariance of the items.
    let dfree = (n[0] + n[1] - 2) as f64;
    let mut cov = vec![vec![0.0; k]; k];
    for g in 0..2 {
        let ng = n[g] as f64;
        for a in 0..k {
            for b in 0..k {
                cov[a][b] += (cross[g][a][b] - sums[g][a] * sums[g][b] / ng) / dfree;
            }
        }
    }
    let total_var: f64 = cov.iter().flatten().sum();
    let kf = k as f64;
    let score_var = total_var / (kf * kf);
    if !(score_var > 1e-300) {
        return Err(Error::ZeroVariance);
    }
    let mean = |g: usize| sums[g].iter().sum::<f64>() / (kf * n[g] as f64);
    let mut est = (mean(1) - mean(0)) / score_var.sqrt();
    if metric == ScaleMetric::Disattenuated {
        if k < 2 {
            return Err(Error::InvalidArgument("reliability needs at least 2 items".into()));
        }
        let item_var: f64 = (0..k).map(|a| cov[a][a]).sum();
        let alpha = kf / (kf - 1.0) * (1.0 - item_var / total_var);
        if !(alpha > 0.0) {
            return Err(Error::InvalidArgument(format!("non-positive scale reliability ({alpha:.3})")));
        }
        est /= alpha.sqrt();
    }
    Ok(est)
}

/// Fitted latent gap, or `None` when the fit did not converge.
pub type GapEstimate = Option<f64>;

/// μ̂ of the focal group under full scalar invariance on `cond.full_scalar_items`.
pub fn estimate_full_scalar(dataset: &OrdinalDataset, cond: &SimCondition) -> Result<GapEstimate> {
    let spec = ModelSpec::new(dataset, ConstraintLevel::Scalar).with_items(&cond.full_scalar_items.names());
    focal_mean(dataset, &spec)
}

/// μ̂ of the focal group under partial scalar invariance anchored on the
/// dataset's anchor items.
pub fn estimate_partial_anchor(dataset: &OrdinalDataset) -> Result<GapEstimate> {
    let anchors: Vec<String> =
        dataset.items.iter().filter(|i| i.role == ItemRole::Anchor).map(|i| i.name.clone()).collect();
    estimate_partial_anchor_with(dataset, &anchors)
}

pub fn estimate_partial_anchor_with<S: AsRef<str>>(dataset: &OrdinalDataset, anchors: &[S]) -> Result<GapEstimate> {
    let spec = ModelSpec::new(dataset, ConstraintLevel::PartialScalarAnchor).with_anchors(anchors);
    focal_mean(dataset, &spec)
}

fn focal_mean(dataset: &OrdinalDataset, spec: &ModelSpec) -> Result<GapEstimate> {
    let f = fit_with(dataset, spec, &FitOptions::fast())?;
    let r = f.reference();
    let focal = (0..dataset.n_groups()).find(|&g| g != r).ok_or(Error::TooFewGroups(dataset.n_groups()))?;
    Ok(f.converged.then(|| f.params.latent_mean[focal]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Scale,
    FullScalar,
    PartialAnchor,
}

impl Estimator {
    pub const ALL: [Estimator; 3] = [Estimator::Scale, Estimator::FullScalar, Estimator::PartialAnchor];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::Scale => "scale",
            Estimator::FullScalar => "full_scalar",
            Estimator::PartialAnchor => "partial_anchor",
        }
    }

    fn run(self, data: &OrdinalDataset, cond: &SimCondition) -> GapEstimate {
        let r = match self {
            Estimator::Scale => estimate_scale(data, cond).map(Some),
            Estimator::FullScalar => estimate_full_scalar(data, cond),
            Estimator::PartialAnchor => estimate_partial_anchor(data),
        };
        r.ok().flatten()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub condition: usize,
    pub rep: usize,
    pub estimator: Estimator,
    /// `None` for a failed or non-converged estimate.
    pub estimate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportCell {
    pub condition: usize,
    pub delta: f64,
    pub lambda: f64,
    pub resid_var: f64,
    pub k: u8,
    pub n: usize,
    pub estimator: Estimator,
    /// Over converged replications; absent when none converged.
    pub mean: Option<f64>,
    pub bias: Option<f64>,
    pub sd: Option<f64>,
    pub conv_rate: f64,
    pub replications: usize,
    pub n_converged: usize,
    /// Convergence rate below one half.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub conditions: Vec<SimCondition>,
    pub cells: Vec<ReportCell>,
    pub records: Vec<ReplicationRecord>,
    /// How the scale estimator was put on the latent metric, per condition.
    pub scale_metric: Vec<ScaleMetric>,
}

impl SimulationReport {
    pub fn cell(&self, condition: usize, estimator: Estimator) -> Option<&ReportCell> {
        self.cells.iter().find(|c| c.condition == condition && c.estimator == estimator)
    }

    pub fn any_flagged(&self) -> bool {
        self.cells.iter().any(|c| c.flagged)
    }
}

/// Every condition × replication × estimator. Replications run in parallel;
/// results are gathered in (condition, rep, estimator) order.
pub fn run_grid(conditions: &[SimCondition]) -> Result<SimulationReport> {
    for c in conditions {
        c.check()?;
    }
    let jobs: Vec<(usize, usize)> = conditions
        .iter()
        .enumerate()
        .flat_map(|(ci, c)| (0..c.replications).map(move |r| (ci, r)))
        .collect();
    let results: Vec<Result<[GapEstimate; 3]>> = jobs
        .par_iter()
        .map(|&(ci, rep)| {
            let cond = &conditions[ci];
            let data = generate_replication(cond, rep)?;
            Ok(Estimator::ALL.map(|e| e.run(&data, cond)))
        })
        .collect();
    let mut records = Vec::with_capacity(jobs.len() * 3);
    for (&(ci, rep), res) in jobs.iter().zip(results) {
        for (e, est) in Estimator::ALL.into_iter().zip(res?) {
            records.push(ReplicationRecord { condition: ci, rep, estimator: e, estimate: est });
        }
    }
    let mut cells = Vec::with_capacity(conditions.len() * 3);
    for (ci, cond) in conditions.iter().enumerate() {
        for e in Estimator::ALL {
            let vals: Vec<f64> = records
                .iter()
                .filter(|r| r.condition == ci && r.estimator == e)
                .filter_map(|r| r.estimate)
                .collect();
            let m = vals.len();
            let mean = (m > 0).then(|| vals.iter().sum::<f64>() / m as f64);
            let sd = mean.filter(|_| m > 1).map(|mu| {
                (vals.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (m - 1) as f64).sqrt()
            });
            let conv_rate = m as f64 / cond.replications as f64;
            cells.push(ReportCell {
                condition: ci,
                delta: cond.delta,
                lambda: cond.lambda,
                resid_var: cond.resid_var,
                k: cond.n_categories,
                n: cond.n,
                estimator: e,
                mean,
                bias: mean.map(|mu| mu - cond.true_gap),
                sd,
                conv_rate,
                replications: cond.replications,
                n_converged: m,
                flagged: conv_rate < 0.5,
            });
        }
    }
    Ok(SimulationReport {
        conditions: conditions.to_vec(),
        cells,
        records,
        scale_metric: conditions.iter().map(|c| c.scale_metric).collect(),
    })
}

/// δ ∈ {0, 0.1, 0.3, 0.5} × λ ∈ {0.8, 0.9, 1.0} × σ² ∈ {0.25, 1} × K ∈ {4, 7},
/// N = 1000, 500 replications each.
pub fn default_grid(base_seed: u64) -> Vec<SimCondition> {
    let mut out = Vec::with_capacity(48);
    for &delta in &[0.0, 0.1, 0.3, 0.5] {
        for &lambda in &[0.8, 0.9, 1.0] {
            for &resid_var in &[0.25, 1.0] {
                for &k in &[4u8, 7] {
                    out.push(SimCondition::new(delta, lambda, resid_var, k, 1000).with_replications(500, base_seed));
                }
            }
        }
    }
    out
}

pub const DEMO_SEED: u64 = 20_240_611;

/// Condition behind the shipped demo file: 2000 rows, δ = 0.3, λ = 0.9,
/// four categories, and an outcome `Y = 0.5·η + 0.3·X + N(0, 0.5²)`.
pub fn demo_condition(seed: u64) -> SimCondition {
    let mut c = SimCondition::new(0.3, 0.9, 1.0, 4, 2000).with_replications(1, seed);
    c.outcome = Some(OutcomeModel { beta: 0.5, covariate_effect: Some(0.3), noise_sd: 0.5 });
    c
}

pub fn demo_dataset(seed: u64) -> Result<OrdinalDataset> {
    generate_replication(&demo_condition(seed), 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_category_boundaries() {
        let cuts = cut_points(4);
        assert_eq!(categorize(-1.0, &cuts), 1);
        assert_eq!(categorize(-0.999, &cuts), 2);
        assert_eq!(categorize(0.0, &cuts), 2);
        assert_eq!(categorize(0.3, &cuts), 3);
        assert_eq!(categorize(1.0, &cuts), 3);
        assert_eq!(categorize(1.2, &cuts), 4);
    }

    #[test]
    fn seven_category_cuts_span_range() {
        let c = cut_points(7);
        assert_eq!(c.len(), 6);
        assert_eq!((c[0], c[5]), (-1.5, 1.5));
        assert!((c[1] - c[0] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn replications_are_reproducible_and_distinct() {
        let c = SimCondition::new(0.3, 0.9, 1.0, 4, 200).with_replications(2, 7);
        let a = generate_replication(&c, 0).unwrap();
        assert_eq!(a, generate_replication(&c, 0).unwrap());
        assert_ne!(a, generate_replication(&c, 1).unwrap());
        let mut other = c.clone();
        other.base_seed = 8;
        assert_ne!(a, generate_replication(&other, 0).unwrap());
        assert_eq!(a.group_sizes(), vec![100, 100]);
        a.clone().validate().unwrap();
    }

    #[test]
    fn estimator_options_share_data() {
        let c = SimCondition::new(0.3, 0.9, 1.0, 4, 100);
        let mut d = c.clone();
        d.scale_items = ItemSet::All8;
        d.scale_metric = ScaleMetric::PooledSd;
        assert_eq!(generate_replication(&c, 3).unwrap(), generate_replication(&d, 3).unwrap());
    }

    #[test]
    fn copied_groups_give_zero_scale_difference() {
        let c = SimCondition::new(0.0, 0.9, 1.0, 4, 400);
        let mut d = generate_replication(&c, 0).unwrap();
        let reference: Vec<Row> = d.rows.iter().filter(|r| r.group == 0).cloned().collect();
        d.rows = reference.iter().cloned().chain(reference.iter().map(|r| Row { group: 1, ..r.clone() })).collect();
        assert_eq!(estimate_scale(&d, &c).unwrap(), 0.0);
    }

    #[test]
    fn constant_scores_are_rejected() {
        let c = SimCondition::new(0.0, 0.9, 1.0, 4, 10);
        let mut d = generate_replication(&c, 0).unwrap();
        d.rows.iter_mut().for_each(|r| r.responses = vec![Some(2); N_ITEMS]);
        assert!(matches!(estimate_scale(&d, &c), Err(Error::ZeroVariance)));
    }

    #[test]
    fn default_grid_has_48_conditions() {
        let g = default_grid(1);
        assert_eq!(g.len(), 48);
        assert!(g.iter().all(|c| c.replications == 500 && c.n == 1000));
    }

    #[test]
    fn grid_shape_one_condition() {
        let c = SimCondition::new(0.0, 0.9, 1.0, 4, 300).with_replications(1, 3);
        let r = run_grid(&[c]).unwrap();
        assert_eq!(r.cells.len(), 3);
        assert_eq!(r.records.len(), 3);
        for cell in &r.cells {
            if let (Some(m), Some(b)) = (cell.mean, cell.bias) {
                assert_eq!(b, m - 0.2);
            }
        }
    }
}
