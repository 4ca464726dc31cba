//! Invariance ladders: nested fits from configural upward, each compared with
//! the level before it by a likelihood-ratio test.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::data::OrdinalDataset;
use crate::error::{Error, Result};
use crate::estimator::{fit_with, lrt, FitOptions, FitResult};
use crate::spec::{ConstraintLevel, ModelSpec};

/// Significance level behind the pass/fail annotation.
pub const VERDICT_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderRow {
    pub level: ConstraintLevel,
    /// Sample thresholds and polychoric-type pairs minus free parameters.
    pub df_model: i64,
    pub n_free: usize,
    pub loglik: f64,
    pub converged: bool,
    /// Comparison with the previous row; absent on the first row and
    /// whenever either fit failed to converge.
    pub delta_chisq: Option<f64>,
    pub delta_df: Option<usize>,
    pub p_value: Option<f64>,
    /// `p ≥ VERDICT_ALPHA`. Annotation only.
    pub holds: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderResult {
    pub items: Vec<String>,
    pub reference_group: String,
    pub rows: Vec<LadderRow>,
    #[serde(skip)]
    pub fits: Vec<FitResult>,
}

impl LadderResult {
    pub fn row(&self, level: ConstraintLevel) -> Option<&LadderRow> {
        self.rows.iter().find(|r| r.level == level)
    }

    pub fn fit(&self, level: ConstraintLevel) -> Option<&FitResult> {
        self.fits.iter().find(|f| f.spec_echo.constraint_level == level)
    }
}

/// Number of first- and second-order sample statistics: per group, every
/// item threshold plus one association per item pair.
pub fn sample_statistics(dataset: &OrdinalDataset, spec: &ModelSpec) -> Result<usize> {
    let cols = spec.item_columns(dataset)?;
    let thresholds: usize = cols.iter().map(|&c| usize::from(dataset.items[c].n_categories) - 1).sum();
    let pairs = cols.len() * cols.len().saturating_sub(1) / 2;
    Ok(dataset.n_groups() * (thresholds + pairs))
}

fn run_ladder(
    dataset: &OrdinalDataset,
    base: &ModelSpec,
    levels: &[ConstraintLevel],
    opts: &FitOptions,
) -> Result<LadderResult> {
    if dataset.n_groups() < 2 {
        return Err(Error::TooFewGroups(dataset.n_groups()));
    }
    let stats = sample_statistics(dataset, base)? as i64;
    let mut rows: Vec<LadderRow> = Vec::new();
    let mut fits: Vec<FitResult> = Vec::new();
    for &level in levels {
        let spec = base.clone().with_level(level);
        let mut o = opts.clone();
        if o.start.is_none() {
            o.start = fits.last().filter(|f| f.converged).map(|f| f.params.clone());
        }
        let f = fit_with(dataset, &spec, &o)?;
        if !f.converged {
            warn!("{level} fit did not converge after {} iterations", f.iterations);
        }
        let mut row = LadderRow {
            level,
            df_model: stats - f.n_free as i64,
            n_free: f.n_free,
            loglik: f.loglik,
            converged: f.converged,
            delta_chisq: None,
            delta_df: None,
            p_value: None,
            holds: None,
        };
        if let Some(prev) = fits.last() {
            if prev.converged && f.converged {
                let t = lrt(&f, prev)?;
                if t.raw_delta_chisq < -1e-6 {
                    warn!("{level}: restricted fit exceeds its parent by {:.3e}", -t.raw_delta_chisq / 2.0);
                }
                row.delta_chisq = Some(t.delta_chisq);
                row.delta_df = Some(t.delta_df);
                row.p_value = Some(t.p_value);
                row.holds = Some(t.p_value >= VERDICT_ALPHA);
            }
        }
        rows.push(row);
        fits.push(f);
    }
    Ok(LadderResult {
        items: base.item_names.clone(),
        reference_group: base.reference_group.clone(),
        rows,
        fits,
    })
}

/// Configural → metric → scalar on the anchor items alone.
pub fn run_anchor_validation<S: AsRef<str>>(dataset: &OrdinalDataset, anchor_items: &[S]) -> Result<LadderResult> {
    run_anchor_validation_with(dataset, anchor_items, &ModelSpec::new(dataset, ConstraintLevel::Configural))
}

/// As [`run_anchor_validation`], taking reference group and quadrature from `base`.
pub fn run_anchor_validation_with<S: AsRef<str>>(
    dataset: &OrdinalDataset,
    anchor_items: &[S],
    base: &ModelSpec,
) -> Result<LadderResult> {
    if dataset.n_groups() < 2 {
        return Err(Error::TooFewGroups(dataset.n_groups()));
    }
    let anchors = dataset_order(dataset, anchor_items)?;
    if anchors.len() < 2 {
        return Err(Error::InvalidSpec("anchor validation needs at least 2 anchor items".into()));
    }
    let mut spec = base.clone().with_items(&anchors).with_anchors(&anchors);
    spec.include_structural = false;
    spec.fixed_loadings.retain(|(n, _)| anchors.contains(n));
    run_ladder(
        dataset,
        &spec,
        &[ConstraintLevel::Configural, ConstraintLevel::Metric, ConstraintLevel::Scalar],
        &FitOptions::fast(),
    )
}

/// Configural → metric → scalar → scalar with equal latent means, over
/// `spec.item_names`. The level in `spec` is ignored.
pub fn run_invariance_ladder(dataset: &OrdinalDataset, spec: &ModelSpec) -> Result<LadderResult> {
    let mut base = spec.clone();
    base.include_structural = false;
    run_ladder(dataset, &base, &ConstraintLevel::LADDER, &FitOptions::fast())
}

/// Partial scalar invariance identified through `anchor_items`, with the
/// first group as reference. Returned warnings are also logged.
pub fn build_partial_spec<S: AsRef<str>>(
    dataset: &OrdinalDataset,
    anchor_items: &[S],
) -> Result<(ModelSpec, Vec<String>)> {
    if anchor_items.is_empty() {
        return Err(Error::InvalidSpec("anchor set is empty".into()));
    }
    let anchors = dataset_order(dataset, anchor_items)?;
    let spec = ModelSpec::new(dataset, ConstraintLevel::PartialScalarAnchor).with_anchors(&anchors);
    spec.check(dataset)?;
    let mut warnings = Vec::new();
    if anchors.len() == 1 {
        warnings.push(format!("identification rests on a single anchor item ({})", anchors[0]));
    }
    for w in &warnings {
        warn!("{w}");
    }
    Ok((spec, warnings))
}

/// Names in dataset column order, rejecting unknown and repeated items.
fn dataset_order<S: AsRef<str>>(dataset: &OrdinalDataset, names: &[S]) -> Result<Vec<String>> {
    let mut idx = Vec::with_capacity(names.len());
    for n in names {
        let i = dataset
            .item_index(n.as_ref())
            .ok_or_else(|| Error::InvalidSpec(format!("anchor item {} not present in dataset", n.as_ref())))?;
        if idx.contains(&i) {
            return Err(Error::InvalidSpec(format!("anchor item {} listed twice", n.as_ref())));
        }
        idx.push(i);
    }
    idx.sort_unstable();
    Ok(idx.into_iter().map(|i| dataset.items[i].name.clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::build_constraints;
    use crate::data::{Item, ItemRole, Row};
    use crate::params::Coord;

    fn eight_items() -> OrdinalDataset {
        let items = (0..8)
            .map(|j| {
                let role = if j < 4 { ItemRole::ChildRearing } else { ItemRole::Anchor };
                Item::new(format!("i{}", j + 1), 4, role)
            })
            .collect();
        OrdinalDataset {
            items,
            groups: vec!["r".into(), "f".into()],
            rows: (0..8).map(|i| Row::new(i % 2, vec![Some((i % 4) as u8 + 1); 8])).collect(),
            covariate_names: vec![],
        }
    }

    #[test]
    fn partial_spec_frees_non_anchor_thresholds() {
        let d = eight_items();
        let (spec, warnings) = build_partial_spec(&d, &["i8", "i5", "i6", "i7"]).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(spec.reference_group, "r");
        assert_eq!(spec.anchor_set, ["i5", "i6", "i7", "i8"]);
        let cs = build_constraints(&spec, &d).unwrap();
        for j in 0..8 {
            let tied = cs.tie_target(Coord::Threshold { group: 1, item: j, k: 0 }).is_some();
            assert_eq!(tied, j >= 4, "item {j}");
        }
    }

    #[test]
    fn all_anchors_match_scalar_counts() {
        let d = eight_items();
        let names: Vec<String> = d.items.iter().map(|i| i.name.clone()).collect();
        let (spec, _) = build_partial_spec(&d, &names).unwrap();
        let partial = build_constraints(&spec, &d).unwrap();
        let scalar = build_constraints(&spec.clone().with_level(ConstraintLevel::Scalar), &d).unwrap();
        assert_eq!(partial.n_free(), scalar.n_free());
        assert_eq!(partial.ties, scalar.ties);
    }

    #[test]
    fn single_anchor_warns() {
        let d = eight_items();
        let (_, w) = build_partial_spec(&d, &["i5"]).unwrap();
        assert_eq!(w.len(), 1);
        assert!(build_partial_spec::<&str>(&d, &[]).is_err());
    }

    #[test]
    fn one_group_is_rejected() {
        let mut d = eight_items();
        d.groups.truncate(1);
        d.rows.iter_mut().for_each(|r| r.group = 0);
        let e = run_anchor_validation(&d, &["i5", "i6"]).unwrap_err();
        assert!(e.to_string().contains("invariance requires ≥ 2 groups"));
    }

    #[test]
    fn eight_item_statistic_count() {
        let d = eight_items();
        let spec = ModelSpec::new(&d, ConstraintLevel::Configural);
        // Per group: 8·3 thresholds + 28 pairs.
        assert_eq!(sample_statistics(&d, &spec).unwrap(), 104);
        let cs = build_constraints(&spec, &d).unwrap();
        assert_eq!(104 - cs.n_free() as i64, 40);
    }
}
