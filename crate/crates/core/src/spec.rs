//! Model specification: which items enter, which are anchors, and how
//! strongly parameters are equated across groups.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::OrdinalDataset;
use crate::error::{Error, Result};

pub const DEFAULT_QUADRATURE_POINTS: usize = 31;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintLevel {
    Configural,
    Metric,
    Scalar,
    ScalarFv,
    PartialScalarAnchor,
}

impl ConstraintLevel {
    pub const LADDER: [ConstraintLevel; 4] = [
        ConstraintLevel::Configural,
        ConstraintLevel::Metric,
        ConstraintLevel::Scalar,
        ConstraintLevel::ScalarFv,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ConstraintLevel::Configural => "configural",
            ConstraintLevel::Metric => "metric",
            ConstraintLevel::Scalar => "scalar",
            ConstraintLevel::ScalarFv => "scalar_fv",
            ConstraintLevel::PartialScalarAnchor => "partial_scalar_anchor",
        }
    }

    /// Whether the non-reference latent means are free parameters.
    pub fn frees_latent_mean(self) -> bool {
        matches!(self, ConstraintLevel::Scalar | ConstraintLevel::PartialScalarAnchor)
    }
}

impl fmt::Display for ConstraintLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ConstraintLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "configural" => ConstraintLevel::Configural,
            "metric" => ConstraintLevel::Metric,
            "scalar" => ConstraintLevel::Scalar,
            "scalar_fv" => ConstraintLevel::ScalarFv,
            "partial_scalar_anchor" | "partial" => ConstraintLevel::PartialScalarAnchor,
            other => return Err(Error::InvalidSpec(format!("unknown constraint level {other}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub item_names: Vec<String>,
    pub anchor_set: Vec<String>,
    pub constraint_level: ConstraintLevel,
    pub reference_group: String,
    pub quadrature_points: usize,
    pub include_structural: bool,
    /// Estimate one structural slope/intercept/residual for all groups.
    #[serde(default)]
    pub pooled_structural: bool,
    /// At `scalar_fv`, also tie the latent variances (the default ties only means).
    #[serde(default)]
    pub fv_tie_variance: bool,
    /// Loadings held at a fixed value in every group, by item name.
    #[serde(default)]
    pub fixed_loadings: Vec<(String, f64)>,
}

impl ModelSpec {
    /// Spec over every item of `dataset` with the first group as reference.
    pub fn new(dataset: &OrdinalDataset, level: ConstraintLevel) -> Self {
        Self {
            item_names: dataset.items.iter().map(|i| i.name.clone()).collect(),
            anchor_set: Vec::new(),
            constraint_level: level,
            reference_group: dataset.groups.first().cloned().unwrap_or_default(),
            quadrature_points: DEFAULT_QUADRATURE_POINTS,
            include_structural: false,
            pooled_structural: false,
            fv_tie_variance: false,
            fixed_loadings: Vec::new(),
        }
    }

    pub fn with_anchors<S: AsRef<str>>(mut self, anchors: &[S]) -> Self {
        self.anchor_set = anchors.iter().map(|s| s.as_ref().to_owned()).collect();
        self
    }

    pub fn with_level(mut self, level: ConstraintLevel) -> Self {
        self.constraint_level = level;
        self
    }

    pub fn with_items<S: AsRef<str>>(mut self, items: &[S]) -> Self {
        self.item_names = items.iter().map(|s| s.as_ref().to_owned()).collect();
        self
    }

    pub fn with_quadrature(mut self, points: usize) -> Self {
        self.quadrature_points = points;
        self
    }

    /// Checks the spec's own invariants and its consistency with `dataset`.
    pub fn check(&self, dataset: &OrdinalDataset) -> Result<()> {
        if self.quadrature_points < 7 || self.quadrature_points % 2 == 0 {
            return Err(Error::InvalidSpec(format!(
                "quadrature_points must be odd and ≥ 7 (got {})",
                self.quadrature_points
            )));
        }
        if self.item_names.is_empty() {
            return Err(Error::InvalidSpec("no items in model".into()));
        }
        for (k, name) in self.item_names.iter().enumerate() {
            if dataset.item_index(name).is_none() {
                return Err(Error::InvalidSpec(format!("item {name} not present in dataset")));
            }
            if self.item_names[..k].contains(name) {
                return Err(Error::InvalidSpec(format!("item {name} listed twice")));
            }
        }
        for a in &self.anchor_set {
            if !self.item_names.contains(a) {
                return Err(Error::InvalidSpec(format!("anchor item {a} not present in dataset")));
            }
        }
        if self.constraint_level == ConstraintLevel::PartialScalarAnchor && self.anchor_set.is_empty()
        {
            return Err(Error::InvalidSpec(
                "constraint level partial_scalar_anchor requires a nonempty anchor_set".into(),
            ));
        }
        if dataset.group_index(&self.reference_group).is_none() {
            return Err(Error::InvalidSpec(format!(
                "reference group {} is not a dataset group",
                self.reference_group
            )));
        }
        for (name, v) in &self.fixed_loadings {
            if !self.item_names.contains(name) || !v.is_finite() {
                return Err(Error::InvalidSpec(format!("bad fixed loading for {name}")));
            }
        }
        if self.include_structural && !dataset.has_outcome() {
            return Err(Error::InvalidSpec("structural model requires an outcome column".into()));
        }
        Ok(())
    }

    pub fn reference_index(&self, dataset: &OrdinalDataset) -> Result<usize> {
        dataset.group_index(&self.reference_group).ok_or_else(|| {
            Error::InvalidSpec(format!("reference group {} is not a dataset group", self.reference_group))
        })
    }

    /// Dataset column indices of the model's items, in model order.
    pub fn item_columns(&self, dataset: &OrdinalDataset) -> Result<Vec<usize>> {
        self.item_names
            .iter()
            .map(|n| {
                dataset
                    .item_index(n)
                    .ok_or_else(|| Error::InvalidSpec(format!("item {n} not present in dataset")))
            })
            .collect()
    }

    pub fn is_anchor(&self, item: &str) -> bool {
        self.anchor_set.iter().any(|a| a == item)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Item, ItemRole, Row};

    fn ds() -> OrdinalDataset {
        OrdinalDataset {
            items: vec![Item::new("a", 2, ItemRole::Anchor), Item::new("b", 3, ItemRole::ChildRearing)],
            groups: vec!["g0".into(), "g1".into()],
            rows: vec![Row::new(0, vec![Some(1), Some(2)]), Row::new(1, vec![Some(2), Some(3)])],
            covariate_names: vec![],
        }
    }

    #[test]
    fn quadrature_must_be_odd_and_at_least_seven() {
        let d = ds();
        assert!(ModelSpec::new(&d, ConstraintLevel::Metric).with_quadrature(5).check(&d).is_err());
        assert!(ModelSpec::new(&d, ConstraintLevel::Metric).with_quadrature(8).check(&d).is_err());
        assert!(ModelSpec::new(&d, ConstraintLevel::Metric).with_quadrature(7).check(&d).is_ok());
    }

    #[test]
    fn partial_needs_anchors_that_exist() {
        let d = ds();
        let s = ModelSpec::new(&d, ConstraintLevel::PartialScalarAnchor);
        assert!(s.check(&d).is_err());
        assert!(s.clone().with_anchors(&["zz"]).check(&d).is_err());
        assert!(s.with_anchors(&["a"]).check(&d).is_ok());
    }

    #[test]
    fn level_names_round_trip() {
        for l in ConstraintLevel::LADDER.into_iter().chain([ConstraintLevel::PartialScalarAnchor]) {
            assert_eq!(l.name().parse::<ConstraintLevel>().unwrap(), l);
        }
    }
}
