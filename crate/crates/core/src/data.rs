//! Observed ordinal responses, grouped by respondent population.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemRole {
    ChildRearing,
    Anchor,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Item {
    pub name: String,
    pub n_categories: u8,
    pub role: ItemRole,
}

impl Item {
    pub fn new(name: impl Into<String>, n_categories: u8, role: ItemRole) -> Self {
        Self { name: name.into(), n_categories, role }
    }
}

/// One respondent. Responses are 1-based category codes, `None` when missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub group: usize,
    pub responses: Vec<Option<u8>>,
    pub outcome: Option<f64>,
    pub covariates: Option<Vec<f64>>,
}

impl Row {
    pub fn new(group: usize, responses: Vec<Option<u8>>) -> Self {
        Self { group, responses, outcome: None, covariates: None }
    }

    /// Outcome and covariates when this row can enter an outcome regression
    /// with `n_covariates` predictors.
    pub fn structural_obs(&self, n_covariates: usize) -> Option<(f64, &[f64])> {
        let y = self.outcome?;
        match (&self.covariates, n_covariates) {
            (_, 0) => Some((y, &[])),
            (Some(x), n) if x.len() == n => Some((y, x.as_slice())),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrdinalDataset {
    pub items: Vec<Item>,
    /// Group labels; index 0 is the default reference group.
    pub groups: Vec<String>,
    pub rows: Vec<Row>,
    /// Names of the covariate columns, when covariates are present.
    #[serde(default)]
    pub covariate_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ViolationKind {
    CategoryOutOfRange { code: u8, n_categories: u8 },
    TooFewCategories(u8),
    WrongResponseCount { expected: usize, found: usize },
    UnknownGroup(usize),
    EmptyGroup(String),
    TooFewGroups(usize),
    RaggedCovariates { expected: usize, found: usize },
    NonFiniteValue,
}

/// A single dataset problem, located by row and item where applicable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub row: Option<usize>,
    pub item: Option<String>,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(r) = self.row {
            write!(f, "row {r}: ")?;
        }
        if let Some(item) = &self.item {
            write!(f, "item {item}: ")?;
        }
        match &self.kind {
            ViolationKind::CategoryOutOfRange { code, n_categories } => {
                write!(f, "category {code} outside 1..={n_categories}")
            }
            ViolationKind::TooFewCategories(k) => write!(f, "{k} categories (need ≥ 2)"),
            ViolationKind::WrongResponseCount { expected, found } => {
                write!(f, "{found} responses, expected {expected}")
            }
            ViolationKind::UnknownGroup(g) => write!(f, "group index {g} out of range"),
            ViolationKind::EmptyGroup(label) => write!(f, "empty group \"{label}\""),
            ViolationKind::TooFewGroups(n) => write!(f, "{n} group(s), need ≥ 1"),
            ViolationKind::RaggedCovariates { expected, found } => {
                write!(f, "{found} covariates, expected {expected}")
            }
            ViolationKind::NonFiniteValue => write!(f, "non-finite outcome or covariate"),
        }
    }
}

impl OrdinalDataset {
    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn item_index(&self, name: &str) -> Option<usize> {
        self.items.iter().position(|it| it.name == name)
    }

    pub fn group_index(&self, label: &str) -> Option<usize> {
        self.groups.iter().position(|g| g == label)
    }

    pub fn n_covariates(&self) -> usize {
        self.rows.iter().find_map(|r| r.covariates.as_ref().map(Vec::len)).unwrap_or(0)
    }

    pub fn has_outcome(&self) -> bool {
        self.rows.iter().any(|r| r.outcome.is_some())
    }

    /// Row counts per group.
    pub fn group_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.groups.len()];
        for r in &self.rows {
            if let Some(s) = sizes.get_mut(r.group) {
                *s += 1;
            }
        }
        sizes
    }

    /// Dataset restricted to the named items, in the given order.
    pub fn select_items(&self, names: &[String]) -> Result<OrdinalDataset> {
        let idx = names
            .iter()
            .map(|n| {
                self.item_index(n)
                    .ok_or_else(|| Error::InvalidSpec(format!("item {n} not in dataset")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(OrdinalDataset {
            items: idx.iter().map(|&j| self.items[j].clone()).collect(),
            groups: self.groups.clone(),
            rows: self
                .rows
                .iter()
                .map(|r| Row {
                    group: r.group,
                    responses: idx.iter().map(|&j| r.responses[j]).collect(),
                    outcome: r.outcome,
                    covariates: r.covariates.clone(),
                })
                .collect(),
            covariate_names: self.covariate_names.clone(),
        })
    }

    /// Checks every dataset invariant, returning the dataset unchanged when all hold.
    pub fn validate(self) -> Result<Self> {
        let violations = self.violations();
        if violations.is_empty() {
            Ok(self)
        } else {
            Err(Error::InvalidDataset(violations))
        }
    }

    /// Complete list of invariant violations (empty when valid).
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let at = |row: Option<usize>, item: Option<&str>, kind| Violation {
            row,
            item: item.map(str::to_owned),
            kind,
        };

        // Single-group data is valid here; the invariance routines require two or more.
        if self.groups.is_empty() {
            out.push(at(None, None, ViolationKind::TooFewGroups(0)));
        }
        for it in &self.items {
            if it.n_categories < 2 {
                out.push(at(None, Some(&it.name), ViolationKind::TooFewCategories(it.n_categories)));
            }
        }

        let n_cov = self.rows.iter().find_map(|r| r.covariates.as_ref().map(Vec::len));
        let mut populated = vec![false; self.groups.len()];
        for (i, row) in self.rows.iter().enumerate() {
            if row.group >= self.groups.len() {
                out.push(at(Some(i), None, ViolationKind::UnknownGroup(row.group)));
            }
            if row.responses.len() != self.items.len() {
                out.push(at(
                    Some(i),
                    None,
                    ViolationKind::WrongResponseCount {
                        expected: self.items.len(),
                        found: row.responses.len(),
                    },
                ));
                continue;
            }
            for (item, resp) in self.items.iter().zip(&row.responses) {
                if let Some(code) = *resp {
                    if code < 1 || code > item.n_categories {
                        out.push(at(
                            Some(i),
                            Some(&item.name),
                            ViolationKind::CategoryOutOfRange {
                                code,
                                n_categories: item.n_categories,
                            },
                        ));
                    }
                }
            }
            if row.responses.iter().any(Option::is_some) {
                if let Some(p) = populated.get_mut(row.group) {
                    *p = true;
                }
            }
            if let (Some(expected), Some(c)) = (n_cov, &row.covariates) {
                if c.len() != expected {
                    out.push(at(
                        Some(i),
                        None,
                        ViolationKind::RaggedCovariates { expected, found: c.len() },
                    ));
                }
            }
            let finite = row.outcome.is_none_or(f64::is_finite)
                && row.covariates.as_ref().is_none_or(|c| c.iter().all(|v| v.is_finite()));
            if !finite {
                out.push(at(Some(i), None, ViolationKind::NonFiniteValue));
            }
        }
        for (label, ok) in self.groups.iter().zip(&populated) {
            if !ok {
                out.push(at(None, None, ViolationKind::EmptyGroup(label.clone())));
            }
        }
        out
    }
}

/// Validates a raw dataset: identity on success, the full violation list otherwise.
pub fn validate_dataset(raw: OrdinalDataset) -> Result<OrdinalDataset> {
    raw.validate()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> OrdinalDataset {
        let items = (1..=4).map(|j| Item::new(format!("i{j}"), 4, ItemRole::ChildRearing)).collect();
        let rows = vec![
            Row::new(0, vec![Some(1), Some(2), Some(3), Some(4)]),
            Row::new(0, vec![Some(4), None, Some(1), Some(2)]),
            Row::new(1, vec![Some(2), Some(2), Some(2), Some(2)]),
        ];
        OrdinalDataset {
            items,
            groups: vec!["White".into(), "Black".into()],
            rows,
            covariate_names: vec![],
        }
    }

    #[test]
    fn valid_dataset_is_returned_unchanged() {
        let d = toy();
        assert_eq!(validate_dataset(d.clone()).unwrap(), d);
    }

    #[test]
    fn out_of_range_code_names_row_and_item() {
        let mut d = toy();
        d.rows[1].responses[2] = Some(5);
        let Err(Error::InvalidDataset(v)) = validate_dataset(d) else { panic!() };
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].row, Some(1));
        assert_eq!(v[0].item.as_deref(), Some("i3"));
        assert!(matches!(v[0].kind, ViolationKind::CategoryOutOfRange { code: 5, .. }));
    }

    #[test]
    fn empty_group_is_reported() {
        let mut d = toy();
        d.rows.retain(|r| r.group == 0);
        let v = d.violations();
        assert!(v.iter().any(|x| x.kind == ViolationKind::EmptyGroup("Black".into())));
        assert!(v.iter().any(|x| x.to_string().contains("empty group")));
    }

    #[test]
    fn ragged_covariates_and_all_errors_collected() {
        let mut d = toy();
        d.rows[0].covariates = Some(vec![1.0, 2.0]);
        d.rows[2].covariates = Some(vec![1.0]);
        d.rows[2].responses[0] = Some(0);
        let v = d.violations();
        assert_eq!(v.len(), 2);
        assert!(v.iter().any(|x| matches!(x.kind, ViolationKind::RaggedCovariates { .. })));
    }

    #[test]
    fn group_with_only_missing_responses_counts_as_empty() {
        let mut d = toy();
        d.rows[2].responses = vec![None; 4];
        assert!(d.violations().iter().any(|x| matches!(x.kind, ViolationKind::EmptyGroup(_))));
    }
}
