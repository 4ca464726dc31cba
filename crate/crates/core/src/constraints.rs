//! Cross-group equality ties and fixed coordinates for each invariance level.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::data::OrdinalDataset;
use crate::error::{Error, Result};
use crate::params::Coord;
use crate::spec::{ConstraintLevel, ModelSpec};

/// Shape of the parameter space.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub n_groups: usize,
    /// Category count per model item.
    pub categories: Vec<u8>,
    /// Covariate count when the structural part is present.
    pub structural_covariates: Option<usize>,
}

impl ModelDims {
    pub fn n_items(&self) -> usize {
        self.categories.len()
    }

    /// Every coordinate, in canonical order.
    pub fn coords(&self) -> Vec<Coord> {
        let mut out = Vec::new();
        for group in 0..self.n_groups {
            for (item, &k) in self.categories.iter().enumerate() {
                out.push(Coord::Loading { group, item });
                for k in 0..usize::from(k) - 1 {
                    out.push(Coord::Threshold { group, item, k });
                }
                out.push(Coord::Residual { group, item });
            }
        }
        for group in 0..self.n_groups {
            out.push(Coord::Mean { group });
            out.push(Coord::Variance { group });
        }
        if let Some(nc) = self.structural_covariates {
            for group in 0..self.n_groups {
                out.push(Coord::StructIntercept { group });
                out.push(Coord::StructSlope { group });
                for c in 0..nc {
                    out.push(Coord::StructCovariate { group, c });
                }
                out.push(Coord::StructResidual { group });
            }
        }
        out
    }
}

/// `coord` equals `target` (the same coordinate in the reference group).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Tie {
    pub coord: Coord,
    pub target: Coord,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fixed {
    pub coord: Coord,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    pub dims: ModelDims,
    pub reference: usize,
    pub ties: Vec<Tie>,
    pub fixed: Vec<Fixed>,
}

impl ConstraintSet {
    /// Coordinates that are neither tied nor fixed, in canonical order.
    pub fn free_coords(&self) -> Vec<Coord> {
        let tied: BTreeSet<Coord> = self.ties.iter().map(|t| t.coord).collect();
        let fixed: BTreeSet<Coord> = self.fixed.iter().map(|f| f.coord).collect();
        self.dims
            .coords()
            .into_iter()
            .filter(|c| !tied.contains(c) && !fixed.contains(c))
            .collect()
    }

    pub fn n_free(&self) -> usize {
        self.free_coords().len()
    }

    pub fn fixed_value(&self, c: Coord) -> Option<f64> {
        self.fixed.iter().find(|f| f.coord == c).map(|f| f.value)
    }

    pub fn tie_target(&self, c: Coord) -> Option<Coord> {
        self.ties.iter().find(|t| t.coord == c).map(|t| t.target)
    }

    /// True when every equality imposed by `unrestricted` is also imposed here.
    ///
    /// Fixed latent means/variances are identification choices, not
    /// restrictions, so nesting is judged on cross-group ties alone.
    pub fn is_nested_in(&self, unrestricted: &ConstraintSet) -> bool {
        if self.dims != unrestricted.dims || self.reference != unrestricted.reference {
            return false;
        }
        let mine: BTreeSet<Tie> = self.ties.iter().copied().collect();
        unrestricted.ties.iter().all(|t| mine.contains(t))
    }

    /// Checks the tie/fixed bookkeeping invariants.
    pub fn check(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for t in &self.ties {
            if !seen.insert(t.coord) {
                return Err(Error::InvalidSpec(format!("{:?} tied more than once", t.coord)));
            }
        }
        for f in &self.fixed {
            if seen.contains(&f.coord) {
                return Err(Error::InvalidSpec(format!("{:?} both tied and fixed", f.coord)));
            }
        }
        // Threshold ties must cover whole (group, item) blocks.
        let mut blocks: BTreeMap<(usize, usize), (usize, usize)> = BTreeMap::new();
        for c in self.dims.coords() {
            if let Coord::Threshold { group, item, .. } = c {
                let e = blocks.entry((group, item)).or_default();
                e.0 += 1;
                if seen.contains(&c) {
                    e.1 += 1;
                }
            }
        }
        if blocks.values().any(|&(n, t)| t != 0 && t != n) {
            return Err(Error::InvalidSpec("threshold ties must cover whole items".into()));
        }
        Ok(())
    }
}

pub fn model_dims(spec: &ModelSpec, dataset: &OrdinalDataset) -> Result<ModelDims> {
    let cols = spec.item_columns(dataset)?;
    Ok(ModelDims {
        n_groups: dataset.n_groups(),
        categories: cols.iter().map(|&j| dataset.items[j].n_categories).collect(),
        structural_covariates: spec.include_structural.then(|| dataset.n_covariates()),
    })
}

/// Builds the tie/fixed lists realizing `spec.constraint_level`.
pub fn build_constraints(spec: &ModelSpec, dataset: &OrdinalDataset) -> Result<ConstraintSet> {
    spec.check(dataset)?;
    let dims = model_dims(spec, dataset)?;
    let r = spec.reference_index(dataset)?;
    let level = spec.constraint_level;
    let fixed_loading: BTreeMap<usize, f64> = spec
        .fixed_loadings
        .iter()
        .map(|(name, v)| (spec.item_names.iter().position(|n| n == name).unwrap_or(usize::MAX), *v))
        .collect();
    let anchor: Vec<bool> = spec.item_names.iter().map(|n| spec.is_anchor(n)).collect();

    let mut ties = Vec::new();
    let mut fixed = Vec::new();
    let tie = |ties: &mut Vec<Tie>, c: Coord| ties.push(Tie { coord: c, target: c.in_group(r) });

    for c in dims.coords() {
        let g = c.group();
        let is_ref = g == r;
        match c {
            Coord::Residual { .. } => fixed.push(Fixed { coord: c, value: 1.0 }),
            Coord::Loading { item, .. } => {
                if let Some(&v) = fixed_loading.get(&item) {
                    fixed.push(Fixed { coord: c, value: v });
                } else if level != ConstraintLevel::Configural && !is_ref {
                    tie(&mut ties, c);
                }
            }
            Coord::Threshold { item, .. } => {
                let tied = match level {
                    ConstraintLevel::Configural | ConstraintLevel::Metric => false,
                    ConstraintLevel::Scalar | ConstraintLevel::ScalarFv => true,
                    ConstraintLevel::PartialScalarAnchor => anchor[item],
                };
                if tied && !is_ref {
                    tie(&mut ties, c);
                }
            }
            Coord::Mean { .. } => {
                if is_ref || !level.frees_latent_mean() && level != ConstraintLevel::ScalarFv {
                    fixed.push(Fixed { coord: c, value: 0.0 });
                } else if level == ConstraintLevel::ScalarFv {
                    tie(&mut ties, c);
                }
            }
            Coord::Variance { .. } => {
                if is_ref || level == ConstraintLevel::Configural {
                    fixed.push(Fixed { coord: c, value: 1.0 });
                } else if level == ConstraintLevel::ScalarFv && spec.fv_tie_variance {
                    tie(&mut ties, c);
                }
            }
            Coord::StructIntercept { .. }
            | Coord::StructSlope { .. }
            | Coord::StructCovariate { .. }
            | Coord::StructResidual { .. } => {
                if spec.pooled_structural && !is_ref {
                    tie(&mut ties, c);
                }
            }
        }
    }
    let set = ConstraintSet { dims, reference: r, ties, fixed };
    set.check()?;
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Item, ItemRole, Row};

    fn dataset(n_groups: usize, n_items: usize, k: u8) -> OrdinalDataset {
        let items = (0..n_items)
            .map(|j| Item::new(format!("i{}", j + 1), k, ItemRole::ChildRearing))
            .collect();
        OrdinalDataset {
            items,
            groups: (0..n_groups).map(|g| format!("g{g}")).collect(),
            rows: (0..n_groups).map(|g| Row::new(g, vec![Some(1); n_items])).collect(),
            covariate_names: vec![],
        }
    }

    fn build(d: &OrdinalDataset, level: ConstraintLevel) -> ConstraintSet {
        build_constraints(&ModelSpec::new(d, level), d).unwrap()
    }

    #[test]
    fn single_group_configural_has_no_ties() {
        let d = dataset(1, 3, 4);
        let cs = build(&d, ConstraintLevel::Configural);
        assert!(cs.ties.is_empty());
        assert_eq!(cs.fixed_value(Coord::Mean { group: 0 }), Some(0.0));
        assert_eq!(cs.fixed_value(Coord::Variance { group: 0 }), Some(1.0));
        assert_eq!(cs.n_free(), 3 * (1 + 3));
    }

    #[test]
    fn partial_anchor_ties_only_anchor_thresholds() {
        let d = dataset(2, 8, 4);
        let anchors: Vec<String> = (5..=8).map(|j| format!("i{j}")).collect();
        let spec = ModelSpec::new(&d, ConstraintLevel::PartialScalarAnchor).with_anchors(&anchors);
        let cs = build_constraints(&spec, &d).unwrap();
        let lambda_ties = cs.ties.iter().filter(|t| matches!(t.coord, Coord::Loading { .. })).count();
        assert_eq!(lambda_ties, 8);
        let tau_tied_items: BTreeSet<usize> = cs
            .ties
            .iter()
            .filter_map(|t| match t.coord {
                Coord::Threshold { item, .. } => Some(item),
                _ => None,
            })
            .collect();
        assert_eq!(tau_tied_items, (4..8).collect());
        assert_eq!(cs.ties.len(), 8 + 4 * 3);
        let free = cs.free_coords();
        assert!(free.contains(&Coord::Mean { group: 1 }));
        assert!(free.contains(&Coord::Variance { group: 1 }));
        assert!(free.contains(&Coord::Threshold { group: 1, item: 0, k: 2 }));
    }

    #[test]
    fn scalar_free_count_by_hand_for_two_binary_items() {
        // Configural: λ 2×2 + τ 2×2 = 8 free.
        // Scalar: 4 ties (2 λ, 2 τ), μ₁ and φ₁ freed → 8 − 4 + 2 = 6.
        let d = dataset(2, 2, 2);
        assert_eq!(build(&d, ConstraintLevel::Configural).n_free(), 8);
        let sc = build(&d, ConstraintLevel::Scalar);
        assert_eq!(sc.ties.len(), 4);
        assert_eq!(sc.n_free(), 8 - 4 + 2);
    }

    #[test]
    fn free_count_non_increasing_along_ladder() {
        let d = dataset(3, 5, 4);
        let counts: Vec<usize> =
            ConstraintLevel::LADDER.iter().map(|&l| build(&d, l).n_free()).collect();
        assert!(counts.windows(2).all(|w| w[0] >= w[1]), "{counts:?}");
        let nest: Vec<ConstraintSet> = ConstraintLevel::LADDER.iter().map(|&l| build(&d, l)).collect();
        for w in nest.windows(2) {
            assert!(w[1].is_nested_in(&w[0]));
            assert!(!w[0].is_nested_in(&w[1]));
        }
    }

    #[test]
    fn all_anchor_partial_equals_scalar() {
        let d = dataset(2, 4, 3);
        let names: Vec<String> = d.items.iter().map(|i| i.name.clone()).collect();
        let partial = build_constraints(
            &ModelSpec::new(&d, ConstraintLevel::PartialScalarAnchor).with_anchors(&names),
            &d,
        )
        .unwrap();
        assert_eq!(partial, build(&d, ConstraintLevel::Scalar));
    }

    #[test]
    fn scalar_fv_ties_mean_and_optionally_variance() {
        let d = dataset(2, 3, 2);
        let fv = build(&d, ConstraintLevel::ScalarFv);
        assert_eq!(build(&d, ConstraintLevel::Scalar).n_free() - fv.n_free(), 1);
        let mut spec = ModelSpec::new(&d, ConstraintLevel::ScalarFv);
        spec.fv_tie_variance = true;
        let both = build_constraints(&spec, &d).unwrap();
        assert_eq!(build(&d, ConstraintLevel::Scalar).n_free() - both.n_free(), 2);
    }

    #[test]
    fn unknown_anchor_is_an_error() {
        let d = dataset(2, 2, 2);
        let spec = ModelSpec::new(&d, ConstraintLevel::PartialScalarAnchor).with_anchors(&["zzz"]);
        assert!(build_constraints(&spec, &d).is_err());
    }

    #[test]
    fn construction_is_deterministic() {
        let d = dataset(2, 6, 4);
        let spec = ModelSpec::new(&d, ConstraintLevel::PartialScalarAnchor).with_anchors(&["i2", "i5"]);
        assert_eq!(build_constraints(&spec, &d).unwrap(), build_constraints(&spec, &d).unwrap());
    }
}
