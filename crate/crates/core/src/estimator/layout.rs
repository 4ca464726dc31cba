//! Mapping between the optimizer's unconstrained vector and a full
//! [`ParameterSet`] honoring ties, fixed values and threshold ordering.

use crate::constraints::ConstraintSet;
use crate::error::{Error, Result};
use crate::params::{Coord, ParameterSet, Structural};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Transform {
    Identity,
    /// Stored as the log of a positive value.
    Log,
    /// First threshold of an item block, stored as is.
    ThresholdFirst,
    /// Later threshold, stored as the log gap to its predecessor.
    ThresholdGap,
}

#[derive(Debug, Clone)]
struct FreeParam {
    coord: Coord,
    /// `coord` plus every coordinate tied to it.
    members: Vec<Coord>,
    transform: Transform,
}

#[derive(Debug, Clone)]
pub(crate) struct Layout {
    free: Vec<FreeParam>,
    template: ParameterSet<f64>,
}

impl Layout {
    pub fn new(cs: &ConstraintSet) -> Result<Self> {
        cs.check()?;
        let dims = &cs.dims;
        let mut template = ParameterSet::<f64>::neutral(dims.n_groups, &dims.categories);
        if let Some(nc) = dims.structural_covariates {
            template.structural = Some(
                (0..dims.n_groups)
                    .map(|_| Structural {
                        intercept: 0.0,
                        slope: 0.0,
                        covariates: vec![0.0; nc],
                        residual_variance: 1.0,
                    })
                    .collect(),
            );
        }
        for f in &cs.fixed {
            template.set(f.coord, f.value);
        }
        for t in &cs.ties {
            if let Some(v) = cs.fixed_value(t.target) {
                template.set(t.coord, v);
            }
        }
        let free = cs
            .free_coords()
            .into_iter()
            .map(|coord| {
                let mut members = vec![coord];
                members.extend(cs.ties.iter().filter(|t| t.target == coord).map(|t| t.coord));
                let transform = match coord {
                    Coord::Threshold { k: 0, .. } => Transform::ThresholdFirst,
                    Coord::Threshold { .. } => Transform::ThresholdGap,
                    c if c.is_variance() => Transform::Log,
                    _ => Transform::Identity,
                };
                FreeParam { coord, members, transform }
            })
            .collect::<Vec<_>>();
        for (i, p) in free.iter().enumerate() {
            if p.transform == Transform::ThresholdGap {
                let prev_ok = i > 0
                    && matches!(
                        (free[i - 1].coord, p.coord),
                        (Coord::Threshold { group: g0, item: j0, k: k0 }, Coord::Threshold { group, item, k })
                            if g0 == group && j0 == item && k0 + 1 == k
                    );
                if !prev_ok {
                    return Err(Error::InvalidSpec(format!(
                        "threshold {:?} is free but its predecessor is not",
                        p.coord
                    )));
                }
            }
        }
        Ok(Self { free, template })
    }

    #[cfg(test)]
    pub fn len(&self) -> usize {
        self.free.len()
    }

    pub fn coords(&self) -> Vec<Coord> {
        self.free.iter().map(|p| p.coord).collect()
    }

    pub fn template(&self) -> &ParameterSet<f64> {
        &self.template
    }

    /// Unconstrained vector → parameters. `None` when a transformed value
    /// leaves the representable range.
    pub fn to_params(&self, theta: &[f64]) -> Option<ParameterSet<f64>> {
        let mut p = self.template.clone();
        let mut prev = 0.0;
        for (fp, &t) in self.free.iter().zip(theta) {
            let v = match fp.transform {
                Transform::Identity | Transform::ThresholdFirst => t,
                Transform::Log => t.exp(),
                Transform::ThresholdGap => prev + t.exp(),
            };
            if !v.is_finite() || (fp.transform == Transform::Log && v <= 0.0) {
                return None;
            }
            if fp.transform == Transform::ThresholdGap && v <= prev {
                return None;
            }
            prev = v;
            for &m in &fp.members {
                p.set(m, v);
            }
        }
        Some(p)
    }

    /// Parameters → unconstrained vector, read from each free coordinate.
    pub fn to_theta(&self, p: &ParameterSet<f64>) -> Result<Vec<f64>> {
        let mut prev = 0.0;
        self.free
            .iter()
            .map(|fp| {
                let v = p.get(fp.coord);
                let t = match fp.transform {
                    Transform::Identity | Transform::ThresholdFirst => v,
                    Transform::Log => v.ln(),
                    Transform::ThresholdGap => (v - prev).ln(),
                };
                prev = v;
                if t.is_finite() {
                    Ok(t)
                } else {
                    Err(Error::InvalidParameters(format!("{:?} = {v} cannot start the optimizer", fp.coord)))
                }
            })
            .collect()
    }

    /// Values of the free coordinates in their natural scale.
    pub fn natural(&self, p: &ParameterSet<f64>) -> Vec<f64> {
        self.free.iter().map(|fp| p.get(fp.coord)).collect()
    }

    pub fn from_natural(&self, v: &[f64]) -> ParameterSet<f64> {
        let mut p = self.template.clone();
        for (fp, &x) in self.free.iter().zip(v) {
            for &m in &fp.members {
                p.set(m, x);
            }
        }
        p
    }

    /// Gradient over free coordinates in the natural scale, summing tied members.
    pub fn natural_gradient(&self, full: &ParameterSet<f64>) -> Vec<f64> {
        self.free.iter().map(|fp| fp.members.iter().map(|&m| full.get(m)).sum()).collect()
    }

    /// Chain rule from the natural-scale gradient to the unconstrained one.
    pub fn theta_gradient(&self, theta: &[f64], natural_grad: &[f64], p: &ParameterSet<f64>) -> Vec<f64> {
        let n = self.free.len();
        let mut out = vec![0.0; n];
        let mut i = 0;
        while i < n {
            match self.free[i].transform {
                Transform::Identity => out[i] = natural_grad[i],
                Transform::Log => out[i] = natural_grad[i] * p.get(self.free[i].coord),
                Transform::ThresholdFirst => {
                    let mut end = i + 1;
                    while end < n && self.free[end].transform == Transform::ThresholdGap {
                        end += 1;
                    }
                    // Suffix sums over the block: τ_k depends on every earlier entry.
                    let mut acc = 0.0;
                    for m in (i..end).rev() {
                        acc += natural_grad[m];
                        out[m] = if m == i { acc } else { acc * theta[m].exp() };
                    }
                    i = end;
                    continue;
                }
                Transform::ThresholdGap => unreachable!("gap without leading threshold"),
            }
            i += 1;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::build_constraints;
    use crate::data::{Item, ItemRole, OrdinalDataset, Row};
    use crate::spec::{ConstraintLevel, ModelSpec};

    fn cs(level: ConstraintLevel) -> ConstraintSet {
        let d = OrdinalDataset {
            items: vec![Item::new("a", 4, ItemRole::Anchor), Item::new("b", 2, ItemRole::ChildRearing)],
            groups: vec!["r".into(), "f".into()],
            rows: vec![Row::new(0, vec![Some(1), Some(1)]), Row::new(1, vec![Some(2), Some(2)])],
            covariate_names: vec![],
        };
        build_constraints(&ModelSpec::new(&d, level).with_anchors(&["a"]), &d).unwrap()
    }

    #[test]
    fn theta_round_trip_preserves_ties() {
        let l = Layout::new(&cs(ConstraintLevel::PartialScalarAnchor)).unwrap();
        let theta: Vec<f64> = (0..l.len()).map(|i| 0.1 * i as f64 - 0.3).collect();
        let p = l.to_params(&theta).unwrap();
        p.check(Some(0)).unwrap();
        assert_eq!(p.thresholds[0][0], p.thresholds[1][0]);
        assert_eq!(p.loadings[0], p.loadings[1]);
        let back = l.to_theta(&p).unwrap();
        for (a, b) in theta.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn chain_rule_matches_finite_differences() {
        // f(p) = Σ c_i · natural_i, so ∂f/∂natural = c.
        let l = Layout::new(&cs(ConstraintLevel::Metric)).unwrap();
        let c: Vec<f64> = (0..l.len()).map(|i| (i as f64 * 0.7).sin()).collect();
        let f = |th: &[f64]| -> f64 {
            let p = l.to_params(th).unwrap();
            l.natural(&p).iter().zip(&c).map(|(a, b)| a * b).sum()
        };
        let theta: Vec<f64> = (0..l.len()).map(|i| 0.05 * i as f64 - 0.2).collect();
        let p = l.to_params(&theta).unwrap();
        let g = l.theta_gradient(&theta, &c, &p);
        for i in 0..theta.len() {
            let h = 1e-6;
            let mut tp = theta.clone();
            tp[i] += h;
            let mut tm = theta.clone();
            tm[i] -= h;
            let fd = (f(&tp) - f(&tm)) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-7, "coord {i}: {fd} vs {}", g[i]);
        }
    }
}
