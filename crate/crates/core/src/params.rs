//! Group-specific measurement and structural parameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Address of one scalar parameter.
///
/// `group`, `item` and `k` are indices into the model's groups, the model's
/// items (spec order) and the item's thresholds (0-based, `k = 0` is τ₁).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Coord {
    Loading { group: usize, item: usize },
    Threshold { group: usize, item: usize, k: usize },
    Residual { group: usize, item: usize },
    Mean { group: usize },
    Variance { group: usize },
    StructIntercept { group: usize },
    StructSlope { group: usize },
    StructCovariate { group: usize, c: usize },
    StructResidual { group: usize },
}

impl Coord {
    pub fn group(&self) -> usize {
        match *self {
            Coord::Loading { group, .. }
            | Coord::Threshold { group, .. }
            | Coord::Residual { group, .. }
            | Coord::Mean { group }
            | Coord::Variance { group }
            | Coord::StructIntercept { group }
            | Coord::StructSlope { group }
            | Coord::StructCovariate { group, .. }
            | Coord::StructResidual { group } => group,
        }
    }

    /// Same coordinate in another group.
    pub fn in_group(&self, g: usize) -> Coord {
        let mut c = *self;
        match &mut c {
            Coord::Loading { group, .. }
            | Coord::Threshold { group, .. }
            | Coord::Residual { group, .. }
            | Coord::Mean { group }
            | Coord::Variance { group }
            | Coord::StructIntercept { group }
            | Coord::StructSlope { group }
            | Coord::StructCovariate { group, .. }
            | Coord::StructResidual { group } => *group = g,
        }
        c
    }

    /// Must stay strictly positive.
    pub fn is_variance(&self) -> bool {
        matches!(self, Coord::Variance { .. } | Coord::Residual { .. } | Coord::StructResidual { .. })
    }

    pub fn label(&self, items: &[String], groups: &[String]) -> String {
        let g = |i: usize| groups.get(i).map_or("?", String::as_str);
        let it = |i: usize| items.get(i).map_or("?", String::as_str);
        match *self {
            Coord::Loading { group, item } => format!("lambda[{}][{}]", g(group), it(item)),
            Coord::Threshold { group, item, k } => {
                format!("tau[{}][{}][t{}]", g(group), it(item), k + 1)
            }
            Coord::Residual { group, item } => format!("sigma2[{}][{}]", g(group), it(item)),
            Coord::Mean { group } => format!("mu[{}]", g(group)),
            Coord::Variance { group } => format!("phi[{}]", g(group)),
            Coord::StructIntercept { group } => format!("alpha[{}]", g(group)),
            Coord::StructSlope { group } => format!("beta[{}]", g(group)),
            Coord::StructCovariate { group, c } => format!("gamma[{}][{}]", g(group), c),
            Coord::StructResidual { group } => format!("psi[{}]", g(group)),
        }
    }
}

/// Outcome regression `Y = α + βη + γᵀX + ζ`, `ζ ~ N(0, ψ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Structural<T> {
    pub intercept: T,
    pub slope: T,
    pub covariates: Vec<T>,
    pub residual_variance: T,
}

/// Per-group loadings, thresholds, latent moments and residual variances.
///
/// Indexing is `[group][item]` (and `[group][item][k]` for thresholds).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSet<T> {
    pub loadings: Vec<Vec<T>>,
    pub thresholds: Vec<Vec<Vec<T>>>,
    pub latent_mean: Vec<T>,
    pub latent_variance: Vec<T>,
    pub residual_variance: Vec<Vec<T>>,
    /// Held at zero: thresholds carry all location information.
    pub latent_intercepts: Vec<T>,
    pub structural: Option<Vec<Structural<T>>>,
}

/// Per-group view used by the likelihood kernel.
#[derive(Debug, Clone, Copy)]
pub struct GroupParams<'a, T> {
    pub loadings: &'a [T],
    pub thresholds: &'a [Vec<T>],
    pub residual_variance: &'a [T],
    pub mean: T,
    pub variance: T,
    pub structural: Option<&'a Structural<T>>,
}

impl<T: Scalar> ParameterSet<T> {
    /// Standard-normal latent trait, unit loadings/residuals and thresholds at
    /// zero-centred unit spacing.
    pub fn neutral(n_groups: usize, categories: &[u8]) -> Self {
        let taus: Vec<Vec<T>> = categories
            .iter()
            .map(|&k| {
                let m = T::lit(f64::from(k.saturating_sub(1)));
                (0..k.saturating_sub(1))
                    .map(|i| T::lit(f64::from(i)) - (m - T::one()) / T::lit(2.0))
                    .collect()
            })
            .collect();
        let j = categories.len();
        Self {
            loadings: vec![vec![T::one(); j]; n_groups],
            thresholds: vec![taus; n_groups],
            latent_mean: vec![T::zero(); n_groups],
            latent_variance: vec![T::one(); n_groups],
            residual_variance: vec![vec![T::one(); j]; n_groups],
            latent_intercepts: vec![T::zero(); j],
            structural: None,
        }
    }

    pub fn n_groups(&self) -> usize {
        self.loadings.len()
    }

    pub fn n_items(&self) -> usize {
        self.loadings.first().map_or(0, Vec::len)
    }

    pub fn group(&self, g: usize) -> GroupParams<'_, T> {
        GroupParams {
            loadings: &self.loadings[g],
            thresholds: &self.thresholds[g],
            residual_variance: &self.residual_variance[g],
            mean: self.latent_mean[g],
            variance: self.latent_variance[g],
            structural: self.structural.as_ref().map(|s| &s[g]),
        }
    }

    pub fn get(&self, c: Coord) -> T {
        match c {
            Coord::Loading { group, item } => self.loadings[group][item],
            Coord::Threshold { group, item, k } => self.thresholds[group][item][k],
            Coord::Residual { group, item } => self.residual_variance[group][item],
            Coord::Mean { group } => self.latent_mean[group],
            Coord::Variance { group } => self.latent_variance[group],
            Coord::StructIntercept { group } => self.structural_ref(group).intercept,
            Coord::StructSlope { group } => self.structural_ref(group).slope,
            Coord::StructCovariate { group, c } => self.structural_ref(group).covariates[c],
            Coord::StructResidual { group } => self.structural_ref(group).residual_variance,
        }
    }

    pub fn set(&mut self, c: Coord, v: T) {
        match c {
            Coord::Loading { group, item } => self.loadings[group][item] = v,
            Coord::Threshold { group, item, k } => self.thresholds[group][item][k] = v,
            Coord::Residual { group, item } => self.residual_variance[group][item] = v,
            Coord::Mean { group } => self.latent_mean[group] = v,
            Coord::Variance { group } => self.latent_variance[group] = v,
            Coord::StructIntercept { group } => self.structural_mut(group).intercept = v,
            Coord::StructSlope { group } => self.structural_mut(group).slope = v,
            Coord::StructCovariate { group, c } => self.structural_mut(group).covariates[c] = v,
            Coord::StructResidual { group } => self.structural_mut(group).residual_variance = v,
        }
    }

    fn structural_ref(&self, g: usize) -> &Structural<T> {
        &self.structural.as_ref().expect("structural parameters present")[g]
    }

    fn structural_mut(&mut self, g: usize) -> &mut Structural<T> {
        &mut self.structural.as_mut().expect("structural parameters present")[g]
    }

    /// Checks ordering and positivity invariants. `reference` (when given)
    /// must carry μ = 0 and φ = 1 exactly.
    pub fn check(&self, reference: Option<usize>) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameters(m));
        for (g, items) in self.thresholds.iter().enumerate() {
            for (j, tau) in items.iter().enumerate() {
                if tau.windows(2).any(|w| !(w[0] < w[1])) || tau.iter().any(|t| !t.is_finite()) {
                    return bad(format!("thresholds of group {g} item {j} not strictly increasing"));
                }
            }
        }
        if self.latent_variance.iter().any(|&v| !(v > T::zero())) {
            return bad("latent variance must be positive".into());
        }
        if self.residual_variance.iter().flatten().any(|&v| !(v > T::zero())) {
            return bad("residual variance must be positive".into());
        }
        if let Some(s) = &self.structural {
            if s.iter().any(|s| !(s.residual_variance > T::zero())) {
                return bad("structural residual variance must be positive".into());
            }
        }
        if let Some(r) = reference {
            if self.latent_mean[r] != T::zero() || self.latent_variance[r] != T::one() {
                return bad("reference group must have mean 0 and variance 1".into());
            }
        }
        Ok(())
    }

    /// Moves group `g`'s latent mean by `c` and every threshold of that group
    /// by `λ·c`. With μ and τ both free this leaves the likelihood unchanged,
    /// which is why configural models fix μ.
    pub fn shift_latent_mean(&mut self, g: usize, c: T) {
        self.latent_mean[g] = self.latent_mean[g] + c;
        for (tau, &lambda) in self.thresholds[g].iter_mut().zip(&self.loadings[g]) {
            tau.iter_mut().for_each(|t| *t = *t + lambda * c);
        }
        if let Some(s) = self.structural.as_mut() {
            s[g].intercept = s[g].intercept - s[g].slope * c;
        }
    }

    /// Multiplies group `g`'s latent SD by `s > 0` and divides its loadings
    /// (and structural slope) by `s`; likelihood-neutral for the same reason.
    pub fn rescale_latent(&mut self, g: usize, s: T) {
        let m = self.latent_mean[g];
        self.latent_mean[g] = m * s;
        self.latent_variance[g] = self.latent_variance[g] * s * s;
        self.loadings[g].iter_mut().for_each(|l| *l = *l / s);
        if let Some(st) = self.structural.as_mut() {
            st[g].slope = st[g].slope / s;
        }
    }

    /// Converts every entry to another scalar type.
    pub fn cast<U: Scalar>(&self) -> ParameterSet<U> {
        let c = |v: &T| U::lit(v.to_f64().expect("finite parameter"));
        ParameterSet {
            loadings: self.loadings.iter().map(|r| r.iter().map(c).collect()).collect(),
            thresholds: self
                .thresholds
                .iter()
                .map(|g| g.iter().map(|t| t.iter().map(c).collect()).collect())
                .collect(),
            latent_mean: self.latent_mean.iter().map(c).collect(),
            latent_variance: self.latent_variance.iter().map(c).collect(),
            residual_variance: self.residual_variance.iter().map(|r| r.iter().map(c).collect()).collect(),
            latent_intercepts: self.latent_intercepts.iter().map(c).collect(),
            structural: self.structural.as_ref().map(|s| {
                s.iter()
                    .map(|s| Structural {
                        intercept: c(&s.intercept),
                        slope: c(&s.slope),
                        covariates: s.covariates.iter().map(c).collect(),
                        residual_variance: c(&s.residual_variance),
                    })
                    .collect()
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neutral_thresholds_are_centred_and_increasing() {
        let p = ParameterSet::<f64>::neutral(2, &[4, 2]);
        assert_eq!(p.thresholds[0][0], vec![-1.0, 0.0, 1.0]);
        assert_eq!(p.thresholds[1][1], vec![0.0]);
        p.check(Some(0)).unwrap();
    }

    #[test]
    fn get_set_round_trip_and_check_catches_disorder() {
        let mut p = ParameterSet::<f64>::neutral(2, &[3]);
        let c = Coord::Threshold { group: 1, item: 0, k: 1 };
        p.set(c, -2.0);
        assert_eq!(p.get(c), -2.0);
        assert!(p.check(None).is_err());
        assert_eq!(c.in_group(0), Coord::Threshold { group: 0, item: 0, k: 1 });
    }

    #[test]
    fn reference_group_must_be_standardized() {
        let mut p = ParameterSet::<f64>::neutral(2, &[2]);
        p.latent_mean[0] = 0.1;
        assert!(p.check(Some(0)).is_err());
        assert!(p.check(Some(1)).is_ok());
    }
}
