//! TOML run configuration. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CsvSchema;
use crate::analysis::StructuralMode;
use crate::error::{Error, Result};
use crate::simulation::{ItemSet, OutcomeModel, ScaleMetric, SimCondition};
use crate::spec::ConstraintLevel;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Any of "table", "structured".
    #[serde(default)]
    pub formats: Option<Vec<String>>,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub data: Option<DataConfig>,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub structural: StructuralConfig,
    #[serde(default)]
    pub simulation: Option<SimulationConfig>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub path: PathBuf,
    #[serde(default = "default_group_column")]
    pub group_column: String,
    #[serde(default)]
    pub items: Vec<String>,
    #[serde(default)]
    pub anchors: Vec<String>,
    #[serde(default)]
    pub n_categories: BTreeMap<String, u8>,
    #[serde(default)]
    pub outcome: Option<String>,
    #[serde(default)]
    pub covariates: Vec<String>,
    #[serde(default)]
    pub groups: Option<Vec<String>>,
    #[serde(default)]
    pub reference_group: Option<String>,
}

fn default_group_column() -> String {
    "group".into()
}

impl DataConfig {
    pub fn schema(&self) -> CsvSchema {
        CsvSchema {
            group_column: self.group_column.clone(),
            items: self.items.clone(),
            anchors: self.anchors.clone(),
            n_categories: self.n_categories.clone(),
            outcome: self.outcome.clone(),
            covariates: self.covariates.clone(),
            groups: self.groups.clone(),
            reference_group: self.reference_group.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default)]
    pub level: Option<ConstraintLevel>,
    #[serde(default)]
    pub quadrature: Option<usize>,
    #[serde(default)]
    pub fv_tie_variance: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructuralConfig {
    #[serde(default)]
    pub mode: Option<StructuralMode>,
    #[serde(default)]
    pub standardize_outcome: Option<bool>,
    #[serde(default)]
    pub use_covariates: Option<bool>,
}

/// Either an explicit condition list or a full cross of the listed levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    #[serde(default)]
    pub conditions: Option<Vec<SimCondition>>,
    #[serde(default = "default_deltas")]
    pub deltas: Vec<f64>,
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
    #[serde(default = "default_resid_vars")]
    pub resid_vars: Vec<f64>,
    #[serde(default = "default_categories")]
    pub categories: Vec<u8>,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_reps")]
    pub replications: usize,
    #[serde(default = "default_gap")]
    pub true_gap: f64,
    #[serde(default)]
    pub loadings: Option<Vec<f64>>,
    #[serde(default)]
    pub scale_items: Option<ItemSet>,
    #[serde(default)]
    pub full_scalar_items: Option<ItemSet>,
    #[serde(default)]
    pub scale_metric: Option<ScaleMetric>,
    #[serde(default)]
    pub outcome: Option<OutcomeModel>,
}

fn default_deltas() -> Vec<f64> {
    vec![0.0, 0.1, 0.3, 0.5]
}
fn default_lambdas() -> Vec<f64> {
    vec![0.8, 0.9, 1.0]
}
fn default_resid_vars() -> Vec<f64> {
    vec![0.25, 1.0]
}
fn default_categories() -> Vec<u8> {
    vec![4, 7]
}
fn default_n() -> usize {
    1000
}
fn default_reps() -> usize {
    500
}
fn default_gap() -> f64 {
    0.2
}

impl Default for SimulationConfig {
    fn default() -> Self {
        toml::from_str("").expect("all fields have defaults")
    }
}

impl SimulationConfig {
    /// Conditions in (δ, λ, σ², K) nesting order, each seeded with `seed`.
    pub fn conditions(&self, seed: u64) -> Vec<SimCondition> {
        if let Some(list) = &self.conditions {
            return list.iter().cloned().map(|mut c| {
                c.base_seed = seed;
                c
            }).collect();
        }
        let mut out = Vec::new();
        for &delta in &self.deltas {
            for &lambda in &self.lambdas {
                for &resid_var in &self.resid_vars {
                    for &k in &self.categories {
                        let mut c = SimCondition::new(delta, lambda, resid_var, k, self.n)
                            .with_replications(self.replications, seed);
                        c.true_gap = self.true_gap;
                        c.loadings = self.loadings.clone();
                        if let Some(s) = self.scale_items {
                            c.scale_items = s;
                        }
                        if let Some(s) = self.full_scalar_items {
                            c.full_scalar_items = s;
                        }
                        if let Some(m) = self.scale_metric {
                            c.scale_metric = m;
                        }
                        c.outcome = self.outcome.clone();
                        out.push(c);
                    }
                }
            }
        }
        out
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} not supported (expected {CONFIG_SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    /// Reads `path`; relative paths inside are taken from the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.to_owned(), source: e })?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(d) = cfg.data.as_mut() {
            if d.path.is_relative() {
                d.path = base.join(&d.path);
            }
        }
        if let Some(o) = cfg.out.as_mut() {
            if o.is_relative() {
                *o = base.join(&*o);
            }
        }
        Ok(cfg)
    }
}
