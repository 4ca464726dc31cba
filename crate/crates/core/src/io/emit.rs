//! Structured (JSON) and flat (CSV) result files, written atomically.

use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::analysis::{PolicyEffect, ThresholdDiffTable};
use crate::error::{Error, Result};
use crate::estimator::FitResult;
use crate::invariance::LadderResult;
use crate::simulation::SimulationReport;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
struct EnvelopeOut<'a, T> {
    schema_version: u32,
    kind: &'a str,
    result: &'a T,
}

#[derive(Deserialize)]
struct EnvelopeIn<T> {
    schema_version: u32,
    kind: String,
    result: T,
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.to_owned(), source }
}

/// Writes `bytes` to a temporary file beside `path`, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_err(path, e))?;
    tmp.write_all(bytes).map_err(|e| io_err(path, e))?;
    tmp.as_file().sync_all().map_err(|e| io_err(path, e))?;
    tmp.persist(path).map_err(|e| io_err(path, e.error))?;
    Ok(())
}

/// JSON with a schema version and a `kind` tag around `value`.
pub fn write_structured<T: Serialize>(path: &Path, kind: &str, value: &T) -> Result<()> {
    let env = EnvelopeOut { schema_version: SCHEMA_VERSION, kind, result: value };
    let mut bytes = serde_json::to_vec_pretty(&env).map_err(|e| Error::Config(e.to_string()))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_structured<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    let env: EnvelopeIn<T> = serde_json::from_slice(&bytes)
        .map_err(|e| Error::Input { path: path.to_owned(), message: e.to_string() })?;
    if env.schema_version != SCHEMA_VERSION || env.kind != kind {
        return Err(Error::Input {
            path: path.to_owned(),
            message: format!("expected {kind} v{SCHEMA_VERSION}, found {} v{}", env.kind, env.schema_version),
        });
    }
    Ok(env.result)
}

/// A flat table with fixed columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

pub fn write_table(path: &Path, table: &Table) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let conv = |e: csv::Error| Error::Config(e.to_string());
    w.write_record(&table.header).map_err(conv)?;
    for r in &table.rows {
        w.write_record(r).map_err(conv)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
    write_atomic(path, &bytes)
}

fn num(v: f64) -> String {
    v.to_string()
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, num)
}

impl Table {
    /// level, df, loglik, delta_chisq, delta_df, p
    pub fn ladder(l: &LadderResult) -> Self {
        Table {
            header: vec!["level", "df", "loglik", "delta_chisq", "delta_df", "p"],
            rows: l
                .rows
                .iter()
                .map(|r| {
                    vec![
                        r.level.to_string(),
                        r.df_model.to_string(),
                        num(r.loglik),
                        opt(r.delta_chisq),
                        r.delta_df.map_or_else(String::new, |d| d.to_string()),
                        opt(r.p_value),
                    ]
                })
                .collect(),
        }
    }

    /// group, item, k, tau_focal, tau_reference, delta, se, constrained, role
    pub fn thresholds(t: &ThresholdDiffTable) -> Self {
        Table {
            header: vec!["group", "item", "k", "tau_focal", "tau_reference", "delta", "se", "constrained", "role"],
            rows: t
                .rows
                .iter()
                .map(|r| {
                    vec![
                        r.group.clone(),
                        r.item.clone(),
                        r.k.to_string(),
                        num(r.tau_focal),
                        num(r.tau_reference),
                        num(r.delta),
                        opt(r.se),
                        r.constrained.to_string(),
                        match r.role {
                            crate::data::ItemRole::Anchor => "anchor".into(),
                            crate::data::ItemRole::ChildRearing => "non_anchor".into(),
                        },
                    ]
                })
                .collect(),
        }
    }

    /// delta, lambda, resid_var, k, estimator, mean, bias, sd, conv_rate
    pub fn simulation(r: &SimulationReport) -> Self {
        Table {
            header: vec!["delta", "lambda", "resid_var", "k", "estimator", "mean", "bias", "sd", "conv_rate"],
            rows: r
                .cells
                .iter()
                .map(|c| {
                    vec![
                        num(c.delta),
                        num(c.lambda),
                        num(c.resid_var),
                        c.k.to_string(),
                        c.estimator.name().to_owned(),
                        opt(c.mean),
                        opt(c.bias),
                        opt(c.sd),
                        num(c.conv_rate),
                    ]
                })
                .collect(),
        }
    }

    /// condition, rep, estimator, estimate
    pub fn replications(r: &SimulationReport) -> Self {
        Table {
            header: vec!["condition", "rep", "estimator", "estimate"],
            rows: r
                .records
                .iter()
                .map(|x| vec![x.condition.to_string(), x.rep.to_string(), x.estimator.name().to_owned(), opt(x.estimate)])
                .collect(),
        }
    }

    /// parameter, estimate, se, free
    pub fn parameters(f: &FitResult) -> Self {
        let dims = &f.constraints.dims;
        let se = f.standard_errors.as_ref();
        Table {
            header: vec!["parameter", "estimate", "se", "free"],
            rows: dims
                .coords()
                .into_iter()
                .map(|c| {
                    vec![
                        f.label(c),
                        num(f.params.get(c)),
                        opt(se.and_then(|s| s.get(c))),
                        f.is_free(c).to_string(),
                    ]
                })
                .collect(),
        }
    }

    /// group, beta, se, then the focal summary row.
    pub fn policy(p: &PolicyEffect) -> Self {
        let mut rows: Vec<Vec<String>> =
            p.slopes.iter().map(|s| vec![format!("beta[{}]", s.group), num(s.beta), opt(s.se)]).collect();
        rows.push(vec!["delta_eta".into(), num(p.delta_eta), opt(p.delta_eta_se)]);
        rows.push(vec!["delta_policy".into(), num(p.delta_policy), opt(p.delta_policy_se)]);
        Table { header: vec!["quantity", "estimate", "se"], rows }
    }
}
