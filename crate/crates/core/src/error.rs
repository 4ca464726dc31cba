use std::path::PathBuf;

use thiserror::Error;

use crate::data::Violation;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dataset failed validation with {} violation(s): {}", .0.len(), summarize(.0))]
    InvalidDataset(Vec<Violation>),

    #[error("invalid model specification: {0}")]
    InvalidSpec(String),

    #[error("thresholds are not strictly increasing: {0:?}")]
    NonMonotoneThresholds(Vec<f64>),

    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error("invariance requires ≥ 2 groups (dataset has {0})")]
    TooFewGroups(usize),

    #[error("latent mean not identified at this level ({0})")]
    MeanNotIdentified(String),

    #[error("models are not nested: {0}")]
    NotNested(String),

    #[error("fit did not converge: {0}")]
    NotConverged(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("collinear covariates in structural regression: {}", .0.join(", "))]
    Collinear(Vec<String>),

    #[error("zero pooled standard deviation of the scale score")]
    ZeroVariance,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("input error in {path}: {message}")]
    Input { path: PathBuf, message: String },

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn summarize(v: &[Violation]) -> String {
    let shown: Vec<String> = v.iter().take(5).map(ToString::to_string).collect();
    let mut s = shown.join("; ");
    if v.len() > 5 {
        s.push_str(&format!("; … {} more", v.len() - 5));
    }
    s
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
