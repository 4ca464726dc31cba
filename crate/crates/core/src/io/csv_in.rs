use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Item, ItemRole, OrdinalDataset, Row};
use crate::error::{Error, Result};

/// Which CSV columns make up the dataset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    pub group_column: String,
    /// Item columns in model order. Empty: every column not otherwise used.
    #[serde(default)]
    pub items: Vec<String>,
    /// Items marked as anchors; the rest are non-anchor items.
    #[serde(default)]
    pub anchors: Vec<String>,
    /// Category counts by item; otherwise the largest observed code.
    #[serde(default)]
    pub n_categories: BTreeMap<String, u8>,
    #[serde(default)]
    pub outcome: Option<String>,
    #[serde(default)]
    pub covariates: Vec<String>,
    /// Expected group labels. Any other label in the file is an error.
    #[serde(default)]
    pub groups: Option<Vec<String>>,
    /// Placed first among the groups when given.
    #[serde(default)]
    pub reference_group: Option<String>,
}

impl CsvSchema {
    pub fn new(group_column: impl Into<String>) -> Self {
        Self { group_column: group_column.into(), ..Self::default() }
    }
}

fn is_missing(s: &str) -> bool {
    let t = s.trim();
    t.is_empty() || t == "NA"
}

/// Reads and validates a dataset. Missing values are empty fields or `NA`.
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<OrdinalDataset> {
    let input = |message: String| Error::Input { path: path.to_owned(), message };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(source) => Error::Io { path: path.to_owned(), source },
            other => input(format!("{other:?}")),
        })?;
    let header: Vec<String> = reader.headers().map_err(|e| input(e.to_string()))?.iter().map(str::to_owned).collect();
    let col = |name: &str| {
        header.iter().position(|h| h == name).ok_or_else(|| input(format!("unknown column {name}")))
    };
    let group_col = col(&schema.group_column)?;
    let outcome_col = schema.outcome.as_deref().map(col).transpose()?;
    let cov_cols = schema.covariates.iter().map(|c| col(c)).collect::<Result<Vec<_>>>()?;
    let item_names: Vec<String> = if schema.items.is_empty() {
        header
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != group_col && Some(*i) != outcome_col && !cov_cols.contains(i))
            .map(|(_, h)| h.clone())
            .collect()
    } else {
        schema.items.clone()
    };
    let item_cols = item_names.iter().map(|n| col(n)).collect::<Result<Vec<_>>>()?;
    for a in &schema.anchors {
        if !item_names.contains(a) {
            return Err(input(format!("anchor {a} is not an item column")));
        }
    }

    let mut labels: Vec<String> = Vec::new();
    let mut raw_rows: Vec<(String, Vec<Option<u8>>, Option<f64>, Option<Vec<f64>>)> = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| input(e.to_string()))?;
        let row_no = line + 2;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let label = field(group_col).to_owned();
        if is_missing(&label) {
            return Err(input(format!("line {row_no}: missing group label")));
        }
        if let Some(expected) = &schema.groups {
            if !expected.contains(&label) {
                return Err(input(format!(
                    "line {row_no}: unexpected group label {label:?} (expected one of {})",
                    expected.join(", ")
                )));
            }
        }
        if !labels.contains(&label) {
            labels.push(label.clone());
        }
        let mut responses = Vec::with_capacity(item_cols.len());
        for (&c, name) in item_cols.iter().zip(&item_names) {
            let s = field(c);
            responses.push(if is_missing(s) {
                None
            } else {
                Some(s.trim().parse::<u8>().map_err(|_| {
                    input(format!("line {row_no}: item {name}: {s:?} is not an integer category"))
                })?)
            });
        }
        let number = |c: usize, what: &str| -> Result<Option<f64>> {
            let s = field(c);
            if is_missing(s) {
                return Ok(None);
            }
            s.trim().parse::<f64>().map(Some).map_err(|_| input(format!("line {row_no}: {what}: {s:?} is not a number")))
        };
        let outcome = outcome_col.map(|c| number(c, "outcome")).transpose()?.flatten();
        let covs = cov_cols
            .iter()
            .zip(&schema.covariates)
            .map(|(&c, n)| number(c, n))
            .collect::<Result<Vec<_>>>()?;
        let covariates = if cov_cols.is_empty() { None } else { covs.into_iter().collect::<Option<Vec<f64>>>() };
        raw_rows.push((label, responses, outcome, covariates));
    }

    if let Some(r) = &schema.reference_group {
        let Some(pos) = labels.iter().position(|l| l == r) else {
            return Err(input(format!("reference group {r:?} does not occur in column {}", schema.group_column)));
        };
        let l = labels.remove(pos);
        labels.insert(0, l);
    }
    if let Some(expected) = &schema.groups {
        for e in expected {
            if !labels.contains(e) {
                return Err(input(format!("group {e:?} has no rows")));
            }
        }
    }

    let mut items = Vec::with_capacity(item_names.len());
    for (j, name) in item_names.iter().enumerate() {
        let observed = raw_rows.iter().filter_map(|r| r.1[j]).max();
        let Some(max_code) = observed else {
            return Err(input(format!("item {name} has no observed responses")));
        };
        let k = schema.n_categories.get(name).copied().unwrap_or(max_code);
        let role = if schema.anchors.contains(name) { ItemRole::Anchor } else { ItemRole::ChildRearing };
        items.push(Item::new(name.clone(), k, role));
    }
    let rows = raw_rows
        .into_iter()
        .map(|(label, responses, outcome, covariates)| Row {
            group: labels.iter().position(|l| *l == label).expect("label collected above"),
            responses,
            outcome,
            covariates,
        })
        .collect();
    OrdinalDataset { items, groups: labels, rows, covariate_names: schema.covariates.clone() }.validate()
}

/// Writes `dataset` with columns group, items…, [outcome], [covariates…].
pub fn write_dataset_csv(path: &Path, dataset: &OrdinalDataset, group_column: &str) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let has_outcome = dataset.has_outcome();
    let mut header = vec![group_column.to_owned()];
    header.extend(dataset.items.iter().map(|i| i.name.clone()));
    if has_outcome {
        header.push("outcome".into());
    }
    header.extend(dataset.covariate_names.iter().cloned());
    w.write_record(&header).map_err(|e| Error::Config(e.to_string()))?;
    for r in &dataset.rows {
        let mut rec = vec![dataset.groups[r.group].clone()];
        rec.extend(r.responses.iter().map(|v| v.map_or_else(|| "NA".to_owned(), |c| c.to_string())));
        if has_outcome {
            rec.push(r.outcome.map_or_else(|| "NA".to_owned(), |y| y.to_string()));
        }
        for c in 0..dataset.covariate_names.len() {
            rec.push(r.covariates.as_ref().map_or_else(|| "NA".to_owned(), |x| x[c].to_string()));
        }
        w.write_record(&rec).map_err(|e| Error::Config(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
    super::emit::write_atomic(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn three_rows_with_missing() {
        let f = file("grp,a,b\nw,1,3\nb,NA,2\nw,2,\n");
        let d = load_csv(f.path(), &CsvSchema::new("grp")).unwrap();
        assert_eq!(d.rows.len(), 3);
        assert_eq!(d.groups, ["w", "b"]);
        assert_eq!(d.rows[1].responses, [None, Some(2)]);
        assert_eq!(d.rows[2].responses, [Some(2), None]);
        assert_eq!(d.items[1].n_categories, 3);
    }

    #[test]
    fn reference_group_goes_first() {
        let f = file("grp,a\nw,1\nb,2\n");
        let mut s = CsvSchema::new("grp");
        s.reference_group = Some("b".into());
        let d = load_csv(f.path(), &s).unwrap();
        assert_eq!(d.groups, ["b", "w"]);
        assert_eq!(d.rows[0].group, 1);
    }

    #[test]
    fn unexpected_label_is_named() {
        let f = file("grp,a\nw,1\nb,2\nh,1\n");
        let mut s = CsvSchema::new("grp");
        s.groups = Some(vec!["w".into(), "b".into()]);
        let e = load_csv(f.path(), &s).unwrap_err().to_string();
        assert!(e.contains("\"h\""), "{e}");
    }

    #[test]
    fn bad_inputs() {
        let f = file("grp,a,b\nw,1,x\n");
        assert!(load_csv(f.path(), &CsvSchema::new("grp")).unwrap_err().to_string().contains("item b"));
        let f = file("grp,a,b\nw,1,NA\nb,2,\n");
        assert!(load_csv(f.path(), &CsvSchema::new("grp")).unwrap_err().to_string().contains("item b has no observed"));
        let f = file("grp,a\nw,1\n");
        let mut s = CsvSchema::new("grp");
        s.items = vec!["zz".into()];
        assert!(load_csv(f.path(), &s).unwrap_err().to_string().contains("unknown column zz"));
    }

    #[test]
    fn write_then_read_round_trips() {
        let f = file("group,a,b,outcome,x\nw,1,2,0.5,1\nb,2,NA,-1.25,0\n");
        let mut s = CsvSchema::new("group");
        s.items = vec!["a".into(), "b".into()];
        s.outcome = Some("outcome".into());
        s.covariates = vec!["x".into()];
        let d = load_csv(f.path(), &s).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("d.csv");
        write_dataset_csv(&out, &d, "group").unwrap();
        assert_eq!(load_csv(&out, &s).unwrap(), d);
    }
}
