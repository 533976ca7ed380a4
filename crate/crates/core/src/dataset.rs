//! Tabular dataset ingestion and stratified train/validation/test splits.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::{digest_hex, largest_remainder, rng_for};

pub const TRAIN_FRACTION: f64 = 0.5;
pub const VALIDATION_FRACTION: f64 = 0.1;
pub const MIN_SPLIT_ROWS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Continuous,
    Discrete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

/// Per-column entry of the metadata document.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    #[serde(default)]
    pub kind: Option<ColumnKind>,
    #[serde(default)]
    pub description: Option<String>,
}

/// The JSON metadata document that accompanies a CSV file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub target: String,
    pub classes: Vec<String>,
    #[serde(default)]
    pub metadata_text: String,
    #[serde(default)]
    pub columns: Vec<ColumnMeta>,
}

/// A typed table with a categorical target.
///
/// `schema` and the cells of `rows` cover the feature columns only; the target
/// lives in `labels` as indices into `classes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularDataset {
    pub schema: Vec<ColumnSpec>,
    pub rows: Vec<Vec<String>>,
    pub target: String,
    pub classes: Vec<String>,
    pub labels: Vec<usize>,
    pub metadata: String,
    pub class_ratios: Vec<f64>,
}

impl TabularDataset {
    /// Builds a dataset from in-memory parts, validating every invariant.
    pub fn new(
        schema: Vec<ColumnSpec>,
        rows: Vec<Vec<String>>,
        target: impl Into<String>,
        classes: Vec<String>,
        labels: Vec<usize>,
        metadata: impl Into<String>,
    ) -> Result<Self> {
        if classes.len() < 2 {
            return Err(Error::TooFewClasses(classes.len()));
        }
        let mut seen = HashSet::new();
        for col in &schema {
            if !seen.insert(col.name.as_str()) {
                return Err(Error::DuplicateColumn(col.name.clone()));
            }
        }
        if rows.len() != labels.len() {
            return Err(Error::LengthMismatch(rows.len(), labels.len()));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != schema.len() {
                return Err(Error::RaggedRow { row: i, expected: schema.len(), found: row.len() });
            }
        }
        for (i, &label) in labels.iter().enumerate() {
            if label >= classes.len() {
                return Err(Error::UnknownClass { row: i, value: label.to_string() });
            }
        }
        let class_ratios = ratios(&labels, classes.len());
        Ok(Self {
            schema,
            rows,
            target: target.into(),
            classes,
            labels,
            metadata: metadata.into(),
            class_ratios,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.schema.iter().position(|c| c.name == name)
    }

    /// Values of one column restricted to the given rows.
    pub fn column_values<'a>(&'a self, col: usize, rows: &'a [usize]) -> impl Iterator<Item = &'a str> + 'a {
        rows.iter().map(move |&r| self.rows[r][col].as_str())
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == name)
    }

    /// Hash of column names, kinds, target and classes.
    pub fn schema_fingerprint(&self) -> String {
        let mut parts: Vec<String> = self
            .schema
            .iter()
            .map(|c| format!("{}:{:?}", c.name, c.kind))
            .collect();
        parts.push(format!("target:{}", self.target));
        parts.extend(self.classes.iter().map(|c| format!("class:{c}")));
        digest_hex(parts.iter())[..16].to_string()
    }
}

fn ratios(labels: &[usize], k: usize) -> Vec<f64> {
    let mut counts = vec![0usize; k];
    for &l in labels {
        counts[l] += 1;
    }
    let n = labels.len().max(1) as f64;
    counts.into_iter().map(|c| c as f64 / n).collect()
}

fn parses_as_finite(cell: &str) -> bool {
    cell.trim().parse::<f64>().map(f64::is_finite).unwrap_or(false)
}

/// Loads a CSV file with header plus its JSON metadata document.
pub fn load_dataset(csv_path: impl AsRef<Path>, meta_path: impl AsRef<Path>) -> Result<TabularDataset> {
    let meta: DatasetMeta = serde_json::from_slice(&std::fs::read(meta_path)?)?;
    let reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(csv_path)?;
    from_csv_reader(reader, &meta, true).map(|(ds, _)| ds)
}

/// Like [`load_dataset`] but the target column may be absent, as for rows
/// awaiting prediction. Returns whether labels were present; without them
/// every label is the first class.
pub fn load_rows(csv_path: impl AsRef<Path>, meta_path: impl AsRef<Path>) -> Result<(TabularDataset, bool)> {
    let meta: DatasetMeta = serde_json::from_slice(&std::fs::read(meta_path)?)?;
    let reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(csv_path)?;
    from_csv_reader(reader, &meta, false)
}

/// Parses CSV text with the given metadata. Used by `load_dataset` and tests.
pub fn parse_dataset(csv_text: &str, meta: &DatasetMeta) -> Result<TabularDataset> {
    let reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(csv_text.as_bytes());
    from_csv_reader(reader, meta, true).map(|(ds, _)| ds)
}

fn from_csv_reader<R: std::io::Read>(
    mut reader: csv::Reader<R>,
    meta: &DatasetMeta,
    require_target: bool,
) -> Result<(TabularDataset, bool)> {
    if meta.classes.len() < 2 {
        return Err(Error::TooFewClasses(meta.classes.len()));
    }
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let target_col = header.iter().position(|h| *h == meta.target);
    if require_target && target_col.is_none() {
        return Err(Error::MissingTarget(meta.target.clone()));
    }
    let labeled = target_col.is_some();
    let target_col = target_col.unwrap_or(usize::MAX);

    let declared: BTreeMap<&str, &ColumnMeta> = meta.columns.iter().map(|c| (c.name.as_str(), c)).collect();
    for name in declared.keys() {
        if !header.iter().any(|h| h == name) {
            return Err(Error::UnknownColumn(name.to_string()));
        }
    }

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != header.len() {
            return Err(Error::RaggedRow { row: i, expected: header.len(), found: record.len() });
        }
        if !labeled {
            labels.push(0);
        }
        let mut cells = Vec::with_capacity(header.len());
        for (j, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            if j == target_col {
                let label = meta
                    .classes
                    .iter()
                    .position(|c| c == cell)
                    .ok_or_else(|| Error::UnknownClass { row: i, value: cell.to_string() })?;
                labels.push(label);
            } else {
                if cell.is_empty() {
                    return Err(Error::MissingCell { row: i, column: header[j].clone() });
                }
                cells.push(cell.to_string());
            }
        }
        rows.push(cells);
    }

    let feature_names: Vec<&String> = header
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != target_col)
        .map(|(_, h)| h)
        .collect();
    let schema = feature_names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let declared = declared.get(name.as_str());
            let numeric = rows.iter().all(|r: &Vec<String>| parses_as_finite(&r[j]));
            let kind = match declared.and_then(|d| d.kind) {
                Some(ColumnKind::Discrete) => ColumnKind::Discrete,
                _ if numeric && !rows.is_empty() => ColumnKind::Continuous,
                _ => ColumnKind::Discrete,
            };
            ColumnSpec {
                name: name.to_string(),
                kind,
                description: declared.and_then(|d| d.description.clone()),
            }
        })
        .collect();

    let ds = TabularDataset::new(schema, rows, meta.target.clone(), meta.classes.clone(), labels, meta.metadata_text.clone())?;
    Ok((ds, labeled))
}

/// Disjoint train/validation/test row indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub train_idx: Vec<usize>,
    pub val_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub seed: u64,
}

/// Stratified 50/10/40 split.
///
/// The train total is `floor(N/2)` and the validation total `floor(N/10)`;
/// both are apportioned over classes by largest remainder of the
/// class-proportional quota. Test receives whatever is left.
pub fn split(ds: &TabularDataset, seed: u64) -> Result<SplitAssignment> {
    let n = ds.len();
    if n < MIN_SPLIT_ROWS {
        return Err(Error::TooFewRows { min: MIN_SPLIT_ROWS, found: n });
    }
    let k = ds.num_classes();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &label) in ds.labels.iter().enumerate() {
        by_class[label].push(i);
    }
    for (c, members) in by_class.iter_mut().enumerate() {
        members.shuffle(&mut rng_for(seed, "split", c as u64));
    }
    let sizes: Vec<usize> = by_class.iter().map(Vec::len).collect();

    let train_total = (n as f64 * TRAIN_FRACTION).floor() as usize;
    let val_total = (n as f64 * VALIDATION_FRACTION).floor() as usize;
    let quota = |total: usize| -> Vec<f64> {
        sizes.iter().map(|&s| s as f64 * total as f64 / n as f64).collect()
    };
    let train_counts = largest_remainder(&quota(train_total), train_total, Some(&sizes));
    let remaining: Vec<usize> = sizes.iter().zip(&train_counts).map(|(s, t)| s - t).collect();
    let val_counts = largest_remainder(&quota(val_total), val_total, Some(&remaining));

    let mut out = SplitAssignment { train_idx: Vec::new(), val_idx: Vec::new(), test_idx: Vec::new(), seed };
    for (c, members) in by_class.iter().enumerate() {
        let (t, v) = (train_counts[c], val_counts[c]);
        out.train_idx.extend_from_slice(&members[..t]);
        out.val_idx.extend_from_slice(&members[t..t + v]);
        out.test_idx.extend_from_slice(&members[t + v..]);
    }
    out.train_idx.sort_unstable();
    out.val_idx.sort_unstable();
    out.test_idx.sort_unstable();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(target: &str, classes: &[&str]) -> DatasetMeta {
        DatasetMeta {
            target: target.into(),
            classes: classes.iter().map(|s| s.to_string()).collect(),
            metadata_text: "test data".into(),
            columns: vec![],
        }
    }

    fn iris_like() -> String {
        let mut csv = String::from("sepal_length,sepal_width,petal_length,petal_width,species\n");
        let names = ["setosa", "versicolor", "virginica"];
        for i in 0..150 {
            csv.push_str(&format!("{}.{},{}.1,{}.2,{}.3,{}\n", 4 + i % 4, i % 10, 2 + i % 3, 1 + i % 5, i % 3, names[i / 50]));
        }
        csv
    }

    #[test]
    fn iris_shape_is_four_continuous_three_classes() {
        let ds = parse_dataset(&iris_like(), &meta("species", &["setosa", "versicolor", "virginica"])).unwrap();
        assert_eq!(ds.len(), 150);
        assert_eq!(ds.num_classes(), 3);
        assert_eq!(ds.schema.len(), 4);
        assert!(ds.schema.iter().all(|c| c.kind == ColumnKind::Continuous));
        let total: f64 = ds.class_ratios.iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn declared_discrete_columns_stay_discrete() {
        let csv = "a,b,c,d,e,f,g,y\n1,2,3,x,y,z,w,happy\n2,3,4,x,y,z,w,unhappy\n";
        let mut m = meta("y", &["happy", "unhappy"]);
        m.columns = ["a", "b", "c"]
            .iter()
            .map(|n| ColumnMeta { name: n.to_string(), kind: Some(ColumnKind::Discrete), description: None })
            .collect();
        let ds = parse_dataset(csv, &m).unwrap();
        assert_eq!(ds.schema.len(), 7);
        assert!(ds.schema.iter().all(|c| c.kind == ColumnKind::Discrete));
    }

    #[test]
    fn load_errors() {
        let m = meta("y", &["a", "b"]);
        assert!(matches!(parse_dataset("x,z\n1,2\n", &m), Err(Error::MissingTarget(_))));
        assert!(matches!(parse_dataset("x,y\n1,c\n", &m), Err(Error::UnknownClass { row: 0, .. })));
        assert!(matches!(parse_dataset("x,y\n1,a\n1,2,b\n", &m), Err(Error::RaggedRow { row: 1, .. })));
        assert!(matches!(parse_dataset("x,y\n,a\n", &m), Err(Error::MissingCell { row: 0, .. })));
        assert!(matches!(parse_dataset("x,y\n1,a\n", &meta("y", &["a"])), Err(Error::TooFewClasses(1))));
    }

    #[test]
    fn load_from_files() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("d.csv");
        let js = dir.path().join("d.json");
        std::fs::write(&csv, "x,label\n1.5,yes\n2.5,no\n").unwrap();
        let mut m = meta("label", &["yes", "no"]);
        m.columns.push(ColumnMeta { name: "x".into(), kind: None, description: Some("the x".into()) });
        std::fs::write(&js, serde_json::to_string(&m).unwrap()).unwrap();
        let ds = load_dataset(&csv, &js).unwrap();
        assert_eq!(ds.schema[0].kind, ColumnKind::Continuous);
        assert_eq!(ds.schema[0].description.as_deref(), Some("the x"));
        assert_eq!(ds.labels, vec![0, 1]);
    }

    fn synthetic(n: usize, k: usize) -> TabularDataset {
        let rows = (0..n).map(|i| vec![i.to_string()]).collect();
        let labels = (0..n).map(|i| i % k).collect();
        let schema = vec![ColumnSpec { name: "x".into(), kind: ColumnKind::Continuous, description: None }];
        let classes = (0..k).map(|c| format!("c{c}")).collect();
        TabularDataset::new(schema, rows, "y", classes, labels, "").unwrap()
    }

    #[test]
    fn split_sizes() {
        let s = split(&synthetic(100, 2), 0).unwrap();
        assert_eq!((s.train_idx.len(), s.val_idx.len(), s.test_idx.len()), (50, 10, 40));

        // one populated class out of two declared
        let schema = vec![ColumnSpec { name: "x".into(), kind: ColumnKind::Discrete, description: None }];
        let ds = TabularDataset::new(schema, vec![vec!["a".into()]; 10], "y", vec!["p".into(), "q".into()], vec![0; 10], "").unwrap();
        let s = split(&ds, 3).unwrap();
        assert_eq!((s.train_idx.len(), s.val_idx.len(), s.test_idx.len()), (5, 1, 4));
    }

    #[test]
    fn split_is_deterministic_and_seed_sensitive() {
        let ds = synthetic(60, 3);
        assert_eq!(split(&ds, 7).unwrap(), split(&ds, 7).unwrap());
        assert_ne!(split(&ds, 7).unwrap().train_idx, split(&ds, 8).unwrap().train_idx);
    }

    #[test]
    fn split_rejects_tiny_datasets() {
        assert!(matches!(split(&synthetic(9, 2), 0), Err(Error::TooFewRows { .. })));
    }
}
