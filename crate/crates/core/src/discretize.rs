//! Continuous-to-categorical encoders.
//!
//! Every scheme maps a number to a *level index* (monotone in the value) and a
//! phrase for that level. Boundaries are fitted on training rows only and are
//! immutable afterwards.
//!
//! Bin edges use an order-statistic rule with no interpolation: for `B` bins
//! over `N` sorted training values the `i`-th edge is the value at 0-based
//! position `floor(i * N / B)`. Buckets are half-open `[edge_i, edge_{i+1})`
//! with the top bucket closed, so on tie-free data every bin holds
//! `floor`/`ceil` of `N / B` values. Quartile landmarks are the 4-bin edges.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{ColumnKind, TabularDataset};
use crate::error::{Error, Result};
use crate::util::digest_hex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    BinsQuantified,
    BinsPlain,
    Percentile,
    StdDev,
    Quartiles,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Encoding {
    pub scheme: Scheme,
    #[serde(default)]
    pub bin_count: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub quantifiers: Vec<String>,
}

/// Degree quantifiers for the bin counts studied with quantified binning.
pub fn standard_quantifiers(bin_count: usize) -> Option<&'static [&'static str]> {
    Some(match bin_count {
        4 => &["very low", "low", "high", "very high"],
        5 => &["very low", "low", "medium", "high", "very high"],
        7 => &["extremely low", "very low", "low", "medium", "high", "very high", "extremely high"],
        9 => &[
            "lowest",
            "extremely low",
            "very low",
            "low",
            "medium",
            "high",
            "very high",
            "extremely high",
            "highest",
        ],
        _ => return None,
    })
}

const STD_DEV_PHRASES: [&str; 6] = [
    "is three std-dev below the mean value",
    "is two std-dev below the mean value",
    "is within one std-dev below the mean value",
    "is within one std-dev above the mean value",
    "is two std-dev above the mean value",
    "is three std-dev above the mean value",
];

const QUARTILE_PHRASES: [&str; 4] = [
    "is less than the first quartile value",
    "is between the first quartile and median values",
    "is between median and third quartile values",
    "is more than the third quartile value",
];

impl Encoding {
    /// Quantified bins using the standard quantifier list for `bin_count`.
    pub fn bins_quantified(bin_count: usize) -> Result<Self> {
        let q = standard_quantifiers(bin_count).ok_or_else(|| {
            Error::InvalidEncoding(format!("no standard quantifiers for {bin_count} bins"))
        })?;
        Ok(Self {
            scheme: Scheme::BinsQuantified,
            bin_count,
            quantifiers: q.iter().map(|s| s.to_string()).collect(),
        })
    }

    pub fn bins_with_quantifiers(quantifiers: Vec<String>) -> Result<Self> {
        let enc = Self { scheme: Scheme::BinsQuantified, bin_count: quantifiers.len(), quantifiers };
        enc.validate()?;
        Ok(enc)
    }

    pub fn bins_plain(bin_count: usize) -> Self {
        Self { scheme: Scheme::BinsPlain, bin_count, quantifiers: vec![] }
    }

    pub fn percentile() -> Self {
        Self { scheme: Scheme::Percentile, bin_count: 0, quantifiers: vec![] }
    }

    pub fn std_dev() -> Self {
        Self { scheme: Scheme::StdDev, bin_count: 0, quantifiers: vec![] }
    }

    pub fn quartiles() -> Self {
        Self { scheme: Scheme::Quartiles, bin_count: 0, quantifiers: vec![] }
    }

    /// Parses a CLI-style name: `bins5`, `bins7`, `plain10`, `percentile`,
    /// `std-dev`, `quartiles`.
    pub fn from_name(name: &str) -> Result<Self> {
        let name = name.trim().to_ascii_lowercase();
        match name.as_str() {
            "percentile" => Ok(Self::percentile()),
            "std-dev" | "stddev" | "std_dev" => Ok(Self::std_dev()),
            "quartiles" => Ok(Self::quartiles()),
            _ => {
                if let Some(n) = name.strip_prefix("bins") {
                    let n = n.parse().map_err(|_| Error::InvalidEncoding(name.clone()))?;
                    Self::bins_quantified(n)
                } else if let Some(n) = name.strip_prefix("plain") {
                    let n: usize = n.parse().map_err(|_| Error::InvalidEncoding(name.clone()))?;
                    let enc = Self::bins_plain(n);
                    enc.validate()?;
                    Ok(enc)
                } else {
                    Err(Error::InvalidEncoding(name))
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.scheme {
            Scheme::BinsQuantified => {
                if self.bin_count < 2 || self.quantifiers.len() != self.bin_count {
                    return Err(Error::InvalidEncoding(format!(
                        "{} quantifiers for {} bins",
                        self.quantifiers.len(),
                        self.bin_count
                    )));
                }
                if self.quantifiers.iter().any(|q| q.trim().is_empty()) {
                    return Err(Error::InvalidEncoding("empty quantifier".into()));
                }
            }
            Scheme::BinsPlain if !(2..=100).contains(&self.bin_count) => {
                return Err(Error::InvalidEncoding(format!("{} plain bins", self.bin_count)));
            }
            _ => {}
        }
        Ok(())
    }

    /// Number of distinct levels the scheme can emit.
    pub fn level_count(&self) -> usize {
        match self.scheme {
            Scheme::BinsQuantified | Scheme::BinsPlain => self.bin_count,
            Scheme::Percentile => 101,
            Scheme::StdDev => STD_DEV_PHRASES.len(),
            Scheme::Quartiles => QUARTILE_PHRASES.len(),
        }
    }

    pub fn level_text(&self, level: usize) -> String {
        match self.scheme {
            Scheme::BinsQuantified => self.quantifiers[level].clone(),
            Scheme::BinsPlain => format!(
                "falls in the {} out of {} bins of values",
                ordinal_words(level + 1),
                cardinal_words(self.bin_count)
            ),
            Scheme::Percentile => format!("falls in the {} percentile", ordinal_words(level)),
            Scheme::StdDev => STD_DEV_PHRASES[level].to_string(),
            Scheme::Quartiles => QUARTILE_PHRASES[level].to_string(),
        }
    }

    fn edge_bins(&self) -> Option<usize> {
        match self.scheme {
            Scheme::BinsQuantified | Scheme::BinsPlain => Some(self.bin_count),
            Scheme::Quartiles => Some(4),
            _ => None,
        }
    }
}

/// Five quantified bins: very low, low, medium, high, very high.
pub fn default_encoding() -> Encoding {
    Encoding::bins_quantified(5).expect("5 bins are standard")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Landmarks {
    /// Deduplicated cut values plus the level assigned to each bucket
    /// (`levels.len() == edges.len() + 1`).
    Edges { edges: Vec<f64>, levels: Vec<usize> },
    /// Sorted training sample, for rank lookups.
    Ranks { sorted: Vec<f64> },
    /// Mean and population standard deviation.
    Moments { mean: f64, std_dev: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinBoundaries {
    pub column: String,
    pub landmarks: Landmarks,
    pub fitted_on: String,
}

impl BinBoundaries {
    /// Cut values for edge-based schemes; empty otherwise.
    pub fn edges(&self) -> &[f64] {
        match &self.landmarks {
            Landmarks::Edges { edges, .. } => edges,
            _ => &[],
        }
    }

    /// Monotone level index of `value`.
    pub fn level_index(&self, value: f64) -> usize {
        match &self.landmarks {
            Landmarks::Edges { edges, levels } => levels[edges.partition_point(|e| *e <= value)],
            Landmarks::Ranks { sorted } => {
                let below = sorted.partition_point(|x| *x < value);
                100 * below / sorted.len()
            }
            Landmarks::Moments { mean, std_dev } => {
                let z = if *std_dev > 0.0 { (value - mean) / std_dev } else { 0.0 };
                // (-inf,-2) [-2,-1) [-1,0) [0,1] (1,2] (2,inf)
                if z < -2.0 {
                    0
                } else if z < -1.0 {
                    1
                } else if z < 0.0 {
                    2
                } else if z <= 1.0 {
                    3
                } else if z <= 2.0 {
                    4
                } else {
                    5
                }
            }
        }
    }
}

/// Fits boundaries for one column on its training values.
pub fn fit(column: &str, train_values: &[f64], enc: &Encoding) -> Result<BinBoundaries> {
    enc.validate()?;
    if train_values.is_empty() {
        return Err(Error::EmptyColumn);
    }
    if let Some(bad) = train_values.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite value {bad} in column {column}")));
    }
    let mut sorted = train_values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let fitted_on = digest_hex(sorted.iter().map(|v| v.to_le_bytes()))[..16].to_string();

    let landmarks = if let Some(bins) = enc.edge_bins() {
        edge_landmarks(&sorted, bins)
    } else if enc.scheme == Scheme::Percentile {
        Landmarks::Ranks { sorted }
    } else {
        let n = sorted.len() as f64;
        let mean = sorted.iter().sum::<f64>() / n;
        let var = sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Landmarks::Moments { mean, std_dev: var.sqrt() }
    };
    Ok(BinBoundaries { column: column.to_string(), landmarks, fitted_on })
}

fn edge_landmarks(sorted: &[f64], bins: usize) -> Landmarks {
    let n = sorted.len();
    if sorted[0] == sorted[n - 1] {
        // constant column: no information, everything is the middle level
        let mid = (bins - 1) / 2;
        return Landmarks::Edges { edges: vec![sorted[0]], levels: vec![mid, mid] };
    }
    let raw: Vec<f64> = (1..bins).map(|i| sorted[(i * n / bins).min(n - 1)]).collect();
    let mut edges: Vec<f64> = Vec::with_capacity(raw.len());
    let mut levels = vec![0];
    for (i, &e) in raw.iter().enumerate() {
        if edges.last() == Some(&e) {
            *levels.last_mut().unwrap() = i + 1;
        } else {
            edges.push(e);
            levels.push(i + 1);
        }
    }
    Landmarks::Edges { edges, levels }
}

/// Level text of `value` under fitted boundaries.
pub fn encode(value: f64, b: &BinBoundaries, enc: &Encoding) -> Result<String> {
    let compatible = matches!(
        (&b.landmarks, enc.scheme),
        (Landmarks::Edges { .. }, Scheme::BinsQuantified | Scheme::BinsPlain | Scheme::Quartiles)
            | (Landmarks::Ranks { .. }, Scheme::Percentile)
            | (Landmarks::Moments { .. }, Scheme::StdDev)
    );
    if !compatible {
        return Err(Error::InvalidEncoding(format!(
            "boundaries for `{}` were fitted under a different scheme",
            b.column
        )));
    }
    Ok(enc.level_text(b.level_index(value)))
}

/// One encoding applied to every continuous column of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnEncoders {
    pub encoding: Encoding,
    pub columns: BTreeMap<String, BinBoundaries>,
}

impl ColumnEncoders {
    /// Fits every continuous column on the given training rows.
    pub fn fit(ds: &TabularDataset, train_rows: &[usize], encoding: &Encoding) -> Result<Self> {
        let mut columns = BTreeMap::new();
        for (j, col) in ds.schema.iter().enumerate() {
            if col.kind != ColumnKind::Continuous {
                continue;
            }
            let values = ds
                .column_values(j, train_rows)
                .map(|s| parse_number(&col.name, s))
                .collect::<Result<Vec<_>>>()?;
            columns.insert(col.name.clone(), fit(&col.name, &values, encoding)?);
        }
        Ok(Self { encoding: encoding.clone(), columns })
    }

    pub fn encode_cell(&self, column: &str, raw: &str) -> Result<String> {
        let b = self.columns.get(column).ok_or_else(|| Error::NotFitted(column.to_string()))?;
        encode(parse_number(column, raw)?, b, &self.encoding)
    }

    /// Feature cells of a row with continuous values replaced by level text.
    pub fn encode_row(&self, ds: &TabularDataset, row: usize) -> Result<Vec<String>> {
        ds.schema
            .iter()
            .zip(&ds.rows[row])
            .map(|(col, cell)| match col.kind {
                ColumnKind::Continuous => self.encode_cell(&col.name, cell),
                ColumnKind::Discrete => Ok(cell.clone()),
            })
            .collect()
    }
}

fn parse_number(column: &str, raw: &str) -> Result<f64> {
    raw.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::InvalidArgument(format!("`{raw}` in column `{column}` is not a number")))
}

const ONES: [&str; 20] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven",
    "twelve", "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen", "nineteen",
];
const TENS: [&str; 10] = ["", "", "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety"];
const ORDINAL_ONES: [&str; 20] = [
    "zeroth", "first", "second", "third", "fourth", "fifth", "sixth", "seventh", "eighth", "ninth",
    "tenth", "eleventh", "twelfth", "thirteenth", "fourteenth", "fifteenth", "sixteenth",
    "seventeenth", "eighteenth", "nineteenth",
];
const ORDINAL_TENS: [&str; 10] = [
    "", "", "twentieth", "thirtieth", "fortieth", "fiftieth", "sixtieth", "seventieth", "eightieth",
    "ninetieth",
];

/// English words for 0..=100.
pub fn cardinal_words(n: usize) -> String {
    match n {
        0..=19 => ONES[n].to_string(),
        100 => "one hundred".to_string(),
        _ if n < 100 && n.is_multiple_of(10) => TENS[n / 10].to_string(),
        _ if n < 100 => format!("{}-{}", TENS[n / 10], ONES[n % 10]),
        _ => n.to_string(),
    }
}

/// English ordinal words for 0..=100 ("forty-first").
pub fn ordinal_words(n: usize) -> String {
    match n {
        0..=19 => ORDINAL_ONES[n].to_string(),
        100 => "one hundredth".to_string(),
        _ if n < 100 && n.is_multiple_of(10) => ORDINAL_TENS[n / 10].to_string(),
        _ if n < 100 => format!("{}-{}", TENS[n / 10], ORDINAL_ONES[n % 10]),
        _ => format!("{n}th"),
    }
}
