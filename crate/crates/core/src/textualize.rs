//! Natural-language descriptions of tabular records.
//!
//! A [`DataDescription`] keeps the feature text and the label text apart so
//! the same object serves as a labeled example (joined by the `###`
//! separator) and as an unlabeled query (feature text only).

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::dataset::TabularDataset;
use crate::discretize::ColumnEncoders;
use crate::error::{Error, Result};
use crate::llm::{CompletionRequest, LlmClient};
use crate::util::word_count;

pub const SEPARATOR: &str = "###";
pub const ATTRIBUTE_PREFIX: &str = "- ";
pub const ATTRIBUTE_SEPARATOR: &str = " : ";
/// Fixed wording of the conversion directive; also how conversion prompts
/// are recognized by the mock oracle.
pub const CONVERSION_MARKER: &str = "Describe the record above concisely and accurately";
pub const MIN_WORDS: usize = 20;
pub const MAX_WORDS: usize = 80;
pub const DEFAULT_RESAMPLE_CAP: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataDescription {
    pub row_index: usize,
    pub feature_text: String,
    pub label_text: String,
    #[serde(default = "default_separator", skip_serializing)]
    pub separator: String,
    #[serde(default, skip_serializing)]
    pub word_count: usize,
}

fn default_separator() -> String {
    SEPARATOR.to_string()
}

impl DataDescription {
    pub fn new(row_index: usize, feature_text: impl Into<String>, label_text: impl Into<String>) -> Self {
        let feature_text = feature_text.into();
        Self {
            row_index,
            word_count: word_count(&feature_text),
            feature_text,
            label_text: label_text.into(),
            separator: SEPARATOR.to_string(),
        }
    }

    /// Feature text, separator line, label text.
    pub fn labeled_text(&self) -> String {
        format!("{}\n{}\n{}", self.feature_text, self.separator, self.label_text)
    }

    /// The description with its label removed.
    pub fn query(&self) -> &str {
        &self.feature_text
    }
}

/// One record's cells by column name, continuous values already encoded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub row_index: usize,
    pub features: Vec<(String, String)>,
    pub label: Option<String>,
}

impl Record {
    pub fn from_dataset(ds: &TabularDataset, encoders: &ColumnEncoders, row: usize) -> Result<Self> {
        let cells = encoders.encode_row(ds, row)?;
        Ok(Self {
            row_index: row,
            features: ds.schema.iter().map(|c| c.name.clone()).zip(cells).collect(),
            label: ds.labels.get(row).map(|&l| ds.classes[l].clone()),
        })
    }

    fn lookup(&self, name: &str, target: &str) -> Option<&str> {
        if name == target {
            return self.label.as_deref();
        }
        self.features.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_str())
    }
}

/// A fill-in template with `{column}` placeholders and a `###` line between
/// the feature part and the label part.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub text: String,
    /// Placeholder alias -> column name, set by [`mask_attribute_names`].
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub aliases: BTreeMap<String, String>,
}

fn placeholder_regex() -> Regex {
    Regex::new(r"\{([^{}]+)\}").expect("static regex")
}

impl PromptTemplate {
    pub fn new(text: impl Into<String>) -> Self {
        Self { text: text.into(), aliases: BTreeMap::new() }
    }

    pub fn placeholders(&self) -> Vec<String> {
        placeholder_regex().captures_iter(&self.text).map(|c| c[1].to_string()).collect()
    }

    fn resolve<'a>(&'a self, placeholder: &'a str) -> &'a str {
        self.aliases.get(placeholder).map_or(placeholder, String::as_str)
    }

    /// Every placeholder must name a feature column or the target.
    pub fn validate(&self, ds: &TabularDataset) -> Result<()> {
        if !self.text.contains(SEPARATOR) {
            return Err(Error::InvalidArgument(format!("template has no `{SEPARATOR}` separator")));
        }
        for p in self.placeholders() {
            let col = self.resolve(&p);
            if col != ds.target && ds.column_index(col).is_none() {
                return Err(Error::MissingPlaceholder(p));
            }
        }
        Ok(())
    }
}

/// Fills `tmpl` from `record`, splitting at the separator.
pub fn describe_template(record: &Record, target: &str, tmpl: &PromptTemplate) -> Result<DataDescription> {
    let mut missing = None;
    let filled = placeholder_regex().replace_all(&tmpl.text, |c: &regex::Captures| {
        match record.lookup(tmpl.resolve(&c[1]), target) {
            Some(v) => v.to_string(),
            None => {
                missing.get_or_insert_with(|| c[1].to_string());
                String::new()
            }
        }
    });
    if let Some(p) = missing {
        return Err(Error::MissingPlaceholder(p));
    }
    let (features, label) = filled
        .split_once(SEPARATOR)
        .ok_or_else(|| Error::InvalidArgument(format!("template has no `{SEPARATOR}` separator")))?;
    Ok(DataDescription::new(record.row_index, features.trim(), label.trim()))
}

/// Replaces attribute names by `f1..fd`: "This example has features f1 = {f1}, ...".
///
/// The label part of the template is kept. Applying it to an already masked
/// template, or with no columns, returns the template unchanged.
pub fn mask_attribute_names(tmpl: &PromptTemplate, columns: &[String]) -> PromptTemplate {
    if columns.is_empty() || !tmpl.aliases.is_empty() {
        return tmpl.clone();
    }
    let label_part = tmpl.text.split_once(SEPARATOR).map_or("", |(_, l)| l.trim());
    let features = (1..=columns.len()).map(|i| format!("f{i} = {{f{i}}}")).collect::<Vec<_>>().join(", ");
    PromptTemplate {
        text: format!("This example has features {features}. {SEPARATOR} {label_part}"),
        aliases: columns.iter().enumerate().map(|(i, c)| (format!("f{}", i + 1), c.clone())).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConversionConfig {
    pub temperature: f64,
    pub max_tokens: usize,
    pub resample_cap: usize,
    /// Label sentence with `{target}` and `{class}` placeholders.
    pub label_template: String,
    /// Resample descriptions that name one of the classes.
    pub reject_class_mentions: bool,
}

impl Default for ConversionConfig {
    fn default() -> Self {
        Self {
            temperature: 0.8,
            max_tokens: 160,
            resample_cap: DEFAULT_RESAMPLE_CAP,
            label_template: "Therefore the {target} is {class}.".into(),
            reject_class_mentions: true,
        }
    }
}

/// Conversion prompt for one record: metadata, attribute listing, directive.
/// The target column never appears.
pub fn conversion_prompt(ds: &TabularDataset, record: &Record) -> String {
    let mut prompt = String::new();
    if !ds.metadata.trim().is_empty() {
        prompt.push_str(ds.metadata.trim());
        prompt.push_str("\n\n");
    }
    for (name, value) in &record.features {
        let label = ds
            .column_index(name)
            .and_then(|j| ds.schema[j].description.as_deref())
            .unwrap_or(name);
        prompt.push_str(&format!("{ATTRIBUTE_PREFIX}{label}{ATTRIBUTE_SEPARATOR}{value}\n"));
    }
    prompt.push_str(&format!("\n{CONVERSION_MARKER} in a short paragraph of plain English. Use your creativity.\n"));
    prompt
}

fn mentions_class(text: &str, classes: &[String]) -> bool {
    let words: Vec<String> = text
        .split(|c: char| !c.is_alphanumeric() && c != '-' && c != '_')
        .map(str::to_lowercase)
        .collect();
    classes.iter().any(|c| {
        let c = c.to_lowercase();
        if c.contains(char::is_whitespace) {
            text.to_lowercase().contains(&c)
        } else {
            words.contains(&c)
        }
    })
}

pub fn label_sentence(ds: &TabularDataset, cfg: &ConversionConfig, class: &str) -> String {
    cfg.label_template.replace("{target}", &ds.target).replace("{class}", class)
}

/// Asks the model for a description of the record's features, resampling
/// until one falls inside the word window.
pub fn describe_llm(
    record: &Record,
    ds: &TabularDataset,
    client: &LlmClient,
    cfg: &ConversionConfig,
) -> Result<DataDescription> {
    let prompt = conversion_prompt(ds, record);
    for attempt in 0..cfg.resample_cap {
        let req = CompletionRequest::new(prompt.clone(), cfg.temperature, cfg.max_tokens, attempt as u64);
        let text = client.complete(&req)?.text;
        let text = text.trim();
        let words = word_count(text);
        if !(MIN_WORDS..=MAX_WORDS).contains(&words) {
            continue;
        }
        if cfg.reject_class_mentions && mentions_class(text, &ds.classes) {
            continue;
        }
        let label = record.label.as_deref().map(|c| label_sentence(ds, cfg, c)).unwrap_or_default();
        return Ok(DataDescription::new(record.row_index, text, label));
    }
    Err(Error::LengthExhausted { row: record.row_index, attempts: cfg.resample_cap, min: MIN_WORDS, max: MAX_WORDS })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum DescriptionMethod {
    Template { template: PromptTemplate },
    Llm { config: ConversionConfig },
}

impl DescriptionMethod {
    pub fn describe(
        &self,
        ds: &TabularDataset,
        encoders: &ColumnEncoders,
        row: usize,
        client: &LlmClient,
    ) -> Result<DataDescription> {
        let record = Record::from_dataset(ds, encoders, row)?;
        match self {
            DescriptionMethod::Template { template } => describe_template(&record, &ds.target, template),
            DescriptionMethod::Llm { config } => describe_llm(&record, ds, client, config),
        }
    }
}

/// Describes the given rows concurrently; output order follows `rows`.
pub fn describe_rows(
    ds: &TabularDataset,
    encoders: &ColumnEncoders,
    rows: &[usize],
    method: &DescriptionMethod,
    client: &LlmClient,
) -> Result<Vec<DataDescription>> {
    if let DescriptionMethod::Template { template } = method {
        template.validate(ds)?;
    }
    rows.par_iter().map(|&r| method.describe(ds, encoders, r, client)).collect()
}

pub fn save_descriptions(path: impl AsRef<Path>, descriptions: &[DataDescription]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for d in descriptions {
        serde_json::to_writer(&mut out, d)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_descriptions(path: impl AsRef<Path>) -> Result<Vec<DataDescription>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let d: DataDescription = serde_json::from_str(&line)?;
        out.push(DataDescription::new(d.row_index, d.feature_text, d.label_text));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{ColumnKind, ColumnSpec};
    use crate::mock_oracle::{MockBackend, OracleSpec};
    use std::sync::Arc;

    fn iris_record() -> Record {
        Record {
            row_index: 7,
            features: vec![
                ("sepal_length".into(), "long".into()),
                ("sepal_width".into(), "wide".into()),
                ("petal_length".into(), "medium length".into()),
                ("petal_width".into(), "narrow".into()),
            ],
            label: Some("versicolor".into()),
        }
    }

    fn iris_template() -> PromptTemplate {
        PromptTemplate::new(
            "This iris flower has {sepal_length} and {sepal_width} sepals. It also has {petal_length} and \
             {petal_width} petals. ### Hence this flower is a {flower_type}",
        )
    }

    #[test]
    fn iris_template_fill() {
        let d = describe_template(&iris_record(), "flower_type", &iris_template()).unwrap();
        assert_eq!(
            d.feature_text,
            "This iris flower has long and wide sepals. It also has medium length and narrow petals."
        );
        assert_eq!(d.label_text, "Hence this flower is a versicolor");
        assert_eq!(d.row_index, 7);
        assert!(!d.query().contains("versicolor"));
        assert_eq!(d, describe_template(&iris_record(), "flower_type", &iris_template()).unwrap());
    }

    #[test]
    fn unknown_placeholder() {
        let t = PromptTemplate::new("Has {color}. ### {flower_type}");
        assert!(matches!(
            describe_template(&iris_record(), "flower_type", &t),
            Err(Error::MissingPlaceholder(p)) if p == "color"
        ));
    }

    #[test]
    fn masking() {
        let cols: Vec<String> = iris_record().features.iter().map(|(n, _)| n.clone()).collect();
        let masked = mask_attribute_names(&iris_template(), &cols);
        assert_eq!(masked.placeholders(), vec!["f1", "f2", "f3", "f4", "flower_type"]);
        assert_eq!(mask_attribute_names(&masked, &cols), masked);
        let d = describe_template(&iris_record(), "flower_type", &masked).unwrap();
        assert_eq!(d.feature_text, "This example has features f1 = long, f2 = wide, f3 = medium length, f4 = narrow.");
        assert_eq!(d.label_text, "Hence this flower is a versicolor");

        let empty = PromptTemplate::new("");
        assert_eq!(mask_attribute_names(&empty, &[]), empty);
    }

    fn tiny_dataset() -> TabularDataset {
        let schema = vec![
            ColumnSpec { name: "spending".into(), kind: ColumnKind::Discrete, description: Some("spending on milk products".into()) },
            ColumnSpec { name: "region".into(), kind: ColumnKind::Discrete, description: None },
        ];
        TabularDataset::new(
            schema,
            vec![vec!["very high".into(), "Outside Lisbon and Porto".into()]],
            "channel",
            vec!["retail".into(), "horeca".into()],
            vec![0],
            "Clients of a wholesale distributor.",
        )
        .unwrap()
    }

    fn record() -> Record {
        Record {
            row_index: 0,
            features: vec![("spending".into(), "very high".into()), ("region".into(), "Outside Lisbon and Porto".into())],
            label: Some("retail".into()),
        }
    }

    #[test]
    fn conversion_prompt_never_leaks_target() {
        let ds = tiny_dataset();
        let p = conversion_prompt(&ds, &record());
        assert!(p.starts_with("Clients of a wholesale distributor."));
        assert!(p.contains("- spending on milk products : very high"));
        assert!(p.contains("- region : Outside Lisbon and Porto"));
        assert!(p.contains("concisely and accurately"));
        assert!(p.contains("Use your creativity"));
        assert!(!p.contains("channel"));
        assert!(!p.contains("retail"));
    }

    fn client(responses: Vec<&str>) -> LlmClient {
        LlmClient::in_memory(Arc::new(MockBackend::new(OracleSpec::scripted(vec![(CONVERSION_MARKER, responses)])).unwrap()))
    }

    #[test]
    fn resamples_until_length_fits() {
        let short = "This customer spends a lot on milk.";
        let good = "This customer from outside Lisbon and Porto spends very high amounts on milk products and \
                    keeps a steady relationship with the distributor across every season of the year.";
        let c = client(vec![short, good]);
        let d = describe_llm(&record(), &tiny_dataset(), &c, &ConversionConfig::default()).unwrap();
        assert_eq!(d.feature_text, good);
        assert_eq!(d.label_text, "Therefore the channel is retail.");
        assert_eq!(c.backend_calls(), 2);
        assert!((MIN_WORDS..=MAX_WORDS).contains(&d.word_count));
    }

    #[test]
    fn length_exhausted_after_cap() {
        let c = client(vec!["only five words right here"]);
        let cfg = ConversionConfig { resample_cap: 10, ..Default::default() };
        assert!(matches!(
            describe_llm(&record(), &tiny_dataset(), &c, &cfg),
            Err(Error::LengthExhausted { attempts: 10, .. })
        ));
        assert_eq!(c.backend_calls(), 10);
    }

    #[test]
    fn class_mentions_are_resampled() {
        let leaky = "This retail customer from outside Lisbon and Porto spends very high amounts on milk products \
                     and keeps a steady relationship with the distributor all year.";
        let c = client(vec![leaky]);
        assert!(describe_llm(&record(), &tiny_dataset(), &c, &ConversionConfig::default()).is_err());
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let ds = vec![DataDescription::new(3, "a b c", "label x"), DataDescription::new(1, "d", "y")];
        save_descriptions(&path, &ds).unwrap();
        let raw = std::fs::read_to_string(&path).unwrap();
        assert_eq!(raw.lines().next().unwrap(), r#"{"row_index":3,"feature_text":"a b c","label_text":"label x"}"#);
        assert_eq!(load_descriptions(&path).unwrap(), ds);
    }
}
