//! Offline stand-in for a language model.
//!
//! Two modes:
//! - `scripted`: the first rule whose pattern occurs in the prompt answers
//!   with `responses[attempt % len]`. A rule may list extra substrings that
//!   must also occur.
//! - `noisy_rule`: a labeling rule over feature levels found in the prompt,
//!   with answers flipped at a seeded rate. It also answers summary and
//!   conversion prompts, told apart by marker substrings, so the pipeline runs
//!   unchanged against it.
//!
//! Both modes are pure functions of `(prompt, attempt, seed)`. Embeddings are
//! hash-seeded vectors, so identical texts embed identically.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::dataset::{ColumnKind, ColumnSpec, TabularDataset};
use crate::error::{Error, Result};
use crate::llm::{count_tokens, Backend, BackendError, Completion, CompletionRequest, EmbeddingVector, DEFAULT_EMBEDDING_DIM};
use crate::textualize::{ATTRIBUTE_PREFIX, ATTRIBUTE_SEPARATOR, CONVERSION_MARKER};
use crate::util::{digest_hex, digest_u64, rng_for, unit_interval};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptRule {
    pub pattern: String,
    /// Further substrings that must all occur alongside `pattern`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub requires: Vec<String>,
    pub responses: Vec<String>,
}

impl ScriptRule {
    pub fn matches(&self, prompt: &str) -> bool {
        prompt.contains(&self.pattern) && self.requires.iter().all(|r| prompt.contains(r))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisyRule {
    pub classes: Vec<String>,
    /// Regex with one capture group extracting the deciding feature level.
    /// The last match in the prompt is used, which is the query.
    pub query_pattern: String,
    /// Captured level -> class name.
    pub labels: BTreeMap<String, String>,
    /// Probability of answering with a wrong class.
    pub flip: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_summary_marker")]
    pub summary_marker: String,
    #[serde(default = "default_describe_marker")]
    pub describe_marker: String,
}

fn default_summary_marker() -> String {
    "Tl;dr".into()
}

fn default_describe_marker() -> String {
    CONVERSION_MARKER.into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum OracleMode {
    Scripted { rules: Vec<ScriptRule> },
    NoisyRule(NoisyRule),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSpec {
    #[serde(flatten)]
    pub mode: OracleMode,
    #[serde(default = "default_dim")]
    pub embedding_dim: usize,
}

fn default_dim() -> usize {
    DEFAULT_EMBEDDING_DIM
}

impl OracleSpec {
    pub fn scripted(rules: Vec<(&str, Vec<&str>)>) -> Self {
        let rules = rules
            .into_iter()
            .map(|(p, r)| ScriptRule {
                pattern: p.to_string(),
                requires: Vec::new(),
                responses: r.into_iter().map(String::from).collect() })
            .collect();
        Self { mode: OracleMode::Scripted { rules }, embedding_dim: DEFAULT_EMBEDDING_DIM }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }

    pub fn validate(&self) -> Result<()> {
        match &self.mode {
            OracleMode::Scripted { rules } => {
                if let Some(r) = rules.iter().find(|r| r.responses.is_empty()) {
                    return Err(Error::InvalidArgument(format!("rule `{}` has no responses", r.pattern)));
                }
            }
            OracleMode::NoisyRule(rule) => {
                if !(0.0..0.5).contains(&rule.flip) {
                    return Err(Error::InvalidArgument(format!("flip probability {} outside [0, 0.5)", rule.flip)));
                }
                if rule.classes.len() < 2 {
                    return Err(Error::TooFewClasses(rule.classes.len()));
                }
                if let Some(c) = rule.labels.values().find(|c| !rule.classes.contains(c)) {
                    return Err(Error::InvalidArgument(format!("rule label `{c}` is not a class")));
                }
                Regex::new(&rule.query_pattern)?;
            }
        }
        if self.embedding_dim == 0 {
            return Err(Error::InvalidArgument("embedding dimension must be positive".into()));
        }
        Ok(())
    }
}

pub struct MockBackend {
    spec: OracleSpec,
    query_regex: Option<Regex>,
    model_id: String,
}

impl MockBackend {
    pub fn new(spec: OracleSpec) -> Result<Self> {
        spec.validate()?;
        let query_regex = match &spec.mode {
            OracleMode::NoisyRule(rule) => Some(Regex::new(&rule.query_pattern)?),
            OracleMode::Scripted { .. } => None,
        };
        let model_id = format!("mock-{}", &digest_hex([serde_json::to_vec(&spec)?])[..12]);
        Ok(Self { spec, query_regex, model_id })
    }

    pub fn spec(&self) -> &OracleSpec {
        &self.spec
    }

    /// The oracle's answer to `prompt` at `attempt`.
    pub fn respond(&self, prompt: &str, attempt: u64) -> Result<String> {
        match &self.spec.mode {
            OracleMode::Scripted { rules } => rules
                .iter()
                .find(|r| r.matches(prompt))
                .map(|r| r.responses[(attempt % r.responses.len() as u64) as usize].clone())
                .ok_or(Error::NoPatternMatch),
            OracleMode::NoisyRule(rule) => {
                if prompt.contains(&rule.describe_marker) {
                    Ok(describe_attributes(prompt))
                } else if prompt.contains(&rule.summary_marker) {
                    let tag = &digest_hex([prompt.as_bytes(), &attempt.to_le_bytes()])[..10];
                    Ok(format!("Hypothesis {tag}: the outcome follows the recorded attributes."))
                } else {
                    self.noisy_label(rule, prompt, attempt)
                }
            }
        }
    }

    fn noisy_label(&self, rule: &NoisyRule, prompt: &str, attempt: u64) -> Result<String> {
        let regex = self.query_regex.as_ref().expect("compiled in new");
        let level = regex
            .captures_iter(prompt)
            .last()
            .and_then(|c| c.get(1))
            .map(|m| m.as_str())
            .ok_or(Error::NoPatternMatch)?;
        let truth = rule.labels.get(level).ok_or(Error::NoPatternMatch)?;
        let truth_idx = rule.classes.iter().position(|c| c == truth).expect("validated");
        let h = digest_u64([rule.seed.to_le_bytes().as_slice(), prompt.as_bytes(), &attempt.to_le_bytes()]);
        if unit_interval(h) >= rule.flip {
            return Ok(truth.clone());
        }
        let k = rule.classes.len();
        let shift = 1 + (h.rotate_left(17) % (k as u64 - 1)) as usize;
        Ok(rule.classes[(truth_idx + shift) % k].clone())
    }

    pub fn embedding(&self, text: &str) -> EmbeddingVector {
        let mut rng = rng_for(0, text, 0);
        EmbeddingVector::new((0..self.spec.embedding_dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect())
    }
}

/// Turns the attribute listing of a conversion prompt into sentences padded
/// to at least 20 words.
fn describe_attributes(prompt: &str) -> String {
    let mut sentences: Vec<String> = prompt
        .lines()
        .filter_map(|l| l.strip_prefix(ATTRIBUTE_PREFIX))
        .filter_map(|l| l.split_once(ATTRIBUTE_SEPARATOR))
        .map(|(name, value)| format!("The {} is {}.", name.trim(), value.trim()))
        .collect();
    while sentences.iter().map(|s| s.split_whitespace().count()).sum::<usize>() < 20 {
        sentences.push("Nothing else about this record stands out.".into());
    }
    sentences.join(" ")
}

impl Backend for MockBackend {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn complete(&self, request: &CompletionRequest) -> std::result::Result<Completion, BackendError> {
        let text = self.respond(&request.prompt, request.attempt)?;
        Ok(Completion {
            prompt_tokens: count_tokens(&request.prompt),
            completion_tokens: count_tokens(&text),
            text,
        })
    }

    fn embed(&self, texts: &[String]) -> std::result::Result<Vec<EmbeddingVector>, BackendError> {
        Ok(texts.iter().map(|t| self.embedding(t)).collect())
    }
}

/// Template matching the oracle's query pattern for [`synthetic_task`] data.
pub const SYNTHETIC_TEMPLATE: &str =
    "The signal is {signal}, the size is {size} and the tag is {tag}. ### The outcome is {outcome}.";

/// A two-class dataset whose label follows its `signal` column, with a
/// noisy-rule oracle that answers correctly with probability `1 - flip`.
/// The `tag` column makes every description unique.
pub fn synthetic_task(rows: usize, flip: f64, seed: u64) -> Result<(TabularDataset, OracleSpec)> {
    let mut rng = rng_for(seed, "synthetic", 0);
    let schema = vec![
        ColumnSpec { name: "signal".into(), kind: ColumnKind::Discrete, description: Some("signal strength".into()) },
        ColumnSpec { name: "size".into(), kind: ColumnKind::Continuous, description: Some("object size".into()) },
        ColumnSpec { name: "tag".into(), kind: ColumnKind::Discrete, description: Some("record tag".into()) },
    ];
    let mut cells = Vec::with_capacity(rows);
    let mut labels = Vec::with_capacity(rows);
    for i in 0..rows {
        let strong = rng.gen_bool(0.5);
        cells.push(vec![
            if strong { "strong" } else { "weak" }.to_string(),
            format!("{:.1}", rng.gen_range(0.0..100.0)),
            format!("r{i:04}"),
        ]);
        labels.push(if strong { 0 } else { 1 });
    }
    let classes = vec!["yes".to_string(), "no".to_string()];
    let ds = TabularDataset::new(
        schema,
        cells,
        "outcome",
        classes.clone(),
        labels,
        "Synthetic records whose outcome depends on the signal strength.",
    )?;
    let spec = OracleSpec {
        mode: OracleMode::NoisyRule(NoisyRule {
            classes,
            query_pattern: r"signal is (\w+)".into(),
            labels: [("strong".to_string(), "yes".to_string()), ("weak".to_string(), "no".to_string())].into(),
            flip,
            seed,
            summary_marker: default_summary_marker(),
            describe_marker: default_describe_marker(),
        }),
        embedding_dim: 64,
    };
    spec.validate()?;
    Ok((ds, spec))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noisy(flip: f64) -> MockBackend {
        let spec = OracleSpec {
            mode: OracleMode::NoisyRule(NoisyRule {
                classes: vec!["no".into(), "yes".into()],
                query_pattern: r"shade is (\w+)".into(),
                labels: [("pale".to_string(), "no".to_string()), ("dark".to_string(), "yes".to_string())].into(),
                flip,
                seed: 11,
                summary_marker: default_summary_marker(),
                describe_marker: default_describe_marker(),
            }),
            embedding_dim: 8,
        };
        MockBackend::new(spec).unwrap()
    }

    #[test]
    fn scripted_cycles_by_attempt() {
        let m = MockBackend::new(OracleSpec::scripted(vec![("Q", vec!["A", "B"])])).unwrap();
        assert_eq!(m.respond("a Q here", 3).unwrap(), "B");
        assert_eq!(m.respond("a Q here", 4).unwrap(), "A");
        assert!(matches!(m.respond("nothing", 0), Err(Error::NoPatternMatch)));
    }

    #[test]
    fn noisy_rule_without_flips_follows_rule() {
        let m = noisy(0.0);
        for i in 0..50 {
            assert_eq!(m.respond(&format!("h{i}\nThe shade is dark.\nSo:"), i).unwrap(), "yes");
            assert_eq!(m.respond(&format!("h{i}\nThe shade is pale.\nSo:"), i).unwrap(), "no");
        }
    }

    #[test]
    fn noisy_rule_uses_last_match() {
        let m = noisy(0.0);
        assert_eq!(m.respond("The shade is dark. ### yes\nThe shade is pale.\n", 0).unwrap(), "no");
    }

    #[test]
    fn flip_rate_matches() {
        let m = noisy(0.3);
        let flips = (0..1000)
            .filter(|i| m.respond(&format!("hyp {i}\nThe shade is dark."), 0).unwrap() != "yes")
            .count();
        let rate = flips as f64 / 1000.0;
        assert!((rate - 0.3).abs() <= 0.03, "{rate}");
    }

    #[test]
    fn summary_and_conversion_prompts() {
        let m = noisy(0.2);
        let s = m.respond("examples...\nTl;dr", 2).unwrap();
        assert!(s.starts_with("Hypothesis "));
        assert_eq!(s, m.respond("examples...\nTl;dr", 2).unwrap());
        assert_ne!(s, m.respond("examples...\nTl;dr", 3).unwrap());

        let prompt = format!("meta\n{ATTRIBUTE_PREFIX}shade{ATTRIBUTE_SEPARATOR}dark\n{CONVERSION_MARKER}");
        let d = m.respond(&prompt, 0).unwrap();
        assert!(d.starts_with("The shade is dark."));
        assert!(d.split_whitespace().count() >= 20);
    }

    #[test]
    fn embeddings_are_deterministic() {
        let m = noisy(0.0);
        let v = m.embed(&["a".into(), "a".into(), "b".into()]).unwrap();
        assert_eq!(v[0], v[1]);
        assert_ne!(v[0], v[2]);
        assert_eq!(v[0].dimension(), 8);
        let d = MockBackend::new(OracleSpec::scripted(vec![])).unwrap();
        assert_eq!(d.embedding("x").dimension(), 1536);
    }

    #[test]
    fn invalid_specs() {
        let mut spec = noisy(0.0).spec().clone();
        if let OracleMode::NoisyRule(r) = &mut spec.mode {
            r.flip = 0.5;
        }
        assert!(MockBackend::new(spec).is_err());
    }

    #[test]
    fn spec_json_shape() {
        let js = r#"{"mode":"scripted","rules":[{"pattern":"x","responses":["y"]}]}"#;
        let spec: OracleSpec = serde_json::from_str(js).unwrap();
        assert_eq!(spec.embedding_dim, 1536);
        let js = r#"{"mode":"noisy_rule","classes":["a","b"],"query_pattern":"v=(\\w)","labels":{"1":"a"},"flip":0.1}"#;
        let spec: OracleSpec = serde_json::from_str(js).unwrap();
        assert!(MockBackend::new(spec).is_ok());
    }
}
