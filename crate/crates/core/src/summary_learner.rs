//! Summary-based weak learner: a language model condenses a sampled set of
//! labeled descriptions into free text, and that text then classifies new
//! descriptions through a prefix prompt.

use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::TabularDataset;
use crate::error::{Error, Result};
use crate::llm::{count_tokens, CompletionRequest, LlmClient, INFERENCE_TEMPERATURE, SUMMARY_TEMPERATURE};
use crate::sampling::ClusterModel;
use crate::textualize::DataDescription;
use crate::util::rng_for;

pub const DEFAULT_CANDIDATES: usize = 25;
pub const SUMMARY_MAX_TOKENS: usize = 120;
pub const INFERENCE_MAX_TOKENS: usize = 10;
pub const TLDR: &str = "Tl;dr";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Directive {
    #[default]
    Tldr,
    Explicit(String),
}

impl Directive {
    pub fn text(&self) -> Result<&str> {
        match self {
            Directive::Tldr => Ok(TLDR),
            Directive::Explicit(t) if t.trim().is_empty() => Err(Error::EmptyDirective),
            Directive::Explicit(t) => Ok(t),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ExampleOrder {
    #[default]
    Shuffled,
    Grouped,
}

/// Per-dataset prompt parameters as written in a prompts file. Missing
/// fields fall back to the dataset's own metadata and a generated prefix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct PromptConfig {
    pub metadata: Option<String>,
    pub summary_directive: Directive,
    pub inference_prefix: Option<String>,
    pub example_order: ExampleOrder,
    pub summary_max_tokens: Option<usize>,
    pub inference_max_tokens: Option<usize>,
}

impl PromptConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }

    pub fn resolve(&self, ds: &TabularDataset) -> Result<PromptSettings> {
        let settings = PromptSettings {
            metadata: self.metadata.clone().unwrap_or_else(|| ds.metadata.clone()),
            classes: ds.classes.clone(),
            directive: self.summary_directive.clone(),
            inference_prefix: self
                .inference_prefix
                .clone()
                .unwrap_or_else(|| default_inference_prefix(&ds.target, &ds.classes)),
            order: self.example_order,
            summary_max_tokens: self.summary_max_tokens.unwrap_or(SUMMARY_MAX_TOKENS),
            inference_max_tokens: self.inference_max_tokens.unwrap_or(INFERENCE_MAX_TOKENS),
        };
        settings.validate()?;
        Ok(settings)
    }
}

pub fn default_inference_prefix(target: &str, classes: &[String]) -> String {
    format!("Therefore the {target} is likely to be ({}):", classes.join(", "))
}

/// Prompt parameters resolved against a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSettings {
    pub metadata: String,
    pub classes: Vec<String>,
    pub directive: Directive,
    pub inference_prefix: String,
    pub order: ExampleOrder,
    pub summary_max_tokens: usize,
    pub inference_max_tokens: usize,
}

impl PromptSettings {
    pub fn validate(&self) -> Result<()> {
        self.directive.text()?;
        if self.classes.is_empty() {
            return Err(Error::TooFewClasses(0));
        }
        let prefix = self.inference_prefix.to_lowercase();
        if let Some(missing) = self.classes.iter().find(|c| !prefix.contains(&c.to_lowercase())) {
            return Err(Error::InvalidArgument(format!("inference prefix does not name class `{missing}`")));
        }
        if self.summary_max_tokens == 0 || self.inference_max_tokens == 0 {
            return Err(Error::InvalidArgument("completion token budgets must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryHypothesis {
    pub summary_text: String,
    pub summary_directive: Directive,
    pub inference_prefix: String,
    pub classes: Vec<String>,
    pub example_order: ExampleOrder,
    /// Row indices of the descriptions that made it into the prompt.
    pub source_sample: Vec<usize>,
    pub attempt: u64,
    #[serde(default = "default_inference_tokens")]
    pub inference_max_tokens: usize,
}

fn default_inference_tokens() -> usize {
    INFERENCE_MAX_TOKENS
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub validation_error: f64,
    pub training_error: f64,
}

fn summary_prompt(metadata: &str, examples: &[String], directive: &str) -> String {
    let mut prompt = String::new();
    if !metadata.trim().is_empty() {
        prompt.push_str(metadata.trim());
        prompt.push_str("\n\n");
    }
    for ex in examples {
        prompt.push_str(ex);
        prompt.push_str("\n\n");
    }
    prompt.push_str(directive);
    prompt
}

/// Orders the samples, drops whole trailing examples until the prompt fits,
/// and returns the prompt with the row indices it contains.
pub fn build_summary_prompt(
    samples: &[&DataDescription],
    sample_classes: &[usize],
    settings: &PromptSettings,
    context_limit: usize,
    attempt: u64,
    seed: u64,
) -> Result<(String, Vec<usize>)> {
    if samples.len() != sample_classes.len() {
        return Err(Error::LengthMismatch(samples.len(), sample_classes.len()));
    }
    let directive = settings.directive.text()?;
    let mut order: Vec<usize> = (0..samples.len()).collect();
    match settings.order {
        ExampleOrder::Shuffled => order.shuffle(&mut rng_for(seed, "summary-order", attempt)),
        ExampleOrder::Grouped => order.sort_by_key(|&i| sample_classes[i]),
    }
    let texts: Vec<String> = order.iter().map(|&i| samples[i].labeled_text()).collect();
    let fits = |n: usize| count_tokens(&summary_prompt(&settings.metadata, &texts[..n], directive)) + settings.summary_max_tokens <= context_limit;
    let n = (1..=texts.len()).take_while(|&n| fits(n)).last().unwrap_or(0);
    if n == 0 {
        let needed = count_tokens(&summary_prompt(&settings.metadata, &texts[..texts.len().min(1)], directive)) + settings.summary_max_tokens;
        return Err(Error::ContextOverflow { needed, limit: context_limit });
    }
    let rows = order[..n].iter().map(|&i| samples[i].row_index).collect();
    Ok((summary_prompt(&settings.metadata, &texts[..n], directive), rows))
}

pub fn summarize(
    samples: &[&DataDescription],
    sample_classes: &[usize],
    settings: &PromptSettings,
    client: &LlmClient,
    attempt: u64,
    seed: u64,
) -> Result<SummaryHypothesis> {
    let (prompt, rows) = build_summary_prompt(samples, sample_classes, settings, client.config().context_limit, attempt, seed)?;
    let req = CompletionRequest::new(prompt, SUMMARY_TEMPERATURE, settings.summary_max_tokens, attempt);
    let text = client.complete(&req)?.text.trim().to_string();
    if text.is_empty() {
        return Err(Error::EmptySummary);
    }
    Ok(SummaryHypothesis {
        summary_text: text,
        summary_directive: settings.directive.clone(),
        inference_prefix: settings.inference_prefix.clone(),
        classes: settings.classes.clone(),
        example_order: settings.order,
        source_sample: rows,
        attempt,
        inference_max_tokens: settings.inference_max_tokens,
    })
}

pub fn inference_prompt(h: &SummaryHypothesis, query: &str) -> String {
    format!("{}\n\n{}\n\n{}", h.summary_text, query.trim(), h.inference_prefix)
}

/// Case-insensitive class lookup. Longer names are matched first and their
/// spans masked, so a class name that is a substring of another still maps
/// uniquely. No hit or several distinct hits is a failure.
pub fn map_answer(completion: &str, classes: &[String]) -> Result<usize> {
    if classes.is_empty() {
        return Err(Error::TooFewClasses(0));
    }
    let mut text = completion.to_lowercase();
    let mut by_length: Vec<usize> = (0..classes.len()).collect();
    by_length.sort_by_key(|&i| std::cmp::Reverse(classes[i].chars().count()));
    let mut hits = Vec::new();
    for i in by_length {
        let name = classes[i].to_lowercase();
        if name.is_empty() || !text.contains(&name) {
            continue;
        }
        hits.push(i);
        text = text.replace(&name, &"\u{0}".repeat(name.chars().count()));
    }
    match hits.as_slice() {
        [one] => Ok(*one),
        _ => Err(Error::MappingFailure(completion.to_string())),
    }
}

/// Classifies one query, retrying once at the next attempt index if the
/// answer cannot be mapped to a class.
pub fn infer(h: &SummaryHypothesis, query: &DataDescription, client: &LlmClient) -> Result<usize> {
    let prompt = inference_prompt(h, query.query());
    let mut last = None;
    for attempt in 0..2 {
        let req = CompletionRequest::new(prompt.clone(), INFERENCE_TEMPERATURE, h.inference_max_tokens, attempt);
        match map_answer(&client.complete(&req)?.text, &h.classes) {
            Ok(k) => return Ok(k),
            Err(e) => last = Some(e),
        }
    }
    Err(last.expect("two attempts"))
}

/// Like [`infer`] but maps an unparseable answer to `None`.
pub fn infer_lenient(h: &SummaryHypothesis, query: &DataDescription, client: &LlmClient) -> Result<Option<usize>> {
    match infer(h, query, client) {
        Ok(k) => Ok(Some(k)),
        Err(Error::MappingFailure(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

pub fn predict_all(h: &SummaryHypothesis, queries: &[DataDescription], client: &LlmClient) -> Result<Vec<Option<usize>>> {
    queries.par_iter().map(|q| infer_lenient(h, q, client)).collect()
}

/// Fraction of points whose prediction is missing or wrong.
pub fn error_rate(preds: &[Option<usize>], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let wrong = preds.iter().zip(labels).filter(|(p, y)| **p != Some(**y)).count();
    wrong as f64 / labels.len() as f64
}

/// Class proportions of a label vector.
pub fn class_ratios(labels: &[usize], num_classes: usize) -> Vec<f64> {
    let mut counts = vec![0.0; num_classes];
    for &y in labels {
        counts[y] += 1.0;
    }
    let n = labels.len().max(1) as f64;
    counts.iter().map(|c| c / n).collect()
}

/// Training and validation descriptions with their class indices.
#[derive(Debug, Clone, Copy)]
pub struct LearningSet<'a> {
    pub train: &'a [DataDescription],
    pub train_labels: &'a [usize],
    pub val: &'a [DataDescription],
    pub val_labels: &'a [usize],
}

impl LearningSet<'_> {
    pub fn validate(&self) -> Result<()> {
        if self.train.len() != self.train_labels.len() {
            return Err(Error::LengthMismatch(self.train.len(), self.train_labels.len()));
        }
        if self.val.len() != self.val_labels.len() {
            return Err(Error::LengthMismatch(self.val.len(), self.val_labels.len()));
        }
        if self.train.is_empty() {
            return Err(Error::EmptyTrainSet);
        }
        if self.val.is_empty() {
            return Err(Error::InvalidArgument("validation set is empty".into()));
        }
        Ok(())
    }
}

/// Largest support set expected to fit the summary prompt, based on the
/// mean size of a labeled description.
pub fn support_size_for_budget(descriptions: &[DataDescription], settings: &PromptSettings, context_limit: usize) -> usize {
    if descriptions.is_empty() {
        return 0;
    }
    let fixed = count_tokens(&summary_prompt(&settings.metadata, &[], settings.directive.text().unwrap_or(TLDR)))
        + settings.summary_max_tokens;
    let budget = context_limit.saturating_sub(fixed);
    let total: usize = descriptions.iter().map(|d| count_tokens(&d.labeled_text()) + 1).sum();
    let mean = (total as f64 / descriptions.len() as f64).max(1.0);
    ((budget as f64 / mean).floor() as usize).clamp(1, descriptions.len())
}

/// Draws support sets by cluster sampling and turns them into hypotheses.
pub struct SummaryLearner<'a> {
    pub data: LearningSet<'a>,
    pub settings: &'a PromptSettings,
    pub clusters: ClusterModel,
    pub ratios: Vec<f64>,
    pub client: &'a LlmClient,
    pub sample_size: usize,
    pub seed: u64,
}

impl<'a> SummaryLearner<'a> {
    /// Embeds and clusters the training descriptions once.
    pub fn new(
        data: LearningSet<'a>,
        settings: &'a PromptSettings,
        client: &'a LlmClient,
        cluster_threshold: f64,
        sample_size: Option<usize>,
        seed: u64,
    ) -> Result<Self> {
        data.validate()?;
        settings.validate()?;
        let k = settings.classes.len();
        let clusters = ClusterModel::from_descriptions(data.train, data.train_labels, k, client, cluster_threshold)?;
        let sample_size = sample_size
            .unwrap_or_else(|| support_size_for_budget(data.train, settings, client.config().context_limit))
            .min(data.train.len());
        Ok(Self { data, settings, clusters, ratios: class_ratios(data.train_labels, k), client, sample_size, seed })
    }

    /// Samples under `weights` and summarizes, both keyed by `attempt`.
    pub fn candidate(&self, weights: &[f64], attempt: u64) -> Result<SummaryHypothesis> {
        let mut rng = rng_for(self.seed, "support", attempt);
        let picked = self.clusters.sample(weights, self.sample_size, &self.ratios, &mut rng)?;
        let samples: Vec<&DataDescription> = picked.iter().map(|&i| &self.data.train[i]).collect();
        let classes: Vec<usize> = picked.iter().map(|&i| self.data.train_labels[i]).collect();
        summarize(&samples, &classes, self.settings, self.client, attempt, self.seed)
    }

    pub fn train_predictions(&self, h: &SummaryHypothesis) -> Result<Vec<Option<usize>>> {
        predict_all(h, self.data.train, self.client)
    }

    pub fn validation_predictions(&self, h: &SummaryHypothesis) -> Result<Vec<Option<usize>>> {
        predict_all(h, self.data.val, self.client)
    }

    pub fn uniform_weights(&self) -> Vec<f64> {
        vec![1.0 / self.data.train.len() as f64; self.data.train.len()]
    }

    /// Generates `candidates` hypotheses under uniform weights and keeps the
    /// one with the lowest validation error. Ties prefer the higher training
    /// error, then the earlier attempt.
    pub fn fit(&self, candidates: usize) -> Result<(SummaryHypothesis, CandidateScore)> {
        let uniform = self.uniform_weights();
        let scored: Vec<Option<(SummaryHypothesis, CandidateScore)>> = (0..candidates as u64)
            .into_par_iter()
            .map(|attempt| -> Result<_> {
                let h = self.candidate(&uniform, attempt)?;
                let val = self.validation_predictions(&h)?;
                if val.iter().all(Option::is_none) {
                    return Ok(None);
                }
                let train = self.train_predictions(&h)?;
                let score = CandidateScore {
                    validation_error: error_rate(&val, self.data.val_labels),
                    training_error: error_rate(&train, self.data.train_labels),
                };
                Ok(Some((h, score)))
            })
            .collect::<Result<_>>()?;
        select_candidate(scored.into_iter().flatten().collect()).ok_or(Error::AllCandidatesFailed)
    }
}

/// Deterministic reduction over scored candidates (see [`SummaryLearner::fit`]).
pub fn select_candidate(mut scored: Vec<(SummaryHypothesis, CandidateScore)>) -> Option<(SummaryHypothesis, CandidateScore)> {
    scored.sort_by(|(ha, a), (hb, b)| {
        a.validation_error
            .total_cmp(&b.validation_error)
            .then(b.training_error.total_cmp(&a.training_error))
            .then(ha.attempt.cmp(&hb.attempt))
    });
    scored.into_iter().next()
}
