//! Reference classifiers: zero-shot prompting, few-shot prompting with a
//! validated support set, and nearest neighbours over embeddings.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::llm::{count_tokens, CompletionRequest, EmbeddingVector, LlmClient, INFERENCE_TEMPERATURE};
use crate::sampling::{cosine_distance, ClusterModel};
use crate::summary_learner::{class_ratios, error_rate, map_answer, LearningSet, PromptSettings};
use crate::textualize::DataDescription;
use crate::util::rng_for;

pub const DEFAULT_SUPPORT_SIZE: usize = 15;
pub const KNN_CANDIDATES: [usize; 4] = [1, 3, 5, 7];
/// Room left for the query when sizing a few-shot prompt.
const QUERY_SLACK_TOKENS: usize = 32;

fn classify_prompt(prompt: &str, classes: &[String], max_tokens: usize, client: &LlmClient) -> Result<Option<usize>> {
    let req = CompletionRequest::new(prompt, INFERENCE_TEMPERATURE, max_tokens, 0);
    match map_answer(&client.complete(&req)?.text, classes) {
        Ok(k) => Ok(Some(k)),
        Err(Error::MappingFailure(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

pub fn zero_shot_prompt(settings: &PromptSettings, query: &DataDescription) -> String {
    let mut prompt = String::new();
    if !settings.metadata.trim().is_empty() {
        prompt.push_str(settings.metadata.trim());
        prompt.push_str("\n\n");
    }
    prompt.push_str(query.query().trim());
    prompt.push_str("\n\n");
    prompt.push_str(&settings.inference_prefix);
    prompt
}

/// Metadata, the query and the class-listing prefix; `None` when the
/// answer names no single class.
pub fn zero_shot(query: &DataDescription, settings: &PromptSettings, client: &LlmClient) -> Result<Option<usize>> {
    classify_prompt(&zero_shot_prompt(settings, query), &settings.classes, settings.inference_max_tokens, client)
}

pub fn zero_shot_all(queries: &[DataDescription], settings: &PromptSettings, client: &LlmClient) -> Result<Vec<Option<usize>>> {
    queries.par_iter().map(|q| zero_shot(q, settings, client)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShotPrompt {
    /// Metadata followed by the labeled support examples.
    pub header: String,
    pub support_rows: Vec<usize>,
    pub inference_prefix: String,
    pub classes: Vec<String>,
    pub attempt: u64,
    pub max_tokens: usize,
}

impl FewShotPrompt {
    pub fn render(&self, query: &DataDescription) -> String {
        format!("{}{}\n{}", self.header, query.query().trim(), self.inference_prefix)
    }

    pub fn classify(&self, query: &DataDescription, client: &LlmClient) -> Result<Option<usize>> {
        classify_prompt(&self.render(query), &self.classes, self.max_tokens, client)
    }

    pub fn classify_all(&self, queries: &[DataDescription], client: &LlmClient) -> Result<Vec<Option<usize>>> {
        queries.par_iter().map(|q| self.classify(q, client)).collect()
    }
}

/// Few-shot prompting with support sets drawn by cluster sampling under
/// uniform weights.
pub struct FewShot<'a> {
    pub data: LearningSet<'a>,
    pub settings: &'a PromptSettings,
    pub clusters: &'a ClusterModel,
    pub client: &'a LlmClient,
    pub support_size: usize,
    pub seed: u64,
}

impl FewShot<'_> {
    pub fn candidate(&self, attempt: u64) -> Result<FewShotPrompt> {
        let n = self.data.train.len();
        let ratios = class_ratios(self.data.train_labels, self.settings.classes.len());
        let uniform = vec![1.0 / n as f64; n];
        let size = self.support_size.min(n);
        let mut picked = self.clusters.sample(&uniform, size, &ratios, &mut rng_for(self.seed, "few-shot", attempt))?;
        picked.shuffle(&mut rng_for(self.seed, "few-shot-order", attempt));

        let longest_query = self.data.train.iter().chain(self.data.val).map(|d| count_tokens(d.query())).max().unwrap_or(0);
        let reserve = longest_query + count_tokens(&self.settings.inference_prefix) + self.settings.inference_max_tokens + QUERY_SLACK_TOKENS;
        let limit = self.client.config().context_limit;
        let mut header = String::new();
        if !self.settings.metadata.trim().is_empty() {
            header.push_str(self.settings.metadata.trim());
            header.push_str("\n\n");
        }
        if count_tokens(&header) + reserve > limit {
            return Err(Error::ContextOverflow { needed: count_tokens(&header) + reserve, limit });
        }
        let mut rows = Vec::new();
        for &i in &picked {
            let block = format!("{}\n\n", self.data.train[i].labeled_text());
            if count_tokens(&header) + count_tokens(&block) + reserve > limit {
                break;
            }
            header.push_str(&block);
            rows.push(self.data.train[i].row_index);
        }
        Ok(FewShotPrompt {
            header,
            support_rows: rows,
            inference_prefix: self.settings.inference_prefix.clone(),
            classes: self.settings.classes.clone(),
            attempt,
            max_tokens: self.settings.inference_max_tokens,
        })
    }

    /// Keeps the support set with the lowest validation error; ties go to the
    /// earlier attempt.
    pub fn fit(&self, candidates: usize) -> Result<(FewShotPrompt, f64)> {
        self.data.validate()?;
        let scored: Vec<Option<(FewShotPrompt, f64)>> = (0..candidates as u64)
            .into_par_iter()
            .map(|attempt| -> Result<_> {
                let prompt = self.candidate(attempt)?;
                let preds = prompt.classify_all(self.data.val, self.client)?;
                if preds.iter().all(Option::is_none) {
                    return Ok(None);
                }
                Ok(Some((prompt, error_rate(&preds, self.data.val_labels))))
            })
            .collect::<Result<_>>()?;
        scored
            .into_iter()
            .flatten()
            .min_by(|(pa, a), (pb, b)| a.total_cmp(b).then(pa.attempt.cmp(&pb.attempt)))
            .ok_or(Error::AllCandidatesFailed)
    }
}

/// Majority label of the `k` nearest training embeddings under cosine
/// distance. Equal distances keep training order; tied votes go to the class
/// with the smaller mean distance, then the lower class index.
pub fn knn_classify(query: &EmbeddingVector, train: &[EmbeddingVector], labels: &[usize], k: usize) -> Result<usize> {
    if train.is_empty() {
        return Err(Error::EmptyTrainSet);
    }
    if train.len() != labels.len() {
        return Err(Error::LengthMismatch(train.len(), labels.len()));
    }
    if k == 0 || k > train.len() {
        return Err(Error::InvalidArgument(format!("k = {k} must be in 1..={}", train.len())));
    }
    if let Some(bad) = train.iter().find(|e| e.dimension() != query.dimension()) {
        return Err(Error::DimensionMismatch { expected: query.dimension(), found: bad.dimension() });
    }
    let mut dist: Vec<(f64, usize)> = train.iter().enumerate().map(|(i, e)| (cosine_distance(&query.values, &e.values), i)).collect();
    dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut votes = vec![0usize; num_classes];
    let mut total = vec![0.0f64; num_classes];
    for &(d, i) in &dist[..k] {
        votes[labels[i]] += 1;
        total[labels[i]] += d;
    }
    let mean = |c: usize| total[c] / votes[c] as f64;
    let mut best = None;
    for c in 0..num_classes {
        if votes[c] == 0 {
            continue;
        }
        best = match best {
            None => Some(c),
            Some(b) if votes[c] > votes[b] || (votes[c] == votes[b] && mean(c) < mean(b)) => Some(c),
            keep => keep,
        };
    }
    Ok(best.expect("k >= 1"))
}

pub fn knn_classify_all(queries: &[EmbeddingVector], train: &[EmbeddingVector], labels: &[usize], k: usize) -> Result<Vec<usize>> {
    queries.par_iter().map(|q| knn_classify(q, train, labels, k)).collect()
}

/// Picks `k` from [`KNN_CANDIDATES`] by validation error; ties go to the
/// smaller `k`.
pub fn select_k(train: &[EmbeddingVector], train_labels: &[usize], val: &[EmbeddingVector], val_labels: &[usize]) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for k in KNN_CANDIDATES.into_iter().filter(|&k| k <= train.len()) {
        let preds: Vec<Option<usize>> = knn_classify_all(val, train, train_labels, k)?.into_iter().map(Some).collect();
        let err = error_rate(&preds, val_labels);
        if best.is_none_or(|(_, b)| err < b) {
            best = Some((k, err));
        }
    }
    best.map(|(k, _)| k).ok_or(Error::EmptyTrainSet)
}

/// Embeds the unlabeled feature text of each description.
pub fn embed_queries(descriptions: &[DataDescription], client: &LlmClient) -> Result<Vec<EmbeddingVector>> {
    let texts: Vec<String> = descriptions.iter().map(|d| d.query().to_string()).collect();
    client.embed(&texts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mock_oracle::{MockBackend, OracleSpec};
    use crate::summary_learner::{default_inference_prefix, Directive, ExampleOrder};
    use std::sync::Arc;

    fn ev(v: &[f32]) -> EmbeddingVector {
        EmbeddingVector::new(v.to_vec())
    }

    #[test]
    fn knn_exact_match_with_k1() {
        let train = vec![ev(&[1.0, 0.0]), ev(&[0.0, 1.0]), ev(&[1.0, 1.0])];
        assert_eq!(knn_classify(&ev(&[0.0, 1.0]), &train, &[0, 1, 0], 1).unwrap(), 1);
    }

    #[test]
    fn knn_full_k_is_majority() {
        let train = vec![ev(&[1.0, 0.0]), ev(&[0.0, 1.0]), ev(&[1.0, 1.0])];
        assert_eq!(knn_classify(&ev(&[0.0, 1.0]), &train, &[0, 1, 0], 3).unwrap(), 0);
    }

    #[test]
    fn knn_vote_tie_goes_to_closer_class() {
        let train = vec![ev(&[1.0, 0.1]), ev(&[0.1, 1.0])];
        assert_eq!(knn_classify(&ev(&[1.0, 0.0]), &train, &[1, 0], 2).unwrap(), 1);
    }

    #[test]
    fn knn_errors() {
        assert!(matches!(knn_classify(&ev(&[1.0]), &[], &[], 1), Err(Error::EmptyTrainSet)));
        assert!(matches!(knn_classify(&ev(&[1.0]), &[ev(&[1.0])], &[0], 2), Err(Error::InvalidArgument(_))));
    }

    fn settings() -> PromptSettings {
        let classes = vec!["normal".to_string(), "caesarian".to_string()];
        PromptSettings {
            metadata: "Delivery outcomes.".into(),
            inference_prefix: default_inference_prefix("delivery", &classes),
            classes,
            directive: Directive::Tldr,
            order: ExampleOrder::Shuffled,
            summary_max_tokens: 50,
            inference_max_tokens: 5,
        }
    }

    #[test]
    fn zero_shot_maps_or_abstains() {
        let q = DataDescription::new(0, "A woman aged thirty.", "");
        let ok = LlmClient::in_memory(Arc::new(MockBackend::new(OracleSpec::scripted(vec![("likely", vec!["caesarian"])])).unwrap()));
        assert_eq!(zero_shot(&q, &settings(), &ok).unwrap(), Some(1));
        let junk = LlmClient::in_memory(Arc::new(MockBackend::new(OracleSpec::scripted(vec![("likely", vec!["unclear"])])).unwrap()));
        assert_eq!(zero_shot(&q, &settings(), &junk).unwrap(), None);
    }

    #[test]
    fn few_shot_lists_support_then_query() {
        let train: Vec<DataDescription> =
            (0..20).map(|i| DataDescription::new(i, format!("Record {i}."), if i % 2 == 0 { "normal" } else { "caesarian" })).collect();
        let labels: Vec<usize> = (0..20).map(|i| i % 2).collect();
        let val = vec![DataDescription::new(100, "Record 100.", "normal")];
        let clusters = ClusterModel {
            classes: vec![(0..20).step_by(2).map(|i| vec![i]).collect(), (1..20).step_by(2).map(|i| vec![i]).collect()],
            threshold: 0.05,
            population: 20,
        };
        let client = LlmClient::in_memory(Arc::new(MockBackend::new(OracleSpec::scripted(vec![("likely", vec!["normal"])])).unwrap()));
        let s = settings();
        let fs = FewShot {
            data: LearningSet { train: &train, train_labels: &labels, val: &val, val_labels: &[0] },
            settings: &s,
            clusters: &clusters,
            client: &client,
            support_size: DEFAULT_SUPPORT_SIZE,
            seed: 3,
        };
        let prompt = fs.candidate(0).unwrap();
        assert_eq!(prompt.support_rows.len(), 15);
        let text = prompt.render(&val[0]);
        assert_eq!(text.matches("###").count(), 15);
        assert!(text.find("Record 100.").unwrap() > text.rfind("###").unwrap());
        let (best, err) = fs.fit(3).unwrap();
        assert_eq!(err, 0.0);
        assert_eq!(best.attempt, 0);
    }
}
