//! Multi-class AdaBoost (SAMME) over summary weak learners.
//!
//! Each round draws candidates until one passes the acceptance rule: its
//! best-permutation weighted error must not exceed `1 - 1/K - mu` and its raw
//! predictions must not all be the same. A perfect candidate ends training.
//! The number of rounds used for prediction is the shortest prefix with the
//! lowest validation error.

use std::path::Path;

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::dataset::TabularDataset;
use crate::discretize::ColumnEncoders;
use crate::error::{Error, Result};
use crate::llm::LlmClient;
use crate::summary_learner::{infer_lenient, predict_all, SummaryHypothesis, SummaryLearner};
use crate::textualize::{DataDescription, DescriptionMethod};

pub const DEFAULT_ROUNDS: usize = 20;
pub const DEFAULT_RESAMPLE_CAP: usize = 25;

/// `0.08` per extra class: 0.08 for two classes, 0.16 for three.
pub fn default_mu(num_classes: usize) -> f64 {
    0.08 * num_classes.saturating_sub(1) as f64
}

/// Share of weight on points whose prediction is missing or wrong.
pub fn weighted_error(preds: &[Option<usize>], labels: &[usize], w: &[f64]) -> Result<f64> {
    if preds.len() != labels.len() {
        return Err(Error::LengthMismatch(preds.len(), labels.len()));
    }
    if w.len() != labels.len() {
        return Err(Error::LengthMismatch(w.len(), labels.len()));
    }
    let mut wrong = 0.0;
    let mut total = 0.0;
    for i in 0..labels.len() {
        total += w[i];
        if preds[i] != Some(labels[i]) {
            wrong += w[i];
        }
    }
    if total <= 0.0 {
        return Err(Error::InvalidArgument("weights sum to zero".into()));
    }
    Ok(wrong / total)
}

pub fn samme_alpha(epsilon: f64, num_classes: usize) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::DegenerateError(epsilon));
    }
    Ok(((1.0 - epsilon) / epsilon).ln() + ((num_classes as f64) - 1.0).ln())
}

/// `mapping[raw] = class`; missing predictions stay missing.
pub fn apply_mapping(raw: &[Option<usize>], mapping: &[usize]) -> Vec<Option<usize>> {
    raw.iter().map(|p| p.map(|r| mapping[r])).collect()
}

/// Exhaustive search over all `K!` relabelings of the raw predictions.
/// Ties keep the lexicographically first permutation.
pub fn best_label_mapping(raw: &[Option<usize>], labels: &[usize], w: &[f64], num_classes: usize) -> Result<(Vec<usize>, f64)> {
    if let Some(bad) = raw.iter().flatten().find(|&&r| r >= num_classes) {
        return Err(Error::InvalidArgument(format!("raw prediction {bad} outside {num_classes} classes")));
    }
    let mut best: Option<(Vec<usize>, f64)> = None;
    for perm in (0..num_classes).permutations(num_classes) {
        let eps = weighted_error(&apply_mapping(raw, &perm), labels, w)?;
        if best.as_ref().is_none_or(|(_, b)| eps < *b) {
            best = Some((perm, eps));
        }
    }
    best.ok_or(Error::TooFewClasses(num_classes))
}

pub fn all_same(raw: &[Option<usize>]) -> bool {
    raw.windows(2).all(|p| p[0] == p[1])
}

pub fn accept_weak_learner(epsilon: f64, num_classes: usize, mu: f64, raw: &[Option<usize>]) -> bool {
    epsilon <= 1.0 - 1.0 / num_classes as f64 - mu && !all_same(raw)
}

/// Multiplies misclassified weights by `e^alpha` and renormalizes.
pub fn update_weights(w: &[f64], correct: &[bool], alpha: f64) -> Vec<f64> {
    let factor = alpha.exp();
    let mut out: Vec<f64> = w.iter().zip(correct).map(|(&wi, &ok)| if ok { wi } else { wi * factor }).collect();
    crate::util::normalize(&mut out);
    out
}

/// Weighted vote; ties go to the lower class index. `None` when nobody voted.
pub fn weighted_vote(votes: impl IntoIterator<Item = (Option<usize>, f64)>, num_classes: usize) -> Option<usize> {
    let mut tally = vec![0.0; num_classes];
    let mut any = false;
    for (k, alpha) in votes {
        if let Some(k) = k {
            tally[k] += alpha;
            any = true;
        }
    }
    if !any {
        return None;
    }
    let mut best = 0;
    for k in 1..num_classes {
        if tally[k] > tally[best] {
            best = k;
        }
    }
    Some(best)
}

/// Produces candidate weak learners and their raw predictions.
pub trait WeakLearnerSource {
    type Hypothesis: Clone;
    fn propose(&self, weights: &[f64], attempt: u64) -> Result<Self::Hypothesis>;
    fn train_predictions(&self, h: &Self::Hypothesis) -> Result<Vec<Option<usize>>>;
    fn validation_predictions(&self, h: &Self::Hypothesis) -> Result<Vec<Option<usize>>>;
}

impl WeakLearnerSource for SummaryLearner<'_> {
    type Hypothesis = SummaryHypothesis;

    fn propose(&self, weights: &[f64], attempt: u64) -> Result<SummaryHypothesis> {
        self.candidate(weights, attempt)
    }

    fn train_predictions(&self, h: &SummaryHypothesis) -> Result<Vec<Option<usize>>> {
        SummaryLearner::train_predictions(self, h)
    }

    fn validation_predictions(&self, h: &SummaryHypothesis) -> Result<Vec<Option<usize>>> {
        SummaryLearner::validation_predictions(self, h)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoostConfig {
    pub rounds: usize,
    /// Acceptance margin; `None` uses [`default_mu`].
    pub mu: Option<f64>,
    pub resample_cap: usize,
}

impl Default for BoostConfig {
    fn default() -> Self {
        Self { rounds: DEFAULT_ROUNDS, mu: None, resample_cap: DEFAULT_RESAMPLE_CAP }
    }
}

/// One accepted round as seen by the training loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTrace {
    pub round: usize,
    /// Global attempt index of the accepted candidate.
    pub attempt: u64,
    /// Candidates drawn this round, including the accepted one.
    pub candidates: usize,
    pub epsilon: f64,
    pub mapping: Vec<usize>,
    pub alpha: f64,
    /// Distribution after this round's update.
    pub weights: Vec<f64>,
    /// Unweighted training error of this round alone.
    pub round_train_error: f64,
    /// Training and validation error of the ensemble of rounds `1..=round`.
    pub ensemble_train_error: f64,
    pub ensemble_val_error: f64,
}

#[derive(Debug, Clone)]
pub struct WeightedRound<H> {
    pub hypothesis: H,
    pub mapping: Vec<usize>,
    pub alpha: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone)]
pub struct BoostOutcome<H> {
    pub rounds: Vec<WeightedRound<H>>,
    pub trace: Vec<RoundTrace>,
    pub chosen_t: usize,
}

fn tally_errors(scores: &[Vec<f64>], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let wrong = scores
        .iter()
        .zip(labels)
        .filter(|(s, &y)| {
            let voted = s.iter().any(|&v| v != 0.0);
            let best = (1..s.len()).fold(0, |b, k| if s[k] > s[b] { k } else { b });
            !voted || best != y
        })
        .count();
    wrong as f64 / labels.len() as f64
}

/// Runs the boosting loop against any weak-learner source.
pub fn boost<S: WeakLearnerSource>(
    source: &S,
    train_labels: &[usize],
    val_labels: &[usize],
    num_classes: usize,
    config: &BoostConfig,
) -> Result<BoostOutcome<S::Hypothesis>> {
    if train_labels.is_empty() {
        return Err(Error::EmptyTrainSet);
    }
    if num_classes < 2 {
        return Err(Error::TooFewClasses(num_classes));
    }
    if config.rounds == 0 || config.resample_cap == 0 {
        return Err(Error::InvalidArgument("rounds and resample cap must be positive".into()));
    }
    let n = train_labels.len();
    let mu = config.mu.unwrap_or_else(|| default_mu(num_classes));
    let mut w = vec![1.0 / n as f64; n];
    let mut attempt: u64 = 0;
    let mut rounds = Vec::new();
    let mut trace = Vec::new();
    let mut train_scores = vec![vec![0.0; num_classes]; n];
    let mut val_scores = vec![vec![0.0; num_classes]; val_labels.len()];

    for round in 1..=config.rounds {
        let mut accepted = None;
        for tried in 1..=config.resample_cap {
            let h = source.propose(&w, attempt)?;
            let raw = source.train_predictions(&h)?;
            if raw.len() != n {
                return Err(Error::LengthMismatch(raw.len(), n));
            }
            let (mapping, eps) = best_label_mapping(&raw, train_labels, &w, num_classes)?;
            attempt += 1;
            if accept_weak_learner(eps, num_classes, mu, &raw) {
                accepted = Some((h, raw, mapping, eps, tried, attempt - 1));
                break;
            }
        }
        let Some((h, raw, mapping, eps, tried, used_attempt)) = accepted else {
            return Err(Error::RoundResampleExhausted { round, attempts: config.resample_cap });
        };
        let perfect = eps == 0.0;
        let alpha = samme_alpha(if perfect { 1.0 / (2 * n) as f64 } else { eps }, num_classes)?;
        let mapped = apply_mapping(&raw, &mapping);
        let correct: Vec<bool> = mapped.iter().zip(train_labels).map(|(p, &y)| *p == Some(y)).collect();
        if !perfect {
            w = update_weights(&w, &correct, alpha);
        }

        for (s, p) in train_scores.iter_mut().zip(&mapped) {
            if let Some(k) = p {
                s[*k] += alpha;
            }
        }
        let val_mapped = apply_mapping(&source.validation_predictions(&h)?, &mapping);
        if val_mapped.len() != val_labels.len() {
            return Err(Error::LengthMismatch(val_mapped.len(), val_labels.len()));
        }
        for (s, p) in val_scores.iter_mut().zip(&val_mapped) {
            if let Some(k) = p {
                s[*k] += alpha;
            }
        }
        trace.push(RoundTrace {
            round,
            attempt: used_attempt,
            candidates: tried,
            epsilon: eps,
            mapping: mapping.clone(),
            alpha,
            weights: w.clone(),
            round_train_error: correct.iter().filter(|c| !**c).count() as f64 / n as f64,
            ensemble_train_error: tally_errors(&train_scores, train_labels),
            ensemble_val_error: tally_errors(&val_scores, val_labels),
        });
        rounds.push(WeightedRound { hypothesis: h, mapping, alpha, epsilon: eps });
        if perfect {
            break;
        }
    }
    let chosen_t = choose_rounds(&trace.iter().map(|t| t.ensemble_val_error).collect::<Vec<_>>());
    Ok(BoostOutcome { rounds, trace, chosen_t })
}

/// Shortest prefix length with the minimum validation error.
pub fn choose_rounds(val_errors: &[f64]) -> usize {
    let mut best = 0;
    for t in 1..val_errors.len() {
        if val_errors[t] < val_errors[best] {
            best = t;
        }
    }
    best + 1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRound {
    #[serde(flatten)]
    pub hypothesis: SummaryHypothesis,
    pub mapping: Vec<usize>,
    pub alpha: f64,
    pub epsilon: f64,
}

/// A trained ensemble with everything needed to describe and classify raw
/// rows of the same schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub classes: Vec<String>,
    pub target: String,
    pub encodings: ColumnEncoders,
    pub describer: DescriptionMethod,
    pub rounds: Vec<EnsembleRound>,
    #[serde(rename = "chosen_T")]
    pub chosen_t: usize,
    pub schema_fingerprint: String,
}

impl EnsembleModel {
    pub fn from_outcome(
        ds: &TabularDataset,
        encodings: ColumnEncoders,
        describer: DescriptionMethod,
        outcome: BoostOutcome<SummaryHypothesis>,
    ) -> Self {
        Self {
            classes: ds.classes.clone(),
            target: ds.target.clone(),
            encodings,
            describer,
            rounds: outcome
                .rounds
                .into_iter()
                .map(|r| EnsembleRound { hypothesis: r.hypothesis, mapping: r.mapping, alpha: r.alpha, epsilon: r.epsilon })
                .collect(),
            chosen_t: outcome.chosen_t,
            schema_fingerprint: ds.schema_fingerprint(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let model: Self = serde_json::from_slice(&std::fs::read(path)?)?;
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.chosen_t == 0 || self.chosen_t > self.rounds.len() {
            return Err(Error::InvalidArgument(format!("chosen_T {} outside 1..={}", self.chosen_t, self.rounds.len())));
        }
        let k = self.classes.len();
        for r in &self.rounds {
            let mut sorted = r.mapping.clone();
            sorted.sort_unstable();
            if sorted != (0..k).collect::<Vec<_>>() {
                return Err(Error::InvalidArgument("round mapping is not a permutation of the classes".into()));
            }
            if !r.alpha.is_finite() {
                return Err(Error::InvalidArgument("non-finite round weight".into()));
            }
        }
        Ok(())
    }

    pub fn check_schema(&self, ds: &TabularDataset) -> Result<()> {
        if ds.schema_fingerprint() != self.schema_fingerprint || ds.classes != self.classes {
            return Err(Error::SchemaMismatch);
        }
        Ok(())
    }

    pub fn active_rounds(&self) -> &[EnsembleRound] {
        &self.rounds[..self.chosen_t.min(self.rounds.len())]
    }

    /// Weighted vote of the first `chosen_T` rounds; rounds whose answer
    /// cannot be mapped abstain.
    pub fn predict(&self, query: &DataDescription, client: &LlmClient) -> Result<usize> {
        let mut votes = Vec::new();
        for r in self.active_rounds() {
            let raw = infer_lenient(&r.hypothesis, query, client)?;
            votes.push((raw.map(|k| r.mapping[k]), r.alpha));
        }
        weighted_vote(votes, self.classes.len()).ok_or(Error::AllRoundsAbstained)
    }

    /// Predictions for many queries; `None` where every round abstained.
    pub fn predict_many(&self, queries: &[DataDescription], client: &LlmClient) -> Result<Vec<Option<usize>>> {
        let k = self.classes.len();
        let mut per_round = Vec::new();
        for r in self.active_rounds() {
            per_round.push((apply_mapping(&predict_all(&r.hypothesis, queries, client)?, &r.mapping), r.alpha));
        }
        Ok((0..queries.len())
            .map(|i| weighted_vote(per_round.iter().map(|(p, a)| (p[i], *a)), k))
            .collect())
    }
}

/// Boosts summary learners and packages the result as a model.
pub fn train(
    ds: &TabularDataset,
    encodings: ColumnEncoders,
    describer: DescriptionMethod,
    learner: &SummaryLearner,
    config: &BoostConfig,
) -> Result<(EnsembleModel, Vec<RoundTrace>)> {
    let outcome = boost(learner, learner.data.train_labels, learner.data.val_labels, ds.num_classes(), config)?;
    let trace = outcome.trace.clone();
    Ok((EnsembleModel::from_outcome(ds, encodings, describer, outcome), trace))
}

/// Round trace as CSV, one line per round.
pub fn trace_csv(trace: &[RoundTrace]) -> String {
    let mut out = String::from("round,attempt,candidates,epsilon,alpha,round_train_error,ensemble_train_error,ensemble_val_error\n");
    for t in trace {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            t.round, t.attempt, t.candidates, t.epsilon, t.alpha, t.round_train_error, t.ensemble_train_error, t.ensemble_val_error
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn weighted_error_examples() {
        assert_eq!(weighted_error(&[Some(0), Some(1)], &[0, 1], &[0.5, 0.5]).unwrap(), 0.0);
        let e = weighted_error(&[Some(1), Some(0), Some(0), Some(1)], &[0, 0, 1, 1], &[0.25; 4]).unwrap();
        assert_relative_eq!(e, 0.5);
        assert_relative_eq!(weighted_error(&[Some(1), Some(1)], &[0, 1], &[0.7, 0.3]).unwrap(), 0.7);
        assert_relative_eq!(weighted_error(&[None, Some(1)], &[0, 1], &[0.7, 0.3]).unwrap(), 0.7);
        assert!(matches!(weighted_error(&[Some(0)], &[0, 1], &[0.5, 0.5]), Err(Error::LengthMismatch(1, 2))));
    }

    #[test]
    fn alpha_examples() {
        assert_relative_eq!(samme_alpha(0.5, 2).unwrap(), 0.0);
        assert_relative_eq!(samme_alpha(0.25, 2).unwrap(), 3f64.ln());
        assert_relative_eq!(samme_alpha(0.5, 3).unwrap(), 2f64.ln());
        assert!(matches!(samme_alpha(0.0, 2), Err(Error::DegenerateError(_))));
        assert!(matches!(samme_alpha(1.0, 2), Err(Error::DegenerateError(_))));
    }

    #[test]
    fn mapping_examples() {
        let (m, e) = best_label_mapping(&[Some(1), Some(0), Some(1)], &[0, 1, 0], &[1.0 / 3.0; 3], 2).unwrap();
        assert_eq!((m, e), (vec![1, 0], 0.0));
        let (m, _) = best_label_mapping(&[Some(0), Some(1), Some(0)], &[0, 1, 1], &[1.0 / 3.0; 3], 2).unwrap();
        assert_eq!(m, vec![0, 1]);
    }

    #[test]
    fn acceptance_examples() {
        let mixed = [Some(0), Some(1)];
        assert!(accept_weak_learner(0.41, 2, 0.08, &mixed));
        assert!(!accept_weak_learner(0.51, 3, 0.16, &mixed));
        assert!(!accept_weak_learner(0.1, 2, 0.08, &[Some(0), Some(0)]));
        assert_relative_eq!(default_mu(2), 0.08);
        assert_relative_eq!(default_mu(3), 0.16);
    }

    #[test]
    fn update_examples() {
        assert_eq!(update_weights(&[0.5, 0.5], &[false, true], 0.0), vec![0.5, 0.5]);
        let w = update_weights(&[0.5, 0.5], &[false, true], 3f64.ln());
        assert_relative_eq!(w[0], 0.75, epsilon = 1e-12);
        assert_relative_eq!(w[1], 0.25, epsilon = 1e-12);
        assert_eq!(update_weights(&[0.2, 0.8], &[true, true], 2.0), vec![0.2, 0.8]);
    }

    #[test]
    fn vote_examples() {
        assert_eq!(weighted_vote([(Some(1), 1.0)], 2), Some(1));
        assert_eq!(weighted_vote([(Some(0), 1.0), (Some(1), 1.0), (Some(0), 0.5)], 2), Some(0));
        assert_eq!(weighted_vote([(Some(1), 1.0), (Some(0), 1.0)], 2), Some(0));
        assert_eq!(weighted_vote([(None, 1.0)], 2), None);
    }

    #[test]
    fn chosen_rounds_prefers_shorter_prefix() {
        assert_eq!(choose_rounds(&[0.4, 0.2, 0.3, 0.2]), 2);
        assert_eq!(choose_rounds(&[0.1]), 1);
    }

    struct Fixed {
        train: Vec<Vec<Option<usize>>>,
    }

    impl WeakLearnerSource for Fixed {
        type Hypothesis = usize;
        fn propose(&self, _: &[f64], attempt: u64) -> Result<usize> {
            Ok(attempt as usize % self.train.len())
        }
        fn train_predictions(&self, h: &usize) -> Result<Vec<Option<usize>>> {
            Ok(self.train[*h].clone())
        }
        fn validation_predictions(&self, _: &usize) -> Result<Vec<Option<usize>>> {
            Ok(vec![Some(0)])
        }
    }

    #[test]
    fn perfect_first_round_stops() {
        let src = Fixed { train: vec![vec![Some(0), Some(1), Some(0)]] };
        let out = boost(&src, &[0, 1, 0], &[0], 2, &BoostConfig::default()).unwrap();
        assert_eq!(out.rounds.len(), 1);
        assert_eq!(out.chosen_t, 1);
        assert!(out.rounds[0].alpha > 0.0);
    }

    #[test]
    fn constant_learner_exhausts_resamples() {
        let src = Fixed { train: vec![vec![Some(0), Some(0), Some(0)]] };
        let err = boost(&src, &[0, 1, 0], &[0], 2, &BoostConfig::default()).unwrap_err();
        assert!(matches!(err, Error::RoundResampleExhausted { round: 1, attempts: 25 }));
    }
}
