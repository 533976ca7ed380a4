//! End-to-end runs: split, encode, describe, fit every method and report
//! test error over several seeds.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::baselines::{embed_queries, knn_classify_all, select_k, zero_shot_all, FewShot, DEFAULT_SUPPORT_SIZE};
use crate::boosting::{self, BoostConfig, EnsembleModel, RoundTrace};
use crate::dataset::{split, TabularDataset};
use crate::discretize::{default_encoding, ColumnEncoders, Encoding};
use crate::error::{Error, ErrorClass, Result};
use crate::llm::LlmClient;
use crate::sampling::DEFAULT_CLUSTER_THRESHOLD;
use crate::summary_learner::{error_rate, LearningSet, PromptConfig, SummaryLearner, DEFAULT_CANDIDATES};
use crate::textualize::{describe_rows, ConversionConfig, DataDescription, DescriptionMethod};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    SummaryBoosting,
    Summary,
    ZeroShot,
    FewShot,
    Knn,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::ZeroShot, Method::FewShot, Method::Knn, Method::Summary, Method::SummaryBoosting];

    pub fn name(self) -> &'static str {
        match self {
            Method::SummaryBoosting => "summary-boosting",
            Method::Summary => "summary",
            Method::ZeroShot => "zero-shot",
            Method::FewShot => "few-shot",
            Method::Knn => "knn",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method `{name}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub encoding: Encoding,
    pub describer: DescriptionMethod,
    pub prompts: PromptConfig,
    pub boost: BoostConfig,
    pub cluster_threshold: f64,
    /// Support-set size per summary; `None` fills the context budget.
    pub sample_size: Option<usize>,
    pub summary_candidates: usize,
    pub few_shot_support: usize,
    pub few_shot_candidates: usize,
    pub seeds: Vec<u64>,
    pub methods: Vec<Method>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            encoding: default_encoding(),
            describer: DescriptionMethod::Llm { config: ConversionConfig::default() },
            prompts: PromptConfig::default(),
            boost: BoostConfig::default(),
            cluster_threshold: DEFAULT_CLUSTER_THRESHOLD,
            sample_size: None,
            summary_candidates: DEFAULT_CANDIDATES,
            few_shot_support: DEFAULT_SUPPORT_SIZE,
            few_shot_candidates: DEFAULT_CANDIDATES,
            seeds: vec![0, 1, 2],
            methods: Method::ALL.to_vec(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoding.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::InvalidArgument("at least one seed is required".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidArgument("at least one method is required".into()));
        }
        let caps = [
            self.boost.rounds,
            self.boost.resample_cap,
            self.summary_candidates,
            self.few_shot_support,
            self.few_shot_candidates,
        ];
        if caps.contains(&0) || self.sample_size == Some(0) {
            return Err(Error::InvalidArgument("round, resample and sample caps must be positive".into()));
        }
        if !(0.0..=2.0).contains(&self.cluster_threshold) {
            return Err(Error::InvalidArgument("cluster threshold must lie in [0, 2]".into()));
        }
        Ok(())
    }
}

/// Descriptions and labels of one split.
pub struct PreparedSplit {
    pub encoders: ColumnEncoders,
    pub train: Vec<DataDescription>,
    pub train_labels: Vec<usize>,
    pub val: Vec<DataDescription>,
    pub val_labels: Vec<usize>,
    pub test: Vec<DataDescription>,
    pub test_labels: Vec<usize>,
}

impl PreparedSplit {
    pub fn learning_set(&self) -> LearningSet<'_> {
        LearningSet { train: &self.train, train_labels: &self.train_labels, val: &self.val, val_labels: &self.val_labels }
    }
}

pub fn prepare(ds: &TabularDataset, config: &RunConfig, client: &LlmClient, seed: u64) -> Result<PreparedSplit> {
    let parts = split(ds, seed)?;
    let encoders = ColumnEncoders::fit(ds, &parts.train_idx, &config.encoding)?;
    let describe = |rows: &[usize]| describe_rows(ds, &encoders, rows, &config.describer, client);
    let labels = |rows: &[usize]| rows.iter().map(|&r| ds.labels[r]).collect::<Vec<_>>();
    Ok(PreparedSplit {
        train: describe(&parts.train_idx)?,
        train_labels: labels(&parts.train_idx),
        val: describe(&parts.val_idx)?,
        val_labels: labels(&parts.val_idx),
        test: describe(&parts.test_idx)?,
        test_labels: labels(&parts.test_idx),
        encoders,
    })
}

/// Trains an ensemble on one split.
pub fn train_model(
    ds: &TabularDataset,
    prepared: &PreparedSplit,
    config: &RunConfig,
    client: &LlmClient,
    seed: u64,
) -> Result<(EnsembleModel, Vec<RoundTrace>)> {
    let settings = config.prompts.resolve(ds)?;
    let learner = SummaryLearner::new(prepared.learning_set(), &settings, client, config.cluster_threshold, config.sample_size, seed)?;
    boosting::train(ds, prepared.encoders.clone(), config.describer.clone(), &learner, &config.boost)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: Method,
    /// Test error per seed; `None` where the method failed.
    pub errors: Vec<Option<f64>>,
    pub failures: Vec<String>,
}

impl MethodResult {
    pub fn completed(&self) -> Vec<f64> {
        self.errors.iter().flatten().copied().collect()
    }

    pub fn mean(&self) -> Option<f64> {
        let v = self.completed();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// Sample standard deviation; zero for a single seed.
    pub fn std_dev(&self) -> Option<f64> {
        let v = self.completed();
        let mean = self.mean()?;
        if v.len() < 2 {
            return Some(0.0);
        }
        Some((v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedTrace {
    pub seed: u64,
    pub rounds: Vec<RoundTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub dataset: String,
    pub seeds: Vec<u64>,
    pub results: Vec<MethodResult>,
    pub traces: Vec<SeedTrace>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.4}"))
}

impl EvaluationReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("dataset,method,mean,std");
        for s in &self.seeds {
            write!(out, ",seed_{s}").unwrap();
        }
        out.push('\n');
        for r in &self.results {
            write!(out, "{},{},{},{}", self.dataset, r.method.name(), fmt_opt(r.mean()), fmt_opt(r.std_dev())).unwrap();
            for e in &r.errors {
                write!(out, ",{}", fmt_opt(*e)).unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn to_table(&self) -> String {
        let width = self.results.iter().map(|r| r.method.name().len()).max().unwrap_or(6).max(6);
        let mut out = format!("Test error on {} over {} seed(s)\n", self.dataset, self.seeds.len());
        writeln!(out, "{:<width$}  mean ± std", "method").unwrap();
        for r in &self.results {
            let cell = match (r.mean(), r.std_dev()) {
                (Some(m), Some(s)) => format!("{m:.4} ± {s:.4}"),
                _ => "failed".to_string(),
            };
            writeln!(out, "{:<width$}  {cell}", r.method.name()).unwrap();
            for f in &r.failures {
                writeln!(out, "{:<width$}    {f}", "").unwrap();
            }
        }
        out
    }

    pub fn trace_csv(&self) -> String {
        let mut out = String::new();
        for (i, t) in self.traces.iter().enumerate() {
            let body = boosting::trace_csv(&t.rounds);
            let mut lines = body.lines();
            let header = lines.next().unwrap_or_default();
            if i == 0 {
                writeln!(out, "seed,{header}").unwrap();
            }
            for l in lines {
                writeln!(out, "{},{l}", t.seed).unwrap();
            }
        }
        out
    }
}

fn run_method(
    method: Method,
    ds: &TabularDataset,
    prepared: &PreparedSplit,
    config: &RunConfig,
    client: &LlmClient,
    seed: u64,
    traces: &mut Vec<SeedTrace>,
) -> Result<f64> {
    let settings = config.prompts.resolve(ds)?;
    let data = prepared.learning_set();
    let learner = || SummaryLearner::new(data, &settings, client, config.cluster_threshold, config.sample_size, seed);
    match method {
        Method::ZeroShot => Ok(error_rate(&zero_shot_all(&prepared.test, &settings, client)?, &prepared.test_labels)),
        Method::Knn => {
            let train = embed_queries(&prepared.train, client)?;
            let val = embed_queries(&prepared.val, client)?;
            let test = embed_queries(&prepared.test, client)?;
            let k = select_k(&train, &prepared.train_labels, &val, &prepared.val_labels)?;
            let preds: Vec<Option<usize>> = knn_classify_all(&test, &train, &prepared.train_labels, k)?.into_iter().map(Some).collect();
            Ok(error_rate(&preds, &prepared.test_labels))
        }
        Method::FewShot => {
            let learner = learner()?;
            let fs = FewShot {
                data,
                settings: &settings,
                clusters: &learner.clusters,
                client,
                support_size: config.few_shot_support,
                seed,
            };
            let (prompt, _) = fs.fit(config.few_shot_candidates)?;
            Ok(error_rate(&prompt.classify_all(&prepared.test, client)?, &prepared.test_labels))
        }
        Method::Summary => {
            let (h, _) = learner()?.fit(config.summary_candidates)?;
            Ok(error_rate(&crate::summary_learner::predict_all(&h, &prepared.test, client)?, &prepared.test_labels))
        }
        Method::SummaryBoosting => {
            let learner = learner()?;
            let (model, trace) = boosting::train(ds, prepared.encoders.clone(), config.describer.clone(), &learner, &config.boost)?;
            traces.push(SeedTrace { seed, rounds: trace });
            Ok(error_rate(&model.predict_many(&prepared.test, client)?, &prepared.test_labels))
        }
    }
}

/// Runs every configured method on every seed. Provider failures abort the
/// run; other method failures are recorded in the report.
pub fn evaluate(ds: &TabularDataset, dataset_name: &str, config: &RunConfig, client: &LlmClient) -> Result<EvaluationReport> {
    config.validate()?;
    config.prompts.resolve(ds)?;
    let mut results: Vec<MethodResult> =
        config.methods.iter().map(|&m| MethodResult { method: m, errors: Vec::new(), failures: Vec::new() }).collect();
    let mut traces = Vec::new();
    for &seed in &config.seeds {
        let prepared = prepare(ds, config, client, seed)?;
        for r in results.iter_mut() {
            match run_method(r.method, ds, &prepared, config, client, seed, &mut traces) {
                Ok(e) => r.errors.push(Some(e)),
                Err(e) if e.class() == ErrorClass::Provider => return Err(e),
                Err(e) => {
                    r.errors.push(None);
                    r.failures.push(format!("seed {seed}: {e}"));
                }
            }
        }
    }
    Ok(EvaluationReport { dataset: dataset_name.to_string(), seeds: config.seeds.clone(), results, traces })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(Method::from_name(m.name()).unwrap(), m);
        }
        assert!(Method::from_name("xgboost").is_err());
    }

    #[test]
    fn mean_and_std() {
        let r = MethodResult { method: Method::Knn, errors: vec![Some(0.1), Some(0.3), None], failures: vec![] };
        assert!((r.mean().unwrap() - 0.2).abs() < 1e-12);
        assert!((r.std_dev().unwrap() - 0.02f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn config_rejects_empty_seeds() {
        let c = RunConfig { seeds: vec![], ..RunConfig::default() };
        assert!(c.validate().is_err());
    }
}
