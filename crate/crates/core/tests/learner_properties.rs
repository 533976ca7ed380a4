use proptest::prelude::*;
use sumboost_core::baselines::knn_classify;
use sumboost_core::cost::{estimate_cost, CostInputs};
use sumboost_core::llm::count_tokens;
use sumboost_core::mock_oracle::{synthetic_task, MockBackend, SYNTHETIC_TEMPLATE};
use sumboost_core::summary_learner::{
    build_summary_prompt, default_inference_prefix, map_answer, select_candidate, CandidateScore, Directive, ExampleOrder,
    PromptSettings, SummaryHypothesis,
};
use sumboost_core::textualize::{describe_template, PromptTemplate, Record};
use sumboost_core::{ColumnEncoders, DataDescription, EmbeddingVector};

const CLASSES: [&str; 4] = ["low", "lower", "high", "highest"];

fn classes() -> Vec<String> {
    CLASSES.iter().map(|s| s.to_string()).collect()
}

fn hypothesis(attempt: u64) -> SummaryHypothesis {
    SummaryHypothesis {
        summary_text: format!("summary {attempt}"),
        summary_directive: Directive::Tldr,
        inference_prefix: default_inference_prefix("level", &classes()),
        classes: classes(),
        example_order: ExampleOrder::Shuffled,
        source_sample: vec![],
        attempt,
        inference_max_tokens: 10,
    }
}

fn settings(summary_max_tokens: usize) -> PromptSettings {
    PromptSettings {
        metadata: "Readings of a gauge.".into(),
        classes: classes(),
        directive: Directive::Tldr,
        inference_prefix: default_inference_prefix("level", &classes()),
        order: ExampleOrder::Shuffled,
        summary_max_tokens,
        inference_max_tokens: 10,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn mapped_answers_are_classes(text in "[a-zA-Z ,.]{0,40}", pick in prop::option::of(0usize..4)) {
        let completion = match pick {
            Some(c) => format!("{text} {}", CLASSES[c].to_uppercase()),
            None => text,
        };
        if let Ok(c) = map_answer(&completion, &classes()) {
            prop_assert!(c < CLASSES.len());
        }
    }

    #[test]
    fn selected_candidate_has_least_validation_error(scores in prop::collection::vec((0u8..5, 0u8..5), 1..25)) {
        let scored: Vec<(SummaryHypothesis, CandidateScore)> = scores
            .iter()
            .enumerate()
            .map(|(i, &(v, t))| (hypothesis(i as u64), CandidateScore { validation_error: v as f64 / 4.0, training_error: t as f64 / 4.0 }))
            .collect();
        let (_, best) = select_candidate(scored.clone()).unwrap();
        prop_assert!(scored.iter().all(|(_, s)| best.validation_error <= s.validation_error));
    }

    #[test]
    fn summary_prompts_respect_the_context(words in prop::collection::vec(1usize..60, 1..30), limit in 40usize..600, seed in any::<u64>()) {
        let descriptions: Vec<DataDescription> = words
            .iter()
            .enumerate()
            .map(|(i, &n)| DataDescription::new(i, vec!["word"; n].join(" "), "The level is low."))
            .collect();
        let refs: Vec<&DataDescription> = descriptions.iter().collect();
        let labels = vec![0; refs.len()];
        let cfg = settings(20);
        match build_summary_prompt(&refs, &labels, &cfg, limit, 0, seed) {
            Ok((prompt, rows)) => {
                prop_assert!(count_tokens(&prompt) + cfg.summary_max_tokens <= limit);
                prop_assert!(!rows.is_empty());
                for &r in &rows {
                    prop_assert!(prompt.contains(&descriptions[r].labeled_text()));
                }
            }
            Err(e) => {
                let overflow = matches!(e, sumboost_core::Error::ContextOverflow { .. });
                prop_assert!(overflow, "unexpected error {}", e);
            }
        }
    }

    #[test]
    fn knn_ignores_common_rescaling(
        points in prop::collection::vec(prop::collection::vec(-5i8..=5, 3), 5..20),
        query in prop::collection::vec(-5i8..=5, 3),
        scale in 0.5f32..8.0,
        k in prop::sample::select(vec![1usize, 3, 5]),
    ) {
        let vecs = |s: f32| -> Vec<EmbeddingVector> {
            points.iter().map(|p| EmbeddingVector::new(p.iter().map(|&x| x as f32 * s).collect())).collect()
        };
        let labels: Vec<usize> = (0..points.len()).map(|i| i % 3).collect();
        let q = |s: f32| EmbeddingVector::new(query.iter().map(|&x| x as f32 * s).collect());
        let k = k.min(points.len());
        // Power-of-two scales are exact in floating point.
        let exact = 2f32.powi(scale.log2().round() as i32);
        prop_assert_eq!(
            knn_classify(&q(1.0), &vecs(1.0), &labels, k).unwrap(),
            knn_classify(&q(exact), &vecs(exact), &labels, k).unwrap()
        );
    }

    #[test]
    fn mock_answers_are_pure(prompt in "[a-z ]{0,40}", attempt in 0u64..5) {
        let (_, spec) = synthetic_task(10, 0.3, 1).unwrap();
        let a = MockBackend::new(spec.clone()).unwrap();
        let b = MockBackend::new(spec).unwrap();
        let text = format!("{prompt} The signal is strong.");
        prop_assert_eq!(a.respond(&text, attempt).unwrap(), b.respond(&text, attempt).unwrap());
    }

    #[test]
    fn cost_matches_the_closed_form(n in 1u64..2000, t in 1u64..60, r in 1u64..40, s in 1u64..4000, p in 1u64..400) {
        let e = estimate_cost(CostInputs { examples: n, rounds: t, resamples: r, summary_tokens: s, prediction_tokens: p, price_per_1k: 0.002 }).unwrap();
        let exact = t as f64 * (r as f64 * (s as f64 + 0.5 * (n * p) as f64) + 0.1 * (n * p) as f64);
        prop_assert!((e.total_tokens as f64 - exact).abs() <= 0.5 + 1e-6);
    }
}

#[test]
fn template_descriptions_are_pure_and_label_free() {
    let (ds, _) = synthetic_task(30, 0.3, 2).unwrap();
    let rows: Vec<usize> = (0..ds.len()).collect();
    let encoders = ColumnEncoders::fit(&ds, &rows, &sumboost_core::discretize::default_encoding()).unwrap();
    let template = PromptTemplate::new(SYNTHETIC_TEMPLATE);
    for row in rows {
        let record = Record::from_dataset(&ds, &encoders, row).unwrap();
        let a = describe_template(&record, &ds.target, &template).unwrap();
        let b = describe_template(&record, &ds.target, &template).unwrap();
        assert_eq!(a, b);
        for class in &ds.classes {
            assert!(!a.query().split_whitespace().any(|w| w.trim_matches('.') == class), "{}", a.query());
        }
    }
}
