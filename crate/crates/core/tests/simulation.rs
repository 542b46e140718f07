use std::collections::HashMap;

use saleval::aggregation::{aggregate, majority_outcome};
use saleval::annotation::{AnnotationStore, StoreOptions};
use saleval::config::ExperimentConfig;
use saleval::saliency::Method;
use saleval::simulation::{run_experiment, simulate_annotations, CorpusSpec, OracleConfig};
use saleval::tasks::build_assignment;
use saleval::text::ClassifierConfig;

mod common;

/// Probability that the true class wins a strict plurality of `votes`
/// uniform labels over `1..=classes`, by enumerating every vote vector.
fn enumerated_base_rate(classes: usize, votes: u32) -> f64 {
    let total = classes.pow(votes);
    let mut wins = 0;
    for code in 0..total {
        let mut c = code;
        let mut counts = vec![0; classes + 1];
        for _ in 0..votes {
            counts[c % classes + 1] += 1;
            c /= classes;
        }
        if (2..=classes).all(|o| counts[1] > counts[o]) {
            wins += 1;
        }
    }
    wins as f64 / total as f64
}

#[test]
fn uniform_annotators_hit_the_enumerated_base_rate() {
    let base = enumerated_base_rate(2, 5);
    assert!((base - 0.5).abs() < 1e-12);
    let tasks = common::task_grid(100, &[Method::Random], &common::KS);
    let plan = build_assignment(&tasks, 5, 100, 4).unwrap();
    let mut store =
        AnnotationStore::in_memory(tasks.clone(), plan, StoreOptions::default()).unwrap();
    let oracle = OracleConfig {
        noise: 1.0,
        ..OracleConfig::new(2, HashMap::new())
    };
    simulate_annotations(&mut store, &oracle, 10_000, None, 9, 1).unwrap();
    let accepted = store.export(true);
    assert_eq!(accepted.len(), 5 * tasks.len());
    let m = aggregate(
        &tasks,
        accepted
            .iter()
            .map(|r| (r.annotation.task_id.as_str(), r.annotation.label)),
    )
    .unwrap();
    for (k, p) in m.accuracy_table().p[0].iter().enumerate() {
        assert!((p - base).abs() <= 0.10, "k index {k}: p = {p}");
    }
}

#[test]
fn enumeration_agrees_with_aggregation_rule() {
    // Same enumeration, counted through the production vote rule.
    for classes in [2usize, 4] {
        let votes = 5u32;
        let total = classes.pow(votes);
        let mut wins = 0;
        for code in 0..total {
            let mut c = code;
            let labels: Vec<usize> = (0..votes)
                .map(|_| {
                    let l = c % classes + 1;
                    c /= classes;
                    l
                })
                .collect();
            wins += majority_outcome(&labels, 1) as usize;
        }
        assert!((wins as f64 / total as f64 - enumerated_base_rate(classes, votes)).abs() < 1e-12);
    }
}

fn small_config(seed: u64) -> ExperimentConfig {
    let corpus = CorpusSpec {
        samples: 200,
        words_per_sample: (12, 20),
        filler_vocab: 60,
        ..Default::default()
    };
    let model = ClassifierConfig {
        embedding_dim: 16,
        layers: 2,
        heads: 2,
        ffn_dim: 32,
        max_len: 32,
        ..Default::default()
    };
    ExperimentConfig {
        seed,
        corpus,
        model,
        methods: vec![
            Method::Random,
            Method::VanillaGradient,
            Method::KeywordOracle,
        ],
        ks: vec![1, 2, 3],
        samples: 20,
        batch_size: 20,
        ..Default::default()
    }
}

#[test]
fn runs_are_reproducible_from_the_seed() {
    let a = run_experiment(&small_config(3)).unwrap();
    let b = run_experiment(&small_config(3)).unwrap();
    assert_eq!(a.annotations, b.annotations);
    assert_eq!(a.scores, b.scores);
    assert_eq!(a.explanations, b.explanations);
    let oracle = a
        .scores
        .methods
        .iter()
        .position(|&m| m == Method::KeywordOracle)
        .unwrap();
    assert_eq!(a.scores.p[oracle][2], 1.0);
    let c = run_experiment(&small_config(4)).unwrap();
    assert_ne!(a.annotations, c.annotations);
}

#[test]
fn stage_failures_name_the_stage() {
    let mut cfg = small_config(1);
    cfg.samples = 150;
    cfg.batch_size = 150;
    let err = run_experiment(&cfg).unwrap_err().to_string();
    assert!(err.contains("select"), "{err}");
}
