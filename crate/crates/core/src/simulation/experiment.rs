use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{gen_corpus, simulate_worker, OracleConfig};
use crate::aggregation::{aggregate, AggregateMatrix, ScoreReport};
use crate::analytics::{detect_flips, overlap_matrix, FlipReport, OverlapMatrix};
use crate::annotation::{AnnotationStore, ExportRecord, FilterReport, NextTask, StoreOptions};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::saliency::{explain, explain_random, ExplainOptions, Explanation, Method};
use crate::tasks::{build_assignment, build_tasks, AssignmentPlan, Task};
use crate::text::{select_eval_samples, train, Sample, TextClassifier, TrainReport};

/// Ideal explanation for a planted-keyword sample: 1 on keywords of the
/// sample's own class, 0 elsewhere.
pub fn keyword_oracle_explanation(
    sample: &Sample,
    keyword_class: &HashMap<String, usize>,
) -> Explanation {
    let scores = sample
        .words
        .iter()
        .map(|w| f64::from(u8::from(keyword_class.get(&w.text) == Some(&sample.label))))
        .collect();
    Explanation {
        sample_id: sample.id.clone(),
        method: Method::KeywordOracle,
        target_class: sample.label,
        scores,
        predicted_class: sample.label,
        confidence: 1.0,
        params: serde_json::json!({}),
        seed: None,
        completeness_residual: None,
    }
}

/// Everything one simulated run produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub corpus: Vec<Sample>,
    pub model: TextClassifier,
    pub train_report: TrainReport,
    pub selected: Vec<Sample>,
    pub explanations: Vec<Explanation>,
    pub tasks: Vec<Task>,
    pub plan: AssignmentPlan,
    pub annotations: Vec<ExportRecord>,
    pub filter_reports: Vec<FilterReport>,
    pub aggregate: AggregateMatrix,
    pub scores: ScoreReport,
    pub flips: Option<FlipReport>,
    pub overlap: OverlapMatrix,
}

/// Explains every sample with every method.
pub fn explain_all(
    model: &TextClassifier,
    samples: &[Sample],
    methods: &[Method],
    options: &ExplainOptions,
    keyword_class: Option<&HashMap<String, usize>>,
) -> Result<Vec<Explanation>> {
    let mut out = Vec::with_capacity(samples.len() * methods.len());
    for s in samples {
        for &m in methods {
            out.push(match m {
                Method::Random => explain_random(s, options.seed),
                Method::KeywordOracle => {
                    let map = keyword_class.ok_or_else(|| {
                        Error::invalid("keyword_oracle needs a planted-keyword corpus")
                    })?;
                    keyword_oracle_explanation(s, map)
                }
                _ => explain(model, s, m, options)?,
            });
        }
    }
    Ok(out)
}

/// Serves every open batch to simulated workers through the annotation store,
/// applies the quality rule, and repeats for re-queued batches (at most
/// `max_rounds` times).
pub fn simulate_annotations(
    store: &mut AnnotationStore,
    oracle: &OracleConfig,
    elapsed_ms: u64,
    quality: Option<&crate::annotation::QualityRule>,
    seed: u64,
    max_rounds: usize,
) -> Result<Vec<FilterReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut now = 0u64;
    let mut worker = 0usize;
    let mut reports = Vec::new();
    for _ in 0..max_rounds.max(1) {
        while store.progress().batches_open > 0 {
            let token = format!("sim-worker-{worker:05}");
            worker += 1;
            let session = store.open_session(&token, now)?;
            while let NextTask::Task(view) = store.next_task(&session.session_id)? {
                let label = simulate_worker(&view.rendered, oracle, &mut rng);
                now += elapsed_ms;
                store.submit(&session.session_id, &view.task_id, label, elapsed_ms, now)?;
            }
            now += 1;
        }
        let Some(rule) = quality else { break };
        let report = store.filter_sessions(rule, now)?;
        let rejected = report.rejected.len();
        reports.push(report);
        if rejected == 0 {
            break;
        }
    }
    Ok(reports)
}

/// Runs the whole protocol on a synthetic planted-keyword corpus: train,
/// select, explain, build tasks and plan, annotate with simulated workers,
/// aggregate, score, and analyze.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let mut spec = config.corpus.clone();
    spec.seed = config.stage_seed("corpus");
    let corpus = gen_corpus(&spec).map_err(|e| e.in_stage("corpus"))?;
    let keyword_class = spec.keyword_classes();

    let mut model_cfg = config.model.clone();
    model_cfg.seed = config.stage_seed("model");
    let (model, train_report) =
        train(model_cfg, &corpus, config.train).map_err(|e| e.in_stage("train"))?;

    let candidates: Vec<Sample> = corpus
        .iter()
        .filter(|s| s.split != crate::text::Split::Train)
        .cloned()
        .collect();
    let selected = select_eval_samples(
        &model,
        &candidates,
        config.samples,
        config.selection,
        config.balanced,
        config.stage_seed("select"),
    )
    .map_err(|e| e.in_stage("select"))?;

    let mut explain_opts = config.explain.clone();
    explain_opts.seed = config.stage_seed("explain");
    let explanations = explain_all(
        &model,
        &selected,
        &config.methods,
        &explain_opts,
        Some(&keyword_class),
    )
    .map_err(|e| e.in_stage("explain"))?;

    let tasks = build_tasks(
        &selected,
        &config.methods,
        &config.ks,
        &explanations,
        &config.tasks,
    )
    .map_err(|e| e.in_stage("tasks"))?;
    let plan = build_assignment(
        &tasks,
        config.replication,
        config.batch_size,
        config.stage_seed("plan"),
    )
    .map_err(|e| e.in_stage("plan"))?;

    let mut store =
        AnnotationStore::in_memory(tasks.clone(), plan.clone(), StoreOptions::default())
            .map_err(|e| e.in_stage("annotate"))?;
    let oracle = OracleConfig {
        classes: spec.classes,
        keyword_class: keyword_class.clone(),
        noise: config.workers.noise,
        dont_know_if_no_keyword: config.workers.dont_know_if_no_keyword,
    };
    oracle.validate().map_err(|e| e.in_stage("annotate"))?;
    let filter_reports = simulate_annotations(
        &mut store,
        &oracle,
        config.workers.elapsed_ms,
        Some(&config.quality),
        config.stage_seed("workers"),
        5,
    )
    .map_err(|e| e.in_stage("annotate"))?;
    let annotations = store.export(false);

    let accepted = store.export(true);
    let matrix = aggregate(
        &tasks,
        accepted
            .iter()
            .map(|r| (r.annotation.task_id.as_str(), r.annotation.label)),
    )
    .map_err(|e| e.in_stage("aggregate"))?;
    let scores = ScoreReport::build(&matrix.accuracy_table(), config.weight_basis)
        .map_err(|e| e.in_stage("score"))?;
    let flips = if config.ks.len() >= 2 {
        Some(detect_flips(&matrix).map_err(|e| e.in_stage("flips"))?)
    } else {
        None
    };
    let k_max = *config.ks.last().expect("validated non-empty");
    let overlap = overlap_matrix(
        &selected,
        &explanations,
        &config.methods,
        k_max,
        config.tasks.rank_by_abs,
    )
    .map_err(|e| e.in_stage("overlap"))?;

    Ok(ExperimentOutput {
        corpus,
        model,
        train_report,
        selected,
        explanations,
        tasks,
        plan,
        annotations,
        filter_reports,
        aggregate: matrix,
        scores,
        flips,
        overlap,
    })
}
