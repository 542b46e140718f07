//! One function per subcommand. Every stage derives its seed from the root
//! seed exactly as the end-to-end simulation does, so running the stages one
//! by one reproduces `simulate`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::BufRead;
use std::path::Path;
use std::sync::Arc;

use anyhow::{Context, Result};
use saleval::aggregation::{aggregate, AggregateMatrix, ScoreReport};
use saleval::analytics::{
    detect_flips, faithfulness_table, misclassified_report, overlap_matrix, FaithfulnessTable,
    OverlapMatrix, Removal,
};
use saleval::annotation::{
    audit_agreement, sample_audit_tasks, AnnotationStore, SessionStatus, StoreOptions,
};
use saleval::config::ExperimentConfig;
use saleval::saliency::Method;
use saleval::simulation::{explain_all, gen_corpus, run_experiment, CorpusSpec};
use saleval::tasks::{build_assignment, build_tasks, Task};
use saleval::text::{select_eval_samples, train, Sample, Split, TextClassifier};
use serde::Deserialize;

use crate::artifacts::{self as art, Workspace};
use crate::server::{self, AppState};
use crate::{Command, Common, UsageError};

/// Resolved configuration plus the output directory it writes to.
pub struct Stage {
    pub config: ExperimentConfig,
    pub ws: Workspace,
}

pub fn load_config(common: &Common) -> Result<Stage> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = &common.out {
        config.output_dir = out.clone();
    }
    config.validate()?;
    let ws = Workspace::new(config.output_dir.clone());
    Ok(Stage { config, ws })
}

pub fn dispatch(common: &Common, command: Command) -> Result<()> {
    let cx = load_config(common)?;
    match command {
        Command::Train => cmd_train(&cx),
        Command::Explain { methods, steps } => cmd_explain(&cx, &methods, steps),
        Command::Overlap { k } => cmd_overlap(&cx, k),
        Command::GenTasks => cmd_gen_tasks(&cx),
        Command::Plan => cmd_plan(&cx),
        Command::Serve {
            listen,
            admin_token,
        } => cmd_serve(&cx, &listen, admin_token),
        Command::Simulate => cmd_simulate(&cx),
        Command::Aggregate => cmd_aggregate(&cx),
        Command::Score => cmd_score(&cx),
        Command::Flips => cmd_flips(&cx),
        Command::Suffcomp { removal } => cmd_suffcomp(&cx, removal.into()),
        Command::Audit { sample, experts } => cmd_audit(&cx, sample, experts.as_deref()),
        Command::Export {
            accepted_only,
            apply_quality,
        } => cmd_export(&cx, accepted_only, apply_quality),
        Command::Report => cmd_report(&cx),
    }
}

fn say(ws: &Workspace, name: &str) {
    println!("wrote {}", ws.path(name).display());
}

/// The synthetic corpus spec with its stage seed applied.
fn synthetic_spec(config: &ExperimentConfig) -> CorpusSpec {
    let mut spec = config.corpus.clone();
    spec.seed = config.stage_seed("corpus");
    spec
}

fn keyword_map(config: &ExperimentConfig) -> Option<HashMap<String, usize>> {
    config
        .corpus_path
        .is_none()
        .then(|| synthetic_spec(config).keyword_classes())
}

fn write_config(cx: &Stage) -> Result<()> {
    cx.ws
        .write_text(art::CONFIG, &cx.config.to_toml_string()?)?;
    say(&cx.ws, art::CONFIG);
    Ok(())
}

fn cmd_train(cx: &Stage) -> Result<()> {
    let config = &cx.config;
    let corpus = match &config.corpus_path {
        Some(path) => {
            let f = std::fs::File::open(path)
                .with_context(|| format!("opening corpus {}", path.display()))?;
            saleval::text::read_corpus(std::io::BufReader::new(f))
                .with_context(|| format!("reading corpus {}", path.display()))?
        }
        None => gen_corpus(&synthetic_spec(config))?,
    };
    let mut model_cfg = config.model.clone();
    model_cfg.seed = config.stage_seed("model");
    let (model, report) = train(model_cfg, &corpus, config.train)?;
    write_config(cx)?;
    cx.ws.write_corpus(art::CORPUS, &corpus)?;
    say(&cx.ws, art::CORPUS);
    cx.ws.write_model(&model)?;
    say(&cx.ws, art::MODEL);
    cx.ws.write_json(art::TRAIN_REPORT, &report)?;
    say(&cx.ws, art::TRAIN_REPORT);
    Ok(())
}

fn select(cx: &Stage, model: &TextClassifier) -> Result<Vec<Sample>> {
    let corpus = cx.ws.read_corpus(art::CORPUS)?;
    let candidates: Vec<Sample> = corpus
        .into_iter()
        .filter(|s| s.split != Split::Train)
        .collect();
    let c = &cx.config;
    Ok(select_eval_samples(
        model,
        &candidates,
        c.samples,
        c.selection,
        c.balanced,
        c.stage_seed("select"),
    )?)
}

fn cmd_explain(cx: &Stage, methods: &[Method], steps: Option<usize>) -> Result<()> {
    let config = &cx.config;
    let methods: Vec<Method> = if methods.is_empty() {
        config.methods.clone()
    } else {
        let mut seen = HashSet::new();
        methods
            .iter()
            .copied()
            .filter(|m| seen.insert(*m))
            .collect()
    };
    if steps == Some(0) {
        return Err(UsageError("--steps must be at least 1".into()).into());
    }
    let model = cx.ws.read_model()?;
    let selected = select(cx, &model)?;
    let mut opts = config.explain.clone();
    opts.seed = config.stage_seed("explain");
    if let Some(s) = steps {
        opts.ig_steps = s;
    }
    let fresh = explain_all(
        &model,
        &selected,
        &methods,
        &opts,
        keyword_map(config).as_ref(),
    )?;

    // Keep earlier explanations of other methods for the same samples.
    let ids: HashSet<&str> = selected.iter().map(|s| s.id.as_str()).collect();
    let mut merged = if cx.ws.exists(art::EXPLANATIONS) {
        cx.ws
            .read_explanations()?
            .into_iter()
            .filter(|e| ids.contains(e.sample_id.as_str()) && !methods.contains(&e.method))
            .collect()
    } else {
        Vec::new()
    };
    merged.extend(fresh);
    let order: HashMap<&str, usize> = selected
        .iter()
        .enumerate()
        .map(|(i, s)| (s.id.as_str(), i))
        .collect();
    // Sample order, then configured method order (others after, by name).
    let rank = |m: Method| {
        config
            .methods
            .iter()
            .position(|&c| c == m)
            .unwrap_or(usize::MAX)
    };
    merged.sort_by_key(|e| {
        (
            order[e.sample_id.as_str()],
            rank(e.method),
            e.method.as_str(),
        )
    });

    cx.ws.write_corpus(art::SELECTED, &selected)?;
    say(&cx.ws, art::SELECTED);
    cx.ws.write_explanations(&merged)?;
    say(&cx.ws, art::EXPLANATIONS);
    Ok(())
}

fn compute_overlap(cx: &Stage, k: usize) -> Result<OverlapMatrix> {
    let selected = cx.ws.read_corpus(art::SELECTED)?;
    let explanations = cx.ws.read_explanations()?;
    Ok(overlap_matrix(
        &selected,
        &explanations,
        &cx.config.methods,
        k,
        cx.config.tasks.rank_by_abs,
    )?)
}

fn k_max(config: &ExperimentConfig) -> usize {
    *config.ks.last().expect("validated non-empty")
}

fn cmd_overlap(cx: &Stage, k: Option<usize>) -> Result<()> {
    let k = k.unwrap_or_else(|| k_max(&cx.config));
    if k == 0 {
        return Err(UsageError("--k must be at least 1".into()).into());
    }
    let overlap = compute_overlap(cx, k)?;
    cx.ws.write_json(art::OVERLAP, &overlap)?;
    say(&cx.ws, art::OVERLAP);
    cx.ws.write_text(art::OVERLAP_TXT, &overlap.to_text())?;
    say(&cx.ws, art::OVERLAP_TXT);
    Ok(())
}

fn cmd_gen_tasks(cx: &Stage) -> Result<()> {
    let selected = cx.ws.read_corpus(art::SELECTED)?;
    let explanations = cx.ws.read_explanations()?;
    let c = &cx.config;
    let tasks = build_tasks(&selected, &c.methods, &c.ks, &explanations, &c.tasks)?;
    cx.ws.write_tasks(&tasks)?;
    println!("{} tasks", tasks.len());
    say(&cx.ws, art::TASKS);
    Ok(())
}

fn cmd_plan(cx: &Stage) -> Result<()> {
    let tasks = cx.ws.read_tasks()?;
    let c = &cx.config;
    let plan = build_assignment(&tasks, c.replication, c.batch_size, c.stage_seed("plan"))?;
    cx.ws.write_json(art::PLAN, &plan)?;
    println!("{} batches", plan.batches.len());
    say(&cx.ws, art::PLAN);
    Ok(())
}

fn open_store(cx: &Stage, must_exist: bool) -> Result<AnnotationStore> {
    let tasks = cx.ws.read_tasks()?;
    let plan = cx.ws.read_plan()?;
    let log = if must_exist {
        cx.ws.input(art::STORE_LOG)?
    } else {
        cx.ws.path(art::STORE_LOG)
    };
    Ok(AnnotationStore::open(
        &log,
        tasks,
        plan,
        StoreOptions::default(),
    )?)
}

fn cmd_serve(cx: &Stage, listen: &str, admin_token: String) -> Result<()> {
    if admin_token.trim().is_empty() {
        return Err(UsageError("--admin-token must not be empty".into()).into());
    }
    let store = open_store(cx, false)?;
    let state = Arc::new(AppState::new(store, admin_token, cx.config.quality));
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(server::serve(state, listen))
}

fn cmd_export(cx: &Stage, accepted_only: bool, apply_quality: bool) -> Result<()> {
    let mut store = open_store(cx, true)?;
    if apply_quality {
        let now = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        let report = store.filter_sessions(&cx.config.quality, now)?;
        println!(
            "quality filter: {} accepted, {} rejected",
            report.accepted.len(),
            report.rejected.len()
        );
    }
    let records = store.export(accepted_only);
    cx.ws.write_annotations(&records)?;
    println!("{} annotations", records.len());
    say(&cx.ws, art::ANNOTATIONS);
    Ok(())
}

fn aggregate_tasks(
    tasks: &[Task],
    records: &[saleval::annotation::ExportRecord],
) -> Result<AggregateMatrix> {
    Ok(aggregate(
        tasks,
        records
            .iter()
            .filter(|r| r.status == SessionStatus::Complete)
            .map(|r| (r.annotation.task_id.as_str(), r.annotation.label)),
    )?)
}

fn cmd_aggregate(cx: &Stage) -> Result<()> {
    let tasks = cx.ws.read_tasks()?;
    let records = cx.ws.read_annotations()?;
    let matrix = aggregate_tasks(&tasks, &records)?;
    if !matrix.unannotated.is_empty() {
        eprintln!(
            "warning: {} tasks have no accepted annotation and score 0",
            matrix.unannotated.len()
        );
    }
    cx.ws.write_json(art::AGGREGATE, &matrix)?;
    say(&cx.ws, art::AGGREGATE);
    Ok(())
}

fn score(cx: &Stage, matrix: &AggregateMatrix) -> Result<ScoreReport> {
    Ok(ScoreReport::build(
        &matrix.accuracy_table(),
        cx.config.weight_basis,
    )?)
}

fn cmd_score(cx: &Stage) -> Result<()> {
    let matrix = cx.ws.read_aggregate()?;
    let report = score(cx, &matrix)?;
    let text = report.to_text();
    cx.ws.write_json(art::SCORES, &report)?;
    cx.ws.write_text(art::SCORES_TXT, &text)?;
    print!("{text}");
    say(&cx.ws, art::SCORES);
    say(&cx.ws, art::SCORES_TXT);
    Ok(())
}

fn write_flips(ws: &Workspace, matrix: &AggregateMatrix, with_json: bool) -> Result<()> {
    let flips = detect_flips(matrix)?;
    if with_json {
        ws.write_json(art::FLIPS, &flips)?;
        say(ws, art::FLIPS);
    }
    ws.write_text(art::FLIPS_TXT, &flips.to_text())?;
    say(ws, art::FLIPS_TXT);
    ws.write_text(art::FLIPS_CSV, &flips.histogram_csv())?;
    say(ws, art::FLIPS_CSV);
    Ok(())
}

fn cmd_flips(cx: &Stage) -> Result<()> {
    let matrix = cx.ws.read_aggregate()?;
    write_flips(&cx.ws, &matrix, true)?;
    let mis = misclassified_report(&matrix);
    cx.ws.write_text(art::MISCLASSIFIED_TXT, &mis.to_text())?;
    say(&cx.ws, art::MISCLASSIFIED_TXT);
    Ok(())
}

fn compute_suffcomp(
    config: &ExperimentConfig,
    model: &TextClassifier,
    selected: &[Sample],
    explanations: &[saleval::saliency::Explanation],
    removal: Removal,
) -> Result<FaithfulnessTable> {
    Ok(faithfulness_table(
        model,
        selected,
        explanations,
        &config.methods,
        &config.ks,
        removal,
        config.tasks.rank_by_abs,
    )?)
}

fn write_suffcomp(ws: &Workspace, table: &FaithfulnessTable) -> Result<()> {
    ws.write_json(art::SUFFCOMP, table)?;
    say(ws, art::SUFFCOMP);
    ws.write_text(art::SUFFCOMP_TXT, &table.to_text())?;
    say(ws, art::SUFFCOMP_TXT);
    Ok(())
}

fn cmd_suffcomp(cx: &Stage, removal: Removal) -> Result<()> {
    let model = cx.ws.read_model()?;
    let selected = cx.ws.read_corpus(art::SELECTED)?;
    let explanations = cx.ws.read_explanations()?;
    let table = compute_suffcomp(&cx.config, &model, &selected, &explanations, removal)?;
    write_suffcomp(&cx.ws, &table)
}

#[derive(Debug, Deserialize)]
struct ExpertLabel {
    task_id: String,
    label: usize,
}

fn read_expert_labels(path: &Path) -> Result<BTreeMap<String, usize>> {
    let f = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = BTreeMap::new();
    for (n, line) in std::io::BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let e: ExpertLabel = serde_json::from_str(&line)
            .with_context(|| format!("{}:{}: bad expert label", path.display(), n + 1))?;
        out.insert(e.task_id, e.label);
    }
    Ok(out)
}

fn cmd_audit(cx: &Stage, sample: usize, experts: Option<&Path>) -> Result<()> {
    let tasks = cx.ws.read_tasks()?;
    match experts {
        None => {
            let ids: Vec<String> = tasks.iter().map(|t| t.task_id.clone()).collect();
            let chosen: HashSet<String> =
                sample_audit_tasks(&ids, sample, cx.config.stage_seed("audit"))
                    .into_iter()
                    .collect();
            let mut text = String::new();
            for t in tasks.iter().filter(|t| chosen.contains(&t.task_id)) {
                text.push_str(&serde_json::to_string(&t.view())?);
                text.push('\n');
            }
            cx.ws.write_text(art::AUDIT_SAMPLE, &text)?;
            println!("{} tasks sampled", chosen.len());
            say(&cx.ws, art::AUDIT_SAMPLE);
        }
        Some(path) => {
            let labels = read_expert_labels(path)?;
            let matrix = cx.ws.read_aggregate()?;
            let crowd: BTreeMap<String, u8> = matrix
                .outcomes(&tasks)
                .into_iter()
                .filter(|(id, _)| labels.contains_key(id))
                .collect();
            let truth: BTreeMap<String, usize> = tasks
                .iter()
                .map(|t| (t.task_id.clone(), t.ground_truth))
                .collect();
            let report = audit_agreement(&crowd, &labels, &truth)?;
            println!(
                "expert/crowd agreement {:.1}% over {} tasks",
                report.agreement * 100.0,
                report.compared
            );
            cx.ws.write_json(art::AUDIT, &report)?;
            say(&cx.ws, art::AUDIT);
        }
    }
    Ok(())
}

/// Writes the report bundle from whatever the output directory holds.
fn cmd_report(cx: &Stage) -> Result<()> {
    let matrix = cx.ws.read_aggregate()?;
    let dir = cx.ws.child(art::REPORT_DIR);
    let scores = score(cx, &matrix)?;
    dir.write_text(art::SCORES_TXT, &scores.to_text())?;
    say(&dir, art::SCORES_TXT);
    if matrix.ks.len() >= 2 {
        write_flips(&dir, &matrix, false)?;
    }
    dir.write_text(
        art::MISCLASSIFIED_TXT,
        &misclassified_report(&matrix).to_text(),
    )?;
    say(&dir, art::MISCLASSIFIED_TXT);
    if cx.ws.exists(art::SELECTED) && cx.ws.exists(art::EXPLANATIONS) {
        let overlap = compute_overlap(cx, k_max(&cx.config))?;
        dir.write_text(art::OVERLAP_TXT, &overlap.to_text())?;
        say(&dir, art::OVERLAP_TXT);
    }
    if cx.ws.exists(art::SUFFCOMP) {
        let table: FaithfulnessTable = cx.ws.read_json(art::SUFFCOMP)?;
        dir.write_text(art::SUFFCOMP_TXT, &table.to_text())?;
        say(&dir, art::SUFFCOMP_TXT);
    }
    Ok(())
}

fn cmd_simulate(cx: &Stage) -> Result<()> {
    let out = run_experiment(&cx.config)?;
    let ws = &cx.ws;
    write_config(cx)?;
    ws.write_corpus(art::CORPUS, &out.corpus)?;
    ws.write_model(&out.model)?;
    ws.write_json(art::TRAIN_REPORT, &out.train_report)?;
    ws.write_corpus(art::SELECTED, &out.selected)?;
    ws.write_explanations(&out.explanations)?;
    ws.write_tasks(&out.tasks)?;
    ws.write_json(art::PLAN, &out.plan)?;
    ws.write_annotations(&out.annotations)?;
    ws.write_json(art::FILTER_REPORTS, &out.filter_reports)?;
    ws.write_json(art::AGGREGATE, &out.aggregate)?;
    ws.write_json(art::SCORES, &out.scores)?;
    ws.write_text(art::SCORES_TXT, &out.scores.to_text())?;
    if let Some(flips) = &out.flips {
        ws.write_json(art::FLIPS, flips)?;
        ws.write_text(art::FLIPS_TXT, &flips.to_text())?;
        ws.write_text(art::FLIPS_CSV, &flips.histogram_csv())?;
    }
    ws.write_json(art::OVERLAP, &out.overlap)?;
    ws.write_text(art::OVERLAP_TXT, &out.overlap.to_text())?;
    let table = compute_suffcomp(
        &cx.config,
        &out.model,
        &out.selected,
        &out.explanations,
        Removal::Pad,
    )?;
    ws.write_json(art::SUFFCOMP, &table)?;
    ws.write_text(art::SUFFCOMP_TXT, &table.to_text())?;
    println!(
        "simulated {} tasks, {} annotations",
        out.tasks.len(),
        out.annotations.len()
    );
    print!("{}", out.scores.to_text());
    cmd_report(cx)
}
