//! Task rendering, task materialization, and the worker assignment plan.

mod assignment;

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

pub use assignment::{build_assignment, AssignmentPlan};

use crate::error::{Error, Result};
use crate::saliency::{top_k_words, Explanation, Method};
use crate::seed::hash_hex;
use crate::text::Sample;

/// Placeholder shown for a hidden word.
pub const HIDDEN_MARKER: &str = ".";

/// Label value meaning "I don't know".
pub const DONT_KNOW: usize = 0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelOption {
    pub value: usize,
    pub name: String,
}

/// "I don't know" followed by one option per class.
pub fn label_options(class_names: &[String]) -> Vec<LabelOption> {
    std::iter::once(LabelOption {
        value: DONT_KNOW,
        name: "I don't know".into(),
    })
    .chain(class_names.iter().enumerate().map(|(i, n)| LabelOption {
        value: i + 1,
        name: n.clone(),
    }))
    .collect()
}

pub fn default_class_names(classes: usize) -> Vec<String> {
    (1..=classes).map(|c| format!("class {c}")).collect()
}

/// One labeling task: a sample with only its top-k words visible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub task_id: String,
    pub sample_id: String,
    pub method: Method,
    pub k: usize,
    pub shown_positions: Vec<usize>,
    pub rendered: String,
    pub label_options: Vec<LabelOption>,
    /// Never sent to workers.
    pub ground_truth: usize,
}

/// What a worker sees of a task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskView {
    pub task_id: String,
    pub rendered: String,
    pub label_options: Vec<LabelOption>,
}

impl Task {
    pub fn view(&self) -> TaskView {
        TaskView {
            task_id: self.task_id.clone(),
            rendered: self.rendered.clone(),
            label_options: self.label_options.clone(),
        }
    }
}

pub fn task_id(sample_id: &str, method: Method, k: usize) -> String {
    let mut h = hash_hex(&[sample_id, method.as_str(), &k.to_string()]);
    h.truncate(16);
    h
}

/// Renders the eligible words of `sample`, showing those at `shown` and
/// replacing the rest with the hidden marker. Punctuation and special tokens
/// are dropped. With `compact_dots`, runs of hidden words are written as one
/// run of dots.
pub fn render_task(sample: &Sample, shown: &[usize], compact_dots: bool) -> Result<String> {
    let mut visible = vec![false; sample.len()];
    for &p in shown {
        let word = sample.words.get(p).ok_or_else(|| {
            Error::invalid(format!(
                "position {p} out of range for sample {} ({} words)",
                sample.id,
                sample.len()
            ))
        })?;
        if !word.is_eligible() {
            return Err(Error::invalid(format!(
                "position {p} of sample {} (`{}`) cannot be shown",
                sample.id, word.text
            )));
        }
        visible[p] = true;
    }
    let mut out: Vec<String> = Vec::new();
    let mut run = 0usize;
    for (p, w) in sample.words.iter().enumerate() {
        if !w.is_eligible() {
            continue;
        }
        if visible[p] {
            if run > 0 {
                out.push(HIDDEN_MARKER.repeat(run));
                run = 0;
            }
            out.push(w.text.clone());
        } else if compact_dots {
            run += 1;
        } else {
            out.push(HIDDEN_MARKER.to_string());
        }
    }
    if run > 0 {
        out.push(HIDDEN_MARKER.repeat(run));
    }
    Ok(out.join(" "))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
#[derive(Default)]
pub struct TaskOptions {
    pub rank_by_abs: bool,
    pub compact_dots: bool,
    /// Display names of classes 1..=C. Generic names are used when empty.
    pub class_names: Vec<String>,
}

/// Builds one task per (sample, method, k), in that nesting order.
pub fn build_tasks(
    samples: &[Sample],
    methods: &[Method],
    ks: &[usize],
    explanations: &[Explanation],
    options: &TaskOptions,
) -> Result<Vec<Task>> {
    if ks.contains(&0) {
        return Err(Error::invalid("every k must be at least 1"));
    }
    let index: HashMap<(&str, Method), &Explanation> = explanations
        .iter()
        .map(|e| ((e.sample_id.as_str(), e.method), e))
        .collect();
    let missing: Vec<String> = samples
        .iter()
        .flat_map(|s| methods.iter().map(move |&m| (s, m)))
        .filter(|(s, m)| !index.contains_key(&(s.id.as_str(), *m)))
        .map(|(s, m)| format!("{}/{}", s.id, m))
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingExplanations(missing.join(", ")));
    }
    let max_label = samples.iter().map(|s| s.label).max().unwrap_or(1);
    let names = if options.class_names.is_empty() {
        default_class_names(max_label.max(2))
    } else if options.class_names.len() < max_label {
        return Err(Error::invalid(format!(
            "{} class names for labels up to {max_label}",
            options.class_names.len()
        )));
    } else {
        options.class_names.clone()
    };
    let opts = label_options(&names);

    let mut tasks = Vec::with_capacity(samples.len() * methods.len() * ks.len());
    for sample in samples {
        for &method in methods {
            let e = index[&(sample.id.as_str(), method)];
            e.validate_against(sample)?;
            for &k in ks {
                let top = top_k_words(&e.scores, sample, k, options.rank_by_abs)?;
                tasks.push(Task {
                    task_id: task_id(&sample.id, method, k),
                    sample_id: sample.id.clone(),
                    method,
                    k,
                    rendered: render_task(sample, &top.positions, options.compact_dots)?,
                    shown_positions: top.positions,
                    label_options: opts.clone(),
                    ground_truth: sample.label,
                });
            }
        }
    }
    let mut seen = BTreeMap::new();
    for t in &tasks {
        if let Some(prev) = seen.insert(t.task_id.as_str(), t) {
            return Err(Error::data(format!(
                "duplicate task {} ({}/{}/{} and {}/{}/{})",
                t.task_id, prev.sample_id, prev.method, prev.k, t.sample_id, t.method, t.k
            )));
        }
    }
    Ok(tasks)
}

pub fn read_tasks(reader: impl BufRead) -> Result<Vec<Task>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::data(format!("task line {}: {e}", n + 1)))?,
        );
    }
    Ok(out)
}

pub fn write_tasks(mut writer: impl Write, tasks: &[Task]) -> Result<()> {
    for t in tasks {
        serde_json::to_writer(&mut writer, t)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::saliency::explain_random;
    use crate::text::Split;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn sample(id: &str, text: &str) -> Sample {
        Sample::from_text(id, text, 1, Split::Eval).unwrap()
    }

    #[test]
    fn renders_figure_example() {
        let s = sample("a", "poor plot ! and acting");
        assert_eq!(render_task(&s, &[0], false).unwrap(), "poor . . .");
        assert_eq!(render_task(&s, &[0], true).unwrap(), "poor ...");
        assert_eq!(
            render_task(&s, &[0, 1, 3, 4], false).unwrap(),
            "poor plot and acting"
        );
        assert_eq!(render_task(&s, &[], false).unwrap(), ". . . .");
        assert_eq!(render_task(&s, &[4], true).unwrap(), "... acting");
    }

    #[test]
    fn rejects_bad_positions() {
        let s = sample("a", "poor plot ! and");
        assert!(render_task(&s, &[9], false).is_err());
        assert!(render_task(&s, &[2], false).is_err());
    }

    #[test]
    fn duplicate_words_are_positional() {
        let s = sample("a", "bad film bad");
        assert_eq!(render_task(&s, &[2], false).unwrap(), ". . bad");
    }

    #[test]
    fn task_count_and_determinism() {
        let samples: Vec<Sample> = (0..3)
            .map(|i| sample(&format!("s{i}"), "a b c d e f"))
            .collect();
        let methods = [Method::Random, Method::Lime];
        let mut ex: Vec<Explanation> = samples.iter().map(|s| explain_random(s, 1)).collect();
        for s in &samples {
            let mut e = explain_random(s, 2);
            e.method = Method::Lime;
            ex.push(e);
        }
        let ks = [1, 2, 3];
        let a = build_tasks(&samples, &methods, &ks, &ex, &TaskOptions::default()).unwrap();
        let b = build_tasks(&samples, &methods, &ks, &ex, &TaskOptions::default()).unwrap();
        assert_eq!(a.len(), 18);
        assert_eq!(a, b);
        assert_eq!(a[0].label_options[0].value, 0);
        let ids: HashSet<_> = a.iter().map(|t| &t.task_id).collect();
        assert_eq!(ids.len(), 18);
    }

    #[test]
    fn missing_explanations_listed() {
        let samples = vec![sample("s0", "a b"), sample("s1", "c d")];
        let ex = vec![explain_random(&samples[0], 0)];
        let err = build_tasks(
            &samples,
            &[Method::Random, Method::Lime],
            &[1],
            &ex,
            &TaskOptions::default(),
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("s0/lime") && msg.contains("s1/random") && msg.contains("s1/lime"),
            "{msg}"
        );
    }

    #[test]
    fn view_hides_ground_truth() {
        let s = sample("s0", "a b");
        let t = build_tasks(
            std::slice::from_ref(&s),
            &[Method::Random],
            &[1],
            &[explain_random(&s, 0)],
            &TaskOptions::default(),
        )
        .unwrap();
        let json = serde_json::to_value(t[0].view()).unwrap();
        assert!(json.get("ground_truth").is_none());
    }

    proptest! {
        #[test]
        fn rendering_reveals_exactly_the_shown_words(
            words in proptest::collection::vec(prop_oneof![Just(",".to_string()), Just("!".to_string()), "[a-e]{1,3}"], 1..25),
            pick in proptest::collection::vec(any::<bool>(), 25),
        ) {
            let text = format!("{} z", words.join(" "));
            let s = sample("p", &text);
            let shown: Vec<usize> = s.eligible_positions().into_iter().filter(|&p| pick[p % 25]).collect();
            let r = render_task(&s, &shown, false).unwrap();
            let tokens: Vec<&str> = r.split(' ').collect();
            prop_assert_eq!(tokens.len(), s.eligible_positions().len());
            let visible: Vec<&str> = tokens.iter().copied().filter(|t| *t != HIDDEN_MARKER).collect();
            let expected: Vec<&str> = shown.iter().map(|&p| s.words[p].text.as_str()).collect();
            prop_assert_eq!(visible, expected);
        }
    }
}
