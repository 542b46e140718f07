use approx::assert_abs_diff_eq;
use saleval::aggregation::{aggregate, ScoreReport, WeightBasis};
use saleval::saliency::Method;

mod common;
use common::*;

fn one_decimal(v: f64) -> f64 {
    (v * 1000.0).round() / 10.0
}

#[test]
fn imdb_table_reproduces_weights_scores_and_ranks() {
    let r = ScoreReport::build(&accuracy_table(&IMDB_P), WeightBasis::AllMethods).unwrap();
    for (w, e) in r.w.iter().zip(IMDB_W) {
        assert_abs_diff_eq!(*w, e, epsilon = 5e-5);
    }
    for (j, m) in r.methods.iter().enumerate() {
        assert!(
            (r.s[j] * 100.0 - IMDB_S[j]).abs() <= 0.05,
            "{m}: {}",
            r.s[j] * 100.0
        );
        assert_eq!(one_decimal(r.s[j]), IMDB_S[j], "{m}");
        assert_eq!(
            r.column_ranks[j].as_slice(),
            IMDB_COLUMN_RANKS[j].as_slice(),
            "{m}"
        );
    }
    assert_eq!(r.score_ranks, IMDB_SCORE_RANKS);
}

#[test]
fn agnews_table_reproduces_ranks_and_all_scores_but_one() {
    let r = ScoreReport::build(&accuracy_table(&AGNEWS_P), WeightBasis::AllMethods).unwrap();
    for (j, m) in r.methods.iter().enumerate() {
        assert_eq!(
            r.column_ranks[j].as_slice(),
            AGNEWS_COLUMN_RANKS[j].as_slice(),
            "{m}"
        );
        if *m != Method::DeepLift {
            assert!(
                (r.s[j] * 100.0 - AGNEWS_S[j]).abs() <= 0.05,
                "{m}: {}",
                r.s[j] * 100.0
            );
        }
    }
    assert_eq!(r.score_ranks, AGNEWS_SCORE_RANKS);
    // The tabulated DeepLIFT cell is not what its own row computes to.
    let dl = Method::STANDARD
        .iter()
        .position(|&m| m == Method::DeepLift)
        .unwrap();
    assert_abs_diff_eq!(r.s[dl] * 100.0, 68.155, epsilon = 1e-3);
}

#[test]
fn excluding_random_changes_weights() {
    let all = ScoreReport::build(&accuracy_table(&IMDB_P), WeightBasis::AllMethods).unwrap();
    let ex = ScoreReport::build(&accuracy_table(&IMDB_P), WeightBasis::ExcludeRandom).unwrap();
    assert!(all.w.iter().zip(&ex.w).any(|(a, b)| (a - b).abs() > 1e-4));
    let mean_weight: f64 = ex.w.iter().sum::<f64>() / ex.w.len() as f64;
    assert!(mean_weight > 0.19);
}

#[test]
fn aggregating_votes_reproduces_the_accuracy_table() {
    let tasks = task_grid(100, &Method::STANDARD, &KS);
    let by_sample: Vec<String> = {
        let mut s: Vec<String> = tasks.iter().map(|t| t.sample_id.clone()).collect();
        s.sort();
        s.dedup();
        s
    };
    // Sample i is recovered under (j, k) iff i < p[j][k]; the other votes are
    // split so that no label wins outright.
    let mut votes: Vec<(String, usize)> = Vec::new();
    for t in &tasks {
        let i = by_sample.iter().position(|s| *s == t.sample_id).unwrap();
        let j = Method::STANDARD
            .iter()
            .position(|&m| m == t.method)
            .unwrap();
        let k = KS.iter().position(|&v| v == t.k).unwrap();
        let wrong = 3 - t.ground_truth;
        let labels = if (i as u32) < IMDB_P[j][k] {
            vec![t.ground_truth, t.ground_truth, t.ground_truth, 0, wrong]
        } else {
            vec![t.ground_truth, t.ground_truth, 0, 0, wrong]
        };
        votes.extend(labels.into_iter().map(|l| (t.task_id.clone(), l)));
    }
    let m = aggregate(&tasks, votes.iter().map(|(t, l)| (t.as_str(), *l))).unwrap();
    assert!(m.unannotated.is_empty());
    let table = m.accuracy_table();
    let expected = accuracy_table(&IMDB_P);
    assert_eq!(table.methods, expected.methods);
    for (a, b) in table.p.iter().flatten().zip(expected.p.iter().flatten()) {
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
    }
    let r = ScoreReport::build(&table, WeightBasis::AllMethods).unwrap();
    assert_eq!(r.score_ranks, IMDB_SCORE_RANKS);
    assert!(r.to_text().contains("w_k"));
}

#[test]
fn unknown_task_and_partial_grid_are_rejected() {
    let tasks = task_grid(3, &[Method::Random, Method::Lime], &[1, 2]);
    assert!(aggregate(&tasks, [("nope", 1)]).is_err());
    assert!(aggregate(&tasks[1..], std::iter::empty()).is_err());
    let m = aggregate(&tasks, std::iter::empty()).unwrap();
    assert_eq!(m.unannotated.len(), tasks.len());
    assert!(m.values.iter().all(|&v| v == 0));
}
