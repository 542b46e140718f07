#![allow(dead_code)]

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use saleval::aggregation::{AccuracyTable, AggregateMatrix};
use saleval::analytics::{detect_flips, overlap_matrix, FlipCategory};
use saleval::saliency::{explain_random, Explanation, Method};
use saleval::tasks::{build_tasks, Task, TaskOptions};
use saleval::text::{Sample, Split};

pub const KS: [usize; 5] = [5, 10, 20, 30, 40];

/// Published accuracy percentages, rows in `Method::STANDARD` order.
pub const IMDB_P: [[u32; 5]; 8] = [
    [25, 42, 41, 55, 54],
    [66, 74, 81, 87, 84],
    [53, 60, 73, 72, 78],
    [75, 81, 73, 80, 85],
    [46, 46, 60, 56, 52],
    [74, 81, 87, 80, 87],
    [52, 37, 60, 52, 67],
    [30, 28, 47, 48, 44],
];
pub const IMDB_S: [f64; 8] = [42.9, 78.5, 66.9, 79.5, 52.1, 82.3, 53.5, 39.0];
pub const IMDB_SCORE_RANKS: [usize; 8] = [7, 3, 4, 2, 6, 1, 5, 8];
pub const IMDB_COLUMN_RANKS: [[usize; 5]; 8] = [
    [8, 6, 8, 6, 6],
    [3, 3, 2, 1, 3],
    [4, 4, 3, 4, 4],
    [1, 1, 3, 2, 2],
    [6, 5, 5, 5, 7],
    [2, 1, 1, 2, 1],
    [5, 7, 5, 7, 5],
    [7, 8, 7, 8, 8],
];
pub const IMDB_W: [f64; 5] = [0.2350, 0.2203, 0.1895, 0.1866, 0.1795];

pub const AGNEWS_P: [[u32; 5]; 8] = [
    [46, 57, 70, 77, 73],
    [73, 73, 77, 79, 80],
    [56, 72, 77, 79, 81],
    [65, 72, 69, 80, 77],
    [61, 68, 76, 78, 74],
    [79, 81, 87, 79, 80],
    [61, 61, 69, 72, 77],
    [33, 61, 69, 82, 75],
];
pub const AGNEWS_S: [f64; 8] = [64.1, 76.9, 72.8, 72.9, 71.5, 82.0, 68.1, 62.9];
pub const AGNEWS_SCORE_RANKS: [usize; 8] = [7, 2, 4, 3, 5, 1, 6, 8];
pub const AGNEWS_COLUMN_RANKS: [[usize; 5]; 8] = [
    [7, 8, 5, 7, 8],
    [2, 2, 2, 3, 2],
    [6, 3, 2, 3, 1],
    [3, 3, 6, 2, 4],
    [4, 5, 4, 6, 7],
    [1, 1, 1, 3, 2],
    [4, 6, 6, 8, 4],
    [8, 6, 6, 1, 6],
];

pub fn accuracy_table(p: &[[u32; 5]; 8]) -> AccuracyTable {
    AccuracyTable {
        methods: Method::STANDARD.to_vec(),
        ks: KS.to_vec(),
        p: p.iter()
            .map(|r| r.iter().map(|&v| f64::from(v) / 100.0).collect())
            .collect(),
    }
}

/// Synthetic evaluation samples of 50 distinct-ish words each.
pub fn samples(n: usize, classes: usize) -> Vec<Sample> {
    (0..n)
        .map(|i| {
            let text: Vec<String> = (0..50).map(|w| format!("w{}", (w * 7 + i) % 90)).collect();
            Sample::from_text(
                format!("s{i:03}"),
                &text.join(" "),
                i % classes + 1,
                Split::Eval,
            )
            .unwrap()
        })
        .collect()
}

pub fn random_explanations(samples: &[Sample], methods: &[Method]) -> Vec<Explanation> {
    samples
        .iter()
        .flat_map(|s| {
            methods.iter().map(move |&m| {
                let mut e = explain_random(s, m as u64);
                e.method = m;
                e
            })
        })
        .collect()
}

pub fn task_grid(n: usize, methods: &[Method], ks: &[usize]) -> Vec<Task> {
    let s = samples(n, 2);
    build_tasks(
        &s,
        methods,
        ks,
        &random_explanations(&s, methods),
        &TaskOptions::default(),
    )
    .unwrap()
}

pub fn random_matrix(rng: &mut impl Rng, n: usize, j: usize, k: usize) -> AggregateMatrix {
    AggregateMatrix {
        samples: (0..n).map(|i| format!("s{i}")).collect(),
        methods: Method::STANDARD[..j].to_vec(),
        ks: (1..=k).collect(),
        values: (0..n * j * k)
            .map(|_| u8::from(rng.gen_bool(0.5)))
            .collect(),
        counts: vec![1; n * j * k],
        unannotated: Vec::new(),
    }
}

/// Flipped iff some k has outcome 1 and a strictly larger k has outcome 0.
fn brute_flipped(seq: &[u8]) -> bool {
    (0..seq.len()).any(|a| (a + 1..seq.len()).any(|b| seq[a] == 1 && seq[b] == 0))
}

/// Compares `detect_flips` with a pairwise recomputation on random matrices.
pub fn check_flip_oracle(seed: u64, cases: usize) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..cases {
        let (n, j, k) = (
            rng.gen_range(1..6),
            rng.gen_range(1..9),
            rng.gen_range(2..6),
        );
        let m = random_matrix(&mut rng, n, j, k);
        let r = detect_flips(&m).map_err(|e| e.to_string())?;
        for i in 0..n {
            let mut flips = 0;
            for jj in 0..j {
                let seq: Vec<u8> = (0..k).map(|kk| m.get(i, jj, kk)).collect();
                let expected = if brute_flipped(&seq) {
                    flips += 1;
                    FlipCategory::Flipped
                } else if seq.iter().all(|&v| v == 1) {
                    FlipCategory::AlwaysCorrect
                } else {
                    FlipCategory::Aided
                };
                if r.categories[i][jj] != expected {
                    return Err(format!(
                        "case {case}: {seq:?} gave {:?}",
                        r.categories[i][jj]
                    ));
                }
            }
            if r.flips_per_sample[i] != flips {
                return Err(format!("case {case}: flip count of sample {i}"));
            }
        }
        for c in &r.counts {
            let never = (0..n).filter(|&i| {
                let jj = m.methods.iter().position(|&x| x == c.method).unwrap();
                (0..k).all(|kk| m.get(i, jj, kk) == 0)
            });
            if c.flipped + c.always_correct + c.aided != n || c.never_correct != never.count() {
                return Err(format!("case {case}: counts of {}", c.method));
            }
        }
        if r.histogram().iter().sum::<usize>() != n {
            return Err(format!("case {case}: histogram total"));
        }
    }
    Ok(())
}

fn top_by_full_sort(scores: &[f64], eligible: &[usize], k: usize) -> HashSet<usize> {
    let mut order = eligible.to_vec();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.into_iter().take(k).collect()
}

/// Compares `overlap_matrix` with set intersections of fully sorted top-k
/// lists on random, tie-heavy score sets.
pub fn check_overlap_oracle(seed: u64, cases: usize) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let methods = [Method::AllAttention, Method::VanillaGradient, Method::Lime];
    for case in 0..cases {
        let n = rng.gen_range(1..4);
        let samples: Vec<Sample> = (0..n)
            .map(|i| {
                let len = rng.gen_range(1..15);
                let words: Vec<String> = (0..len)
                    .map(|w| {
                        if w > 0 && rng.gen_bool(0.15) {
                            ",".to_string()
                        } else {
                            format!("w{w}")
                        }
                    })
                    .collect();
                Sample::from_text(format!("c{case}s{i}"), &words.join(" "), 1, Split::Eval).unwrap()
            })
            .collect();
        let k = rng.gen_range(1..8);
        let mut explanations = Vec::new();
        for s in &samples {
            for &m in &methods {
                // Few distinct values so ties are common.
                let scores = (0..s.len())
                    .map(|_| f64::from(rng.gen_range(0..4)))
                    .collect();
                explanations.push(Explanation {
                    sample_id: s.id.clone(),
                    method: m,
                    target_class: 1,
                    scores,
                    predicted_class: 1,
                    confidence: 1.0,
                    params: serde_json::json!({}),
                    seed: None,
                    completeness_residual: None,
                });
            }
        }
        let got = overlap_matrix(&samples, &explanations, &methods, k, false)
            .map_err(|e| e.to_string())?;
        let mut expected = [[0.0; 3]; 3];
        for s in &samples {
            let eligible = s.eligible_positions();
            let denom = k.min(eligible.len());
            if denom == 0 {
                continue;
            }
            let tops: Vec<HashSet<usize>> = methods
                .iter()
                .map(|&m| {
                    let e = explanations
                        .iter()
                        .find(|e| e.sample_id == s.id && e.method == m)
                        .unwrap();
                    top_by_full_sort(&e.scores, &eligible, k)
                })
                .collect();
            for a in 0..3 {
                for b in 0..3 {
                    expected[a][b] += 100.0 * tops[a].intersection(&tops[b]).count() as f64
                        / denom as f64
                        / n as f64;
                }
            }
        }
        for a in 0..3 {
            for b in 0..3 {
                if (got.values[a][b] - expected[a][b]).abs() > 1e-9 {
                    return Err(format!(
                        "case {case}: cell ({a}, {b}) {} vs {}",
                        got.values[a][b], expected[a][b]
                    ));
                }
            }
        }
    }
    Ok(())
}
