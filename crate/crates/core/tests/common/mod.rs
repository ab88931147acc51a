//! Independent reference implementations shared by the integration tests.
//! Nothing here calls into the crate's numeric code.

#![allow(dead_code)]

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn big(n: u64) -> BigInt {
    BigInt::from(n)
}

pub fn choose(n: u64, k: u64) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigInt::one();
    for i in 0..k {
        acc = acc * big(n - i) / big(i + 1);
    }
    acc
}

/// Exact `P(X <= k)` by summing rational pmf terms.
pub fn hypergeom_cdf_exact(k: u64, pool: u64, successes: u64, draws: u64) -> BigRational {
    let denom = choose(pool, draws);
    let mut num = BigInt::zero();
    for x in 0..=k.min(successes).min(draws) {
        if draws - x > pool - successes {
            continue;
        }
        num += choose(successes, x) * choose(pool - successes, draws - x);
    }
    BigRational::new(num, denom)
}

pub fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap()
}

/// Screening trajectory (`true` = relevant) of a record set ordered by a
/// noisy score: relevant ~ N(mu, 1), irrelevant ~ N(0, 1).
pub fn noisy_ranking(seed: u64, n: usize, prevalence: f64, mu: f64) -> Vec<bool> {
    let mut r = rng(seed);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut labels: Vec<bool> = (0..n).map(|_| r.random_bool(prevalence)).collect();
    if !labels.iter().any(|l| *l) {
        labels[0] = true;
    }
    let mut scored: Vec<(f64, bool)> = labels
        .iter()
        .map(|&l| (noise.sample(&mut r) + if l { mu } else { 0.0 }, l))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    scored.into_iter().map(|(_, l)| l).collect()
}

const WORDS_REL: &[&str] = &[
    "randomized",
    "trial",
    "placebo",
    "sepsis",
    "mortality",
    "statin",
    "controlled",
    "outcome",
    "intervention",
    "cohort",
];
const WORDS_IRR: &[&str] = &[
    "mouse",
    "cell",
    "protein",
    "expression",
    "pathway",
    "genome",
    "assay",
    "vitro",
    "receptor",
    "kinase",
];
const WORDS_SHARED: &[&str] = &[
    "study",
    "patients",
    "analysis",
    "results",
    "data",
    "effect",
    "clinical",
    "group",
    "method",
    "review",
    "model",
    "risk",
    "treatment",
    "level",
    "associated",
    "increase",
];

/// Synthetic `(title, abstract, relevant)` records with class-dependent
/// vocabularies and shared filler words.
pub fn synthetic_records(seed: u64, n: usize, prevalence: f64) -> Vec<(String, String, bool)> {
    let mut r = rng(seed);
    (0..n)
        .map(|i| {
            let relevant = i == 0 || r.random_bool(prevalence);
            let own = if relevant { WORDS_REL } else { WORDS_IRR };
            let other = if relevant { WORDS_IRR } else { WORDS_REL };
            let pick = |len: usize, r: &mut ChaCha8Rng| -> String {
                (0..len)
                    .map(|_| {
                        let roll: f64 = r.random();
                        let pool = if roll < 0.35 {
                            own
                        } else if roll < 0.45 {
                            other
                        } else {
                            WORDS_SHARED
                        };
                        pool[r.random_range(0..pool.len())]
                    })
                    .collect::<Vec<_>>()
                    .join(" ")
            };
            let title_len = r.random_range(3..9);
            let title = pick(title_len, &mut r);
            let abstract_len = r.random_range(0..40);
            let abstract_text = pick(abstract_len, &mut r);
            (title, abstract_text, relevant)
        })
        .collect()
}

/// Token counts with the documented rules, keyed by term string.
pub fn oracle_tokens(text: &str) -> BTreeMap<String, u64> {
    let mut counts = BTreeMap::new();
    let lower = text.to_lowercase();
    let mut current = String::new();
    for ch in lower.chars().chain(std::iter::once(' ')) {
        if ch.is_alphanumeric() {
            current.push(ch);
        } else {
            if current.chars().count() >= 2 {
                *counts.entry(std::mem::take(&mut current)).or_insert(0) += 1;
            }
            current.clear();
        }
    }
    counts
}

/// Dense TF-IDF + multinomial NB, written as plain loops over a
/// string-keyed vocabulary. Returns `P(relevant)` for each target index.
pub fn oracle_scores(texts: &[String], train: &[(usize, bool)], targets: &[usize], alpha: f64) -> Vec<f64> {
    let docs: Vec<BTreeMap<String, u64>> = texts.iter().map(|t| oracle_tokens(t)).collect();
    let mut df: BTreeMap<String, u64> = BTreeMap::new();
    for d in &docs {
        for term in d.keys() {
            *df.entry(term.clone()).or_insert(0) += 1;
        }
    }
    let terms: Vec<String> = df.keys().cloned().collect();
    let n = texts.len() as f64;
    let idf: Vec<f64> = terms
        .iter()
        .map(|t| ((1.0 + n) / (1.0 + df[t] as f64)).ln() + 1.0)
        .collect();
    let dense = |d: &BTreeMap<String, u64>| -> Vec<f64> {
        let mut row: Vec<f64> = terms
            .iter()
            .zip(&idf)
            .map(|(t, w)| *d.get(t).unwrap_or(&0) as f64 * w)
            .collect();
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            for x in &mut row {
                *x /= norm;
            }
        }
        row
    };
    let rows: Vec<Vec<f64>> = docs.iter().map(dense).collect();
    let v = terms.len();
    let mut sums = [vec![0.0; v], vec![0.0; v]];
    let mut counts = [0.0f64; 2];
    for &(i, relevant) in train {
        let c = if relevant { 0 } else { 1 };
        counts[c] += 1.0;
        for j in 0..v {
            sums[c][j] += rows[i][j];
        }
    }
    let total = counts[0] + counts[1];
    let mut log_lik = [vec![0.0; v], vec![0.0; v]];
    for c in 0..2 {
        let class_total: f64 = sums[c].iter().sum();
        for j in 0..v {
            log_lik[c][j] = ((sums[c][j] + alpha) / (class_total + alpha * v as f64)).ln();
        }
    }
    targets
        .iter()
        .map(|&i| {
            let mut joint = [0.0; 2];
            for c in 0..2 {
                joint[c] = (counts[c] / total).ln();
                for j in 0..v {
                    joint[c] += rows[i][j] * log_lik[c][j];
                }
            }
            let m = joint[0].max(joint[1]);
            let z = (joint[0] - m).exp() + (joint[1] - m).exp();
            (joint[0] - m).exp() / z
        })
        .collect()
}

/// Indices ordered by descending score, ties by ascending index.
pub fn order_desc(scores: &[(usize, f64)]) -> Vec<usize> {
    let mut v = scores.to_vec();
    v.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    v.into_iter().map(|(i, _)| i).collect()
}

/// WSS by scanning every prefix length until the target count is met.
pub fn wss_prefix_scan(ordered_truth: &[bool], recall: f64) -> f64 {
    let n = ordered_truth.len();
    let total: usize = ordered_truth.iter().filter(|t| **t).count();
    let needed = (recall * total as f64 - 1e-9).ceil() as usize;
    for len in 0..=n {
        let hits = ordered_truth[..len].iter().filter(|t| **t).count();
        if hits >= needed {
            return (n - len) as f64 / n as f64 - (1.0 - recall);
        }
    }
    unreachable!()
}

use abscreen_core::ingest::import_batch;
use abscreen_core::store::{DecisionValue, NewDecision, Project};
use abscreen_core::{RecordDraft, RefId};

pub fn draft(title: &str, abstract_text: &str) -> RecordDraft {
    RecordDraft {
        title: title.to_string(),
        abstract_text: abstract_text.to_string(),
        ..Default::default()
    }
}

/// New project in a temp dir holding `records` as ref_ids 1..=n. Titles are
/// prefixed with their index so that every dedup key is distinct.
pub fn project_with(records: &[(String, String)]) -> (tempfile::TempDir, Project) {
    let dir = tempfile::tempdir().unwrap();
    let mut project = Project::create(dir.path().join("p")).unwrap();
    let drafts: Vec<RecordDraft> = records
        .iter()
        .enumerate()
        .map(|(i, (t, a))| draft(&format!("r{i} {t}"), a))
        .collect();
    let report = import_batch(&drafts, &mut project, "tester", "synthetic").unwrap();
    assert_eq!(report.imported_count, records.len());
    (dir, project)
}

pub fn label(project: &mut Project, ref_id: RefId, relevant: bool) {
    let value = if relevant {
        DecisionValue::Include
    } else {
        DecisionValue::Exclude
    };
    project
        .append_decision(NewDecision::new(ref_id, "alice", value))
        .unwrap();
}

/// Exact multinomial NB with integer weights and integer alpha:
/// returns per-class likelihood vectors and `P(relevant | doc)`.
pub fn nb_exact(train: &[(Vec<u64>, bool)], alpha: u64, doc: &[u64]) -> ([Vec<BigRational>; 2], BigRational) {
    let v = doc.len();
    let mut sums = [vec![0u64; v], vec![0u64; v]];
    let mut counts = [0u64; 2];
    for (w, relevant) in train {
        let c = if *relevant { 0 } else { 1 };
        counts[c] += 1;
        for j in 0..v {
            sums[c][j] += w[j];
        }
    }
    let lik: [Vec<BigRational>; 2] = [0, 1].map(|c| {
        let total: u64 = sums[c].iter().sum();
        (0..v)
            .map(|j| BigRational::new(big(sums[c][j] + alpha), big(total + alpha * v as u64)))
            .collect()
    });
    let n = counts[0] + counts[1];
    let joint: Vec<BigRational> = (0..2)
        .map(|c| {
            let mut p = BigRational::new(big(counts[c]), big(n));
            for j in 0..v {
                for _ in 0..doc[j] {
                    p *= lik[c][j].clone();
                }
            }
            p
        })
        .collect();
    let posterior = joint[0].clone() / (joint[0].clone() + joint[1].clone());
    (lik, posterior)
}

/// A batch_screening execution row with placeholder settings.
pub fn batch_execution(id: &str, active: bool) -> abscreen_core::store::ExecutionLog {
    use abscreen_core::store::{ConfirmationStatus, ExecutionId, ExecutionLog, ExecutionType, ThinkingLevel};
    ExecutionLog {
        execution_id: ExecutionId(id.to_string()),
        execution_type: ExecutionType::BatchScreening,
        timestamp: chrono::Utc::now(),
        model_name: "mock".into(),
        temperature: 0.0,
        top_p: 1.0,
        thinking_level: ThinkingLevel::Low,
        criteria_snapshot: "adults, RCT".into(),
        prompt: "prompt".into(),
        threshold: 0.5,
        targeted_count: 0,
        included_count: 0,
        excluded_count: 0,
        confirmation_status: ConfirmationStatus::Pending,
        active,
    }
}

/// Copies every regular file of `from` into a fresh temp dir.
pub fn copy_project(from: &std::path::Path) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    for entry in std::fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        if entry.file_type().unwrap().is_file() {
            std::fs::copy(entry.path(), dir.path().join(entry.file_name())).unwrap();
        }
    }
    dir
}
