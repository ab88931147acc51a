//! Evaluation metrics and the cross-validation fold harness.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ranker::{self, Label};
use crate::record::RefId;
use crate::store::{EffectiveStatus, ProjectData, StatusScope};

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_FOLDS: usize = 10;
pub const OVERLAP_K: usize = 100;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn sensitivity(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn specificity(&self) -> Option<f64> {
        ratio(self.tn, self.tn + self.fp)
    }

    pub fn precision(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn prevalence(&self) -> Option<f64> {
        ratio(self.tp + self.fn_, self.total())
    }

    /// Rebuilds cells from a dataset size, relevant count and the two rates,
    /// rounding each cell to the nearest integer.
    pub fn from_rates(n: u64, relevant: u64, sensitivity: f64, specificity: f64) -> Result<Self> {
        if relevant > n || !(0.0..=1.0).contains(&sensitivity) || !(0.0..=1.0).contains(&specificity) {
            return Err(Error::Parameter("rates or counts out of range".into()));
        }
        let tp = (sensitivity * relevant as f64).round() as u64;
        let tn = (specificity * (n - relevant) as f64).round() as u64;
        Ok(ConfusionCounts {
            tp,
            fn_: relevant - tp,
            tn,
            fp: n - relevant - tn,
        })
    }
}

/// Counts over keys present in both maps; `true` means relevant / include.
pub fn confusion<K: Ord + std::fmt::Debug>(
    truth: &BTreeMap<K, bool>,
    predicted: &BTreeMap<K, bool>,
) -> Result<ConfusionCounts> {
    if truth.len() != predicted.len() || truth.keys().zip(predicted.keys()).any(|(a, b)| a != b) {
        let missing = truth.keys().find(|k| !predicted.contains_key(k));
        let extra = predicted.keys().find(|k| !truth.contains_key(k));
        return Err(Error::Parameter(format!(
            "truth and predictions cover different records (first missing prediction: {missing:?}, first unknown prediction: {extra:?})"
        )));
    }
    let mut c = ConfusionCounts::default();
    for (t, p) in truth.values().zip(predicted.values()) {
        match (t, p) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (false, false) => c.tn += 1,
            (true, false) => c.fn_ += 1,
        }
    }
    Ok(c)
}

pub fn fbeta(precision: f64, recall: f64, beta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&precision) || !(0.0..=1.0).contains(&recall) {
        return Err(Error::Parameter("precision and recall must lie in [0, 1]".into()));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::Parameter(format!("beta must be positive, got {beta}")));
    }
    if precision == 0.0 && recall == 0.0 {
        return Err(Error::Undefined("F-beta with precision = recall = 0"));
    }
    let b2 = beta * beta;
    Ok((1.0 + b2) * precision * recall / (b2 * precision + recall))
}

/// Number of relevant records needed to reach `recall` of `relevant`.
pub fn recall_target_count(relevant: usize, recall: f64) -> usize {
    // 0.95 * 20 is 19.000000000000004 in binary floating point
    ((recall * relevant as f64) - 1e-9).ceil().max(0.0) as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wss {
    pub wss: f64,
    /// Records screened to reach the target.
    pub n_star: usize,
    pub needed: usize,
    pub total: usize,
    pub relevant: usize,
}

/// Work saved over sampling at `recall`: screen in descending score order
/// (ties by ascending key) until the target count of relevant records is met.
pub fn wss_at_recall<K: Ord + Clone + std::fmt::Debug>(
    scores: &[(K, f64)],
    truth: &BTreeMap<K, bool>,
    recall: f64,
) -> Result<Wss> {
    if !(recall > 0.0 && recall <= 1.0) {
        return Err(Error::Parameter(format!("recall {recall} outside (0, 1]")));
    }
    let keys: BTreeSet<&K> = scores.iter().map(|(k, _)| k).collect();
    if keys.len() != scores.len() || keys.len() != truth.len() || keys.iter().any(|k| !truth.contains_key(k)) {
        return Err(Error::Parameter("scores and truth cover different records".into()));
    }
    let relevant = truth.values().filter(|t| **t).count();
    if relevant == 0 {
        return Err(Error::Undefined("WSS without relevant records"));
    }
    let mut order = scores.to_vec();
    order.sort_by(ranker::by_probability_desc);
    let needed = recall_target_count(relevant, recall);
    let n = order.len();
    let mut found = 0;
    let mut n_star = 0;
    for (i, (k, _)) in order.iter().enumerate() {
        if found >= needed {
            break;
        }
        if truth[k] {
            found += 1;
        }
        n_star = i + 1;
    }
    Ok(Wss {
        // (N - n*) / N - (1 - r), rearranged to avoid rounding in 1 - r
        wss: (recall * n as f64 - n_star as f64) / n as f64,
        n_star,
        needed,
        total: n,
        relevant,
    })
}

/// SplitMix64. Bounded draws use the high word of a 128-bit product:
/// `below(n) = (next_u64() as u128 * n as u128) >> 64`.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn below(&mut self, n: u64) -> u64 {
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }

    /// Fisher-Yates, swapping from the last position down.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub assignment: BTreeMap<String, usize>,
}

impl FoldPlan {
    pub fn members(&self, fold: usize) -> Vec<&str> {
        self.assignment
            .iter()
            .filter(|(_, f)| **f == fold)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    /// `(positives, negatives)` per fold.
    pub fn class_counts(&self, truth: &BTreeMap<String, bool>) -> Vec<(usize, usize)> {
        let mut counts = vec![(0, 0); self.k];
        for (id, &f) in &self.assignment {
            if truth.get(id).copied().unwrap_or(false) {
                counts[f].0 += 1;
            } else {
                counts[f].1 += 1;
            }
        }
        counts
    }

    /// `ref_id,fold` rows in ascending ref_id order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("ref_id,fold\n");
        for (id, f) in &self.assignment {
            let _ = writeln!(out, "{id},{f}");
        }
        out
    }
}

/// Positives and negatives are each sorted by id, shuffled with one shared
/// SplitMix64 stream (positives first), then dealt round-robin from fold 0.
pub fn stratified_folds(truth: &BTreeMap<String, bool>, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::Parameter(format!("fold count must be at least 2, got {k}")));
    }
    let mut pos: Vec<&String> = truth.iter().filter(|(_, l)| **l).map(|(id, _)| id).collect();
    let mut neg: Vec<&String> = truth.iter().filter(|(_, l)| !**l).map(|(id, _)| id).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Parameter("both classes must be present".into()));
    }
    let mut rng = SplitMix64::new(seed);
    rng.shuffle(&mut pos);
    rng.shuffle(&mut neg);
    let mut assignment = BTreeMap::new();
    for class in [pos, neg] {
        for (i, id) in class.into_iter().enumerate() {
            assignment.insert(id.clone(), i % k);
        }
    }
    Ok(FoldPlan { k, seed, assignment })
}

/// Share of the first `k` ids of `a` that are also among the first `k` of `b`.
pub fn topk_overlap<K: Ord>(a: &[K], b: &[K], k: usize) -> Result<f64> {
    if k == 0 || k > a.len() || k > b.len() {
        return Err(Error::Parameter(format!(
            "k = {k} must be in 1..={}",
            a.len().min(b.len())
        )));
    }
    let top_a: BTreeSet<&K> = a[..k].iter().collect();
    let shared = b[..k].iter().filter(|id| top_a.contains(id)).count();
    Ok(shared as f64 / k as f64)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledRecord {
    pub ref_id: String,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub label: bool,
}

fn parse_label(raw: &str) -> Result<bool> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "include" | "relevant" => Ok(true),
        "0" | "false" | "exclude" | "irrelevant" => Ok(false),
        other => Err(Error::Parse(format!("label {other:?} is not 0 or 1"))),
    }
}

fn header_index(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h.trim().eq_ignore_ascii_case(name))
}

/// Reads `ref_id,title,abstract,label` (header required, extra columns ignored).
pub fn read_dataset_csv(text: &str) -> Result<Vec<LabeledRecord>> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        header_index(&headers, name).ok_or_else(|| Error::Schema(format!("dataset is missing column {name:?}")))
    };
    let (id, title, abs, label) = (col("ref_id")?, col("title")?, col("abstract")?, col("label")?);
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for row in reader.records() {
        let row = row?;
        let get = |i: usize| row.get(i).unwrap_or("").to_string();
        let ref_id = get(id).trim().to_string();
        if !seen.insert(ref_id.clone()) {
            return Err(Error::Validation(format!("duplicate ref_id {ref_id:?} in dataset")));
        }
        out.push(LabeledRecord {
            ref_id,
            title: get(title),
            abstract_text: get(abs),
            label: parse_label(&get(label))?,
        });
    }
    if out.is_empty() {
        return Err(Error::EmptyInput("dataset"));
    }
    Ok(out)
}

/// Reads `ref_id,label` truth files (any CSV with those two columns).
pub fn read_truth_csv(text: &str) -> Result<BTreeMap<String, bool>> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let id =
        header_index(&headers, "ref_id").ok_or_else(|| Error::Schema("truth is missing column \"ref_id\"".into()))?;
    let label =
        header_index(&headers, "label").ok_or_else(|| Error::Schema("truth is missing column \"label\"".into()))?;
    let mut out = BTreeMap::new();
    for row in reader.records() {
        let row = row?;
        let key = row.get(id).unwrap_or("").trim().to_string();
        out.insert(key, parse_label(row.get(label).unwrap_or(""))?);
    }
    Ok(out)
}

/// Scores test records given labeled training records; pluggable so the
/// harness can compare independent implementations.
pub trait FoldRanker {
    fn score(&self, texts: &[String], train: &[(usize, Label)], targets: &[usize]) -> Result<Vec<f64>>;
}

/// The production TF-IDF + Naive Bayes ranker.
#[derive(Debug, Clone, Copy)]
pub struct NbRanker {
    pub alpha: f64,
}

impl Default for NbRanker {
    fn default() -> Self {
        NbRanker {
            alpha: ranker::DEFAULT_ALPHA,
        }
    }
}

impl FoldRanker for NbRanker {
    fn score(&self, texts: &[String], train: &[(usize, Label)], targets: &[usize]) -> Result<Vec<f64>> {
        ranker::score_documents(texts, train, targets, self.alpha)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedRow {
    pub ref_id: String,
    pub score: f64,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRanking {
    pub fold: usize,
    pub rows: Vec<RankedRow>,
}

impl FoldRanking {
    pub fn ids(&self) -> Vec<&str> {
        self.rows.iter().map(|r| r.ref_id.as_str()).collect()
    }

    /// `ref_id,score,rank`, rank starting at 1; scores printed round-trip exact.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("ref_id,score,rank\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{:?},{}", r.ref_id, r.score, r.rank);
        }
        out
    }

    pub fn file_name(&self) -> String {
        format!("fold_{:02}.csv", self.fold)
    }
}

/// Reads a ranking file and returns ids in ascending rank order.
pub fn read_ranking_csv(text: &str) -> Result<Vec<String>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let id =
        header_index(&headers, "ref_id").ok_or_else(|| Error::Schema("ranking is missing column \"ref_id\"".into()))?;
    let rank = header_index(&headers, "rank");
    let mut rows = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let r = match rank {
            Some(c) => row
                .get(c)
                .unwrap_or("")
                .trim()
                .parse::<usize>()
                .map_err(|_| Error::Parse(format!("bad rank on row {}", i + 2)))?,
            None => i + 1,
        };
        rows.push((r, row.get(id).unwrap_or("").trim().to_string()));
    }
    rows.sort();
    Ok(rows.into_iter().map(|(_, id)| id).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldExperiment {
    pub plan: FoldPlan,
    pub folds: Vec<FoldRanking>,
}

/// For each fold: train on every record outside it (true labels), rank the
/// fold by descending relevance probability. The vocabulary is fitted on
/// all records.
pub fn run_fold_experiment(
    dataset: &[LabeledRecord],
    k: usize,
    seed: u64,
    ranker: &dyn FoldRanker,
) -> Result<FoldExperiment> {
    let truth: BTreeMap<String, bool> = dataset.iter().map(|r| (r.ref_id.clone(), r.label)).collect();
    if truth.len() != dataset.len() {
        return Err(Error::Validation("dataset has duplicate ref_ids".into()));
    }
    let plan = stratified_folds(&truth, k, seed)?;
    let texts: Vec<String> = dataset
        .iter()
        .map(|r| ranker::corpus_text(&r.title, &r.abstract_text))
        .collect();
    let fold_of: Vec<usize> = dataset.iter().map(|r| plan.assignment[&r.ref_id]).collect();
    let mut folds = Vec::with_capacity(k);
    for fold in 0..k {
        let mut train = Vec::new();
        let mut targets = Vec::new();
        for (i, r) in dataset.iter().enumerate() {
            if fold_of[i] == fold {
                targets.push(i);
            } else {
                train.push((i, if r.label { Label::Relevant } else { Label::Irrelevant }));
            }
        }
        let scores = ranker.score(&texts, &train, &targets)?;
        let mut scored: Vec<(&str, f64)> = targets
            .iter()
            .zip(scores)
            .map(|(&i, s)| (dataset[i].ref_id.as_str(), s))
            .collect();
        scored.sort_by(ranker::by_probability_desc);
        folds.push(FoldRanking {
            fold,
            rows: scored
                .into_iter()
                .enumerate()
                .map(|(i, (id, score))| RankedRow {
                    ref_id: id.to_string(),
                    score,
                    rank: i + 1,
                })
                .collect(),
        });
    }
    Ok(FoldExperiment { plan, folds })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldOverlap {
    pub fold: usize,
    pub k: usize,
    pub overlap: f64,
}

/// Top-k overlap per fold, with `k = min(k, fold size)`.
pub fn compare_rankings(ours: &[FoldRanking], reference: &[Vec<String>], k: usize) -> Result<Vec<FoldOverlap>> {
    if ours.len() != reference.len() {
        return Err(Error::Parameter(format!(
            "{} folds against {} reference rankings",
            ours.len(),
            reference.len()
        )));
    }
    ours.iter()
        .zip(reference)
        .map(|(f, r)| {
            let ids = f.ids();
            let k = k.min(ids.len()).min(r.len());
            let r: Vec<&str> = r.iter().map(String::as_str).collect();
            Ok(FoldOverlap {
                fold: f.fold,
                k,
                overlap: topk_overlap(&ids, &r, k)?,
            })
        })
        .collect()
}

/// Confusion-derived rates as printed in reports; `None` when undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub counts: ConfusionCounts,
    pub total: u64,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub precision: Option<f64>,
    pub prevalence: Option<f64>,
    pub f_beta: Option<f64>,
    pub beta: f64,
    /// Truth records with no decided status, left out of the counts.
    pub skipped: usize,
}

impl MetricsReport {
    pub fn new(counts: ConfusionCounts, beta: f64, skipped: usize) -> Self {
        let f_beta = match (counts.precision(), counts.sensitivity()) {
            (Some(p), Some(r)) => fbeta(p, r, beta).ok(),
            _ => None,
        };
        MetricsReport {
            counts,
            total: counts.total(),
            sensitivity: counts.sensitivity(),
            specificity: counts.specificity(),
            precision: counts.precision(),
            prevalence: counts.prevalence(),
            f_beta,
            beta,
            skipped,
        }
    }

    pub fn to_text(&self) -> String {
        let pct = |v: Option<f64>| v.map_or("undefined".to_string(), |x| format!("{:.1}%", x * 100.0));
        let c = &self.counts;
        let mut out = String::new();
        let _ = writeln!(out, "records      {}", self.total);
        let _ = writeln!(out, "tp/fp/tn/fn  {}/{}/{}/{}", c.tp, c.fp, c.tn, c.fn_);
        let _ = writeln!(out, "sensitivity  {}", pct(self.sensitivity));
        let _ = writeln!(out, "specificity  {}", pct(self.specificity));
        let _ = writeln!(out, "precision    {}", pct(self.precision));
        let _ = writeln!(out, "prevalence   {}", pct(self.prevalence));
        let _ = writeln!(out, "f{:<11} {}", self.beta, pct(self.f_beta));
        if self.skipped > 0 {
            let _ = writeln!(out, "skipped      {} (undecided)", self.skipped);
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:?}"));
        let c = &self.counts;
        format!(
            "tp,fp,tn,fn,total,sensitivity,specificity,precision,prevalence,beta,f_beta,skipped\n{},{},{},{},{},{},{},{},{},{:?},{},{}\n",
            c.tp,
            c.fp,
            c.tn,
            c.fn_,
            self.total,
            opt(self.sensitivity),
            opt(self.specificity),
            opt(self.precision),
            opt(self.prevalence),
            self.beta,
            opt(self.f_beta),
            self.skipped
        )
    }
}

/// Project decisions against a truth file. A record counts as predicted
/// include when its all-reviewer status is include, maybe or conflict;
/// pending records are skipped.
pub fn project_metrics(data: &ProjectData, truth: &BTreeMap<String, bool>, beta: f64) -> Result<MetricsReport> {
    let statuses = data.statuses(&StatusScope::AllReviewers);
    let mut t = BTreeMap::new();
    let mut p = BTreeMap::new();
    let mut skipped = 0;
    for (id, label) in truth {
        let status = id
            .parse::<RefId>()
            .ok()
            .and_then(|r| statuses.get(&r).copied())
            .ok_or_else(|| Error::not_found("ref_id", id))?;
        if status == EffectiveStatus::Pending {
            skipped += 1;
            continue;
        }
        t.insert(id.clone(), *label);
        p.insert(id.clone(), status != EffectiveStatus::Exclude);
    }
    Ok(MetricsReport::new(confusion(&t, &p)?, beta, skipped))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splitmix_reference_values() {
        let mut r = SplitMix64::new(0);
        assert_eq!(r.next_u64(), 0xE220_A839_7B1D_CDAF);
        assert_eq!(r.next_u64(), 0x6E78_9E6A_A1B9_65F4);
    }

    #[test]
    fn fbeta_equal_inputs() {
        for x in [0.1, 0.5, 0.93] {
            for b in [0.5, 1.0, 7.0] {
                assert!((fbeta(x, x, b).unwrap() - x).abs() < 1e-12);
            }
        }
        assert!(matches!(fbeta(0.0, 0.0, 7.0), Err(Error::Undefined(_))));
    }

    #[test]
    fn wss_perfect_and_worst() {
        let truth: BTreeMap<usize, bool> = (0..100).map(|i| (i, i < 10)).collect();
        let perfect: Vec<(usize, f64)> = (0..100).map(|i| (i, if i < 10 { 1.0 } else { 0.0 })).collect();
        let w = wss_at_recall(&perfect, &truth, 0.95).unwrap();
        assert_eq!(w.n_star, 10);
        assert!((w.wss - 0.85).abs() < 1e-12);
        let worst: Vec<(usize, f64)> = (0..100).map(|i| (i, if i < 10 { 0.0 } else { 1.0 })).collect();
        let w = wss_at_recall(&worst, &truth, 0.95).unwrap();
        assert_eq!(w.n_star, 100);
        assert!((w.wss + 0.05).abs() < 1e-12);
    }

    #[test]
    fn target_count_uses_ceiling() {
        assert_eq!(recall_target_count(10, 0.95), 10);
        assert_eq!(recall_target_count(20, 0.95), 19);
        assert_eq!(recall_target_count(100, 0.95), 95);
        assert_eq!(recall_target_count(113, 0.95), 108);
    }

    #[test]
    fn overlap_set_arithmetic() {
        let a: Vec<u32> = (0..20).collect();
        let rev: Vec<u32> = a.iter().rev().copied().collect();
        assert_eq!(topk_overlap(&a, &rev, 10).unwrap(), 0.0);
        assert_eq!(topk_overlap(&a, &rev, 20).unwrap(), 1.0);
        assert!(topk_overlap(&a, &rev, 21).is_err());
    }

    #[test]
    fn folds_five_positives_twenty_negatives() {
        let truth: BTreeMap<String, bool> = (0..25).map(|i| (format!("r{i:02}"), i < 5)).collect();
        let plan = stratified_folds(&truth, 10, 42).unwrap();
        let counts = plan.class_counts(&truth);
        assert_eq!(counts.iter().filter(|c| c.0 == 1).count(), 5);
        assert!(counts.iter().all(|c| c.0 <= 1 && c.1 == 2));
    }
}
