//! Active-learning ranker: TF-IDF features, multinomial Naive Bayes,
//! certainty (max-probability) ordering, full retrain per decision.
//!
//! No state is persisted; every queue is recomputed from the decision log.

mod nb;
mod tfidf;

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

pub use nb::{train_nb, Label, NbModel, DEFAULT_ALPHA};
pub use tfidf::{tokenize, DocVector, TermStats, Vocabulary};

use crate::error::{Error, Result};
use crate::record::{Record, RefId};
use crate::store::{is_llm_reviewer, DecisionValue, ProjectData};

/// Screening text of a record: title, a space, abstract.
pub fn build_corpus_text(record: &Record) -> String {
    corpus_text(&record.title, &record.abstract_text)
}

pub fn corpus_text(title: &str, abstract_text: &str) -> String {
    if abstract_text.is_empty() {
        title.trim_end().to_string()
    } else {
        format!("{title} {abstract_text}")
    }
}

/// Fits the vocabulary on every text, trains on `train`, and returns the
/// relevance probability of each index in `targets` (same order).
pub fn score_documents<S: AsRef<str>>(
    texts: &[S],
    train: &[(usize, Label)],
    targets: &[usize],
    alpha: f64,
) -> Result<Vec<f64>> {
    let vocab = Vocabulary::fit(texts)?;
    let train_vectors: Vec<DocVector> = train.iter().map(|(i, _)| vocab.transform(texts[*i].as_ref())).collect();
    let labels: Vec<Label> = train.iter().map(|(_, l)| *l).collect();
    let model = train_nb(&train_vectors, &labels, alpha, vocab.len())?;
    Ok(targets
        .iter()
        .map(|&i| model.posterior(&vocab.transform(texts[i].as_ref())).0)
        .collect())
}

/// Descending probability, ties by ascending key.
pub fn by_probability_desc<K: Ord>(a: &(K, f64), b: &(K, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueueEntry {
    pub ref_id: RefId,
    pub probability: f64,
}

/// Unlabeled records in presentation order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RankedQueue {
    pub entries: Vec<QueueEntry>,
}

impl RankedQueue {
    pub fn ref_ids(&self) -> Vec<RefId> {
        self.entries.iter().map(|e| e.ref_id).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn position(&self, ref_id: RefId) -> Option<usize> {
        self.entries.iter().position(|e| e.ref_id == ref_id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankerConfig {
    pub alpha: f64,
    /// Restrict training labels to one reviewer; `None` uses every human reviewer.
    pub reviewer: Option<String>,
}

impl Default for RankerConfig {
    fn default() -> Self {
        RankerConfig {
            alpha: DEFAULT_ALPHA,
            reviewer: None,
        }
    }
}

impl RankerConfig {
    pub fn from_project(data: &ProjectData) -> Result<Self> {
        Ok(RankerConfig {
            alpha: data.config().get_f64("ranker.alpha")?,
            reviewer: None,
        })
    }
}

/// Training labels from human decisions. A record is labeled once any
/// counted reviewer's latest decision is non-pending; it is relevant if any
/// of those is include or maybe.
pub fn training_labels(data: &ProjectData, reviewer: Option<&str>) -> BTreeMap<RefId, Label> {
    let mut labels = BTreeMap::new();
    for record in data.references() {
        let latest = data.latest_per_reviewer(record.ref_id);
        let mut label = None;
        for (rid, d) in latest {
            if is_llm_reviewer(rid) || reviewer.is_some_and(|r| r != rid) {
                continue;
            }
            match d.decision {
                DecisionValue::Include | DecisionValue::Maybe => label = Some(Label::Relevant),
                DecisionValue::Exclude => {
                    label.get_or_insert(Label::Irrelevant);
                }
                DecisionValue::Pending => {}
            }
        }
        if let Some(l) = label {
            labels.insert(record.ref_id, l);
        }
    }
    labels
}

/// Ranks every unlabeled record. Fails with [`Error::ColdStart`] until at
/// least one relevant and one irrelevant label exist.
pub fn rank_unlabeled(data: &ProjectData, config: &RankerConfig) -> Result<RankedQueue> {
    let labels = training_labels(data, config.reviewer.as_deref());
    let has = |l: Label| labels.values().any(|v| *v == l);
    if !has(Label::Relevant) || !has(Label::Irrelevant) {
        return Err(Error::ColdStart);
    }
    let mut records: Vec<&Record> = data.references().iter().collect();
    records.sort_by_key(|r| r.ref_id);
    let texts: Vec<String> = records.iter().map(|r| build_corpus_text(r)).collect();
    let mut train = Vec::new();
    let mut targets = Vec::new();
    for (i, r) in records.iter().enumerate() {
        match labels.get(&r.ref_id) {
            Some(l) => train.push((i, *l)),
            None => targets.push(i),
        }
    }
    let scores = score_documents(&texts, &train, &targets, config.alpha)?;
    let mut scored: Vec<(RefId, f64)> = targets
        .iter()
        .zip(scores)
        .map(|(&i, p)| (records[i].ref_id, p))
        .collect();
    scored.sort_by(by_probability_desc);
    Ok(RankedQueue {
        entries: scored
            .into_iter()
            .map(|(ref_id, probability)| QueueEntry { ref_id, probability })
            .collect(),
    })
}

/// Unlabeled records in import (ref_id) order, for the cold-start phase.
pub fn import_order(data: &ProjectData, reviewer: Option<&str>) -> Vec<RefId> {
    let labels = training_labels(data, reviewer);
    let mut ids: Vec<RefId> = data
        .references()
        .iter()
        .map(|r| r.ref_id)
        .filter(|id| !labels.contains_key(id))
        .collect();
    ids.sort();
    ids
}

/// Re-rank after a persisted decision: a full retrain on the current log.
pub fn active_step(data: &ProjectData, config: &RankerConfig) -> Result<RankedQueue> {
    rank_unlabeled(data, config)
}

/// Retrain-cadence wrapper: retrains once `retrain_every` new labels have
/// arrived, otherwise serves the previous ranking minus newly labeled refs.
#[derive(Debug, Clone)]
pub struct ActiveLearner {
    config: RankerConfig,
    retrain_every: usize,
    cached: Option<(BTreeMap<RefId, Label>, RankedQueue)>,
}

impl ActiveLearner {
    pub fn new(config: RankerConfig, retrain_every: usize) -> Self {
        ActiveLearner {
            config,
            retrain_every: retrain_every.max(1),
            cached: None,
        }
    }

    pub fn step(&mut self, data: &ProjectData) -> Result<RankedQueue> {
        let labels = training_labels(data, self.config.reviewer.as_deref());
        if let Some((trained_on, queue)) = &self.cached {
            let unchanged = trained_on.iter().all(|(id, l)| labels.get(id) == Some(l));
            let fresh = labels.len().saturating_sub(trained_on.len());
            if unchanged && fresh < self.retrain_every {
                let live: HashMap<RefId, ()> = data.references().iter().map(|r| (r.ref_id, ())).collect();
                return Ok(RankedQueue {
                    entries: queue
                        .entries
                        .iter()
                        .filter(|e| !labels.contains_key(&e.ref_id) && live.contains_key(&e.ref_id))
                        .copied()
                        .collect(),
                });
            }
        }
        let queue = rank_unlabeled(data, &self.config)?;
        self.cached = Some((labels, queue.clone()));
        Ok(queue)
    }
}
