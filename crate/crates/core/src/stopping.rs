//! Stopping rules for the screening loop: a consecutive-irrelevant
//! heuristic and a hypergeometric test against a target recall.
//!
//! Both are advisory; callers decide whether to act on the signal.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ranker::{self, train_nb, DocVector, Label, Vocabulary};
use crate::record::RefId;
use crate::store::{Config, ProjectData};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StopRule {
    Consecutive,
    Statistical,
}

impl StopRule {
    pub fn as_str(self) -> &'static str {
        match self {
            StopRule::Consecutive => "consecutive",
            StopRule::Statistical => "statistical",
        }
    }
}

impl fmt::Display for StopRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StopRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "consecutive" => Ok(StopRule::Consecutive),
            "statistical" => Ok(StopRule::Statistical),
            other => Err(Error::Parameter(format!("unknown stopping rule {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppingConfig {
    pub rule: StopRule,
    pub n_consecutive: usize,
    pub target_recall: f64,
    pub confidence: f64,
}

impl Default for StoppingConfig {
    fn default() -> Self {
        StoppingConfig {
            rule: StopRule::Consecutive,
            n_consecutive: 50,
            target_recall: 0.95,
            confidence: 0.95,
        }
    }
}

impl StoppingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_consecutive == 0 {
            return Err(Error::Parameter("n_consecutive must be positive".into()));
        }
        if !(self.target_recall > 0.0 && self.target_recall <= 1.0) {
            return Err(Error::Parameter(format!(
                "target recall {} outside (0, 1]",
                self.target_recall
            )));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::Parameter(format!(
                "confidence {} outside (0, 1)",
                self.confidence
            )));
        }
        Ok(())
    }

    pub fn from_config(config: &Config) -> Result<Self> {
        let c = StoppingConfig {
            rule: config.get("stop.rule").unwrap_or_default().parse()?,
            n_consecutive: config.get_u64("stop.n_consecutive")? as usize,
            target_recall: config.get_f64("stop.target_recall")?,
            confidence: config.get_f64("stop.confidence")?,
        };
        c.validate()?;
        Ok(c)
    }
}

/// Length of the run of irrelevant labels at the end of `traj`
/// (`true` = relevant).
pub fn trailing_irrelevant(traj: &[bool]) -> usize {
    traj.iter().rev().take_while(|relevant| !**relevant).count()
}

pub fn consecutive_stop(traj: &[bool], n_consecutive: usize) -> bool {
    trailing_irrelevant(traj) >= n_consecutive
}

fn ln_choose(n: u64, k: u64) -> f64 {
    libm::lgamma(n as f64 + 1.0) - libm::lgamma(k as f64 + 1.0) - libm::lgamma((n - k) as f64 + 1.0)
}

/// `P(X <= k)` for `X` hypergeometric: `draws` taken without replacement
/// from `pool` items of which `successes` are marked.
pub fn hypergeom_cdf(k: u64, pool: u64, successes: u64, draws: u64) -> Result<f64> {
    if successes > pool || draws > pool {
        return Err(Error::Parameter(format!(
            "hypergeometric parameters out of range: pool={pool} successes={successes} draws={draws}"
        )));
    }
    let lo = (draws + successes).saturating_sub(pool);
    let hi = successes.min(draws);
    if k < lo {
        return Ok(0.0);
    }
    if k >= hi {
        return Ok(1.0);
    }
    let (n, m, d) = (pool as f64, successes as f64, draws as f64);
    let pmf =
        |x: u64| (ln_choose(successes, x) + ln_choose(pool - successes, draws - x) - ln_choose(pool, draws)).exp();
    // Sum the shorter tail, starting from its largest term (next to the
    // mode) and walking outward with the pmf ratio.
    let mode = ((d + 1.0) * (m + 1.0) / (n + 2.0)).floor() as u64;
    let total = if k < mode {
        let mut term = pmf(k);
        let mut sum = term;
        for x in (lo + 1..=k).rev() {
            let x = x as f64;
            term *= x * (n - m - d + x) / ((m - x + 1.0) * (d - x + 1.0));
            sum += term;
        }
        sum
    } else {
        let mut term = pmf(k + 1);
        let mut sum = term;
        for x in k + 1..hi {
            let x = x as f64;
            term *= (m - x) * (d - x) / ((x + 1.0) * (n - m - d + x + 1.0));
            sum += term;
        }
        1.0 - sum
    };
    Ok(total.clamp(0.0, 1.0))
}

/// Smallest total relevant count `R` with `found / R < target_recall`.
pub fn null_relevant_total(found: u64, target_recall: f64) -> u64 {
    let recall = |total: u64| found as f64 / total as f64;
    let mut total = (found as f64 / target_recall).floor() as u64 + 1;
    while total > found.max(1) && recall(total - 1) < target_recall {
        total -= 1;
    }
    while recall(total) >= target_recall {
        total += 1;
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatisticalTest {
    pub stop: bool,
    pub p_value: f64,
    pub relevant_found: u64,
    pub screened: u64,
    pub window: u64,
    /// Relevant records still unseen under the null hypothesis.
    pub null_remaining: u64,
    /// Records unscreened when the current window began.
    pub pool: u64,
}

/// The hypergeometric rule from summary counts. `window` is the current
/// trailing run of irrelevant records.
pub fn statistical_test(
    relevant_found: u64,
    screened: u64,
    window: u64,
    total_records: u64,
    target_recall: f64,
    confidence: f64,
) -> Result<StatisticalTest> {
    if window > screened || screened > total_records {
        return Err(Error::Parameter(format!(
            "inconsistent counts: window={window} screened={screened} total={total_records}"
        )));
    }
    if relevant_found + window > screened {
        return Err(Error::Parameter("relevant count overlaps the irrelevant window".into()));
    }
    let pool = total_records - (screened - window);
    let mut test = StatisticalTest {
        stop: false,
        p_value: 1.0,
        relevant_found,
        screened,
        window,
        null_remaining: 0,
        pool,
    };
    if relevant_found == 0 {
        return Ok(test);
    }
    let remaining = null_relevant_total(relevant_found, target_recall) - relevant_found;
    test.null_remaining = remaining;
    if window == 0 {
        return Ok(test);
    }
    test.p_value = if remaining > pool {
        0.0
    } else {
        hypergeom_cdf(0, pool, remaining, window)?
    };
    test.stop = test.p_value < 1.0 - confidence;
    Ok(test)
}

pub fn statistical_stop(
    traj: &[bool],
    total_records: usize,
    target_recall: f64,
    confidence: f64,
) -> Result<StatisticalTest> {
    if traj.is_empty() {
        return Err(Error::Parameter("trajectory is empty".into()));
    }
    let found = traj.iter().filter(|r| **r).count() as u64;
    statistical_test(
        found,
        traj.len() as u64,
        trailing_irrelevant(traj) as u64,
        total_records as u64,
        target_recall,
        confidence,
    )
}

/// Rule outcome for reporting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StopSignal {
    pub rule: StopRule,
    pub stop: bool,
    pub recommendation: String,
    pub p_value: Option<f64>,
    pub run_length: usize,
    pub screened: usize,
    pub relevant_found: usize,
    pub total_records: usize,
    pub config: StoppingConfig,
}

pub fn evaluate(traj: &[bool], total_records: usize, config: &StoppingConfig) -> Result<StopSignal> {
    config.validate()?;
    let run_length = trailing_irrelevant(traj);
    let (stop, p_value) = match config.rule {
        StopRule::Consecutive => (run_length >= config.n_consecutive, None),
        StopRule::Statistical if traj.is_empty() => (false, Some(1.0)),
        StopRule::Statistical => {
            let t = statistical_stop(traj, total_records, config.target_recall, config.confidence)?;
            (t.stop, Some(t.p_value))
        }
    };
    Ok(StopSignal {
        rule: config.rule,
        stop,
        recommendation: if stop { "stop" } else { "continue" }.to_string(),
        p_value,
        run_length,
        screened: traj.len(),
        relevant_found: traj.iter().filter(|r| **r).count(),
        total_records,
        config: *config,
    })
}

/// Screening order of a project: records in the order they first received a
/// non-pending human decision, labeled by their current training label.
pub fn project_trajectory(data: &ProjectData, reviewer: Option<&str>) -> Vec<(RefId, bool)> {
    let labels = ranker::training_labels(data, reviewer);
    let mut first_seen: BTreeMap<RefId, (chrono::DateTime<chrono::Utc>, u64)> = BTreeMap::new();
    for d in data.decisions() {
        if d.is_llm()
            || d.decision == crate::store::DecisionValue::Pending
            || reviewer.is_some_and(|r| r != d.reviewer_id)
        {
            continue;
        }
        let key = (d.timestamp, d.decision_id.0);
        first_seen
            .entry(d.ref_id)
            .and_modify(|k| *k = (*k).min(key))
            .or_insert(key);
    }
    let mut ordered: Vec<(RefId, (chrono::DateTime<chrono::Utc>, u64))> = first_seen
        .into_iter()
        .filter(|(id, _)| labels.contains_key(id))
        .collect();
    ordered.sort_by_key(|(id, k)| (*k, *id));
    ordered
        .into_iter()
        .map(|(id, _)| (id, labels[&id] == Label::Relevant))
        .collect()
}

pub fn project_signal(data: &ProjectData, reviewer: Option<&str>) -> Result<StopSignal> {
    let config = StoppingConfig::from_config(data.config())?;
    let traj: Vec<bool> = project_trajectory(data, reviewer).into_iter().map(|(_, r)| r).collect();
    evaluate(&traj, data.references().len(), &config)
}

/// Chooses the next record to screen in a simulation.
pub trait RankingPolicy {
    /// `history` holds `(index, relevant)` in screening order; `remaining`
    /// is never empty.
    fn next(&mut self, history: &[(usize, bool)], remaining: &BTreeSet<usize>) -> Result<usize>;
}

/// Presents records in a predetermined order.
#[derive(Debug, Clone)]
pub struct FixedOrder {
    order: Vec<usize>,
    cursor: usize,
}

impl FixedOrder {
    pub fn new(order: Vec<usize>) -> Self {
        FixedOrder { order, cursor: 0 }
    }

    /// Descending score, ties by ascending index.
    pub fn by_score(scores: &[f64]) -> Self {
        let mut idx: Vec<(usize, f64)> = scores.iter().copied().enumerate().collect();
        idx.sort_by(ranker::by_probability_desc);
        FixedOrder::new(idx.into_iter().map(|(i, _)| i).collect())
    }
}

impl RankingPolicy for FixedOrder {
    fn next(&mut self, _history: &[(usize, bool)], remaining: &BTreeSet<usize>) -> Result<usize> {
        while let Some(&i) = self.order.get(self.cursor) {
            self.cursor += 1;
            if remaining.contains(&i) {
                return Ok(i);
            }
        }
        remaining
            .first()
            .copied()
            .ok_or_else(|| Error::Parameter("no records remain".into()))
    }
}

/// Certainty-based active learning over precomputed TF-IDF vectors: import
/// order until both classes are seen, then the most probable record first.
#[derive(Debug, Clone)]
pub struct ActiveLearningPolicy {
    vectors: Vec<DocVector>,
    n_features: usize,
    alpha: f64,
    retrain_every: usize,
    queue: Vec<usize>,
    trained_at: Option<usize>,
}

impl ActiveLearningPolicy {
    pub fn new<S: AsRef<str>>(texts: &[S], alpha: f64, retrain_every: usize) -> Result<Self> {
        let vocab = Vocabulary::fit(texts)?;
        Ok(ActiveLearningPolicy {
            vectors: vocab.transform_all(texts),
            n_features: vocab.len(),
            alpha,
            retrain_every: retrain_every.max(1),
            queue: Vec::new(),
            trained_at: None,
        })
    }

    fn retrain(&mut self, history: &[(usize, bool)], remaining: &BTreeSet<usize>) -> Result<()> {
        let vectors: Vec<DocVector> = history.iter().map(|(i, _)| self.vectors[*i].clone()).collect();
        let labels: Vec<Label> = history
            .iter()
            .map(|(_, r)| if *r { Label::Relevant } else { Label::Irrelevant })
            .collect();
        let model = train_nb(&vectors, &labels, self.alpha, self.n_features)?;
        let mut scored: Vec<(usize, f64)> = remaining
            .iter()
            .map(|&i| (i, model.posterior(&self.vectors[i]).0))
            .collect();
        scored.sort_by(ranker::by_probability_desc);
        self.queue = scored.into_iter().map(|(i, _)| i).collect();
        self.queue.reverse();
        self.trained_at = Some(history.len());
        Ok(())
    }
}

impl RankingPolicy for ActiveLearningPolicy {
    fn next(&mut self, history: &[(usize, bool)], remaining: &BTreeSet<usize>) -> Result<usize> {
        let both = history.iter().any(|(_, r)| *r) && history.iter().any(|(_, r)| !*r);
        if !both {
            return remaining
                .first()
                .copied()
                .ok_or_else(|| Error::Parameter("no records remain".into()));
        }
        let due = match self.trained_at {
            None => true,
            Some(at) => history.len() - at >= self.retrain_every,
        };
        if due {
            self.retrain(history, remaining)?;
        }
        while let Some(i) = self.queue.pop() {
            if remaining.contains(&i) {
                return Ok(i);
            }
        }
        self.retrain(history, remaining)?;
        self.queue
            .pop()
            .ok_or_else(|| Error::Parameter("no records remain".into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationOutcome {
    pub recall: f64,
    pub screened: usize,
    pub relevant_found: usize,
    pub total_relevant: usize,
    pub total_records: usize,
    /// False when the dataset was exhausted without a stop signal.
    pub stopped: bool,
}

/// Replays screening with hidden labels (`true` = relevant), checking the
/// rule after every decision.
pub fn simulate_until_stop(
    labels: &[bool],
    policy: &mut dyn RankingPolicy,
    config: &StoppingConfig,
) -> Result<SimulationOutcome> {
    config.validate()?;
    let total_relevant = labels.iter().filter(|l| **l).count();
    if total_relevant == 0 {
        return Err(Error::Parameter("simulation needs at least one relevant record".into()));
    }
    let n = labels.len();
    let mut remaining: BTreeSet<usize> = (0..n).collect();
    let mut history: Vec<(usize, bool)> = Vec::with_capacity(n);
    let (mut found, mut run) = (0usize, 0usize);
    let mut stopped = false;
    while !remaining.is_empty() {
        let i = policy.next(&history, &remaining)?;
        if !remaining.remove(&i) {
            return Err(Error::Parameter(format!("policy chose unavailable record {i}")));
        }
        let relevant = labels[i];
        history.push((i, relevant));
        if relevant {
            found += 1;
            run = 0;
        } else {
            run += 1;
        }
        let stop = match config.rule {
            StopRule::Consecutive => run >= config.n_consecutive,
            StopRule::Statistical => {
                statistical_test(
                    found as u64,
                    history.len() as u64,
                    run as u64,
                    n as u64,
                    config.target_recall,
                    config.confidence,
                )?
                .stop
            }
        };
        if stop {
            stopped = true;
            break;
        }
    }
    Ok(SimulationOutcome {
        recall: found as f64 / total_relevant as f64,
        screened: history.len(),
        relevant_found: found,
        total_relevant,
        total_records: n,
        stopped,
    })
}
