//! Latest-wins reduction of the decision log into per-record statuses.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::RefId;

use super::decision::{is_llm_reviewer, Decision, DecisionValue, LLM_REVIEWER_PREFIX};
use super::ProjectData;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EffectiveStatus {
    Include,
    Exclude,
    Maybe,
    Pending,
    Conflict,
}

impl EffectiveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            EffectiveStatus::Include => "include",
            EffectiveStatus::Exclude => "exclude",
            EffectiveStatus::Maybe => "maybe",
            EffectiveStatus::Pending => "pending",
            EffectiveStatus::Conflict => "conflict",
        }
    }
}

impl From<DecisionValue> for EffectiveStatus {
    fn from(d: DecisionValue) -> Self {
        match d {
            DecisionValue::Include => EffectiveStatus::Include,
            DecisionValue::Exclude => EffectiveStatus::Exclude,
            DecisionValue::Maybe => EffectiveStatus::Maybe,
            DecisionValue::Pending => EffectiveStatus::Pending,
        }
    }
}

impl fmt::Display for EffectiveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EffectiveStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "include" | "included" => Ok(EffectiveStatus::Include),
            "exclude" | "excluded" => Ok(EffectiveStatus::Exclude),
            "maybe" => Ok(EffectiveStatus::Maybe),
            "pending" => Ok(EffectiveStatus::Pending),
            "conflict" => Ok(EffectiveStatus::Conflict),
            other => Err(Error::Parameter(format!("unknown status {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StatusScope {
    Reviewer(String),
    AllReviewers,
}

/// Reduces per-reviewer latest decisions: pending when nothing non-pending
/// exists, the shared value when all agree, conflict otherwise.
pub fn reduce_latest(latest: impl IntoIterator<Item = DecisionValue>) -> EffectiveStatus {
    let mut seen: Option<DecisionValue> = None;
    for value in latest {
        if value == DecisionValue::Pending {
            continue;
        }
        match seen {
            None => seen = Some(value),
            Some(v) if v == value => {}
            Some(_) => return EffectiveStatus::Conflict,
        }
    }
    seen.map_or(EffectiveStatus::Pending, EffectiveStatus::from)
}

impl ProjectData {
    /// Latest decision of every reviewer that has judged `ref_id`, ordered by
    /// timestamp then decision id.
    pub fn latest_per_reviewer(&self, ref_id: RefId) -> BTreeMap<&str, &Decision> {
        let mut latest: BTreeMap<&str, &Decision> = BTreeMap::new();
        for d in self.decisions_for(ref_id) {
            latest
                .entry(d.reviewer_id.as_str())
                .and_modify(|cur| {
                    if d.order_key() > cur.order_key() {
                        *cur = d;
                    }
                })
                .or_insert(d);
        }
        latest
    }

    /// LLM reviewers only count when their execution is the active one.
    fn counts_in_consensus(&self, reviewer_id: &str) -> bool {
        if !is_llm_reviewer(reviewer_id) {
            return true;
        }
        let exec = &reviewer_id[LLM_REVIEWER_PREFIX.len()..];
        self.active_execution().is_some_and(|e| e.execution_id.as_str() == exec)
    }

    pub fn effective_status(&self, ref_id: RefId, scope: &StatusScope) -> Result<EffectiveStatus> {
        if self.record(ref_id).is_none() {
            return Err(Error::not_found("ref_id", ref_id));
        }
        Ok(self.status_unchecked(ref_id, scope))
    }

    fn status_unchecked(&self, ref_id: RefId, scope: &StatusScope) -> EffectiveStatus {
        let latest = self.latest_per_reviewer(ref_id);
        match scope {
            StatusScope::Reviewer(reviewer) => latest
                .get(reviewer.as_str())
                .map_or(EffectiveStatus::Pending, |d| d.decision.into()),
            StatusScope::AllReviewers => reduce_latest(
                latest
                    .iter()
                    .filter(|(r, _)| self.counts_in_consensus(r))
                    .map(|(_, d)| d.decision),
            ),
        }
    }

    /// Status of every record, ascending ref_id.
    pub fn statuses(&self, scope: &StatusScope) -> BTreeMap<RefId, EffectiveStatus> {
        self.references()
            .iter()
            .map(|r| (r.ref_id, self.status_unchecked(r.ref_id, scope)))
            .collect()
    }

    pub fn detect_conflicts(&self) -> Vec<RefId> {
        self.statuses(&StatusScope::AllReviewers)
            .into_iter()
            .filter(|(_, s)| *s == EffectiveStatus::Conflict)
            .map(|(id, _)| id)
            .collect()
    }
}
