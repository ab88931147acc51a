use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::RefId;

use super::execution::ExecutionId;

pub const DECISION_COLUMNS: [&str; 10] = [
    "decision_id",
    "ref_id",
    "reviewer_id",
    "decision",
    "reason",
    "labels",
    "note",
    "timestamp",
    "client_version",
    "context_url",
];

pub const LLM_REVIEWER_PREFIX: &str = "llm:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecisionValue {
    Include,
    Exclude,
    Maybe,
    Pending,
}

impl DecisionValue {
    pub fn as_str(self) -> &'static str {
        match self {
            DecisionValue::Include => "include",
            DecisionValue::Exclude => "exclude",
            DecisionValue::Maybe => "maybe",
            DecisionValue::Pending => "pending",
        }
    }
}

impl fmt::Display for DecisionValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DecisionValue {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "include" => Ok(DecisionValue::Include),
            "exclude" => Ok(DecisionValue::Exclude),
            "maybe" => Ok(DecisionValue::Maybe),
            "pending" => Ok(DecisionValue::Pending),
            other => Err(Error::Validation(format!(
                "decision must be one of include, exclude, maybe, pending (got {other:?})"
            ))),
        }
    }
}

/// Sequential decision identifier, rendered zero-padded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct DecisionId(pub u64);

impl fmt::Display for DecisionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:08}", self.0)
    }
}

impl FromStr for DecisionId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.trim()
            .parse()
            .map(DecisionId)
            .map_err(|_| Error::Validation(format!("invalid decision_id {s:?}")))
    }
}

impl From<DecisionId> for String {
    fn from(id: DecisionId) -> Self {
        id.to_string()
    }
}

impl TryFrom<String> for DecisionId {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// One row of the decisions table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub decision_id: DecisionId,
    pub ref_id: RefId,
    pub reviewer_id: String,
    pub decision: DecisionValue,
    pub reason: String,
    /// Legacy column: written empty, preserved verbatim when read.
    pub labels: String,
    /// JSON-encoded judgment for LLM decisions, otherwise empty.
    pub note: String,
    pub timestamp: DateTime<Utc>,
    pub client_version: String,
    pub context_url: String,
}

impl Decision {
    pub fn is_llm(&self) -> bool {
        is_llm_reviewer(&self.reviewer_id)
    }

    /// Ordering key for the latest-wins reduction.
    pub(crate) fn order_key(&self) -> (DateTime<Utc>, DecisionId) {
        (self.timestamp, self.decision_id)
    }

    pub(crate) fn to_row(&self) -> [String; 10] {
        [
            self.decision_id.to_string(),
            self.ref_id.to_string(),
            self.reviewer_id.clone(),
            self.decision.to_string(),
            self.reason.clone(),
            self.labels.clone(),
            self.note.clone(),
            super::format_timestamp(&self.timestamp),
            self.client_version.clone(),
            self.context_url.clone(),
        ]
    }

    pub(crate) fn from_row(row: &csv::StringRecord) -> Result<Self> {
        if row.len() != DECISION_COLUMNS.len() {
            return Err(Error::Corrupt {
                table: "decisions".into(),
                message: format!("expected 10 columns, found {}", row.len()),
            });
        }
        Ok(Decision {
            decision_id: row[0].parse()?,
            ref_id: row[1].parse()?,
            reviewer_id: row[2].to_string(),
            decision: row[3].parse()?,
            reason: row[4].to_string(),
            labels: row[5].to_string(),
            note: row[6].to_string(),
            timestamp: super::parse_timestamp(&row[7])?,
            client_version: row[8].to_string(),
            context_url: row[9].to_string(),
        })
    }
}

/// Input to [`super::Project::append_decision`]; id, timestamp and client
/// version are assigned by the store.
#[derive(Debug, Clone, PartialEq)]
pub struct NewDecision {
    pub ref_id: RefId,
    pub reviewer_id: String,
    pub decision: DecisionValue,
    pub reason: String,
    pub note: String,
    pub context_url: String,
}

impl NewDecision {
    pub fn new(ref_id: RefId, reviewer_id: impl Into<String>, decision: DecisionValue) -> Self {
        NewDecision {
            ref_id,
            reviewer_id: reviewer_id.into(),
            decision,
            reason: String::new(),
            note: String::new(),
            context_url: String::new(),
        }
    }

    pub fn with_reason(mut self, reason: impl Into<String>) -> Self {
        self.reason = reason.into();
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }
}

pub fn is_llm_reviewer(reviewer_id: &str) -> bool {
    reviewer_id.starts_with(LLM_REVIEWER_PREFIX)
}

pub fn llm_reviewer_id(execution_id: &ExecutionId) -> String {
    format!("{LLM_REVIEWER_PREFIX}{execution_id}")
}
