//! JSON shapes returned by the HTTP service.

use std::collections::BTreeMap;

use abscreen_core::highlight::{compute_highlights, HighlightSpan};
use abscreen_core::llm::{judged_records, EvidenceSpan, LlmJudgment};
use abscreen_core::ranker::build_corpus_text;
use abscreen_core::store::{Decision, EffectiveStatus, ExecutionId, ProjectData, StatusScope};
use abscreen_core::{Record, RefId};
use serde::{Deserialize, Serialize};

/// Latest decision of one reviewer on one record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewView {
    pub reviewer_id: String,
    pub decision: String,
    pub reason: String,
    pub timestamp: String,
}

impl From<&Decision> for ReviewView {
    fn from(d: &Decision) -> Self {
        ReviewView {
            reviewer_id: d.reviewer_id.clone(),
            decision: d.decision.to_string(),
            reason: d.reason.clone(),
            timestamp: abscreen_core::store::format_timestamp(&d.timestamp),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordView {
    pub ref_id: RefId,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub year: Option<i32>,
    pub authors: Vec<String>,
    pub journal: String,
    pub doi: Option<String>,
    pub pmid: Option<String>,
    pub screening_set: String,
    pub status: EffectiveStatus,
    pub my_decision: Option<String>,
    /// Every reviewer's latest decision; omitted in blind mode.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reviews: Option<Vec<ReviewView>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmSummary {
    pub execution_id: ExecutionId,
    pub probability: f64,
    pub reasons: Vec<String>,
    pub evidence: Vec<EvidenceSpan>,
}

impl LlmSummary {
    fn new(execution_id: &ExecutionId, j: &LlmJudgment) -> Self {
        LlmSummary {
            execution_id: execution_id.clone(),
            probability: j.probability,
            reasons: j.reasons.clone(),
            evidence: j.evidence.clone(),
        }
    }
}

/// One entry of `/queue`. Highlight and evidence offsets index `text`, in
/// Unicode scalar values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueItem {
    pub ref_id: RefId,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub text: String,
    pub status: EffectiveStatus,
    pub ml_probability: Option<f64>,
    pub llm: Option<LlmSummary>,
    pub highlights: Vec<HighlightSpan>,
}

/// Who is asking and what they may see.
#[derive(Debug, Clone)]
pub struct Viewer {
    pub reviewer: String,
    pub blind: bool,
}

impl Viewer {
    pub fn scope(&self) -> StatusScope {
        if self.blind {
            StatusScope::Reviewer(self.reviewer.clone())
        } else {
            StatusScope::AllReviewers
        }
    }

    pub fn record_view(&self, data: &ProjectData, record: &Record, status: EffectiveStatus) -> RecordView {
        let latest = data.latest_per_reviewer(record.ref_id);
        RecordView {
            ref_id: record.ref_id,
            title: record.title.clone(),
            abstract_text: record.abstract_text.clone(),
            year: record.year,
            authors: record.author_list(),
            journal: record.journal.clone(),
            doi: record.doi.clone(),
            pmid: record.pmid.clone(),
            screening_set: record.screening_set.clone(),
            status,
            my_decision: latest.get(self.reviewer.as_str()).map(|d| d.decision.to_string()),
            reviews: (!self.blind).then(|| latest.values().map(|d| ReviewView::from(*d)).collect()),
        }
    }
}

/// Builds queue items for `entries` (ref_id, optional ranker probability).
/// The LLM summary comes from the active execution only.
pub fn queue_items(
    data: &ProjectData,
    viewer: &Viewer,
    entries: impl IntoIterator<Item = (RefId, Option<f64>)>,
) -> Vec<QueueItem> {
    let statuses = data.statuses(&viewer.scope());
    let (include, exclude) = data.config().keyword_lists();
    let judged: BTreeMap<RefId, LlmJudgment> = data
        .active_execution()
        .map(|e| judged_records(data, &e.execution_id))
        .unwrap_or_default();
    let active = data.active_execution().map(|e| e.execution_id.clone());
    entries
        .into_iter()
        .filter_map(|(ref_id, ml_probability)| {
            let record = data.record(ref_id)?;
            let text = build_corpus_text(record);
            Some(QueueItem {
                ref_id,
                title: record.title.clone(),
                abstract_text: record.abstract_text.clone(),
                highlights: compute_highlights(&text, &include, &exclude),
                text,
                status: statuses.get(&ref_id).copied().unwrap_or(EffectiveStatus::Pending),
                ml_probability,
                llm: active
                    .as_ref()
                    .and_then(|id| judged.get(&ref_id).map(|j| LlmSummary::new(id, j))),
            })
        })
        .collect()
}
