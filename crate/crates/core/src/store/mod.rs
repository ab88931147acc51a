//! Project directory holding the four tables as RFC-4180 CSV files.
//!
//! ```text
//! project/
//!   references.csv      19 columns, rewritten only by screening-set assignment
//!   decisions.csv       10 columns, append-only
//!   config.csv          key,value rows, append-only, last write wins
//!   llm_executions.csv  15 columns; the active flag and confirmation
//!                       updates rewrite the file atomically
//!   .lock               exclusive writer lock
//! ```
//!
//! [`Project`] is the single writer; it holds an exclusive lock for its
//! lifetime. [`ProjectData::load`] reads a consistent snapshot without
//! taking the lock.

mod config;
mod decision;
mod execution;
mod lock;
mod status;
mod table;

use std::collections::{HashMap, HashSet};
use std::fs;
use std::ops::Deref;
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, SubsecRound, Utc};

pub use config::{recognized_keys, validate as validate_config, Config, RCT_PRESET, SR_PRESET};
pub use decision::{
    is_llm_reviewer, llm_reviewer_id, Decision, DecisionId, DecisionValue, NewDecision, DECISION_COLUMNS,
    LLM_REVIEWER_PREFIX,
};
pub use execution::{ConfirmationStatus, ExecutionId, ExecutionLog, ExecutionType, ThinkingLevel, EXECUTION_COLUMNS};
pub use status::{reduce_latest, EffectiveStatus, StatusScope};

use crate::error::{Error, Result};
use crate::record::{Record, RefId, REFERENCE_COLUMNS};
use crate::CLIENT_VERSION;

use lock::LockGuard;

pub const REFERENCES_FILE: &str = "references.csv";
pub const DECISIONS_FILE: &str = "decisions.csv";
pub const CONFIG_FILE: &str = "config.csv";
pub const EXECUTIONS_FILE: &str = "llm_executions.csv";

/// RFC-3339 UTC with millisecond precision.
pub fn format_timestamp(ts: &DateTime<Utc>) -> String {
    ts.to_rfc3339_opts(SecondsFormat::Millis, true)
}

pub fn parse_timestamp(s: &str) -> Result<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(s.trim())
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| Error::Validation(format!("invalid timestamp {s:?}: {e}")))
}

pub(crate) fn now_millis() -> DateTime<Utc> {
    Utc::now().trunc_subsecs(3)
}

/// In-memory copy of the four tables with query helpers.
#[derive(Debug, Clone, Default)]
pub struct ProjectData {
    references: Vec<Record>,
    ref_index: HashMap<RefId, usize>,
    decisions: Vec<Decision>,
    by_ref: HashMap<RefId, Vec<usize>>,
    config: Config,
    executions: Vec<ExecutionLog>,
}

impl ProjectData {
    /// Reads all four tables from `root` without locking.
    pub fn load(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref();
        for file in [REFERENCES_FILE, DECISIONS_FILE, CONFIG_FILE, EXECUTIONS_FILE] {
            if !root.join(file).is_file() {
                return Err(Error::not_found("project table", root.join(file).display()));
            }
        }
        let mut data = ProjectData::default();
        for row in table::read_rows(&root.join(REFERENCES_FILE), "references", &REFERENCE_COLUMNS)? {
            data.insert_reference(Record::from_row(&row)?);
        }
        for row in table::read_rows(&root.join(DECISIONS_FILE), "decisions", &DECISION_COLUMNS)? {
            data.insert_decision(Decision::from_row(&row)?);
        }
        for row in table::read_rows(&root.join(CONFIG_FILE), "config", &config::CONFIG_COLUMNS)? {
            data.config.push(row[0].to_string(), row[1].to_string());
        }
        for row in table::read_rows(&root.join(EXECUTIONS_FILE), "llm_executions", &EXECUTION_COLUMNS)? {
            data.executions.push(ExecutionLog::from_row(&row)?);
        }
        Ok(data)
    }

    fn insert_reference(&mut self, record: Record) {
        self.ref_index.insert(record.ref_id, self.references.len());
        self.references.push(record);
    }

    fn insert_decision(&mut self, decision: Decision) {
        self.by_ref
            .entry(decision.ref_id)
            .or_default()
            .push(self.decisions.len());
        self.decisions.push(decision);
    }

    pub fn references(&self) -> &[Record] {
        &self.references
    }

    pub fn record(&self, ref_id: RefId) -> Option<&Record> {
        self.ref_index.get(&ref_id).map(|&i| &self.references[i])
    }

    pub fn decisions(&self) -> &[Decision] {
        &self.decisions
    }

    pub fn decisions_for(&self, ref_id: RefId) -> impl Iterator<Item = &Decision> {
        self.by_ref
            .get(&ref_id)
            .into_iter()
            .flatten()
            .map(|&i| &self.decisions[i])
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn config_get(&self, key: &str) -> Option<String> {
        self.config.get(key)
    }

    pub fn executions(&self) -> &[ExecutionLog] {
        &self.executions
    }

    pub fn execution(&self, id: &ExecutionId) -> Option<&ExecutionLog> {
        self.executions.iter().find(|e| &e.execution_id == id)
    }

    pub fn active_execution(&self) -> Option<&ExecutionLog> {
        self.executions.iter().find(|e| e.active)
    }

    pub fn dedup_keys(&self) -> HashMap<&str, RefId> {
        self.references
            .iter()
            .map(|r| (r.dedup_key.as_str(), r.ref_id))
            .collect()
    }

    /// Distinct reviewer ids in first-seen order.
    pub fn reviewers(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.decisions
            .iter()
            .filter(|d| seen.insert(d.reviewer_id.as_str()))
            .map(|d| d.reviewer_id.clone())
            .collect()
    }
}

/// Exclusive writer handle to a project directory.
#[derive(Debug)]
pub struct Project {
    root: PathBuf,
    _lock: LockGuard,
    data: ProjectData,
}

impl Deref for Project {
    type Target = ProjectData;

    fn deref(&self) -> &ProjectData {
        &self.data
    }
}

impl Project {
    /// Creates the four tables (with header rows) in an empty or missing
    /// directory and seeds the config defaults.
    pub fn create(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        if root.exists() {
            let non_empty = fs::read_dir(&root)?.next().is_some();
            if non_empty || !root.is_dir() {
                return Err(Error::ProjectExists(root));
            }
        }
        fs::create_dir_all(&root)?;
        let lock = LockGuard::acquire(&root)?;
        let headers: [(&str, &[&str]); 4] = [
            (REFERENCES_FILE, &REFERENCE_COLUMNS),
            (DECISIONS_FILE, &DECISION_COLUMNS),
            (CONFIG_FILE, &config::CONFIG_COLUMNS),
            (EXECUTIONS_FILE, &EXECUTION_COLUMNS),
        ];
        for (file, header) in headers {
            table::write_atomic(&root.join(file), &table::encode_rows([header])?)?;
        }
        let seeded = Config::seeded();
        table::append(
            &root.join(CONFIG_FILE),
            &table::encode_rows(seeded.iter().map(|(k, v)| [k, v]))?,
        )?;
        let data = ProjectData::load(&root)?;
        Ok(Project {
            root,
            _lock: lock,
            data,
        })
    }

    /// Opens an existing project for writing; fails with [`Error::Locked`]
    /// when another writer holds it.
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        if !root.is_dir() {
            return Err(Error::not_found("project", root.display()));
        }
        let lock = LockGuard::acquire(&root)?;
        for file in [REFERENCES_FILE, DECISIONS_FILE, CONFIG_FILE, EXECUTIONS_FILE] {
            let path = root.join(file);
            if path.is_file() {
                table::truncate_torn_tail(&path)?;
            }
        }
        let data = ProjectData::load(&root)?;
        Ok(Project {
            root,
            _lock: lock,
            data,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn data(&self) -> &ProjectData {
        &self.data
    }

    /// Owned copy for background readers.
    pub fn snapshot(&self) -> ProjectData {
        self.data.clone()
    }

    pub fn next_ref_id(&self) -> RefId {
        RefId(self.data.references.iter().map(|r| r.ref_id.0).max().unwrap_or(0) + 1)
    }

    fn next_decision_id(&self) -> DecisionId {
        DecisionId(self.data.decisions.iter().map(|d| d.decision_id.0).max().unwrap_or(0) + 1)
    }

    pub fn next_execution_id(&self) -> ExecutionId {
        ExecutionId::sequential(self.data.executions.len() as u64 + 1)
    }

    /// Appends records in one write; either all rows land or none.
    pub fn append_references(&mut self, records: Vec<Record>) -> Result<()> {
        if records.is_empty() {
            return Ok(());
        }
        let mut seen = HashSet::new();
        for r in &records {
            if self.data.ref_index.contains_key(&r.ref_id) || !seen.insert(r.ref_id) {
                return Err(Error::Validation(format!("duplicate ref_id {}", r.ref_id)));
            }
        }
        let bytes = table::encode_rows(records.iter().map(Record::to_row))?;
        table::append(&self.root.join(REFERENCES_FILE), &bytes)?;
        for r in records {
            self.data.insert_reference(r);
        }
        Ok(())
    }

    /// Appends one decision row and returns its fresh id.
    pub fn append_decision(&mut self, new: NewDecision) -> Result<DecisionId> {
        Ok(self.append_decisions(vec![new])?[0])
    }

    /// Appends several decision rows in a single write.
    pub fn append_decisions(&mut self, batch: Vec<NewDecision>) -> Result<Vec<DecisionId>> {
        let first = self.next_decision_id().0;
        let timestamp = now_millis();
        let mut rows = Vec::with_capacity(batch.len());
        for (next, new) in (first..).zip(batch) {
            self.validate_new_decision(&new)?;
            rows.push(Decision {
                decision_id: DecisionId(next),
                ref_id: new.ref_id,
                reviewer_id: new.reviewer_id,
                decision: new.decision,
                reason: new.reason,
                labels: String::new(),
                note: new.note,
                timestamp,
                client_version: CLIENT_VERSION.to_string(),
                context_url: new.context_url,
            });
        }
        if rows.is_empty() {
            return Ok(Vec::new());
        }
        let bytes = table::encode_rows(rows.iter().map(Decision::to_row))?;
        table::append(&self.root.join(DECISIONS_FILE), &bytes)?;
        let ids = rows.iter().map(|d| d.decision_id).collect();
        for d in rows {
            self.data.insert_decision(d);
        }
        Ok(ids)
    }

    fn validate_new_decision(&self, new: &NewDecision) -> Result<()> {
        if self.data.record(new.ref_id).is_none() {
            return Err(Error::not_found("ref_id", new.ref_id));
        }
        let reviewer = new.reviewer_id.trim();
        if reviewer.is_empty() || reviewer.contains(['\n', '\r']) {
            return Err(Error::Validation(format!("invalid reviewer id {:?}", new.reviewer_id)));
        }
        if let Some(exec) = reviewer.strip_prefix(LLM_REVIEWER_PREFIX) {
            let id: ExecutionId = exec.parse()?;
            if self.data.execution(&id).is_none() {
                return Err(Error::not_found("execution", id));
            }
        }
        if !new.note.is_empty() {
            serde_json::from_str::<serde_json::Value>(&new.note)
                .map_err(|e| Error::Validation(format!("note is not valid JSON: {e}")))?;
        }
        Ok(())
    }

    /// Validated, last-write-wins config update (appends a row).
    pub fn config_set(&mut self, key: &str, value: &str) -> Result<()> {
        config::validate(key, value)?;
        let bytes = table::encode_rows([[key, value]])?;
        table::append(&self.root.join(CONFIG_FILE), &bytes)?;
        self.data.config.push(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn log_execution(&mut self, mut log: ExecutionLog) -> Result<()> {
        log.validate()?;
        log.timestamp = log.timestamp.trunc_subsecs(3);
        if self.data.execution(&log.execution_id).is_some() {
            return Err(Error::Validation(format!(
                "execution {} already logged",
                log.execution_id
            )));
        }
        let clears_others = log.active;
        if clears_others {
            // Keep the single-active invariant when a row arrives active.
            log.active = false;
        }
        let bytes = table::encode_rows([log.to_row()])?;
        table::append(&self.root.join(EXECUTIONS_FILE), &bytes)?;
        let id = log.execution_id.clone();
        self.data.executions.push(log);
        if clears_others {
            self.set_active_execution(&id)?;
        }
        Ok(())
    }

    /// Marks `id` active and every other execution inactive.
    pub fn set_active_execution(&mut self, id: &ExecutionId) -> Result<()> {
        let target = self
            .data
            .execution(id)
            .ok_or_else(|| Error::not_found("execution", id))?;
        if target.execution_type != ExecutionType::BatchScreening {
            return Err(Error::Validation(format!(
                "execution {id} is not a batch_screening run"
            )));
        }
        let mut updated = self.data.executions.clone();
        for e in &mut updated {
            e.active = &e.execution_id == id;
        }
        self.rewrite_executions(updated)
    }

    /// Replaces an existing execution row (counts, threshold, status).
    pub fn update_execution(&mut self, mut log: ExecutionLog) -> Result<()> {
        log.validate()?;
        log.timestamp = log.timestamp.trunc_subsecs(3);
        let mut updated = self.data.executions.clone();
        let slot = updated
            .iter_mut()
            .find(|e| e.execution_id == log.execution_id)
            .ok_or_else(|| Error::not_found("execution", &log.execution_id))?;
        let becomes_active = log.active && !slot.active;
        *slot = log;
        if becomes_active {
            let id = slot.execution_id.clone();
            for e in &mut updated {
                e.active = e.execution_id == id;
            }
        }
        self.rewrite_executions(updated)
    }

    fn rewrite_executions(&mut self, rows: Vec<ExecutionLog>) -> Result<()> {
        let header = [EXECUTION_COLUMNS.map(str::to_string)];
        let bytes = table::encode_rows(header.into_iter().chain(rows.iter().map(ExecutionLog::to_row)))?;
        table::write_atomic(&self.root.join(EXECUTIONS_FILE), &bytes)?;
        self.data.executions = rows;
        Ok(())
    }

    /// Writes `screening_set`: the first `assign.calibration_size` records go
    /// to `calibration`, the rest round-robin to `group-1..group-k`.
    pub fn assign_screening_sets(&mut self) -> Result<Vec<(RefId, String)>> {
        let calibration = self.data.config.get_u64("assign.calibration_size")? as usize;
        let groups = self.data.config.get_u64("assign.group_count")?.max(1) as usize;
        let mut records = self.data.references.clone();
        records.sort_by_key(|r| r.ref_id);
        for (i, r) in records.iter_mut().enumerate() {
            r.screening_set = if i < calibration {
                "calibration".to_string()
            } else {
                format!("group-{}", (i - calibration) % groups + 1)
            };
        }
        let header = [REFERENCE_COLUMNS.map(str::to_string)];
        let bytes = table::encode_rows(header.into_iter().chain(records.iter().map(Record::to_row)))?;
        table::write_atomic(&self.root.join(REFERENCES_FILE), &bytes)?;
        let assignment = records.iter().map(|r| (r.ref_id, r.screening_set.clone())).collect();
        self.data.references.clear();
        self.data.ref_index.clear();
        for r in records {
            self.data.insert_reference(r);
        }
        Ok(assignment)
    }
}
