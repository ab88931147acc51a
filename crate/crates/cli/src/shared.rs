//! Operations used by both the CLI and the HTTP service, so that the same
//! request produces the same store rows on either path.

use std::borrow::Cow;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use abscreen_core::llm::{
    build_screening_prompt, start_batch, ApiFlavor, BatchParams, BatchStore, ChatProvider, Keystore, LiveProvider,
    MockProvider, ScreeningPrompt,
};
use abscreen_core::store::{
    DecisionId, DecisionValue, EffectiveStatus, ExecutionLog, NewDecision, Project, ProjectData, StatusScope,
};
use abscreen_core::{Error, RefId};

use crate::error::{CliError, CliResult};

/// Writer handle shared across threads. Writes are serialized by the mutex;
/// readers get the snapshot published after the latest write.
#[derive(Debug)]
pub struct SharedProject {
    writer: Mutex<Project>,
    snapshot: RwLock<Arc<ProjectData>>,
    version: AtomicU64,
}

impl SharedProject {
    pub fn new(project: Project) -> Self {
        let snapshot = RwLock::new(Arc::new(project.snapshot()));
        SharedProject {
            writer: Mutex::new(project),
            snapshot,
            version: AtomicU64::new(0),
        }
    }

    pub fn read(&self) -> Arc<ProjectData> {
        self.snapshot.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// Bumped after every write.
    pub fn version(&self) -> u64 {
        self.version.load(Ordering::SeqCst)
    }

    pub fn write<T>(&self, f: impl FnOnce(&mut Project) -> abscreen_core::Result<T>) -> abscreen_core::Result<T> {
        let mut project = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        let result = f(&mut project);
        *self.snapshot.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(project.snapshot());
        self.version.fetch_add(1, Ordering::SeqCst);
        result
    }
}

/// [`BatchStore`] over a [`SharedProject`]: each judgment takes the writer
/// lock only for its own append.
pub struct SharedWriter<'a>(pub &'a SharedProject);

impl BatchStore for SharedWriter<'_> {
    fn current(&self) -> Cow<'_, ProjectData> {
        Cow::Owned(self.0.read().as_ref().clone())
    }

    fn append_decision(&mut self, new: NewDecision) -> abscreen_core::Result<DecisionId> {
        self.0.write(|p| p.append_decision(new))
    }

    fn update_execution(&mut self, log: ExecutionLog) -> abscreen_core::Result<()> {
        self.0.write(|p| p.update_execution(log))
    }
}

/// `$ABSCREEN_REVIEWER` is handled by clap; this is the fallback.
pub fn default_reviewer() -> String {
    let user = std::env::var("USER")
        .or_else(|_| std::env::var("USERNAME"))
        .unwrap_or_else(|_| "reviewer".into());
    format!("{user}@localhost")
}

/// A human decision. LLM reviewer ids are reserved for batch runs.
pub fn human_decision(reviewer: &str, ref_id: RefId, decision: &str, reason: &str) -> CliResult<NewDecision> {
    if abscreen_core::store::is_llm_reviewer(reviewer.trim()) {
        return Err(Error::Validation(format!("reviewer id {reviewer:?} is reserved for LLM executions")).into());
    }
    let value: DecisionValue = decision.parse()?;
    Ok(NewDecision::new(ref_id, reviewer.trim(), value).with_reason(reason))
}

/// Records a batch should target: `all`, `pending` (no decided all-reviewer
/// status yet) or an explicit list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BatchScope {
    All,
    Pending,
    Ids(Vec<RefId>),
}

impl std::str::FromStr for BatchScope {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "all" => Ok(BatchScope::All),
            "pending" => Ok(BatchScope::Pending),
            other => {
                let ids = other
                    .split(',')
                    .map(|id| id.parse::<RefId>())
                    .collect::<abscreen_core::Result<Vec<_>>>()
                    .map_err(|_| CliError::Usage(format!("scope must be all, pending or a ref_id list, got {s:?}")))?;
                Ok(BatchScope::Ids(ids))
            }
        }
    }
}

impl BatchScope {
    pub fn resolve(&self, data: &ProjectData) -> Vec<RefId> {
        let mut ids: Vec<RefId> = match self {
            BatchScope::All => data.references().iter().map(|r| r.ref_id).collect(),
            BatchScope::Pending => data
                .statuses(&StatusScope::AllReviewers)
                .into_iter()
                .filter(|(_, s)| *s == EffectiveStatus::Pending)
                .map(|(id, _)| id)
                .collect(),
            BatchScope::Ids(ids) => ids.clone(),
        };
        ids.sort();
        ids.dedup();
        ids
    }
}

/// Criteria text and threshold for a new batch; `None` falls back to the
/// project config.
#[derive(Debug, Clone, Default)]
pub struct BatchRequest {
    pub criteria: Option<String>,
    pub threshold: Option<f64>,
}

pub fn batch_settings(data: &ProjectData, request: &BatchRequest) -> CliResult<(ScreeningPrompt, BatchParams)> {
    let config = data.config();
    let criteria = match &request.criteria {
        Some(c) => c.clone(),
        None => config.get("llm.prompt").unwrap_or_default(),
    };
    if criteria.trim().is_empty() {
        return Err(Error::Validation("no screening criteria: pass a prompt or set llm.prompt".into()).into());
    }
    let language = config.get("llm.output_language").unwrap_or_default();
    let prompt = build_screening_prompt(&criteria, &language)?;
    let mut params = BatchParams::from_config(config)?;
    if let Some(t) = request.threshold {
        params.threshold = t;
    }
    Ok((prompt, params))
}

/// Validates the scope and writes the pending execution row.
pub fn begin_batch(project: &mut Project, request: &BatchRequest, scope: &[RefId]) -> CliResult<ExecutionLog> {
    if scope.is_empty() {
        return Err(Error::Validation("batch scope is empty".into()).into());
    }
    for id in scope {
        if project.record(*id).is_none() {
            return Err(Error::NotFound {
                kind: "ref_id",
                id: id.to_string(),
            }
            .into());
        }
    }
    let (prompt, params) = batch_settings(project, request)?;
    Ok(start_batch(project, &prompt, &params, scope.len())?)
}

/// Parses `mock:FIXTURE.json`, `gemini[:ENDPOINT]` or `openai:ENDPOINT`.
/// Live providers read the key named after the flavor from the keystore.
pub fn open_provider(spec: &str) -> CliResult<Arc<dyn ChatProvider>> {
    let (kind, rest) = spec.split_once(':').unwrap_or((spec, ""));
    match kind.trim().to_ascii_lowercase().as_str() {
        "mock" => {
            if rest.is_empty() {
                return Err(CliError::Usage("mock provider needs a fixture: mock:PATH".into()));
            }
            Ok(Arc::new(MockProvider::from_file(Path::new(rest))?))
        }
        flavor @ ("gemini" | "openai") => {
            let parsed: ApiFlavor = flavor.parse()?;
            let endpoint = match (parsed, rest) {
                (ApiFlavor::Gemini, "") => "https://generativelanguage.googleapis.com/v1beta".to_string(),
                (ApiFlavor::OpenAi, "") => {
                    return Err(CliError::Usage("openai provider needs an endpoint: openai:URL".into()))
                }
                (_, url) => url.to_string(),
            };
            let key = Keystore::default_location()?.get(flavor)?;
            Ok(Arc::new(LiveProvider::new(
                &endpoint,
                parsed,
                key,
                Duration::from_secs(120),
            )))
        }
        _ => Err(CliError::Usage(format!(
            "unknown provider {spec:?}; expected mock:PATH, gemini[:URL] or openai:URL"
        ))),
    }
}
