use std::borrow::Cow;
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ranker::build_corpus_text;
use crate::record::RefId;
use crate::store::{
    llm_reviewer_id, now_millis, Config, ConfirmationStatus, DecisionId, DecisionValue, ExecutionId, ExecutionLog,
    ExecutionType, NewDecision, Project, ProjectData, ThinkingLevel,
};

use super::judgment::{parse_judgment, FailureNote, LlmJudgment};
use super::prompt::{clean_refined_criteria, refinement_instruction, render, ScreeningPrompt};
use super::provider::{ChatProvider, ChatRequest};
use super::ratelimit::{Clock, RateLimiter, SystemClock};

/// Model parameters frozen into an execution row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchParams {
    pub model_name: String,
    pub temperature: f64,
    pub top_p: f64,
    pub thinking_level: ThinkingLevel,
    pub threshold: f64,
}

impl BatchParams {
    pub fn from_config(config: &Config) -> Result<Self> {
        Ok(BatchParams {
            model_name: config.get("llm.model").unwrap_or_default(),
            temperature: config.get_f64("llm.temperature")?,
            top_p: config.get_f64("llm.top_p")?,
            thinking_level: config.get("llm.thinking_level").unwrap_or_default().parse()?,
            threshold: config.get_f64("llm.threshold")?,
        })
    }
}

/// Runtime knobs that are not part of the audit record.
///
/// The limiter is shared: every batch given a clone of these options draws
/// from the same per-minute budget, and retries back off on its clock.
#[derive(Debug, Clone)]
pub struct BatchOptions {
    pub limiter: Arc<RateLimiter>,
    pub max_retries: u32,
    pub concurrency: usize,
    /// First retry delay; doubles per attempt.
    pub backoff_base: Duration,
    pub cancel: Arc<AtomicBool>,
}

impl BatchOptions {
    pub fn new(requests_per_minute: u32, clock: Arc<dyn Clock>) -> Self {
        BatchOptions {
            limiter: Arc::new(RateLimiter::new(requests_per_minute, clock)),
            ..Self::default()
        }
    }
}

impl Default for BatchOptions {
    fn default() -> Self {
        BatchOptions {
            limiter: Arc::new(RateLimiter::new(10, Arc::new(SystemClock::default()))),
            max_retries: 3,
            concurrency: 4,
            backoff_base: Duration::from_secs(2),
            cancel: Arc::new(AtomicBool::new(false)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchOutcome {
    pub execution: ExecutionLog,
    /// Records judged during this call.
    pub judged: usize,
    /// Records that failed every attempt during this call.
    pub failed: usize,
    /// Records skipped because they were already judged under this execution.
    pub skipped: usize,
    pub requests: usize,
}

/// The user message for one record: the document text, nothing else.
pub fn document_message(document: &str) -> String {
    format!("Document:\n{document}")
}

/// Latest judgment per record under `id`; failure notes are left out.
pub fn judged_records(data: &ProjectData, id: &ExecutionId) -> BTreeMap<RefId, LlmJudgment> {
    let reviewer = llm_reviewer_id(id);
    let mut latest: BTreeMap<RefId, &crate::store::Decision> = BTreeMap::new();
    for d in data.decisions().iter().filter(|d| d.reviewer_id == reviewer) {
        latest
            .entry(d.ref_id)
            .and_modify(|cur| {
                if (d.timestamp, d.decision_id) > (cur.timestamp, cur.decision_id) {
                    *cur = d;
                }
            })
            .or_insert(d);
    }
    latest
        .into_iter()
        .filter(|(_, d)| d.decision != DecisionValue::Pending)
        .filter_map(|(id, d)| LlmJudgment::from_note(&d.note).map(|j| (id, j)))
        .collect()
}

fn batch_execution<'a>(data: &'a ProjectData, id: &ExecutionId) -> Result<&'a ExecutionLog> {
    let log = data.execution(id).ok_or_else(|| Error::not_found("execution", id))?;
    if log.execution_type != ExecutionType::BatchScreening {
        return Err(Error::Validation(format!(
            "execution {id} is not a batch_screening run"
        )));
    }
    Ok(log)
}

fn check_threshold(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Parameter(format!("threshold {t} outside [0, 1]")));
    }
    Ok(())
}

fn decide(probability: f64, threshold: f64) -> DecisionValue {
    if probability >= threshold {
        DecisionValue::Include
    } else {
        DecisionValue::Exclude
    }
}

/// Store access used while a batch runs. [`Project`] implements it
/// directly; a long-running service can implement it over a shared writer
/// so that other writes interleave with the batch.
pub trait BatchStore {
    fn current(&self) -> Cow<'_, ProjectData>;

    fn append_decision(&mut self, new: NewDecision) -> Result<DecisionId>;

    fn update_execution(&mut self, log: ExecutionLog) -> Result<()>;
}

impl BatchStore for Project {
    fn current(&self) -> Cow<'_, ProjectData> {
        Cow::Borrowed(self.data())
    }

    fn append_decision(&mut self, new: NewDecision) -> Result<DecisionId> {
        Project::append_decision(self, new)
    }

    fn update_execution(&mut self, log: ExecutionLog) -> Result<()> {
        Project::update_execution(self, log)
    }
}

/// Writes a fresh batch_screening row (pending, inactive, zero counts).
pub fn start_batch(
    project: &mut Project,
    prompt: &ScreeningPrompt,
    params: &BatchParams,
    targeted: usize,
) -> Result<ExecutionLog> {
    check_threshold(params.threshold)?;
    let log = ExecutionLog {
        execution_id: project.next_execution_id(),
        execution_type: ExecutionType::BatchScreening,
        timestamp: now_millis(),
        model_name: params.model_name.clone(),
        temperature: params.temperature,
        top_p: params.top_p,
        thinking_level: params.thinking_level,
        criteria_snapshot: prompt.criteria.clone(),
        prompt: prompt.rendered.clone(),
        threshold: params.threshold,
        targeted_count: targeted as u64,
        included_count: 0,
        excluded_count: 0,
        confirmation_status: ConfirmationStatus::Pending,
        active: false,
    };
    project.log_execution(log.clone())?;
    Ok(log)
}

enum Outcome {
    Judged(LlmJudgment),
    Failed { error: String, attempts: u32 },
}

struct Job {
    ref_id: RefId,
    document: String,
}

fn worker(
    queue: &Mutex<VecDeque<Job>>,
    template: &ChatRequest,
    provider: &dyn ChatProvider,
    limiter: &RateLimiter,
    options: &BatchOptions,
    tx: mpsc::Sender<(RefId, Outcome, u32)>,
) {
    loop {
        if options.cancel.load(Ordering::SeqCst) {
            return;
        }
        let Some(job) = queue.lock().unwrap_or_else(|e| e.into_inner()).pop_front() else {
            return;
        };
        let request = ChatRequest {
            ref_id: Some(job.ref_id),
            user: document_message(&job.document),
            ..template.clone()
        };
        let mut attempts = 0;
        let outcome = loop {
            attempts += 1;
            limiter.acquire();
            let result = provider.complete(&request).and_then(|resp| {
                let mut j = parse_judgment(job.ref_id, &resp.text, &job.document)?;
                j.input_tokens = resp.input_tokens;
                j.output_tokens = resp.output_tokens;
                j.thinking_tokens = resp.thinking_tokens;
                Ok(j)
            });
            match result {
                Ok(j) => break Outcome::Judged(j),
                Err(e) if attempts > options.max_retries || options.cancel.load(Ordering::SeqCst) => {
                    break Outcome::Failed {
                        error: e.to_string(),
                        attempts,
                    }
                }
                Err(e) => {
                    log::warn!("record {} attempt {attempts} failed: {e}", job.ref_id);
                    let delay = options.backoff_base.saturating_mul(1 << (attempts - 1).min(16));
                    limiter.clock().sleep(delay);
                }
            }
        };
        if tx.send((job.ref_id, outcome, attempts)).is_err() {
            return;
        }
    }
}

/// Screens `scope` under an existing batch execution, skipping records
/// already judged under it. Each result is persisted as it arrives; the
/// execution row's counts are refreshed at the end. Returns
/// [`Error::Interrupted`] when cancelled, after persisting finished work.
pub fn execute_batch<S: BatchStore + ?Sized>(
    store: &mut S,
    execution_id: &ExecutionId,
    scope: &[RefId],
    provider: &dyn ChatProvider,
    options: &BatchOptions,
) -> Result<BatchOutcome> {
    if scope.is_empty() {
        return Err(Error::Validation("batch scope is empty".into()));
    }
    let scope: BTreeSet<RefId> = scope.iter().copied().collect();
    let (log, jobs) = {
        let data = store.current();
        let log = batch_execution(&data, execution_id)?.clone();
        let mut jobs = VecDeque::new();
        for &ref_id in &scope {
            let record = data.record(ref_id).ok_or_else(|| Error::not_found("ref_id", ref_id))?;
            jobs.push_back(Job {
                ref_id,
                document: build_corpus_text(record),
            });
        }
        let done = judged_records(&data, execution_id);
        jobs.retain(|j| !done.contains_key(&j.ref_id));
        (log, jobs)
    };
    let skipped = scope.len() - jobs.len();

    let template = ChatRequest {
        ref_id: None,
        model: log.model_name.clone(),
        temperature: log.temperature,
        top_p: log.top_p,
        thinking_level: log.thinking_level,
        system: log.prompt.clone(),
        user: String::new(),
    };
    let reviewer = llm_reviewer_id(execution_id);
    let limiter = options.limiter.as_ref();
    let workers = options.concurrency.clamp(1, jobs.len().max(1));
    let queue = Mutex::new(jobs);
    let (mut judged, mut failed, mut requests) = (0, 0, 0);
    let mut write_error = None;

    std::thread::scope(|s| {
        let (tx, rx) = mpsc::channel();
        for _ in 0..workers {
            let tx = tx.clone();
            let (queue, template) = (&queue, &template);
            s.spawn(move || worker(queue, template, provider, limiter, options, tx));
        }
        drop(tx);
        for (ref_id, outcome, attempts) in rx {
            requests += attempts as usize;
            if write_error.is_some() {
                continue;
            }
            let new = match outcome {
                Outcome::Judged(j) => {
                    judged += 1;
                    NewDecision::new(ref_id, reviewer.clone(), decide(j.probability, log.threshold))
                        .with_note(j.to_note())
                }
                Outcome::Failed { error, attempts } => {
                    failed += 1;
                    let note = serde_json::to_string(&FailureNote { error, attempts }).expect("note serializes");
                    NewDecision::new(ref_id, reviewer.clone(), DecisionValue::Pending)
                        .with_reason("llm request failed")
                        .with_note(note)
                }
            };
            if let Err(e) = store.append_decision(new) {
                options.cancel.store(true, Ordering::SeqCst);
                write_error = Some(e);
            }
        }
    });
    if let Some(e) = write_error {
        return Err(e);
    }

    let updated = {
        let data = store.current();
        let judgments = judged_records(&data, execution_id);
        let mut updated = batch_execution(&data, execution_id)?.clone();
        let targeted: BTreeSet<RefId> = scope.iter().chain(judgments.keys()).copied().collect();
        updated.targeted_count = targeted.len().max(updated.targeted_count as usize) as u64;
        updated.included_count = judgments
            .values()
            .filter(|j| j.probability >= updated.threshold)
            .count() as u64;
        updated.excluded_count = judgments.len() as u64 - updated.included_count;
        updated
    };
    store.update_execution(updated.clone())?;

    let remaining = queue.into_inner().unwrap_or_else(|e| e.into_inner()).len();
    if options.cancel.load(Ordering::SeqCst) && remaining > 0 {
        return Err(Error::Interrupted);
    }
    Ok(BatchOutcome {
        execution: updated,
        judged,
        failed,
        skipped,
        requests,
    })
}

/// Logs a new execution and screens `scope` under it.
pub fn run_batch(
    project: &mut Project,
    prompt: &ScreeningPrompt,
    params: &BatchParams,
    scope: &[RefId],
    provider: &dyn ChatProvider,
    options: &BatchOptions,
) -> Result<BatchOutcome> {
    if scope.is_empty() {
        return Err(Error::Validation("batch scope is empty".into()));
    }
    for &id in scope {
        if project.record(id).is_none() {
            return Err(Error::not_found("ref_id", id));
        }
    }
    let log = start_batch(project, prompt, params, scope.iter().collect::<BTreeSet<_>>().len())?;
    execute_batch(project, &log.execution_id, scope, provider, options)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPreview {
    pub execution_id: ExecutionId,
    pub threshold: f64,
    pub include_count: u64,
    pub exclude_count: u64,
    pub judged: u64,
    pub targeted: u64,
}

/// Counts at threshold `t` over stored judgments; writes nothing.
pub fn threshold_preview(data: &ProjectData, execution_id: &ExecutionId, t: f64) -> Result<ThresholdPreview> {
    check_threshold(t)?;
    let log = batch_execution(data, execution_id)?;
    let judgments = judged_records(data, execution_id);
    let include = judgments.values().filter(|j| j.probability >= t).count() as u64;
    Ok(ThresholdPreview {
        execution_id: execution_id.clone(),
        threshold: t,
        include_count: include,
        exclude_count: judgments.len() as u64 - include,
        judged: judgments.len() as u64,
        targeted: log.targeted_count,
    })
}

/// Appends a superseding decision at threshold `t` for every judged record,
/// then marks the execution confirmed and active.
pub fn confirm_threshold(project: &mut Project, execution_id: &ExecutionId, t: f64) -> Result<ExecutionLog> {
    check_threshold(t)?;
    let mut log = batch_execution(project, execution_id)?.clone();
    let judgments = judged_records(project, execution_id);
    let reviewer = llm_reviewer_id(execution_id);
    let batch: Vec<NewDecision> = judgments
        .iter()
        .map(|(id, j)| {
            NewDecision::new(*id, reviewer.clone(), decide(j.probability, t))
                .with_reason(format!("threshold confirmed at {t}"))
                .with_note(j.to_note())
        })
        .collect();
    project.append_decisions(batch)?;
    log.threshold = t;
    log.included_count = judgments.values().filter(|j| j.probability >= t).count() as u64;
    log.excluded_count = judgments.len() as u64 - log.included_count;
    log.confirmation_status = ConfirmationStatus::Confirmed;
    log.active = true;
    project.update_execution(log.clone())?;
    Ok(log)
}

/// Optional criteria rewrite by the model, logged as a prompt_generation
/// execution. The template around the criteria is unchanged.
pub fn refine_prompt(
    project: &mut Project,
    protocol_text: &str,
    output_language: &str,
    params: &BatchParams,
    provider: &dyn ChatProvider,
) -> Result<(ScreeningPrompt, ExecutionLog)> {
    if protocol_text.trim().is_empty() {
        return Err(Error::Validation("protocol text is empty".into()));
    }
    let request = ChatRequest {
        ref_id: None,
        model: params.model_name.clone(),
        temperature: params.temperature,
        top_p: params.top_p,
        thinking_level: params.thinking_level,
        system: "You prepare eligibility criteria for systematic review screening.".into(),
        user: refinement_instruction(protocol_text),
    };
    let reply = provider.complete(&request)?;
    let refined = clean_refined_criteria(&reply.text);
    let prompt = render(
        if refined.is_empty() { protocol_text } else { &refined },
        output_language,
    )?;
    let log = ExecutionLog {
        execution_id: project.next_execution_id(),
        execution_type: ExecutionType::PromptGeneration,
        timestamp: now_millis(),
        model_name: params.model_name.clone(),
        temperature: params.temperature,
        top_p: params.top_p,
        thinking_level: params.thinking_level,
        criteria_snapshot: protocol_text.trim().to_string(),
        prompt: prompt.rendered.clone(),
        threshold: params.threshold,
        targeted_count: 0,
        included_count: 0,
        excluded_count: 0,
        confirmation_status: ConfirmationStatus::Pending,
        active: false,
    };
    project.log_execution(log.clone())?;
    Ok((prompt, log))
}
