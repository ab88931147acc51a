//! LLM batch screening: prompt rendering, rate-limited requests against a
//! chat-completion provider, judgment parsing and threshold confirmation.

mod batch;
mod cost;
mod judgment;
mod keystore;
mod prompt;
mod provider;
mod ratelimit;

pub use batch::{
    confirm_threshold, document_message, execute_batch, judged_records, refine_prompt, run_batch, start_batch,
    threshold_preview, BatchOptions, BatchOutcome, BatchParams, BatchStore, ThresholdPreview,
};
pub use cost::{estimate_cost, execution_cost, CostReport, Pricing, TokenUsage};
pub use judgment::{parse_judgment, validate_span, EvidenceSpan, FailureNote, LlmJudgment};
pub use keystore::{Keystore, KEYSTORE_ENV};
pub use prompt::{
    build_screening_prompt, clean_refined_criteria, refinement_instruction, ScreeningPrompt, SENSITIVITY_CLAUSE,
    TEMPLATE_VERSION,
};
pub use provider::{
    ApiFlavor, CapturedRequest, ChatProvider, ChatRequest, ChatResponse, LiveProvider, MockFixture, MockProvider,
    ProviderConfig, ScriptedResponse,
};
pub use ratelimit::{Clock, MockClock, RateLimiter, SystemClock, WINDOW};
