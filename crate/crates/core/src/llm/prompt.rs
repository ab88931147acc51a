use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TEMPLATE_VERSION: &str = "screen-v1";

/// Clause that biases the model toward inclusion; part of every prompt.
pub const SENSITIVITY_CLAUSE: &str = "When in doubt, include.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScreeningPrompt {
    pub template_version: String,
    pub criteria: String,
    pub rendered: String,
    pub output_language: String,
}

const HEADER: &str = "You are screening bibliographic records for a systematic review. \
You will receive one record's title and abstract as a document. Judge whether the study \
could meet the eligibility criteria below.";

const RULES: &str = "Screening rules:
- Title and abstract screening is a sensitive first pass. When in doubt, include.
- If you are unsure whether the study meets a criterion, or the abstract does not report it, you MUST include the study.
- Exclude only when the document clearly violates at least one criterion.";

const OUTPUT: &str = r#"Reply with a single JSON object and nothing else:
{"probability": <number between 0 and 1, the probability that the study should be included>,
 "reasons": [<short strings explaining the judgment>],
 "evidence": [{"quote": <exact text copied from the document>, "start": <character offset where the quote begins>, "end": <character offset just past the quote>}]}
Character offsets count Unicode characters from 0 at the start of the document text."#;

/// Renders the fixed template around `criteria`.
pub fn render(criteria: &str, output_language: &str) -> Result<ScreeningPrompt> {
    let criteria = criteria.trim();
    if criteria.is_empty() {
        return Err(Error::Validation("protocol text is empty".into()));
    }
    let language = match output_language.trim() {
        "" => "en",
        l => l,
    };
    let rendered = format!(
        "{HEADER}\n\nEligibility criteria:\n{criteria}\n\n{RULES}\n\n{OUTPUT}\nWrite the reasons in language: {language}.\n"
    );
    Ok(ScreeningPrompt {
        template_version: TEMPLATE_VERSION.to_string(),
        criteria: criteria.to_string(),
        rendered,
        output_language: language.to_string(),
    })
}

/// Screening prompt built deterministically from protocol text.
pub fn build_screening_prompt(protocol_text: &str, output_language: &str) -> Result<ScreeningPrompt> {
    render(protocol_text, output_language)
}

/// Instruction for the optional criteria-refinement request.
pub fn refinement_instruction(protocol_text: &str) -> String {
    format!(
        "Rewrite the following review protocol as a concise, numbered list of eligibility \
criteria (population, intervention or exposure, comparator, outcomes, study design) for \
title and abstract screening. Keep every criterion from the protocol and add none. \
Reply with the list only.\n\nProtocol:\n{}",
        protocol_text.trim()
    )
}

/// Strips code fences and surrounding blank lines from a refined criteria reply.
pub fn clean_refined_criteria(reply: &str) -> String {
    reply
        .lines()
        .filter(|l| !l.trim_start().starts_with("```"))
        .collect::<Vec<_>>()
        .join("\n")
        .trim()
        .to_string()
}
