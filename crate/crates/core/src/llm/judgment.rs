use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::record::RefId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceSpan {
    pub quote: String,
    pub start: usize,
    pub end: usize,
    pub valid_offsets: bool,
}

/// A parsed model verdict for one record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmJudgment {
    pub ref_id: RefId,
    pub probability: f64,
    pub reasons: Vec<String>,
    pub evidence: Vec<EvidenceSpan>,
    pub raw_response: String,
    #[serde(default)]
    pub input_tokens: u64,
    #[serde(default)]
    pub output_tokens: u64,
    #[serde(default)]
    pub thinking_tokens: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl LlmJudgment {
    pub fn to_note(&self) -> String {
        serde_json::to_string(self).expect("judgment serializes")
    }

    /// Reads a judgment back from a decision note; `None` for failure notes.
    pub fn from_note(note: &str) -> Option<Self> {
        serde_json::from_str(note).ok()
    }
}

/// Note stored on the pending decision of a record that failed every attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureNote {
    pub error: String,
    pub attempts: u32,
}

/// First JSON object in `raw` that carries a `probability` field. Code
/// fences and surrounding prose are skipped.
fn first_object(raw: &str) -> Option<serde_json::Map<String, Value>> {
    for (i, _) in raw.match_indices('{') {
        let mut stream = serde_json::Deserializer::from_str(&raw[i..]).into_iter::<Value>();
        if let Some(Ok(Value::Object(map))) = stream.next() {
            if map.contains_key("probability") {
                return Some(map);
            }
        }
    }
    None
}

fn as_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().trim_end_matches('%').trim().parse().ok(),
        _ => None,
    }
}

fn as_offset(v: Option<&Value>) -> Option<usize> {
    let v = v?;
    match v {
        Value::Number(n) => n.as_u64().map(|n| n as usize),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

/// Char offsets of every occurrence of `needle` in `hay` (both as chars).
fn occurrences(hay: &[char], needle: &[char]) -> Vec<usize> {
    if needle.is_empty() || needle.len() > hay.len() {
        return Vec::new();
    }
    (0..=hay.len() - needle.len())
        .filter(|&i| hay[i..i + needle.len()] == *needle)
        .collect()
}

/// Checks a claimed span; on mismatch, moves it to the occurrence of the
/// quote nearest the claimed start.
pub fn validate_span(document: &[char], quote: &str, start: Option<usize>, end: Option<usize>) -> EvidenceSpan {
    let q: Vec<char> = quote.chars().collect();
    if let (Some(s), Some(e)) = (start, end) {
        if s <= e && e <= document.len() && document[s..e] == *q && !q.is_empty() {
            return EvidenceSpan {
                quote: quote.to_string(),
                start: s,
                end: e,
                valid_offsets: true,
            };
        }
    }
    let claimed = start.unwrap_or(0);
    match occurrences(document, &q)
        .into_iter()
        .min_by_key(|&i| (i.abs_diff(claimed), i))
    {
        Some(i) => EvidenceSpan {
            quote: quote.to_string(),
            start: i,
            end: i + q.len(),
            valid_offsets: true,
        },
        None => EvidenceSpan {
            quote: quote.to_string(),
            start: start.unwrap_or(0),
            end: end.unwrap_or(0),
            valid_offsets: false,
        },
    }
}

/// Parses a raw model reply against the document it judged.
pub fn parse_judgment(ref_id: RefId, raw: &str, document_text: &str) -> Result<LlmJudgment> {
    let obj =
        first_object(raw).ok_or_else(|| Error::Parse("no JSON object with a probability field in the reply".into()))?;
    let mut warnings = Vec::new();
    let p = as_f64(&obj["probability"])
        .filter(|p| p.is_finite())
        .ok_or_else(|| Error::Parse(format!("probability {} is not a number", obj["probability"])))?;
    let probability = p.clamp(0.0, 1.0);
    if probability != p {
        let msg = format!("probability {p} clamped to {probability}");
        log::warn!("record {ref_id}: {msg}");
        warnings.push(msg);
    }
    let reasons = match obj.get("reasons") {
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| match v {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            })
            .collect(),
        Some(Value::String(s)) => vec![s.clone()],
        _ => Vec::new(),
    };
    let document: Vec<char> = document_text.chars().collect();
    let mut evidence = Vec::new();
    if let Some(Value::Array(items)) = obj.get("evidence") {
        for item in items {
            let Some(quote) = item.get("quote").and_then(Value::as_str) else {
                continue;
            };
            let span = validate_span(
                &document,
                quote,
                as_offset(item.get("start")),
                as_offset(item.get("end")),
            );
            if !span.valid_offsets {
                warnings.push(format!("evidence quote not found in document: {quote:?}"));
            }
            evidence.push(span);
        }
    }
    Ok(LlmJudgment {
        ref_id,
        probability,
        reasons,
        evidence,
        raw_response: raw.to_string(),
        input_tokens: 0,
        output_tokens: 0,
        thinking_tokens: 0,
        warnings,
    })
}
