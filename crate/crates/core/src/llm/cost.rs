use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::{ExecutionId, ProjectData};

use super::batch::judged_records;

/// USD per million tokens. Thinking tokens are billed at the output rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pricing {
    pub input_per_million: f64,
    pub output_per_million: f64,
}

impl Default for Pricing {
    fn default() -> Self {
        Pricing {
            input_per_million: 0.50,
            output_per_million: 3.00,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub thinking_tokens: u64,
}

impl TokenUsage {
    pub fn add(&mut self, other: TokenUsage) {
        self.input_tokens += other.input_tokens;
        self.output_tokens += other.output_tokens;
        self.thinking_tokens += other.thinking_tokens;
    }
}

pub fn estimate_cost(usage: TokenUsage, pricing: &Pricing) -> f64 {
    usage.input_tokens as f64 * pricing.input_per_million / 1e6
        + (usage.output_tokens + usage.thinking_tokens) as f64 * pricing.output_per_million / 1e6
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub usage: TokenUsage,
    pub judged: usize,
    pub total_usd: f64,
    pub per_record_usd: Option<f64>,
}

/// Token totals recorded on the judgments of one execution.
pub fn execution_cost(data: &ProjectData, id: &ExecutionId, pricing: &Pricing) -> Result<CostReport> {
    if data.execution(id).is_none() {
        return Err(Error::NotFound {
            kind: "execution",
            id: id.to_string(),
        });
    }
    let judged = judged_records(data, id);
    let mut usage = TokenUsage::default();
    for j in judged.values() {
        usage.add(TokenUsage {
            input_tokens: j.input_tokens,
            output_tokens: j.output_tokens,
            thinking_tokens: j.thinking_tokens,
        });
    }
    let total_usd = estimate_cost(usage, pricing);
    Ok(CostReport {
        usage,
        judged: judged.len(),
        total_usd,
        per_record_usd: (!judged.is_empty()).then(|| total_usd / judged.len() as f64),
    })
}
