use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const EXECUTION_COLUMNS: [&str; 15] = [
    "execution_id",
    "execution_type",
    "timestamp",
    "model_name",
    "temperature",
    "top_p",
    "thinking_level",
    "criteria_snapshot",
    "prompt",
    "threshold",
    "targeted_count",
    "included_count",
    "excluded_count",
    "confirmation_status",
    "active",
];

/// `exec-NNNN`, sequential per project.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ExecutionId(pub String);

impl ExecutionId {
    pub fn sequential(n: u64) -> Self {
        ExecutionId(format!("exec-{n:04}"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ExecutionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for ExecutionId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || s.contains([',', '\n', '\r', '"']) {
            return Err(Error::Validation(format!("invalid execution id {s:?}")));
        }
        Ok(ExecutionId(s.to_string()))
    }
}

macro_rules! text_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum $name { $($variant),+ }

        impl $name {
            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s.trim().to_ascii_lowercase().as_str() {
                    $($text => Ok($name::$variant),)+
                    other => Err(Error::Validation(format!(
                        concat!("invalid ", stringify!($name), " {:?}"), other
                    ))),
                }
            }
        }
    };
}

text_enum!(ExecutionType {
    PromptGeneration => "prompt_generation",
    BatchScreening => "batch_screening",
});

text_enum!(ThinkingLevel {
    Minimal => "minimal",
    Low => "low",
    Medium => "medium",
    High => "high",
});

text_enum!(ConfirmationStatus {
    Pending => "pending",
    Confirmed => "confirmed",
});

/// One row of the llm_executions table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionLog {
    pub execution_id: ExecutionId,
    pub execution_type: ExecutionType,
    pub timestamp: DateTime<Utc>,
    pub model_name: String,
    pub temperature: f64,
    pub top_p: f64,
    pub thinking_level: ThinkingLevel,
    pub criteria_snapshot: String,
    pub prompt: String,
    pub threshold: f64,
    pub targeted_count: u64,
    pub included_count: u64,
    pub excluded_count: u64,
    pub confirmation_status: ConfirmationStatus,
    pub active: bool,
}

impl ExecutionLog {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.top_p) {
            return Err(Error::Validation(format!("top_p {} outside [0, 1]", self.top_p)));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Validation(format!(
                "threshold {} outside [0, 1]",
                self.threshold
            )));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(Error::Validation(format!(
                "temperature {} must be non-negative",
                self.temperature
            )));
        }
        if self.included_count + self.excluded_count > self.targeted_count {
            return Err(Error::Validation(format!(
                "included ({}) + excluded ({}) exceeds targeted ({})",
                self.included_count, self.excluded_count, self.targeted_count
            )));
        }
        if self.active && self.execution_type != ExecutionType::BatchScreening {
            return Err(Error::Validation(
                "only batch_screening executions can be active".into(),
            ));
        }
        Ok(())
    }

    pub(crate) fn to_row(&self) -> [String; 15] {
        [
            self.execution_id.to_string(),
            self.execution_type.to_string(),
            super::format_timestamp(&self.timestamp),
            self.model_name.clone(),
            self.temperature.to_string(),
            self.top_p.to_string(),
            self.thinking_level.to_string(),
            self.criteria_snapshot.clone(),
            self.prompt.clone(),
            self.threshold.to_string(),
            self.targeted_count.to_string(),
            self.included_count.to_string(),
            self.excluded_count.to_string(),
            self.confirmation_status.to_string(),
            self.active.to_string(),
        ]
    }

    pub(crate) fn from_row(row: &csv::StringRecord) -> Result<Self> {
        let corrupt = |message: String| Error::Corrupt {
            table: "llm_executions".into(),
            message,
        };
        if row.len() != EXECUTION_COLUMNS.len() {
            return Err(corrupt(format!("expected 15 columns, found {}", row.len())));
        }
        let real = |i: usize| {
            row[i]
                .parse::<f64>()
                .map_err(|_| corrupt(format!("invalid number {:?}", &row[i])))
        };
        let count = |i: usize| {
            row[i]
                .parse::<u64>()
                .map_err(|_| corrupt(format!("invalid count {:?}", &row[i])))
        };
        Ok(ExecutionLog {
            execution_id: row[0].parse()?,
            execution_type: row[1].parse()?,
            timestamp: super::parse_timestamp(&row[2])?,
            model_name: row[3].to_string(),
            temperature: real(4)?,
            top_p: real(5)?,
            thinking_level: row[6].parse()?,
            criteria_snapshot: row[7].to_string(),
            prompt: row[8].to_string(),
            threshold: real(9)?,
            targeted_count: count(10)?,
            included_count: count(11)?,
            excluded_count: count(12)?,
            confirmation_status: row[13].parse()?,
            active: match &row[14] {
                "true" => true,
                "false" => false,
                other => return Err(corrupt(format!("invalid active flag {other:?}"))),
            },
        })
    }
}
