//! Project configuration: recognized keys, defaults and value validation.

use crate::error::{Error, Result};

pub const CONFIG_COLUMNS: [&str; 2] = ["key", "value"];

#[derive(Debug, Clone, Copy)]
enum Kind {
    Text,
    /// Comma-delimited list.
    List,
    /// Real in `[min, max]`, or `(min, max]` / `(min, max)` when open.
    Real {
        min: f64,
        max: f64,
        min_open: bool,
        max_open: bool,
    },
    Choice(&'static [&'static str]),
    Count {
        min: u64,
    },
}

const fn closed(min: f64, max: f64) -> Kind {
    Kind::Real {
        min,
        max,
        min_open: false,
        max_open: false,
    }
}

struct KeySpec {
    key: &'static str,
    default: &'static str,
    kind: Kind,
}

pub const RCT_PRESET: &str = "randomized,randomised,randomly,placebo,double-blind,trial";
pub const SR_PRESET: &str = "systematic review,meta-analysis,search strategy,PRISMA";

const KEYS: &[KeySpec] = &[
    KeySpec {
        key: "keywords.include_preset_rct",
        default: RCT_PRESET,
        kind: Kind::List,
    },
    KeySpec {
        key: "keywords.include_preset_sr",
        default: SR_PRESET,
        kind: Kind::List,
    },
    KeySpec {
        key: "keywords.custom_include",
        default: "",
        kind: Kind::List,
    },
    KeySpec {
        key: "keywords.custom_exclude",
        default: "",
        kind: Kind::List,
    },
    KeySpec {
        key: "llm.model",
        default: "gemini-3-flash-preview",
        kind: Kind::Text,
    },
    KeySpec {
        key: "llm.temperature",
        default: "1.0",
        kind: closed(0.0, 2.0),
    },
    KeySpec {
        key: "llm.top_p",
        default: "0.95",
        kind: closed(0.0, 1.0),
    },
    KeySpec {
        key: "llm.thinking_level",
        default: "low",
        kind: Kind::Choice(&["minimal", "low", "medium", "high"]),
    },
    KeySpec {
        key: "llm.threshold",
        default: "0.5",
        kind: closed(0.0, 1.0),
    },
    KeySpec {
        key: "llm.prompt",
        default: "",
        kind: Kind::Text,
    },
    KeySpec {
        key: "llm.output_language",
        default: "en",
        kind: Kind::Text,
    },
    KeySpec {
        key: "assign.calibration_size",
        default: "0",
        kind: Kind::Count { min: 0 },
    },
    KeySpec {
        key: "assign.group_count",
        default: "1",
        kind: Kind::Count { min: 1 },
    },
    KeySpec {
        key: "stop.rule",
        default: "consecutive",
        kind: Kind::Choice(&["consecutive", "statistical"]),
    },
    KeySpec {
        key: "stop.n_consecutive",
        default: "50",
        kind: Kind::Count { min: 1 },
    },
    KeySpec {
        key: "stop.target_recall",
        default: "0.95",
        kind: Kind::Real {
            min: 0.0,
            max: 1.0,
            min_open: true,
            max_open: false,
        },
    },
    KeySpec {
        key: "stop.confidence",
        default: "0.95",
        kind: Kind::Real {
            min: 0.0,
            max: 1.0,
            min_open: true,
            max_open: true,
        },
    },
    KeySpec {
        key: "ranker.alpha",
        default: "3.822",
        kind: Kind::Real {
            min: 0.0,
            max: f64::MAX,
            min_open: true,
            max_open: false,
        },
    },
    KeySpec {
        key: "ranker.retrain_every",
        default: "1",
        kind: Kind::Count { min: 1 },
    },
];

fn spec(key: &str) -> Option<&'static KeySpec> {
    KEYS.iter().find(|k| k.key == key)
}

pub fn recognized_keys() -> impl Iterator<Item = &'static str> {
    KEYS.iter().map(|k| k.key)
}

pub fn default_value(key: &str) -> Option<&'static str> {
    spec(key).map(|k| k.default)
}

/// Checks `value` against the rules for `key`; unrecognized keys fail.
pub fn validate(key: &str, value: &str) -> Result<()> {
    let spec = spec(key).ok_or_else(|| Error::Validation(format!("unrecognized config key {key:?}")))?;
    if value.contains(['\n', '\r']) && !matches!(spec.kind, Kind::Text) {
        return Err(Error::Validation(format!("{key}: value must be a single line")));
    }
    match spec.kind {
        Kind::Text | Kind::List => Ok(()),
        Kind::Real {
            min,
            max,
            min_open,
            max_open,
        } => {
            let v: f64 = value
                .trim()
                .parse()
                .map_err(|_| Error::Validation(format!("{key}: {value:?} is not a number")))?;
            let low_ok = if min_open { v > min } else { v >= min };
            let high_ok = if max_open { v < max } else { v <= max };
            if !v.is_finite() || !low_ok || !high_ok {
                let (l, r) = (if min_open { '(' } else { '[' }, if max_open { ')' } else { ']' });
                return Err(Error::Validation(format!("{key}: {v} outside {l}{min}, {max}{r}")));
            }
            Ok(())
        }
        Kind::Choice(options) => {
            if options.contains(&value.trim().to_ascii_lowercase().as_str()) {
                Ok(())
            } else {
                Err(Error::Validation(format!(
                    "{key}: {value:?} is not one of {}",
                    options.join(", ")
                )))
            }
        }
        Kind::Count { min } => match value.trim().parse::<u64>() {
            Ok(n) if n >= min => Ok(()),
            _ => Err(Error::Validation(format!(
                "{key}: {value:?} must be an integer >= {min}"
            ))),
        },
    }
}

/// Key-value rows in file order; the last write for a key wins.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    entries: Vec<(String, String)>,
}

impl Config {
    pub(crate) fn seeded() -> Vec<(String, String)> {
        KEYS.iter()
            .map(|k| (k.key.to_string(), k.default.to_string()))
            .collect()
    }

    pub(crate) fn push(&mut self, key: String, value: String) {
        self.entries.push((key, value));
    }

    /// Explicit value, else the documented default, else `None`.
    pub fn get(&self, key: &str) -> Option<String> {
        self.entries
            .iter()
            .rev()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.clone())
            .or_else(|| default_value(key).map(str::to_string))
    }

    pub fn get_f64(&self, key: &str) -> Result<f64> {
        let v = self.require(key)?;
        v.trim()
            .parse()
            .map_err(|_| Error::Validation(format!("{key}: {v:?} is not a number")))
    }

    pub fn get_u64(&self, key: &str) -> Result<u64> {
        let v = self.require(key)?;
        v.trim()
            .parse()
            .map_err(|_| Error::Validation(format!("{key}: {v:?} is not an integer")))
    }

    /// Comma-delimited list, trimmed, empty items dropped.
    pub fn get_list(&self, key: &str) -> Vec<String> {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::to_string)
                    .collect()
            })
            .unwrap_or_default()
    }

    fn require(&self, key: &str) -> Result<String> {
        self.get(key).ok_or_else(|| Error::not_found("config key", key))
    }

    /// Effective value of every recognized key plus any extra keys on file.
    pub fn effective(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = recognized_keys()
            .map(|k| (k.to_string(), self.get(k).unwrap_or_default()))
            .collect();
        for (k, _) in &self.entries {
            if spec(k).is_none() && !out.iter().any(|(o, _)| o == k) {
                out.push((k.clone(), self.get(k).unwrap_or_default()));
            }
        }
        out
    }

    /// Highlight keyword lists: (include, exclude).
    pub fn keyword_lists(&self) -> (Vec<String>, Vec<String>) {
        let mut include = self.get_list("keywords.include_preset_rct");
        include.extend(self.get_list("keywords.include_preset_sr"));
        include.extend(self.get_list("keywords.custom_include"));
        (include, self.get_list("keywords.custom_exclude"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges() {
        assert!(validate("llm.top_p", "1.5").is_err());
        assert!(validate("llm.top_p", "1.0").is_ok());
        assert!(validate("llm.threshold", "-0.1").is_err());
        assert!(validate("stop.confidence", "1").is_err());
        assert!(validate("stop.target_recall", "1").is_ok());
        assert!(validate("stop.target_recall", "0").is_err());
        assert!(validate("assign.group_count", "0").is_err());
        assert!(validate("llm.thinking_level", "LOW").is_ok());
        assert!(validate("llm.thinking_level", "max").is_err());
        assert!(validate("no.such.key", "x").is_err());
    }

    #[test]
    fn last_write_wins_and_defaults() {
        let mut c = Config::default();
        assert_eq!(c.get("llm.threshold").as_deref(), Some("0.5"));
        c.push("llm.threshold".into(), "0.3".into());
        c.push("llm.threshold".into(), "0.4".into());
        assert_eq!(c.get("llm.threshold").as_deref(), Some("0.4"));
        assert_eq!(c.get("unknown"), None);
    }

    #[test]
    fn seeded_defaults_include_presets_and_llm() {
        let seeded = Config::seeded();
        let get = |k: &str| seeded.iter().find(|(key, _)| key == k).map(|(_, v)| v.as_str());
        assert_eq!(get("keywords.include_preset_rct"), Some(RCT_PRESET));
        assert_eq!(get("keywords.include_preset_sr"), Some(SR_PRESET));
        assert_eq!(get("llm.temperature"), Some("1.0"));
        assert_eq!(get("llm.top_p"), Some("0.95"));
        assert_eq!(get("llm.thinking_level"), Some("low"));
        assert_eq!(get("llm.threshold"), Some("0.5"));
        assert_eq!(get("llm.output_language"), Some("en"));
        assert_eq!(get("stop.n_consecutive"), Some("50"));
    }
}
