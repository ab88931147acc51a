//! Keyword highlighting with character offsets.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ListKind {
    Include,
    Exclude,
}

/// `[start, end)` in Unicode scalar values of the highlighted text.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HighlightSpan {
    pub start: usize,
    pub end: usize,
    pub keyword: String,
    pub kind: ListKind,
}

fn chars_eq_ignore_case(a: char, b: char) -> bool {
    a == b || a.to_lowercase().eq(b.to_lowercase())
}

/// Non-overlapping, case-insensitive occurrences of `keyword`, left to right.
pub fn find_all(text: &[char], keyword: &[char]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    if keyword.is_empty() || keyword.len() > text.len() {
        return out;
    }
    let mut i = 0;
    while i + keyword.len() <= text.len() {
        let hit = text[i..i + keyword.len()]
            .iter()
            .zip(keyword)
            .all(|(a, b)| chars_eq_ignore_case(*a, *b));
        if hit {
            out.push((i, i + keyword.len()));
            i += keyword.len();
        } else {
            i += 1;
        }
    }
    out
}

fn spans_for(text: &[char], keywords: &[String], kind: ListKind, out: &mut Vec<HighlightSpan>) {
    let mut seen: Vec<String> = Vec::new();
    for kw in keywords {
        let kw = kw.trim();
        let folded = kw.to_lowercase();
        if kw.is_empty() || seen.contains(&folded) {
            continue;
        }
        seen.push(folded);
        let kw_chars: Vec<char> = kw.chars().collect();
        for (start, end) in find_all(text, &kw_chars) {
            if !out.iter().any(|s| s.kind == kind && s.start == start && s.end == end) {
                out.push(HighlightSpan {
                    start,
                    end,
                    keyword: kw.to_string(),
                    kind,
                });
            }
        }
    }
}

/// Spans for both keyword lists, sorted by position. Spans from different
/// lists may overlap; identical spans within a list are reported once.
pub fn compute_highlights(text: &str, include: &[String], exclude: &[String]) -> Vec<HighlightSpan> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    spans_for(&chars, include, ListKind::Include, &mut out);
    spans_for(&chars, exclude, ListKind::Exclude, &mut out);
    out.sort_by_key(|s| (s.start, s.end, s.kind));
    out
}

/// Characters `[start, end)` of `text`.
pub fn char_slice(text: &str, start: usize, end: usize) -> Option<String> {
    if start > end {
        return None;
    }
    let s: String = text.chars().skip(start).take(end - start).collect();
    (s.chars().count() == end - start).then_some(s)
}
