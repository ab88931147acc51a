use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

/// Normalizes a title for duplicate detection.
///
/// NFKC fold, lowercase, drop `[...]` segments, map every non-alphanumeric
/// character to a space, collapse whitespace. Parenthesized text is kept.
pub fn normalize_title(title: &str) -> String {
    let folded: String = title.nfkc().collect::<String>().to_lowercase();
    let mut out = String::with_capacity(folded.len());
    let mut depth = 0usize;
    // Only strip brackets that close; an unmatched `[` is plain punctuation.
    let mut pending = String::new();
    for c in folded.chars() {
        match c {
            '[' => {
                depth += 1;
                pending.push(' ');
            }
            ']' if depth > 0 => {
                depth -= 1;
                if depth == 0 {
                    pending.clear();
                    out.push(' ');
                }
            }
            _ if depth > 0 => pending.push(c),
            _ => out.push(c),
        }
    }
    out.push_str(&pending);

    let mut result = String::with_capacity(out.len());
    for word in out.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()) {
        if !result.is_empty() {
            result.push(' ');
        }
        result.push_str(word);
    }
    result
}

/// Priority key: `pmid:{pmid}`, else `doi:{lowercased doi}`, else
/// `title:{normalized title}`.
pub fn make_dedup_key(pmid: Option<&str>, doi: Option<&str>, title: &str) -> Result<String> {
    if let Some(pmid) = pmid.map(str::trim).filter(|p| !p.is_empty()) {
        return Ok(format!("pmid:{pmid}"));
    }
    if let Some(doi) = doi.map(str::trim).filter(|d| !d.is_empty()) {
        return Ok(format!("doi:{}", doi.to_lowercase()));
    }
    let normalized = normalize_title(title);
    if normalized.is_empty() {
        return Err(Error::KeyDerivation);
    }
    Ok(format!("title:{normalized}"))
}
