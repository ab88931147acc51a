//! MEDLINE / PubMed `.nbib` reader.

use crate::record::{is_valid_pmid, RecordDraft};

use super::first_year;

/// `TAG - value` with the tag left-aligned in a four-character column.
fn split_tag(line: &str) -> Option<(&str, &str)> {
    let bytes = line.as_bytes();
    if bytes.len() < 5 || bytes[4] != b'-' || !bytes[0].is_ascii_uppercase() {
        return None;
    }
    let tag = line[..4].trim_end();
    if !tag.bytes().all(|b| b.is_ascii_uppercase() || b.is_ascii_digit()) {
        return None;
    }
    let value = line[5..].strip_prefix(' ').unwrap_or(&line[5..]);
    Some((tag, value.trim_end()))
}

#[derive(Default)]
struct Builder {
    draft: RecordDraft,
    full_authors: Vec<String>,
    short_authors: Vec<String>,
    fields: Vec<(String, String)>,
}

impl Builder {
    fn push(&mut self, tag: &str, value: &str) {
        self.fields.push((tag.to_string(), value.trim().to_string()));
    }

    fn continue_last(&mut self, line: &str) {
        if let Some((_, value)) = self.fields.last_mut() {
            let line = line.trim();
            if !line.is_empty() {
                value.push(' ');
                value.push_str(line);
            }
        }
    }

    fn finish(mut self) -> RecordDraft {
        let d = &mut self.draft;
        for (tag, value) in &self.fields {
            let set_first = |slot: &mut String| {
                if slot.is_empty() {
                    *slot = value.clone();
                }
            };
            match tag.as_str() {
                "PMID" => {
                    if d.pmid.is_none() && is_valid_pmid(value) {
                        d.pmid = Some(value.clone());
                    }
                }
                "TI" => set_first(&mut d.title),
                "AB" => set_first(&mut d.abstract_text),
                "DP" => {
                    if d.year.is_none() {
                        d.year = first_year(value);
                    }
                }
                "FAU" => self.full_authors.push(value.clone()),
                "AU" => self.short_authors.push(value.clone()),
                "JT" => set_first(&mut d.journal),
                "VI" => set_first(&mut d.volume),
                "IP" => set_first(&mut d.issue),
                "PG" => set_first(&mut d.pages),
                "IS" => {
                    // "1234-5678 (Electronic)"
                    let issn = value.split_whitespace().next().unwrap_or_default();
                    if d.issn.is_empty() {
                        d.issn = issn.to_string();
                    }
                }
                "AID" | "LID" if d.doi.is_none() => {
                    d.doi = value
                        .strip_suffix("[doi]")
                        .map(str::trim)
                        .filter(|doi| !doi.is_empty())
                        .map(String::from);
                }
                _ => {}
            }
        }
        d.authors = if self.full_authors.is_empty() {
            std::mem::take(&mut self.short_authors)
        } else {
            std::mem::take(&mut self.full_authors)
        };
        d.source = "PubMed".to_string();
        self.draft
    }
}

/// One record per `PMID-` line; blank lines between blocks are ignored.
pub(crate) fn parse(text: &str) -> Vec<RecordDraft> {
    let mut drafts = Vec::new();
    let mut current: Option<Builder> = None;
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        match split_tag(line) {
            Some((tag, value)) => {
                if tag == "PMID" {
                    if let Some(done) = current.take() {
                        drafts.push(done.finish());
                    }
                }
                current.get_or_insert_with(Builder::default).push(tag, value);
            }
            None => {
                if let Some(b) = current.as_mut() {
                    b.continue_last(line);
                }
            }
        }
    }
    if let Some(done) = current {
        drafts.push(done.finish());
    }
    drafts
}
