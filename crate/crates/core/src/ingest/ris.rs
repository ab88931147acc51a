//! RIS reader and writer.

use crate::record::{is_valid_pmid, Record, RecordDraft};

use super::first_year;

/// Splits a line into `(tag, value)` when it has the `XX  - value` shape.
fn split_tag(line: &str) -> Option<(&str, &str)> {
    let bytes = line.as_bytes();
    if bytes.len() < 5 {
        // "ER  -" without a trailing space is exactly five bytes.
        return None;
    }
    if !bytes[0].is_ascii_uppercase()
        || !(bytes[1].is_ascii_uppercase() || bytes[1].is_ascii_digit())
        || &bytes[2..5] != b"  -"
    {
        return None;
    }
    let tag = &line[..2];
    let value = line[5..].strip_prefix(' ').unwrap_or(&line[5..]);
    Some((tag, value.trim_end()))
}

#[derive(Default)]
struct Builder {
    draft: RecordDraft,
    start_page: String,
    end_page: String,
    has_tags: bool,
    last_tag: Option<String>,
}

impl Builder {
    fn apply(&mut self, tag: &str, value: &str) {
        self.has_tags = true;
        self.last_tag = Some(tag.to_string());
        let d = &mut self.draft;
        let set_first = |slot: &mut String| {
            if slot.is_empty() {
                *slot = value.trim().to_string();
            }
        };
        match tag {
            "TI" | "T1" => set_first(&mut d.title),
            "AB" | "N2" => set_first(&mut d.abstract_text),
            "PY" | "Y1" => {
                if d.year.is_none() {
                    d.year = first_year(value);
                }
            }
            "AU" => {
                let name = value.trim();
                if !name.is_empty() {
                    d.authors.push(name.to_string());
                }
            }
            "JO" | "T2" | "JF" => set_first(&mut d.journal),
            "VL" => set_first(&mut d.volume),
            "IS" => set_first(&mut d.issue),
            "SP" => set_first(&mut self.start_page),
            "EP" => set_first(&mut self.end_page),
            "SN" => set_first(&mut d.issn),
            "DO" => {
                if d.doi.is_none() && !value.trim().is_empty() {
                    d.doi = Some(value.trim().to_string());
                }
            }
            "UR" => set_first(&mut d.url),
            "DB" => set_first(&mut d.source),
            "AN" => {
                let v = value.trim();
                if d.pmid.is_none() && is_valid_pmid(v) {
                    d.pmid = Some(v.to_string());
                }
            }
            _ => {
                self.last_tag = None;
            }
        }
    }

    /// Appends a wrapped continuation line to the last multi-line field.
    fn continue_line(&mut self, line: &str) {
        let line = line.trim();
        if line.is_empty() {
            return;
        }
        let slot = match self.last_tag.as_deref() {
            Some("TI" | "T1") => &mut self.draft.title,
            Some("AB" | "N2") => &mut self.draft.abstract_text,
            _ => return,
        };
        if !slot.is_empty() {
            slot.push(' ');
        }
        slot.push_str(line);
    }

    fn finish(mut self) -> RecordDraft {
        self.draft.pages = match (self.start_page.is_empty(), self.end_page.is_empty()) {
            (false, false) => format!("{}-{}", self.start_page, self.end_page),
            (false, true) => self.start_page,
            (true, false) => self.end_page,
            (true, true) => String::new(),
        };
        self.draft
    }
}

pub(crate) fn parse(text: &str) -> Vec<RecordDraft> {
    let mut drafts = Vec::new();
    let mut current = Builder::default();
    for line in text.lines() {
        match split_tag(line) {
            Some(("ER", _)) => {
                drafts.push(std::mem::take(&mut current).finish());
            }
            Some((tag, value)) => current.apply(tag, value),
            None => current.continue_line(line),
        }
    }
    if current.has_tags {
        log::warn!("RIS input ends without an `ER  -` terminator; keeping the trailing record");
        drafts.push(current.finish());
    }
    drafts
}

fn push_tag(out: &mut String, tag: &str, value: &str) {
    out.push_str(tag);
    out.push_str("  - ");
    // RIS values are single-line.
    out.push_str(&value.replace(['\r', '\n'], " "));
    out.push('\n');
}

/// Renders one RIS block; pmid goes to `AN`, source to `DB`.
pub(crate) fn write_record(out: &mut String, record: &Record) {
    push_tag(out, "TY", "JOUR");
    push_tag(out, "TI", &record.title);
    if !record.abstract_text.is_empty() {
        push_tag(out, "AB", &record.abstract_text);
    }
    if let Some(year) = record.year {
        push_tag(out, "PY", &year.to_string());
    }
    for author in record.author_list() {
        push_tag(out, "AU", &author);
    }
    let optional = [
        ("JO", record.journal.as_str()),
        ("VL", &record.volume),
        ("IS", &record.issue),
    ];
    for (tag, value) in optional {
        if !value.is_empty() {
            push_tag(out, tag, value);
        }
    }
    if !record.pages.is_empty() {
        match record.pages.split_once('-') {
            Some((sp, ep)) => {
                push_tag(out, "SP", sp);
                push_tag(out, "EP", ep);
            }
            None => push_tag(out, "SP", &record.pages),
        }
    }
    if !record.issn.is_empty() {
        push_tag(out, "SN", &record.issn);
    }
    if let Some(doi) = &record.doi {
        push_tag(out, "DO", doi);
    }
    if !record.url.is_empty() {
        push_tag(out, "UR", &record.url);
    }
    if let Some(pmid) = &record.pmid {
        push_tag(out, "AN", pmid);
    }
    if !record.source.is_empty() {
        push_tag(out, "DB", &record.source);
    }
    out.push_str("ER  - \n\n");
}
