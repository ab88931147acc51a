//! CSV reader; header names are matched case-insensitively.

use crate::error::{Error, Result};
use crate::record::{is_valid_pmid, split_authors, RecordDraft};

use super::first_year;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Field {
    Title,
    Abstract,
    Year,
    Authors,
    Journal,
    Volume,
    Issue,
    Pages,
    Issn,
    Doi,
    Pmid,
    Url,
    Source,
}

fn field_for(header: &str) -> Option<Field> {
    let h = header.trim().trim_start_matches('\u{feff}').to_lowercase();
    Some(match h.as_str() {
        "title" | "ti" => Field::Title,
        "abstract" | "ab" => Field::Abstract,
        "year" => Field::Year,
        "authors" => Field::Authors,
        "journal" => Field::Journal,
        "volume" => Field::Volume,
        "issue" => Field::Issue,
        "pages" => Field::Pages,
        "issn" => Field::Issn,
        "doi" => Field::Doi,
        "pmid" => Field::Pmid,
        "url" => Field::Url,
        "source" => Field::Source,
        _ => return None,
    })
}

pub(crate) fn parse(text: &str) -> Result<Vec<RecordDraft>> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let mapping: Vec<Option<Field>> = headers.iter().map(field_for).collect();
    if !mapping.contains(&Some(Field::Title)) {
        return Err(Error::Schema(
            "CSV header has no title column (expected `title` or `ti`)".into(),
        ));
    }

    let mut drafts = Vec::new();
    for row in reader.records() {
        let row = row?;
        if row.iter().all(|v| v.trim().is_empty()) {
            continue;
        }
        let mut d = RecordDraft::default();
        for (value, field) in row.iter().zip(&mapping) {
            let Some(field) = field else { continue };
            let value = value.trim();
            match field {
                Field::Title => d.title = value.to_string(),
                Field::Abstract => d.abstract_text = value.to_string(),
                Field::Year => d.year = first_year(value),
                Field::Authors => d.authors = split_authors(value),
                Field::Journal => d.journal = value.to_string(),
                Field::Volume => d.volume = value.to_string(),
                Field::Issue => d.issue = value.to_string(),
                Field::Pages => d.pages = value.to_string(),
                Field::Issn => d.issn = value.to_string(),
                Field::Doi => d.doi = (!value.is_empty()).then(|| value.to_string()),
                Field::Pmid => {
                    if is_valid_pmid(value) {
                        d.pmid = Some(value.to_string());
                    } else if !value.is_empty() {
                        log::warn!("ignoring non-numeric pmid {value:?}");
                    }
                }
                Field::Url => d.url = value.to_string(),
                Field::Source => d.source = value.to_string(),
            }
        }
        drafts.push(d);
    }
    Ok(drafts)
}
