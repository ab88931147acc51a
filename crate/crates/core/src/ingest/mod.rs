//! Bibliographic file ingestion: parsing, deduplicated import and export.

mod csv_import;
mod nbib;
mod normalize;
mod pubmed_xml;
mod ris;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use normalize::{make_dedup_key, normalize_title};

use crate::error::{Error, Result};
use crate::record::{serialize_authors, Record, RecordDraft, RefId, REFERENCE_COLUMNS};
use crate::store::{now_millis, EffectiveStatus, Project, ProjectData, StatusScope};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputFormat {
    Ris,
    Nbib,
    PubmedXml,
    Csv,
}

impl InputFormat {
    pub fn name(self) -> &'static str {
        match self {
            InputFormat::Ris => "ris",
            InputFormat::Nbib => "nbib",
            InputFormat::PubmedXml => "pubmed_xml",
            InputFormat::Csv => "csv",
        }
    }

    /// Guesses the format from a file extension.
    pub fn from_extension(path: &std::path::Path) -> Option<Self> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "ris" => Some(InputFormat::Ris),
            "nbib" | "medline" | "txt" => Some(InputFormat::Nbib),
            "xml" => Some(InputFormat::PubmedXml),
            "csv" => Some(InputFormat::Csv),
            _ => None,
        }
    }
}

impl fmt::Display for InputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ris" => Ok(InputFormat::Ris),
            "nbib" | "medline" => Ok(InputFormat::Nbib),
            "pubmed_xml" | "xml" => Ok(InputFormat::PubmedXml),
            "csv" => Ok(InputFormat::Csv),
            other => Err(Error::Parameter(format!("unknown input format {other:?}"))),
        }
    }
}

/// First run of four consecutive ASCII digits, e.g. `2019 Mar` or `2019/05/01/`.
pub(crate) fn first_year(s: &str) -> Option<i32> {
    let bytes = s.as_bytes();
    bytes
        .windows(4)
        .position(|w| w.iter().all(u8::is_ascii_digit))
        .and_then(|i| s[i..i + 4].parse().ok())
}

fn decode(bytes: &[u8]) -> Result<&str> {
    let bytes = bytes.strip_prefix(b"\xEF\xBB\xBF").unwrap_or(bytes);
    std::str::from_utf8(bytes).map_err(|e| Error::Encoding(e.to_string()))
}

/// Parses a bibliographic file into drafts, in file order.
pub fn parse_records(bytes: &[u8], format: InputFormat) -> Result<Vec<RecordDraft>> {
    let text = decode(bytes)?;
    let drafts = match format {
        InputFormat::Ris => ris::parse(text),
        InputFormat::Nbib => nbib::parse(text),
        InputFormat::PubmedXml => pubmed_xml::parse(text)?,
        InputFormat::Csv => csv_import::parse(text)?,
    };
    if drafts.is_empty() {
        return Err(Error::EmptyInput(format.name()));
    }
    Ok(drafts)
}

/// A draft skipped because its key matched an existing or earlier record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DuplicateHit {
    pub draft_index: usize,
    pub existing_ref_id: RefId,
    pub dedup_key: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImportReport {
    pub imported_count: usize,
    pub duplicate_count: usize,
    pub rejected_count: usize,
    pub duplicates: Vec<DuplicateHit>,
    /// `(draft index, reason)` for rejected drafts.
    pub rejected: Vec<(usize, String)>,
    pub imported_ref_ids: Vec<RefId>,
}

/// Imports drafts, skipping any whose dedup key collides with a stored
/// record or an earlier draft of the batch (first occurrence wins).
pub fn import_batch(
    drafts: &[RecordDraft],
    project: &mut Project,
    importer: &str,
    source_file: &str,
) -> Result<ImportReport> {
    let mut report = ImportReport::default();
    let mut keys: HashMap<String, RefId> = project
        .dedup_keys()
        .into_iter()
        .map(|(k, id)| (k.to_string(), id))
        .collect();
    let mut next = project.next_ref_id().0;
    let imported_at = now_millis();
    let mut records = Vec::new();

    for (index, draft) in drafts.iter().enumerate() {
        let key = draft
            .validate()
            .and_then(|_| make_dedup_key(draft.pmid.as_deref(), draft.doi.as_deref(), &draft.title));
        let key = match key {
            Ok(k) => k,
            Err(e) => {
                report.rejected.push((index, e.to_string()));
                continue;
            }
        };
        if let Some(&existing) = keys.get(&key) {
            report.duplicates.push(DuplicateHit {
                draft_index: index,
                existing_ref_id: existing,
                dedup_key: key,
            });
            continue;
        }
        let ref_id = RefId(next);
        next += 1;
        keys.insert(key.clone(), ref_id);
        records.push(Record {
            ref_id,
            title: draft.title.trim().to_string(),
            abstract_text: draft.abstract_text.trim().to_string(),
            year: draft.year,
            authors: serialize_authors(&draft.authors),
            journal: draft.journal.clone(),
            volume: draft.volume.clone(),
            issue: draft.issue.clone(),
            pages: draft.pages.clone(),
            issn: draft.issn.clone(),
            doi: draft.doi.clone(),
            pmid: draft.pmid.clone(),
            url: draft.url.clone(),
            source: draft.source.clone(),
            imported_at,
            imported_by: importer.to_string(),
            dedup_key: key,
            source_file: source_file.to_string(),
            screening_set: String::new(),
        });
    }

    report.imported_ref_ids = records.iter().map(|r| r.ref_id).collect();
    report.imported_count = records.len();
    report.duplicate_count = report.duplicates.len();
    report.rejected_count = report.rejected.len();
    project.append_references(records)?;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Csv,
    Ris,
}

impl FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(ExportFormat::Csv),
            "ris" => Ok(ExportFormat::Ris),
            other => Err(Error::Parameter(format!("unknown export format {other:?}"))),
        }
    }
}

/// Which records to export, by all-reviewer effective status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportScope {
    All,
    Status(EffectiveStatus),
}

impl FromStr for ExportScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim().eq_ignore_ascii_case("all") {
            return Ok(ExportScope::All);
        }
        s.parse::<EffectiveStatus>()
            .map(ExportScope::Status)
            .map_err(|_| Error::Parameter(format!("unknown export scope {s:?}")))
    }
}

pub const FINAL_DECISION_COLUMN: &str = "final_decision";

pub fn export_records(data: &ProjectData, format: ExportFormat, scope: ExportScope) -> Result<String> {
    let statuses = data.statuses(&StatusScope::AllReviewers);
    let selected = data.references().iter().filter_map(|r| {
        let status = statuses[&r.ref_id];
        match scope {
            ExportScope::All => Some((r, status)),
            ExportScope::Status(s) if s == status => Some((r, status)),
            ExportScope::Status(_) => None,
        }
    });
    match format {
        ExportFormat::Csv => {
            let mut writer = csv::WriterBuilder::new()
                .terminator(csv::Terminator::CRLF)
                .from_writer(Vec::new());
            let mut header: Vec<&str> = REFERENCE_COLUMNS.to_vec();
            header.push(FINAL_DECISION_COLUMN);
            writer.write_record(&header)?;
            for (record, status) in selected {
                let mut row = record.to_row().to_vec();
                row.push(status.to_string());
                writer.write_record(&row)?;
            }
            let bytes = writer
                .into_inner()
                .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
            String::from_utf8(bytes).map_err(|e| Error::Encoding(e.to_string()))
        }
        ExportFormat::Ris => {
            let mut out = String::new();
            for (record, _) in selected {
                ris::write_record(&mut out, record);
            }
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn year_extraction() {
        assert_eq!(first_year("2019 Mar 15"), Some(2019));
        assert_eq!(first_year("Spring 2001/2002"), Some(2001));
        assert_eq!(first_year("n.d."), None);
    }

    #[test]
    fn bom_is_tolerated_and_invalid_utf8_rejected() {
        let drafts = parse_records(b"\xEF\xBB\xBFTY  - JOUR\nTI  - X\nER  - \n", InputFormat::Ris).unwrap();
        assert_eq!(drafts[0].title, "X");
        assert!(matches!(
            parse_records(b"TI  - \xff\xfe\n", InputFormat::Ris),
            Err(Error::Encoding(_))
        ));
    }

    #[test]
    fn empty_input_names_format() {
        let err = parse_records(b"\n\n", InputFormat::Nbib).unwrap_err();
        assert!(err.to_string().contains("nbib"));
    }

    #[test]
    fn scopes_parse() {
        assert_eq!("all".parse::<ExportScope>().unwrap(), ExportScope::All);
        assert_eq!(
            "include".parse::<ExportScope>().unwrap(),
            ExportScope::Status(EffectiveStatus::Include)
        );
        assert!(matches!("sometimes".parse::<ExportScope>(), Err(Error::Parameter(_))));
    }
}
