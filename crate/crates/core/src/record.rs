//! Bibliographic records as parsed (`RecordDraft`) and as stored (`Record`).

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column order of the references table.
pub const REFERENCE_COLUMNS: [&str; 19] = [
    "ref_id",
    "title",
    "abstract",
    "year",
    "authors",
    "journal",
    "volume",
    "issue",
    "pages",
    "issn",
    "doi",
    "pmid",
    "url",
    "source",
    "imported_at",
    "imported_by",
    "dedup_key",
    "source_file",
    "screening_set",
];

/// Maximum number of names kept in the serialized author string.
pub const MAX_AUTHORS: usize = 10;
pub const ET_AL: &str = "et al.";

/// Project-local record identifier, rendered as a zero-padded integer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct RefId(pub u64);

impl fmt::Display for RefId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:06}", self.0)
    }
}

impl FromStr for RefId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
            return Err(Error::Validation(format!("invalid ref_id {s:?}")));
        }
        s.parse()
            .map(RefId)
            .map_err(|_| Error::Validation(format!("invalid ref_id {s:?}")))
    }
}

impl From<RefId> for String {
    fn from(id: RefId) -> Self {
        id.to_string()
    }
}

impl TryFrom<String> for RefId {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// A parsed bibliographic record before import.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordDraft {
    pub title: String,
    pub abstract_text: String,
    pub year: Option<i32>,
    pub authors: Vec<String>,
    pub journal: String,
    pub volume: String,
    pub issue: String,
    pub pages: String,
    pub issn: String,
    pub doi: Option<String>,
    pub pmid: Option<String>,
    pub url: String,
    pub source: String,
}

impl RecordDraft {
    /// Checks the import invariants: non-empty title, digit-only pmid.
    pub fn validate(&self) -> Result<()> {
        if self.title.trim().is_empty() {
            return Err(Error::Validation("record has an empty title".into()));
        }
        if let Some(pmid) = &self.pmid {
            if !is_valid_pmid(pmid) {
                return Err(Error::Validation(format!("pmid {pmid:?} is not numeric")));
            }
        }
        Ok(())
    }
}

pub(crate) fn is_valid_pmid(pmid: &str) -> bool {
    !pmid.is_empty() && pmid.bytes().all(|b| b.is_ascii_digit())
}

/// A stored row of the references table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub ref_id: RefId,
    pub title: String,
    pub abstract_text: String,
    pub year: Option<i32>,
    /// Semicolon-delimited, at most [`MAX_AUTHORS`] names then optionally `et al.`.
    pub authors: String,
    pub journal: String,
    pub volume: String,
    pub issue: String,
    pub pages: String,
    pub issn: String,
    pub doi: Option<String>,
    pub pmid: Option<String>,
    pub url: String,
    pub source: String,
    pub imported_at: DateTime<Utc>,
    pub imported_by: String,
    pub dedup_key: String,
    pub source_file: String,
    pub screening_set: String,
}

impl Record {
    /// Author names in order, with a trailing `et al.` marker kept as an entry.
    pub fn author_list(&self) -> Vec<String> {
        split_authors(&self.authors)
    }

    /// Converts back to a draft (authors as stored, i.e. possibly truncated).
    pub fn to_draft(&self) -> RecordDraft {
        RecordDraft {
            title: self.title.clone(),
            abstract_text: self.abstract_text.clone(),
            year: self.year,
            authors: self.author_list(),
            journal: self.journal.clone(),
            volume: self.volume.clone(),
            issue: self.issue.clone(),
            pages: self.pages.clone(),
            issn: self.issn.clone(),
            doi: self.doi.clone(),
            pmid: self.pmid.clone(),
            url: self.url.clone(),
            source: self.source.clone(),
        }
    }

    pub(crate) fn to_row(&self) -> [String; 19] {
        [
            self.ref_id.to_string(),
            self.title.clone(),
            self.abstract_text.clone(),
            self.year.map(|y| y.to_string()).unwrap_or_default(),
            self.authors.clone(),
            self.journal.clone(),
            self.volume.clone(),
            self.issue.clone(),
            self.pages.clone(),
            self.issn.clone(),
            self.doi.clone().unwrap_or_default(),
            self.pmid.clone().unwrap_or_default(),
            self.url.clone(),
            self.source.clone(),
            crate::store::format_timestamp(&self.imported_at),
            self.imported_by.clone(),
            self.dedup_key.clone(),
            self.source_file.clone(),
            self.screening_set.clone(),
        ]
    }

    pub(crate) fn from_row(row: &csv::StringRecord) -> Result<Self> {
        if row.len() != REFERENCE_COLUMNS.len() {
            return Err(Error::Corrupt {
                table: "references".into(),
                message: format!("expected 19 columns, found {}", row.len()),
            });
        }
        let opt = |i: usize| {
            let v = &row[i];
            (!v.is_empty()).then(|| v.to_string())
        };
        let year = match &row[3] {
            "" => None,
            y => Some(y.parse().map_err(|_| Error::Corrupt {
                table: "references".into(),
                message: format!("invalid year {y:?}"),
            })?),
        };
        Ok(Record {
            ref_id: row[0].parse()?,
            title: row[1].to_string(),
            abstract_text: row[2].to_string(),
            year,
            authors: row[4].to_string(),
            journal: row[5].to_string(),
            volume: row[6].to_string(),
            issue: row[7].to_string(),
            pages: row[8].to_string(),
            issn: row[9].to_string(),
            doi: opt(10),
            pmid: opt(11),
            url: row[12].to_string(),
            source: row[13].to_string(),
            imported_at: crate::store::parse_timestamp(&row[14])?,
            imported_by: row[15].to_string(),
            dedup_key: row[16].to_string(),
            source_file: row[17].to_string(),
            screening_set: row[18].to_string(),
        })
    }
}

/// Joins author names with `; `, keeping at most ten and appending `et al.`
/// when more were given. A trailing `et al.` entry in the input counts as the
/// marker, not as a name.
pub fn serialize_authors(authors: &[String]) -> String {
    let mut names: Vec<&str> = authors.iter().map(|a| a.trim()).filter(|a| !a.is_empty()).collect();
    let mut truncated = false;
    if names.last().is_some_and(|a| a.eq_ignore_ascii_case(ET_AL)) {
        names.pop();
        truncated = true;
    }
    if names.len() > MAX_AUTHORS {
        names.truncate(MAX_AUTHORS);
        truncated = true;
    }
    if truncated {
        names.push(ET_AL);
    }
    names.join("; ")
}

pub fn split_authors(serialized: &str) -> Vec<String> {
    serialized
        .split(';')
        .map(str::trim)
        .filter(|a| !a.is_empty())
        .map(str::to_string)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("Author {i}")).collect()
    }

    #[test]
    fn ref_id_is_zero_padded() {
        assert_eq!(RefId(7).to_string(), "000007");
        assert_eq!("000007".parse::<RefId>().unwrap(), RefId(7));
        assert!("abc".parse::<RefId>().is_err());
    }

    #[test]
    fn authors_truncate_to_ten() {
        let s = serialize_authors(&names(12));
        let parts = split_authors(&s);
        assert_eq!(parts.len(), 11);
        assert_eq!(parts.last().unwrap(), ET_AL);
        assert_eq!(serialize_authors(&names(10)).matches(';').count(), 9);
    }

    #[test]
    fn serialized_authors_are_stable() {
        for n in [0, 3, 10, 11, 25] {
            let once = serialize_authors(&names(n));
            let twice = serialize_authors(&split_authors(&once));
            assert_eq!(once, twice, "n = {n}");
        }
    }

    #[test]
    fn draft_validation() {
        let mut d = RecordDraft {
            title: "  ".into(),
            ..Default::default()
        };
        assert!(d.validate().is_err());
        d.title = "T".into();
        d.pmid = Some("12a".into());
        assert!(d.validate().is_err());
        d.pmid = Some("12".into());
        assert!(d.validate().is_ok());
    }
}
