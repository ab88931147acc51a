//! PubMed XML (`PubmedArticleSet`) reader.

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use crate::error::{Error, Result};
use crate::record::{is_valid_pmid, RecordDraft};

use super::first_year;

#[derive(Default)]
struct Article {
    draft: RecordDraft,
    abstract_parts: Vec<String>,
    author_last: String,
    author_fore: String,
    author_initials: String,
    author_collective: String,
    medline_date: String,
    article_ids: Vec<(String, String)>,
    elocation_doi: Option<String>,
}

impl Article {
    fn finish_author(&mut self) {
        let name = if !self.author_collective.is_empty() {
            std::mem::take(&mut self.author_collective)
        } else {
            let given = if self.author_fore.is_empty() {
                &self.author_initials
            } else {
                &self.author_fore
            };
            match (self.author_last.is_empty(), given.is_empty()) {
                (true, _) => given.clone(),
                (false, true) => self.author_last.clone(),
                (false, false) => format!("{}, {}", self.author_last, given),
            }
        };
        self.author_last.clear();
        self.author_fore.clear();
        self.author_initials.clear();
        if !name.trim().is_empty() {
            self.draft.authors.push(name.trim().to_string());
        }
    }

    fn finish(mut self) -> RecordDraft {
        let d = &mut self.draft;
        d.abstract_text = self.abstract_parts.join(" ");
        if d.year.is_none() {
            d.year = first_year(&self.medline_date);
        }
        for (kind, value) in &self.article_ids {
            match kind.as_str() {
                "doi" if d.doi.is_none() => d.doi = Some(value.clone()),
                "pubmed" if d.pmid.is_none() && is_valid_pmid(value) => d.pmid = Some(value.clone()),
                _ => {}
            }
        }
        if d.doi.is_none() {
            d.doi = self.elocation_doi.take();
        }
        d.source = "PubMed".to_string();
        self.draft
    }
}

fn attr(e: &BytesStart<'_>, name: &[u8]) -> Option<String> {
    e.attributes()
        .flatten()
        .find(|a| a.key.as_ref() == name)
        .and_then(|a| a.unescape_value().ok().map(|v| v.into_owned()))
}

fn path_ends(stack: &[String], suffix: &[&str]) -> bool {
    stack.len() >= suffix.len()
        && stack[stack.len() - suffix.len()..]
            .iter()
            .zip(suffix)
            .all(|(a, b)| a == b)
}

fn within(stack: &[String], name: &str) -> bool {
    stack.iter().any(|s| s == name)
}

pub(crate) fn parse(text: &str) -> Result<Vec<RecordDraft>> {
    let mut reader = Reader::from_str(text);
    let mut stack: Vec<String> = Vec::new();
    let mut drafts = Vec::new();
    let mut article: Option<Article> = None;
    // Text accumulated for the element currently being captured.
    let mut capture: Option<(usize, String)> = None;
    let mut abstract_label: Option<String> = None;
    let mut article_id_type: Option<String> = None;
    let mut elocation_type: Option<String> = None;

    loop {
        let event = reader
            .read_event()
            .map_err(|e| Error::Parse(format!("XML error at byte {}: {e}", reader.error_position())))?;
        match event {
            Event::Start(e) => {
                let name = String::from_utf8_lossy(e.local_name().as_ref()).into_owned();
                stack.push(name.clone());
                match name.as_str() {
                    "PubmedArticle" => article = Some(Article::default()),
                    "AbstractText" => abstract_label = attr(&e, b"Label"),
                    "ArticleId" => article_id_type = attr(&e, b"IdType"),
                    "ELocationID" => elocation_type = attr(&e, b"EIdType"),
                    _ => {}
                }
                if article.is_some() && capture.is_none() && is_captured(&stack) {
                    capture = Some((stack.len(), String::new()));
                }
            }
            Event::Empty(_) => {}
            Event::Text(t) => {
                if let Some((_, buf)) = capture.as_mut() {
                    let s = t.unescape().map_err(|e| Error::Parse(format!("XML text: {e}")))?;
                    buf.push_str(&s);
                }
            }
            Event::CData(t) => {
                if let Some((_, buf)) = capture.as_mut() {
                    buf.push_str(&String::from_utf8_lossy(&t));
                }
            }
            Event::End(_) => {
                let depth = stack.len();
                if let (Some((cap_depth, _)), Some(a)) = (&capture, article.as_mut()) {
                    if *cap_depth == depth {
                        let (_, buf) = capture.take().unwrap_or_default();
                        let value = collapse_ws(&buf);
                        store_value(
                            a,
                            &stack,
                            value,
                            &mut abstract_label,
                            &mut article_id_type,
                            &mut elocation_type,
                        );
                    }
                }
                let name = stack.pop().unwrap_or_default();
                match name.as_str() {
                    "Author" if within(&stack, "AuthorList") => {
                        if let Some(a) = article.as_mut() {
                            a.finish_author();
                        }
                    }
                    "PubmedArticle" => {
                        if let Some(a) = article.take() {
                            drafts.push(a.finish());
                        }
                    }
                    _ => {}
                }
            }
            Event::Eof => break,
            _ => {}
        }
    }
    Ok(drafts)
}

fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn is_captured(stack: &[String]) -> bool {
    let in_refs = within(stack, "ReferenceList") || within(stack, "CommentsCorrectionsList");
    if in_refs {
        return false;
    }
    path_ends(stack, &["MedlineCitation", "PMID"])
        || path_ends(stack, &["ArticleTitle"])
        || path_ends(stack, &["Abstract", "AbstractText"])
        || path_ends(stack, &["PubDate", "Year"])
        || path_ends(stack, &["PubDate", "MedlineDate"])
        || path_ends(stack, &["Author", "LastName"])
        || path_ends(stack, &["Author", "ForeName"])
        || path_ends(stack, &["Author", "Initials"])
        || path_ends(stack, &["Author", "CollectiveName"])
        || path_ends(stack, &["Journal", "Title"])
        || path_ends(stack, &["JournalIssue", "Volume"])
        || path_ends(stack, &["JournalIssue", "Issue"])
        || path_ends(stack, &["Pagination", "MedlinePgn"])
        || path_ends(stack, &["Journal", "ISSN"])
        || path_ends(stack, &["PubmedData", "ArticleIdList", "ArticleId"])
        || path_ends(stack, &["Article", "ELocationID"])
}

fn store_value(
    a: &mut Article,
    stack: &[String],
    value: String,
    abstract_label: &mut Option<String>,
    article_id_type: &mut Option<String>,
    elocation_type: &mut Option<String>,
) {
    let d = &mut a.draft;
    let leaf = stack.last().map(String::as_str).unwrap_or_default();
    match leaf {
        "PMID" => {
            if d.pmid.is_none() && is_valid_pmid(&value) {
                d.pmid = Some(value);
            }
        }
        "ArticleTitle" => d.title = value,
        "AbstractText" => {
            let part = match abstract_label.take() {
                Some(label) if !label.is_empty() => format!("{label}: {value}"),
                _ => value,
            };
            if !part.is_empty() {
                a.abstract_parts.push(part);
            }
        }
        "Year" => d.year = value.parse().ok(),
        "MedlineDate" => a.medline_date = value,
        "LastName" => a.author_last = value,
        "ForeName" => a.author_fore = value,
        "Initials" => a.author_initials = value,
        "CollectiveName" => a.author_collective = value,
        "Title" => d.journal = value,
        "Volume" => d.volume = value,
        "Issue" => d.issue = value,
        "MedlinePgn" => d.pages = value,
        "ISSN" => {
            if d.issn.is_empty() {
                d.issn = value;
            }
        }
        "ArticleId" => {
            if let Some(kind) = article_id_type.take() {
                a.article_ids.push((kind, value));
            }
        }
        "ELocationID" => {
            let is_doi = elocation_type.take().as_deref() == Some("doi");
            if is_doi && a.elocation_doi.is_none() {
                a.elocation_doi = Some(value);
            }
        }
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"<?xml version="1.0" ?>
<!DOCTYPE PubmedArticleSet PUBLIC "-//NLM//DTD PubMedArticle, 1st January 2019//EN" "https://dtd.nlm.nih.gov/ncbi/pubmed/out/pubmed_190101.dtd">
<PubmedArticleSet>
<PubmedArticle>
  <MedlineCitation Status="MEDLINE" Owner="NLM">
    <PMID Version="1">30000001</PMID>
    <Article PubModel="Print">
      <Journal>
        <ISSN IssnType="Print">0090-3493</ISSN>
        <JournalIssue CitedMedium="Internet">
          <Volume>46</Volume>
          <Issue>9</Issue>
          <PubDate><Year>2018</Year><Month>Sep</Month></PubDate>
        </JournalIssue>
        <Title>Critical care medicine</Title>
      </Journal>
      <ArticleTitle>Fluid therapy in <i>septic</i> shock &amp; outcomes.</ArticleTitle>
      <Pagination><MedlinePgn>1411-1420</MedlinePgn></Pagination>
      <ELocationID EIdType="doi" ValidYN="Y">10.1097/ccm.0000000000003262</ELocationID>
      <Abstract>
        <AbstractText Label="OBJECTIVE" NlmCategory="OBJECTIVE">To assess fluids.</AbstractText>
        <AbstractText Label="RESULTS">Fewer deaths.</AbstractText>
      </Abstract>
      <AuthorList CompleteYN="Y">
        <Author ValidYN="Y"><LastName>Smith</LastName><ForeName>John</ForeName><Initials>J</Initials></Author>
        <Author ValidYN="Y"><LastName>Doe</LastName><Initials>A</Initials></Author>
        <Author ValidYN="Y"><CollectiveName>Sepsis Trial Group</CollectiveName></Author>
      </AuthorList>
    </Article>
    <CommentsCorrectionsList>
      <CommentsCorrections RefType="CommentIn"><PMID Version="1">29999999</PMID></CommentsCorrections>
    </CommentsCorrectionsList>
  </MedlineCitation>
  <PubmedData>
    <ArticleIdList>
      <ArticleId IdType="pubmed">30000001</ArticleId>
      <ArticleId IdType="doi">10.1097/CCM.0000000000003262</ArticleId>
    </ArticleIdList>
    <ReferenceList><Reference><ArticleIdList><ArticleId IdType="doi">10.9/other</ArticleId></ArticleIdList></Reference></ReferenceList>
  </PubmedData>
</PubmedArticle>
<PubmedArticle>
  <MedlineCitation><PMID>30000002</PMID><Article><Journal><JournalIssue><PubDate><MedlineDate>2017 Dec-2018 Jan</MedlineDate></PubDate></JournalIssue></Journal><ArticleTitle>Second</ArticleTitle></Article></MedlineCitation>
</PubmedArticle>
</PubmedArticleSet>"#;

    #[test]
    fn parses_sample() {
        let drafts = parse(SAMPLE).unwrap();
        assert_eq!(drafts.len(), 2);
        let d = &drafts[0];
        assert_eq!(d.pmid.as_deref(), Some("30000001"));
        assert_eq!(d.title, "Fluid therapy in septic shock & outcomes.");
        assert_eq!(d.abstract_text, "OBJECTIVE: To assess fluids. RESULTS: Fewer deaths.");
        assert_eq!(d.year, Some(2018));
        assert_eq!(d.authors, vec!["Smith, John", "Doe, A", "Sepsis Trial Group"]);
        assert_eq!(d.journal, "Critical care medicine");
        assert_eq!(d.volume, "46");
        assert_eq!(d.issue, "9");
        assert_eq!(d.pages, "1411-1420");
        assert_eq!(d.issn, "0090-3493");
        assert_eq!(d.doi.as_deref(), Some("10.1097/CCM.0000000000003262"));
        assert_eq!(drafts[1].year, Some(2017));
        assert!(drafts[1].abstract_text.is_empty());
    }

    #[test]
    fn malformed_xml_is_a_parse_error() {
        assert!(parse("<PubmedArticleSet><PubmedArticle></Foo>").is_err());
    }
}
