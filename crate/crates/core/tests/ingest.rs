mod common;

use abscreen_core::ingest::{
    export_records, import_batch, make_dedup_key, normalize_title, parse_records, ExportFormat, ExportScope,
    InputFormat,
};
use abscreen_core::store::{Project, ProjectData};
use abscreen_core::{Error, Record, RecordDraft};
use proptest::prelude::*;

const RIS: &[u8] = include_bytes!("fixtures/sample50.ris");
const NBIB: &[u8] = include_bytes!("fixtures/sample.nbib");
const XML: &[u8] = include_bytes!("fixtures/sample.xml");

fn fresh() -> (tempfile::TempDir, Project) {
    let dir = tempfile::tempdir().unwrap();
    let project = Project::create(dir.path().join("p")).unwrap();
    (dir, project)
}

/// The bibliographic part of a record; bookkeeping columns are dropped.
fn canonical(r: &Record) -> (RecordDraft, String) {
    (r.to_draft(), r.dedup_key.clone())
}

#[test]
fn ris_fixture_parses_fully() {
    let drafts = parse_records(RIS, InputFormat::Ris).unwrap();
    assert_eq!(drafts.len(), 50);
    let first = &drafts[0];
    assert!(first.title.ends_with("(1)"));
    assert!(first
        .abstract_text
        .contains("we conducted a randomized controlled trial"));
    assert!(!first.abstract_text.contains('\n'));
    assert_eq!(first.authors.len(), 12);
    assert_eq!(first.year, Some(2005));
    assert_eq!(first.pages, "100-109");
    assert_eq!(first.pmid.as_deref(), Some("31000000"));
    assert_eq!(first.doi.as_deref(), Some("10.1000/JCR.2005.000"));
    assert_eq!(first.source, "MEDLINE");
    assert_eq!(drafts[2].pages, "114");
    assert!(drafts[3].doi.is_none() && drafts[3].pmid.is_none());
    assert!(drafts[13].abstract_text.is_empty());
}

#[test]
fn ris_to_csv_to_project_round_trip() {
    let (_a, mut first) = fresh();
    let report = import_batch(
        &parse_records(RIS, InputFormat::Ris).unwrap(),
        &mut first,
        "alice",
        "sample50.ris",
    )
    .unwrap();
    assert_eq!(
        (report.imported_count, report.duplicate_count, report.rejected_count),
        (50, 0, 0)
    );
    let stored = first.references()[0].clone();
    assert_eq!(stored.author_list().len(), 11);
    assert_eq!(stored.author_list().last().unwrap(), "et al.");

    let csv = export_records(&first, ExportFormat::Csv, ExportScope::All).unwrap();
    let (_b, mut second) = fresh();
    let drafts = parse_records(csv.as_bytes(), InputFormat::Csv).unwrap();
    import_batch(&drafts, &mut second, "bob", "export.csv").unwrap();
    let a: Vec<_> = first.references().iter().map(canonical).collect();
    let b: Vec<_> = second.references().iter().map(canonical).collect();
    assert_eq!(a, b);
    assert_eq!(
        first.references().iter().map(|r| r.ref_id).collect::<Vec<_>>(),
        second.references().iter().map(|r| r.ref_id).collect::<Vec<_>>()
    );

    let ris = export_records(&first, ExportFormat::Ris, ExportScope::All).unwrap();
    let (_c, mut third) = fresh();
    import_batch(
        &parse_records(ris.as_bytes(), InputFormat::Ris).unwrap(),
        &mut third,
        "carol",
        "export.ris",
    )
    .unwrap();
    let c: Vec<_> = third.references().iter().map(canonical).collect();
    assert_eq!(a, c);

    // the same file again adds nothing
    let again = import_batch(
        &parse_records(RIS, InputFormat::Ris).unwrap(),
        &mut first,
        "alice",
        "sample50.ris",
    )
    .unwrap();
    assert_eq!((again.imported_count, again.duplicate_count), (0, 50));
    assert_eq!(ProjectData::load(first.root()).unwrap().references().len(), 50);
}

#[test]
fn export_csv_carries_final_decision() {
    let (_d, mut project) = common::project_with(&[("a".into(), String::new()), ("b".into(), String::new())]);
    common::label(&mut project, abscreen_core::RefId(1), true);
    let csv = export_records(&project, ExportFormat::Csv, ExportScope::All).unwrap();
    let mut lines = csv.split("\r\n");
    assert!(lines.next().unwrap().ends_with(",final_decision"));
    assert!(lines.next().unwrap().ends_with(",include"));
    assert!(lines.next().unwrap().ends_with(",pending"));
    let only = export_records(&project, ExportFormat::Csv, "include".parse().unwrap()).unwrap();
    assert_eq!(only.split("\r\n").filter(|l| !l.is_empty()).count(), 2);
}

#[test]
fn nbib_fixture() {
    let drafts = parse_records(NBIB, InputFormat::Nbib).unwrap();
    assert_eq!(drafts.len(), 3);
    let d = &drafts[0];
    assert_eq!(d.pmid.as_deref(), Some("35000001"));
    assert_eq!(
        d.title,
        "Early mobilization in critically ill adults: a multicentre randomized controlled trial."
    );
    assert!(d.abstract_text.contains("We randomized 312 adults"));
    assert_eq!(d.authors, vec!["Okafor, Chidi", "Lindqvist, Åsa"]);
    assert_eq!(d.year, Some(2021));
    assert_eq!(
        (d.volume.as_str(), d.issue.as_str(), d.pages.as_str()),
        ("49", "6", "233-241")
    );
    assert_eq!(d.doi.as_deref(), Some("10.1097/CCM.0000000000004999"));
    assert_eq!(drafts[1].authors, vec!["Ruiz M", "Pérez J"]);
    assert_eq!(drafts[1].doi.as_deref(), Some("10.1016/j.anpedi.2019.01.002"));
    assert_eq!(drafts[2].year, Some(2018));
}

#[test]
fn pubmed_xml_fixture() {
    let drafts = parse_records(XML, InputFormat::PubmedXml).unwrap();
    assert_eq!(drafts.len(), 2);
    let d = &drafts[0];
    assert_eq!(d.pmid.as_deref(), Some("35000001"));
    assert_eq!(
        d.title,
        "Early mobilization in critically ill adults: a multicentre randomized controlled trial."
    );
    assert!(d.abstract_text.contains("Early mobilization may improve function."));
    assert!(d.abstract_text.contains("We randomized 312 adults"));
    assert_eq!(d.year, Some(2021));
    assert_eq!(d.doi.as_deref(), Some("10.1097/CCM.0000000000004999"));
    assert_eq!(d.authors.len(), 2);
    assert_eq!(drafts[1].year, Some(2017));
    assert_eq!(drafts[1].title, "Telemonitoring after discharge & readmission rates.");
    assert_eq!(drafts[1].authors, vec!["TELE-HF Investigators"]);
}

#[test]
fn cross_format_duplicates_match_on_pmid() {
    let (_d, mut project) = fresh();
    import_batch(
        &parse_records(NBIB, InputFormat::Nbib).unwrap(),
        &mut project,
        "a",
        "x.nbib",
    )
    .unwrap();
    let report = import_batch(
        &parse_records(XML, InputFormat::PubmedXml).unwrap(),
        &mut project,
        "a",
        "x.xml",
    )
    .unwrap();
    assert_eq!(report.imported_count, 1);
    assert_eq!(report.duplicates[0].dedup_key, "pmid:35000001");
}

#[test]
fn dedup_key_priority() {
    let base = |title: &str, pmid: Option<&str>, doi: Option<&str>| RecordDraft {
        title: title.into(),
        pmid: pmid.map(String::from),
        doi: doi.map(String::from),
        ..Default::default()
    };
    let drafts = vec![
        base("Alpha trial", Some("100"), Some("10.1/A")),
        // same pmid, different doi and title: duplicate of #0
        base("Beta", Some("100"), Some("10.1/B")),
        // same doi as #0 but no pmid: key is the doi, which #0 never claimed
        base("Gamma", None, Some("10.1/a")),
        // doi case differs from #2: duplicate
        base("Delta", None, Some("10.1/A")),
        // title keyed
        base("Effects of X [Article in French].", None, None),
        base("EFFECTS of x", None, None),
        // same title as #4 but carries a pmid: different key kind
        base("Effects of X", Some("200"), None),
        base("", Some("300"), None),
        base("Bad pmid", Some("PMC12"), None),
        base("!!!", None, None),
    ];
    let (_d, mut project) = fresh();
    let report = import_batch(&drafts, &mut project, "a", "mixed").unwrap();
    let dup: Vec<usize> = report.duplicates.iter().map(|d| d.draft_index).collect();
    assert_eq!(dup, vec![1, 3, 5]);
    let rejected: Vec<usize> = report.rejected.iter().map(|r| r.0).collect();
    assert_eq!(rejected, vec![7, 8, 9]);
    assert_eq!(report.imported_count, 4);
    assert_eq!(
        make_dedup_key(None, None, "!!!").unwrap_err().to_string(),
        Error::KeyDerivation.to_string()
    );
}

#[test]
fn malformed_inputs() {
    assert!(matches!(
        parse_records(b"", InputFormat::Ris),
        Err(Error::EmptyInput(_))
    ));
    assert!(parse_records(b"<PubmedArticleSet><PubmedArticle>", InputFormat::PubmedXml).is_err());
    assert!(matches!(
        parse_records(b"name,year\nx,2000\n", InputFormat::Csv),
        Err(Error::Schema(_))
    ));
}

proptest! {
    #[test]
    fn normalization_is_idempotent(title in "\\PC{0,60}") {
        let once = normalize_title(&title);
        prop_assert_eq!(normalize_title(&once), once.clone());
        prop_assert!(!once.starts_with(' ') && !once.ends_with(' ') && !once.contains("  "));
    }

    #[test]
    fn case_and_punctuation_do_not_split_keys(words in proptest::collection::vec("[a-z]{1,8}", 1..6)) {
        let plain = words.join(" ");
        let noisy = format!("  {}. ", words.iter().map(|w| w.to_uppercase()).collect::<Vec<_>>().join(" -- "));
        prop_assert_eq!(make_dedup_key(None, None, &plain).unwrap(), make_dedup_key(None, None, &noisy).unwrap());
    }
}
