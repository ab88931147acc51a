#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use abscreen_core::ingest::{import_batch, parse_records, InputFormat};
use abscreen_core::store::{Project, ProjectData};
use serde_json::json;

pub const REVIEWER: &str = "alice@example.org";

pub const CRITERIA: &str = "Population: adults with sepsis. Intervention: any drug. Design: randomized trial.";

const TOPICS: &[&str] = &[
    "Randomized trial of early antibiotics in sepsis",
    "Mouse model of kinase signalling in liver cells",
    "A randomised placebo-controlled study of statins after stroke",
    "Systematic review and meta-analysis of fluid resuscitation",
    "Cohort study of mortality in intensive care",
    "Protein expression profiling of tumour samples",
    "Double-blind trial of vitamin D in older adults",
    "Genome-wide association analysis of asthma risk",
];

/// CSV import file with `n` records; titles cycle through a few topics so
/// that keyword highlights and the ranker have something to work with.
pub fn records_csv(n: usize) -> String {
    let mut w = String::from("title,abstract,year,doi\n");
    for i in 0..n {
        let topic = TOPICS[i % TOPICS.len()];
        w.push_str(&format!(
            "\"{topic} ({i})\",\"We report outcomes for {i} participants. The trial was randomly allocated in part {i}.\",{},10.5555/rec.{i}\n",
            2000 + i % 20
        ));
    }
    w
}

/// A project in `dir/p` holding `n` records imported from [`records_csv`].
pub fn project(dir: &Path, n: usize) -> PathBuf {
    let root = dir.join("p");
    let mut project = Project::create(&root).unwrap();
    let drafts = parse_records(records_csv(n).as_bytes(), InputFormat::Csv).unwrap();
    import_batch(&drafts, &mut project, REVIEWER, "records.csv").unwrap();
    root
}

/// Deterministic probability for record `i` (1-based).
pub fn probability(i: u64) -> f64 {
    ((i * 37) % 100) as f64 / 100.0
}

/// Mock fixture scripting every record `1..=n`, with optional latency.
pub fn mock_fixture(path: &Path, n: u64, latency_ms: u64) -> PathBuf {
    let responses: serde_json::Map<String, serde_json::Value> = (1..=n)
        .map(|i| {
            (
                i.to_string(),
                json!({
                    "probability": probability(i),
                    "reasons": [format!("reason {i}")],
                    "evidence": [{"quote": "participants", "start": 0, "end": 0}],
                    "latency_ms": latency_ms,
                }),
            )
        })
        .collect();
    std::fs::write(
        path,
        serde_json::to_string_pretty(&json!({ "responses": responses })).unwrap(),
    )
    .unwrap();
    path.to_path_buf()
}

pub fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_abscreen"));
    cmd.env_remove("ABSCREEN_PROJECT")
        .env("ABSCREEN_REVIEWER", REVIEWER)
        .env("RUST_LOG", "error");
    cmd
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

/// Runs and asserts success; returns stdout.
pub fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed with {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

pub fn load(root: &Path) -> ProjectData {
    ProjectData::load(root).unwrap()
}

/// Decision rows without the store-assigned timestamp.
pub fn decision_rows(data: &ProjectData) -> Vec<Vec<String>> {
    data.decisions()
        .iter()
        .map(|d| {
            vec![
                d.decision_id.to_string(),
                d.ref_id.to_string(),
                d.reviewer_id.clone(),
                d.decision.to_string(),
                d.reason.clone(),
                d.labels.clone(),
                d.note.clone(),
                d.client_version.clone(),
                d.context_url.clone(),
            ]
        })
        .collect()
}

/// Execution rows without the timestamp.
pub fn execution_rows(data: &ProjectData) -> Vec<serde_json::Value> {
    data.executions()
        .iter()
        .map(|e| {
            let mut v = serde_json::to_value(e).unwrap();
            v.as_object_mut().unwrap().remove("timestamp");
            v
        })
        .collect()
}

pub fn config_rows(root: &Path) -> String {
    std::fs::read_to_string(root.join(abscreen_core::store::CONFIG_FILE)).unwrap()
}
