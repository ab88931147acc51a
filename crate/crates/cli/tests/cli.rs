mod common;

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::Path;
use std::process::Stdio;
use std::sync::Arc;
use std::time::{Duration, Instant};

use abscreen_cli::server::{router, AppState, ServiceConfig};
use abscreen_core::eval::{project_metrics, read_truth_csv};
use abscreen_core::llm::{threshold_preview, BatchOptions, MockProvider, SystemClock};
use abscreen_core::store::{ExecutionId, Project};
use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use common::*;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn p(root: &Path) -> String {
    root.display().to_string()
}

fn screen(root: &Path, mock: &Path, extra: &[&str]) -> std::process::Output {
    let provider = format!("mock:{}", mock.display());
    let mut args = vec![
        "--project",
        &p(root),
        "screen-llm",
        "--provider",
        &provider,
        "--rpm",
        "10000",
        "--concurrency",
        "1",
    ]
    .into_iter()
    .map(String::from)
    .collect::<Vec<_>>();
    args.extend(extra.iter().map(|s| s.to_string()));
    bin().args(&args).output().unwrap()
}

fn labeled_dataset(dir: &Path, n: usize) -> std::path::PathBuf {
    let mut text = String::from("ref_id,title,abstract,label\n");
    for i in 0..n {
        let relevant = i % 5 == 0;
        let topic = if relevant {
            "randomized trial of sepsis antibiotics"
        } else {
            "mouse kinase liver signalling"
        };
        text.push_str(&format!(
            "R{i:03},{topic} {i},abstract about {topic} number {i},{}\n",
            u8::from(relevant)
        ));
    }
    let path = dir.join("dataset.csv");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn init_import_decide_rank_and_stopping() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("proj");
    assert!(ok(&["init", &p(&root)]).contains("created project"));
    let file = dir.path().join("records.csv");
    std::fs::write(&file, records_csv(30)).unwrap();
    let out = ok(&["import", &p(&root), &p(&file)]);
    assert!(out.contains("imported 30, duplicates 0, rejected 0"), "{out}");
    let again = ok(&["--project", &p(&root), "import", &p(&file)]);
    assert!(again.contains("imported 0, duplicates 30"), "{again}");

    let cold = run(&["--project", &p(&root), "rank"]);
    assert!(cold.status.success());
    assert!(String::from_utf8_lossy(&cold.stderr).contains("cold start"));
    let lines: Vec<String> = String::from_utf8(cold.stdout)
        .unwrap()
        .lines()
        .map(String::from)
        .collect();
    assert_eq!(lines[0], "ref_id,score,rank");
    assert_eq!(lines[1], "000001,,1");
    assert_eq!(lines.len(), 31);

    assert_eq!(
        ok(&["--project", &p(&root), "decide", "1", "include"]),
        "decision 00000001: 000001 include\n"
    );
    ok(&[
        "--project",
        &p(&root),
        "decide",
        "000002",
        "exclude",
        "--reason",
        "animal study",
    ]);
    let ranked = ok(&["--project", &p(&root), "rank"]);
    let rows: Vec<Vec<&str>> = ranked.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 28);
    let scores: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));
    assert!(rows.iter().all(|r| r[0] != "000001" && r[0] != "000002"));

    let data = load(&root);
    assert_eq!(data.decisions().len(), 2);
    assert_eq!(data.decisions()[1].reason, "animal study");
    assert_eq!(data.decisions()[1].reviewer_id, REVIEWER);

    let stop: Value = serde_json::from_str(&ok(&["--project", &p(&root), "--json", "stopping"])).unwrap();
    assert_eq!(stop["screened"], 2);
    assert_eq!(stop["relevant_found"], 1);
    assert_eq!(stop["stop"], false);

    let csv = ok(&["--project", &p(&root), "export", "--scope", "include"]);
    assert_eq!(csv.lines().count(), 2);
    let ris_path = dir.path().join("out.ris");
    ok(&[
        "--project",
        &p(&root),
        "export",
        "--format",
        "ris",
        "--out",
        &p(&ris_path),
    ]);
    assert_eq!(std::fs::read_to_string(ris_path).unwrap().matches("ER  -").count(), 30);
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let root = project(dir.path(), 3);
    for args in [
        vec!["frobnicate"],
        vec!["--project", &p(&root), "rank", "--bogus"],
        vec!["--project", &p(&root), "decide", "1"],
        vec!["--project", &p(&root), "threshold", "--execution", "exec-0001"],
        vec!["decide", "1", "include"],
        vec![
            "--project",
            &p(&root),
            "screen-llm",
            "--provider",
            "mock:x.json",
            "--rpm",
            "0",
        ],
        vec!["--project", &p(&root), "import", "notes.docx"],
    ] {
        let out = run(&args);
        assert_eq!(
            out.status.code(),
            Some(2),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    assert!(load(&root).decisions().is_empty());
}

#[test]
fn runtime_errors_exit_one_with_code() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent");
    let out = run(&["--project", &p(&missing), "rank"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error["));

    let root = project(dir.path(), 3);
    for args in [
        vec!["decide", "9", "include"],
        vec!["decide", "1", "perhaps"],
        vec!["config", "set", "llm.top_p", "2"],
        vec!["threshold", "--execution", "E0007", "--t", "0.5", "--preview"],
        vec!["--reviewer", "llm:exec-0001", "decide", "1", "include"],
        vec!["import", "missing.csv"],
    ] {
        let mut full = vec!["--project", root.to_str().unwrap()];
        full.extend(args.iter());
        let out = run(&full);
        assert_eq!(out.status.code(), Some(1), "{full:?}");
    }
    assert!(load(&root).decisions().is_empty());
    assert_eq!(run(&["init", &p(&root)]).status.code(), Some(1));
}

#[test]
fn threshold_preview_matches_core() {
    let dir = tempfile::tempdir().unwrap();
    let root = project(dir.path(), 15);
    let mock = mock_fixture(&dir.path().join("mock.json"), 15, 0);
    let criteria = dir.path().join("criteria.txt");
    std::fs::write(&criteria, CRITERIA).unwrap();
    let out = screen(&root, &mock, &["--prompt-file", &p(&criteria)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("judged 15, failed 0, skipped 0, requests 15"), "{text}");

    let exec: ExecutionId = "exec-0001".parse().unwrap();
    for t in ["0", "0.25", "0.5", "0.74", "1"] {
        let cli: Value = serde_json::from_str(&ok(&[
            "--project",
            &p(&root),
            "--json",
            "threshold",
            "--execution",
            "exec-0001",
            "--t",
            t,
            "--preview",
        ]))
        .unwrap();
        let core = threshold_preview(&load(&root), &exec, t.parse().unwrap()).unwrap();
        assert_eq!(cli, serde_json::to_value(&core).unwrap(), "t={t}");
    }
    let before = execution_rows(&load(&root));
    ok(&[
        "--project",
        &p(&root),
        "threshold",
        "--execution",
        "exec-0001",
        "--t",
        "0.4",
        "--preview",
    ]);
    assert_eq!(execution_rows(&load(&root)), before);

    let confirmed = ok(&[
        "--project",
        &p(&root),
        "threshold",
        "--execution",
        "exec-0001",
        "--t",
        "0.4",
    ]);
    let expected = (1..=15).filter(|i| probability(*i) >= 0.4).count();
    assert!(
        confirmed.contains(&format!("include {expected}, exclude {}", 15 - expected)),
        "{confirmed}"
    );
    let data = load(&root);
    assert!(data.active_execution().is_some());
}

#[test]
fn metrics_text_matches_core() {
    let dir = tempfile::tempdir().unwrap();
    let root = project(dir.path(), 8);
    for (i, d) in [
        (1, "include"),
        (2, "exclude"),
        (3, "maybe"),
        (4, "exclude"),
        (5, "include"),
    ] {
        ok(&["--project", &p(&root), "decide", &i.to_string(), d]);
    }
    let truth_text = "ref_id,label\n000001,1\n000002,1\n000003,0\n000004,0\n000005,1\n000006,1\n";
    let truth = dir.path().join("truth.csv");
    std::fs::write(&truth, truth_text).unwrap();
    let expected = project_metrics(&load(&root), &read_truth_csv(truth_text).unwrap(), 7.0).unwrap();
    assert_eq!(
        ok(&["--project", &p(&root), "eval", "metrics", "--truth", &p(&truth)]),
        expected.to_text()
    );
    assert_eq!(
        ok(&[
            "--project",
            &p(&root),
            "eval",
            "metrics",
            "--truth",
            &p(&truth),
            "--csv"
        ]),
        expected.to_csv()
    );
    let json: Value = serde_json::from_str(&ok(&[
        "--project",
        &p(&root),
        "--json",
        "eval",
        "metrics",
        "--truth",
        &p(&truth),
    ]))
    .unwrap();
    assert_eq!(json, serde_json::to_value(&expected).unwrap());
}

async fn api(app: &axum::Router, method: &str, uri: &str, body: Value) -> Value {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v: Value = serde_json::from_slice(&bytes).unwrap();
    assert!(status.is_success(), "{method} {uri}: {status} {v}");
    v
}

#[test]
fn cli_and_api_write_identical_rows() {
    let dir = tempfile::tempdir().unwrap();
    let via_cli = project(&dir.path().join("a"), 12);
    let via_api = project(&dir.path().join("b"), 12);
    let mock = mock_fixture(&dir.path().join("mock.json"), 12, 0);
    let criteria = dir.path().join("criteria.txt");
    std::fs::write(&criteria, CRITERIA).unwrap();

    let steps: [(u64, &str, &str); 4] = [
        (1, "include", "on topic"),
        (2, "exclude", "animals"),
        (3, "maybe", ""),
        (1, "exclude", "second look"),
    ];
    for (ref_id, decision, reason) in steps {
        ok(&[
            "--project",
            &p(&via_cli),
            "decide",
            &ref_id.to_string(),
            decision,
            "--reason",
            reason,
        ]);
    }
    ok(&["--project", &p(&via_cli), "config", "set", "stop.rule", "consecutive"]);
    ok(&["--project", &p(&via_cli), "config", "set", "llm.temperature", "0.2"]);
    let out = screen(
        &via_cli,
        &mock,
        &[
            "--prompt-file",
            &p(&criteria),
            "--threshold",
            "0.6",
            "--scope",
            "pending",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    ok(&[
        "--project",
        &p(&via_cli),
        "threshold",
        "--execution",
        "exec-0001",
        "--t",
        "0.35",
    ]);

    let mut config = ServiceConfig::new(REVIEWER);
    config.provider = Some(Arc::new(MockProvider::from_file(&mock).unwrap()));
    config.options = BatchOptions {
        concurrency: 1,
        ..BatchOptions::new(10_000, Arc::new(SystemClock::default()))
    };
    let app = router(AppState::new(Project::open(&via_api).unwrap(), config));
    let rt = tokio::runtime::Runtime::new().unwrap();
    rt.block_on(async {
        for (ref_id, decision, reason) in steps {
            api(
                &app,
                "POST",
                "/decisions",
                json!({"ref_id": ref_id, "decision": decision, "reason": reason}),
            )
            .await;
        }
        api(&app, "PUT", "/config/stop.rule", json!({"value": "consecutive"})).await;
        api(&app, "PUT", "/config/llm.temperature", json!({"value": "0.2"})).await;
        let job = api(
            &app,
            "POST",
            "/llm/batch",
            json!({"criteria": CRITERIA, "threshold": 0.6, "scope": "pending"}),
        )
        .await;
        let uri = format!("/llm/jobs/{}", job["job_id"]);
        let deadline = Instant::now() + Duration::from_secs(30);
        loop {
            let req = Request::builder().uri(&uri).body(Body::empty()).unwrap();
            let resp = app.clone().oneshot(req).await.unwrap();
            assert_eq!(resp.status(), StatusCode::OK);
            let v: Value = serde_json::from_slice(&resp.into_body().collect().await.unwrap().to_bytes()).unwrap();
            if v["state"] != "running" {
                assert_eq!(v["state"], "completed", "{v}");
                break;
            }
            assert!(Instant::now() < deadline);
            tokio::time::sleep(Duration::from_millis(20)).await;
        }
        api(
            &app,
            "POST",
            "/llm/confirm",
            json!({"execution": "exec-0001", "t": 0.35}),
        )
        .await;
    });
    drop(app);

    let (a, b) = (load(&via_cli), load(&via_api));
    assert_eq!(decision_rows(&a), decision_rows(&b));
    // Four human rows, nine judgments, nine confirmation rows.
    assert_eq!(a.decisions().len(), 4 + 9 + 9);
    assert_eq!(execution_rows(&a), execution_rows(&b));
    assert_eq!(config_rows(&via_cli), config_rows(&via_api));
}

fn llm_judgments_per_ref(root: &Path) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for d in load(root).decisions().iter().filter(|d| d.is_llm()) {
        *counts.entry(d.ref_id.to_string()).or_insert(0) += 1;
    }
    counts
}

fn interrupted_then_resumed(signal: Option<&str>) {
    let n = 20;
    let dir = tempfile::tempdir().unwrap();
    let root = project(dir.path(), n);
    let mock = mock_fixture(&dir.path().join("mock.json"), n as u64, 80);
    let criteria = dir.path().join("criteria.txt");
    std::fs::write(&criteria, CRITERIA).unwrap();
    let provider = format!("mock:{}", mock.display());
    let mut child = bin()
        .args([
            "--project",
            &p(&root),
            "screen-llm",
            "--provider",
            &provider,
            "--rpm",
            "10000",
            "--concurrency",
            "1",
        ])
        .args(["--prompt-file", &p(&criteria)])
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let deadline = Instant::now() + Duration::from_secs(30);
    while llm_judgments_per_ref(&root).len() < 4 {
        assert!(Instant::now() < deadline, "no progress");
        std::thread::sleep(Duration::from_millis(20));
    }
    match signal {
        Some(sig) => {
            let status = std::process::Command::new("kill")
                .args([sig, &child.id().to_string()])
                .status()
                .unwrap();
            assert!(status.success());
            let status = child.wait().unwrap();
            assert_eq!(status.code(), Some(1));
            let mut stderr = String::new();
            child.stderr.take().unwrap().read_to_string(&mut stderr).unwrap();
            assert!(stderr.contains("--resume exec-0001"), "{stderr}");
        }
        None => {
            child.kill().unwrap();
            child.wait().unwrap();
        }
    }
    let partial = llm_judgments_per_ref(&root);
    assert!(partial.len() < n, "batch finished before the interrupt");
    assert!(partial.values().all(|c| *c == 1));

    let out = screen(&root, &mock, &["--resume", "exec-0001"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains(&format!("skipped {}", partial.len())), "{text}");
    let done = llm_judgments_per_ref(&root);
    assert_eq!(done.len(), n);
    assert!(done.values().all(|c| *c == 1), "{done:?}");
    let data = load(&root);
    let exec = &data.executions()[0];
    assert_eq!(exec.included_count + exec.excluded_count, n as u64);
}

#[test]
fn killed_batch_resumes_without_repeats() {
    interrupted_then_resumed(None);
}

#[test]
fn interrupted_batch_prints_resume_hint() {
    interrupted_then_resumed(Some("-INT"));
}

#[test]
fn running_service_holds_the_lock() {
    let dir = tempfile::tempdir().unwrap();
    let root = project(dir.path(), 4);
    let mut server = bin()
        .args(["--project", &p(&root), "serve", "--port", "0"])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(server.stdout.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    let addr = line
        .trim()
        .strip_prefix("listening on http://")
        .unwrap_or_else(|| panic!("{line}"))
        .to_string();

    let out = run(&["--project", &p(&root), "decide", "1", "include"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error[locked]"));

    let body = r#"{"ref_id":1,"decision":"include"}"#;
    let mut stream = TcpStream::connect(&addr).unwrap();
    write!(
        stream,
        "POST /decisions HTTP/1.1\r\nHost: {addr}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )
    .unwrap();
    let mut response = String::new();
    stream.read_to_string(&mut response).unwrap();
    assert!(response.starts_with("HTTP/1.1 201"), "{response}");

    // Reads need no lock.
    assert!(ok(&["--project", &p(&root), "config", "get", "llm.threshold"]).starts_with("0.5"));
    server.kill().unwrap();
    server.wait().unwrap();
    assert_eq!(load(&root).decisions().len(), 1);
    ok(&["--project", &p(&root), "decide", "2", "exclude"]);
}

#[test]
fn fold_experiment_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = labeled_dataset(dir.path(), 60);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&[
        "eval",
        "folds",
        "--dataset",
        &p(&dataset),
        "--k",
        "3",
        "--seed",
        "7",
        "--out",
        &p(&a),
    ]);
    ok(&[
        "eval",
        "folds",
        "--dataset",
        &p(&dataset),
        "--k",
        "3",
        "--seed",
        "7",
        "--out",
        &p(&b),
    ]);
    let mut names: Vec<String> = std::fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["fold_00.csv", "fold_01.csv", "fold_02.csv", "folds.csv"]);
    for name in &names {
        assert_eq!(
            std::fs::read(a.join(name)).unwrap(),
            std::fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }

    let overlap = ok(&["eval", "overlap", "--ours", &p(&a), "--reference", &p(&b), "--k", "10"]);
    let lines: Vec<&str> = overlap.lines().collect();
    assert_eq!(lines, ["fold,k,overlap", "0,10,1.0000", "1,10,1.0000", "2,10,1.0000"]);

    let c = dir.path().join("c");
    ok(&[
        "eval",
        "folds",
        "--dataset",
        &p(&dataset),
        "--k",
        "3",
        "--seed",
        "8",
        "--out",
        &p(&c),
    ]);
    assert_ne!(
        std::fs::read(a.join("folds.csv")).unwrap(),
        std::fs::read(c.join("folds.csv")).unwrap()
    );
}

#[test]
fn simulation_and_assignment() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = labeled_dataset(dir.path(), 80);
    let sim: Value = serde_json::from_str(&ok(&[
        "--json",
        "eval",
        "simulate",
        "--dataset",
        &p(&dataset),
        "--rule",
        "consecutive",
        "--n-consecutive",
        "10",
    ]))
    .unwrap();
    assert_eq!(sim["total_records"], 80);
    assert_eq!(sim["total_relevant"], 16);
    assert!(sim["screened"].as_u64().unwrap() <= 80);
    assert!(sim["relevant_found"].as_u64().unwrap() <= 16);

    let root = project(dir.path(), 20);
    let counts: BTreeMap<String, usize> = serde_json::from_str(&ok(&[
        "--project",
        &p(&root),
        "--json",
        "assign",
        "--calibration-size",
        "6",
        "--groups",
        "2",
    ]))
    .unwrap();
    assert_eq!(counts.values().sum::<usize>(), 20);
    assert_eq!(counts.len(), 3, "{counts:?}");
    assert!(counts.values().any(|c| *c == 6));
    assert_eq!(
        ok(&["--project", &p(&root), "config", "get", "assign.group_count"]).trim(),
        "2"
    );
}

#[test]
fn config_list_and_keys() {
    let dir = tempfile::tempdir().unwrap();
    let root = project(dir.path(), 1);
    let list: BTreeMap<String, String> =
        serde_json::from_str(&ok(&["--project", &p(&root), "--json", "config", "list"])).unwrap();
    assert_eq!(list["stop.rule"], "consecutive");
    ok(&[
        "--project",
        &p(&root),
        "config",
        "set",
        "keywords.custom_include",
        "sepsis, trial",
    ]);
    assert_eq!(
        ok(&["--project", &p(&root), "config", "get", "keywords.custom_include"]),
        "sepsis, trial\n"
    );

    let keys = dir.path().join("keys");
    let key = |args: &[&str], stdin: &str| {
        let mut child = bin()
            .env("ABSCREEN_KEYSTORE", &keys)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .unwrap();
        child.stdin.take().unwrap().write_all(stdin.as_bytes()).unwrap();
        let out = child.wait_with_output().unwrap();
        assert!(out.status.success(), "{args:?}");
        String::from_utf8(out.stdout).unwrap()
    };
    key(&["key", "set", "gemini"], "secret-value\n");
    assert_eq!(key(&["key", "list"], ""), "gemini\n");
    for entry in std::fs::read_dir(&keys).unwrap() {
        let bytes = std::fs::read(entry.unwrap().path()).unwrap();
        assert!(!String::from_utf8_lossy(&bytes).contains("secret-value"));
    }
    assert_eq!(key(&["key", "remove", "gemini"], ""), "removed key gemini\n");
    assert_eq!(key(&["key", "list"], ""), "");
}
