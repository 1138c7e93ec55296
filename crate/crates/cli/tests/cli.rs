use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

fn synthetic(file: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/synthetic").join(file)
}

fn screenprio(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_screenprio"))
        .args(args)
        .env_remove("SCREENPRIO_EFETCH_URL")
        .env_remove("SCREENPRIO_BATCH_SIZE")
        .env_remove("NCBI_API_KEY")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn dataset_args<'a>(topics: &'a Path, qrels: &'a Path) -> [&'a str; 4] {
    ["--topics", s(topics), "--qrels", s(qrels)]
}

#[test]
fn missing_qrels_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let absent = dir.path().join("nope.qrels");
    let out = screenprio(&[
        "ingest",
        "--topics",
        s(&synthetic("topics.txt")),
        "--qrels",
        s(&absent),
        "--corpus",
        s(&synthetic("corpus.jsonl")),
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("qrels"));
}

#[test]
fn unknown_model_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = screenprio(&[
        "rank",
        "--model",
        "tfidf",
        "--topics",
        s(&synthetic("topics.txt")),
        "--corpus",
        s(&synthetic("corpus.jsonl")),
        "--out",
        s(&dir.path().join("x.run")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_lambda_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = screenprio(&[
        "rank",
        "--model",
        "qlm",
        "--lambda",
        "1.0",
        "--topics",
        s(&synthetic("topics.txt")),
        "--corpus",
        s(&synthetic("corpus.jsonl")),
        "--out",
        s(&dir.path().join("x.run")),
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn malformed_run_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("bad.run");
    fs::write(&run, "CD900001 NF 1 one 0.5 x\n").unwrap();
    let (t, q) = (synthetic("topics.txt"), synthetic("qrels.txt"));
    let mut args = vec!["evaluate", "--run", s(&run)];
    args.extend(dataset_args(&t, &q));
    let out = screenprio(&args);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("line 1"), "{}", stderr(&out));
}

#[test]
fn ingest_reports_missing_documents_without_failing() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = fs::read_to_string(synthetic("corpus.jsonl")).unwrap();
    let topics = fs::read_to_string(synthetic("topics.txt")).unwrap();
    let dropped: Vec<String> = topics
        .lines()
        .skip_while(|l| !l.starts_with("Pids"))
        .skip(1)
        .map(|l| l.trim().to_owned())
        .filter(|l| !l.is_empty())
        .take(3)
        .collect();
    assert_eq!(dropped.len(), 3);
    let kept: String = corpus
        .lines()
        .filter(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            let pmid = v["pmid"].as_str().map(str::to_owned).unwrap_or_else(|| v["pmid"].to_string());
            !dropped.contains(&pmid)
        })
        .map(|l| format!("{l}\n"))
        .collect();
    let trimmed = dir.path().join("corpus.jsonl");
    fs::write(&trimmed, kept).unwrap();

    let out = screenprio(&[
        "ingest",
        "--topics",
        s(&synthetic("topics.txt")),
        "--qrels",
        s(&synthetic("qrels.txt")),
        "--corpus",
        s(&trimmed),
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("ingest_report.json")).unwrap()).unwrap();
    let mut missing: Vec<String> = report["dataset"]["topics"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|t| t["missing_documents"].as_array().unwrap().clone())
        .map(|v| v.as_str().unwrap().to_owned())
        .collect();
    missing.sort();
    let mut expected = dropped.clone();
    expected.sort();
    assert_eq!(missing, expected);
    assert!(String::from_utf8_lossy(&out.stdout).contains("missing documents: 3"));
}

fn rank_synthetic(dir: &Path, model: &str, repr: &str) -> PathBuf {
    let run = dir.join(format!("{model}-{repr}.run"));
    let out = screenprio(&[
        "rank",
        "--model",
        model,
        "--repr",
        repr,
        "--topics",
        s(&synthetic("topics.txt")),
        "--corpus",
        s(&synthetic("corpus.jsonl")),
        "--out",
        s(&run),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    run
}

#[test]
fn strict_evaluation_lists_gaps() {
    let dir = tempfile::tempdir().unwrap();
    let run = rank_synthetic(dir.path(), "bm25", "tiab");
    let text = fs::read_to_string(&run).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    let removed = lines.remove(3);
    let removed_pmid = removed.split_whitespace().nth(2).unwrap().to_owned();
    let mut edited = lines.join("\n");
    edited.push_str("\nCD900002 NF 99999999 999 -50.000000 bm25-tiab\n");
    let broken = dir.path().join("broken.run");
    fs::write(&broken, edited).unwrap();

    let (t, q) = (synthetic("topics.txt"), synthetic("qrels.txt"));
    let mut args = vec!["evaluate", "--run", s(&broken), "--strict"];
    args.extend(dataset_args(&t, &q));
    let out = screenprio(&args);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains(&removed_pmid), "{err}");
    assert!(err.contains("99999999"), "{err}");

    let mut args = vec!["evaluate", "--run", s(&broken)];
    args.extend(dataset_args(&t, &q));
    assert_eq!(screenprio(&args).status.code(), Some(0));

    let mut args = vec!["validate", "--run", s(&broken)];
    args.extend(dataset_args(&t, &q));
    let out = screenprio(&args);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("missing candidates (1)") && text.contains("foreign documents (1)"), "{text}");
}

#[test]
fn evaluate_writes_json_lines() {
    let dir = tempfile::tempdir().unwrap();
    let run = rank_synthetic(dir.path(), "qlm", "title");
    let report = dir.path().join("report.jsonl");
    let (t, q) = (synthetic("topics.txt"), synthetic("qrels.txt"));
    let mut args = vec!["evaluate", "--run", s(&run), "--out", s(&report)];
    args.extend(dataset_args(&t, &q));
    assert_eq!(screenprio(&args).status.code(), Some(0));
    let text = fs::read_to_string(&report).unwrap();
    let records: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records.len(), 6);
    assert_eq!(records[5]["topic"], "all");
    assert_eq!(records[0]["run"], "qlm-title");
    assert!(records[0]["ap"].as_f64().unwrap() > 0.0);
}

#[test]
fn compare_and_gainloss_from_cli() {
    let dir = tempfile::tempdir().unwrap();
    let a = rank_synthetic(dir.path(), "bm25", "title");
    let b = rank_synthetic(dir.path(), "bm25", "tiab");
    let c = rank_synthetic(dir.path(), "qlm", "tiab");
    let (t, q) = (synthetic("topics.txt"), synthetic("qrels.txt"));
    let mut args = vec!["compare", "--runs", s(&a), s(&b), s(&c), "--measure", "ap,wss@95"];
    args.extend(dataset_args(&t, &q));
    let out = screenprio(&args);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let csv = String::from_utf8(out.stdout).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 2);
    assert!(csv.lines().skip(1).all(|l| l.contains(",2,")), "{csv}");

    let mut args = vec!["gainloss", "--run-a", s(&b), "--run-b", s(&a), "--measure", "ap"];
    args.extend(dataset_args(&t, &q));
    let out = screenprio(&args);
    assert_eq!(out.status.code(), Some(0));
    let csv = String::from_utf8(out.stdout).unwrap();
    assert!(csv.starts_with("topic_id,delta,value_a,value_b\n"));
    assert_eq!(csv.lines().count(), 6);
}

#[test]
fn convergence_over_checkpoint_directory() {
    let dir = tempfile::tempdir().unwrap();
    let series = dir.path().join("ckpt");
    fs::create_dir(&series).unwrap();
    let weak = rank_synthetic(dir.path(), "bm25", "title");
    let strong = rank_synthetic(dir.path(), "qlm", "tiab");
    fs::copy(&weak, series.join("step-100.run")).unwrap();
    fs::copy(&strong, series.join("step-200.run")).unwrap();
    fs::copy(&strong, series.join("step-300.run")).unwrap();
    fs::write(series.join("notes.txt"), "ignored").unwrap();
    let (t, q) = (synthetic("topics.txt"), synthetic("qrels.txt"));
    let mut args = vec!["convergence", "--series", s(&series)];
    args.extend(dataset_args(&t, &q));
    let out = screenprio(&args);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let csv = String::from_utf8_lossy(&out.stdout).into_owned();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), 4, "{csv}");
    assert!(rows[1].starts_with("100,") && rows[3].starts_with("300,"));
    assert!(stderr(&out).contains("saturation at step 200"), "{}", stderr(&out));

    let mut args = vec!["convergence", "--series", s(&series), "--pattern", "step-**.run"];
    args.extend(dataset_args(&t, &q));
    assert_eq!(screenprio(&args).status.code(), Some(2));
}

fn article(pmid: &str) -> String {
    format!(
        "<PubmedArticle><MedlineCitation><PMID Version=\"1\">{pmid}</PMID><Article>\
         <ArticleTitle>Title {pmid}</ArticleTitle><Abstract><AbstractText>Abstract {pmid}.</AbstractText>\
         </Abstract></Article></MedlineCitation></PubmedArticle>"
    )
}

/// Serves efetch XML for every requested id except `absent`; the first
/// request gets a 503.
fn efetch_server(absent: &'static str) -> (String, Arc<AtomicUsize>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = Arc::clone(&hits);
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            loop {
                let mut header = String::new();
                if reader.read_line(&mut header).unwrap() == 0 || header == "\r\n" {
                    break;
                }
            }
            let n = counter.fetch_add(1, Ordering::SeqCst);
            let response = if n == 0 {
                "HTTP/1.1 503 Service Unavailable\r\nContent-Length: 0\r\nConnection: close\r\n\r\n".to_owned()
            } else {
                let target = request_line.split_whitespace().nth(1).unwrap_or("");
                let ids = target
                    .split(['?', '&'])
                    .find_map(|kv| kv.strip_prefix("id="))
                    .unwrap_or("")
                    .replace("%2C", ",");
                let body: String = std::iter::once("<?xml version=\"1.0\"?><PubmedArticleSet>".to_owned())
                    .chain(ids.split(',').filter(|id| *id != absent).map(article))
                    .chain(std::iter::once("</PubmedArticleSet>".to_owned()))
                    .collect();
                format!(
                    "HTTP/1.1 200 OK\r\nContent-Type: text/xml\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                )
            };
            stream.write_all(response.as_bytes()).unwrap();
        }
    });
    (format!("http://{addr}/efetch.fcgi"), hits)
}

#[test]
fn fetch_against_local_server() {
    let (endpoint, hits) = efetch_server("1003");
    let dir = tempfile::tempdir().unwrap();
    let pmids = dir.path().join("pmids.txt");
    fs::write(&pmids, "1001\n1002\n1003\n1004\n1005\n").unwrap();
    let corpus = dir.path().join("corpus.jsonl");
    let out = screenprio(&[
        "fetch",
        "--pmids",
        s(&pmids),
        "--out",
        s(&corpus),
        "--endpoint",
        &endpoint,
        "--batch-size",
        "2",
        "--backoff-ms",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(hits.load(Ordering::SeqCst), 4);
    let lines: Vec<serde_json::Value> = fs::read_to_string(&corpus)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let ids: Vec<&str> = lines.iter().map(|v| v["pmid"].as_str().unwrap()).collect();
    assert_eq!(ids, ["1001", "1002", "1004", "1005"]);
    assert_eq!(lines[0]["abstract"], "Abstract 1001.");
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("corpus.jsonl.report.json")).unwrap()).unwrap();
    assert_eq!(report["missing"], serde_json::json!(["1003"]));
}

#[test]
fn fetch_gives_up_after_retries() {
    let dir = tempfile::tempdir().unwrap();
    let pmids = dir.path().join("pmids.txt");
    fs::write(&pmids, "1\n2\n").unwrap();
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let endpoint = format!("http://{}/efetch", listener.local_addr().unwrap());
    drop(listener);
    let out = screenprio(&[
        "fetch",
        "--pmids",
        s(&pmids),
        "--out",
        s(&dir.path().join("c.jsonl")),
        "--endpoint",
        &endpoint,
        "--max-retries",
        "1",
        "--backoff-ms",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("could not be fetched"), "{}", stderr(&out));
}

#[test]
fn pipeline_writes_expected_layout() {
    let dir = tempfile::tempdir().unwrap();
    let out = screenprio(&[
        "pipeline",
        "--config",
        s(&synthetic("pipeline.toml")),
        "--out-dir",
        s(dir.path()),
        "--model",
        "bm25",
        "--repr",
        "tiab",
        "--repr",
        "title",
        "--tag-prefix",
        "syn-",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    for f in [
        "effective_config.toml",
        "ingest_report.json",
        "runs/syn-bm25-tiab.run",
        "runs/syn-bm25-title.run",
        "reports/syn-bm25-tiab.jsonl",
        "reports/syn-bm25-title.txt",
        "compare.csv",
        "gainloss/syn-bm25-tiab__syn-bm25-title.csv",
        "summary.txt",
    ] {
        assert!(dir.path().join(f).is_file(), "missing {f}");
    }
    let cfg = fs::read_to_string(dir.path().join("effective_config.toml")).unwrap();
    assert!(cfg.contains("seed = 20230") && cfg.contains("tag_prefix = \"syn-\""), "{cfg}");
}

#[test]
fn pipeline_unknown_model_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = screenprio(&[
        "pipeline",
        "--config",
        s(&synthetic("pipeline.toml")),
        "--out-dir",
        s(dir.path()),
        "--model",
        "dense",
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("dense"));
}

#[test]
fn pipeline_with_external_run() {
    let dir = tempfile::tempdir().unwrap();
    let full = rank_synthetic(dir.path(), "qlm", "title");
    let text = fs::read_to_string(&full).unwrap().replace("qlm-title", "neural");
    let truncated: String = text
        .lines()
        .filter(|l| !l.starts_with("CD900003") || l.split_whitespace().nth(3).unwrap().parse::<u32>().unwrap() <= 10)
        .map(|l| format!("{l}\n"))
        .collect();
    let external = dir.path().join("neural.run");
    fs::write(&external, truncated).unwrap();

    let config = synthetic("pipeline.toml");
    let base = [
        "pipeline",
        "--config",
        s(&config),
        "--model",
        "bm25",
        "--repr",
        "tiab",
        "--external-run",
        s(&external),
    ];
    let strict_dir = dir.path().join("strict");
    let mut args = base.to_vec();
    args.extend(["--out-dir", s(&strict_dir), "--strict"]);
    let out = screenprio(&args);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("topic CD900003") && err.contains("missing candidates (10)"), "{err}");

    let append_dir = dir.path().join("append");
    let mut args = base.to_vec();
    args.extend(["--out-dir", s(&append_dir)]);
    let out = screenprio(&args);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(append_dir.join("reports/neural.jsonl").is_file());
    assert!(append_dir.join("gainloss/bm25-tiab__neural.csv").is_file());
    let compare = fs::read_to_string(append_dir.join("compare.csv")).unwrap();
    assert!(compare.contains(",bm25-tiab,neural,"), "{compare}");
}
