mod common;

use std::fs;

use common::{dbtag, path_str, synthetic_corpus, MOVIES_LABELS, MOVIES_QUESTION, MOVIES_SQL};
use serde_json::{json, Value};

fn write(dir: &tempfile::TempDir, name: &str, text: &str) -> String {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    path_str(&p).to_string()
}

fn movies_jsonl() -> String {
    json!({ "id": "0", "question": MOVIES_QUESTION, "sql": MOVIES_SQL }).to_string() + "\n"
}

fn gold_jsonl() -> String {
    json!({ "id": "0", "question": MOVIES_QUESTION, "labels": MOVIES_LABELS, "sql": MOVIES_SQL }).to_string() + "\n"
}

fn stdout(out: &std::process::Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn tokenize_and_extract() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(&dir, "d.jsonl", &movies_jsonl());
    let tok: Value = serde_json::from_str(stdout(&dbtag(&["tokenize", &data])).trim()).unwrap();
    assert_eq!(tok["tokens"].as_array().unwrap().len(), 11);
    assert_eq!(tok["tokens"][6], ",");
    let ext: Value = serde_json::from_str(stdout(&dbtag(&["extract", &data])).trim()).unwrap();
    assert_eq!(
        ext["entities"],
        json!([
            {"text": "title", "type": "C"},
            {"text": "movies", "type": "T"},
            {"text": "year", "type": "C"},
            {"text": "1945", "type": "V"},
            {"text": "pop", "type": "C"},
        ])
    );
}

#[test]
fn annotate_movies_pair() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(&dir, "d.jsonl", &movies_jsonl());
    let out = dir.path().join("a.jsonl");
    stdout(&dbtag(&["annotate", &data, "--measure", "jaccard3", "--threshold", "0.1", "--out", path_str(&out)]));
    let rec: Value = serde_json::from_str(fs::read_to_string(&out).unwrap().trim()).unwrap();
    assert_eq!(rec["labels"], json!(MOVIES_LABELS));
    let links: Vec<(String, String)> = rec["entities"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| (e["text"].as_str().unwrap().into(), e["entity"].as_str().unwrap().into()))
        .collect();
    let want = [("movie", "movies"), ("titles", "title"), ("1945", "1945"), ("popularity", "pop")];
    assert_eq!(links, want.map(|(a, b)| (a.to_string(), b.to_string())));
}

#[test]
fn calibrate_augment_stats_eval() {
    let dir = tempfile::tempdir().unwrap();
    let gold = write(&dir, "g.jsonl", &gold_jsonl());
    let data = write(&dir, "d.jsonl", &movies_jsonl());
    let cal = dir.path().join("cal.json");
    stdout(&dbtag(&["calibrate", "--gold", &gold, "--out", path_str(&cal)]));
    let report: Value = serde_json::from_str(&fs::read_to_string(&cal).unwrap()).unwrap();
    assert_eq!(report["grid"].as_array().unwrap().len(), 20);
    assert_eq!(report["best"]["measure"], "levenshtein");
    assert_eq!(report["best"]["threshold"], 0.3);

    let aug = dir.path().join("aug.jsonl");
    stdout(&dbtag(&["augment", &data, "--calibration", path_str(&cal), "--out", path_str(&aug)]));
    let rec: Value = serde_json::from_str(fs::read_to_string(&aug).unwrap().trim()).unwrap();
    assert_eq!(rec["labels"], json!(MOVIES_LABELS));

    let table = stdout(&dbtag(&["stats", path_str(&aug)]));
    assert!(table.contains("Total            11  100.0"), "{table}");
    let stats: Value = serde_json::from_str(stdout(&dbtag(&["stats", path_str(&aug), "--json"])).trim()).unwrap();
    assert_eq!(stats["total"], 11);

    for g in ["4", "3", "2"] {
        let ev: Value = serde_json::from_str(&stdout(&dbtag(&[
            "eval",
            "--gold",
            &gold,
            "--pred",
            path_str(&aug),
            "--grouping",
            g,
        ])))
        .unwrap();
        assert_eq!(ev["micro"]["f1"], 1.0);
    }
}

#[test]
fn stats_quarter_each() {
    let dir = tempfile::tempdir().unwrap();
    let rec = json!({
        "id": "q", "tokens": ["a", "b", "c", "d"], "labels": ["T", "C", "V", "O"],
        "entities": [
            {"start": 0, "end": 1, "text": "a", "type": "T", "entity": "a", "score": 1.0},
            {"start": 1, "end": 2, "text": "b", "type": "C", "entity": "b", "score": 1.0},
            {"start": 2, "end": 3, "text": "c", "type": "V", "entity": "c", "score": 1.0}
        ],
        "tag_ids": "<id_1> <id_2> <id_3> <id_0>"
    });
    let f = write(&dir, "r.jsonl", &(rec.to_string() + "\n"));
    let stats: Value = serde_json::from_str(stdout(&dbtag(&["stats", &f, "--json"])).trim()).unwrap();
    for row in stats["rows"].as_array().unwrap() {
        assert_eq!(row["tokens"], 1);
        assert_eq!(row["percent"], 25.0);
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(&dir, "d.jsonl", &movies_jsonl());
    assert_eq!(dbtag(&[]).status.code(), Some(1));
    assert_eq!(dbtag(&["annotate", &data]).status.code(), Some(1));
    assert_eq!(dbtag(&["annotate", &data, "--measure", "cosine", "--threshold", "0.5"]).status.code(), Some(1));
    assert_eq!(dbtag(&["annotate", &data, "--measure", "jaccard3", "--threshold", "1.5"]).status.code(), Some(1));
    assert_eq!(dbtag(&["--help"]).status.code(), Some(0));

    let missing = path_str(&dir.path().join("nope.jsonl")).to_string();
    assert_eq!(dbtag(&["tokenize", &missing]).status.code(), Some(2));
    let broken = write(&dir, "b.jsonl", "{\"id\": \"1\", \"question\": \"q\"\n");
    assert_eq!(dbtag(&["tokenize", &broken]).status.code(), Some(2));

    let no_sql = write(&dir, "n.jsonl", "{\"id\": \"1\", \"question\": \"list singers\"}\n");
    let out = dbtag(&["annotate", &no_sql, "--measure", "jaccard3", "--threshold", "0.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sql"));

    let gold_no_sql = write(&dir, "gn.jsonl", "{\"id\": \"1\", \"question\": \"x\", \"labels\": [\"O\"]}\n");
    assert_eq!(dbtag(&["calibrate", "--gold", &gold_no_sql]).status.code(), Some(2));
}

#[test]
fn augment_reports_skips_and_keeps_order() {
    let dir = tempfile::tempdir().unwrap();
    let gold = write(&dir, "g.jsonl", &gold_jsonl());
    let cal = dir.path().join("cal.json");
    stdout(&dbtag(&["calibrate", "--gold", &gold, "--out", path_str(&cal)]));
    let data = write(&dir, "d.jsonl", &synthetic_corpus(100, 7));
    let aug = dir.path().join("aug.jsonl");
    let out = dbtag(&["augment", &data, "--calibration", path_str(&cal), "--out", path_str(&aug)]);
    assert!(out.status.success());
    let skips: Vec<Value> =
        String::from_utf8(out.stderr).unwrap().lines().filter_map(|l| serde_json::from_str(l).ok()).collect();
    assert_eq!(skips.len(), 2);
    assert_eq!(skips[0]["skipped"], "s49");
    let ids: Vec<String> = fs::read_to_string(&aug)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap()["id"].as_str().unwrap().to_string())
        .collect();
    let want: Vec<String> = (0..100).filter(|i| i % 50 != 49).map(|i| format!("s{i}")).collect();
    assert_eq!(ids, want);
}

#[test]
fn augment_output_independent_of_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let gold = write(&dir, "g.jsonl", &gold_jsonl());
    let cal = dir.path().join("cal.json");
    stdout(&dbtag(&["calibrate", "--gold", &gold, "--out", path_str(&cal)]));
    let data = write(&dir, "d.jsonl", &synthetic_corpus(200, 11));
    let mut outputs = Vec::new();
    for jobs in ["1", "8"] {
        let p = dir.path().join(format!("aug{jobs}.jsonl"));
        stdout(&dbtag(&["--jobs", jobs, "augment", &data, "--calibration", path_str(&cal), "--out", path_str(&p)]));
        outputs.push(fs::read(&p).unwrap());
    }
    assert!(!outputs[0].is_empty());
    assert_eq!(outputs[0], outputs[1]);
}
