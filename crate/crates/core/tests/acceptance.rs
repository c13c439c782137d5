//! Acceptance suite: one PASS/FAIL/SKIP line per criterion. Criterion 8
//! runs only when `DBTAG_SPIDER` and/or `DBTAG_BIRD` name the public
//! training files (Spider `train_spider.json`, BIRD `train.json`).

mod common;

use std::collections::BTreeSet;
use std::fs;
use std::process::ExitCode;
use std::time::Instant;

use common::{
    brute_force, dbtag, distance_oracle, jaccard_oracle, levenshtein_oracle, path_str, synthetic_corpus, MOVIES_LABELS,
    MOVIES_QUESTION, MOVIES_SQL,
};
use dbtag_core::{
    annotate, calibrate, entities_from_sql, jaccard3, levenshtein_sim, score, score_corpus, solve, tokenize,
    ClassGrouping, GoldExample, Label, RawPair, ScoreMatrix, ScoredCandidate, SimilarityConfig, SimilarityMeasure,
    Span,
};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::{json, Value};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn labels(s: &[&str]) -> Vec<Label> {
    s.iter().map(|l| l.parse().unwrap()).collect()
}

fn worked_example() -> Outcome {
    let pair = RawPair::new("0", MOVIES_QUESTION, MOVIES_SQL).map_err(|e| e.to_string())?;
    let cfg = SimilarityConfig::new(SimilarityMeasure::Jaccard3, 0.1).unwrap();
    let start = Instant::now();
    let ann = annotate(&pair, cfg, 8).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let links: Vec<(String, String, &str)> = ann
        .links()
        .iter()
        .map(|l| {
            let e = ann.entity(l);
            (ann.doc.span_text(l.span).unwrap(), e.text().to_string(), e.entity_type().as_str())
        })
        .collect();
    let want = [("movie", "movies", "T"), ("titles", "title", "C"), ("1945", "1945", "V"), ("popularity", "pop", "C")];
    let want: Vec<(String, String, &str)> = want.iter().map(|(a, b, c)| (a.to_string(), b.to_string(), *c)).collect();
    ensure!(links == want, "links {links:?}");
    ensure!(ann.labels() == labels(&MOVIES_LABELS), "labels {:?}", ann.labels());
    ensure!(elapsed.as_millis() < 100, "took {elapsed:?}");
    Ok(format!("4 links, labels match, {:.2} ms", elapsed.as_secs_f64() * 1e3))
}

fn extraction() -> Outcome {
    let set = entities_from_sql(MOVIES_SQL).map_err(|e| e.to_string())?;
    let got: BTreeSet<(String, &str)> = set.iter().map(|e| (e.text().to_string(), e.entity_type().as_str())).collect();
    let want: BTreeSet<(String, &str)> = [("title", "C"), ("movies", "T"), ("year", "C"), ("1945", "V"), ("pop", "C")]
        .iter()
        .map(|(t, k)| (t.to_string(), *k))
        .collect();
    ensure!(got == want && set.len() == 5, "got {got:?}");
    Ok("{title:C, movies:T, year:C, 1945:V, pop:C}".into())
}

fn random_instance(rng: &mut StdRng) -> (usize, usize, Vec<ScoredCandidate>) {
    let n_entities = rng.gen_range(1..=8);
    let n_tokens = rng.gen_range(1..=12);
    let mut cands = Vec::new();
    for e in 0..n_entities {
        let mut seen = BTreeSet::new();
        for _ in 0..rng.gen_range(0..=4) {
            let start = rng.gen_range(0..n_tokens);
            let end = rng.gen_range(start + 1..=(start + 4).min(n_tokens));
            if seen.insert((start, end)) {
                cands.push(ScoredCandidate {
                    entity_index: e,
                    span: Span::new(start, end),
                    score: rng.gen_range(0.1..=1.0),
                });
            }
        }
    }
    (n_entities, n_tokens, cands)
}

fn solver_exactness() -> Outcome {
    const N: usize = 2000;
    let mut rng = StdRng::seed_from_u64(20240611);
    let cfg = SimilarityConfig::new(SimilarityMeasure::Jaccard3, 0.1).unwrap();
    let start = Instant::now();
    for i in 0..N {
        let (ne, nt, cands) = random_instance(&mut rng);
        let (best, _) = brute_force(ne, &cands);
        let m = ScoreMatrix::from_candidates(cfg, ne, cands).map_err(|e| e.to_string())?;
        let got = solve(&m, nt).objective();
        ensure!((got - best).abs() <= 1e-9, "instance {i}: solver {got}, brute force {best}");
    }
    let elapsed = start.elapsed();
    ensure!(elapsed.as_secs() < 60, "took {elapsed:?}");
    Ok(format!("{N}/{N} instances optimal, {:.2} s", elapsed.as_secs_f64()))
}

fn similarity_oracle() -> Outcome {
    let j1 = jaccard3("movies", "movie");
    let j2 = jaccard3("pop", "popularity");
    let l1 = levenshtein_sim("movie", "movies");
    ensure!(j1 == 0.75 && jaccard_oracle("movies", "movie") == 0.75, "jaccard3(movies, movie) = {j1}");
    ensure!(j2 == 0.125 && jaccard_oracle("pop", "popularity") == 0.125, "jaccard3(pop, popularity) = {j2}");
    ensure!(distance_oracle("movie", "movies") == 1, "oracle distance");
    ensure!(
        (l1 - 5.0 / 6.0).abs() < 1e-12 && (levenshtein_oracle("movie", "movies") - 5.0 / 6.0).abs() < 1e-12,
        "levenshtein_sim(movie, movies) = {l1}"
    );
    Ok("0.75, 0.125, 5/6 match independent oracles".into())
}

fn metrics_oracle() -> Outcome {
    let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
    let r = score(&labels(&["T", "C", "O", "O"]), &labels(&["T", "O", "O", "V"]), ClassGrouping::TwoClass)
        .map_err(|e| e.to_string())?;
    let i = r.class("I").unwrap();
    ensure!(close(i.precision, 0.5) && close(i.recall, 0.5) && close(i.f1, 0.5), "two-class example {i:?}");

    let r = score(&labels(&["T", "C", "V", "O"]), &labels(&["O", "O", "O", "O"]), ClassGrouping::FourClass)
        .map_err(|e| e.to_string())?;
    for c in ["T", "C", "V"] {
        let m = r.class(c).unwrap();
        ensure!(m.recall == 0.0 && m.f1 == 0.0, "four-class example {c}: {m:?}");
    }
    let o = r.class("O").unwrap();
    ensure!(close(o.precision, 0.25) && close(o.recall, 1.0), "four-class example O: {o:?}");

    let (g, p) = (labels(&["T"]), labels(&["O"]));
    let r = score_corpus([("A", &g[..], &g[..]), ("B", &g[..], &p[..])], ClassGrouping::FourClass)
        .map_err(|e| e.to_string())?;
    let t = r.class("T").unwrap();
    ensure!(close(t.precision, 1.0) && close(t.recall, 0.5) && close(t.f1, 2.0 / 3.0), "pooled example {t:?}");

    let mut rng = StdRng::seed_from_u64(5);
    let alphabet = [Label::T, Label::C, Label::V, Label::O];
    for k in 0..100 {
        let corpus: Vec<(Vec<Label>, Vec<Label>)> = (0..rng.gen_range(1..8))
            .map(|_| {
                let n = rng.gen_range(1..15);
                let mut draw = || (0..n).map(|_| alphabet[rng.gen_range(0..4)]).collect::<Vec<_>>();
                (draw(), draw())
            })
            .collect();
        let report = |g| score_corpus(corpus.iter().map(|(a, b)| ("x", &a[..], &b[..])), g).unwrap();
        let four = report(ClassGrouping::FourClass).confusion;
        let two = report(ClassGrouping::TwoClass).confusion.class_counts(ClassGrouping::TwoClass);
        let ent = [Label::T, Label::C, Label::V];
        let sum = |gs: &[Label], ps: &[Label]| -> u64 {
            gs.iter().flat_map(|&a| ps.iter().map(move |&b| four.get(a, b))).sum()
        };
        ensure!(
            two[0].tp == sum(&ent, &ent) && two[0].fp == sum(&[Label::O], &ent) && two[0].fn_ == sum(&ent, &[Label::O]),
            "corpus {k}: two-class counts {:?}",
            two[0]
        );
    }
    Ok("3 hand-counted examples exact; 100 random corpora pool correctly".into())
}

fn gold(id: &str, question: &str, labels_: &str, sql: &str) -> GoldExample {
    let labels: Vec<Label> = labels_.split_whitespace().map(|l| l.parse().unwrap()).collect();
    GoldExample::new(id, tokenize(question).token_texts(), labels, Some(sql.into())).unwrap()
}

fn calibration_argmax() -> Outcome {
    let fixture =
        [gold("w", "show abcdq and xpqrs with mnxpq", "O C O O O O", "SELECT abcde FROM t WHERE pqrstu = 'mnopq'")];
    let report = calibrate(&fixture, 8).map_err(|e| e.to_string())?;
    ensure!(report.cells.len() == 20, "{} cells", report.cells.len());
    let perfect: Vec<SimilarityConfig> = report.cells.iter().filter(|c| c.f1 == 1.0).map(|c| c.config).collect();
    let want = SimilarityConfig::new(SimilarityMeasure::Jaccard3, 0.5).unwrap();
    ensure!(perfect == [want], "perfect cells {perfect:?}");
    ensure!(report.best == want, "best {:?}", report.best);

    let symmetric = [gold("s", "how many singer rows", "O O T O", "SELECT count(*) FROM singer")];
    let report = calibrate(&symmetric, 8).map_err(|e| e.to_string())?;
    ensure!(report.cells.iter().all(|c| c.f1 == 1.0), "symmetric fixture is not a full tie");
    let top = SimilarityConfig::new(SimilarityMeasure::Jaccard3, 1.0).unwrap();
    ensure!(report.best == top, "tie-break chose {:?}", report.best);
    Ok("20 cells; unique perfect cell (jaccard3, 0.5) chosen; full tie -> (jaccard3, 1.0)".into())
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let gold = dir.path().join("gold.jsonl");
    let line = json!({ "id": "0", "question": MOVIES_QUESTION, "labels": MOVIES_LABELS, "sql": MOVIES_SQL });
    fs::write(&gold, format!("{line}\n")).map_err(|e| e.to_string())?;
    let cal = dir.path().join("cal.json");
    let out = dbtag(&["calibrate", "--gold", path_str(&gold), "--out", path_str(&cal)]);
    ensure!(out.status.success(), "calibrate failed: {}", String::from_utf8_lossy(&out.stderr));
    let corpus = dir.path().join("corpus.jsonl");
    fs::write(&corpus, synthetic_corpus(1000, 42)).map_err(|e| e.to_string())?;
    let mut files = Vec::new();
    for jobs in ["1", "8"] {
        let dest = dir.path().join(format!("aug{jobs}.jsonl"));
        let out = dbtag(&[
            "--jobs",
            jobs,
            "augment",
            path_str(&corpus),
            "--calibration",
            path_str(&cal),
            "--out",
            path_str(&dest),
        ]);
        ensure!(out.status.success(), "augment --jobs {jobs} failed: {}", String::from_utf8_lossy(&out.stderr));
        files.push(fs::read(&dest).map_err(|e| e.to_string())?);
    }
    let lines = files[0].iter().filter(|&&b| b == b'\n').count();
    ensure!(lines > 0, "empty output");
    ensure!(files[0] == files[1], "outputs differ");
    Ok(format!("{lines} records, {} bytes, identical", files[0].len()))
}

/// `Some` only when dataset paths are configured.
fn distribution() -> Option<Outcome> {
    let inputs: Vec<(String, &str)> = [("DBTAG_SPIDER", "spider"), ("DBTAG_BIRD", "bird")]
        .iter()
        .filter_map(|(var, fmt)| std::env::var(var).ok().map(|p| (p, *fmt)))
        .collect();
    if inputs.is_empty() {
        return None;
    }
    Some((|| {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let cal = match std::env::var("DBTAG_CALIBRATION") {
            Ok(p) => p,
            Err(_) => {
                let gold = dir.path().join("gold.jsonl");
                let line =
                    json!({ "id": "0", "question": MOVIES_QUESTION, "labels": MOVIES_LABELS, "sql": MOVIES_SQL });
                fs::write(&gold, format!("{line}\n")).map_err(|e| e.to_string())?;
                let cal = dir.path().join("cal.json");
                let out = dbtag(&["calibrate", "--gold", path_str(&gold), "--out", path_str(&cal)]);
                ensure!(out.status.success(), "calibrate failed");
                path_str(&cal).to_string()
            }
        };
        let mut combined = Vec::new();
        for (i, (path, fmt)) in inputs.iter().enumerate() {
            let dest = dir.path().join(format!("aug{i}.jsonl"));
            let out = dbtag(&["augment", path, "--format", fmt, "--calibration", &cal, "--out", path_str(&dest)]);
            ensure!(out.status.success(), "augment {path} failed: {}", String::from_utf8_lossy(&out.stderr));
            combined.extend(fs::read(&dest).map_err(|e| e.to_string())?);
        }
        let all = dir.path().join("all.jsonl");
        fs::write(&all, combined).map_err(|e| e.to_string())?;
        let out = dbtag(&["stats", path_str(&all), "--json"]);
        ensure!(out.status.success(), "stats failed");
        let stats: Value = serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())?;
        let targets = [("Table", 7.8), ("Column", 13.6), ("Value", 8.0), ("O", 70.6)];
        let mut summary = Vec::new();
        let mut ok = true;
        for ((name, target), row) in targets.iter().zip(stats["rows"].as_array().unwrap()) {
            let pct = row["percent"].as_f64().unwrap();
            ok &= (pct - target).abs() <= 3.0;
            summary.push(format!("{name} {pct:.1}% (target {target}%)"));
        }
        let summary = summary.join(", ");
        if ok {
            Ok(summary)
        } else {
            Err(summary)
        }
    })())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 7] = [
        ("worked-example reproduction", worked_example),
        ("entity-extraction oracle", extraction),
        ("solver exactness", solver_exactness),
        ("similarity unit oracle", similarity_oracle),
        ("metrics oracle", metrics_oracle),
        ("calibration argmax", calibration_argmax),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("criterion {}: PASS {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL {name}: {detail}", i + 1);
            }
        }
    }
    match distribution() {
        None => println!("criterion 8: SKIP label distribution: set DBTAG_SPIDER and/or DBTAG_BIRD to run"),
        Some(Ok(detail)) => println!("criterion 8: PASS label distribution: {detail}"),
        Some(Err(detail)) => println!("criterion 8: FAIL label distribution (non-gating): {detail}"),
    }
    if failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
