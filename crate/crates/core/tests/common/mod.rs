#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::Path;
use std::process::{Command, Output};

use dbtag_core::aligner::OBJECTIVE_EPS;
use dbtag_core::{ScoredCandidate, Span};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use serde_json::json;

pub const MOVIES_QUESTION: &str = "Name movie titles released in 1945, and order by popularity";
pub const MOVIES_SQL: &str = "SELECT title FROM movies WHERE year = 1945 ORDER BY pop";
pub const MOVIES_LABELS: [&str; 11] = ["O", "T", "C", "O", "O", "V", "O", "O", "O", "O", "C"];

pub fn dbtag(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dbtag")).args(args).output().expect("run dbtag")
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

const TABLES: [(&str, &str, [&str; 4]); 5] = [
    ("singer", "singers", ["name", "age", "country", "song_name"]),
    ("movies", "movies", ["title", "year", "pop", "director"]),
    ("employee", "employees", ["name", "salary", "hire_date", "city"]),
    ("airport", "airports", ["airport_name", "city", "country", "elevation"]),
    ("student", "students", ["first_name", "last_name", "age", "major"]),
];

const VALUES: [&str; 8] = ["France", "1945", "Boston", "42", "Math", "Paris", "2010", "Smith"];

/// Deterministic Spider-style question/SQL pairs in generic JSONL. Every
/// fiftieth record carries malformed SQL.
pub fn synthetic_corpus(n: usize, seed: u64) -> String {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut out = String::new();
    for i in 0..n {
        let (table, plural, cols) = TABLES.choose(&mut rng).unwrap();
        let a = cols.choose(&mut rng).unwrap();
        let b = cols.choose(&mut rng).unwrap();
        let v = VALUES.choose(&mut rng).unwrap();
        let spoken = |c: &str| c.replace('_', " ");
        let (question, sql) = match rng.gen_range(0..5) {
            0 => (format!("List the {} of all {plural}.", spoken(a)), format!("SELECT {a} FROM {table}")),
            1 => (
                format!("What is the {} of {plural} whose {} is {v}?", spoken(a), spoken(b)),
                format!("SELECT {a} FROM {table} WHERE {b} = '{v}'"),
            ),
            2 => (
                format!("How many {plural} have {} above {}?", spoken(b), rng.gen_range(1..100)),
                format!("SELECT count(*) FROM {table} WHERE {b} > {}", rng.gen_range(1..100)),
            ),
            3 => (
                format!("Show {} and {} for each {table} sorted by {}", spoken(a), spoken(b), spoken(a)),
                format!("SELECT {a}, {b} FROM {table} ORDER BY {a} DESC"),
            ),
            _ => (
                format!("Find the average {} of {plural} grouped by {}", spoken(b), spoken(a)),
                format!("SELECT {a}, avg({b}) FROM {table} GROUP BY {a}"),
            ),
        };
        let sql = if i % 50 == 49 { format!("SELECT FROM {table} WHERE") } else { sql };
        out.push_str(&json!({ "id": format!("s{i}"), "question": question, "sql": sql }).to_string());
        out.push('\n');
    }
    out
}

/// Every feasible assignment, enumerated without pruning. Returns the
/// maximum objective and the canonical assignment among the optima.
pub fn brute_force(n_entities: usize, cands: &[ScoredCandidate]) -> (f64, Vec<Option<Span>>) {
    let rows: Vec<Vec<&ScoredCandidate>> =
        (0..n_entities).map(|e| cands.iter().filter(|c| c.entity_index == e).collect()).collect();
    let mut all: Vec<(f64, Vec<Option<Span>>)> = Vec::new();
    fn rec(
        rows: &[Vec<&ScoredCandidate>],
        k: usize,
        chosen: &mut Vec<Option<Span>>,
        total: f64,
        all: &mut Vec<(f64, Vec<Option<Span>>)>,
    ) {
        if k == rows.len() {
            all.push((total, chosen.clone()));
            return;
        }
        for c in &rows[k] {
            if chosen.iter().flatten().all(|s| !s.overlaps(c.span)) {
                chosen.push(Some(c.span));
                rec(rows, k + 1, chosen, total + c.score, all);
                chosen.pop();
            }
        }
        chosen.push(None);
        rec(rows, k + 1, chosen, total, all);
        chosen.pop();
    }
    rec(&rows, 0, &mut Vec::new(), 0.0, &mut all);
    let max = all.iter().map(|a| a.0).fold(f64::NEG_INFINITY, f64::max);
    let key = |a: &Vec<Option<Span>>| -> Vec<(u8, usize, usize)> {
        a.iter().map(|s| s.map_or((1, 0, 0), |s| (0, s.start, s.end))).collect()
    };
    let canonical =
        all.iter().filter(|a| a.0 >= max - OBJECTIVE_EPS).min_by_key(|a| key(&a.1)).map(|a| a.1.clone()).unwrap();
    (max, canonical)
}

pub fn grams(s: &str) -> BTreeSet<String> {
    let chars: Vec<char> = s.to_lowercase().chars().collect();
    if chars.len() < 3 {
        return if chars.is_empty() { BTreeSet::new() } else { BTreeSet::from([chars.iter().collect()]) };
    }
    chars.windows(3).map(|w| w.iter().collect()).collect()
}

pub fn jaccard_oracle(a: &str, b: &str) -> f64 {
    let (ga, gb) = (grams(a), grams(b));
    if ga.is_empty() && gb.is_empty() {
        return 1.0;
    }
    ga.intersection(&gb).count() as f64 / ga.union(&gb).count() as f64
}

/// Full-matrix Wagner-Fischer.
pub fn distance_oracle(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.to_lowercase().chars().collect();
    let b: Vec<char> = b.to_lowercase().chars().collect();
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in d[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    d[a.len()][b.len()]
}

pub fn levenshtein_oracle(a: &str, b: &str) -> f64 {
    let n = a.to_lowercase().chars().count().max(b.to_lowercase().chars().count());
    if n == 0 {
        return 1.0;
    }
    1.0 - distance_oracle(a, b) as f64 / n as f64
}
