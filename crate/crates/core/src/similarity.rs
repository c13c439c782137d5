//! String similarity measures used to score spans against entities.
//!
//! Both measures case-fold their inputs and return a value in `[0, 1]`.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimilarityError {
    #[error("threshold {0} outside (0, 1]")]
    Threshold(f64),
    #[error("unknown similarity measure {0:?}")]
    UnknownMeasure(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimilarityMeasure {
    Jaccard3,
    Levenshtein,
}

impl SimilarityMeasure {
    pub const ALL: [SimilarityMeasure; 2] = [SimilarityMeasure::Jaccard3, SimilarityMeasure::Levenshtein];

    pub const fn as_str(self) -> &'static str {
        match self {
            SimilarityMeasure::Jaccard3 => "jaccard3",
            SimilarityMeasure::Levenshtein => "levenshtein",
        }
    }

    pub fn similarity(self, a: &str, b: &str) -> f64 {
        match self {
            SimilarityMeasure::Jaccard3 => jaccard3(a, b),
            SimilarityMeasure::Levenshtein => levenshtein_sim(a, b),
        }
    }
}

impl fmt::Display for SimilarityMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SimilarityMeasure {
    type Err = SimilarityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jaccard3" | "jaccard" => Ok(SimilarityMeasure::Jaccard3),
            "levenshtein" | "levenstein" => Ok(SimilarityMeasure::Levenshtein),
            _ => Err(SimilarityError::UnknownMeasure(s.to_string())),
        }
    }
}

/// A measure together with the minimum score a candidate must reach.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityConfig {
    pub measure: SimilarityMeasure,
    pub threshold: f64,
}

impl SimilarityConfig {
    pub fn new(measure: SimilarityMeasure, threshold: f64) -> Result<Self, SimilarityError> {
        if threshold > 0.0 && threshold <= 1.0 {
            Ok(SimilarityConfig { measure, threshold })
        } else {
            Err(SimilarityError::Threshold(threshold))
        }
    }

    pub fn score(&self, a: &str, b: &str) -> f64 {
        self.measure.similarity(a, b)
    }
}

fn trigrams(chars: &[char]) -> HashSet<&[char]> {
    if chars.len() < 3 {
        // short strings act as a single gram so "id" or "5" can still match
        return std::iter::once(chars).collect();
    }
    chars.windows(3).collect()
}

/// Jaccard similarity of the unpadded character 3-gram sets.
pub fn jaccard3(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.to_lowercase().chars().collect();
    let b: Vec<char> = b.to_lowercase().chars().collect();
    match (a.is_empty(), b.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let ga = trigrams(&a);
    let gb = trigrams(&b);
    let inter = ga.intersection(&gb).count();
    let union = ga.len() + gb.len() - inter;
    inter as f64 / union as f64
}

/// Edit distance over chars, two-row dynamic program.
pub fn levenshtein(a: &[char], b: &[char]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `1 - distance / max(|a|, |b|)` on case-folded strings.
pub fn levenshtein_sim(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.to_lowercase().chars().collect();
    let b: Vec<char> = b.to_lowercase().chars().collect();
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 1.0;
    }
    let d = levenshtein(&a, &b);
    // (max - d) / max divides once, so grid values such as 0.2 are hit exactly
    (longest - d) as f64 / longest as f64
}
