//! Grid search of similarity measure and threshold against human labels,
//! and corpus-wide augmentation with the chosen setting.

use rayon::prelude::*;
use serde::ser::{SerializeMap, SerializeSeq};
use serde::{Serialize, Serializer};
use serde_json::value::RawValue;
use thiserror::Error;

use crate::aligner::{annotate, annotate_with_entities, AnnotateError};
use crate::metrics::{fixed4, ClassGrouping, Confusion, MetricsReport};
use crate::similarity::{SimilarityConfig, SimilarityMeasure};
use crate::sql::entities_from_sql;
use crate::types::{Annotation, EntitySet, GoldExample, NlqDoc, RawPair};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CalibrateError {
    #[error("gold example {0} has no SQL")]
    MissingSql(String),
    #[error("gold example {id}: {reason}")]
    InvalidGold { id: String, reason: String },
    #[error("no usable gold examples ({skipped} skipped)")]
    NoUsableExamples { skipped: usize },
}

/// A record left out of calibration or augmentation, with the reason.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SkipEntry {
    pub id: String,
    pub reason: String,
}

/// Thresholds 0.1, 0.2, ..., 1.0.
pub fn grid_thresholds() -> [f64; 10] {
    std::array::from_fn(|k| (k + 1) as f64 / 10.0)
}

/// The 20 grid configurations, measure-major.
pub fn grid() -> Vec<SimilarityConfig> {
    SimilarityMeasure::ALL
        .iter()
        .flat_map(|&m| grid_thresholds().map(move |t| SimilarityConfig { measure: m, threshold: t }))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub config: SimilarityConfig,
    /// Micro-F1 over T, C and V of `report`.
    pub f1: f64,
    /// Four-class report of synthetic versus gold labels.
    pub report: MetricsReport,
    /// Links produced over the whole gold set.
    pub n_links: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationReport {
    pub cells: Vec<GridCell>,
    pub best: SimilarityConfig,
    pub best_f1: f64,
    pub skipped: Vec<SkipEntry>,
}

/// `true` when `a` beats `b`: higher F1, then higher threshold, then
/// Jaccard before Levenshtein.
fn better(a: &GridCell, b: &GridCell) -> bool {
    if a.f1 != b.f1 {
        return a.f1 > b.f1;
    }
    if a.config.threshold != b.config.threshold {
        return a.config.threshold > b.config.threshold;
    }
    a.config.measure < b.config.measure
}

struct Prepared<'a> {
    example: &'a GoldExample,
    doc: NlqDoc,
    entities: EntitySet,
}

/// Runs every grid cell over the gold set and picks the best.
///
/// Examples whose SQL does not parse are skipped and listed in the report.
pub fn calibrate(gold: &[GoldExample], max_span_tokens: usize) -> Result<CalibrationReport, CalibrateError> {
    let mut usable = Vec::new();
    let mut skipped = Vec::new();
    for ex in gold {
        let sql = ex.sql.as_deref().ok_or_else(|| CalibrateError::MissingSql(ex.id.clone()))?;
        if ex.tokens.len() != ex.labels.len() {
            return Err(CalibrateError::InvalidGold {
                id: ex.id.clone(),
                reason: format!("{} tokens but {} labels", ex.tokens.len(), ex.labels.len()),
            });
        }
        let doc = NlqDoc::from_token_texts(&ex.tokens)
            .map_err(|e| CalibrateError::InvalidGold { id: ex.id.clone(), reason: e.to_string() })?;
        match entities_from_sql(sql) {
            Ok(entities) => usable.push(Prepared { example: ex, doc, entities }),
            Err(e) => {
                log::warn!("calibrate: skipping {}: {e}", ex.id);
                skipped.push(SkipEntry { id: ex.id.clone(), reason: e.to_string() });
            }
        }
    }
    if usable.is_empty() {
        return Err(CalibrateError::NoUsableExamples { skipped: skipped.len() });
    }

    let cells: Vec<GridCell> =
        grid().into_par_iter().map(|config| run_cell(&usable, config, max_span_tokens)).collect();

    let best_cell = cells.iter().fold(&cells[0], |best, c| if better(c, best) { c } else { best });
    Ok(CalibrationReport { best: best_cell.config, best_f1: best_cell.f1, cells, skipped })
}

fn run_cell(examples: &[Prepared<'_>], config: SimilarityConfig, max_span_tokens: usize) -> GridCell {
    let (confusion, n_links) = examples
        .par_iter()
        .map(|p| {
            let ann = annotate_with_entities(&p.example.id, p.doc.clone(), p.entities.clone(), config, max_span_tokens)
                .expect("solver output is a valid annotation");
            let mut c = Confusion::default();
            for (&g, &s) in p.example.labels.iter().zip(ann.labels()) {
                c.add(g, s);
            }
            (c, ann.links().len())
        })
        .reduce(
            || (Confusion::default(), 0),
            |(mut a, na), (b, nb)| {
                a.merge(&b);
                (a, na + nb)
            },
        );
    let report = MetricsReport::from_confusion(confusion, ClassGrouping::FourClass);
    GridCell { config, f1: report.micro.f1, report, n_links }
}

/// Annotates every pair with `config`, in input order. Pairs that fail
/// (unparseable SQL) are reported instead of annotated.
pub fn augment(raw: &[RawPair], config: SimilarityConfig, max_span_tokens: usize) -> (Vec<Annotation>, Vec<SkipEntry>) {
    let results: Vec<Result<Annotation, AnnotateError>> =
        raw.par_iter().map(|pair| annotate(pair, config, max_span_tokens)).collect();
    let mut out = Vec::with_capacity(results.len());
    let mut skipped = Vec::new();
    for r in results {
        match r {
            Ok(a) => out.push(a),
            Err(e) => skipped.push(SkipEntry { id: e.id().to_string(), reason: e.to_string() }),
        }
    }
    (out, skipped)
}

fn threshold_json(t: f64) -> Box<RawValue> {
    RawValue::from_string(format!("{t:.1}")).expect("formatted float is valid JSON")
}

struct CellJson<'a>(&'a GridCell);

impl Serialize for CellJson<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let c = self.0;
        let mut m = s.serialize_map(Some(6))?;
        m.serialize_entry("measure", c.config.measure.as_str())?;
        m.serialize_entry("threshold", &threshold_json(c.config.threshold))?;
        m.serialize_entry("precision", &fixed4(c.report.micro.precision))?;
        m.serialize_entry("recall", &fixed4(c.report.micro.recall))?;
        m.serialize_entry("f1", &fixed4(c.f1))?;
        m.serialize_entry("links", &c.n_links)?;
        m.end()
    }
}

struct GridJson<'a>(&'a [GridCell]);

impl Serialize for GridJson<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(self.0.len()))?;
        for c in self.0 {
            seq.serialize_element(&CellJson(c))?;
        }
        seq.end()
    }
}

struct BestJson<'a>(&'a CalibrationReport);

impl Serialize for BestJson<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(3))?;
        m.serialize_entry("measure", self.0.best.measure.as_str())?;
        m.serialize_entry("threshold", &threshold_json(self.0.best.threshold))?;
        m.serialize_entry("f1", &fixed4(self.0.best_f1))?;
        m.end()
    }
}

impl Serialize for CalibrationReport {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(4))?;
        m.serialize_entry("grid", &GridJson(&self.cells))?;
        m.serialize_entry("best", &BestJson(self))?;
        m.serialize_entry("skipped", &self.skipped.len())?;
        m.serialize_entry("skipped_records", &self.skipped)?;
        m.end()
    }
}
