//! Token-level precision, recall and F1 under the 4-, 3- and 2-class
//! groupings of the label alphabet.
//!
//! Counting goes through a 4x4 confusion matrix over raw labels; every
//! grouping is a projection of that matrix. The O class is reported but
//! left out of the micro and macro aggregates.

use std::fmt;
use std::str::FromStr;

use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};
use serde_json::value::RawValue;
use thiserror::Error;

use crate::types::{EntityType, Label};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("{id}: gold has {gold} labels but prediction has {pred}")]
    LengthMismatch { id: String, gold: usize, pred: usize },
    #[error("unknown class grouping {0:?} (expected 4, 3 or 2)")]
    UnknownGrouping(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ClassGrouping {
    /// T, C, V, O
    FourClass,
    /// S = T + C, V, O
    ThreeClass,
    /// I = any entity, O
    TwoClass,
}

impl ClassGrouping {
    pub const ALL: [ClassGrouping; 3] = [ClassGrouping::FourClass, ClassGrouping::ThreeClass, ClassGrouping::TwoClass];

    /// Projected class names, entity classes first and "O" last.
    pub fn classes(self) -> &'static [&'static str] {
        match self {
            ClassGrouping::FourClass => &["T", "C", "V", "O"],
            ClassGrouping::ThreeClass => &["S", "V", "O"],
            ClassGrouping::TwoClass => &["I", "O"],
        }
    }

    pub fn project(self, label: Label) -> &'static str {
        match (self, label) {
            (_, Label::None) => "O",
            (ClassGrouping::FourClass, Label::Entity(t)) => t.as_str(),
            (ClassGrouping::ThreeClass, Label::Entity(EntityType::Value)) => "V",
            (ClassGrouping::ThreeClass, Label::Entity(_)) => "S",
            (ClassGrouping::TwoClass, Label::Entity(_)) => "I",
        }
    }

    fn class_index(self, label: Label) -> usize {
        let name = self.project(label);
        self.classes().iter().position(|c| *c == name).expect("projection is total")
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ClassGrouping::FourClass => "4",
            ClassGrouping::ThreeClass => "3",
            ClassGrouping::TwoClass => "2",
        }
    }
}

impl fmt::Display for ClassGrouping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassGrouping {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "4" => Ok(ClassGrouping::FourClass),
            "3" => Ok(ClassGrouping::ThreeClass),
            "2" => Ok(ClassGrouping::TwoClass),
            other => Err(MetricsError::UnknownGrouping(other.to_string())),
        }
    }
}

fn label_index(l: Label) -> usize {
    match l {
        Label::Entity(EntityType::Table) => 0,
        Label::Entity(EntityType::Column) => 1,
        Label::Entity(EntityType::Value) => 2,
        Label::None => 3,
    }
}

/// Gold-by-predicted token counts over the raw label alphabet
/// (index order T, C, V, O).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub cells: [[u64; 4]; 4],
}

impl Confusion {
    pub fn add(&mut self, gold: Label, pred: Label) {
        self.cells[label_index(gold)][label_index(pred)] += 1;
    }

    pub fn merge(&mut self, other: &Confusion) {
        for g in 0..4 {
            for p in 0..4 {
                self.cells[g][p] += other.cells[g][p];
            }
        }
    }

    pub fn get(&self, gold: Label, pred: Label) -> u64 {
        self.cells[label_index(gold)][label_index(pred)]
    }

    pub fn total(&self) -> u64 {
        self.cells.iter().flatten().sum()
    }

    /// Per projected class true/false positive and false negative counts.
    pub fn class_counts(&self, grouping: ClassGrouping) -> Vec<ClassCounts> {
        let mut out = vec![ClassCounts::default(); grouping.classes().len()];
        for g in Label::ALL {
            for p in Label::ALL {
                let n = self.get(g, p);
                let (gi, pi) = (grouping.class_index(g), grouping.class_index(p));
                out[gi].support += n;
                if gi == pi {
                    out[gi].tp += n;
                } else {
                    out[gi].fn_ += n;
                    out[pi].fp += n;
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClassCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    /// Gold tokens of the class.
    pub support: u64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// 2tp / (2tp + fp + fn), a single rounding so equal ratios compare equal.
fn f1(c: &ClassCounts) -> f64 {
    ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

impl Prf {
    fn from_counts(c: &ClassCounts) -> Self {
        let precision = ratio(c.tp, c.tp + c.fp);
        let recall = ratio(c.tp, c.tp + c.fn_);
        Prf { precision, recall, f1: f1(c), support: c.support }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub grouping: ClassGrouping,
    pub confusion: Confusion,
    /// In the order of [`ClassGrouping::classes`].
    pub classes: Vec<(&'static str, Prf)>,
    /// Pooled over entity classes.
    pub micro: Prf,
    /// Unweighted mean over entity classes; `f1` is the mean of per-class F1.
    pub macro_avg: Prf,
}

impl MetricsReport {
    pub fn from_confusion(confusion: Confusion, grouping: ClassGrouping) -> Self {
        let counts = confusion.class_counts(grouping);
        let names = grouping.classes();
        let classes: Vec<(&'static str, Prf)> =
            names.iter().zip(&counts).map(|(n, c)| (*n, Prf::from_counts(c))).collect();

        let entity_counts = &counts[..counts.len() - 1];
        let pooled = entity_counts.iter().fold(ClassCounts::default(), |acc, c| ClassCounts {
            tp: acc.tp + c.tp,
            fp: acc.fp + c.fp,
            fn_: acc.fn_ + c.fn_,
            support: acc.support + c.support,
        });
        let micro = Prf::from_counts(&pooled);

        let entity = &classes[..classes.len() - 1];
        let k = entity.len() as f64;
        let macro_avg = Prf {
            precision: entity.iter().map(|(_, m)| m.precision).sum::<f64>() / k,
            recall: entity.iter().map(|(_, m)| m.recall).sum::<f64>() / k,
            f1: entity.iter().map(|(_, m)| m.f1).sum::<f64>() / k,
            support: pooled.support,
        };
        MetricsReport { grouping, confusion, classes, micro, macro_avg }
    }

    pub fn class(&self, name: &str) -> Option<&Prf> {
        self.classes.iter().find(|(n, _)| *n == name).map(|(_, m)| m)
    }
}

fn confusion_of(id: &str, gold: &[Label], pred: &[Label]) -> Result<Confusion, MetricsError> {
    if gold.len() != pred.len() {
        return Err(MetricsError::LengthMismatch { id: id.to_string(), gold: gold.len(), pred: pred.len() });
    }
    let mut c = Confusion::default();
    for (&g, &p) in gold.iter().zip(pred) {
        c.add(g, p);
    }
    Ok(c)
}

/// Scores one label sequence against its gold sequence.
pub fn score(gold: &[Label], pred: &[Label], grouping: ClassGrouping) -> Result<MetricsReport, MetricsError> {
    Ok(MetricsReport::from_confusion(confusion_of("sequence", gold, pred)?, grouping))
}

/// Pools token counts over `(id, gold, pred)` triples, then scores.
pub fn score_corpus<'a, I>(pairs: I, grouping: ClassGrouping) -> Result<MetricsReport, MetricsError>
where
    I: IntoIterator<Item = (&'a str, &'a [Label], &'a [Label])>,
{
    let mut total = Confusion::default();
    for (id, gold, pred) in pairs {
        total.merge(&confusion_of(id, gold, pred)?);
    }
    Ok(MetricsReport::from_confusion(total, grouping))
}

/// The grid-search objective: micro-F1 over T, C and V, O excluded.
pub fn calibration_objective(confusion: &Confusion) -> f64 {
    MetricsReport::from_confusion(*confusion, ClassGrouping::FourClass).micro.f1
}

/// A JSON number printed with exactly four fractional digits.
pub(crate) fn fixed4(x: f64) -> Box<RawValue> {
    RawValue::from_string(format!("{x:.4}")).expect("formatted float is valid JSON")
}

struct PrfJson<'a>(&'a Prf);

impl Serialize for PrfJson<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(4))?;
        m.serialize_entry("precision", &fixed4(self.0.precision))?;
        m.serialize_entry("recall", &fixed4(self.0.recall))?;
        m.serialize_entry("f1", &fixed4(self.0.f1))?;
        m.serialize_entry("support", &self.0.support)?;
        m.end()
    }
}

struct ClassesJson<'a>(&'a [(&'static str, Prf)]);

impl Serialize for ClassesJson<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(self.0.len()))?;
        for (name, prf) in self.0 {
            m.serialize_entry(name, &PrfJson(prf))?;
        }
        m.end()
    }
}

impl Serialize for MetricsReport {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(4))?;
        m.serialize_entry("grouping", self.grouping.as_str())?;
        m.serialize_entry("classes", &ClassesJson(&self.classes))?;
        m.serialize_entry("micro", &PrfJson(&self.micro))?;
        m.serialize_entry("macro", &PrfJson(&self.macro_avg))?;
        m.end()
    }
}
