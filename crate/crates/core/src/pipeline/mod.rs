//! Dataset ingestion and the annotated-record file formats.

mod dataset;
mod records;
mod stats;

use std::path::PathBuf;

use thiserror::Error;

pub use dataset::{load, load_gold, parse_dataset, parse_gold, DatasetFormat, GoldRecord};
pub use records::{read_annotations, write_annotations, write_records, AnnotatedRecord, RecordEntity};
pub use stats::{label_stats, LabelStats};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: malformed JSON at {location}: {message}")]
    Json { path: PathBuf, location: String, message: String },
    #[error("{path}: {location}: missing or non-string field {field:?}")]
    MissingField { path: PathBuf, location: String, field: &'static str },
    #[error("{path}: {location}: {message}")]
    Invalid { path: PathBuf, location: String, message: String },
}
