//! Synthetic database-entity annotation.
//!
//! A question is tagged with the tables, columns and values of its paired
//! SQL query: entities are pulled out of the query's syntax tree, every
//! token span is scored against every entity with a string similarity, and
//! an exact solver picks the highest-scoring set of non-overlapping links.
//! The similarity measure and threshold are chosen by grid search against
//! human labels.

pub mod aligner;
pub mod calibrate;
pub mod metrics;
pub mod pipeline;
pub mod similarity;
pub mod sql;
pub mod tokenizer;
pub mod types;

pub use aligner::{annotate, candidate_spans, solve, Alignment, ScoreMatrix, ScoredCandidate, DEFAULT_MAX_SPAN_TOKENS};
pub use calibrate::{augment, calibrate, CalibrationReport, GridCell, SkipEntry};
pub use metrics::{score, score_corpus, ClassGrouping, MetricsReport};
pub use similarity::{jaccard3, levenshtein_sim, SimilarityConfig, SimilarityMeasure};
pub use sql::{entities_from_sql, extract_entities, parse_sql, ParseError, SqlAst};
pub use tokenizer::tokenize;
pub use types::{
    labels_from_links, span_text, Annotation, CoreError, DbEntity, EntityLink, EntitySet, EntityType, GoldExample,
    Label, NlqDoc, RawPair, Span, Token,
};
