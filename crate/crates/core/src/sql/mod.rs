//! SQL parsing and database-entity extraction.

pub mod ast;
mod extract;
mod lexer;
mod parser;

use thiserror::Error;

pub use ast::Query as SqlAst;
pub use extract::{entities_from_sql, extract_entities};
pub use parser::parse_sql;

/// Syntax error with the byte offset where parsing stopped.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("at byte {offset}: expected {expected}, found {found}")]
pub struct ParseError {
    pub offset: usize,
    pub expected: String,
    pub found: String,
}

impl ParseError {
    pub(crate) fn new(offset: usize, expected: impl Into<String>, found: impl Into<String>) -> Self {
        ParseError { offset, expected: expected.into(), found: found.into() }
    }
}
