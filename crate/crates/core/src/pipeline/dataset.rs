use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde_json::{Map, Value};

use super::PipelineError;
use crate::tokenizer::tokenize;
use crate::types::{GoldExample, Label, RawPair};

/// Layout of a question/SQL dataset file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    /// JSON array of objects with `question` and `query`.
    SpiderJson,
    /// JSON array of objects with `question` and `SQL`.
    BirdJson,
    /// One `{"id", "question", "sql"}` object per line.
    GenericJsonl,
}

impl DatasetFormat {
    fn sql_key(self) -> &'static str {
        match self {
            DatasetFormat::SpiderJson => "query",
            DatasetFormat::BirdJson => "SQL",
            DatasetFormat::GenericJsonl => "sql",
        }
    }
}

impl FromStr for DatasetFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "spider" | "spider_json" => Ok(DatasetFormat::SpiderJson),
            "bird" | "bird_json" => Ok(DatasetFormat::BirdJson),
            "jsonl" | "generic" | "generic_jsonl" => Ok(DatasetFormat::GenericJsonl),
            other => Err(format!("unknown dataset format {other:?} (expected spider, bird or jsonl)")),
        }
    }
}

impl fmt::Display for DatasetFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetFormat::SpiderJson => "spider",
            DatasetFormat::BirdJson => "bird",
            DatasetFormat::GenericJsonl => "jsonl",
        })
    }
}

fn read(path: &Path) -> Result<String, PipelineError> {
    std::fs::read_to_string(path).map_err(|source| PipelineError::Io { path: path.to_path_buf(), source })
}

pub fn load(path: &Path, format: DatasetFormat) -> Result<Vec<RawPair>, PipelineError> {
    parse_dataset(&read(path)?, format, path)
}

/// Non-blank lines of a JSONL text with their 1-based line numbers.
fn jsonl_objects<'a>(
    text: &'a str,
    path: &'a Path,
) -> impl Iterator<Item = Result<(String, Map<String, Value>), PipelineError>> + 'a {
    text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()).map(move |(i, line)| {
        let location = format!("line {}", i + 1);
        match serde_json::from_str::<Value>(line) {
            Ok(Value::Object(obj)) => Ok((location, obj)),
            Ok(_) => {
                Err(PipelineError::Invalid { path: path.into(), location, message: "expected a JSON object".into() })
            }
            Err(e) => Err(PipelineError::Json {
                path: path.into(),
                location: format!("{location}, column {}", e.column()),
                message: e.to_string(),
            }),
        }
    })
}

fn json_array(text: &str, path: &Path) -> Result<Vec<Value>, PipelineError> {
    match serde_json::from_str::<Value>(text) {
        Ok(Value::Array(items)) => Ok(items),
        Ok(_) => Err(PipelineError::Invalid {
            path: path.into(),
            location: "top level".into(),
            message: "expected a JSON array".into(),
        }),
        Err(e) => Err(PipelineError::Json {
            path: path.into(),
            location: format!("line {}, column {}", e.line(), e.column()),
            message: e.to_string(),
        }),
    }
}

fn string_field(
    obj: &Map<String, Value>,
    key: &'static str,
    path: &Path,
    location: &str,
) -> Result<String, PipelineError> {
    match obj.get(key) {
        Some(Value::String(s)) => Ok(s.clone()),
        _ => Err(PipelineError::MissingField { path: path.into(), location: location.to_string(), field: key }),
    }
}

fn id_field(obj: &Map<String, Value>, index: usize) -> String {
    for key in ["id", "question_id"] {
        match obj.get(key) {
            Some(Value::String(s)) => return s.clone(),
            Some(Value::Number(n)) => return n.to_string(),
            _ => {}
        }
    }
    index.to_string()
}

/// Parses dataset text; `path` is only used in error messages.
pub fn parse_dataset(text: &str, format: DatasetFormat, path: &Path) -> Result<Vec<RawPair>, PipelineError> {
    let objects: Vec<(String, Map<String, Value>)> = match format {
        DatasetFormat::GenericJsonl => jsonl_objects(text, path).collect::<Result<_, _>>()?,
        _ => json_array(text, path)?
            .into_iter()
            .enumerate()
            .map(|(i, v)| match v {
                Value::Object(obj) => Ok((format!("record {i}"), obj)),
                _ => Err(PipelineError::Invalid {
                    path: path.into(),
                    location: format!("record {i}"),
                    message: "expected a JSON object".into(),
                }),
            })
            .collect::<Result<_, _>>()?,
    };
    objects
        .into_iter()
        .enumerate()
        .map(|(index, (location, obj))| {
            let question = string_field(&obj, "question", path, &location)?;
            let sql = string_field(&obj, format.sql_key(), path, &location)?;
            RawPair::new(id_field(&obj, index), question, sql).map_err(|e| PipelineError::Invalid {
                path: path.into(),
                location,
                message: e.to_string(),
            })
        })
        .collect()
}

/// A labelled record: gold annotations, or predictions in the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct GoldRecord {
    pub example: GoldExample,
    pub question: Option<String>,
}

pub fn load_gold(path: &Path) -> Result<Vec<GoldRecord>, PipelineError> {
    parse_gold(&read(path)?, path)
}

/// Parses gold JSONL: `id`, `labels`, and `tokens` and/or `question`
/// (tokenized when `tokens` is absent), plus optional `sql`.
pub fn parse_gold(text: &str, path: &Path) -> Result<Vec<GoldRecord>, PipelineError> {
    let path_buf: PathBuf = path.into();
    let invalid = |location: &str, message: String| PipelineError::Invalid {
        path: path_buf.clone(),
        location: location.to_string(),
        message,
    };
    let mut out = Vec::new();
    for (index, item) in jsonl_objects(text, path).enumerate() {
        let (location, obj) = item?;
        let id = id_field(&obj, index);
        let question = obj.get("question").and_then(Value::as_str).map(str::to_string);
        let tokens: Option<Vec<String>> = match obj.get("tokens") {
            None => None,
            Some(v) => Some(
                serde_json::from_value(v.clone()).map_err(|e| invalid(&location, format!("bad \"tokens\": {e}")))?,
            ),
        };
        let tokens = match (tokens, &question) {
            (Some(t), Some(q)) => {
                if tokenize(q).token_texts() != t {
                    return Err(invalid(&location, "\"tokens\" differ from the tokenized \"question\"".into()));
                }
                t
            }
            (Some(t), None) => t,
            (None, Some(q)) => tokenize(q).token_texts(),
            (None, None) => {
                return Err(PipelineError::MissingField { path: path.into(), location, field: "tokens" });
            }
        };
        let labels: Vec<Label> = match obj.get("labels") {
            Some(v) => {
                serde_json::from_value(v.clone()).map_err(|e| invalid(&location, format!("bad \"labels\": {e}")))?
            }
            None => return Err(PipelineError::MissingField { path: path.into(), location, field: "labels" }),
        };
        let sql = obj.get("sql").and_then(Value::as_str).map(str::to_string);
        let example = GoldExample::new(id, tokens, labels, sql).map_err(|e| invalid(&location, e.to_string()))?;
        out.push(GoldRecord { example, question });
    }
    Ok(out)
}
