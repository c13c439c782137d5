use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::types::{Annotation, EntityType, Label, Span};

/// One annotated question as written to JSONL. Field order is the key
/// order on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedRecord {
    pub id: String,
    pub tokens: Vec<String>,
    pub labels: Vec<Label>,
    pub entities: Vec<RecordEntity>,
    pub tag_ids: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordEntity {
    pub start: usize,
    pub end: usize,
    /// Linked question text.
    pub text: String,
    #[serde(rename = "type")]
    pub entity_type: EntityType,
    /// Entity text as it appears in the query.
    pub entity: String,
    pub score: f64,
}

impl From<&Annotation> for AnnotatedRecord {
    fn from(ann: &Annotation) -> Self {
        let entities = ann
            .links()
            .iter()
            .map(|l| {
                let e = ann.entity(l);
                RecordEntity {
                    start: l.span.start,
                    end: l.span.end,
                    text: ann.doc.span_text(l.span).expect("link span within doc"),
                    entity_type: e.entity_type(),
                    entity: e.text().to_string(),
                    score: l.score,
                }
            })
            .collect();
        AnnotatedRecord {
            id: ann.id.clone(),
            tokens: ann.doc.token_texts(),
            labels: ann.labels().to_vec(),
            entities,
            tag_ids: ann.tag_ids(),
        }
    }
}

impl AnnotatedRecord {
    /// Checks lengths, span bounds and overlap, label/entity agreement
    /// and the tag-id encoding.
    pub fn validate(&self) -> Result<(), String> {
        let n = self.tokens.len();
        if self.labels.len() != n {
            return Err(format!("{} tokens but {} labels", n, self.labels.len()));
        }
        let mut expected = vec![Label::O; n];
        let mut spans: Vec<Span> = Vec::new();
        for e in &self.entities {
            let span = Span::new(e.start, e.end);
            span.check(n).map_err(|err| err.to_string())?;
            if spans.iter().any(|s| s.overlaps(span)) {
                return Err(format!("entity span {span} overlaps another"));
            }
            spans.push(span);
            expected[e.start..e.end].iter_mut().for_each(|l| *l = Label::Entity(e.entity_type));
        }
        if expected != self.labels {
            return Err("labels disagree with entity spans".into());
        }
        let tags: Vec<&str> = self.tag_ids.split_whitespace().collect();
        let want: Vec<String> = self.labels.iter().map(|l| l.tag_token()).collect();
        if tags != want {
            return Err("tag_ids disagree with labels".into());
        }
        Ok(())
    }
}

/// Writes one JSON object per line, LF-terminated.
pub fn write_records<W: Write>(records: &[AnnotatedRecord], out: W) -> std::io::Result<()> {
    let mut out = BufWriter::new(out);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn write_annotations(records: &[AnnotatedRecord], path: &Path) -> Result<(), PipelineError> {
    let io = |source| PipelineError::Io { path: path.to_path_buf(), source };
    let file = File::create(path).map_err(io)?;
    write_records(records, file).map_err(io)
}

pub fn read_annotations(path: &Path) -> Result<Vec<AnnotatedRecord>, PipelineError> {
    let io = |source| PipelineError::Io { path: path.to_path_buf(), source };
    let reader = BufReader::new(File::open(path).map_err(io)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: AnnotatedRecord = serde_json::from_str(&line).map_err(|e| PipelineError::Json {
            path: path.to_path_buf(),
            location: format!("line {}, column {}", i + 1, e.column()),
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}
