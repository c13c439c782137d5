//! Domain types shared by every stage of the annotation pipeline.
//!
//! Spans are half-open over token indices. Labels carry the entity type
//! only; two adjacent entities of the same type are told apart through
//! the [`EntityLink`]s of an [`Annotation`], which are the source of truth.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CoreError {
    #[error("span {start}..{end} out of range for {len} tokens")]
    SpanOutOfBounds { start: usize, end: usize, len: usize },
    #[error("links {first} and {second} overlap")]
    OverlappingLinks { first: usize, second: usize },
    #[error("entity {0} is linked more than once")]
    DuplicateEntity(usize),
    #[error("entity index {index} out of range for {len} entities")]
    EntityOutOfBounds { index: usize, len: usize },
    #[error("invalid token: {0}")]
    InvalidToken(String),
    #[error("{0}")]
    Invalid(String),
}

/// Kind of database object a mention refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EntityType {
    #[serde(rename = "T")]
    Table,
    #[serde(rename = "C")]
    Column,
    #[serde(rename = "V")]
    Value,
}

impl EntityType {
    pub const ALL: [EntityType; 3] = [EntityType::Table, EntityType::Column, EntityType::Value];

    pub const fn as_str(self) -> &'static str {
        match self {
            EntityType::Table => "T",
            EntityType::Column => "C",
            EntityType::Value => "V",
        }
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-token label: an entity type, or `None` ("O") for tokens outside
/// every entity mention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    None,
    Entity(EntityType),
}

impl Label {
    pub const T: Label = Label::Entity(EntityType::Table);
    pub const C: Label = Label::Entity(EntityType::Column);
    pub const V: Label = Label::Entity(EntityType::Value);
    pub const O: Label = Label::None;

    pub const ALL: [Label; 4] = [Label::T, Label::C, Label::V, Label::O];

    pub const fn as_str(self) -> &'static str {
        match self {
            Label::None => "O",
            Label::Entity(t) => t.as_str(),
        }
    }

    /// Tag id used by the `<id_k>` sequence encoding.
    pub const fn tag_id(self) -> u8 {
        match self {
            Label::None => 0,
            Label::Entity(EntityType::Table) => 1,
            Label::Entity(EntityType::Column) => 2,
            Label::Entity(EntityType::Value) => 3,
        }
    }

    pub fn tag_token(self) -> String {
        format!("<id_{}>", self.tag_id())
    }

    pub fn is_entity(self) -> bool {
        matches!(self, Label::Entity(_))
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Label {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "O" => Ok(Label::O),
            "T" => Ok(Label::T),
            "C" => Ok(Label::C),
            "V" => Ok(Label::V),
            other => Err(CoreError::Invalid(format!("unknown label {other:?}"))),
        }
    }
}

impl Serialize for Label {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl From<EntityType> for Label {
    fn from(t: EntityType) -> Self {
        Label::Entity(t)
    }
}

/// A word or punctuation token. Offsets are character (not byte) indices
/// into the raw question, end exclusive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub char_start: usize,
    pub char_end: usize,
}

/// A tokenized natural-language question.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NlqDoc {
    raw: String,
    tokens: Vec<Token>,
}

impl NlqDoc {
    /// Builds a document, checking that tokens are ordered, disjoint,
    /// match their raw slices and cover every non-whitespace character.
    pub fn new(raw: impl Into<String>, tokens: Vec<Token>) -> Result<Self, CoreError> {
        let raw = raw.into();
        let chars: Vec<char> = raw.chars().collect();
        let mut covered = vec![false; chars.len()];
        let mut prev_end = 0usize;
        for (i, tok) in tokens.iter().enumerate() {
            if tok.text.is_empty() || tok.char_start >= tok.char_end {
                return Err(CoreError::InvalidToken(format!("token {i} is empty")));
            }
            if tok.char_end > chars.len() {
                return Err(CoreError::InvalidToken(format!("token {i} runs past the text")));
            }
            if i > 0 && tok.char_start < prev_end {
                return Err(CoreError::InvalidToken(format!("token {i} overlaps its predecessor")));
            }
            let slice: String = chars[tok.char_start..tok.char_end].iter().collect();
            if slice != tok.text {
                return Err(CoreError::InvalidToken(format!(
                    "token {i} text {:?} differs from raw slice {slice:?}",
                    tok.text
                )));
            }
            covered[tok.char_start..tok.char_end].iter_mut().for_each(|c| *c = true);
            prev_end = tok.char_end;
        }
        if let Some(pos) = chars.iter().zip(&covered).position(|(c, cov)| !cov && !c.is_whitespace()) {
            return Err(CoreError::InvalidToken(format!("character {pos} is not covered by any token")));
        }
        Ok(NlqDoc { raw, tokens })
    }

    /// Rebuilds a document from pre-split token texts, joined by single spaces.
    pub fn from_token_texts<S: AsRef<str>>(texts: &[S]) -> Result<Self, CoreError> {
        let mut raw = String::new();
        let mut tokens = Vec::with_capacity(texts.len());
        let mut pos = 0usize;
        for (i, t) in texts.iter().enumerate() {
            let t = t.as_ref();
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(CoreError::InvalidToken(format!("token {i} {t:?} is empty or contains whitespace")));
            }
            if i > 0 {
                raw.push(' ');
                pos += 1;
            }
            let len = t.chars().count();
            raw.push_str(t);
            tokens.push(Token { text: t.to_string(), char_start: pos, char_end: pos + len });
            pos += len;
        }
        Ok(NlqDoc { raw, tokens })
    }

    pub(crate) fn from_parts_unchecked(raw: String, tokens: Vec<Token>) -> Self {
        NlqDoc { raw, tokens }
    }

    pub fn raw(&self) -> &str {
        &self.raw
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token_texts(&self) -> Vec<String> {
        self.tokens.iter().map(|t| t.text.clone()).collect()
    }

    /// Texts of the tokens in `span`, joined by one space.
    pub fn span_text(&self, span: Span) -> Result<String, CoreError> {
        span.check(self.len())?;
        let parts: Vec<&str> = self.tokens[span.start..span.end].iter().map(|t| t.text.as_str()).collect();
        Ok(parts.join(" "))
    }
}

/// Free-function form of [`NlqDoc::span_text`].
pub fn span_text(doc: &NlqDoc, span: Span) -> Result<String, CoreError> {
    doc.span_text(span)
}

/// Half-open token range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub const fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub const fn len(self) -> usize {
        self.end - self.start
    }

    pub const fn is_empty(self) -> bool {
        self.end <= self.start
    }

    pub const fn overlaps(self, other: Span) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub const fn contains(self, token: usize) -> bool {
        self.start <= token && token < self.end
    }

    pub fn check(self, n_tokens: usize) -> Result<(), CoreError> {
        if self.start < self.end && self.end <= n_tokens {
            Ok(())
        } else {
            Err(CoreError::SpanOutOfBounds { start: self.start, end: self.end, len: n_tokens })
        }
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.start, self.end)
    }
}

/// A typed database entity referenced by a query.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DbEntity {
    text: String,
    norm_text: String,
    entity_type: EntityType,
}

impl DbEntity {
    pub fn new(text: impl Into<String>, entity_type: EntityType) -> Result<Self, CoreError> {
        let text = text.into();
        if text.is_empty() {
            return Err(CoreError::Invalid("entity text must not be empty".into()));
        }
        let norm_text = text.to_lowercase();
        Ok(DbEntity { text, norm_text, entity_type })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn norm_text(&self) -> &str {
        &self.norm_text
    }

    pub fn entity_type(&self) -> EntityType {
        self.entity_type
    }
}

impl fmt::Display for DbEntity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.text, self.entity_type)
    }
}

/// Entities of one query, deduplicated on `(norm_text, entity_type)` and
/// kept in first-occurrence order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EntitySet {
    entities: Vec<DbEntity>,
}

impl EntitySet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts unless an entity with the same normalized text and type is
    /// present. Returns the index of the stored entity.
    pub fn insert(&mut self, entity: DbEntity) -> usize {
        if let Some(i) =
            self.entities.iter().position(|e| e.entity_type == entity.entity_type && e.norm_text == entity.norm_text)
        {
            return i;
        }
        self.entities.push(entity);
        self.entities.len() - 1
    }

    pub fn get(&self, index: usize) -> Option<&DbEntity> {
        self.entities.get(index)
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, DbEntity> {
        self.entities.iter()
    }

    pub fn as_slice(&self) -> &[DbEntity] {
        &self.entities
    }
}

impl FromIterator<DbEntity> for EntitySet {
    fn from_iter<I: IntoIterator<Item = DbEntity>>(iter: I) -> Self {
        let mut set = EntitySet::new();
        for e in iter {
            set.insert(e);
        }
        set
    }
}

impl<'a> IntoIterator for &'a EntitySet {
    type Item = &'a DbEntity;
    type IntoIter = std::slice::Iter<'a, DbEntity>;

    fn into_iter(self) -> Self::IntoIter {
        self.entities.iter()
    }
}

/// One span linked to one entity of an [`EntitySet`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntityLink {
    pub span: Span,
    pub entity_index: usize,
    pub score: f64,
}

/// Projects links onto a per-token label sequence.
pub fn labels_from_links(doc: &NlqDoc, links: &[EntityLink], entities: &EntitySet) -> Result<Vec<Label>, CoreError> {
    let n = doc.len();
    let mut labels = vec![Label::None; n];
    let mut owner: Vec<Option<usize>> = vec![None; n];
    for (li, link) in links.iter().enumerate() {
        link.span.check(n)?;
        let entity = entities
            .get(link.entity_index)
            .ok_or(CoreError::EntityOutOfBounds { index: link.entity_index, len: entities.len() })?;
        for tok in link.span.start..link.span.end {
            if let Some(prev) = owner[tok] {
                return Err(CoreError::OverlappingLinks { first: prev, second: li });
            }
            owner[tok] = Some(li);
            labels[tok] = Label::Entity(entity.entity_type());
        }
    }
    Ok(labels)
}

/// Links of a question together with the label sequence they induce.
#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    pub id: String,
    pub doc: NlqDoc,
    pub entities: EntitySet,
    links: Vec<EntityLink>,
    labels: Vec<Label>,
}

impl Annotation {
    /// Validates the links (non-overlapping, one per entity) and derives
    /// the label sequence. Links are stored sorted by span start.
    pub fn new(
        id: impl Into<String>,
        doc: NlqDoc,
        entities: EntitySet,
        mut links: Vec<EntityLink>,
    ) -> Result<Self, CoreError> {
        let mut seen = vec![false; entities.len()];
        for link in &links {
            if link.entity_index >= entities.len() {
                return Err(CoreError::EntityOutOfBounds { index: link.entity_index, len: entities.len() });
            }
            if std::mem::replace(&mut seen[link.entity_index], true) {
                return Err(CoreError::DuplicateEntity(link.entity_index));
            }
        }
        links.sort_by_key(|l| (l.span.start, l.span.end));
        let labels = labels_from_links(&doc, &links, &entities)?;
        Ok(Annotation { id: id.into(), doc, entities, links, labels })
    }

    pub fn links(&self) -> &[EntityLink] {
        &self.links
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn entity(&self, link: &EntityLink) -> &DbEntity {
        // index validated at construction
        &self.entities.as_slice()[link.entity_index]
    }

    pub fn tag_ids(&self) -> String {
        self.labels.iter().map(|l| l.tag_token()).collect::<Vec<_>>().join(" ")
    }
}

/// A question paired with its SQL query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawPair {
    pub id: String,
    pub question: String,
    pub sql: String,
}

impl RawPair {
    pub fn new(id: impl Into<String>, question: impl Into<String>, sql: impl Into<String>) -> Result<Self, CoreError> {
        let pair = RawPair { id: id.into(), question: question.into(), sql: sql.into() };
        if pair.question.trim().is_empty() || pair.sql.trim().is_empty() {
            return Err(CoreError::Invalid(format!("record {}: question and sql must be non-empty", pair.id)));
        }
        Ok(pair)
    }
}

/// A human-labelled question.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldExample {
    pub id: String,
    pub tokens: Vec<String>,
    pub labels: Vec<Label>,
    pub sql: Option<String>,
}

impl GoldExample {
    pub fn new(
        id: impl Into<String>,
        tokens: Vec<String>,
        labels: Vec<Label>,
        sql: Option<String>,
    ) -> Result<Self, CoreError> {
        let id = id.into();
        if tokens.len() != labels.len() {
            return Err(CoreError::Invalid(format!("gold {id}: {} tokens but {} labels", tokens.len(), labels.len())));
        }
        Ok(GoldExample { id, tokens, labels, sql })
    }
}
