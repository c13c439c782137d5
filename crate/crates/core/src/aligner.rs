//! Span candidates and exact span-to-entity assignment.
//!
//! [`solve`] maximizes the total similarity of the chosen links subject to
//! at most one span per entity and pairwise disjoint spans. Entities whose
//! candidates never share a token are independent, so the candidate graph
//! is split into connected components and each is searched separately by
//! branch and bound. The optimum value is found first; a second pass then
//! branches entities in index order and spans in `(start, end)` order with
//! "no span" last and stops at the first assignment within
//! [`OBJECTIVE_EPS`] of it, which is the canonical one.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::similarity::SimilarityConfig;
use crate::sql::{entities_from_sql, ParseError};
use crate::tokenizer::tokenize;
use crate::types::{Annotation, CoreError, EntityLink, EntitySet, NlqDoc, RawPair, Span};

pub const DEFAULT_MAX_SPAN_TOKENS: usize = 8;

/// Objectives closer than this are treated as equal and fall to the
/// canonical tie-break.
pub const OBJECTIVE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Error)]
pub enum AnnotateError {
    #[error("record {id}: SQL parse error {source}")]
    Parse { id: String, source: ParseError },
    #[error("record {id}: {source}")]
    Core { id: String, source: CoreError },
}

impl AnnotateError {
    pub fn id(&self) -> &str {
        match self {
            AnnotateError::Parse { id, .. } | AnnotateError::Core { id, .. } => id,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredCandidate {
    pub entity_index: usize,
    pub span: Span,
    pub score: f64,
}

/// Candidates that met the threshold, sorted by entity, then span.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    config: SimilarityConfig,
    n_entities: usize,
    candidates: Vec<ScoredCandidate>,
    /// `offsets[e]..offsets[e + 1]` indexes the candidates of entity `e`.
    offsets: Vec<usize>,
}

impl ScoreMatrix {
    /// Builds a matrix from explicit candidates. Scores must lie in
    /// `[threshold, 1]` and each `(entity, span)` pair may appear once.
    pub fn from_candidates(
        config: SimilarityConfig,
        n_entities: usize,
        mut candidates: Vec<ScoredCandidate>,
    ) -> Result<Self, CoreError> {
        for c in &candidates {
            if c.entity_index >= n_entities {
                return Err(CoreError::EntityOutOfBounds { index: c.entity_index, len: n_entities });
            }
            if c.span.is_empty() {
                return Err(CoreError::Invalid(format!("empty candidate span {}", c.span)));
            }
            if !(c.score >= config.threshold && c.score <= 1.0) {
                return Err(CoreError::Invalid(format!(
                    "candidate score {} outside [{}, 1]",
                    c.score, config.threshold
                )));
            }
        }
        candidates.sort_by_key(|c| (c.entity_index, c.span));
        if let Some(w) =
            candidates.windows(2).find(|w| (w[0].entity_index, w[0].span) == (w[1].entity_index, w[1].span))
        {
            return Err(CoreError::Invalid(format!(
                "duplicate candidate for entity {} span {}",
                w[0].entity_index, w[0].span
            )));
        }
        let mut offsets = vec![0; n_entities + 1];
        for c in &candidates {
            offsets[c.entity_index + 1] += 1;
        }
        for e in 0..n_entities {
            offsets[e + 1] += offsets[e];
        }
        Ok(ScoreMatrix { config, n_entities, candidates, offsets })
    }

    pub fn config(&self) -> SimilarityConfig {
        self.config
    }

    pub fn n_entities(&self) -> usize {
        self.n_entities
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, ScoredCandidate> {
        self.candidates.iter()
    }

    pub fn for_entity(&self, entity: usize) -> &[ScoredCandidate] {
        &self.candidates[self.offsets[entity]..self.offsets[entity + 1]]
    }

    pub fn get(&self, entity: usize, span: Span) -> Option<f64> {
        if entity >= self.n_entities {
            return None;
        }
        let row = self.for_entity(entity);
        row.binary_search_by_key(&span, |c| c.span).ok().map(|i| row[i].score)
    }
}

/// Scores every span of at most `max_span_tokens` tokens against every
/// entity and keeps the pairs at or above the threshold.
pub fn candidate_spans(
    doc: &NlqDoc,
    entities: &EntitySet,
    config: SimilarityConfig,
    max_span_tokens: usize,
) -> ScoreMatrix {
    let max_len = max_span_tokens.max(1);
    let n = doc.len();
    let mut spans = Vec::new();
    for start in 0..n {
        for end in start + 1..=(start + max_len).min(n) {
            let span = Span::new(start, end);
            let text = doc.span_text(span).expect("span within doc").to_lowercase();
            spans.push((span, text));
        }
    }
    let mut candidates = Vec::new();
    for (entity_index, entity) in entities.iter().enumerate() {
        for (span, text) in &spans {
            let score = config.score(text, entity.norm_text());
            if score >= config.threshold {
                candidates.push(ScoredCandidate { entity_index, span: *span, score });
            }
        }
    }
    ScoreMatrix::from_candidates(config, entities.len(), candidates).expect("generated candidates are valid")
}

/// An optimal set of links.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    chosen: Vec<Option<(Span, f64)>>,
    objective: f64,
}

impl Alignment {
    pub fn get(&self, entity: usize) -> Option<Span> {
        self.chosen.get(entity).copied().flatten().map(|(s, _)| s)
    }

    pub fn objective(&self) -> f64 {
        self.objective
    }

    pub fn n_links(&self) -> usize {
        self.chosen.iter().flatten().count()
    }

    /// Chosen links in entity order.
    pub fn links(&self) -> Vec<EntityLink> {
        self.chosen
            .iter()
            .enumerate()
            .filter_map(|(entity_index, c)| c.map(|(span, score)| EntityLink { span, entity_index, score }))
            .collect()
    }
}

/// Exact maximum-score assignment of at most one span per entity with
/// pairwise disjoint spans.
pub fn solve(matrix: &ScoreMatrix, n_tokens: usize) -> Alignment {
    let n_tokens = matrix.iter().map(|c| c.span.end).max().unwrap_or(0).max(n_tokens);
    let mut chosen: Vec<Option<(Span, f64)>> = vec![None; matrix.n_entities()];
    for component in components(matrix, n_tokens) {
        let picks = Search::new(matrix, &component, n_tokens).run();
        for (&entity, pick) in component.iter().zip(picks) {
            chosen[entity] = pick.map(|i| {
                let c = matrix.for_entity(entity)[i];
                (c.span, c.score)
            });
        }
    }
    let objective = chosen.iter().flatten().map(|(_, s)| s).sum();
    let alignment = Alignment { chosen, objective };
    debug_assert!(is_feasible(&alignment, matrix));
    alignment
}

fn is_feasible(a: &Alignment, matrix: &ScoreMatrix) -> bool {
    let links = a.links();
    links.iter().all(|l| matrix.get(l.entity_index, l.span) == Some(l.score))
        && links.iter().enumerate().all(|(i, x)| links[i + 1..].iter().all(|y| !x.span.overlaps(y.span)))
}

/// Groups entities that can interact: two entities are linked when some
/// candidates of theirs share a token. Each group is sorted, and groups
/// are ordered by their first entity. Entities without candidates are
/// left out.
fn components(matrix: &ScoreMatrix, n_tokens: usize) -> Vec<Vec<usize>> {
    let n = matrix.n_entities();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut first_at_token: Vec<Option<usize>> = vec![None; n_tokens];
    for c in matrix.iter() {
        for slot in &mut first_at_token[c.span.start..c.span.end] {
            match *slot {
                None => *slot = Some(c.entity_index),
                Some(other) => {
                    let (a, b) = (find(&mut parent, other), find(&mut parent, c.entity_index));
                    if a != b {
                        parent[a.max(b)] = a.min(b);
                    }
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for e in 0..n {
        if !matrix.for_entity(e).is_empty() {
            let root = find(&mut parent, e);
            groups.entry(root).or_default().push(e);
        }
    }
    let mut out: Vec<Vec<usize>> = groups.into_values().collect();
    out.sort_by_key(|g| g[0]);
    out
}

/// Candidate positions of one entity that survive dominance pruning: a
/// candidate is dropped when another of the same entity sits inside its
/// span and scores more than `OBJECTIVE_EPS` higher, since swapping it
/// out would then always improve the objective.
fn undominated(row: &[ScoredCandidate]) -> Vec<usize> {
    (0..row.len())
        .filter(|&i| {
            let b = row[i];
            !row.iter().any(|a| {
                a.span != b.span
                    && b.span.start <= a.span.start
                    && a.span.end <= b.span.end
                    && a.score > b.score + OBJECTIVE_EPS
            })
        })
        .collect()
}

struct Search<'a> {
    /// Candidate rows of the component's entities, in entity order.
    rows: Vec<&'a [ScoredCandidate]>,
    /// Surviving candidate indices per row, in `(start, end)` order.
    keep: Vec<Vec<usize>>,
    /// Component candidates bucketed by span end, for the interval bounds.
    by_end: Vec<Vec<(usize, Span, f64)>>,
    /// Lagrange multipliers on the one-span-per-entity constraints.
    lambda: Vec<f64>,
    occupied: Vec<bool>,
    picks: Vec<Option<usize>>,
    best_picks: Vec<Option<usize>>,
    best: f64,
}

impl<'a> Search<'a> {
    fn new(matrix: &'a ScoreMatrix, entities: &[usize], n_tokens: usize) -> Self {
        let rows: Vec<&[ScoredCandidate]> = entities.iter().map(|&e| matrix.for_entity(e)).collect();
        let keep: Vec<Vec<usize>> = rows.iter().map(|r| undominated(r)).collect();
        let mut by_end = vec![Vec::new(); n_tokens + 1];
        for (k, row) in rows.iter().enumerate() {
            for &i in &keep[k] {
                let c = row[i];
                by_end[c.span.end].push((k, c.span, c.score));
            }
        }
        let m = rows.len();
        Search {
            rows,
            keep,
            by_end,
            lambda: vec![0.0; m],
            occupied: vec![false; n_tokens],
            picks: vec![None; m],
            best_picks: vec![None; m],
            best: 0.0,
        }
    }

    /// Finds the optimal objective, then returns the first assignment in
    /// canonical order that reaches it.
    fn run(mut self) -> Vec<Option<usize>> {
        self.greedy();
        self.tune_lambda();
        let order: Vec<Vec<usize>> = self
            .keep
            .iter()
            .zip(&self.rows)
            .map(|(keep, row)| {
                let mut o = keep.clone();
                o.sort_by(|&a, &b| row[b].score.total_cmp(&row[a].score));
                o
            })
            .collect();
        self.maximize(0, 0.0, &order);
        let target = self.best;
        self.picks.iter_mut().for_each(|p| *p = None);
        let found = self.canonical(0, 0.0, target);
        debug_assert!(found);
        self.best_picks
    }

    fn is_free(&self, span: Span) -> bool {
        self.occupied[span.start..span.end].iter().all(|o| !o)
    }

    fn set(&mut self, span: Span, value: bool) {
        self.occupied[span.start..span.end].iter_mut().for_each(|o| *o = value);
    }

    fn value(&self, picks: &[Option<usize>]) -> f64 {
        picks.iter().zip(&self.rows).filter_map(|(p, row)| p.map(|i| row[i].score)).sum()
    }

    /// Highest score first, skipping used entities and taken tokens.
    fn greedy(&mut self) {
        let mut all: Vec<(usize, usize)> =
            self.keep.iter().enumerate().flat_map(|(k, ks)| ks.iter().map(move |&i| (k, i))).collect();
        all.sort_by(|a, b| self.rows[b.0][b.1].score.total_cmp(&self.rows[a.0][a.1].score));
        let mut picks = vec![None; self.rows.len()];
        for (k, i) in all {
            let span = self.rows[k][i].span;
            if picks[k].is_none() && self.is_free(span) {
                self.set(span, true);
                picks[k] = Some(i);
            }
        }
        self.occupied.iter_mut().for_each(|o| *o = false);
        self.best = self.value(&picks);
        self.best_picks = picks;
    }

    /// Weighted interval schedule over free tokens using candidates of
    /// entities `k..`, each weighted by its score minus its entity's
    /// multiplier. Also reports how often each entity was used.
    fn schedule(&self, k: usize, lambda: &[f64], uses: Option<&mut [i64]>) -> f64 {
        let n = self.occupied.len();
        let mut dp = vec![0.0f64; n + 1];
        let mut back: Vec<Option<(usize, Span)>> = vec![None; n + 1];
        for t in 1..=n {
            dp[t] = dp[t - 1];
            for &(owner, span, score) in &self.by_end[t] {
                if owner >= k && self.is_free(span) {
                    let v = dp[span.start] + score - lambda[owner];
                    if v > dp[t] {
                        dp[t] = v;
                        back[t] = Some((owner, span));
                    }
                }
            }
        }
        if let Some(uses) = uses {
            let mut t = n;
            while t > 0 {
                match back[t] {
                    Some((owner, span)) => {
                        uses[owner] += 1;
                        t = span.start;
                    }
                    None => t -= 1,
                }
            }
        }
        dp[n] + lambda[k..].iter().sum::<f64>()
    }

    /// Subgradient descent on the multipliers at the root.
    fn tune_lambda(&mut self) {
        let m = self.rows.len();
        let zero = vec![0.0; m];
        let mut best_bound = self.schedule(0, &zero, None);
        let mut best_lambda = zero;
        let mut lambda = best_lambda.clone();
        let mut theta = 1.0;
        for _ in 0..60 {
            let mut uses = vec![0i64; m];
            let bound = self.schedule(0, &lambda, Some(&mut uses));
            if bound < best_bound {
                best_bound = bound;
                best_lambda.clone_from(&lambda);
            }
            let gap = bound - self.best;
            let norm: i64 = uses.iter().map(|&u| (1 - u) * (1 - u)).sum();
            if gap <= OBJECTIVE_EPS || norm == 0 {
                break;
            }
            let step = theta * gap / norm as f64;
            for (l, &u) in lambda.iter_mut().zip(&uses) {
                *l = (*l - step * (1 - u) as f64).max(0.0);
            }
            theta *= 0.95;
        }
        self.lambda = best_lambda;
    }

    /// Upper bound on what entities `k..` can still add: the smallest of
    /// the per-entity best free score and the plain and relaxed interval
    /// schedules over free tokens.
    fn bound(&self, k: usize) -> f64 {
        let per_entity: f64 = self.keep[k..]
            .iter()
            .zip(&self.rows[k..])
            .map(|(keep, row)| {
                keep.iter().map(|&i| row[i]).filter(|c| self.is_free(c.span)).map(|c| c.score).fold(0.0, f64::max)
            })
            .sum();
        let zero = vec![0.0; self.rows.len()];
        per_entity.min(self.schedule(k, &zero, None)).min(self.schedule(k, &self.lambda, None))
    }

    fn maximize(&mut self, k: usize, current: f64, order: &[Vec<usize>]) {
        if k == self.rows.len() {
            if current > self.best + OBJECTIVE_EPS {
                self.best = current;
                self.best_picks.clone_from(&self.picks);
            }
            return;
        }
        if current + self.bound(k) <= self.best + OBJECTIVE_EPS {
            return;
        }
        for &i in &order[k] {
            let c = self.rows[k][i];
            if self.is_free(c.span) {
                self.set(c.span, true);
                self.picks[k] = Some(i);
                self.maximize(k + 1, current + c.score, order);
                self.picks[k] = None;
                self.set(c.span, false);
            }
        }
        self.maximize(k + 1, current, order);
    }

    /// First assignment in canonical order within `OBJECTIVE_EPS` of `target`.
    fn canonical(&mut self, k: usize, current: f64, target: f64) -> bool {
        if k == self.rows.len() {
            if current >= target - OBJECTIVE_EPS {
                self.best_picks.clone_from(&self.picks);
                return true;
            }
            return false;
        }
        if current + self.bound(k) < target - OBJECTIVE_EPS {
            return false;
        }
        for j in 0..self.keep[k].len() {
            let i = self.keep[k][j];
            let c = self.rows[k][i];
            if self.is_free(c.span) {
                self.set(c.span, true);
                self.picks[k] = Some(i);
                let found = self.canonical(k + 1, current + c.score, target);
                self.picks[k] = None;
                self.set(c.span, false);
                if found {
                    return true;
                }
            }
        }
        self.canonical(k + 1, current, target)
    }
}

/// Aligns a pre-tokenized question against the entities of `sql`.
pub fn annotate_doc(
    id: &str,
    doc: NlqDoc,
    sql: &str,
    config: SimilarityConfig,
    max_span_tokens: usize,
) -> Result<Annotation, AnnotateError> {
    let entities = entities_from_sql(sql).map_err(|source| AnnotateError::Parse { id: id.to_string(), source })?;
    annotate_with_entities(id, doc, entities, config, max_span_tokens)
}

pub fn annotate_with_entities(
    id: &str,
    doc: NlqDoc,
    entities: EntitySet,
    config: SimilarityConfig,
    max_span_tokens: usize,
) -> Result<Annotation, AnnotateError> {
    let matrix = candidate_spans(&doc, &entities, config, max_span_tokens);
    let alignment = solve(&matrix, doc.len());
    Annotation::new(id, doc, entities, alignment.links())
        .map_err(|source| AnnotateError::Core { id: id.to_string(), source })
}

/// Tokenizes the question, extracts the query's entities and links them.
pub fn annotate(pair: &RawPair, config: SimilarityConfig, max_span_tokens: usize) -> Result<Annotation, AnnotateError> {
    annotate_doc(&pair.id, tokenize(&pair.question), &pair.sql, config, max_span_tokens)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::similarity::SimilarityMeasure;
    use crate::types::{DbEntity, EntityType, Label};

    fn cfg(t: f64) -> SimilarityConfig {
        SimilarityConfig::new(SimilarityMeasure::Jaccard3, t).unwrap()
    }

    fn matrix(n_entities: usize, cands: &[(usize, usize, usize, f64)]) -> ScoreMatrix {
        let cands = cands
            .iter()
            .map(|&(e, s, t, score)| ScoredCandidate { entity_index: e, span: Span::new(s, t), score })
            .collect();
        ScoreMatrix::from_candidates(cfg(0.1), n_entities, cands).unwrap()
    }

    #[test]
    fn prefers_two_links_over_one_long() {
        let m = matrix(2, &[(0, 0, 2, 0.95), (0, 0, 1, 0.90), (1, 1, 2, 0.80)]);
        let a = solve(&m, 3);
        assert_eq!(a.get(0), Some(Span::new(0, 1)));
        assert_eq!(a.get(1), Some(Span::new(1, 2)));
        assert!((a.objective() - 1.70).abs() < 1e-12);
    }

    #[test]
    fn single_candidate_and_empty() {
        let m = matrix(1, &[(0, 2, 3, 0.4)]);
        assert_eq!(solve(&m, 3).get(0), Some(Span::new(2, 3)));
        let empty = matrix(3, &[]);
        let a = solve(&empty, 5);
        assert_eq!(a.n_links(), 0);
        assert_eq!(a.objective(), 0.0);
    }

    #[test]
    fn tie_goes_to_lower_entity_then_earlier_span() {
        let m = matrix(2, &[(0, 1, 2, 0.9), (1, 1, 2, 0.9)]);
        let a = solve(&m, 3);
        assert_eq!(a.get(0), Some(Span::new(1, 2)));
        assert_eq!(a.get(1), None);

        let m = matrix(1, &[(0, 0, 1, 0.5), (0, 2, 3, 0.5)]);
        assert_eq!(solve(&m, 3).get(0), Some(Span::new(0, 1)));
    }

    #[test]
    fn matrix_rejects_bad_candidates() {
        let c = |score| vec![ScoredCandidate { entity_index: 0, span: Span::new(0, 1), score }];
        assert!(ScoreMatrix::from_candidates(cfg(0.5), 1, c(0.4)).is_err());
        assert!(ScoreMatrix::from_candidates(cfg(0.5), 1, c(1.5)).is_err());
        assert!(ScoreMatrix::from_candidates(cfg(0.5), 0, c(0.6)).is_err());
        let mut dup = c(0.6);
        dup.extend(c(0.7));
        assert!(ScoreMatrix::from_candidates(cfg(0.5), 1, dup).is_err());
    }

    #[test]
    fn candidate_generation_examples() {
        let doc = tokenize("Name movie titles released in 1945, and order by popularity");
        let ents: EntitySet = [DbEntity::new("movies", EntityType::Table).unwrap()].into_iter().collect();
        let m = candidate_spans(&doc, &ents, cfg(0.5), DEFAULT_MAX_SPAN_TOKENS);
        assert_eq!(m.get(0, Span::new(1, 2)), Some(0.75));

        assert!(candidate_spans(&doc, &EntitySet::new(), cfg(0.5), 8).is_empty());

        let doc = tokenize("order by popularity");
        let ents: EntitySet = [DbEntity::new("pop", EntityType::Column).unwrap()].into_iter().collect();
        let m = candidate_spans(&doc, &ents, cfg(0.5), 8);
        assert_eq!(m.get(0, Span::new(2, 3)), None);
        let m = candidate_spans(&doc, &ents, cfg(0.1), 8);
        assert_eq!(m.get(0, Span::new(2, 3)), Some(0.125));
    }

    #[test]
    fn span_cap_respected() {
        let doc = tokenize("a b c d e");
        let ents: EntitySet = [DbEntity::new("a b c", EntityType::Value).unwrap()].into_iter().collect();
        let m = candidate_spans(&doc, &ents, cfg(0.1), 2);
        assert!(m.iter().all(|c| c.span.len() <= 2));
    }

    #[test]
    fn annotate_movies_example() {
        let pair = RawPair::new(
            "ex",
            "Name movie titles released in 1945, and order by popularity",
            "SELECT title FROM movies WHERE year = 1945 ORDER BY pop",
        )
        .unwrap();
        let ann = annotate(&pair, cfg(0.1), DEFAULT_MAX_SPAN_TOKENS).unwrap();
        let labels: Vec<&str> = ann.labels().iter().map(|l| l.as_str()).collect();
        assert_eq!(labels, ["O", "T", "C", "O", "O", "V", "O", "O", "O", "O", "C"]);
        let links: Vec<(String, String)> =
            ann.links().iter().map(|l| (ann.doc.span_text(l.span).unwrap(), ann.entity(l).to_string())).collect();
        assert_eq!(
            links,
            [
                ("movie".to_string(), "movies:T".to_string()),
                ("titles".into(), "title:C".into()),
                ("1945".into(), "1945:V".into()),
                ("popularity".into(), "pop:C".into()),
            ]
        );
    }

    #[test]
    fn optional_selection_and_no_match() {
        let pair = RawPair::new("y", "show year 1945", "SELECT year FROM t WHERE year = 1945").unwrap();
        let ann = annotate(&pair, cfg(0.5), 8).unwrap();
        assert_eq!(ann.labels(), [Label::O, Label::C, Label::V]);
        assert_eq!(ann.links().len(), 2);

        let pair = RawPair::new("z", "hello there", "SELECT q FROM zzz").unwrap();
        let ann = annotate(&pair, cfg(0.5), 8).unwrap();
        assert!(ann.links().is_empty());
        assert!(ann.labels().iter().all(|l| *l == Label::O));
    }

    #[test]
    fn parse_error_carries_id() {
        let pair = RawPair::new("bad", "q", "SELEC x").unwrap();
        let err = annotate(&pair, cfg(0.5), 8).unwrap_err();
        assert_eq!(err.id(), "bad");
        assert!(matches!(err, AnnotateError::Parse { .. }));
    }
}
