//! Python bindings: `import dbtag`.

use dbtag_core::calibrate::SkipEntry;
use dbtag_core::metrics::Prf;
use dbtag_core::pipeline::AnnotatedRecord;
use dbtag_core::{ClassGrouping, GoldExample, Label, RawPair, SimilarityConfig, SimilarityMeasure};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

type Augmented = (Vec<PyAnnotation>, Vec<(String, String)>);

fn value_error(e: impl ToString) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn config(measure: &str, threshold: f64) -> PyResult<SimilarityConfig> {
    let measure: SimilarityMeasure = measure.parse().map_err(value_error)?;
    SimilarityConfig::new(measure, threshold).map_err(value_error)
}

fn labels(names: &[String]) -> PyResult<Vec<Label>> {
    names.iter().map(|l| l.parse::<Label>().map_err(value_error)).collect()
}

/// One annotated question.
#[pyclass(name = "Annotation", module = "dbtag", frozen)]
struct PyAnnotation {
    record: AnnotatedRecord,
}

#[pymethods]
impl PyAnnotation {
    #[getter]
    fn id(&self) -> &str {
        &self.record.id
    }

    #[getter]
    fn tokens(&self) -> Vec<String> {
        self.record.tokens.clone()
    }

    #[getter]
    fn labels(&self) -> Vec<&'static str> {
        self.record.labels.iter().map(|l| l.as_str()).collect()
    }

    /// `(start, end, text, type, entity, score)` per link, in span order.
    #[getter]
    fn links(&self) -> Vec<(usize, usize, String, &'static str, String, f64)> {
        self.record
            .entities
            .iter()
            .map(|e| (e.start, e.end, e.text.clone(), e.entity_type.as_str(), e.entity.clone(), e.score))
            .collect()
    }

    #[getter]
    fn tag_ids(&self) -> &str {
        &self.record.tag_ids
    }

    /// The JSONL record, without the trailing newline.
    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.record).map_err(value_error)
    }

    fn __repr__(&self) -> String {
        format!("Annotation(id={:?}, labels={:?})", self.record.id, self.labels())
    }
}

#[pyfunction]
fn tokenize(text: &str) -> Vec<String> {
    dbtag_core::tokenize(text).token_texts()
}

/// `(text, type)` pairs in extraction order. Raises `ValueError` on
/// unparseable SQL.
#[pyfunction]
fn extract_entities(sql: &str) -> PyResult<Vec<(String, &'static str)>> {
    let set = dbtag_core::entities_from_sql(sql).map_err(value_error)?;
    Ok(set.iter().map(|e| (e.text().to_string(), e.entity_type().as_str())).collect())
}

#[pyfunction]
fn jaccard3(a: &str, b: &str) -> f64 {
    dbtag_core::jaccard3(a, b)
}

#[pyfunction]
fn levenshtein_sim(a: &str, b: &str) -> f64 {
    dbtag_core::levenshtein_sim(a, b)
}

#[pyfunction]
#[pyo3(signature = (question, sql, measure = "jaccard3", threshold = 0.1, max_span = 8, id = "0"))]
fn annotate(
    question: &str,
    sql: &str,
    measure: &str,
    threshold: f64,
    max_span: usize,
    id: &str,
) -> PyResult<PyAnnotation> {
    let pair = RawPair::new(id, question, sql).map_err(value_error)?;
    let ann = dbtag_core::annotate(&pair, config(measure, threshold)?, max_span).map_err(value_error)?;
    Ok(PyAnnotation { record: AnnotatedRecord::from(&ann) })
}

/// Annotates `(id, question, sql)` triples. Returns the annotations in
/// input order and `(id, reason)` for every skipped pair.
#[pyfunction]
#[pyo3(signature = (pairs, measure, threshold, max_span = 8))]
fn augment(
    py: Python<'_>,
    pairs: Vec<(String, String, String)>,
    measure: &str,
    threshold: f64,
    max_span: usize,
) -> PyResult<Augmented> {
    let cfg = config(measure, threshold)?;
    let raw: Vec<RawPair> =
        pairs.into_iter().map(|(id, q, s)| RawPair::new(id, q, s).map_err(value_error)).collect::<PyResult<_>>()?;
    let (anns, skipped) = py.allow_threads(|| dbtag_core::augment(&raw, cfg, max_span));
    let anns = anns.iter().map(|a| PyAnnotation { record: AnnotatedRecord::from(a) }).collect();
    Ok((anns, skipped.into_iter().map(|SkipEntry { id, reason }| (id, reason)).collect()))
}

fn prf_dict<'py>(py: Python<'py>, m: &Prf) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("precision", m.precision)?;
    d.set_item("recall", m.recall)?;
    d.set_item("f1", m.f1)?;
    d.set_item("support", m.support)?;
    Ok(d)
}

/// Token-level precision, recall and F1 of `pred` against `gold`.
/// `grouping` is "4" (T, C, V), "3" (S, V) or "2" (I).
#[pyfunction]
#[pyo3(signature = (gold, pred, grouping = "4"))]
fn score<'py>(py: Python<'py>, gold: Vec<String>, pred: Vec<String>, grouping: &str) -> PyResult<Bound<'py, PyDict>> {
    let grouping: ClassGrouping = grouping.parse().map_err(value_error)?;
    let report = dbtag_core::score(&labels(&gold)?, &labels(&pred)?, grouping).map_err(value_error)?;
    let classes = PyDict::new(py);
    for (name, m) in &report.classes {
        classes.set_item(*name, prf_dict(py, m)?)?;
    }
    let out = PyDict::new(py);
    out.set_item("classes", classes)?;
    out.set_item("micro", prf_dict(py, &report.micro)?)?;
    out.set_item("macro", prf_dict(py, &report.macro_avg)?)?;
    Ok(out)
}

/// Grid search over both measures and thresholds 0.1..1.0.
///
/// `gold` holds `(id, tokens, labels, sql)` tuples. Returns a dict with
/// `best` as `(measure, threshold)`, `best_f1`, `cells` and `skipped`.
#[pyfunction]
#[pyo3(signature = (gold, max_span = 8))]
fn calibrate<'py>(
    py: Python<'py>,
    gold: Vec<(String, Vec<String>, Vec<String>, String)>,
    max_span: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let examples: Vec<GoldExample> = gold
        .into_iter()
        .map(|(id, tokens, l, sql)| GoldExample::new(id, tokens, labels(&l)?, Some(sql)).map_err(value_error))
        .collect::<PyResult<_>>()?;
    let report = py.allow_threads(|| dbtag_core::calibrate(&examples, max_span)).map_err(value_error)?;
    let cells = report
        .cells
        .iter()
        .map(|c| {
            let d = PyDict::new(py);
            d.set_item("measure", c.config.measure.as_str())?;
            d.set_item("threshold", c.config.threshold)?;
            d.set_item("f1", c.f1)?;
            d.set_item("links", c.n_links)?;
            Ok(d)
        })
        .collect::<PyResult<Vec<_>>>()?;
    let out = PyDict::new(py);
    out.set_item("best", (report.best.measure.as_str(), report.best.threshold))?;
    out.set_item("best_f1", report.best_f1)?;
    out.set_item("cells", cells)?;
    let skipped: Vec<(String, String)> = report.skipped.into_iter().map(|s| (s.id, s.reason)).collect();
    out.set_item("skipped", skipped)?;
    Ok(out)
}

#[pymodule]
fn dbtag(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyAnnotation>()?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(extract_entities, m)?)?;
    m.add_function(wrap_pyfunction!(jaccard3, m)?)?;
    m.add_function(wrap_pyfunction!(levenshtein_sim, m)?)?;
    m.add_function(wrap_pyfunction!(annotate, m)?)?;
    m.add_function(wrap_pyfunction!(augment, m)?)?;
    m.add_function(wrap_pyfunction!(score, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate, m)?)?;
    Ok(())
}
