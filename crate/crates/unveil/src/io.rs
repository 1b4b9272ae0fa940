//! File formats: corpus and query JSONL, run files, metrics JSON, loss CSV,
//! embedding index JSONL and OCR page JSONL.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use unveil_core::layout::{OcrBox, OcrPage};
use unveil_core::metrics::MetricsReport;
use unveil_core::search::RunEntry;
use unveil_core::train::TrainingRun;
use unveil_core::{FeatureRecord, QueryRecord};

use crate::error::{Error, Result};

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Writes `contents`, creating parent directories as needed.
pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// One JSON value per non-blank line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(line).map_err(|e| Error::format(path, i + 1, e.to_string()))?);
    }
    Ok(out)
}

pub fn to_jsonl<T: Serialize>(items: impl IntoIterator<Item = T>) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(&item).expect("record serialises"));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CorpusLine {
    id: String,
    visual_features: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text_features: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
}

/// Documents plus the optional raw text used for answer judging.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub docs: Vec<FeatureRecord>,
    pub texts: BTreeMap<String, String>,
}

impl Corpus {
    pub fn get(&self, id: &str) -> Option<&FeatureRecord> {
        self.docs.iter().find(|d| d.id == id)
    }

    /// Position of every document id.
    pub fn positions(&self) -> BTreeMap<&str, usize> {
        self.docs.iter().enumerate().map(|(i, d)| (d.id.as_str(), i)).collect()
    }
}

pub fn corpus_to_jsonl(corpus: &Corpus) -> String {
    to_jsonl(corpus.docs.iter().map(|d| CorpusLine {
        id: d.id.clone(),
        visual_features: d.visual.clone(),
        text_features: d.text.clone(),
        text: corpus.texts.get(&d.id).cloned(),
    }))
}

pub fn read_corpus(path: &Path) -> Result<Corpus> {
    let lines: Vec<CorpusLine> = read_jsonl(path)?;
    let mut corpus = Corpus::default();
    let mut seen = std::collections::BTreeSet::new();
    for (i, line) in lines.into_iter().enumerate() {
        if !seen.insert(line.id.clone()) {
            return Err(Error::format(path, i + 1, format!("duplicate document id {}", line.id)));
        }
        if let Some(t) = line.text {
            corpus.texts.insert(line.id.clone(), t);
        }
        corpus.docs.push(FeatureRecord::new(line.id, line.visual_features, line.text_features));
    }
    Ok(corpus)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct QueryLine {
    id: String,
    features: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    positives: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    answers: Vec<String>,
}

pub fn queries_to_jsonl(queries: &[QueryRecord]) -> String {
    to_jsonl(queries.iter().map(|q| QueryLine {
        id: q.id.clone(),
        features: q.features.clone(),
        positives: q.positives.clone(),
        answers: q.answers.clone(),
    }))
}

pub fn read_queries(path: &Path) -> Result<Vec<QueryRecord>> {
    let lines: Vec<QueryLine> = read_jsonl(path)?;
    Ok(lines
        .into_iter()
        .map(|q| QueryRecord {
            id: q.id,
            features: q.features,
            positives: q.positives,
            answers: q.answers,
        })
        .collect())
}

/// `query_id doc_id rank score tag`, scores in shortest round-trip form.
pub fn run_to_string(entries: &[RunEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        writeln!(out, "{} {} {} {} {}", e.query_id, e.doc_id, e.rank, e.score, e.tag).expect("string write");
    }
    out
}

pub fn parse_run(path: &Path, text: &str) -> Result<Vec<RunEntry>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [query_id, doc_id, rank, score, tag] = fields[..] else {
            return Err(Error::format(path, i + 1, format!("expected 5 fields, found {}", fields.len())));
        };
        let rank: usize = rank
            .parse()
            .ok()
            .filter(|r| *r >= 1)
            .ok_or_else(|| Error::format(path, i + 1, format!("bad rank {rank:?}")))?;
        let score: f64 = score
            .parse()
            .ok()
            .filter(|s: &f64| s.is_finite())
            .ok_or_else(|| Error::format(path, i + 1, format!("bad score {score:?}")))?;
        out.push(RunEntry {
            query_id: query_id.into(),
            doc_id: doc_id.into(),
            rank,
            score,
            tag: tag.into(),
        });
    }
    Ok(out)
}

pub fn read_run(path: &Path) -> Result<Vec<RunEntry>> {
    parse_run(path, &read_text(path)?)
}

/// Metrics JSON with `recall_at_{k}` / `mrr_at_{k}` keys and provenance fields.
pub fn metrics_to_json(report: &MetricsReport, meta: &[(&str, Value)]) -> String {
    let mut m = Map::new();
    m.insert(format!("recall_at_{}", report.k), report.recall_at_k.into());
    m.insert(format!("mrr_at_{}", report.k), report.mrr_at_k.into());
    m.insert("k".into(), report.k.into());
    m.insert("num_queries".into(), report.num_queries.into());
    for (key, value) in meta {
        m.insert((*key).into(), value.clone());
    }
    let mut s = serde_json::to_string_pretty(&Value::Object(m)).expect("metrics serialise");
    s.push('\n');
    s
}

pub fn read_metrics(path: &Path) -> Result<MetricsReport> {
    let value: Value = serde_json::from_str(&read_text(path)?).map_err(|e| Error::format(path, e.line(), e.to_string()))?;
    let field = |name: &str| value.get(name).ok_or_else(|| Error::format(path, 1, format!("missing field {name}")));
    let k = field("k")?.as_u64().ok_or_else(|| Error::format(path, 1, "k must be an integer"))? as usize;
    let num = |name: String| -> Result<f64> {
        field(&name)?.as_f64().ok_or_else(|| Error::format(path, 1, format!("{name} must be a number")))
    };
    Ok(MetricsReport {
        recall_at_k: num(format!("recall_at_{k}"))?,
        mrr_at_k: num(format!("mrr_at_{k}"))?,
        k,
        num_queries: field("num_queries")?
            .as_u64()
            .ok_or_else(|| Error::format(path, 1, "num_queries must be an integer"))? as usize,
    })
}

/// `step,stage,hard,align,soft,total`, one row per optimisation step.
pub fn loss_csv(run: &TrainingRun) -> String {
    let mut out = String::from("step,stage,hard,align,soft,total\n");
    for e in &run.trace {
        writeln!(out, "{},{},{},{},{},{}", e.step, run.stage.as_str(), e.hard, e.align, e.soft, e.total).expect("string write");
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndexLine {
    pub id: String,
    pub embedding: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum BoxGeometry {
    Rect([f64; 4]),
    Quad(Vec<[f64; 2]>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OcrBoxLine {
    bbox: BoxGeometry,
    text: String,
    conf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OcrPageLine {
    page_id: String,
    width: f64,
    height: f64,
    boxes: Vec<OcrBoxLine>,
}

/// Pages are validated; quadrilateral boxes become their bounding rectangles.
pub fn read_ocr_pages(path: &Path) -> Result<Vec<OcrPage>> {
    let text = read_text(path)?;
    let mut pages = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fail = |m: String| Error::format(path, i + 1, m);
        let raw: OcrPageLine = serde_json::from_str(line).map_err(|e| fail(e.to_string()))?;
        let boxes = raw
            .boxes
            .into_iter()
            .map(|b| match b.bbox {
                BoxGeometry::Rect(r) => OcrBox::new(r, b.text, b.conf),
                BoxGeometry::Quad(q) => OcrBox::from_quad(&q, b.text, b.conf),
            })
            .collect::<unveil_core::Result<Vec<_>>>()
            .map_err(|e| fail(e.to_string()))?;
        let page = OcrPage {
            page_id: raw.page_id,
            width: raw.width,
            height: raw.height,
            boxes,
        };
        page.validate().map_err(|e| fail(e.to_string()))?;
        pages.push(page);
    }
    Ok(pages)
}

pub fn ocr_pages_to_jsonl(pages: &[OcrPage]) -> String {
    to_jsonl(pages.iter().map(|p| OcrPageLine {
        page_id: p.page_id.clone(),
        width: p.width,
        height: p.height,
        boxes: p
            .boxes
            .iter()
            .map(|b| OcrBoxLine {
                bbox: BoxGeometry::Rect([b.x0, b.y0, b.x1, b.y1]),
                text: b.text.clone(),
                conf: b.confidence,
            })
            .collect(),
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PageText {
    pub page_id: String,
    pub text: String,
}
