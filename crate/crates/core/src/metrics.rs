//! Recall@k and MRR@k over run entries, judged either against gold document
//! ids or by answer-string containment in the document text.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::search::RunEntry;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Judgment {
    GoldIds(BTreeSet<String>),
    /// Normalised answer strings; see [`normalize_text`].
    Answers(Vec<String>),
}

impl Judgment {
    pub fn gold<I, S>(ids: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let ids: BTreeSet<String> = ids.into_iter().map(Into::into).collect();
        if ids.is_empty() {
            return Err(Error::Data("judgment needs at least one gold id".into()));
        }
        Ok(Judgment::GoldIds(ids))
    }

    pub fn answers<I, S>(answers: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let answers: Vec<String> = answers
            .into_iter()
            .map(|a| normalize_text(a.as_ref().trim()))
            .filter(|a| !a.is_empty())
            .collect();
        if answers.is_empty() {
            return Err(Error::Data("judgment needs at least one non-empty answer".into()));
        }
        Ok(Judgment::Answers(answers))
    }
}

/// Lowercase, with every run of whitespace collapsed to one space.
pub fn normalize_text(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut in_space = false;
    for c in text.chars() {
        if c.is_whitespace() {
            if !in_space {
                out.push(' ');
            }
            in_space = true;
        } else {
            out.extend(c.to_lowercase());
            in_space = false;
        }
    }
    out
}

/// Is `doc_id` relevant? Answer judging needs the document text.
pub fn judge_relevant(doc_id: &str, doc_text: Option<&str>, judgment: &Judgment) -> Result<bool> {
    match judgment {
        Judgment::GoldIds(ids) => Ok(ids.contains(doc_id)),
        Judgment::Answers(answers) => {
            let text = doc_text.ok_or_else(|| Error::Data(alloc::format!("document {doc_id} has no text for answer judging")))?;
            let text = normalize_text(text);
            Ok(answers.iter().any(|a| text.contains(a.as_str())))
        }
    }
}

/// Per-query judgments plus document texts for answer containment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Judgments {
    pub queries: BTreeMap<String, Judgment>,
    pub doc_text: BTreeMap<String, String>,
}

impl Judgments {
    pub fn is_relevant(&self, query_id: &str, doc_id: &str) -> Result<bool> {
        let judgment = self
            .queries
            .get(query_id)
            .ok_or_else(|| Error::Data(alloc::format!("query {query_id} has no judgment")))?;
        judge_relevant(doc_id, self.doc_text.get(doc_id).map(String::as_str), judgment)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub recall_at_k: f64,
    pub mrr_at_k: f64,
    pub k: usize,
    pub num_queries: usize,
}

/// Rank of the first relevant document within the top `k`, per query.
pub fn first_relevant_ranks(run: &[RunEntry], judgments: &Judgments, k: usize) -> Result<BTreeMap<String, Option<usize>>> {
    let mut per_query: BTreeMap<&str, Vec<&RunEntry>> = BTreeMap::new();
    for entry in run {
        per_query.entry(entry.query_id.as_str()).or_default().push(entry);
    }
    let mut out = BTreeMap::new();
    for (query_id, mut entries) in per_query {
        if !judgments.queries.contains_key(query_id) {
            return Err(Error::Data(alloc::format!("query {query_id} has no judgment")));
        }
        entries.sort_by_key(|e| e.rank);
        let mut first = None;
        for e in entries.iter().take_while(|e| e.rank <= k) {
            if judgments.is_relevant(query_id, &e.doc_id)? {
                first = Some(e.rank);
                break;
            }
        }
        out.insert(query_id.into(), first);
    }
    Ok(out)
}

/// Recall@k and MRR@k over the queries present in `run`.
pub fn evaluate_run(run: &[RunEntry], judgments: &Judgments, k: usize) -> Result<MetricsReport> {
    if k == 0 {
        return Err(Error::contract("k must be >= 1"));
    }
    let ranks = first_relevant_ranks(run, judgments, k)?;
    let num_queries = ranks.len();
    if num_queries == 0 {
        return Ok(MetricsReport {
            recall_at_k: 0.0,
            mrr_at_k: 0.0,
            k,
            num_queries,
        });
    }
    let hits = ranks.values().filter(|r| r.is_some()).count();
    let rr_sum: f64 = ranks.values().flatten().map(|&r| 1.0 / r as f64).sum();
    Ok(MetricsReport {
        recall_at_k: hits as f64 / num_queries as f64,
        mrr_at_k: rr_sum / num_queries as f64,
        k,
        num_queries,
    })
}
