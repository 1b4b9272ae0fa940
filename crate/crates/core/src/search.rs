//! Exact cosine top-k over an embedded corpus.
//!
//! Hits are totally ordered by descending score, then ascending doc id, so
//! the top-k set is unique. Any partition of the corpus into chunks, scanned
//! in any order and merged with [`merge_topk`], gives the same answer as one
//! sequential scan.

use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::ops::Range;

use crate::encoder::{EncoderParams, FeatureRecord, ModelKind};
use crate::error::{Error, Result};
use crate::loss::cosine_from_parts;
use crate::vector::{dot, l2_norm};

/// Row-major document embeddings with precomputed norms.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusIndex {
    doc_ids: Vec<String>,
    dim: usize,
    embeddings: Vec<f64>,
    norms: Vec<f64>,
}

impl CorpusIndex {
    pub fn new(doc_ids: Vec<String>, dim: usize, embeddings: Vec<f64>) -> Result<Self> {
        if doc_ids.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        if dim == 0 {
            return Err(Error::config("embedding dimension must be positive"));
        }
        Error::check_dim("index matrix", doc_ids.len() * dim, embeddings.len())?;
        let mut sorted: Vec<&str> = doc_ids.iter().map(String::as_str).collect();
        sorted.sort_unstable();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Data(alloc::format!("duplicate doc id {}", w[0])));
        }
        if embeddings.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("index embeddings"));
        }
        let norms: Vec<f64> = embeddings.chunks_exact(dim).map(l2_norm).collect();
        if let Some(i) = norms.iter().position(|n| *n == 0.0) {
            return Err(Error::DegenerateEmbedding(Some(doc_ids[i].clone())));
        }
        Ok(Self {
            doc_ids,
            dim,
            embeddings,
            norms,
        })
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    pub fn embedding(&self, i: usize) -> &[f64] {
        &self.embeddings[i * self.dim..(i + 1) * self.dim]
    }

    /// Cosine score of every document, in index order.
    pub fn scores(&self, query: &[f64]) -> Result<Vec<f64>> {
        let q_norm = self.query_norm(query)?;
        Ok((0..self.len()).map(|i| self.score(query, q_norm, i)).collect())
    }

    pub fn query_norm(&self, query: &[f64]) -> Result<f64> {
        Error::check_dim("query embedding", self.dim, query.len())?;
        let norm = l2_norm(query);
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::DegenerateEmbedding(None));
        }
        Ok(norm)
    }

    #[inline]
    fn score(&self, query: &[f64], q_norm: f64, i: usize) -> f64 {
        cosine_from_parts(dot(query, self.embedding(i)), q_norm, self.norms[i])
    }
}

/// Embeds every document with the encoder of the chosen view.
pub fn build_index(docs: &[FeatureRecord], mode: ModelKind, params: &EncoderParams) -> Result<CorpusIndex> {
    if docs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if mode == ModelKind::Teacher {
        let missing: Vec<String> = docs.iter().filter(|d| d.text.is_none()).map(|d| d.id.clone()).collect();
        if !missing.is_empty() {
            return Err(Error::MissingTextViews(missing));
        }
    }
    let dim = params.embedding_dim();
    let mut embeddings = Vec::with_capacity(docs.len() * dim);
    for doc in docs {
        embeddings.extend(params.forward(&mode.doc_input(doc)?)?);
    }
    CorpusIndex::new(docs.iter().map(|d| d.id.clone()).collect(), dim, embeddings)
}

/// One scored document, referenced by its position in the index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub doc: usize,
    pub score: f64,
}

/// `Less` means `a` ranks ahead of `b`.
#[inline]
pub fn rank_order(a: &Hit, b: &Hit, ids: &[String]) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| ids[a.doc].cmp(&ids[b.doc]))
}

/// Bounded sorted buffer of the best `k` hits.
struct TopK<'a> {
    k: usize,
    ids: &'a [String],
    hits: Vec<Hit>,
}

impl<'a> TopK<'a> {
    fn new(k: usize, ids: &'a [String]) -> Self {
        Self {
            k,
            ids,
            hits: Vec::with_capacity(k + 1),
        }
    }

    #[inline]
    fn push(&mut self, hit: Hit) {
        if self.hits.len() == self.k {
            let worst = &self.hits[self.k - 1];
            if hit.score < worst.score || rank_order(&hit, worst, self.ids) != Ordering::Less {
                return;
            }
            self.hits.pop();
        }
        let pos = self
            .hits
            .partition_point(|h| rank_order(h, &hit, self.ids) == Ordering::Less);
        self.hits.insert(pos, hit);
    }
}

/// Best `k` hits among the documents in `range`.
pub fn topk_range(index: &CorpusIndex, query: &[f64], q_norm: f64, range: Range<usize>, k: usize) -> Vec<Hit> {
    let mut top = TopK::new(k, &index.doc_ids);
    for i in range {
        top.push(Hit {
            doc: i,
            score: index.score(query, q_norm, i),
        });
    }
    top.hits
}

/// Merges per-chunk results (each already a valid top-k of its chunk).
pub fn merge_topk<'h>(index: &CorpusIndex, parts: impl IntoIterator<Item = &'h [Hit]>, k: usize) -> Vec<Hit> {
    let mut top = TopK::new(k, &index.doc_ids);
    for part in parts {
        for hit in part {
            top.push(*hit);
        }
    }
    top.hits
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::contract("k must be >= 1"));
    }
    Ok(())
}

/// Exact top-k by a single sequential scan.
pub fn search_topk(index: &CorpusIndex, query: &[f64], k: usize) -> Result<Vec<Hit>> {
    check_k(k)?;
    let q_norm = index.query_norm(query)?;
    Ok(topk_range(index, query, q_norm, 0..index.len(), k))
}

/// Top-k of `alpha·a + (1 − alpha)·b`, where `a` and `b` score the same
/// documents in the same order. The endpoints return the corresponding
/// input scores unchanged.
pub fn hybrid_interpolate(ids: &[String], scores_a: &[f64], scores_b: &[f64], alpha: f64, k: usize) -> Result<Vec<Hit>> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::config("alpha must lie in [0, 1]"));
    }
    check_k(k)?;
    Error::check_dim("hybrid run a", ids.len(), scores_a.len())?;
    Error::check_dim("hybrid run b", ids.len(), scores_b.len())?;
    let mut top = TopK::new(k, ids);
    for (i, (a, b)) in scores_a.iter().zip(scores_b).enumerate() {
        let score = if alpha == 1.0 {
            *a
        } else if alpha == 0.0 {
            *b
        } else {
            alpha * a + (1.0 - alpha) * b
        };
        top.push(Hit { doc: i, score });
    }
    Ok(top.hits)
}

/// One line of a run file.
#[derive(Debug, Clone, PartialEq)]
pub struct RunEntry {
    pub query_id: String,
    pub doc_id: String,
    pub rank: usize,
    pub score: f64,
    pub tag: String,
}

/// Ranked hits as run entries with 1-based ranks.
pub fn to_run_entries(query_id: &str, hits: &[Hit], ids: &[String], tag: &str) -> Vec<RunEntry> {
    hits.iter()
        .enumerate()
        .map(|(r, h)| RunEntry {
            query_id: query_id.into(),
            doc_id: ids[h.doc].clone(),
            rank: r + 1,
            score: h.score,
            tag: tag.into(),
        })
        .collect()
}
