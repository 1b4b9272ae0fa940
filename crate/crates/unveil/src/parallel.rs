//! Multi-threaded exact search. The corpus is cut into fixed-size chunks
//! whose partial top-k lists are merged in chunk order, so results do not
//! depend on the worker count.

use rayon::prelude::*;
use unveil_core::search::{merge_topk, topk_range, CorpusIndex, Hit};

use crate::error::{Error, Result};

/// Documents per chunk.
pub const CHUNK_DOCS: usize = 16_384;

pub fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    if workers == 0 {
        return Err(Error::Config("workers must be >= 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))
}

fn search_one(index: &CorpusIndex, query: &[f64], k: usize) -> Result<Vec<Hit>> {
    if k == 0 {
        return Err(unveil_core::Error::Contract("k must be >= 1".into()).into());
    }
    let q_norm = index.query_norm(query)?;
    let starts: Vec<usize> = (0..index.len()).step_by(CHUNK_DOCS).collect();
    let parts: Vec<Vec<Hit>> = starts
        .par_iter()
        .map(|&s| topk_range(index, query, q_norm, s..(s + CHUNK_DOCS).min(index.len()), k))
        .collect();
    Ok(merge_topk(index, parts.iter().map(Vec::as_slice), k))
}

/// Top-`k` hits for every query, in query order.
pub fn search_batch<Q: AsRef<[f64]> + Sync>(index: &CorpusIndex, queries: &[Q], k: usize, workers: usize) -> Result<Vec<Vec<Hit>>> {
    thread_pool(workers)?.install(|| queries.par_iter().map(|q| search_one(index, q.as_ref(), k)).collect())
}

/// Cosine score of every document for every query.
pub fn score_batch<Q: AsRef<[f64]> + Sync>(index: &CorpusIndex, queries: &[Q], workers: usize) -> Result<Vec<Vec<f64>>> {
    thread_pool(workers)?.install(|| {
        queries
            .par_iter()
            .map(|q| index.scores(q.as_ref()).map_err(Error::from))
            .collect()
    })
}
