//! Maximum inner product search over an [`EmbeddingStore`].
//!
//! [`search_exact`] scans every row; [`IvfIndex`] partitions the store with
//! k-means and scans only the `nprobe` most promising partitions.

mod ivf;
pub mod kmeans;

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embed_store::{EmbeddingStore, StoreError};

pub use ivf::{IvfIndex, INDEX_MAGIC, INDEX_VERSION};
pub use kmeans::{KMeansConfig, KMeansResult};

/// Default number of hits requested per query.
pub const DEFAULT_TOP_K: usize = 50;

#[derive(Debug, thiserror::Error)]
pub enum IndexError {
    #[error("empty memory")]
    EmptyMemory,
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite query component at index {0}")]
    NonFiniteQuery(usize),
    #[error("k must be at least 1")]
    ZeroK,
    #[error("nlist {nlist} must be in 1..={count}")]
    BadNlist { nlist: usize, count: usize },
    #[error("nprobe {nprobe} must be in 1..={nlist}")]
    BadNprobe { nprobe: usize, nlist: usize },
    #[error("index refers to id {0:?} which is not in the store")]
    UnknownId(String),
    #[error("index does not cover the store: {0}")]
    Coverage(String),
    #[error("bad magic bytes, expected RVIX")]
    BadMagic,
    #[error("unsupported index version {0}")]
    UnsupportedVersion(u32),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// A memory id with its inner-product score against the query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredHit {
    pub id: String,
    pub score: f64,
}

/// Score descending, then id ascending.
pub fn hit_order(a: &ScoredHit, b: &ScoredHit) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.id.cmp(&b.id))
}

/// Inner product accumulated in `f64`.
pub fn score(query: &[f32], memory: &[f32]) -> Result<f64, IndexError> {
    if query.len() != memory.len() {
        return Err(IndexError::DimensionMismatch {
            expected: memory.len(),
            found: query.len(),
        });
    }
    Ok(dot(query, memory))
}

#[inline]
pub(crate) fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum()
}

pub(crate) fn check_query(store: &EmbeddingStore, query: &[f32], k: usize) -> Result<(), IndexError> {
    if store.is_empty() {
        return Err(IndexError::EmptyMemory);
    }
    if k == 0 {
        return Err(IndexError::ZeroK);
    }
    if query.len() != store.dimension() {
        return Err(IndexError::DimensionMismatch {
            expected: store.dimension(),
            found: query.len(),
        });
    }
    if let Some(i) = query.iter().position(|x| !x.is_finite()) {
        return Err(IndexError::NonFiniteQuery(i));
    }
    Ok(())
}

/// Keeps the `k` best `(position, score)` pairs under [`hit_order`].
pub(crate) fn top_k_positions(
    store: &EmbeddingStore,
    candidates: impl Iterator<Item = (usize, f64)>,
    k: usize,
) -> Vec<ScoredHit> {
    let by_rank = |a: &(usize, f64), b: &(usize, f64)| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(Ordering::Equal)
            .then_with(|| store.id_at(a.0).cmp(store.id_at(b.0)))
    };
    let mut scored: Vec<(usize, f64)> = candidates.collect();
    if scored.len() > k {
        scored.select_nth_unstable_by(k - 1, by_rank);
        scored.truncate(k);
    }
    scored.sort_unstable_by(by_rank);
    scored
        .into_iter()
        .map(|(p, score)| ScoredHit {
            id: store.id_at(p).to_owned(),
            score,
        })
        .collect()
}

/// Exact top-`k` by inner product. Returns `min(k, store.len())` hits.
pub fn search_exact(store: &EmbeddingStore, query: &[f32], k: usize) -> Result<Vec<ScoredHit>, IndexError> {
    check_query(store, query, k)?;
    let candidates = (0..store.len()).map(|p| (p, dot(query, store.vector_at(p))));
    Ok(top_k_positions(store, candidates, k))
}

/// Runs [`search_exact`] for many queries on the rayon pool. Output order
/// follows input order.
pub fn search_exact_batch(
    store: &EmbeddingStore,
    queries: &[&[f32]],
    k: usize,
) -> Result<Vec<Vec<ScoredHit>>, IndexError> {
    queries.par_iter().map(|q| search_exact(store, q, k)).collect()
}
