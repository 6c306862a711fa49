//! Retrieval augmentation for vision-language datasets.
//!
//! Precomputed embeddings go into an [`embed_store::EmbeddingStore`], are
//! searched exactly or through an IVF index ([`index`]), deduplicated and
//! mapped to reference captions ([`retriever`]), and spliced into captioning
//! or VQA samples under a named ablation mode ([`augment`]). [`metrics`]
//! scores generated outputs and [`decode`] ranks a closed answer set with a
//! trie-constrained beam search.

pub mod augment;
pub mod cli;
pub mod config;
pub mod decode;
pub mod demo;
pub mod embed_store;
pub mod index;
pub mod jsonl;
pub mod metrics;
pub mod retriever;
pub mod tsv;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Store(#[from] embed_store::StoreError),
    #[error(transparent)]
    Index(#[from] index::IndexError),
    #[error(transparent)]
    Retrieve(#[from] retriever::RetrieveError),
    #[error(transparent)]
    Augment(#[from] augment::AugmentError),
    #[error(transparent)]
    Metric(#[from] metrics::MetricError),
    #[error(transparent)]
    Decode(#[from] decode::DecodeError),
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error(transparent)]
    Tsv(#[from] tsv::TsvError),
    #[error(transparent)]
    Jsonl(#[from] jsonl::JsonlError),
    #[error("{path}: {source}")]
    Path { path: std::path::PathBuf, source: std::io::Error },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
