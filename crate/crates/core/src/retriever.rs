//! Query-to-context retrieval: query fusion, top-k MIPS, near-duplicate
//! exclusion, caption mapping and top-1 selection.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use rayon::prelude::*;

use crate::embed_store::{normalize_in_place, EmbeddingStore, StoreBuilder, StoreError};
use crate::index::{dot, search_exact, IndexError, IvfIndex, ScoredHit, DEFAULT_TOP_K};
use crate::tsv;

pub const DEFAULT_DEDUP_THRESHOLD: f64 = 0.95;

#[derive(Debug, thiserror::Error)]
pub enum RetrieveError {
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error("dedup threshold {0} outside (0, 1]")]
    BadThreshold(f64),
    #[error("dedup needs a normalized store: cosine threshold is undefined otherwise")]
    Unnormalized,
    #[error("dimension mismatch: image {image}, text {text}")]
    FusionDimension { image: usize, text: usize },
    #[error("non-finite component in query")]
    NonFinite,
    #[error("hit {0:?} is not in the store")]
    UnknownHit(String),
    #[error("ivf backend selected but no index loaded")]
    MissingIndex,
    #[error("invalid captions for {id:?}: {reason}")]
    InvalidCaptions { id: String, reason: &'static str },
    #[error(transparent)]
    Tsv(#[from] tsv::TsvError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("line {line}: {message}")]
    Jsonl { line: usize, message: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Style-normalized captions for one memory item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappedCaptions {
    top_caption: String,
    all_captions: Vec<String>,
}

impl MappedCaptions {
    /// `all_captions` must be non-empty and start with `top_caption`.
    pub fn new(top_caption: String, all_captions: Vec<String>) -> Result<Self, &'static str> {
        if top_caption.is_empty() {
            return Err("top caption is empty");
        }
        match all_captions.first() {
            None => Err("caption list is empty"),
            Some(first) if *first != top_caption => Err("caption list does not start with the top caption"),
            Some(_) => Ok(Self {
                top_caption,
                all_captions,
            }),
        }
    }

    /// Builds from a caption list whose first element is the top caption.
    pub fn from_list(all_captions: Vec<String>) -> Result<Self, &'static str> {
        let top = all_captions.first().cloned().unwrap_or_default();
        Self::new(top, all_captions)
    }

    pub fn top_caption(&self) -> &str {
        &self.top_caption
    }

    pub fn all_captions(&self) -> &[String] {
        &self.all_captions
    }
}

/// In-memory caption-mapping table, loaded from a TSV with columns
/// `id`, `top_caption`, `all_captions` (a JSON array).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CaptionCorpus {
    rows: HashMap<String, MappedCaptions>,
}

impl CaptionCorpus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: impl Into<String>, captions: MappedCaptions) {
        self.rows.insert(id.into(), captions);
    }

    pub fn remove(&mut self, id: &str) -> Option<MappedCaptions> {
        self.rows.remove(id)
    }

    pub fn get(&self, id: &str) -> Option<&MappedCaptions> {
        self.rows.get(id)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn read_tsv<R: Read>(source: R) -> Result<Self, RetrieveError> {
        let table = tsv::Table::read(source)?;
        let (id, top, all) = (
            table.column("id")?,
            table.column("top_caption")?,
            table.column("all_captions")?,
        );
        let mut corpus = Self::new();
        for (line, row) in table.rows_with_lines() {
            let list: Vec<String> = serde_json::from_str(&row[all]).map_err(|e| tsv::TsvError::Field {
                line,
                field: "all_captions".into(),
                message: e.to_string(),
            })?;
            let captions = MappedCaptions::new(row[top].clone(), list).map_err(|reason| {
                RetrieveError::InvalidCaptions {
                    id: row[id].clone(),
                    reason,
                }
            })?;
            corpus.insert(row[id].clone(), captions);
        }
        Ok(corpus)
    }

    pub fn read_path(path: impl AsRef<Path>) -> Result<Self, RetrieveError> {
        let file = std::fs::File::open(path).map_err(tsv::TsvError::from)?;
        Self::read_tsv(file)
    }

    /// Writes rows sorted by id.
    pub fn write_tsv<W: Write>(&self, sink: W) -> Result<(), RetrieveError> {
        let mut ids: Vec<&String> = self.rows.keys().collect();
        ids.sort();
        let rows = ids.into_iter().map(|id| {
            let c = &self.rows[id];
            vec![
                id.clone(),
                c.top_caption.clone(),
                serde_json::to_string(&c.all_captions).expect("string list serializes"),
            ]
        });
        tsv::write_table(sink, &["id", "top_caption", "all_captions"], rows)?;
        Ok(())
    }
}

/// Raw memory-side metadata: TSV with `id`, `image_ref`, `alt_text`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MemoryMetadata {
    rows: HashMap<String, (String, String)>,
}

impl MemoryMetadata {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: impl Into<String>, image_ref: impl Into<String>, alt_text: impl Into<String>) {
        self.rows.insert(id.into(), (image_ref.into(), alt_text.into()));
    }

    pub fn get(&self, id: &str) -> Option<(&str, &str)> {
        self.rows.get(id).map(|(i, a)| (i.as_str(), a.as_str()))
    }

    pub fn read_tsv<R: Read>(source: R) -> Result<Self, RetrieveError> {
        let table = tsv::Table::read(source)?;
        let (id, image, alt) = (
            table.column("id")?,
            table.column("image_ref")?,
            table.column("alt_text")?,
        );
        let mut meta = Self::new();
        for row in table.rows() {
            meta.insert(row[id].clone(), row[image].clone(), row[alt].clone());
        }
        Ok(meta)
    }

    pub fn read_path(path: impl AsRef<Path>) -> Result<Self, RetrieveError> {
        let file = std::fs::File::open(path).map_err(tsv::TsvError::from)?;
        Self::read_tsv(file)
    }

    pub fn write_tsv<W: Write>(&self, sink: W) -> Result<(), RetrieveError> {
        let mut ids: Vec<&String> = self.rows.keys().collect();
        ids.sort();
        let rows = ids.into_iter().map(|id| {
            let (image, alt) = &self.rows[id];
            vec![id.clone(), image.clone(), alt.clone()]
        });
        tsv::write_table(sink, &["id", "image_ref", "alt_text"], rows)?;
        Ok(())
    }
}

/// One external-memory item as seen by the augmentation stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub id: String,
    pub image_ref: String,
    pub alt_text: String,
    pub mapped: Option<MappedCaptions>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedHit {
    pub entry: MemoryEntry,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub query_id: String,
    pub hits: Vec<RetrievedHit>,
    /// Best surviving hit that has both an image and mapped captions.
    pub top1: Option<MemoryEntry>,
}

impl RetrievalResult {
    /// A result with no hits at all.
    pub fn empty(query_id: impl Into<String>) -> Self {
        Self {
            query_id: query_id.into(),
            hits: Vec::new(),
            top1: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SearchBackend {
    Exact,
    Ivf { nprobe: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    pub top_k: usize,
    pub dedup_threshold: f64,
    pub backend: SearchBackend,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            top_k: DEFAULT_TOP_K,
            dedup_threshold: DEFAULT_DEDUP_THRESHOLD,
            backend: SearchBackend::Exact,
        }
    }
}

/// Averages an image and an optional text embedding. The mean is brought
/// back to unit norm when `normalized` is set.
pub fn fuse_query(image: &[f32], text: Option<&[f32]>, normalized: bool) -> Result<Vec<f32>, RetrieveError> {
    if image.iter().any(|x| !x.is_finite()) {
        return Err(RetrieveError::NonFinite);
    }
    let Some(text) = text else {
        return Ok(image.to_vec());
    };
    if text.len() != image.len() {
        return Err(RetrieveError::FusionDimension {
            image: image.len(),
            text: text.len(),
        });
    }
    if text.iter().any(|x| !x.is_finite()) {
        return Err(RetrieveError::NonFinite);
    }
    let mut fused: Vec<f32> = image
        .iter()
        .zip(text)
        .map(|(&a, &b)| ((f64::from(a) + f64::from(b)) / 2.0) as f32)
        .collect();
    // Opposite inputs average to zero; that query is left as is.
    if normalized {
        normalize_in_place(&mut fused);
    }
    Ok(fused)
}

/// Fuses every image query with the text query of the same id, when there
/// is one. Ids missing from `text` keep their image vector.
pub fn fuse_stores(image: &EmbeddingStore, text: &EmbeddingStore) -> Result<EmbeddingStore, RetrieveError> {
    if image.dimension() != text.dimension() {
        return Err(RetrieveError::FusionDimension {
            image: image.dimension(),
            text: text.dimension(),
        });
    }
    let mut out = StoreBuilder::new(image.dimension(), false)?;
    for rec in image.iter() {
        let t = text.lookup(rec.id).map(|r| r.vector);
        out.push(rec.id.to_owned(), fuse_query(rec.vector, t, image.is_normalized())?)?;
    }
    Ok(out.finish())
}

/// One JSON object per line, in slice order.
pub fn write_results_jsonl<W: Write>(results: &[RetrievalResult], mut sink: W) -> Result<(), RetrieveError> {
    for r in results {
        serde_json::to_writer(&mut sink, r).map_err(std::io::Error::from)?;
        sink.write_all(b"\n")?;
    }
    sink.flush()?;
    Ok(())
}

pub fn read_results_jsonl<R: Read>(source: R) -> Result<Vec<RetrievalResult>, RetrieveError> {
    let mut out = Vec::new();
    for (n, line) in BufReader::new(source).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| RetrieveError::Jsonl {
            line: n + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Greedy near-duplicate exclusion in rank order: a hit is dropped when its
/// cosine similarity to an already kept hit reaches `threshold`.
pub fn dedup(hits: &[ScoredHit], store: &EmbeddingStore, threshold: f64) -> Result<Vec<ScoredHit>, RetrieveError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(RetrieveError::BadThreshold(threshold));
    }
    if !store.is_normalized() {
        return Err(RetrieveError::Unnormalized);
    }
    let mut kept: Vec<(&ScoredHit, &[f32])> = Vec::with_capacity(hits.len());
    for hit in hits {
        let v = store
            .lookup(&hit.id)
            .ok_or_else(|| RetrieveError::UnknownHit(hit.id.clone()))?
            .vector;
        if kept.iter().all(|(_, k)| dot(v, k) < threshold) {
            kept.push((hit, v));
        }
    }
    Ok(kept.into_iter().map(|(h, _)| h.clone()).collect())
}

/// Looks each id up in the caption corpus; absent rows stay `None`.
pub fn map_to_corpus<S: AsRef<str>>(ids: &[S], corpus: &CaptionCorpus) -> Vec<Option<MappedCaptions>> {
    ids.iter().map(|id| corpus.get(id.as_ref()).cloned()).collect()
}

type ImageCheck = Box<dyn Fn(&str) -> bool + Send + Sync>;

/// End-to-end retrieval over a loaded memory.
pub struct Retriever<'a> {
    store: &'a EmbeddingStore,
    index: Option<&'a IvfIndex>,
    metadata: &'a MemoryMetadata,
    corpus: &'a CaptionCorpus,
    config: RetrievalConfig,
    image_check: ImageCheck,
}

impl<'a> Retriever<'a> {
    pub fn new(
        store: &'a EmbeddingStore,
        metadata: &'a MemoryMetadata,
        corpus: &'a CaptionCorpus,
        config: RetrievalConfig,
    ) -> Self {
        Self {
            store,
            index: None,
            metadata,
            corpus,
            config,
            image_check: Box::new(|r: &str| !r.trim().is_empty()),
        }
    }

    pub fn with_index(mut self, index: &'a IvfIndex) -> Self {
        self.index = Some(index);
        self
    }

    /// Replaces the default "non-empty `image_ref`" resolvability check.
    pub fn with_image_check(mut self, check: impl Fn(&str) -> bool + Send + Sync + 'static) -> Self {
        self.image_check = Box::new(check);
        self
    }

    pub fn config(&self) -> &RetrievalConfig {
        &self.config
    }

    pub fn store(&self) -> &EmbeddingStore {
        self.store
    }

    /// Top-k search with the configured backend, before dedup.
    pub fn search(&self, query: &[f32], k: usize) -> Result<Vec<ScoredHit>, RetrieveError> {
        Ok(match self.config.backend {
            SearchBackend::Exact => search_exact(self.store, query, k)?,
            SearchBackend::Ivf { nprobe } => self
                .index
                .ok_or(RetrieveError::MissingIndex)?
                .search(self.store, query, k, nprobe)?,
        })
    }

    pub fn entry(&self, id: &str, mapped: Option<MappedCaptions>) -> MemoryEntry {
        let (image_ref, alt_text) = self.metadata.get(id).unwrap_or(("", ""));
        MemoryEntry {
            id: id.to_owned(),
            image_ref: image_ref.to_owned(),
            alt_text: alt_text.to_owned(),
            mapped,
        }
    }

    pub fn retrieve(&self, query_id: &str, query: &[f32], k: usize) -> Result<RetrievalResult, RetrieveError> {
        let raw = self.search(query, k)?;
        let kept = dedup(&raw, self.store, self.config.dedup_threshold)?;
        let ids: Vec<&str> = kept.iter().map(|h| h.id.as_str()).collect();
        let mapped = map_to_corpus(&ids, self.corpus);
        let hits: Vec<RetrievedHit> = kept
            .iter()
            .zip(mapped)
            .map(|(h, m)| RetrievedHit {
                entry: self.entry(&h.id, m),
                score: h.score,
            })
            .collect();
        let top1 = hits
            .iter()
            .find(|h| h.entry.mapped.is_some() && (self.image_check)(&h.entry.image_ref))
            .map(|h| h.entry.clone());
        Ok(RetrievalResult {
            query_id: query_id.to_owned(),
            hits,
            top1,
        })
    }

    /// [`Self::retrieve`] with the configured `top_k`.
    pub fn retrieve_default(&self, query_id: &str, query: &[f32]) -> Result<RetrievalResult, RetrieveError> {
        self.retrieve(query_id, query, self.config.top_k)
    }

    /// Retrieves for every query in `queries`, in store order.
    pub fn retrieve_all(&self, queries: &EmbeddingStore) -> Result<Vec<RetrievalResult>, RetrieveError> {
        (0..queries.len())
            .into_par_iter()
            .map(|i| self.retrieve_default(queries.id_at(i), queries.vector_at(i)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed_store::StoreBuilder;

    fn caps(list: &[&str]) -> MappedCaptions {
        MappedCaptions::from_list(list.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    #[test]
    fn fuse_examples() {
        let v = [0.3f32, -0.4, 0.5];
        assert_eq!(fuse_query(&v, None, true).unwrap(), v.to_vec());
        let f = fuse_query(&[1.0, 0.0], Some(&[0.0, 1.0]), true).unwrap();
        assert!((f[0] - 0.70710677).abs() < 1e-6 && (f[1] - 0.70710677).abs() < 1e-6);
        let same = fuse_query(&[0.6, 0.8], Some(&[0.6, 0.8]), true).unwrap();
        assert!((same[0] - 0.6).abs() < 1e-6 && (same[1] - 0.8).abs() < 1e-6);
        let raw = fuse_query(&[2.0, 0.0], Some(&[0.0, 4.0]), false).unwrap();
        assert_eq!(raw, vec![1.0, 2.0]);
        assert!(matches!(
            fuse_query(&[1.0, 0.0], Some(&[1.0]), true),
            Err(RetrieveError::FusionDimension { image: 2, text: 1 })
        ));
    }

    fn store(vectors: &[(&str, [f32; 3])]) -> EmbeddingStore {
        let mut b = StoreBuilder::new(3, true).unwrap();
        for (id, v) in vectors {
            b.push(id.to_string(), v.to_vec()).unwrap();
        }
        b.finish()
    }

    fn hits(ids: &[&str]) -> Vec<ScoredHit> {
        ids.iter()
            .enumerate()
            .map(|(i, id)| ScoredHit {
                id: id.to_string(),
                score: 1.0 - i as f64 * 0.1,
            })
            .collect()
    }

    #[test]
    fn dedup_drops_exact_duplicate() {
        let s = store(&[("a", [1.0, 1.0, 0.0]), ("b", [1.0, 1.0, 0.0]), ("c", [0.0, 0.0, 1.0])]);
        let out = dedup(&hits(&["a", "b", "c"]), &s, 0.95).unwrap();
        let ids: Vec<_> = out.iter().map(|h| h.id.as_str()).collect();
        assert_eq!(ids, ["a", "c"]);
    }

    #[test]
    fn dedup_keeps_orthogonal() {
        let s = store(&[("a", [1.0, 0.0, 0.0]), ("b", [0.0, 1.0, 0.0]), ("c", [0.0, 0.0, 1.0])]);
        for t in [0.01, 0.5, 1.0] {
            assert_eq!(dedup(&hits(&["a", "b", "c"]), &s, t).unwrap().len(), 3);
        }
    }

    #[test]
    fn dedup_preconditions() {
        let s = store(&[("a", [1.0, 0.0, 0.0])]);
        assert!(matches!(dedup(&hits(&["a"]), &s, 0.0), Err(RetrieveError::BadThreshold(_))));
        assert!(matches!(dedup(&hits(&["a"]), &s, 1.5), Err(RetrieveError::BadThreshold(_))));
        assert!(matches!(dedup(&hits(&["a"]), &s, f64::NAN), Err(RetrieveError::BadThreshold(_))));
        let mut raw = StoreBuilder::new(3, false).unwrap();
        raw.push("a".into(), vec![1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(dedup(&hits(&["a"]), &raw.finish(), 0.9), Err(RetrieveError::Unnormalized)));
    }

    #[test]
    fn mapping_lookup() {
        let mut corpus = CaptionCorpus::new();
        corpus.insert("x", caps(&["a dog runs", "a dog on grass"]));
        let out = map_to_corpus(&["x", "y"], &corpus);
        let m = out[0].as_ref().unwrap();
        assert_eq!(m.top_caption(), "a dog runs");
        assert_eq!(m.all_captions(), ["a dog runs", "a dog on grass"]);
        assert!(out[1].is_none());
    }

    #[test]
    fn captions_invariants() {
        assert!(MappedCaptions::new("".into(), vec!["".into()]).is_err());
        assert!(MappedCaptions::new("a".into(), vec![]).is_err());
        assert!(MappedCaptions::new("a".into(), vec!["b".into(), "a".into()]).is_err());
    }

    #[test]
    fn corpus_tsv_round_trip() {
        let text = "id\ttop_caption\tall_captions\nx\ta dog runs\t[\"a dog runs\",\"a dog on grass\"]\n";
        let corpus = CaptionCorpus::read_tsv(text.as_bytes()).unwrap();
        assert_eq!(corpus.len(), 1);
        let mut out = Vec::new();
        corpus.write_tsv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), text);
        let bad = "id\ttop_caption\tall_captions\nx\ta\tnot json\n";
        let err = CaptionCorpus::read_tsv(bad.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("all_captions"), "{err}");
    }

    #[test]
    fn retrieve_single_entry() {
        let s = store(&[("m", [0.0, 1.0, 0.0])]);
        let mut meta = MemoryMetadata::new();
        meta.insert("m", "img/m.png", "alt m");
        let mut corpus = CaptionCorpus::new();
        corpus.insert("m", caps(&["a cat"]));
        let r = Retriever::new(&s, &meta, &corpus, RetrievalConfig::default());
        let out = r.retrieve("q", &[0.0, 1.0, 0.0], 50).unwrap();
        assert_eq!(out.top1.as_ref().unwrap().id, "m");
        assert_eq!(out.hits.len(), 1);
    }

    #[test]
    fn unmapped_hits_have_no_top1() {
        let s = store(&[("a", [1.0, 0.0, 0.0]), ("b", [0.0, 1.0, 0.0])]);
        let mut meta = MemoryMetadata::new();
        meta.insert("a", "a.png", "");
        meta.insert("b", "b.png", "");
        let corpus = CaptionCorpus::new();
        let r = Retriever::new(&s, &meta, &corpus, RetrievalConfig::default());
        let out = r.retrieve("q", &[1.0, 0.2, 0.0], 5).unwrap();
        assert_eq!(out.hits.len(), 2);
        assert!(out.top1.is_none());
    }

    #[test]
    fn top1_needs_an_image() {
        let s = store(&[("a", [1.0, 0.0, 0.0]), ("b", [0.0, 1.0, 0.0])]);
        let mut meta = MemoryMetadata::new();
        meta.insert("a", "", "no image");
        meta.insert("b", "b.png", "");
        let mut corpus = CaptionCorpus::new();
        corpus.insert("a", caps(&["first"]));
        corpus.insert("b", caps(&["second"]));
        let r = Retriever::new(&s, &meta, &corpus, RetrievalConfig::default());
        let out = r.retrieve("q", &[1.0, 0.1, 0.0], 5).unwrap();
        assert_eq!(out.top1.unwrap().id, "b");
        let picky = Retriever::new(&s, &meta, &corpus, RetrievalConfig::default()).with_image_check(|_| false);
        assert!(picky.retrieve("q", &[1.0, 0.1, 0.0], 5).unwrap().top1.is_none());
    }

    #[test]
    fn ivf_backend_needs_index() {
        let s = store(&[("a", [1.0, 0.0, 0.0])]);
        let (meta, corpus) = (MemoryMetadata::new(), CaptionCorpus::new());
        let cfg = RetrievalConfig {
            backend: SearchBackend::Ivf { nprobe: 1 },
            ..RetrievalConfig::default()
        };
        let r = Retriever::new(&s, &meta, &corpus, cfg);
        assert!(matches!(r.retrieve("q", &[1.0, 0.0, 0.0], 1), Err(RetrieveError::MissingIndex)));
        let index = IvfIndex::build(&s, 1, 0).unwrap();
        let r = Retriever::new(&s, &meta, &corpus, cfg).with_index(&index);
        assert_eq!(r.retrieve("q", &[1.0, 0.0, 0.0], 1).unwrap().hits.len(), 1);
    }
}
