use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;

use super::kmeans::{kmeans, KMeansConfig};
use super::{check_query, dot, top_k_positions, IndexError, ScoredHit};
use crate::embed_store::{read_u32, read_u64, EmbeddingStore, StoreError};

pub const INDEX_MAGIC: &[u8; 4] = b"RVIX";
pub const INDEX_VERSION: u32 = 1;

/// Inverted-file index: a k-means coarse quantizer plus one posting list of
/// memory ids per centroid.
///
/// Persisted as `"RVIX" | version: u32 | nlist: u32 | dimension: u32`, then
/// `nlist × dimension` little-endian `f32` centroids, then for each list a
/// `u64` length followed by `u16`-length-prefixed UTF-8 ids.
#[derive(Debug, Clone, PartialEq)]
pub struct IvfIndex {
    dimension: usize,
    centroids: Vec<f32>,
    postings: Vec<Vec<String>>,
}

impl IvfIndex {
    pub fn build(store: &EmbeddingStore, nlist: usize, seed: u64) -> Result<Self, IndexError> {
        Self::build_with(store, nlist, seed, &KMeansConfig::default())
    }

    pub fn build_with(
        store: &EmbeddingStore,
        nlist: usize,
        seed: u64,
        config: &KMeansConfig,
    ) -> Result<Self, IndexError> {
        if store.is_empty() {
            return Err(IndexError::EmptyMemory);
        }
        if nlist == 0 || nlist > store.len() {
            return Err(IndexError::BadNlist {
                nlist,
                count: store.len(),
            });
        }
        let clustering = kmeans(store, nlist, seed, config);
        let mut postings = vec![Vec::new(); nlist];
        for (p, &c) in clustering.assignments.iter().enumerate() {
            postings[c].push(store.id_at(p).to_owned());
        }
        Ok(Self {
            dimension: store.dimension(),
            centroids: clustering.centroids,
            postings,
        })
    }

    pub fn nlist(&self) -> usize {
        self.postings.len()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn centroid(&self, cluster: usize) -> &[f32] {
        &self.centroids[cluster * self.dimension..(cluster + 1) * self.dimension]
    }

    pub fn postings(&self) -> &[Vec<String>] {
        &self.postings
    }

    /// Clusters that ended up with no members.
    pub fn empty_clusters(&self) -> Vec<usize> {
        self.postings
            .iter()
            .enumerate()
            .filter(|(_, p)| p.is_empty())
            .map(|(c, _)| c)
            .collect()
    }

    /// Checks that the posting lists cover exactly the ids of `store`, once each.
    pub fn check_coverage(&self, store: &EmbeddingStore) -> Result<(), IndexError> {
        if self.dimension != store.dimension() {
            return Err(IndexError::DimensionMismatch {
                expected: store.dimension(),
                found: self.dimension,
            });
        }
        let mut seen = HashSet::with_capacity(store.len());
        for id in self.postings.iter().flatten() {
            if store.position(id).is_none() {
                return Err(IndexError::UnknownId(id.clone()));
            }
            if !seen.insert(id.as_str()) {
                return Err(IndexError::Coverage(format!("id {id:?} in more than one list")));
            }
        }
        if seen.len() != store.len() {
            return Err(IndexError::Coverage(format!(
                "{} of {} ids indexed",
                seen.len(),
                store.len()
            )));
        }
        Ok(())
    }

    /// Clusters to scan: the `nprobe` centroids with the largest inner
    /// product with `query`, ties to the lower cluster number.
    pub fn probe_order(&self, query: &[f32], nprobe: usize) -> Vec<usize> {
        let mut ranked: Vec<(usize, f64)> = (0..self.nlist())
            .map(|c| (c, dot(query, self.centroid(c))))
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked.truncate(nprobe);
        ranked.into_iter().map(|(c, _)| c).collect()
    }

    pub fn search(
        &self,
        store: &EmbeddingStore,
        query: &[f32],
        k: usize,
        nprobe: usize,
    ) -> Result<Vec<ScoredHit>, IndexError> {
        check_query(store, query, k)?;
        if self.dimension != store.dimension() {
            return Err(IndexError::DimensionMismatch {
                expected: store.dimension(),
                found: self.dimension,
            });
        }
        if nprobe == 0 || nprobe > self.nlist() {
            return Err(IndexError::BadNprobe {
                nprobe,
                nlist: self.nlist(),
            });
        }
        let mut candidates = Vec::new();
        for cluster in self.probe_order(query, nprobe) {
            for id in &self.postings[cluster] {
                let p = store
                    .position(id)
                    .ok_or_else(|| IndexError::UnknownId(id.clone()))?;
                candidates.push((p, dot(query, store.vector_at(p))));
            }
        }
        Ok(top_k_positions(store, candidates.into_iter(), k))
    }

    pub fn search_batch(
        &self,
        store: &EmbeddingStore,
        queries: &[&[f32]],
        k: usize,
        nprobe: usize,
    ) -> Result<Vec<Vec<ScoredHit>>, IndexError> {
        queries
            .par_iter()
            .map(|q| self.search(store, q, k, nprobe))
            .collect()
    }

    pub fn persist<W: Write>(&self, mut sink: W) -> Result<(), IndexError> {
        sink.write_all(INDEX_MAGIC)?;
        sink.write_all(&INDEX_VERSION.to_le_bytes())?;
        sink.write_all(&(self.nlist() as u32).to_le_bytes())?;
        sink.write_all(&(self.dimension as u32).to_le_bytes())?;
        for x in &self.centroids {
            sink.write_all(&x.to_le_bytes())?;
        }
        for list in &self.postings {
            sink.write_all(&(list.len() as u64).to_le_bytes())?;
            for id in list {
                let len = u16::try_from(id.len()).map_err(|_| StoreError::IdTooLong(id.clone()))?;
                sink.write_all(&len.to_le_bytes())?;
                sink.write_all(id.as_bytes())?;
            }
        }
        sink.flush()?;
        Ok(())
    }

    pub fn persist_path(&self, path: impl AsRef<Path>) -> Result<(), IndexError> {
        let file = std::fs::File::create(path)?;
        self.persist(std::io::BufWriter::new(file))
    }

    pub fn load<R: Read>(mut source: R) -> Result<Self, IndexError> {
        let mut magic = [0u8; 4];
        source.read_exact(&mut magic)?;
        if &magic != INDEX_MAGIC {
            return Err(IndexError::BadMagic);
        }
        let version = read_u32(&mut source)?;
        if version != INDEX_VERSION {
            return Err(IndexError::UnsupportedVersion(version));
        }
        let nlist = read_u32(&mut source)? as usize;
        let dimension = read_u32(&mut source)? as usize;
        if dimension == 0 {
            return Err(StoreError::ZeroDimension.into());
        }
        let mut raw = vec![0u8; nlist * dimension * 4];
        source.read_exact(&mut raw)?;
        let centroids: Vec<f32> = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        if centroids.iter().any(|x| !x.is_finite()) {
            return Err(IndexError::Coverage("non-finite centroid".into()));
        }
        let mut postings = Vec::with_capacity(nlist);
        for _ in 0..nlist {
            let len = read_u64(&mut source)?;
            let mut list = Vec::with_capacity(len.min(1 << 20) as usize);
            for _ in 0..len {
                let mut l = [0u8; 2];
                source.read_exact(&mut l)?;
                let mut id = vec![0u8; u16::from_le_bytes(l) as usize];
                source.read_exact(&mut id)?;
                list.push(String::from_utf8(id).map_err(|_| StoreError::InvalidId)?);
            }
            postings.push(list);
        }
        Ok(Self {
            dimension,
            centroids,
            postings,
        })
    }

    pub fn load_path(path: impl AsRef<Path>) -> Result<Self, IndexError> {
        let file = std::fs::File::open(path)?;
        Self::load(std::io::BufReader::new(file))
    }
}
