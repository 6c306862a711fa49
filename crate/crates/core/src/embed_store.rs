//! Dense embedding storage.
//!
//! An [`EmbeddingStore`] holds precomputed vectors for either the query side or
//! the memory side of retrieval. Vectors are kept in one flat `f32` buffer in
//! ingestion order; ids map to row positions through a hash table.
//!
//! Two on-disk encodings are understood:
//!
//! * the binary `RVEM` format (little-endian):
//!   `"RVEM" | version: u32 | dimension: u32 | count: u64 | normalized: u8`
//!   followed by `count` records of `id_len: u16 | id: utf-8 | dimension × f32`;
//! * JSONL, one `{"id": "...", "vector": [...]}` object per line, for small
//!   fixtures. JSONL carries no header, so the dimension comes from
//!   [`IngestOptions`].

use std::collections::HashMap;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub const STORE_MAGIC: &[u8; 4] = b"RVEM";
pub const STORE_VERSION: u32 = 1;
/// CLIP ViT-B/32 width.
pub const DEFAULT_DIMENSION: usize = 512;
/// Allowed deviation of a unit vector's L2 norm from 1.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-5;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic bytes, expected RVEM")]
    BadMagic,
    #[error("unsupported store version {0}")]
    UnsupportedVersion(u32),
    #[error("dimension must be positive")]
    ZeroDimension,
    #[error("record {id:?}: dimension {found}, store dimension is {expected}")]
    DimensionMismatch {
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("record {id:?}: non-finite component at index {index}")]
    NonFinite { id: String, index: usize },
    #[error("record {0:?}: zero vector cannot be normalized")]
    ZeroVector(String),
    #[error("record {id:?}: header declares a normalized store but the norm is {norm}")]
    NotUnitNorm { id: String, norm: f64 },
    #[error("record id {0:?} is longer than 65535 bytes")]
    IdTooLong(String),
    #[error("invalid utf-8 in record id")]
    InvalidId,
    #[error("line {line}: {message}")]
    Jsonl { line: usize, message: String },
}

/// One id plus its dense vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub id: String,
    pub vector: Vec<f32>,
}

/// Borrowed view of a stored record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecordRef<'a> {
    pub id: &'a str,
    pub vector: &'a [f32],
}

impl RecordRef<'_> {
    pub fn to_owned_record(&self) -> EmbeddingRecord {
        EmbeddingRecord {
            id: self.id.to_owned(),
            vector: self.vector.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IngestOptions {
    /// Expected dimension. Required for JSONL (falls back to
    /// [`DEFAULT_DIMENSION`]); for binary input the header is authoritative
    /// and a `Some` value must agree with it.
    pub dimension: Option<usize>,
    /// Scale every vector to unit L2 norm.
    pub normalize: bool,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            dimension: None,
            normalize: true,
        }
    }
}

/// Immutable collection of validated embeddings with a fixed dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dimension: usize,
    normalized: bool,
    ids: Vec<String>,
    data: Vec<f32>,
    positions: HashMap<String, usize>,
}

impl EmbeddingStore {
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Whether every vector was brought to unit norm at ingest.
    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    /// Row position of `id` in ingestion order.
    pub fn position(&self, id: &str) -> Option<usize> {
        self.positions.get(id).copied()
    }

    pub fn id_at(&self, position: usize) -> &str {
        &self.ids[position]
    }

    pub fn vector_at(&self, position: usize) -> &[f32] {
        let start = position * self.dimension;
        &self.data[start..start + self.dimension]
    }

    pub fn lookup(&self, id: &str) -> Option<RecordRef<'_>> {
        self.position(id).map(|p| RecordRef {
            id: &self.ids[p],
            vector: self.vector_at(p),
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = RecordRef<'_>> + '_ {
        self.ids
            .iter()
            .zip(self.data.chunks_exact(self.dimension))
            .map(|(id, vector)| RecordRef { id, vector })
    }

    /// Reads either encoding, sniffing the `RVEM` magic.
    pub fn ingest<R: Read>(source: R, options: IngestOptions) -> Result<Self, StoreError> {
        let mut reader = BufReader::new(source);
        let head = reader.fill_buf()?;
        if head.starts_with(STORE_MAGIC) {
            Self::ingest_binary(reader, options)
        } else {
            Self::ingest_jsonl(reader, options)
        }
    }

    pub fn ingest_path(path: impl AsRef<Path>, options: IngestOptions) -> Result<Self, StoreError> {
        let file = std::fs::File::open(path)?;
        Self::ingest(file, options)
    }

    pub fn ingest_binary<R: Read>(mut source: R, options: IngestOptions) -> Result<Self, StoreError> {
        let mut magic = [0u8; 4];
        source.read_exact(&mut magic)?;
        if &magic != STORE_MAGIC {
            return Err(StoreError::BadMagic);
        }
        let version = read_u32(&mut source)?;
        if version != STORE_VERSION {
            return Err(StoreError::UnsupportedVersion(version));
        }
        let dimension = read_u32(&mut source)? as usize;
        let count = read_u64(&mut source)?;
        let header_normalized = read_u8(&mut source)? != 0;
        if let Some(expected) = options.dimension {
            if expected != dimension {
                return Err(StoreError::DimensionMismatch {
                    id: "<header>".into(),
                    expected,
                    found: dimension,
                });
            }
        }
        // Vectors already written as unit norm are kept bit for bit; a second
        // normalization pass can move them by an ulp.
        let mut builder = StoreBuilder::new(dimension, options.normalize && !header_normalized)?;
        builder.require_unit = header_normalized;
        let mut buf = vec![0u8; dimension * 4];
        for _ in 0..count {
            let id_len = read_u16(&mut source)? as usize;
            let mut id = vec![0u8; id_len];
            source.read_exact(&mut id)?;
            let id = String::from_utf8(id).map_err(|_| StoreError::InvalidId)?;
            source.read_exact(&mut buf)?;
            let vector = buf
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            builder.push(id, vector)?;
        }
        let mut store = builder.finish();
        store.normalized |= header_normalized;
        Ok(store)
    }

    pub fn ingest_jsonl<R: Read>(source: R, options: IngestOptions) -> Result<Self, StoreError> {
        let dimension = options.dimension.unwrap_or(DEFAULT_DIMENSION);
        let mut builder = StoreBuilder::new(dimension, options.normalize)?;
        for (n, line) in BufReader::new(source).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: EmbeddingRecord =
                serde_json::from_str(&line).map_err(|e| StoreError::Jsonl {
                    line: n + 1,
                    message: e.to_string(),
                })?;
            builder.push(record.id, record.vector)?;
        }
        Ok(builder.finish())
    }

    /// Writes the binary `RVEM` encoding.
    pub fn persist<W: Write>(&self, mut sink: W) -> Result<(), StoreError> {
        sink.write_all(STORE_MAGIC)?;
        sink.write_all(&STORE_VERSION.to_le_bytes())?;
        sink.write_all(&(self.dimension as u32).to_le_bytes())?;
        sink.write_all(&(self.len() as u64).to_le_bytes())?;
        sink.write_all(&[self.normalized as u8])?;
        for record in self.iter() {
            let id = record.id.as_bytes();
            let id_len =
                u16::try_from(id.len()).map_err(|_| StoreError::IdTooLong(record.id.into()))?;
            sink.write_all(&id_len.to_le_bytes())?;
            sink.write_all(id)?;
            for x in record.vector {
                sink.write_all(&x.to_le_bytes())?;
            }
        }
        sink.flush()?;
        Ok(())
    }

    pub fn persist_path(&self, path: impl AsRef<Path>) -> Result<(), StoreError> {
        let file = std::fs::File::create(path)?;
        self.persist(io::BufWriter::new(file))
    }

    /// Returns a copy with every vector rescaled to unit norm.
    pub fn normalized_copy(&self) -> Result<Self, StoreError> {
        let mut builder = StoreBuilder::new(self.dimension, true)?;
        for record in self.iter() {
            builder.push(record.id.to_owned(), record.vector.to_vec())?;
        }
        Ok(builder.finish())
    }
}

/// Incremental, validating constructor for [`EmbeddingStore`].
#[derive(Debug)]
pub struct StoreBuilder {
    dimension: usize,
    normalize: bool,
    require_unit: bool,
    ids: Vec<String>,
    data: Vec<f32>,
    positions: HashMap<String, usize>,
}

impl StoreBuilder {
    pub fn new(dimension: usize, normalize: bool) -> Result<Self, StoreError> {
        if dimension == 0 {
            return Err(StoreError::ZeroDimension);
        }
        Ok(Self {
            dimension,
            normalize,
            require_unit: false,
            ids: Vec::new(),
            data: Vec::new(),
            positions: HashMap::new(),
        })
    }

    pub fn push(&mut self, id: String, mut vector: Vec<f32>) -> Result<&mut Self, StoreError> {
        if vector.len() != self.dimension {
            return Err(StoreError::DimensionMismatch {
                id,
                expected: self.dimension,
                found: vector.len(),
            });
        }
        if let Some(index) = vector.iter().position(|x| !x.is_finite()) {
            return Err(StoreError::NonFinite { id, index });
        }
        if self.positions.contains_key(&id) {
            return Err(StoreError::DuplicateId(id));
        }
        if self.normalize {
            if !normalize_in_place(&mut vector) {
                return Err(StoreError::ZeroVector(id));
            }
        } else if self.require_unit {
            let norm = l2_norm(&vector);
            if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
                return Err(StoreError::NotUnitNorm { id, norm });
            }
        }
        self.positions.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.data.extend_from_slice(&vector);
        Ok(self)
    }

    pub fn finish(self) -> EmbeddingStore {
        EmbeddingStore {
            dimension: self.dimension,
            normalized: self.normalize,
            ids: self.ids,
            data: self.data,
            positions: self.positions,
        }
    }
}

pub fn l2_norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt()
}

/// Scales `v` to unit norm; returns `false` (leaving `v` untouched) for a zero vector.
pub fn normalize_in_place(v: &mut [f32]) -> bool {
    let norm = l2_norm(v);
    if norm == 0.0 || !norm.is_finite() {
        return false;
    }
    for x in v.iter_mut() {
        *x = (f64::from(*x) / norm) as f32;
    }
    true
}

fn read_u8<R: Read>(r: &mut R) -> io::Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

fn read_u16<R: Read>(r: &mut R) -> io::Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}
