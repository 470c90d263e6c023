//! Embedding corpora in the SDRE v1 binary interchange format.
//!
//! Layout (little-endian, no padding, no trailing bytes):
//!
//! ```text
//! 0..4    magic  "SDRE"
//! 4..8    version u32 (= 1)
//! 8..12   dim u32
//! 12..20  count u64
//! then `count` records: id_len u16 | id (UTF-8) | dim x f32
//! ```
//!
//! Vectors are L2-normalized on ingest, so every dot product between stored
//! vectors is a cosine. Records are kept sorted by id, which makes the store
//! independent of the on-disk record order.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"SDRE";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 20;

/// Norm below which a vector is rejected as unnormalizable.
pub const ZERO_NORM: f64 = 1e-12;
/// Deviation of the raw norm from 1 that triggers an ingest warning.
pub const NORM_WARN_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("not an SDRE file (magic {found:02x?})")]
    BadMagic { found: Vec<u8> },
    #[error("unsupported SDRE version {0}")]
    VersionUnsupported(u32),
    #[error("header declares {declared} records, file contains {actual}")]
    CountMismatch { declared: u64, actual: u64 },
    #[error("truncated input: {0}")]
    Truncated(&'static str),
    #[error("{0} unexpected trailing bytes after the last record")]
    TrailingBytes(usize),
    #[error("dimension must be positive")]
    ZeroDimension,
    #[error("record id is empty (record #{0})")]
    EmptyId(u64),
    #[error("record id is not valid UTF-8 (record #{0})")]
    InvalidId(u64),
    #[error("vector for {id:?} has zero norm")]
    ZeroVector { id: String },
    #[error("vector for {id:?} contains a non-finite component")]
    NonFinite { id: String },
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("vector for {id:?} has dimension {got}, store dimension is {expected}")]
    DimensionMismatch { id: String, expected: usize, got: usize },
    #[error("id {0:?} is longer than 65535 bytes")]
    IdTooLong(String),
    #[error("id {0:?} not found")]
    NotFound(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl StoreError {
    /// True for errors caused by the content of an SDRE file, as opposed to
    /// the filesystem.
    pub fn is_format_error(&self) -> bool {
        !matches!(self, StoreError::Io { .. } | StoreError::NotFound(_))
    }
}

pub type Result<T> = std::result::Result<T, StoreError>;

/// A borrowed view of one stored record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Record<'a> {
    pub id: &'a str,
    pub vector: &'a [f32],
}

/// An immutable, normalized, id-indexed set of embeddings.
#[derive(Clone)]
pub struct EmbeddingStore {
    dim: usize,
    ids: Vec<String>,
    data: Vec<f32>,
    index: HashMap<String, usize>,
    source: String,
    norm_warnings: usize,
}

impl fmt::Debug for EmbeddingStore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EmbeddingStore")
            .field("dim", &self.dim)
            .field("len", &self.ids.len())
            .field("source", &self.source)
            .finish()
    }
}

impl EmbeddingStore {
    /// Reads and validates an SDRE file.
    pub fn ingest(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|source| StoreError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_bytes(&bytes, path.display().to_string())
    }

    /// Decodes an in-memory SDRE image.
    pub fn from_bytes(bytes: &[u8], source: impl Into<String>) -> Result<Self> {
        let source = source.into();
        let mut cur = Cursor { buf: bytes, pos: 0 };

        let magic = cur
            .take(4)
            .map_err(|_| StoreError::BadMagic { found: bytes.to_vec() })?;
        if magic != MAGIC {
            return Err(StoreError::BadMagic { found: magic.to_vec() });
        }
        let version = cur.u32().map_err(|_| StoreError::Truncated("header"))?;
        if version != VERSION {
            return Err(StoreError::VersionUnsupported(version));
        }
        let dim = cur.u32().map_err(|_| StoreError::Truncated("header"))? as usize;
        let count = cur.u64().map_err(|_| StoreError::Truncated("header"))?;
        if dim == 0 {
            return Err(StoreError::ZeroDimension);
        }

        // The header is untrusted: never reserve more than the bytes can hold.
        let min_record = 2 + 1 + dim.saturating_mul(4);
        let plausible = (cur.remaining() / min_record).min(count as usize);
        let mut records: Vec<(String, Vec<f32>)> = Vec::with_capacity(plausible);
        let mut norm_warnings = 0;

        for n in 0..count {
            if cur.remaining() == 0 {
                return Err(StoreError::CountMismatch {
                    declared: count,
                    actual: n,
                });
            }
            let (id, raw) = read_record(&mut cur, dim, n)?;
            let (vector, warned) = normalize_record(&id, &raw)?;
            if warned {
                norm_warnings += 1;
            }
            records.push((id, vector));
        }

        if cur.remaining() > 0 {
            // Distinguish extra whole records from garbage.
            let mut extra = 0u64;
            let mut probe = Cursor {
                buf: cur.buf,
                pos: cur.pos,
            };
            while probe.remaining() > 0 {
                match read_record(&mut probe, dim, count + extra) {
                    Ok(_) => extra += 1,
                    Err(_) => return Err(StoreError::TrailingBytes(cur.remaining())),
                }
            }
            return Err(StoreError::CountMismatch {
                declared: count,
                actual: count + extra,
            });
        }

        let mut store = Self::assemble(dim, records, source)?;
        store.norm_warnings = norm_warnings;
        if norm_warnings > 0 {
            log::warn!(
                "{}: {} vector(s) deviated from unit norm by more than {:e}; renormalized",
                store.source,
                norm_warnings,
                NORM_WARN_TOLERANCE
            );
        }
        Ok(store)
    }

    /// Builds a store from in-memory records, normalizing each vector.
    pub fn from_records<I, S>(dim: usize, records: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<f32>)>,
        S: Into<String>,
    {
        if dim == 0 {
            return Err(StoreError::ZeroDimension);
        }
        let mut out = Vec::new();
        let mut norm_warnings = 0;
        for (n, (id, raw)) in records.into_iter().enumerate() {
            let id = id.into();
            if id.is_empty() {
                return Err(StoreError::EmptyId(n as u64));
            }
            if raw.len() != dim {
                return Err(StoreError::DimensionMismatch {
                    id,
                    expected: dim,
                    got: raw.len(),
                });
            }
            let (vector, warned) = normalize_record(&id, &raw)?;
            norm_warnings += usize::from(warned);
            out.push((id, vector));
        }
        let mut store = Self::assemble(dim, out, "<memory>".to_string())?;
        store.norm_warnings = norm_warnings;
        Ok(store)
    }

    fn assemble(dim: usize, mut records: Vec<(String, Vec<f32>)>, source: String) -> Result<Self> {
        records.sort_by(|a, b| a.0.cmp(&b.0));
        if let Some(w) = records.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(StoreError::DuplicateId(w[0].0.clone()));
        }
        let mut ids = Vec::with_capacity(records.len());
        let mut data = Vec::with_capacity(records.len() * dim);
        let mut index = HashMap::with_capacity(records.len());
        for (i, (id, v)) in records.into_iter().enumerate() {
            data.extend_from_slice(&v);
            index.insert(id.clone(), i);
            ids.push(id);
        }
        Ok(Self {
            dim,
            ids,
            data,
            index,
            source,
            norm_warnings: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Number of records whose raw norm was off by more than
    /// [`NORM_WARN_TOLERANCE`] before renormalization.
    pub fn norm_warnings(&self) -> usize {
        self.norm_warnings
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn lookup(&self, id: &str) -> Result<Record<'_>> {
        self.position(id)
            .map(|i| self.get(i))
            .ok_or_else(|| StoreError::NotFound(id.to_string()))
    }

    /// Position of `id` in the sorted record order.
    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// The `i`-th record in ascending id order.
    pub fn get(&self, i: usize) -> Record<'_> {
        Record {
            id: &self.ids[i],
            vector: &self.data[i * self.dim..(i + 1) * self.dim],
        }
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    /// Records in ascending id order.
    pub fn iter(&self) -> impl ExactSizeIterator<Item = Record<'_>> + '_ {
        (0..self.len()).map(move |i| self.get(i))
    }

    /// Serializes the store back to SDRE v1, in id order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        encode(&mut out, self.dim, self.iter().map(|r| (r.id, r.vector)))
            .expect("ids in a store always fit the format");
        out
    }
}

/// Writes records as SDRE v1. Vectors are written as given (no normalization).
pub fn encode<'a, W, I>(out: &mut W, dim: usize, records: I) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = (&'a str, &'a [f32])>,
    I::IntoIter: ExactSizeIterator,
{
    let records = records.into_iter();
    let io = |source| StoreError::Io {
        path: "<writer>".into(),
        source,
    };
    if dim == 0 {
        return Err(StoreError::ZeroDimension);
    }
    out.write_all(&MAGIC).map_err(io)?;
    out.write_all(&VERSION.to_le_bytes()).map_err(io)?;
    out.write_all(&(dim as u32).to_le_bytes()).map_err(io)?;
    out.write_all(&(records.len() as u64).to_le_bytes()).map_err(io)?;
    for (id, v) in records {
        if id.len() > u16::MAX as usize {
            return Err(StoreError::IdTooLong(id.to_string()));
        }
        if v.len() != dim {
            return Err(StoreError::DimensionMismatch {
                id: id.to_string(),
                expected: dim,
                got: v.len(),
            });
        }
        out.write_all(&(id.len() as u16).to_le_bytes()).map_err(io)?;
        out.write_all(id.as_bytes()).map_err(io)?;
        for x in v {
            out.write_all(&x.to_le_bytes()).map_err(io)?;
        }
    }
    Ok(())
}

/// Writes an SDRE file atomically (temp file in the same directory, then rename).
pub fn write_file<'a, I>(path: impl AsRef<Path>, dim: usize, records: I) -> Result<()>
where
    I: IntoIterator<Item = (&'a str, &'a [f32])>,
    I::IntoIter: ExactSizeIterator,
{
    let path = path.as_ref();
    let mut buf = Vec::new();
    encode(&mut buf, dim, records)?;
    crate::fsutil::write_atomic(path, &buf).map_err(|source| StoreError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn read_record(cur: &mut Cursor<'_>, dim: usize, n: u64) -> Result<(String, Vec<f32>)> {
    let id_len = cur.u16().map_err(|_| StoreError::Truncated("record id length"))? as usize;
    if id_len == 0 {
        return Err(StoreError::EmptyId(n));
    }
    let id_bytes = cur.take(id_len).map_err(|_| StoreError::Truncated("record id"))?;
    let id = std::str::from_utf8(id_bytes)
        .map_err(|_| StoreError::InvalidId(n))?
        .to_string();
    let raw = cur
        .take(dim.checked_mul(4).ok_or(StoreError::Truncated("record vector"))?)
        .map_err(|_| StoreError::Truncated("record vector"))?;
    let vector = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((id, vector))
}

/// Returns the unit vector and whether the raw norm warranted a warning.
fn normalize_record(id: &str, raw: &[f32]) -> Result<(Vec<f32>, bool)> {
    if raw.iter().any(|x| !x.is_finite()) {
        return Err(StoreError::NonFinite { id: id.to_string() });
    }
    let norm = raw.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
    if norm < ZERO_NORM {
        return Err(StoreError::ZeroVector { id: id.to_string() });
    }
    let unit = raw.iter().map(|&x| (f64::from(x) / norm) as f32).collect();
    Ok((unit, (norm - 1.0).abs() > NORM_WARN_TOLERANCE))
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], ()> {
        if self.remaining() < n {
            return Err(());
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> std::result::Result<u16, ()> {
        self.take(2).map(|b| u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> std::result::Result<u32, ()> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> std::result::Result<u64, ()> {
        self.take(8).map(|b| u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn encoded(dim: usize, recs: &[(&str, Vec<f32>)]) -> Vec<u8> {
        let mut out = Vec::new();
        encode(&mut out, dim, recs.iter().map(|(i, v)| (*i, v.as_slice()))).unwrap();
        out
    }

    #[test]
    fn three_four_five_normalizes() {
        let bytes = encoded(2, &[("a", vec![3.0, 4.0])]);
        let store = EmbeddingStore::from_bytes(&bytes, "t").unwrap();
        assert_eq!(store.dim(), 2);
        let rec = store.lookup("a").unwrap();
        assert!((rec.vector[0] - 0.6).abs() < 1e-6);
        assert!((rec.vector[1] - 0.8).abs() < 1e-6);
        assert_eq!(store.norm_warnings(), 1);
    }

    #[test]
    fn bad_magic() {
        let mut bytes = encoded(2, &[("a", vec![3.0, 4.0])]);
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(matches!(
            EmbeddingStore::from_bytes(&bytes, "t"),
            Err(StoreError::BadMagic { .. })
        ));
        assert!(matches!(
            EmbeddingStore::from_bytes(b"SD", "t"),
            Err(StoreError::BadMagic { .. })
        ));
    }

    #[test]
    fn unsupported_version() {
        let mut bytes = encoded(2, &[("a", vec![1.0, 0.0])]);
        bytes[4..8].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(
            EmbeddingStore::from_bytes(&bytes, "t"),
            Err(StoreError::VersionUnsupported(2))
        ));
    }

    #[test]
    fn declared_count_larger_than_file() {
        let mut bytes = encoded(2, &[("a", vec![1.0, 0.0])]);
        bytes[12..20].copy_from_slice(&2u64.to_le_bytes());
        assert!(matches!(
            EmbeddingStore::from_bytes(&bytes, "t"),
            Err(StoreError::CountMismatch { declared: 2, actual: 1 })
        ));
    }

    #[test]
    fn declared_count_smaller_than_file() {
        let mut bytes = encoded(2, &[("a", vec![1.0, 0.0]), ("b", vec![0.0, 1.0])]);
        bytes[12..20].copy_from_slice(&1u64.to_le_bytes());
        assert!(matches!(
            EmbeddingStore::from_bytes(&bytes, "t"),
            Err(StoreError::CountMismatch { declared: 1, actual: 2 })
        ));
    }

    #[test]
    fn trailing_garbage() {
        let mut bytes = encoded(2, &[("a", vec![1.0, 0.0])]);
        bytes.push(7);
        assert!(matches!(
            EmbeddingStore::from_bytes(&bytes, "t"),
            Err(StoreError::TrailingBytes(1))
        ));
    }

    #[test]
    fn truncated_vector() {
        let bytes = encoded(2, &[("a", vec![1.0, 0.0])]);
        assert!(matches!(
            EmbeddingStore::from_bytes(&bytes[..bytes.len() - 1], "t"),
            Err(StoreError::Truncated(_))
        ));
        assert!(matches!(
            EmbeddingStore::from_bytes(&bytes[..10], "t"),
            Err(StoreError::Truncated("header"))
        ));
    }

    #[test]
    fn zero_vector_rejected() {
        let bytes = encoded(3, &[("z", vec![0.0, 0.0, 0.0])]);
        assert!(matches!(
            EmbeddingStore::from_bytes(&bytes, "t"),
            Err(StoreError::ZeroVector { .. })
        ));
    }

    #[test]
    fn non_finite_rejected() {
        let bytes = encoded(2, &[("n", vec![f32::NAN, 1.0])]);
        assert!(matches!(
            EmbeddingStore::from_bytes(&bytes, "t"),
            Err(StoreError::NonFinite { .. })
        ));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let bytes = encoded(2, &[("a", vec![1.0, 0.0]), ("a", vec![0.0, 1.0])]);
        assert!(matches!(
            EmbeddingStore::from_bytes(&bytes, "t"),
            Err(StoreError::DuplicateId(id)) if id == "a"
        ));
    }

    #[test]
    fn zero_dim_and_empty_id() {
        let mut bytes = encoded(2, &[("a", vec![1.0, 0.0])]);
        bytes[8..12].copy_from_slice(&0u32.to_le_bytes());
        assert!(matches!(
            EmbeddingStore::from_bytes(&bytes, "t"),
            Err(StoreError::ZeroDimension)
        ));

        let mut bytes = Vec::new();
        bytes.extend_from_slice(&MAGIC);
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&1u64.to_le_bytes());
        bytes.extend_from_slice(&0u16.to_le_bytes());
        bytes.extend_from_slice(&1f32.to_le_bytes());
        assert!(matches!(
            EmbeddingStore::from_bytes(&bytes, "t"),
            Err(StoreError::EmptyId(0))
        ));
    }

    #[test]
    fn huge_declared_count_does_not_allocate() {
        let mut bytes = encoded(2, &[("a", vec![1.0, 0.0])]);
        bytes[12..20].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(matches!(
            EmbeddingStore::from_bytes(&bytes, "t"),
            Err(StoreError::CountMismatch { actual: 1, .. })
        ));
    }

    #[test]
    fn lookup_missing_is_not_found() {
        let store = EmbeddingStore::from_records(2, [("a", vec![3.0, 4.0])]).unwrap();
        assert!(matches!(store.lookup("z"), Err(StoreError::NotFound(id)) if id == "z"));
    }

    #[test]
    fn unit_vectors_do_not_warn() {
        let s = 1.0 / 2f32.sqrt();
        let store = EmbeddingStore::from_records(2, [("a", vec![s, s])]).unwrap();
        assert_eq!(store.norm_warnings(), 0);
    }

    #[test]
    fn to_bytes_reingests_identically() {
        let store = EmbeddingStore::from_records(3, [("b", vec![1.0, 2.0, 2.0]), ("a", vec![0.0, 0.0, 5.0])]).unwrap();
        let again = EmbeddingStore::from_bytes(&store.to_bytes(), "t").unwrap();
        assert_eq!(again.ids(), store.ids());
        for r in store.iter() {
            assert_eq!(again.lookup(r.id).unwrap().vector, r.vector);
        }
    }
}
