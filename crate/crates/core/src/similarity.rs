//! Cosine similarity, anchor fusion of description and reference-image
//! embeddings, and per-candidate similarity triplets.
//!
//! All accumulation happens in `f64`, whatever the storage precision.
//! Rank-deciding score gaps at D=768 can be ~1e-4, which `f32` sums blur.

use rayon::prelude::*;
use thiserror::Error;

use crate::store::EmbeddingStore;

/// Tolerance on the norm of vectors that must be unit length.
pub const UNIT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimilarityError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("alpha {0} outside [0, 1]")]
    AlphaOutOfRange(f64),
    #[error("{which} is not unit norm (norm {norm})")]
    NotUnit { which: &'static str, norm: f64 },
    #[error("candidate store is empty")]
    EmptyStore,
}

pub type Result<T> = std::result::Result<T, SimilarityError>;

pub(crate) fn dot<A, B>(a: &[A], b: &[B]) -> f64
where
    A: Copy + Into<f64>,
    B: Copy + Into<f64>,
{
    a.iter().zip(b).map(|(&x, &y)| x.into() * y.into()).sum()
}

pub(crate) fn norm<A: Copy + Into<f64>>(a: &[A]) -> f64 {
    a.iter().map(|&x| x.into() * x.into()).sum::<f64>().sqrt()
}

fn check_dims(left: usize, right: usize) -> Result<()> {
    if left != right {
        return Err(SimilarityError::DimensionMismatch { left, right });
    }
    Ok(())
}

#[inline]
fn clamp_unit(x: f64) -> f64 {
    x.clamp(-1.0, 1.0)
}

/// Cosine of the angle between `a` and `b`, clamped to `[-1, 1]`.
pub fn cosine<A, B>(a: &[A], b: &[B]) -> Result<f64>
where
    A: Copy + Into<f64>,
    B: Copy + Into<f64>,
{
    check_dims(a.len(), b.len())?;
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(SimilarityError::ZeroVector);
    }
    Ok(clamp_unit(dot(a, b) / (na * nb)))
}

/// Fused query `(1 - alpha) * f_d + alpha * f_r`. Not renormalized; cosine
/// scoring divides the scale out.
pub fn anchor_fuse(f_d: &[f64], f_r: &[f64], alpha: f64) -> Result<Vec<f64>> {
    check_dims(f_d.len(), f_r.len())?;
    check_alpha(alpha)?;
    Ok(f_d
        .iter()
        .zip(f_r)
        .map(|(&d, &r)| (1.0 - alpha) * d + alpha * r)
        .collect())
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(SimilarityError::AlphaOutOfRange(alpha));
    }
    Ok(())
}

/// The three unit embeddings of one query plus the fused query they induce.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryEmbeddings {
    f_d: Vec<f64>,
    f_r: Vec<f64>,
    f_m: Vec<f64>,
    f_q: Vec<f64>,
    alpha: f64,
}

impl QueryEmbeddings {
    /// `f_d` describes the target, `f_r` is the reference image and `f_m`
    /// the modification text. Each must be unit norm.
    pub fn new<T>(f_d: &[T], f_r: &[T], f_m: &[T], alpha: f64) -> Result<Self>
    where
        T: Copy + Into<f64>,
    {
        check_dims(f_d.len(), f_r.len())?;
        check_dims(f_d.len(), f_m.len())?;
        let widen = |v: &[T]| v.iter().map(|&x| x.into()).collect::<Vec<f64>>();
        let (f_d, f_r, f_m) = (widen(f_d), widen(f_r), widen(f_m));
        for (which, v) in [("f_d", &f_d), ("f_r", &f_r), ("f_m", &f_m)] {
            let n = norm(v);
            if (n - 1.0).abs() > UNIT_TOLERANCE {
                return Err(SimilarityError::NotUnit { which, norm: n });
            }
        }
        let f_q = anchor_fuse(&f_d, &f_r, alpha)?;
        Ok(Self {
            f_d,
            f_r,
            f_m,
            f_q,
            alpha,
        })
    }

    /// Same embeddings, fused at a different `alpha`.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        let f_q = anchor_fuse(&self.f_d, &self.f_r, alpha)?;
        Ok(Self {
            f_q,
            alpha,
            ..self.clone()
        })
    }

    pub fn dim(&self) -> usize {
        self.f_d.len()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn f_d(&self) -> &[f64] {
        &self.f_d
    }

    pub fn f_r(&self) -> &[f64] {
        &self.f_r
    }

    pub fn f_m(&self) -> &[f64] {
        &self.f_m
    }

    pub fn f_q(&self) -> &[f64] {
        &self.f_q
    }
}

/// Similarities of one candidate to the fused query, the description and the
/// modification text.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripletScores<'a> {
    pub id: &'a str,
    pub s_q: f64,
    pub s_d: f64,
    pub s_m: f64,
}

/// Scores a single candidate vector against `q`.
pub fn score_candidate<T: Copy + Into<f64>>(q: &QueryEmbeddings, candidate: &[T]) -> Result<(f64, f64, f64)> {
    check_dims(q.dim(), candidate.len())?;
    let nc = norm(candidate);
    let norms = QueryNorms::of(q)?;
    if nc == 0.0 {
        return Err(SimilarityError::ZeroVector);
    }
    Ok(triplet(q, norms, candidate, nc))
}

// `f_d` and `f_m` are unit by construction; their norms are still divided out
// so the result is a true cosine.
#[derive(Clone, Copy)]
struct QueryNorms {
    q: f64,
    d: f64,
    m: f64,
}

impl QueryNorms {
    fn of(q: &QueryEmbeddings) -> Result<Self> {
        let nq = norm(&q.f_q);
        if nq == 0.0 {
            return Err(SimilarityError::ZeroVector);
        }
        Ok(Self {
            q: nq,
            d: norm(&q.f_d),
            m: norm(&q.f_m),
        })
    }
}

fn triplet<T: Copy + Into<f64>>(q: &QueryEmbeddings, n: QueryNorms, c: &[T], nc: f64) -> (f64, f64, f64) {
    let s_q = clamp_unit(dot(&q.f_q, c) / (n.q * nc));
    let s_d = clamp_unit(dot(&q.f_d, c) / (n.d * nc));
    let s_m = clamp_unit(dot(&q.f_m, c) / (n.m * nc));
    (s_q, s_d, s_m)
}

/// Scores every candidate in `store`, in ascending id order.
///
/// Work is split across the rayon pool; each candidate is scored by the same
/// sequential routine, so results do not depend on the partitioning.
pub fn score_triplet<'s>(q: &QueryEmbeddings, store: &'s EmbeddingStore) -> Result<Vec<TripletScores<'s>>> {
    check_dims(q.dim(), store.dim())?;
    if store.is_empty() {
        return Err(SimilarityError::EmptyStore);
    }
    let norms = QueryNorms::of(q)?;
    Ok((0..store.len())
        .into_par_iter()
        .with_min_len(256)
        .map(|i| {
            let rec = store.get(i);
            let (s_q, s_d, s_m) = triplet(q, norms, rec.vector, norm(rec.vector));
            TripletScores {
                id: rec.id,
                s_q,
                s_d,
                s_m,
            }
        })
        .collect())
}

/// Per-candidate raw inner products for one query, computed once and reused
/// across any number of `alpha` values.
///
/// `S_d` and `S_m` do not depend on `alpha`; `S_q` follows from
/// `<f_q, c> = (1 - alpha) <f_d, c> + alpha <f_r, c>` and the norm of the
/// fused query.
#[derive(Debug, Clone)]
pub struct SimilarityTable {
    f_d: Vec<f64>,
    f_r: Vec<f64>,
    dot_d: Vec<f64>,
    dot_r: Vec<f64>,
    cand_norm: Vec<f64>,
    s_d: Vec<f64>,
    s_m: Vec<f64>,
}

impl SimilarityTable {
    /// Builds the table over the candidates at `positions` in `store`.
    pub fn build(q: &QueryEmbeddings, store: &EmbeddingStore, positions: &[usize]) -> Result<Self> {
        check_dims(q.dim(), store.dim())?;
        if positions.is_empty() {
            return Err(SimilarityError::EmptyStore);
        }
        let nd = norm(&q.f_d);
        let nm = norm(&q.f_m);
        let n = positions.len();
        let (mut dot_d, mut dot_r, mut cand_norm, mut s_d, mut s_m) = (
            Vec::with_capacity(n),
            Vec::with_capacity(n),
            Vec::with_capacity(n),
            Vec::with_capacity(n),
            Vec::with_capacity(n),
        );
        for &p in positions {
            let c = store.get(p).vector;
            let nc = norm(c);
            let dd = dot(&q.f_d, c);
            dot_d.push(dd);
            dot_r.push(dot(&q.f_r, c));
            cand_norm.push(nc);
            s_d.push(clamp_unit(dd / (nd * nc)));
            s_m.push(clamp_unit(dot(&q.f_m, c) / (nm * nc)));
        }
        Ok(Self {
            f_d: q.f_d.clone(),
            f_r: q.f_r.clone(),
            dot_d,
            dot_r,
            cand_norm,
            s_d,
            s_m,
        })
    }

    pub fn len(&self) -> usize {
        self.s_d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s_d.is_empty()
    }

    pub fn s_d(&self) -> &[f64] {
        &self.s_d
    }

    pub fn s_m(&self) -> &[f64] {
        &self.s_m
    }

    /// `S_q` for every candidate at the given `alpha`.
    pub fn s_q(&self, alpha: f64) -> Result<Vec<f64>> {
        let nq = norm(&anchor_fuse(&self.f_d, &self.f_r, alpha)?);
        if nq == 0.0 {
            return Err(SimilarityError::ZeroVector);
        }
        Ok(self
            .dot_d
            .iter()
            .zip(&self.dot_r)
            .zip(&self.cand_norm)
            .map(|((&dd, &dr), &nc)| clamp_unit(((1.0 - alpha) * dd + alpha * dr) / (nq * nc)))
            .collect())
    }
}
