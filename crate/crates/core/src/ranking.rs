//! Debias scoring and candidate ranking.
//!
//! The final score penalizes the part of the description similarity that is
//! explained by the reference image rather than the modification text:
//!
//! ```text
//! s_i = s_d - s_m
//! s_f = (1 + beta) * s_q - beta * s_i
//! ```

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::similarity::{self, QueryEmbeddings, SimilarityError};
use crate::store::EmbeddingStore;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RankingError {
    #[error("beta must be non-negative and finite, got {0}")]
    BetaNegative(f64),
    #[error("alpha {0} outside [0, 1]")]
    AlphaOutOfRange(f64),
    #[error("no scores to rank")]
    EmptyScores,
    #[error("k must be positive")]
    InvalidK,
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
}

pub type Result<T> = std::result::Result<T, RankingError>;

/// Which parts of the ranking pipeline are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Rank by description similarity alone.
    DescriptionOnly,
    /// Rank by the fused-query similarity, no penalty.
    AnchorOnly,
    /// Penalty applied to the description similarity, no fusion.
    DebiasOnly,
    /// Fusion followed by the penalty.
    FullSdr,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::DescriptionOnly, Mode::AnchorOnly, Mode::DebiasOnly, Mode::FullSdr];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::DescriptionOnly => "description-only",
            Mode::AnchorOnly => "anchor-only",
            Mode::DebiasOnly => "debias-only",
            Mode::FullSdr => "full-sdr",
        }
    }

    pub fn uses_anchor(self) -> bool {
        matches!(self, Mode::AnchorOnly | Mode::FullSdr)
    }

    pub fn uses_debias(self) -> bool {
        matches!(self, Mode::DebiasOnly | Mode::FullSdr)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Mode::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| {
            format!("unknown mode {s:?} (expected description-only, anchor-only, debias-only or full-sdr)")
        })
    }
}

/// Benchmarks with published fusion/penalty weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dataset {
    Cirr,
    Circo,
    FashionIq,
}

impl Dataset {
    /// `(alpha, beta)` used for this benchmark.
    pub fn default_weights(self) -> (f64, f64) {
        match self {
            Dataset::Cirr => (0.05, 0.5),
            Dataset::Circo => (0.15, 0.35),
            Dataset::FashionIq => (0.2, 0.4),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Dataset::Cirr => "cirr",
            Dataset::Circo => "circo",
            Dataset::FashionIq => "fashioniq",
        }
    }
}

impl fmt::Display for Dataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dataset {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cirr" => Ok(Dataset::Cirr),
            "circo" => Ok(Dataset::Circo),
            "fashioniq" | "fashion-iq" => Ok(Dataset::FashionIq),
            _ => Err(format!("unknown dataset {s:?} (expected cirr, circo or fashioniq)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingConfig {
    pub alpha: f64,
    pub beta: f64,
    pub mode: Mode,
    pub k_values: Vec<usize>,
}

impl RankingConfig {
    pub fn new(alpha: f64, beta: f64, mode: Mode, k_values: Vec<usize>) -> Result<Self> {
        let cfg = Self {
            alpha,
            beta,
            mode,
            k_values,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn for_dataset(dataset: Dataset, mode: Mode, k_values: Vec<usize>) -> Result<Self> {
        let (alpha, beta) = dataset.default_weights();
        Self::new(alpha, beta, mode, k_values)
    }

    pub fn validate(&self) -> Result<()> {
        similarity::check_alpha(self.alpha).map_err(|_| RankingError::AlphaOutOfRange(self.alpha))?;
        check_beta(self.beta)?;
        if self.k_values.contains(&0) {
            return Err(RankingError::InvalidK);
        }
        Ok(())
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(RankingError::BetaNegative(beta));
    }
    Ok(())
}

/// Returns `(s_i, s_f)` for one candidate.
pub fn debias_score(s_q: f64, s_d: f64, s_m: f64, beta: f64) -> Result<(f64, f64)> {
    check_beta(beta)?;
    let s_i = s_d - s_m;
    Ok((s_i, (1.0 + beta) * s_q - beta * s_i))
}

/// `(s_i, s_f)` under an ablation mode. `beta` must already be validated.
#[inline]
pub fn mode_score(mode: Mode, s_q: f64, s_d: f64, s_m: f64, beta: f64) -> (f64, f64) {
    let s_i = s_d - s_m;
    let s_f = match mode {
        Mode::DescriptionOnly => s_d,
        Mode::AnchorOnly => s_q,
        Mode::DebiasOnly => (1.0 + beta) * s_d - beta * s_i,
        Mode::FullSdr => (1.0 + beta) * s_q - beta * s_i,
    };
    (s_i, s_f)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    #[serde(rename = "id")]
    pub candidate_id: String,
    pub s_q: f64,
    pub s_d: f64,
    pub s_m: f64,
    pub s_i: f64,
    pub s_f: f64,
}

impl ScoreVector {
    pub fn new(candidate_id: impl Into<String>, s_q: f64, s_d: f64, s_m: f64, beta: f64, mode: Mode) -> Result<Self> {
        check_beta(beta)?;
        let (s_i, s_f) = mode_score(mode, s_q, s_d, s_m, beta);
        Ok(Self {
            candidate_id: candidate_id.into(),
            s_q,
            s_d,
            s_m,
            s_i,
            s_f,
        })
    }
}

/// Descending score, then ascending id.
#[inline]
pub fn rank_order(a_score: f64, a_id: &str, b_score: f64, b_id: &str) -> Ordering {
    b_score.total_cmp(&a_score).then_with(|| a_id.cmp(b_id))
}

/// Indices of the `k` best entries, best first.
pub fn top_k_indices<S: AsRef<str>>(scores: &[f64], ids: &[S], k: usize) -> Vec<usize> {
    top_k_of((0..scores.len()).collect(), scores, ids, k)
}

/// The `k` best of the given candidate indices, best first.
pub fn top_k_of<S: AsRef<str>>(mut idx: Vec<usize>, scores: &[f64], ids: &[S], k: usize) -> Vec<usize> {
    debug_assert_eq!(scores.len(), ids.len());
    let cmp = |&a: &usize, &b: &usize| rank_order(scores[a], ids[a].as_ref(), scores[b], ids[b].as_ref());
    let k = k.min(idx.len());
    if k == 0 {
        return Vec::new();
    }
    if k < idx.len() {
        idx.select_nth_unstable_by(k - 1, cmp);
        idx.truncate(k);
    }
    idx.sort_unstable_by(cmp);
    idx
}

/// An ordered, truncated ranking with its score breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub query_id: String,
    pub ranking: Vec<String>,
    pub scores: Vec<ScoreVector>,
}

impl RankedList {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("ranked lists always serialize")
    }
}

/// Orders `scores` by `s_f` (ties by id) and keeps the first `k`.
pub fn rank(query_id: impl Into<String>, scores: Vec<ScoreVector>, k: usize) -> Result<RankedList> {
    if scores.is_empty() {
        return Err(RankingError::EmptyScores);
    }
    if k == 0 {
        return Err(RankingError::InvalidK);
    }
    let s_f: Vec<f64> = scores.iter().map(|s| s.s_f).collect();
    let ids: Vec<&str> = scores.iter().map(|s| s.candidate_id.as_str()).collect();
    let order = top_k_indices(&s_f, &ids, k);
    let mut slots: Vec<Option<ScoreVector>> = scores.into_iter().map(Some).collect();
    let scores: Vec<ScoreVector> = order
        .into_iter()
        .map(|i| slots[i].take().expect("indices are distinct"))
        .collect();
    Ok(RankedList {
        query_id: query_id.into(),
        ranking: scores.iter().map(|s| s.candidate_id.clone()).collect(),
        scores,
    })
}

/// Scores and fully ranks every candidate in `store` for one query.
pub fn rank_query(
    query_id: &str,
    q: &QueryEmbeddings,
    store: &EmbeddingStore,
    cfg: &RankingConfig,
) -> Result<RankedList> {
    rank_query_excluding(query_id, q, store, cfg, &[])
}

/// Like [`rank_query`], leaving out the candidates named in `exclude`.
pub fn rank_query_excluding(
    query_id: &str,
    q: &QueryEmbeddings,
    store: &EmbeddingStore,
    cfg: &RankingConfig,
    exclude: &[&str],
) -> Result<RankedList> {
    cfg.validate()?;
    let fused;
    let q = if q.alpha() == cfg.alpha {
        q
    } else {
        fused = q.with_alpha(cfg.alpha)?;
        &fused
    };
    let triplets = similarity::score_triplet(q, store)?;
    let scores = triplets
        .into_iter()
        .filter(|t| !exclude.contains(&t.id))
        .map(|t| ScoreVector::new(t.id, t.s_q, t.s_d, t.s_m, cfg.beta, cfg.mode))
        .collect::<Result<Vec<_>>>()?;
    let n = scores.len();
    rank(query_id, scores, n.max(1))
}
