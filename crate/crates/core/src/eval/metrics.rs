//! Recall@k, mAP@k and subset Recall@k over ranked id lists.

use thiserror::Error;

use crate::ranking::RankedList;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricError {
    #[error("k must be positive")]
    InvalidK,
    #[error("ground truth set is empty")]
    EmptyTruth,
    #[error("subset is empty")]
    EmptySubset,
    #[error("ground truth {0:?} is not a member of the subset")]
    TruthNotInSubset(String),
}

fn contains<S: AsRef<str>>(set: &[S], id: &str) -> bool {
    set.iter().any(|s| s.as_ref() == id)
}

/// Whether any ground-truth id appears in the first `k` entries.
pub fn recall_hit<R, T>(ranking: &[R], truth: &[T], k: usize) -> Result<bool, MetricError>
where
    R: AsRef<str>,
    T: AsRef<str>,
{
    if k == 0 {
        return Err(MetricError::InvalidK);
    }
    Ok(ranking.iter().take(k).any(|id| contains(truth, id.as_ref())))
}

/// Average precision truncated at `k`, normalized by `min(k, |truth|)`.
pub fn average_precision_at_k<R, T>(ranking: &[R], truth: &[T], k: usize) -> Result<f64, MetricError>
where
    R: AsRef<str>,
    T: AsRef<str>,
{
    if k == 0 {
        return Err(MetricError::InvalidK);
    }
    if truth.is_empty() {
        return Err(MetricError::EmptyTruth);
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, id) in ranking.iter().take(k).enumerate() {
        if contains(truth, id.as_ref()) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Ok(sum / k.min(truth.len()) as f64)
}

/// The members of `subset` in the order they appear in `ranking`.
pub fn restrict_to_subset<'a, R, S>(ranking: &'a [R], subset: &[S]) -> Vec<&'a str>
where
    R: AsRef<str>,
    S: AsRef<str>,
{
    ranking
        .iter()
        .map(AsRef::as_ref)
        .filter(|id| contains(subset, id))
        .collect()
}

/// Checks that every ground-truth id belongs to the subset.
pub fn check_subset<T, S>(truth: &[T], subset: &[S]) -> Result<(), MetricError>
where
    T: AsRef<str>,
    S: AsRef<str>,
{
    if subset.is_empty() {
        return Err(MetricError::EmptySubset);
    }
    match truth.iter().find(|t| !contains(subset, t.as_ref())) {
        Some(t) => Err(MetricError::TruthNotInSubset(t.as_ref().to_string())),
        None => Ok(()),
    }
}

/// Recall@k after restricting the ranking to the subset members.
pub fn recall_sub_hit<R, T, S>(ranking: &[R], truth: &[T], subset: &[S], k: usize) -> Result<bool, MetricError>
where
    R: AsRef<str>,
    T: AsRef<str>,
    S: AsRef<str>,
{
    check_subset(truth, subset)?;
    recall_hit(&restrict_to_subset(ranking, subset), truth, k)
}

pub fn recall_at_k<T: AsRef<str>>(ranked: &RankedList, truth: &[T], k: usize) -> Result<bool, MetricError> {
    recall_hit(&ranked.ranking, truth, k)
}

pub fn map_at_k<T: AsRef<str>>(ranked: &RankedList, truth: &[T], k: usize) -> Result<f64, MetricError> {
    average_precision_at_k(&ranked.ranking, truth, k)
}

pub fn recall_sub_at_k<T, S>(ranked: &RankedList, truth: &[T], subset: &[S], k: usize) -> Result<bool, MetricError>
where
    T: AsRef<str>,
    S: AsRef<str>,
{
    recall_sub_hit(&ranked.ranking, truth, subset, k)
}

/// Mean of per-query values; 0 for an empty batch.
pub fn mean<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}
