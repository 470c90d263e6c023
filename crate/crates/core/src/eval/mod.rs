//! Evaluation harness: metrics over benchmark queries, the four-mode
//! ablation, and alpha/beta sweeps.
//!
//! Per query, the candidate inner products are computed once
//! ([`SimilarityTable`]) and every requested (mode, alpha, beta) cell is
//! scored from them. Queries run in parallel; results are folded in query-id
//! order, so reports do not depend on the schedule.

pub mod metrics;
pub mod queries;
pub mod report;

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Deserialize;
use thiserror::Error;

use crate::cot::{CotError, TargetDescription};
use crate::ranking::{self, mode_score, Mode, RankedList, ScoreVector};
use crate::similarity::{QueryEmbeddings, SimilarityTable};
use crate::store::EmbeddingStore;

pub use metrics::MetricError;
pub use queries::{convert_native, load_queries, parse_queries, NativeFormat, QueryError, QueryTriplet};
pub use report::{text_table, FailedQuery, MetricReport, SweepReport};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no {role} embedding for {id:?}")]
    MissingEmbedding { role: &'static str, id: String },
    #[error("no description for query {0:?}")]
    MissingDescription(String),
    #[error("duplicate query id {0:?}")]
    DuplicateQuery(String),
    #[error("no queries to evaluate")]
    EmptyDataset,
    #[error("{role} store has dimension {got}, candidates have {expected}")]
    DimensionMismatch {
        role: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("description set line {line}: {message}")]
    DescriptionSet { line: usize, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

/// The four embedding sets a run needs. Description and modification-text
/// embeddings are keyed by query id; references by reference image id.
#[derive(Debug, Clone, Copy)]
pub struct EvalCorpus<'a> {
    pub candidates: &'a EmbeddingStore,
    pub references: &'a EmbeddingStore,
    pub descriptions: &'a EmbeddingStore,
    pub modifications: &'a EmbeddingStore,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub dataset_name: String,
    pub k_values: Vec<usize>,
    pub subset_k_values: Vec<usize>,
    /// Drop each query's reference image from its own candidate pool.
    pub exclude_reference: bool,
    /// Worker threads; `None` uses the global rayon pool.
    pub threads: Option<usize>,
    pub record_timing: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            dataset_name: "custom".into(),
            k_values: vec![1, 5, 10, 50],
            subset_k_values: vec![1, 2, 3],
            exclude_reference: false,
            threads: None,
            record_timing: true,
        }
    }
}

impl EvalOptions {
    fn validate(&self) -> Result<(), EvalError> {
        if self.k_values.is_empty() {
            return Err(EvalError::InvalidConfig("k list is empty".into()));
        }
        if self.k_values.iter().chain(&self.subset_k_values).any(|&k| k == 0) {
            return Err(EvalError::InvalidConfig("k values must be positive".into()));
        }
        if self.threads == Some(0) {
            return Err(EvalError::InvalidConfig("threads must be positive".into()));
        }
        Ok(())
    }
}

/// One (mode, alpha, beta) configuration to score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub mode: Mode,
    pub alpha: f64,
    pub beta: f64,
}

impl Cell {
    pub fn new(mode: Mode, alpha: f64, beta: f64) -> Self {
        Self { mode, alpha, beta }
    }

    fn validate(&self) -> Result<(), EvalError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(EvalError::InvalidConfig(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(EvalError::InvalidConfig(format!("beta {} must be >= 0", self.beta)));
        }
        Ok(())
    }
}

/// Description-generation accounting carried into reports.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GenerationStats {
    /// Descriptions obtained over the network (cache misses).
    pub mllm_calls: u64,
    /// HTTP requests issued for them, retries included.
    pub http_attempts: u64,
    /// Network time per query, for cache misses only.
    pub network_time: HashMap<String, Duration>,
}

impl GenerationStats {
    fn network_for(&self, query_id: &str) -> Duration {
        self.network_time.get(query_id).copied().unwrap_or_default()
    }
}

struct Resolved<'a> {
    query: &'a QueryTriplet,
    emb: QueryEmbeddings,
    excluded: Option<usize>,
}

struct CellOutcome {
    recall: Vec<bool>,
    ap: Vec<f64>,
    sub: Option<Vec<bool>>,
    time: Duration,
}

enum QueryOutcome {
    Scored {
        cells: Vec<CellOutcome>,
        shared_time: Duration,
    },
    Failed(String),
}

fn check_dim(role: &'static str, expected: usize, store: &EmbeddingStore) -> Result<(), EvalError> {
    if store.dim() != expected {
        return Err(EvalError::DimensionMismatch {
            role,
            expected,
            got: store.dim(),
        });
    }
    Ok(())
}

fn sorted_queries(queries: &[QueryTriplet]) -> Result<Vec<&QueryTriplet>, EvalError> {
    if queries.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let mut sorted: Vec<&QueryTriplet> = queries.iter().collect();
    sorted.sort_by(|a, b| a.query_id.cmp(&b.query_id));
    if let Some(w) = sorted.windows(2).find(|w| w[0].query_id == w[1].query_id) {
        return Err(EvalError::DuplicateQuery(w[0].query_id.clone()));
    }
    Ok(sorted)
}

fn resolve<'a>(
    queries: &'a [QueryTriplet],
    corpus: &EvalCorpus<'_>,
    exclude_reference: bool,
) -> Result<Vec<Resolved<'a>>, EvalError> {
    let dim = corpus.candidates.dim();
    check_dim("reference", dim, corpus.references)?;
    check_dim("description", dim, corpus.descriptions)?;
    check_dim("modification", dim, corpus.modifications)?;
    if corpus.candidates.is_empty() {
        return Err(EvalError::InvalidConfig("candidate store is empty".into()));
    }

    let missing = |role, id: &str| EvalError::MissingEmbedding {
        role,
        id: id.to_string(),
    };
    sorted_queries(queries)?
        .into_iter()
        .map(|q| {
            let f_d = corpus
                .descriptions
                .lookup(&q.query_id)
                .map_err(|_| missing("description", &q.query_id))?;
            let f_r = corpus
                .references
                .lookup(&q.reference_id)
                .map_err(|_| missing("reference", &q.reference_id))?;
            let f_m = corpus
                .modifications
                .lookup(&q.query_id)
                .map_err(|_| missing("modification", &q.query_id))?;
            let emb = QueryEmbeddings::new(f_d.vector, f_r.vector, f_m.vector, 0.0)
                .map_err(|e| EvalError::InvalidConfig(format!("query {:?}: {e}", q.query_id)))?;
            let excluded = if exclude_reference {
                corpus.candidates.position(&q.reference_id)
            } else {
                None
            };
            Ok(Resolved {
                query: q,
                emb,
                excluded,
            })
        })
        .collect()
}

fn in_pool<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R, EvalError> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| EvalError::ThreadPool(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

/// Per-alpha `S_q` vectors, computed on first use.
struct FusedScores<'t> {
    table: &'t SimilarityTable,
    cached: Vec<(u64, Vec<f64>)>,
}

impl<'t> FusedScores<'t> {
    fn new(table: &'t SimilarityTable) -> Self {
        Self {
            table,
            cached: Vec::new(),
        }
    }

    fn get(&mut self, alpha: f64) -> Result<&[f64], String> {
        let key = alpha.to_bits();
        let idx = match self.cached.iter().position(|(k, _)| *k == key) {
            Some(i) => i,
            None => {
                let s_q = self.table.s_q(alpha).map_err(|e| e.to_string())?;
                self.cached.push((key, s_q));
                self.cached.len() - 1
            }
        };
        Ok(&self.cached[idx].1)
    }
}

fn final_scores(mode: Mode, s_q: &[f64], table: &SimilarityTable, beta: f64) -> Vec<f64> {
    s_q.iter()
        .zip(table.s_d())
        .zip(table.s_m())
        .map(|((&q, &d), &m)| mode_score(mode, q, d, m, beta).1)
        .collect()
}

fn eval_query(r: &Resolved<'_>, store: &EmbeddingStore, cells: &[Cell], opts: &EvalOptions) -> QueryOutcome {
    let q = r.query;
    let truth = &q.ground_truth_ids;
    if let Some(subset) = &q.subset_ids {
        if let Err(e) = metrics::check_subset(truth, subset) {
            return QueryOutcome::Failed(e.to_string());
        }
    }

    let started = Instant::now();
    let n = store.len();
    let positions: Vec<usize> = (0..n).collect();
    let table = match SimilarityTable::build(&r.emb, store, &positions) {
        Ok(t) => t,
        Err(e) => return QueryOutcome::Failed(e.to_string()),
    };
    let ids = store.ids();
    let pool: Vec<usize> = (0..n).filter(|&i| Some(i) != r.excluded).collect();
    let subset_pos: Option<Vec<usize>> = q.subset_ids.as_ref().map(|s| {
        s.iter()
            .filter_map(|id| store.position(id))
            .filter(|&p| Some(p) != r.excluded)
            .collect()
    });
    let max_k = opts.k_values.iter().copied().max().unwrap_or(1);
    let shared_time = started.elapsed();

    let mut fused = FusedScores::new(&table);
    let mut out = Vec::with_capacity(cells.len());
    for cell in cells {
        let t = Instant::now();
        let s_q = if cell.mode.uses_anchor() {
            match fused.get(cell.alpha) {
                Ok(s) => s,
                Err(e) => return QueryOutcome::Failed(e),
            }
        } else {
            // Unused by the non-anchor modes.
            table.s_d()
        };
        let s_f = final_scores(cell.mode, s_q, &table, cell.beta);
        let top: Vec<&str> = ranking::top_k_of(pool.clone(), &s_f, ids, max_k)
            .into_iter()
            .map(|i| ids[i].as_str())
            .collect();
        let recall = opts
            .k_values
            .iter()
            .map(|&k| metrics::recall_hit(&top, truth, k).expect("k validated"))
            .collect();
        let ap = opts
            .k_values
            .iter()
            .map(|&k| metrics::average_precision_at_k(&top, truth, k).expect("truth validated"))
            .collect();
        let sub = subset_pos.as_ref().map(|members| {
            let mut members = members.clone();
            members.sort_unstable_by(|&a, &b| ranking::rank_order(s_f[a], &ids[a], s_f[b], &ids[b]));
            let restricted: Vec<&str> = members.iter().map(|&i| ids[i].as_str()).collect();
            opts.subset_k_values
                .iter()
                .map(|&k| metrics::recall_hit(&restricted, truth, k).expect("k validated"))
                .collect()
        });
        out.push(CellOutcome {
            recall,
            ap,
            sub,
            time: t.elapsed(),
        });
    }
    QueryOutcome::Scored {
        cells: out,
        shared_time,
    }
}

/// Scores every cell over every query and aggregates one report per cell.
pub fn evaluate(
    queries: &[QueryTriplet],
    corpus: &EvalCorpus<'_>,
    cells: &[Cell],
    opts: &EvalOptions,
    gen: &GenerationStats,
) -> Result<Vec<MetricReport>, EvalError> {
    opts.validate()?;
    if cells.is_empty() {
        return Err(EvalError::InvalidConfig("no configurations to evaluate".into()));
    }
    for c in cells {
        c.validate()?;
    }
    let resolved = resolve(queries, corpus, opts.exclude_reference)?;
    let outcomes: Vec<QueryOutcome> = in_pool(opts.threads, || {
        resolved
            .par_iter()
            .map(|r| eval_query(r, corpus.candidates, cells, opts))
            .collect()
    })?;
    Ok(aggregate(&resolved, &outcomes, cells, opts, gen))
}

fn aggregate(
    resolved: &[Resolved<'_>],
    outcomes: &[QueryOutcome],
    cells: &[Cell],
    opts: &EvalOptions,
    gen: &GenerationStats,
) -> Vec<MetricReport> {
    let failed: Vec<FailedQuery> = resolved
        .iter()
        .zip(outcomes)
        .filter_map(|(r, o)| match o {
            QueryOutcome::Failed(e) => Some(FailedQuery {
                query_id: r.query.query_id.clone(),
                error: e.clone(),
            }),
            QueryOutcome::Scored { .. } => None,
        })
        .collect();
    let scored: Vec<(&Resolved<'_>, &Vec<CellOutcome>, Duration)> = resolved
        .iter()
        .zip(outcomes)
        .filter_map(|(r, o)| match o {
            QueryOutcome::Scored { cells, shared_time } => Some((r, cells, *shared_time)),
            QueryOutcome::Failed(_) => None,
        })
        .collect();

    cells
        .iter()
        .enumerate()
        .map(|(ci, cell)| {
            let per_k = |ks: &[usize], value: &dyn Fn(&CellOutcome, usize) -> Option<f64>| {
                ks.iter()
                    .enumerate()
                    .filter_map(|(ki, &k)| {
                        let vals: Vec<f64> = scored.iter().filter_map(|(_, c, _)| value(&c[ci], ki)).collect();
                        (!vals.is_empty()).then(|| (k, metrics::mean(vals)))
                    })
                    .collect::<BTreeMap<usize, f64>>()
            };
            let recall_at = per_k(&opts.k_values, &|c, ki| Some(f64::from(u8::from(c.recall[ki]))));
            let map_at = per_k(&opts.k_values, &|c, ki| Some(c.ap[ki]));
            let recall_sub_at = per_k(&opts.subset_k_values, &|c, ki| {
                c.sub.as_ref().map(|s| f64::from(u8::from(s[ki])))
            });
            let time =
                opts.record_timing.then(|| {
                    metrics::mean(scored.iter().map(|(r, c, shared)| {
                        (*shared + c[ci].time + gen.network_for(&r.query.query_id)).as_secs_f64()
                    }))
                });
            MetricReport {
                dataset_name: opts.dataset_name.clone(),
                mode: cell.mode,
                alpha: cell.alpha,
                beta: cell.beta,
                query_count: scored.len(),
                recall_at,
                map_at,
                recall_sub_at,
                per_query_infer_time_s: time,
                total_mllm_calls: gen.mllm_calls,
                http_attempts: gen.http_attempts,
                failed_queries: failed.clone(),
            }
        })
        .collect()
}

/// One report per ablation mode, in [`Mode::ALL`] order, same inputs otherwise.
pub fn ablate(
    queries: &[QueryTriplet],
    corpus: &EvalCorpus<'_>,
    alpha: f64,
    beta: f64,
    opts: &EvalOptions,
    gen: &GenerationStats,
) -> Result<Vec<MetricReport>, EvalError> {
    let cells: Vec<Cell> = Mode::ALL.iter().map(|&m| Cell::new(m, alpha, beta)).collect();
    evaluate(queries, corpus, &cells, opts, gen)
}

/// Evaluates the full alpha x beta grid under `mode`.
pub fn sweep(
    queries: &[QueryTriplet],
    corpus: &EvalCorpus<'_>,
    alphas: &[f64],
    betas: &[f64],
    mode: Mode,
    opts: &EvalOptions,
    gen: &GenerationStats,
) -> Result<SweepReport, EvalError> {
    if alphas.is_empty() || betas.is_empty() {
        return Err(EvalError::InvalidConfig("sweep grid is empty".into()));
    }
    let cells: Vec<Cell> = alphas
        .iter()
        .flat_map(|&a| betas.iter().map(move |&b| Cell::new(mode, a, b)))
        .collect();
    let reports = evaluate(queries, corpus, &cells, opts, gen)?;
    Ok(SweepReport {
        dataset_name: opts.dataset_name.clone(),
        mode,
        alphas: alphas.to_vec(),
        betas: betas.to_vec(),
        cells: reports,
    })
}

/// Ranked top-`top_k` lists with score breakdowns, sorted by query id.
pub fn rank_queries(
    queries: &[QueryTriplet],
    corpus: &EvalCorpus<'_>,
    cell: Cell,
    top_k: usize,
    exclude_reference: bool,
    threads: Option<usize>,
) -> Result<Vec<RankedList>, EvalError> {
    cell.validate()?;
    if top_k == 0 {
        return Err(EvalError::InvalidConfig("top-k must be positive".into()));
    }
    let resolved = resolve(queries, corpus, exclude_reference)?;
    let store = corpus.candidates;
    let lists: Vec<Result<RankedList, EvalError>> = in_pool(threads, || {
        resolved
            .par_iter()
            .map(|r| {
                let positions: Vec<usize> = (0..store.len()).collect();
                let invalid = |e: crate::similarity::SimilarityError| EvalError::InvalidConfig(e.to_string());
                let table = SimilarityTable::build(&r.emb, store, &positions).map_err(invalid)?;
                let s_q = table.s_q(cell.alpha).map_err(invalid)?;
                let s_f = final_scores(cell.mode, &s_q, &table, cell.beta);
                let pool: Vec<usize> = positions.into_iter().filter(|&i| Some(i) != r.excluded).collect();
                let ids = store.ids();
                let top = ranking::top_k_of(pool, &s_f, ids, top_k);
                let scores: Vec<ScoreVector> = top
                    .iter()
                    .map(|&i| {
                        let (s_i, s_f) = mode_score(cell.mode, s_q[i], table.s_d()[i], table.s_m()[i], cell.beta);
                        ScoreVector {
                            candidate_id: ids[i].clone(),
                            s_q: s_q[i],
                            s_d: table.s_d()[i],
                            s_m: table.s_m()[i],
                            s_i,
                            s_f,
                        }
                    })
                    .collect();
                Ok(RankedList {
                    query_id: r.query.query_id.clone(),
                    ranking: scores.iter().map(|s| s.candidate_id.clone()).collect(),
                    scores,
                })
            })
            .collect()
    })?;
    lists.into_iter().collect()
}

/// Outcome of generating descriptions for a batch of queries.
#[derive(Debug, Default)]
pub struct DescribeOutcome {
    pub descriptions: BTreeMap<String, TargetDescription>,
    pub failures: BTreeMap<String, String>,
    pub stats: GenerationStats,
}

impl DescribeOutcome {
    pub fn cache_hits(&self) -> usize {
        self.descriptions.values().filter(|d| d.is_cache_hit()).count()
    }
}

/// Runs `describe` for every query in parallel and tallies calls.
///
/// When `cancel` is set, queries not yet started are recorded as failures.
pub fn describe_queries<F>(
    queries: &[QueryTriplet],
    threads: Option<usize>,
    cancel: Option<&AtomicBool>,
    describe: F,
) -> Result<DescribeOutcome, EvalError>
where
    F: Fn(&QueryTriplet) -> Result<TargetDescription, CotError> + Sync,
{
    let sorted = sorted_queries(queries)?;
    let results: Vec<(&str, Result<TargetDescription, String>)> = in_pool(threads, || {
        sorted
            .par_iter()
            .map(|q| {
                if cancel.is_some_and(|c| c.load(Ordering::SeqCst)) {
                    return (q.query_id.as_str(), Err("interrupted".to_string()));
                }
                (q.query_id.as_str(), describe(q).map_err(|e| e.to_string()))
            })
            .collect()
    })?;

    let mut out = DescribeOutcome::default();
    for (qid, res) in results {
        match res {
            Ok(d) => {
                if !d.is_cache_hit() {
                    out.stats.mllm_calls += 1;
                    out.stats.http_attempts += u64::from(d.call_count);
                    out.stats
                        .network_time
                        .insert(qid.to_string(), Duration::from_millis(d.latency_ms));
                }
                out.descriptions.insert(qid.to_string(), d);
            }
            Err(e) => {
                out.failures.insert(qid.to_string(), e);
            }
        }
    }
    Ok(out)
}

#[derive(Deserialize)]
struct DescriptionLine {
    query_id: String,
    description: String,
}

/// Parses an externally produced description set: JSON lines with at least
/// `query_id` and `description`. Later lines win. Cache files qualify.
pub fn parse_description_set(text: &str) -> Result<BTreeMap<String, String>, EvalError> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let d: DescriptionLine = serde_json::from_str(line).map_err(|e| EvalError::DescriptionSet {
            line: i + 1,
            message: e.to_string(),
        })?;
        if d.description.trim().is_empty() {
            return Err(EvalError::DescriptionSet {
                line: i + 1,
                message: "empty description".into(),
            });
        }
        out.insert(d.query_id, d.description);
    }
    Ok(out)
}

pub fn load_description_set(path: impl AsRef<Path>) -> Result<BTreeMap<String, String>, EvalError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_description_set(&text)
}

/// Fails with the first query (by id) that has no description.
pub fn require_descriptions<V>(queries: &[QueryTriplet], descriptions: &BTreeMap<String, V>) -> Result<(), EvalError> {
    let mut ids: Vec<&str> = queries.iter().map(|q| q.query_id.as_str()).collect();
    ids.sort_unstable();
    match ids.into_iter().find(|id| !descriptions.contains_key(*id)) {
        Some(id) => Err(EvalError::MissingDescription(id.to_string())),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(id: &str, reference: &str, truth: &[&str], subset: Option<&[&str]>) -> QueryTriplet {
        QueryTriplet {
            query_id: id.into(),
            reference_id: reference.into(),
            modification_text: "change it".into(),
            ground_truth_ids: truth.iter().map(|s| s.to_string()).collect(),
            subset_ids: subset.map(|s| s.iter().map(|x| x.to_string()).collect()),
        }
    }

    fn unit_store(recs: &[(&str, [f32; 3])]) -> EmbeddingStore {
        EmbeddingStore::from_records(3, recs.iter().map(|(id, v)| (id.to_string(), v.to_vec()))).unwrap()
    }

    #[test]
    fn reference_exclusion() {
        // The reference itself is the closest candidate to the description.
        let cands = unit_store(&[
            ("ref", [1.0, 0.0, 0.0]),
            ("tgt", [0.9, 0.3, 0.0]),
            ("x", [0.0, 0.0, 1.0]),
        ]);
        let desc = unit_store(&[("q", [1.0, 0.1, 0.0])]);
        let modi = unit_store(&[("q", [0.0, 1.0, 0.0])]);
        let corpus = EvalCorpus {
            candidates: &cands,
            references: &cands,
            descriptions: &desc,
            modifications: &modi,
        };
        let queries = [q("q", "ref", &["tgt"], None)];
        let cell = [Cell::new(Mode::DescriptionOnly, 0.0, 0.0)];
        let mut opts = EvalOptions {
            k_values: vec![1],
            ..Default::default()
        };
        let kept = evaluate(&queries, &corpus, &cell, &opts, &GenerationStats::default()).unwrap();
        assert_eq!(kept[0].recall_at[&1], 0.0);
        opts.exclude_reference = true;
        let dropped = evaluate(&queries, &corpus, &cell, &opts, &GenerationStats::default()).unwrap();
        assert_eq!(dropped[0].recall_at[&1], 1.0);
    }

    #[test]
    fn missing_embeddings_are_named() {
        let cands = unit_store(&[("a", [1.0, 0.0, 0.0])]);
        let empty = EmbeddingStore::from_records::<_, String>(3, []).unwrap();
        let corpus = EvalCorpus {
            candidates: &cands,
            references: &cands,
            descriptions: &empty,
            modifications: &empty,
        };
        let err = ablate(
            &[q("q9", "a", &["a"], None)],
            &corpus,
            0.1,
            0.1,
            &EvalOptions::default(),
            &GenerationStats::default(),
        )
        .unwrap_err();
        assert!(matches!(err, EvalError::MissingEmbedding { role: "description", id } if id == "q9"));
    }

    #[test]
    fn truth_outside_subset_fails_only_that_query() {
        let cands = unit_store(&[("a", [1.0, 0.0, 0.0]), ("b", [0.0, 1.0, 0.0]), ("r", [0.0, 0.0, 1.0])]);
        let desc = unit_store(&[("q1", [1.0, 0.0, 0.0]), ("q2", [1.0, 0.0, 0.0])]);
        let corpus = EvalCorpus {
            candidates: &cands,
            references: &cands,
            descriptions: &desc,
            modifications: &desc,
        };
        let queries = [
            q("q1", "r", &["a"], Some(&["a", "b"])),
            q("q2", "r", &["a"], Some(&["b"])),
        ];
        let reports = evaluate(
            &queries,
            &corpus,
            &[Cell::new(Mode::FullSdr, 0.1, 0.5)],
            &EvalOptions::default(),
            &GenerationStats::default(),
        )
        .unwrap();
        assert_eq!(reports[0].query_count, 1);
        assert_eq!(reports[0].failed_queries.len(), 1);
        assert_eq!(reports[0].failed_queries[0].query_id, "q2");
        assert_eq!(reports[0].recall_sub_at[&1], 1.0);
    }

    #[test]
    fn description_sets() {
        let set = parse_description_set("{\"query_id\":\"a\",\"description\":\"x\",\"model\":\"m\"}\n\n{\"query_id\":\"a\",\"description\":\"y\"}\n").unwrap();
        assert_eq!(set["a"], "y");
        assert!(matches!(
            parse_description_set("{\"query_id\":\"a\"}"),
            Err(EvalError::DescriptionSet { line: 1, .. })
        ));
        let queries = [q("a", "r", &["t"], None), q("b", "r", &["t"], None)];
        assert!(matches!(
            require_descriptions(&queries, &set),
            Err(EvalError::MissingDescription(id)) if id == "b"
        ));
    }

    #[test]
    fn options_validation() {
        let bad = EvalOptions {
            k_values: vec![0],
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!(Cell::new(Mode::FullSdr, 1.5, 0.0).validate().is_err());
        assert!(Cell::new(Mode::FullSdr, 0.5, -1.0).validate().is_err());
        assert!(Cell::new(Mode::FullSdr, 0.5, 3.0).validate().is_ok());
    }
}
