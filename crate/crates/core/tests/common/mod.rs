#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sdr_cir::eval::{EvalCorpus, QueryTriplet};
use sdr_cir::EmbeddingStore;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform direction on the sphere (normalized Gaussian, Box-Muller).
pub fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..dim)
        .map(|_| {
            let u1: f64 = rng.random::<f64>().max(1e-300);
            let u2: f64 = rng.random();
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        })
        .collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    v
}

pub fn normalize(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

/// Normalized weighted sum of vectors.
pub fn mix(parts: &[(f64, &[f64])]) -> Vec<f64> {
    let dim = parts[0].1.len();
    let mut out = vec![0.0; dim];
    for (w, v) in parts {
        for (o, x) in out.iter_mut().zip(v.iter()) {
            *o += w * x;
        }
    }
    normalize(&out)
}

pub fn to_f32(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

pub fn basis(dim: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[i] = 1.0;
    v
}

pub struct SyntheticCorpus {
    pub candidates: EmbeddingStore,
    pub references: EmbeddingStore,
    pub descriptions: EmbeddingStore,
    pub modifications: EmbeddingStore,
    pub queries: Vec<QueryTriplet>,
}

impl SyntheticCorpus {
    pub fn corpus(&self) -> EvalCorpus<'_> {
        EvalCorpus {
            candidates: &self.candidates,
            references: &self.references,
            descriptions: &self.descriptions,
            modifications: &self.modifications,
        }
    }
}

/// A corpus where each description leaks a reference-only direction that a
/// distractor candidate shares with it. Every fourth query carries a
/// six-member subset.
pub fn planted_corpus(seed: u64, n_queries: usize, n_candidates: usize, dim: usize) -> SyntheticCorpus {
    assert!(n_candidates >= 2 * n_queries);
    let mut rng = rng(seed);
    let mut cands: Vec<(String, Vec<f32>)> = Vec::new();
    let mut refs = Vec::new();
    let mut descs = Vec::new();
    let mut mods = Vec::new();
    let mut queries = Vec::new();

    for i in 0..n_queries {
        let target = random_unit(&mut rng, dim);
        let noise = random_unit(&mut rng, dim);
        let jitter = random_unit(&mut rng, dim);
        let strength = 0.4 + 0.8 * rng.random::<f64>();
        let t_id = format!("t{i:04}");
        let d_id = format!("d{i:04}");
        cands.push((t_id.clone(), to_f32(&target)));
        cands.push((d_id.clone(), to_f32(&mix(&[(1.0, &noise), (0.3, &target)]))));
        let r_id = format!("r{i:04}");
        refs.push((
            r_id.clone(),
            to_f32(&mix(&[(1.0, &noise), (0.5, &target), (0.3, &jitter)])),
        ));
        let qid = format!("q{i:04}");
        descs.push((
            qid.clone(),
            to_f32(&mix(&[(1.0, &target), (strength, &noise), (0.2, &jitter)])),
        ));
        mods.push((qid.clone(), to_f32(&mix(&[(1.0, &target), (0.6, &jitter)]))));
        queries.push(QueryTriplet {
            query_id: qid,
            reference_id: r_id,
            modification_text: format!("change {i}"),
            ground_truth_ids: vec![t_id.clone()],
            subset_ids: None,
        });
    }
    for j in cands.len()..n_candidates {
        cands.push((format!("f{j:05}"), to_f32(&random_unit(&mut rng, dim))));
    }
    for (i, q) in queries.iter_mut().enumerate() {
        if i % 4 == 0 {
            let mut subset = vec![format!("t{i:04}"), format!("d{i:04}")];
            while subset.len() < 6 {
                let j = rng.random_range(0..cands.len());
                let id = cands[j].0.clone();
                if !subset.contains(&id) {
                    subset.push(id);
                }
            }
            q.subset_ids = Some(subset);
        }
    }
    SyntheticCorpus {
        candidates: EmbeddingStore::from_records(dim, cands).unwrap(),
        references: EmbeddingStore::from_records(dim, refs).unwrap(),
        descriptions: EmbeddingStore::from_records(dim, descs).unwrap(),
        modifications: EmbeddingStore::from_records(dim, mods).unwrap(),
        queries,
    }
}

/// Plain-loop cosine in f64, independent of the library code path.
pub fn naive_cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for i in 0..a.len() {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    dot / (na.sqrt() * nb.sqrt())
}

pub fn widen(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| f64::from(x)).collect()
}

/// Brute-force AP@k: enumerate every prefix and average the precision at
/// each relevant position.
pub fn oracle_ap(ranking: &[String], truth: &[String], k: usize) -> f64 {
    let mut total = 0.0;
    for i in 1..=k.min(ranking.len()) {
        if truth.contains(&ranking[i - 1]) {
            let prefix = &ranking[..i];
            let rel = prefix.iter().filter(|id| truth.contains(id)).count();
            total += rel as f64 / i as f64;
        }
    }
    total / k.min(truth.len()) as f64
}

pub fn oracle_recall(ranking: &[String], truth: &[String], k: usize) -> bool {
    (0..k.min(ranking.len())).any(|i| truth.contains(&ranking[i]))
}

/// Query vectors plus a small candidate pool built in closed form.
pub struct Fixture {
    pub f_d: Vec<f64>,
    pub f_r: Vec<f64>,
    pub f_m: Vec<f64>,
    pub candidates: Vec<(String, Vec<f64>)>,
}

impl Fixture {
    pub fn store(&self) -> EmbeddingStore {
        let dim = self.f_d.len();
        EmbeddingStore::from_records(dim, self.candidates.iter().map(|(id, v)| (id.clone(), to_f32(v)))).unwrap()
    }

    pub fn query(&self, alpha: f64) -> sdr_cir::QueryEmbeddings {
        sdr_cir::QueryEmbeddings::new(&self.f_d, &self.f_r, &self.f_m, alpha).unwrap()
    }
}

/// Description leaks the reference-only direction e2, which the distractor
/// lies on. Target is e1, the modification text points at e1, and the
/// reference carries e2 plus an unrelated e3.
pub fn redundancy_fixture() -> Fixture {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    Fixture {
        f_d: vec![h, h, 0.0],
        f_r: vec![0.0, h, h],
        f_m: vec![1.0, 0.0, 0.0],
        candidates: vec![
            ("distractor".into(), vec![0.0, 1.0, 0.0]),
            ("target".into(), vec![1.0, 0.0, 0.0]),
        ],
    }
}

/// Hand score table for [`redundancy_fixture`]: `(s_q, s_d, s_m)` for the
/// distractor and the target, from the coordinates alone.
pub fn redundancy_table(alpha: f64) -> [(f64, f64, f64); 2] {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    // f_q = h * (1 - alpha, 1, alpha)
    let len = ((1.0 - alpha).powi(2) + 1.0 + alpha * alpha).sqrt();
    [(1.0 / len, h, 0.0), ((1.0 - alpha) / len, h, 1.0)]
}

pub const OMISSION_CUE: f64 = 0.12;

/// Description drops the cue e3 that the reference (e2 + e3) still shows.
/// The target carries a little of the cue, the distractor none.
pub fn omission_fixture() -> Fixture {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let c = OMISSION_CUE;
    let n = (1.0 + c * c).sqrt();
    Fixture {
        f_d: vec![1.0, 0.0, 0.0],
        f_r: vec![0.0, h, h],
        f_m: vec![1.0, 0.0, 0.0],
        candidates: vec![
            ("distractor".into(), vec![1.0, 0.0, 0.0]),
            ("target".into(), vec![1.0 / n, 0.0, c / n]),
        ],
    }
}

pub fn omission_table(alpha: f64) -> [(f64, f64, f64); 2] {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let c = OMISSION_CUE;
    let n = (1.0 + c * c).sqrt();
    // f_q = (1 - alpha, alpha h, alpha h)
    let len = ((1.0 - alpha).powi(2) + alpha * alpha).sqrt();
    [
        ((1.0 - alpha) / len, 1.0, 1.0),
        (((1.0 - alpha) + alpha * h * c) / (len * n), 1.0 / n, 1.0 / n),
    ]
}
