//! Training-free composed image retrieval.
//!
//! A query is a reference image plus a modification text. A multimodal chat
//! model turns it into a target description ([`cot`]); the description
//! embedding is fused with the reference-image embedding and candidates are
//! ranked with a penalty on similarity contributed by the reference image
//! ([`similarity`], [`ranking`]). [`eval`] measures the result on benchmark
//! query sets, and [`store`] reads the embedding files everything runs on.
//!
//! ```
//! use sdr_cir::ranking::debias_score;
//!
//! let (s_i, s_f) = debias_score(0.8, 0.7, 0.6, 0.5).unwrap();
//! assert!((s_i - 0.1).abs() < 1e-12);
//! assert!((s_f - 1.15).abs() < 1e-12);
//! ```

pub mod cot;
pub mod eval;
pub mod fsutil;
pub mod ranking;
pub mod similarity;
pub mod store;

#[cfg(any(test, feature = "test-util"))]
pub mod testing;

pub use ranking::{Dataset, Mode, RankedList, RankingConfig, ScoreVector};
pub use similarity::QueryEmbeddings;
pub use store::EmbeddingStore;
