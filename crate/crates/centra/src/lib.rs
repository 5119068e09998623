//! Spectral graph machine learning built around centrality-normalized graph
//! shift operators: graph generators and statistics, k-core / PageRank / walk
//! centralities, parameterized CGSOs with their spectral theory, spectral
//! clustering, a small dense message-passing engine with exact gradients,
//! adaptive-depth message passing, orthonormality- and CRF-based robustness
//! defenses with probabilistic vulnerability estimation, and GMM-based latent
//! augmentation.
//!
//! Everything is deterministic: stochastic operations take explicit seeds and
//! draw from the crate's splittable [`rng::SplitMix64`] generator.

pub mod admp;
pub mod centrality;
pub mod clustering;
pub mod crf;
pub mod error;
pub mod generators;
pub mod graph;
pub mod gratin;
pub mod gso;
pub mod linalg;
pub mod nn;
pub mod rng;
pub mod robustness;

pub use error::{Error, Result};
pub use graph::{Graph, Partition};
