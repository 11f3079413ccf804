//! Planted-partition test graphs.
//!
//! A stochastic block model with sparse binary features: each block owns an
//! equal slice of the feature vocabulary, and each node switches on a few
//! words, drawn from its own slice unless a noise draw sends the word to a
//! uniformly random position.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diff::Matrix;
use crate::error::{Error, Result};
use crate::graph::GraphBundle;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SbmConfig {
    pub n: usize,
    pub blocks: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub d: usize,
    /// Word draws per node (duplicates collapse).
    pub words: usize,
    /// Probability that a word is drawn from the whole vocabulary.
    pub feature_noise: f64,
    pub seed: u64,
}

impl Default for SbmConfig {
    fn default() -> Self {
        Self {
            n: 200,
            blocks: 2,
            p_in: 0.1,
            p_out: 0.005,
            d: 50,
            words: 4,
            feature_noise: 0.1,
            seed: 1,
        }
    }
}

/// Samples a bundle. Nodes `i` with `i % blocks == b` form block `b`.
pub fn stochastic_block_model(cfg: &SbmConfig) -> Result<GraphBundle> {
    if cfg.blocks == 0 || cfg.blocks > cfg.n || cfg.d < cfg.blocks || cfg.words == 0 {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= blocks <= n, d >= blocks and words >= 1, got {cfg:?}"
        )));
    }
    let probs = [cfg.p_in, cfg.p_out, cfg.feature_noise];
    if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::InvalidArgument(format!("probabilities must lie in [0, 1], got {cfg:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let labels: Vec<usize> = (0..cfg.n).map(|i| i % cfg.blocks).collect();

    let mut edges = Vec::new();
    for u in 0..cfg.n {
        for v in u + 1..cfg.n {
            let p = if labels[u] == labels[v] { cfg.p_in } else { cfg.p_out };
            if rng.gen::<f64>() < p {
                edges.push((u, v));
            }
        }
    }

    let slice = cfg.d / cfg.blocks;
    let mut features = Matrix::zeros(cfg.n, cfg.d);
    for (i, &b) in labels.iter().enumerate() {
        for _ in 0..cfg.words {
            let j = if rng.gen::<f64>() < cfg.feature_noise {
                rng.gen_range(0..cfg.d)
            } else {
                b * slice + rng.gen_range(0..slice)
            };
            features.set(i, j, 1.0);
        }
    }
    Ok(GraphBundle::new(
        format!("sbm{}", cfg.n),
        cfg.blocks,
        edges,
        features,
        Some(labels),
    )?)
}
