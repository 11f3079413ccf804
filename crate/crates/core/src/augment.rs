//! Clustering-friendly augmentation.
//!
//! Edges whose endpoints are confident and agree on their pseudo-label get a
//! small importance score and are rarely removed; features that are frequent
//! within a pseudo-class are rarely masked.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diff::Matrix;
use crate::error::{Error, Result};
use crate::graph::GraphBundle;

/// Spread below which a set of scores is treated as constant.
pub const DEGENERATE_SPREAD: f64 = 1e-12;

/// How edge scores map onto removal probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RemovalMode {
    /// Removal probability grows with the score, so low-score (important)
    /// edges survive.
    #[default]
    Semantic,
    /// `min((u_max − u)/(u_max − ū) · p_e, p_τ)`, applied verbatim.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub mode: RemovalMode,
    pub p_e: f64,
    pub p_f: f64,
    pub p_tau: f64,
    pub mu: f64,
    /// Uniform (guidance-free) augmentation.
    pub random: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            mode: RemovalMode::Semantic,
            p_e: 0.2,
            p_f: 0.2,
            p_tau: 0.7,
            mu: 1.0,
            random: false,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_tau > 0.0 && self.p_tau <= 1.0) {
            return Err(Error::Config(format!("aug.p_tau must lie in (0, 1], got {}", self.p_tau)));
        }
        for (name, p) in [("aug.p_e", self.p_e), ("aug.p_f", self.p_f)] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {p}")));
            }
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(Error::Config(format!("aug.mu must be non-negative, got {}", self.mu)));
        }
        Ok(())
    }
}

/// Per-edge score `E_i·E_j + μ·[L_i ≠ L_j]`; lower means more important.
pub fn edge_importance(entropy: &[f64], labels: &[usize], edges: &[(usize, usize)], mu: f64) -> Vec<f64> {
    edges
        .iter()
        .map(|&(i, j)| {
            let disagree = if labels[i] == labels[j] { 0.0 } else { 1.0 };
            entropy[i] * entropy[j] + mu * disagree
        })
        .collect()
}

/// Normalizes edge scores into removal probabilities in `[0, p_tau]`.
pub fn edge_removal_probs(u: &[f64], p_e: f64, p_tau: f64, mode: RemovalMode) -> Vec<f64> {
    if u.is_empty() {
        return Vec::new();
    }
    let max = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = u.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = u.iter().sum::<f64>() / u.len() as f64;
    let uniform = p_e.min(p_tau);
    match mode {
        RemovalMode::Semantic => {
            let spread = mean - min;
            if spread <= DEGENERATE_SPREAD {
                return vec![uniform; u.len()];
            }
            u.iter().map(|&x| ((x - min) / spread * p_e).min(p_tau)).collect()
        }
        RemovalMode::Literal => {
            let spread = max - mean;
            if spread <= DEGENERATE_SPREAD {
                return vec![uniform; u.len()];
            }
            u.iter().map(|&x| ((max - x) / spread * p_e).min(p_tau)).collect()
        }
    }
}

/// Row `j` is the sum of the feature rows of nodes pseudo-labelled `j`.
pub fn class_feature_weights(x: &Matrix, labels: &[usize], k: usize) -> Matrix {
    let mut f = Matrix::zeros(k, x.cols());
    for (row, &l) in x.iter_rows().zip(labels) {
        for (acc, v) in f.row_mut(l).iter_mut().zip(row) {
            *acc += v;
        }
    }
    f
}

/// Per-class masking probabilities; heavier features get lower probability.
pub fn feature_mask_probs(f: &Matrix, p_f: f64, p_tau: f64) -> Matrix {
    let mut out = Matrix::zeros(f.rows(), f.cols());
    let uniform = p_f.min(p_tau);
    for (j, row) in f.iter_rows().enumerate() {
        if row.is_empty() {
            continue;
        }
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = row.iter().sum::<f64>() / row.len() as f64;
        let spread = max - mean;
        let dst = out.row_mut(j);
        if spread <= DEGENERATE_SPREAD {
            dst.iter_mut().for_each(|p| *p = uniform);
        } else {
            for (p, &x) in dst.iter_mut().zip(row) {
                *p = ((max - x) / spread * p_f).min(p_tau);
            }
        }
    }
    out
}

/// Removal and masking probabilities for one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentationPlan {
    pub edge_remove_prob: Vec<f64>,
    /// k×d, indexed by pseudo-label then feature.
    pub feature_mask_prob: Matrix,
    pub mode: RemovalMode,
    pub p_e: f64,
    pub p_f: f64,
    pub p_tau: f64,
    pub mu: f64,
}

impl AugmentationPlan {
    /// Builds the plan from the current entropy and pseudo-labels. With
    /// `cfg.random` set, scores and feature weights are flattened so every
    /// probability collapses to the overall rate.
    pub fn build(bundle: &GraphBundle, entropy: &[f64], labels: &[usize], cfg: &AugmentConfig) -> Result<Self> {
        cfg.validate()?;
        let (n, k) = (bundle.n(), bundle.k());
        if entropy.len() != n || labels.len() != n {
            return Err(Error::InvalidArgument(format!(
                "guidance covers {} / {} nodes, graph has {n}",
                entropy.len(),
                labels.len()
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::InvalidArgument(format!("pseudo-label {l} out of range for k = {k}")));
        }
        let (u, f) = if cfg.random {
            (
                vec![0.0; bundle.edges().len()],
                Matrix::zeros(k, bundle.d()),
            )
        } else {
            (
                edge_importance(entropy, labels, bundle.edges(), cfg.mu),
                class_feature_weights(bundle.features(), labels, k),
            )
        };
        Ok(Self {
            edge_remove_prob: edge_removal_probs(&u, cfg.p_e, cfg.p_tau, cfg.mode),
            feature_mask_prob: feature_mask_probs(&f, cfg.p_f, cfg.p_tau),
            mode: cfg.mode,
            p_e: cfg.p_e,
            p_f: cfg.p_f,
            p_tau: cfg.p_tau,
            mu: cfg.mu,
        })
    }
}

/// Augmented graph over the same node set.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedView {
    pub features: Matrix,
    /// Surviving canonical edges, a subset of the original list.
    pub edges: Vec<(usize, usize)>,
}

/// Draws one augmented view: each edge removed with its probability and each
/// feature entry zeroed with the probability of its node's pseudo-class.
pub fn sample_view(bundle: &GraphBundle, plan: &AugmentationPlan, labels: &[usize], seed: u64) -> Result<AugmentedView> {
    if plan.edge_remove_prob.len() != bundle.edges().len()
        || plan.feature_mask_prob.cols() != bundle.d()
        || labels.len() != bundle.n()
    {
        return Err(Error::InvalidArgument("augmentation plan does not match the graph".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let edges: Vec<(usize, usize)> = bundle
        .edges()
        .iter()
        .zip(&plan.edge_remove_prob)
        .filter(|(_, &p)| rng.gen::<f64>() >= p)
        .map(|(&e, _)| e)
        .collect();
    if edges.is_empty() && !bundle.edges().is_empty() {
        return Err(Error::EmptyAugmentedGraph { p_e: plan.p_e });
    }

    let mut features = bundle.features().clone();
    for (i, &l) in labels.iter().enumerate() {
        let probs = plan.feature_mask_prob.row(l);
        for (x, &p) in features.row_mut(i).iter_mut().zip(probs) {
            if rng.gen::<f64>() < p {
                *x = 0.0;
            }
        }
    }
    Ok(AugmentedView { features, edges })
}
