//! The two contrastive objectives.
//!
//! Embeddings are unit-norm rows, so cosine similarity is a dot product.
//! Every denominator is evaluated as a row-wise log-sum-exp.
//!
//! - discrimination: the only positive of node `i` is its other view; the
//!   negatives are every other node in both views.
//! - clustering: the positives are the other view and the node's own
//!   pseudo-centroid; the negatives are the remaining centroids.

use serde::{Deserialize, Serialize};

use crate::diff::{Matrix, Tape, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContrastConfig {
    pub tau: f64,
}

impl Default for ContrastConfig {
    fn default() -> Self {
        Self { tau: 0.5 }
    }
}

impl ContrastConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tau > 0.0 && self.tau.is_finite() {
            Ok(())
        } else {
            Err(Error::Config(format!("contrast.tau must be positive, got {}", self.tau)))
        }
    }
}

fn check_views(tape: &Tape, z1: Var, z2: Var, v: &[bool]) -> Result<usize> {
    let (a, b) = (tape.value(z1).shape(), tape.value(z2).shape());
    if a != b || a.0 != v.len() {
        return Err(Error::InvalidArgument(format!(
            "view shapes {a:?} / {b:?} do not match indicator length {}",
            v.len()
        )));
    }
    Ok(a.0)
}

/// Mean discrimination loss over nodes with `v[i] == false`.
/// Returns `None` when no node participates.
pub fn discrimination_loss(tape: &mut Tape, z1: Var, z2: Var, v: &[bool], cfg: &ContrastConfig) -> Result<Option<Var>> {
    cfg.validate()?;
    let n = check_views(tape, z1, z2, v)?;
    let idx: Vec<usize> = (0..n).filter(|&i| !v[i]).collect();
    if idx.is_empty() {
        return Ok(None);
    }
    let m = idx.len();
    let inv_tau = 1.0 / cfg.tau;
    // stacked views: row i is view 1 of node i, row n + i is view 2.
    // Each anchor is scored against every stacked row except itself.
    let anchors: Vec<usize> = idx.iter().copied().chain(idx.iter().map(|&i| n + i)).collect();
    let excluded: Vec<Vec<usize>> = anchors.iter().map(|&a| vec![a]).collect();
    let stack = tape.concat_rows(z1, z2)?;
    let keys = tape.transpose(stack)?;
    let q = tape.gather_rows(stack, &anchors)?;
    let q = tape.scale(q, inv_tau)?;
    let logits = tape.matmul(q, keys)?;
    let lse = tape.row_logsumexp_excluding(logits, excluded)?;
    let lse = tape.sum(lse)?;

    let q1 = tape.gather_rows(z1, &idx)?;
    let q2 = tape.gather_rows(z2, &idx)?;
    let prod = tape.mul(q1, q2)?;
    let pos = tape.sum_rows(prod)?;
    let pos = tape.sum(pos)?;
    let pos = tape.scale(pos, 2.0 * inv_tau)?;
    let total = tape.sub(lse, pos)?;
    Ok(Some(tape.scale(total, 0.5 / m as f64)?))
}

/// Mean clustering loss over nodes with `v[i] == true`. Centroids are
/// normalized to unit rows and held constant. Returns `None` when no node
/// participates.
pub fn clustering_loss(
    tape: &mut Tape,
    z1: Var,
    z2: Var,
    centroids: &Matrix,
    labels: &[usize],
    v: &[bool],
    cfg: &ContrastConfig,
) -> Result<Option<Var>> {
    cfg.validate()?;
    let n = check_views(tape, z1, z2, v)?;
    let k = centroids.rows();
    if labels.len() != n {
        return Err(Error::InvalidArgument(format!("{} labels for {n} nodes", labels.len())));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::InvalidArgument(format!("pseudo-label {l} out of range for k = {k}")));
    }
    if centroids.cols() != tape.value(z1).cols() {
        return Err(Error::InvalidArgument("centroid width differs from embedding width".into()));
    }
    let idx: Vec<usize> = (0..n).filter(|&i| v[i]).collect();
    if idx.is_empty() {
        return Ok(None);
    }
    let inv_tau = 1.0 / cfg.tau;
    let unit = centroids
        .l2_normalize_rows()
        .map_err(|e| Error::DegenerateEmbedding(format!("centroid cannot be normalized: {e}")))?;
    let ct = tape.constant(unit.transpose())?;
    let mut onehot = Matrix::zeros(idx.len(), k);
    for (r, &i) in idx.iter().enumerate() {
        onehot.set(r, labels[i], 1.0);
    }
    let onehot = tape.constant(onehot)?;

    let q1 = tape.gather_rows(z1, &idx)?;
    let q2 = tape.gather_rows(z2, &idx)?;
    let prod = tape.mul(q1, q2)?;
    let pos = tape.sum_rows(prod)?;
    let pos = tape.scale(pos, inv_tau)?;

    let mut terms = Vec::with_capacity(2);
    for q in [q1, q2] {
        let sim = tape.matmul(q, ct)?;
        let sim = tape.scale(sim, inv_tau)?;
        let own_all = tape.mul(sim, onehot)?;
        let own = tape.sum_rows(own_all)?;
        let den_logits = tape.concat_cols(pos, sim)?;
        let num_logits = tape.concat_cols(pos, own)?;
        let den = tape.row_logsumexp(den_logits)?;
        let num = tape.row_logsumexp(num_logits)?;
        terms.push(tape.sub(den, num)?);
    }
    let per_node = tape.add(terms[0], terms[1])?;
    let total = tape.sum(per_node)?;
    Ok(Some(tape.scale(total, 0.5 / idx.len() as f64)?))
}

/// Value of [`discrimination_loss`] for plain matrices; 0 when no node participates.
pub fn discrimination_loss_value(z1: &Matrix, z2: &Matrix, v: &[bool], cfg: &ContrastConfig) -> Result<f64> {
    let mut tape = Tape::new();
    let a = tape.constant(z1.clone())?;
    let b = tape.constant(z2.clone())?;
    Ok(discrimination_loss(&mut tape, a, b, v, cfg)?.map_or(0.0, |l| tape.value(l).item()))
}

/// Value of [`clustering_loss`] for plain matrices; 0 when no node participates.
pub fn clustering_loss_value(
    z1: &Matrix,
    z2: &Matrix,
    centroids: &Matrix,
    labels: &[usize],
    v: &[bool],
    cfg: &ContrastConfig,
) -> Result<f64> {
    let mut tape = Tape::new();
    let a = tape.constant(z1.clone())?;
    let b = tape.constant(z2.clone())?;
    Ok(clustering_loss(&mut tape, a, b, centroids, labels, v, cfg)?.map_or(0.0, |l| tape.value(l).item()))
}
