//! Clustering guidance: k-means over embeddings, soft assignment to the
//! centroids, per-node clustering entropy and the mean-entropy loss.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diff::{Matrix, Tape, Var};
use crate::error::{Error, Result};

pub const KMEANS_MAX_ITER: usize = 100;

/// Tolerance on the row sums of an assignment matrix.
pub const STOCHASTIC_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub centroids: Matrix,
    pub labels: Vec<usize>,
    pub iterations: usize,
    /// Within-cluster sum of squares after each assignment step.
    pub inertia_history: Vec<f64>,
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid per point (ties to the lower index) and the total inertia.
fn assign(points: &Matrix, centroids: &Matrix) -> (Vec<usize>, Vec<f64>) {
    let mut labels = Vec::with_capacity(points.rows());
    let mut dists = Vec::with_capacity(points.rows());
    for p in points.iter_rows() {
        let (best, dist) = centroids
            .iter_rows()
            .map(|c| sq_dist(p, c))
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (j, d)| if d < acc.1 { (j, d) } else { acc });
        labels.push(best);
        dists.push(dist);
    }
    (labels, dists)
}

fn plus_plus(points: &Matrix, k: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let n = points.rows();
    let mut centroids = Matrix::zeros(k, points.cols());
    let first = rng.gen_range(0..n);
    centroids.row_mut(0).copy_from_slice(points.row(first));
    let mut closest: Vec<f64> = points.iter_rows().map(|p| sq_dist(p, points.row(first))).collect();
    for j in 1..k {
        let pick = match WeightedIndex::new(&closest) {
            Ok(dist) => dist.sample(rng),
            // every point already coincides with a chosen centroid
            Err(_) => rng.gen_range(0..n),
        };
        centroids.row_mut(j).copy_from_slice(points.row(pick));
        for (c, p) in closest.iter_mut().zip(points.iter_rows()) {
            *c = c.min(sq_dist(p, centroids.row(j)));
        }
    }
    centroids
}

/// Moves the point farthest from its own centroid into each empty cluster.
fn fill_empty(points: &Matrix, centroids: &Matrix, labels: &mut [usize], k: usize) {
    let mut counts = vec![0usize; k];
    labels.iter().for_each(|&l| counts[l] += 1);
    let mut dists: Vec<f64> = points
        .iter_rows()
        .zip(labels.iter())
        .map(|(p, &l)| sq_dist(p, centroids.row(l)))
        .collect();
    for j in 0..k {
        if counts[j] > 0 {
            continue;
        }
        let donor = (0..points.rows())
            .filter(|&i| counts[labels[i]] > 1)
            .fold(None, |best: Option<usize>, i| match best {
                Some(b) if dists[b] >= dists[i] => Some(b),
                _ => Some(i),
            });
        let Some(i) = donor else { break };
        counts[labels[i]] -= 1;
        counts[j] = 1;
        labels[i] = j;
        dists[i] = 0.0;
    }
}

fn means(points: &Matrix, labels: &[usize], k: usize) -> Matrix {
    let mut sums = Matrix::zeros(k, points.cols());
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter_rows().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums.row_mut(l).iter_mut().zip(p) {
            *s += v;
        }
    }
    for (j, &c) in counts.iter().enumerate() {
        if c > 0 {
            sums.row_mut(j).iter_mut().for_each(|s| *s /= c as f64);
        }
    }
    sums
}

/// Lloyd's algorithm from k-means++ seeding; stops at an assignment fixpoint
/// or after [`KMEANS_MAX_ITER`] iterations. Deterministic in `seed`.
pub fn kmeans(points: &Matrix, k: usize, seed: u64) -> Result<KMeans> {
    let n = points.rows();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k-means needs 1 <= k <= n, got k={k} n={n}")));
    }
    if !points.is_finite() {
        return Err(Error::InvalidArgument("k-means input contains non-finite values".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus(points, k, &mut rng);
    let (mut labels, dists) = assign(points, &centroids);
    let mut inertia_history = vec![dists.iter().sum()];
    let mut iterations = 0;
    while iterations < KMEANS_MAX_ITER {
        iterations += 1;
        fill_empty(points, &centroids, &mut labels, k);
        centroids = means(points, &labels, k);
        let (next, dists) = assign(points, &centroids);
        inertia_history.push(dists.iter().sum());
        if next == labels {
            break;
        }
        labels = next;
    }
    let before = labels.clone();
    fill_empty(points, &centroids, &mut labels, k);
    if labels != before {
        centroids = means(points, &labels, k);
    }
    Ok(KMeans {
        centroids,
        labels,
        iterations,
        inertia_history,
    })
}

/// `P = softmax_rows(Z · Cᵀ)`.
pub fn soft_assignment(z: &Matrix, centroids: &Matrix) -> Result<Matrix> {
    Ok(z.gemm(false, centroids, true)?.row_softmax())
}

/// Natural-log Shannon entropy of each row of `p`, with `0 · ln 0 = 0`.
pub fn clustering_entropy(p: &Matrix) -> Result<Vec<f64>> {
    p.iter_rows()
        .enumerate()
        .map(|(i, row)| {
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > STOCHASTIC_TOL || row.iter().any(|&x| x < 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "assignment row {i} is not a probability distribution (sum {total})"
                )));
            }
            Ok(-row.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>())
        })
        .collect()
}

/// Per-epoch clustering state derived from the clean-view embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterGuidance {
    pub centroids: Matrix,
    pub pseudo_labels: Vec<usize>,
    pub assignment: Matrix,
    pub entropy: Vec<f64>,
}

impl ClusterGuidance {
    pub fn compute(z: &Matrix, k: usize, seed: u64) -> Result<Self> {
        let km = kmeans(z, k, seed)?;
        let assignment = soft_assignment(z, &km.centroids)?;
        let entropy = clustering_entropy(&assignment)?;
        Ok(Self {
            centroids: km.centroids,
            pseudo_labels: km.labels,
            assignment,
            entropy,
        })
    }
}

/// Records the mean clustering entropy of `softmax(z · Cᵀ)` with the
/// centroids held constant.
///
/// Each row entropy is evaluated as `lse(s) − Σ_j p_j s_j`, which equals
/// `−Σ p ln p` without taking the log of a probability.
pub fn entropy_loss(tape: &mut Tape, z: Var, centroids: &Matrix) -> Result<Var> {
    let n = tape.value(z).rows();
    let ct = tape.constant(centroids.transpose())?;
    let logits = tape.matmul(z, ct)?;
    let p = tape.row_softmax(logits)?;
    let lse = tape.row_logsumexp(logits)?;
    let weighted = tape.mul(p, logits)?;
    let expected = tape.sum_rows(weighted)?;
    let per_node = tape.sub(lse, expected)?;
    let total = tape.sum(per_node)?;
    Ok(tape.scale(total, 1.0 / n as f64)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cluster_centroid_is_mean() {
        let z = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![2.0, 2.0]]);
        let km = kmeans(&z, 1, 5).unwrap();
        assert_eq!(km.labels, vec![0, 0, 0]);
        assert!((km.centroids.get(0, 0) - 1.0).abs() < 1e-12);
        assert!((km.centroids.get(0, 1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn k_greater_than_n_is_rejected() {
        let z = Matrix::zeros(2, 2);
        assert!(kmeans(&z, 3, 0).is_err());
    }

    #[test]
    fn every_cluster_non_empty_with_duplicates() {
        let z = Matrix::from_rows(&[vec![0.0], vec![0.0], vec![0.0], vec![1.0]]);
        let km = kmeans(&z, 3, 2).unwrap();
        let mut seen = [false; 3];
        km.labels.iter().for_each(|&l| seen[l] = true);
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn zero_row_gives_uniform_assignment() {
        let z = Matrix::zeros(1, 3);
        let c = Matrix::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.3, 0.3, 0.3]]);
        let p = soft_assignment(&z, &c).unwrap();
        assert!(p.data().iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn identity_embeddings_assign_e_over_e_plus_one() {
        let z = Matrix::identity(2);
        let p = soft_assignment(&z, &Matrix::identity(2)).unwrap();
        let e = std::f64::consts::E;
        assert!((p.get(0, 0) - e / (e + 1.0)).abs() < 1e-12);
        assert!((p.get(1, 0) - 1.0 / (e + 1.0)).abs() < 1e-12);
        assert!((p.get(0, 0) - 0.7311).abs() < 1e-4);
    }

    #[test]
    fn entropy_edge_cases() {
        let uniform = Matrix::filled(1, 4, 0.25);
        assert!((clustering_entropy(&uniform).unwrap()[0] - 4f64.ln()).abs() < 1e-12);
        let sharp = Matrix::from_rows(&[vec![1.0 - 3e-9, 1e-9, 1e-9, 1e-9]]);
        assert!(clustering_entropy(&sharp).unwrap()[0] < 1e-6);
        let onehot = Matrix::from_rows(&[vec![1.0, 0.0]]);
        assert_eq!(clustering_entropy(&onehot).unwrap()[0], 0.0);
        let two = Matrix::from_rows(&[vec![0.7311, 0.2689]]);
        assert!((clustering_entropy(&two).unwrap()[0] - 0.58216).abs() < 1e-4);
        let bad = Matrix::from_rows(&[vec![0.5, 0.4]]);
        assert!(clustering_entropy(&bad).is_err());
    }

    #[test]
    fn entropy_loss_constant_and_single_node_cases() {
        // z orthogonal to both centroids -> uniform rows
        let mut tape = Tape::new();
        let z = tape.param(Matrix::from_rows(&[vec![0.0, 0.0, 1.0], vec![0.0, 0.0, -1.0]])).unwrap();
        let c = Matrix::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]);
        let l = entropy_loss(&mut tape, z, &c).unwrap();
        assert!((tape.value(l).item() - 2f64.ln()).abs() < 1e-12);

        let zr = Matrix::from_rows(&[vec![0.6, 0.8, 0.0]]);
        let mut tape = Tape::new();
        let z = tape.param(zr.clone()).unwrap();
        let l = entropy_loss(&mut tape, z, &c).unwrap();
        let e = clustering_entropy(&soft_assignment(&zr, &c).unwrap()).unwrap();
        assert!((tape.value(l).item() - e[0]).abs() < 1e-12);
    }
}
