//! Shared helpers: random instances and naive reference implementations.
#![allow(dead_code)]

use std::path::PathBuf;

use graphclust::diff::Matrix;
use graphclust::synthetic::{stochastic_block_model, SbmConfig};
use graphclust::{load_bundle, GraphBundle};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Matrix::from_vec(rows, cols, data)
}

pub fn random_unit_rows(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    loop {
        if let Ok(m) = random_matrix(rng, rows, cols).l2_normalize_rows() {
            return m;
        }
    }
}

pub fn random_labels(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    (0..n).map(|_| rng.gen_range(0..k)).collect()
}

pub fn random_indicator(rng: &mut ChaCha8Rng, n: usize) -> Vec<bool> {
    (0..n).map(|_| rng.gen_bool(0.5)).collect()
}

/// Connected random attributed graph with dense, zero-centred features.
pub fn random_bundle(rng: &mut ChaCha8Rng, n: usize, d: usize, k: usize) -> GraphBundle {
    let mut edges: Vec<(usize, usize)> = (1..n).map(|i| (rng.gen_range(0..i), i)).collect();
    for _ in 0..n {
        let (u, v) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if u != v {
            edges.push((u, v));
        }
    }
    let features = Matrix::from_vec(n, d, (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect());
    let labels = random_labels(rng, n, k);
    GraphBundle::new("random", k, edges, features, Some(labels)).unwrap()
}

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/sbm200")
}

pub fn fixture() -> GraphBundle {
    load_bundle(fixture_dir()).expect("checked-in fixture loads")
}

pub fn fixture_generator() -> GraphBundle {
    stochastic_block_model(&SbmConfig::default()).unwrap()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Node discrimination loss written as explicit sums over nodes.
pub fn naive_discrimination(z1: &Matrix, z2: &Matrix, v: &[bool], tau: f64) -> f64 {
    let n = z1.rows();
    let mut total = 0.0;
    let mut count = 0;
    for i in 0..n {
        if v[i] {
            continue;
        }
        let mut per_view = 0.0;
        for (a, b) in [(z1, z2), (z2, z1)] {
            let pos = (dot(a.row(i), b.row(i)) / tau).exp();
            let mut den = 0.0;
            for j in 0..n {
                den += (dot(a.row(i), b.row(j)) / tau).exp();
                if j != i {
                    den += (dot(a.row(i), a.row(j)) / tau).exp();
                }
            }
            per_view += -(pos / den).ln();
        }
        total += 0.5 * per_view;
        count += 1;
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}

/// Centroid-anchored clustering loss written as explicit sums over nodes.
pub fn naive_clustering(z1: &Matrix, z2: &Matrix, centroids: &Matrix, labels: &[usize], v: &[bool], tau: f64) -> f64 {
    let unit: Vec<Vec<f64>> = centroids
        .iter_rows()
        .map(|c| {
            let norm = dot(c, c).sqrt();
            c.iter().map(|x| x / norm).collect()
        })
        .collect();
    let mut total = 0.0;
    let mut count = 0;
    for i in 0..z1.rows() {
        if !v[i] {
            continue;
        }
        let mut per_view = 0.0;
        for (a, b) in [(z1, z2), (z2, z1)] {
            let pos = (dot(a.row(i), b.row(i)) / tau).exp();
            let own = (dot(a.row(i), &unit[labels[i]]) / tau).exp();
            let mut den = pos;
            for c in &unit {
                den += (dot(a.row(i), c) / tau).exp();
            }
            per_view += -((pos + own) / den).ln();
        }
        total += 0.5 * per_view;
        count += 1;
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}

pub fn naive_soft_assignment(z: &Matrix, centroids: &Matrix) -> Vec<Vec<f64>> {
    z.iter_rows()
        .map(|zi| {
            let e: Vec<f64> = centroids.iter_rows().map(|c| dot(zi, c).exp()).collect();
            let s: f64 = e.iter().sum();
            e.iter().map(|x| x / s).collect()
        })
        .collect()
}

pub fn naive_entropy(p: &[Vec<f64>]) -> Vec<f64> {
    p.iter()
        .map(|row| {
            let mut h = 0.0;
            for &x in row {
                if x > 0.0 {
                    h -= x * x.ln();
                }
            }
            h
        })
        .collect()
}

fn permutations(items: Vec<usize>) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.clone();
        let head = rest.remove(i);
        for mut p in permutations(rest) {
            p.insert(0, head);
            out.push(p);
        }
    }
    out
}

/// Best accuracy over every injective relabelling of predicted clusters.
pub fn brute_force_accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    let k = pred.iter().chain(truth).max().unwrap() + 1;
    let best = permutations((0..k).collect())
        .into_iter()
        .map(|perm| pred.iter().zip(truth).filter(|(p, t)| perm[**p] == **t).count())
        .max()
        .unwrap();
    best as f64 / pred.len() as f64
}

/// Minimum of `Σ v_i e_i` over indicators with exactly `count` ones, for every count.
pub fn brute_force_min_objective(entropy: &[f64]) -> Vec<f64> {
    let n = entropy.len();
    let mut best = vec![f64::INFINITY; n + 1];
    for mask in 0u32..(1 << n) {
        let c = mask.count_ones() as usize;
        let s: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| entropy[i]).sum();
        if s < best[c] {
            best[c] = s;
        }
    }
    best
}

/// Per-entry relative error with a floor on the denominator.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Central finite differences of `f` at every entry of `x`.
pub fn numeric_gradient(x: &Matrix, h: f64, mut f: impl FnMut(&Matrix) -> f64) -> Matrix {
    let mut g = Matrix::zeros(x.rows(), x.cols());
    let mut probe = x.clone();
    for r in 0..x.rows() {
        for c in 0..x.cols() {
            let base = x.get(r, c);
            probe.set(r, c, base + h);
            let up = f(&probe);
            probe.set(r, c, base - h);
            let down = f(&probe);
            probe.set(r, c, base);
            g.set(r, c, (up - down) / (2.0 * h));
        }
    }
    g
}

/// Largest per-entry relative error between two gradients.
pub fn max_relative_error(analytic: &Matrix, numeric: &Matrix, floor: f64) -> f64 {
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(&a, &n)| relative_error(a, n, floor))
        .fold(0.0, f64::max)
}
