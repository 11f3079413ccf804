//! Clustering evaluation: accuracy under the best cluster-to-class matching,
//! normalized mutual information and the adjusted Rand index. All three
//! return values in the unit scale (`ari` may be negative).

use crate::error::{Error, Result};

/// Co-occurrence counts between predicted clusters (rows) and true classes
/// (columns), with both label sets compacted to `0..k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    counts: Vec<Vec<u64>>,
    row_sums: Vec<u64>,
    col_sums: Vec<u64>,
    total: u64,
}

fn compact(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut uniq: Vec<usize> = labels.to_vec();
    uniq.sort_unstable();
    uniq.dedup();
    let ids = labels.iter().map(|l| uniq.binary_search(l).expect("present")).collect();
    (ids, uniq.len())
}

impl ContingencyTable {
    pub fn new(pred: &[usize], truth: &[usize]) -> Result<Self> {
        if pred.is_empty() {
            return Err(Error::InvalidArgument("cannot score an empty labelling".into()));
        }
        if pred.len() != truth.len() {
            return Err(Error::InvalidArgument(format!(
                "label vectors differ in length: {} vs {}",
                pred.len(),
                truth.len()
            )));
        }
        let (p, kp) = compact(pred);
        let (t, kt) = compact(truth);
        let mut counts = vec![vec![0u64; kt]; kp];
        for (&a, &b) in p.iter().zip(&t) {
            counts[a][b] += 1;
        }
        let row_sums = counts.iter().map(|r| r.iter().sum()).collect();
        let col_sums = (0..kt).map(|j| counts.iter().map(|r| r[j]).sum()).collect();
        Ok(Self {
            counts,
            row_sums,
            col_sums,
            total: pred.len() as u64,
        })
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn row_sums(&self) -> &[u64] {
        &self.row_sums
    }

    pub fn col_sums(&self) -> &[u64] {
        &self.col_sums
    }

    pub fn total(&self) -> u64 {
        self.total
    }
}

/// Minimum-cost perfect matching on a square integer cost matrix
/// (Hungarian method with row/column potentials, O(n³)).
/// Returns `assignment[row] = col`.
pub fn hungarian_min(cost: &[Vec<i64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    assert!(cost.iter().all(|r| r.len() == n), "cost matrix must be square");
    const INF: i64 = i64::MAX / 4;
    // 1-based arrays; p[j] is the row matched to column j, column 0 is a sentinel
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![INF; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = INF;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        assignment[p[j] - 1] = j - 1;
    }
    assignment
}

/// Fraction of nodes correctly labelled under the best one-to-one mapping of
/// predicted clusters to classes.
pub fn clustering_accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = ContingencyTable::new(pred, truth)?;
    let k = table.counts.len().max(table.col_sums.len());
    let max = table.counts.iter().flatten().copied().max().unwrap_or(0) as i64;
    let count = |i: usize, j: usize| table.counts.get(i).and_then(|r| r.get(j)).copied().unwrap_or(0);
    let cost: Vec<Vec<i64>> = (0..k)
        .map(|i| (0..k).map(|j| max - count(i, j) as i64).collect())
        .collect();
    let matched: u64 = hungarian_min(&cost)
        .iter()
        .enumerate()
        .map(|(i, &j)| count(i, j))
        .sum();
    Ok(matched as f64 / table.total as f64)
}

fn entropy(counts: &[u64], total: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.ln()
        })
        .sum()
}

/// Normalized mutual information with arithmetic-mean normalization,
/// `2·I / (H_pred + H_truth)`, natural logarithms.
///
/// Two single-cluster labellings score 1; a single-cluster labelling against
/// anything else scores 0.
pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = ContingencyTable::new(pred, truth)?;
    let total = table.total as f64;
    let hp = entropy(&table.row_sums, total);
    let ht = entropy(&table.col_sums, total);
    if hp == 0.0 && ht == 0.0 {
        return Ok(1.0);
    }
    if hp == 0.0 || ht == 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for (i, row) in table.counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let c = c as f64;
            let a = table.row_sums[i] as f64;
            let b = table.col_sums[j] as f64;
            mi += c / total * (total * c / (a * b)).ln();
        }
    }
    Ok((2.0 * mi / (hp + ht)).clamp(0.0, 1.0))
}

fn comb2(x: u64) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index (pair counting, adjusted for chance).
pub fn ari(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = ContingencyTable::new(pred, truth)?;
    let pairs = comb2(table.total);
    if pairs == 0.0 {
        return Ok(1.0);
    }
    let index: f64 = table.counts.iter().flatten().map(|&c| comb2(c)).sum();
    let a: f64 = table.row_sums.iter().map(|&c| comb2(c)).sum();
    let b: f64 = table.col_sums.iter().map(|&c| comb2(c)).sum();
    let expected = a * b / pairs;
    let max = 0.5 * (a + b);
    if max == expected {
        // both partitions trivial (one cluster or all singletons) and equal
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

/// ACC, NMI and ARI in the unit scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores {
    pub acc: f64,
    pub nmi: f64,
    pub ari: f64,
}

pub fn evaluate(pred: &[usize], truth: &[usize]) -> Result<Scores> {
    Ok(Scores {
        acc: clustering_accuracy(pred, truth)?,
        nmi: nmi(pred, truth)?,
        ari: ari(pred, truth)?,
    })
}
