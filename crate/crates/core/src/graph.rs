//! Attributed graph model, the on-disk bundle format, and the normalized
//! propagation operator used by the encoder.
//!
//! A bundle is a directory holding
//!
//! - `meta.json`: `{"n", "d", "k", "name", "features_format": "tsv" | "f32le"}`
//! - `edges.tsv`: one undirected edge per line, two whitespace-separated ids
//! - `features.tsv` (n lines of d reals) or `features.f32le` (n·d little-endian
//!   `f32`, row-major, no header)
//! - `labels.tsv` (optional): one class id per line

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::diff::{CsrMatrix, Matrix};
use crate::error::BundleError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeaturesFormat {
    Tsv,
    F32le,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMeta {
    pub n: usize,
    pub d: usize,
    pub k: usize,
    #[serde(default)]
    pub name: String,
    pub features_format: FeaturesFormat,
}

/// Immutable attributed graph.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphBundle {
    name: String,
    k: usize,
    edges: Vec<(usize, usize)>,
    features: Matrix,
    labels: Option<Vec<usize>>,
}

impl GraphBundle {
    /// Validates and canonicalizes the parts of a graph. Edges may be given in
    /// either orientation and with duplicates; self-loops are rejected.
    pub fn new(
        name: impl Into<String>,
        k: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        features: Matrix,
        labels: Option<Vec<usize>>,
    ) -> Result<Self, BundleError> {
        let n = features.rows();
        if k == 0 {
            return Err(BundleError::Invalid("k must be at least 1".into()));
        }
        let mut canon = BTreeSet::new();
        for (line, (u, v)) in edges.into_iter().enumerate() {
            for id in [u, v] {
                if id >= n {
                    return Err(BundleError::NodeOutOfRange {
                        file: "edges".into(),
                        line: line + 1,
                        id,
                        n,
                    });
                }
            }
            if u == v {
                return Err(BundleError::Invalid(format!("self-loop on node {u}")));
            }
            canon.insert((u.min(v), u.max(v)));
        }
        for r in 0..n {
            if let Some(c) = features.row(r).iter().position(|v| !v.is_finite()) {
                return Err(BundleError::NonFiniteFeature { row: r, col: c });
            }
        }
        if let Some(labels) = &labels {
            if labels.len() != n {
                return Err(BundleError::DimensionMismatch {
                    file: "labels".into(),
                    expected: format!("{n} labels"),
                    found: format!("{} labels", labels.len()),
                });
            }
            if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= k) {
                return Err(BundleError::LabelOutOfRange { line: i + 1, label: l, k });
            }
        }
        Ok(Self {
            name: name.into(),
            k,
            edges: canon.into_iter().collect(),
            features,
            labels,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.features.rows()
    }

    pub fn d(&self) -> usize {
        self.features.cols()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Canonical edges, `u < v`, sorted, unique.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn meta(&self, features_format: FeaturesFormat) -> BundleMeta {
        BundleMeta {
            n: self.n(),
            d: self.d(),
            k: self.k,
            name: self.name.clone(),
            features_format,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BundleError + '_ {
    move |source| BundleError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn require(dir: &Path, file: &str) -> Result<PathBuf, BundleError> {
    let p = dir.join(file);
    if p.is_file() {
        Ok(p)
    } else {
        Err(BundleError::MissingFile(p))
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>, BundleError> {
    let f = fs::File::open(path).map_err(io_err(path))?;
    BufReader::new(f)
        .lines()
        .collect::<Result<_, _>>()
        .map_err(io_err(path))
}

fn parse_err(file: &str, line: usize, message: impl Into<String>) -> BundleError {
    BundleError::Parse {
        file: file.into(),
        line,
        message: message.into(),
    }
}

/// Reads and validates a bundle directory.
pub fn load_bundle(dir: impl AsRef<Path>) -> Result<GraphBundle, BundleError> {
    let dir = dir.as_ref();
    let meta_path = require(dir, "meta.json")?;
    let meta_text = fs::read_to_string(&meta_path).map_err(io_err(&meta_path))?;
    let meta: BundleMeta = serde_json::from_str(&meta_text).map_err(|e| BundleError::Meta(e.to_string()))?;

    let edges_path = require(dir, "edges.tsv")?;
    let mut edges = Vec::new();
    for (i, line) in read_lines(&edges_path)?.iter().enumerate() {
        let line_no = i + 1;
        let mut parts = line.split_whitespace();
        let Some(first) = parts.next() else { continue };
        let second = parts
            .next()
            .ok_or_else(|| parse_err("edges.tsv", line_no, "expected two node ids"))?;
        if parts.next().is_some() {
            return Err(parse_err("edges.tsv", line_no, "expected exactly two node ids"));
        }
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| parse_err("edges.tsv", line_no, format!("invalid node id {s:?}")))
        };
        let (u, v) = (parse(first)?, parse(second)?);
        for id in [u, v] {
            if id >= meta.n {
                return Err(BundleError::NodeOutOfRange {
                    file: "edges.tsv".into(),
                    line: line_no,
                    id,
                    n: meta.n,
                });
            }
        }
        // self-loops are dropped; normalization adds them back uniformly
        if u != v {
            edges.push((u, v));
        }
    }

    let features = match meta.features_format {
        FeaturesFormat::Tsv => read_features_tsv(&require(dir, "features.tsv")?, meta.n, meta.d)?,
        FeaturesFormat::F32le => read_features_f32(&require(dir, "features.f32le")?, meta.n, meta.d)?,
    };

    let labels_path = dir.join("labels.tsv");
    let labels = if labels_path.is_file() {
        Some(read_labels(&labels_path, meta.n, meta.k)?)
    } else {
        None
    };

    GraphBundle::new(meta.name, meta.k, edges, features, labels)
}

fn read_features_tsv(path: &Path, n: usize, d: usize) -> Result<Matrix, BundleError> {
    let lines: Vec<String> = read_lines(path)?
        .into_iter()
        .filter(|l| !l.trim().is_empty())
        .collect();
    if lines.len() != n {
        return Err(BundleError::DimensionMismatch {
            file: "features.tsv".into(),
            expected: format!("{n} rows"),
            found: format!("{} rows", lines.len()),
        });
    }
    let mut data = Vec::with_capacity(n * d);
    for (i, line) in lines.iter().enumerate() {
        let before = data.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| parse_err("features.tsv", i + 1, format!("invalid number {tok:?}")))?;
            if !v.is_finite() {
                return Err(BundleError::NonFiniteFeature {
                    row: i,
                    col: data.len() - before,
                });
            }
            data.push(v);
        }
        if data.len() - before != d {
            return Err(BundleError::DimensionMismatch {
                file: format!("features.tsv line {}", i + 1),
                expected: format!("{d} columns"),
                found: format!("{} columns", data.len() - before),
            });
        }
    }
    Ok(Matrix::from_vec(n, d, data))
}

fn read_features_f32(path: &Path, n: usize, d: usize) -> Result<Matrix, BundleError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    if bytes.len() != n * d * 4 {
        return Err(BundleError::DimensionMismatch {
            file: "features.f32le".into(),
            expected: format!("{} bytes ({n}x{d} f32)", n * d * 4),
            found: format!("{} bytes", bytes.len()),
        });
    }
    let mut data = Vec::with_capacity(n * d);
    for (i, chunk) in bytes.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        if !v.is_finite() {
            return Err(BundleError::NonFiniteFeature {
                row: i / d,
                col: i % d,
            });
        }
        data.push(f64::from(v));
    }
    Ok(Matrix::from_vec(n, d, data))
}

fn read_labels(path: &Path, n: usize, k: usize) -> Result<Vec<usize>, BundleError> {
    let mut labels = Vec::with_capacity(n);
    for (i, line) in read_lines(path)?.iter().enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let l: usize = t
            .parse()
            .map_err(|_| parse_err("labels.tsv", i + 1, format!("invalid label {t:?}")))?;
        if l >= k {
            return Err(BundleError::LabelOutOfRange { line: i + 1, label: l, k });
        }
        labels.push(l);
    }
    if labels.len() != n {
        return Err(BundleError::DimensionMismatch {
            file: "labels.tsv".into(),
            expected: format!("{n} labels"),
            found: format!("{} labels", labels.len()),
        });
    }
    Ok(labels)
}

/// Writes a bundle directory, creating it if needed.
pub fn save_bundle(bundle: &GraphBundle, dir: impl AsRef<Path>, format: FeaturesFormat) -> Result<(), BundleError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let write = |file: &str, bytes: &[u8]| {
        let p = dir.join(file);
        fs::write(&p, bytes).map_err(io_err(&p))
    };

    let meta = serde_json::to_string_pretty(&bundle.meta(format)).expect("meta serializes");
    write("meta.json", meta.as_bytes())?;

    let mut edges = String::new();
    for (u, v) in bundle.edges() {
        edges.push_str(&format!("{u}\t{v}\n"));
    }
    write("edges.tsv", edges.as_bytes())?;

    match format {
        FeaturesFormat::Tsv => {
            let mut out = Vec::new();
            for row in bundle.features().iter_rows() {
                let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
                writeln!(out, "{}", line.join("\t")).expect("write to vec");
            }
            write("features.tsv", &out)?;
        }
        FeaturesFormat::F32le => {
            let bytes: Vec<u8> = bundle
                .features()
                .data()
                .iter()
                .flat_map(|&v| (v as f32).to_le_bytes())
                .collect();
            write("features.f32le", &bytes)?;
        }
    }

    if let Some(labels) = bundle.labels() {
        let text: String = labels.iter().map(|l| format!("{l}\n")).collect();
        write("labels.tsv", text.as_bytes())?;
    }
    Ok(())
}

/// `D^{-1/2}(A + I)D^{-1/2}` over the `n` nodes, in compressed row form.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency(Arc<CsrMatrix>);

impl NormalizedAdjacency {
    pub fn matrix(&self) -> &Arc<CsrMatrix> {
        &self.0
    }

    pub fn n(&self) -> usize {
        self.0.rows()
    }
}

pub fn normalize_adjacency(bundle: &GraphBundle) -> NormalizedAdjacency {
    normalize_edges(bundle.n(), bundle.edges())
}

/// Renormalized adjacency for an arbitrary canonical edge subset over `n` nodes.
pub fn normalize_edges(n: usize, edges: &[(usize, usize)]) -> NormalizedAdjacency {
    let mut degree = vec![1usize; n];
    for &(u, v) in edges {
        degree[u] += 1;
        degree[v] += 1;
    }
    let inv_sqrt: Vec<f64> = degree.iter().map(|&d| 1.0 / (d as f64).sqrt()).collect();
    let mut rows: Vec<Vec<(usize, f64)>> = (0..n).map(|i| vec![(i, inv_sqrt[i] * inv_sqrt[i])]).collect();
    for &(u, v) in edges {
        // same product in both orientations keeps the operator bitwise symmetric
        let w = inv_sqrt[u] * inv_sqrt[v];
        rows[u].push((v, w));
        rows[v].push((u, w));
    }
    NormalizedAdjacency(Arc::new(CsrMatrix::from_row_entries(n, n, rows)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, file: &str, text: &str) {
        fs::write(dir.join(file), text).unwrap();
    }

    fn minimal(dir: &Path) {
        write(dir, "meta.json", r#"{"n":3,"d":2,"k":2,"name":"tiny","features_format":"tsv"}"#);
        write(dir, "edges.tsv", "0 1\n");
        write(dir, "features.tsv", "1 0\n0 1\n0.5 0.5\n");
    }

    #[test]
    fn loads_minimal_bundle() {
        let tmp = tempfile::tempdir().unwrap();
        minimal(tmp.path());
        let b = load_bundle(tmp.path()).unwrap();
        assert_eq!((b.n(), b.d(), b.k()), (3, 2, 2));
        assert_eq!(b.edges(), &[(0, 1)]);
        assert!(b.labels().is_none());
    }

    #[test]
    fn canonicalizes_reversed_duplicate_edges() {
        let tmp = tempfile::tempdir().unwrap();
        minimal(tmp.path());
        write(tmp.path(), "edges.tsv", "1 0\n0 1\n\n");
        let b = load_bundle(tmp.path()).unwrap();
        assert_eq!(b.edges(), &[(0, 1)]);
    }

    #[test]
    fn drops_self_loops_from_edge_file() {
        let tmp = tempfile::tempdir().unwrap();
        minimal(tmp.path());
        write(tmp.path(), "edges.tsv", "2 2\n1 0\n");
        assert_eq!(load_bundle(tmp.path()).unwrap().edges(), &[(0, 1)]);
    }

    #[test]
    fn each_failure_is_distinct() {
        let tmp = tempfile::tempdir().unwrap();
        assert!(matches!(load_bundle(tmp.path()), Err(BundleError::MissingFile(_))));

        minimal(tmp.path());
        write(tmp.path(), "edges.tsv", "0 3\n");
        assert!(matches!(
            load_bundle(tmp.path()),
            Err(BundleError::NodeOutOfRange { id: 3, line: 1, .. })
        ));

        minimal(tmp.path());
        write(tmp.path(), "features.tsv", "1 0\n0 1\n");
        assert!(matches!(load_bundle(tmp.path()), Err(BundleError::DimensionMismatch { .. })));

        minimal(tmp.path());
        write(tmp.path(), "features.tsv", "1 0\n0 NaN\n1 1\n");
        assert!(matches!(
            load_bundle(tmp.path()),
            Err(BundleError::NonFiniteFeature { row: 1, col: 1 })
        ));

        minimal(tmp.path());
        write(tmp.path(), "labels.tsv", "0\n1\n2\n");
        let err = load_bundle(tmp.path()).unwrap_err();
        assert!(matches!(err, BundleError::LabelOutOfRange { line: 3, label: 2, k: 2 }));
        assert!(err.to_string().contains("labels.tsv:3"));
    }

    #[test]
    fn reads_binary_features() {
        let tmp = tempfile::tempdir().unwrap();
        minimal(tmp.path());
        write(tmp.path(), "meta.json", r#"{"n":3,"d":2,"k":2,"name":"tiny","features_format":"f32le"}"#);
        let vals: [f32; 6] = [1.0, 0.0, 0.0, 1.0, 0.5, 0.25];
        let bytes: Vec<u8> = vals.iter().flat_map(|v| v.to_le_bytes()).collect();
        fs::write(tmp.path().join("features.f32le"), &bytes).unwrap();
        let b = load_bundle(tmp.path()).unwrap();
        assert_eq!(b.features().row(2), &[0.5, 0.25]);

        fs::write(tmp.path().join("features.f32le"), &bytes[..20]).unwrap();
        assert!(matches!(load_bundle(tmp.path()), Err(BundleError::DimensionMismatch { .. })));
    }

    #[test]
    fn isolated_node_normalizes_to_one() {
        let b = GraphBundle::new("one", 1, [], Matrix::from_rows(&[vec![1.0]]), None).unwrap();
        let a = normalize_adjacency(&b);
        assert_eq!(a.matrix().to_dense(), Matrix::from_rows(&[vec![1.0]]));
    }

    #[test]
    fn single_edge_gives_halves() {
        let a = normalize_edges(2, &[(0, 1)]);
        let d = a.matrix().to_dense();
        assert!(d.data().iter().all(|&x| (x - 0.5).abs() < 1e-15), "{d:?}");
    }

    #[test]
    fn star_hub_diagonal_is_quarter() {
        let a = normalize_edges(4, &[(0, 1), (0, 2), (0, 3)]);
        let m = a.matrix();
        assert!((m.get(0, 0) - 0.25).abs() < 1e-15);
        // leaf: deg 2, hub-leaf: 1/sqrt(4*2)
        assert!((m.get(1, 1) - 0.5).abs() < 1e-15);
        assert!((m.get(0, 1) - 1.0 / 8f64.sqrt()).abs() < 1e-15);
    }
}
