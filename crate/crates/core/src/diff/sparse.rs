use crate::diff::Matrix;
use crate::error::DiffError;

/// Compressed-sparse-row matrix. Only used as a constant operand.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from per-row `(col, value)` lists. Columns within a row are sorted
    /// and must be unique.
    pub fn from_row_entries(rows: usize, cols: usize, entries: Vec<Vec<(usize, f64)>>) -> Self {
        assert_eq!(entries.len(), rows);
        let mut indptr = Vec::with_capacity(rows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for mut row in entries {
            row.sort_by_key(|&(c, _)| c);
            assert!(
                row.windows(2).all(|w| w[0].0 < w[1].0),
                "duplicate column in csr row"
            );
            for (c, v) in row {
                assert!(c < cols, "column {c} out of range");
                indices.push(c);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        Self {
            rows,
            cols,
            indptr,
            indices,
            values,
        }
    }

    /// Keeps the nonzero entries of a dense matrix.
    pub fn from_dense(m: &Matrix) -> Self {
        let mut indptr = Vec::with_capacity(m.rows() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for row in m.iter_rows() {
            for (c, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    indices.push(c);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self {
            rows: m.rows(),
            cols: m.cols(),
            indptr,
            indices,
            values,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `(col, value)` pairs stored in row `r`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    /// Entry `(r, c)`, zero when not stored.
    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.indptr[r]..self.indptr[r + 1];
        match self.indices[span.clone()].binary_search(&c) {
            Ok(pos) => self.values[span.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn to_dense(&self) -> Matrix {
        let mut out = Matrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                out.set(r, c, v);
            }
        }
        out
    }

    /// `self · dense`.
    pub fn matmul(&self, dense: &Matrix) -> Result<Matrix, DiffError> {
        if self.cols != dense.rows() {
            return Err(DiffError::Shape {
                op: "spmm",
                lhs: self.shape(),
                rhs: dense.shape(),
            });
        }
        let width = dense.cols();
        let mut out = Matrix::zeros(self.rows, width);
        for r in 0..self.rows {
            let acc = out.row_mut(r);
            for (c, v) in self.row(r) {
                for (o, x) in acc.iter_mut().zip(dense.row(c)) {
                    *o += v * x;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · dense`, accumulated row by row in a fixed order.
    pub fn transpose_matmul(&self, dense: &Matrix) -> Result<Matrix, DiffError> {
        if self.rows != dense.rows() {
            return Err(DiffError::Shape {
                op: "spmm_t",
                lhs: (self.cols, self.rows),
                rhs: dense.shape(),
            });
        }
        let width = dense.cols();
        let mut out = Matrix::zeros(self.cols, width);
        for r in 0..self.rows {
            let src = dense.row(r);
            for (c, v) in self.row(r) {
                for (o, x) in out.row_mut(c).iter_mut().zip(src) {
                    *o += v * x;
                }
            }
        }
        Ok(out)
    }
}
