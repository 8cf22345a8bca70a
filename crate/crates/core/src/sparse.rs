//! Compressed sparse row matrices.

use crate::tensor::{Tensor, TensorError};

/// CSR matrix. Column indices are strictly increasing within each row.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self, TensorError> {
        if row_offsets.len() != n_rows + 1 {
            return Err(TensorError::MalformedSparse(format!(
                "expected {} row offsets, got {}",
                n_rows + 1,
                row_offsets.len()
            )));
        }
        if row_offsets[0] != 0 || row_offsets.windows(2).any(|w| w[0] > w[1]) {
            return Err(TensorError::MalformedSparse(
                "row offsets must start at 0 and be nondecreasing".into(),
            ));
        }
        let nnz = row_offsets[n_rows];
        if col_indices.len() != nnz || values.len() != nnz {
            return Err(TensorError::MalformedSparse(format!(
                "final offset {nnz} disagrees with {} indices / {} values",
                col_indices.len(),
                values.len()
            )));
        }
        for r in 0..n_rows {
            let cols = &col_indices[row_offsets[r]..row_offsets[r + 1]];
            for (p, &c) in cols.iter().enumerate() {
                if c >= n_cols {
                    return Err(TensorError::ColumnOutOfRange {
                        row: r,
                        col: c,
                        n_cols,
                    });
                }
                if p > 0 && cols[p - 1] >= c {
                    return Err(TensorError::MalformedSparse(format!(
                        "columns of row {r} are not strictly increasing"
                    )));
                }
            }
        }
        Ok(SparseMatrix {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Builds a CSR matrix from `(row, col, value)` triplets. Duplicate
    /// coordinates are summed in input order.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self, TensorError> {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        for &(r, c, _) in &sorted {
            if r >= n_rows {
                return Err(TensorError::MalformedSparse(format!(
                    "row {r} out of range for {n_rows} rows"
                )));
            }
            if c >= n_cols {
                return Err(TensorError::ColumnOutOfRange { row: r, col: c, n_cols });
            }
        }
        sorted.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_offsets = vec![0; n_rows + 1];
        let mut col_indices: Vec<usize> = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            col_indices.push(c);
            values.push(v);
            row_offsets[r + 1] += 1;
            last = Some((r, c));
        }
        for r in 0..n_rows {
            row_offsets[r + 1] += row_offsets[r];
        }
        Self::new(n_rows, n_cols, row_offsets, col_indices, values)
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            n_rows: n,
            n_cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn empty(n_rows: usize, n_cols: usize) -> Self {
        SparseMatrix {
            n_rows,
            n_cols,
            row_offsets: vec![0; n_rows + 1],
            col_indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Keeps the explicit nonzeros of a dense matrix.
    pub fn from_dense(t: &Tensor) -> Self {
        let (r, c) = (t.rows(), t.cols());
        let mut row_offsets = Vec::with_capacity(r + 1);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        row_offsets.push(0);
        for i in 0..r {
            for (j, &v) in t.row(i).iter().enumerate() {
                if v != 0.0 {
                    col_indices.push(j);
                    values.push(v);
                }
            }
            row_offsets.push(col_indices.len());
        }
        SparseMatrix {
            n_rows: r,
            n_cols: c,
            row_offsets,
            col_indices,
            values,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `(col, value)` pairs of row `r` in increasing column order.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_offsets[r]..self.row_offsets[r + 1];
        self.col_indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.row_offsets[r]..self.row_offsets[r + 1];
        match self.col_indices[span.clone()].binary_search(&c) {
            Ok(p) => self.values[span.start + p],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Tensor {
        let mut t = Tensor::zeros(&[self.n_rows, self.n_cols]);
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                t.set(r, c, v);
            }
        }
        t
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &c in &self.col_indices {
            counts[c + 1] += 1;
        }
        for c in 0..self.n_cols {
            counts[c + 1] += counts[c];
        }
        let offsets = counts.clone();
        let mut next = counts;
        let mut col_indices = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                let p = next[c];
                col_indices[p] = r;
                values[p] = v;
                next[c] += 1;
            }
        }
        SparseMatrix {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            row_offsets: offsets,
            col_indices,
            values,
        }
    }

    /// Same sparsity pattern with new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self, TensorError> {
        if values.len() != self.nnz() {
            return Err(TensorError::MalformedSparse(format!(
                "expected {} values, got {}",
                self.nnz(),
                values.len()
            )));
        }
        Ok(SparseMatrix {
            values,
            ..self.clone()
        })
    }

    /// Sparse-dense product. Each output entry accumulates its row's terms
    /// in increasing column order, which is the order `Tensor::matmul`
    /// uses on the densified matrix.
    pub fn spmm(&self, d: &Tensor) -> Result<Tensor, TensorError> {
        if d.rows() != self.n_cols {
            return Err(TensorError::Dimension {
                op: "spmm",
                left: vec![self.n_rows, self.n_cols],
                right: d.shape().to_vec(),
            });
        }
        let n = d.cols();
        let mut out = vec![0.0; self.n_rows * n];
        self.spmm_into(d.data(), &mut out, n);
        Tensor::new(vec![self.n_rows, n], out)
    }

    pub(crate) fn spmm_into(&self, d: &[f64], out: &mut [f64], n: usize) {
        for r in 0..self.n_rows {
            let out_row = &mut out[r * n..(r + 1) * n];
            for (c, v) in self.row(r) {
                let d_row = &d[c * n..(c + 1) * n];
                for (o, &x) in out_row.iter_mut().zip(d_row) {
                    *o += v * x;
                }
            }
        }
    }

    /// `out += self^T * g` without materializing the transpose.
    pub(crate) fn spmm_transpose_into(&self, g: &[f64], out: &mut [f64], n: usize) {
        for r in 0..self.n_rows {
            let g_row = &g[r * n..(r + 1) * n];
            for (c, v) in self.row(r) {
                let out_row = &mut out[c * n..(c + 1) * n];
                for (o, &x) in out_row.iter_mut().zip(g_row) {
                    *o += v * x;
                }
            }
        }
    }

    /// `max |A - A^T|` over stored and implied entries.
    pub fn max_asymmetry(&self) -> f64 {
        if self.n_rows != self.n_cols {
            return f64::INFINITY;
        }
        let mut worst: f64 = 0.0;
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                worst = worst.max((v - self.get(c, r)).abs());
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sparse(rng: &mut ChaCha8Rng, r: usize, c: usize, density: f64) -> SparseMatrix {
        let mut t = Vec::new();
        for i in 0..r {
            for j in 0..c {
                if rng.gen_bool(density) {
                    t.push((i, j, rng.gen_range(-1.0..1.0)));
                }
            }
        }
        SparseMatrix::from_triplets(r, c, &t).unwrap()
    }

    #[test]
    fn empty_times_dense_is_zero() {
        let d = Tensor::ones(&[3, 2]);
        let out = SparseMatrix::empty(4, 3).spmm(&d).unwrap();
        assert_eq!(out, Tensor::zeros(&[4, 2]));
    }

    #[test]
    fn identity_times_dense() {
        let d = Tensor::from_rows(&[[1.0, -2.0], [0.5, 3.0], [7.0, 0.0]]);
        assert_eq!(SparseMatrix::identity(3).spmm(&d).unwrap(), d);
    }

    #[test]
    fn random_matches_densified() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = random_sparse(&mut rng, 6, 6, 0.3);
        let d = Tensor::new(vec![6, 2], (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .unwrap();
        let sparse = s.spmm(&d).unwrap();
        let dense = s.to_dense().matmul(&d).unwrap();
        assert!(sparse.max_abs_diff(&dense) < 1e-12);
    }

    #[test]
    fn rejects_bad_structure() {
        assert!(matches!(
            SparseMatrix::new(1, 2, vec![0, 1], vec![2], vec![1.0]),
            Err(TensorError::ColumnOutOfRange { .. })
        ));
        assert!(SparseMatrix::new(1, 3, vec![0, 2], vec![1, 1], vec![1.0, 1.0]).is_err());
        assert!(SparseMatrix::new(2, 3, vec![0, 2, 1], vec![0, 1], vec![1.0, 1.0]).is_err());
        assert!(SparseMatrix::new(1, 3, vec![0, 2], vec![0], vec![1.0]).is_err());
    }

    #[test]
    fn spmm_shape_mismatch() {
        let s = SparseMatrix::identity(3);
        assert!(s.spmm(&Tensor::zeros(&[2, 2])).is_err());
    }

    #[test]
    fn transpose_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = random_sparse(&mut rng, 5, 7, 0.4);
        assert_eq!(s.transpose().to_dense(), s.to_dense().transpose());
        assert_eq!(s.transpose().transpose(), s);
    }

    #[test]
    fn triplets_sum_duplicates() {
        let s = SparseMatrix::from_triplets(2, 2, &[(0, 1, 1.0), (0, 1, 2.0), (1, 0, 1.0)]).unwrap();
        assert_eq!(s.get(0, 1), 3.0);
        assert_eq!(s.nnz(), 2);
    }
}
