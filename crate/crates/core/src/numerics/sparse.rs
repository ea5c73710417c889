use crate::error::{Error, Result};

use super::DenseMatrix;

/// Compressed-row sparse matrix. Column indices are sorted within each row
/// and duplicates are merged at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a matrix from `(row, col, value)` triplets; repeated
    /// coordinates are summed.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut entries: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        if let Some(&(r, c, _)) = entries.iter().find(|&&(r, c, _)| r >= rows || c >= cols) {
            return Err(Error::input(format!(
                "entry ({r}, {c}) outside a {rows}x{cols} matrix"
            )));
        }
        entries.sort_unstable_by_key(|&(r, c, _)| (r, c));

        let mut row_offsets = vec![0; rows + 1];
        let mut col_indices = Vec::with_capacity(entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in entries {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            last = Some((r, c));
            row_offsets[r + 1] += 1;
            col_indices.push(c);
            values.push(v);
        }
        for r in 0..rows {
            row_offsets[r + 1] += row_offsets[r];
        }
        Ok(SparseMatrix {
            rows,
            cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            rows: n,
            cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
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

    /// Column indices and values stored in row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let span = self.row_offsets[i]..self.row_offsets[i + 1];
        (&self.col_indices[span.clone()], &self.values[span])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map_or(0.0, |k| vals[k])
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                d.set(i, j, v);
            }
        }
        d
    }

    /// `self · d`.
    pub fn matmul_dense(&self, d: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != d.rows() {
            return Err(Error::shape(
                "sparse_dense_matmul",
                format!("{:?} x {:?}", self.shape(), d.shape()),
            ));
        }
        let k = d.cols();
        let mut out = DenseMatrix::zeros(self.rows, k);
        for i in 0..self.rows {
            let (cols, vals) = self.row(i);
            let out_row = out.row_mut(i);
            for (&j, &v) in cols.iter().zip(vals) {
                for (o, &x) in out_row.iter_mut().zip(d.row(j)) {
                    *o += v * x;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · d`, without materialising the transpose.
    pub fn transpose_matmul_dense(&self, d: &DenseMatrix) -> Result<DenseMatrix> {
        if self.rows != d.rows() {
            return Err(Error::shape(
                "sparse_transpose_dense_matmul",
                format!("{:?}ᵀ x {:?}", self.shape(), d.shape()),
            ));
        }
        let k = d.cols();
        let mut out = DenseMatrix::zeros(self.cols, k);
        for i in 0..self.rows {
            let (cols, vals) = self.row(i);
            let d_row = d.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                for (o, &x) in out.row_mut(j).iter_mut().zip(d_row) {
                    *o += v * x;
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_are_summed_and_sorted() {
        let s =
            SparseMatrix::from_triplets(2, 3, [(1, 2, 1.0), (0, 1, 2.0), (1, 0, 3.0), (1, 2, 0.5)])
                .unwrap();
        assert_eq!(s.nnz(), 3);
        assert_eq!(s.row(1), (&[0usize, 2][..], &[3.0, 1.5][..]));
        assert_eq!(s.get(0, 0), 0.0);
    }

    #[test]
    fn out_of_range_triplet() {
        assert!(SparseMatrix::from_triplets(2, 2, [(2, 0, 1.0)]).is_err());
    }

    #[test]
    fn identity_leaves_dense_unchanged() {
        let d = DenseMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]);
        assert_eq!(SparseMatrix::identity(3).matmul_dense(&d).unwrap(), d);
    }

    #[test]
    fn empty_sparse_gives_zero() {
        let s = SparseMatrix::from_triplets(3, 3, []).unwrap();
        let d = DenseMatrix::filled(3, 2, 7.0);
        assert_eq!(s.matmul_dense(&d).unwrap(), DenseMatrix::zeros(3, 2));
    }

    #[test]
    fn transpose_product() {
        let s =
            SparseMatrix::from_triplets(2, 3, [(0, 2, 2.0), (1, 0, -1.0), (1, 1, 4.0)]).unwrap();
        let d = DenseMatrix::from_rows(&[[1.0, 0.5], [2.0, -3.0]]);
        let expected = s.to_dense().transpose().matmul(&d).unwrap();
        assert_eq!(s.transpose_matmul_dense(&d).unwrap(), expected);
    }
}
