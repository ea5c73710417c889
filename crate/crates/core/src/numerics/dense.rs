use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major dense matrix of `f64`.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDense")]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Deserialize)]
struct RawDense {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TryFrom<RawDense> for DenseMatrix {
    type Error = Error;

    fn try_from(raw: RawDense) -> Result<Self> {
        DenseMatrix::from_vec(raw.rows, raw.cols, raw.data)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementwiseOp {
    Add,
    Sub,
    Mul,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceOp {
    Sum,
    Mean,
}

/// Axis collapsed by a reduction. `Rows` folds all rows together and yields
/// a `1 x cols` row vector; `Cols` yields a `rows x 1` column vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Rows,
    Cols,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryFn {
    Relu,
    Sigmoid,
    Exp,
    Log,
}

/// Logistic sigmoid, evaluated without overflowing `exp` for large `|t|`.
#[inline]
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^t)` without overflow.
#[inline]
pub fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

#[inline]
pub fn relu(t: f64) -> f64 {
    if t > 0.0 {
        t
    } else {
        0.0
    }
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "from_vec",
                format!("{} values for a {rows}x{cols} matrix", data.len()),
            ));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    /// Builds a matrix from equally sized rows. Panics on ragged input, so
    /// this is meant for literals in tests and examples.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            assert_eq!(r.len(), cols, "ragged rows passed to from_rows");
            data.extend_from_slice(r);
        }
        DenseMatrix {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn row_vector(values: &[f64]) -> Self {
        DenseMatrix {
            rows: 1,
            cols: values.len(),
            data: values.to_vec(),
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] = value;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Copies the listed rows, in order, into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            if i >= self.rows {
                return Err(Error::input(format!(
                    "row {i} out of range for {} rows",
                    self.rows
                )));
            }
            data.extend_from_slice(self.row(i));
        }
        Ok(DenseMatrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        })
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for (j, &v) in self.row(i).iter().enumerate() {
                out.data[j * self.rows + i] = v;
            }
        }
        out
    }

    /// `self · b`.
    pub fn matmul(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != b.rows {
            return Err(Error::shape(
                "matmul",
                format!("{:?} x {:?}", self.shape(), b.shape()),
            ));
        }
        let mut out = Self::zeros(self.rows, b.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * b.cols..(i + 1) * b.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                // bag-of-words features are mostly zero
                if a == 0.0 {
                    continue;
                }
                for (o, &bv) in out_row.iter_mut().zip(b.row(k)) {
                    *o += a * bv;
                }
            }
        }
        Ok(out)
    }

    /// `self · bᵀ`.
    pub fn matmul_nt(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != b.cols {
            return Err(Error::shape(
                "matmul_nt",
                format!("{:?} x {:?}ᵀ", self.shape(), b.shape()),
            ));
        }
        let mut out = Self::zeros(self.rows, b.rows);
        for i in 0..self.rows {
            let a_row = self.row(i);
            for j in 0..b.rows {
                out.data[i * b.rows + j] = dot(a_row, b.row(j));
            }
        }
        Ok(out)
    }

    /// `selfᵀ · b`.
    pub fn matmul_tn(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        if self.rows != b.rows {
            return Err(Error::shape(
                "matmul_tn",
                format!("{:?}ᵀ x {:?}", self.shape(), b.shape()),
            ));
        }
        let mut out = Self::zeros(self.cols, b.cols);
        for i in 0..self.rows {
            let b_row = b.row(i);
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let out_row = &mut out.data[k * b.cols..(k + 1) * b.cols];
                for (o, &bv) in out_row.iter_mut().zip(b_row) {
                    *o += a * bv;
                }
            }
        }
        Ok(out)
    }

    pub fn elementwise(&self, b: &DenseMatrix, op: ElementwiseOp) -> Result<DenseMatrix> {
        if self.shape() != b.shape() {
            return Err(Error::shape(
                "elementwise",
                format!("{:?} vs {:?}", self.shape(), b.shape()),
            ));
        }
        let f: fn(f64, f64) -> f64 = match op {
            ElementwiseOp::Add => |x, y| x + y,
            ElementwiseOp::Sub => |x, y| x - y,
            ElementwiseOp::Mul => |x, y| x * y,
        };
        Ok(DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&b.data)
                .map(|(&x, &y)| f(x, y))
                .collect(),
        })
    }

    pub fn reduce(&self, axis: Axis, op: ReduceOp) -> DenseMatrix {
        let mut out = match axis {
            Axis::Rows => {
                let mut acc = Self::zeros(1, self.cols);
                for i in 0..self.rows {
                    for (a, &v) in acc.data.iter_mut().zip(self.row(i)) {
                        *a += v;
                    }
                }
                acc
            }
            Axis::Cols => DenseMatrix {
                rows: self.rows,
                cols: 1,
                data: (0..self.rows).map(|i| self.row(i).iter().sum()).collect(),
            },
        };
        if op == ReduceOp::Mean {
            let count = match axis {
                Axis::Rows => self.rows,
                Axis::Cols => self.cols,
            };
            if count > 0 {
                out.scale_in_place(1.0 / count as f64);
            }
        }
        out
    }

    /// Applies `f` pointwise. `Log` of a non-positive entry is a domain error.
    pub fn map(&self, f: UnaryFn) -> Result<DenseMatrix> {
        let g: fn(f64) -> f64 = match f {
            UnaryFn::Relu => relu,
            UnaryFn::Sigmoid => sigmoid,
            UnaryFn::Exp => f64::exp,
            UnaryFn::Log => {
                if let Some(bad) = self.data.iter().find(|&&v| v.is_nan() || v <= 0.0) {
                    return Err(Error::Domain(format!("log of non-positive value {bad}")));
                }
                f64::ln
            }
        };
        Ok(self.map_with(g))
    }

    pub fn map_with(&self, f: impl Fn(f64) -> f64) -> DenseMatrix {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> DenseMatrix {
        self.map_with(|v| v * s)
    }

    pub fn scale_in_place(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    /// `self += other`; shapes must agree.
    pub fn add_assign(&mut self, other: &DenseMatrix) {
        assert_eq!(self.shape(), other.shape(), "add_assign shape mismatch");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DenseMatrix {}x{} ", self.rows, self.cols)?;
        let mut list = f.debug_list();
        for i in 0..self.rows.min(8) {
            list.entry(&self.row(i));
        }
        list.finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_times_b_is_b() {
        let b = DenseMatrix::from_rows(&[[1.0, -2.0, 3.0], [0.5, 0.0, 4.0]]);
        assert_eq!(DenseMatrix::identity(2).matmul(&b).unwrap(), b);
    }

    #[test]
    fn small_product() {
        let a = DenseMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        let b = DenseMatrix::from_rows(&[[1.0], [1.0]]);
        assert_eq!(
            a.matmul(&b).unwrap(),
            DenseMatrix::from_rows(&[[3.0], [7.0]])
        );
    }

    #[test]
    fn inner_dim_mismatch() {
        let a = DenseMatrix::zeros(2, 3);
        assert!(matches!(a.matmul(&a), Err(Error::Shape { .. })));
        assert!(a
            .elementwise(&DenseMatrix::zeros(3, 2), ElementwiseOp::Add)
            .is_err());
    }

    #[test]
    fn transposed_products_agree() {
        let a = DenseMatrix::from_rows(&[[1.0, 0.0, 2.0], [-1.0, 3.0, 0.5]]);
        let b = DenseMatrix::from_rows(&[[2.0, 1.0, 0.0], [0.0, -1.0, 4.0]]);
        let nt = a.matmul_nt(&b).unwrap();
        assert_eq!(nt, a.matmul(&b.transpose()).unwrap());
        let tn = a.matmul_tn(&b).unwrap();
        assert_eq!(tn, a.transpose().matmul(&b).unwrap());
    }

    #[test]
    fn activations() {
        let x = DenseMatrix::row_vector(&[-1.0, 0.0, 2.0]);
        assert_eq!(
            x.map(UnaryFn::Relu).unwrap(),
            DenseMatrix::row_vector(&[0.0, 0.0, 2.0])
        );
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        assert!(sigmoid(-800.0).is_finite());
    }

    #[test]
    fn log_domain() {
        let x = DenseMatrix::row_vector(&[1.0, 0.0]);
        assert!(matches!(x.map(UnaryFn::Log), Err(Error::Domain(_))));
        let y = DenseMatrix::row_vector(&[1.0, std::f64::consts::E]);
        let l = y.map(UnaryFn::Log).unwrap();
        assert!((l.get(0, 1) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn reductions() {
        let m = DenseMatrix::from_rows(&[[0.0, 2.0], [2.0, 0.0]]);
        assert_eq!(
            m.reduce(Axis::Rows, ReduceOp::Mean),
            DenseMatrix::row_vector(&[1.0, 1.0])
        );
        assert_eq!(
            m.reduce(Axis::Cols, ReduceOp::Sum),
            DenseMatrix::from_rows(&[[2.0], [2.0]])
        );
    }

    #[test]
    fn softplus_matches_naive_in_safe_range() {
        for &t in &[-30.0, -2.0, 0.0, 1.5, 30.0] {
            let naive = (1.0 + f64::exp(t)).ln();
            assert!((softplus(t) - naive).abs() < 1e-12);
        }
        assert_eq!(softplus(1000.0), 1000.0);
    }
}
