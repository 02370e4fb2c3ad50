//! Compressed sparse row matrices and sparse-dense products.

use crate::error::{Error, Result};
use crate::tensor::Matrix;
use crate::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> CsrMatrix<T> {
    /// Builds from `(row, col, value)` triplets. Duplicate coordinates are summed;
    /// columns within a row end up sorted.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, T)>,
    ) -> Result<Self> {
        let mut entries: Vec<(usize, usize, T)> = triplets.into_iter().collect();
        for &(r, c, _) in &entries {
            if r >= rows || c >= cols {
                return Err(Error::InvalidArgument(format!(
                    "entry ({r}, {c}) outside {rows}x{cols} matrix"
                )));
            }
        }
        entries.sort_by_key(|&(r, c, _)| (r, c));

        let mut row_ptr = vec![0usize; rows + 1];
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut values: Vec<T> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in entries {
            if last == Some((r, c)) {
                let tail = values.last_mut().expect("previous entry");
                *tail = *tail + v;
                continue;
            }
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            values.push(v);
            last = Some((r, c));
        }
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(Self {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Assembles from raw CSR arrays, validating their consistency.
    pub fn from_raw(
        rows: usize,
        cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<T>,
    ) -> Result<Self> {
        let ok = row_ptr.len() == rows + 1
            && row_ptr.first() == Some(&0)
            && row_ptr.windows(2).all(|w| w[0] <= w[1])
            && *row_ptr.last().unwrap() == col_idx.len()
            && col_idx.len() == values.len()
            && col_idx.iter().all(|&c| c < cols);
        if !ok {
            return Err(Error::InvalidArgument("inconsistent CSR arrays".into()));
        }
        Ok(Self {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rows: n,
            cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![T::one(); n],
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

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// `(col, value)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[span.clone()].binary_search(&j) {
            Ok(k) => self.values[span.start + k],
            Err(_) => T::zero(),
        }
    }

    pub fn row_sums(&self) -> Vec<T> {
        (0..self.rows).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }

    pub fn to_dense(&self) -> Matrix<T> {
        let mut out = Matrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for (j, v) in self.row(i) {
                out[(i, j)] = out[(i, j)] + v;
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.cols + 1];
        for &c in &self.col_idx {
            counts[c + 1] += 1;
        }
        for c in 0..self.cols {
            counts[c + 1] += counts[c];
        }
        let row_ptr = counts.clone();
        let mut next = counts;
        let mut col_idx = vec![0; self.nnz()];
        let mut values = vec![T::zero(); self.nnz()];
        for i in 0..self.rows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let c = self.col_idx[k];
                let slot = next[c];
                col_idx[slot] = i;
                values[slot] = self.values[k];
                next[c] += 1;
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Sparse-dense product `self · x`.
    pub fn spmm(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        self.spmm_with_values(&self.values, x)
    }

    /// `self · x` with the stored pattern but caller-supplied nonzero values
    /// (one per stored entry, in CSR order).
    #[allow(clippy::needless_range_loop)]
    pub fn spmm_with_values(&self, values: &[T], x: &Matrix<T>) -> Result<Matrix<T>> {
        if self.cols != x.rows() {
            return Err(Error::Shape {
                op: "spmm",
                lhs: self.shape(),
                rhs: x.shape(),
            });
        }
        debug_assert_eq!(values.len(), self.nnz());
        let d = x.cols();
        let mut out = Matrix::zeros(self.rows, d);
        for i in 0..self.rows {
            let out_row = out.row_mut(i);
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let w = values[k];
                for (o, &v) in out_row.iter_mut().zip(x.row(self.col_idx[k])) {
                    *o = *o + w * v;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · g`, scattering instead of transposing.
    #[allow(clippy::needless_range_loop)]
    pub fn spmm_transposed_with_values(&self, values: &[T], g: &Matrix<T>) -> Result<Matrix<T>> {
        if self.rows != g.rows() {
            return Err(Error::Shape {
                op: "spmm_transposed",
                lhs: self.shape(),
                rhs: g.shape(),
            });
        }
        let d = g.cols();
        let mut out = Matrix::zeros(self.cols, d);
        for i in 0..self.rows {
            let g_row = g.row(i);
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let w = values[k];
                for (o, &v) in out.row_mut(self.col_idx[k]).iter_mut().zip(g_row) {
                    *o = *o + w * v;
                }
            }
        }
        Ok(out)
    }
}
