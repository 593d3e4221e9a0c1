//! Compressed sparse column storage for square real matrices.

use faer::Mat;

use crate::error::{Error, Result};

/// Square sparse matrix in compressed sparse column (CSC) layout.
///
/// Row indices within each column are strictly increasing and duplicates
/// are summed on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn zeros(n: usize) -> Self {
        SparseMatrix {
            n,
            col_ptr: vec![0; n + 1],
            row_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds a matrix from `(row, col, value)` triplets (0-based).
    /// Duplicate positions are summed; explicit zeros are dropped.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut per_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, v) in triplets {
            if i >= n || j >= n {
                return Err(Error::InvalidMatrix(format!(
                    "entry ({i}, {j}) outside a {n}x{n} matrix"
                )));
            }
            if !v.is_finite() {
                return Err(Error::InvalidMatrix(format!("non-finite entry at ({i}, {j})")));
            }
            per_col[j].push((i, v));
        }
        Ok(Self::from_columns(n, per_col))
    }

    /// Builds a matrix from per-column lists of `(row, value)` pairs.
    pub fn from_columns(n: usize, columns: Vec<Vec<(usize, f64)>>) -> Self {
        assert_eq!(columns.len(), n);
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        col_ptr.push(0);
        for mut col in columns {
            col.sort_by_key(|&(i, _)| i);
            let mut k = 0;
            while k < col.len() {
                let i = col[k].0;
                let mut v = 0.0;
                while k < col.len() && col[k].0 == i {
                    v += col[k].1;
                    k += 1;
                }
                if v != 0.0 {
                    row_idx.push(i);
                    values.push(v);
                }
            }
            col_ptr.push(row_idx.len());
        }
        SparseMatrix {
            n,
            col_ptr,
            row_idx,
            values,
        }
    }

    /// Converts a dense matrix, dropping exact zeros.
    pub fn from_dense(a: &Mat<f64>) -> Self {
        assert_eq!(a.nrows(), a.ncols(), "square matrix expected");
        let n = a.nrows();
        let columns = (0..n)
            .map(|j| {
                (0..n)
                    .filter_map(|i| {
                        let v = a[(i, j)];
                        (v != 0.0).then_some((i, v))
                    })
                    .collect()
            })
            .collect();
        Self::from_columns(n, columns)
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let columns = (0..n)
            .map(|j| {
                (0..n)
                    .filter_map(|i| {
                        let v = f(i, j);
                        (v != 0.0).then_some((i, v))
                    })
                    .collect()
            })
            .collect();
        Self::from_columns(n, columns)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Row indices and values of column `j`.
    #[inline]
    pub fn column(&self, j: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.col_ptr[j], self.col_ptr[j + 1]);
        (&self.row_idx[a..b], &self.values[a..b])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (rows, vals) = self.column(j);
        match rows.binary_search(&i) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    /// Iterates over stored entries as `(row, col, value)` in column-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |j| {
            let (rows, vals) = self.column(j);
            rows.iter().zip(vals).map(move |(&i, &v)| (i, j, v))
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `y = A x`
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        y.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..self.n {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            let (rows, vals) = self.column(j);
            for (&i, &v) in rows.iter().zip(vals) {
                y[i] += v * xj;
            }
        }
    }

    /// `y = Aᵀ x`
    pub fn mul_transpose_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|j| {
                let (rows, vals) = self.column(j);
                rows.iter().zip(vals).map(|(&i, &v)| v * x[i]).sum()
            })
            .collect()
    }

    pub fn column_sums(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.column(j).1.iter().sum()).collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Frobenius inner product `Σ a_ij b_ij`.
    pub fn frobenius_dot(&self, other: &SparseMatrix) -> f64 {
        assert_eq!(self.n, other.n);
        let mut s = 0.0;
        for j in 0..self.n {
            let (ra, va) = self.column(j);
            let (rb, vb) = other.column(j);
            let (mut p, mut q) = (0, 0);
            while p < ra.len() && q < rb.len() {
                match ra[p].cmp(&rb[q]) {
                    std::cmp::Ordering::Less => p += 1,
                    std::cmp::Ordering::Greater => q += 1,
                    std::cmp::Ordering::Equal => {
                        s += va[p] * vb[q];
                        p += 1;
                        q += 1;
                    }
                }
            }
        }
        s
    }

    pub fn scaled(&self, factor: f64) -> SparseMatrix {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= factor);
        out
    }

    /// `self + factor * other`
    pub fn add_scaled(&self, other: &SparseMatrix, factor: f64) -> SparseMatrix {
        assert_eq!(self.n, other.n);
        let columns = (0..self.n)
            .map(|j| {
                let (ra, va) = self.column(j);
                let (rb, vb) = other.column(j);
                ra.iter()
                    .zip(va)
                    .map(|(&i, &v)| (i, v))
                    .chain(rb.iter().zip(vb).map(|(&i, &v)| (i, factor * v)))
                    .collect()
            })
            .collect();
        SparseMatrix::from_columns(self.n, columns)
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut columns: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.n];
        for (i, j, v) in self.iter() {
            columns[i].push((j, v));
        }
        SparseMatrix::from_columns(self.n, columns)
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let mut a = Mat::<f64>::zeros(self.n, self.n);
        for (i, j, v) in self.iter() {
            a[(i, j)] = v;
        }
        a
    }
}
