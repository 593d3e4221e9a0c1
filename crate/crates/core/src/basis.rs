//! Orthonormal bases of the admissible perturbation space.
//!
//! A perturbation column `m[:, j]` must sum to zero and vanish outside the
//! admissible rows `A_j` of column `j`. With `k = |A_j|`, the canonical basis
//! of that space uses the vectors `(1, …, 1, −i, 0, …)/√(i(i+1))` for
//! `i = 1, …, k − 1`, placed on the rows of `A_j`. Blocks are never
//! materialized; products with them use prefix and suffix sums.

use faer::Mat;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::random_orthogonal;
use crate::markov::{StochasticMatrix, Support};
use crate::response::Perturbation;
use crate::sparse::SparseMatrix;

/// Dense `k × (k − 1)` orthonormal basis of `{x : 1ᵀx = 0}`.
pub fn ones_nullspace_basis(k: usize) -> Result<Mat<f64>> {
    if k < 2 {
        return Err(Error::DimensionTooSmall(k));
    }
    Ok(Mat::from_fn(k, k - 1, |p, c| {
        let i = c + 1;
        let s = 1.0 / ((i * (i + 1)) as f64).sqrt();
        match p.cmp(&i) {
            std::cmp::Ordering::Less => s,
            std::cmp::Ordering::Equal => -(i as f64) * s,
            std::cmp::Ordering::Greater => 0.0,
        }
    }))
}

/// `y = B α` for the canonical basis, `|α| = k − 1`, `|y| = k`.
pub fn nullspace_apply(alpha: &[f64]) -> Vec<f64> {
    let k = alpha.len() + 1;
    let mut y = vec![0.0; k];
    let mut suffix = 0.0;
    for p in (0..k).rev() {
        // suffix = Σ_{i>p} α_i / √(i(i+1))
        if p >= 1 {
            let pf = p as f64;
            let a = alpha[p - 1] / (pf * (pf + 1.0)).sqrt();
            y[p] = suffix - pf * a;
            suffix += a;
        } else {
            y[p] = suffix;
        }
    }
    y
}

/// `α = Bᵀ y` for the canonical basis.
pub fn nullspace_adjoint(y: &[f64]) -> Vec<f64> {
    let k = y.len();
    let mut alpha = Vec::with_capacity(k.saturating_sub(1));
    let mut prefix = y.first().copied().unwrap_or(0.0);
    for i in 1..k {
        let f = i as f64;
        alpha.push((prefix - f * y[i]) / (f * (f + 1.0)).sqrt());
        prefix += y[i];
    }
    alpha
}

/// Orthonormal basis `B_j` of admissible zero-sum variations of one column.
#[derive(Debug, Clone)]
pub struct ColumnBasis {
    n: usize,
    rows: Vec<usize>,
    /// Optional orthogonal mixing `B_j R` of the canonical vectors.
    rotation: Option<Mat<f64>>,
}

impl ColumnBasis {
    pub fn new(n: usize, rows: Vec<usize>) -> Self {
        ColumnBasis {
            n,
            rows,
            rotation: None,
        }
    }

    /// Canonical block for column `j` of `M`.
    pub fn for_column(m: &StochasticMatrix, j: usize) -> Self {
        Self::new(m.n(), m.support().rows(j).to_vec())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of basis vectors, `max(|A_j| − 1, 0)`.
    pub fn dim(&self) -> usize {
        self.rows.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.dim() == 0
    }

    pub fn admissible_rows(&self) -> &[usize] {
        &self.rows
    }

    /// Rows forced to zero in every basis vector.
    pub fn excluded_rows(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.n - self.rows.len());
        let mut it = self.rows.iter().peekable();
        for i in 0..self.n {
            if it.peek() == Some(&&i) {
                it.next();
            } else {
                out.push(i);
            }
        }
        out
    }

    /// Entries `(row, value)` of `B_j α`.
    pub fn apply(&self, alpha: &[f64]) -> Vec<(usize, f64)> {
        debug_assert_eq!(alpha.len(), self.dim());
        if self.is_empty() {
            return Vec::new();
        }
        let y = match &self.rotation {
            Some(r) => {
                let ra: Vec<f64> = (0..r.nrows())
                    .map(|i| (0..r.ncols()).map(|c| r[(i, c)] * alpha[c]).sum())
                    .collect();
                nullspace_apply(&ra)
            }
            None => nullspace_apply(alpha),
        };
        self.rows.iter().copied().zip(y).collect()
    }

    /// `B_jᵀ x` for a full-length vector `x`.
    pub fn adjoint(&self, x: &[f64]) -> Vec<f64> {
        if self.is_empty() {
            return Vec::new();
        }
        let y: Vec<f64> = self.rows.iter().map(|&i| x[i]).collect();
        let a = nullspace_adjoint(&y);
        match &self.rotation {
            Some(r) => (0..r.ncols())
                .map(|c| (0..r.nrows()).map(|i| r[(i, c)] * a[i]).sum())
                .collect(),
            None => a,
        }
    }

    /// Dense `n × dim` block.
    pub fn to_dense(&self) -> Mat<f64> {
        let d = self.dim();
        let mut out = Mat::<f64>::zeros(self.n, d);
        let mut e = vec![0.0; d];
        for c in 0..d {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[c] = 1.0;
            for (i, v) in self.apply(&e) {
                out[(i, c)] = v;
            }
        }
        out
    }
}

/// Block-diagonal basis `E = diag(B_1, …, B_n)` of all admissible perturbations,
/// with coefficients ordered column by column.
#[derive(Debug, Clone)]
pub struct ConstraintBasis {
    columns: Vec<ColumnBasis>,
    offsets: Vec<usize>,
}

impl ConstraintBasis {
    pub fn new(m: &StochasticMatrix) -> Result<Self> {
        Self::from_support(&m.support())
    }

    pub fn from_support(support: &Support) -> Result<Self> {
        let n = support.n();
        let columns: Vec<ColumnBasis> = (0..n)
            .map(|j| ColumnBasis::new(n, support.rows(j).to_vec()))
            .collect();
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for c in &columns {
            offsets.push(offsets.last().unwrap() + c.dim());
        }
        if *offsets.last().unwrap() == 0 {
            return Err(Error::EmptyFeasibleSet);
        }
        Ok(ConstraintBasis { columns, offsets })
    }

    /// Same blocks, each rotated by an independent random orthogonal matrix.
    pub fn randomized<R: Rng + ?Sized>(&self, rng: &mut R) -> Self {
        let columns = self
            .columns
            .iter()
            .map(|c| {
                let mut c = c.clone();
                if c.dim() > 0 {
                    c.rotation = Some(random_orthogonal(c.dim(), rng));
                }
                c
            })
            .collect();
        ConstraintBasis {
            columns,
            offsets: self.offsets.clone(),
        }
    }

    pub fn n(&self) -> usize {
        self.columns.len()
    }

    /// `Σ_j max(|A_j| − 1, 0)`
    pub fn total_dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn column(&self, j: usize) -> &ColumnBasis {
        &self.columns[j]
    }

    /// Coefficient index range of column `j`.
    pub fn block_range(&self, j: usize) -> std::ops::Range<usize> {
        self.offsets[j]..self.offsets[j + 1]
    }

    /// `m = E α`, column `j` being `B_j α_j`.
    pub fn assemble(&self, alpha: &[f64]) -> Result<Perturbation> {
        if alpha.len() != self.total_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.total_dim(),
                found: alpha.len(),
            });
        }
        let n = self.n();
        let cols = (0..n)
            .map(|j| self.columns[j].apply(&alpha[self.block_range(j)]))
            .collect();
        Perturbation::new(SparseMatrix::from_columns(n, cols))
    }

    /// `α = Eᵀ vec(m)`; exact inverse of `assemble` on admissible perturbations.
    pub fn project(&self, m: &SparseMatrix) -> Vec<f64> {
        let n = self.n();
        let mut alpha = Vec::with_capacity(self.total_dim());
        let mut col = vec![0.0; n];
        for j in 0..n {
            let (rows, vals) = m.column(j);
            for (&i, &v) in rows.iter().zip(vals) {
                col[i] = v;
            }
            alpha.extend(self.columns[j].adjoint(&col));
            for &i in rows {
                col[i] = 0.0;
            }
        }
        alpha
    }

    /// `Gα = Σ_j h_j B_j α_j`, i.e. `(Eα) h`.
    pub fn weighted_apply(&self, h: &[f64], alpha: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        for (j, c) in self.columns.iter().enumerate() {
            if c.is_empty() || h[j] == 0.0 {
                continue;
            }
            for (i, v) in c.apply(&alpha[self.block_range(j)]) {
                out[i] += h[j] * v;
            }
        }
        out
    }

    /// `Gᵀx`, blocks `h_j B_jᵀ x`.
    pub fn weighted_adjoint(&self, h: &[f64], x: &[f64]) -> Vec<f64> {
        let mut alpha = Vec::with_capacity(self.total_dim());
        for (j, c) in self.columns.iter().enumerate() {
            alpha.extend(c.adjoint(x).into_iter().map(|v| h[j] * v));
        }
        alpha
    }
}

/// Matrix with entries `weights_j (x_i − mean_{A_j} x)` on admissible rows.
///
/// Columns with fewer than two admissible rows are zero. Every column sums
/// to zero, so the result is a valid perturbation direction.
pub fn centered_outer(support: &Support, weights: &[f64], x: &[f64]) -> SparseMatrix {
    let n = support.n();
    let cols = (0..n)
        .map(|j| {
            let rows = support.rows(j);
            if rows.len() < 2 || weights[j] == 0.0 {
                return Vec::new();
            }
            let mean = rows.iter().map(|&i| x[i]).sum::<f64>() / rows.len() as f64;
            rows.iter().map(|&i| (i, weights[j] * (x[i] - mean))).collect()
        })
        .collect();
    SparseMatrix::from_columns(n, cols)
}

/// Same as [`centered_outer`] with an explicit correction so each column sums
/// to zero in floating point as well.
pub fn centered_perturbation(support: &Support, weights: &[f64], x: &[f64]) -> SparseMatrix {
    let raw = centered_outer(support, weights, x);
    rebalance_columns(&raw)
}

/// Removes the rounding residue of column sums by adjusting the largest entry.
pub fn rebalance_columns(m: &SparseMatrix) -> SparseMatrix {
    let n = m.n();
    let cols = (0..n)
        .map(|j| {
            let (rows, vals) = m.column(j);
            let mut col: Vec<(usize, f64)> = rows.iter().copied().zip(vals.iter().copied()).collect();
            if col.is_empty() {
                return col;
            }
            let s: f64 = col.iter().map(|e| e.1).sum();
            let k = (0..col.len())
                .max_by(|&a, &b| col[a].1.abs().total_cmp(&col[b].1.abs()))
                .unwrap();
            col[k].1 -= s;
            col
        })
        .collect();
    SparseMatrix::from_columns(n, cols)
}

/// `Σ_j w_j² P_j x`, with `P_j` the projector onto zero-sum vectors on `A_j`.
///
/// Equals `G Gᵀ x` for any orthonormal choice of the blocks `B_j`.
pub fn weighted_projector_apply(support: &Support, weights: &[f64], x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; support.n()];
    for j in 0..support.n() {
        let rows = support.rows(j);
        if rows.len() < 2 {
            continue;
        }
        let w2 = weights[j] * weights[j];
        if w2 == 0.0 {
            continue;
        }
        let mean = rows.iter().map(|&i| x[i]).sum::<f64>() / rows.len() as f64;
        for &i in rows {
            out[i] += w2 * (x[i] - mean);
        }
    }
    out
}

/// Dense `Σ_j w_j² P_j`.
pub fn weighted_projector_dense(support: &Support, weights: &[f64]) -> Mat<f64> {
    let n = support.n();
    let mut d = Mat::<f64>::zeros(n, n);
    for j in 0..n {
        let rows = support.rows(j);
        let k = rows.len();
        if k < 2 {
            continue;
        }
        let w2 = weights[j] * weights[j];
        let off = w2 / k as f64;
        for &a in rows {
            for &b in rows {
                d[(a, b)] -= off;
            }
            d[(a, a)] += w2;
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;

    fn sample_matrix() -> StochasticMatrix {
        // column 0 positive, column 1 has a zero at row 1, column 2 is a unit vector
        StochasticMatrix::from_dense_fn(3, |i, j| match (i, j) {
            (_, 0) => 1.0 / 3.0,
            (1, 1) => 0.0,
            (_, 1) => 0.5,
            (0, 2) => 1.0,
            _ => 0.0,
        })
        .unwrap()
    }

    #[test]
    fn small_nullspace_bases() {
        assert_eq!(ones_nullspace_basis(1), Err(Error::DimensionTooSmall(1)));
        let b2 = ones_nullspace_basis(2).unwrap();
        assert_abs_diff_eq!(b2[(0, 0)], 1.0 / 2f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(b2[(1, 0)], -1.0 / 2f64.sqrt(), epsilon = 1e-15);
        let b3 = ones_nullspace_basis(3).unwrap();
        let s6 = 6f64.sqrt();
        let expect = [[1.0 / 2f64.sqrt(), 1.0 / s6], [-1.0 / 2f64.sqrt(), 1.0 / s6], [0.0, -2.0 / s6]];
        for i in 0..3 {
            for c in 0..2 {
                assert_abs_diff_eq!(b3[(i, c)], expect[i][c], epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn closed_form_products_match_dense() {
        for k in 2..9 {
            let b = ones_nullspace_basis(k).unwrap();
            let alpha: Vec<f64> = (0..k - 1).map(|i| (i as f64 * 1.3).cos()).collect();
            let y = nullspace_apply(&alpha);
            let y_ref: Vec<f64> = (0..k).map(|p| (0..k - 1).map(|c| b[(p, c)] * alpha[c]).sum()).collect();
            let back = nullspace_adjoint(&y_ref);
            for p in 0..k {
                assert_abs_diff_eq!(y[p], y_ref[p], epsilon = 1e-14);
            }
            for c in 0..k - 1 {
                assert_abs_diff_eq!(back[c], alpha[c], epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn column_blocks_respect_support() {
        let m = sample_matrix();
        let c0 = ColumnBasis::for_column(&m, 0);
        assert_eq!(c0.dim(), 2);
        let c1 = ColumnBasis::for_column(&m, 1);
        assert_eq!(c1.excluded_rows(), vec![1]);
        let d1 = c1.to_dense();
        assert_abs_diff_eq!(d1[(0, 0)], 1.0 / 2f64.sqrt(), epsilon = 1e-15);
        assert_eq!(d1[(1, 0)], 0.0);
        assert_abs_diff_eq!(d1[(2, 0)], -1.0 / 2f64.sqrt(), epsilon = 1e-15);
        assert!(ColumnBasis::for_column(&m, 2).is_empty());
        assert_eq!(ConstraintBasis::new(&m).unwrap().total_dim(), 3);
    }

    #[test]
    fn total_dimension_counts() {
        let m = StochasticMatrix::uniform(4).unwrap();
        assert_eq!(ConstraintBasis::new(&m).unwrap().total_dim(), 12);
        // three structural zeros in a 3×3 chain
        let z = StochasticMatrix::from_dense_fn(3, |i, j| if i == j { 0.0 } else { 0.5 }).unwrap();
        assert_eq!(ConstraintBasis::new(&z).unwrap().total_dim(), 9 - (3 + 3));
        let perm = StochasticMatrix::from_dense_fn(3, |i, j| (i == (j + 1) % 3) as u8 as f64).unwrap();
        assert!(matches!(ConstraintBasis::new(&perm), Err(Error::EmptyFeasibleSet)));
    }

    #[test]
    fn assemble_is_an_isometry_and_projection_inverts_it() {
        let m = sample_matrix();
        let e = ConstraintBasis::new(&m).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for basis in [e.clone(), e.randomized(&mut rng)] {
            let alpha = [0.3, -1.2, 0.7];
            let p = basis.assemble(&alpha).unwrap();
            let norm: f64 = alpha.iter().map(|a| a * a).sum::<f64>().sqrt();
            assert_abs_diff_eq!(p.frobenius_norm(), norm, epsilon = 1e-14);
            assert!(p.respects(&m.support()));
            let back = basis.project(p.entries());
            for (a, b) in alpha.iter().zip(back) {
                assert_abs_diff_eq!(*a, b, epsilon = 1e-14);
            }
        }
        assert!(e.assemble(&[1.0]).is_err());
    }

    #[test]
    fn positive_case_rank_one_assembly() {
        // α = h ⊗ y gives m = B y hᵀ
        let m = StochasticMatrix::uniform(3).unwrap();
        let e = ConstraintBasis::new(&m).unwrap();
        let h = [0.2, 0.3, 0.5];
        let y = [0.4, -0.9];
        let alpha: Vec<f64> = h.iter().flat_map(|&hj| y.iter().map(move |&yk| hj * yk)).collect();
        let p = e.assemble(&alpha).unwrap();
        let by = nullspace_apply(&y);
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(p.get(i, j), by[i] * h[j], epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn gram_identities() {
        let m = sample_matrix();
        let e = ConstraintBasis::new(&m).unwrap();
        let support = m.support();
        let h = [0.5, 0.25, 0.25];
        let x = [1.0, -2.0, 0.5];
        let ggt = e.weighted_apply(&h, &e.weighted_adjoint(&h, &x));
        let direct = weighted_projector_apply(&support, &h, &x);
        let dense = weighted_projector_dense(&support, &h);
        for i in 0..3 {
            assert_abs_diff_eq!(ggt[i], direct[i], epsilon = 1e-15);
            let di: f64 = (0..3).map(|k| dense[(i, k)] * x[k]).sum();
            assert_abs_diff_eq!(di, direct[i], epsilon = 1e-15);
        }
        // centred outer product applied to h reproduces the same vector
        let c = centered_outer(&support, &h, &x);
        for (a, b) in c.mul_vec(&h).iter().zip(&direct) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
    }
}
