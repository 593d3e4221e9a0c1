//! Column-stochastic transition matrices and their perturbation support.

use std::collections::VecDeque;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

/// Column sums must equal one to within this tolerance.
pub const COLUMN_SUM_TOL: f64 = 1e-12;
/// Entries at or below this value are structural zeros for perturbation purposes.
pub const DEFAULT_ZERO_THRESHOLD: f64 = 1e-7;
/// Entries within this distance of one are structural ones.
pub const ONE_TOL: f64 = 1e-12;

/// Validated column-stochastic matrix `M`, acting on probability column vectors.
#[derive(Debug, Clone)]
pub struct StochasticMatrix {
    matrix: SparseMatrix,
    zero_threshold: f64,
    mixing: OnceLock<bool>,
}

impl StochasticMatrix {
    pub fn new(matrix: SparseMatrix) -> Result<Self> {
        Self::with_threshold(matrix, DEFAULT_ZERO_THRESHOLD)
    }

    pub fn with_threshold(matrix: SparseMatrix, zero_threshold: f64) -> Result<Self> {
        let n = matrix.n();
        if n == 0 {
            return Err(Error::InvalidMatrix("empty matrix".into()));
        }
        if !(zero_threshold >= 0.0) {
            return Err(Error::InvalidMatrix("zero threshold must be non-negative".into()));
        }
        for (i, j, v) in matrix.iter() {
            if !(0.0..=1.0 + ONE_TOL).contains(&v) {
                return Err(Error::InvalidMatrix(format!(
                    "entry ({i}, {j}) = {v} outside [0, 1]"
                )));
            }
        }
        for (j, s) in matrix.column_sums().into_iter().enumerate() {
            if (s - 1.0).abs() > COLUMN_SUM_TOL {
                return Err(Error::InvalidMatrix(format!(
                    "column {j} sums to {s:.17}, not 1"
                )));
            }
        }
        Ok(StochasticMatrix {
            matrix,
            zero_threshold,
            mixing: OnceLock::new(),
        })
    }

    pub fn from_dense_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        Self::new(SparseMatrix::from_fn(n, f))
    }

    /// `(1/n) 1 1ᵀ`
    pub fn uniform(n: usize) -> Result<Self> {
        Self::from_dense_fn(n, |_, _| 1.0 / n as f64)
    }

    /// The 2×2 chain with off-diagonal entries `M12` and `M21`.
    pub fn two_state(m12: f64, m21: f64) -> Result<Self> {
        let a = [[1.0 - m21, m12], [m21, 1.0 - m12]];
        Self::from_dense_fn(2, |i, j| a[i][j])
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.matrix.n()
    }

    #[inline]
    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    pub fn zero_threshold(&self) -> f64 {
        self.zero_threshold
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix.get(i, j)
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.matrix.nnz() == self.n() * self.n() && self.matrix.values().iter().all(|&v| v > 0.0)
    }

    /// Whether some power of `M` is entrywise positive.
    ///
    /// Decided on the sparsity graph: the chain is mixing iff the graph is
    /// strongly connected and the gcd of its cycle lengths is one.
    pub fn is_mixing(&self) -> bool {
        *self.mixing.get_or_init(|| is_primitive(&self.matrix))
    }

    pub fn require_mixing(&self) -> Result<()> {
        if self.is_mixing() {
            Ok(())
        } else {
            Err(Error::NonMixing)
        }
    }

    /// Admissible perturbation positions derived from this matrix.
    pub fn support(&self) -> Support {
        Support::of(&self.matrix, self.zero_threshold)
    }
}

fn is_primitive(m: &SparseMatrix) -> bool {
    let n = m.n();
    if n == 1 {
        return m.get(0, 0) > 0.0;
    }
    // edge j -> i whenever M_ij > 0
    let forward: Vec<Vec<usize>> = (0..n)
        .map(|j| {
            let (rows, vals) = m.column(j);
            rows.iter()
                .zip(vals)
                .filter(|(_, &v)| v > 0.0)
                .map(|(&i, _)| i)
                .collect()
        })
        .collect();
    let mut backward: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (j, targets) in forward.iter().enumerate() {
        for &i in targets {
            backward[i].push(j);
        }
    }
    let levels = bfs_levels(&forward, 0);
    if levels.iter().any(|l| l.is_none()) {
        return false;
    }
    if bfs_levels(&backward, 0).iter().any(|l| l.is_none()) {
        return false;
    }
    let mut period = 0usize;
    for (u, targets) in forward.iter().enumerate() {
        let lu = levels[u].unwrap() as i64;
        for &v in targets {
            let lv = levels[v].unwrap() as i64;
            period = gcd(period, (lu + 1 - lv).unsigned_abs() as usize);
            if period == 1 {
                return true;
            }
        }
    }
    period == 1
}

fn bfs_levels(adj: &[Vec<usize>], start: usize) -> Vec<Option<usize>> {
    let mut level = vec![None; adj.len()];
    level[start] = Some(0);
    let mut queue = VecDeque::from([start]);
    while let Some(u) = queue.pop_front() {
        let next = level[u].unwrap() + 1;
        for &v in &adj[u] {
            if level[v].is_none() {
                level[v] = Some(next);
                queue.push_back(v);
            }
        }
    }
    level
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// For each column `j`, the rows `i` where `m_ij` may be nonzero, i.e. where
/// `M_ij` is neither a structural zero nor a structural one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Support {
    n: usize,
    rows: Vec<Vec<usize>>,
}

impl Support {
    pub fn of(m: &SparseMatrix, zero_threshold: f64) -> Self {
        let rows = (0..m.n())
            .map(|j| {
                let (ri, vals) = m.column(j);
                ri.iter()
                    .zip(vals)
                    .filter(|(_, &v)| v > zero_threshold && v < 1.0 - ONE_TOL)
                    .map(|(&i, _)| i)
                    .collect()
            })
            .collect();
        Support { n: m.n(), rows }
    }

    /// Every position admissible.
    pub fn full(n: usize) -> Self {
        Support {
            n,
            rows: vec![(0..n).collect(); n],
        }
    }

    pub fn from_rows(n: usize, rows: Vec<Vec<usize>>) -> Result<Self> {
        if rows.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: rows.len(),
            });
        }
        let mut rows = rows;
        for r in rows.iter_mut() {
            r.sort_unstable();
            r.dedup();
            if r.last().is_some_and(|&i| i >= n) {
                return Err(Error::InvalidMatrix("support row index out of range".into()));
            }
        }
        Ok(Support { n, rows })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Admissible rows of column `j`, sorted.
    pub fn rows(&self, j: usize) -> &[usize] {
        &self.rows[j]
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.rows[j].binary_search(&i).is_ok()
    }

    /// Total number of admissible positions.
    pub fn len(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Dimension of the space of admissible zero-column-sum perturbations.
    pub fn feasible_dim(&self) -> usize {
        self.rows.iter().map(|r| r.len().saturating_sub(1)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_stochastic_input() {
        let bad = SparseMatrix::from_fn(2, |i, _| if i == 0 { 0.6 } else { 0.5 });
        assert!(matches!(StochasticMatrix::new(bad), Err(Error::InvalidMatrix(_))));
        let neg = SparseMatrix::from_triplets(2, &[(0, 0, 1.5), (1, 0, -0.5), (0, 1, 0.5), (1, 1, 0.5)]).unwrap();
        assert!(StochasticMatrix::new(neg).is_err());
    }

    #[test]
    fn identity_and_permutation_are_not_mixing() {
        let id = StochasticMatrix::from_dense_fn(3, |i, j| (i == j) as u8 as f64).unwrap();
        assert!(!id.is_mixing());
        let cyc = StochasticMatrix::from_dense_fn(3, |i, j| (i == (j + 1) % 3) as u8 as f64).unwrap();
        assert!(!cyc.is_mixing());
        assert_eq!(cyc.require_mixing(), Err(Error::NonMixing));
    }

    #[test]
    fn aperiodic_cycle_with_self_loop_is_mixing() {
        // 3-cycle plus a single self loop at state 0
        let m = StochasticMatrix::from_dense_fn(3, |i, j| match (i, j) {
            (1, 0) => 0.5,
            (0, 0) => 0.5,
            (2, 1) => 1.0,
            (0, 2) => 1.0,
            _ => 0.0,
        })
        .unwrap();
        assert!(m.is_mixing());
        // bipartite two-state flip is periodic
        let flip = StochasticMatrix::two_state(1.0, 1.0).unwrap();
        assert!(!flip.is_mixing());
        assert!(StochasticMatrix::two_state(0.3, 0.6).unwrap().is_mixing());
    }

    #[test]
    fn support_excludes_zeros_and_ones() {
        let m = StochasticMatrix::from_dense_fn(3, |i, j| match (i, j) {
            (_, 0) => 1.0 / 3.0,
            (1, 1) => 0.0,
            (_, 1) => 0.5,
            (2, 2) => 1.0,
            _ => 0.0,
        })
        .unwrap();
        let s = m.support();
        assert_eq!(s.rows(0), &[0, 1, 2]);
        assert_eq!(s.rows(1), &[0, 2]);
        assert!(s.rows(2).is_empty());
        assert_eq!(s.feasible_dim(), 2 + 1);
    }

    #[test]
    fn threshold_marks_tiny_entries_structural() {
        let m = StochasticMatrix::from_dense_fn(2, |i, j| match (i, j) {
            (0, 0) => 1.0 - 1e-9,
            (1, 0) => 1e-9,
            _ => 0.5,
        })
        .unwrap();
        assert_eq!(m.support().rows(0), &[0]);
    }
}
