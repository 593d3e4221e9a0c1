//! Perturbations and the linear response `u₁` of the invariant vector.
//!
//! With `Z = Id − M + h1ᵀ`, the response to `M → M + εm` is the unique
//! solution of `(Id − M)u = mh`, `1ᵀu = 0`, which is `u = Z⁻¹(mh)` because
//! `1ᵀZ = 1ᵀ`. The inverse `Q = Z⁻¹` is the fundamental matrix; it is never
//! formed unless explicitly requested.

use faer::linalg::solvers::PartialPivLu;
use faer::prelude::*;
use faer::{Mat, MatRef};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{max_abs, norm2, sum};
use crate::markov::{StochasticMatrix, Support};
use crate::sparse::SparseMatrix;
use crate::stationary::{fixed_vector, stationary_distribution};

/// Tolerance on the column sums of a perturbation.
pub const PERTURBATION_SUM_TOL: f64 = 1e-12;
/// Largest state count for which `Z` is factorized densely.
pub const DENSE_SOLVE_CAP: usize = 5000;
/// Accepted residual of the response system.
pub const RESPONSE_TOL: f64 = 1e-10;

/// Matrix `m` with zero column sums, the direction of a perturbation `M + εm`.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    entries: SparseMatrix,
}

impl Perturbation {
    pub fn new(entries: SparseMatrix) -> Result<Self> {
        for (j, s) in entries.column_sums().into_iter().enumerate() {
            if s.abs() > PERTURBATION_SUM_TOL {
                return Err(Error::InvalidPerturbation(format!(
                    "column {j} sums to {s:e}, not 0"
                )));
            }
        }
        Ok(Perturbation { entries })
    }

    /// Also checks that `m` vanishes off the admissible support.
    pub fn on_support(entries: SparseMatrix, support: &Support) -> Result<Self> {
        if entries.n() != support.n() {
            return Err(Error::DimensionMismatch {
                expected: support.n(),
                found: entries.n(),
            });
        }
        if let Some((i, j, _)) = entries.iter().find(|&(i, j, _)| !support.contains(i, j)) {
            return Err(Error::InvalidPerturbation(format!(
                "entry ({i}, {j}) lies outside the admissible support"
            )));
        }
        Self::new(entries)
    }

    pub fn zeros(n: usize) -> Self {
        Perturbation {
            entries: SparseMatrix::zeros(n),
        }
    }

    pub fn n(&self) -> usize {
        self.entries.n()
    }

    pub fn entries(&self) -> &SparseMatrix {
        &self.entries
    }

    pub fn into_entries(self) -> SparseMatrix {
        self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries.get(i, j)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.frobenius_norm()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Perturbation {
            entries: self.entries.scaled(factor),
        }
    }

    pub fn negated(&self) -> Self {
        self.scaled(-1.0)
    }

    /// Scaled to unit Frobenius norm; `None` for the zero matrix.
    pub fn normalized(&self) -> Option<Self> {
        let f = self.frobenius_norm();
        (f > 0.0).then(|| self.scaled(1.0 / f))
    }

    pub fn respects(&self, support: &Support) -> bool {
        self.entries.iter().all(|(i, j, _)| support.contains(i, j))
    }

    /// `mh`
    pub fn apply(&self, h: &[f64]) -> Vec<f64> {
        self.entries.mul_vec(h)
    }

    /// Interval `[ε−, ε+]` of magnitudes for which `M + εm` stays entrywise nonnegative.
    pub fn epsilon_range(&self, m: &StochasticMatrix) -> EpsilonRange {
        let mut lower = f64::NEG_INFINITY;
        let mut upper = f64::INFINITY;
        for (i, j, v) in self.entries.iter() {
            let base = m.get(i, j);
            if v < 0.0 {
                upper = upper.min(base / -v);
            } else if v > 0.0 {
                lower = lower.max(-base / v);
            }
        }
        EpsilonRange { lower, upper }
    }

    /// `M + εm` as a plain sparse matrix (columns still sum to one).
    pub fn perturb(&self, m: &StochasticMatrix, epsilon: f64) -> SparseMatrix {
        m.matrix().add_scaled(&self.entries, epsilon)
    }
}

/// Feasible perturbation magnitudes; `lower ≤ 0 ≤ upper`, possibly infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpsilonRange {
    pub lower: f64,
    pub upper: f64,
}

impl EpsilonRange {
    pub fn contains(&self, epsilon: f64) -> bool {
        epsilon >= self.lower && epsilon <= self.upper
    }

    /// Largest `δ` with `±δ` both feasible.
    pub fn symmetric_radius(&self) -> f64 {
        self.upper.min(-self.lower)
    }

    pub fn check(&self, epsilon: f64) -> Result<()> {
        if self.contains(epsilon) {
            Ok(())
        } else {
            Err(Error::InfeasibleEpsilon {
                epsilon,
                lower: self.lower,
                upper: self.upper,
            })
        }
    }
}

enum Backend {
    Dense(PartialPivLu<f64>),
    /// Deflated Neumann series `Σ (M − h1ᵀ)ᵏ`, convergent for mixing `M`.
    Neumann(SparseMatrix),
}

/// Solver for `Zx = b` and `Zᵀx = b`, built once per chain.
pub struct ResponseSolver {
    matrix: SparseMatrix,
    h: Vec<f64>,
    backend: Backend,
}

impl std::fmt::Debug for ResponseSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match self.backend {
            Backend::Dense(_) => "dense",
            Backend::Neumann(_) => "neumann",
        };
        f.debug_struct("ResponseSolver")
            .field("n", &self.h.len())
            .field("backend", &kind)
            .finish()
    }
}

const NEUMANN_TOL: f64 = 1e-15;
const NEUMANN_MAX_ITER: usize = 1_000_000;

impl ResponseSolver {
    /// Computes the stationary vector and factorizes `Z`.
    pub fn new(m: &StochasticMatrix) -> Result<Self> {
        let h = stationary_distribution(m)?;
        Self::with_stationary(m.matrix().clone(), h)
    }

    /// Uses a given fixed vector `h` of `a` (columns of `a` must sum to one).
    pub fn with_stationary(a: SparseMatrix, h: Vec<f64>) -> Result<Self> {
        if a.n() <= DENSE_SOLVE_CAP {
            Self::dense(a, h)
        } else {
            Ok(Self::matrix_free(a, h))
        }
    }

    pub fn dense(a: SparseMatrix, h: Vec<f64>) -> Result<Self> {
        let n = a.n();
        if h.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: h.len(),
            });
        }
        let z = z_matrix(&a, &h);
        let lu = z.partial_piv_lu();
        let solver = ResponseSolver {
            matrix: a,
            h,
            backend: Backend::Dense(lu),
        };
        // a singular Z shows up as a non-finite or inaccurate solve
        let probe: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let x = solver.solve(&probe);
        let residual = solver.z_residual(&x, &probe);
        if !residual.is_finite() || residual > 1e-8 {
            return Err(Error::SingularSystem { residual });
        }
        Ok(solver)
    }

    pub fn matrix_free(a: SparseMatrix, h: Vec<f64>) -> Self {
        ResponseSolver {
            matrix: a.clone(),
            h,
            backend: Backend::Neumann(a),
        }
    }

    pub fn n(&self) -> usize {
        self.h.len()
    }

    /// Stationary vector `h`.
    pub fn stationary(&self) -> &[f64] {
        &self.h
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.backend, Backend::Dense(_))
    }

    /// `Z⁻¹ b`
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        match &self.backend {
            Backend::Dense(lu) => {
                let x = lu.solve(Mat::from_fn(b.len(), 1, |i, _| b[i]));
                (0..b.len()).map(|i| x[(i, 0)]).collect()
            }
            Backend::Neumann(a) => self.neumann(b, |v| a.mul_vec(v), false),
        }
    }

    /// `Z⁻ᵀ b`
    pub fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        match &self.backend {
            Backend::Dense(lu) => {
                let x = lu.solve_transpose(Mat::from_fn(b.len(), 1, |i, _| b[i]));
                (0..b.len()).map(|i| x[(i, 0)]).collect()
            }
            Backend::Neumann(a) => self.neumann(b, |v| a.mul_transpose_vec(v), true),
        }
    }

    /// `Z⁻¹ B` column by column.
    pub fn solve_block(&self, b: MatRef<'_, f64>) -> Mat<f64> {
        match &self.backend {
            Backend::Dense(lu) => lu.solve(b),
            Backend::Neumann(_) => self.columnwise(b, |v| self.solve(v)),
        }
    }

    /// `Z⁻ᵀ B` column by column.
    pub fn solve_transpose_block(&self, b: MatRef<'_, f64>) -> Mat<f64> {
        match &self.backend {
            Backend::Dense(lu) => lu.solve_transpose(b),
            Backend::Neumann(_) => self.columnwise(b, |v| self.solve_transpose(v)),
        }
    }

    fn columnwise(&self, b: MatRef<'_, f64>, f: impl Fn(&[f64]) -> Vec<f64>) -> Mat<f64> {
        let n = b.nrows();
        let mut out = Mat::<f64>::zeros(n, b.ncols());
        for j in 0..b.ncols() {
            let col: Vec<f64> = (0..n).map(|i| b[(i, j)]).collect();
            let x = f(&col);
            for i in 0..n {
                out[(i, j)] = x[i];
            }
        }
        out
    }

    /// `Z⁻¹ = Σₖ (M − h1ᵀ)ᵏ` on the zero-sum part plus `h(1ᵀb)` on the rest, and
    /// the transposed identity for `Z⁻ᵀ`.
    fn neumann(&self, b: &[f64], apply: impl Fn(&[f64]) -> Vec<f64>, transpose: bool) -> Vec<f64> {
        let h = &self.h;
        let deflate = |v: Vec<f64>| -> Vec<f64> {
            if transpose {
                // (Mᵀ − 1hᵀ) v
                let hv: f64 = h.iter().zip(&v).map(|(a, b)| a * b).sum();
                v.into_iter().map(|x| x - hv).collect()
            } else {
                // (M − h1ᵀ) v
                let s: f64 = v.iter().sum();
                v.into_iter().zip(h).map(|(x, hi)| x - hi * s).collect()
            }
        };
        let mut term = b.to_vec();
        let mut total = b.to_vec();
        let scale = max_abs(b).max(f64::MIN_POSITIVE);
        for _ in 0..NEUMANN_MAX_ITER {
            term = deflate(apply(&term));
            total.iter_mut().zip(&term).for_each(|(t, x)| *t += x);
            if max_abs(&term) <= NEUMANN_TOL * scale {
                break;
            }
        }
        total
    }

    /// `‖Zx − b‖∞` relative to `max(1, ‖b‖∞)`.
    fn z_residual(&self, x: &[f64], b: &[f64]) -> f64 {
        let mx = self.matrix.mul_vec(x);
        let s = sum(x);
        let r: f64 = (0..x.len())
            .map(|i| (x[i] - mx[i] + self.h[i] * s - b[i]).abs())
            .fold(0.0, f64::max);
        r / max_abs(b).max(1.0)
    }

    /// Linear response `u₁` to the direction `m`, verified against the
    /// augmented system `(Id − M)u = mh`, `1ᵀu = 0`.
    pub fn response(&self, m: &Perturbation) -> Result<Vec<f64>> {
        if m.n() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                found: m.n(),
            });
        }
        let rhs = m.apply(&self.h);
        let u = self.solve(&rhs);
        let residual = augmented_residual(&self.matrix, &u, &rhs);
        if !(residual <= RESPONSE_TOL) {
            return Err(Error::SingularSystem { residual });
        }
        Ok(u)
    }
}

/// `max(‖(Id − A)u − r‖∞, |1ᵀu|)` relative to `max(1, ‖r‖∞)`.
pub fn augmented_residual(a: &SparseMatrix, u: &[f64], r: &[f64]) -> f64 {
    let au = a.mul_vec(u);
    let eq = (0..u.len())
        .map(|i| (u[i] - au[i] - r[i]).abs())
        .fold(0.0, f64::max);
    eq.max(sum(u).abs()) / max_abs(r).max(1.0)
}

fn z_matrix(a: &SparseMatrix, h: &[f64]) -> Mat<f64> {
    let n = a.n();
    let mut z = Mat::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } + h[i]);
    for (i, j, v) in a.iter() {
        z[(i, j)] -= v;
    }
    z
}

/// Linear response `u₁` of the invariant vector `h` of `M` to the direction `m`.
pub fn linear_response(m: &StochasticMatrix, h: &[f64], p: &Perturbation) -> Result<Vec<f64>> {
    ResponseSolver::with_stationary(m.matrix().clone(), h.to_vec())?.response(p)
}

/// Dense fundamental matrix `Q = (Id − M + h1ᵀ)⁻¹`.
pub fn fundamental_matrix(m: &StochasticMatrix, h: &[f64]) -> Result<Mat<f64>> {
    fundamental_matrix_capped(m, h, DENSE_SOLVE_CAP)
}

pub fn fundamental_matrix_capped(m: &StochasticMatrix, h: &[f64], cap: usize) -> Result<Mat<f64>> {
    let n = m.n();
    if n > cap {
        return Err(Error::TooLarge { n, cap });
    }
    if h.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: h.len(),
        });
    }
    let z = z_matrix(m.matrix(), h);
    Ok(z.partial_piv_lu().solve(Mat::<f64>::identity(n, n)))
}

/// Invariant vector of `M + εm`, refusing infeasible `ε`.
pub fn perturbed_stationary(m: &StochasticMatrix, p: &Perturbation, epsilon: f64) -> Result<Vec<f64>> {
    p.epsilon_range(m).check(epsilon)?;
    if epsilon == 0.0 {
        return stationary_distribution(m);
    }
    perturbed_fixed_vector(m, p, epsilon)
}

/// Normalized fixed vector of `M + εm` without the nonnegativity check.
///
/// Used for linearization diagnostics at magnitudes where a few small
/// entries of `M + εm` turn negative.
pub fn perturbed_fixed_vector(m: &StochasticMatrix, p: &Perturbation, epsilon: f64) -> Result<Vec<f64>> {
    if p.n() != m.n() {
        return Err(Error::DimensionMismatch {
            expected: m.n(),
            found: p.n(),
        });
    }
    fixed_vector(&p.perturb(m, epsilon))
}

/// Smallest entry of `M + εm`.
pub fn perturbed_min_entry(m: &StochasticMatrix, p: &Perturbation, epsilon: f64) -> f64 {
    p.perturb(m, epsilon)
        .values()
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b))
}

/// `‖u‖₂` together with the check `1ᵀu = 0`.
pub fn zero_sum_norm(u: &[f64]) -> (f64, f64) {
    (norm2(u), sum(u))
}
