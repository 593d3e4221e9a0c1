//! Perturbations maximizing the response of an observable's expectation.
//!
//! The response of `cᵀh` along `m` is `cᵀZ⁻¹mh = wᵀmh` with `Zᵀw = c`. Over
//! unit-norm admissible `m` it is maximized in closed form by
//! `m_ij ∝ h_j (w_i − mean_{A_j} w)`, and the optimal value is the Frobenius
//! norm of that unnormalized matrix.

use crate::basis::centered_perturbation;
use crate::error::{Error, Result};
use crate::linalg::{dot, max_abs};
use crate::markov::StochasticMatrix;
use crate::response::{Perturbation, ResponseSolver};

/// Observables whose spread is below this (relative) are treated as constant.
pub const CONSTANT_TOL: f64 = 1e-14;

#[derive(Debug, Clone)]
pub struct ExpectationOptimum {
    pub perturbation: Perturbation,
    pub response: Vec<f64>,
    pub stationary: Vec<f64>,
    /// `w = Z⁻ᵀc`
    pub weights: Vec<f64>,
    /// `cᵀu₁`
    pub objective: f64,
    /// Multiplier of the norm constraint in `w_i h_j − ϱ_j − 2ν m_ij = 0`.
    pub nu: f64,
    /// Column multipliers `ϱ_j = h_j mean_{A_j} w` (zero on inactive columns).
    pub column_multipliers: Vec<f64>,
}

/// Whether `c` is a multiple of the all-ones vector.
pub fn is_constant(c: &[f64]) -> bool {
    let (lo, hi) = c
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    hi - lo <= CONSTANT_TOL * max_abs(c).max(1.0)
}

/// `w` solving `(Id − M + h1ᵀ)ᵀ w = c`.
pub fn adjoint_weights(m: &StochasticMatrix, h: &[f64], c: &[f64]) -> Result<Vec<f64>> {
    if c.len() != m.n() {
        return Err(Error::DimensionMismatch {
            expected: m.n(),
            found: c.len(),
        });
    }
    let solver = ResponseSolver::with_stationary(m.matrix().clone(), h.to_vec())?;
    Ok(solver.solve_transpose(c))
}

pub fn optimize_expectation(m: &StochasticMatrix, c: &[f64]) -> Result<ExpectationOptimum> {
    let solver = ResponseSolver::new(m)?;
    optimize_expectation_with_solver(m, &solver, c)
}

pub fn optimize_expectation_with_solver(m: &StochasticMatrix, solver: &ResponseSolver, c: &[f64]) -> Result<ExpectationOptimum> {
    let n = m.n();
    if c.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: c.len() });
    }
    if is_constant(c) {
        return Err(Error::ConstantObservable);
    }
    let support = m.support();
    if support.feasible_dim() == 0 {
        return Err(Error::EmptyFeasibleSet);
    }
    let h = solver.stationary().to_vec();
    let w = solver.solve_transpose(c);
    let raw = centered_perturbation(&support, &h, &w);
    let norm = raw.frobenius_norm();
    if !(norm > 0.0) {
        return Err(Error::ZeroGradient);
    }
    let perturbation = Perturbation::new(raw.scaled(1.0 / norm))?;
    let response = solver.response(&perturbation)?;
    let objective = dot(c, &response);
    let column_multipliers = (0..n)
        .map(|j| {
            let rows = support.rows(j);
            if rows.len() < 2 {
                0.0
            } else {
                h[j] * rows.iter().map(|&i| w[i]).sum::<f64>() / rows.len() as f64
            }
        })
        .collect();
    Ok(ExpectationOptimum {
        perturbation,
        response,
        stationary: h,
        weights: w,
        objective,
        nu: norm / 2.0,
        column_multipliers,
    })
}

/// Largest `|w_i h_j − ϱ_j − 2ν m_ij|` over admissible entries of active columns.
pub fn stationarity_residual(m: &StochasticMatrix, opt: &ExpectationOptimum) -> f64 {
    let support = m.support();
    let mut worst = 0.0_f64;
    for j in 0..m.n() {
        let rows = support.rows(j);
        if rows.len() < 2 {
            continue;
        }
        for &i in rows {
            let r = opt.weights[i] * opt.stationary[j]
                - opt.column_multipliers[j]
                - 2.0 * opt.nu * opt.perturbation.get(i, j);
            worst = worst.max(r.abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stationary::stationary_distribution;
    use approx::assert_abs_diff_eq;

    #[test]
    fn uniform_matrix_weights_equal_observable() {
        let m = StochasticMatrix::uniform(4).unwrap();
        let c = [1.0, -0.5, 2.0, 0.25];
        let w = adjoint_weights(&m, &[0.25; 4], &c).unwrap();
        for (a, b) in w.iter().zip(&c) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
        let ones = adjoint_weights(&m, &[0.25; 4], &[3.0; 4]).unwrap();
        assert!(ones.iter().all(|&x| (x - 3.0).abs() < 1e-14));
    }

    #[test]
    fn two_state_closed_form() {
        let (m12, m21) = (0.3, 0.6);
        let m = StochasticMatrix::two_state(m12, m21).unwrap();
        let c = [1.0, 3.0];
        let opt = optimize_expectation(&m, &c).unwrap();
        let s = 1.0 / (2.0 * (m12 * m12 + m21 * m21)).sqrt();
        // w1 − w2 has the sign of c1 − c2, which is negative here
        let expect = [[-m12 * s, -m21 * s], [m12 * s, m21 * s]];
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(opt.perturbation.get(i, j), expect[i][j], epsilon = 1e-12);
            }
        }
        let value = (m12 * m12 + m21 * m21).sqrt() / (2f64.sqrt() * (m12 + m21).powi(2)) * 2.0;
        assert_abs_diff_eq!(opt.objective, value, epsilon = 1e-12);
        assert!(stationarity_residual(&m, &opt) < 1e-12);
    }

    #[test]
    fn weights_satisfy_adjoint_system() {
        let m = StochasticMatrix::from_dense_fn(4, |i, j| [[0.1, 0.4, 0.3, 0.25], [0.2, 0.1, 0.3, 0.25], [0.3, 0.2, 0.2, 0.25], [0.4, 0.3, 0.2, 0.25]][i][j]).unwrap();
        let h = stationary_distribution(&m).unwrap();
        let c = [0.3, -1.0, 2.0, 0.7];
        let w = adjoint_weights(&m, &h, &c).unwrap();
        for j in 0..4 {
            let zj: f64 = (0..4).map(|i| w[i] * (((i == j) as u8 as f64) - m.get(i, j) + h[i])).sum();
            assert_abs_diff_eq!(zj, c[j], epsilon = 1e-12);
        }
    }

    #[test]
    fn degenerate_inputs() {
        let m = StochasticMatrix::uniform(3).unwrap();
        assert!(matches!(optimize_expectation(&m, &[2.0; 3]), Err(Error::ConstantObservable)));
        let perm = StochasticMatrix::from_dense_fn(2, |i, j| (i != j) as u8 as f64).unwrap();
        assert!(optimize_expectation(&perm, &[1.0, 0.0]).is_err());
    }
}
