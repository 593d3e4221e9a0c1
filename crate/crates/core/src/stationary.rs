//! Invariant probability vectors of stochastic (and column-sum-one) matrices.

use faer::prelude::*;
use faer::Mat;

use crate::error::{Error, Result};
use crate::linalg::{max_abs, norm2, sub};
use crate::markov::StochasticMatrix;
use crate::sparse::SparseMatrix;

/// Largest state count solved densely; larger chains use power iteration.
pub const DENSE_STATIONARY_CAP: usize = 500;
/// Power iteration stops once `‖Mh − h‖₂` falls below this.
pub const POWER_TOL: f64 = 1e-13;
pub const POWER_MAX_ITER: usize = 1_000_000;

/// Invariant probability vector `h` of a mixing chain: `Mh = h`, `1ᵀh = 1`.
pub fn stationary_distribution(m: &StochasticMatrix) -> Result<Vec<f64>> {
    m.require_mixing()?;
    let h = fixed_vector(m.matrix())?;
    if let Some(&bad) = h.iter().find(|&&v| !(v > 0.0)) {
        return Err(Error::NoConvergence {
            what: "stationary distribution",
            iterations: 0,
            residual: bad.abs(),
        });
    }
    Ok(h)
}

/// Normalized fixed vector (`Ah = h`, `1ᵀh = 1`) of a matrix whose columns sum to one.
///
/// Entries need not be nonnegative, which makes this usable on `M + εm`
/// for any `ε`, feasible or not.
pub fn fixed_vector(a: &SparseMatrix) -> Result<Vec<f64>> {
    if a.n() <= DENSE_STATIONARY_CAP {
        dense_fixed_vector(a)
    } else {
        power_fixed_vector(a, POWER_TOL, POWER_MAX_ITER)
    }
}

/// Solves `(Id − A)h = 0, 1ᵀh = 1` with the last equation of the singular system
/// replaced by the normalization.
pub fn dense_fixed_vector(a: &SparseMatrix) -> Result<Vec<f64>> {
    let n = a.n();
    let mut z = Mat::<f64>::identity(n, n);
    for (i, j, v) in a.iter() {
        z[(i, j)] -= v;
    }
    for j in 0..n {
        z[(n - 1, j)] = 1.0;
    }
    let mut rhs = Mat::<f64>::zeros(n, 1);
    rhs[(n - 1, 0)] = 1.0;
    let x = z.partial_piv_lu().solve(&rhs);
    let h: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonMixing);
    }
    let residual = norm2(&sub(&a.mul_vec(&h), &h));
    if residual > 1e-10 * max_abs(&h).max(1.0) {
        return Err(Error::NonMixing);
    }
    Ok(h)
}

/// Power iteration `h ← Ah / 1ᵀAh` from the uniform vector.
pub fn power_fixed_vector(a: &SparseMatrix, tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = a.n();
    let mut h = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        a.mul_vec_into(&h, &mut next);
        let s: f64 = next.iter().sum();
        if !(s.abs() > 0.0) || !s.is_finite() {
            return Err(Error::NonMixing);
        }
        next.iter_mut().for_each(|v| *v /= s);
        residual = h
            .iter()
            .zip(&next)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        std::mem::swap(&mut h, &mut next);
        if residual < tol {
            return Ok(h);
        }
    }
    Err(Error::NoConvergence {
        what: "stationary power iteration",
        iterations: max_iter,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn two_state_closed_form() {
        let m = StochasticMatrix::two_state(0.3, 0.6).unwrap();
        let h = stationary_distribution(&m).unwrap();
        assert_abs_diff_eq!(h[0], 1.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(h[1], 2.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn uniform_matrix_has_uniform_vector() {
        for n in [1, 3, 7] {
            let h = stationary_distribution(&StochasticMatrix::uniform(n).unwrap()).unwrap();
            for v in h {
                assert_abs_diff_eq!(v, 1.0 / n as f64, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn identity_is_rejected() {
        let id = StochasticMatrix::from_dense_fn(4, |i, j| (i == j) as u8 as f64).unwrap();
        assert_eq!(stationary_distribution(&id), Err(Error::NonMixing));
    }

    #[test]
    fn power_and_dense_agree() {
        // lazy random walk on a ring
        let n = 30;
        let m = SparseMatrix::from_fn(n, |i, j| {
            if i == j {
                0.5
            } else if i == (j + 1) % n {
                0.3 + 0.1 * ((j % 3) as f64) / 3.0
            } else if (i + 1) % n == j {
                0.2 - 0.1 * ((j % 3) as f64) / 3.0
            } else {
                0.0
            }
        });
        let d = dense_fixed_vector(&m).unwrap();
        let p = power_fixed_vector(&m, 1e-15, 1_000_000).unwrap();
        for (x, y) in d.iter().zip(&p) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
        assert!(norm2(&sub(&m.mul_vec(&d), &d)) < 1e-12);
    }
}
