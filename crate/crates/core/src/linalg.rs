//! Small dense helpers on top of faer and slice-based vector arithmetic.

use faer::{Mat, MatRef, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn sum(a: &[f64]) -> f64 {
    a.iter().sum()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// `a + s b`
pub fn add_scaled(a: &[f64], b: &[f64], s: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + s * y).collect()
}

pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| s * x).collect()
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn column_to_vec(a: MatRef<'_, f64>, j: usize) -> Vec<f64> {
    (0..a.nrows()).map(|i| a[(i, j)]).collect()
}

pub fn vec_to_column(v: &[f64]) -> Mat<f64> {
    Mat::from_fn(v.len(), 1, |i, _| v[i])
}

/// Orthonormal basis for the column span of `a` (thin Q factor).
pub fn orthonormalize(a: MatRef<'_, f64>) -> Mat<f64> {
    a.qr().compute_thin_Q()
}

/// Matrix of i.i.d. standard normal entries from a seeded generator.
pub fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> Mat<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Mat::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Uniformly distributed random orthogonal `k × k` matrix.
pub fn random_orthogonal<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Mat<f64> {
    let g = Mat::from_fn(k, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.compute_thin_Q();
    // fix the sign ambiguity of QR so the distribution is Haar
    let r = qr.thin_R();
    for j in 0..k {
        if r[(j, j)] < 0.0 {
            for i in 0..k {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

/// Leading eigenpairs of a symmetric positive semidefinite matrix, largest first.
pub fn top_symmetric_eigenpairs(c: MatRef<'_, f64>, count: usize) -> Result<(Vec<f64>, Mat<f64>)> {
    let n = c.nrows();
    let sym = Mat::from_fn(n, n, |i, j| 0.5 * (c[(i, j)] + c[(j, i)]));
    let evd = sym
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Backend(format!("{e:?}")))?;
    let count = count.min(n);
    let s = evd.S();
    let u = evd.U();
    let values = (0..count).map(|k| s[n - 1 - k].max(0.0)).collect();
    let vectors = Mat::from_fn(n, count, |i, k| u[(i, n - 1 - k)]);
    Ok((values, vectors))
}

/// Settings for block subspace iteration on a symmetric positive semidefinite operator.
#[derive(Debug, Clone, Copy)]
pub struct SubspaceOptions {
    pub block: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for SubspaceOptions {
    fn default() -> Self {
        SubspaceOptions {
            block: 6,
            tol: 1e-11,
            max_iter: 10_000,
            seed: 0x5eed,
        }
    }
}

/// Leading `count` eigenpairs of the symmetric PSD operator `apply` on `Rⁿ`
/// by block subspace iteration with Rayleigh–Ritz extraction.
pub fn subspace_eigenpairs(
    n: usize,
    count: usize,
    apply: impl Fn(MatRef<'_, f64>) -> Mat<f64>,
    opts: SubspaceOptions,
) -> Result<(Vec<f64>, Mat<f64>)> {
    let p = opts.block.max(count + 2).min(n);
    let mut x = orthonormalize(gaussian_matrix(n, p, opts.seed).as_ref());
    let mut previous = vec![f64::INFINITY; count];
    let mut residual = f64::INFINITY;
    for _ in 0..opts.max_iter {
        let y = apply(x.as_ref());
        let h = x.transpose() * &y;
        let (theta, s) = top_symmetric_eigenpairs(h.as_ref(), p)?;
        let ritz = &x * &s;
        let ay = &y * &s;
        residual = 0.0_f64;
        for k in 0..count {
            let scale = theta[0].max(f64::MIN_POSITIVE);
            let r: f64 = (0..n)
                .map(|i| (ay[(i, k)] - theta[k] * ritz[(i, k)]).powi(2))
                .sum::<f64>()
                .sqrt();
            residual = residual.max(r / scale);
        }
        let settled = (0..count).all(|k| (theta[k] - previous[k]).abs() <= opts.tol * theta[0].max(f64::MIN_POSITIVE));
        if settled && residual <= opts.tol.sqrt() * 1e-2 {
            let vectors = Mat::from_fn(n, count, |i, k| ritz[(i, k)]);
            return Ok((theta[..count].to_vec(), vectors));
        }
        previous.copy_from_slice(&theta[..count]);
        // rotate onto Ritz vectors so the leading directions stay ordered
        x = orthonormalize((&y * &s).as_ref());
    }
    Err(Error::NoConvergence {
        what: "subspace iteration",
        iterations: opts.max_iter,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_orthogonal_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = random_orthogonal(5, &mut rng);
        let g = q.transpose() * &q;
        for i in 0..5 {
            for j in 0..5 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((g[(i, j)] - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn subspace_iteration_matches_dense_eigensolver() {
        let n = 40;
        let a = gaussian_matrix(n, n, 11);
        let c = &a * a.transpose();
        let (dense, _) = top_symmetric_eigenpairs(c.as_ref(), 2).unwrap();
        let (iter, v) = subspace_eigenpairs(n, 2, |x| &c * x, SubspaceOptions::default()).unwrap();
        for k in 0..2 {
            assert!((dense[k] - iter[k]).abs() < 1e-9 * dense[0]);
        }
        let cv = &c * &v;
        for i in 0..n {
            assert!((cv[(i, 0)] - iter[0] * v[(i, 0)]).abs() < 1e-6 * dense[0]);
        }
    }
}
