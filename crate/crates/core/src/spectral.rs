//! The second eigenvalue of a stochastic matrix and its eigenvectors.
//!
//! `λ₂` is the eigenvalue of largest modulus strictly inside the unit circle.
//! Right and left eigenvectors are normalized by `r*r = 1` and `l*r = 1`,
//! where `l*M = λ₂ l*`, i.e. `Mᵀl = conj(λ₂) l`.

use faer::Mat;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{gaussian_matrix, orthonormalize};
use crate::markov::StochasticMatrix;
use crate::response::Perturbation;
use crate::sparse::SparseMatrix;
use crate::stationary::stationary_distribution;

/// Largest state count for which the full dense eigendecomposition is used.
pub const DENSE_EIGEN_CAP: usize = 500;
/// `|λ₂| − |λ₃|` must exceed this for the pair to be well defined.
pub const GAP_TOL: f64 = 1e-9;
/// Residual tolerance of the eigenvector equations.
pub const EIGEN_RESIDUAL_TOL: f64 = 1e-9;
const ZERO_TOL: f64 = 1e-13;
const REAL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Serialize)]
pub struct SpectralPair {
    #[serde(skip)]
    pub lambda: Complex64,
    #[serde(skip)]
    pub right: Vec<Complex64>,
    #[serde(skip)]
    pub left: Vec<Complex64>,
    /// Modulus of the next eigenvalue after `λ₂` and its conjugate.
    pub next_modulus: f64,
    pub gap_ok: bool,
}

impl SpectralPair {
    pub fn modulus(&self) -> f64 {
        self.lambda.norm()
    }

    pub fn n(&self) -> usize {
        self.right.len()
    }

    /// First-order change of `λ₂` along `m`: `l* m r`.
    pub fn derivative(&self, m: &Perturbation) -> Complex64 {
        m.entries()
            .iter()
            .map(|(i, j, v)| self.left[i].conj() * self.right[j] * v)
            .sum()
    }

    /// `max(‖Mr − λr‖, ‖Mᵀl − conj(λ) l‖ / ‖l‖)`.
    pub fn residual(&self, a: &SparseMatrix) -> f64 {
        let mr = complex_mul(a, &self.right, false);
        let ml = complex_mul(a, &self.left, true);
        let rr: f64 = mr.iter().zip(&self.right).map(|(x, r)| (x - self.lambda * r).norm_sqr()).sum::<f64>().sqrt();
        let ln: f64 = self.left.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        let rl: f64 = ml.iter().zip(&self.left).map(|(x, l)| (x - self.lambda.conj() * l).norm_sqr()).sum::<f64>().sqrt();
        rr.max(rl / ln)
    }
}

fn complex_mul(a: &SparseMatrix, x: &[Complex64], transpose: bool) -> Vec<Complex64> {
    let re: Vec<f64> = x.iter().map(|z| z.re).collect();
    let im: Vec<f64> = x.iter().map(|z| z.im).collect();
    let (yr, yi) = if transpose {
        (a.mul_transpose_vec(&re), a.mul_transpose_vec(&im))
    } else {
        (a.mul_vec(&re), a.mul_vec(&im))
    };
    yr.into_iter().zip(yi).map(|(r, i)| Complex64::new(r, i)).collect()
}

/// Second eigenpair of a mixing chain; fails when `|λ₂|` is not separated.
pub fn second_eigenpair(m: &StochasticMatrix) -> Result<SpectralPair> {
    let h = stationary_distribution(m)?;
    let pair = second_eigenpair_of(m.matrix(), &h)?;
    if !pair.gap_ok {
        return Err(Error::SpectralGapAmbiguous { modulus: pair.modulus() });
    }
    Ok(pair)
}

/// Second eigenpair of any matrix with unit column sums and fixed vector `h`,
/// reporting rather than rejecting a missing spectral gap.
pub fn second_eigenpair_of(a: &SparseMatrix, h: &[f64]) -> Result<SpectralPair> {
    if a.n() < 2 {
        return Err(Error::DimensionTooSmall(a.n()));
    }
    if a.n() <= DENSE_EIGEN_CAP {
        dense_pair(a)
    } else {
        iterative_pair(a, h, &IterativeOptions::default())
    }
}

fn dense_eigen(a: &Mat<f64>) -> Result<(Vec<Complex64>, Mat<Complex64>)> {
    let evd = a.eigen().map_err(|e| Error::Backend(format!("{e:?}")))?;
    let s = evd.S();
    let values = (0..a.nrows()).map(|k| s[k]).collect();
    Ok((values, evd.U().to_owned()))
}

/// Picks `λ₂` (with `Im ≥ 0`) and `|λ₃|` from a spectrum, skipping the
/// eigenvalue closest to 1. Returns the index of `λ₂`.
fn choose_second(values: &[Complex64]) -> Result<(usize, f64)> {
    let one = Complex64::new(1.0, 0.0);
    let perron = (0..values.len())
        .min_by(|&a, &b| (values[a] - one).norm().total_cmp(&(values[b] - one).norm()))
        .unwrap();
    let mut rest: Vec<usize> = (0..values.len()).filter(|&k| k != perron).collect();
    rest.sort_by(|&a, &b| values[b].norm().total_cmp(&values[a].norm()).then(values[b].im.total_cmp(&values[a].im)));
    let mut second = rest[0];
    let lambda = values[second];
    if lambda.norm() < ZERO_TOL {
        return Err(Error::ZeroLambda2);
    }
    let is_real = lambda.im.abs() <= REAL_TOL * lambda.norm().max(1.0);
    let mut skip = vec![second];
    if !is_real {
        // the conjugate partner is the remaining value closest to conj(λ₂)
        let partner = rest[1..]
            .iter()
            .copied()
            .min_by(|&a, &b| (values[a] - lambda.conj()).norm().total_cmp(&(values[b] - lambda.conj()).norm()))
            .unwrap();
        if lambda.im < 0.0 {
            second = partner;
        }
        skip.push(partner);
        skip.push(rest[0]);
    }
    let next = rest
        .iter()
        .find(|k| !skip.contains(k))
        .map(|&k| values[k].norm())
        .unwrap_or(0.0);
    Ok((second, next))
}

fn normalize_pair(lambda: Complex64, mut r: Vec<Complex64>, mut l: Vec<Complex64>, next_modulus: f64) -> Result<SpectralPair> {
    let is_real = lambda.im.abs() <= REAL_TOL * lambda.norm().max(1.0);
    let lambda = if is_real { Complex64::new(lambda.re, 0.0) } else { lambda };
    let rn: f64 = r.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let k = (0..r.len()).max_by(|&a, &b| r[a].norm().total_cmp(&r[b].norm())).unwrap();
    // make the largest entry of r real and positive
    let phase = r[k].conj() / r[k].norm();
    r.iter_mut().for_each(|z| *z = *z * phase / rn);
    let ln: f64 = l.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    l.iter_mut().for_each(|z| *z /= ln);
    let s: Complex64 = l.iter().zip(&r).map(|(a, b)| a.conj() * b).sum();
    if s.norm() < 1e-8 {
        return Err(Error::DefectiveEigenvalue(s.norm()));
    }
    let scale = s.conj().inv();
    l.iter_mut().for_each(|z| *z *= scale);
    if is_real {
        r.iter_mut().for_each(|z| z.im = 0.0);
        // r and l are real up to rounding once r has been rotated to be real
        let lp = l.iter().map(|z| z.re.abs()).fold(0.0, f64::max);
        let li = l.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        if li <= 1e-9 * lp.max(1.0) {
            l.iter_mut().for_each(|z| z.im = 0.0);
        }
    }
    Ok(SpectralPair {
        lambda,
        right: r,
        left: l,
        next_modulus,
        gap_ok: lambda.norm() - next_modulus > GAP_TOL,
    })
}

fn dense_pair(a: &SparseMatrix) -> Result<SpectralPair> {
    let d = a.to_dense();
    let (values, vectors) = dense_eigen(&d)?;
    let (k, next) = choose_second(&values)?;
    let lambda = values[k];
    let r: Vec<Complex64> = (0..d.nrows()).map(|i| vectors[(i, k)]).collect();
    let dt = d.transpose().to_owned();
    let (lvals, lvecs) = dense_eigen(&dt)?;
    let target = lambda.conj();
    let kl = (0..lvals.len())
        .min_by(|&x, &y| (lvals[x] - target).norm().total_cmp(&(lvals[y] - target).norm()))
        .unwrap();
    let l: Vec<Complex64> = (0..d.nrows()).map(|i| lvecs[(i, kl)]).collect();
    let pair = normalize_pair(lambda, r, l, next)?;
    check_residual(a, pair)
}

fn check_residual(a: &SparseMatrix, pair: SpectralPair) -> Result<SpectralPair> {
    let residual = pair.residual(a);
    if !(residual <= EIGEN_RESIDUAL_TOL) {
        return Err(Error::NoConvergence {
            what: "second eigenpair",
            iterations: 0,
            residual,
        });
    }
    Ok(pair)
}

#[derive(Debug, Clone, Copy)]
pub struct IterativeOptions {
    pub block: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for IterativeOptions {
    fn default() -> Self {
        IterativeOptions {
            block: 12,
            tol: 1e-12,
            max_iter: 20_000,
            seed: 0xe16e,
        }
    }
}

/// Second eigenpair by block subspace iteration on the deflated operators
/// `M − h1ᵀ` and `Mᵀ − 1hᵀ`, which remove the eigenvalue 1.
pub fn iterative_pair(a: &SparseMatrix, h: &[f64], opts: &IterativeOptions) -> Result<SpectralPair> {
    let forward = |x: &[f64]| {
        let s: f64 = x.iter().sum();
        let mut y = a.mul_vec(x);
        y.iter_mut().zip(h).for_each(|(v, hi)| *v -= hi * s);
        y
    };
    let backward = |x: &[f64]| {
        let s: f64 = x.iter().zip(h).map(|(a, b)| a * b).sum();
        let mut y = a.mul_transpose_vec(x);
        y.iter_mut().for_each(|v| *v -= s);
        y
    };
    let (values, r) = dominant_ritz(a.n(), forward, None, opts)?;
    let (k, next) = choose_second_deflated(&values)?;
    let lambda = values[k];
    let (_, l) = dominant_ritz(a.n(), backward, Some(lambda.conj()), opts)?;
    let r = r.into_iter().nth(k).unwrap();
    let pair = normalize_pair(lambda, r, l.into_iter().next().unwrap(), next)?;
    check_residual(a, pair)
}

/// Like [`choose_second`] for a spectrum whose eigenvalue 1 was already removed.
fn choose_second_deflated(values: &[Complex64]) -> Result<(usize, f64)> {
    let mut with_one = vec![Complex64::new(1.0, 0.0)];
    with_one.extend_from_slice(values);
    let (k, next) = choose_second(&with_one)?;
    Ok((k - 1, next))
}

/// Ritz values (sorted by decreasing modulus) and vectors of the dominant
/// invariant subspace. With `target`, only the Ritz pair closest to it is
/// checked for convergence and returned first.
fn dominant_ritz(
    n: usize,
    apply: impl Fn(&[f64]) -> Vec<f64>,
    target: Option<Complex64>,
    opts: &IterativeOptions,
) -> Result<(Vec<Complex64>, Vec<Vec<Complex64>>)> {
    let p = opts.block.min(n);
    let mut x = orthonormalize(gaussian_matrix(n, p, opts.seed).as_ref());
    let mut residual = f64::INFINITY;
    for _ in 0..opts.max_iter {
        let mut y = Mat::<f64>::zeros(n, p);
        for k in 0..p {
            let col: Vec<f64> = (0..n).map(|i| x[(i, k)]).collect();
            let out = apply(&col);
            for i in 0..n {
                y[(i, k)] = out[i];
            }
        }
        let hm = x.transpose() * &y;
        let (theta, s) = dense_eigen(&hm)?;
        let mut order: Vec<usize> = (0..p).collect();
        match target {
            Some(t) => order.sort_by(|&a, &b| (theta[a] - t).norm().total_cmp(&(theta[b] - t).norm())),
            None => order.sort_by(|&a, &b| theta[b].norm().total_cmp(&theta[a].norm()).then(theta[b].im.total_cmp(&theta[a].im))),
        }
        // converge the leading pair (and its conjugate partner when complex)
        let lead = order[0];
        let ritz = |k: usize| -> (Vec<Complex64>, f64) {
            let v: Vec<Complex64> = (0..n)
                .map(|i| (0..p).map(|c| s[(c, k)] * x[(i, c)]).sum())
                .collect();
            let av: Vec<Complex64> = (0..n)
                .map(|i| (0..p).map(|c| s[(c, k)] * y[(i, c)]).sum())
                .collect();
            let vn: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            let res: f64 = av.iter().zip(&v).map(|(a, b)| (a - theta[k] * b).norm_sqr()).sum::<f64>().sqrt();
            (v, res / vn)
        };
        let (v0, r0) = ritz(lead);
        residual = r0 / theta[lead].norm().max(f64::MIN_POSITIVE);
        if residual <= opts.tol {
            let values: Vec<Complex64> = order.iter().map(|&k| theta[k]).collect();
            let mut vectors = vec![v0];
            vectors.extend(order[1..].iter().map(|&k| ritz(k).0));
            return Ok((values, vectors));
        }
        x = orthonormalize(y.as_ref());
    }
    Err(Error::NoConvergence {
        what: "second eigenpair subspace iteration",
        iterations: opts.max_iter,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    fn random_sparse_chain(n: usize, band: usize, seed: u64) -> StochasticMatrix {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let cols: Vec<Vec<(usize, f64)>> = (0..n)
            .map(|j| {
                let raw: Vec<(usize, f64)> = (0..band).map(|d| ((j * 7 + d) % n, rng.gen_range(0.1..1.0))).collect();
                let s: f64 = raw.iter().map(|e| e.1).sum();
                raw.into_iter().map(|(i, v)| (i, v / s)).collect()
            })
            .collect();
        StochasticMatrix::new(SparseMatrix::from_columns(n, cols)).unwrap()
    }

    #[test]
    fn two_state_closed_form() {
        let m = StochasticMatrix::two_state(0.3, 0.6).unwrap();
        let (m11, m22) = (0.4, 0.7);
        let pair = second_eigenpair(&m).unwrap();
        assert_abs_diff_eq!(pair.lambda.re, m11 + m22 - 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(pair.lambda.im, 0.0);
        let s = 0.5f64.sqrt();
        // r = ±(−1, 1)/√2, fixed here so that the largest entry is positive
        assert_abs_diff_eq!(pair.right[0].re.abs(), s, epsilon = 1e-14);
        assert_abs_diff_eq!(pair.right[0].re, -pair.right[1].re, epsilon = 1e-14);
        let sign = pair.right[1].re.signum();
        let c = 2f64.sqrt() / (m11 + m22 - 2.0);
        assert_abs_diff_eq!(pair.left[0].re, sign * c * (1.0 - m11), epsilon = 1e-12);
        assert_abs_diff_eq!(pair.left[1].re, sign * c * (m22 - 1.0), epsilon = 1e-12);
    }

    #[test]
    fn uniform_matrix_has_zero_second_eigenvalue() {
        let m = StochasticMatrix::uniform(4).unwrap();
        assert!(matches!(second_eigenpair(&m), Err(Error::ZeroLambda2) | Err(Error::SpectralGapAmbiguous { .. })));
    }

    #[test]
    fn complex_pair_uses_upper_half_plane() {
        // mostly a 3-cycle, so λ₂ is complex
        let m = StochasticMatrix::from_dense_fn(3, |i, j| 0.1 + 0.7 * ((i == (j + 1) % 3) as u8 as f64)).unwrap();
        let pair = second_eigenpair(&m).unwrap();
        assert!(pair.lambda.im > 0.0);
        assert!(pair.residual(m.matrix()) < 1e-12);
        let lr: Complex64 = pair.left.iter().zip(&pair.right).map(|(a, b)| a.conj() * b).sum();
        assert_abs_diff_eq!(lr.re, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(lr.im, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn iterative_matches_dense() {
        let m = random_sparse_chain(120, 6, 5);
        let h = stationary_distribution(&m).unwrap();
        let d = dense_pair(m.matrix()).unwrap();
        let it = iterative_pair(m.matrix(), &h, &IterativeOptions::default()).unwrap();
        assert_abs_diff_eq!(d.lambda.re, it.lambda.re, epsilon = 1e-10);
        assert_abs_diff_eq!(d.lambda.im, it.lambda.im, epsilon = 1e-10);
        for i in 0..120 {
            assert!((d.right[i] - it.right[i]).norm() < 1e-8);
            assert!((d.left[i] - it.left[i]).norm() < 1e-7 * d.left.iter().map(|z| z.norm()).fold(0.0, f64::max));
        }
    }
}
