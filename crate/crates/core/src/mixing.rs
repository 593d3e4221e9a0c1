//! Perturbations that most increase the speed of mixing.
//!
//! The rate is governed by `|λ₂|`. Along `m`, `d log|λ₂| = ⟨S, m⟩ / |λ₂|²`
//! with the real sensitivity matrix `S = Re(conj(λ₂) l̄ rᵀ)`, which splits as
//! `S = lr ⊗ p + li ⊗ q` for `p = λr·rr + λi·ri`, `q = λr·ri − λi·rr`.
//! The steepest admissible descent is the negated, column-centered `S`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::markov::{StochasticMatrix, Support};
use crate::response::{EpsilonRange, Perturbation};
use crate::sparse::SparseMatrix;
use crate::spectral::{second_eigenpair, SpectralPair};

/// Rank-two sensitivity `S_ij = lr_i p_j + li_i q_j`.
#[derive(Debug, Clone)]
pub struct SensitivityMatrix {
    pub left_re: Vec<f64>,
    pub left_im: Vec<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl SensitivityMatrix {
    pub fn n(&self) -> usize {
        self.p.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.left_re[i] * self.p[j] + self.left_im[i] * self.q[j]
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n()).map(|i| (0..self.n()).map(|j| self.get(i, j)).collect()).collect()
    }

    /// `⟨S, m⟩` summed over the stored entries of `m`.
    pub fn dot(&self, m: &SparseMatrix) -> f64 {
        m.iter().map(|(i, j, v)| self.get(i, j) * v).sum()
    }

    /// `S` restricted to each column's admissible rows, minus the column mean
    /// over those rows. Columns with fewer than two admissible rows are zero.
    pub fn column_centered(&self, support: &Support) -> SparseMatrix {
        let n = self.n();
        let cols = (0..n)
            .map(|j| {
                let rows = support.rows(j);
                if rows.len() < 2 {
                    return Vec::new();
                }
                let k = rows.len() as f64;
                let mr = rows.iter().map(|&i| self.left_re[i]).sum::<f64>() / k;
                let mi = rows.iter().map(|&i| self.left_im[i]).sum::<f64>() / k;
                rows.iter()
                    .map(|&i| (i, (self.left_re[i] - mr) * self.p[j] + (self.left_im[i] - mi) * self.q[j]))
                    .collect()
            })
            .collect();
        SparseMatrix::from_columns(n, cols)
    }
}

pub fn mixing_sensitivity(pair: &SpectralPair) -> SensitivityMatrix {
    let (lr, li) = (pair.lambda.re, pair.lambda.im);
    SensitivityMatrix {
        left_re: pair.left.iter().map(|z| z.re).collect(),
        left_im: pair.left.iter().map(|z| z.im).collect(),
        p: pair.right.iter().map(|z| lr * z.re + li * z.im).collect(),
        q: pair.right.iter().map(|z| lr * z.im - li * z.re).collect(),
    }
}

/// `d log|λ₂|` along `m`.
pub fn log_modulus_derivative(pair: &SpectralPair, m: &Perturbation) -> f64 {
    let eta = pair.derivative(m);
    (pair.lambda.conj() * eta).re / pair.lambda.norm_sqr()
}

#[derive(Debug, Clone)]
pub struct MixingOptimum {
    pub perturbation: Perturbation,
    pub pair: SpectralPair,
    /// `d log|λ₂|` along the optimum; negative.
    pub rate: f64,
    /// Multiplier of the norm constraint; `−‖m̃‖/2` for the centered `m̃`.
    pub nu: f64,
    /// `l* m r`, the first-order change of `λ₂`.
    pub eta: Complex64,
    pub epsilon_range: EpsilonRange,
}

pub fn optimize_mixing(m: &StochasticMatrix) -> Result<MixingOptimum> {
    let pair = second_eigenpair(m)?;
    optimize_mixing_with_pair(m, pair)
}

pub fn optimize_mixing_with_pair(m: &StochasticMatrix, pair: SpectralPair) -> Result<MixingOptimum> {
    let support = m.support();
    if support.feasible_dim() == 0 {
        return Err(Error::EmptyFeasibleSet);
    }
    let sens = mixing_sensitivity(&pair);
    let centered = sens.column_centered(&support);
    let norm = centered.frobenius_norm();
    if !(norm > 0.0) {
        return Err(Error::ZeroGradient);
    }
    let perturbation = Perturbation::new(centered.scaled(-1.0 / norm))?;
    let rate = log_modulus_derivative(&pair, &perturbation);
    let eta = pair.derivative(&perturbation);
    let epsilon_range = perturbation.epsilon_range(m);
    Ok(MixingOptimum {
        perturbation,
        pair,
        rate,
        nu: -norm / 2.0,
        eta,
        epsilon_range,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stationary::fixed_vector;
    use crate::spectral::second_eigenpair_of;
    use approx::assert_abs_diff_eq;

    fn three_state() -> StochasticMatrix {
        StochasticMatrix::from_dense_fn(3, |i, j| [[0.5, 0.2, 0.3], [0.3, 0.6, 0.1], [0.2, 0.2, 0.6]][i][j]).unwrap()
    }

    fn cyclic() -> StochasticMatrix {
        StochasticMatrix::from_dense_fn(3, |i, j| 0.1 + 0.7 * ((i == (j + 1) % 3) as u8 as f64)).unwrap()
    }

    fn log_modulus(a: &SparseMatrix) -> f64 {
        let h = fixed_vector(a).unwrap();
        second_eigenpair_of(a, &h).unwrap().modulus().ln()
    }

    #[test]
    fn two_state_closed_form() {
        for (m12, m21) in [(0.3, 0.6), (0.1, 0.2), (0.8, 0.9)] {
            let m = StochasticMatrix::two_state(m12, m21).unwrap();
            let lambda = 1.0 - m12 - m21;
            let opt = optimize_mixing(&m).unwrap();
            // λ₂ moves by ±1 along ½[[1,−1],[−1,1]]; the optimum shrinks |λ₂|
            let s = lambda.signum();
            let expect = [[-0.5 * s, 0.5 * s], [0.5 * s, -0.5 * s]];
            for i in 0..2 {
                for j in 0..2 {
                    assert_abs_diff_eq!(opt.perturbation.get(i, j), expect[i][j], epsilon = 1e-12);
                }
            }
            assert_abs_diff_eq!(opt.rate, -1.0 / lambda.abs(), epsilon = 1e-10);
            assert_abs_diff_eq!(opt.eta.re, -s, epsilon = 1e-12);
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        for m in [three_state(), cyclic()] {
            let opt = optimize_mixing(&m).unwrap();
            let eps = 1e-6;
            let up = opt.perturbation.perturb(&m, eps);
            let down = opt.perturbation.perturb(&m, -eps);
            let fd = (log_modulus(&up) - log_modulus(&down)) / (2.0 * eps);
            assert_abs_diff_eq!(fd, opt.rate, epsilon = 1e-7);
            let sens = mixing_sensitivity(&opt.pair);
            let via_s = sens.dot(opt.perturbation.entries()) / opt.pair.lambda.norm_sqr();
            assert_abs_diff_eq!(via_s, opt.rate, epsilon = 1e-12);
        }
    }

    #[test]
    fn optimum_beats_random_directions() {
        use rand::{Rng, SeedableRng};
        let m = cyclic();
        let opt = optimize_mixing(&m).unwrap();
        let support = m.support();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let w: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let h = vec![1.0; 3];
            let raw = crate::basis::centered_perturbation(&support, &h, &w);
            let p = Perturbation::new(raw.scaled(1.0 / raw.frobenius_norm())).unwrap();
            assert!(log_modulus_derivative(&opt.pair, &p) >= opt.rate - 1e-12);
        }
        assert_abs_diff_eq!(opt.nu * 2.0 / opt.pair.modulus().powi(2), opt.rate, epsilon = 1e-12);
    }
}
