//! Perturbations maximizing the Euclidean norm of the linear response.
//!
//! Over unit-norm admissible `m = Eα`, the response is `u₁ = Ũα` with
//! `Ũ = Z⁻¹G` and `Gα = Σ_j h_j B_j α_j`. The optimum is the leading right
//! singular vector of `Ũ` and the optimal value is `σ₁²`.
//!
//! Three interchangeable paths compute it:
//! * explicit: `Ũ` is formed column by column and decomposed (small `n`);
//! * Gram: the `n × n` matrix `ŨŨᵀ = Z⁻¹ D Z⁻ᵀ`, `D = Σ_j h_j² P_j`, is formed
//!   with two blocked solves and its top eigenvector `v` gives
//!   `m ∝ h_j (w_i − mean_{A_j} w)` with `w = Z⁻ᵀv`;
//! * matrix-free: the same operator applied inside subspace iteration.

use faer::Mat;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::basis::{centered_perturbation, nullspace_apply, weighted_projector_apply, weighted_projector_dense, ConstraintBasis};
use crate::error::{Error, Result};
use crate::linalg::{column_to_vec, norm2, subspace_eigenpairs, top_symmetric_eigenpairs, SubspaceOptions};
use crate::markov::StochasticMatrix;
use crate::response::{perturbed_stationary, EpsilonRange, Perturbation, ResponseSolver, DENSE_SOLVE_CAP};
use crate::sparse::SparseMatrix;

/// Largest `n` for which `Ũ` is formed explicitly under [`NormMethod::Auto`].
pub const EXPLICIT_CAP: usize = 60;
/// Top two singular values closer than this flag a non-unique optimum.
pub const DEGENERACY_GAP: f64 = 1e-9;
/// Sign probes differing by less than this are inconclusive.
pub const SIGN_PROBE_TOL: f64 = 1e-14;
/// Upper bound of the default sign probe magnitude.
pub const MAX_PROBE_EPSILON: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormMethod {
    Auto,
    Explicit,
    Gram,
    MatrixFree,
}

/// Orthonormal basis used by the explicit path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisChoice {
    Canonical,
    /// Each block rotated by a random orthogonal matrix from this seed.
    Randomized(u64),
}

#[derive(Debug, Clone, Copy)]
pub struct NormOptions {
    pub method: NormMethod,
    pub basis: BasisChoice,
    /// Sign probe magnitude; `None` uses `min(10⁻³, 0.1·ε₊)`.
    pub probe_epsilon: Option<f64>,
    pub subspace: SubspaceOptions,
}

impl Default for NormOptions {
    fn default() -> Self {
        NormOptions {
            method: NormMethod::Auto,
            basis: BasisChoice::Canonical,
            probe_epsilon: None,
            subspace: SubspaceOptions::default(),
        }
    }
}

/// How the sign of the returned perturbation was fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum SignChoice {
    /// The probe at `epsilon` decided; `flipped` tells whether `−m` won.
    Probed { epsilon: f64, flipped: bool },
    /// Both probes agreed to within the tolerance; the canonical sign is kept.
    Inconclusive { epsilon: f64, difference: f64 },
}

#[derive(Debug, Clone)]
pub struct NormOptimum {
    pub perturbation: Perturbation,
    pub response: Vec<f64>,
    pub stationary: Vec<f64>,
    /// `‖u₁‖₂²`
    pub objective: f64,
    /// Top two singular values of `Ũ` (the second is 0 when `Ũ` has rank one).
    pub singular_values: [f64; 2],
    pub unique: bool,
    pub sign: SignChoice,
    pub epsilon_range: EpsilonRange,
    pub method: NormMethod,
}

/// Algorithm for strictly positive `M`: `X = Z⁻¹B`, `m = B y hᵀ` with `y` the
/// leading right singular vector of `X` scaled to `‖y‖ = 1/‖h‖`.
pub fn optimize_norm_positive(m: &StochasticMatrix) -> Result<NormOptimum> {
    optimize_norm_positive_with(m, None)
}

pub fn optimize_norm_positive_with(m: &StochasticMatrix, probe_epsilon: Option<f64>) -> Result<NormOptimum> {
    if !m.is_strictly_positive() {
        return Err(Error::NotPositive);
    }
    let n = m.n();
    if n < 2 {
        return Err(Error::EmptyFeasibleSet);
    }
    let solver = ResponseSolver::new(m)?;
    let h = solver.stationary().to_vec();
    let hn = norm2(&h);
    let b = crate::basis::ones_nullspace_basis(n)?;
    let x = solver.solve_block(b.as_ref());
    let svd = x.thin_svd().map_err(|e| Error::Backend(format!("{e:?}")))?;
    let s = svd.S();
    let v = svd.V();
    let y: Vec<f64> = (0..n - 1).map(|k| v[(k, 0)] / hn).collect();
    let by = nullspace_apply(&y);
    let entries = SparseMatrix::from_fn(n, |i, j| by[i] * h[j]);
    let sigma = [s[0] * hn, if n > 2 { s[1] * hn } else { 0.0 }];
    finish(m, &solver, Perturbation::new(entries)?, sigma, probe_epsilon, NormMethod::Explicit)
}

/// Algorithm for general mixing `M` with the support constraints.
pub fn optimize_norm_general(m: &StochasticMatrix) -> Result<NormOptimum> {
    optimize_norm_with(m, &NormOptions::default())
}

pub fn optimize_norm_with(m: &StochasticMatrix, opts: &NormOptions) -> Result<NormOptimum> {
    let solver = ResponseSolver::new(m)?;
    optimize_norm_with_solver(m, &solver, opts)
}

/// As [`optimize_norm_with`], reusing a prepared solver for `M`.
pub fn optimize_norm_with_solver(m: &StochasticMatrix, solver: &ResponseSolver, opts: &NormOptions) -> Result<NormOptimum> {
    let n = m.n();
    let basis = ConstraintBasis::new(m)?;
    let method = match opts.method {
        NormMethod::Auto if n <= EXPLICIT_CAP => NormMethod::Explicit,
        NormMethod::Auto if solver.is_dense() && n <= DENSE_SOLVE_CAP => NormMethod::Gram,
        NormMethod::Auto => NormMethod::MatrixFree,
        other => other,
    };
    let (direction, sigma) = match method {
        NormMethod::Explicit => {
            let basis = match opts.basis {
                BasisChoice::Canonical => basis,
                BasisChoice::Randomized(seed) => basis.randomized(&mut ChaCha8Rng::seed_from_u64(seed)),
            };
            explicit_direction(solver, &basis)?
        }
        NormMethod::Gram => gram_direction(m, solver, None)?,
        NormMethod::MatrixFree | NormMethod::Auto => gram_direction(m, solver, Some(opts.subspace))?,
    };
    finish(m, solver, direction, sigma, opts.probe_epsilon, method)
}

fn explicit_direction(solver: &ResponseSolver, basis: &ConstraintBasis) -> Result<(Perturbation, [f64; 2])> {
    let n = solver.n();
    let h = solver.stationary();
    let d = basis.total_dim();
    let mut g = Mat::<f64>::zeros(n, d);
    let mut e = vec![0.0; d];
    for c in 0..d {
        e[c] = 1.0;
        let col = basis.weighted_apply(h, &e);
        e[c] = 0.0;
        for i in 0..n {
            g[(i, c)] = col[i];
        }
    }
    let u = solver.solve_block(g.as_ref());
    let svd = u.thin_svd().map_err(|e| Error::Backend(format!("{e:?}")))?;
    let s = svd.S();
    let v = svd.V();
    let alpha = column_to_vec(v, 0);
    let sigma = [s[0], if s.dim() > 1 { s[1] } else { 0.0 }];
    let p = basis.assemble(&alpha)?;
    Ok((p, sigma))
}

fn gram_direction(m: &StochasticMatrix, solver: &ResponseSolver, iterative: Option<SubspaceOptions>) -> Result<(Perturbation, [f64; 2])> {
    let n = solver.n();
    let h = solver.stationary();
    let support = m.support();
    let (values, vectors) = match iterative {
        None => {
            let d = weighted_projector_dense(&support, h);
            let a = solver.solve_block(d.as_ref());
            let c = solver.solve_block(a.transpose()).transpose().to_owned();
            top_symmetric_eigenpairs(c.as_ref(), 2)?
        }
        Some(opts) => {
            let apply = |x: faer::MatRef<'_, f64>| {
                let w = solver.solve_transpose_block(x);
                let mut dw = Mat::<f64>::zeros(n, w.ncols());
                for k in 0..w.ncols() {
                    let col = weighted_projector_apply(&support, h, &column_to_vec(w.as_ref(), k));
                    for i in 0..n {
                        dw[(i, k)] = col[i];
                    }
                }
                solver.solve_block(dw.as_ref())
            };
            subspace_eigenpairs(n, 2.min(n), apply, opts)?
        }
    };
    let v = column_to_vec(vectors.as_ref(), 0);
    let w = solver.solve_transpose(&v);
    let raw = centered_perturbation(&support, h, &w);
    let f = raw.frobenius_norm();
    if !(f > 0.0) {
        return Err(Error::EmptyFeasibleSet);
    }
    let p = Perturbation::new(raw.scaled(1.0 / f))?;
    let sigma = [values[0].sqrt(), values.get(1).copied().unwrap_or(0.0).sqrt()];
    Ok((p, sigma))
}

fn finish(
    m: &StochasticMatrix,
    solver: &ResponseSolver,
    direction: Perturbation,
    sigma: [f64; 2],
    probe_epsilon: Option<f64>,
    method: NormMethod,
) -> Result<NormOptimum> {
    let direction = canonical_sign(direction);
    let range = direction.epsilon_range(m);
    let probe = probe_epsilon.unwrap_or_else(|| default_probe(&range));
    let (perturbation, sign) = match select_sign(m, &direction, probe) {
        Ok(signed) => {
            let flipped = signed != direction;
            (signed, SignChoice::Probed { epsilon: probe, flipped })
        }
        Err(Error::Inconclusive(difference)) => (direction, SignChoice::Inconclusive { epsilon: probe, difference }),
        Err(e) => return Err(e),
    };
    let response = solver.response(&perturbation)?;
    let objective = response.iter().map(|x| x * x).sum();
    let epsilon_range = perturbation.epsilon_range(m);
    Ok(NormOptimum {
        perturbation,
        response,
        stationary: solver.stationary().to_vec(),
        objective,
        singular_values: sigma,
        unique: sigma[0] - sigma[1] >= DEGENERACY_GAP,
        sign,
        epsilon_range,
        method,
    })
}

/// `min(10⁻³, 0.1·δ)` where `±δ` is the largest symmetric feasible magnitude.
pub fn default_probe(range: &EpsilonRange) -> f64 {
    MAX_PROBE_EPSILON.min(0.1 * range.symmetric_radius())
}

/// Flips `m` so that its first nonzero entry in column-major order is positive.
pub fn canonical_sign(p: Perturbation) -> Perturbation {
    match p.entries().values().iter().find(|v| **v != 0.0) {
        Some(&v) if v < 0.0 => p.negated(),
        _ => p,
    }
}

/// Returns `±m`, whichever gives the invariant vector of `M ± εm` the larger
/// Euclidean norm at `ε = probe_epsilon`.
pub fn select_sign(m: &StochasticMatrix, p: &Perturbation, probe_epsilon: f64) -> Result<Perturbation> {
    let range = p.epsilon_range(m);
    range.check(probe_epsilon)?;
    range.check(-probe_epsilon)?;
    let plus = norm2(&perturbed_stationary(m, p, probe_epsilon)?);
    let minus = norm2(&perturbed_stationary(m, p, -probe_epsilon)?);
    let difference = (plus - minus).abs();
    if !(difference >= SIGN_PROBE_TOL) {
        return Err(Error::Inconclusive(difference));
    }
    Ok(if plus >= minus { p.clone() } else { p.negated() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stationary::stationary_distribution;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn random_chain(n: usize, zeros: usize, seed: u64) -> StochasticMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        loop {
            let mut raw: Vec<f64> = (0..n * n).map(|_| rng.gen_range(0.05..1.0)).collect();
            for _ in 0..zeros {
                let k = rng.gen_range(0..n * n);
                raw[k] = 0.0;
            }
            let col: Vec<f64> = (0..n).map(|j| (0..n).map(|i| raw[j * n + i]).sum()).collect();
            if col.contains(&0.0) {
                continue;
            }
            let m = StochasticMatrix::from_dense_fn(n, |i, j| raw[j * n + i] / col[j]).unwrap();
            if m.is_mixing() {
                return m;
            }
        }
    }

    #[test]
    fn two_state_closed_form() {
        let m = StochasticMatrix::two_state(0.3, 0.6).unwrap();
        let opt = optimize_norm_positive(&m).unwrap();
        let s = 1.0 / 0.9f64.sqrt();
        let expect = [[-0.3 * s, -0.6 * s], [0.3 * s, 0.6 * s]];
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(opt.perturbation.get(i, j), expect[i][j], epsilon = 1e-12);
            }
        }
        assert_abs_diff_eq!(opt.objective, 0.45 / 0.9f64.powi(4), epsilon = 1e-12);
    }

    #[test]
    fn uniform_matrix_objective_is_one_over_n() {
        for n in [2, 3, 6] {
            let m = StochasticMatrix::uniform(n).unwrap();
            let opt = optimize_norm_positive(&m).unwrap();
            assert_abs_diff_eq!(opt.objective, 1.0 / n as f64, epsilon = 1e-12);
            let g = optimize_norm_general(&m).unwrap();
            assert_abs_diff_eq!(g.objective, 1.0 / n as f64, epsilon = 1e-12);
        }
    }

    #[test]
    fn all_paths_agree_on_positive_matrix() {
        let m = random_chain(5, 0, 7);
        let a1 = optimize_norm_positive(&m).unwrap();
        for method in [NormMethod::Explicit, NormMethod::Gram, NormMethod::MatrixFree] {
            let opts = NormOptions { method, ..NormOptions::default() };
            let a2 = optimize_norm_with(&m, &opts).unwrap();
            assert_abs_diff_eq!(a1.objective, a2.objective, epsilon = 1e-10);
            let same: f64 = a1.perturbation.entries().frobenius_dot(a2.perturbation.entries());
            assert_abs_diff_eq!(same.abs(), 1.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn paths_agree_with_structural_zeros() {
        let m = random_chain(6, 8, 21);
        let e = optimize_norm_with(&m, &NormOptions { method: NormMethod::Explicit, ..NormOptions::default() }).unwrap();
        let g = optimize_norm_with(&m, &NormOptions { method: NormMethod::Gram, ..NormOptions::default() }).unwrap();
        assert_abs_diff_eq!(e.objective, g.objective, epsilon = 1e-10);
        assert_abs_diff_eq!(e.singular_values[1], g.singular_values[1], epsilon = 1e-9);
        assert!(g.perturbation.respects(&m.support()));
        assert_abs_diff_eq!(g.perturbation.frobenius_norm(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g.objective, g.singular_values[0].powi(2), epsilon = 1e-10);
    }

    #[test]
    fn positive_solution_has_rank_one() {
        let m = random_chain(5, 0, 3);
        let opt = optimize_norm_positive(&m).unwrap();
        let sv = opt.perturbation.entries().to_dense().singular_values().unwrap();
        assert!(sv[1] < 1e-10);
        assert!(matches!(optimize_norm_positive(&random_chain(4, 3, 5)), Err(Error::NotPositive)));
    }

    #[test]
    fn sign_probe_edge_cases() {
        let m = StochasticMatrix::uniform(3).unwrap();
        assert!(matches!(select_sign(&m, &Perturbation::zeros(3), 1e-3), Err(Error::Inconclusive(_))));
        let m2 = StochasticMatrix::two_state(0.6, 0.3).unwrap();
        let opt = optimize_norm_positive(&m2).unwrap();
        // branch M12 ≥ M21 keeps the positive first column
        assert!(opt.perturbation.get(0, 0) > 0.0);
        let h = stationary_distribution(&m2).unwrap();
        let hp = perturbed_stationary(&m2, &opt.perturbation, 1e-3).unwrap();
        assert!(norm2(&hp) > norm2(&h));
    }
}
