//! Linear response along a finite sequence of transition matrices.
//!
//! With `h⁽ᵗ⁺¹⁾ = M⁽ᵗ⁾h⁽ᵗ⁾`, perturbing every step by `ε m⁽ᵗ⁾` moves the
//! terminal vector by `ε u⁽τ⁾ + O(ε²)` where `u⁽⁰⁾ = 0` and
//! `u⁽ᵗ⁺¹⁾ = M⁽ᵗ⁾u⁽ᵗ⁾ + m⁽ᵗ⁾h⁽ᵗ⁾`. Writing `Φ_t = M⁽τ⁻¹⁾⋯M⁽ᵗ⁺¹⁾`, the
//! terminal response is `Σ_t Φ_t m⁽ᵗ⁾h⁽ᵗ⁾`.

use faer::Mat;
use rayon::prelude::*;

use crate::basis::{centered_perturbation, weighted_projector_apply};
use crate::error::{Error, Result};
use crate::expectation::is_constant;
use crate::linalg::{column_to_vec, dot, subspace_eigenpairs, top_symmetric_eigenpairs, SubspaceOptions};
use crate::markov::{StochasticMatrix, Support};
use crate::norm::DEGENERACY_GAP;
use crate::response::Perturbation;
use crate::stationary::stationary_distribution;

/// Largest `n` for which the terminal Gram matrix is formed densely.
pub const DENSE_GRAM_CAP: usize = 400;
const PROBABILITY_TOL: f64 = 1e-12;
const SIGN_TOL: f64 = 1e-14;

#[derive(Debug, Clone)]
pub struct MatrixSequence {
    matrices: Vec<StochasticMatrix>,
    h0: Vec<f64>,
}

impl MatrixSequence {
    pub fn new(matrices: Vec<StochasticMatrix>, h0: Vec<f64>) -> Result<Self> {
        let n = h0.len();
        if matrices.is_empty() {
            return Err(Error::InvalidMatrix("sequence is empty".into()));
        }
        for m in &matrices {
            if m.n() != n {
                return Err(Error::DimensionMismatch { expected: n, found: m.n() });
            }
        }
        let total: f64 = h0.iter().sum();
        if h0.iter().any(|&x| !(x >= 0.0)) || (total - 1.0).abs() > PROBABILITY_TOL * n as f64 {
            return Err(Error::InvalidMatrix("initial vector is not a probability vector".into()));
        }
        Ok(MatrixSequence { matrices, h0 })
    }

    /// `tau` copies of `m` started from its stationary vector.
    pub fn constant(m: StochasticMatrix, tau: usize) -> Result<Self> {
        let h = stationary_distribution(&m)?;
        MatrixSequence::new(vec![m; tau], h)
    }

    pub fn n(&self) -> usize {
        self.h0.len()
    }

    pub fn tau(&self) -> usize {
        self.matrices.len()
    }

    pub fn matrices(&self) -> &[StochasticMatrix] {
        &self.matrices
    }

    pub fn h0(&self) -> &[f64] {
        &self.h0
    }

    /// `h⁽⁰⁾, …, h⁽τ⁾`.
    pub fn propagate(&self) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(self.tau() + 1);
        out.push(self.h0.clone());
        for m in &self.matrices {
            let next = m.matrix().mul_vec(out.last().unwrap());
            out.push(next);
        }
        out
    }

    /// `Φ_tᵀ v` for every `t`, newest step first in the sweep.
    fn adjoint_sweep(&self, v: &[f64]) -> Vec<Vec<f64>> {
        let tau = self.tau();
        let mut z = vec![Vec::new(); tau];
        let mut y = v.to_vec();
        for t in (0..tau).rev() {
            if t + 1 < tau {
                y = self.matrices[t + 1].matrix().mul_transpose_vec(&y);
            }
            z[t] = y.clone();
        }
        z
    }

    fn check_perturbations(&self, ms: &PerturbationSequence) -> Result<()> {
        if ms.len() != self.tau() {
            return Err(Error::DimensionMismatch { expected: self.tau(), found: ms.len() });
        }
        for m in &ms.perturbations {
            if m.n() != self.n() {
                return Err(Error::DimensionMismatch { expected: self.n(), found: m.n() });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSequence {
    pub perturbations: Vec<Perturbation>,
}

impl PerturbationSequence {
    pub fn new(perturbations: Vec<Perturbation>) -> Self {
        PerturbationSequence { perturbations }
    }

    pub fn zeros(n: usize, tau: usize) -> Self {
        PerturbationSequence::new(vec![Perturbation::zeros(n); tau])
    }

    pub fn len(&self) -> usize {
        self.perturbations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perturbations.is_empty()
    }

    /// `(Σ_t ‖m⁽ᵗ⁾‖_F²)^{1/2}`
    pub fn joint_norm(&self) -> f64 {
        self.perturbations.iter().map(|m| m.frobenius_norm().powi(2)).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        PerturbationSequence::new(self.perturbations.iter().map(|m| m.scaled(factor)).collect())
    }
}

/// `u⁽⁰⁾, …, u⁽τ⁾` from the recursion.
pub fn response_trajectory(seq: &MatrixSequence, ms: &PerturbationSequence) -> Result<Vec<Vec<f64>>> {
    seq.check_perturbations(ms)?;
    let hs = seq.propagate();
    let mut out = vec![vec![0.0; seq.n()]];
    for (t, m) in seq.matrices.iter().enumerate() {
        let mut u = m.matrix().mul_vec(out.last().unwrap());
        let mh = ms.perturbations[t].apply(&hs[t]);
        u.iter_mut().zip(&mh).for_each(|(a, b)| *a += b);
        out.push(u);
    }
    Ok(out)
}

/// Terminal response `u⁽τ⁾`.
pub fn sequential_response(seq: &MatrixSequence, ms: &PerturbationSequence) -> Result<Vec<f64>> {
    Ok(response_trajectory(seq, ms)?.pop().unwrap())
}

/// `h⁽τ⁾` for the sequence `M⁽ᵗ⁾ + ε m⁽ᵗ⁾`; entries may go negative if `ε`
/// leaves the feasible range.
pub fn perturbed_terminal(seq: &MatrixSequence, ms: &PerturbationSequence, epsilon: f64) -> Result<Vec<f64>> {
    seq.check_perturbations(ms)?;
    let mut h = seq.h0.clone();
    for (m, p) in seq.matrices.iter().zip(&ms.perturbations) {
        let mut next = m.matrix().mul_vec(&h);
        let mh = p.apply(&h);
        next.iter_mut().zip(&mh).for_each(|(a, b)| *a += epsilon * b);
        h = next;
    }
    Ok(h)
}

/// How the per-step signs of the sequential norm optimum are fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SignPolicy {
    /// Each step independently, so that `‖(M⁽ᵗ⁾ + εm⁽ᵗ⁾)h⁽ᵗ⁾‖ > ‖M⁽ᵗ⁾h⁽ᵗ⁾‖`.
    #[default]
    PerStep,
    /// One sign for the whole sequence, so that `‖h⁽τ⁾(ε)‖ > ‖h⁽τ⁾‖`; this
    /// keeps `‖u⁽τ⁾‖² = σ₁²`.
    Joint,
}

#[derive(Debug, Clone)]
pub struct SequentialNormOptimum {
    pub perturbations: PerturbationSequence,
    pub response: Vec<f64>,
    /// `‖u⁽τ⁾‖₂²` after sign selection.
    pub objective: f64,
    /// `σ₁²`, the value before any per-step sign change.
    pub pre_flip_objective: f64,
    pub singular_values: [f64; 2],
    pub unique: bool,
    /// Steps whose block was negated by sign selection.
    pub flipped: Vec<bool>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SequentialOptions {
    pub sign: SignPolicy,
    pub subspace: SubspaceOptions,
}

/// `C v = Σ_t Φ_t D_t Φ_tᵀ v` with `D_t = Σ_j (h⁽ᵗ⁾_j)² P_j`.
fn gram_apply(seq: &MatrixSequence, supports: &[Support], hs: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    let z = seq.adjoint_sweep(v);
    let mut u = vec![0.0; seq.n()];
    for t in 0..seq.tau() {
        if t > 0 {
            u = seq.matrices[t].matrix().mul_vec(&u);
        }
        let d = weighted_projector_apply(&supports[t], &hs[t], &z[t]);
        u.iter_mut().zip(&d).for_each(|(a, b)| *a += b);
    }
    u
}

pub fn optimize_sequential_norm(seq: &MatrixSequence) -> Result<SequentialNormOptimum> {
    optimize_sequential_norm_with(seq, &SequentialOptions::default())
}

pub fn optimize_sequential_norm_with(seq: &MatrixSequence, opts: &SequentialOptions) -> Result<SequentialNormOptimum> {
    let n = seq.n();
    let supports: Vec<Support> = seq.matrices.iter().map(|m| m.support()).collect();
    if supports.iter().all(|s| s.feasible_dim() == 0) {
        return Err(Error::EmptyFeasibleSet);
    }
    let hs = seq.propagate();
    let apply_block = |x: faer::MatRef<'_, f64>| {
        let cols: Vec<Vec<f64>> = (0..x.ncols())
            .into_par_iter()
            .map(|k| gram_apply(seq, &supports, &hs, &column_to_vec(x, k)))
            .collect();
        Mat::from_fn(n, x.ncols(), |i, k| cols[k][i])
    };
    let (values, vectors) = if n <= DENSE_GRAM_CAP {
        let c = apply_block(Mat::<f64>::identity(n, n).as_ref());
        top_symmetric_eigenpairs(c.as_ref(), 2.min(n))?
    } else {
        subspace_eigenpairs(n, 2, apply_block, opts.subspace)?
    };
    let sigma1 = values[0].max(0.0).sqrt();
    let sigma2 = values.get(1).copied().unwrap_or(0.0).max(0.0).sqrt();
    if !(sigma1 > 0.0) {
        return Err(Error::ZeroGradient);
    }
    let v = column_to_vec(vectors.as_ref(), 0);
    let z = seq.adjoint_sweep(&v);
    let mut blocks: Vec<Perturbation> = (0..seq.tau())
        .map(|t| Perturbation::new(centered_perturbation(&supports[t], &hs[t], &z[t]).scaled(1.0 / sigma1)))
        .collect::<Result<_>>()?;
    let mut flipped = vec![false; seq.tau()];
    match opts.sign {
        SignPolicy::PerStep => {
            // ‖h⁽ᵗ⁺¹⁾ ± εmh⁽ᵗ⁾‖² differ by 4ε⟨h⁽ᵗ⁺¹⁾, mh⁽ᵗ⁾⟩ for every ε
            for t in 0..seq.tau() {
                let s = dot(&hs[t + 1], &blocks[t].apply(&hs[t]));
                if s < -SIGN_TOL {
                    blocks[t] = blocks[t].negated();
                    flipped[t] = true;
                }
            }
        }
        SignPolicy::Joint => {
            let ms = PerturbationSequence::new(blocks.clone());
            let u = sequential_response(seq, &ms)?;
            if dot(&hs[seq.tau()], &u) < -SIGN_TOL {
                blocks.iter_mut().for_each(|b| *b = b.negated());
                flipped.iter_mut().for_each(|f| *f = true);
            }
        }
    }
    let perturbations = PerturbationSequence::new(blocks);
    let response = sequential_response(seq, &perturbations)?;
    Ok(SequentialNormOptimum {
        objective: dot(&response, &response),
        response,
        perturbations,
        pre_flip_objective: sigma1 * sigma1,
        singular_values: [sigma1, sigma2],
        unique: sigma1 - sigma2 > DEGENERACY_GAP,
        flipped,
    })
}

#[derive(Debug, Clone)]
pub struct SequentialExpectationOptimum {
    pub perturbations: PerturbationSequence,
    pub response: Vec<f64>,
    /// `cᵀu⁽τ⁾`
    pub objective: f64,
    /// Multiplier of the joint norm constraint.
    pub nu: f64,
    /// `w⁽ᵗ⁾ = Φ_tᵀ c`
    pub weights: Vec<Vec<f64>>,
}

/// Blocks `m⁽ᵗ⁾_ij ∝ h⁽ᵗ⁾_j (w⁽ᵗ⁾_i − mean_{A_j} w⁽ᵗ⁾)` sharing one normalization.
pub fn optimize_sequential_expectation(seq: &MatrixSequence, c: &[f64]) -> Result<SequentialExpectationOptimum> {
    let n = seq.n();
    if c.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: c.len() });
    }
    if is_constant(c) {
        return Err(Error::ConstantObservable);
    }
    let supports: Vec<Support> = seq.matrices.iter().map(|m| m.support()).collect();
    if supports.iter().all(|s| s.feasible_dim() == 0) {
        return Err(Error::EmptyFeasibleSet);
    }
    let hs = seq.propagate();
    let weights = seq.adjoint_sweep(c);
    let raw: Vec<_> = (0..seq.tau())
        .into_par_iter()
        .map(|t| centered_perturbation(&supports[t], &hs[t], &weights[t]))
        .collect();
    let joint = raw.iter().map(|r| r.frobenius_norm().powi(2)).sum::<f64>().sqrt();
    if !(joint > 0.0) {
        return Err(Error::ConstantObservable);
    }
    let perturbations = PerturbationSequence::new(
        raw.into_iter()
            .map(|r| Perturbation::new(r.scaled(1.0 / joint)))
            .collect::<Result<_>>()?,
    );
    let response = sequential_response(seq, &perturbations)?;
    Ok(SequentialExpectationOptimum {
        objective: dot(c, &response),
        response,
        perturbations,
        nu: joint / 2.0,
        weights,
    })
}
