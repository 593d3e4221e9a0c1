use faer::Mat;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use linresp::basis::ConstraintBasis;
use linresp::expectation::{optimize_expectation, stationarity_residual};
use linresp::experiments::perturbed_pair;
use linresp::mixing::optimize_mixing;
use linresp::norm::optimize_norm_positive;
use linresp::response::{fundamental_matrix, linear_response};
use linresp::sequential::{optimize_sequential_norm, response_trajectory, MatrixSequence, PerturbationSequence};
use linresp::stationary::stationary_distribution;
use linresp::ulam::{Boundary, NoiseKernel};
use linresp::{Perturbation, SparseMatrix, StochasticMatrix};

/// Column-normalized matrix from raw weights; zero weights are structural zeros.
fn chain_from(n: usize, raw: &[f64]) -> Option<StochasticMatrix> {
    let sums: Vec<f64> = (0..n).map(|j| (0..n).map(|i| raw[i * n + j]).sum()).collect();
    if sums.contains(&0.0) {
        return None;
    }
    let m = StochasticMatrix::from_dense_fn(n, |i, j| raw[i * n + j] / sums[j]).ok()?;
    m.is_mixing().then_some(m)
}

fn weights(n: usize, zeros: bool) -> impl Strategy<Value = Vec<f64>> {
    let entry = if zeros { prop_oneof![1 => Just(0.0), 3 => 0.05f64..1.0].boxed() } else { (0.05f64..1.0).boxed() };
    proptest::collection::vec(entry, n * n)
}

fn mixing_chain(zeros: bool) -> impl Strategy<Value = StochasticMatrix> {
    (2usize..8)
        .prop_flat_map(move |n| (Just(n), weights(n, zeros)))
        .prop_filter_map("not mixing", |(n, raw)| chain_from(n, &raw))
}

/// A random admissible perturbation of `m`, normalized to unit Frobenius norm.
fn admissible(m: &StochasticMatrix, seed: u64) -> Option<Perturbation> {
    let basis = ConstraintBasis::new(m).ok()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let alpha: Vec<f64> = (0..basis.total_dim()).map(|_| rand::Rng::sample(&mut rng, rand_distr::StandardNormal)).collect();
    basis.assemble(&alpha).ok()?.normalized()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn assembled_perturbations_are_isometric_and_feasible(m in mixing_chain(true), seed: u64, randomize: bool) {
        let basis = ConstraintBasis::new(&m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let basis = if randomize { basis.randomized(&mut rng) } else { basis };
        let alpha: Vec<f64> = (0..basis.total_dim()).map(|_| rand::Rng::sample(&mut rng, rand_distr::StandardNormal)).collect();
        let p = basis.assemble(&alpha).unwrap();
        prop_assert!((p.frobenius_norm() - norm(&alpha)).abs() <= 1e-12 * norm(&alpha).max(1.0));
        prop_assert!(p.respects(&m.support()));
        for s in p.entries().column_sums() {
            prop_assert!(s.abs() < 1e-12);
        }
        // feasible matrices are spanned: assemble ∘ project is the identity on them
        let back = basis.assemble(&basis.project(p.entries())).unwrap();
        let diff = back.entries().add_scaled(p.entries(), -1.0);
        prop_assert!(diff.frobenius_norm() < 1e-12 * p.frobenius_norm().max(1.0));
    }

    #[test]
    fn response_matches_fundamental_matrix(m in mixing_chain(true), seed: u64) {
        let Some(p) = admissible(&m, seed) else { return Ok(()) };
        let h = stationary_distribution(&m).unwrap();
        let u = linear_response(&m, &h, &p).unwrap();
        let q = fundamental_matrix(&m, &h).unwrap();
        let mh = p.apply(&h);
        let n = m.n();
        for i in 0..n {
            let qmh: f64 = (0..n).map(|k| q[(i, k)] * mh[k]).sum();
            prop_assert!((u[i] - qmh).abs() < 1e-8);
        }
        prop_assert!(u.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn positive_norm_optimum_is_rank_one(m in mixing_chain(false)) {
        let opt = optimize_norm_positive(&m).unwrap();
        let n = m.n();
        let dense = Mat::from_fn(n, n, |i, j| opt.perturbation.get(i, j));
        let s = dense.thin_svd().unwrap().S().column_vector().iter().copied().collect::<Vec<f64>>();
        prop_assert!((s[0] - 1.0).abs() < 1e-10);
        if n > 1 {
            prop_assert!(s[1] < 1e-10);
        }
    }

    #[test]
    fn expectation_optimum_is_centred_and_stationary(m in mixing_chain(true), c in proptest::collection::vec(-2.0f64..2.0, 8)) {
        let c = &c[..m.n()];
        prop_assume!(c.iter().any(|x| (x - c[0]).abs() > 1e-3));
        let opt = optimize_expectation(&m, c).unwrap();
        let support = m.support();
        for j in 0..m.n() {
            let s: f64 = support.rows(j).iter().map(|&i| opt.perturbation.get(i, j)).sum();
            prop_assert!(s.abs() < 1e-14);
        }
        prop_assert!(stationarity_residual(&m, &opt) < 1e-10);
        prop_assert!((opt.perturbation.frobenius_norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mixing_optimum_shrinks_lambda2(m in mixing_chain(true)) {
        let Ok(opt) = optimize_mixing(&m) else { return Ok(()) };
        prop_assert!(opt.rate < 0.0);
        let range = opt.epsilon_range;
        let eps = 1e-5;
        prop_assume!(range.contains(eps) && range.contains(-eps));
        let plus = perturbed_pair(&m, &opt.perturbation, eps).unwrap().modulus();
        let minus = perturbed_pair(&m, &opt.perturbation, -eps).unwrap().modulus();
        let base = opt.pair.modulus();
        prop_assert!(plus < base && base < minus, "{plus} {base} {minus}");
    }

    #[test]
    fn sequential_recursion_matches_expanded_sum(
        chains in proptest::collection::vec(weights(4, true), 1..5),
        seed: u64,
    ) {
        let matrices: Vec<_> = chains.iter().filter_map(|raw| chain_from(4, raw)).collect();
        prop_assume!(!matrices.is_empty());
        let tau = matrices.len();
        let h0 = vec![0.1, 0.2, 0.3, 0.4];
        let seq = MatrixSequence::new(matrices.clone(), h0).unwrap();
        let blocks: Vec<_> = matrices
            .iter()
            .enumerate()
            .map(|(t, m)| admissible(m, seed.wrapping_add(t as u64)).unwrap_or_else(|| Perturbation::zeros(4)))
            .collect();
        let ms = PerturbationSequence::new(blocks.clone());
        let traj = response_trajectory(&seq, &ms).unwrap();
        for u in &traj {
            prop_assert!(u.iter().sum::<f64>().abs() < 1e-13);
        }
        // u⁽τ⁾ = Σ_t M⁽τ⁻¹⁾⋯M⁽ᵗ⁺¹⁾ m⁽ᵗ⁾ h⁽ᵗ⁾
        let hs = seq.propagate();
        let mut expanded = [0.0; 4];
        for t in 0..tau {
            let mut x = blocks[t].apply(&hs[t]);
            for m in &matrices[t + 1..] {
                x = m.matrix().mul_vec(&x);
            }
            expanded.iter_mut().zip(&x).for_each(|(a, b)| *a += b);
        }
        let last = traj.last().unwrap();
        for i in 0..4 {
            prop_assert!((last[i] - expanded[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn sequential_budget_is_split_exactly(chains in proptest::collection::vec(weights(5, true), 1..5)) {
        let matrices: Vec<_> = chains.iter().filter_map(|raw| chain_from(5, raw)).collect();
        prop_assume!(!matrices.is_empty());
        let h0 = stationary_distribution(&matrices[0]).unwrap();
        let seq = MatrixSequence::new(matrices, h0).unwrap();
        let opt = optimize_sequential_norm(&seq).unwrap();
        let total: f64 = opt.perturbations.perturbations.iter().map(|m| m.frobenius_norm().powi(2)).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        for m in &opt.perturbations.perturbations {
            prop_assert!(m.frobenius_norm() <= 1.0 + 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn noise_kernel_has_unit_mass(
        y in 0.0f64..1.0,
        eps in 0.005f64..0.45,
        n in 10usize..400,
        boundary in prop_oneof![Just(Boundary::Wrap), Just(Boundary::Truncate), Just(Boundary::Clip)],
    ) {
        let kernel = NoiseKernel { epsilon: eps, boundary };
        let mut out = vec![0.0; n];
        kernel.spread(y, n, 1.0, &mut out);
        prop_assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(out.iter().all(|&x| x >= 0.0));
    }
}

#[test]
fn zero_perturbation_has_zero_response() {
    let m = StochasticMatrix::two_state(0.3, 0.4).unwrap();
    let h = stationary_distribution(&m).unwrap();
    let p = Perturbation::new(SparseMatrix::zeros(2)).unwrap();
    assert_eq!(linear_response(&m, &h, &p).unwrap(), vec![0.0, 0.0]);
}
