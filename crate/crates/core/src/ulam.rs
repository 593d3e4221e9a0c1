//! Ulam discretization of noisy one-dimensional maps.
//!
//! A point `y` is sent to `T(y)` and then spread uniformly over the ball
//! `B_ε(T(y))`: wrapped around on the circle, or cut to `[0, 1]` and
//! renormalized on the interval. With cells `I_i = [i/n, (i+1)/n)`,
//! `M_ij` is the average over `y ∈ I_j` of the fraction of the ball lying in
//! `I_i`; that fraction is computed exactly and only the average over `y` is
//! approximated by a midpoint rule.
//!
//! Scalings between vectors and functions on `[0, 1]`: a probability vector
//! `h` is the density `n·h`, so `‖·‖²_{L²} = n‖h‖²`; an observable sampled at
//! cell midpoints is rescaled to `‖c‖₂ = √n`, i.e. `∫c² = 1`; a matrix
//! perturbation `m` is the kernel perturbation `n·m`, whose Hilbert–Schmidt
//! norm equals `‖m‖_F`.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::markov::StochasticMatrix;
use crate::sparse::SparseMatrix;

/// Default noise radius.
pub const DEFAULT_NOISE: f64 = 0.1;
/// Default number of midpoint samples per cell.
pub const DEFAULT_SAMPLES: usize = 32;
/// Largest tolerated column-sum deviation before renormalization.
pub const QUADRATURE_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Domain {
    Circle,
    Interval,
}

#[derive(Clone)]
pub enum MapKind {
    /// `2x + x(1−x)/2 mod 1`
    Lanford,
    /// `4x(1−x)`
    Logistic,
    /// The Lanford map conjugated onto each half circle:
    /// `x ↦ (T(2x) mod 1)/2` on `[0, ½]` and `½ + (T(2x − 1) mod 1)/2` above.
    DoubleLanford,
    /// `T(2x) mod ½` on `[0, ½]` and `½ + (T(2x − 1) mod ½)` above, with the
    /// unreduced Lanford branch `T`; the halves are folded rather than rescaled.
    FoldedDoubleLanford,
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for MapKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MapKind::Lanford => "Lanford",
            MapKind::Logistic => "Logistic",
            MapKind::DoubleLanford => "DoubleLanford",
            MapKind::FoldedDoubleLanford => "FoldedDoubleLanford",
            MapKind::Custom(_) => "Custom",
        })
    }
}

#[derive(Debug, Clone)]
pub struct MapSpec {
    pub kind: MapKind,
    pub domain: Domain,
}

fn lanford_raw(x: f64) -> f64 {
    2.0 * x + 0.5 * x * (1.0 - x)
}

impl MapSpec {
    pub fn lanford() -> Self {
        MapSpec { kind: MapKind::Lanford, domain: Domain::Circle }
    }

    pub fn logistic() -> Self {
        MapSpec { kind: MapKind::Logistic, domain: Domain::Interval }
    }

    pub fn double_lanford() -> Self {
        MapSpec { kind: MapKind::DoubleLanford, domain: Domain::Circle }
    }

    pub fn folded_double_lanford() -> Self {
        MapSpec { kind: MapKind::FoldedDoubleLanford, domain: Domain::Circle }
    }

    pub fn custom(f: impl Fn(f64) -> f64 + Send + Sync + 'static, domain: Domain) -> Self {
        MapSpec { kind: MapKind::Custom(Arc::new(f)), domain }
    }

    /// Looks up a built-in map by its [`MapSpec::name`].
    pub fn by_name(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().replace('_', "-").as_str() {
            "lanford" => Some(MapSpec::lanford()),
            "logistic" => Some(MapSpec::logistic()),
            "double-lanford" => Some(MapSpec::double_lanford()),
            "folded-double-lanford" => Some(MapSpec::folded_double_lanford()),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            MapKind::Lanford => "lanford",
            MapKind::Logistic => "logistic",
            MapKind::DoubleLanford => "double-lanford",
            MapKind::FoldedDoubleLanford => "folded-double-lanford",
            MapKind::Custom(_) => "custom",
        }
    }

    /// Deterministic image of `x ∈ [0, 1]`, reduced mod 1 on the circle.
    pub fn map_point(&self, x: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::OutOfDomain(x));
        }
        let y = match &self.kind {
            MapKind::Lanford => lanford_raw(x),
            MapKind::Logistic => 4.0 * x * (1.0 - x),
            MapKind::DoubleLanford => {
                if x <= 0.5 {
                    lanford_raw(2.0 * x).rem_euclid(1.0) / 2.0
                } else {
                    lanford_raw(2.0 * x - 1.0).rem_euclid(1.0) / 2.0 + 0.5
                }
            }
            MapKind::FoldedDoubleLanford => {
                if x <= 0.5 {
                    lanford_raw(2.0 * x).rem_euclid(0.5)
                } else {
                    lanford_raw(2.0 * (x - 0.5)).rem_euclid(0.5) + 0.5
                }
            }
            MapKind::Custom(f) => f(x),
        };
        match self.domain {
            Domain::Circle => Ok(y.rem_euclid(1.0)),
            Domain::Interval if (0.0..=1.0).contains(&y) => Ok(y),
            Domain::Interval => Err(Error::OutOfDomain(y)),
        }
    }
}

/// How noise reaching past the ends of the interval is handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    /// Wrap around (circle).
    Wrap,
    /// Drop the part of the ball outside `[0, 1]` and renormalize.
    #[default]
    Truncate,
    /// Move the mass outside `[0, 1]` onto the nearest endpoint.
    Clip,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseKernel {
    /// Radius `ε` of the uniform noise.
    pub epsilon: f64,
    pub boundary: Boundary,
}

impl NoiseKernel {
    /// Uniform noise of radius `epsilon` with the natural boundary of `domain`.
    pub fn uniform(epsilon: f64, domain: Domain) -> Self {
        let boundary = match domain {
            Domain::Circle => Boundary::Wrap,
            Domain::Interval => Boundary::Truncate,
        };
        NoiseKernel { epsilon, boundary }
    }

    /// Adds `weight · ℓ(I_i ∩ ball) / ℓ(ball)` to `out[i]` for every cell.
    pub fn spread(&self, x: f64, n: usize, weight: f64, out: &mut [f64]) {
        let e = self.epsilon;
        let (a, b) = (x - e, x + e);
        match self.boundary {
            Boundary::Wrap => {
                let w = weight / (2.0 * e);
                // the ball [a, b] has length < 1, so it meets at most two periods
                let shift = a.floor();
                let (a, b) = (a - shift, b - shift);
                if b <= 1.0 {
                    add_overlaps(a, b, n, w, out);
                } else {
                    add_overlaps(a, 1.0, n, w, out);
                    add_overlaps(0.0, b - 1.0, n, w, out);
                }
            }
            Boundary::Truncate => {
                let (lo, hi) = (a.max(0.0), b.min(1.0));
                add_overlaps(lo, hi, n, weight / (hi - lo), out);
            }
            Boundary::Clip => {
                let w = weight / (2.0 * e);
                add_overlaps(a.max(0.0), b.min(1.0), n, w, out);
                if a < 0.0 {
                    out[0] += w * -a;
                }
                if b > 1.0 {
                    out[n - 1] += w * (b - 1.0);
                }
            }
        }
    }
}

/// Adds `w · ℓ(I_i ∩ [a, b])` to `out[i]` for `0 ≤ a ≤ b ≤ 1`.
fn add_overlaps(a: f64, b: f64, n: usize, w: f64, out: &mut [f64]) {
    if b <= a {
        return;
    }
    let nf = n as f64;
    let first = ((a * nf).floor() as usize).min(n - 1);
    let last = (((b * nf).ceil() as usize).max(1) - 1).min(n - 1);
    for (i, slot) in out.iter_mut().enumerate().take(last + 1).skip(first) {
        let lo = a.max(i as f64 / nf);
        let hi = b.min((i + 1) as f64 / nf);
        // slivers at the rounding level are artifacts of the cell arithmetic
        if hi - lo > 1e-14 / nf {
            *slot += w * (hi - lo);
        }
    }
}

#[derive(Debug, Clone)]
pub struct UlamModel {
    pub map: MapSpec,
    pub noise: NoiseKernel,
    pub n: usize,
    pub samples: usize,
    pub matrix: StochasticMatrix,
    /// Largest `|Σ_i M_ij − 1|` before the columns were renormalized.
    pub max_column_deviation: f64,
}

impl UlamModel {
    pub fn cell_width(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn midpoints(&self) -> Vec<f64> {
        midpoints(self.n)
    }
}

pub fn midpoints(n: usize) -> Vec<f64> {
    (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect()
}

pub fn build_ulam(map: &MapSpec, noise: &NoiseKernel, n: usize) -> Result<UlamModel> {
    build_ulam_with(map, noise, n, DEFAULT_SAMPLES)
}

pub fn build_ulam_with(map: &MapSpec, noise: &NoiseKernel, n: usize, samples: usize) -> Result<UlamModel> {
    if n < 2 {
        return Err(Error::DimensionTooSmall(n));
    }
    if !(noise.epsilon > 0.0 && noise.epsilon < 0.5) {
        return Err(Error::InvalidMatrix(format!("noise radius {} must lie in (0, 1/2)", noise.epsilon)));
    }
    if samples == 0 {
        return Err(Error::InvalidMatrix("at least one quadrature sample per cell is required".into()));
    }
    let nf = n as f64;
    let weight = 1.0 / samples as f64;
    let columns: Vec<(Vec<(usize, f64)>, f64)> = (0..n)
        .into_par_iter()
        .map(|j| -> Result<_> {
            let mut acc = vec![0.0; n];
            for s in 0..samples {
                let y = (j as f64 + (s as f64 + 0.5) / samples as f64) / nf;
                noise.spread(map.map_point(y)?, n, weight, &mut acc);
            }
            let total: f64 = acc.iter().sum();
            let deviation = (total - 1.0).abs();
            if !(deviation <= QUADRATURE_TOL) {
                return Err(Error::QuadratureFailure { column: j, deviation });
            }
            let col = acc
                .into_iter()
                .enumerate()
                .filter(|&(_, v)| v > 0.0)
                .map(|(i, v)| (i, v / total))
                .collect();
            Ok((col, deviation))
        })
        .collect::<Result<_>>()?;
    let max_column_deviation = columns.iter().map(|c| c.1).fold(0.0, f64::max);
    let matrix = SparseMatrix::from_columns(n, columns.into_iter().map(|c| c.0).collect());
    Ok(UlamModel {
        map: map.clone(),
        noise: *noise,
        n,
        samples,
        matrix: StochasticMatrix::new(matrix)?,
        max_column_deviation,
    })
}

/// Coefficients `n·v` of the piecewise-constant function represented by `v`.
pub fn density_from_vector(v: &[f64]) -> Vec<f64> {
    let n = v.len() as f64;
    v.iter().map(|x| x * n).collect()
}

pub fn vector_from_density(f: &[f64]) -> Vec<f64> {
    let n = f.len() as f64;
    f.iter().map(|x| x / n).collect()
}

/// `‖n·v‖²_{L²} = n‖v‖²`.
pub fn l2_norm_sq(v: &[f64]) -> f64 {
    v.len() as f64 * v.iter().map(|x| x * x).sum::<f64>()
}

/// Samples `f` at cell midpoints and rescales so that `‖c‖₂ = √n`.
pub fn observable_from_function(f: impl Fn(f64) -> f64, n: usize) -> Result<Vec<f64>> {
    let raw: Vec<f64> = midpoints(n).into_iter().map(f).collect();
    let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 0.0) {
        return Err(Error::ZeroGradient);
    }
    let s = (n as f64).sqrt() / norm;
    Ok(raw.into_iter().map(|x| x * s).collect())
}

pub fn two_sin_pi_x(x: f64) -> f64 {
    2.0 * (std::f64::consts::PI * x).sin()
}

/// Kernel cell values `δk̄ = n·m` of a matrix perturbation.
pub fn perturbation_kernel_scaling(m: &SparseMatrix) -> SparseMatrix {
    m.scaled(m.n() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn map_values() {
        assert_eq!(MapSpec::lanford().map_point(0.0).unwrap(), 0.0);
        assert_eq!(MapSpec::logistic().map_point(0.5).unwrap(), 1.0);
        // T(1/2) = 9/8
        assert_abs_diff_eq!(MapSpec::folded_double_lanford().map_point(0.25).unwrap(), 0.125, epsilon = 1e-15);
        assert_abs_diff_eq!(MapSpec::folded_double_lanford().map_point(0.75).unwrap(), 0.625, epsilon = 1e-15);
        assert_abs_diff_eq!(MapSpec::double_lanford().map_point(0.25).unwrap(), 0.0625, epsilon = 1e-15);
        assert_abs_diff_eq!(MapSpec::double_lanford().map_point(0.75).unwrap(), 0.5625, epsilon = 1e-15);
        // each half is invariant without noise
        for k in 0..=100 {
            let x = k as f64 / 100.0;
            let y = MapSpec::double_lanford().map_point(x).unwrap();
            assert_eq!(x <= 0.5, y < 0.5 || (x == 0.5 && y == 0.5), "x = {x}, y = {y}");
        }
        assert!(matches!(MapSpec::lanford().map_point(1.5), Err(Error::OutOfDomain(_))));
        assert!(MapSpec::logistic().map_point(f64::NAN).is_err());
    }

    #[test]
    fn identity_on_circle_gives_exact_band() {
        let n = 100;
        let model = build_ulam(&MapSpec::custom(|x| x, Domain::Circle), &NoiseKernel::uniform(0.1, Domain::Circle), n).unwrap();
        let m = &model.matrix;
        // a cell-sized source spread over 20 cells: triangular edges on the
        // two cells at distance 10 and full weight 1/20 inside
        for j in [0, 37, 99] {
            for d in -12i64..=12 {
                let i = (j as i64 + d).rem_euclid(n as i64) as usize;
                let expect = match d.abs() {
                    0..=9 => 0.05,
                    10 => 0.025,
                    _ => 0.0,
                };
                assert_abs_diff_eq!(m.get(i, j), expect, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn kernel_mass_is_one() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let n = 37;
        for boundary in [Boundary::Wrap, Boundary::Truncate, Boundary::Clip] {
            let k = NoiseKernel { epsilon: 0.1, boundary };
            for _ in 0..1000 {
                let mut out = vec![0.0; n];
                k.spread(rng.gen_range(0.0..1.0), n, 1.0, &mut out);
                assert_abs_diff_eq!(out.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
                assert!(out.iter().all(|&v| v >= 0.0));
            }
        }
        // a ball centred at 0.02 keeps only [0, 0.12]
        let mut out = vec![0.0; 50];
        NoiseKernel { epsilon: 0.1, boundary: Boundary::Truncate }.spread(0.02, 50, 1.0, &mut out);
        assert_abs_diff_eq!(out[0], 0.02 / 0.12, epsilon = 1e-12);
        assert_eq!(out[6], 0.0);
    }

    #[test]
    fn scalings() {
        let n = 10;
        let u = vec![0.1; n];
        assert!(density_from_vector(&u).iter().all(|&x| (x - 1.0).abs() < 1e-15));
        assert_abs_diff_eq!(l2_norm_sq(&u), 1.0, epsilon = 1e-14);
        let c = observable_from_function(two_sin_pi_x, n).unwrap();
        assert_abs_diff_eq!(c.iter().map(|x| x * x).sum::<f64>(), n as f64, epsilon = 1e-12);
        let m = SparseMatrix::from_fn(n, |i, j| if i == j { 0.3 } else if i == (j + 1) % n { -0.3 } else { 0.0 });
        let unit = m.scaled(1.0 / m.frobenius_norm());
        let k = perturbation_kernel_scaling(&unit);
        assert_abs_diff_eq!(k.frobenius_norm(), 10.0, epsilon = 1e-12);
        // Σ ℓ(I_i)ℓ(I_j) δk̄² = 1
        assert_abs_diff_eq!(k.frobenius_norm().powi(2) / (n * n) as f64, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn maps_produce_mixing_matrices() {
        for map in [MapSpec::lanford(), MapSpec::logistic(), MapSpec::double_lanford(), MapSpec::folded_double_lanford()] {
            let noise = NoiseKernel::uniform(DEFAULT_NOISE, map.domain);
            let model = build_ulam(&map, &noise, 60).unwrap();
            assert!(model.max_column_deviation < 1e-12);
            assert!(model.matrix.is_mixing());
        }
    }
}
