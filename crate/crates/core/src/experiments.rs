//! Reference experiments on Ulam models of noisy maps.
//!
//! Each experiment builds the model, finds the optimal perturbation `m*`, and
//! for every `ε` in the sweep compares the perturbed model `M ± εm*` with the
//! first-order prediction. The sweeps work on any chain; the reference
//! experiments report function-space units (see [`crate::ulam`]).

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expectation::{optimize_expectation_with_solver, ExpectationOptimum};
use crate::linalg::dot;
use crate::markov::StochasticMatrix;
use crate::mixing::{optimize_mixing_with_pair, MixingOptimum};
use crate::norm::{optimize_norm_with_solver, NormOptimum, NormOptions};
use crate::response::{perturbed_fixed_vector, Perturbation, ResponseSolver};
use crate::spectral::{second_eigenpair_of, SpectralPair};
use crate::ulam::{build_ulam, l2_norm_sq, observable_from_function, two_sin_pi_x, MapSpec, NoiseKernel, UlamModel, DEFAULT_NOISE};

/// The partition sizes and perturbation magnitudes of the reference tables.
pub const TABLE_SIZES: [usize; 3] = [1500, 1750, 2000];
pub const TABLE_EPSILONS: [f64; 2] = [1e-2, 1e-3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    /// `‖u₁‖²_{L²}`
    Norm,
    /// `⟨c, u₁⟩` for `c(x) = 2 sin πx`
    Expectation,
    /// `d Re log λ₂`
    Mixing,
}

impl Objective {
    /// Column headers of [`TableRow`] values for this objective.
    pub fn headers(&self) -> [&'static str; 7] {
        match self {
            Objective::Norm => [
                "n",
                "norm_u1_sq",
                "epsilon",
                "linearization_error_sq",
                "norm_h_minus_sq",
                "norm_h_sq",
                "norm_h_plus_sq",
            ],
            Objective::Expectation => [
                "n",
                "c_dot_u1",
                "epsilon",
                "linearization_error",
                "c_dot_h_minus",
                "c_dot_h",
                "c_dot_h_plus",
            ],
            Objective::Mixing => [
                "n",
                "rho",
                "epsilon",
                "linearization_error",
                "abs_lambda2_minus",
                "abs_lambda2",
                "abs_lambda2_plus",
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Experiment {
    pub table: u8,
    pub objective: Objective,
    pub map_name: &'static str,
}

impl Experiment {
    pub fn table(number: u8) -> Result<Experiment> {
        let (objective, map_name) = match number {
            1 => (Objective::Norm, "lanford"),
            2 => (Objective::Expectation, "lanford"),
            3 => (Objective::Norm, "logistic"),
            4 => (Objective::Expectation, "logistic"),
            5 => (Objective::Mixing, "double-lanford"),
            _ => return Err(Error::Parse(format!("unknown table {number}; expected 1 to 5"))),
        };
        Ok(Experiment { table: number, objective, map_name })
    }

    pub fn map(&self) -> MapSpec {
        MapSpec::by_name(self.map_name).expect("built-in map")
    }

    pub fn headers(&self) -> [&'static str; 7] {
        self.objective.headers()
    }

    pub fn build(&self, n: usize) -> Result<UlamModel> {
        let map = self.map();
        build_ulam(&map, &NoiseKernel::uniform(DEFAULT_NOISE, map.domain), n)
    }

    pub fn run(&self, n: usize, epsilons: &[f64]) -> Result<ExperimentResult> {
        let model = self.build(n)?;
        self.run_on(&model, epsilons)
    }

    pub fn run_on(&self, model: &UlamModel, epsilons: &[f64]) -> Result<ExperimentResult> {
        match self.objective {
            Objective::Norm => norm_experiment(model, epsilons),
            Objective::Expectation => expectation_experiment(model, epsilons),
            Objective::Mixing => mixing_experiment(model, epsilons),
        }
    }
}

/// One line of a reference table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TableRow {
    pub n: usize,
    pub objective: f64,
    pub epsilon: f64,
    pub linearization_error: f64,
    pub minus: f64,
    pub base: f64,
    pub plus: f64,
}

impl TableRow {
    pub fn values(&self) -> [f64; 7] {
        [self.n as f64, self.objective, self.epsilon, self.linearization_error, self.minus, self.base, self.plus]
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentResult {
    pub n: usize,
    pub objective: f64,
    pub rows: Vec<TableRow>,
    /// Top two singular values of the reduced operator in vector units
    /// (norm objective only).
    pub singular_values: Option<[f64; 2]>,
    #[serde(skip)]
    pub perturbation: Perturbation,
    #[serde(skip)]
    pub stationary: Vec<f64>,
    #[serde(skip)]
    pub response: Vec<f64>,
    /// Feasible interval of `ε` for `M + εm*`.
    pub epsilon_range: (f64, f64),
}

/// How vector quantities are reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Units {
    /// Plain Euclidean norms of the vectors.
    #[default]
    Vector,
    /// `L²` norms of the densities on a uniform partition of `[0, 1]`.
    Function,
}

impl Units {
    pub fn norm_sq(self, v: &[f64]) -> f64 {
        match self {
            Units::Vector => dot(v, v),
            Units::Function => l2_norm_sq(v),
        }
    }
}

/// Norm-objective rows: `‖h(ε) − h − εu₁‖²` and `‖h(∓ε)‖²`, `‖h‖²`.
pub fn norm_sweep(m: &StochasticMatrix, opt: &NormOptimum, epsilons: &[f64], units: Units) -> Result<Vec<TableRow>> {
    let h = &opt.stationary;
    let objective = units.norm_sq(&opt.response);
    epsilons
        .iter()
        .map(|&eps| {
            let plus = perturbed_fixed_vector(m, &opt.perturbation, eps)?;
            let minus = perturbed_fixed_vector(m, &opt.perturbation, -eps)?;
            let err: Vec<f64> = (0..h.len()).map(|i| plus[i] - h[i] - eps * opt.response[i]).collect();
            Ok(TableRow {
                n: m.n(),
                objective,
                epsilon: eps,
                linearization_error: units.norm_sq(&err),
                minus: units.norm_sq(&minus),
                base: units.norm_sq(h),
                plus: units.norm_sq(&plus),
            })
        })
        .collect()
}

/// Expectation rows: `cᵀh(ε) − cᵀ(h + εu₁)` and `cᵀh(∓ε)`, `cᵀh`.
pub fn expectation_sweep(m: &StochasticMatrix, opt: &ExpectationOptimum, c: &[f64], epsilons: &[f64]) -> Result<Vec<TableRow>> {
    let base = dot(c, &opt.stationary);
    epsilons
        .iter()
        .map(|&eps| {
            let plus = perturbed_fixed_vector(m, &opt.perturbation, eps)?;
            let minus = perturbed_fixed_vector(m, &opt.perturbation, -eps)?;
            Ok(TableRow {
                n: m.n(),
                objective: opt.objective,
                epsilon: eps,
                linearization_error: dot(c, &plus) - (base + eps * opt.objective),
                minus: dot(c, &minus),
                base,
                plus: dot(c, &plus),
            })
        })
        .collect()
}

/// `λ₂` of `M + εm`, gap or not.
pub fn perturbed_pair(m: &StochasticMatrix, p: &Perturbation, eps: f64) -> Result<SpectralPair> {
    let a = p.perturb(m, eps);
    let h = perturbed_fixed_vector(m, p, eps)?;
    second_eigenpair_of(&a, &h)
}

/// Mixing rows: `|λ₂(ε)| − |λ₂ + εη₂|` and `|λ₂(∓ε)|`, `|λ₂|`.
pub fn mixing_sweep(m: &StochasticMatrix, opt: &MixingOptimum, epsilons: &[f64]) -> Result<Vec<TableRow>> {
    let lambda = opt.pair.lambda;
    epsilons
        .iter()
        .map(|&eps| {
            let plus = perturbed_pair(m, &opt.perturbation, eps)?;
            let minus = perturbed_pair(m, &opt.perturbation, -eps)?;
            let linear: Complex64 = lambda + opt.eta * eps;
            Ok(TableRow {
                n: m.n(),
                objective: opt.rate,
                epsilon: eps,
                linearization_error: plus.modulus() - linear.norm(),
                minus: minus.modulus(),
                base: lambda.norm(),
                plus: plus.modulus(),
            })
        })
        .collect()
}

fn norm_experiment(model: &UlamModel, epsilons: &[f64]) -> Result<ExperimentResult> {
    let m = &model.matrix;
    let solver = ResponseSolver::new(m)?;
    let opt = optimize_norm_with_solver(m, &solver, &NormOptions::default())?;
    let rows = norm_sweep(m, &opt, epsilons, Units::Function)?;
    Ok(ExperimentResult {
        n: model.n,
        objective: l2_norm_sq(&opt.response),
        rows,
        singular_values: Some(opt.singular_values),
        epsilon_range: (opt.epsilon_range.lower, opt.epsilon_range.upper),
        perturbation: opt.perturbation,
        stationary: opt.stationary,
        response: opt.response,
    })
}

fn expectation_experiment(model: &UlamModel, epsilons: &[f64]) -> Result<ExperimentResult> {
    let m = &model.matrix;
    let c = observable_from_function(two_sin_pi_x, model.n)?;
    let solver = ResponseSolver::new(m)?;
    let opt = optimize_expectation_with_solver(m, &solver, &c)?;
    let rows = expectation_sweep(m, &opt, &c, epsilons)?;
    let range = opt.perturbation.epsilon_range(m);
    Ok(ExperimentResult {
        n: model.n,
        objective: opt.objective,
        rows,
        singular_values: None,
        epsilon_range: (range.lower, range.upper),
        perturbation: opt.perturbation,
        stationary: opt.stationary,
        response: opt.response,
    })
}

fn mixing_experiment(model: &UlamModel, epsilons: &[f64]) -> Result<ExperimentResult> {
    let m = &model.matrix;
    let solver = ResponseSolver::new(m)?;
    let h = solver.stationary().to_vec();
    let pair = second_eigenpair_of(m.matrix(), &h)?;
    if !pair.gap_ok {
        return Err(Error::SpectralGapAmbiguous { modulus: pair.modulus() });
    }
    let opt = optimize_mixing_with_pair(m, pair)?;
    let rows = mixing_sweep(m, &opt, epsilons)?;
    let response = solver.response(&opt.perturbation)?;
    Ok(ExperimentResult {
        n: model.n,
        objective: opt.rate,
        rows,
        singular_values: None,
        epsilon_range: (opt.epsilon_range.lower, opt.epsilon_range.upper),
        perturbation: opt.perturbation,
        stationary: h,
        response,
    })
}
