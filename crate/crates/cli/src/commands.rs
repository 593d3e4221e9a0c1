use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};

use linresp::expectation::optimize_expectation_with_solver;
use linresp::experiments::{expectation_sweep, mixing_sweep, norm_sweep, Experiment, Objective, TableRow, Units, TABLE_EPSILONS, TABLE_SIZES};
use linresp::io::{format_matrix, read_matrix, read_vector};
use linresp::mixing::optimize_mixing_with_pair;
use linresp::norm::{optimize_norm_positive_with, optimize_norm_with_solver, BasisChoice, NormMethod, NormOptions};
use linresp::response::{augmented_residual, ResponseSolver};
use linresp::sequential::{
    optimize_sequential_expectation, optimize_sequential_norm_with, MatrixSequence, PerturbationSequence, SequentialOptions, SignPolicy,
};
use linresp::spectral::second_eigenpair_of;
use linresp::ulam::{build_ulam_with, density_from_vector, midpoints, observable_from_function, two_sin_pi_x, Boundary, MapSpec, NoiseKernel};
use linresp::{markov, norm, response, spectral, stationary, Perturbation, StochasticMatrix};

use crate::output::{render_csv, render_json, write_text, xy_lines};

#[derive(Parser, Debug)]
#[command(name = "linresp", version, about = "Optimal linear response of Markov chains")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Linear response of the invariant vector to a given perturbation.
    Response {
        #[command(flatten)]
        source: Source,
        /// Perturbation matrix in coordinate format.
        #[arg(long)]
        perturbation: PathBuf,
        #[command(flatten)]
        out: Outputs,
    },
    /// Perturbation maximizing the Euclidean norm of the response.
    OptimizeNorm {
        #[command(flatten)]
        source: Source,
        #[arg(long, value_enum, default_value_t = MethodArg::Auto)]
        method: MethodArg,
        /// Rotate every column block by a random orthogonal matrix (explicit path).
        #[arg(long)]
        basis_seed: Option<u64>,
        #[command(flatten)]
        sweep: Sweep,
        #[command(flatten)]
        out: Outputs,
    },
    /// Perturbation maximizing the response of an observable's expectation.
    OptimizeExpectation {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        observable: ObservableArg,
        #[command(flatten)]
        sweep: Sweep,
        #[command(flatten)]
        out: Outputs,
    },
    /// Perturbation that shrinks |λ₂| fastest.
    OptimizeMixing {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        sweep: Sweep,
        #[command(flatten)]
        out: Outputs,
    },
    /// Norm-optimal perturbations of a matrix sequence.
    SequentialNorm {
        #[command(flatten)]
        sequence: SequenceArgs,
        #[arg(long, value_enum, default_value_t = SignArg::PerStep)]
        sign: SignArg,
        #[command(flatten)]
        out: Outputs,
    },
    /// Expectation-optimal perturbations of a matrix sequence.
    SequentialExpectation {
        #[command(flatten)]
        sequence: SequenceArgs,
        #[command(flatten)]
        observable: ObservableArg,
        #[command(flatten)]
        out: Outputs,
    },
    /// Build an Ulam matrix and write it in coordinate format.
    UlamBuild {
        #[command(flatten)]
        ulam: UlamArgs,
        /// Destination of the matrix.
        #[arg(long = "out")]
        path: PathBuf,
        #[command(flatten)]
        out: Outputs,
    },
    /// Optimal norm objective of 2×2 chains over a grid of off-diagonals.
    #[command(name = "contour-2x2")]
    Contour2x2 {
        /// Grid points per axis; the axes run over k/resolution, k = 1..=resolution.
        #[arg(long, default_value_t = 50)]
        resolution: usize,
        #[command(flatten)]
        out: Outputs,
    },
    /// Recompute a reference table on Ulam models of noisy maps.
    Reproduce {
        /// Table number: 1, 2 (Lanford norm, expectation), 3, 4 (logistic), 5 (double Lanford mixing).
        #[arg(long)]
        table: u8,
        /// Partition sizes.
        #[arg(long, value_delimiter = ',')]
        n: Vec<usize>,
        /// Perturbation magnitudes.
        #[arg(long, value_delimiter = ',')]
        probe: Vec<f64>,
        #[command(flatten)]
        out: Outputs,
    },
}

#[derive(Args, Debug, Clone)]
struct UlamArgs {
    /// Built-in map: lanford, logistic, double-lanford, folded-double-lanford.
    #[arg(long = "ulam", value_name = "MAP")]
    map: Option<String>,
    /// Noise radius.
    #[arg(long = "eps", default_value_t = linresp::ulam::DEFAULT_NOISE)]
    noise: f64,
    /// Number of cells.
    #[arg(long, default_value_t = 2000)]
    n: usize,
    /// Midpoint samples per cell.
    #[arg(long, default_value_t = linresp::ulam::DEFAULT_SAMPLES)]
    samples: usize,
    /// Noise boundary on the interval: truncate or clip.
    #[arg(long, value_enum)]
    boundary: Option<BoundaryArg>,
}

#[derive(Args, Debug, Clone)]
struct Source {
    /// Transition matrix in coordinate format.
    #[arg(long, conflicts_with = "map")]
    matrix: Option<PathBuf>,
    #[command(flatten)]
    ulam: UlamArgs,
}

#[derive(Args, Debug, Clone)]
struct Sweep {
    /// Perturbation magnitudes at which to compare M ± εm* with the linear prediction.
    #[arg(long, value_delimiter = ',')]
    probe: Vec<f64>,
    /// Magnitude of the sign-selection probe (default min(1e-3, 0.1·ε₊)).
    #[arg(long)]
    sign_probe: Option<f64>,
}

#[derive(Args, Debug, Clone)]
struct ObservableArg {
    /// Observable: a vector file, or `two-sin-pi-x` sampled at cell midpoints.
    #[arg(long)]
    observable: String,
}

#[derive(Args, Debug, Clone)]
struct SequenceArgs {
    /// Transition matrices M⁽⁰⁾, …, M⁽τ⁻¹⁾, comma-separated.
    #[arg(long, value_delimiter = ',', required = true)]
    matrices: Vec<PathBuf>,
    /// Initial probability vector; defaults to the stationary vector of M⁽⁰⁾.
    #[arg(long)]
    h0: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct Outputs {
    /// Write the JSON result here instead of standard output.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Write the table (or grid) as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Directory for plot data: stationary, response and perturbation files.
    #[arg(long)]
    plot_dir: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum MethodArg {
    Auto,
    Explicit,
    Gram,
    MatrixFree,
    Positive,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum SignArg {
    PerStep,
    Joint,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum BoundaryArg {
    Truncate,
    Clip,
}

/// A loaded chain and how to present its vectors.
struct Chain {
    matrix: StochasticMatrix,
    units: Units,
    description: Value,
}

impl UlamArgs {
    fn build(&self, name: &str) -> Result<(StochasticMatrix, Value)> {
        let map = MapSpec::by_name(name).ok_or_else(|| linresp::Error::Parse(format!("unknown map '{name}'")))?;
        let mut noise = NoiseKernel::uniform(self.noise, map.domain);
        if let Some(b) = self.boundary {
            if noise.boundary == Boundary::Wrap {
                bail!(linresp::Error::Parse(format!("map '{name}' lives on the circle; --boundary does not apply")));
            }
            noise.boundary = match b {
                BoundaryArg::Truncate => Boundary::Truncate,
                BoundaryArg::Clip => Boundary::Clip,
            };
        }
        let model = build_ulam_with(&map, &noise, self.n, self.samples)?;
        let description = json!({
            "ulam": {
                "map": map.name(),
                "domain": map.domain,
                "noise": noise,
                "n": self.n,
                "samples": self.samples,
                "nnz": model.matrix.matrix().nnz(),
                "max_column_deviation": model.max_column_deviation,
            }
        });
        Ok((model.matrix, description))
    }
}

impl Source {
    fn load(&self) -> Result<Chain> {
        match (&self.matrix, &self.ulam.map) {
            (Some(path), None) => Ok(Chain {
                matrix: load_stochastic(path)?,
                units: Units::Vector,
                description: json!({"matrix": path.display().to_string()}),
            }),
            (None, Some(name)) => {
                let (matrix, description) = self.ulam.build(name)?;
                Ok(Chain { matrix, units: Units::Function, description })
            }
            _ => bail!(linresp::Error::Parse("give exactly one of --matrix or --ulam".into())),
        }
    }
}

fn load_stochastic(path: &Path) -> Result<StochasticMatrix> {
    let m = read_matrix(path)?;
    StochasticMatrix::new(m).with_context(|| format!("validating {}", path.display()))
}

fn load_observable(source: &str, n: usize) -> Result<Vec<f64>> {
    if source == "two-sin-pi-x" {
        return Ok(observable_from_function(two_sin_pi_x, n)?);
    }
    let c = read_vector(source)?;
    if c.len() != n {
        bail!(linresp::Error::DimensionMismatch { expected: n, found: c.len() });
    }
    Ok(c)
}

fn tolerances() -> Value {
    json!({
        "column_sum": markov::COLUMN_SUM_TOL,
        "zero_threshold": markov::DEFAULT_ZERO_THRESHOLD,
        "perturbation_column_sum": response::PERTURBATION_SUM_TOL,
        "response_residual": response::RESPONSE_TOL,
        "stationary_power": stationary::POWER_TOL,
        "degeneracy_gap": norm::DEGENERACY_GAP,
        "sign_probe": norm::SIGN_PROBE_TOL,
        "spectral_gap": spectral::GAP_TOL,
        "eigen_residual": spectral::EIGEN_RESIDUAL_TOL,
        "subspace": linresp::linalg::SubspaceOptions::default().tol,
        "quadrature": linresp::ulam::QUADRATURE_TOL,
    })
}

struct Report {
    command: &'static str,
    input: Value,
    result: Map<String, Value>,
    table: Option<(Vec<String>, Vec<Vec<f64>>)>,
    plots: Vec<(String, String)>,
}

impl Report {
    fn new(command: &'static str, input: Value) -> Self {
        Report { command, input, result: Map::new(), table: None, plots: Vec::new() }
    }

    fn set(&mut self, key: &str, value: impl Into<Value>) {
        self.result.insert(key.to_string(), value.into());
    }

    fn rows(&mut self, objective: Objective, rows: &[TableRow]) {
        self.set("sweep", rows_json(objective, rows));
        let headers = objective.headers().iter().map(|s| s.to_string()).collect();
        self.table = Some((headers, rows.iter().map(|r| r.values().to_vec()).collect()));
    }

    /// Stationary vector, response and perturbation for plotting.
    fn plot_vectors(&mut self, chain: &Chain, h: &[f64], u: &[f64], m: &Perturbation) {
        let n = h.len();
        let (x, h, u) = match chain.units {
            Units::Function => (midpoints(n), density_from_vector(h), density_from_vector(u)),
            Units::Vector => ((1..=n).map(|i| i as f64).collect(), h.to_vec(), u.to_vec()),
        };
        self.plots.push(("stationary.txt".into(), xy_lines(&x, &h)));
        self.plots.push(("response.txt".into(), xy_lines(&x, &u)));
        self.plots.push(("perturbation.txt".into(), format_matrix(m.entries())));
    }

    fn finish(self, out: &Outputs) -> Result<()> {
        let doc = json!({
            "command": self.command,
            "version": env!("CARGO_PKG_VERSION"),
            "tolerances": tolerances(),
            "input": self.input,
            "result": Value::Object(self.result),
        });
        if let (Some(path), Some((headers, rows))) = (&out.csv, &self.table) {
            let headers: Vec<&str> = headers.iter().map(String::as_str).collect();
            write_text(path, &render_csv(&headers, rows))?;
        } else if out.csv.is_some() {
            bail!(linresp::Error::Parse(format!("{} produces no table; drop --csv or add --probe", self.command)));
        }
        if let Some(dir) = &out.plot_dir {
            for (name, text) in &self.plots {
                write_text(&dir.join(name), text)?;
            }
        }
        let text = render_json(&doc);
        match &out.json {
            Some(path) => write_text(path, &text),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }
}

fn rows_json(objective: Objective, rows: &[TableRow]) -> Value {
    let headers = objective.headers();
    Value::Array(
        rows.iter()
            .map(|r| {
                let mut obj = Map::new();
                for (h, v) in headers.iter().zip(r.values()) {
                    let v = if *h == "n" { json!(r.n) } else { json!(v) };
                    obj.insert(h.to_string(), v);
                }
                Value::Object(obj)
            })
            .collect(),
    )
}

fn vector_summary(units: Units, u: &[f64]) -> Value {
    json!({
        "norm_sq": units.norm_sq(u),
        "sum": u.iter().sum::<f64>(),
    })
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Response { source, perturbation, out } => response_cmd(&source, &perturbation, &out),
        Command::OptimizeNorm { source, method, basis_seed, sweep, out } => optimize_norm_cmd(&source, method, basis_seed, &sweep, &out),
        Command::OptimizeExpectation { source, observable, sweep, out } => optimize_expectation_cmd(&source, &observable, &sweep, &out),
        Command::OptimizeMixing { source, sweep, out } => optimize_mixing_cmd(&source, &sweep, &out),
        Command::SequentialNorm { sequence, sign, out } => sequential_norm_cmd(&sequence, sign, &out),
        Command::SequentialExpectation { sequence, observable, out } => sequential_expectation_cmd(&sequence, &observable, &out),
        Command::UlamBuild { ulam, path, out } => ulam_build_cmd(&ulam, &path, &out),
        Command::Contour2x2 { resolution, out } => contour_cmd(resolution, &out),
        Command::Reproduce { table, n, probe, out } => reproduce_cmd(table, &n, &probe, &out),
    }
}

fn response_cmd(source: &Source, path: &Path, out: &Outputs) -> Result<()> {
    let chain = source.load()?;
    let m = read_matrix(path)?;
    if m.n() != chain.matrix.n() {
        bail!(linresp::Error::DimensionMismatch { expected: chain.matrix.n(), found: m.n() });
    }
    let p = Perturbation::on_support(m, &chain.matrix.support())?;
    let solver = ResponseSolver::new(&chain.matrix)?;
    let u = solver.response(&p)?;
    let mh = p.apply(solver.stationary());
    let mut report = Report::new("response", chain.description.clone());
    report.set("objective", chain.units.norm_sq(&u));
    report.set("response", vector_summary(chain.units, &u));
    report.set("residual", augmented_residual(chain.matrix.matrix(), &u, &mh));
    report.set("perturbation_norm", p.frobenius_norm());
    report.set("epsilon_range", serde_json::to_value(p.epsilon_range(&chain.matrix))?);
    report.set("u1", u.clone());
    report.plot_vectors(&chain, solver.stationary(), &u, &p);
    report.finish(out)
}

fn optimize_norm_cmd(source: &Source, method: MethodArg, basis_seed: Option<u64>, sweep: &Sweep, out: &Outputs) -> Result<()> {
    let chain = source.load()?;
    let m = &chain.matrix;
    let solver = ResponseSolver::new(m)?;
    let opt = match method {
        MethodArg::Positive => optimize_norm_positive_with(m, sweep.sign_probe)?,
        other => {
            let opts = NormOptions {
                method: match other {
                    MethodArg::Explicit => NormMethod::Explicit,
                    MethodArg::Gram => NormMethod::Gram,
                    MethodArg::MatrixFree => NormMethod::MatrixFree,
                    _ => NormMethod::Auto,
                },
                basis: basis_seed.map_or(BasisChoice::Canonical, BasisChoice::Randomized),
                probe_epsilon: sweep.sign_probe,
                ..NormOptions::default()
            };
            optimize_norm_with_solver(m, &solver, &opts)?
        }
    };
    let mut report = Report::new("optimize-norm", chain.description.clone());
    report.set("objective", chain.units.norm_sq(&opt.response));
    report.set("objective_vector", opt.objective);
    report.set("singular_values", opt.singular_values.to_vec());
    report.set("unique", opt.unique);
    report.set("method", serde_json::to_value(opt.method)?);
    report.set("sign", serde_json::to_value(opt.sign)?);
    report.set("epsilon_range", serde_json::to_value(opt.epsilon_range)?);
    report.set("response", vector_summary(chain.units, &opt.response));
    if !sweep.probe.is_empty() {
        let rows = norm_sweep(m, &opt, &sweep.probe, chain.units)?;
        report.rows(Objective::Norm, &rows);
    }
    report.plot_vectors(&chain, &opt.stationary, &opt.response, &opt.perturbation);
    report.finish(out)
}

fn optimize_expectation_cmd(source: &Source, observable: &ObservableArg, sweep: &Sweep, out: &Outputs) -> Result<()> {
    let chain = source.load()?;
    let m = &chain.matrix;
    let c = load_observable(&observable.observable, m.n())?;
    let solver = ResponseSolver::new(m)?;
    let opt = optimize_expectation_with_solver(m, &solver, &c)?;
    let mut input = chain.description.clone();
    input["observable"] = json!(observable.observable);
    let mut report = Report::new("optimize-expectation", input);
    report.set("objective", opt.objective);
    report.set("nu", opt.nu);
    report.set("expectation", linresp::linalg::dot(&c, &opt.stationary));
    report.set("epsilon_range", serde_json::to_value(opt.perturbation.epsilon_range(m))?);
    report.set("response", vector_summary(chain.units, &opt.response));
    if !sweep.probe.is_empty() {
        let rows = expectation_sweep(m, &opt, &c, &sweep.probe)?;
        report.rows(Objective::Expectation, &rows);
    }
    report.plot_vectors(&chain, &opt.stationary, &opt.response, &opt.perturbation);
    report.finish(out)
}

fn optimize_mixing_cmd(source: &Source, sweep: &Sweep, out: &Outputs) -> Result<()> {
    let chain = source.load()?;
    let m = &chain.matrix;
    let solver = ResponseSolver::new(m)?;
    let pair = second_eigenpair_of(m.matrix(), solver.stationary())?;
    if !pair.gap_ok {
        bail!(linresp::Error::SpectralGapAmbiguous { modulus: pair.modulus() });
    }
    let opt = optimize_mixing_with_pair(m, pair)?;
    let mut report = Report::new("optimize-mixing", chain.description.clone());
    report.set("rho", opt.rate);
    report.set("nu", opt.nu);
    report.set("lambda2", json!({"re": opt.pair.lambda.re, "im": opt.pair.lambda.im, "modulus": opt.pair.modulus()}));
    report.set("next_modulus", opt.pair.next_modulus);
    report.set("eta", json!({"re": opt.eta.re, "im": opt.eta.im}));
    report.set("epsilon_range", serde_json::to_value(opt.epsilon_range)?);
    if !sweep.probe.is_empty() {
        let rows = mixing_sweep(m, &opt, &sweep.probe)?;
        report.rows(Objective::Mixing, &rows);
    }
    let u = solver.response(&opt.perturbation)?;
    report.plot_vectors(&chain, solver.stationary(), &u, &opt.perturbation);
    report.finish(out)
}

fn load_sequence(args: &SequenceArgs) -> Result<(MatrixSequence, Value)> {
    let matrices = args.matrices.iter().map(|p| load_stochastic(p)).collect::<Result<Vec<_>>>()?;
    let h0 = match &args.h0 {
        Some(path) => read_vector(path)?,
        None => stationary::stationary_distribution(&matrices[0])?,
    };
    let description = json!({
        "matrices": args.matrices.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        "h0": args.h0.as_ref().map(|p| p.display().to_string()),
    });
    Ok((MatrixSequence::new(matrices, h0)?, description))
}

fn block_plots(report: &mut Report, ms: &PerturbationSequence, u: &[f64]) {
    for (t, m) in ms.perturbations.iter().enumerate() {
        report.plots.push((format!("perturbation_{t}.txt"), format_matrix(m.entries())));
    }
    let x: Vec<f64> = (1..=u.len()).map(|i| i as f64).collect();
    report.plots.push(("response.txt".into(), xy_lines(&x, u)));
}

fn sequential_norm_cmd(args: &SequenceArgs, sign: SignArg, out: &Outputs) -> Result<()> {
    let (seq, input) = load_sequence(args)?;
    let opts = SequentialOptions {
        sign: match sign {
            SignArg::PerStep => SignPolicy::PerStep,
            SignArg::Joint => SignPolicy::Joint,
        },
        ..SequentialOptions::default()
    };
    let opt = optimize_sequential_norm_with(&seq, &opts)?;
    let mut report = Report::new("sequential-norm", input);
    report.set("objective", opt.objective);
    report.set("pre_flip_objective", opt.pre_flip_objective);
    report.set("singular_values", opt.singular_values.to_vec());
    report.set("unique", opt.unique);
    report.set("flipped", opt.flipped.clone());
    report.set("block_norms", opt.perturbations.perturbations.iter().map(|m| m.frobenius_norm()).collect::<Vec<_>>());
    report.set("joint_norm", opt.perturbations.joint_norm());
    report.set("u_tau", opt.response.clone());
    block_plots(&mut report, &opt.perturbations, &opt.response);
    report.finish(out)
}

fn sequential_expectation_cmd(args: &SequenceArgs, observable: &ObservableArg, out: &Outputs) -> Result<()> {
    let (seq, mut input) = load_sequence(args)?;
    let c = load_observable(&observable.observable, seq.n())?;
    input["observable"] = json!(observable.observable);
    let opt = optimize_sequential_expectation(&seq, &c)?;
    let mut report = Report::new("sequential-expectation", input);
    report.set("objective", opt.objective);
    report.set("nu", opt.nu);
    report.set("block_norms", opt.perturbations.perturbations.iter().map(|m| m.frobenius_norm()).collect::<Vec<_>>());
    report.set("joint_norm", opt.perturbations.joint_norm());
    report.set("u_tau", opt.response.clone());
    block_plots(&mut report, &opt.perturbations, &opt.response);
    report.finish(out)
}

fn ulam_build_cmd(args: &UlamArgs, path: &Path, out: &Outputs) -> Result<()> {
    let name = args
        .map
        .as_deref()
        .ok_or_else(|| linresp::Error::Parse("--ulam MAP is required".into()))?;
    let (matrix, description) = args.build(name)?;
    write_text(path, &format_matrix(matrix.matrix()))?;
    let mut report = Report::new("ulam-build", description);
    report.set("path", path.display().to_string());
    report.set("mixing", matrix.is_mixing());
    report.finish(out)
}

/// `log((a² + b²)/(a + b)⁴)`, the log optimal objective of the chain with
/// off-diagonal entries `a`, `b`.
pub fn contour_value(a: f64, b: f64) -> f64 {
    ((a * a + b * b) / (a + b).powi(4)).ln()
}

fn contour_cmd(resolution: usize, out: &Outputs) -> Result<()> {
    if resolution < 2 {
        bail!(linresp::Error::Parse("--resolution must be at least 2".into()));
    }
    let r = resolution as f64;
    let mut rows = Vec::with_capacity(resolution * resolution);
    for i in 1..=resolution {
        for j in 1..=resolution {
            let (a, b) = (i as f64 / r, j as f64 / r);
            rows.push(vec![a, b, contour_value(a, b)]);
        }
    }
    let mut report = Report::new("contour-2x2", json!({"resolution": resolution}));
    let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), r| (l.min(r[2]), h.max(r[2])));
    report.set("points", rows.len());
    report.set("min", lo);
    report.set("max", hi);
    if out.csv.is_none() {
        report.set("grid", rows.clone());
    }
    report.table = Some((vec!["m12".into(), "m21".into(), "log_objective".into()], rows));
    report.finish(out)
}

fn reproduce_cmd(table: u8, sizes: &[usize], probes: &[f64], out: &Outputs) -> Result<()> {
    let experiment = Experiment::table(table)?;
    let sizes = if sizes.is_empty() { TABLE_SIZES.to_vec() } else { sizes.to_vec() };
    let probes = if probes.is_empty() { TABLE_EPSILONS.to_vec() } else { probes.to_vec() };
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    for &n in &sizes {
        let result = experiment.run(n, &probes)?;
        runs.push(json!({
            "n": n,
            "objective": result.objective,
            "singular_values": result.singular_values.map(|s| s.to_vec()),
            "epsilon_range": [result.epsilon_range.0, result.epsilon_range.1],
        }));
        rows.extend(result.rows);
    }
    let input = json!({
        "table": table,
        "map": experiment.map_name,
        "objective": experiment.objective,
        "noise": linresp::ulam::DEFAULT_NOISE,
        "samples": linresp::ulam::DEFAULT_SAMPLES,
        "n": sizes,
        "epsilons": probes,
    });
    let mut report = Report::new("reproduce", input);
    report.set("runs", Value::Array(runs));
    report.rows(experiment.objective, &rows);
    report.finish(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contour_reference_points() {
        assert!((contour_value(1.0, 1.0) - (1.0f64 / 8.0).ln()).abs() < 1e-15);
        assert!((contour_value(0.5, 0.5) - 0.5f64.ln()).abs() < 1e-15);
        assert_eq!(contour_value(0.3, 0.7), contour_value(0.7, 0.3));
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
