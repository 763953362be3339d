//! Experiment runner behind the command line: builds the network, the
//! objective and the solvers from a JSON config and writes traces.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataio::{parse_libsvm, partition, synth_classification, write_trace};
use crate::diagnostics::{empirical_rate, reference_solution, RateAxis, ReferencePoint, StopReason};
use crate::error::{Error, Result};
use crate::gossip::{chebyshev_params, ChebyshevParams};
use crate::oracle::{Oracle, OracleKind};
use crate::solver::{derive_params, run, Algorithm, RunOptions};
use crate::spectral::{eigendecompose, spectral_summary, SpectralSummary, Spectrum};
use crate::state::StackedState;
use crate::topology::{build_graph, laplacian, validate_gossip, Graph, SymmetricMatrix, TopologySpec, DEFAULT_ZERO_TOL};

pub const CONFIG_SCHEMA: u32 = 1;

/// Fraction of a trace used when fitting rates for the summary.
const SUMMARY_TAIL: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    pub graph: TopologySpec,
    pub objective: ObjectiveConfig,
    pub solvers: Vec<SolverConfig>,
    #[serde(default = "default_reference_tol")]
    pub reference_tol: f64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

fn default_reference_tol() -> f64 {
    crate::diagnostics::DEFAULT_REFERENCE_TOL
}

/// Quadratic objectives draw targets and per-coordinate curvatures in
/// `[1, kappa]`. Logistic objectives use `dataset_path` if given and a
/// synthetic dataset of `samples_per_node · n` samples otherwise; `reg`
/// defaults to the value that makes `L/μ = kappa`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveConfig {
    pub kind: OracleKind,
    #[serde(default)]
    pub d: Option<usize>,
    #[serde(default)]
    pub reg: Option<f64>,
    #[serde(default)]
    pub kappa: Option<f64>,
    #[serde(default)]
    pub samples_per_node: Option<usize>,
    #[serde(default)]
    pub dataset_path: Option<PathBuf>,
    /// Falls back to the global seed.
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    pub max_iters: usize,
    pub eps: f64,
    #[serde(default = "one")]
    pub record_every: usize,
    #[serde(default)]
    pub lyapunov: bool,
}

fn one() -> usize {
    1
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn check(&self) -> Result<()> {
        if self.schema != CONFIG_SCHEMA {
            return Err(Error::Config(format!("unsupported schema {} (expected {CONFIG_SCHEMA})", self.schema)));
        }
        if self.solvers.is_empty() {
            return Err(Error::Config("no solvers configured".into()));
        }
        for s in &self.solvers {
            if !(s.eps > 0.0) {
                return Err(Error::Config(format!("{}: eps must be positive, got {}", s.algorithm, s.eps)));
            }
        }
        if !(self.reference_tol > 0.0) {
            return Err(Error::Config(format!("reference_tol must be positive, got {}", self.reference_tol)));
        }
        let o = &self.objective;
        match o.kind {
            OracleKind::Quadratic => {
                if o.d.unwrap_or(0) == 0 {
                    return Err(Error::Config("quadratic objective needs d ≥ 1".into()));
                }
                if o.kappa.is_some_and(|k| !(k >= 1.0)) {
                    return Err(Error::Config("kappa must be at least 1".into()));
                }
            }
            OracleKind::Logistic => {
                if o.dataset_path.is_none() && (o.d.unwrap_or(0) == 0 || o.samples_per_node.unwrap_or(0) == 0) {
                    return Err(Error::Config(
                        "logistic objective needs dataset_path, or d and samples_per_node for synthetic data".into(),
                    ));
                }
                if o.reg.is_none() && o.kappa.is_none_or(|k| !(k > 1.0)) {
                    return Err(Error::Config("logistic objective needs reg > 0 or kappa > 1".into()));
                }
            }
        }
        Ok(())
    }
}

/// Separable quadratics with `μ = 1` and `L = kappa` exactly. Coordinate `j`
/// has curvature `kappa^(j/(d−1))` at every node, so the averaged objective
/// has the same condition number; nodes differ through standard normal
/// targets.
pub fn heterogeneous_quadratic(n: usize, d: usize, kappa: f64, seed: u64) -> Result<Oracle> {
    if n == 0 || d == 0 || !(kappa >= 1.0) || (d == 1 && kappa != 1.0) {
        return Err(Error::InvalidOracle(format!(
            "need n ≥ 1, kappa ≥ 1, and d ≥ 2 unless kappa = 1 (n={n}, d={d}, kappa={kappa})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let targets = StackedState::from_fn(n, d, |_, _| rng.sample(StandardNormal));
    let curvature = |j: usize| if j == 0 { 1.0 } else if j == d - 1 { kappa } else { kappa.powf(j as f64 / (d - 1) as f64) };
    let scales = StackedState::from_fn(n, d, |_, j| curvature(j));
    Oracle::quadratic_diag(targets, scales)
}

/// Regularizer making the logistic oracle on `shards` have `L/μ = kappa`.
pub fn logistic_reg_for_kappa(shards: &[crate::dataio::NodeShard], kappa: f64) -> Result<f64> {
    if !(kappa > 1.0) {
        return Err(Error::InvalidOracle(format!("kappa must exceed 1, got {kappa}")));
    }
    let probe = Oracle::logistic(shards.to_vec(), 1.0)?;
    let data_term = probe.l() - 1.0;
    if !(data_term > 0.0) {
        return Err(Error::InvalidOracle("all features are zero".into()));
    }
    Ok(data_term / (kappa - 1.0))
}

pub fn build_oracle(cfg: &ObjectiveConfig, n: usize, global_seed: u64) -> Result<Oracle> {
    let seed = cfg.seed.unwrap_or(global_seed);
    match cfg.kind {
        OracleKind::Quadratic => heterogeneous_quadratic(n, cfg.d.unwrap_or(0), cfg.kappa.unwrap_or(1.0), seed),
        OracleKind::Logistic => {
            let ds = match &cfg.dataset_path {
                Some(path) => parse_libsvm(BufReader::new(fs::File::open(path)?))?,
                None => synth_classification(n * cfg.samples_per_node.unwrap_or(0), cfg.d.unwrap_or(0), seed)?,
            };
            let shards = partition(&ds, n, seed)?;
            let reg = match cfg.reg {
                Some(r) => r,
                None => logistic_reg_for_kappa(&shards, cfg.kappa.unwrap_or(0.0))?,
            };
            Oracle::logistic(shards, reg)
        }
    }
}

/// Graph, Laplacian and its spectrum, after the gossip checks passed.
#[derive(Debug, Clone)]
pub struct Network {
    pub graph: Graph,
    pub w: SymmetricMatrix,
    pub spectrum: Spectrum,
    pub summary: SpectralSummary,
}

pub fn build_network(spec: &TopologySpec) -> Result<Network> {
    let graph = build_graph(spec)?;
    let w = laplacian(&graph);
    let report = validate_gossip(&w, &graph, DEFAULT_ZERO_TOL)?;
    if !report.passed {
        return Err(Error::Validation(format!(
            "Laplacian failed gossip checks: symmetric={}, psd={}, sparsity={}, consensus kernel={}",
            report.symmetric, report.psd, report.sparsity_ok, report.kernel_is_consensus
        )));
    }
    let spectrum = eigendecompose(&w)?;
    let summary = spectral_summary(&spectrum, DEFAULT_ZERO_TOL)?;
    Ok(Network { graph, w, spectrum, summary })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverSummary {
    pub algorithm: Algorithm,
    pub stop: StopReason,
    pub iterations: u64,
    pub final_sq_dist: f64,
    pub grad_evals: u64,
    pub comm_rounds: u64,
    /// Fitted per-iteration decrease of the squared distance.
    pub rate_per_iter: Option<f64>,
    pub rate_per_round: Option<f64>,
    pub r_squared: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSummary {
    pub schema: u32,
    pub n: usize,
    pub d: usize,
    pub edges: usize,
    pub spectral: SpectralSummary,
    pub l: f64,
    pub mu: f64,
    pub kappa: f64,
    pub reference_grad_norm: f64,
    pub solvers: Vec<SolverSummary>,
}

/// Runs every configured solver from `x⁰ = 0` and writes
/// `<output_dir>/<algorithm>.csv` per solver plus `summary.json`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentSummary> {
    cfg.check()?;
    let net = build_network(&cfg.graph)?;
    let oracle = build_oracle(&cfg.objective, net.graph.n(), cfg.seed)?;
    let reference = reference_solution(&oracle, cfg.reference_tol)?;
    fs::create_dir_all(&cfg.output_dir)?;

    let results: Vec<Result<SolverSummary>> = std::thread::scope(|scope| {
        let handles: Vec<_> = cfg
            .solvers
            .iter()
            .map(|sc| {
                let (net, oracle, reference) = (&net, &oracle, &reference);
                scope.spawn(move || run_one(sc, net, oracle.fresh(), reference, &cfg.output_dir))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("solver thread panicked")).collect()
    });
    let solvers = results.into_iter().collect::<Result<Vec<_>>>()?;

    let summary = ExperimentSummary {
        schema: CONFIG_SCHEMA,
        n: oracle.n(),
        d: oracle.d(),
        edges: net.graph.edge_count(),
        spectral: net.summary,
        l: oracle.l(),
        mu: oracle.mu(),
        kappa: oracle.kappa(),
        reference_grad_norm: reference.grad_norm,
        solvers,
    };
    let mut out = BufWriter::new(fs::File::create(cfg.output_dir.join("summary.json"))?);
    serde_json::to_writer_pretty(&mut out, &summary)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(summary)
}

fn run_one(
    sc: &SolverConfig,
    net: &Network,
    mut oracle: Oracle,
    reference: &ReferencePoint,
    dir: &Path,
) -> Result<SolverSummary> {
    let params = derive_params(sc.algorithm, oracle.l(), oracle.mu(), &net.summary)?;
    let opts = RunOptions { max_iters: sc.max_iters, eps: sc.eps, record_every: sc.record_every, lyapunov: sc.lyapunov };
    let x0 = StackedState::zeros(oracle.n(), oracle.d());
    let out = run(&params, &mut oracle, &net.w, &net.spectrum, x0, reference, &opts)?;
    let mut sink = BufWriter::new(fs::File::create(dir.join(format!("{}.csv", sc.algorithm)))?);
    write_trace(&out.trace, &mut sink)?;
    sink.flush()?;

    let last = *out.trace.last().expect("trace always holds the initial record");
    let per_iter = empirical_rate(&out.trace, SUMMARY_TAIL, RateAxis::Iter).ok();
    let per_round = empirical_rate(&out.trace, SUMMARY_TAIL, RateAxis::CommRounds).ok();
    Ok(SolverSummary {
        algorithm: sc.algorithm,
        stop: out.trace.stop.unwrap_or(StopReason::MaxIters),
        iterations: last.iter,
        final_sq_dist: last.sq_dist,
        grad_evals: last.grad_evals,
        comm_rounds: last.comm_rounds,
        rate_per_iter: per_iter.map(|f| f.rate),
        rate_per_round: per_round.map(|f| f.rate),
        r_squared: per_iter.map(|f| f.r_squared),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumReport {
    pub n: usize,
    pub edges: usize,
    pub lambda_max: f64,
    pub lambda_min_plus: f64,
    pub chi: f64,
    pub chebyshev: ChebyshevParams,
}

pub fn spectrum_report(spec: &TopologySpec) -> Result<SpectrumReport> {
    let net = build_network(spec)?;
    Ok(SpectrumReport {
        n: net.graph.n(),
        edges: net.graph.edge_count(),
        lambda_max: net.summary.lambda_max,
        lambda_min_plus: net.summary.lambda_min_plus,
        chi: net.summary.chi,
        chebyshev: chebyshev_params(&net.summary),
    })
}
