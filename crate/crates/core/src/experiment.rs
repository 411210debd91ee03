//! Experiment configuration, dispatch and CSV reporting.
//!
//! Every experiment produces a [`Report`]: one `#` comment line echoing the
//! resolved configuration, a header row, and data rows. Reports are pure
//! functions of the configuration and seed, so reruns are byte-identical.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::consensus::{
    run_accelerated_with, run_linear_with, time_to_epsilon, AcceleratedParams, Envelope,
    EnvelopeParams, Recording,
};
use crate::error::{Error, Result};
use crate::fusion::{centralized_mle, distributed_mle, MeasurementSet};
use crate::graph::{parse_edge_list, Graph, GraphKind, GraphSpec};
use crate::learning::{gap, kl_costs, run_learning, sample_size_bound, HypothesisModel, Scheme};
use crate::optimize::{median_experiment, median_experiment_on, MedianGraph, MedianResult};
use crate::weights::{lazy_metropolis_weights, uniform_epsilon_weights, WeightMatrix};

pub const DEFAULT_SEED: u64 = 0xC0FFEE;

/// Where the network comes from: a generator spec or `file:<edge list>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GraphSource {
    Generator(GraphSpec),
    File(PathBuf),
}

impl FromStr for GraphSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.strip_prefix("file:") {
            Some(path) => Ok(GraphSource::File(PathBuf::from(path))),
            None => Ok(GraphSource::Generator(s.parse()?)),
        }
    }
}

impl std::fmt::Display for GraphSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GraphSource::Generator(spec) => write!(f, "{spec}"),
            GraphSource::File(path) => write!(f, "file:{}", path.display()),
        }
    }
}

impl GraphSource {
    pub fn load(&self) -> Result<(Graph, Vec<String>)> {
        match self {
            GraphSource::Generator(spec) => Ok((spec.build()?, Vec::new())),
            GraphSource::File(path) => {
                let parsed = parse_edge_list(&read_file(path)?)?;
                Ok((parsed.graph, parsed.warnings))
            }
        }
    }
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UPolicy {
    ExactN,
    /// `U = ⌈m · n⌉`, `m ≥ 1`.
    Multiplier(f64),
}

impl UPolicy {
    pub fn resolve(self, n: usize) -> Result<usize> {
        match self {
            UPolicy::ExactN => Ok(n),
            UPolicy::Multiplier(m) if m >= 1.0 && m.is_finite() => Ok((m * n as f64).ceil() as usize),
            UPolicy::Multiplier(m) => Err(Error::config("u-multiplier", format!("must be >= 1, got {m}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConsensusProtocol {
    /// Constant edge weight; `None` picks `1/(2 d_max)`.
    UniformEpsilon(Option<f64>),
    LazyMetropolis,
    Accelerated,
}

impl ConsensusProtocol {
    pub fn name(self) -> &'static str {
        match self {
            ConsensusProtocol::UniformEpsilon(_) => "uniform-epsilon",
            ConsensusProtocol::LazyMetropolis => "lazy-metropolis",
            ConsensusProtocol::Accelerated => "accelerated",
        }
    }
}

impl FromStr for ConsensusProtocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform-epsilon" => Ok(ConsensusProtocol::UniformEpsilon(None)),
            "lazy-metropolis" => Ok(ConsensusProtocol::LazyMetropolis),
            "accelerated" => Ok(ConsensusProtocol::Accelerated),
            other => Err(Error::config(
                "protocol",
                format!("unknown protocol `{other}` (uniform-epsilon | lazy-metropolis | accelerated)"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialValues {
    /// `x_i(0) = i`.
    Ramp,
    /// `x_i(0)` uniform on `[-1, 1]`, drawn from the run seed.
    Random,
    /// `x_1(0) = 1`, all others 0.
    Indicator,
}

impl InitialValues {
    pub fn generate(self, n: usize, seed: u64) -> Vec<f64> {
        match self {
            InitialValues::Ramp => (1..=n).map(|i| i as f64).collect(),
            InitialValues::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect()
            }
            InitialValues::Indicator => (0..n).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect(),
        }
    }

    fn name(self) -> &'static str {
        match self {
            InitialValues::Ramp => "ramp",
            InitialValues::Random => "random",
            InitialValues::Indicator => "indicator",
        }
    }
}

impl FromStr for InitialValues {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ramp" => Ok(InitialValues::Ramp),
            "random" => Ok(InitialValues::Random),
            "indicator" => Ok(InitialValues::Indicator),
            other => Err(Error::config("init", format!("unknown initial values `{other}` (ramp | random | indicator)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Preset {
    /// Distributed median on line and lollipop graphs with `U = n`, `T = 4n`.
    MedianSweep { sizes: Vec<usize> },
    /// Rounds to reach `eps · E(0)` for each consensus protocol.
    ProtocolScaling { kind: GraphKind, sizes: Vec<usize>, eps: f64 },
}

impl Preset {
    pub fn median_sweep() -> Self {
        Preset::MedianSweep {
            sizes: (1..=10).map(|k| 20 * k).collect(),
        }
    }

    pub fn protocol_scaling() -> Self {
        Preset::ProtocolScaling {
            kind: GraphKind::Line,
            sizes: vec![25, 50, 100],
            eps: 0.01,
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "median-sweep" => Ok(Preset::median_sweep()),
            "protocol-scaling" => Ok(Preset::protocol_scaling()),
            other => Err(Error::config(
                "preset",
                format!("unknown preset `{other}` (median-sweep | protocol-scaling)"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Experiment {
    Consensus {
        protocol: ConsensusProtocol,
        init: InitialValues,
        with_values: bool,
        dump_matrix: Option<PathBuf>,
    },
    Fuse {
        measurements: PathBuf,
    },
    /// Distributed median with the mirrored `i mod 10` data.
    Optimize,
    Learn {
        model: PathBuf,
        scheme: Scheme,
    },
    Sweep(Preset),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    /// Required by every experiment except sweeps.
    pub graph: Option<GraphSource>,
    pub u_policy: UPolicy,
    pub rounds: Option<usize>,
    /// `T = ⌈factor · n⌉` when `rounds` is not given.
    pub rounds_factor: Option<f64>,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment) -> Self {
        ExperimentConfig {
            experiment,
            graph: None,
            u_policy: UPolicy::ExactN,
            rounds: None,
            rounds_factor: None,
            seed: DEFAULT_SEED,
        }
    }

    pub fn with_graph(mut self, graph: &str) -> Result<Self> {
        self.graph = Some(graph.parse()?);
        Ok(self)
    }

    fn load_graph(&self) -> Result<(Graph, Vec<String>)> {
        self.graph
            .as_ref()
            .ok_or_else(|| Error::config("graph", "this experiment needs --graph"))?
            .load()
    }

    fn resolve_rounds(&self, n: usize, default: usize) -> Result<usize> {
        let rounds = match (self.rounds, self.rounds_factor) {
            (Some(t), _) => t,
            (None, Some(f)) if f > 0.0 && f.is_finite() => (f * n as f64).ceil() as usize,
            (None, Some(f)) => {
                return Err(Error::config("rounds-factor", format!("must be positive, got {f}")))
            }
            (None, None) => default,
        };
        if rounds == 0 {
            return Err(Error::config("rounds", "must be at least 1"));
        }
        Ok(rounds)
    }
}

/// Tabular result of an experiment.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    /// Resolved configuration, written as the leading `#` line.
    pub comment: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// Non-fatal notices (e.g. deduplicated edges); not part of the CSV.
    pub warnings: Vec<String>,
}

impl Report {
    fn new(comment: String, header: &[&str]) -> Self {
        Report {
            comment,
            header: header.iter().map(|h| h.to_string()).collect(),
            ..Report::default()
        }
    }

    /// Header and data rows, without the comment line.
    pub fn body(&self) -> Result<String> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(&self.header)?;
        for row in &self.rows {
            writer.write_record(row)?;
        }
        let bytes = writer
            .into_inner()
            .map_err(|e| Error::io("<memory>", e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_csv(&self) -> Result<String> {
        Ok(format!("# {}\n{}", self.comment, self.body()?))
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?).map_err(|e| Error::io(path, e))
    }
}

fn num(v: f64) -> String {
    format!("{v}")
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report> {
    match &cfg.experiment {
        Experiment::Consensus {
            protocol,
            init,
            with_values,
            dump_matrix,
        } => run_consensus(cfg, *protocol, *init, *with_values, dump_matrix.as_deref()),
        Experiment::Fuse { measurements } => run_fuse(cfg, measurements),
        Experiment::Optimize => run_optimize(cfg),
        Experiment::Learn { model, scheme } => run_learn(cfg, model, *scheme),
        Experiment::Sweep(preset) => run_sweep(cfg, preset),
    }
}

fn run_consensus(
    cfg: &ExperimentConfig,
    protocol: ConsensusProtocol,
    init: InitialValues,
    with_values: bool,
    dump_matrix: Option<&Path>,
) -> Result<Report> {
    let (g, warnings) = cfg.load_graph()?;
    let n = g.len();
    let x0 = init.generate(n, cfg.seed);
    let recording = if with_values { Recording::Full } else { Recording::ErrorsOnly };
    let mut comment = format!(
        "experiment=consensus graph={} n={n} protocol={} init={} seed={}",
        g.tag(),
        protocol.name(),
        init.name(),
        cfg.seed
    );
    let dump = |w: &WeightMatrix| -> Result<()> {
        if let Some(path) = dump_matrix {
            std::fs::write(path, w.to_csv()).map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    };
    let trace = match protocol {
        ConsensusProtocol::Accelerated => {
            let params = AcceleratedParams::new(cfg.u_policy.resolve(n)?)?;
            let rounds = cfg.resolve_rounds(n, 60 * params.u())?;
            write!(comment, " rounds={rounds} U={} sigma={}", params.u(), params.sigma()).unwrap();
            dump(&lazy_metropolis_weights(&g))?;
            run_accelerated_with(&g, params, &x0, rounds, recording)?
        }
        plain => {
            let w = match plain {
                ConsensusProtocol::UniformEpsilon(eps) => {
                    let eps = eps.unwrap_or(1.0 / (2.0 * g.max_degree().max(1) as f64));
                    write!(comment, " eps={eps}").unwrap();
                    uniform_epsilon_weights(&g, eps)?
                }
                _ => lazy_metropolis_weights(&g),
            };
            let rounds = cfg.resolve_rounds(n, 20 * n * n)?;
            write!(comment, " rounds={rounds} eta={}", w.eta()).unwrap();
            dump(&w)?;
            run_linear_with(&w, &x0, rounds, recording)?
        }
    };

    let mut header = vec!["t", "E", "x_min", "x_max"];
    let labels: Vec<String> = (1..=n).map(|i| format!("x_{i}")).collect();
    if with_values {
        header.extend(labels.iter().map(String::as_str));
    }
    let mut report = Report::new(comment, &header);
    report.warnings = warnings;
    for t in 0..=trace.rounds {
        let (lo, hi) = trace.x_range[t];
        let mut row = vec![t.to_string(), num(trace.squared_errors[t]), num(lo), num(hi)];
        if with_values {
            row.extend(trace.x_history[t].iter().map(|&v| num(v)));
        }
        report.rows.push(row);
    }
    Ok(report)
}

fn run_fuse(cfg: &ExperimentConfig, measurements: &Path) -> Result<Report> {
    let (g, warnings) = cfg.load_graph()?;
    let n = g.len();
    let m = MeasurementSet::from_csv(&read_file(measurements)?)?;
    if m.len() != n {
        return Err(Error::config(
            "measurements",
            format!("{} rows for a graph with {n} nodes", m.len()),
        ));
    }
    let params = AcceleratedParams::new(cfg.u_policy.resolve(n)?)?;
    let rounds = cfg.resolve_rounds(n, 60 * params.u())?;
    let reference = centralized_mle(&m);
    let estimates = distributed_mle(&g, &m, params, rounds)?;
    let comment = format!(
        "experiment=fuse graph={} n={n} rounds={rounds} U={} sigma={} centralized={reference}",
        g.tag(),
        params.u(),
        params.sigma()
    );
    let mut report = Report::new(comment, &["node", "estimate", "abs_error_vs_centralized"]);
    report.warnings = warnings;
    for (i, est) in estimates.into_iter().enumerate() {
        report
            .rows
            .push(vec![(i + 1).to_string(), num(est), num((est - reference).abs())]);
    }
    Ok(report)
}

const MEDIAN_HEADER: [&str; 7] = ["n", "graph", "T", "avg_deviation", "disp", "err", "status"];

fn median_row(n: usize, graph: &str, result: Result<MedianResult>) -> Vec<String> {
    match result {
        Ok(r) => vec![
            n.to_string(),
            graph.to_string(),
            r.rounds.to_string(),
            num(r.avg_deviation),
            num(r.disp),
            num(r.err),
            "ok".into(),
        ],
        Err(e) => vec![
            n.to_string(),
            graph.to_string(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            format!("error: {e}"),
        ],
    }
}

fn run_optimize(cfg: &ExperimentConfig) -> Result<Report> {
    if cfg.u_policy != UPolicy::ExactN {
        return Err(Error::config("u-multiplier", "the median experiment fixes U = n"));
    }
    let (g, warnings) = cfg.load_graph()?;
    let n = g.len();
    let rounds = cfg.resolve_rounds(n, 4 * n)?;
    let name = cfg
        .graph
        .as_ref()
        .map(|s| match s {
            GraphSource::Generator(spec) => spec.kind.name(),
            GraphSource::File(_) => "file",
        })
        .unwrap_or("graph");
    let result = median_experiment_on(&g, name, rounds)?;
    let comment = format!(
        "experiment=optimize objective=median graph={} n={n} rounds={rounds} U={n} sigma={} beta={} seed={}",
        g.tag(),
        result.sigma,
        result.step,
        cfg.seed
    );
    let mut report = Report::new(comment, &MEDIAN_HEADER);
    report.warnings = warnings;
    report.rows.push(median_row(n, name, Ok(result)));
    Ok(report)
}

fn run_learn(cfg: &ExperimentConfig, model: &Path, scheme: Scheme) -> Result<Report> {
    let (g, warnings) = cfg.load_graph()?;
    let n = g.len();
    let m = HypothesisModel::from_toml(&read_file(model)?)?;
    if m.len() != n {
        return Err(Error::config("model", format!("{} nodes for a graph with {n} nodes", m.len())));
    }
    if gap(&kl_costs(&m))? <= 0.0 {
        return Err(Error::Undefined("gap is zero: the best hypothesis is not unique".into()));
    }
    let params = AcceleratedParams::new(cfg.u_policy.resolve(n)?)?;
    let rounds = cfg.resolve_rounds(n, 1000)?;
    let run = run_learning(&g, &m, params, rounds, cfg.seed, scheme)?;
    let mut comment = format!(
        "experiment=learn graph={} n={n} k={} scheme={} rounds={rounds} U={} sigma={} seed={} alpha={} gap={}",
        g.tag(),
        m.hypotheses(),
        match scheme {
            Scheme::Learndyn => "learndyn",
            Scheme::Betu => "betu",
        },
        params.u(),
        params.sigma(),
        cfg.seed,
        m.alpha_floor(),
        run.gap
    );
    let bound = sample_size_bound(0.05, m.alpha_floor(), run.gap, n)?;
    write!(comment, " N(0.05)={bound}").unwrap();
    if let Some(z) = run.fitted_intercept {
        write!(comment, " fitted_intercept={z}").unwrap();
    }
    let mut header = vec!["t".to_string(), "max_wrong_log_belief".to_string()];
    header.extend((1..=m.hypotheses()).map(|p| format!("mean_belief_{p}")));
    let mut report = Report {
        comment,
        header,
        rows: Vec::with_capacity(rounds + 1),
        warnings,
    };
    for (t, (w, means)) in run.max_wrong_log_belief.iter().zip(&run.mean_beliefs).enumerate() {
        let mut row = vec![t.to_string(), num(*w)];
        row.extend(means.iter().map(|&b| num(b)));
        report.rows.push(row);
    }
    Ok(report)
}

fn run_sweep(cfg: &ExperimentConfig, preset: &Preset) -> Result<Report> {
    match preset {
        Preset::MedianSweep { sizes } => {
            let factor = cfg.rounds_factor.unwrap_or(4.0);
            if !(factor > 0.0 && factor.is_finite()) {
                return Err(Error::config("rounds-factor", format!("must be positive, got {factor}")));
            }
            let points: Vec<(MedianGraph, usize)> = [MedianGraph::Line, MedianGraph::Lollipop]
                .into_iter()
                .flat_map(|kind| sizes.iter().map(move |&n| (kind, n)))
                .collect();
            let mut rows: Vec<((&str, usize), Vec<String>)> = points
                .par_iter()
                .map(|&(kind, n)| {
                    let rounds = (factor * n as f64).ceil() as usize;
                    let result = median_experiment(kind, n, Some(rounds));
                    ((kind.name(), n), median_row(n, kind.name(), result))
                })
                .collect();
            rows.sort_by(|a, b| a.0.cmp(&b.0));
            let comment = format!(
                "experiment=sweep preset=median-sweep U=n rounds_factor={factor} sizes={sizes:?}"
            );
            let mut report = Report::new(comment, &MEDIAN_HEADER);
            report.rows = rows.into_iter().map(|(_, r)| r).collect();
            Ok(report)
        }
        Preset::ProtocolScaling { kind, sizes, eps } => {
            let table = compare_protocols(*kind, sizes, *eps, cfg.seed)?;
            let comment = format!(
                "experiment=sweep preset=protocol-scaling graph={} eps={eps} sizes={sizes:?} init=ramp",
                kind.name()
            );
            let mut report = Report::new(
                comment,
                &["n", "protocol", "time_to_eps", "bound_rounds", "rounds_run", "status"],
            );
            for row in table {
                let (time, status) = match row.time_to_eps {
                    Some(t) => (t.to_string(), "ok".to_string()),
                    None => (String::new(), "not-reached".to_string()),
                };
                report.rows.push(vec![
                    row.n.to_string(),
                    row.protocol.to_string(),
                    time,
                    row.bound_rounds.to_string(),
                    row.rounds_run.to_string(),
                    status,
                ]);
            }
            Ok(report)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingRow {
    pub n: usize,
    pub protocol: &'static str,
    /// `None` when the target was not reached within `rounds_run`.
    pub time_to_eps: Option<usize>,
    /// Rounds after which the matching envelope guarantees the target.
    pub bound_rounds: usize,
    pub rounds_run: usize,
}

const PROTOCOLS: [ConsensusProtocol; 3] = [
    ConsensusProtocol::UniformEpsilon(None),
    ConsensusProtocol::LazyMetropolis,
    ConsensusProtocol::Accelerated,
];

/// Rounds each protocol needs to shrink `E` by `eps`, from the ramp
/// `x_i(0) = i`, with `ε = 1/(2 d_max)` for uniform weights and `U = n` for
/// the accelerated scheme. Run lengths are `20n²` (plain) and `60U`
/// (accelerated). Rows are sorted by `(n, protocol)`.
pub fn compare_protocols(kind: GraphKind, sizes: &[usize], eps: f64, seed: u64) -> Result<Vec<ScalingRow>> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Parameter(format!("eps must lie in (0, 1), got {eps}")));
    }
    let points: Vec<(usize, ConsensusProtocol)> = sizes
        .iter()
        .flat_map(|&n| PROTOCOLS.iter().map(move |&p| (n, p)))
        .collect();
    let mut rows = points
        .par_iter()
        .map(|&(n, protocol)| scaling_point(kind, n, protocol, eps, seed))
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by_key(|r| (r.n, r.protocol));
    Ok(rows)
}

fn scaling_point(
    kind: GraphKind,
    n: usize,
    protocol: ConsensusProtocol,
    eps: f64,
    seed: u64,
) -> Result<ScalingRow> {
    let g = kind.build(n, seed)?;
    let x0 = InitialValues::Ramp.generate(n, seed);
    let (trace, kind_bound, env) = match protocol {
        ConsensusProtocol::Accelerated => {
            let params = AcceleratedParams::new(n)?;
            let trace = run_accelerated_with(&g, params, &x0, 60 * n, Recording::ErrorsOnly)?;
            (trace, Envelope::Accelerated, EnvelopeParams { eta: None, n, u: n })
        }
        ConsensusProtocol::UniformEpsilon(eps_weight) => {
            let w = uniform_epsilon_weights(
                &g,
                eps_weight.unwrap_or(1.0 / (2.0 * g.max_degree() as f64)),
            )?;
            let env = EnvelopeParams { eta: Some(w.eta()), n, u: n };
            (run_linear_with(&w, &x0, 20 * n * n, Recording::ErrorsOnly)?, Envelope::MinWeight, env)
        }
        ConsensusProtocol::LazyMetropolis => {
            let w = lazy_metropolis_weights(&g);
            let env = EnvelopeParams { eta: Some(w.eta()), n, u: n };
            (run_linear_with(&w, &x0, 20 * n * n, Recording::ErrorsOnly)?, Envelope::LazyMetropolis, env)
        }
    };
    Ok(ScalingRow {
        n,
        protocol: protocol.name(),
        time_to_eps: time_to_epsilon(&trace, eps)?,
        bound_rounds: kind_bound.rounds_to(&env, eps)?,
        rounds_run: trace.rounds,
    })
}
