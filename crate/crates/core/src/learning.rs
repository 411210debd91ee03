//! Non-Bayesian distributed hypothesis testing over a finite hypothesis set.
//!
//! Each node mixes its neighbors' beliefs geometrically and multiplies in the
//! likelihood of its newest private observation. All arithmetic is done on
//! log-beliefs; normalization uses a max-shifted log-sum-exp.
//!
//! Two update rules are implemented:
//!
//! * [`step_learndyn`]: `μ_i^{t+1}(θ) ∝ ℓ^i(S_i^{t+1}|θ) Π_j μ_j^t(θ)^{a_ij}`.
//! * [`step_accelerated_beliefs`]: the momentum version, which in log space is
//!   the accelerated consensus iteration driven by log-likelihoods.

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::consensus::AcceleratedParams;
use crate::error::{check_len, Error, Result};
use crate::graph::Graph;
use crate::weights::{lazy_metropolis_weights, WeightMatrix};

const DIST_TOL: f64 = 1e-12;
/// Costs within this distance of the minimum count as minimizers.
const COST_TIE_TOL: f64 = 1e-12;

/// `ln Σ exp(v)`, shifted by the maximum. `-∞` for an empty or all `-∞` input.
///
/// Terms are added in ascending order, so the result does not depend on the
/// order of `values`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let mut terms: Vec<f64> = values.iter().map(|v| (v - max).exp()).collect();
    terms.sort_by(f64::total_cmp);
    max + terms.iter().sum::<f64>().ln()
}

/// `D_KL(f || l)` with `0 · ln(0/q) = 0`.
pub fn kl_divergence(f: &[f64], l: &[f64]) -> f64 {
    f.iter()
        .zip(l)
        .filter(|(&p, _)| p > 0.0)
        .map(|(&p, &q)| p * (p / q).ln())
        .sum()
}

/// Observation model of one node on a finite alphabet.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct NodeModel {
    /// True distribution `f^i` over the alphabet.
    pub truth: Vec<f64>,
    /// `likelihoods[p][s] = ℓ^i(s | θ_p)`.
    pub likelihoods: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisModel {
    k: usize,
    nodes: Vec<NodeModel>,
    alpha_floor: f64,
    /// `log_lik[i][s][p]`, laid out for per-sample lookup.
    log_lik: Vec<Vec<Vec<f64>>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    hypotheses: Option<usize>,
    alpha_floor: Option<f64>,
    node: Vec<NodeModel>,
}

fn check_distribution(what: &str, dist: &[f64]) -> Result<()> {
    if dist.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
        return Err(Error::Model(format!("{what} has a negative or non-finite entry")));
    }
    let sum: f64 = dist.iter().sum();
    if (sum - 1.0).abs() > DIST_TOL {
        return Err(Error::Model(format!("{what} sums to {sum}, not 1")));
    }
    Ok(())
}

impl HypothesisModel {
    /// Validates the model. When `alpha_floor` is `None`, the largest
    /// admissible floor (smallest likelihood on the support of the truth) is used.
    pub fn new(nodes: Vec<NodeModel>, alpha_floor: Option<f64>) -> Result<Self> {
        let first = nodes
            .first()
            .ok_or_else(|| Error::Model("model has no nodes".into()))?;
        let k = first.likelihoods.len();
        if k == 0 {
            return Err(Error::Model("model has no hypotheses".into()));
        }
        let mut min_on_support = f64::INFINITY;
        for (i, node) in nodes.iter().enumerate() {
            let label = i + 1;
            if node.likelihoods.len() != k {
                return Err(Error::Model(format!(
                    "node {label} lists {} hypotheses, expected {k}",
                    node.likelihoods.len()
                )));
            }
            let alphabet = node.truth.len();
            if alphabet == 0 {
                return Err(Error::Model(format!("node {label} has an empty alphabet")));
            }
            check_distribution(&format!("truth of node {label}"), &node.truth)?;
            for (p, row) in node.likelihoods.iter().enumerate() {
                let what = format!("likelihood of node {label} under hypothesis {}", p + 1);
                if row.len() != alphabet {
                    return Err(Error::Model(format!(
                        "{what} has {} symbols, expected {alphabet}",
                        row.len()
                    )));
                }
                check_distribution(&what, row)?;
                for (s, &l) in row.iter().enumerate() {
                    if node.truth[s] > 0.0 {
                        min_on_support = min_on_support.min(l);
                    }
                }
            }
        }
        if min_on_support <= 0.0 {
            return Err(Error::Model(
                "a likelihood vanishes on the support of the true distribution".into(),
            ));
        }
        let alpha_floor = match alpha_floor {
            None => min_on_support,
            Some(a) if a > 0.0 && a <= min_on_support => a,
            Some(a) => {
                return Err(Error::Model(format!(
                    "alpha floor {a} must lie in (0, {min_on_support}]"
                )))
            }
        };
        let log_lik = nodes
            .iter()
            .map(|node| {
                (0..node.truth.len())
                    .map(|s| node.likelihoods.iter().map(|row| row[s].ln()).collect())
                    .collect()
            })
            .collect();
        Ok(HypothesisModel {
            k,
            nodes,
            alpha_floor,
            log_lik,
        })
    }

    /// Parses the TOML model file:
    ///
    /// ```toml
    /// hypotheses = 2          # optional cross-check
    /// alpha_floor = 0.2       # optional
    /// [[node]]
    /// truth = [0.5, 0.5]
    /// likelihoods = [[0.5, 0.5], [0.2, 0.8]]
    /// ```
    pub fn from_toml(text: &str) -> Result<Self> {
        let file: ModelFile = toml::from_str(text).map_err(|e| Error::Parse {
            line: e
                .span()
                .map(|s| text[..s.start].lines().count().max(1))
                .unwrap_or(0),
            message: e.message().to_string(),
        })?;
        let model = HypothesisModel::new(file.node, file.alpha_floor)?;
        if let Some(k) = file.hypotheses {
            if k != model.k {
                return Err(Error::Model(format!(
                    "header declares {k} hypotheses, rows define {}",
                    model.k
                )));
            }
        }
        Ok(model)
    }

    pub fn hypotheses(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn alpha_floor(&self) -> f64 {
        self.alpha_floor
    }

    pub fn node(&self, i: usize) -> &NodeModel {
        &self.nodes[i]
    }

    /// `ln ℓ^i(s|θ_p)` for all `p`, or an observation error when `s` is not
    /// in the support of node `i`'s true distribution.
    pub fn log_likelihoods(&self, i: usize, s: usize) -> Result<&[f64]> {
        let node = &self.nodes[i];
        match node.truth.get(s) {
            Some(&f) if f > 0.0 => Ok(&self.log_lik[i][s]),
            Some(_) => Err(Error::Observation(format!(
                "symbol {s} has zero probability at node {}",
                i + 1
            ))),
            None => Err(Error::Observation(format!(
                "symbol {s} is outside the alphabet of node {} (size {})",
                i + 1,
                node.truth.len()
            ))),
        }
    }

    /// Same model with hypotheses reordered: new hypothesis `q` is old `perm[q]`.
    pub fn permute_hypotheses(&self, perm: &[usize]) -> Result<Self> {
        check_len(self.k, perm.len())?;
        let nodes = self
            .nodes
            .iter()
            .map(|node| NodeModel {
                truth: node.truth.clone(),
                likelihoods: perm.iter().map(|&p| node.likelihoods[p].clone()).collect(),
            })
            .collect();
        HypothesisModel::new(nodes, Some(self.alpha_floor))
    }
}

/// `C(θ_p) = Σ_i D_KL(f^i || ℓ^i(·|θ_p))`.
pub fn kl_costs(m: &HypothesisModel) -> Vec<f64> {
    (0..m.k)
        .map(|p| {
            m.nodes
                .iter()
                .map(|node| kl_divergence(&node.truth, &node.likelihoods[p]))
                .sum()
        })
        .collect()
}

/// Hypotheses whose cost is minimal (up to a 1e-12 tie tolerance).
pub fn minimizers(costs: &[f64]) -> Vec<usize> {
    let min = costs.iter().copied().fold(f64::INFINITY, f64::min);
    (0..costs.len())
        .filter(|&p| costs[p] <= min + COST_TIE_TOL)
        .collect()
}

/// Second-smallest minus smallest cost; 0 when the minimum is shared.
pub fn gap(costs: &[f64]) -> Result<f64> {
    if costs.len() < 2 {
        return Err(Error::InvalidSize("the gap needs at least two hypotheses".into()));
    }
    let best = minimizers(costs);
    if best.len() >= 2 {
        return Ok(0.0);
    }
    let min = costs[best[0]];
    let second = costs
        .iter()
        .enumerate()
        .filter(|&(p, _)| p != best[0])
        .map(|(_, &c)| c)
        .fold(f64::INFINITY, f64::min);
    Ok(second - min)
}

/// `⌈48 (ln α)² ln(1/ρ) / (g/n)²⌉`.
pub fn sample_size_bound(rho: f64, alpha_floor: f64, g: f64, n: usize) -> Result<u64> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::Parameter(format!("rho must lie in (0, 1), got {rho}")));
    }
    if !(alpha_floor > 0.0 && alpha_floor <= 1.0) {
        return Err(Error::Parameter(format!("alpha floor must lie in (0, 1], got {alpha_floor}")));
    }
    if !(g > 0.0) {
        return Err(Error::Undefined("gap is zero: the best hypothesis is not unique".into()));
    }
    let rate = g / n as f64;
    let ln_alpha = alpha_floor.ln();
    Ok((48.0 * ln_alpha * ln_alpha * (1.0 / rho).ln() / (rate * rate)).ceil() as u64)
}

/// Log-beliefs of every node at round `t`, plus the round-`(t−1)` history the
/// accelerated rule needs.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefState {
    n: usize,
    k: usize,
    round: usize,
    log_beliefs: Vec<f64>,
    prev_log_beliefs: Vec<f64>,
    /// `ln ℓ^i(S_i^t|·)` used at round `t`; zero at `t = 0`.
    prev_log_lik: Vec<f64>,
}

impl BeliefState {
    /// Uniform beliefs `μ^0 = 1/k`, with `μ^{-1} = μ^0`.
    pub fn uniform(n: usize, k: usize) -> Self {
        let log_beliefs = vec![-(k as f64).ln(); n * k];
        BeliefState {
            n,
            k,
            round: 0,
            prev_log_beliefs: log_beliefs.clone(),
            log_beliefs,
            prev_log_lik: vec![0.0; n * k],
        }
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn nodes(&self) -> usize {
        self.n
    }

    pub fn hypotheses(&self) -> usize {
        self.k
    }

    pub fn log_beliefs(&self, i: usize) -> &[f64] {
        &self.log_beliefs[i * self.k..(i + 1) * self.k]
    }

    pub fn beliefs(&self, i: usize) -> Vec<f64> {
        self.log_beliefs(i).iter().map(|v| v.exp()).collect()
    }

    fn check_shape(&self, w: &WeightMatrix, samples: &[usize], m: &HypothesisModel) -> Result<()> {
        check_len(self.n, w.dim())?;
        check_len(self.n, samples.len())?;
        check_len(self.n, m.len())?;
        check_len(self.k, m.hypotheses())?;
        if self.prev_log_beliefs.len() != self.n * self.k || self.prev_log_lik.len() != self.n * self.k {
            return Err(Error::State("belief history is missing".into()));
        }
        Ok(())
    }

    fn gather_log_lik(&self, samples: &[usize], m: &HypothesisModel) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.n * self.k);
        for (i, &s) in samples.iter().enumerate() {
            out.extend_from_slice(m.log_likelihoods(i, s)?);
        }
        Ok(out)
    }

    fn advance(&self, mut unnormalized: Vec<f64>, log_lik: Vec<f64>) -> BeliefState {
        for row in unnormalized.chunks_mut(self.k) {
            let z = log_sum_exp(row);
            row.iter_mut().for_each(|v| *v -= z);
        }
        BeliefState {
            n: self.n,
            k: self.k,
            round: self.round + 1,
            log_beliefs: unnormalized,
            prev_log_beliefs: self.log_beliefs.clone(),
            prev_log_lik: log_lik,
        }
    }
}

/// `ln μ_i^{t+1} = ln ℓ^i(S_i^{t+1}|·) + Σ_j a_ij ln μ_j^t − normalizer`.
pub fn step_learndyn(
    w: &WeightMatrix,
    state: &BeliefState,
    samples: &[usize],
    m: &HypothesisModel,
) -> Result<BeliefState> {
    state.check_shape(w, samples, m)?;
    let k = state.k;
    let log_lik = state.gather_log_lik(samples, m)?;
    let mut next = log_lik.clone();
    for i in 0..state.n {
        let out = &mut next[i * k..(i + 1) * k];
        for &(j, a) in w.row(i) {
            for (o, &lb) in out.iter_mut().zip(state.log_beliefs(j)) {
                *o += a * lb;
            }
        }
    }
    Ok(state.advance(next, log_lik))
}

/// ```text
/// ln μ_i^{t+1} = ln ℓ^i(S_i^{t+1}|·) + (1+σ) Σ_j b_ij ln μ_j^t
///                − σ Σ_j b_ij (ln μ_j^{t−1} + ln ℓ^j(S_j^t|·)) − normalizer
/// ```
///
/// At `t = 0` the history is `μ^{-1} = μ^0` and the round-0 likelihood term
/// is zero, which is hypothesis-independent and drops out after normalization.
pub fn step_accelerated_beliefs(
    b: &WeightMatrix,
    params: AcceleratedParams,
    state: &BeliefState,
    samples: &[usize],
    m: &HypothesisModel,
) -> Result<BeliefState> {
    state.check_shape(b, samples, m)?;
    let (k, sigma) = (state.k, params.sigma());
    let log_lik = state.gather_log_lik(samples, m)?;
    let mut next = log_lik.clone();
    for i in 0..state.n {
        let out = &mut next[i * k..(i + 1) * k];
        for &(j, bij) in b.row(i) {
            let current = state.log_beliefs(j);
            let prev = &state.prev_log_beliefs[j * k..(j + 1) * k];
            let prev_lik = &state.prev_log_lik[j * k..(j + 1) * k];
            for p in 0..k {
                out[p] += (1.0 + sigma) * bij * current[p] - sigma * bij * (prev[p] + prev_lik[p]);
            }
        }
    }
    Ok(state.advance(next, log_lik))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Geometric mixing with the lazy Metropolis matrix.
    Learndyn,
    /// Momentum update with the lazy Metropolis matrix.
    Betu,
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "learndyn" => Ok(Scheme::Learndyn),
            "betu" => Ok(Scheme::Betu),
            other => Err(Error::config("scheme", format!("unknown scheme `{other}` (learndyn | betu)"))),
        }
    }
}

/// Independent per-node observation streams derived from `(seed, node)`.
pub struct SampleStreams {
    rngs: Vec<ChaCha8Rng>,
    dists: Vec<WeightedIndex<f64>>,
}

impl SampleStreams {
    pub fn new(m: &HypothesisModel, seed: u64) -> Result<Self> {
        let rngs = (0..m.len())
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                rng
            })
            .collect();
        let dists = m
            .nodes
            .iter()
            .map(|node| WeightedIndex::new(&node.truth).map_err(|e| Error::Model(e.to_string())))
            .collect::<Result<_>>()?;
        Ok(SampleStreams { rngs, dists })
    }

    pub fn draw(&mut self) -> Vec<usize> {
        self.rngs
            .iter_mut()
            .zip(&self.dists)
            .map(|(rng, d)| d.sample(rng))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearningRun {
    pub scheme: Scheme,
    pub costs: Vec<f64>,
    pub gap: f64,
    pub best: Vec<usize>,
    /// `max_i max_{θ_v ∉ best} ln μ_i^t(θ_v)` for `t = 0..T`; empty when
    /// every hypothesis is a minimizer.
    pub max_wrong_log_belief: Vec<f64>,
    /// Per round, the network-average belief in each hypothesis.
    pub mean_beliefs: Vec<Vec<f64>>,
    /// `max_{t ≥ T/2} [max-wrong log-belief(t) + (g/n)(t/2)]`, when `g > 0`.
    pub fitted_intercept: Option<f64>,
    pub final_state: BeliefState,
    pub n: usize,
}

impl LearningRun {
    /// `g / n`.
    pub fn rate(&self) -> f64 {
        self.gap / self.n as f64
    }

    /// Least-squares slope of the max-wrong log-belief over rounds `from..=T`.
    pub fn tail_slope(&self, from: usize) -> Option<f64> {
        let series = self.max_wrong_log_belief.get(from..)?;
        if series.len() < 2 {
            return None;
        }
        let len = series.len() as f64;
        let t_mean = from as f64 + (len - 1.0) / 2.0;
        let v_mean = series.iter().sum::<f64>() / len;
        let (mut num, mut den) = (0.0, 0.0);
        for (k, &v) in series.iter().enumerate() {
            let dt = (from + k) as f64 - t_mean;
            num += dt * (v - v_mean);
            den += dt * dt;
        }
        Some(num / den)
    }

    /// `max_{t ≥ from} [max-wrong log-belief(t) + (g/n)(t/2)]`.
    pub fn intercept_from(&self, from: usize) -> Option<f64> {
        let rate = self.rate();
        self.max_wrong_log_belief
            .iter()
            .enumerate()
            .skip(from)
            .map(|(t, &v)| v + rate * t as f64 / 2.0)
            .reduce(f64::max)
    }
}

/// Runs `rounds` rounds of belief dynamics with observations drawn from the
/// true distributions. Both schemes mix with the lazy Metropolis matrix.
pub fn run_learning(
    g: &Graph,
    m: &HypothesisModel,
    params: AcceleratedParams,
    rounds: usize,
    seed: u64,
    scheme: Scheme,
) -> Result<LearningRun> {
    let n = g.len();
    check_len(n, m.len())?;
    params.check_covers(n)?;
    let w = lazy_metropolis_weights(g);
    let costs = kl_costs(m);
    let best = minimizers(&costs);
    let gap = if m.hypotheses() >= 2 { gap(&costs)? } else { 0.0 };
    let wrong: Vec<usize> = (0..m.hypotheses()).filter(|p| !best.contains(p)).collect();

    let mut streams = SampleStreams::new(m, seed)?;
    let mut state = BeliefState::uniform(n, m.hypotheses());
    let mut max_wrong = Vec::new();
    let mut mean_beliefs = Vec::with_capacity(rounds + 1);
    let record = |state: &BeliefState, max_wrong: &mut Vec<f64>, means: &mut Vec<Vec<f64>>| {
        if !wrong.is_empty() {
            let worst = (0..n)
                .flat_map(|i| wrong.iter().map(move |&p| state.log_beliefs(i)[p]))
                .fold(f64::NEG_INFINITY, f64::max);
            max_wrong.push(worst);
        }
        let mut mean = vec![0.0; state.k];
        for i in 0..n {
            for (acc, b) in mean.iter_mut().zip(state.beliefs(i)) {
                *acc += b / n as f64;
            }
        }
        means.push(mean);
    };
    record(&state, &mut max_wrong, &mut mean_beliefs);
    for _ in 0..rounds {
        let samples = streams.draw();
        state = match scheme {
            Scheme::Learndyn => step_learndyn(&w, &state, &samples, m)?,
            Scheme::Betu => step_accelerated_beliefs(&w, params, &state, &samples, m)?,
        };
        record(&state, &mut max_wrong, &mut mean_beliefs);
    }

    let mut run = LearningRun {
        scheme,
        costs,
        gap,
        best,
        max_wrong_log_belief: max_wrong,
        mean_beliefs,
        fitted_intercept: None,
        final_state: state,
        n,
    };
    if gap > 0.0 {
        run.fitted_intercept = run.intercept_from(rounds.div_ceil(2));
    }
    Ok(run)
}
