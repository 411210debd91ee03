//! Plain and momentum-accelerated average consensus, squared-error tracking,
//! and the closed-form contraction envelopes.

use std::fmt::Write as _;

use crate::error::{check_len, Error, Result};
use crate::graph::Graph;
use crate::weights::{lazy_metropolis_coefficient, WeightMatrix};

/// Additive slack used when comparing a trace against an envelope.
pub const BOUND_SLACK: f64 = 1e-12;

/// Upper bound `U ≥ n` known to every node, and the momentum coefficient
/// `σ = 1 − 2/(9U + 1)` derived from it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcceleratedParams {
    u: usize,
    sigma: f64,
}

impl AcceleratedParams {
    pub fn new(u: usize) -> Result<Self> {
        if u == 0 {
            return Err(Error::Parameter("U must be a positive integer".into()));
        }
        Ok(AcceleratedParams {
            u,
            sigma: 1.0 - 2.0 / (9.0 * u as f64 + 1.0),
        })
    }

    /// Overrides σ. Only useful for algebraic checks such as the σ = 0 reduction.
    pub fn with_sigma(u: usize, sigma: f64) -> Result<Self> {
        if u == 0 || !(0.0..1.0).contains(&sigma) {
            return Err(Error::Parameter(format!(
                "need U >= 1 and 0 <= sigma < 1, got U={u}, sigma={sigma}"
            )));
        }
        Ok(AcceleratedParams { u, sigma })
    }

    pub fn u(&self) -> usize {
        self.u
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub(crate) fn check_covers(&self, n: usize) -> Result<()> {
        if self.u < n {
            Err(Error::Parameter(format!("U = {} is smaller than n = {n}", self.u)))
        } else {
            Ok(())
        }
    }
}

/// Precomputed off-diagonal lazy Metropolis coefficients of a graph.
///
/// `apply` computes `x_i + Σ_{j ∈ N(i)} (x_j − x_i) / (2 max(d(i), d(j)))`.
#[derive(Debug, Clone)]
pub(crate) struct LazyDiffusion {
    rows: Vec<Vec<(usize, f64)>>,
}

impl LazyDiffusion {
    pub(crate) fn new(g: &Graph) -> Self {
        let rows = (0..g.len())
            .map(|i| {
                g.neighbors(i)
                    .iter()
                    .map(|&j| (j, lazy_metropolis_coefficient(g, i, j)))
                    .collect()
            })
            .collect();
        LazyDiffusion { rows }
    }

    pub(crate) fn apply(&self, i: usize, x: &[f64]) -> f64 {
        let xi = x[i];
        xi + self.rows[i].iter().map(|&(j, c)| c * (x[j] - xi)).sum::<f64>()
    }
}

/// How much of a run to keep in memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Recording {
    /// Every round's vectors.
    #[default]
    Full,
    /// Only the squared-error series and the final state.
    ErrorsOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusTrace {
    pub rounds: usize,
    /// `x(0), …, x(T)`; empty under [`Recording::ErrorsOnly`].
    pub x_history: Vec<Vec<f64>>,
    /// `y(0), …, y(T)` for the accelerated scheme; empty otherwise.
    pub y_history: Vec<Vec<f64>>,
    /// Average of `x(0)`, fixed for the whole run.
    pub initial_average: f64,
    /// `E(0), …, E(T)` measured on `x(t)`.
    pub squared_errors: Vec<f64>,
    /// Per-round `(min_i x_i, max_i x_i)`.
    pub x_range: Vec<(f64, f64)>,
    pub final_x: Vec<f64>,
    /// Final `y` for the accelerated scheme; empty otherwise.
    pub final_y: Vec<f64>,
}

impl ConsensusTrace {
    /// CSV with columns `t,E,x_min,x_max` followed by `x_1..x_n` when
    /// `with_values` is set (requires a full recording).
    pub fn to_csv(&self, with_values: bool) -> Result<String> {
        if with_values && self.x_history.len() != self.rounds + 1 {
            return Err(Error::State("per-node values were not recorded".into()));
        }
        let n = self.final_x.len();
        let mut out = String::from("t,E,x_min,x_max");
        if with_values {
            for i in 1..=n {
                write!(out, ",x_{i}").unwrap();
            }
        }
        out.push('\n');
        for t in 0..=self.rounds {
            let e = self.squared_errors[t];
            let (lo, hi) = self.x_range[t];
            write!(out, "{t},{e},{lo},{hi}").unwrap();
            if with_values {
                for v in &self.x_history[t] {
                    write!(out, ",{v}").unwrap();
                }
            }
            out.push('\n');
        }
        Ok(out)
    }
}

fn min_max(x: &[f64]) -> (f64, f64) {
    x.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// `Σ_i (x_i − x̄)²`.
pub fn squared_error(x: &[f64], xbar: f64) -> f64 {
    x.iter().map(|&v| (v - xbar) * (v - xbar)).sum()
}

/// One round of `x_i ← Σ_j a_ij x_j`.
pub fn step_linear(w: &WeightMatrix, x: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; x.len()];
    w.apply_into(x, &mut out)?;
    Ok(out)
}

pub fn run_linear(w: &WeightMatrix, x0: &[f64], rounds: usize) -> Result<ConsensusTrace> {
    run_linear_with(w, x0, rounds, Recording::Full)
}

pub fn run_linear_with(
    w: &WeightMatrix,
    x0: &[f64],
    rounds: usize,
    recording: Recording,
) -> Result<ConsensusTrace> {
    check_len(w.dim(), x0.len())?;
    let xbar = mean(x0);
    let mut x = x0.to_vec();
    let mut next = vec![0.0; x.len()];
    let mut squared_errors = Vec::with_capacity(rounds + 1);
    let mut x_range = Vec::with_capacity(rounds + 1);
    let mut x_history = Vec::new();
    squared_errors.push(squared_error(&x, xbar));
    x_range.push(min_max(&x));
    if recording == Recording::Full {
        x_history.reserve(rounds + 1);
        x_history.push(x.clone());
    }
    for _ in 0..rounds {
        w.apply_into(&x, &mut next)?;
        std::mem::swap(&mut x, &mut next);
        squared_errors.push(squared_error(&x, xbar));
        x_range.push(min_max(&x));
        if recording == Recording::Full {
            x_history.push(x.clone());
        }
    }
    Ok(ConsensusTrace {
        rounds,
        x_history,
        y_history: Vec::new(),
        initial_average: xbar,
        squared_errors,
        x_range,
        final_x: x,
        final_y: Vec::new(),
    })
}

pub fn run_accelerated(
    g: &Graph,
    params: AcceleratedParams,
    x0: &[f64],
    rounds: usize,
) -> Result<ConsensusTrace> {
    run_accelerated_with(g, params, x0, rounds, Recording::Full)
}

/// Momentum consensus:
///
/// ```text
/// y_i(t+1) = x_i(t) + Σ_{j ∈ N(i)} (x_j(t) − x_i(t)) / (2 max(d(i), d(j)))
/// x_i(t+1) = y_i(t+1) + σ (y_i(t+1) − y_i(t))
/// ```
///
/// with `y(0) = x(0)`. The squared error is measured on `x(t)`.
pub fn run_accelerated_with(
    g: &Graph,
    params: AcceleratedParams,
    x0: &[f64],
    rounds: usize,
    recording: Recording,
) -> Result<ConsensusTrace> {
    check_len(g.len(), x0.len())?;
    params.check_covers(g.len())?;
    let diffusion = LazyDiffusion::new(g);
    let sigma = params.sigma();
    let n = x0.len();
    let xbar = mean(x0);

    let mut x = x0.to_vec();
    let mut y = x0.to_vec();
    let mut y_next = vec![0.0; n];
    let mut squared_errors = Vec::with_capacity(rounds + 1);
    let mut x_range = Vec::with_capacity(rounds + 1);
    let (mut x_history, mut y_history) = (Vec::new(), Vec::new());
    squared_errors.push(squared_error(&x, xbar));
    x_range.push(min_max(&x));
    if recording == Recording::Full {
        x_history.push(x.clone());
        y_history.push(y.clone());
    }
    for _ in 0..rounds {
        for (i, yn) in y_next.iter_mut().enumerate() {
            *yn = diffusion.apply(i, &x);
        }
        for i in 0..n {
            x[i] = y_next[i] + sigma * (y_next[i] - y[i]);
        }
        std::mem::swap(&mut y, &mut y_next);
        squared_errors.push(squared_error(&x, xbar));
        x_range.push(min_max(&x));
        if recording == Recording::Full {
            x_history.push(x.clone());
            y_history.push(y.clone());
        }
    }
    Ok(ConsensusTrace {
        rounds,
        x_history,
        y_history,
        initial_average: xbar,
        squared_errors,
        x_range,
        final_x: x,
        final_y: y,
    })
}

/// First round with `E(t) ≤ eps · E(0)`, or `None` if the trace never gets there.
pub fn time_to_epsilon(trace: &ConsensusTrace, eps: f64) -> Result<Option<usize>> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Parameter(format!("eps must lie in (0, 1), got {eps}")));
    }
    let e0 = trace.squared_errors[0];
    if e0 <= 0.0 {
        return Err(Error::Undefined("E(0) = 0: already at consensus".into()));
    }
    Ok(trace.squared_errors.iter().position(|&e| e <= eps * e0))
}

/// Which closed-form contraction envelope to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Envelope {
    /// `(1 − η/(2n²))^t` for any valid doubly stochastic matrix.
    MinWeight,
    /// `(1 − 1/(37 n²))^t` for lazy Metropolis weights.
    LazyMetropolis,
    /// `18 (1 − 1/(9U))^t` for the momentum scheme.
    Accelerated,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnvelopeParams {
    pub eta: Option<f64>,
    pub n: usize,
    pub u: usize,
}

impl Envelope {
    /// Prefactor and per-round contraction `(C, q)` with envelope `C · q^t`.
    fn shape(self, p: &EnvelopeParams) -> Result<(f64, f64)> {
        match self {
            Envelope::MinWeight => {
                let eta = p
                    .eta
                    .ok_or_else(|| Error::Parameter("min-weight envelope needs eta".into()))?;
                Ok((1.0, eta / (2.0 * sq(p.n))))
            }
            Envelope::LazyMetropolis => Ok((1.0, 1.0 / (37.0 * sq(p.n)))),
            Envelope::Accelerated => {
                if p.u == 0 {
                    return Err(Error::Parameter("accelerated envelope needs U >= 1".into()));
                }
                Ok((18.0, 1.0 / (9.0 * p.u as f64)))
            }
        }
    }

    /// Envelope value after `t` rounds (multiplies `E(0)`).
    pub fn value(self, p: &EnvelopeParams, t: usize) -> Result<f64> {
        let (prefactor, c) = self.shape(p)?;
        Ok(prefactor * ((t as f64) * (-c).ln_1p()).exp())
    }

    /// Smallest `t` with envelope value `≤ eps`.
    pub fn rounds_to(self, p: &EnvelopeParams, eps: f64) -> Result<usize> {
        let (prefactor, c) = self.shape(p)?;
        if prefactor <= eps {
            return Ok(0);
        }
        let t = ((eps / prefactor).ln() / (-c).ln_1p()).ceil();
        Ok(t.max(0.0) as usize)
    }
}

fn sq(n: usize) -> f64 {
    (n as f64) * (n as f64)
}

pub fn bound_value(kind: Envelope, params: &EnvelopeParams, t: usize) -> Result<f64> {
    kind.value(params, t)
}

/// First round where `E(t) > envelope(t)·E(0) + BOUND_SLACK`, if any.
pub fn first_envelope_violation(
    trace: &ConsensusTrace,
    kind: Envelope,
    params: &EnvelopeParams,
) -> Result<Option<usize>> {
    let e0 = trace.squared_errors[0];
    let (prefactor, c) = kind.shape(params)?;
    let log_q = (-c).ln_1p();
    Ok(trace
        .squared_errors
        .iter()
        .enumerate()
        .position(|(t, &e)| e > prefactor * (t as f64 * log_q).exp() * e0 + BOUND_SLACK))
}
