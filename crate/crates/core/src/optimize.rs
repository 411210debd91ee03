//! Distributed minimization of `Σ_i f_i(θ)` over scalar θ, where node `i`
//! only knows its own convex `f_i`.
//!
//! Two schemes are provided: consensus with a local subgradient step
//! ([`run_baseline`]) and the same idea run through the momentum consensus
//! scheme with a step size tied to the horizon ([`run_accelerated_opt`]).

use crate::consensus::{AcceleratedParams, LazyDiffusion};
use crate::error::{check_len, Error, Result};
use crate::graph::{make_line, make_lollipop, Graph};
use crate::weights::WeightMatrix;

/// Per-node convex functions exposed through value and subgradient oracles.
///
/// Implementations must be pure functions of their arguments.
pub trait ObjectiveSet: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn value(&self, node: usize, theta: f64) -> f64;

    /// Some element of `∂f_node(θ)`.
    fn subgradient(&self, node: usize, theta: f64) -> f64;

    /// `L` with `|subgradient(i, θ)| ≤ L` everywhere.
    fn subgradient_bound(&self) -> f64;

    /// A known minimizer of `(1/n) Σ f_i`, if any.
    fn optimum_hint(&self) -> Option<f64> {
        None
    }
}

/// `f_i(θ) = |θ − w_i|`; the minimizers of the sum are the medians of `w`.
#[derive(Debug, Clone, PartialEq)]
pub struct AbsoluteDeviation {
    targets: Vec<f64>,
}

impl AbsoluteDeviation {
    pub fn new(targets: Vec<f64>) -> Self {
        AbsoluteDeviation { targets }
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }
}

impl ObjectiveSet for AbsoluteDeviation {
    fn len(&self) -> usize {
        self.targets.len()
    }

    fn value(&self, node: usize, theta: f64) -> f64 {
        (theta - self.targets[node]).abs()
    }

    /// Zero at the kink.
    fn subgradient(&self, node: usize, theta: f64) -> f64 {
        let d = theta - self.targets[node];
        if d > 0.0 {
            1.0
        } else if d < 0.0 {
            -1.0
        } else {
            0.0
        }
    }

    fn subgradient_bound(&self) -> f64 {
        1.0
    }

    fn optimum_hint(&self) -> Option<f64> {
        (!self.targets.is_empty()).then(|| median(&self.targets))
    }
}

/// `f_i ≡ 0`. Turns either scheme into pure consensus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ZeroObjective(pub usize);

impl ObjectiveSet for ZeroObjective {
    fn len(&self) -> usize {
        self.0
    }

    fn value(&self, _: usize, _: f64) -> f64 {
        0.0
    }

    fn subgradient(&self, _: usize, _: f64) -> f64 {
        0.0
    }

    fn subgradient_bound(&self) -> f64 {
        1.0
    }

    fn optimum_hint(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// Lower middle order statistic for even counts.
pub fn median(points: &[f64]) -> f64 {
    assert!(!points.is_empty(), "median of an empty set");
    let mut sorted = points.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted[(sorted.len() - 1) / 2]
}

/// `(1/n) Σ |θ_i − median(θ)|`.
pub fn dispersion(points: &[f64]) -> f64 {
    let m = median(points);
    points.iter().map(|&p| (p - m).abs()).sum::<f64>() / points.len() as f64
}

/// `(1/n) Σ f_i(θ_i) − f(w*)` with `f = (1/n) Σ f_i`.
pub fn err_metric(obj: &dyn ObjectiveSet, points: &[f64], w_star: Option<f64>) -> Result<f64> {
    check_len(obj.len(), points.len())?;
    let w_star = w_star
        .or_else(|| obj.optimum_hint())
        .ok_or_else(|| Error::config("w_star", "no minimizer supplied and the objective has no hint"))?;
    let n = points.len() as f64;
    let at_points: f64 = points.iter().enumerate().map(|(i, &p)| obj.value(i, p)).sum();
    let at_opt: f64 = (0..points.len()).map(|i| obj.value(i, w_star)).sum();
    Ok((at_points - at_opt) / n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptTrace {
    pub rounds: usize,
    /// `x(0), …, x(T)`.
    pub x_history: Vec<Vec<f64>>,
    /// `y(0), …, y(T)`; empty for the baseline scheme, whose only register is `x`.
    pub y_history: Vec<Vec<f64>>,
    /// `z(1), …, z(T)`; empty for the baseline scheme.
    pub z_history: Vec<Vec<f64>>,
    /// `ŷ(T) = (1/T) Σ_{k=1..T} y(k)` (of `x(k)` for the baseline). Equals
    /// the starting point when `T = 0`.
    pub running_average: Vec<f64>,
    /// `Disp(ŷ(t))` for `t = 1..T`.
    pub dispersion: Vec<f64>,
    /// `Err(ŷ(t))` for `t = 1..T`; empty when no minimizer is known.
    pub error: Vec<f64>,
    /// Step size used by the run.
    pub step: f64,
}

impl OptTrace {
    /// Register that is averaged: `y` for the accelerated scheme, `x` for the baseline.
    pub fn averaged_register(&self) -> &[Vec<f64>] {
        if self.y_history.is_empty() {
            &self.x_history
        } else {
            &self.y_history
        }
    }
}

struct Averager<'a> {
    obj: &'a dyn ObjectiveSet,
    w_star: Option<f64>,
    avg: Vec<f64>,
    count: usize,
    dispersion: Vec<f64>,
    error: Vec<f64>,
}

impl<'a> Averager<'a> {
    fn new(obj: &'a dyn ObjectiveSet, start: &[f64], rounds: usize) -> Self {
        let w_star = obj.optimum_hint();
        Averager {
            obj,
            w_star,
            avg: start.to_vec(),
            count: 0,
            dispersion: Vec::with_capacity(rounds),
            error: Vec::with_capacity(if w_star.is_some() { rounds } else { 0 }),
        }
    }

    fn push(&mut self, sample: &[f64]) {
        self.count += 1;
        let t = self.count as f64;
        for (a, &s) in self.avg.iter_mut().zip(sample) {
            *a = if self.count == 1 { s } else { ((t - 1.0) * *a + s) / t };
        }
        self.dispersion.push(dispersion(&self.avg));
        if let Some(w) = self.w_star {
            self.error
                .push(err_metric(self.obj, &self.avg, Some(w)).expect("lengths checked at start"));
        }
    }
}

/// `x_i(t+1) = Σ_j a_ij x_j(t) − α s_i(t)` with `s_i(t) ∈ ∂f_i(x_i(t))`.
pub fn run_baseline(
    w: &WeightMatrix,
    obj: &dyn ObjectiveSet,
    alpha_step: f64,
    x0: &[f64],
    rounds: usize,
) -> Result<OptTrace> {
    let n = w.dim();
    check_len(n, obj.len())?;
    check_len(n, x0.len())?;
    if !(alpha_step > 0.0 && alpha_step.is_finite()) {
        return Err(Error::Parameter(format!("alpha_step must be positive, got {alpha_step}")));
    }
    let mut x = x0.to_vec();
    let mut mixed = vec![0.0; n];
    let mut x_history = Vec::with_capacity(rounds + 1);
    x_history.push(x.clone());
    let mut averager = Averager::new(obj, x0, rounds);
    for _ in 0..rounds {
        w.apply_into(&x, &mut mixed)?;
        for i in 0..n {
            x[i] = mixed[i] - alpha_step * obj.subgradient(i, x[i]);
        }
        averager.push(&x);
        x_history.push(x.clone());
    }
    Ok(OptTrace {
        rounds,
        x_history,
        y_history: Vec::new(),
        z_history: Vec::new(),
        running_average: averager.avg,
        dispersion: averager.dispersion,
        error: averager.error,
        step: alpha_step,
    })
}

/// `β = 1/(L √(U T))`.
pub fn accelerated_step(l: f64, u: usize, rounds: usize) -> Result<f64> {
    if rounds == 0 {
        return Err(Error::Parameter("T must be at least 1 to fix the step size".into()));
    }
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::Parameter(format!("subgradient bound L must be positive, got {l}")));
    }
    Ok(1.0 / (l * ((u as f64) * (rounds as f64)).sqrt()))
}

/// Momentum-accelerated subgradient scheme:
///
/// ```text
/// y_i(t+1) = x_i(t) + ½ Σ_{j ∈ N(i)} (x_j(t) − x_i(t)) / max(d(i), d(j)) − β g_i(t)
/// z_i(t+1) = y_i(t) − β g_i(t)
/// x_i(t+1) = y_i(t+1) + σ (y_i(t+1) − z_i(t+1))
/// ```
///
/// with `g_i(t) ∈ ∂f_i(y_i(t))`, `x(0) = y(0) = x0` and `β = 1/(L√(UT))`
/// fixed for the run.
pub fn run_accelerated_opt(
    g: &Graph,
    obj: &dyn ObjectiveSet,
    params: AcceleratedParams,
    x0: &[f64],
    rounds: usize,
) -> Result<OptTrace> {
    let n = g.len();
    check_len(n, obj.len())?;
    check_len(n, x0.len())?;
    params.check_covers(n)?;
    let beta = accelerated_step(obj.subgradient_bound(), params.u(), rounds)?;
    let sigma = params.sigma();
    let diffusion = LazyDiffusion::new(g);

    let mut x = x0.to_vec();
    let mut y = x0.to_vec();
    let mut y_next = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut x_history = Vec::with_capacity(rounds + 1);
    let mut y_history = Vec::with_capacity(rounds + 1);
    let mut z_history = Vec::with_capacity(rounds);
    x_history.push(x.clone());
    y_history.push(y.clone());
    let mut averager = Averager::new(obj, x0, rounds);

    for _ in 0..rounds {
        for i in 0..n {
            let step = beta * obj.subgradient(i, y[i]);
            y_next[i] = diffusion.apply(i, &x) - step;
            z[i] = y[i] - step;
        }
        for i in 0..n {
            x[i] = y_next[i] + sigma * (y_next[i] - z[i]);
        }
        std::mem::swap(&mut y, &mut y_next);
        averager.push(&y);
        x_history.push(x.clone());
        y_history.push(y.clone());
        z_history.push(z.clone());
    }
    Ok(OptTrace {
        rounds,
        x_history,
        y_history,
        z_history,
        running_average: averager.avg,
        dispersion: averager.dispersion,
        error: averager.error,
        step: beta,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MedianGraph {
    Line,
    Lollipop,
}

impl MedianGraph {
    pub fn name(self) -> &'static str {
        match self {
            MedianGraph::Line => "line",
            MedianGraph::Lollipop => "lollipop",
        }
    }

    pub fn build(self, n: usize) -> Result<Graph> {
        match self {
            MedianGraph::Line => make_line(n),
            MedianGraph::Lollipop => make_lollipop(n),
        }
    }
}

/// `w_i = i mod 10` for `i = 1..n/2` and `w_{n/2+i} = −w_i`.
pub fn median_targets(n: usize) -> Result<Vec<f64>> {
    if n < 2 || n % 2 != 0 {
        return Err(Error::InvalidSize(format!("median data needs an even n >= 2, got {n}")));
    }
    let half: Vec<f64> = (1..=n / 2).map(|i| (i % 10) as f64).collect();
    Ok(half.iter().copied().chain(half.iter().map(|w| -w)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MedianResult {
    pub n: usize,
    pub graph: &'static str,
    pub rounds: usize,
    pub step: f64,
    pub sigma: f64,
    /// `(1/n) ||ŷ(T)||₁`, the distance to the median 0.
    pub avg_deviation: f64,
    pub disp: f64,
    pub err: f64,
}

/// Distributed median computation with `U = n` and `x(0) = w`, where the
/// data are symmetric about 0 so 0 is a median.
pub fn median_experiment_on(g: &Graph, graph: &'static str, rounds: usize) -> Result<MedianResult> {
    let n = g.len();
    let targets = median_targets(n)?;
    let obj = AbsoluteDeviation::new(targets.clone());
    let params = AcceleratedParams::new(n)?;
    let trace = run_accelerated_opt(g, &obj, params, &targets, rounds)?;
    let avg = &trace.running_average;
    Ok(MedianResult {
        n,
        graph,
        rounds,
        step: trace.step,
        sigma: params.sigma(),
        avg_deviation: avg.iter().map(|v| v.abs()).sum::<f64>() / n as f64,
        disp: dispersion(avg),
        err: err_metric(&obj, avg, Some(0.0))?,
    })
}

/// [`median_experiment_on`] for the line or lollipop graph, with `T = 4n`
/// unless `rounds` is given.
pub fn median_experiment(kind: MedianGraph, n: usize, rounds: Option<usize>) -> Result<MedianResult> {
    let g = kind.build(n)?;
    median_experiment_on(&g, kind.name(), rounds.unwrap_or(4 * n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consensus::run_linear;
    use crate::graph::{make_family, Family};
    use crate::weights::{lazy_metropolis_weights, uniform_epsilon_weights};

    #[test]
    fn median_and_dispersion_examples() {
        assert_eq!(dispersion(&[4.0, 4.0, 4.0]), 0.0);
        assert_eq!(dispersion(&[0.0, 0.0, 3.0]), 1.0);
        assert_eq!(median(&[2.0, 0.0]), 0.0);
        assert_eq!(dispersion(&[0.0, 2.0]), 1.0);
    }

    #[test]
    fn err_examples() {
        let obj = AbsoluteDeviation::new(vec![-1.0, 1.0]);
        assert_eq!(err_metric(&obj, &[0.0, 0.0], Some(0.0)).unwrap(), 0.0);
        assert_eq!(err_metric(&obj, &[-1.0, -1.0], Some(-1.0)).unwrap(), 0.0);
        let abs = AbsoluteDeviation::new(vec![0.0, 0.0]);
        assert_eq!(err_metric(&abs, &[1.0, -1.0], Some(0.0)).unwrap(), 1.0);
        assert!(err_metric(&ZeroObjective(2), &[1.0], None).is_err());

        struct NoHint;
        impl ObjectiveSet for NoHint {
            fn len(&self) -> usize {
                1
            }
            fn value(&self, _: usize, t: f64) -> f64 {
                t * t
            }
            fn subgradient(&self, _: usize, t: f64) -> f64 {
                2.0 * t
            }
            fn subgradient_bound(&self) -> f64 {
                f64::INFINITY
            }
        }
        assert!(matches!(err_metric(&NoHint, &[1.0], None), Err(Error::Config { .. })));
    }

    #[test]
    fn baseline_zero_objective_is_plain_consensus() {
        let g = make_line(6).unwrap();
        let w = lazy_metropolis_weights(&g);
        let x0 = [3.0, -1.0, 4.0, 1.0, -5.0, 9.0];
        let opt = run_baseline(&w, &ZeroObjective(6), 0.3, &x0, 30).unwrap();
        let plain = run_linear(&w, &x0, 30).unwrap();
        assert_eq!(opt.x_history, plain.x_history);
        assert!(opt.z_history.is_empty());
    }

    #[test]
    fn baseline_single_node_walks_to_zero() {
        let g = Graph::single_node();
        let w = lazy_metropolis_weights(&g);
        let obj = AbsoluteDeviation::new(vec![0.0]);
        let trace = run_baseline(&w, &obj, 1.0, &[5.0], 8).unwrap();
        // scalar subgradient descent on |θ| with unit step
        let mut theta = 5.0f64;
        for t in 1..=8 {
            theta -= obj.subgradient(0, theta);
            assert_eq!(trace.x_history[t][0], theta);
        }
        let seq: Vec<f64> = trace.x_history.iter().map(|x| x[0]).collect();
        assert_eq!(seq, vec![5.0, 4.0, 3.0, 2.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn baseline_two_node_median() {
        let g = make_family(Family::Complete, 2, 0).unwrap();
        let w = uniform_epsilon_weights(&g, 0.5).unwrap();
        let obj = AbsoluteDeviation::new(vec![-1.0, 1.0]);
        let alpha = 1e-3;
        let trace = run_baseline(&w, &obj, alpha, &[5.0, -7.0], 20_000).unwrap();
        let last = trace.x_history.last().unwrap();
        assert!((last[0] - last[1]).abs() <= 4.0 * alpha);
        for &v in last {
            assert!((-1.0 - 4.0 * alpha..=1.0 + 4.0 * alpha).contains(&v), "{v}");
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        let g = make_line(3).unwrap();
        let w = lazy_metropolis_weights(&g);
        assert!(run_baseline(&w, &ZeroObjective(3), 0.0, &[0.0; 3], 3).is_err());
        let params = AcceleratedParams::new(3).unwrap();
        assert!(matches!(
            run_accelerated_opt(&g, &ZeroObjective(3), params, &[0.0; 3], 0),
            Err(Error::Parameter(_))
        ));
        assert!(run_accelerated_opt(&g, &ZeroObjective(2), params, &[0.0; 3], 3).is_err());
    }

    #[test]
    fn accelerated_single_node_at_optimum_stays() {
        let g = Graph::single_node();
        let obj = AbsoluteDeviation::new(vec![0.0]);
        let trace = run_accelerated_opt(&g, &obj, AcceleratedParams::new(1).unwrap(), &[0.0], 25).unwrap();
        assert!(trace.y_history.iter().all(|y| y[0] == 0.0));
        assert_eq!(trace.running_average, vec![0.0]);
    }

    #[test]
    fn running_average_matches_direct_sum() {
        let g = make_line(10).unwrap();
        let obj = AbsoluteDeviation::new(median_targets(10).unwrap());
        let trace =
            run_accelerated_opt(&g, &obj, AcceleratedParams::new(10).unwrap(), obj.targets(), 57).unwrap();
        for i in 0..10 {
            let direct = trace.y_history[1..].iter().map(|y| y[i]).sum::<f64>() / 57.0;
            assert!((trace.running_average[i] - direct).abs() < 1e-9);
        }
        assert_eq!(trace.dispersion.len(), 57);
        assert_eq!(trace.error.len(), 57);
    }

    #[test]
    fn accelerated_beats_baseline_on_line10() {
        let g = make_line(10).unwrap();
        let targets = vec![1.0, 2.0, 3.0, 4.0, 5.0, -1.0, -2.0, -3.0, -4.0, -5.0];
        let obj = AbsoluteDeviation::new(targets.clone());
        let params = AcceleratedParams::new(10).unwrap();
        let fast = run_accelerated_opt(&g, &obj, params, &targets, 40).unwrap();
        let slow = run_baseline(&lazy_metropolis_weights(&g), &obj, fast.step, &targets, 40).unwrap();
        let (d_fast, d_slow) = (dispersion(&fast.running_average), dispersion(&slow.running_average));
        assert!(d_fast.is_finite());
        assert!(d_fast < d_slow, "accelerated {d_fast} vs baseline {d_slow}");
    }

    #[test]
    fn median_targets_are_symmetric() {
        for n in [2, 4, 20, 38, 200] {
            let w = median_targets(n).unwrap();
            let mut sorted = w.clone();
            sorted.sort_by(f64::total_cmp);
            let mut negated: Vec<f64> = w.iter().map(|v| -v).collect();
            negated.sort_by(f64::total_cmp);
            assert_eq!(sorted, negated);
            let f0: f64 = w.iter().map(|v| v.abs()).sum();
            let f_med: f64 = w.iter().map(|v| (v - median(&w)).abs()).sum();
            assert_eq!(f0, f_med);
        }
        assert_eq!(&median_targets(20).unwrap()[..10], &[1., 2., 3., 4., 5., 6., 7., 8., 9., 0.]);
        assert!(median_targets(7).is_err());
    }

    #[test]
    fn median_line20_regression() {
        // Pinned from the first verified run.
        let r = median_experiment(MedianGraph::Line, 20, None).unwrap();
        assert_eq!(r.rounds, 80);
        assert!((r.avg_deviation - 0.12769066772132395).abs() < 1e-12, "{}", r.avg_deviation);
        let big = median_experiment(MedianGraph::Line, 200, None).unwrap();
        assert!(big.avg_deviation <= 3.0 * r.avg_deviation);
    }
}
