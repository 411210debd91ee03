//! Independent reference implementations shared by the integration tests.
//! Everything here is dense and written from the defining formulas, without
//! touching the library's sparse code paths.

#![allow(dead_code)]

use fastconsensus::graph::Graph;
use fastconsensus::learning::HypothesisModel;

pub type Dense = Vec<Vec<f64>>;

/// `a_ij = 1/(2 max(d_i, d_j))` on edges, `a_ii = 1 − Σ_j a_ij`.
pub fn dense_lazy_metropolis(g: &Graph) -> Dense {
    let n = g.len();
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j && g.has_edge(i, j) {
                a[i][j] = 0.5 / g.degree(i).max(g.degree(j)) as f64;
            }
        }
        let off: f64 = a[i].iter().sum();
        a[i][i] = 1.0 - off;
    }
    a
}

pub fn dense_uniform(g: &Graph, eps: f64) -> Dense {
    let n = g.len();
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j && g.has_edge(i, j) {
                a[i][j] = eps;
            }
        }
        a[i][i] = 1.0 - eps * g.degree(i) as f64;
    }
    a
}

pub fn mat_vec(a: &Dense, x: &[f64]) -> Vec<f64> {
    a.iter()
        .map(|row| row.iter().zip(x).map(|(r, v)| r * v).sum())
        .collect()
}

pub fn mat_mul(a: &Dense, b: &Dense) -> Dense {
    let n = a.len();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| (0..n).map(|k| a[i][k] * b[k][j]).sum())
                .collect()
        })
        .collect()
}

pub fn identity(n: usize) -> Dense {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

/// `W^t x0` for `t = 0..=rounds`, via explicit matrix powers.
pub fn matrix_power_trajectory(a: &Dense, x0: &[f64], rounds: usize) -> Vec<Vec<f64>> {
    let mut power = identity(a.len());
    let mut out = Vec::with_capacity(rounds + 1);
    for _ in 0..=rounds {
        out.push(mat_vec(&power, x0));
        power = mat_mul(a, &power);
    }
    out
}

/// `y(t+1) = B x(t)`, `x(t+1) = y(t+1) + σ (y(t+1) − y(t))`, `y(0) = x(0)`.
pub fn momentum_trajectory(b: &Dense, sigma: f64, x0: &[f64], rounds: usize) -> Vec<Vec<f64>> {
    let mut x = x0.to_vec();
    let mut y = x0.to_vec();
    let mut out = vec![x.clone()];
    for _ in 0..rounds {
        let y_next = mat_vec(b, &x);
        x = y_next
            .iter()
            .zip(&y)
            .map(|(yn, yo)| yn + sigma * (yn - yo))
            .collect();
        y = y_next;
        out.push(x.clone());
    }
    out
}

fn normalize(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
}

fn likelihood(m: &HypothesisModel, i: usize, s: usize, p: usize) -> f64 {
    m.node(i).likelihoods[p][s]
}

/// Geometric mixing in probability space:
/// `μ_i^{t+1}(θ) ∝ ℓ_i(s|θ) Π_j μ_j^t(θ)^{a_ij}`.
pub fn brute_learndyn(a: &Dense, m: &HypothesisModel, samples: &[Vec<usize>]) -> Vec<Dense> {
    let (n, k) = (m.len(), m.hypotheses());
    let mut mu = vec![vec![1.0 / k as f64; k]; n];
    let mut out = vec![mu.clone()];
    for round in samples {
        let next: Dense = (0..n)
            .map(|i| {
                let mut row: Vec<f64> = (0..k)
                    .map(|p| {
                        let mut v = likelihood(m, i, round[i], p);
                        for j in 0..n {
                            v *= mu[j][p].powf(a[i][j]);
                        }
                        v
                    })
                    .collect();
                normalize(&mut row);
                row
            })
            .collect();
        mu = next;
        out.push(mu.clone());
    }
    out
}

/// Momentum mixing in probability space:
/// `μ_i^{t+1} ∝ ℓ_i(S^{t+1}) Π_j (μ_j^t)^{(1+σ)b_ij} / Π_j (μ_j^{t−1} ℓ_j(S^t))^{σ b_ij}`,
/// with `μ^{−1} = μ^0` and a unit round-0 likelihood.
pub fn brute_momentum_beliefs(
    b: &Dense,
    sigma: f64,
    m: &HypothesisModel,
    samples: &[Vec<usize>],
) -> Vec<Dense> {
    let (n, k) = (m.len(), m.hypotheses());
    let mut mu = vec![vec![1.0 / k as f64; k]; n];
    let mut prev = mu.clone();
    let mut prev_lik = vec![vec![1.0; k]; n];
    let mut out = vec![mu.clone()];
    for round in samples {
        let lik: Dense = (0..n)
            .map(|i| (0..k).map(|p| likelihood(m, i, round[i], p)).collect())
            .collect();
        let next: Dense = (0..n)
            .map(|i| {
                let mut row: Vec<f64> = (0..k)
                    .map(|p| {
                        let mut v = lik[i][p];
                        for j in 0..n {
                            v *= mu[j][p].powf((1.0 + sigma) * b[i][j]);
                            v /= (prev[j][p] * prev_lik[j][p]).powf(sigma * b[i][j]);
                        }
                        v
                    })
                    .collect();
                normalize(&mut row);
                row
            })
            .collect();
        prev = std::mem::replace(&mut mu, next);
        prev_lik = lik;
        out.push(mu.clone());
    }
    out
}
