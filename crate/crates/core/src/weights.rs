//! Doubly stochastic mixing matrices conforming to a graph.

use std::fmt::Write as _;

use crate::error::{check_len, Error, Result};
use crate::graph::Graph;

/// Absolute tolerance on each row and column sum.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Dense n×n nonnegative matrix with a cached sparse row view.
///
/// The constructors in this module always produce a valid consensus matrix.
/// [`WeightMatrix::from_dense`] accepts arbitrary entries so that invalid
/// matrices can be inspected with [`validate_consensus_matrix`].
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    n: usize,
    entries: Vec<f64>,
    rows: Vec<Vec<(usize, f64)>>,
    eta: f64,
    graph_tag: String,
}

impl WeightMatrix {
    /// Row-major entries; `entries.len()` must be `n * n`.
    pub fn from_dense(n: usize, entries: Vec<f64>, graph_tag: impl Into<String>) -> Result<Self> {
        check_len(n * n, entries.len())?;
        let rows = (0..n)
            .map(|i| {
                (0..n)
                    .filter_map(|j| {
                        let a = entries[i * n + j];
                        (a != 0.0).then_some((j, a))
                    })
                    .collect()
            })
            .collect();
        let eta = entries
            .iter()
            .copied()
            .filter(|&a| a > 0.0)
            .fold(f64::INFINITY, f64::min);
        Ok(WeightMatrix {
            n,
            entries,
            rows,
            eta,
            graph_tag: graph_tag.into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    /// Smallest positive entry.
    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn graph_tag(&self) -> &str {
        &self.graph_tag
    }

    /// Nonzero entries of row `i` as `(column, weight)`.
    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// `out = W x` through the sparse rows.
    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        check_len(self.n, x.len())?;
        check_len(self.n, out.len())?;
        for (o, row) in out.iter_mut().zip(&self.rows) {
            *o = row.iter().map(|&(j, a)| a * x[j]).sum();
        }
        Ok(())
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    /// Row-major CSV with one matrix row per line, full precision.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n {
            for j in 0..self.n {
                if j > 0 {
                    out.push(',');
                }
                write!(out, "{:e}", self.get(i, j)).expect("writing to a String");
            }
            out.push('\n');
        }
        out
    }
}

/// `a_ij = eps` on every edge, `a_ii = 1 − d(i)·eps`.
///
/// Requires `0 < eps < 1/d_max` so every diagonal entry stays strictly
/// positive. `1/(2 d_max)` is the customary choice.
pub fn uniform_epsilon_weights(g: &Graph, eps: f64) -> Result<WeightMatrix> {
    let d_max = g.max_degree();
    let admissible = d_max == 0 || (eps > 0.0 && eps * (d_max as f64) < 1.0);
    if !eps.is_finite() || !admissible {
        return Err(Error::StepSize {
            value: eps,
            bound: format!(
                "0 < eps < 1/d_max = 1/{d_max} (recommended eps = 1/(2 d_max) = {})",
                1.0 / (2.0 * d_max.max(1) as f64)
            ),
        });
    }
    let n = g.len();
    let mut entries = vec![0.0; n * n];
    for i in 0..n {
        for &j in g.neighbors(i) {
            entries[i * n + j] = eps;
        }
        entries[i * n + i] = 1.0 - g.degree(i) as f64 * eps;
    }
    WeightMatrix::from_dense(n, entries, g.tag())
}

/// `a_ij = 1/(2 max(d(i), d(j)))` on every edge, self-weight takes the remainder.
pub fn lazy_metropolis_weights(g: &Graph) -> WeightMatrix {
    let n = g.len();
    let mut entries = vec![0.0; n * n];
    for i in 0..n {
        let mut off = 0.0;
        for &j in g.neighbors(i) {
            let a = lazy_metropolis_coefficient(g, i, j);
            entries[i * n + j] = a;
            off += a;
        }
        entries[i * n + i] = 1.0 - off;
    }
    WeightMatrix::from_dense(n, entries, g.tag()).expect("square by construction")
}

pub(crate) fn lazy_metropolis_coefficient(g: &Graph, i: usize, j: usize) -> f64 {
    1.0 / (2.0 * g.degree(i).max(g.degree(j)) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Outcome of checking a matrix against the assumptions of the consensus
/// convergence theorem. Failures are entries, not errors.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    pub eta: f64,
    pub max_row_deviation: f64,
    pub max_column_deviation: f64,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub const CHECK_NONNEGATIVE: &str = "nonnegative";
pub const CHECK_ROW_SUMS: &str = "row sums";
pub const CHECK_COLUMN_SUMS: &str = "column sums";
pub const CHECK_SUPPORT: &str = "support within edges";
pub const CHECK_EDGES_POSITIVE: &str = "edges positive";
pub const CHECK_DIAGONAL_POSITIVE: &str = "diagonal positive";

pub fn validate_consensus_matrix(w: &WeightMatrix, g: &Graph) -> Result<ValidationReport> {
    let n = w.dim();
    check_len(g.len(), n)?;

    let negatives = w.entries().iter().filter(|&&a| a < 0.0).count();
    let max_row_deviation = (0..n)
        .map(|i| ((0..n).map(|j| w.get(i, j)).sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max);
    let max_column_deviation = (0..n)
        .map(|j| ((0..n).map(|i| w.get(i, j)).sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max);

    let mut outside = Vec::new();
    let mut missing = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let edge = g.has_edge(i, j);
            let a = w.get(i, j);
            if a > 0.0 && !edge {
                outside.push((i + 1, j + 1));
            }
            if edge && a <= 0.0 {
                missing.push((i + 1, j + 1));
            }
        }
    }
    let bad_diagonal: Vec<usize> = (0..n).filter(|&i| w.get(i, i) <= 0.0).map(|i| i + 1).collect();

    let first = |v: &[(usize, usize)]| {
        v.first()
            .map(|(i, j)| format!("{} entries, first ({i}, {j})", v.len()))
            .unwrap_or_else(|| "ok".into())
    };
    let checks = vec![
        Check {
            name: CHECK_NONNEGATIVE,
            passed: negatives == 0,
            detail: format!("{negatives} negative entries"),
        },
        Check {
            name: CHECK_ROW_SUMS,
            passed: max_row_deviation <= STOCHASTIC_TOL,
            detail: format!("max |row sum - 1| = {max_row_deviation:e}"),
        },
        Check {
            name: CHECK_COLUMN_SUMS,
            passed: max_column_deviation <= STOCHASTIC_TOL,
            detail: format!("max |column sum - 1| = {max_column_deviation:e}"),
        },
        Check {
            name: CHECK_SUPPORT,
            passed: outside.is_empty(),
            detail: first(&outside),
        },
        Check {
            name: CHECK_EDGES_POSITIVE,
            passed: missing.is_empty(),
            detail: first(&missing),
        },
        Check {
            name: CHECK_DIAGONAL_POSITIVE,
            passed: bad_diagonal.is_empty(),
            detail: format!("{} nonpositive diagonal entries", bad_diagonal.len()),
        },
    ];
    Ok(ValidationReport {
        checks,
        eta: w.eta(),
        max_row_deviation,
        max_column_deviation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{make_family, make_line, Family};

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-15
    }

    #[test]
    fn uniform_epsilon_line3() {
        let w = uniform_epsilon_weights(&make_line(3).unwrap(), 0.25).unwrap();
        let expected = [0.75, 0.25, 0.0, 0.25, 0.5, 0.25, 0.0, 0.25, 0.75];
        for (a, b) in w.entries().iter().zip(expected) {
            assert!(close(*a, b));
        }
        assert_eq!(w.eta(), 0.25);
    }

    #[test]
    fn uniform_epsilon_complete_averaging() {
        let w = uniform_epsilon_weights(&make_family(Family::Complete, 3, 0).unwrap(), 1.0 / 3.0)
            .unwrap();
        assert!(w.entries().iter().all(|&a| close(a, 1.0 / 3.0)));
    }

    #[test]
    fn uniform_epsilon_rejects_large_step() {
        let star = make_family(Family::Star, 4, 0).unwrap();
        let err = uniform_epsilon_weights(&star, 0.5).unwrap_err();
        match err {
            Error::StepSize { bound, .. } => assert!(bound.contains("1/3")),
            other => panic!("unexpected {other:?}"),
        }
        assert!(uniform_epsilon_weights(&star, 1.0 / 3.0).is_err());
        assert!(uniform_epsilon_weights(&star, 0.0).is_err());
        assert!(uniform_epsilon_weights(&star, f64::NAN).is_err());
    }

    #[test]
    fn lazy_metropolis_examples() {
        let w = lazy_metropolis_weights(&make_line(3).unwrap());
        assert!(close(w.get(0, 1), 0.25) && close(w.get(1, 0), 0.25));
        assert!(close(w.get(1, 2), 0.25) && close(w.get(2, 1), 0.25));
        assert!(close(w.get(0, 0), 0.75) && close(w.get(1, 1), 0.5) && close(w.get(2, 2), 0.75));

        let w = lazy_metropolis_weights(&make_family(Family::Complete, 2, 0).unwrap());
        assert!(w.entries().iter().all(|&a| close(a, 0.5)));

        let w = lazy_metropolis_weights(&make_family(Family::Star, 4, 0).unwrap());
        assert!(close(w.get(0, 0), 0.5));
        for leaf in 1..4 {
            assert!(close(w.get(0, leaf), 1.0 / 6.0));
            assert!(close(w.get(leaf, 0), 1.0 / 6.0));
            assert!(close(w.get(leaf, leaf), 5.0 / 6.0));
        }
    }

    #[test]
    fn validation_examples() {
        let g = make_line(5).unwrap();
        let report = validate_consensus_matrix(&lazy_metropolis_weights(&g), &g).unwrap();
        assert!(report.passed(), "{report:?}");
        assert_eq!(report.eta, 0.25);

        let g3 = make_line(3).unwrap();
        let identity = WeightMatrix::from_dense(
            3,
            vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            "identity",
        )
        .unwrap();
        let report = validate_consensus_matrix(&identity, &g3).unwrap();
        assert!(!report.check(CHECK_EDGES_POSITIVE).unwrap().passed);
        assert!(report.check(CHECK_ROW_SUMS).unwrap().passed);

        let g2 = make_line(2).unwrap();
        let row_only = WeightMatrix::from_dense(2, vec![0.9, 0.1, 0.5, 0.5], "rows").unwrap();
        let report = validate_consensus_matrix(&row_only, &g2).unwrap();
        assert!(report.check(CHECK_ROW_SUMS).unwrap().passed);
        assert!(!report.check(CHECK_COLUMN_SUMS).unwrap().passed);
        assert!((report.max_column_deviation - 0.4).abs() < 1e-12);
    }

    #[test]
    fn validation_flags_support_outside_graph() {
        let g = make_line(3).unwrap();
        let k3 = uniform_epsilon_weights(&make_family(Family::Complete, 3, 0).unwrap(), 0.25)
            .unwrap();
        let report = validate_consensus_matrix(&k3, &g).unwrap();
        assert!(!report.check(CHECK_SUPPORT).unwrap().passed);
        assert!(validate_consensus_matrix(&k3, &make_line(4).unwrap()).is_err());
    }

    #[test]
    fn csv_dump_shape() {
        let w = lazy_metropolis_weights(&make_line(3).unwrap());
        let csv = w.to_csv();
        assert_eq!(csv.lines().count(), 3);
        let first: Vec<f64> = csv.lines().next().unwrap().split(',').map(|s| s.parse().unwrap()).collect();
        assert_eq!(first, vec![0.75, 0.25, 0.0]);
    }
}
