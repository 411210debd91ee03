//! Maximum-likelihood fusion of scalar Gaussian measurements.
//!
//! Each node holds `y_i = θ + w_i` with `w_i ~ N(0, σ_i²)`. The estimate is
//! the precision-weighted mean, which the network obtains as the ratio of two
//! averages: `(1/n) Σ y_i/σ_i²` over `(1/n) Σ 1/σ_i²`.

use crate::consensus::{run_accelerated_with, AcceleratedParams, Recording};
use crate::error::{check_len, Error, Result};
use crate::graph::Graph;

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    values: Vec<f64>,
    variances: Vec<f64>,
}

impl MeasurementSet {
    pub fn new(values: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        check_len(values.len(), variances.len())?;
        if values.is_empty() {
            return Err(Error::InvalidSize("no measurements".into()));
        }
        if let Some((i, v)) = variances
            .iter()
            .enumerate()
            .find(|(_, &v)| !(v > 0.0 && v.is_finite()))
        {
            return Err(Error::Domain(format!(
                "variance of node {} must be positive and finite, got {v}",
                i + 1
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("measurement of node {} is not finite", i + 1)));
        }
        Ok(MeasurementSet { values, variances })
    }

    /// Reads `y,var` rows (no header, `#` comments allowed).
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let (mut values, mut variances) = (Vec::new(), Vec::new());
        for (idx, record) in reader.records().enumerate() {
            let record = record?;
            let line = record.position().map_or(idx + 1, |p| p.line() as usize);
            if record.len() != 2 {
                return Err(Error::Parse {
                    line,
                    message: format!("expected `y,var`, found {} fields", record.len()),
                });
            }
            let field = |k: usize| {
                record[k].parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    message: format!("`{}` is not a number", &record[k]),
                })
            };
            values.push(field(0)?);
            variances.push(field(1)?);
        }
        MeasurementSet::new(values, variances)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    fn numerator_inputs(&self) -> Vec<f64> {
        self.values.iter().zip(&self.variances).map(|(y, v)| y / v).collect()
    }

    fn denominator_inputs(&self) -> Vec<f64> {
        self.variances.iter().map(|v| 1.0 / v).collect()
    }
}

/// `(Σ y_i/σ_i²) / (Σ 1/σ_i²)`.
pub fn centralized_mle(m: &MeasurementSet) -> f64 {
    let num: f64 = m.numerator_inputs().iter().sum();
    let den: f64 = m.denominator_inputs().iter().sum();
    num / den
}

/// Per-node estimates after `rounds` rounds of two accelerated consensus runs
/// sharing the same graph and schedule.
///
/// Momentum iterates are not monotone, so the denominator can dip to zero or
/// below before it settles; that is reported instead of dividing.
pub fn distributed_mle(
    g: &Graph,
    m: &MeasurementSet,
    params: AcceleratedParams,
    rounds: usize,
) -> Result<Vec<f64>> {
    check_len(g.len(), m.len())?;
    let num = run_accelerated_with(g, params, &m.numerator_inputs(), rounds, Recording::ErrorsOnly)?;
    let den = run_accelerated_with(g, params, &m.denominator_inputs(), rounds, Recording::ErrorsOnly)?;
    num.final_x
        .iter()
        .zip(&den.final_x)
        .enumerate()
        .map(|(i, (&a, &b))| {
            if b > 0.0 {
                Ok(a / b)
            } else {
                Err(Error::Degenerate {
                    round: rounds,
                    node: i + 1,
                    message: format!("denominator iterate {b} is not positive"),
                })
            }
        })
        .collect()
}
