//! Evaluation quantities: per-point squared error and predicted variance,
//! Spearman rank agreement, the MSE-variance least-squares fit, CRPS,
//! risk-coverage curves, and ID -> OOD deltas.

pub mod crps;
mod eval;

pub use crps::{crps_gaussian, crps_mixture, normal_cdf, normal_pdf};
pub use eval::{evaluate_model, points_to_csv, MetricsReport, SplitSummary};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalSplit {
    Id,
    Ood,
}

impl fmt::Display for EvalSplit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvalSplit::Id => "id",
            EvalSplit::Ood => "ood",
        })
    }
}

/// Per-test-point record.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PointEval {
    pub x: f64,
    pub squared_error: f64,
    /// Epistemic predictive variance (spread of per-draw means).
    pub variance: f64,
    pub crps: f64,
    pub split: EvalSplit,
}

#[derive(Debug, Clone, Copy)]
pub struct SpearmanResult {
    pub rho: f64,
    /// True when either argument is constant, where rank correlation is
    /// undefined and reported as 0.
    pub degenerate: bool,
}

/// Average ranks with ties resolved to the mean rank of the tied block.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).expect("non-NaN metric"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1 ..= j+1 share the average.
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some(sab / (saa * sbb).sqrt())
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman_rho(a: &[f64], b: &[f64]) -> Result<SpearmanResult> {
    if a.len() != b.len() {
        return Err(Error::InvalidArg(format!(
            "spearman_rho: mismatched lengths {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::InvalidArg("spearman_rho: need >= 2 points".into()));
    }
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    match pearson(&ra, &rb) {
        Some(rho) => Ok(SpearmanResult {
            rho,
            degenerate: false,
        }),
        None => Ok(SpearmanResult {
            rho: 0.0,
            degenerate: true,
        }),
    }
}

/// Ordinary least squares of squared error on variance:
/// mse ~ a + b * var. Errors when the variance values have no spread.
pub fn mse_var_fit(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    if points.len() < 2 {
        return Err(Error::InvalidArg("mse_var_fit: need >= 2 points".into()));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for &(x, y) in points {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 {
        return Err(Error::InvalidArg(
            "mse_var_fit: variance values have zero spread".into(),
        ));
    }
    let b = sxy / sxx;
    let a = my - b * mx;
    Ok((a, b))
}

#[derive(Debug, Clone)]
pub struct RiskCoverage {
    pub aurc: f64,
    /// (coverage m/n, mean squared error of the m lowest-variance points).
    pub curve: Vec<(f64, f64)>,
}

/// Selective risk from variance-ranked abstention. Points are kept in
/// ascending variance order (stable in input order on ties); risk at
/// coverage m/n is the mean squared error of the m lowest-variance points,
/// and AURC is the mean of those risks.
pub fn aurc(points: &[PointEval]) -> Result<RiskCoverage> {
    if points.is_empty() {
        return Err(Error::InvalidArg("aurc: need >= 1 point".into()));
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| {
        points[i]
            .variance
            .partial_cmp(&points[j].variance)
            .expect("non-NaN variance")
    });
    let n = points.len();
    let mut curve = Vec::with_capacity(n);
    let mut err_sum = 0.0;
    let mut risk_sum = 0.0;
    for (m, &idx) in order.iter().enumerate() {
        err_sum += points[idx].squared_error;
        let risk = err_sum / (m + 1) as f64;
        risk_sum += risk;
        curve.push(((m + 1) as f64 / n as f64, risk));
    }
    Ok(RiskCoverage {
        aurc: risk_sum / n as f64,
        curve,
    })
}
