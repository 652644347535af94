//! Gaussian naive Bayes.

use serde::{Deserialize, Serialize};

use super::{class_index, EnsembleError};
use crate::corpus::Label;
use crate::scorers::ProbVector;

/// Per-class feature means and variances, indexed `[human, ai]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnbModel {
    pub priors: [f64; 2],
    pub means: [Vec<f64>; 2],
    pub variances: [Vec<f64>; 2],
    pub epsilon: f64,
    /// The variance floor actually applied.
    pub variance_floor: f64,
}

/// Smallest reference variance for the floor. Features are probabilities, so
/// anything below this is constant up to rounding.
const MIN_REFERENCE_VARIANCE: f64 = 1e-6;

/// Fits class-conditional Gaussians. Variances are floored at
/// `epsilon * max(max_j Var(x_j), 1e-6)`.
pub fn fit_gnb(rows: &[Vec<f64>], labels: &[Label], epsilon: f64) -> Result<GnbModel, EnsembleError> {
    let d = rows.first().map_or(0, Vec::len);
    let mut counts = [0usize; 2];
    let mut sums = [vec![0.0; d], vec![0.0; d]];
    for (row, &label) in rows.iter().zip(labels) {
        let c = class_index(label);
        counts[c] += 1;
        for (s, x) in sums[c].iter_mut().zip(row) {
            *s += x;
        }
    }
    for (c, label) in Label::ALL.iter().enumerate() {
        if counts[c] == 0 {
            return Err(EnsembleError::SingleClass { missing: *label });
        }
    }
    let means = [0, 1].map(|c| sums[c].iter().map(|s| s / counts[c] as f64).collect::<Vec<_>>());
    let mut sq = [vec![0.0; d], vec![0.0; d]];
    for (row, &label) in rows.iter().zip(labels) {
        let c = class_index(label);
        for ((v, x), m) in sq[c].iter_mut().zip(row).zip(&means[c]) {
            *v += (x - m).powi(2);
        }
    }

    let n = rows.len() as f64;
    let max_var = (0..d)
        .map(|j| {
            let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n
        })
        .fold(0.0, f64::max);
    let variance_floor = epsilon * max_var.max(MIN_REFERENCE_VARIANCE);
    let variances = [0, 1].map(|c| {
        sq[c]
            .iter()
            .map(|v| (v / counts[c] as f64).max(variance_floor))
            .collect::<Vec<_>>()
    });
    Ok(GnbModel {
        priors: [counts[0] as f64 / n, counts[1] as f64 / n],
        means,
        variances,
        epsilon,
        variance_floor,
    })
}

impl GnbModel {
    fn log_joint(&self, c: usize, row: &[f64]) -> f64 {
        let ll: f64 = row
            .iter()
            .zip(&self.means[c])
            .zip(&self.variances[c])
            .map(|((x, m), v)| -0.5 * (2.0 * std::f64::consts::PI * v).ln() - (x - m).powi(2) / (2.0 * v))
            .sum();
        self.priors[c].ln() + ll
    }

    /// Posterior class probabilities, normalized in log space.
    pub fn predict_proba(&self, row: &[f64]) -> ProbVector {
        let lh = self.log_joint(0, row);
        let la = self.log_joint(1, row);
        let top = lh.max(la);
        let (eh, ea) = ((lh - top).exp(), (la - top).exp());
        ProbVector::from_p_ai(ea / (eh + ea))
    }
}
