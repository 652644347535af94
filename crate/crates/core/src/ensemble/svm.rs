//! Linear SVM trained with Pegasos, with Platt-scaled probabilities.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EnsembleError;
use crate::corpus::Label;
use crate::math::{dot, Logistic1d};
use crate::scorers::ProbVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmConfig {
    pub lambda: f64,
    pub epochs: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-4,
            epochs: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub platt: Logistic1d,
}

impl SvmModel {
    pub fn decision(&self, row: &[f64]) -> f64 {
        dot(&self.weights, row) + self.bias
    }

    pub fn predict_proba(&self, row: &[f64]) -> ProbVector {
        ProbVector::from_p_ai(self.platt.prob(self.decision(row)))
    }
}

fn sign(label: Label) -> f64 {
    match label {
        Label::Human => -1.0,
        Label::Ai => 1.0,
    }
}

/// Primal objective `lambda/2 * (||w||^2 + b^2) + mean(max(0, 1 - y(w.x + b)))`
/// and a subgradient (zero hinge contribution exactly at margin 1).
/// The bias is regularized along with the weights.
pub fn hinge_objective_subgradient(
    rows: &[Vec<f64>],
    labels: &[Label],
    weights: &[f64],
    bias: f64,
    lambda: f64,
) -> (f64, Vec<f64>, f64) {
    let n = rows.len() as f64;
    let mut hinge = 0.0;
    let mut grad: Vec<f64> = weights.iter().map(|w| lambda * w).collect();
    let mut grad_b = lambda * bias;
    for (row, &label) in rows.iter().zip(labels) {
        let y = sign(label);
        let margin = y * (dot(weights, row) + bias);
        if margin < 1.0 {
            hinge += 1.0 - margin;
            for (g, x) in grad.iter_mut().zip(row) {
                *g -= y * x / n;
            }
            grad_b -= y / n;
        }
    }
    let reg = lambda / 2.0 * (weights.iter().map(|w| w * w).sum::<f64>() + bias * bias);
    (reg + hinge / n, grad, grad_b)
}

pub fn fit_linear_svm(
    rows: &[Vec<f64>],
    labels: &[Label],
    cfg: &SvmConfig,
    seed: u64,
) -> Result<SvmModel, EnsembleError> {
    if !(cfg.lambda > 0.0) || cfg.epochs == 0 {
        return Err(EnsembleError::InvalidConfig(
            "svm lambda and epochs must be positive".into(),
        ));
    }
    for label in Label::ALL {
        if labels.iter().filter(|&&l| l == label).count() < 2 {
            return Err(EnsembleError::TooFewSamples { label, min: 2 });
        }
    }
    let d = rows[0].len();
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let radius = 1.0 / cfg.lambda.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut t = 0u64;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (cfg.lambda * t as f64);
            let y = sign(labels[i]);
            let margin = y * (dot(&w, &rows[i]) + b);
            let shrink = 1.0 - eta * cfg.lambda;
            w.iter_mut().for_each(|v| *v *= shrink);
            b *= shrink;
            if margin < 1.0 {
                for (v, x) in w.iter_mut().zip(&rows[i]) {
                    *v += eta * y * x;
                }
                b += eta * y;
            }
            let norm = (dot(&w, &w) + b * b).sqrt();
            if norm > radius {
                let s = radius / norm;
                w.iter_mut().for_each(|v| *v *= s);
                b *= s;
            }
        }
    }

    let mut model = SvmModel {
        weights: w,
        bias: b,
        platt: Logistic1d { a: 0.0, b: 0.0 },
    };
    let decisions: Vec<f64> = rows.iter().map(|r| model.decision(r)).collect();
    let positive: Vec<bool> = labels.iter().map(|&l| l == Label::Ai).collect();
    model.platt = Logistic1d::fit(&decisions, &positive);
    Ok(model)
}
