//! Full-batch gradient descent logistic regression.

use serde::{Deserialize, Serialize};

use crate::math::{dot, logistic_loss_grad, sigmoid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LrConfig {
    pub lr: f64,
    pub epochs: usize,
    pub l2: f64,
}

impl Default for LrConfig {
    fn default() -> Self {
        Self {
            lr: 0.1,
            epochs: 500,
            l2: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LogisticModel {
    pub fn p_ai(&self, row: &[f64]) -> f64 {
        sigmoid(dot(&self.weights, row) + self.bias)
    }
}

const MONOTONE_SLACK: f64 = 1e-9;
const MAX_HALVINGS: usize = 60;

/// Fits from zero initialization. Returns the model and the training loss
/// before the first step and after every epoch.
///
/// A step that would raise the loss by more than 1e-9 is retried with half
/// the step size, and the reduced size is kept for the remaining epochs.
pub fn fit_logistic(rows: &[Vec<f64>], targets: &[f64], cfg: &LrConfig) -> (LogisticModel, Vec<f64>) {
    let d = rows.first().map_or(0, Vec::len);
    let mut model = LogisticModel {
        weights: vec![0.0; d],
        bias: 0.0,
    };
    let mut step = cfg.lr;
    let (mut loss, mut grad, mut grad_b) =
        logistic_loss_grad(rows, targets, &model.weights, model.bias, cfg.l2);
    let mut history = Vec::with_capacity(cfg.epochs + 1);
    history.push(loss);

    for _ in 0..cfg.epochs {
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let weights: Vec<f64> = model
                .weights
                .iter()
                .zip(&grad)
                .map(|(w, g)| w - step * g)
                .collect();
            let bias = model.bias - step * grad_b;
            let next = logistic_loss_grad(rows, targets, &weights, bias, cfg.l2);
            if next.0 <= loss + MONOTONE_SLACK {
                accepted = Some((weights, bias, next));
                break;
            }
            step /= 2.0;
        }
        let Some((weights, bias, (l, g, gb))) = accepted else {
            break;
        };
        model = LogisticModel { weights, bias };
        loss = l;
        grad = g;
        grad_b = gb;
        history.push(loss);
    }
    (model, history)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_features_converge_to_prior() {
        // Loss only depends on z = w*c + b; optimum puts sigmoid(z) at the
        // class frequency (up to the tiny l2 pull on w).
        let rows = vec![vec![0.0]; 10];
        let targets: Vec<f64> = (0..10).map(|i| if i < 7 { 1.0 } else { 0.0 }).collect();
        let cfg = LrConfig {
            epochs: 5000,
            ..Default::default()
        };
        let (m, _) = fit_logistic(&rows, &targets, &cfg);
        assert!((m.p_ai(&[0.0]) - 0.7).abs() < 1e-3, "{}", m.p_ai(&[0.0]));
    }

    #[test]
    fn loss_never_increases() {
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![(i as f64 * 0.37).sin() * 3.0, (i as f64 * 0.11).cos()])
            .collect();
        let targets: Vec<f64> = rows.iter().map(|r| (r[0] + r[1] > 0.2) as u8 as f64).collect();
        let cfg = LrConfig {
            lr: 50.0,
            epochs: 200,
            l2: 1e-4,
        };
        let (_, hist) = fit_logistic(&rows, &targets, &cfg);
        assert!(hist.windows(2).all(|w| w[1] <= w[0] + 1e-9));
    }
}
