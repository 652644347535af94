//! Numeric helpers shared by the scorers and the meta-learners.

use serde::{Deserialize, Serialize};

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Mean binary cross-entropy of a linear model plus `l2/2 * ||w||^2`
/// (the bias is not penalized), with its gradient.
///
/// Targets are 1.0 for the positive (AI) class. Returns `(loss, grad_w, grad_b)`.
pub fn logistic_loss_grad(
    rows: &[Vec<f64>],
    targets: &[f64],
    weights: &[f64],
    bias: f64,
    l2: f64,
) -> (f64, Vec<f64>, f64) {
    let n = rows.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; weights.len()];
    let mut grad_b = 0.0;
    for (row, &t) in rows.iter().zip(targets) {
        let z = dot(weights, row) + bias;
        loss += softplus(z) - t * z;
        let r = sigmoid(z) - t;
        for (g, x) in grad.iter_mut().zip(row) {
            *g += r * x;
        }
        grad_b += r;
    }
    let reg: f64 = weights.iter().map(|w| w * w).sum::<f64>() * l2 / 2.0;
    for (g, w) in grad.iter_mut().zip(weights) {
        *g = *g / n + l2 * w;
    }
    (loss / n + reg, grad, grad_b / n)
}

/// Ridge on the slope of [`Logistic1d::fit`], in the units of its input.
pub const SLOPE_RIDGE: f64 = 1e-3;

/// A fitted map `x -> sigmoid(a * x + b)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Logistic1d {
    pub a: f64,
    pub b: f64,
}

impl Logistic1d {
    pub fn prob(&self, x: f64) -> f64 {
        sigmoid(self.a * x + self.b)
    }

    /// Fits `P(positive | x)` by Newton's method on the cross-entropy with
    /// Platt's smoothed targets: `(N+ + 1) / (N+ + 2)` for positives and
    /// `1 / (N- + 2)` for negatives, plus `SLOPE_RIDGE / 2 * a^2`. The
    /// smoothing keeps the fit finite on separable inputs; the ridge keeps
    /// inputs whose spread is numerical noise from being stretched into a signal.
    pub fn fit(xs: &[f64], positive: &[bool]) -> Self {
        assert_eq!(xs.len(), positive.len());
        let n_pos = positive.iter().filter(|&&p| p).count() as f64;
        let n_neg = positive.len() as f64 - n_pos;
        let hi = (n_pos + 1.0) / (n_pos + 2.0);
        let lo = 1.0 / (n_neg + 2.0);
        let targets: Vec<f64> = positive.iter().map(|&p| if p { hi } else { lo }).collect();

        let prior = (n_pos + 1.0) / (n_pos + n_neg + 2.0);
        let prior_logit = (prior / (1.0 - prior)).ln();
        let n = xs.len().max(1) as f64;
        let mean = xs.iter().sum::<f64>() / n;
        if !mean.is_finite() || xs.iter().all(|&x| x == xs[0]) {
            return Self { a: 0.0, b: prior_logit };
        }
        let zs: Vec<f64> = xs.iter().map(|x| x - mean).collect();

        let objective = |a: f64, b: f64| -> f64 {
            let data: f64 = zs
                .iter()
                .zip(&targets)
                .map(|(&z, &t)| {
                    let f = a * z + b;
                    softplus(f) - t * f
                })
                .sum();
            data + SLOPE_RIDGE / 2.0 * a * a
        };

        let (mut a, mut b) = (0.0, prior_logit);
        let mut current = objective(a, b);
        for _ in 0..100 {
            let (mut ga, mut gb) = (SLOPE_RIDGE * a, 0.0);
            let (mut haa, mut hab, mut hbb) = (SLOPE_RIDGE, 0.0, 1e-12);
            for (&z, &t) in zs.iter().zip(&targets) {
                let p = sigmoid(a * z + b);
                let r = p - t;
                let w = p * (1.0 - p);
                ga += r * z;
                gb += r;
                haa += w * z * z;
                hab += w * z;
                hbb += w;
            }
            if ga.abs() < 1e-10 && gb.abs() < 1e-10 {
                break;
            }
            let det = haa * hbb - hab * hab;
            let da = -(hbb * ga - hab * gb) / det;
            let db = -(haa * gb - hab * ga) / det;
            let slope = ga * da + gb * db;
            let mut step = 1.0;
            let mut accepted = false;
            while step >= 1e-10 {
                let (na, nb) = (a + step * da, b + step * db);
                let candidate = objective(na, nb);
                if candidate <= current + 1e-4 * step * slope {
                    a = na;
                    b = nb;
                    current = candidate;
                    accepted = true;
                    break;
                }
                step /= 2.0;
            }
            if !accepted {
                break;
            }
        }
        Self { a, b: b - a * mean }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_and_softplus_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert!((softplus(800.0) - 800.0).abs() < 1e-9);
        assert!(softplus(-800.0) >= 0.0);
    }

    #[test]
    fn logistic_1d_separable_is_finite_and_ordered() {
        let xs = [1.0, 1.2, 1.4, 3.0, 3.3, 3.9];
        let pos = [false, false, false, true, true, true];
        let f = Logistic1d::fit(&xs, &pos);
        assert!(f.a.is_finite() && f.b.is_finite() && f.a > 0.0);
        for (&x, &p) in xs.iter().zip(&pos) {
            assert_eq!(f.prob(x) > 0.5, p);
        }
    }

    #[test]
    fn logistic_1d_constant_input_gives_smoothed_prior() {
        let f = Logistic1d::fit(&[2.0; 4], &[true, false, false, false]);
        assert_eq!(f.a, 0.0);
        // (1 + 1) / (4 + 2)
        assert!((f.prob(123.0) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn logistic_1d_zero_intercept_maps_zero_to_half() {
        let f = Logistic1d { a: 3.7, b: 0.0 };
        assert_eq!(f.prob(0.0), 0.5);
    }
}
