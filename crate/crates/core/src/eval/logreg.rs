//! Binary logistic-regression probe trained with full-batch gradient
//! descent, used to classify pooled sentence representations.

use crate::error::{Error, Result};

const L2_PENALTY: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct LogReg {
    pub weights: Vec<f64>,
    pub bias: f64,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl LogReg {
    pub fn probability(&self, features: &[f32]) -> f64 {
        let z: f64 = self
            .weights
            .iter()
            .zip(features)
            .map(|(&w, &x)| w * x as f64)
            .sum::<f64>()
            + self.bias;
        sigmoid(z)
    }

    /// Predict the positive class when p > 0.5; the tie at exactly 0.5
    /// deterministically goes to the negative class.
    pub fn predict(&self, features: &[f32]) -> bool {
        self.probability(features) > 0.5
    }

    pub fn accuracy(&self, features: &[Vec<f32>], labels: &[bool]) -> f64 {
        let correct = features
            .iter()
            .zip(labels)
            .filter(|(x, &y)| self.predict(x) == y)
            .count();
        correct as f64 / labels.len().max(1) as f64
    }
}

/// Full-batch gradient descent on mean logistic loss with an L2 penalty
/// of 1e-4 on the weights. Weights start at zero, so the result is
/// deterministic for a given input regardless of `seed`; the seed is
/// part of the signature so callers record it in run metadata.
pub fn logreg_train(
    features: &[Vec<f32>],
    labels: &[bool],
    epochs: usize,
    lr: f64,
    _seed: u64,
) -> Result<LogReg> {
    if features.len() != labels.len() || features.is_empty() {
        return Err(Error::ShapeMismatch {
            op: "logreg_train",
            left: vec![features.len()],
            right: vec![labels.len()],
        });
    }
    let positives = labels.iter().filter(|&&y| y).count();
    if positives < 2 || labels.len() - positives < 2 {
        return Err(Error::SingleClass);
    }
    let dim = features[0].len();
    for x in features {
        if x.len() != dim {
            return Err(Error::ShapeMismatch {
                op: "logreg_train",
                left: vec![dim],
                right: vec![x.len()],
            });
        }
    }
    let n = features.len() as f64;
    let mut model = LogReg { weights: vec![0.0; dim], bias: 0.0 };
    for _ in 0..epochs {
        let mut gw = vec![0.0f64; dim];
        let mut gb = 0.0f64;
        for (x, &y) in features.iter().zip(labels) {
            let err = model.probability(x) - if y { 1.0 } else { 0.0 };
            for (g, &xi) in gw.iter_mut().zip(x) {
                *g += err * xi as f64;
            }
            gb += err;
        }
        for (w, g) in model.weights.iter_mut().zip(&gw) {
            *w -= lr * (g / n + L2_PENALTY * *w);
        }
        model.bias -= lr * gb / n;
    }
    Ok(model)
}
