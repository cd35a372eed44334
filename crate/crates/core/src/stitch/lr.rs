//! Per-position logistic regression over hashed binary features.

use serde::{Deserialize, Serialize};

use super::features::FeatureVector;
use crate::error::{Error, Result};
use crate::types::Position;

#[derive(Debug, Clone, PartialEq)]
pub struct PositionModel {
    pub position: Position,
    pub weights: Vec<f32>,
    /// Cumulative |gradient| per feature.
    pub grad_sum: Vec<f32>,
    pub bias: f32,
    pub updates_seen: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainExample {
    pub features: FeatureVector,
    pub label: u8,
}

pub fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl PositionModel {
    pub fn new(position: Position, hash_bits: u32) -> Self {
        let dim = 1usize << hash_bits;
        PositionModel {
            position,
            weights: vec![0.0; dim],
            grad_sum: vec![0.0; dim],
            bias: 0.0,
            updates_seen: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    fn check(&self, x: &FeatureVector) -> Result<()> {
        match x.indices().last() {
            Some(&i) if i as usize >= self.dim() => Err(Error::invalid(format!(
                "feature {i} outside model dimension {}",
                self.dim()
            ))),
            _ => Ok(()),
        }
    }

    pub fn logit(&self, x: &FeatureVector) -> Result<f64> {
        self.check(x)?;
        Ok(self.bias as f64
            + x.indices()
                .iter()
                .map(|&i| self.weights[i as usize] as f64)
                .sum::<f64>())
    }
}

pub fn lr_score(model: &PositionModel, x: &FeatureVector) -> Result<f64> {
    model.logit(x).map(logistic)
}

/// Averaged gradient mass over the active features, times `trial_scale`.
pub fn trial_count(model: &PositionModel, x: &FeatureVector, trial_scale: f64) -> Result<f64> {
    model.check(x)?;
    let mass: f64 = x
        .indices()
        .iter()
        .map(|&i| model.grad_sum[i as usize] as f64)
        .sum();
    Ok(trial_scale * mass / x.len().max(1) as f64)
}

/// Logistic loss for logit `z` and a binary label.
pub fn logistic_loss(z: f64, label: u8) -> f64 {
    // log(1 + e^-z) and log(1 + e^z) written to stay finite for large |z|
    let softplus = |t: f64| t.max(0.0) + (-t.abs()).exp().ln_1p();
    if label == 1 {
        softplus(-z)
    } else {
        softplus(z)
    }
}

/// d(loss)/d(logit); equal to the partial derivative for the bias and every active weight.
pub fn loss_gradient(model: &PositionModel, example: &TrainExample) -> Result<f64> {
    check_label(example.label)?;
    Ok(lr_score(model, &example.features)? - example.label as f64)
}

fn check_label(label: u8) -> Result<()> {
    if label > 1 {
        return Err(Error::invalid(format!("label {label} is not binary")));
    }
    Ok(())
}

/// Sequential SGD over the batch in order.
pub fn train_online(
    model: &mut PositionModel,
    batch: &[TrainExample],
    learning_rate: f64,
) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::invalid("training batch is empty"));
    }
    for ex in batch {
        check_label(ex.label)?;
        model.check(&ex.features)?;
    }
    for ex in batch {
        let g = lr_score(model, &ex.features)? - ex.label as f64;
        let step = (learning_rate * g) as f32;
        let mag = g.abs() as f32;
        for &i in ex.features.indices() {
            model.weights[i as usize] -= step;
            model.grad_sum[i as usize] += mag;
        }
        model.bias -= step;
        model.updates_seen += 1;
    }
    Ok(())
}
