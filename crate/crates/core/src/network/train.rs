use std::io::Write;
use std::path::Path;

use log::info;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::model::{Gradients, SrenModel};
use crate::data::LabeledDataset;
use crate::geometry::GeometryField;
use crate::rng::{stream, Domain};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F64,
    F32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Decoupled decay: each step also subtracts `lr · weight_decay · p`.
    pub weight_decay: f64,
    pub seed: u64,
    pub precision: Precision,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 32,
            learning_rate: 0.01,
            weight_decay: 0.01,
            seed: 0,
            precision: Precision::F64,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.precision != Precision::F64 {
            return Err(Error::InvalidParameter(
                "only f64 precision is supported".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter(
                "batch_size must be positive".into(),
            ));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "bad learning rate {}",
                self.learning_rate
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "bad weight decay {}",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

/// Adam with β = (0.9, 0.999), ε = 1e-8 and decoupled weight decay.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(learning_rate: f64, weight_decay: f64, model: &SrenModel) -> Self {
        let shapes: Vec<usize> = model.params().iter().map(|p| p.len()).collect();
        Self {
            learning_rate,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step(&mut self, model: &mut SrenModel, grads: &Gradients) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for (((p, g), m), v) in model
            .params_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let update =
                    (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps) + self.weight_decay * p[i];
                p[i] -= self.learning_rate * update;
            }
        }
    }
}

/// Mean-free cross-entropy: returns the loss and `∂loss/∂logits`.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() + max - logits[label];
    let mut grad: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    grad[label] -= 1.0;
    (loss, grad)
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| {
            if x > bv {
                (i, x)
            } else {
                (bi, bv)
            }
        })
        .0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    /// Running accuracy over the epoch's minibatches.
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochMetrics>,
    /// Accuracy of the trained model on the training set.
    pub final_accuracy: f64,
}

impl TrainReport {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("epoch,loss,acc\n");
        for e in &self.epochs {
            out.push_str(&format!("{},{:.6},{:.6}\n", e.epoch, e.loss, e.accuracy));
        }
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(out.as_bytes())
            .map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    /// `(correct, total)` per class.
    pub per_class: Vec<(usize, usize)>,
    pub predictions: Vec<usize>,
}

fn check_dataset(model: &SrenModel, data: &LabeledDataset) -> Result<()> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("dataset is empty".into()));
    }
    if let Some(&bad) = data.labels.iter().find(|&&l| l >= model.arch.classes) {
        return Err(Error::InvalidArgument(format!(
            "label {bad} out of range for {} classes",
            model.arch.classes
        )));
    }
    Ok(())
}

fn first_fields(model: &SrenModel, data: &LabeledDataset) -> Result<Vec<GeometryField>> {
    data.images.iter().map(|f| model.input_field(f)).collect()
}

/// Minibatch Adam on the mean cross-entropy. The first block's geometry is
/// computed once per image and reused across epochs.
pub fn train(
    model: &mut SrenModel,
    data: &LabeledDataset,
    config: &TrainConfig,
) -> Result<TrainReport> {
    config.validate()?;
    check_dataset(model, data)?;
    let fields = first_fields(model, data)?;
    let mut adam = Adam::new(config.learning_rate, config.weight_decay, model);
    let mut epochs = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut stream(config.seed, Domain::Shuffle, epoch as u64));
        let (mut loss_sum, mut correct) = (0.0, 0);
        for batch in order.chunks(config.batch_size) {
            let mut grads = Gradients::zeros_like(model);
            for &i in batch {
                let trace = model.trace(&data.images[i], Some(&fields[i]))?;
                let (loss, d_logits) = softmax_cross_entropy(&trace.logits, data.labels[i]);
                if !loss.is_finite() {
                    return Err(Error::Numerical(format!(
                        "non-finite loss at epoch {epoch}, sample {i}"
                    )));
                }
                loss_sum += loss;
                correct += usize::from(argmax(&trace.logits) == data.labels[i]);
                grads.add_assign(&model.backward(&trace, &d_logits)?);
            }
            grads.scale(1.0 / batch.len() as f64);
            adam.step(model, &grads);
            if model
                .params()
                .iter()
                .any(|p| p.iter().any(|v| !v.is_finite()))
            {
                return Err(Error::Numerical(format!(
                    "non-finite parameter at epoch {epoch}"
                )));
            }
        }
        let metrics = EpochMetrics {
            epoch,
            loss: loss_sum / data.len() as f64,
            accuracy: correct as f64 / data.len() as f64,
        };
        info!(
            "epoch {epoch}: loss {:.4} acc {:.4}",
            metrics.loss, metrics.accuracy
        );
        epochs.push(metrics);
    }
    let final_accuracy = evaluate_with(model, data, Some(&fields))?.accuracy;
    Ok(TrainReport {
        epochs,
        final_accuracy,
    })
}

pub fn evaluate(model: &SrenModel, data: &LabeledDataset) -> Result<Evaluation> {
    evaluate_with(model, data, None)
}

/// Like [`evaluate`], optionally with precomputed first-block fields.
pub fn evaluate_with(
    model: &SrenModel,
    data: &LabeledDataset,
    fields: Option<&[GeometryField]>,
) -> Result<Evaluation> {
    check_dataset(model, data)?;
    let mut per_class = vec![(0, 0); model.arch.classes];
    let mut predictions = Vec::with_capacity(data.len());
    for (i, (f, &label)) in data.images.iter().zip(&data.labels).enumerate() {
        let logits = match fields {
            Some(fields) => model.trace(f, Some(&fields[i]))?.logits,
            None => model.forward(f)?,
        };
        let p = argmax(&logits);
        predictions.push(p);
        per_class[label].1 += 1;
        per_class[label].0 += usize::from(p == label);
    }
    let correct = per_class.iter().map(|c| c.0).sum();
    Ok(Evaluation {
        accuracy: correct as f64 / data.len() as f64,
        correct,
        total: data.len(),
        per_class,
        predictions,
    })
}
