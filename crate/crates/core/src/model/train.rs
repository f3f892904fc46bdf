//! Optimizer, training loops and inference.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::net::{forward, step, Batch, Mode};
use super::{ModelParams, TrainConfig};
use crate::augment::augment;
use crate::dataset::LabeledInstance;
use crate::echo::EchoTensor;
use crate::error::{Error, Result};

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f32,
    beta1: f32,
    beta2: f32,
    eps: f32,
    t: i32,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl Adam {
    pub fn new(params: &ModelParams<f32>, cfg: &TrainConfig) -> Self {
        Self {
            lr: cfg.learning_rate as f32,
            beta1: cfg.beta1 as f32,
            beta2: cfg.beta2 as f32,
            eps: cfg.eps as f32,
            t: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn step(&mut self, params: &mut ModelParams<f32>, grads: &[Vec<f32>]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (((p, g), m), v) in params.tensors.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..g.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p.data[i] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    /// Accuracy on the augmented training batches, with dropout on.
    pub train_acc: f64,
    pub val_acc: Option<f64>,
}

pub fn write_metrics_csv(path: &Path, log: &[EpochMetrics]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "train_loss", "train_acc", "val_acc"])?;
    for m in log {
        w.write_record([
            m.epoch.to_string(),
            format!("{:.6}", m.train_loss),
            format!("{:.6}", m.train_acc),
            m.val_acc.map(|v| format!("{v:.6}")).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn labels_of(tensors: &[&EchoTensor]) -> Result<Vec<usize>> {
    tensors
        .iter()
        .map(|t| {
            t.label
                .map(|l| l.class_index())
                .ok_or_else(|| Error::Config("training tensor has no label".into()))
        })
        .collect()
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Mini-batch Adam for exactly `epochs` epochs. Reproducible given
/// `cfg.seed`.
pub fn train(
    mut params: ModelParams<f32>,
    data: &[&EchoTensor],
    cfg: &TrainConfig,
    epochs: usize,
    val: &[&EchoTensor],
) -> Result<(ModelParams<f32>, Vec<EpochMetrics>)> {
    cfg.validate()?;
    params.validate()?;
    if data.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let labels = labels_of(data)?;
    let val_labels = labels_of(val)?;
    let mut adam = Adam::new(&params, cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut log = Vec::with_capacity(epochs);
    for epoch in 1..=epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let aug: Vec<EchoTensor> = chunk.iter().map(|&i| augment(data[i], &cfg.augment, &mut rng)).collect();
            let refs: Vec<&EchoTensor> = aug.iter().collect();
            let batch = Batch::<f32>::from_tensors(&refs, params.spec.standardize)?;
            let y: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let out = step(&params, &batch, &y, Mode::Train { dropout_seed: rng.random() })?;
            if !out.loss.is_finite() {
                return Err(Error::NonFinite("training loss"));
            }
            adam.step(&mut params, &out.grads);
            loss_sum += out.loss as f64 * chunk.len() as f64;
            let o = params.spec.output_dim;
            for (j, row) in out.logits.chunks_exact(o).enumerate() {
                let row: Vec<f64> = row.iter().map(|v| *v as f64).collect();
                correct += (argmax(&row) == y[j]) as usize;
            }
        }
        let val_acc = if val.is_empty() {
            None
        } else {
            let preds = predict(&params, val)?;
            Some(accuracy(&val_labels, &preds.iter().map(|p| p.class).collect::<Vec<_>>()))
        };
        log.push(EpochMetrics {
            epoch,
            train_loss: loss_sum / data.len() as f64,
            train_acc: correct as f64 / data.len() as f64,
            val_acc,
        });
    }
    Ok((params, log))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prediction {
    pub class: usize,
    pub confidence: f64,
}

impl Prediction {
    /// Argmax with ties going to the lower class; confidence is the top
    /// softmax probability.
    pub fn from_logits(logits: &[f64]) -> Self {
        let class = argmax(logits);
        let p = softmax(logits);
        Self {
            class,
            confidence: p[class],
        }
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

const EVAL_CHUNK: usize = 16;

/// Eval-mode logits, one row per tensor.
pub fn predict_logits(params: &ModelParams<f32>, tensors: &[&EchoTensor]) -> Result<Vec<Vec<f64>>> {
    use rayon::prelude::*;
    let o = params.spec.output_dim;
    let parts: Vec<Vec<Vec<f64>>> = tensors
        .par_chunks(EVAL_CHUNK)
        .map(|chunk| {
            let batch = Batch::<f32>::from_tensors(chunk, params.spec.standardize)?;
            let logits = forward(params, &batch, Mode::Eval)?;
            Ok(logits
                .chunks_exact(o)
                .map(|r| r.iter().map(|v| *v as f64).collect())
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(parts.into_iter().flatten().collect())
}

pub fn predict(params: &ModelParams<f32>, tensors: &[&EchoTensor]) -> Result<Vec<Prediction>> {
    Ok(predict_logits(params, tensors)?
        .iter()
        .map(|l| Prediction::from_logits(l))
        .collect())
}

/// Ground truth and predicted classes for labelled tensors.
pub fn evaluate(params: &ModelParams<f32>, tensors: &[&EchoTensor]) -> Result<(Vec<usize>, Vec<usize>)> {
    let truth = labels_of(tensors)?;
    let pred = predict(params, tensors)?.into_iter().map(|p| p.class).collect();
    Ok((truth, pred))
}

pub fn accuracy(truth: &[usize], pred: &[usize]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    truth.iter().zip(pred).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64
}

#[derive(Debug, Clone)]
pub struct TwoStep {
    pub base: ModelParams<f32>,
    pub tuned: ModelParams<f32>,
    pub base_log: Vec<EpochMetrics>,
    pub tune_log: Vec<EpochMetrics>,
}

/// Pretrains on every participant except `target`, then continues training
/// (all layers, fresh optimizer state) on the target's `finetune` ids. An
/// empty `finetune` set returns the pretrained model unchanged.
pub fn two_step_train(
    init: ModelParams<f32>,
    data: &[LabeledInstance],
    target: &str,
    finetune: &BTreeSet<String>,
    val: &[&EchoTensor],
    cfg: &TrainConfig,
) -> Result<TwoStep> {
    let people: BTreeSet<&str> = data.iter().map(|i| i.meta.participant.as_str()).collect();
    if !people.contains(target) {
        return Err(Error::Unknown {
            kind: "participant",
            name: target.to_string(),
        });
    }
    if people.len() < 2 {
        return Err(Error::Config("two-step training needs at least two participants".into()));
    }
    let others: Vec<&EchoTensor> = data
        .iter()
        .filter(|i| i.meta.participant != target)
        .map(|i| &i.tensor)
        .collect();
    let (base, base_log) = train(init, &others, cfg, cfg.epochs_base, val)?;
    let mine: Vec<&EchoTensor> = data
        .iter()
        .filter(|i| i.meta.participant == target && finetune.contains(&i.id))
        .map(|i| &i.tensor)
        .collect();
    if mine.len() != finetune.len() {
        return Err(Error::Config("fine-tune ids must belong to the target participant".into()));
    }
    if mine.is_empty() {
        return Ok(TwoStep {
            tuned: base.clone(),
            base,
            base_log,
            tune_log: Vec::new(),
        });
    }
    let tune_cfg = TrainConfig {
        seed: cfg.seed.wrapping_add(1),
        ..cfg.clone()
    };
    let (tuned, tune_log) = train(base.clone(), &mine, &tune_cfg, cfg.epochs_finetune, val)?;
    Ok(TwoStep {
        base,
        tuned,
        base_log,
        tune_log,
    })
}
