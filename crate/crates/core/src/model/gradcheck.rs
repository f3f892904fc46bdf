//! Analytic gradients against central finite differences.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::net::{loss_and_pattern, step, Batch, Mode};
use super::ModelParams;
use crate::error::Result;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub per_tensor: usize,
    pub step: f64,
    /// Denominator floor for the relative error.
    pub floor: f64,
    pub seed: u64,
    pub mode: Mode,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            per_tensor: 50,
            step: 1e-5,
            floor: 1e-6,
            seed: 0,
            mode: Mode::Eval,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LayerCheck {
    pub tensor: String,
    pub kind: &'static str,
    pub checked: usize,
    /// Entries whose +/- step flipped a ReLU and were left out.
    pub skipped: usize,
    pub max_rel_error: f64,
}

fn kind_of(id: &str) -> &'static str {
    if id.starts_with("fc.") {
        "linear"
    } else if id.contains(".proj.") {
        "residual projection"
    } else if id.starts_with("stem.") {
        "stem conv"
    } else {
        "residual conv"
    }
}

/// Moves every bias off zero. At a zero-bias initialisation, units with an
/// all-zero receptive field sit exactly on a ReLU kink, where the gradient
/// is undefined.
pub fn randomize_biases(p: &mut ModelParams<f64>, scale: f64, rng: &mut impl Rng) {
    for t in p.tensors.iter_mut().filter(|t| t.id.ends_with(".b")) {
        for v in t.data.iter_mut() {
            *v = rng.random_range(-scale..=scale);
        }
    }
}

/// Compares up to `per_tensor` randomly chosen entries of every parameter
/// tensor. Relative error is `|a - n| / max(|a|, |n|, floor)`.
pub fn gradient_check(
    params: &ModelParams<f64>,
    batch: &Batch<f64>,
    labels: &[usize],
    opts: &GradCheckOptions,
) -> Result<Vec<LayerCheck>> {
    let analytic = step(params, batch, labels, opts.mode)?.grads;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut p = params.clone();
    let mut out = Vec::with_capacity(params.tensors.len());
    for ti in 0..params.tensors.len() {
        let len = params.tensors[ti].data.len();
        let picks = sample(&mut rng, len, opts.per_tensor.min(len));
        let mut check = LayerCheck {
            tensor: params.tensors[ti].id.clone(),
            kind: kind_of(&params.tensors[ti].id),
            checked: 0,
            skipped: 0,
            max_rel_error: 0.0,
        };
        for i in picks.iter() {
            let orig = p.tensors[ti].data[i];
            p.tensors[ti].data[i] = orig + opts.step;
            let (lp, pat_p) = loss_and_pattern(&p, batch, labels, opts.mode)?;
            p.tensors[ti].data[i] = orig - opts.step;
            let (lm, pat_m) = loss_and_pattern(&p, batch, labels, opts.mode)?;
            p.tensors[ti].data[i] = orig;
            if pat_p != pat_m {
                check.skipped += 1;
                continue;
            }
            let numeric = (lp - lm) / (2.0 * opts.step);
            let a = analytic[ti][i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(opts.floor);
            check.max_rel_error = check.max_rel_error.max(rel);
            check.checked += 1;
        }
        out.push(check);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ConvSpec, ModelSpec, StageSpec};

    #[test]
    fn small_network_passes() {
        let spec = ModelSpec {
            in_channels: 3,
            stem: ConvSpec {
                out_channels: 4,
                kernel: 3,
                stride: 1,
            },
            stages: vec![
                StageSpec {
                    out_channels: 4,
                    kernel: 3,
                    stride: 1,
                    residual: true,
                    blocks: 1,
                },
                StageSpec {
                    out_channels: 5,
                    kernel: 3,
                    stride: 2,
                    residual: false,
                    blocks: 1,
                },
            ],
            ..ModelSpec::default()
        };
        let mut p = ModelParams::<f64>::init(&spec, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        randomize_biases(&mut p, 0.1, &mut rng);
        let batch = Batch::new(2, 3, 9, 7, (0..2 * 3 * 9 * 7).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let opts = GradCheckOptions {
            per_tensor: 20,
            ..GradCheckOptions::default()
        };
        for mode in [Mode::Eval, Mode::Train { dropout_seed: 3 }] {
            let report = gradient_check(&p, &batch, &[4, 17], &GradCheckOptions { mode, ..opts }).unwrap();
            for c in &report {
                assert!(c.checked > 0, "{}", c.tensor);
                assert!(c.max_rel_error < 1e-4, "{} {}", c.tensor, c.max_rel_error);
            }
        }
    }
}
