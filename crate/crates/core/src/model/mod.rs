//! Residual convolutional classifier over echo tensors, written from
//! scratch: forward and backward passes, Adam, training loops and
//! checkpoints.
//!
//! Activations are laid out channel-major across the batch (`C x N x H x W`)
//! so that every convolution is one im2col GEMM for the whole batch. The
//! network is generic over [`Real`]; training runs in `f32` and the gradient
//! check in `f64`.

mod checkpoint;
mod gradcheck;
mod net;
mod train;

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::augment::AugmentPolicy;
use crate::echo::TENSOR_CHANNELS;
use crate::error::{Error, Result};
use crate::labels::NUM_CLASSES;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use gradcheck::{gradient_check, randomize_biases, GradCheckOptions, LayerCheck};
pub use net::{forward, loss_and_grad, Batch, Mode};
pub use train::{
    accuracy, evaluate, predict, predict_logits, softmax, train, two_step_train, write_metrics_csv, Adam, EpochMetrics,
    Prediction, TwoStep,
};

/// Floating-point element type of the network.
pub trait Real:
    num_traits::Float + num_traits::FromPrimitive + AddAssign + SubAssign + MulAssign + Sum + Send + Sync + Debug + Default + 'static
{
    /// `c = alpha * a . b + beta * c` with explicit row and column strides.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: usize,
        csa: usize,
        b: &[Self],
        rsb: usize,
        csb: usize,
        beta: Self,
        c: &mut [Self],
        rsc: usize,
        csc: usize,
    );

    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("representable")
    }
}

fn span(rows: usize, cols: usize, rs: usize, cs: usize) -> usize {
    if rows == 0 || cols == 0 {
        0
    } else {
        (rows - 1) * rs + (cols - 1) * cs + 1
    }
}

macro_rules! impl_real {
    ($t:ty, $f:path) => {
        impl Real for $t {
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                rsa: usize,
                csa: usize,
                b: &[Self],
                rsb: usize,
                csb: usize,
                beta: Self,
                c: &mut [Self],
                rsc: usize,
                csc: usize,
            ) {
                assert!(a.len() >= span(m, k, rsa, csa), "gemm: a too short");
                assert!(b.len() >= span(k, n, rsb, csb), "gemm: b too short");
                assert!(c.len() >= span(m, n, rsc, csc), "gemm: c too short");
                if m == 0 || n == 0 {
                    return;
                }
                // SAFETY: the asserts above keep every strided access in bounds,
                // and `c` is exclusively borrowed.
                unsafe {
                    $f(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        rsa as isize,
                        csa as isize,
                        b.as_ptr(),
                        rsb as isize,
                        csb as isize,
                        beta,
                        c.as_mut_ptr(),
                        rsc as isize,
                        csc as isize,
                    )
                }
            }
        }
    };
}

impl_real!(f32, matrixmultiply::sgemm);
impl_real!(f64, matrixmultiply::dgemm);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

/// One stage of residual blocks; the first block carries the stride.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSpec {
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub residual: bool,
    #[serde(default = "one")]
    pub blocks: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Standardize {
    /// One mean and standard deviation per input tensor.
    PerTensor,
    /// Separate statistics for each of the eight profile channels of a tensor.
    PerChannel,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub in_channels: usize,
    pub stem: ConvSpec,
    pub stages: Vec<StageSpec>,
    pub dropout_rate: f64,
    pub output_dim: usize,
    pub standardize: Standardize,
}

impl Default for ModelSpec {
    fn default() -> Self {
        let stage = |c| StageSpec {
            out_channels: c,
            kernel: 3,
            stride: 2,
            residual: true,
            blocks: 1,
        };
        Self {
            in_channels: TENSOR_CHANNELS,
            stem: ConvSpec {
                out_channels: 16,
                kernel: 3,
                stride: 2,
            },
            stages: vec![stage(16), stage(32), stage(64), stage(128)],
            dropout_rate: 0.6,
            output_dim: NUM_CLASSES,
            standardize: Standardize::PerChannel,
        }
    }
}

impl ModelSpec {
    /// ResNet-18 depth: two blocks per stage at widths 64..512.
    pub fn resnet18() -> Self {
        let stage = |c, s| StageSpec {
            out_channels: c,
            kernel: 3,
            stride: s,
            residual: true,
            blocks: 2,
        };
        Self {
            stem: ConvSpec {
                out_channels: 64,
                kernel: 7,
                stride: 2,
            },
            stages: vec![stage(64, 2), stage(128, 2), stage(256, 2), stage(512, 2)],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.output_dim != NUM_CLASSES {
            return Err(Error::Config(format!("output_dim must be {NUM_CLASSES}")));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!("dropout rate {} outside [0, 1)", self.dropout_rate)));
        }
        if self.in_channels == 0 {
            return Err(Error::Config("in_channels must be positive".into()));
        }
        let convs = std::iter::once((self.stem.out_channels, self.stem.kernel, self.stem.stride))
            .chain(self.stages.iter().map(|s| (s.out_channels, s.kernel, s.stride)));
        for (c, k, s) in convs {
            if c == 0 || s == 0 || k % 2 == 0 {
                return Err(Error::Config(format!(
                    "conv needs positive width and stride and an odd kernel (got {c}, {k}, {s})"
                )));
            }
        }
        if self.stages.iter().any(|s| s.blocks == 0) {
            return Err(Error::Config("every stage needs at least one block".into()));
        }
        Ok(())
    }

    pub fn features(&self) -> usize {
        self.stages.last().map_or(self.stem.out_channels, |s| s.out_channels)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs_base: usize,
    pub epochs_finetune: usize,
    pub seed: u64,
    pub augment: AugmentPolicy,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 2e-4,
            batch_size: 8,
            epochs_base: 150,
            epochs_finetune: 150,
            seed: 0,
            augment: AugmentPolicy::default(),
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.eps <= 0.0 {
            return Err(Error::Config("Adam betas must lie in [0, 1) and eps be positive".into()));
        }
        self.augment.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor<T> {
    pub id: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub spec: ModelSpec,
    pub seed: u64,
    pub tensors: Vec<ParamTensor<T>>,
}

/// Parameter layout derived from a spec: (id, shape, fan_in) in storage order.
fn layout(spec: &ModelSpec) -> Vec<(String, Vec<usize>, usize)> {
    let mut out = Vec::new();
    let mut conv = |name: String, cin: usize, cout: usize, k: usize| {
        out.push((format!("{name}.w"), vec![cout, cin, k, k], cin * k * k));
        out.push((format!("{name}.b"), vec![cout], 0));
    };
    conv("stem".into(), spec.in_channels, spec.stem.out_channels, spec.stem.kernel);
    let mut c = spec.stem.out_channels;
    for (si, st) in spec.stages.iter().enumerate() {
        for bi in 0..st.blocks {
            let stride = if bi == 0 { st.stride } else { 1 };
            let p = format!("s{si}b{bi}");
            conv(format!("{p}.conv1"), c, st.out_channels, st.kernel);
            conv(format!("{p}.conv2"), st.out_channels, st.out_channels, st.kernel);
            if st.residual && (stride != 1 || c != st.out_channels) {
                conv(format!("{p}.proj"), c, st.out_channels, 1);
            }
            c = st.out_channels;
        }
    }
    out.push(("fc.w".into(), vec![spec.output_dim, c], c));
    out.push(("fc.b".into(), vec![spec.output_dim], 0));
    out
}

impl<T: Real> ModelParams<T> {
    /// He-normal weights (std `sqrt(2 / fan_in)`), zero biases.
    pub fn init(spec: &ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors = layout(spec)
            .into_iter()
            .map(|(id, shape, fan_in)| {
                let n: usize = shape.iter().product();
                let data = if fan_in == 0 {
                    vec![T::zero(); n]
                } else {
                    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
                    (0..n).map(|_| T::lit(normal.sample(&mut rng))).collect()
                };
                ParamTensor { id, shape, data }
            })
            .collect();
        Ok(Self {
            spec: spec.clone(),
            seed,
            tensors,
        })
    }

    pub fn zeros_like(&self) -> Vec<Vec<T>> {
        self.tensors.iter().map(|t| vec![T::zero(); t.data.len()]).collect()
    }

    pub fn get(&self, id: &str) -> Option<&ParamTensor<T>> {
        self.tensors.iter().find(|t| t.id == id)
    }

    pub fn get_mut(&mut self, id: &str) -> Option<&mut ParamTensor<T>> {
        self.tensors.iter_mut().find(|t| t.id == id)
    }

    pub fn num_params(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams {
            spec: self.spec.clone(),
            seed: self.seed,
            tensors: self
                .tensors
                .iter()
                .map(|t| ParamTensor {
                    id: t.id.clone(),
                    shape: t.shape.clone(),
                    data: t.data.iter().map(|v| U::from(*v).expect("finite cast")).collect(),
                })
                .collect(),
        }
    }

    /// Checks the tensors against the layout implied by the spec.
    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        let want = layout(&self.spec);
        if want.len() != self.tensors.len() {
            return Err(Error::Shape(format!(
                "expected {} parameter tensors, found {}",
                want.len(),
                self.tensors.len()
            )));
        }
        for ((id, shape, _), t) in want.iter().zip(&self.tensors) {
            if id != &t.id || shape != &t.shape || t.data.len() != shape.iter().product::<usize>() {
                return Err(Error::Shape(format!("parameter {} does not match spec ({id} {shape:?})", t.id)));
            }
            if t.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("model parameter"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_layout() {
        let p = ModelParams::<f32>::init(&ModelSpec::default(), 1).unwrap();
        let ids: Vec<&str> = p.tensors.iter().map(|t| t.id.as_str()).collect();
        assert_eq!(ids[..2], ["stem.w", "stem.b"]);
        assert_eq!(p.get("stem.w").unwrap().shape, vec![16, 8, 3, 3]);
        assert_eq!(p.get("s3b0.conv2.w").unwrap().shape, vec![128, 128, 3, 3]);
        assert_eq!(p.get("s0b0.proj.w").unwrap().shape, vec![16, 16, 1, 1]);
        assert_eq!(p.get("fc.w").unwrap().shape, vec![30, 128]);
        assert!(p.get("fc.b").unwrap().data.iter().all(|v| *v == 0.0));
        p.validate().unwrap();
    }

    #[test]
    fn resnet18_depth() {
        let spec = ModelSpec::resnet18();
        let p = ModelParams::<f32>::init(&spec, 0).unwrap();
        let convs = p.tensors.iter().filter(|t| t.id.ends_with(".w") && t.shape.len() == 4 && t.shape[2] > 1).count();
        // 17 weighted conv layers plus the classifier.
        assert_eq!(convs + 1, 18);
    }

    #[test]
    fn he_init_scale() {
        let p = ModelParams::<f64>::init(&ModelSpec::default(), 3).unwrap();
        let w = &p.get("s3b0.conv2.w").unwrap().data;
        let var = w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64;
        let want = 2.0 / (128.0 * 9.0);
        assert!((var / want - 1.0).abs() < 0.02, "{var} vs {want}");
    }

    #[test]
    fn init_is_seeded() {
        let spec = ModelSpec::default();
        let a = ModelParams::<f32>::init(&spec, 5).unwrap();
        assert_eq!(a, ModelParams::<f32>::init(&spec, 5).unwrap());
        assert_ne!(a, ModelParams::<f32>::init(&spec, 6).unwrap());
    }

    #[test]
    fn spec_validation() {
        assert!(ModelSpec { output_dim: 10, ..ModelSpec::default() }.validate().is_err());
        assert!(ModelSpec { dropout_rate: 1.0, ..ModelSpec::default() }.validate().is_err());
        let mut even = ModelSpec::default();
        even.stages[1].kernel = 4;
        assert!(even.validate().is_err());
        assert!(TrainConfig { learning_rate: 0.0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { batch_size: 0, ..TrainConfig::default() }.validate().is_err());
    }

    #[test]
    fn gemm_with_strides() {
        // [1 2; 3 4] . [5 6; 7 8]^T via column strides on b.
        let a = [1.0f64, 2.0, 3.0, 4.0];
        let b = [5.0f64, 6.0, 7.0, 8.0];
        let mut c = [0.0f64; 4];
        f64::gemm(2, 2, 2, 1.0, &a, 2, 1, &b, 1, 2, 0.0, &mut c, 2, 1);
        assert_eq!(c, [17.0, 23.0, 39.0, 53.0]);
    }
}
