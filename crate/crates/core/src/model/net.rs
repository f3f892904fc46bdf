//! Forward and backward passes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ModelParams, ModelSpec, Real, Standardize};
use crate::echo::{EchoTensor, TENSOR_CHANNELS, WINDOW_BINS, WINDOW_FRAMES};
use crate::error::{Error, Result};

/// A batch of network inputs, `C x N x H x W`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<T> {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<T>,
}

impl<T: Real> Batch<T> {
    pub fn new(n: usize, c: usize, h: usize, w: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != n * c * h * w {
            return Err(Error::LengthMismatch {
                expected: n * c * h * w,
                actual: data.len(),
            });
        }
        if n == 0 || c == 0 || h == 0 || w == 0 {
            return Err(Error::Empty("batch"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("batch input"));
        }
        Ok(Self { n, c, h, w, data })
    }

    /// Standardizes each echo tensor and lays the batch out for the network
    /// (time as height, distance bin as width).
    pub fn from_tensors(tensors: &[&EchoTensor], standardize: Standardize) -> Result<Self> {
        let n = tensors.len();
        if n == 0 {
            return Err(Error::Empty("batch"));
        }
        let (c, h, w) = (TENSOR_CHANNELS, WINDOW_FRAMES, WINDOW_BINS);
        let mut data = vec![T::zero(); n * c * h * w];
        for (ni, t) in tensors.iter().enumerate() {
            if t.data.len() != h * w * c {
                return Err(Error::Shape(format!("tensor has {} values, expected {}", t.data.len(), h * w * c)));
            }
            if t.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("echo tensor"));
            }
            let stats = channel_stats(&t.data, standardize);
            for (i, v) in t.data.iter().enumerate() {
                let ch = i % c;
                let pix = i / c;
                let (mean, inv) = stats[ch];
                data[(ch * n + ni) * h * w + pix] = T::lit((*v as f64 - mean) * inv);
            }
        }
        Ok(Self { n, c, h, w, data })
    }
}

/// (mean, 1/std) per channel; a constant channel maps to zero.
fn channel_stats(data: &[f32], standardize: Standardize) -> [(f64, f64); TENSOR_CHANNELS] {
    let c = TENSOR_CHANNELS;
    let finish = |sum: f64, sq: f64, count: f64| {
        let mean = sum / count;
        let var = (sq / count - mean * mean).max(0.0);
        let std = var.sqrt();
        (mean, if std > 1e-12 { 1.0 / std } else { 0.0 })
    };
    match standardize {
        Standardize::None => [(0.0, 1.0); TENSOR_CHANNELS],
        Standardize::PerTensor => {
            let sum: f64 = data.iter().map(|v| *v as f64).sum();
            let sq: f64 = data.iter().map(|v| (*v as f64).powi(2)).sum();
            [finish(sum, sq, data.len() as f64); TENSOR_CHANNELS]
        }
        Standardize::PerChannel => {
            let mut sum = [0.0f64; TENSOR_CHANNELS];
            let mut sq = [0.0f64; TENSOR_CHANNELS];
            for (i, v) in data.iter().enumerate() {
                sum[i % c] += *v as f64;
                sq[i % c] += (*v as f64).powi(2);
            }
            let count = (data.len() / c) as f64;
            std::array::from_fn(|k| finish(sum[k], sq[k], count))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Eval,
    /// Dropout active, masks drawn from this seed.
    Train { dropout_seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Dims {
    c: usize,
    n: usize,
    h: usize,
    w: usize,
}

impl Dims {
    fn len(&self) -> usize {
        self.c * self.n * self.h * self.w
    }
}

#[derive(Debug, Clone, Copy)]
struct Conv {
    w: usize,
    b: usize,
    cin: usize,
    cout: usize,
    k: usize,
    stride: usize,
}

impl Conv {
    fn out_dims(&self, d: Dims) -> Dims {
        let pad = self.k / 2;
        Dims {
            c: self.cout,
            n: d.n,
            h: (d.h + 2 * pad - self.k) / self.stride + 1,
            w: (d.w + 2 * pad - self.k) / self.stride + 1,
        }
    }
}

struct Block {
    conv1: Conv,
    conv2: Conv,
    proj: Option<Conv>,
    residual: bool,
}

struct Arch {
    stem: Conv,
    blocks: Vec<Block>,
    fc_w: usize,
    fc_b: usize,
    features: usize,
}

/// Mirrors the parameter storage order of `super::layout`.
fn arch(spec: &ModelSpec) -> Arch {
    let mut next = 0;
    let mut conv = |cin, cout, k, stride| {
        let c = Conv {
            w: next,
            b: next + 1,
            cin,
            cout,
            k,
            stride,
        };
        next += 2;
        c
    };
    let stem = conv(spec.in_channels, spec.stem.out_channels, spec.stem.kernel, spec.stem.stride);
    let mut blocks = Vec::new();
    let mut c = spec.stem.out_channels;
    for st in &spec.stages {
        for bi in 0..st.blocks {
            let stride = if bi == 0 { st.stride } else { 1 };
            let conv1 = conv(c, st.out_channels, st.kernel, stride);
            let conv2 = conv(st.out_channels, st.out_channels, st.kernel, 1);
            let proj = (st.residual && (stride != 1 || c != st.out_channels)).then(|| conv(c, st.out_channels, 1, stride));
            blocks.push(Block {
                conv1,
                conv2,
                proj,
                residual: st.residual,
            });
            c = st.out_channels;
        }
    }
    Arch {
        stem,
        blocks,
        fc_w: next,
        fc_b: next + 1,
        features: c,
    }
}

fn im2col<T: Real>(x: &[T], d: Dims, conv: &Conv, od: Dims) -> Vec<T> {
    let (k, s, pad) = (conv.k, conv.stride, conv.k / 2);
    let ncols = od.n * od.h * od.w;
    let mut cols = vec![T::zero(); conv.cin * k * k * ncols];
    for c in 0..d.c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst = &mut cols[row * ncols..(row + 1) * ncols];
                for n in 0..d.n {
                    let src = &x[(c * d.n + n) * d.h * d.w..][..d.h * d.w];
                    for oy in 0..od.h {
                        let iy = (oy * s + ky) as isize - pad as isize;
                        if iy < 0 || iy >= d.h as isize {
                            continue;
                        }
                        let srow = &src[iy as usize * d.w..][..d.w];
                        let drow = &mut dst[(n * od.h + oy) * od.w..][..od.w];
                        for (ox, out) in drow.iter_mut().enumerate() {
                            let ix = (ox * s + kx) as isize - pad as isize;
                            if ix >= 0 && ix < d.w as isize {
                                *out = srow[ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im<T: Real>(cols: &[T], d: Dims, conv: &Conv, od: Dims) -> Vec<T> {
    let (k, s, pad) = (conv.k, conv.stride, conv.k / 2);
    let ncols = od.n * od.h * od.w;
    let mut dx = vec![T::zero(); d.len()];
    for c in 0..d.c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src = &cols[row * ncols..(row + 1) * ncols];
                for n in 0..d.n {
                    let dst = &mut dx[(c * d.n + n) * d.h * d.w..][..d.h * d.w];
                    for oy in 0..od.h {
                        let iy = (oy * s + ky) as isize - pad as isize;
                        if iy < 0 || iy >= d.h as isize {
                            continue;
                        }
                        let drow = &mut dst[iy as usize * d.w..][..d.w];
                        let srow = &src[(n * od.h + oy) * od.w..][..od.w];
                        for (ox, v) in srow.iter().enumerate() {
                            let ix = (ox * s + kx) as isize - pad as isize;
                            if ix >= 0 && ix < d.w as isize {
                                drow[ix as usize] += *v;
                            }
                        }
                    }
                }
            }
        }
    }
    dx
}

struct ConvOut<T> {
    y: Vec<T>,
    cols: Vec<T>,
    xd: Dims,
    yd: Dims,
}

fn conv_forward<T: Real>(p: &ModelParams<T>, conv: &Conv, x: &[T], d: Dims) -> ConvOut<T> {
    let od = conv.out_dims(d);
    let cols = im2col(x, d, conv, od);
    let rows = conv.cin * conv.k * conv.k;
    let ncols = od.n * od.h * od.w;
    let w = &p.tensors[conv.w].data;
    let b = &p.tensors[conv.b].data;
    let mut y = vec![T::zero(); conv.cout * ncols];
    for (o, chunk) in y.chunks_exact_mut(ncols).enumerate() {
        chunk.fill(b[o]);
    }
    T::gemm(conv.cout, rows, ncols, T::one(), w, rows, 1, &cols, ncols, 1, T::one(), &mut y, ncols, 1);
    ConvOut { y, cols, xd: d, yd: od }
}

/// Accumulates weight and bias gradients; returns the input gradient when
/// asked for.
fn conv_backward<T: Real>(
    p: &ModelParams<T>,
    conv: &Conv,
    out: &ConvOut<T>,
    dy: &[T],
    grads: &mut [Vec<T>],
    need_dx: bool,
) -> Option<Vec<T>> {
    let rows = conv.cin * conv.k * conv.k;
    let ncols = out.yd.n * out.yd.h * out.yd.w;
    T::gemm(
        conv.cout,
        ncols,
        rows,
        T::one(),
        dy,
        ncols,
        1,
        &out.cols,
        1,
        ncols,
        T::one(),
        &mut grads[conv.w],
        rows,
        1,
    );
    for (o, chunk) in dy.chunks_exact(ncols).enumerate() {
        grads[conv.b][o] += chunk.iter().copied().sum::<T>();
    }
    if !need_dx {
        return None;
    }
    let w = &p.tensors[conv.w].data;
    let mut dcols = vec![T::zero(); rows * ncols];
    T::gemm(rows, conv.cout, ncols, T::one(), w, 1, rows, dy, ncols, 1, T::zero(), &mut dcols, ncols, 1);
    Some(col2im(&dcols, out.xd, conv, out.yd))
}

fn relu<T: Real>(x: &mut [T]) {
    for v in x.iter_mut() {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// Zeroes `grad` wherever the ReLU output was not positive.
fn relu_back<T: Real>(grad: &mut [T], out: &[T]) {
    for (g, o) in grad.iter_mut().zip(out) {
        if *o <= T::zero() {
            *g = T::zero();
        }
    }
}

struct BlockCache<T> {
    c1: ConvOut<T>,
    h1: Vec<T>,
    c2: ConvOut<T>,
    cp: Option<ConvOut<T>>,
    out: Vec<T>,
    out_dims: Dims,
}

struct Cache<T> {
    stem: ConvOut<T>,
    stem_out: Vec<T>,
    blocks: Vec<BlockCache<T>>,
    last_dims: Dims,
    mask: Vec<T>,
    dropped: Vec<T>,
}

/// Returns logits as `classes x N` plus the activations backward needs.
fn run<T: Real>(p: &ModelParams<T>, batch: &Batch<T>, mode: Mode) -> Result<(Vec<T>, Cache<T>)> {
    let spec = &p.spec;
    if batch.c != spec.in_channels {
        return Err(Error::Shape(format!(
            "batch has {} channels, model expects {}",
            batch.c, spec.in_channels
        )));
    }
    if batch.data.len() != batch.n * batch.c * batch.h * batch.w {
        return Err(Error::Shape("batch data length does not match its dimensions".into()));
    }
    if batch.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("batch input"));
    }
    let a = arch(spec);
    let d0 = Dims {
        c: batch.c,
        n: batch.n,
        h: batch.h,
        w: batch.w,
    };
    let stem = conv_forward(p, &a.stem, &batch.data, d0);
    let mut x = stem.y.clone();
    relu(&mut x);
    let mut d = stem.yd;
    let stem_out = x.clone();

    let mut blocks = Vec::with_capacity(a.blocks.len());
    for blk in &a.blocks {
        let c1 = conv_forward(p, &blk.conv1, &x, d);
        let mut h1 = c1.y.clone();
        relu(&mut h1);
        let c2 = conv_forward(p, &blk.conv2, &h1, c1.yd);
        let mut out = c2.y.clone();
        let cp = blk.proj.as_ref().map(|pc| conv_forward(p, pc, &x, d));
        if blk.residual {
            let sc = cp.as_ref().map_or(&x, |c| &c.y);
            for (o, s) in out.iter_mut().zip(sc) {
                *o += *s;
            }
        }
        relu(&mut out);
        d = c2.yd;
        x = out.clone();
        blocks.push(BlockCache {
            c1,
            h1,
            c2,
            cp,
            out,
            out_dims: d,
        });
    }

    // Global average pool to `features x N`.
    let hw = d.h * d.w;
    let inv = T::one() / T::lit(hw as f64);
    let mut pooled = vec![T::zero(); d.c * d.n];
    for (i, v) in pooled.iter_mut().enumerate() {
        *v = x[i * hw..(i + 1) * hw].iter().copied().sum::<T>() * inv;
    }

    let rate = spec.dropout_rate;
    let mask = match mode {
        Mode::Eval => vec![T::one(); pooled.len()],
        Mode::Train { dropout_seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(dropout_seed);
            let keep = T::lit(1.0 / (1.0 - rate));
            (0..pooled.len())
                .map(|_| if rng.random_bool(1.0 - rate) { keep } else { T::zero() })
                .collect()
        }
    };
    let dropped: Vec<T> = pooled.iter().zip(&mask).map(|(v, m)| *v * *m).collect();

    let f = a.features;
    let o = spec.output_dim;
    let n = d.n;
    let mut logits = vec![T::zero(); o * n];
    let fb = &p.tensors[a.fc_b].data;
    for (k, row) in logits.chunks_exact_mut(n).enumerate() {
        row.fill(fb[k]);
    }
    T::gemm(o, f, n, T::one(), &p.tensors[a.fc_w].data, f, 1, &dropped, n, 1, T::one(), &mut logits, n, 1);
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logits"));
    }
    Ok((
        logits,
        Cache {
            stem,
            stem_out,
            blocks,
            last_dims: d,
            mask,
            dropped,
        },
    ))
}

fn transpose<T: Real>(x: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = x[r * cols + c];
        }
    }
    out
}

/// Logits, `N x classes` row-major.
pub fn forward<T: Real>(p: &ModelParams<T>, batch: &Batch<T>, mode: Mode) -> Result<Vec<T>> {
    let (logits, _) = run(p, batch, mode)?;
    Ok(transpose(&logits, p.spec.output_dim, batch.n))
}

/// Loss together with the ReLU sign pattern of the same pass.
pub(crate) fn loss_and_pattern<T: Real>(
    p: &ModelParams<T>,
    batch: &Batch<T>,
    labels: &[usize],
    mode: Mode,
) -> Result<(T, Vec<bool>)> {
    let (logits, cache) = run(p, batch, mode)?;
    let (o, n) = (p.spec.output_dim, batch.n);
    let mut loss = T::zero();
    for (j, &label) in labels.iter().enumerate() {
        let col: Vec<T> = (0..o).map(|k| logits[k * n + j]).collect();
        let max = col.iter().copied().fold(T::neg_infinity(), T::max);
        let z: T = col.iter().map(|v| (*v - max).exp()).sum();
        loss += (z.ln() + max - col[label]) / T::lit(n as f64);
    }
    let mut pattern: Vec<bool> = cache.stem_out.iter().map(|v| *v > T::zero()).collect();
    for b in &cache.blocks {
        pattern.extend(b.h1.iter().map(|v| *v > T::zero()));
        pattern.extend(b.out.iter().map(|v| *v > T::zero()));
    }
    Ok((loss, pattern))
}

pub(crate) struct StepOutput<T> {
    pub loss: T,
    pub grads: Vec<Vec<T>>,
    /// `N x classes`.
    pub logits: Vec<T>,
}

pub(crate) fn step<T: Real>(p: &ModelParams<T>, batch: &Batch<T>, labels: &[usize], mode: Mode) -> Result<StepOutput<T>> {
    let o = p.spec.output_dim;
    if labels.len() != batch.n {
        return Err(Error::LengthMismatch {
            expected: batch.n,
            actual: labels.len(),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= o) {
        return Err(Error::Label(bad));
    }
    let (logits, cache) = run(p, batch, mode)?;
    let n = batch.n;
    let a = arch(&p.spec);

    // Softmax cross-entropy, mean over the batch.
    let mut dlogits = vec![T::zero(); o * n];
    let mut loss = T::zero();
    let inv_n = T::one() / T::lit(n as f64);
    for (j, &label) in labels.iter().enumerate() {
        let col: Vec<T> = (0..o).map(|k| logits[k * n + j]).collect();
        let max = col.iter().copied().fold(T::neg_infinity(), T::max);
        let z: T = col.iter().map(|v| (*v - max).exp()).sum();
        let log_z = z.ln() + max;
        loss += (log_z - col[label]) * inv_n;
        for k in 0..o {
            let pk = (col[k] - log_z).exp();
            let target = if k == label { T::one() } else { T::zero() };
            dlogits[k * n + j] = (pk - target) * inv_n;
        }
    }

    let mut grads = p.zeros_like();
    let f = a.features;
    T::gemm(o, n, f, T::one(), &dlogits, n, 1, &cache.dropped, 1, n, T::zero(), &mut grads[a.fc_w], f, 1);
    for (k, row) in dlogits.chunks_exact(n).enumerate() {
        grads[a.fc_b][k] = row.iter().copied().sum();
    }
    let mut dfeat = vec![T::zero(); f * n];
    T::gemm(f, o, n, T::one(), &p.tensors[a.fc_w].data, 1, f, &dlogits, n, 1, T::zero(), &mut dfeat, n, 1);
    for (g, m) in dfeat.iter_mut().zip(&cache.mask) {
        *g *= *m;
    }

    let d = cache.last_dims;
    let hw = d.h * d.w;
    let inv = T::one() / T::lit(hw as f64);
    let mut dx = vec![T::zero(); d.len()];
    for (i, g) in dfeat.iter().enumerate() {
        dx[i * hw..(i + 1) * hw].fill(*g * inv);
    }

    for (blk, bc) in a.blocks.iter().zip(&cache.blocks).rev() {
        debug_assert_eq!(dx.len(), bc.out_dims.len());
        relu_back(&mut dx, &bc.out);
        let mut dh1 = conv_backward(p, &blk.conv2, &bc.c2, &dx, &mut grads, true).expect("dx requested");
        relu_back(&mut dh1, &bc.h1);
        let mut din = conv_backward(p, &blk.conv1, &bc.c1, &dh1, &mut grads, true).expect("dx requested");
        if blk.residual {
            match (&blk.proj, &bc.cp) {
                (Some(pc), Some(cp)) => {
                    let ds = conv_backward(p, pc, cp, &dx, &mut grads, true).expect("dx requested");
                    for (a, b) in din.iter_mut().zip(&ds) {
                        *a += *b;
                    }
                }
                _ => {
                    for (a, b) in din.iter_mut().zip(&dx) {
                        *a += *b;
                    }
                }
            }
        }
        dx = din;
    }
    relu_back(&mut dx, &cache.stem_out);
    conv_backward(p, &a.stem, &cache.stem, &dx, &mut grads, false);

    Ok(StepOutput {
        loss,
        grads,
        logits: transpose(&logits, o, n),
    })
}

/// Mean cross-entropy and the gradient of every parameter tensor.
pub fn loss_and_grad<T: Real>(
    p: &ModelParams<T>,
    batch: &Batch<T>,
    labels: &[usize],
    mode: Mode,
) -> Result<(T, Vec<Vec<T>>)> {
    let s = step(p, batch, labels, mode)?;
    Ok((s.loss, s.grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ConvSpec, StageSpec};
    use rand_distr::{Distribution, Normal};

    fn small_spec() -> ModelSpec {
        ModelSpec {
            in_channels: 2,
            stem: ConvSpec {
                out_channels: 4,
                kernel: 3,
                stride: 2,
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
                    out_channels: 6,
                    kernel: 3,
                    stride: 2,
                    residual: true,
                    blocks: 1,
                },
            ],
            ..ModelSpec::default()
        }
    }

    fn random_batch(n: usize, c: usize, h: usize, w: usize, seed: u64) -> Batch<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        Batch::new(n, c, h, w, (0..n * c * h * w).map(|_| normal.sample(&mut rng)).collect()).unwrap()
    }

    /// Direct nested-loop convolution, `C x N x H x W`.
    fn naive_conv(x: &[f64], d: Dims, w: &[f64], b: &[f64], cout: usize, k: usize, s: usize) -> Vec<f64> {
        let pad = (k / 2) as isize;
        let ho = (d.h + 2 * (k / 2) - k) / s + 1;
        let wo = (d.w + 2 * (k / 2) - k) / s + 1;
        let mut y = vec![0.0; cout * d.n * ho * wo];
        for o in 0..cout {
            for n in 0..d.n {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut acc = b[o];
                        for c in 0..d.c {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy = (oy * s + ky) as isize - pad;
                                    let ix = (ox * s + kx) as isize - pad;
                                    if iy >= 0 && ix >= 0 && (iy as usize) < d.h && (ix as usize) < d.w {
                                        acc += w[((o * d.c + c) * k + ky) * k + kx]
                                            * x[((c * d.n + n) * d.h + iy as usize) * d.w + ix as usize];
                                    }
                                }
                            }
                        }
                        y[((o * d.n + n) * ho + oy) * wo + ox] = acc;
                    }
                }
            }
        }
        y
    }

    #[test]
    fn conv_matches_nested_loops() {
        for &(k, s, h, w) in &[(3, 1, 7, 5), (3, 2, 9, 6), (1, 2, 5, 5), (5, 2, 11, 8)] {
            let d = Dims { c: 3, n: 2, h, w };
            let x = random_batch(2, 3, h, w, 1).data;
            let conv = Conv {
                w: 0,
                b: 1,
                cin: 3,
                cout: 4,
                k,
                stride: s,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(2);
            let wt: Vec<f64> = (0..4 * 3 * k * k).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let p = ModelParams {
                spec: ModelSpec::default(),
                seed: 0,
                tensors: vec![
                    super::super::ParamTensor {
                        id: "w".into(),
                        shape: vec![4, 3, k, k],
                        data: wt.clone(),
                    },
                    super::super::ParamTensor {
                        id: "b".into(),
                        shape: vec![4],
                        data: b.clone(),
                    },
                ],
            };
            let got = conv_forward(&p, &conv, &x, d);
            let want = naive_conv(&x, d, &wt, &b, 4, k, s);
            assert_eq!(got.y.len(), want.len());
            for (a, b) in got.y.iter().zip(&want) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), c> == <x, col2im(c)> for random x, c.
        let d = Dims { c: 2, n: 3, h: 9, w: 7 };
        let conv = Conv {
            w: 0,
            b: 1,
            cin: 2,
            cout: 1,
            k: 3,
            stride: 2,
        };
        let od = conv.out_dims(d);
        let x = random_batch(3, 2, 9, 7, 4).data;
        let cols = im2col(&x, d, &conv, od);
        let c: Vec<f64> = random_batch(1, 1, 1, cols.len(), 5).data;
        let lhs: f64 = cols.iter().zip(&c).map(|(a, b)| a * b).sum();
        let back = col2im(&c, d, &conv, od);
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0));
    }

    #[test]
    fn zero_input_zero_head_gives_uniform() {
        let spec = ModelSpec::default();
        let mut p = ModelParams::<f64>::init(&spec, 0).unwrap();
        p.get_mut("fc.w").unwrap().data.fill(0.0);
        let batch = Batch::new(2, 8, 155, 70, vec![0.0; 2 * 8 * 155 * 70]).unwrap();
        let logits = forward(&p, &batch, Mode::Eval).unwrap();
        assert!(logits.iter().all(|v| *v == 0.0));
        let (loss, _) = loss_and_grad(&p, &batch, &[0, 29], Mode::Eval).unwrap();
        assert!((loss - 30f64.ln()).abs() < 1e-12);
        assert!((30f64.ln() - 3.4012).abs() < 1e-4);
    }

    #[test]
    fn eval_is_deterministic_and_batch_independent() {
        let p = ModelParams::<f64>::init(&small_spec(), 2).unwrap();
        let b = random_batch(3, 2, 12, 10, 7);
        let l1 = forward(&p, &b, Mode::Eval).unwrap();
        assert_eq!(l1, forward(&p, &b, Mode::Eval).unwrap());

        // Reverse the batch.
        let plane = 12 * 10;
        let mut rev = b.clone();
        for c in 0..2 {
            for n in 0..3 {
                let src = (c * 3 + n) * plane;
                let dst = (c * 3 + (2 - n)) * plane;
                rev.data[dst..dst + plane].copy_from_slice(&b.data[src..src + plane]);
            }
        }
        let l2 = forward(&p, &rev, Mode::Eval).unwrap();
        for n in 0..3 {
            for k in 0..30 {
                assert!((l1[n * 30 + k] - l2[(2 - n) * 30 + k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn duplicated_batch_keeps_loss() {
        let p = ModelParams::<f64>::init(&small_spec(), 3).unwrap();
        let b = random_batch(2, 2, 10, 9, 8);
        let plane = 10 * 9;
        let mut dup = Vec::new();
        for c in 0..2 {
            let chan = &b.data[c * 2 * plane..(c + 1) * 2 * plane];
            dup.extend_from_slice(chan);
            dup.extend_from_slice(chan);
        }
        let dup = Batch::new(4, 2, 10, 9, dup).unwrap();
        let (l1, _) = loss_and_grad(&p, &b, &[3, 7], Mode::Eval).unwrap();
        let (l2, _) = loss_and_grad(&p, &dup, &[3, 7, 3, 7], Mode::Eval).unwrap();
        assert!((l1 - l2).abs() < 1e-12);
    }

    #[test]
    fn bad_inputs() {
        let p = ModelParams::<f64>::init(&small_spec(), 3).unwrap();
        let b = random_batch(2, 2, 10, 9, 8);
        assert!(matches!(loss_and_grad(&p, &b, &[0, 30], Mode::Eval), Err(Error::Label(30))));
        assert!(loss_and_grad(&p, &b, &[0], Mode::Eval).is_err());
        let wrong = random_batch(1, 3, 10, 9, 1);
        assert!(forward(&p, &wrong, Mode::Eval).is_err());
        assert!(Batch::<f64>::new(1, 1, 1, 2, vec![0.0, f64::NAN]).is_err());
        let short = EchoTensor {
            data: vec![0.0; 10],
            label: None,
        };
        assert!(Batch::<f32>::from_tensors(&[&short], Standardize::PerTensor).is_err());
    }

    #[test]
    fn dropout_expectation_matches_eval() {
        // Inverted dropout: the mean of train-mode head inputs over masks
        // equals the eval-mode input, so the logits agree in expectation.
        let mut p = ModelParams::<f64>::init(&small_spec(), 4).unwrap();
        let b = random_batch(1, 2, 10, 9, 9);
        p.get_mut("fc.b").unwrap().data.fill(0.0);
        let eval = forward(&p, &b, Mode::Eval).unwrap();
        let masks = 10_000;
        let mut mean = vec![0.0; 30];
        let mut sq = vec![0.0; 30];
        for s in 0..masks {
            let l = forward(&p, &b, Mode::Train { dropout_seed: s }).unwrap();
            for k in 0..30 {
                mean[k] += l[k] / masks as f64;
                sq[k] += l[k] * l[k] / masks as f64;
            }
        }
        for k in 0..30 {
            let sd = ((sq[k] - mean[k] * mean[k]).max(0.0) / masks as f64).sqrt();
            assert!((mean[k] - eval[k]).abs() <= 3.0 * sd + 1e-12, "class {k}: {} vs {}", mean[k], eval[k]);
        }
    }

    #[test]
    fn standardization_modes() {
        let data: Vec<f32> = (0..crate::echo::TENSOR_LEN).map(|i| (i % 8) as f32 * 10.0 + (i % 7) as f32).collect();
        let t = EchoTensor::new(data, None).unwrap();
        for mode in [Standardize::PerTensor, Standardize::PerChannel] {
            let b = Batch::<f64>::from_tensors(&[&t], mode).unwrap();
            let mean = b.data.iter().sum::<f64>() / b.data.len() as f64;
            let var = b.data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / b.data.len() as f64;
            assert!(mean.abs() < 1e-9);
            assert!((var - 1.0).abs() < 1e-9);
        }
        let b = Batch::<f64>::from_tensors(&[&t], Standardize::PerChannel).unwrap();
        let plane = 155 * 70;
        let ch3 = &b.data[3 * plane..4 * plane];
        assert!(ch3.iter().sum::<f64>().abs() < 1e-6);
        let zero = EchoTensor::zeros();
        let z = Batch::<f32>::from_tensors(&[&zero], Standardize::PerTensor).unwrap();
        assert!(z.data.iter().all(|v| *v == 0.0));
    }
}
