//! Transmit sweeps, band-pass separation of the two speaker bands, and
//! sweep-aligned framing of microphone streams.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pipeline sample rate. One sample of round-trip delay is 3.43 mm of range.
pub const SAMPLE_RATE: u32 = 50_000;
pub const SPEED_OF_SOUND: f64 = 343.0;
pub const SWEEP_SECONDS: f64 = 0.012;
/// Samples per sweep at [`SAMPLE_RATE`].
pub const SWEEP_LEN: usize = 600;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChannelId {
    Mic1,
    Mic2,
    /// A transmitted (speaker) signal.
    Tx,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcmStream {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub channel: ChannelId,
}

impl PcmStream {
    pub fn new(samples: Vec<f64>, sample_rate: u32, channel: ChannelId) -> Result<Self> {
        if sample_rate != SAMPLE_RATE {
            return Err(Error::SampleRate {
                expected: SAMPLE_RATE,
                actual: sample_rate,
            });
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("pcm stream"));
        }
        Ok(Self {
            samples,
            sample_rate,
            channel,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// One speaker's chirp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub f_start: f64,
    pub f_end: f64,
    pub duration: f64,
    pub sample_rate: u32,
    pub amplitude: f64,
    /// Fraction of the sweep covered by the raised-cosine (Tukey) envelope,
    /// split evenly between the two ends. Zero gives a rectangular envelope.
    #[serde(default = "default_taper")]
    pub taper: f64,
}

fn default_taper() -> f64 {
    0.5
}

impl SweepConfig {
    /// Speaker 1 band, 18-21 kHz.
    pub fn band_a() -> Self {
        Self {
            f_start: 18_000.0,
            f_end: 21_000.0,
            duration: SWEEP_SECONDS,
            sample_rate: SAMPLE_RATE,
            amplitude: 0.5,
            taper: default_taper(),
        }
    }

    /// Speaker 2 band, 21.5-24.5 kHz.
    pub fn band_b() -> Self {
        Self {
            f_start: 21_500.0,
            f_end: 24_500.0,
            ..Self::band_a()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nyquist = self.sample_rate as f64 / 2.0;
        if !(self.f_start > 0.0 && self.f_start <= self.f_end && self.f_end < nyquist) {
            return Err(Error::Config(format!(
                "sweep band {}..{} Hz must satisfy 0 < f_start <= f_end < {} Hz",
                self.f_start, self.f_end, nyquist
            )));
        }
        if !(self.amplitude > 0.0 && self.amplitude <= 1.0) {
            return Err(Error::Config(format!(
                "sweep amplitude {} outside (0, 1]",
                self.amplitude
            )));
        }
        if !(0.0..=1.0).contains(&self.taper) {
            return Err(Error::Config(format!("taper {} outside [0, 1]", self.taper)));
        }
        let n = self.duration * self.sample_rate as f64;
        if !(n >= 1.0 && (n - n.round()).abs() < 1e-6) {
            return Err(Error::Config(format!(
                "sweep duration {} s is not a whole number of samples at {} Hz",
                self.duration, self.sample_rate
            )));
        }
        Ok(())
    }

    /// Sweep length in samples.
    pub fn len(&self) -> usize {
        (self.duration * self.sample_rate as f64).round() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One linear up-chirp, normalized so that its largest |sample| equals
/// `cfg.amplitude`.
pub fn generate_sweep(cfg: &SweepConfig) -> Result<PcmStream> {
    cfg.validate()?;
    let n = cfg.len();
    let fs = cfg.sample_rate as f64;
    let rate = (cfg.f_end - cfg.f_start) / cfg.duration;
    let edge = (cfg.taper * n as f64 / 2.0).round() as usize;
    let mut samples: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / fs;
            let phase = 2.0 * PI * (cfg.f_start * t + 0.5 * rate * t * t);
            phase.cos() * tukey(i, n, edge)
        })
        .collect();
    let peak = samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak > 0.0 {
        let scale = cfg.amplitude / peak;
        samples.iter_mut().for_each(|s| *s *= scale);
    }
    PcmStream::new(samples, cfg.sample_rate, ChannelId::Tx)
}

fn tukey(i: usize, n: usize, edge: usize) -> f64 {
    if edge == 0 {
        return 1.0;
    }
    let from_end = n - 1 - i;
    let k = i.min(from_end);
    if k >= edge {
        1.0
    } else {
        0.5 - 0.5 * (PI * k as f64 / edge as f64).cos()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub pass_low: f64,
    pub pass_high: f64,
    pub transition_width: f64,
    pub stop_attenuation: f64,
    pub tap_count: usize,
}

impl FilterSpec {
    pub fn for_sweep(sweep: &SweepConfig) -> Self {
        Self {
            pass_low: sweep.f_start,
            pass_high: sweep.f_end,
            transition_width: 600.0,
            stop_attenuation: 40.0,
            tap_count: 255,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nyquist = SAMPLE_RATE as f64 / 2.0;
        if !(self.pass_low > 0.0 && self.pass_low < self.pass_high && self.pass_high < nyquist) {
            return Err(Error::Config(format!(
                "pass band {}..{} Hz invalid",
                self.pass_low, self.pass_high
            )));
        }
        if !(self.transition_width > 0.0) {
            return Err(Error::Config("transition width must be positive".into()));
        }
        if self.tap_count == 0 || self.tap_count % 2 == 0 {
            return Err(Error::Config(format!(
                "tap count {} must be odd and positive",
                self.tap_count
            )));
        }
        Ok(())
    }
}

/// Symmetric (linear-phase) FIR taps.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterKernel {
    pub taps: Vec<f64>,
    pub spec: FilterSpec,
    /// Worst-case measured stop-band attenuation in dB.
    pub achieved_attenuation: f64,
}

impl FilterKernel {
    /// Magnitude response at `freq` Hz.
    pub fn gain_at(&self, freq: f64) -> f64 {
        magnitude(&self.taps, freq / SAMPLE_RATE as f64)
    }
}

fn magnitude(taps: &[f64], norm_freq: f64) -> f64 {
    let w = 2.0 * PI * norm_freq;
    let (re, im) = taps
        .iter()
        .enumerate()
        .fold((0.0, 0.0), |(re, im), (n, h)| {
            let a = w * n as f64;
            (re + h * a.cos(), im - h * a.sin())
        });
    re.hypot(im)
}

fn sinc_lowpass(cutoff: f64, x: f64) -> f64 {
    // cutoff in cycles/sample
    if x == 0.0 {
        2.0 * cutoff
    } else {
        (2.0 * PI * cutoff * x).sin() / (PI * x)
    }
}

/// Hamming-windowed sinc band-pass. Cutoffs sit half a transition width
/// outside the pass band; gain is normalized to unity at band centre.
pub fn design_bandpass(spec: &FilterSpec) -> Result<FilterKernel> {
    spec.validate()?;
    let fs = SAMPLE_RATE as f64;
    let n = spec.tap_count;
    let centre = (n - 1) as f64 / 2.0;
    let lo = ((spec.pass_low - spec.transition_width / 2.0) / fs).max(0.0);
    let hi = ((spec.pass_high + spec.transition_width / 2.0) / fs).min(0.5);
    let mut taps: Vec<f64> = (0..n)
        .map(|i| i.min(n - 1 - i))
        .map(|i| {
            let x = i as f64 - centre;
            let window = if n == 1 {
                1.0
            } else {
                0.54 - 0.46 * (2.0 * PI * i as f64 / (n - 1) as f64).cos()
            };
            (sinc_lowpass(hi, x) - sinc_lowpass(lo, x)) * window
        })
        .collect();
    let mid = magnitude(&taps, (spec.pass_low + spec.pass_high) / 2.0 / fs);
    if mid > 0.0 {
        taps.iter_mut().for_each(|t| *t /= mid);
    }

    let achieved = stop_band_attenuation(&taps, spec);
    if achieved < spec.stop_attenuation {
        return Err(Error::FilterDesign {
            achieved_db: achieved,
            required_db: spec.stop_attenuation,
        });
    }
    Ok(FilterKernel {
        taps,
        spec: *spec,
        achieved_attenuation: achieved,
    })
}

fn stop_band_attenuation(taps: &[f64], spec: &FilterSpec) -> f64 {
    let fs = SAMPLE_RATE as f64;
    let nyquist = fs / 2.0;
    let step = 10.0;
    let lower_edge = spec.pass_low - spec.transition_width;
    let upper_edge = spec.pass_high + spec.transition_width;
    let mut worst = 0.0f64;
    let mut f = 0.0;
    while f <= nyquist {
        if f <= lower_edge || f >= upper_edge {
            worst = worst.max(magnitude(taps, f / fs));
        }
        f += step;
    }
    if worst == 0.0 {
        f64::INFINITY
    } else {
        -20.0 * worst.log10()
    }
}

/// Zero-phase FIR filtering: the symmetric kernel is centred on each output
/// sample, so there is no group delay. Output length equals input length.
pub fn apply_filter(stream: &PcmStream, kernel: &FilterKernel) -> Result<PcmStream> {
    if stream.is_empty() {
        return Err(Error::Empty("stream"));
    }
    let samples = filter_samples(&stream.samples, &kernel.taps);
    Ok(PcmStream {
        samples,
        sample_rate: stream.sample_rate,
        channel: stream.channel,
    })
}

pub(crate) fn filter_samples(x: &[f64], taps: &[f64]) -> Vec<f64> {
    let n = taps.len();
    let half = (n - 1) / 2;
    let len = x.len();
    let mut y = vec![0.0; len];
    for (i, out) in y.iter_mut().enumerate() {
        // y[i] = sum_j taps[j] * x[i - half + j]; taps are symmetric.
        let start = i as isize - half as isize;
        let j0 = (-start).max(0) as usize;
        let j1 = ((len as isize - start) as usize).min(n);
        if j0 >= j1 {
            continue;
        }
        let xs = &x[(start + j0 as isize) as usize..(start + j1 as isize) as usize];
        *out = taps[j0..j1].iter().zip(xs).map(|(h, s)| h * s).sum();
    }
    y
}

/// Non-overlapping `frame_len` frames starting at `t0`; a trailing partial
/// frame is dropped.
pub fn segment_frames(stream: &PcmStream, frame_len: usize, t0: usize) -> Result<Vec<&[f64]>> {
    if frame_len == 0 {
        return Err(Error::Config("frame length must be positive".into()));
    }
    if t0 >= frame_len {
        return Err(Error::Config(format!(
            "frame offset {t0} must be smaller than the frame length {frame_len}"
        )));
    }
    if stream.len() <= t0 {
        return Ok(Vec::new());
    }
    Ok(stream.samples[t0..].chunks_exact(frame_len).collect())
}

pub fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

/// Tiles the sweep `repeats` times, the way a speaker emits it continuously.
pub fn repeat_sweep(sweep: &PcmStream, repeats: usize) -> PcmStream {
    PcmStream {
        samples: sweep.samples.repeat(repeats),
        sample_rate: sweep.sample_rate,
        channel: sweep.channel,
    }
}
