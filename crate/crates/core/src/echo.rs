//! Echo profiles: per-sweep cross-correlation between the transmitted chirp
//! and the band-filtered microphone signal, laid out as a distance × time
//! image, plus the frame-to-frame differential and the 8-channel classifier
//! tensor.

use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::GestureLabel;
use crate::signal::{
    apply_filter, design_bandpass, filter_samples, generate_sweep, segment_frames, FilterKernel,
    FilterSpec, PcmStream, SweepConfig, SAMPLE_RATE, SPEED_OF_SOUND, SWEEP_SECONDS,
};

/// Round-trip range covered by one lag sample: c / (2 fs) = 3.43 mm.
pub const METERS_PER_BIN: f64 = SPEED_OF_SOUND / (2.0 * SAMPLE_RATE as f64);
pub const SECONDS_PER_FRAME: f64 = SWEEP_SECONDS;
pub const WINDOW_BINS: usize = 70;
pub const WINDOW_FRAMES: usize = 155;
pub const TENSOR_CHANNELS: usize = 8;
pub const TENSOR_LEN: usize = WINDOW_FRAMES * WINDOW_BINS * TENSOR_CHANNELS;

/// Speaker/microphone pairing. Speaker 1 (band A) sits beside mic 1,
/// speaker 2 (band B) beside mic 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProfileChannel {
    SS1,
    DS1,
    DS2,
    SS2,
}

impl ProfileChannel {
    pub const ALL: [ProfileChannel; 4] = [
        ProfileChannel::SS1,
        ProfileChannel::DS1,
        ProfileChannel::DS2,
        ProfileChannel::SS2,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// 0 for mic 1, 1 for mic 2.
    pub fn mic(self) -> usize {
        match self {
            ProfileChannel::SS1 | ProfileChannel::DS1 => 0,
            ProfileChannel::DS2 | ProfileChannel::SS2 => 1,
        }
    }

    /// 0 for speaker 1 (band A), 1 for speaker 2 (band B).
    pub fn speaker(self) -> usize {
        match self {
            ProfileChannel::SS1 | ProfileChannel::DS2 => 0,
            ProfileChannel::DS1 | ProfileChannel::SS2 => 1,
        }
    }
}

impl fmt::Display for ProfileChannel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProfileKind {
    Original,
    Differential,
}

/// Correlation strength indexed by (distance bin, time frame), stored
/// row-major with rows = distance.
#[derive(Debug, Clone, PartialEq)]
pub struct EchoProfile {
    pub values: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
    pub channel: ProfileChannel,
    pub kind: ProfileKind,
    pub meters_per_bin: f64,
    pub seconds_per_frame: f64,
}

impl EchoProfile {
    pub fn from_values(
        values: Vec<f64>,
        rows: usize,
        cols: usize,
        channel: ProfileChannel,
        kind: ProfileKind,
    ) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::LengthMismatch {
                expected: rows * cols,
                actual: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("echo profile"));
        }
        Ok(Self {
            values,
            rows,
            cols,
            channel,
            kind,
            meters_per_bin: METERS_PER_BIN,
            seconds_per_frame: SECONDS_PER_FRAME,
        })
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, col)).collect()
    }

    pub fn argmax_row(&self, col: usize) -> usize {
        (0..self.rows)
            .max_by(|&a, &b| self.get(a, col).total_cmp(&self.get(b, col)).then(b.cmp(&a)))
            .unwrap_or(0)
    }

    pub fn energy(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    /// Range in metres at the centre of `row`.
    pub fn distance_of(&self, row: usize) -> f64 {
        row as f64 * self.meters_per_bin
    }
}

/// Distance bin whose round-trip delay matches `meters`.
pub fn bin_for_distance(meters: f64) -> usize {
    (meters / METERS_PER_BIN).round() as usize
}

/// Frequency-domain circular cross-correlation against a fixed reference.
pub struct Correlator {
    len: usize,
    reference_conj: Vec<Complex64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Correlator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Correlator").field("len", &self.len).finish()
    }
}

impl Correlator {
    pub fn new(reference: &[f64]) -> Result<Self> {
        if reference.is_empty() {
            return Err(Error::Empty("reference"));
        }
        let len = reference.len();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(len);
        let inverse = planner.plan_fft_inverse(len);
        let mut spec: Vec<Complex64> = reference.iter().map(|&r| Complex64::new(r, 0.0)).collect();
        forward.process(&mut spec);
        let reference_conj = spec.into_iter().map(|c| c.conj()).collect();
        Ok(Self {
            len,
            reference_conj,
            forward,
            inverse,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// `out[lag] = sum_n frame[(n + lag) mod N] * reference[n]`.
    pub fn correlate(&self, frame: &[f64]) -> Result<Vec<f64>> {
        if frame.len() != self.len {
            return Err(Error::LengthMismatch {
                expected: self.len,
                actual: frame.len(),
            });
        }
        let mut buf: Vec<Complex64> = frame.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.forward.process(&mut buf);
        for (b, r) in buf.iter_mut().zip(&self.reference_conj) {
            *b *= r;
        }
        self.inverse.process(&mut buf);
        let scale = 1.0 / self.len as f64;
        Ok(buf.into_iter().map(|c| c.re * scale).collect())
    }
}

/// Circular cross-correlation over lags `0..N`.
pub fn cross_correlate(frame: &[f64], reference: &[f64]) -> Result<Vec<f64>> {
    if frame.len() != reference.len() {
        return Err(Error::LengthMismatch {
            expected: reference.len(),
            actual: frame.len(),
        });
    }
    Correlator::new(reference)?.correlate(frame)
}

/// One correlation column per frame; row r is round-trip range r × 3.43 mm.
pub fn build_echo_profile(
    frames: &[&[f64]],
    reference: &[f64],
    channel: ProfileChannel,
) -> Result<EchoProfile> {
    let correlator = Correlator::new(reference)?;
    profile_with(&correlator, frames, channel)
}

fn profile_with(correlator: &Correlator, frames: &[&[f64]], channel: ProfileChannel) -> Result<EchoProfile> {
    if frames.is_empty() {
        return Err(Error::Empty("frames"));
    }
    let rows = correlator.len();
    let cols = frames.len();
    let mut values = vec![0.0; rows * cols];
    for (t, frame) in frames.iter().enumerate() {
        let column = correlator.correlate(frame)?;
        for (r, v) in column.into_iter().enumerate() {
            values[r * cols + t] = v;
        }
    }
    EchoProfile::from_values(values, rows, cols, channel, ProfileKind::Original)
}

/// `D[r, t] = E[r, t] - E[r, t-1]`, with column 0 zero.
pub fn differential_profile(ep: &EchoProfile) -> Result<EchoProfile> {
    if ep.cols < 2 {
        return Err(Error::Shape(format!(
            "differential needs at least 2 frames, got {}",
            ep.cols
        )));
    }
    let mut values = vec![0.0; ep.values.len()];
    for r in 0..ep.rows {
        let row = &ep.values[r * ep.cols..(r + 1) * ep.cols];
        let out = &mut values[r * ep.cols..(r + 1) * ep.cols];
        for t in 1..ep.cols {
            out[t] = row[t] - row[t - 1];
        }
    }
    Ok(EchoProfile {
        values,
        kind: ProfileKind::Differential,
        ..ep.clone()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start_bin: usize,
    pub n_bins: usize,
    pub start_frame: usize,
    pub n_frames: usize,
}

impl Window {
    pub fn model_input(start_bin: usize, start_frame: usize) -> Self {
        Self {
            start_bin,
            n_bins: WINDOW_BINS,
            start_frame,
            n_frames: WINDOW_FRAMES,
        }
    }
}

pub fn crop_window(ep: &EchoProfile, w: &Window) -> Result<EchoProfile> {
    let row_end = w.start_bin + w.n_bins;
    let col_end = w.start_frame + w.n_frames;
    if row_end > ep.rows || col_end > ep.cols {
        return Err(Error::OutOfBounds(format!(
            "window rows {}..{} cols {}..{} overhangs {}x{} profile by {} rows, {} cols",
            w.start_bin,
            row_end,
            w.start_frame,
            col_end,
            ep.rows,
            ep.cols,
            row_end.saturating_sub(ep.rows),
            col_end.saturating_sub(ep.cols)
        )));
    }
    let mut values = Vec::with_capacity(w.n_bins * w.n_frames);
    for r in w.start_bin..row_end {
        values.extend_from_slice(&ep.values[r * ep.cols + w.start_frame..r * ep.cols + col_end]);
    }
    Ok(EchoProfile {
        values,
        rows: w.n_bins,
        cols: w.n_frames,
        ..ep.clone()
    })
}

/// Classifier input, laid out `[time][distance][channel]`. Channels 0-3 are
/// the original SS1, DS1, DS2, SS2 profiles, 4-7 their differentials.
#[derive(Debug, Clone, PartialEq)]
pub struct EchoTensor {
    pub data: Vec<f32>,
    pub label: Option<GestureLabel>,
}

impl EchoTensor {
    pub const SHAPE: [usize; 3] = [WINDOW_FRAMES, WINDOW_BINS, TENSOR_CHANNELS];

    pub fn new(data: Vec<f32>, label: Option<GestureLabel>) -> Result<Self> {
        if data.len() != TENSOR_LEN {
            return Err(Error::Shape(format!(
                "tensor has {} values, expected {}x{}x{}",
                data.len(),
                WINDOW_FRAMES,
                WINDOW_BINS,
                TENSOR_CHANNELS
            )));
        }
        Ok(Self { data, label })
    }

    pub fn zeros() -> Self {
        Self {
            data: vec![0.0; TENSOR_LEN],
            label: None,
        }
    }

    #[inline]
    pub fn index(time: usize, bin: usize, channel: usize) -> usize {
        (time * WINDOW_BINS + bin) * TENSOR_CHANNELS + channel
    }

    pub fn get(&self, time: usize, bin: usize, channel: usize) -> f32 {
        self.data[Self::index(time, bin, channel)]
    }

    /// Splits back into eight `WINDOW_BINS x WINDOW_FRAMES` profiles.
    pub fn unstack(&self) -> [EchoProfile; TENSOR_CHANNELS] {
        std::array::from_fn(|c| {
            let mut values = vec![0.0; WINDOW_BINS * WINDOW_FRAMES];
            for t in 0..WINDOW_FRAMES {
                for r in 0..WINDOW_BINS {
                    values[r * WINDOW_FRAMES + t] = self.get(t, r, c) as f64;
                }
            }
            EchoProfile {
                values,
                rows: WINDOW_BINS,
                cols: WINDOW_FRAMES,
                channel: ProfileChannel::ALL[c % 4],
                kind: if c < 4 {
                    ProfileKind::Original
                } else {
                    ProfileKind::Differential
                },
                meters_per_bin: METERS_PER_BIN,
                seconds_per_frame: SECONDS_PER_FRAME,
            }
        })
    }
}

pub fn stack_tensor(profiles: &[EchoProfile; 4], diffs: &[EchoProfile; 4]) -> Result<EchoTensor> {
    let mut data = vec![0.0f32; TENSOR_LEN];
    for (c, p) in profiles.iter().chain(diffs.iter()).enumerate() {
        let want_channel = ProfileChannel::ALL[c % 4];
        let want_kind = if c < 4 {
            ProfileKind::Original
        } else {
            ProfileKind::Differential
        };
        if p.rows != WINDOW_BINS || p.cols != WINDOW_FRAMES {
            return Err(Error::Shape(format!(
                "channel {c} is {}x{}, expected {}x{}",
                p.rows, p.cols, WINDOW_BINS, WINDOW_FRAMES
            )));
        }
        if p.channel != want_channel || p.kind != want_kind {
            return Err(Error::Shape(format!(
                "channel {c} holds {:?} {}, expected {:?} {}",
                p.kind, p.channel, want_kind, want_channel
            )));
        }
        for r in 0..WINDOW_BINS {
            for t in 0..WINDOW_FRAMES {
                data[EchoTensor::index(t, r, c)] = p.get(r, t) as f32;
            }
        }
    }
    Ok(EchoTensor { data, label: None })
}

/// Everything needed to turn the two microphone streams into profiles:
/// one transmit reference, band filter and correlator per speaker.
#[derive(Debug)]
pub struct ProfilePipeline {
    pub sweeps: [SweepConfig; 2],
    pub references: [PcmStream; 2],
    pub kernels: [FilterKernel; 2],
    correlators: [Correlator; 2],
}

impl ProfilePipeline {
    pub fn new(sweeps: [SweepConfig; 2], filters: [FilterSpec; 2]) -> Result<Self> {
        let references = [generate_sweep(&sweeps[0])?, generate_sweep(&sweeps[1])?];
        if references[0].len() != references[1].len() {
            return Err(Error::Config("both sweeps must have the same length".into()));
        }
        let kernels = [design_bandpass(&filters[0])?, design_bandpass(&filters[1])?];
        let correlators = [
            Correlator::new(&references[0].samples)?,
            Correlator::new(&references[1].samples)?,
        ];
        Ok(Self {
            sweeps,
            references,
            kernels,
            correlators,
        })
    }

    pub fn sweep_len(&self) -> usize {
        self.references[0].len()
    }

    /// Full-length original profiles for the four channels of one recording.
    pub fn profiles(&self, mics: [&PcmStream; 2], t0: usize) -> Result<[EchoProfile; 4]> {
        let filtered = [
            [apply_filter(mics[0], &self.kernels[0])?, apply_filter(mics[0], &self.kernels[1])?],
            [apply_filter(mics[1], &self.kernels[0])?, apply_filter(mics[1], &self.kernels[1])?],
        ];
        let build = |ch: ProfileChannel| -> Result<EchoProfile> {
            let stream = &filtered[ch.mic()][ch.speaker()];
            let frames = segment_frames(stream, self.sweep_len(), t0)?;
            profile_with(&self.correlators[ch.speaker()], &frames, ch)
        };
        Ok([
            build(ProfileChannel::SS1)?,
            build(ProfileChannel::DS1)?,
            build(ProfileChannel::DS2)?,
            build(ProfileChannel::SS2)?,
        ])
    }

    /// Classifier tensor for the `WINDOW_FRAMES` sweeps starting at sample
    /// `start` (which must sit on a sweep boundary), cropped to
    /// `WINDOW_BINS` rows from `start_bin`.
    ///
    /// Only the needed span (plus half a filter length each side) is filtered,
    /// so interior samples are computed exactly as if the whole stream had been.
    pub fn tensor_at(&self, mics: [&PcmStream; 2], start: usize, start_bin: usize) -> Result<EchoTensor> {
        let n = self.sweep_len();
        let span = WINDOW_FRAMES * n;
        let len = mics[0].len().min(mics[1].len());
        if start + span > len {
            return Err(Error::OutOfBounds(format!(
                "window {}..{} exceeds stream length {}",
                start,
                start + span,
                len
            )));
        }
        if start_bin + WINDOW_BINS > n {
            return Err(Error::OutOfBounds(format!(
                "bins {}..{} exceed {} lags",
                start_bin,
                start_bin + WINDOW_BINS,
                n
            )));
        }
        let half = self.kernels.iter().map(|k| k.taps.len() / 2).max().unwrap_or(0);
        let lo = start.saturating_sub(half);
        let hi = (start + span + half).min(len);
        let window = Window {
            start_bin,
            n_bins: WINDOW_BINS,
            start_frame: 0,
            n_frames: WINDOW_FRAMES,
        };

        let mut originals = Vec::with_capacity(4);
        let mut diffs = Vec::with_capacity(4);
        for ch in ProfileChannel::ALL {
            let seg = &mics[ch.mic()].samples[lo..hi];
            let filtered = filter_samples(seg, &self.kernels[ch.speaker()].taps);
            let offset = start - lo;
            let frames: Vec<&[f64]> = filtered[offset..offset + span].chunks_exact(n).collect();
            let full = profile_with(&self.correlators[ch.speaker()], &frames, ch)?;
            let diff = differential_profile(&full)?;
            originals.push(crop_window(&full, &window)?);
            diffs.push(crop_window(&diff, &window)?);
        }
        let originals: [EchoProfile; 4] = originals.try_into().expect("four channels");
        let diffs: [EchoProfile; 4] = diffs.try_into().expect("four channels");
        stack_tensor(&originals, &diffs)
    }
}

impl Default for ProfilePipeline {
    fn default() -> Self {
        let sweeps = [SweepConfig::band_a(), SweepConfig::band_b()];
        let filters = [FilterSpec::for_sweep(&sweeps[0]), FilterSpec::for_sweep(&sweeps[1])];
        Self::new(sweeps, filters).expect("default pipeline is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Time-domain oracle.
    fn direct(frame: &[f64], reference: &[f64]) -> Vec<f64> {
        let n = frame.len();
        (0..n)
            .map(|lag| (0..n).map(|i| frame[(i + lag) % n] * reference[i]).sum())
            .collect()
    }

    fn chirp() -> Vec<f64> {
        generate_sweep(&SweepConfig::band_a()).unwrap().samples
    }

    fn argmax(v: &[f64]) -> usize {
        (0..v.len()).max_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap()
    }

    #[test]
    fn bin_size_is_3_43_mm() {
        assert!((METERS_PER_BIN - 0.00343).abs() < 1e-15);
        assert!((WINDOW_BINS as f64 * METERS_PER_BIN - 0.2401).abs() < 1e-12);
    }

    #[test]
    fn autocorrelation_peaks_at_zero() {
        let c = chirp();
        assert_eq!(argmax(&cross_correlate(&c, &c).unwrap()), 0);
    }

    #[test]
    fn circular_delay_moves_peak() {
        let c = chirp();
        let n = c.len();
        let delayed: Vec<f64> = (0..n).map(|i| c[(i + n - 29) % n]).collect();
        assert_eq!(argmax(&cross_correlate(&delayed, &c).unwrap()), 29);
    }

    #[test]
    fn zero_frame_gives_zero_column() {
        let c = chirp();
        let out = cross_correlate(&vec![0.0; c.len()], &c).unwrap();
        assert!(out.iter().all(|v| *v == 0.0));
        assert!(matches!(
            cross_correlate(&c[..599], &c),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn fft_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let f: Vec<f64> = (0..600).map(|_| rng.random_range(-1.0..1.0)).collect();
            let r: Vec<f64> = (0..600).map(|_| rng.random_range(-1.0..1.0)).collect();
            let fast = cross_correlate(&f, &r).unwrap();
            let slow = direct(&f, &r);
            let scale = slow.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() / scale < 1e-6);
            }
        }
    }

    #[test]
    fn loopback_profile_peaks_at_row_zero() {
        let c = chirp();
        let frames = vec![&c[..]; 5];
        let ep = build_echo_profile(&frames, &c, ProfileChannel::SS1).unwrap();
        assert_eq!((ep.rows, ep.cols), (600, 5));
        for t in 0..5 {
            assert_eq!(ep.argmax_row(t), 0);
        }
        assert!(build_echo_profile(&[], &c, ProfileChannel::SS1).is_err());
    }

    #[test]
    fn differential_examples() {
        let rows = 4;
        let cols = 6;
        let constant = EchoProfile::from_values(
            (0..rows * cols).map(|i| (i / cols) as f64 * 3.0).collect(),
            rows,
            cols,
            ProfileChannel::DS1,
            ProfileKind::Original,
        )
        .unwrap();
        let d = differential_profile(&constant).unwrap();
        assert!(d.values.iter().all(|v| *v == 0.0));
        assert_eq!(d.kind, ProfileKind::Differential);

        let ramp = EchoProfile::from_values(
            (0..rows * cols).map(|i| (i % cols) as f64).collect(),
            rows,
            cols,
            ProfileChannel::DS1,
            ProfileKind::Original,
        )
        .unwrap();
        let d = differential_profile(&ramp).unwrap();
        for r in 0..rows {
            assert_eq!(d.get(r, 0), 0.0);
            for t in 1..cols {
                assert_eq!(d.get(r, t), 1.0);
            }
        }
        let single = EchoProfile::from_values(vec![1.0; 3], 3, 1, ProfileChannel::SS1, ProfileKind::Original).unwrap();
        assert!(differential_profile(&single).is_err());
    }

    fn grid(rows: usize, cols: usize) -> EchoProfile {
        EchoProfile::from_values(
            (0..rows * cols).map(|i| i as f64).collect(),
            rows,
            cols,
            ProfileChannel::SS2,
            ProfileKind::Original,
        )
        .unwrap()
    }

    #[test]
    fn crop_top_left_block() {
        let ep = grid(120, 200);
        let c = crop_window(&ep, &Window::model_input(0, 0)).unwrap();
        assert_eq!((c.rows, c.cols), (70, 155));
        for r in 0..70 {
            for t in 0..155 {
                assert_eq!(c.get(r, t), ep.get(r, t));
            }
        }
        assert_eq!(c.meters_per_bin, ep.meters_per_bin);
    }

    #[test]
    fn crop_overhang_is_reported() {
        let ep = grid(80, 200);
        match crop_window(&ep, &Window::model_input(50, 0)) {
            Err(Error::OutOfBounds(msg)) => assert!(msg.contains("40 rows"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn crop_composes() {
        let ep = grid(100, 90);
        let a = Window {
            start_bin: 5,
            n_bins: 60,
            start_frame: 7,
            n_frames: 50,
        };
        let b = Window {
            start_bin: 3,
            n_bins: 20,
            start_frame: 11,
            n_frames: 30,
        };
        let ab = Window {
            start_bin: 8,
            n_bins: 20,
            start_frame: 18,
            n_frames: 30,
        };
        let twice = crop_window(&crop_window(&ep, &a).unwrap(), &b).unwrap();
        assert_eq!(twice, crop_window(&ep, &ab).unwrap());
    }

    fn window_profiles(offset: f64) -> ([EchoProfile; 4], [EchoProfile; 4]) {
        let mk = |c: usize, kind: ProfileKind| {
            EchoProfile::from_values(
                (0..WINDOW_BINS * WINDOW_FRAMES)
                    .map(|i| (i as f32 * 0.25 + c as f32 + offset as f32) as f64)
                    .collect(),
                WINDOW_BINS,
                WINDOW_FRAMES,
                ProfileChannel::ALL[c],
                kind,
            )
            .unwrap()
        };
        (
            std::array::from_fn(|c| mk(c, ProfileKind::Original)),
            std::array::from_fn(|c| mk(c, ProfileKind::Differential)),
        )
    }

    #[test]
    fn stack_and_unstack() {
        let (orig, diff) = window_profiles(0.5);
        let t = stack_tensor(&orig, &diff).unwrap();
        assert_eq!(t.data.len(), 155 * 70 * 8);
        let back = t.unstack();
        for c in 0..4 {
            assert_eq!(back[c], orig[c]);
            assert_eq!(back[c + 4], diff[c]);
        }
    }

    #[test]
    fn stack_rejects_bad_shape_and_order() {
        let (mut orig, diff) = window_profiles(0.0);
        orig[1] = EchoProfile::from_values(
            vec![0.0; 69 * 155],
            69,
            155,
            ProfileChannel::DS1,
            ProfileKind::Original,
        )
        .unwrap();
        assert!(matches!(stack_tensor(&orig, &diff), Err(Error::Shape(_))));
        let (mut orig, diff) = window_profiles(0.0);
        orig.swap(1, 2);
        assert!(matches!(stack_tensor(&orig, &diff), Err(Error::Shape(_))));
    }
}
