//! Point-reflector acoustic scene simulator.
//!
//! Each reflector contributes `reflectivity / max(d, D_MIN)^2` times the
//! transmitted sweep, delayed by the nearest-sample round-trip lag
//! `round(2 d fs / c)`. The distance is sampled at each frame's midpoint and
//! held for the whole frame; since the speaker repeats the sweep back to
//! back, the delayed sweep inside a frame is a circular shift.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::echo::{EchoTensor, ProfilePipeline};
use crate::error::{Error, Result};
use crate::labels::{Gesture, GestureLabel, Grasp};
use crate::signal::{generate_sweep, ChannelId, PcmStream, SweepConfig, SAMPLE_RATE, SPEED_OF_SOUND, SWEEP_LEN, SWEEP_SECONDS};

/// Amplitude clamp distance.
pub const D_MIN: f64 = 0.01;
pub const MAX_DISTANCE: f64 = 1.0;
/// Length of one gesture performance window.
pub const GESTURE_WINDOW_SECONDS: f64 = 2.0;
/// Offset from the window start to the first model frame.
pub const INSTANCE_OFFSET_SECONDS: f64 = 0.07;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    pub t: f64,
    pub d: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reflector {
    pub trajectory: Vec<Keyframe>,
    pub reflectivity: f64,
}

impl Reflector {
    pub fn fixed(d: f64, reflectivity: f64) -> Self {
        Self {
            trajectory: vec![Keyframe { t: 0.0, d }],
            reflectivity,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trajectory.is_empty() {
            return Err(Error::Config("reflector trajectory has no keyframes".into()));
        }
        if !(self.reflectivity > 0.0 && self.reflectivity <= 1.0) {
            return Err(Error::Config(format!(
                "reflectivity {} outside (0, 1]",
                self.reflectivity
            )));
        }
        for k in &self.trajectory {
            if !(0.0..=MAX_DISTANCE).contains(&k.d) || !k.t.is_finite() {
                return Err(Error::Config(format!(
                    "keyframe (t={}, d={}) outside [0, {MAX_DISTANCE}] m",
                    k.t, k.d
                )));
            }
        }
        if self.trajectory.windows(2).any(|w| w[1].t < w[0].t) {
            return Err(Error::Config("keyframe times must be non-decreasing".into()));
        }
        Ok(())
    }

    /// Piecewise-linear distance, held constant outside the keyframe span.
    pub fn distance_at(&self, t: f64) -> f64 {
        let k = &self.trajectory;
        if t <= k[0].t {
            return k[0].d;
        }
        for w in k.windows(2) {
            if t <= w[1].t {
                let span = w[1].t - w[0].t;
                if span <= 0.0 {
                    return w[1].d;
                }
                let a = (t - w[0].t) / span;
                return w[0].d + a * (w[1].d - w[0].d);
            }
        }
        k[k.len() - 1].d
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub reflectors: Vec<Reflector>,
    #[serde(default)]
    pub noise_rms: f64,
    pub duration: f64,
    /// Gains for SS1, DS1, DS2, SS2.
    #[serde(default = "unit_gains")]
    pub channel_gains: [f64; 4],
}

fn unit_gains() -> [f64; 4] {
    [1.0; 4]
}

impl Scene {
    pub fn new(reflectors: Vec<Reflector>, duration: f64) -> Self {
        Self {
            reflectors,
            noise_rms: 0.0,
            duration,
            channel_gains: unit_gains(),
        }
    }

    pub fn frames(&self) -> usize {
        (self.duration / SWEEP_SECONDS).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let frames = self.duration / SWEEP_SECONDS;
        if !(frames >= 1.0 && (frames - frames.round()).abs() < 1e-6) {
            return Err(Error::Config(format!(
                "scene duration {} s is not a whole number of 12 ms frames",
                self.duration
            )));
        }
        if !(self.noise_rms >= 0.0) {
            return Err(Error::Config(format!("noise_rms {} must be >= 0", self.noise_rms)));
        }
        if self.channel_gains.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("channel gains"));
        }
        self.reflectors.iter().try_for_each(Reflector::validate)
    }
}

pub fn round_trip_lag(d: f64) -> usize {
    (2.0 * d * SAMPLE_RATE as f64 / SPEED_OF_SOUND).round() as usize
}

/// Noise-free echo sum for one transmit reference.
fn render_echoes(scene: &Scene, reference: &[f64]) -> Vec<f64> {
    let n = reference.len();
    let frames = scene.frames();
    let mut out = vec![0.0; frames * n];
    for (f, frame) in out.chunks_exact_mut(n).enumerate() {
        let t_mid = (f as f64 + 0.5) * SWEEP_SECONDS;
        for r in &scene.reflectors {
            let d = r.distance_at(t_mid);
            let amp = r.reflectivity / d.max(D_MIN).powi(2);
            let lag = round_trip_lag(d) % n;
            for (i, y) in frame.iter_mut().enumerate() {
                *y += amp * reference[(i + n - lag) % n];
            }
        }
    }
    out
}

fn add_noise(samples: &mut [f64], noise_rms: f64, rng: &mut ChaCha8Rng) {
    if noise_rms > 0.0 {
        let normal = Normal::new(0.0, noise_rms).expect("finite sigma");
        for s in samples {
            *s += normal.sample(rng);
        }
    }
}

/// Received signal for a single speaker band, with unit channel gain.
pub fn render_received(scene: &Scene, sweep: &SweepConfig, seed: u64) -> Result<PcmStream> {
    scene.validate()?;
    let reference = generate_sweep(sweep)?;
    let mut samples = render_echoes(scene, &reference.samples);
    add_noise(&mut samples, scene.noise_rms, &mut ChaCha8Rng::seed_from_u64(seed));
    PcmStream::new(samples, SAMPLE_RATE, ChannelId::Mic1)
}

/// Both microphone streams: each mic hears both speakers, scaled by the
/// scene's per-channel gains, plus independent noise.
pub fn render_mics(scene: &Scene, sweeps: &[SweepConfig; 2], seed: u64) -> Result<[PcmStream; 2]> {
    scene.validate()?;
    let echoes = [
        render_echoes(scene, &generate_sweep(&sweeps[0])?.samples),
        render_echoes(scene, &generate_sweep(&sweeps[1])?.samples),
    ];
    let g = scene.channel_gains;
    // mic 1: SS1 (speaker 1) + DS1 (speaker 2); mic 2: DS2 (speaker 1) + SS2 (speaker 2)
    let gains = [[g[0], g[1]], [g[2], g[3]]];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mics = Vec::with_capacity(2);
    for (m, ch) in [ChannelId::Mic1, ChannelId::Mic2].into_iter().enumerate() {
        let mut s: Vec<f64> = echoes[0]
            .iter()
            .zip(&echoes[1])
            .map(|(a, b)| gains[m][0] * a + gains[m][1] * b)
            .collect();
        add_noise(&mut s, scene.noise_rms, &mut rng);
        mics.push(PcmStream::new(s, SAMPLE_RATE, ch)?);
    }
    Ok(mics.try_into().expect("two mics"))
}

/// Random perturbation bounds applied per rendered instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jitter {
    /// Added to every keyframe distance, uniform in ±distance (m).
    pub distance: f64,
    /// Relative speed change, uniform in ±speed.
    pub speed: f64,
    /// Onset shift, uniform in ±onset (s).
    pub onset: f64,
}

impl Jitter {
    pub const NONE: Jitter = Jitter {
        distance: 0.0,
        speed: 0.0,
        onset: 0.0,
    };
}

impl Default for Jitter {
    fn default() -> Self {
        Self {
            distance: 0.005,
            speed: 0.15,
            onset: 0.15,
        }
    }
}

/// A labeled motion template. Keyframe times are relative to the start of
/// a 2 s performance window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticGestureScript {
    pub label: GestureLabel,
    pub reflectors: Vec<Reflector>,
    pub jitter: Jitter,
}

/// How a synthetic "participant" differs from the template hand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HandProfile {
    pub distance_scale: f64,
    pub distance_offset: f64,
    pub channel_gains: [f64; 4],
}

impl Default for HandProfile {
    fn default() -> Self {
        Self {
            distance_scale: 1.0,
            distance_offset: 0.0,
            channel_gains: [1.0, 0.6, 0.6, 1.0],
        }
    }
}

impl SyntheticGestureScript {
    /// Draws one jittered instance of the template's reflectors, shifted so
    /// that window time 0 lands at `t_origin` in the scene.
    pub fn instantiate(&self, hand: &HandProfile, t_origin: f64, rng: &mut impl Rng) -> Vec<Reflector> {
        let j = self.jitter;
        let mut uniform = |eps: f64| if eps > 0.0 { rng.random_range(-eps..=eps) } else { 0.0 };
        let dd = uniform(j.distance);
        let speed = 1.0 + uniform(j.speed);
        let onset = uniform(j.onset);
        self.reflectors
            .iter()
            .map(|r| {
                let t_first = r.trajectory[0].t;
                let trajectory = r
                    .trajectory
                    .iter()
                    .map(|k| Keyframe {
                        t: t_origin + onset + t_first + (k.t - t_first) / speed,
                        d: (k.d * hand.distance_scale + hand.distance_offset + dd).clamp(0.0, MAX_DISTANCE),
                    })
                    .collect();
                Reflector {
                    trajectory,
                    reflectivity: r.reflectivity,
                }
            })
            .collect()
    }
}

fn kf(t: f64, d: f64) -> Keyframe {
    Keyframe { t, d }
}

fn reflector(keys: &[(f64, f64)], reflectivity: f64) -> Reflector {
    Reflector {
        trajectory: keys.iter().map(|&(t, d)| kf(t, d)).collect(),
        reflectivity,
    }
}

/// Six kinematically distinct templates for the cylindrical-grasp gestures.
///
/// The hand is four reflectors: pointer finger (8 cm), middle finger
/// (14 cm), palm (11 cm) and the held object (18 cm).
pub fn builtin_scripts() -> Vec<SyntheticGestureScript> {
    const POINTER: f64 = 0.08;
    const MIDDLE: f64 = 0.14;
    const PALM: f64 = 0.11;
    const OBJECT: f64 = 0.18;
    let still = |d: f64, r: f64| reflector(&[(0.0, d)], r);
    let shifted = |delta: f64| -> Vec<Reflector> {
        [(POINTER, 0.3), (MIDDLE, 0.3), (PALM, 0.5), (OBJECT, 0.8)]
            .iter()
            .map(|&(d, r)| reflector(&[(0.0, d), (0.6, d), (0.9, d + delta)], r))
            .collect()
    };
    let label = |g: Gesture| GestureLabel::new(Grasp::Cylindrical, g).expect("cylindrical gesture");
    let jitter = Jitter::default();
    vec![
        SyntheticGestureScript {
            label: label(Gesture::Hold),
            reflectors: vec![still(POINTER, 0.3), still(MIDDLE, 0.3), still(PALM, 0.5), still(OBJECT, 0.8)],
            jitter,
        },
        SyntheticGestureScript {
            label: label(Gesture::PointerIn),
            reflectors: vec![
                reflector(&[(0.0, POINTER), (0.6, POINTER), (1.1, POINTER - 0.04)], 0.3),
                still(MIDDLE, 0.3),
                still(PALM, 0.5),
                still(OBJECT, 0.8),
            ],
            jitter,
        },
        SyntheticGestureScript {
            label: label(Gesture::PointerTap),
            reflectors: vec![
                reflector(&[(0.0, POINTER), (0.8, POINTER), (0.9, POINTER - 0.02), (1.0, POINTER)], 0.3),
                still(MIDDLE, 0.3),
                still(PALM, 0.5),
                still(OBJECT, 0.8),
            ],
            jitter,
        },
        SyntheticGestureScript {
            label: label(Gesture::MiddleTap),
            reflectors: vec![
                still(POINTER, 0.3),
                reflector(&[(0.0, MIDDLE), (0.8, MIDDLE), (0.9, MIDDLE + 0.02), (1.0, MIDDLE)], 0.3),
                still(PALM, 0.5),
                still(OBJECT, 0.8),
            ],
            jitter,
        },
        SyntheticGestureScript {
            label: label(Gesture::WristRight),
            reflectors: shifted(0.02),
            jitter,
        },
        SyntheticGestureScript {
            label: label(Gesture::WristLeft),
            reflectors: shifted(-0.02),
            jitter,
        },
    ]
}

/// Samples from the window start to the first model frame, snapped up to
/// the sweep grid anchored at `sweep_offset`.
pub fn instance_start(window_start: usize, sweep_offset: usize) -> usize {
    let target = window_start + (INSTANCE_OFFSET_SECONDS * SAMPLE_RATE as f64).round() as usize;
    if target <= sweep_offset {
        return sweep_offset;
    }
    let k = (target - sweep_offset).div_ceil(SWEEP_LEN);
    sweep_offset + k * SWEEP_LEN
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthOptions {
    pub noise_rms: f64,
    pub hand: HandProfile,
    pub sweeps: [SweepConfig; 2],
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            noise_rms: 0.01,
            hand: HandProfile::default(),
            sweeps: [SweepConfig::band_a(), SweepConfig::band_b()],
        }
    }
}

/// Seed for one rendered instance, mixed from the run seed and its position.
pub fn instance_seed(seed: u64, class: usize, instance: usize) -> u64 {
    let mut x = seed ^ ((class as u64) << 32) ^ instance as u64;
    // splitmix64 finalizer
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Renders one 2 s performance of `script` and turns it into a tensor.
pub fn render_instance(
    script: &SyntheticGestureScript,
    pipeline: &ProfilePipeline,
    opts: &SynthOptions,
    seed: u64,
) -> Result<EchoTensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frames = (GESTURE_WINDOW_SECONDS / SWEEP_SECONDS).ceil();
    let scene = Scene {
        reflectors: script.instantiate(&opts.hand, 0.0, &mut rng),
        noise_rms: opts.noise_rms,
        duration: frames * SWEEP_SECONDS,
        channel_gains: opts.hand.channel_gains,
    };
    let [m1, m2] = render_mics(&scene, &opts.sweeps, rng.random())?;
    let mut t = pipeline.tensor_at([&m1, &m2], instance_start(0, 0), 0)?;
    t.label = Some(script.label);
    Ok(t)
}

/// `n_per_class` jittered renders of each script, class-major order.
pub fn synth_gesture_set(
    scripts: &[SyntheticGestureScript],
    n_per_class: usize,
    seed: u64,
) -> Result<Vec<EchoTensor>> {
    synth_gesture_set_with(scripts, n_per_class, seed, &SynthOptions::default())
}

pub fn synth_gesture_set_with(
    scripts: &[SyntheticGestureScript],
    n_per_class: usize,
    seed: u64,
    opts: &SynthOptions,
) -> Result<Vec<EchoTensor>> {
    validate_scripts(scripts)?;
    if n_per_class == 0 {
        return Err(Error::Config("need at least one instance per class".into()));
    }
    let pipeline = ProfilePipeline::new(
        opts.sweeps,
        [
            crate::signal::FilterSpec::for_sweep(&opts.sweeps[0]),
            crate::signal::FilterSpec::for_sweep(&opts.sweeps[1]),
        ],
    )?;
    use rayon::prelude::*;
    let jobs: Vec<(usize, usize)> = (0..scripts.len())
        .flat_map(|c| (0..n_per_class).map(move |i| (c, i)))
        .collect();
    jobs.par_iter()
        .map(|&(c, i)| render_instance(&scripts[c], &pipeline, opts, instance_seed(seed, c, i)))
        .collect()
}

pub fn validate_scripts(scripts: &[SyntheticGestureScript]) -> Result<()> {
    if scripts.len() < 2 {
        return Err(Error::Config("need at least two gesture scripts".into()));
    }
    for (i, a) in scripts.iter().enumerate() {
        if scripts[i + 1..].iter().any(|b| b.label == a.label) {
            return Err(Error::Config(format!("duplicate script label {}", a.label)));
        }
        for r in &a.reflectors {
            r.validate()?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::echo::{bin_for_distance, ProfileChannel};

    fn profile_of(scene: &Scene) -> crate::echo::EchoProfile {
        let pipeline = ProfilePipeline::default();
        let [m1, m2] = render_mics(scene, &pipeline.sweeps, 3).unwrap();
        let [ss1, ..] = pipeline.profiles([&m1, &m2], 0).unwrap();
        assert_eq!(ss1.channel, ProfileChannel::SS1);
        ss1
    }

    #[test]
    fn lag_for_ten_centimetres() {
        assert_eq!(round_trip_lag(0.10), 29);
        assert_eq!(bin_for_distance(0.10), 29);
    }

    #[test]
    fn static_reflector_localizes() {
        let scene = Scene::new(vec![Reflector::fixed(0.10, 1.0)], 0.12);
        let ep = profile_of(&scene);
        for t in 0..ep.cols {
            let row = ep.argmax_row(t) as i64;
            assert!((row - 29).abs() <= 1, "col {t}: row {row}");
        }
    }

    #[test]
    fn loopback_distance_zero() {
        let scene = Scene::new(vec![Reflector::fixed(0.0, 1.0)], 0.06);
        let ep = profile_of(&scene);
        for t in 0..ep.cols {
            assert_eq!(ep.argmax_row(t), 0);
        }
    }

    #[test]
    fn two_reflectors_two_peaks() {
        // reflectivities chosen so both echoes arrive with similar amplitude
        let scene = Scene::new(
            vec![Reflector::fixed(0.05, 0.0625), Reflector::fixed(0.20, 1.0)],
            0.12,
        );
        let ep = profile_of(&scene);
        for t in 0..ep.cols {
            let col = ep.column(t);
            let near = (0..37).max_by(|&a, &b| col[a].total_cmp(&col[b])).unwrap();
            let far = (37..120).max_by(|&a, &b| col[a].total_cmp(&col[b])).unwrap();
            assert!((near as i64 - 15).abs() <= 1, "near peak {near}");
            assert!((far as i64 - 58).abs() <= 1, "far peak {far}");
            for p in [near, far] {
                assert!(col[p] > col[p - 1] && col[p] > col[p + 1]);
            }
        }
    }

    #[test]
    fn empty_scene_is_silent() {
        let s = render_received(&Scene::new(vec![], 0.048), &SweepConfig::band_a(), 1).unwrap();
        assert_eq!(s.len(), 4 * 600);
        assert!(s.samples.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn rendering_is_deterministic() {
        let mut scene = Scene::new(vec![Reflector::fixed(0.07, 0.4)], 0.06);
        scene.noise_rms = 0.05;
        let a = render_received(&scene, &SweepConfig::band_b(), 99).unwrap();
        let b = render_received(&scene, &SweepConfig::band_b(), 99).unwrap();
        assert_eq!(a, b);
        let c = render_received(&scene, &SweepConfig::band_b(), 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn superposition() {
        let a = Reflector {
            trajectory: vec![kf(0.0, 0.04), kf(0.1, 0.09)],
            reflectivity: 0.7,
        };
        let b = Reflector::fixed(0.16, 0.3);
        let cfg = SweepConfig::band_a();
        let both = render_received(&Scene::new(vec![a.clone(), b.clone()], 0.12), &cfg, 0).unwrap();
        let ra = render_received(&Scene::new(vec![a], 0.12), &cfg, 0).unwrap();
        let rb = render_received(&Scene::new(vec![b], 0.12), &cfg, 0).unwrap();
        for i in 0..both.len() {
            let sum = ra.samples[i] + rb.samples[i];
            assert!((both.samples[i] - sum).abs() <= 1e-10 * sum.abs().max(1.0));
        }
    }

    #[test]
    fn farther_is_weaker() {
        for d in [0.03, 0.05, 0.08, 0.11] {
            let near = profile_of(&Scene::new(vec![Reflector::fixed(d, 1.0)], 0.06));
            let far = profile_of(&Scene::new(vec![Reflector::fixed(2.0 * d, 1.0)], 0.06));
            let peak = |ep: &crate::echo::EchoProfile| ep.get(ep.argmax_row(2), 2);
            assert!(peak(&far) < peak(&near));
        }
    }

    #[test]
    fn scene_validation() {
        assert!(Scene::new(vec![], 0.013).validate().is_err());
        let mut s = Scene::new(vec![], 0.012);
        s.noise_rms = -1.0;
        assert!(s.validate().is_err());
        assert!(Scene::new(vec![Reflector::fixed(1.5, 0.5)], 0.012).validate().is_err());
        assert!(Scene::new(vec![Reflector::fixed(0.5, 0.0)], 0.012).validate().is_err());
    }

    #[test]
    fn trajectory_interpolates() {
        let r = Reflector {
            trajectory: vec![kf(0.0, 0.1), kf(1.0, 0.2)],
            reflectivity: 1.0,
        };
        assert_eq!(r.distance_at(-1.0), 0.1);
        assert!((r.distance_at(0.5) - 0.15).abs() < 1e-12);
        assert_eq!(r.distance_at(3.0), 0.2);
    }

    #[test]
    fn instance_start_snaps_to_grid() {
        assert_eq!(instance_start(0, 0), 3600);
        assert_eq!(instance_start(100_000, 0), 103_800);
        assert_eq!(instance_start(0, 250), 3850);
    }

    #[test]
    fn builtin_scripts_are_distinct() {
        let scripts = builtin_scripts();
        assert_eq!(scripts.len(), 6);
        validate_scripts(&scripts).unwrap();
        for (i, a) in scripts.iter().enumerate() {
            for b in &scripts[i + 1..] {
                assert_ne!(a.reflectors, b.reflectors);
            }
        }
    }

    #[test]
    fn set_bookkeeping_and_errors() {
        let scripts: Vec<_> = builtin_scripts().into_iter().take(2).collect();
        let set = synth_gesture_set(&scripts, 2, 5).unwrap();
        assert_eq!(set.len(), 4);
        assert_eq!(set[0].label, Some(scripts[0].label));
        assert_eq!(set[3].label, Some(scripts[1].label));
        assert!(synth_gesture_set(&scripts[..1], 2, 5).is_err());
        assert!(synth_gesture_set(&scripts, 0, 5).is_err());
        let dup = vec![scripts[0].clone(), scripts[0].clone()];
        assert!(synth_gesture_set(&dup, 1, 5).is_err());
    }

    #[test]
    fn zero_jitter_zero_noise_is_exact() {
        let scripts: Vec<_> = builtin_scripts()
            .into_iter()
            .take(3)
            .map(|mut s| {
                s.jitter = Jitter::NONE;
                s
            })
            .collect();
        let opts = SynthOptions {
            noise_rms: 0.0,
            ..SynthOptions::default()
        };
        let set = synth_gesture_set_with(&scripts, 2, 11, &opts).unwrap();
        assert_eq!(set[0], set[1]);
        assert_eq!(set[2], set[3]);
        let l2 = |a: &EchoTensor, b: &EchoTensor| -> f64 {
            a.data.iter().zip(&b.data).map(|(x, y)| ((x - y) as f64).powi(2)).sum()
        };
        assert!(l2(&set[0], &set[2]) > 0.0);
        assert!(l2(&set[2], &set[4]) > 0.0);
    }
}
