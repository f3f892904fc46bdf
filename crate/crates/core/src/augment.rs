//! Training-time augmentation: a random vertical (distance-axis) shift and
//! per-pixel amplitude jitter.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::echo::{EchoTensor, TENSOR_CHANNELS, WINDOW_BINS, WINDOW_FRAMES};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentPolicy {
    pub max_shift: usize,
    pub jitter_prob: f64,
    pub jitter_low: f64,
    pub jitter_high: f64,
    pub seed: u64,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        Self {
            max_shift: 6,
            jitter_prob: 0.8,
            jitter_low: 0.95,
            jitter_high: 1.05,
            seed: 0,
        }
    }
}

impl AugmentPolicy {
    /// No shift, no jitter.
    pub fn off() -> Self {
        Self {
            max_shift: 0,
            jitter_prob: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_shift >= WINDOW_BINS {
            return Err(Error::Config(format!(
                "max_shift {} must be below {}",
                self.max_shift, WINDOW_BINS
            )));
        }
        if !(0.0..=1.0).contains(&self.jitter_prob) {
            return Err(Error::Config(format!(
                "jitter probability {} outside [0, 1]",
                self.jitter_prob
            )));
        }
        if !(self.jitter_low > 0.0 && self.jitter_low <= self.jitter_high) {
            return Err(Error::Config(format!(
                "jitter range [{}, {}] invalid",
                self.jitter_low, self.jitter_high
            )));
        }
        Ok(())
    }

    /// Uniform signed shift in `-max_shift..=max_shift`.
    pub fn draw_shift(&self, rng: &mut impl Rng) -> i32 {
        let m = self.max_shift as i32;
        rng.random_range(-m..=m)
    }
}

/// Shifts every channel by `k` bins along the distance axis (positive `k`
/// moves content to higher bins); vacated rows are zero.
pub fn vertical_shift(t: &EchoTensor, k: i32, max_shift: usize) -> Result<EchoTensor> {
    if k.unsigned_abs() as usize > max_shift {
        return Err(Error::Config(format!(
            "shift {k} exceeds the allowed {max_shift} bins"
        )));
    }
    let mut out = EchoTensor {
        data: vec![0.0; t.data.len()],
        label: t.label,
    };
    shift_into(&t.data, &mut out.data, k);
    Ok(out)
}

fn shift_into(src: &[f32], dst: &mut [f32], k: i32) {
    let row = TENSOR_CHANNELS;
    let plane = WINDOW_BINS * row;
    for time in 0..WINDOW_FRAMES {
        let base = time * plane;
        for r in 0..WINDOW_BINS {
            let from = r as i64 - k as i64;
            if (0..WINDOW_BINS as i64).contains(&from) {
                let s = base + from as usize * row;
                let d = base + r * row;
                dst[d..d + row].copy_from_slice(&src[s..s + row]);
            }
        }
    }
}

/// Scales every value by its own uniform factor in the policy range.
/// Returns whether jitter was applied.
pub fn jitter_in_place(data: &mut [f32], policy: &AugmentPolicy, rng: &mut impl Rng) -> bool {
    if !rng.random_bool(policy.jitter_prob) {
        return false;
    }
    let (lo, hi) = (policy.jitter_low, policy.jitter_high);
    for v in data.iter_mut() {
        let f = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        *v = (*v as f64 * f) as f32;
    }
    true
}

pub fn amplitude_jitter(t: &EchoTensor, policy: &AugmentPolicy, rng: &mut impl Rng) -> EchoTensor {
    let mut out = t.clone();
    jitter_in_place(&mut out.data, policy, rng);
    out
}

/// One training draw: random shift followed by jitter. Shape and label are
/// untouched.
pub fn augment(t: &EchoTensor, policy: &AugmentPolicy, rng: &mut impl Rng) -> EchoTensor {
    let k = policy.draw_shift(rng);
    let mut out = vertical_shift(t, k, policy.max_shift).expect("drawn shift is in range");
    jitter_in_place(&mut out.data, policy, rng);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::echo::TENSOR_LEN;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ramp() -> EchoTensor {
        EchoTensor::new((0..TENSOR_LEN).map(|i| 1.0 + (i % 1013) as f32).collect(), None).unwrap()
    }

    #[test]
    fn zero_shift_is_identity() {
        let t = ramp();
        assert_eq!(vertical_shift(&t, 0, 6).unwrap(), t);
    }

    #[test]
    fn shift_moves_rows() {
        let t = ramp();
        let s = vertical_shift(&t, 3, 6).unwrap();
        for time in [0, 77, 154] {
            for c in 0..8 {
                for r in 0..3 {
                    assert_eq!(s.get(time, r, c), 0.0);
                }
                for r in 3..70 {
                    assert_eq!(s.get(time, r, c), t.get(time, r - 3, c));
                }
            }
        }
    }

    #[test]
    fn shift_there_and_back_loses_only_the_edge() {
        let t = ramp();
        let back = vertical_shift(&vertical_shift(&t, 6, 6).unwrap(), -6, 6).unwrap();
        for time in 0..155 {
            for r in 0..70 {
                for c in 0..8 {
                    let want = if r >= 64 { 0.0 } else { t.get(time, r, c) };
                    assert_eq!(back.get(time, r, c), want);
                }
            }
        }
    }

    #[test]
    fn oversize_shift_is_an_error() {
        assert!(vertical_shift(&ramp(), 7, 6).is_err());
        assert!(vertical_shift(&ramp(), -7, 6).is_err());
    }

    #[test]
    fn jitter_probability_zero_is_identity() {
        let policy = AugmentPolicy {
            jitter_prob: 0.0,
            ..AugmentPolicy::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = ramp();
        for _ in 0..10 {
            assert_eq!(amplitude_jitter(&t, &policy, &mut rng), t);
        }
    }

    #[test]
    fn jitter_bounds() {
        let policy = AugmentPolicy {
            jitter_prob: 1.0,
            ..AugmentPolicy::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = ramp();
        let j = amplitude_jitter(&t, &policy, &mut rng);
        let tol = f32::EPSILON as f64;
        for (a, b) in t.data.iter().zip(&j.data) {
            let ratio = *b as f64 / *a as f64;
            assert!(ratio >= 0.95 * (1.0 - tol) && ratio <= 1.05 * (1.0 + tol));
        }
        assert_ne!(j, t);
        let zero = EchoTensor::zeros();
        assert_eq!(amplitude_jitter(&zero, &policy, &mut rng), zero);
    }

    #[test]
    fn jitter_is_seeded() {
        let policy = AugmentPolicy::default();
        let t = ramp();
        let a = augment(&t, &policy, &mut ChaCha8Rng::seed_from_u64(9));
        let b = augment(&t, &policy, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
        assert_eq!(a.data.len(), t.data.len());
    }

    #[test]
    fn policy_validation() {
        assert!(AugmentPolicy::default().validate().is_ok());
        assert!(AugmentPolicy { max_shift: 70, ..AugmentPolicy::default() }.validate().is_err());
        assert!(AugmentPolicy { jitter_prob: 1.5, ..AugmentPolicy::default() }.validate().is_err());
        assert!(AugmentPolicy { jitter_low: 1.1, ..AugmentPolicy::default() }.validate().is_err());
    }
}
