//! WAV input/output for microphone and speaker streams.
//!
//! Accepted input: 16-bit little-endian PCM (scaled by 1/32768) or 32-bit
//! float, mono or interleaved stereo, at [`SAMPLE_RATE`].

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{Error, Result};
use crate::signal::{ChannelId, PcmStream, SAMPLE_RATE};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavEncoding {
    Int16,
    Float32,
}

/// Reads every channel of a WAV file. Channel ids are assigned Mic1, Mic2
/// in file order.
pub fn read_wav(path: &Path) -> Result<Vec<PcmStream>> {
    let mut reader = WavReader::open(path).map_err(|e| Error::ingest(path, e.to_string()))?;
    let spec = reader.spec();
    if spec.sample_rate != SAMPLE_RATE {
        return Err(Error::SampleRate {
            expected: SAMPLE_RATE,
            actual: spec.sample_rate,
        });
    }
    let channels = spec.channels as usize;
    if channels == 0 || channels > 2 {
        return Err(Error::ingest(path, format!("{channels} channels; expected 1 or 2")));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::ingest(path, format!("truncated or corrupt sample data: {e}")))?,
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::ingest(path, format!("truncated or corrupt sample data: {e}")))?,
        (fmt, bits) => {
            return Err(Error::ingest(
                path,
                format!("unsupported sample format {fmt:?} at {bits} bits"),
            ))
        }
    };
    if interleaved.len() % channels != 0 {
        return Err(Error::ingest(path, "sample count is not a multiple of the channel count"));
    }
    let ids = [ChannelId::Mic1, ChannelId::Mic2];
    (0..channels)
        .map(|c| {
            let samples = interleaved.iter().skip(c).step_by(channels).copied().collect();
            PcmStream::new(samples, SAMPLE_RATE, ids[c])
        })
        .collect()
}

/// Writes one or two equal-length streams as a mono or interleaved stereo file.
pub fn write_wav(path: &Path, streams: &[&PcmStream], encoding: WavEncoding) -> Result<()> {
    if streams.is_empty() || streams.len() > 2 {
        return Err(Error::Config(format!(
            "can write 1 or 2 channels, got {}",
            streams.len()
        )));
    }
    let len = streams[0].len();
    if let Some(s) = streams.iter().find(|s| s.len() != len) {
        return Err(Error::LengthMismatch {
            expected: len,
            actual: s.len(),
        });
    }
    let spec = WavSpec {
        channels: streams.len() as u16,
        sample_rate: SAMPLE_RATE,
        bits_per_sample: match encoding {
            WavEncoding::Int16 => 16,
            WavEncoding::Float32 => 32,
        },
        sample_format: match encoding {
            WavEncoding::Int16 => SampleFormat::Int,
            WavEncoding::Float32 => SampleFormat::Float,
        },
    };
    let mut writer = WavWriter::create(path, spec)?;
    for i in 0..len {
        for s in streams {
            let v = s.samples[i];
            match encoding {
                WavEncoding::Int16 => {
                    let q = (v * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                    writer.write_sample(q)?;
                }
                WavEncoding::Float32 => writer.write_sample(v as f32)?,
            }
        }
    }
    writer.finalize()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stream(ch: ChannelId, n: usize, k: f64) -> PcmStream {
        PcmStream::new((0..n).map(|i| ((i as f64) * k).sin() * 0.5).collect(), SAMPLE_RATE, ch).unwrap()
    }

    #[test]
    fn stereo_float_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.wav");
        let a = stream(ChannelId::Mic1, 1000, 0.1);
        let b = stream(ChannelId::Mic2, 1000, 0.3);
        write_wav(&path, &[&a, &b], WavEncoding::Float32).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.len(), 2);
        for (orig, got) in [&a, &b].iter().zip(&back) {
            assert_eq!(orig.channel, got.channel);
            for (x, y) in orig.samples.iter().zip(&got.samples) {
                assert_eq!(*x as f32 as f64, *y);
            }
        }
    }

    #[test]
    fn int16_is_scaled_by_32768() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.wav");
        let a = PcmStream::new(vec![0.5, -1.0, 0.25], SAMPLE_RATE, ChannelId::Mic1).unwrap();
        write_wav(&path, &[&a], WavEncoding::Int16).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back[0].samples, vec![0.5, -1.0, 0.25]);
    }

    #[test]
    fn wrong_rate_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.wav");
        let spec = WavSpec {
            channels: 1,
            sample_rate: 44_100,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        let mut w = WavWriter::create(&path, spec).unwrap();
        w.write_sample(0i16).unwrap();
        w.finalize().unwrap();
        assert!(matches!(read_wav(&path), Err(Error::SampleRate { actual: 44_100, .. })));
    }
}
