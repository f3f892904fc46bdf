//! Binary container for echo profiles.
//!
//! ```text
//! magic    b"EPRF"
//! version  u16 LE   (currently 1)
//! channel  u8       0..=3 SS1, DS1, DS2, SS2; +4 for the differential
//! rows     u32 LE   distance bins
//! cols     u32 LE   time frames
//! values   rows*cols f32 LE, row-major
//! ```
//!
//! A cached classifier tensor is eight consecutive records in tensor channel
//! order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::echo::{
    stack_tensor, EchoProfile, EchoTensor, ProfileChannel, ProfileKind, TENSOR_CHANNELS,
};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"EPRF";
pub const VERSION: u16 = 1;

fn channel_code(p: &EchoProfile) -> u8 {
    p.channel.index() as u8
        + match p.kind {
            ProfileKind::Original => 0,
            ProfileKind::Differential => 4,
        }
}

pub fn write_profile<W: Write>(w: &mut W, p: &EchoProfile) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[channel_code(p)])?;
    w.write_all(&(p.rows as u32).to_le_bytes())?;
    w.write_all(&(p.cols as u32).to_le_bytes())?;
    let mut buf = Vec::with_capacity(p.values.len() * 4);
    for v in &p.values {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_profile<R: Read>(r: &mut R) -> Result<EchoProfile> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}")));
    }
    let mut b2 = [0u8; 2];
    r.read_exact(&mut b2)?;
    let version = u16::from_le_bytes(b2);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported EPRF version {version}")));
    }
    let mut b1 = [0u8; 1];
    r.read_exact(&mut b1)?;
    let code = b1[0] as usize;
    if code >= 8 {
        return Err(Error::Format(format!("channel id {code} out of range")));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let rows = u32::from_le_bytes(b4) as usize;
    r.read_exact(&mut b4)?;
    let cols = u32::from_le_bytes(b4) as usize;
    let mut raw = vec![0u8; rows * cols * 4];
    r.read_exact(&mut raw)?;
    let values = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let kind = if code < 4 {
        ProfileKind::Original
    } else {
        ProfileKind::Differential
    };
    EchoProfile::from_values(values, rows, cols, ProfileChannel::ALL[code % 4], kind)
}

pub fn save_profile(path: &Path, p: &EchoProfile) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_profile(&mut w, p)?;
    w.flush()?;
    Ok(())
}

pub fn load_profile(path: &Path) -> Result<EchoProfile> {
    read_profile(&mut BufReader::new(File::open(path)?))
}

pub fn save_tensor(path: &Path, t: &EchoTensor) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for p in t.unstack().iter() {
        write_profile(&mut w, p)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_tensor(path: &Path) -> Result<EchoTensor> {
    let mut r = BufReader::new(File::open(path)?);
    let mut parts = Vec::with_capacity(TENSOR_CHANNELS);
    for _ in 0..TENSOR_CHANNELS {
        parts.push(read_profile(&mut r)?);
    }
    let diffs: [EchoProfile; 4] = parts.split_off(4).try_into().expect("four");
    let originals: [EchoProfile; 4] = parts.try_into().expect("four");
    stack_tensor(&originals, &diffs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::echo::EchoTensor;

    #[test]
    fn header_layout() {
        let p = EchoProfile::from_values(vec![1.0, 2.0, 3.0, 4.5, 5.0, 6.0], 2, 3, ProfileChannel::DS2, ProfileKind::Differential)
            .unwrap();
        let mut buf = Vec::new();
        write_profile(&mut buf, &p).unwrap();
        assert_eq!(&buf[..4], b"EPRF");
        assert_eq!(&buf[4..6], &[1, 0]);
        assert_eq!(buf[6], 6);
        assert_eq!(&buf[7..11], &[2, 0, 0, 0]);
        assert_eq!(&buf[11..15], &[3, 0, 0, 0]);
        assert_eq!(&buf[15..19], &1.0f32.to_le_bytes());
        assert_eq!(buf.len(), 15 + 6 * 4);
        let back = read_profile(&mut &buf[..]).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_profile(&mut &b"NOPE\x01\x00"[..]).is_err());
        let mut truncated = Vec::new();
        let p = EchoProfile::from_values(vec![0.0; 4], 2, 2, ProfileChannel::SS1, ProfileKind::Original).unwrap();
        write_profile(&mut truncated, &p).unwrap();
        truncated.pop();
        assert!(read_profile(&mut &truncated[..]).is_err());
    }

    #[test]
    fn tensor_cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.eprf");
        let data = (0..crate::echo::TENSOR_LEN).map(|i| (i % 977) as f32 * 0.125 - 3.0).collect();
        let t = EchoTensor::new(data, None).unwrap();
        save_tensor(&path, &t).unwrap();
        assert_eq!(load_tensor(&path).unwrap(), t);
    }
}
