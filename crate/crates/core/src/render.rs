//! PNG heatmaps for echo profiles and confusion matrices. Output carries no
//! timestamps or other metadata, so identical inputs give identical bytes.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use crate::echo::EchoProfile;
use crate::error::Result;

pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, fill: [u8; 3]) -> Self {
        Self {
            width,
            height,
            pixels: fill.repeat(width * height),
        }
    }

    pub fn put(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        if x < self.width && y < self.height {
            let i = (y * self.width + x) * 3;
            self.pixels[i..i + 3].copy_from_slice(&rgb);
        }
    }

    pub fn fill_rect(&mut self, x: usize, y: usize, w: usize, h: usize, rgb: [u8; 3]) {
        for yy in y..y + h {
            for xx in x..x + w {
                self.put(xx, yy, rgb);
            }
        }
    }

    /// Draws decimal digits with a 3x5 bitmap font scaled by `scale`.
    pub fn draw_number(&mut self, x: usize, y: usize, n: usize, scale: usize, rgb: [u8; 3]) {
        for (k, ch) in n.to_string().bytes().enumerate() {
            let glyph = DIGITS[(ch - b'0') as usize];
            let ox = x + k * 4 * scale;
            for (row, bits) in glyph.iter().enumerate() {
                for col in 0..3 {
                    if bits & (0b100 >> col) != 0 {
                        self.fill_rect(ox + col * scale, y + row * scale, scale, scale, rgb);
                    }
                }
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = BufWriter::new(File::create(path)?);
        let mut enc = png::Encoder::new(file, self.width as u32, self.height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header()?;
        writer.write_image_data(&self.pixels)?;
        writer.finish()?;
        Ok(())
    }
}

const DIGITS: [[u8; 5]; 10] = [
    [0b111, 0b101, 0b101, 0b101, 0b111],
    [0b010, 0b110, 0b010, 0b010, 0b111],
    [0b111, 0b001, 0b111, 0b100, 0b111],
    [0b111, 0b001, 0b111, 0b001, 0b111],
    [0b101, 0b101, 0b111, 0b001, 0b001],
    [0b111, 0b100, 0b111, 0b001, 0b111],
    [0b111, 0b100, 0b111, 0b101, 0b111],
    [0b111, 0b001, 0b010, 0b010, 0b010],
    [0b111, 0b101, 0b111, 0b101, 0b111],
    [0b111, 0b101, 0b111, 0b001, 0b111],
];

/// Viridis-like ramp, `t` in [0, 1].
pub fn viridis(t: f64) -> [u8; 3] {
    const STOPS: [[f64; 3]; 5] = [
        [68.0, 1.0, 84.0],
        [59.0, 82.0, 139.0],
        [33.0, 145.0, 140.0],
        [94.0, 201.0, 98.0],
        [253.0, 231.0, 37.0],
    ];
    let t = t.clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let i = (t.floor() as usize).min(STOPS.len() - 2);
    let f = t - i as f64;
    std::array::from_fn(|c| (STOPS[i][c] + f * (STOPS[i + 1][c] - STOPS[i][c])).round() as u8)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ramp {
    Gray,
    Viridis,
}

/// One pixel per (bin, frame); row 0 is drawn at the bottom.
pub fn profile_image(p: &EchoProfile, ramp: Ramp) -> RgbImage {
    let (lo, hi) = p
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut img = RgbImage::new(p.cols, p.rows, [0, 0, 0]);
    for r in 0..p.rows {
        for c in 0..p.cols {
            let t = if hi > lo { (p.get(r, c) - lo) / span } else { 0.0 };
            let rgb = match ramp {
                Ramp::Gray => {
                    let g = (t * 255.0).round() as u8;
                    [g, g, g]
                }
                Ramp::Viridis => viridis(t),
            };
            img.put(c, p.rows - 1 - r, rgb);
        }
    }
    img
}

pub fn save_profile_png(path: &Path, p: &EchoProfile, ramp: Ramp) -> Result<()> {
    profile_image(p, ramp).save(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::echo::{ProfileChannel, ProfileKind};

    #[test]
    fn row_zero_is_bottom() {
        let mut values = vec![0.0; 6];
        values[0] = 1.0; // row 0, col 0
        let p = EchoProfile::from_values(values, 3, 2, ProfileChannel::SS1, ProfileKind::Original).unwrap();
        let img = profile_image(&p, Ramp::Gray);
        let bottom_left = (2 * img.width) * 3;
        assert_eq!(&img.pixels[bottom_left..bottom_left + 3], &[255, 255, 255]);
        assert_eq!(&img.pixels[0..3], &[0, 0, 0]);
    }

    #[test]
    fn png_bytes_are_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let p = EchoProfile::from_values((0..200).map(|i| (i as f64).sin()).collect(), 10, 20, ProfileChannel::SS2, ProfileKind::Original)
            .unwrap();
        let a = dir.path().join("a.png");
        let b = dir.path().join("b.png");
        save_profile_png(&a, &p, Ramp::Viridis).unwrap();
        save_profile_png(&b, &p, Ramp::Viridis).unwrap();
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    }

    #[test]
    fn ramp_endpoints() {
        assert_eq!(viridis(0.0), [68, 1, 84]);
        assert_eq!(viridis(1.0), [253, 231, 37]);
    }
}
