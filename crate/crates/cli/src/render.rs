//! Per-frame overlay images in binary PPM.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use smalltrack::mot::LabeledBox;

/// 3x5 bitmaps for 0-9, one row per `u8`, top bit is the left column.
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

pub struct Image {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<[u8; 3]>,
}

impl Image {
    pub fn blank(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            pixels: vec![[0, 0, 0]; width as usize * height as usize],
        }
    }

    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    fn put(&mut self, x: i64, y: i64, c: [u8; 3]) {
        if x >= 0 && y >= 0 && x < self.width as i64 && y < self.height as i64 {
            self.pixels[y as usize * self.width as usize + x as usize] = c;
        }
    }

    fn rect(&mut self, x0: i64, y0: i64, x1: i64, y1: i64, c: [u8; 3]) {
        for x in x0..=x1 {
            self.put(x, y0, c);
            self.put(x, y1, c);
        }
        for y in y0..=y1 {
            self.put(x0, y, c);
            self.put(x1, y, c);
        }
    }

    fn label(&mut self, x: i64, y: i64, n: u64, c: [u8; 3]) {
        for (k, ch) in n.to_string().bytes().enumerate() {
            let glyph = DIGITS[(ch - b'0') as usize];
            for (row, bits) in glyph.iter().enumerate() {
                for col in 0..3 {
                    if bits & (0b100 >> col) != 0 {
                        self.put(x + 4 * k as i64 + col, y + row as i64, c);
                    }
                }
            }
        }
    }

    pub fn write_ppm(&self, path: &Path) -> Result<()> {
        let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        let mut w = BufWriter::new(f);
        write!(w, "P6\n{} {}\n255\n", self.width, self.height)?;
        for p in &self.pixels {
            w.write_all(p)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Stable, bright color for a track id.
pub fn id_color(id: u64) -> [u8; 3] {
    // splitmix64 finalizer
    let mut z = id.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    let b = z.to_le_bytes();
    [b[0] | 0x40, b[1] | 0x40, b[2] | 0x40]
}

/// Draws the boxes of one frame.
pub fn draw_frame(size: (u32, u32), boxes: &[LabeledBox]) -> Image {
    let mut img = Image::blank(size.0, size.1);
    for b in boxes {
        let c = id_color(b.id);
        let x0 = b.bbox.x().floor() as i64;
        let y0 = b.bbox.y().floor() as i64;
        let x1 = (b.bbox.right().ceil() as i64 - 1).max(x0);
        let y1 = (b.bbox.bottom().ceil() as i64 - 1).max(y0);
        img.rect(x0, y0, x1, y1, c);
        img.label(x0, y0 - 7, b.id, c);
    }
    img
}

/// One `frame_NNNNNN.ppm` per frame in `1..=last`, where `last` defaults to
/// the highest frame in `rows`. Returns the written paths.
pub fn render(rows: &[LabeledBox], size: (u32, u32), out: &Path, last: Option<u64>) -> Result<Vec<PathBuf>> {
    for r in rows {
        if r.bbox.right() > size.0 as f64 || r.bbox.bottom() > size.1 as f64 {
            bail!(
                "frame {} id {} box {:?} lies outside the {}x{} frame",
                r.frame,
                r.id,
                r.bbox,
                size.0,
                size.1
            );
        }
    }
    let mut frames: BTreeMap<u64, Vec<LabeledBox>> = BTreeMap::new();
    for r in rows {
        frames.entry(r.frame).or_default().push(*r);
    }
    let last = last.unwrap_or_else(|| frames.keys().next_back().copied().unwrap_or(0));
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut written = Vec::new();
    for f in 1..=last {
        let img = draw_frame(size, frames.get(&f).map_or(&[][..], |v| v.as_slice()));
        let path = out.join(format!("frame_{f:06}.ppm"));
        img.write_ppm(&path)?;
        written.push(path);
    }
    Ok(written)
}
