//! MOT-challenge text format: `frame,id,x,y,w,h,conf,-1,-1,-1`.

use std::collections::HashSet;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::geometry::BBox;
use crate::{Error, Result};

/// One identified box in one frame (ground truth or tracker output).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledBox {
    pub frame: u64,
    pub id: u64,
    pub bbox: BBox,
    pub confidence: f64,
}

impl LabeledBox {
    pub fn new(frame: u64, id: u64, bbox: BBox) -> Self {
        Self {
            frame,
            id,
            bbox,
            confidence: 1.0,
        }
    }
}

pub fn write_row<W: Write>(out: &mut W, b: &LabeledBox) -> std::io::Result<()> {
    writeln!(
        out,
        "{},{},{},{},{},{},{},-1,-1,-1",
        b.frame,
        b.id,
        b.bbox.x(),
        b.bbox.y(),
        b.bbox.w(),
        b.bbox.h(),
        b.confidence
    )
}

pub fn write_mot_file(path: &Path, rows: &[LabeledBox]) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(f);
    for r in rows {
        write_row(&mut out, r).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Parses MOT rows. At least `frame,id,x,y,w,h` are required; a seventh
/// column is read as confidence, anything after it is ignored.
pub fn read_mot<R: BufRead>(input: R, source: &str) -> Result<Vec<LabeledBox>> {
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for (n, line) in input.lines().enumerate() {
        let lineno = n + 1;
        let line = line.map_err(|e| Error::io(source, e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() < 6 {
            return Err(Error::parse(
                source,
                lineno,
                format!("expected at least 6 fields, found {}", f.len()),
            ));
        }
        let int = |i: usize, what: &str| -> Result<u64> {
            f[i].parse::<u64>()
                .or_else(|_| match f[i].parse::<f64>() {
                    Ok(v) if v >= 0.0 && v.fract() == 0.0 => Ok(v as u64),
                    _ => Err(()),
                })
                .map_err(|_| Error::parse(source, lineno, format!("bad {what} '{}'", f[i])))
        };
        let num = |i: usize| -> Result<f64> {
            f[i].parse::<f64>()
                .map_err(|_| Error::parse(source, lineno, format!("bad number '{}'", f[i])))
        };
        let frame = int(0, "frame")?;
        let id = int(1, "id")?;
        let bbox =
            BBox::new(num(2)?, num(3)?, num(4)?, num(5)?).map_err(|e| Error::parse(source, lineno, e.to_string()))?;
        let confidence = if f.len() > 6 { num(6)? } else { 1.0 };
        if !seen.insert((frame, id)) {
            return Err(Error::parse(
                source,
                lineno,
                format!("duplicate id {id} in frame {frame}"),
            ));
        }
        rows.push(LabeledBox {
            frame,
            id,
            bbox,
            confidence,
        });
    }
    Ok(rows)
}

pub fn read_mot_file(path: &Path) -> Result<Vec<LabeledBox>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_mot(std::io::BufReader::new(f), &path.display().to_string())
}
