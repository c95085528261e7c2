//! Detector port, slice-to-frame coordinate lifting and cross-slice NMS.
//!
//! A detector only ever sees one region at a time and answers in
//! region-local coordinates; the engine lifts results back into the frame
//! and suppresses the duplicates produced by overlapping slices.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::geometry::{iou, BBox};
use crate::slicing::Region;
use crate::{Error, Result};

const NORM_TOLERANCE: f64 = 1e-6;

/// Post-processing of raw detector output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectConfig {
    pub nms_iou: f64,
    pub min_confidence: f64,
    /// Fan region inference out over a thread pool.
    pub parallel: bool,
    /// Artificial latency per region call in milliseconds (0 = none).
    pub delay_ms: f64,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self {
            nms_iou: 0.5,
            min_confidence: 0.25,
            parallel: true,
            delay_ms: 0.0,
        }
    }
}

/// Unit-norm appearance feature.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    /// Wraps an already unit-norm vector.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let norm = l2(&values);
        if values.is_empty() || (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::InvalidEmbedding(format!(
                "expected unit norm, got {norm} (dim {})",
                values.len()
            )));
        }
        Ok(Self(values))
    }

    /// Scales `values` to unit norm.
    pub fn normalized(mut values: Vec<f64>) -> Result<Self> {
        let norm = l2(&values);
        if values.is_empty() || !norm.is_finite() || norm == 0.0 {
            return Err(Error::InvalidEmbedding("cannot normalize a zero vector".into()));
        }
        values.iter_mut().for_each(|v| *v /= norm);
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub bbox: BBox,
    pub confidence: f64,
    pub embedding: Option<Embedding>,
    pub source_region: Option<usize>,
}

impl Detection {
    pub fn new(bbox: BBox, confidence: f64) -> Self {
        Self {
            bbox,
            confidence,
            embedding: None,
            source_region: None,
        }
    }

    pub fn with_embedding(mut self, embedding: Embedding) -> Self {
        self.embedding = Some(embedding);
        self
    }
}

/// Anything that can find objects inside one slice of a frame.
///
/// Implementations answer in coordinates relative to the region's top-left
/// corner and must be callable concurrently for distinct regions.
pub trait DetectorPort: Sync {
    fn detect(&self, region: &Region, frame_id: u64) -> Vec<Detection>;
}

impl<D: DetectorPort + ?Sized> DetectorPort for &D {
    fn detect(&self, region: &Region, frame_id: u64) -> Vec<Detection> {
        (**self).detect(region, frame_id)
    }
}

impl<D: DetectorPort + ?Sized + Send> DetectorPort for Box<D> {
    fn detect(&self, region: &Region, frame_id: u64) -> Vec<Detection> {
        (**self).detect(region, frame_id)
    }
}

/// Moves a region-local detection into frame coordinates.
pub fn lift_to_global(local: &Detection, region: &Region) -> Result<Detection> {
    const EPS: f64 = 1e-9;
    let b = &local.bbox;
    let (rw, rh) = (region.bbox.w(), region.bbox.h());
    if b.x() < -EPS || b.y() < -EPS || b.right() > rw + EPS || b.bottom() > rh + EPS {
        return Err(Error::RegionContract(format!(
            "box ({}, {}, {}, {}) outside region {} of size {rw}x{rh}",
            b.x(),
            b.y(),
            b.w(),
            b.h(),
            region.index
        )));
    }
    Ok(Detection {
        bbox: b.translate(region.bbox.x(), region.bbox.y()),
        confidence: local.confidence,
        embedding: local.embedding.clone(),
        source_region: Some(region.index),
    })
}

/// Greedy non-maximum suppression.
///
/// Candidates are visited by confidence (descending), then `x`, then `y`
/// (ascending); a candidate survives iff its IoU with every survivor is below
/// `iou_threshold`.
pub fn nms_merge(mut dets: Vec<Detection>, iou_threshold: f64) -> Vec<Detection> {
    dets.sort_by(|a, b| {
        b.confidence
            .total_cmp(&a.confidence)
            .then(a.bbox.x().total_cmp(&b.bbox.x()))
            .then(a.bbox.y().total_cmp(&b.bbox.y()))
    });
    let mut kept: Vec<Detection> = Vec::with_capacity(dets.len());
    for d in dets {
        if kept.iter().all(|k| iou(&k.bbox, &d.bbox) < iou_threshold) {
            kept.push(d);
        }
    }
    kept
}

/// Precomputed per-frame detections in frame coordinates, served region by
/// region. Only boxes lying entirely inside a region are reported for it.
#[derive(Debug, Clone, Default)]
pub struct ReplayDetector {
    frames: BTreeMap<u64, Vec<Detection>>,
    dim: usize,
}

impl ReplayDetector {
    pub fn new(frames: BTreeMap<u64, Vec<Detection>>, dim: usize) -> Self {
        Self { frames, dim }
    }

    pub fn frames(&self) -> &BTreeMap<u64, Vec<Detection>> {
        &self.frames
    }

    /// Embedding dimension declared for this detection set (0 when absent).
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn last_frame(&self) -> Option<u64> {
        self.frames.keys().next_back().copied()
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        read_detections(std::io::BufReader::new(f), &path.display().to_string())
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        write_detections(&mut f, self.dim, &self.frames).map_err(|e| Error::io(path, e))
    }
}

impl DetectorPort for ReplayDetector {
    fn detect(&self, region: &Region, frame_id: u64) -> Vec<Detection> {
        let Some(dets) = self.frames.get(&frame_id) else {
            return Vec::new();
        };
        dets.iter()
            .filter(|d| region.bbox.contains_box(&d.bbox))
            .map(|d| Detection {
                bbox: d.bbox.translate(-region.bbox.x(), -region.bbox.y()),
                confidence: d.confidence,
                embedding: d.embedding.clone(),
                source_region: None,
            })
            .collect()
    }
}

/// Wraps a port and adds a fixed latency to every region call, standing in
/// for the cost of a real network.
#[derive(Debug, Clone)]
pub struct Throttled<D> {
    inner: D,
    per_region: Duration,
}

impl<D> Throttled<D> {
    pub fn new(inner: D, per_region: Duration) -> Self {
        Self { inner, per_region }
    }
}

impl<D: DetectorPort> DetectorPort for Throttled<D> {
    fn detect(&self, region: &Region, frame_id: u64) -> Vec<Detection> {
        std::thread::sleep(self.per_region);
        self.inner.detect(region, frame_id)
    }
}

/// Writes the `#dim=D` header followed by `frame,x,y,w,h,conf[,e1..eD]` rows.
pub fn write_detections<W: Write>(
    out: &mut W,
    dim: usize,
    frames: &BTreeMap<u64, Vec<Detection>>,
) -> std::io::Result<()> {
    writeln!(out, "#dim={dim}")?;
    let mut line = String::new();
    for (frame, dets) in frames {
        for d in dets {
            line.clear();
            let b = &d.bbox;
            let _ = write!(line, "{frame},{},{},{},{},{}", b.x(), b.y(), b.w(), b.h(), d.confidence);
            if let Some(e) = &d.embedding {
                for v in e.as_slice() {
                    let _ = write!(line, ",{v}");
                }
            }
            writeln!(out, "{line}")?;
        }
    }
    Ok(())
}

pub fn read_detections<R: BufRead>(input: R, source: &str) -> Result<ReplayDetector> {
    let mut frames: BTreeMap<u64, Vec<Detection>> = BTreeMap::new();
    let mut dim: Option<usize> = None;
    for (n, line) in input.lines().enumerate() {
        let lineno = n + 1;
        let line = line.map_err(|e| Error::io(source, e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(v) = rest.trim().strip_prefix("dim=") {
                if dim.is_some() {
                    return Err(Error::parse(source, lineno, "duplicate #dim header"));
                }
                let d = v
                    .trim()
                    .parse()
                    .map_err(|_| Error::parse(source, lineno, format!("bad dimension '{v}'")))?;
                dim = Some(d);
            }
            continue;
        }
        let d = dim.ok_or_else(|| Error::parse(source, lineno, "missing #dim=D header"))?;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 6 && fields.len() != 6 + d {
            return Err(Error::parse(
                source,
                lineno,
                format!("expected 6 or {} fields, found {}", 6 + d, fields.len()),
            ));
        }
        let frame: u64 = fields[0]
            .parse()
            .map_err(|_| Error::parse(source, lineno, format!("bad frame '{}'", fields[0])))?;
        let num = |i: usize| -> Result<f64> {
            fields[i]
                .parse::<f64>()
                .map_err(|_| Error::parse(source, lineno, format!("bad number '{}'", fields[i])))
        };
        let bbox =
            BBox::new(num(1)?, num(2)?, num(3)?, num(4)?).map_err(|e| Error::parse(source, lineno, e.to_string()))?;
        let mut det = Detection::new(bbox, num(5)?);
        if fields.len() > 6 && d > 0 {
            let values = (6..6 + d).map(num).collect::<Result<Vec<_>>>()?;
            let emb = Embedding::new(values.clone())
                .or_else(|_| Embedding::normalized(values))
                .map_err(|e| Error::parse(source, lineno, e.to_string()))?;
            det.embedding = Some(emb);
        }
        frames.entry(frame).or_default().push(det);
    }
    Ok(ReplayDetector::new(frames, dim.unwrap_or(0)))
}
