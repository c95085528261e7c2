//! Per-frame pipeline and track lifecycle.
//!
//! Each frame: predict every live track, sample candidate regions around the
//! predictions, run the detector on those regions only, fuse the results,
//! associate, then update, spawn and retire tracks.

use std::io::Write;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assoc::{blend_feature, two_stage_match, AssociationConfig, TrackView};
use crate::detect::{lift_to_global, nms_merge, DetectConfig, Detection, DetectorPort, Embedding};
use crate::geometry::BBox;
use crate::mot::{self, LabeledBox};
use crate::motion::{KalmanConfig, KalmanFilter, KalmanState};
use crate::slicing::{adaptive_sample, Region, SamplerConfig, SliceConfig, SliceGrid};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Lifecycle {
    /// Matches (including the spawning detection) needed to confirm a track.
    pub n_init: u32,
    /// Consecutive misses tolerated before a track is lost.
    pub max_age: u32,
}

impl Default for Lifecycle {
    fn default() -> Self {
        Self { n_init: 3, max_age: 60 }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrackerConfig {
    pub lifecycle: Lifecycle,
    pub slice: SliceConfig,
    pub sampler: SamplerConfig,
    pub assoc: AssociationConfig,
    pub kalman: KalmanConfig,
    pub detect: DetectConfig,
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lifecycle.n_init < 1 || self.lifecycle.max_age < 1 {
            return Err(Error::Config("tracker.n_init and tracker.max_age must be >= 1".into()));
        }
        self.assoc.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackStatus {
    Tentative,
    Confirmed,
    Lost,
}

#[derive(Debug, Clone)]
pub struct Track {
    pub id: u64,
    pub state: KalmanState,
    /// Box of the most recent matched detection.
    pub history_box: BBox,
    pub feature: Option<Embedding>,
    pub status: TrackStatus,
    pub age: u32,
    pub misses: u32,
    pub hits: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackReport {
    pub id: u64,
    pub bbox: BBox,
    pub confidence: f64,
    pub status: TrackStatus,
}

#[derive(Debug, Clone)]
pub struct FrameOutput {
    pub frame_id: u64,
    /// Confirmed tracks matched in this frame, by id.
    pub tracks: Vec<TrackReport>,
    pub regions_processed: usize,
    /// Live tracks the sampler drew regions for.
    pub sampled_tracks: usize,
    /// Detections left after confidence filtering and NMS.
    pub detections: usize,
    pub wall_time: Duration,
}

pub struct Tracker {
    cfg: TrackerConfig,
    grid: SliceGrid,
    filter: KalmanFilter,
    rng: ChaCha8Rng,
    tracks: Vec<Track>,
    next_id: u64,
    last_frame: Option<u64>,
    lost: usize,
}

impl Tracker {
    pub fn new(cfg: TrackerConfig, frame_size: (u32, u32)) -> Result<Self> {
        cfg.validate()?;
        let grid = cfg.slice.grid(frame_size.0, frame_size.1)?;
        Ok(Self {
            filter: KalmanFilter::new(cfg.kalman),
            rng: ChaCha8Rng::seed_from_u64(cfg.sampler.seed),
            grid,
            cfg,
            tracks: Vec::new(),
            next_id: 1,
            last_frame: None,
            lost: 0,
        })
    }

    pub fn grid(&self) -> &SliceGrid {
        &self.grid
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    /// Live (tentative or confirmed) tracks, by id.
    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    /// Number of tracks retired so far.
    pub fn lost_count(&self) -> usize {
        self.lost
    }

    pub fn step<D: DetectorPort + ?Sized>(&mut self, frame_id: u64, detector: &D) -> Result<FrameOutput> {
        if let Some(last) = self.last_frame {
            if frame_id <= last {
                return Err(Error::NonMonotoneFrame { last, got: frame_id });
            }
        }
        self.last_frame = Some(frame_id);
        let started = Instant::now();

        let predicted: Vec<(KalmanState, BBox)> = self.tracks.iter().map(|t| self.filter.predict(&t.state)).collect();
        let boxes: Vec<BBox> = predicted.iter().map(|(_, b)| *b).collect();
        let regions = adaptive_sample(&self.grid, &boxes, &self.cfg.sampler, &mut self.rng);
        let detections = self.detect(&regions, frame_id, detector)?;

        let views: Vec<TrackView> = self
            .tracks
            .iter()
            .zip(&predicted)
            .map(|(t, (_, pb))| TrackView {
                id: t.id,
                predicted: *pb,
                history: t.history_box,
                feature: t.feature.as_ref(),
            })
            .collect();
        let result = two_stage_match(&views, &detections, &self.cfg.assoc)?;

        let mut matched_det: Vec<Option<usize>> = vec![None; self.tracks.len()];
        for m in &result.matches {
            let ti = self
                .tracks
                .iter()
                .position(|t| t.id == m.track_id)
                .expect("matched id is live");
            matched_det[ti] = Some(m.detection);
        }

        let mut reports = Vec::new();
        let lifecycle = self.cfg.lifecycle;
        let decay = self.cfg.assoc.feature_decay;
        for ((track, (pred_state, _)), det_idx) in self.tracks.iter_mut().zip(predicted).zip(matched_det) {
            track.age += 1;
            match det_idx {
                Some(di) => {
                    let det = &detections[di];
                    track.state = self.filter.update(&pred_state, &det.bbox);
                    track.history_box = det.bbox;
                    track.feature = match (&track.feature, &det.embedding) {
                        (Some(f), Some(e)) => Some(blend_feature(f, e, decay)?),
                        (None, Some(e)) => Some(e.clone()),
                        (f, None) => f.clone(),
                    };
                    track.misses = 0;
                    track.hits += 1;
                    if track.status == TrackStatus::Tentative && track.hits >= lifecycle.n_init {
                        track.status = TrackStatus::Confirmed;
                    }
                    if track.status == TrackStatus::Confirmed {
                        reports.push(TrackReport {
                            id: track.id,
                            bbox: det.bbox,
                            confidence: det.confidence,
                            status: track.status,
                        });
                    }
                }
                None => {
                    track.state = pred_state;
                    track.misses += 1;
                    if track.misses > lifecycle.max_age {
                        track.status = TrackStatus::Lost;
                    }
                }
            }
        }
        let before = self.tracks.len();
        self.tracks.retain(|t| t.status != TrackStatus::Lost);
        self.lost += before - self.tracks.len();

        for &di in &result.unmatched_detections {
            let det = &detections[di];
            let status = if lifecycle.n_init <= 1 {
                TrackStatus::Confirmed
            } else {
                TrackStatus::Tentative
            };
            let id = self.next_id;
            self.next_id += 1;
            if status == TrackStatus::Confirmed {
                reports.push(TrackReport {
                    id,
                    bbox: det.bbox,
                    confidence: det.confidence,
                    status,
                });
            }
            self.tracks.push(Track {
                id,
                state: self.filter.initiate(&det.bbox),
                history_box: det.bbox,
                feature: det.embedding.clone(),
                status,
                age: 0,
                misses: 0,
                hits: 1,
            });
        }
        reports.sort_by_key(|r| r.id);

        Ok(FrameOutput {
            frame_id,
            tracks: reports,
            regions_processed: regions.len(),
            sampled_tracks: boxes.len(),
            detections: detections.len(),
            wall_time: started.elapsed(),
        })
    }

    /// Runs the port over the regions, lifts, filters and fuses. Results are
    /// merged in region order regardless of how the calls were scheduled.
    fn detect<D: DetectorPort + ?Sized>(
        &self,
        regions: &[Region],
        frame_id: u64,
        detector: &D,
    ) -> Result<Vec<Detection>> {
        let per_region = |r: &Region| -> Result<Vec<Detection>> {
            detector
                .detect(r, frame_id)
                .iter()
                .map(|d| lift_to_global(d, r))
                .collect()
        };
        let batches: Vec<Result<Vec<Detection>>> = if self.cfg.detect.parallel {
            regions.par_iter().map(per_region).collect()
        } else {
            regions.iter().map(per_region).collect()
        };
        let mut all = Vec::new();
        for b in batches {
            all.extend(
                b?.into_iter()
                    .filter(|d| d.confidence >= self.cfg.detect.min_confidence),
            );
        }
        Ok(nms_merge(all, self.cfg.detect.nms_iou))
    }
}

#[derive(Debug, Clone)]
pub struct SequenceResult {
    pub outputs: Vec<FrameOutput>,
    /// Frames per second of tracking-loop wall time.
    pub mean_fps: f64,
}

impl SequenceResult {
    pub fn hypotheses(&self) -> Vec<LabeledBox> {
        self.outputs
            .iter()
            .flat_map(|o| {
                o.tracks.iter().map(move |t| LabeledBox {
                    frame: o.frame_id,
                    id: t.id,
                    bbox: t.bbox,
                    confidence: t.confidence,
                })
            })
            .collect()
    }

    pub fn regions_mean(&self) -> f64 {
        if self.outputs.is_empty() {
            return 0.0;
        }
        self.outputs.iter().map(|o| o.regions_processed).sum::<usize>() as f64 / self.outputs.len() as f64
    }

    /// MOT rows for every reported track, in frame order.
    pub fn write_tracks<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        for row in self.hypotheses() {
            mot::write_row(out, &row)?;
        }
        Ok(())
    }

    /// `frame,regions,live_tracks,detections,tracks`, one row per frame.
    pub fn write_region_log<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "frame,regions,live_tracks,detections,tracks")?;
        for o in &self.outputs {
            writeln!(
                out,
                "{},{},{},{},{}",
                o.frame_id,
                o.regions_processed,
                o.sampled_tracks,
                o.detections,
                o.tracks.len()
            )?;
        }
        Ok(())
    }

    /// `frame,wall_time_s`, one row per frame.
    pub fn write_timing_log<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "frame,wall_time_s")?;
        for o in &self.outputs {
            writeln!(out, "{},{:.9}", o.frame_id, o.wall_time.as_secs_f64())?;
        }
        Ok(())
    }
}

/// Steps the tracker over `frames` in order.
pub fn run_sequence<D: DetectorPort + ?Sized>(
    tracker: &mut Tracker,
    frames: impl IntoIterator<Item = u64>,
    detector: &D,
) -> Result<SequenceResult> {
    let mut outputs = Vec::new();
    for f in frames {
        outputs.push(tracker.step(f, detector)?);
    }
    let total: f64 = outputs.iter().map(|o| o.wall_time.as_secs_f64()).sum();
    let mean_fps = if outputs.is_empty() || total == 0.0 {
        0.0
    } else {
        outputs.len() as f64 / total
    };
    Ok(SequenceResult { outputs, mean_fps })
}
