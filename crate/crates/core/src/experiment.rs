//! End-to-end runs: scene or detections file in, tracks, logs and reports out.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use rayon::prelude::*;

use crate::assoc::StageOrder;
use crate::config::{manifest_text, Config, SweepKind};
use crate::detect::{DetectorPort, ReplayDetector, Throttled};
use crate::metrics::{evaluate, EvalReport};
use crate::mot::LabeledBox;
use crate::sim::{generate_scene, OracleDetector, Scene};
use crate::tracker::{run_sequence, SequenceResult, Tracker};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DetectionSource {
    /// Simulated detections drawn from the configured scene.
    Oracle,
    File(PathBuf),
}

pub type BoxedDetector = Box<dyn DetectorPort + Send>;

/// Detector plus the frame ids to run over.
pub fn build_detector(cfg: &Config, source: &DetectionSource) -> Result<(BoxedDetector, Vec<u64>)> {
    let replay = match source {
        DetectionSource::Oracle => {
            let scene = generate_scene(&cfg.scene)?;
            OracleDetector::new(&scene, &cfg.noise)?.into_replay()
        }
        DetectionSource::File(path) => ReplayDetector::from_file(path)?,
    };
    let frames: Vec<u64> = match source {
        DetectionSource::Oracle => (1..=cfg.scene.n_frames).collect(),
        DetectionSource::File(_) => (1..=replay.last_frame().unwrap_or(0)).collect(),
    };
    Ok((throttle(cfg, replay), frames))
}

fn throttle<D: DetectorPort + Send + 'static>(cfg: &Config, inner: D) -> BoxedDetector {
    if cfg.detect.delay_ms > 0.0 {
        Box::new(Throttled::new(
            inner,
            Duration::from_secs_f64(cfg.detect.delay_ms / 1000.0),
        ))
    } else {
        Box::new(inner)
    }
}

pub fn run_track(cfg: &Config, source: &DetectionSource) -> Result<SequenceResult> {
    cfg.validate()?;
    let (detector, frames) = build_detector(cfg, source)?;
    let mut tracker = Tracker::new(cfg.tracker_config(), (cfg.scene.frame_w, cfg.scene.frame_h))?;
    run_sequence(&mut tracker, frames, &detector)
}

/// Writes `tracks.txt`, `regions.csv`, `timing.csv` and `manifest.toml`.
pub fn track_to_dir(cfg: &Config, source: &DetectionSource, out_dir: &Path) -> Result<SequenceResult> {
    let result = run_track(cfg, source)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_with(&out_dir.join("tracks.txt"), |w| result.write_tracks(w))?;
    write_with(&out_dir.join("regions.csv"), |w| result.write_region_log(w))?;
    write_with(&out_dir.join("timing.csv"), |w| result.write_timing_log(w))?;
    write_text(&out_dir.join("manifest.toml"), &manifest_text(cfg, "track", &[]))?;
    Ok(result)
}

pub(crate) fn write_with<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// A simulated scene tracked and scored against its own ground truth.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub scene: Scene,
    pub result: SequenceResult,
    pub report: EvalReport,
}

impl ScenarioRun {
    pub fn hypotheses(&self) -> Vec<LabeledBox> {
        self.result.hypotheses()
    }
}

pub fn run_scenario(cfg: &Config) -> Result<ScenarioRun> {
    cfg.validate()?;
    let scene = generate_scene(&cfg.scene)?;
    let detector = throttle(cfg, OracleDetector::new(&scene, &cfg.noise)?.into_replay());
    let mut tracker = Tracker::new(cfg.tracker_config(), (cfg.scene.frame_w, cfg.scene.frame_h))?;
    let result = run_sequence(&mut tracker, 1..=cfg.scene.n_frames, &detector)?;
    let mut report = evaluate(&scene.ground_truth, &result.hypotheses(), cfg.eval.iou_threshold);
    report.fps = result.mean_fps;
    report.regions_mean = result.regions_mean();
    Ok(ScenarioRun { scene, result, report })
}

/// One row of a sweep: a label and the configuration it runs.
#[derive(Debug, Clone)]
pub struct Setting {
    pub label: String,
    pub config: Config,
}

/// Expands the sweep section into concrete settings.
pub fn sweep_settings(cfg: &Config) -> Vec<Setting> {
    let order = cfg.assoc.stage_order;
    match cfg.sweep.kind {
        SweepKind::Weights => cfg
            .sweep
            .weights
            .iter()
            .map(|&[p, h]| Setting {
                label: format!("{p} & {h}"),
                config: cfg.clone().with_association(p, h, order),
            })
            .collect(),
        SweepKind::Stages => {
            let (p, h) = (cfg.assoc.w_pred, cfg.assoc.w_hist);
            let rows: [(&str, f64, f64, StageOrder); 7] = [
                ("Appearance", p, h, StageOrder::AppearanceOnly),
                ("DIoU", 1.0, 0.0, StageOrder::LocationOnly),
                ("DH-DIoU", p, h, StageOrder::LocationOnly),
                ("Appearance + DIoU", 1.0, 0.0, StageOrder::AppearanceFirst),
                ("Appearance + DH-DIoU", p, h, StageOrder::AppearanceFirst),
                ("DIoU + Appearance", 1.0, 0.0, StageOrder::LocationFirst),
                ("DH-DIoU + Appearance", p, h, StageOrder::LocationFirst),
            ];
            rows.iter()
                .map(|&(label, p, h, o)| Setting {
                    label: label.to_string(),
                    config: cfg.clone().with_association(p, h, o),
                })
                .collect()
        }
    }
}

/// Runs every setting on the configured scene, in parallel. With `out_dir`,
/// each setting's tracks land in its own numbered subdirectory.
pub fn run_sweep(cfg: &Config, out_dir: Option<&Path>) -> Result<Vec<(String, EvalReport)>> {
    let settings = sweep_settings(cfg);
    settings
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let run = run_scenario(&s.config)?;
            if let Some(dir) = out_dir {
                let sub = dir.join(format!("{:02}", i + 1));
                std::fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
                write_with(&sub.join("tracks.txt"), |w| run.result.write_tracks(w))?;
                write_with(&sub.join("regions.csv"), |w| run.result.write_region_log(w))?;
                let reports = [(s.label.clone(), run.report)];
                write_text(&sub.join("manifest.toml"), &manifest_text(&s.config, "sweep", &reports))?;
            }
            Ok((s.label.clone(), run.report))
        })
        .collect()
}

/// Sweep results without timing columns, so reruns print identical tables.
pub struct SweepTable<'a> {
    pub rows: &'a [(String, EvalReport)],
    pub label: &'a str,
}

impl fmt::Display for SweepTable<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let w = self
            .rows
            .iter()
            .map(|(n, _)| n.len())
            .max()
            .unwrap_or(0)
            .max(self.label.len());
        writeln!(
            f,
            "{:<w$} | {:>7} {:>6} {:>6} {:>6} {:>5}",
            self.label, "MOTA", "IDF1", "FP", "FN", "IDsw"
        )?;
        writeln!(f, "{}", "-".repeat(w + 37))?;
        for (name, r) in self.rows {
            writeln!(
                f,
                "{:<w$} | {:>7.1} {:>6.1} {:>6} {:>6} {:>5}",
                name,
                100.0 * r.mota,
                100.0 * r.idf1,
                r.fp,
                r.fn_,
                r.idsw
            )?;
        }
        Ok(())
    }
}
