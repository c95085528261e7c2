//! Command implementations behind the `smalltrack` binary.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use smalltrack::config::{manifest_text, Config, SweepKind};
use smalltrack::experiment::{run_sweep, track_to_dir, write_text, DetectionSource, SweepTable};
use smalltrack::metrics::{evaluate as score, EvalReport, ReportTable};
use smalltrack::mot::{read_mot_file, write_mot_file};
use smalltrack::sim::{generate_scene, OracleDetector};
use smalltrack::tracker::SequenceResult;

pub mod render;

/// Reads `path`, or falls back to built-in defaults.
pub fn load_config(path: Option<&Path>) -> Result<Config> {
    let cfg = match path {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Writes `gt.txt`, `det.txt` and `manifest.toml` into `out`.
pub fn simulate(cfg: &Config, out: &Path) -> Result<()> {
    ensure_dir(out)?;
    let scene = generate_scene(&cfg.scene)?;
    write_mot_file(&out.join("gt.txt"), &scene.ground_truth)?;
    OracleDetector::new(&scene, &cfg.noise)?
        .replay()
        .write_file(&out.join("det.txt"))?;
    write_text(&out.join("manifest.toml"), &manifest_text(cfg, "simulate", &[]))?;
    Ok(())
}

/// Runs the tracker and writes `tracks.txt`, `regions.csv`, `timing.csv`
/// and `manifest.toml` into `out`.
pub fn track(cfg: &Config, source: &DetectionSource, out: &Path) -> Result<SequenceResult> {
    ensure_dir(out)?;
    Ok(track_to_dir(cfg, source, out)?)
}

pub struct EvalArgs<'a> {
    pub gt: &'a Path,
    pub hyp: &'a Path,
    pub timing: Option<&'a Path>,
    pub regions: Option<&'a Path>,
    pub scene: &'a str,
    pub iou_threshold: f64,
}

pub fn evaluate(args: &EvalArgs) -> Result<EvalReport> {
    let gt = read_mot_file(args.gt)?;
    let hyp = read_mot_file(args.hyp)?;
    let mut report = score(&gt, &hyp, args.iou_threshold);
    if let Some(p) = args.timing {
        let secs = csv_column(p, "wall_time_s")?;
        let total: f64 = secs.iter().sum();
        report.fps = if total > 0.0 {
            secs.len() as f64 / total
        } else {
            f64::NAN
        };
    }
    if let Some(p) = args.regions {
        let counts = csv_column(p, "regions")?;
        report.regions_mean = counts.iter().sum::<f64>() / counts.len().max(1) as f64;
    }
    Ok(report)
}

/// Aligned table followed by the CSV header and row.
pub fn format_report(scene: &str, report: &EvalReport, iou_threshold: f64) -> String {
    let rows = [(scene.to_string(), *report)];
    format!(
        "{}iou_threshold = {iou_threshold}\n\n{}\n{}\n",
        ReportTable {
            rows: &rows,
            label: "scene"
        },
        EvalReport::CSV_HEADER,
        report.csv_row(scene)
    )
}

/// Values of one named column of a headed comma-separated file.
fn csv_column(path: &Path, name: &str) -> Result<Vec<f64>> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .transpose()?
        .with_context(|| format!("{}: empty file", path.display()))?;
    let Some(col) = header.split(',').position(|h| h.trim() == name) else {
        bail!("{}:1: no '{name}' column", path.display());
    };
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let field = line.split(',').nth(col).unwrap_or("");
        let v: f64 = field
            .trim()
            .parse()
            .with_context(|| format!("{}:{}: bad number '{field}'", path.display(), i + 2))?;
        out.push(v);
    }
    Ok(out)
}

/// Runs every sweep setting; writes `table.txt`, `sweep.csv`, `manifest.toml`
/// and one numbered subdirectory per setting. Returns the table text.
pub fn sweep(cfg: &Config, out: &Path) -> Result<String> {
    ensure_dir(out)?;
    let rows = run_sweep(cfg, Some(out))?;
    let label = match cfg.sweep.kind {
        SweepKind::Weights => "w_pred & w_hist",
        SweepKind::Stages => "similarity",
    };
    let table = SweepTable { rows: &rows, label }.to_string();
    write_text(&out.join("table.txt"), &table)?;
    let mut csv = format!("{}\n", EvalReport::CSV_HEADER);
    for (name, r) in &rows {
        csv.push_str(&r.csv_row(name));
        csv.push('\n');
    }
    write_text(&out.join("sweep.csv"), &csv)?;
    write_text(&out.join("manifest.toml"), &manifest_text(cfg, "sweep", &rows))?;
    Ok(table)
}

/// `WxH` to a pair.
pub fn parse_size(s: &str) -> Result<(u32, u32)> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .with_context(|| format!("size '{s}' is not WxH"))?;
    let w: u32 = w.trim().parse().with_context(|| format!("bad width in '{s}'"))?;
    let h: u32 = h.trim().parse().with_context(|| format!("bad height in '{s}'"))?;
    if w == 0 || h == 0 {
        bail!("size '{s}' must be positive");
    }
    Ok((w, h))
}

pub fn detection_source(file: Option<PathBuf>) -> DetectionSource {
    file.map_or(DetectionSource::Oracle, DetectionSource::File)
}
