use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};
use smalltrack::config::SweepKind;
use smalltrack::mot::read_mot_file;
use smalltrack_cli::{detection_source, load_config, parse_size, render, EvalArgs};

#[derive(Parser)]
#[command(name = "smalltrack", version, about = "Small-object tracking in very large frames")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene: ground truth, detections, manifest.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Track a detections file, or the configured scene's oracle detections.
    Track {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Detections file; omit to simulate the configured scene.
        #[arg(long, conflicts_with = "oracle")]
        detections: Option<PathBuf>,
        #[arg(long)]
        oracle: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a tracking file against ground truth.
    Evaluate {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        hyp: PathBuf,
        /// `timing.csv` from a track run, for FPS.
        #[arg(long)]
        timing: Option<PathBuf>,
        /// `regions.csv` from a track run, for mean regions per frame.
        #[arg(long)]
        regions: Option<PathBuf>,
        #[arg(long, default_value = "scene")]
        scene: String,
        #[arg(long, default_value_t = 0.5)]
        iou: f64,
        /// Also write the CSV header and row here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Track and score one scene under several association settings.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides `sweep.kind`.
        #[arg(long, value_parser = ["weights", "stages"])]
        kind: Option<String>,
    },
    /// Draw boxes from a MOT file into one PPM image per frame.
    Render {
        #[arg(long)]
        input: PathBuf,
        /// Frame size, e.g. 4096x2048.
        #[arg(long)]
        size: String,
        #[arg(long)]
        out: PathBuf,
        /// Render frames 1..=N instead of up to the last frame in the file.
        #[arg(long)]
        frames: Option<u64>,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate { config, out } => {
            let cfg = load_config(config.as_deref())?;
            smalltrack_cli::simulate(&cfg, &out)?;
            println!("wrote {}", out.display());
        }
        Command::Track {
            config,
            detections,
            oracle: _,
            out,
        } => {
            let cfg = load_config(config.as_deref())?;
            let res = smalltrack_cli::track(&cfg, &detection_source(detections), &out)?;
            println!(
                "{} frames, {:.2} regions/frame, {:.1} fps -> {}",
                res.outputs.len(),
                res.regions_mean(),
                res.mean_fps,
                out.display()
            );
        }
        Command::Evaluate {
            gt,
            hyp,
            timing,
            regions,
            scene,
            iou,
            out,
        } => {
            let report = smalltrack_cli::evaluate(&EvalArgs {
                gt: &gt,
                hyp: &hyp,
                timing: timing.as_deref(),
                regions: regions.as_deref(),
                scene: &scene,
                iou_threshold: iou,
            })?;
            print!("{}", smalltrack_cli::format_report(&scene, &report, iou));
            if let Some(p) = out {
                let csv = format!(
                    "{}\n{}\n",
                    smalltrack::metrics::EvalReport::CSV_HEADER,
                    report.csv_row(&scene)
                );
                std::fs::write(&p, csv)?;
            }
        }
        Command::Sweep { config, out, kind } => {
            let mut cfg = load_config(config.as_deref())?;
            match kind.as_deref() {
                Some("weights") => cfg.sweep.kind = SweepKind::Weights,
                Some("stages") => cfg.sweep.kind = SweepKind::Stages,
                _ => {}
            }
            print!("{}", smalltrack_cli::sweep(&cfg, &out)?);
        }
        Command::Render {
            input,
            size,
            out,
            frames,
        } => {
            let rows = read_mot_file(&input)?;
            let written = render::render(&rows, parse_size(&size)?, &out, frames)?;
            println!("wrote {} images to {}", written.len(), out.display());
        }
    }
    Ok(())
}
