//! Run configuration: one flat, dotted-key text file (`slice.overlap = 0.25`).
//!
//! Every key has a default, so an empty file is a valid configuration. The
//! manifest written next to each run is the fully expanded configuration plus
//! `manifest.*` and `report.*` entries, and can be fed back in as a config.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::assoc::{AssociationConfig, StageOrder};
use crate::detect::DetectConfig;
use crate::motion::KalmanConfig;
use crate::sim::{NoiseConfig, ScenarioConfig};
use crate::slicing::{SamplerConfig, SliceConfig};
use crate::tracker::{Lifecycle, TrackerConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub iou_threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { iou_threshold: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    /// Prediction/history weight pairs.
    Weights,
    /// Similarity-by-stage combinations.
    Stages,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub kind: SweepKind,
    /// `(w_pred, w_hist)` pairs for the weight sweep.
    pub weights: Vec<[f64; 2]>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            kind: SweepKind::Weights,
            weights: (1..=9).map(|i| [i as f64 / 10.0, (10 - i) as f64 / 10.0]).collect(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub scene: ScenarioConfig,
    pub noise: NoiseConfig,
    pub slice: SliceConfig,
    pub sampler: SamplerConfig,
    pub detect: DetectConfig,
    pub kalman: KalmanConfig,
    pub assoc: AssociationConfig,
    pub tracker: Lifecycle,
    pub eval: EvalConfig,
    pub sweep: SweepConfig,
    /// Run metadata carried by manifests; ignored on load.
    #[serde(skip_serializing)]
    manifest: Option<toml::Table>,
    #[serde(skip_serializing)]
    report: Option<toml::Table>,
}

impl Config {
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        toml::from_str::<Config>(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(0);
            Error::parse(source, line, e.message().to_string())
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn tracker_config(&self) -> TrackerConfig {
        TrackerConfig {
            lifecycle: self.tracker,
            slice: self.slice.clone(),
            sampler: self.sampler.clone(),
            assoc: self.assoc.clone(),
            kalman: self.kalman,
            detect: self.detect.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        self.noise.validate()?;
        self.tracker_config().validate()?;
        self.slice.grid(self.scene.frame_w, self.scene.frame_h)?;
        Ok(())
    }

    /// Sets the association weights and stage order in one go.
    pub fn with_association(mut self, w_pred: f64, w_hist: f64, order: StageOrder) -> Self {
        self.assoc = self.assoc.with_weights(w_pred, w_hist);
        self.assoc.stage_order = order;
        self
    }

    /// Fully expanded `key = value` lines, sorted by key.
    pub fn to_flat_string(&self) -> String {
        let value = toml::Value::try_from(self).expect("config serializes");
        let mut lines = Vec::new();
        flatten("", &value, &mut lines);
        lines.sort();
        lines.join("\n") + "\n"
    }
}

fn flatten(prefix: &str, v: &toml::Value, out: &mut Vec<String>) {
    match v {
        toml::Value::Table(t) => {
            for (k, child) in t {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, child, out);
            }
        }
        other => out.push(format!("{prefix} = {other}")),
    }
}

/// Builds manifest text: the expanded config, then `manifest.*` metadata and
/// `report.<scene>.*` rows.
pub fn manifest_text(cfg: &Config, command: &str, reports: &[(String, crate::metrics::EvalReport)]) -> String {
    let mut s = cfg.to_flat_string();
    s.push_str(&format!("manifest.command = \"{command}\"\n"));
    s.push_str(&format!("manifest.seed = {}\n", cfg.scene.seed));
    s.push_str(&format!("manifest.tool_version = \"{}\"\n", env!("CARGO_PKG_VERSION")));
    for (scene, r) in reports {
        let key = format!("report.\"{scene}\"");
        let f = |v: f64| toml::Value::Float(v).to_string();
        s.push_str(&format!("{key}.fn = {}\n", r.fn_));
        s.push_str(&format!("{key}.fp = {}\n", r.fp));
        s.push_str(&format!("{key}.idf1 = {}\n", f(r.idf1)));
        s.push_str(&format!("{key}.idsw = {}\n", r.idsw));
        s.push_str(&format!("{key}.mota = {}\n", f(r.mota)));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::ScenarioKind;

    #[test]
    fn empty_text_gives_documented_defaults() {
        let c = Config::parse("", "c").unwrap();
        assert_eq!(c.slice.window, [256, 128]);
        assert_eq!(c.slice.overlap, 0.25);
        assert_eq!((c.sampler.per_track_samples, c.sampler.uniform_samples), (2, 5));
        assert_eq!((c.assoc.w_pred, c.assoc.w_hist), (0.2, 0.8));
        assert_eq!((c.tracker.n_init, c.tracker.max_age), (3, 60));
        assert_eq!(c.sweep.weights.len(), 9);
        assert_eq!(c.sweep.weights[1], [0.2, 0.8]);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn dotted_keys_parse() {
        let text = "slice.window = [512, 256]\nsampler.per_track = 3\nassoc.stage_order = \"appearance_only\"\nscene.scenario = \"crossing\"\nkalman.pos_std_factor = 0.1\n";
        let c = Config::parse(text, "c").unwrap();
        assert_eq!(c.slice.window, [512, 256]);
        assert_eq!(c.sampler.per_track_samples, 3);
        assert_eq!(c.assoc.stage_order, StageOrder::AppearanceOnly);
        assert_eq!(c.scene.scenario, ScenarioKind::Crossing);
        assert_eq!(c.kalman.pos_std_factor, 0.1);
    }

    #[test]
    fn errors_report_line_numbers() {
        let err = Config::parse("slice.overlap = 0.25\n\nsampler.uniform = \"many\"\n", "run.toml").unwrap_err();
        assert!(err.to_string().starts_with("run.toml:3:"), "{err}");
        let err = Config::parse("scene.n_bird = 4\n", "run.toml").unwrap_err();
        assert!(err.to_string().starts_with("run.toml:1:"), "{err}");
    }

    #[test]
    fn manifest_reloads_to_same_config() {
        let mut c = Config::parse("scene.seed = 7\nassoc.w_pred = 0.5\nassoc.w_hist = 0.5\n", "c").unwrap();
        c.noise.embed_noise_std = 0.123456789;
        let text = manifest_text(&c, "track", &[]);
        assert!(text.contains("manifest.tool_version"));
        assert!(text.contains("slice.window = [256, 128]"));
        let back = Config::parse(&text, "manifest").unwrap();
        assert_eq!(back.to_flat_string(), c.to_flat_string());
        assert_eq!(back.scene, c.scene);
        assert_eq!(back.noise, c.noise);
    }
}
