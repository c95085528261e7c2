//! Detection-history-aware association.
//!
//! Stage one scores each track/detection pair by a weighted sum of DIoU
//! against the track's predicted box and DIoU against the box of its last
//! matched detection. The history term keeps an object recognizable when it
//! reappears where it vanished while the motion model has drifted away.
//! Stage two matches the leftovers by appearance cosine similarity. Both
//! stages are solved as optimal bipartite assignments on `1 - similarity`.

pub mod lap;

pub use lap::{min_cost_assignment, solve_assignment, CostMatrix};

use serde::{Deserialize, Serialize};

use crate::detect::{Detection, Embedding};
use crate::geometry::{diou, BBox};
use crate::{Error, Result};

/// Which similarity runs in which stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageOrder {
    LocationFirst,
    AppearanceFirst,
    LocationOnly,
    AppearanceOnly,
}

impl StageOrder {
    fn stages(self) -> &'static [Cue] {
        match self {
            StageOrder::LocationFirst => &[Cue::Location, Cue::Appearance],
            StageOrder::AppearanceFirst => &[Cue::Appearance, Cue::Location],
            StageOrder::LocationOnly => &[Cue::Location],
            StageOrder::AppearanceOnly => &[Cue::Appearance],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Cue {
    Location,
    Appearance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssociationConfig {
    /// Weight of DIoU against the predicted box.
    pub w_pred: f64,
    /// Weight of DIoU against the last matched detection.
    pub w_hist: f64,
    /// Minimum DH-DIoU for a location match.
    #[serde(rename = "stage1_gate")]
    pub stage1_min_similarity: f64,
    /// Minimum cosine similarity for an appearance match.
    #[serde(rename = "stage2_gate")]
    pub stage2_min_cosine: f64,
    pub stage_order: StageOrder,
    /// EMA decay of the per-track appearance feature.
    pub feature_decay: f64,
}

impl Default for AssociationConfig {
    fn default() -> Self {
        Self {
            w_pred: 0.2,
            w_hist: 0.8,
            stage1_min_similarity: 0.0,
            stage2_min_cosine: 0.6,
            stage_order: StageOrder::LocationFirst,
            feature_decay: 0.9,
        }
    }
}

impl AssociationConfig {
    pub fn with_weights(mut self, w_pred: f64, w_hist: f64) -> Self {
        self.w_pred = w_pred;
        self.w_hist = w_hist;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        if !in_unit(self.w_pred) || !in_unit(self.w_hist) || (self.w_pred + self.w_hist - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "assoc weights must be in [0,1] and sum to 1, got ({}, {})",
                self.w_pred, self.w_hist
            )));
        }
        if !in_unit(self.feature_decay) {
            return Err(Error::Config(format!(
                "assoc.feature_decay {} outside [0,1]",
                self.feature_decay
            )));
        }
        Ok(())
    }
}

/// Weighted DIoU of a detection against a track's prediction and its history.
pub fn dh_diou(det: &BBox, predicted: &BBox, history: &BBox, cfg: &AssociationConfig) -> f64 {
    cfg.w_pred * diou(det, predicted) + cfg.w_hist * diou(det, history)
}

pub fn cosine_similarity(a: &Embedding, b: &Embedding) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    let dot: f64 = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum();
    Ok(dot.clamp(-1.0, 1.0))
}

/// Blends a new observation into a track feature and renormalizes.
pub fn blend_feature(feature: &Embedding, observed: &Embedding, decay: f64) -> Result<Embedding> {
    if feature.dim() != observed.dim() {
        return Err(Error::DimensionMismatch {
            left: feature.dim(),
            right: observed.dim(),
        });
    }
    let mixed: Vec<f64> = feature
        .as_slice()
        .iter()
        .zip(observed.as_slice())
        .map(|(f, o)| decay * f + (1.0 - decay) * o)
        .collect();
    // Opposite vectors can cancel; keep the newest observation then.
    Embedding::normalized(mixed).or_else(|_| Ok(observed.clone()))
}

/// What the matcher needs to know about a live track.
#[derive(Debug, Clone)]
pub struct TrackView<'a> {
    pub id: u64,
    pub predicted: BBox,
    pub history: BBox,
    pub feature: Option<&'a Embedding>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Match {
    pub track_id: u64,
    pub detection: usize,
    /// 1 or 2.
    pub stage: u8,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MatchResult {
    pub matches: Vec<Match>,
    pub unmatched_tracks: Vec<u64>,
    pub unmatched_detections: Vec<usize>,
}

/// Runs the configured matching cascade. Each stage only sees what earlier
/// stages left unmatched.
pub fn two_stage_match(
    tracks: &[TrackView<'_>],
    detections: &[Detection],
    cfg: &AssociationConfig,
) -> Result<MatchResult> {
    let mut track_open: Vec<usize> = (0..tracks.len()).collect();
    let mut det_open: Vec<usize> = (0..detections.len()).collect();
    let mut matches = Vec::new();

    for (stage_no, cue) in cfg.stage_order.stages().iter().enumerate() {
        if track_open.is_empty() || det_open.is_empty() {
            break;
        }
        let cost = match cue {
            Cue::Location => CostMatrix::from_fn(track_open.len(), det_open.len(), |r, c| {
                let t = &tracks[track_open[r]];
                1.0 - dh_diou(&detections[det_open[c]].bbox, &t.predicted, &t.history, cfg)
            }),
            Cue::Appearance => {
                let mut data = Vec::with_capacity(track_open.len() * det_open.len());
                for &ti in &track_open {
                    for &di in &det_open {
                        let v = match (tracks[ti].feature, &detections[di].embedding) {
                            (Some(f), Some(e)) => 1.0 - cosine_similarity(f, e)?,
                            _ => f64::INFINITY,
                        };
                        data.push(v);
                    }
                }
                CostMatrix::new(track_open.len(), det_open.len(), data)
            }
        };
        let gate = match cue {
            Cue::Location => 1.0 - cfg.stage1_min_similarity,
            Cue::Appearance => 1.0 - cfg.stage2_min_cosine,
        };
        let pairs = solve_assignment(&cost, gate);
        let mut took_track = vec![false; track_open.len()];
        let mut took_det = vec![false; det_open.len()];
        for (r, c) in pairs {
            took_track[r] = true;
            took_det[c] = true;
            matches.push(Match {
                track_id: tracks[track_open[r]].id,
                detection: det_open[c],
                stage: stage_no as u8 + 1,
            });
        }
        track_open = retain_untaken(&track_open, &took_track);
        det_open = retain_untaken(&det_open, &took_det);
    }

    Ok(MatchResult {
        matches,
        unmatched_tracks: track_open.iter().map(|&i| tracks[i].id).collect(),
        unmatched_detections: det_open,
    })
}

fn retain_untaken(items: &[usize], taken: &[bool]) -> Vec<usize> {
    items.iter().zip(taken).filter(|(_, &t)| !t).map(|(&i, _)| i).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn bb(x: f64, y: f64, w: f64, h: f64) -> BBox {
        BBox::new(x, y, w, h).unwrap()
    }

    fn unit(v: &[f64]) -> Embedding {
        Embedding::normalized(v.to_vec()).unwrap()
    }

    #[test]
    fn dh_diou_examples() {
        let cfg = AssociationConfig::default();
        let a = bb(10.0, 10.0, 10.0, 20.0);
        assert_eq!(dh_diou(&a, &a, &a, &cfg), 1.0);

        // prediction drifted: diou(det, pred) = -0.4 exactly
        let det = bb(0.0, 0.0, 2.0, 2.0);
        let pred = bb(4.0, 0.0, 2.0, 2.0);
        assert_abs_diff_eq!(diou(&det, &pred), -0.4, epsilon = 1e-12);
        assert_abs_diff_eq!(dh_diou(&det, &pred, &det, &cfg), 0.72, epsilon = 1e-12);

        let plain = cfg.clone().with_weights(1.0, 0.0);
        let hist = bb(50.0, 3.0, 5.0, 9.0);
        assert_eq!(dh_diou(&det, &pred, &hist, &plain), diou(&det, &pred));
    }

    #[test]
    fn cosine_examples() {
        let a = unit(&[1.0, 2.0, 3.0]);
        assert_abs_diff_eq!(cosine_similarity(&a, &a).unwrap(), 1.0, epsilon = 1e-12);
        assert_eq!(cosine_similarity(&unit(&[1.0, 0.0]), &unit(&[0.0, 1.0])).unwrap(), 0.0);
        assert_eq!(
            cosine_similarity(&unit(&[1.0, 0.0]), &unit(&[-1.0, 0.0])).unwrap(),
            -1.0
        );
        assert!(matches!(
            cosine_similarity(&unit(&[1.0, 0.0]), &unit(&[1.0, 0.0, 0.0])),
            Err(Error::DimensionMismatch { left: 2, right: 3 })
        ));
    }

    #[test]
    fn weights_must_sum_to_one() {
        assert!(AssociationConfig::default().validate().is_ok());
        assert!(AssociationConfig::default().with_weights(0.5, 0.6).validate().is_err());
    }

    #[test]
    fn blend_renormalizes() {
        let f = blend_feature(&unit(&[1.0, 0.0]), &unit(&[0.0, 1.0]), 0.9).unwrap();
        assert_abs_diff_eq!(f.as_slice().iter().map(|v| v * v).sum::<f64>(), 1.0, epsilon = 1e-12);
        assert!(f.as_slice()[0] > f.as_slice()[1]);
    }

    #[test]
    fn detection_at_prediction_matches_in_stage_one() {
        let b = bb(100.0, 100.0, 10.0, 20.0);
        let tracks = [TrackView {
            id: 4,
            predicted: b,
            history: b,
            feature: None,
        }];
        let r = two_stage_match(&tracks, &[Detection::new(b, 1.0)], &AssociationConfig::default()).unwrap();
        assert_eq!(
            r.matches,
            vec![Match {
                track_id: 4,
                detection: 0,
                stage: 1
            }]
        );
        assert!(r.unmatched_tracks.is_empty() && r.unmatched_detections.is_empty());
    }

    #[test]
    fn far_detection_recovered_by_appearance() {
        let cfg = AssociationConfig::default();
        let feat = unit(&[1.0, 0.0, 0.0]);
        let b = bb(100.0, 100.0, 10.0, 20.0);
        let far = bb(400.0, 300.0, 10.0, 20.0);
        assert!(dh_diou(&far, &b, &b, &cfg) < cfg.stage1_min_similarity);
        // cosine 0.95 with the track feature
        let emb = unit(&[0.95, (1.0f64 - 0.95 * 0.95).sqrt(), 0.0]);
        assert_abs_diff_eq!(cosine_similarity(&feat, &emb).unwrap(), 0.95, epsilon = 1e-12);
        let tracks = [TrackView {
            id: 1,
            predicted: b,
            history: b,
            feature: Some(&feat),
        }];
        let r = two_stage_match(&tracks, &[Detection::new(far, 0.9).with_embedding(emb)], &cfg).unwrap();
        assert_eq!(
            r.matches,
            vec![Match {
                track_id: 1,
                detection: 0,
                stage: 2
            }]
        );
    }

    #[test]
    fn failing_both_gates_leaves_everything_unmatched() {
        let cfg = AssociationConfig::default();
        let feat = unit(&[1.0, 0.0]);
        let b = bb(100.0, 100.0, 10.0, 20.0);
        let far = bb(900.0, 700.0, 10.0, 20.0);
        let tracks = [TrackView {
            id: 9,
            predicted: b,
            history: b,
            feature: Some(&feat),
        }];
        let dets = [Detection::new(far, 0.9).with_embedding(unit(&[0.0, 1.0]))];
        let r = two_stage_match(&tracks, &dets, &cfg).unwrap();
        assert!(r.matches.is_empty());
        assert_eq!(r.unmatched_tracks, vec![9]);
        assert_eq!(r.unmatched_detections, vec![0]);
    }

    #[test]
    fn missing_embeddings_skip_appearance_stage() {
        let cfg = AssociationConfig::default();
        let feat = unit(&[1.0, 0.0]);
        let b = bb(100.0, 100.0, 10.0, 20.0);
        let far = bb(900.0, 700.0, 10.0, 20.0);
        let tracks = [TrackView {
            id: 2,
            predicted: b,
            history: b,
            feature: Some(&feat),
        }];
        let r = two_stage_match(&tracks, &[Detection::new(far, 0.9)], &cfg).unwrap();
        assert!(r.matches.is_empty());
    }

    /// Shelter re-entry: history frozen at the entrance, prediction coasted
    /// away, detection back at the entrance.
    #[test]
    fn history_term_recovers_reentry() {
        let dhsc = AssociationConfig::default();
        let plain = dhsc.clone().with_weights(1.0, 0.0);
        let entrance = bb(1000.0, 500.0, 10.0, 20.0);
        let drifted = entrance.translate(2.5 * 10.0, 0.0);
        let det = entrance;
        let hi = dh_diou(&det, &drifted, &entrance, &dhsc);
        let lo = dh_diou(&det, &drifted, &entrance, &plain);
        assert!(hi >= dhsc.stage1_min_similarity, "{hi}");
        assert!(lo < plain.stage1_min_similarity, "{lo}");
        let tracks = [TrackView {
            id: 1,
            predicted: drifted,
            history: entrance,
            feature: None,
        }];
        let dets = [Detection::new(det, 1.0)];
        assert_eq!(two_stage_match(&tracks, &dets, &dhsc).unwrap().matches.len(), 1);
        assert!(two_stage_match(&tracks, &dets, &plain).unwrap().matches.is_empty());
    }

    fn arb_box() -> impl Strategy<Value = BBox> {
        (0.0..200.0f64, 0.0..200.0f64, 4.0..30.0f64, 4.0..30.0f64)
            .prop_map(|(x, y, w, h)| BBox::new(x, y, w, h).unwrap())
    }

    proptest! {
        #[test]
        fn dh_diou_is_convex_combination(d in arb_box(), p in arb_box(), h in arb_box(), wp in 0.0..=1.0f64) {
            let cfg = AssociationConfig::default().with_weights(wp, 1.0 - wp);
            let (d1, d2) = (diou(&d, &p), diou(&d, &h));
            let v = dh_diou(&d, &p, &h, &cfg);
            prop_assert!(v >= d1.min(d2) - 1e-12 && v <= d1.max(d2) + 1e-12);
        }

        #[test]
        fn cascade_partitions_indices(
            tracks in proptest::collection::vec((arb_box(), arb_box(), proptest::option::of(0usize..3)), 0..6),
            dets in proptest::collection::vec((arb_box(), proptest::option::of(0usize..3)), 0..6),
            order in prop_oneof![Just(StageOrder::LocationFirst), Just(StageOrder::AppearanceFirst),
                                 Just(StageOrder::LocationOnly), Just(StageOrder::AppearanceOnly)],
        ) {
            let basis = [unit(&[1.0, 0.0, 0.0]), unit(&[0.0, 1.0, 0.0]), unit(&[0.6, 0.8, 0.0])];
            let views: Vec<TrackView> = tracks.iter().enumerate().map(|(i, (p, h, f))| TrackView {
                id: 10 + i as u64, predicted: *p, history: *h, feature: f.map(|k| &basis[k]),
            }).collect();
            let detections: Vec<Detection> = dets.iter().map(|(b, e)| {
                let d = Detection::new(*b, 1.0);
                match e { Some(k) => d.with_embedding(basis[*k].clone()), None => d }
            }).collect();
            let cfg = AssociationConfig { stage_order: order, ..Default::default() };
            let r = two_stage_match(&views, &detections, &cfg).unwrap();
            let mut seen_t: Vec<u64> = r.matches.iter().map(|m| m.track_id).chain(r.unmatched_tracks.iter().copied()).collect();
            let mut seen_d: Vec<usize> = r.matches.iter().map(|m| m.detection).chain(r.unmatched_detections.iter().copied()).collect();
            seen_t.sort_unstable();
            seen_d.sort_unstable();
            prop_assert_eq!(seen_t, views.iter().map(|v| v.id).collect::<Vec<_>>());
            prop_assert_eq!(seen_d, (0..detections.len()).collect::<Vec<_>>());
        }

        #[test]
        fn zero_history_weight_is_plain_diou(
            tracks in proptest::collection::vec((arb_box(), arb_box()), 1..5),
            dets in proptest::collection::vec(arb_box(), 1..5),
        ) {
            let views: Vec<TrackView> = tracks.iter().enumerate().map(|(i, (p, h))| TrackView {
                id: i as u64, predicted: *p, history: *h, feature: None,
            }).collect();
            let detections: Vec<Detection> = dets.iter().map(|b| Detection::new(*b, 1.0)).collect();
            let cfg = AssociationConfig::default().with_weights(1.0, 0.0);
            let r = two_stage_match(&views, &detections, &cfg).unwrap();
            let cost = CostMatrix::from_fn(views.len(), detections.len(), |t, d| 1.0 - diou(&detections[d].bbox, &views[t].predicted));
            let direct = solve_assignment(&cost, 1.0);
            let got: Vec<(usize, usize)> = r.matches.iter().map(|m| (m.track_id as usize, m.detection)).collect();
            prop_assert_eq!(got, direct);
        }
    }
}
