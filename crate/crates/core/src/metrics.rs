//! CLEAR-MOT accounting and identification F1.
//!
//! Per frame, ground truth and hypotheses are paired by IoU. Pairings carried
//! over from earlier frames are kept when still admissible; the rest are
//! assigned optimally on `1 - IoU`. A ground-truth object whose partner
//! differs from its last partner counts as an identity switch.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use crate::assoc::{min_cost_assignment, solve_assignment, CostMatrix};
use crate::geometry::iou;
use crate::mot::LabeledBox;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClearMot {
    pub fp: usize,
    pub fn_: usize,
    pub idsw: usize,
    pub matches: usize,
    pub gt_total: usize,
    /// `1 - (fp + fn + idsw) / gt_total`; NaN when there is no ground truth.
    pub mota: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub fp: usize,
    pub fn_: usize,
    pub idsw: usize,
    pub mota: f64,
    pub idf1: f64,
    pub fps: f64,
    pub gt_total: usize,
    pub regions_mean: f64,
}

type FrameGroups<'a> = BTreeMap<u64, (Vec<&'a LabeledBox>, Vec<&'a LabeledBox>)>;

fn group_by_frame<'a>(gt: &'a [LabeledBox], hyp: &'a [LabeledBox]) -> FrameGroups<'a> {
    let mut frames: FrameGroups<'a> = BTreeMap::new();
    for g in gt {
        frames.entry(g.frame).or_default().0.push(g);
    }
    for h in hyp {
        frames.entry(h.frame).or_default().1.push(h);
    }
    for (g, h) in frames.values_mut() {
        g.sort_by_key(|b| b.id);
        h.sort_by_key(|b| b.id);
    }
    frames
}

pub fn clear_mot(gt: &[LabeledBox], hyp: &[LabeledBox], iou_threshold: f64) -> ClearMot {
    let mut last_partner: HashMap<u64, u64> = HashMap::new();
    let (mut fp, mut fn_, mut idsw, mut matches) = (0, 0, 0, 0);

    for (gts, hyps) in group_by_frame(gt, hyp).values() {
        let mut gt_used = vec![false; gts.len()];
        let mut hyp_used = vec![false; hyps.len()];

        for (gi, g) in gts.iter().enumerate() {
            let Some(&prev) = last_partner.get(&g.id) else { continue };
            if let Some(hi) = hyps.iter().position(|h| h.id == prev) {
                if !hyp_used[hi] && iou(&g.bbox, &hyps[hi].bbox) >= iou_threshold {
                    gt_used[gi] = true;
                    hyp_used[hi] = true;
                    matches += 1;
                }
            }
        }

        let open_g: Vec<usize> = (0..gts.len()).filter(|&i| !gt_used[i]).collect();
        let open_h: Vec<usize> = (0..hyps.len()).filter(|&i| !hyp_used[i]).collect();
        let cost = CostMatrix::from_fn(open_g.len(), open_h.len(), |r, c| {
            let v = iou(&gts[open_g[r]].bbox, &hyps[open_h[c]].bbox);
            if v >= iou_threshold {
                1.0 - v
            } else {
                f64::INFINITY
            }
        });
        for (r, c) in solve_assignment(&cost, f64::MAX) {
            let (g, h) = (gts[open_g[r]], hyps[open_h[c]]);
            gt_used[open_g[r]] = true;
            hyp_used[open_h[c]] = true;
            matches += 1;
            if last_partner.get(&g.id).is_some_and(|&p| p != h.id) {
                idsw += 1;
            }
            last_partner.insert(g.id, h.id);
        }

        fn_ += gt_used.iter().filter(|u| !**u).count();
        fp += hyp_used.iter().filter(|u| !**u).count();
    }

    let gt_total = gt.len();
    let mota = if gt_total == 0 {
        f64::NAN
    } else {
        1.0 - (fp + fn_ + idsw) as f64 / gt_total as f64
    };
    ClearMot {
        fp,
        fn_,
        idsw,
        matches,
        gt_total,
        mota,
    }
}

/// Identification F1 under the best one-to-one mapping of ground-truth ids
/// to hypothesis ids.
pub fn idf1(gt: &[LabeledBox], hyp: &[LabeledBox], iou_threshold: f64) -> f64 {
    if gt.is_empty() && hyp.is_empty() {
        return f64::NAN;
    }
    let gt_ids: Vec<u64> = gt.iter().map(|b| b.id).collect::<BTreeSet<_>>().into_iter().collect();
    let hyp_ids: Vec<u64> = hyp.iter().map(|b| b.id).collect::<BTreeSet<_>>().into_iter().collect();
    let gi: HashMap<u64, usize> = gt_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let hi: HashMap<u64, usize> = hyp_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();

    let mut overlap = vec![0usize; gt_ids.len() * hyp_ids.len()];
    for (gts, hyps) in group_by_frame(gt, hyp).values() {
        for g in gts {
            for h in hyps {
                if iou(&g.bbox, &h.bbox) >= iou_threshold {
                    overlap[gi[&g.id] * hyp_ids.len() + hi[&h.id]] += 1;
                }
            }
        }
    }
    let cost = CostMatrix::from_fn(gt_ids.len(), hyp_ids.len(), |r, c| {
        -(overlap[r * hyp_ids.len() + c] as f64)
    });
    let idtp: usize = min_cost_assignment(&cost)
        .into_iter()
        .map(|(r, c)| overlap[r * hyp_ids.len() + c])
        .sum();
    2.0 * idtp as f64 / (gt.len() + hyp.len()) as f64
}

pub fn evaluate(gt: &[LabeledBox], hyp: &[LabeledBox], iou_threshold: f64) -> EvalReport {
    let c = clear_mot(gt, hyp, iou_threshold);
    EvalReport {
        fp: c.fp,
        fn_: c.fn_,
        idsw: c.idsw,
        mota: c.mota,
        idf1: idf1(gt, hyp, iou_threshold),
        fps: f64::NAN,
        gt_total: c.gt_total,
        regions_mean: f64::NAN,
    }
}

impl EvalReport {
    pub const CSV_HEADER: &'static str = "scene,mota,idf1,fp,fn,idsw,fps,regions_mean";

    /// Raw ratios, one row.
    pub fn csv_row(&self, scene: &str) -> String {
        format!(
            "{scene},{},{},{},{},{},{},{}",
            self.mota, self.idf1, self.fp, self.fn_, self.idsw, self.fps, self.regions_mean
        )
    }
}

/// Aligned table with MOTA and IDF1 in percent.
pub struct ReportTable<'a> {
    pub rows: &'a [(String, EvalReport)],
    pub label: &'a str,
}

impl fmt::Display for ReportTable<'_> {
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
            "{:<w$} | {:>7} {:>6} {:>6} {:>6} {:>5} {:>8} {:>8}",
            self.label, "MOTA", "IDF1", "FP", "FN", "IDsw", "FPS", "regions"
        )?;
        writeln!(f, "{}", "-".repeat(w + 56))?;
        for (name, r) in self.rows {
            writeln!(
                f,
                "{:<w$} | {:>7.1} {:>6.1} {:>6} {:>6} {:>5} {:>8.1} {:>8.1}",
                name,
                100.0 * r.mota,
                100.0 * r.idf1,
                r.fp,
                r.fn_,
                r.idsw,
                r.fps,
                r.regions_mean
            )?;
        }
        Ok(())
    }
}
