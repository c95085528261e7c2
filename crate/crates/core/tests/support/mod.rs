//! Exhaustive reference implementations for small inputs.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smalltrack::geometry::iou;
use smalltrack::mot::LabeledBox;
use smalltrack::BBox;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Counts {
    pub fp: usize,
    pub fn_: usize,
    pub idsw: usize,
}

fn by_frame<'a>(
    gt: &'a [LabeledBox],
    hyp: &'a [LabeledBox],
) -> BTreeMap<u64, (Vec<&'a LabeledBox>, Vec<&'a LabeledBox>)> {
    let mut frames: BTreeMap<u64, (Vec<&LabeledBox>, Vec<&LabeledBox>)> = BTreeMap::new();
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

/// Every partial matching of `gts` into `hyps` over admissible pairs; keeps
/// the one with most pairs, then least total `1 - iou`.
fn best_matching(cost: &[Vec<Option<f64>>]) -> Vec<(usize, usize)> {
    fn go(
        row: usize,
        cost: &[Vec<Option<f64>>],
        used: &mut Vec<bool>,
        cur: &mut Vec<(usize, usize)>,
        cur_cost: f64,
        best: &mut (usize, f64, Vec<(usize, usize)>),
    ) {
        if row == cost.len() {
            if cur.len() > best.0 || (cur.len() == best.0 && cur_cost < best.1) {
                *best = (cur.len(), cur_cost, cur.clone());
            }
            return;
        }
        go(row + 1, cost, used, cur, cur_cost, best);
        for c in 0..used.len() {
            if let (false, Some(v)) = (used[c], cost[row][c]) {
                used[c] = true;
                cur.push((row, c));
                go(row + 1, cost, used, cur, cur_cost + v, best);
                cur.pop();
                used[c] = false;
            }
        }
    }
    let cols = cost.first().map_or(0, |r| r.len());
    let mut best = (0, f64::INFINITY, Vec::new());
    go(0, cost, &mut vec![false; cols], &mut Vec::new(), 0.0, &mut best);
    best.2
}

/// CLEAR-MOT counts by enumeration. Pairs from the previous frame are kept
/// first (in GT id order) while still admissible.
pub fn brute_clear_mot(gt: &[LabeledBox], hyp: &[LabeledBox], thr: f64) -> Counts {
    let mut partner: HashMap<u64, u64> = HashMap::new();
    let mut out = Counts { fp: 0, fn_: 0, idsw: 0 };
    for (gts, hyps) in by_frame(gt, hyp).values() {
        let mut g_done = vec![false; gts.len()];
        let mut h_done = vec![false; hyps.len()];
        for (gi, g) in gts.iter().enumerate() {
            let Some(p) = partner.get(&g.id) else { continue };
            if let Some(hi) = hyps.iter().position(|h| h.id == *p) {
                if !h_done[hi] && iou(&g.bbox, &hyps[hi].bbox) >= thr {
                    g_done[gi] = true;
                    h_done[hi] = true;
                }
            }
        }
        let rg: Vec<usize> = (0..gts.len()).filter(|&i| !g_done[i]).collect();
        let rh: Vec<usize> = (0..hyps.len()).filter(|&i| !h_done[i]).collect();
        let cost: Vec<Vec<Option<f64>>> = rg
            .iter()
            .map(|&gi| {
                rh.iter()
                    .map(|&hi| {
                        let v = iou(&gts[gi].bbox, &hyps[hi].bbox);
                        (v >= thr).then_some(1.0 - v)
                    })
                    .collect()
            })
            .collect();
        for (r, c) in best_matching(&cost) {
            let (g, h) = (gts[rg[r]], hyps[rh[c]]);
            g_done[rg[r]] = true;
            h_done[rh[c]] = true;
            if partner.get(&g.id).is_some_and(|&p| p != h.id) {
                out.idsw += 1;
            }
            partner.insert(g.id, h.id);
        }
        out.fn_ += g_done.iter().filter(|d| !**d).count();
        out.fp += h_done.iter().filter(|d| !**d).count();
    }
    out
}

/// IDF1 by trying every injective assignment of GT ids to hypothesis ids.
pub fn brute_idf1(gt: &[LabeledBox], hyp: &[LabeledBox], thr: f64) -> f64 {
    let gids: Vec<u64> = gt.iter().map(|b| b.id).collect::<BTreeSet<_>>().into_iter().collect();
    let hids: Vec<u64> = hyp.iter().map(|b| b.id).collect::<BTreeSet<_>>().into_iter().collect();
    let mut overlap: HashMap<(u64, u64), usize> = HashMap::new();
    for (gts, hyps) in by_frame(gt, hyp).values() {
        for g in gts {
            for h in hyps {
                if iou(&g.bbox, &h.bbox) >= thr {
                    *overlap.entry((g.id, h.id)).or_default() += 1;
                }
            }
        }
    }
    fn go(i: usize, gids: &[u64], hids: &[u64], used: &mut Vec<bool>, ov: &HashMap<(u64, u64), usize>) -> usize {
        if i == gids.len() {
            return 0;
        }
        let mut best = go(i + 1, gids, hids, used, ov);
        for j in 0..hids.len() {
            if !used[j] {
                used[j] = true;
                let v = ov.get(&(gids[i], hids[j])).copied().unwrap_or(0) + go(i + 1, gids, hids, used, ov);
                best = best.max(v);
                used[j] = false;
            }
        }
        best
    }
    let idtp = go(0, &gids, &hids, &mut vec![false; hids.len()], &overlap);
    2.0 * idtp as f64 / (gt.len() + hyp.len()) as f64
}

/// Three ground-truth objects over `frames` frames and a noisy hypothesis
/// stream with misses, jitter, spurious boxes and label changes.
pub fn random_sequence(seed: u64, frames: u64) -> (Vec<LabeledBox>, Vec<LabeledBox>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos: Vec<(f64, f64)> = (0..3)
        .map(|_| (rng.random_range(0.0..60.0), rng.random_range(0.0..60.0)))
        .collect();
    let mut label: Vec<u64> = vec![1, 2, 3];
    let (mut gt, mut hyp) = (Vec::new(), Vec::new());
    for f in 1..=frames {
        let mut taken = BTreeSet::new();
        for k in 0..3 {
            pos[k].0 += rng.random_range(-4.0..4.0);
            pos[k].1 += rng.random_range(-4.0..4.0);
            if rng.random_bool(0.15) {
                continue;
            }
            let g = BBox::new(pos[k].0, pos[k].1, 10.0, 20.0).unwrap();
            gt.push(LabeledBox::new(f, k as u64 + 1, g));
            if rng.random_bool(0.1) {
                label[k] = rng.random_range(1..=5);
            }
            if rng.random_bool(0.2) || !taken.insert(label[k]) {
                continue;
            }
            let j = 3.0;
            let h = BBox::new(
                g.x() + rng.random_range(-j..j),
                g.y() + rng.random_range(-j..j),
                10.0 + rng.random_range(-2.0..2.0),
                20.0 + rng.random_range(-2.0..2.0),
            )
            .unwrap();
            hyp.push(LabeledBox::new(f, label[k], h));
        }
        if rng.random_bool(0.3) {
            let id = rng.random_range(6..=8);
            let b = BBox::new(rng.random_range(0.0..60.0), rng.random_range(0.0..60.0), 10.0, 20.0).unwrap();
            hyp.push(LabeledBox::new(f, id, b));
        }
    }
    (gt, hyp)
}
