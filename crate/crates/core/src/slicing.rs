//! Sliding-window grid over the full frame and adaptive candidate-region sampling.
//!
//! The grid is the classic fixed-size, overlapping slice layout. The sampler
//! keeps only the slices that contain a track's predicted center (a few per
//! track) plus a small uniform draw from the whole grid so that new or
//! re-emerging objects can still be found.

use std::collections::BTreeSet;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::BBox;
use crate::{Error, Result};

/// One slice of the grid, the unit of detector invocation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub index: usize,
    pub bbox: BBox,
}

#[derive(Debug, Clone)]
pub struct SliceGrid {
    image_w: u32,
    image_h: u32,
    window_w: u32,
    window_h: u32,
    overlap: f64,
    x_starts: Vec<u32>,
    y_starts: Vec<u32>,
    regions: Vec<Region>,
}

/// Window start positions along one axis: multiples of the stride, plus one
/// final window flush with the far edge when the stride-aligned ones stop short.
fn axis_starts(extent: u32, window: u32, overlap: f64) -> Vec<u32> {
    let stride = ((window as f64 * (1.0 - overlap)).floor() as u32).max(1);
    let last = extent - window;
    let mut starts: Vec<u32> = (0..).map(|k| k * stride).take_while(|&s| s <= last).collect();
    if *starts.last().expect("0 is always a start") != last {
        starts.push(last);
    }
    starts
}

impl SliceGrid {
    pub fn new(image_w: u32, image_h: u32, window_w: u32, window_h: u32, overlap: f64) -> Result<Self> {
        if window_w == 0 || window_h == 0 {
            return Err(Error::InvalidGrid("window must be non-empty".into()));
        }
        if window_w > image_w || window_h > image_h {
            return Err(Error::InvalidGrid(format!(
                "window {window_w}x{window_h} larger than image {image_w}x{image_h}"
            )));
        }
        if !(0.0..1.0).contains(&overlap) {
            return Err(Error::InvalidGrid(format!("overlap {overlap} outside [0, 1)")));
        }
        let x_starts = axis_starts(image_w, window_w, overlap);
        let y_starts = axis_starts(image_h, window_h, overlap);
        let mut regions = Vec::with_capacity(x_starts.len() * y_starts.len());
        for &y in &y_starts {
            for &x in &x_starts {
                let bbox = BBox::new(x as f64, y as f64, window_w as f64, window_h as f64)?;
                regions.push(Region {
                    index: regions.len(),
                    bbox,
                });
            }
        }
        Ok(Self {
            image_w,
            image_h,
            window_w,
            window_h,
            overlap,
            x_starts,
            y_starts,
            regions,
        })
    }

    pub fn image_size(&self) -> (u32, u32) {
        (self.image_w, self.image_h)
    }

    pub fn window_size(&self) -> (u32, u32) {
        (self.window_w, self.window_h)
    }

    pub fn overlap(&self) -> f64 {
        self.overlap
    }

    /// Row-major by y start, then x start.
    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    /// Clamps a point into the frame, just inside the exclusive right/bottom edges.
    pub fn clamp_point(&self, x: f64, y: f64) -> (f64, f64) {
        let max_x = (self.image_w as f64).next_down();
        let max_y = (self.image_h as f64).next_down();
        (x.clamp(0.0, max_x), y.clamp(0.0, max_y))
    }

    /// All regions whose extent contains the point. Empty for out-of-frame points.
    pub fn regions_containing(&self, x: f64, y: f64) -> Vec<Region> {
        if !(x >= 0.0 && y >= 0.0 && x < self.image_w as f64 && y < self.image_h as f64) {
            return Vec::new();
        }
        let cols: Vec<usize> = covering(&self.x_starts, self.window_w, x);
        let rows: Vec<usize> = covering(&self.y_starts, self.window_h, y);
        let n_cols = self.x_starts.len();
        rows.iter()
            .flat_map(|&r| cols.iter().map(move |&c| r * n_cols + c))
            .map(|i| self.regions[i])
            .collect()
    }
}

impl SliceGrid {
    /// Regions that hold the whole box; edges may touch.
    pub fn regions_enclosing(&self, bbox: &BBox) -> Vec<Region> {
        let n_cols = self.x_starts.len();
        let cols: Vec<usize> = enclosing(&self.x_starts, self.window_w, bbox.x(), bbox.right());
        let rows: Vec<usize> = enclosing(&self.y_starts, self.window_h, bbox.y(), bbox.bottom());
        rows.iter()
            .flat_map(|&r| cols.iter().map(move |&c| r * n_cols + c))
            .map(|i| self.regions[i])
            .collect()
    }

    /// Sampling candidates for one predicted box: the regions enclosing it,
    /// or, when none does, the regions containing its (clamped) center.
    pub fn candidates_for(&self, predicted: &BBox) -> Vec<Region> {
        let enclosing = self.regions_enclosing(predicted);
        if !enclosing.is_empty() {
            return enclosing;
        }
        let (cx, cy) = predicted.center();
        let (cx, cy) = self.clamp_point(cx, cy);
        self.regions_containing(cx, cy)
    }
}

fn enclosing(starts: &[u32], window: u32, lo: f64, hi: f64) -> Vec<usize> {
    starts
        .iter()
        .enumerate()
        .filter(|&(_, &s)| lo >= s as f64 && hi <= (s + window) as f64)
        .map(|(i, _)| i)
        .collect()
}

fn covering(starts: &[u32], window: u32, p: f64) -> Vec<usize> {
    starts
        .iter()
        .enumerate()
        .filter(|&(_, &s)| p >= s as f64 && p < (s + window) as f64)
        .map(|(i, _)| i)
        .collect()
}

/// Slice geometry; the frame size comes from the scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SliceConfig {
    pub window: [u32; 2],
    pub overlap: f64,
}

impl Default for SliceConfig {
    fn default() -> Self {
        Self {
            window: [256, 128],
            overlap: 0.25,
        }
    }
}

impl SliceConfig {
    pub fn grid(&self, image_w: u32, image_h: u32) -> Result<SliceGrid> {
        SliceGrid::new(image_w, image_h, self.window[0], self.window[1], self.overlap)
    }
}

/// How candidate regions are chosen each frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerMode {
    /// Per-track containing regions plus a uniform discovery draw.
    Adaptive,
    /// Every region, every frame (plain sliding-window inference).
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub mode: SamplerMode,
    #[serde(rename = "per_track")]
    pub per_track_samples: usize,
    #[serde(rename = "uniform")]
    pub uniform_samples: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            mode: SamplerMode::Adaptive,
            per_track_samples: 2,
            uniform_samples: 5,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn full_grid() -> Self {
        Self {
            mode: SamplerMode::Full,
            ..Self::default()
        }
    }
}

/// Samples candidate regions for one frame.
///
/// For each predicted box, up to `per_track_samples` regions are drawn
/// without replacement from [`SliceGrid::candidates_for`]; then
/// `uniform_samples` regions are drawn without replacement from the whole
/// grid. Draws happen in that fixed order. The result is deduplicated and
/// sorted by region index.
pub fn adaptive_sample<R: Rng + ?Sized>(
    grid: &SliceGrid,
    predicted: &[BBox],
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Vec<Region> {
    if cfg.mode == SamplerMode::Full || cfg.uniform_samples >= grid.len() {
        return grid.regions().to_vec();
    }
    let mut chosen = BTreeSet::new();
    for b in predicted {
        let containing = grid.candidates_for(b);
        let take = cfg.per_track_samples.min(containing.len());
        for i in index::sample(rng, containing.len(), take) {
            chosen.insert(containing[i].index);
        }
    }
    for i in index::sample(rng, grid.len(), cfg.uniform_samples) {
        chosen.insert(i);
    }
    chosen.into_iter().map(|i| grid.regions()[i]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn default_grid() -> SliceGrid {
        SliceGrid::new(4096, 2048, 256, 128, 0.25).unwrap()
    }

    #[test]
    fn panorama_grid_has_441_regions() {
        let g = default_grid();
        assert_eq!(g.len(), 441);
        assert_eq!(g.x_starts.len(), 21);
        assert_eq!(g.y_starts.len(), 21);
        assert_eq!(*g.x_starts.last().unwrap(), 3840);
        assert_eq!(g.regions()[1].bbox.x(), 192.0);
    }

    #[test]
    fn window_equal_to_frame_gives_one_region() {
        for overlap in [0.0, 0.25, 0.9] {
            assert_eq!(SliceGrid::new(640, 320, 640, 320, overlap).unwrap().len(), 1);
        }
    }

    #[test]
    fn flush_window_appended() {
        let g = SliceGrid::new(512, 128, 256, 128, 0.25).unwrap();
        assert_eq!(g.x_starts, vec![0, 192, 256]);
        assert_eq!(g.len(), 3);
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(SliceGrid::new(100, 100, 200, 50, 0.1).is_err());
        assert!(SliceGrid::new(100, 100, 50, 50, 1.0).is_err());
        assert!(SliceGrid::new(100, 100, 50, 50, -0.1).is_err());
    }

    #[test]
    fn containing_examples() {
        let g = default_grid();
        let one = g.regions_containing(100.0, 60.0);
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].index, 0);
        let four = g.regions_containing(200.0, 100.0);
        let starts: Vec<(f64, f64)> = four.iter().map(|r| (r.bbox.x(), r.bbox.y())).collect();
        assert_eq!(starts, vec![(0.0, 0.0), (192.0, 0.0), (0.0, 96.0), (192.0, 96.0)]);
        assert_eq!(g.regions_containing(0.0, 0.0).len(), 1);
        assert!(g.regions_containing(-1.0, 5.0).is_empty());
        assert!(g.regions_containing(4096.0, 5.0).is_empty());
    }

    #[test]
    fn sampler_edge_cases() {
        let g = default_grid();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let none = SamplerConfig {
            uniform_samples: 0,
            ..Default::default()
        };
        assert!(adaptive_sample(&g, &[], &none, &mut rng).is_empty());
        let all = SamplerConfig {
            uniform_samples: g.len(),
            ..Default::default()
        };
        assert_eq!(adaptive_sample(&g, &[], &all, &mut rng).len(), 441);
        let centers: Vec<BBox> = [
            (100.0, 60.0),
            (200.0, 100.0),
            (2000.0, 1000.0),
            (4000.0, 2000.0),
            (3000.0, 50.0),
        ]
        .iter()
        .map(|&(x, y)| BBox::from_center(x, y, 10.0, 20.0).unwrap())
        .collect();
        let out = adaptive_sample(&g, &centers, &SamplerConfig::default(), &mut rng);
        assert!(out.len() <= 15);
        assert!(1.0 - out.len() as f64 / 441.0 >= 0.966);
    }

    #[test]
    fn sampled_regions_enclose_the_prediction() {
        let g = default_grid();
        let cfg = SamplerConfig {
            uniform_samples: 0,
            per_track_samples: 4,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pred = BBox::from_center(220.0, 110.0, 10.0, 20.0).unwrap();
        let out = adaptive_sample(&g, &[pred], &cfg, &mut rng);
        assert_eq!(out.len(), 4);
        assert!(out.iter().all(|r| r.bbox.contains_box(&pred)));
        // center at x=253 is inside window 0 but the box crosses its edge
        let edge = BBox::from_center(253.0, 60.0, 10.0, 20.0).unwrap();
        let out = adaptive_sample(&g, &[edge], &cfg, &mut rng);
        assert_eq!(out.iter().map(|r| r.index).collect::<Vec<_>>(), vec![1]);
    }

    #[test]
    fn oversized_prediction_falls_back_to_center() {
        let g = default_grid();
        let big = BBox::from_center(200.0, 100.0, 300.0, 300.0).unwrap();
        assert!(g.regions_enclosing(&big).is_empty());
        assert_eq!(g.candidates_for(&big).len(), 4);
        let outside = BBox::from_center(-50.0, -50.0, 10.0, 20.0).unwrap();
        assert_eq!(
            g.candidates_for(&outside).iter().map(|r| r.index).collect::<Vec<_>>(),
            vec![0]
        );
    }

    #[test]
    fn small_boxes_always_have_an_enclosing_region() {
        let g = default_grid();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5000 {
            let x = rng.random_range(0.0..4086.0);
            let y = rng.random_range(0.0..2028.0);
            assert!(!g.regions_enclosing(&BBox::new(x, y, 10.0, 20.0).unwrap()).is_empty());
        }
    }

    proptest! {
        #[test]
        fn grid_covers_every_pixel(
            w in 8u32..300, h in 8u32..200, fw in 0.05..1.0f64, fh in 0.05..1.0f64, overlap in 0.0..0.95f64
        ) {
            let ww = ((w as f64 * fw) as u32).max(1);
            let wh = ((h as f64 * fh) as u32).max(1);
            let g = SliceGrid::new(w, h, ww, wh, overlap).unwrap();
            for r in g.regions() {
                prop_assert!(r.bbox.right() <= w as f64 && r.bbox.bottom() <= h as f64);
            }
            for py in (0..h).step_by(3) {
                for px in 0..w {
                    prop_assert!(!g.regions_containing(px as f64 + 0.5, py as f64 + 0.5).is_empty());
                }
            }
        }

        #[test]
        fn containing_matches_membership(px in 0.0..4096.0f64, py in 0.0..2048.0f64) {
            let g = default_grid();
            let fast: Vec<usize> = g.regions_containing(px, py).iter().map(|r| r.index).collect();
            let slow: Vec<usize> = g.regions().iter().filter(|r| r.bbox.contains_point(px, py)).map(|r| r.index).collect();
            prop_assert_eq!(fast, slow);
        }

        #[test]
        fn sample_is_bounded_subset_and_deterministic(
            centers in proptest::collection::vec((0.0..4096.0f64, 0.0..2048.0f64, 1.0..400.0f64), 0..8),
            per_track in 0usize..5, uniform in 0usize..20, seed in any::<u64>()
        ) {
            let g = default_grid();
            let centers: Vec<BBox> = centers.iter().map(|&(x, y, s)| BBox::from_center(x, y, s, s / 2.0).unwrap()).collect();
            let cfg = SamplerConfig { per_track_samples: per_track, uniform_samples: uniform, ..Default::default() };
            let a = adaptive_sample(&g, &centers, &cfg, &mut ChaCha8Rng::seed_from_u64(seed));
            let b = adaptive_sample(&g, &centers, &cfg, &mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(&a, &b);
            prop_assert!(a.len() <= per_track * centers.len() + uniform);
            for r in &a {
                prop_assert_eq!(g.regions()[r.index], *r);
            }
        }
    }
}
