//! Synthetic panoramic scenes with ground truth, and a noisy oracle detector.
//!
//! Birds follow piecewise-linear flights between perches. Two scenario
//! families exercise the association failure modes:
//!
//! * `crossing`: birds are paired and repeatedly fly straight through a
//!   shared point at the same frame, on different headings.
//! * `shelter`: some birds fly straight into a shelter entrance at speed,
//!   stay hidden for a fixed number of frames and reappear at the entrance.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::detect::{Detection, DetectorPort, Embedding, ReplayDetector};
use crate::geometry::BBox;
use crate::mot::LabeledBox;
use crate::slicing::Region;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Crossing,
    Shelter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    pub frame_w: u32,
    pub frame_h: u32,
    pub n_birds: usize,
    pub bird_w: f64,
    pub bird_h: f64,
    /// Hard cap on per-frame displacement.
    pub max_speed: f64,
    /// Range flight speeds are drawn from, px/frame.
    pub cruise_speed: [f64; 2],
    /// Range of perching durations between flights, frames.
    pub dwell_frames: [u32; 2],
    pub n_frames: u64,
    /// Shelter entrance, frame pixels.
    pub shelter: [f64; 2],
    /// Frames a sheltering bird stays hidden.
    pub occlusion_frames: u64,
    pub n_sheltering: usize,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioKind::Shelter,
            frame_w: 4096,
            frame_h: 2048,
            n_birds: 5,
            bird_w: 10.0,
            bird_h: 20.0,
            max_speed: 20.0,
            cruise_speed: [4.0, 9.0],
            dwell_frames: [5, 40],
            n_frames: 500,
            shelter: [2048.0, 1024.0],
            occlusion_frames: 30,
            n_sheltering: 2,
            seed: 0,
        }
    }
}

/// One hidden interval of a sheltering bird.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Occlusion {
    pub id: u64,
    /// Last frame the bird is visible before entering.
    pub enter_frame: u64,
    /// First frame the bird is visible again.
    pub exit_frame: u64,
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub config: ScenarioConfig,
    /// Sorted by frame, then id. Ids start at 1.
    pub ground_truth: Vec<LabeledBox>,
    pub occlusions: Vec<Occlusion>,
}

impl Scene {
    pub fn frame(&self, frame: u64) -> &[LabeledBox] {
        let lo = self.ground_truth.partition_point(|b| b.frame < frame);
        let hi = self.ground_truth.partition_point(|b| b.frame <= frame);
        &self.ground_truth[lo..hi]
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Scenario(m));
        if !(self.bird_w > 0.0 && self.bird_h > 0.0) {
            return err("bird size must be positive".into());
        }
        if self.max_speed.is_nan() || self.max_speed < 0.0 {
            return err(format!("max_speed {} must be non-negative", self.max_speed));
        }
        let [lo, hi] = self.cruise_speed;
        if !(lo > 0.0 && lo <= hi && hi <= self.max_speed) {
            return err(format!(
                "cruise_speed [{lo}, {hi}] must satisfy 0 < lo <= hi <= max_speed"
            ));
        }
        if self.dwell_frames[0] > self.dwell_frames[1] {
            return err("dwell_frames range is reversed".into());
        }
        let margin = self.margin();
        if self.frame_w as f64 <= 2.0 * margin || self.frame_h as f64 <= 2.0 * margin {
            return err(format!(
                "frame {}x{} too small for flight margin {margin}",
                self.frame_w, self.frame_h
            ));
        }
        let [sx, sy] = self.shelter;
        let half = (self.bird_w.max(self.bird_h)) / 2.0;
        if !(sx - half >= 0.0
            && sy - half >= 0.0
            && sx + half <= self.frame_w as f64
            && sy + half <= self.frame_h as f64)
        {
            return err(format!(
                "shelter ({sx}, {sy}) outside the {}x{} frame",
                self.frame_w, self.frame_h
            ));
        }
        Ok(())
    }

    /// Clearance kept between flight waypoints and the frame border.
    fn margin(&self) -> f64 {
        self.cruise_speed[1] * CROSS_HALF_FRAMES[1] as f64 + self.bird_w.max(self.bird_h)
    }
}

/// Frames from the start of a crossing leg to the meeting point.
const CROSS_HALF_FRAMES: [u64; 2] = [20, 35];
/// Frames of straight, constant-speed flight into the shelter.
const APPROACH_FRAMES: u64 = 32;
/// Frames between one bird's exit and the next bird's entry.
const SHELTER_SPACING: u64 = 60;

/// Frames spent accelerating from a perch to cruise speed, and braking back.
const RAMP_FRAMES: u64 = 16;

/// One flight segment ending at a keyframe.
#[derive(Clone, Copy)]
struct Key {
    t: u64,
    p: (f64, f64),
    ramp_in: bool,
    ramp_out: bool,
}

/// Keyframed path; each segment follows a trapezoidal speed profile.
struct Path {
    keys: Vec<Key>,
}

impl Path {
    fn start(t: u64, p: (f64, f64)) -> Self {
        Self {
            keys: vec![Key {
                t,
                p,
                ramp_in: false,
                ramp_out: false,
            }],
        }
    }

    fn now(&self) -> u64 {
        self.keys.last().unwrap().t
    }

    fn here(&self) -> (f64, f64) {
        self.keys.last().unwrap().p
    }

    fn push(&mut self, frames: u64, p: (f64, f64), ramp_in: bool, ramp_out: bool) {
        let t = self.now() + frames;
        self.keys.push(Key {
            t,
            p,
            ramp_in,
            ramp_out,
        });
    }

    fn dwell(&mut self, frames: u64) {
        let p = self.here();
        self.push(frames, p, false, false);
    }

    fn dwell_until(&mut self, t: u64) {
        if t > self.now() {
            self.dwell(t - self.now());
        }
    }

    /// Takeoff to landing in exactly `frames` frames.
    fn fly_for(&mut self, q: (f64, f64), frames: u64, ramp_in: bool, ramp_out: bool) {
        self.push(frames.max(1), q, ramp_in, ramp_out);
    }

    /// Perch-to-perch flight peaking at `speed`.
    fn fly_to(&mut self, q: (f64, f64), speed: f64) {
        let frames = ((dist(self.here(), q) / speed).ceil() as u64 + RAMP_FRAMES).max(1);
        self.fly_for(q, frames, true, true);
    }

    fn at(&self, t: u64) -> (f64, f64) {
        let i = self.keys.partition_point(|k| k.t <= t);
        if i == 0 {
            return self.keys[0].p;
        }
        if i == self.keys.len() {
            return self.keys[i - 1].p;
        }
        let (k0, k1) = (self.keys[i - 1], self.keys[i]);
        let u = progress((t - k0.t) as f64, (k1.t - k0.t) as f64, k1.ramp_in, k1.ramp_out);
        (k0.p.0 + u * (k1.p.0 - k0.p.0), k0.p.1 + u * (k1.p.1 - k0.p.1))
    }
}

/// Fraction of a segment covered after `tau` of `n` frames.
fn progress(tau: f64, n: f64, ramp_in: bool, ramp_out: bool) -> f64 {
    let r = (RAMP_FRAMES as f64).min(n / 2.0);
    let ri = if ramp_in { r } else { 0.0 };
    let ro = if ramp_out { r } else { 0.0 };
    let v = 1.0 / (n - (ri + ro) / 2.0);
    if tau < ri {
        v * tau * tau / (2.0 * ri)
    } else if tau <= n - ro {
        v * (ri / 2.0 + tau - ri)
    } else {
        1.0 - v * (n - tau).powi(2) / (2.0 * ro)
    }
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

fn flight_frames(a: (f64, f64), b: (f64, f64), speed: f64) -> u64 {
    ((dist(a, b) / speed).ceil() as u64 + RAMP_FRAMES).max(1)
}

struct Planner<'a> {
    cfg: &'a ScenarioConfig,
    rng: ChaCha8Rng,
}

impl Planner<'_> {
    fn speed(&mut self) -> f64 {
        let [lo, hi] = self.cfg.cruise_speed;
        if hi > lo {
            self.rng.random_range(lo..=hi)
        } else {
            lo
        }
    }

    fn dwell_len(&mut self) -> u64 {
        let [lo, hi] = self.cfg.dwell_frames;
        self.rng.random_range(lo..=hi) as u64
    }

    fn point(&mut self) -> (f64, f64) {
        let m = self.cfg.margin();
        (
            self.rng.random_range(m..self.cfg.frame_w as f64 - m),
            self.rng.random_range(m..self.cfg.frame_h as f64 - m),
        )
    }

    /// A perch 100-600 px away from `from`, kept inside the margins.
    fn nearby(&mut self, from: (f64, f64)) -> (f64, f64) {
        let m = self.cfg.margin();
        let r = self.rng.random_range(100.0..600.0);
        let a = self.rng.random_range(0.0..std::f64::consts::TAU);
        (
            (from.0 + r * a.cos()).clamp(m, self.cfg.frame_w as f64 - m),
            (from.1 + r * a.sin()).clamp(m, self.cfg.frame_h as f64 - m),
        )
    }

    /// A point between `r/2` and `r` px from `from`, kept inside the margins.
    fn around(&mut self, from: (f64, f64), r: f64) -> (f64, f64) {
        let m = self.cfg.margin();
        let d = if r > 0.0 {
            self.rng.random_range(r / 2.0..=r)
        } else {
            0.0
        };
        let a = self.rng.random_range(0.0..std::f64::consts::TAU);
        (
            (from.0 + d * a.cos()).clamp(m, self.cfg.frame_w as f64 - m),
            (from.1 + d * a.sin()).clamp(m, self.cfg.frame_h as f64 - m),
        )
    }

    fn wander_until(&mut self, path: &mut Path, end: u64) {
        while path.now() < end {
            let d = self.dwell_len();
            path.dwell(d);
            let q = self.nearby(path.here());
            let s = self.speed();
            path.fly_to(q, s);
        }
    }

    /// Two birds repeatedly crossing through a shared point at the same frame.
    fn crossing_pair(&mut self, a: &mut Path, b: &mut Path, end: u64) {
        while a.now() < end || b.now() < end {
            let (pa, pb) = (a.here(), b.here());
            let m = self.nearby(((pa.0 + pb.0) / 2.0, (pa.1 + pb.1) / 2.0));
            let half = self.rng.random_range(CROSS_HALF_FRAMES[0]..=CROSS_HALF_FRAMES[1]);
            let heading = self.rng.random_range(0.0..std::f64::consts::TAU);
            let turn = self
                .rng
                .random_range(std::f64::consts::FRAC_PI_3..2.0 * std::f64::consts::FRAC_PI_3);
            let sign = if self.rng.random::<bool>() { 1.0 } else { -1.0 };
            let legs = [heading, heading + sign * turn].map(|h| {
                let s = self.speed();
                // peak speed stays at `s` once the ramps are accounted for
                let reach = s * (half as f64 - RAMP_FRAMES as f64 / 2.0);
                let dir = (h.cos(), h.sin());
                (
                    (m.0 - reach * dir.0, m.1 - reach * dir.1),
                    (m.0 + reach * dir.0, m.1 + reach * dir.1),
                )
            });
            for (path, (from, _)) in [&mut *a, &mut *b].into_iter().zip(&legs) {
                let s = self.speed();
                path.fly_to(*from, s);
            }
            let start = a.now().max(b.now()) + 2;
            for (path, (_, to)) in [&mut *a, &mut *b].into_iter().zip(&legs) {
                path.dwell_until(start);
                // symmetric profile: both birds pass `m` after exactly `half` frames
                path.fly_for(*to, 2 * half, true, true);
                let d = self.dwell_len();
                path.dwell(d);
            }
        }
    }
}

pub fn generate_scene(cfg: &ScenarioConfig) -> Result<Scene> {
    cfg.validate()?;
    let end = cfg.n_frames + 1;
    let mut planner = Planner {
        cfg,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
    };
    let mut paths: Vec<Path> = Vec::with_capacity(cfg.n_birds);
    let mut hidden: Vec<Occlusion> = Vec::new();

    match cfg.scenario {
        ScenarioKind::Crossing => {
            for i in 0..cfg.n_birds {
                let p = if i % 2 == 1 {
                    planner.nearby(paths[i - 1].here())
                } else {
                    planner.point()
                };
                paths.push(Path::start(1, p));
            }
            for pair in 0..cfg.n_birds / 2 {
                let (head, tail) = paths.split_at_mut(2 * pair + 1);
                planner.crossing_pair(&mut head[2 * pair], &mut tail[0], end);
            }
            if cfg.n_birds % 2 == 1 {
                planner.wander_until(paths.last_mut().unwrap(), end);
            }
        }
        ScenarioKind::Shelter => {
            let entrance = (cfg.shelter[0], cfg.shelter[1]);
            let n_shelter = cfg.n_sheltering.min(cfg.n_birds);
            for i in 0..cfg.n_birds {
                if i >= n_shelter {
                    let p = planner.point();
                    let mut path = Path::start(1, p);
                    planner.wander_until(&mut path, end);
                    paths.push(path);
                    continue;
                }
                let enter = APPROACH_FRAMES + 30 + i as u64 * (cfg.occlusion_frames + SHELTER_SPACING);
                let exit = enter + cfg.occlusion_frames + 1;
                let s = planner.speed();
                let a = planner.rng.random_range(0.0..std::f64::consts::TAU);
                let reach = s * (APPROACH_FRAMES as f64 - RAMP_FRAMES as f64 / 2.0);
                let m = cfg.margin();
                let approach = (
                    (entrance.0 - reach * a.cos()).clamp(m, cfg.frame_w as f64 - m),
                    (entrance.1 - reach * a.sin()).clamp(m, cfg.frame_h as f64 - m),
                );
                let launch = enter - APPROACH_FRAMES;
                // start close enough to reach the approach point at cruise speed
                let hop_speed = planner.speed();
                let budget = launch.saturating_sub(1);
                let max_r = (budget.saturating_sub(RAMP_FRAMES + 10) as f64 * hop_speed).min(600.0);
                let start = planner.around(approach, max_r);
                let mut path = Path::start(1, start);
                path.dwell(budget.saturating_sub(flight_frames(start, approach, hop_speed)));
                path.fly_to(approach, hop_speed);
                path.dwell_until(launch);
                path.fly_for(entrance, APPROACH_FRAMES, true, false);
                path.dwell_until(exit);
                let d = planner.rng.random_range(3..=8);
                path.dwell(d);
                planner.wander_until(&mut path, end);
                if exit <= cfg.n_frames {
                    hidden.push(Occlusion {
                        id: i as u64 + 1,
                        enter_frame: enter,
                        exit_frame: exit,
                    });
                }
                paths.push(path);
            }
        }
    }

    let mut ground_truth = Vec::new();
    for frame in 1..=cfg.n_frames {
        for (i, path) in paths.iter().enumerate() {
            let id = i as u64 + 1;
            if hidden
                .iter()
                .any(|o| o.id == id && frame > o.enter_frame && frame < o.exit_frame)
            {
                continue;
            }
            let (cx, cy) = path.at(frame);
            ground_truth.push(LabeledBox::new(
                frame,
                id,
                BBox::from_center(cx, cy, cfg.bird_w, cfg.bird_h)?,
            ));
        }
    }
    Ok(Scene {
        config: cfg.clone(),
        ground_truth,
        occlusions: hidden,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub miss_rate: f64,
    /// Expected spurious boxes per frame.
    pub fp_rate: f64,
    /// Gaussian std on each box coordinate, px.
    pub jitter_std: f64,
    /// Appearance feature dimension; 0 disables embeddings.
    pub embed_dim: usize,
    pub embed_noise_std: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            miss_rate: 0.0,
            fp_rate: 0.0,
            jitter_std: 0.0,
            embed_dim: 16,
            embed_noise_std: 0.3,
            seed: 0,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..1.0).contains(&self.miss_rate)
            && self.fp_rate >= 0.0
            && self.jitter_std >= 0.0
            && self.embed_noise_std >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid noise settings {self:?}")))
        }
    }
}

/// Fixed unit vector per identity, independent of draw order.
#[derive(Debug, Clone)]
pub struct IdentityAnchors {
    dim: usize,
    seed: u64,
}

impl IdentityAnchors {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self { dim, seed }
    }

    pub fn anchor(&self, id: u64) -> Embedding {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ id.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        random_unit(&mut rng, self.dim)
    }
}

fn random_unit<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Embedding {
    let normal = Normal::new(0.0, 1.0).unwrap();
    loop {
        let v: Vec<f64> = (0..dim).map(|_| normal.sample(rng)).collect();
        if let Ok(e) = Embedding::normalized(v) {
            return e;
        }
    }
}

/// Turns one frame of ground truth into detections.
///
/// Each box is dropped with `miss_rate`; survivors are jittered per
/// coordinate and carry `normalize(anchor + noise)` as embedding. A Poisson
/// number of bird-sized spurious boxes is scattered uniformly.
pub fn oracle_detect<R: Rng + ?Sized>(
    gt_frame: &[LabeledBox],
    noise: &NoiseConfig,
    anchors: &IdentityAnchors,
    frame_size: (u32, u32),
    rng: &mut R,
) -> Vec<Detection> {
    let (fw, fh) = (frame_size.0 as f64, frame_size.1 as f64);
    let jitter = Normal::new(0.0, noise.jitter_std).unwrap();
    let embed_noise = Normal::new(0.0, noise.embed_noise_std).unwrap();
    let fit = |x: f64, y: f64, w: f64, h: f64| -> BBox {
        let w = w.clamp(1.0, fw);
        let h = h.clamp(1.0, fh);
        BBox::new(x.clamp(0.0, fw - w), y.clamp(0.0, fh - h), w, h).expect("clamped box is valid")
    };
    let mut out = Vec::with_capacity(gt_frame.len());
    for b in gt_frame {
        if noise.miss_rate > 0.0 && rng.random::<f64>() < noise.miss_rate {
            continue;
        }
        let bbox = if noise.jitter_std > 0.0 {
            let mut j = || jitter.sample(rng);
            fit(b.bbox.x() + j(), b.bbox.y() + j(), b.bbox.w() + j(), b.bbox.h() + j())
        } else {
            b.bbox
        };
        let mut det = Detection::new(bbox, 1.0);
        if noise.embed_dim > 0 {
            let anchor = anchors.anchor(b.id);
            let v: Vec<f64> = anchor.as_slice().iter().map(|a| a + embed_noise.sample(rng)).collect();
            det.embedding = Some(Embedding::normalized(v).unwrap_or(anchor));
        }
        out.push(det);
    }
    if noise.fp_rate > 0.0 {
        let count = Poisson::new(noise.fp_rate).unwrap().sample(rng) as usize;
        // bird-sized: take sizes from the frame's real boxes when available
        for _ in 0..count {
            let (w, h) = match gt_frame.len() {
                0 => (10.0, 20.0),
                n => {
                    let b = &gt_frame[rng.random_range(0..n)].bbox;
                    (b.w(), b.h())
                }
            };
            let s = rng.random_range(0.8..1.2);
            let (w, h) = (w * s, h * s);
            let x = rng.random_range(0.0..(fw - w).max(1.0));
            let y = rng.random_range(0.0..(fh - h).max(1.0));
            let mut det = Detection::new(fit(x, y, w, h), rng.random_range(0.3..0.9));
            if noise.embed_dim > 0 {
                det.embedding = Some(random_unit(rng, noise.embed_dim));
            }
            out.push(det);
        }
    }
    out
}

/// Detector port backed by simulated ground truth. All frames are drawn up
/// front from one seeded stream, so results do not depend on which regions
/// are queried.
#[derive(Debug, Clone)]
pub struct OracleDetector {
    replay: ReplayDetector,
}

impl OracleDetector {
    pub fn new(scene: &Scene, noise: &NoiseConfig) -> Result<Self> {
        noise.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
        let anchors = IdentityAnchors::new(noise.embed_dim, noise.seed.wrapping_add(0x5EED));
        let size = (scene.config.frame_w, scene.config.frame_h);
        let mut frames = BTreeMap::new();
        for f in 1..=scene.config.n_frames {
            frames.insert(f, oracle_detect(scene.frame(f), noise, &anchors, size, &mut rng));
        }
        Ok(Self {
            replay: ReplayDetector::new(frames, noise.embed_dim),
        })
    }

    pub fn replay(&self) -> &ReplayDetector {
        &self.replay
    }

    pub fn into_replay(self) -> ReplayDetector {
        self.replay
    }
}

impl DetectorPort for OracleDetector {
    fn detect(&self, region: &Region, frame_id: u64) -> Vec<Detection> {
        self.replay.detect(region, frame_id)
    }
}
