//! Constant-velocity Kalman filter over box center and size.
//!
//! State is `(cx, cy, w, h, vcx, vcy, vw, vh)` in pixels and pixels/frame with
//! a fixed step of one frame. Noise magnitudes scale with the box height so
//! the filter behaves the same for 10 px and 100 px objects.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::geometry::BBox;

pub type StateVector = SVector<f64, 8>;
pub type StateCovariance = SMatrix<f64, 8, 8>;

type Measurement = SVector<f64, 4>;
type ObservationMatrix = SMatrix<f64, 4, 8>;

/// Smallest width/height a state or predicted box may take, in pixels.
const MIN_SIZE: f64 = 1.0;

/// Multiplier on `pos_std_factor` for the initial position uncertainty.
const INIT_POS_SCALE: f64 = 2.0;
/// Multiplier on `vel_std_factor` for the initial velocity uncertainty. Kept
/// loose so a freshly spawned track can lock onto a fast mover within a few frames.
const INIT_VEL_SCALE: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KalmanConfig {
    /// Position (and measurement) noise std as a fraction of box height.
    pub pos_std_factor: f64,
    /// Velocity process noise std as a fraction of box height.
    pub vel_std_factor: f64,
}

impl Default for KalmanConfig {
    fn default() -> Self {
        Self {
            pos_std_factor: 1.0 / 20.0,
            vel_std_factor: 1.0 / 160.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub mean: StateVector,
    pub covariance: StateCovariance,
    pub frames_since_update: u32,
}

impl KalmanState {
    /// Box at the current mean, with size floored at one pixel.
    pub fn bbox(&self) -> BBox {
        let m = &self.mean;
        BBox::from_center(m[0], m[1], m[2].max(MIN_SIZE), m[3].max(MIN_SIZE)).expect("state mean stays finite")
    }

    pub fn center(&self) -> (f64, f64) {
        (self.mean[0], self.mean[1])
    }

    pub fn velocity(&self) -> (f64, f64) {
        (self.mean[4], self.mean[5])
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct KalmanFilter {
    cfg: KalmanConfig,
}

fn measurement_of(b: &BBox) -> Measurement {
    let (cx, cy) = b.center();
    Measurement::new(cx, cy, b.w(), b.h())
}

fn observation() -> ObservationMatrix {
    ObservationMatrix::from_fn(|r, c| if r == c { 1.0 } else { 0.0 })
}

impl KalmanFilter {
    pub fn new(cfg: KalmanConfig) -> Self {
        Self { cfg }
    }

    pub fn config(&self) -> &KalmanConfig {
        &self.cfg
    }

    pub fn initiate(&self, det: &BBox) -> KalmanState {
        let z = measurement_of(det);
        let mut mean = StateVector::zeros();
        mean.fixed_rows_mut::<4>(0).copy_from(&z);
        let pos = INIT_POS_SCALE * self.cfg.pos_std_factor * det.h();
        let vel = INIT_VEL_SCALE * self.cfg.vel_std_factor * det.h();
        let mut diag = StateVector::zeros();
        for i in 0..4 {
            diag[i] = pos * pos;
            diag[i + 4] = vel * vel;
        }
        KalmanState {
            mean,
            covariance: StateCovariance::from_diagonal(&diag),
            frames_since_update: 0,
        }
    }

    /// Advances one frame. Returns the new state and its box.
    pub fn predict(&self, state: &KalmanState) -> (KalmanState, BBox) {
        let mut f = StateCovariance::identity();
        for i in 0..4 {
            f[(i, i + 4)] = 1.0;
        }
        let h = state.mean[3].max(MIN_SIZE);
        let pos = self.cfg.pos_std_factor * h;
        let vel = self.cfg.vel_std_factor * h;
        let mut q = StateVector::zeros();
        for i in 0..4 {
            q[i] = pos * pos;
            q[i + 4] = vel * vel;
        }
        let covariance = f * state.covariance * f.transpose() + StateCovariance::from_diagonal(&q);
        let next = KalmanState {
            mean: f * state.mean,
            covariance: symmetrize(covariance),
            frames_since_update: state.frames_since_update + 1,
        };
        let bbox = next.bbox();
        (next, bbox)
    }

    /// Corrects the state toward a measured box (Joseph-form covariance update).
    pub fn update(&self, state: &KalmanState, det: &BBox) -> KalmanState {
        let hm = observation();
        let r_std = self.cfg.pos_std_factor * state.mean[3].max(MIN_SIZE);
        let r = SMatrix::<f64, 4, 4>::from_diagonal_element(r_std * r_std);
        let p = &state.covariance;
        let s = hm * p * hm.transpose() + r;
        let s_inv = s
            .cholesky()
            .expect("innovation covariance is positive definite")
            .inverse();
        let gain = p * hm.transpose() * s_inv;
        let innovation = measurement_of(det) - hm * state.mean;
        let mut mean = state.mean + gain * innovation;
        mean[2] = mean[2].max(MIN_SIZE);
        mean[3] = mean[3].max(MIN_SIZE);
        let i_kh = StateCovariance::identity() - gain * hm;
        let covariance = i_kh * p * i_kh.transpose() + gain * r * gain.transpose();
        KalmanState {
            mean,
            covariance: symmetrize(covariance),
            frames_since_update: 0,
        }
    }
}

fn symmetrize(m: StateCovariance) -> StateCovariance {
    (m + m.transpose()) * 0.5
}
