//! Tracking-by-detection for small, fast objects in very large frames.

pub mod assoc;
pub mod config;
pub mod detect;
mod error;
pub mod experiment;
pub mod geometry;
pub mod motion;
pub mod slicing;

pub use error::{Error, Result};
pub use geometry::BBox;
pub mod metrics;
pub mod mot;
pub mod sim;
pub mod tracker;
