//! Adversarial bounding-box attacks against a differentiable single-object
//! tracker, with the synthetic data and evaluation metrics to measure them.

pub mod attack;
pub mod data;
pub mod error;
pub mod geometry;
pub mod gradcheck;
pub mod image;
pub mod metrics;
pub mod runner;
pub mod tracker;

pub use error::{Error, Result};
pub use geometry::{AdversarialBoxBatch, BoundingBox, BoxGenConfig};
pub use image::Image;
pub use tracker::{BoxPrediction, DifferentiableTracker, SearchWindow, TrackerConfig, TrackerState};
