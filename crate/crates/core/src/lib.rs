//! Belief-propagation multi-target tracking for networks of base stations
//! with partially overlapping fields of view.
//!
//! The crate is organized bottom-up:
//!
//! - [`model`]: motion model, sensor geometry, detection, clutter and
//!   measurement likelihood.
//! - [`scenario`]: ground-truth and measurement synthesis, scenario files.
//! - [`tracker`]: single-sensor particle BP tracker (prediction, birth,
//!   loopy-BP data association, update, pruning).
//! - [`fusion`]: distributed, centralized and handover architectures.
//! - [`metrics`]: GOSPA scoring and Monte Carlo aggregation.
//! - [`cli`]: the experiment runner behind the `handover-sim` binary.
//!
//! Particle kernels and Monte Carlo trials run on rayon when the default
//! `parallel` feature is enabled; see [`par`].

pub mod cli;
pub mod fusion;
pub mod metrics;
pub mod model;
pub mod par;
pub mod scenario;
pub mod tracker;

pub use model::{DetectionMode, Measurement, MotionModel, Sensor, StateVector};
pub use scenario::{GroundTruth, ScanSet, ScenarioConfig};
pub use tracker::{Tracker, TrackerParams};
