//! Probability-guided multi-object search for a simulated wide-area
//! detection rig: a fixed wide-angle camera builds a panoramic probability
//! map, and a search camera behind a dual-axis galvano mirror hunts for
//! objects with a particle filter whose detections are merged by
//! uncertainty-weighted voting.
//!
//! The modules follow the pipeline: [`scene`] and [`ppm`] describe the world
//! and the prior over it, [`particle`] proposes gaze points, [`galvo`] moves
//! the mirror and captures views, [`detector`] reports what a view contains,
//! [`refinement`] merges the reports, and [`experiment`] runs whole trials
//! and studies.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod detector;
pub mod error;
pub mod experiment;
pub mod galvo;
pub mod geom;
pub mod output;
pub mod particle;
pub mod ppm;
pub mod refinement;
pub mod rng;
pub mod scene;

pub use config::ScenarioConfig;
pub use error::{Error, Result};
pub use experiment::{run_trial, Method, TrialResult, TrialSetup, TrialSpec};
