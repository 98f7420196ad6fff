//! Two-phase mitosis detection in multi-channel time-lapse microscopy.
//!
//! A multiclass Hough forest on Haar-like features votes for mother-cell
//! centers and daughter-pair midpoints; a pairwise model then links mothers
//! in frame `t` with daughter pairs in frame `t + 1`.

pub mod config;
pub mod crf;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod forest;
pub mod geometry;
pub mod image;
pub mod pipeline;
pub mod report;
pub mod synth;
pub mod voting;

pub use error::{Error, Result};
pub use config::{DetectorMode, PipelineConfig};
pub use dataset::Dataset;
