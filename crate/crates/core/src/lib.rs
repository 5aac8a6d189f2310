//! Video-specific active transfer learning for top-down human pose estimation.
//!
//! The crate covers the whole loop: a pose data model with synthetic video
//! generation, a pluggable estimator (simulated or replayed heatmaps),
//! heatmap and pose-level uncertainty criteria, diversity/uncertainty sample
//! selection, OKS/AP/ALC evaluation and the cycle orchestration with its
//! retraining schedule and stopping criteria.

pub mod atl;
pub mod data;
pub mod error;
pub mod estimator;
pub mod metrics;
mod rng;
pub mod selection;
pub mod stats;
pub mod uncertainty;
pub mod wpu;

pub use error::{Error, Result};

/// Identifier of one person instance in one frame.
pub type SampleId = u64;
