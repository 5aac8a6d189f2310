//! Pose estimator contract plus two implementations: a deterministic
//! simulation whose accuracy responds to retraining, and a replay of
//! heatmaps computed elsewhere.

mod replay;
mod simulated;

pub use replay::{replay_predict, write_replay_store, ReplayEstimator, REPLAY_INDEX_FILE};
pub use simulated::{EstimatorState, SimConfig, SimulatedEstimator};

use crate::data::{decode_pose, BBox, Heatmap, Pose, PoseSample};
use crate::{Result, SampleId};

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub sample_id: SampleId,
    pub heatmap: Heatmap,
    /// Argmax decoding of `heatmap`.
    pub pose: Pose,
    pub confidences: Vec<f64>,
    pub embedding: Vec<f64>,
}

impl Prediction {
    /// Decodes the pose from the heatmap so the two always agree.
    pub fn from_heatmap(
        sample_id: SampleId,
        heatmap: Heatmap,
        bbox: &BBox,
        embedding: Vec<f64>,
    ) -> Self {
        let decoded = decode_pose(&heatmap, bbox);
        Prediction {
            sample_id,
            heatmap,
            pose: decoded.pose,
            confidences: decoded.confidences,
            embedding,
        }
    }

    /// Instance confidence used for AP ranking.
    pub fn confidence(&self) -> f64 {
        if self.confidences.is_empty() {
            0.0
        } else {
            self.confidences.iter().sum::<f64>() / self.confidences.len() as f64
        }
    }
}

pub trait PoseEstimator {
    fn predict(&self, sample: &PoseSample) -> Result<Prediction>;

    /// Fine-tunes on the given samples. Zero epochs must leave the model
    /// unchanged.
    fn retrain(&mut self, train_set: &[SampleId], epochs: u32) -> Result<()>;
}

impl<E: PoseEstimator + ?Sized> PoseEstimator for Box<E> {
    fn predict(&self, sample: &PoseSample) -> Result<Prediction> {
        (**self).predict(sample)
    }

    fn retrain(&mut self, train_set: &[SampleId], epochs: u32) -> Result<()> {
        (**self).retrain(train_set, epochs)
    }
}
