//! Whole-body pose unnaturalness: reconstruction error of a pose's hybrid
//! feature under an autoencoder trained on natural poses.

mod autoencoder;
mod feature;

pub use autoencoder::{
    ae_train, Adam, AeTrainConfig, AutoEncoder, TrainReport, ENCODER_WIDTHS, FULL_BATCH_LIMIT,
};
pub use feature::{
    feature_dim, hybrid_feature, limb_swapped, shoulders_swapped, HybridFeature, ANGLE_DIMS,
};

use serde::{Deserialize, Serialize};

use crate::data::{generate_synthetic_video, BBox, Pose, SynthSpec};
use crate::uncertainty::{UncertaintyKind, UncertaintyScore};
use crate::{Result, SampleId};

/// Mean squared reconstruction error of the pose's hybrid feature.
pub fn wpu_value(ae: &AutoEncoder, pose: &Pose, bbox: &BBox) -> Result<f64> {
    ae.reconstruction_error(&hybrid_feature(pose, bbox)?.to_vec())
}

pub fn wpu_score(
    ae: &AutoEncoder,
    sample_id: SampleId,
    pose: &Pose,
    bbox: &BBox,
) -> Result<UncertaintyScore> {
    Ok(UncertaintyScore {
        sample_id,
        value: wpu_value(ae, pose, bbox)?,
        criterion: UncertaintyKind::Wpu,
        flagged: false,
    })
}

/// Retrains on the labeled poses of the current video. An empty set leaves
/// the network unchanged.
pub fn ae_retrain_cycle(
    ae: &AutoEncoder,
    labeled: &[(Pose, BBox)],
    cfg: &AeTrainConfig,
) -> Result<AutoEncoder> {
    if labeled.is_empty() {
        log::warn!("autoencoder retraining skipped: no labeled poses");
        return Ok(ae.clone());
    }
    let features = labeled
        .iter()
        .map(|(p, b)| hybrid_feature(p, b).map(|f| f.to_vec()))
        .collect::<Result<Vec<_>>>()?;
    Ok(ae_train(ae, &features, cfg)?.0)
}

/// Pre-training on poses from source videos unrelated to the query video.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub poses: usize,
    pub train: AeTrainConfig,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            poses: 500,
            train: AeTrainConfig {
                epochs: 300,
                lr: 1e-3,
                batch: 64,
                seed: 0,
            },
        }
    }
}

/// Natural poses drawn from synthetic source videos. Seeds are offset so they
/// never coincide with a query video generated from a small seed.
pub fn source_poses(k: usize, count: usize, seed: u64) -> Result<Vec<(Pose, BBox)>> {
    let mut out = Vec::with_capacity(count);
    let mut video = 0u64;
    while out.len() < count {
        let spec = SynthSpec::new(50, 4, k);
        let ds = generate_synthetic_video(&spec, crate::rng::derive(&[seed, 0x7372_6365, video]))?;
        // every fifth frame keeps the set diverse
        for s in ds.samples.iter().filter(|s| s.frame_index % 5 == 0) {
            if out.len() == count {
                break;
            }
            out.push((s.gt_pose.clone(), s.bbox));
        }
        video += 1;
    }
    Ok(out)
}

/// Fresh autoencoder trained on source poses.
pub fn pretrain_autoencoder(
    k: usize,
    cfg: &PretrainConfig,
    seed: u64,
) -> Result<(AutoEncoder, TrainReport)> {
    let poses = source_poses(k, cfg.poses, seed)?;
    let features = poses
        .iter()
        .map(|(p, b)| hybrid_feature(p, b).map(|f| f.to_vec()))
        .collect::<Result<Vec<_>>>()?;
    let ae = AutoEncoder::new(feature_dim(k), seed);
    let train = AeTrainConfig { seed, ..cfg.train };
    ae_train(&ae, &features, &train)
}
