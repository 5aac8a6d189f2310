use serde::{Deserialize, Serialize};

use crate::data::{BBox, Pose, Skeleton};
use crate::{Error, Result};

/// Scale- and rotation-robust pose descriptor: per-keypoint distance to the
/// center of gravity (over the bbox diagonal) and `(cos, sin)` of eight
/// interior joint angles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridFeature {
    pub cg: Vec<f64>,
    pub angles: Vec<f64>,
}

pub const ANGLE_DIMS: usize = 16;

impl HybridFeature {
    pub fn dim(&self) -> usize {
        self.cg.len() + self.angles.len()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.extend_from_slice(&self.cg);
        v.extend_from_slice(&self.angles);
        v
    }
}

/// Feature dimension for a `k`-keypoint pose.
pub fn feature_dim(k: usize) -> usize {
    k + ANGLE_DIMS
}

/// Interior angle at `v` between the rays to `a` and `b`, as `(cos, sin)`.
fn interior_angle(a: (f64, f64), v: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    let u = (a.0 - v.0, a.1 - v.1);
    let w = (b.0 - v.0, b.1 - v.1);
    if u.0.hypot(u.1) == 0.0 || w.0.hypot(w.1) == 0.0 {
        return (1.0, 0.0);
    }
    let dot = u.0 * w.0 + u.1 * w.1;
    let cross = (u.0 * w.1 - u.1 * w.0).abs();
    let theta = cross.atan2(dot);
    (theta.cos(), theta.sin())
}

pub fn hybrid_feature(pose: &Pose, bbox: &BBox) -> Result<HybridFeature> {
    let diag = bbox.diagonal();
    if !(diag.is_finite() && diag > 0.0) {
        return Err(Error::InvalidArgument("bbox diagonal must be > 0".into()));
    }
    let visible: Vec<_> = pose.keypoints.iter().filter(|k| k.is_labeled()).collect();
    if visible.is_empty() {
        return Err(Error::NoVisibleKeypoints);
    }
    let n = visible.len() as f64;
    let cx = visible.iter().map(|k| k.x).sum::<f64>() / n;
    let cy = visible.iter().map(|k| k.y).sum::<f64>() / n;
    let cg = pose
        .keypoints
        .iter()
        .map(|k| {
            if k.is_labeled() {
                (k.x - cx).hypot(k.y - cy) / diag
            } else {
                0.0
            }
        })
        .collect();

    let skeleton = Skeleton::for_keypoints(pose.len());
    let mut angles = Vec::with_capacity(ANGLE_DIMS);
    for triplet in &skeleton.angles {
        let (c, s) = match triplet {
            Some((a, v, b)) => {
                let (pa, pv, pb) = (pose.keypoints[*a], pose.keypoints[*v], pose.keypoints[*b]);
                if pa.is_labeled() && pv.is_labeled() && pb.is_labeled() {
                    interior_angle((pa.x, pa.y), (pv.x, pv.y), (pb.x, pb.y))
                } else {
                    (1.0, 0.0)
                }
            }
            None => (1.0, 0.0),
        };
        angles.push(c);
        angles.push(s);
    }
    Ok(HybridFeature { cg, angles })
}

/// Copy of `pose` with every left/right joint pair exchanged.
pub fn limb_swapped(pose: &Pose) -> Pose {
    let mut out = pose.clone();
    for (l, r) in Skeleton::for_keypoints(pose.len()).mirror {
        out.keypoints.swap(l, r);
    }
    out
}

/// Copy of `pose` with only the shoulders exchanged.
pub fn shoulders_swapped(pose: &Pose) -> Pose {
    let mut out = pose.clone();
    if let Some((l, r)) = Skeleton::for_keypoints(pose.len()).shoulders() {
        out.keypoints.swap(l, r);
    }
    out
}
