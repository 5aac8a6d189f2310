use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Joint names for the 15-keypoint video skeleton.
pub const VIDEO15_NAMES: [&str; 15] = [
    "nose",
    "head_bottom",
    "head_top",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
];

/// OKS constants on the 15-joint skeleton, taken from the COCO sigmas.
pub const VIDEO15_KAPPA: [f64; 15] = [
    0.026, 0.035, 0.035, 0.079, 0.079, 0.072, 0.072, 0.062, 0.062, 0.107, 0.107, 0.087, 0.087,
    0.089, 0.089,
];

pub const COCO17_NAMES: [&str; 17] = [
    "nose",
    "left_eye",
    "right_eye",
    "left_ear",
    "right_ear",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
];

pub const COCO17_KAPPA: [f64; 17] = [
    0.026, 0.025, 0.025, 0.035, 0.035, 0.079, 0.079, 0.072, 0.072, 0.062, 0.062, 0.107, 0.107,
    0.087, 0.087, 0.089, 0.089,
];

const GENERIC_KAPPA: f64 = 0.079;

/// Joint names and per-keypoint OKS constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeypointSchema {
    pub names: Vec<String>,
    pub kappa: Vec<f64>,
}

impl KeypointSchema {
    /// Default schema for `k` keypoints: the video skeleton for 15, COCO for
    /// 17, numbered joints otherwise.
    pub fn for_keypoints(k: usize) -> Self {
        match k {
            15 => Self::from_parts(&VIDEO15_NAMES, &VIDEO15_KAPPA),
            17 => Self::from_parts(&COCO17_NAMES, &COCO17_KAPPA),
            _ => Self::generic(k),
        }
    }

    pub fn generic(k: usize) -> Self {
        KeypointSchema {
            names: (0..k).map(|i| format!("kp{i}")).collect(),
            kappa: vec![GENERIC_KAPPA; k],
        }
    }

    fn from_parts(names: &[&str], kappa: &[f64]) -> Self {
        KeypointSchema {
            names: names.iter().map(|s| s.to_string()).collect(),
            kappa: kappa.to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.kappa.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kappa.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.names.len() != self.kappa.len() {
            return Err(Error::Schema(format!(
                "keypoint_schema has {} names but {} kappa values",
                self.names.len(),
                self.kappa.len()
            )));
        }
        if self.kappa.len() < 2 {
            return Err(Error::Schema(
                "keypoint_schema needs at least 2 keypoints".into(),
            ));
        }
        if let Some((i, k)) = self
            .kappa
            .iter()
            .enumerate()
            .find(|(_, k)| !(k.is_finite() && **k > 0.0))
        {
            return Err(Error::Schema(format!("kappa[{i}] = {k} must be > 0")));
        }
        Ok(())
    }
}

/// Joint-angle triplets and left/right pairs for a keypoint layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    pub num_keypoints: usize,
    /// Eight `(a, vertex, b)` triplets: L/R shoulder, elbow, hip, knee.
    /// The shoulder angle opens between the upper arm and the shoulder
    /// line. `None` when the layout has no such joint.
    pub angles: [Option<(usize, usize, usize)>; 8],
    /// Mirror pairs `(left, right)`, shoulders first.
    pub mirror: Vec<(usize, usize)>,
}

impl Skeleton {
    pub fn for_keypoints(k: usize) -> Self {
        match k {
            15 => Skeleton {
                num_keypoints: 15,
                angles: [
                    Some((5, 3, 4)),
                    Some((6, 4, 3)),
                    Some((3, 5, 7)),
                    Some((4, 6, 8)),
                    Some((3, 9, 11)),
                    Some((4, 10, 12)),
                    Some((9, 11, 13)),
                    Some((10, 12, 14)),
                ],
                mirror: vec![(3, 4), (5, 6), (7, 8), (9, 10), (11, 12), (13, 14)],
            },
            17 => Skeleton {
                num_keypoints: 17,
                angles: [
                    Some((7, 5, 6)),
                    Some((8, 6, 5)),
                    Some((5, 7, 9)),
                    Some((6, 8, 10)),
                    Some((5, 11, 13)),
                    Some((6, 12, 14)),
                    Some((11, 13, 15)),
                    Some((12, 14, 16)),
                ],
                mirror: vec![
                    (5, 6),
                    (7, 8),
                    (9, 10),
                    (11, 12),
                    (13, 14),
                    (15, 16),
                    (1, 2),
                    (3, 4),
                ],
            },
            _ => {
                // chain layout: angle at joint j between j-1 and j+1
                let mut angles = [None; 8];
                for (slot, a) in angles.iter_mut().enumerate() {
                    let j = slot + 1;
                    if j + 1 < k {
                        *a = Some((j - 1, j, j + 1));
                    }
                }
                let mirror = if k >= 2 { vec![(0, 1)] } else { Vec::new() };
                Skeleton {
                    num_keypoints: k,
                    angles,
                    mirror,
                }
            }
        }
    }

    /// Indices of the left/right shoulder pair (first mirror pair).
    pub fn shoulders(&self) -> Option<(usize, usize)> {
        self.mirror.first().copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schemas_validate() {
        for k in [2, 5, 15, 17, 20] {
            let s = KeypointSchema::for_keypoints(k);
            assert_eq!(s.len(), k);
            s.validate().unwrap();
        }
    }

    #[test]
    fn nonpositive_kappa_rejected() {
        let mut s = KeypointSchema::for_keypoints(15);
        s.kappa[4] = 0.0;
        assert!(s.validate().unwrap_err().to_string().contains("kappa[4]"));
    }

    #[test]
    fn triplets_in_range() {
        for k in [2, 3, 9, 15, 17, 30] {
            let sk = Skeleton::for_keypoints(k);
            for (a, v, b) in sk.angles.iter().flatten() {
                assert!(*a < k && *v < k && *b < k);
            }
        }
    }
}
