//! Pose data model: keypoints, samples, videos and heatmaps.
//!
//! Coordinates are image grid-units everywhere outside of [`heatmap`],
//! which owns the conversion to and from heatmap cells.

mod heatmap;
mod io;
mod skeleton;
mod synth;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, SampleId};

pub(crate) use heatmap::argmax as heatmap_argmax;
pub use heatmap::{
    decode_pose, render_heatmap, DecodedPose, Heatmap, RenderedHeatmap, SpuriousPeak,
};
pub use io::{load_dataset, save_dataset};
pub use skeleton::{KeypointSchema, Skeleton};
pub use synth::{generate_synthetic_video, SynthSpec};

/// Visibility of a keypoint: 0 absent, 1 occluded but labeled, 2 visible.
pub type Visibility = u8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "(f64, f64, u8)", into = "(f64, f64, u8)")]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub v: Visibility,
}

impl Keypoint {
    pub fn new(x: f64, y: f64, v: Visibility) -> Self {
        Keypoint { x, y, v }
    }

    pub fn visible(x: f64, y: f64) -> Self {
        Keypoint { x, y, v: 2 }
    }

    /// Labeled keypoints (v > 0) take part in metrics.
    pub fn is_labeled(&self) -> bool {
        self.v > 0
    }

    pub fn dist(&self, other: &Keypoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl TryFrom<(f64, f64, u8)> for Keypoint {
    type Error = String;

    fn try_from((x, y, v): (f64, f64, u8)) -> std::result::Result<Self, String> {
        if v > 2 {
            return Err(format!("visibility flag {v} not in {{0,1,2}}"));
        }
        Ok(Keypoint { x, y, v })
    }
}

impl From<Keypoint> for (f64, f64, u8) {
    fn from(k: Keypoint) -> Self {
        (k.x, k.y, k.v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Pose {
    pub keypoints: Vec<Keypoint>,
}

impl Pose {
    pub fn new(keypoints: Vec<Keypoint>) -> Self {
        Pose { keypoints }
    }

    pub fn len(&self) -> usize {
        self.keypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keypoints.is_empty()
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Pose {
        Pose::new(
            self.keypoints
                .iter()
                .map(|k| Keypoint::new(k.x + dx, k.y + dy, k.v))
                .collect(),
        )
    }

    pub fn scaled(&self, s: f64) -> Pose {
        Pose::new(
            self.keypoints
                .iter()
                .map(|k| Keypoint::new(k.x * s, k.y * s, k.v))
                .collect(),
        )
    }
}

/// Axis-aligned box `(x, y, w, h)` in grid-units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        BBox { x, y, w, h }
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn diagonal(&self) -> f64 {
        self.w.hypot(self.h)
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + 0.5 * self.w, self.y + 0.5 * self.h)
    }

    pub fn is_valid(&self) -> bool {
        [self.x, self.y, self.w, self.h]
            .iter()
            .all(|v| v.is_finite())
            && self.w > 0.0
            && self.h > 0.0
    }

    pub fn translated(&self, dx: f64, dy: f64) -> BBox {
        BBox::new(self.x + dx, self.y + dy, self.w, self.h)
    }

    pub fn scaled(&self, s: f64) -> BBox {
        BBox::new(self.x * s, self.y * s, self.w * s, self.h * s)
    }
}

impl From<[f64; 4]> for BBox {
    fn from([x, y, w, h]: [f64; 4]) -> Self {
        BBox { x, y, w, h }
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

/// One person instance in one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseSample {
    pub sample_id: SampleId,
    pub frame_index: u32,
    pub track_id: i64,
    pub bbox: BBox,
    #[serde(rename = "keypoints")]
    pub gt_pose: Pose,
    /// Hidden per-sample difficulty in `[0, 1]`, read by the simulated estimator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difficulty: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoDataset {
    pub video_id: String,
    pub frame_count: u32,
    pub keypoint_schema: KeypointSchema,
    pub samples: Vec<PoseSample>,
}

impl VideoDataset {
    /// Builds a dataset and checks every invariant.
    pub fn new(
        video_id: impl Into<String>,
        frame_count: u32,
        keypoint_schema: KeypointSchema,
        samples: Vec<PoseSample>,
    ) -> Result<Self> {
        let d = VideoDataset {
            video_id: video_id.into(),
            frame_count,
            keypoint_schema,
            samples,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn num_keypoints(&self) -> usize {
        self.keypoint_schema.len()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_ids(&self) -> Vec<SampleId> {
        self.samples.iter().map(|s| s.sample_id).collect()
    }

    /// Position of a sample id in `samples`.
    pub fn index_of(&self, id: SampleId) -> Option<usize> {
        self.samples.iter().position(|s| s.sample_id == id)
    }

    pub fn skeleton(&self) -> Skeleton {
        Skeleton::for_keypoints(self.num_keypoints())
    }

    /// Samples grouped by track, each track sorted by frame. Tracks are
    /// ordered by track id; entries are indices into `samples`.
    pub fn tracks(&self) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..self.samples.len()).collect();
        order.sort_by_key(|&i| (self.samples[i].track_id, self.samples[i].frame_index));
        let mut tracks: Vec<Vec<usize>> = Vec::new();
        let mut last: Option<i64> = None;
        for i in order {
            let t = self.samples[i].track_id;
            if last != Some(t) {
                tracks.push(Vec::new());
                last = Some(t);
            }
            tracks.last_mut().unwrap().push(i);
        }
        tracks
    }

    pub fn validate(&self) -> Result<()> {
        self.keypoint_schema.validate()?;
        if self.samples.is_empty() {
            return Err(Error::Schema("dataset has no samples".into()));
        }
        let k = self.num_keypoints();
        let mut ids = HashSet::new();
        let mut slots = HashSet::new();
        for s in &self.samples {
            let who = format!(
                "sample {} (frame {}, track {})",
                s.sample_id, s.frame_index, s.track_id
            );
            if !ids.insert(s.sample_id) {
                return Err(Error::Schema(format!("{who}: duplicate sample_id")));
            }
            if !slots.insert((s.frame_index, s.track_id)) {
                return Err(Error::Schema(format!(
                    "{who}: duplicate (frame, track) pair"
                )));
            }
            if s.frame_index >= self.frame_count {
                return Err(Error::Schema(format!(
                    "{who}: frame_index >= frame_count {}",
                    self.frame_count
                )));
            }
            if !s.bbox.is_valid() {
                return Err(Error::Schema(format!(
                    "{who}: bbox must have finite coordinates and w, h > 0"
                )));
            }
            if s.gt_pose.len() != k {
                return Err(Error::Schema(format!(
                    "{who}: {} keypoints, schema has {k}",
                    s.gt_pose.len()
                )));
            }
            if s.gt_pose
                .keypoints
                .iter()
                .any(|kp| !kp.x.is_finite() || !kp.y.is_finite())
            {
                return Err(Error::Schema(format!(
                    "{who}: non-finite keypoint coordinate"
                )));
            }
            if let Some(d) = s.difficulty {
                if !(0.0..=1.0).contains(&d) {
                    return Err(Error::Schema(format!(
                        "{who}: difficulty {d} outside [0, 1]"
                    )));
                }
            }
        }
        Ok(())
    }
}
