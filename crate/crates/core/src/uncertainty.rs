//! Heatmap and trajectory uncertainty: LC, MPE, TPC and THC.
//!
//! Temporal criteria look at the same track in the directly adjacent frames.
//! When one neighbor is missing (video edge or track gap) its term is dropped
//! and the remaining one doubled, so boundary frames stay on the interior
//! scale.

use serde::{Deserialize, Serialize};

use crate::data::{BBox, Heatmap, Pose};
use crate::estimator::Prediction;
use crate::{Error, Result, SampleId};

/// Default relative admission threshold for MPE peaks.
pub const DEFAULT_PEAK_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UncertaintyKind {
    Lc,
    Mpe,
    Tpc,
    Thc,
    Wpu,
    Combined,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyScore {
    pub sample_id: SampleId,
    pub value: f64,
    pub criterion: UncertaintyKind,
    /// Degenerate input, e.g. a track with a single frame.
    pub flagged: bool,
}

impl UncertaintyScore {
    fn new(sample_id: SampleId, value: f64, criterion: UncertaintyKind) -> Self {
        UncertaintyScore {
            sample_id,
            value,
            criterion,
            flagged: false,
        }
    }
}

/// Scales every channel to unit mass. All-zero channels become uniform and
/// are flagged.
pub fn normalize_heatmap(h: &Heatmap) -> (Heatmap, Vec<bool>) {
    let mut out = h.clone();
    let (k, rows, cols) = h.dims();
    let mut flags = vec![false; k];
    for (ch, flag) in flags.iter_mut().enumerate() {
        let sum: f64 = out.channel(ch).iter().sum();
        let values = out.channel_mut(ch);
        if sum > 0.0 {
            for v in values.iter_mut() {
                *v /= sum;
            }
        } else {
            let u = 1.0 / (rows * cols) as f64;
            values.iter_mut().for_each(|v| *v = u);
            *flag = true;
        }
    }
    (out, flags)
}

/// Least confidence: one minus the mean raw-max keypoint confidence.
pub fn lc_score(pred: &Prediction) -> UncertaintyScore {
    let k = pred.confidences.len().max(1) as f64;
    let value = 1.0 - pred.confidences.iter().sum::<f64>() / k;
    UncertaintyScore::new(pred.sample_id, value.max(0.0), UncertaintyKind::Lc)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

/// Strict 8-neighborhood maxima at or above `rho * max`, sorted by value
/// descending (row-major order on ties). The global maximum is always
/// included, even on a plateau.
pub fn find_local_peaks(channel: &[f64], h: usize, w: usize, rho: f64) -> Vec<Peak> {
    assert_eq!(channel.len(), h * w, "channel size");
    if channel.is_empty() {
        return Vec::new();
    }
    let (gidx, gmax) = crate::data::heatmap_argmax(channel);
    let floor = rho * gmax;
    let mut peaks = Vec::new();
    for r in 0..h {
        for c in 0..w {
            let v = channel[r * w + c];
            if v < floor {
                continue;
            }
            let mut strict = true;
            'nb: for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    if dr == 0 && dc == 0 {
                        continue;
                    }
                    let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                    if rr < 0 || cc < 0 || rr >= h as i64 || cc >= w as i64 {
                        continue;
                    }
                    if channel[rr as usize * w + cc as usize] >= v {
                        strict = false;
                        break 'nb;
                    }
                }
            }
            if strict {
                peaks.push(Peak {
                    row: r,
                    col: c,
                    value: v,
                });
            }
        }
    }
    if !peaks.iter().any(|p| p.row * w + p.col == gidx) {
        peaks.push(Peak {
            row: gidx / w,
            col: gidx % w,
            value: gmax,
        });
    }
    peaks.sort_by(|a, b| {
        b.value
            .total_cmp(&a.value)
            .then((a.row, a.col).cmp(&(b.row, b.col)))
    });
    peaks
}

/// Shannon entropy (nats) of the renormalized peak values.
fn peak_entropy(peaks: &[Peak]) -> f64 {
    let total: f64 = peaks.iter().map(|p| p.value).sum();
    if peaks.len() < 2 || total <= 0.0 {
        return 0.0;
    }
    peaks
        .iter()
        .map(|p| p.value / total)
        .filter(|&q| q > 0.0)
        .map(|q| -q * q.ln())
        .sum()
}

/// Multiple peak entropy averaged over keypoints.
pub fn mpe_score(pred: &Prediction, rho: f64) -> UncertaintyScore {
    mpe_of_heatmap(pred.sample_id, &pred.heatmap, rho)
}

pub fn mpe_of_heatmap(sample_id: SampleId, hm: &Heatmap, rho: f64) -> UncertaintyScore {
    let (k, h, w) = hm.dims();
    let total: f64 = (0..k)
        .map(|ch| peak_entropy(&find_local_peaks(hm.channel(ch), h, w, rho)))
        .sum();
    UncertaintyScore::new(sample_id, total / k.max(1) as f64, UncertaintyKind::Mpe)
}

/// One decoded pose of a track.
#[derive(Debug, Clone, Copy)]
pub struct TrackPose<'a> {
    pub sample_id: SampleId,
    pub frame_index: u32,
    pub pose: &'a Pose,
    pub bbox: &'a BBox,
}

/// One normalized heatmap of a track.
#[derive(Debug, Clone, Copy)]
pub struct TrackHeatmap<'a> {
    pub sample_id: SampleId,
    pub frame_index: u32,
    pub heatmap: &'a Heatmap,
}

/// Indices of the directly adjacent frames of entry `t`, if present.
fn neighbors(frames: &[u32], t: usize) -> (Option<usize>, Option<usize>) {
    let prev = (t > 0 && frames[t - 1] + 1 == frames[t]).then(|| t - 1);
    let next = (t + 1 < frames.len() && frames[t] + 1 == frames[t + 1]).then(|| t + 1);
    (prev, next)
}

/// Combines the two adjacent-frame terms; `None` when both are missing.
pub fn combine_temporal(prev: Option<f64>, next: Option<f64>) -> Option<f64> {
    match (prev, next) {
        (Some(a), Some(b)) => Some(a + b),
        (Some(a), None) | (None, Some(a)) => Some(2.0 * a),
        (None, None) => None,
    }
}

fn pose_displacement(a: &Pose, b: &Pose) -> f64 {
    a.keypoints
        .iter()
        .zip(&b.keypoints)
        .map(|(p, q)| p.dist(q))
        .sum()
}

/// Temporal pose continuity: summed keypoint displacement to the adjacent
/// frames, divided by `K` and the bbox diagonal at `t`.
pub fn tpc_score(track: &[TrackPose<'_>], t: usize) -> Result<UncertaintyScore> {
    if t >= track.len() {
        return Err(Error::InvalidArgument(format!(
            "track index {t} out of range"
        )));
    }
    let frames: Vec<u32> = track.iter().map(|p| p.frame_index).collect();
    let (prev, next) = neighbors(&frames, t);
    let cur = &track[t];
    let k = cur.pose.len().max(1) as f64;
    let scale = k * cur.bbox.diagonal();
    let term = |j: usize| pose_displacement(track[j].pose, cur.pose) / scale;
    Ok(match combine_temporal(prev.map(term), next.map(term)) {
        Some(v) => UncertaintyScore::new(cur.sample_id, v, UncertaintyKind::Tpc),
        None => UncertaintyScore {
            flagged: true,
            ..UncertaintyScore::new(cur.sample_id, 0.0, UncertaintyKind::Tpc)
        },
    })
}

/// Channel-averaged sum of absolute differences between two heatmaps.
pub fn mean_channel_sad(a: &Heatmap, b: &Heatmap) -> Result<f64> {
    if a.dims() != b.dims() {
        let (ka, ha, wa) = a.dims();
        let (kb, hb, wb) = b.dims();
        return Err(Error::InvalidArgument(format!(
            "heatmap dimension mismatch: {ka}x{ha}x{wa} vs {kb}x{hb}x{wb}"
        )));
    }
    let sad: f64 = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).abs())
        .sum();
    Ok(sad / a.num_keypoints().max(1) as f64)
}

/// Temporal heatmap continuity of entry `t`: channel-averaged SAD to the
/// previous frame plus channel-averaged SAD to the next frame.
pub fn thc_score(track: &[TrackHeatmap<'_>], t: usize) -> Result<UncertaintyScore> {
    if t >= track.len() {
        return Err(Error::InvalidArgument(format!(
            "track index {t} out of range"
        )));
    }
    let frames: Vec<u32> = track.iter().map(|p| p.frame_index).collect();
    let (prev, next) = neighbors(&frames, t);
    let cur = &track[t];
    let prev = prev
        .map(|j| mean_channel_sad(track[j].heatmap, cur.heatmap))
        .transpose()?;
    let next = next
        .map(|j| mean_channel_sad(cur.heatmap, track[j].heatmap))
        .transpose()?;
    Ok(match combine_temporal(prev, next) {
        Some(v) => UncertaintyScore::new(cur.sample_id, v, UncertaintyKind::Thc),
        None => UncertaintyScore {
            flagged: true,
            ..UncertaintyScore::new(cur.sample_id, 0.0, UncertaintyKind::Thc)
        },
    })
}
