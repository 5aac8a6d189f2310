//! Per-keypoint score grids and the conversions between grid-units and
//! heatmap cells.
//!
//! A heatmap covers its sample's bbox. Cell `(r, c)` has its center at
//! `bbox.x + (c + 0.5) * w / W`, `bbox.y + (r + 0.5) * h / H`.

use serde::{Deserialize, Serialize};

use super::{BBox, Keypoint, Pose};
use crate::{Error, Result};

/// `K` channels of `H x W` nonnegative scores, row-major per channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    k: usize,
    h: usize,
    w: usize,
    values: Vec<f64>,
}

impl Heatmap {
    pub fn zeros(k: usize, h: usize, w: usize) -> Self {
        Heatmap {
            k,
            h,
            w,
            values: vec![0.0; k * h * w],
        }
    }

    pub fn from_values(k: usize, h: usize, w: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != k * h * w {
            return Err(Error::DimensionMismatch {
                what: "heatmap values",
                expected: k * h * w,
                found: values.len(),
            });
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "heatmap entries must be finite and >= 0, found {v}"
            )));
        }
        Ok(Heatmap { k, h, w, values })
    }

    pub fn num_keypoints(&self) -> usize {
        self.k
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.k, self.h, self.w)
    }

    pub fn channel(&self, k: usize) -> &[f64] {
        let n = self.h * self.w;
        &self.values[k * n..(k + 1) * n]
    }

    pub fn channel_mut(&mut self, k: usize) -> &mut [f64] {
        let n = self.h * self.w;
        &mut self.values[k * n..(k + 1) * n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, k: usize, row: usize, col: usize) -> f64 {
        self.values[(k * self.h + row) * self.w + col]
    }

    pub fn set(&mut self, k: usize, row: usize, col: usize, v: f64) {
        let i = (k * self.h + row) * self.w + col;
        self.values[i] = v;
    }

    pub fn scale_channel(&mut self, k: usize, factor: f64) {
        for v in self.channel_mut(k) {
            *v *= factor;
        }
    }

    /// Continuous cell coordinates `(col, row)` of a grid-unit point.
    pub fn to_cell(&self, bbox: &BBox, x: f64, y: f64) -> (f64, f64) {
        (
            (x - bbox.x) / bbox.w * self.w as f64 - 0.5,
            (y - bbox.y) / bbox.h * self.h as f64 - 0.5,
        )
    }

    /// Grid-unit center of cell `(row, col)`.
    pub fn cell_center(&self, bbox: &BBox, row: usize, col: usize) -> (f64, f64) {
        (
            bbox.x + (col as f64 + 0.5) * bbox.w / self.w as f64,
            bbox.y + (row as f64 + 0.5) * bbox.h / self.h as f64,
        )
    }

    /// Adds an isotropic Gaussian bump of the given peak height centered at
    /// continuous cell coordinates.
    pub fn add_bump(&mut self, k: usize, col: f64, row: f64, sigma: f64, peak: f64) {
        let inv = 1.0 / (2.0 * sigma * sigma);
        let gx: Vec<f64> = (0..self.w)
            .map(|c| (-(c as f64 - col).powi(2) * inv).exp())
            .collect();
        let gy: Vec<f64> = (0..self.h)
            .map(|r| (-(r as f64 - row).powi(2) * inv).exp())
            .collect();
        let w = self.w;
        let ch = self.channel_mut(k);
        for (r, &yv) in gy.iter().enumerate() {
            let a = peak * yv;
            for (dst, &xv) in ch[r * w..(r + 1) * w].iter_mut().zip(&gx) {
                *dst += a * xv;
            }
        }
    }
}

/// Extra bump on channel `k` at continuous cell coordinates `(x, y)` =
/// (column, row).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpuriousPeak {
    pub k: usize,
    pub x: f64,
    pub y: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedHeatmap {
    pub heatmap: Heatmap,
    /// Keypoints that fell outside the grid and were clamped onto it.
    pub clamped: Vec<bool>,
}

/// Renders one Gaussian bump per labeled keypoint (peak 1 at the keypoint
/// location) plus the listed spurious bumps. Absent keypoints (v = 0) leave
/// their channel empty.
pub fn render_heatmap(
    pose: &Pose,
    bbox: &BBox,
    h: usize,
    w: usize,
    sigma: f64,
    spurious: &[SpuriousPeak],
) -> Result<RenderedHeatmap> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sigma must be > 0, got {sigma}"
        )));
    }
    if h == 0 || w == 0 {
        return Err(Error::InvalidArgument(
            "heatmap dimensions must be >= 1".into(),
        ));
    }
    if !bbox.is_valid() {
        return Err(Error::InvalidArgument("bbox must have w, h > 0".into()));
    }
    let k = pose.len();
    let mut hm = Heatmap::zeros(k, h, w);
    let (wf, hf) = (w as f64, h as f64);
    for sp in spurious {
        let inside = sp.k < k
            && (-0.5..=wf - 0.5).contains(&sp.x)
            && (-0.5..=hf - 0.5).contains(&sp.y)
            && sp.weight.is_finite()
            && sp.weight >= 0.0;
        if !inside {
            return Err(Error::InvalidArgument(format!(
                "spurious peak {sp:?} outside the {k}x{h}x{w} grid"
            )));
        }
    }
    let mut clamped = vec![false; k];
    for (i, kp) in pose.keypoints.iter().enumerate() {
        if !kp.is_labeled() {
            continue;
        }
        let (mut col, mut row) = hm.to_cell(bbox, kp.x, kp.y);
        if !(-0.5..=wf - 0.5).contains(&col) || !(-0.5..=hf - 0.5).contains(&row) {
            clamped[i] = true;
            col = col.clamp(0.0, wf - 1.0);
            row = row.clamp(0.0, hf - 1.0);
        }
        hm.add_bump(i, col, row, sigma, 1.0);
    }
    for sp in spurious {
        hm.add_bump(sp.k, sp.x, sp.y, sigma, sp.weight);
    }
    Ok(RenderedHeatmap {
        heatmap: hm,
        clamped,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodedPose {
    pub pose: Pose,
    /// Raw channel maximum clamped to `[0, 1]`.
    pub confidences: Vec<f64>,
    /// Channels with no positive value; decoded to the bbox center.
    pub fallback: Vec<bool>,
}

impl DecodedPose {
    pub fn mean_confidence(&self) -> f64 {
        if self.confidences.is_empty() {
            0.0
        } else {
            self.confidences.iter().sum::<f64>() / self.confidences.len() as f64
        }
    }
}

/// Row-major position of the first maximum of a channel (lowest row, then
/// lowest column on ties).
pub(crate) fn argmax(channel: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, &v) in channel.iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

/// Argmax decoding, mapping the winning cell center back through the bbox.
pub fn decode_pose(hm: &Heatmap, bbox: &BBox) -> DecodedPose {
    let (k, _, w) = hm.dims();
    let mut keypoints = Vec::with_capacity(k);
    let mut confidences = Vec::with_capacity(k);
    let mut fallback = Vec::with_capacity(k);
    for ch in 0..k {
        let (idx, max) = argmax(hm.channel(ch));
        if max > 0.0 {
            let (x, y) = hm.cell_center(bbox, idx / w, idx % w);
            keypoints.push(Keypoint::visible(x, y));
            confidences.push(max.min(1.0));
            fallback.push(false);
        } else {
            let (x, y) = bbox.center();
            keypoints.push(Keypoint::new(x, y, 0));
            confidences.push(0.0);
            fallback.push(true);
        }
    }
    DecodedPose {
        pose: Pose::new(keypoints),
        confidences,
        fallback,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::uncertainty::find_local_peaks;

    fn bbox() -> BBox {
        BBox::new(10.0, 20.0, 48.0, 64.0)
    }

    #[test]
    fn centered_pose_peaks_at_grid_center() {
        let b = bbox();
        let (cx, cy) = b.center();
        let pose = Pose::new(vec![Keypoint::visible(cx, cy)]);
        let r = render_heatmap(&pose, &b, 64, 48, 2.0, &[]).unwrap();
        let (idx, max) = argmax(r.heatmap.channel(0));
        // exact center falls on the corner of four cells; tie goes to the lowest
        assert_eq!((idx / 48, idx % 48), (31, 23));
        assert!(max > 0.9 && max <= 1.0);
        assert!(!r.clamped[0]);
    }

    #[test]
    fn spurious_peak_gives_two_local_maxima() {
        let b = bbox();
        let pose = Pose::new(vec![Keypoint::visible(b.x + 4.5, b.y + 4.5)]);
        let sp = SpuriousPeak {
            k: 0,
            x: 40.0,
            y: 55.0,
            weight: 1.0,
        };
        let r = render_heatmap(&pose, &b, 64, 48, 1.5, &[sp]).unwrap();
        let peaks = find_local_peaks(r.heatmap.channel(0), 64, 48, 0.1);
        assert_eq!(peaks.len(), 2);
    }

    #[test]
    fn small_sigma_concentrates_mass() {
        let b = bbox();
        // cell centers (row 10, col 7) and (row 40, col 30)
        let pose = Pose::new(vec![
            Keypoint::visible(b.x + 7.5, b.y + 10.5),
            Keypoint::visible(b.x + 30.5, b.y + 40.5),
        ]);
        let r = render_heatmap(&pose, &b, 64, 48, 0.5, &[]).unwrap();
        for (k, (row, col)) in [(10usize, 7usize), (40, 30)].into_iter().enumerate() {
            let total: f64 = r.heatmap.channel(k).iter().sum();
            let mut near = 0.0;
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    near +=
                        r.heatmap
                            .get(k, (row as i64 + dr) as usize, (col as i64 + dc) as usize);
                }
            }
            assert!(near / total >= 0.99, "mass fraction {}", near / total);
        }
    }

    #[test]
    fn out_of_grid_keypoint_is_clamped_and_flagged() {
        let b = bbox();
        let pose = Pose::new(vec![
            Keypoint::visible(b.x - 30.0, b.y + 5.0),
            Keypoint::visible(b.x + 1.0, b.y + 1.0),
        ]);
        let r = render_heatmap(&pose, &b, 64, 48, 1.0, &[]).unwrap();
        assert_eq!(r.clamped, vec![true, false]);
        let (idx, _) = argmax(r.heatmap.channel(0));
        assert_eq!(idx % 48, 0);
    }

    #[test]
    fn render_rejects_bad_inputs() {
        let b = bbox();
        let pose = Pose::new(vec![Keypoint::visible(20.0, 30.0)]);
        assert!(render_heatmap(&pose, &b, 64, 48, 0.0, &[]).is_err());
        let sp = SpuriousPeak {
            k: 0,
            x: 100.0,
            y: 1.0,
            weight: 1.0,
        };
        assert!(render_heatmap(&pose, &b, 64, 48, 1.0, &[sp]).is_err());
        let sp = SpuriousPeak {
            k: 3,
            x: 1.0,
            y: 1.0,
            weight: 1.0,
        };
        assert!(render_heatmap(&pose, &b, 64, 48, 1.0, &[sp]).is_err());
    }

    #[test]
    fn decode_one_hot() {
        let b = bbox();
        let mut hm = Heatmap::zeros(1, 64, 48);
        hm.set(0, 3, 4, 1.0);
        let d = decode_pose(&hm, &b);
        let kp = d.pose.keypoints[0];
        assert_eq!((kp.x, kp.y), (b.x + 4.5, b.y + 3.5));
        assert_eq!(d.confidences, vec![1.0]);
        assert_eq!(d.fallback, vec![false]);
    }

    #[test]
    fn decode_tie_prefers_lowest_row_then_column() {
        let b = bbox();
        let mut hm = Heatmap::zeros(1, 64, 48);
        hm.set(0, 5, 5, 0.7);
        hm.set(0, 0, 0, 0.7);
        let d = decode_pose(&hm, &b);
        assert_eq!(d.pose.keypoints[0].x, b.x + 0.5);
        assert_eq!(d.pose.keypoints[0].y, b.y + 0.5);
    }

    #[test]
    fn decode_all_zero_channel_falls_back() {
        let b = bbox();
        let mut hm = Heatmap::zeros(2, 8, 6);
        hm.set(1, 2, 2, 3.0);
        let d = decode_pose(&hm, &b);
        assert_eq!(d.fallback, vec![true, false]);
        assert_eq!(d.confidences, vec![0.0, 1.0]);
        assert_eq!((d.pose.keypoints[0].x, d.pose.keypoints[0].y), b.center());
    }

    #[test]
    fn from_values_validates() {
        assert!(Heatmap::from_values(1, 2, 2, vec![0.0; 3]).is_err());
        assert!(Heatmap::from_values(1, 1, 2, vec![0.0, -1.0]).is_err());
        assert!(Heatmap::from_values(1, 1, 2, vec![0.0, f64::NAN]).is_err());
    }
}
