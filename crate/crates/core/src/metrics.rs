//! OKS, AP@τ over a video, learning curves and their area (ALC).

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{BBox, Pose};
use crate::{Error, Result, SampleId};

/// OKS thresholds recorded every cycle: 0.50, 0.55, ..., 0.95.
pub fn ap_thresholds() -> Vec<f64> {
    (0..10).map(|i| 0.5 + 0.05 * i as f64).collect()
}

/// Object keypoint similarity of `pred` against `gt`, averaged over the
/// labeled (v > 0) ground-truth keypoints with scale `s^2 = bbox area`.
pub fn oks(pred: &Pose, gt: &Pose, bbox: &BBox, kappa: &[f64]) -> Result<f64> {
    if pred.len() != gt.len() || kappa.len() != gt.len() {
        return Err(Error::DimensionMismatch {
            what: "keypoints in oks",
            expected: gt.len(),
            found: if pred.len() != gt.len() {
                pred.len()
            } else {
                kappa.len()
            },
        });
    }
    let s2 = bbox.area();
    let mut total = 0.0;
    let mut count = 0usize;
    for ((p, g), k) in pred.keypoints.iter().zip(&gt.keypoints).zip(kappa) {
        if !g.is_labeled() {
            continue;
        }
        let d2 = (p.x - g.x).powi(2) + (p.y - g.y).powi(2);
        total += (-d2 / (2.0 * s2 * k * k)).exp();
        count += 1;
    }
    if count == 0 {
        return Err(Error::NoVisibleKeypoints);
    }
    Ok(total / count as f64)
}

/// Evaluation state of one sample for [`ap_at`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApEntry {
    pub id: SampleId,
    pub oks: f64,
    pub confidence: f64,
    pub labeled: bool,
}

/// Average precision at OKS threshold `tau`, one prediction per ground-truth
/// instance. Labeled samples count as exact (oks 1, confidence 1). Uses
/// 101-point interpolation with all samples as the recall denominator.
pub fn ap_at(entries: &[ApEntry], tau: f64) -> Result<f64> {
    if entries.is_empty() {
        return Err(Error::InvalidArgument("ap_at on an empty state".into()));
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidArgument(format!("tau {tau} not in (0, 1)")));
    }
    let mut ranked: Vec<(f64, SampleId, bool)> = entries
        .iter()
        .map(|e| {
            if e.labeled {
                (1.0, e.id, true)
            } else {
                (e.confidence, e.id, e.oks > tau)
            }
        })
        .collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let n = entries.len() as f64;
    let mut precision = Vec::with_capacity(ranked.len());
    let mut recall = Vec::with_capacity(ranked.len());
    let mut tp = 0usize;
    for (rank, (_, _, hit)) in ranked.iter().enumerate() {
        if *hit {
            tp += 1;
        }
        precision.push(tp as f64 / (rank + 1) as f64);
        recall.push(tp as f64 / n);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut sum = 0.0;
    for i in 0..=100 {
        let r = i as f64 / 100.0;
        let j = recall.partition_point(|&x| x < r);
        if j < precision.len() {
            sum += precision[j];
        }
    }
    Ok(sum / 101.0)
}

/// AP (in `[0, 1]`) as a function of labeled fraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub points: Vec<(f64, f64)>,
}

impl LearningCurve {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        for w in points.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::InvalidArgument(format!(
                    "learning curve fractions must strictly increase ({} then {})",
                    w[0].0, w[1].0
                )));
            }
        }
        if points
            .iter()
            .any(|&(f, a)| !(0.0..=1.0).contains(&f) || !(0.0..=1.0).contains(&a))
        {
            return Err(Error::InvalidArgument(
                "learning curve values must lie in [0, 1]".into(),
            ));
        }
        Ok(LearningCurve { points })
    }

    pub fn alc(&self) -> Result<f64> {
        alc(self)
    }

    /// Writes `labeled_fraction,ap,criterion,seed,video_id` rows, with
    /// header when `header` is set.
    pub fn write_csv<W: Write>(
        &self,
        out: &mut W,
        criterion: &str,
        seed: u64,
        video_id: &str,
        header: bool,
    ) -> std::io::Result<()> {
        if header {
            writeln!(out, "{CURVE_CSV_HEADER}")?;
        }
        for &(f, ap) in &self.points {
            writeln!(
                out,
                "{f},{ap},{},{seed},{}",
                csv_field(criterion),
                csv_field(video_id)
            )?;
        }
        Ok(())
    }
}

pub const CURVE_CSV_HEADER: &str = "labeled_fraction,ap,criterion,seed,video_id";

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Trapezoidal area under the curve divided by its fraction span.
pub fn alc(curve: &LearningCurve) -> Result<f64> {
    let p = &curve.points;
    if p.len() < 2 {
        return Err(Error::InvalidArgument("alc needs at least 2 points".into()));
    }
    let mut area = 0.0;
    for w in p.windows(2) {
        let dx = w[1].0 - w[0].0;
        if dx <= 0.0 {
            return Err(Error::InvalidArgument("alc: unordered fractions".into()));
        }
        area += 0.5 * dx * (w[0].1 + w[1].1);
    }
    Ok(area / (p[p.len() - 1].0 - p[0].0))
}
