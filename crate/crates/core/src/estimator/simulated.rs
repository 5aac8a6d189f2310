//! Simulated estimator. Each sample has a hidden difficulty; its keypoint
//! error decays exponentially with the training effect pooled from
//! similar trained samples, and the rendered heatmap degrades with the error
//! (wider bumps, lower peaks, spurious maxima).

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{PoseEstimator, Prediction};
use crate::data::{render_heatmap, Keypoint, Pose, PoseSample, VideoDataset};
use crate::rng::rng_for;
use crate::stats::median;
use crate::wpu::{feature_dim, hybrid_feature};
use crate::{Error, Result, SampleId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub heatmap_h: usize,
    pub heatmap_w: usize,
    /// Displacement at difficulty 1 and zero training effect, as a fraction
    /// of the bbox diagonal.
    pub d_max: f64,
    /// Residual displacement no amount of training removes.
    pub noise_floor: f64,
    /// Decay rate of the displacement in the training effect.
    pub eta: f64,
    /// Skill added per sample and epoch.
    pub gain: f64,
    /// Multiplies the median-distance kernel bandwidth.
    pub bandwidth_scale: f64,
    /// Bump sigma in heatmap cells at zero error.
    pub sigma0: f64,
    /// Relative sigma growth per unit displacement.
    pub sigma_growth: f64,
    /// Spurious peaks per keypoint and unit displacement.
    pub spurious_rate: f64,
    /// Peak amplitude decay per unit displacement.
    pub amplitude_decay: f64,
    /// Difficulty assumed for samples that carry none.
    pub default_difficulty: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            heatmap_h: 64,
            heatmap_w: 48,
            d_max: 0.15,
            noise_floor: 0.008,
            eta: 0.003,
            gain: 1.0,
            bandwidth_scale: 0.5,
            sigma0: 1.5,
            sigma_growth: 10.0,
            spurious_rate: 3.0,
            amplitude_decay: 5.0,
            default_difficulty: 0.5,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("noise_floor", self.noise_floor),
            ("bandwidth_scale", self.bandwidth_scale),
            ("sigma0", self.sigma0),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be > 0, got {v}"
                )));
            }
        }
        let non_negative = [
            ("d_max", self.d_max),
            ("eta", self.eta),
            ("gain", self.gain),
            ("sigma_growth", self.sigma_growth),
            ("spurious_rate", self.spurious_rate),
            ("amplitude_decay", self.amplitude_decay),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be >= 0, got {v}"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.default_difficulty) {
            return Err(Error::InvalidArgument(
                "default_difficulty must be in [0, 1]".into(),
            ));
        }
        if self.heatmap_h == 0 || self.heatmap_w == 0 {
            return Err(Error::InvalidArgument(
                "heatmap dimensions must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Everything retraining changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorState {
    pub skill: BTreeMap<SampleId, f64>,
    pub rng_seed: u64,
    pub noise_floor: f64,
}

#[derive(Debug, Clone)]
pub struct SimulatedEstimator {
    state: EstimatorState,
    cfg: SimConfig,
    index: HashMap<SampleId, usize>,
    difficulty: Vec<f64>,
    /// Embedding of each ground-truth pose; fixed, drives the kernel.
    reference: Vec<Vec<f64>>,
    bandwidth: f64,
    frame_count: u32,
    extent: (f64, f64),
    k: usize,
}

/// Frame position and bbox center appended to the pose feature.
const CONTEXT_DIMS: usize = 3;

impl SimulatedEstimator {
    pub fn new(dataset: &VideoDataset, cfg: SimConfig) -> Result<Self> {
        cfg.validate()?;
        dataset.validate()?;
        let extent = dataset.samples.iter().fold((0.0f64, 0.0f64), |acc, s| {
            (
                acc.0.max(s.bbox.x + s.bbox.w),
                acc.1.max(s.bbox.y + s.bbox.h),
            )
        });
        let extent = (extent.0.max(1e-9), extent.1.max(1e-9));
        let mut est = SimulatedEstimator {
            state: EstimatorState {
                skill: BTreeMap::new(),
                rng_seed: cfg.seed,
                noise_floor: cfg.noise_floor,
            },
            cfg,
            index: dataset
                .samples
                .iter()
                .enumerate()
                .map(|(i, s)| (s.sample_id, i))
                .collect(),
            difficulty: dataset
                .samples
                .iter()
                .map(|s| s.difficulty.unwrap_or(cfg.default_difficulty))
                .collect(),
            reference: Vec::new(),
            bandwidth: 1.0,
            frame_count: dataset.frame_count,
            extent,
            k: dataset.num_keypoints(),
        };
        est.reference = dataset
            .samples
            .iter()
            .map(|s| est.embed(&s.gt_pose, s))
            .collect();
        let mut dists = Vec::new();
        for i in 0..est.reference.len() {
            for j in i + 1..est.reference.len() {
                dists.push(sq_dist(&est.reference[i], &est.reference[j]).sqrt());
            }
        }
        let med = median(&dists).unwrap_or(0.0);
        est.bandwidth = if med > 0.0 {
            med * cfg.bandwidth_scale
        } else {
            cfg.bandwidth_scale
        };
        Ok(est)
    }

    pub fn state(&self) -> &EstimatorState {
        &self.state
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn embedding_dim(&self) -> usize {
        feature_dim(self.k) + CONTEXT_DIMS
    }

    /// Hybrid feature of `pose`, frame position in the video, and bbox
    /// center relative to the extent of all boxes.
    fn embed(&self, pose: &Pose, sample: &PoseSample) -> Vec<f64> {
        let mut v = match hybrid_feature(pose, &sample.bbox) {
            Ok(f) => f.to_vec(),
            Err(_) => vec![0.0; feature_dim(self.k)],
        };
        let (cx, cy) = sample.bbox.center();
        v.push(sample.frame_index as f64 / self.frame_count.max(1) as f64);
        v.push(cx / self.extent.0);
        v.push(cy / self.extent.1);
        v
    }

    fn lookup(&self, sample: &PoseSample) -> Result<usize> {
        self.index
            .get(&sample.sample_id)
            .copied()
            .ok_or(Error::Missing {
                what: "sample in estimator dataset",
                id: sample.sample_id,
            })
    }

    /// Kernel-pooled training effect reaching sample `i`.
    fn effect(&self, i: usize) -> f64 {
        let denom = 2.0 * self.bandwidth * self.bandwidth;
        self.state
            .skill
            .iter()
            .map(|(id, &skill)| {
                let j = self.index[id];
                skill * (-sq_dist(&self.reference[i], &self.reference[j]) / denom).exp()
            })
            .sum()
    }

    /// Keypoint displacement of `sample` as a fraction of its bbox diagonal.
    pub fn displacement(&self, sample: &PoseSample) -> Result<f64> {
        let i = self.lookup(sample)?;
        Ok(self.displacement_at(i, self.effect(i)))
    }

    fn displacement_at(&self, i: usize, effect: f64) -> f64 {
        let d0 = self.difficulty[i] * self.cfg.d_max;
        d0 * (-self.cfg.eta * effect).exp() + self.state.noise_floor
    }

    /// Ground truth moved by exactly `e` bbox diagonals in a seeded direction
    /// per keypoint.
    fn displaced_pose(sample: &PoseSample, e: f64, rng: &mut impl Rng) -> Pose {
        let r = e * sample.bbox.diagonal();
        Pose::new(
            sample
                .gt_pose
                .keypoints
                .iter()
                .map(|kp| {
                    let phi = rng.gen_range(0.0..2.0 * PI);
                    Keypoint::new(kp.x + r * phi.cos(), kp.y + r * phi.sin(), 2)
                })
                .collect(),
        )
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

impl PoseEstimator for SimulatedEstimator {
    fn predict(&self, sample: &PoseSample) -> Result<Prediction> {
        let i = self.lookup(sample)?;
        if sample.gt_pose.len() != self.k {
            return Err(Error::DimensionMismatch {
                what: "keypoints",
                expected: self.k,
                found: sample.gt_pose.len(),
            });
        }
        let effect = self.effect(i);
        let e = self.displacement_at(i, effect);
        let quantized = (effect * 1000.0).round() as u64;
        let mut rng = rng_for(&[self.state.rng_seed, sample.sample_id, quantized]);
        let pose = Self::displaced_pose(sample, e, &mut rng);

        let cfg = &self.cfg;
        let (h, w) = (cfg.heatmap_h, cfg.heatmap_w);
        let sigma = cfg.sigma0 * (1.0 + cfg.sigma_growth * e);
        let mut hm = render_heatmap(&pose, &sample.bbox, h, w, sigma, &[])?.heatmap;
        let base_amp = (-cfg.amplitude_decay * e).exp();
        let mut amps = Vec::with_capacity(self.k);
        for ch in 0..self.k {
            let amp = base_amp * (1.0 - 0.1 * rng.gen::<f64>());
            hm.scale_channel(ch, amp);
            amps.push(amp);
        }
        let spurious = (cfg.spurious_rate * e * self.k as f64).round() as usize;
        for _ in 0..spurious {
            let ch = rng.gen_range(0..self.k);
            let col = rng.gen_range(0.0..(w - 1) as f64 + f64::EPSILON);
            let row = rng.gen_range(0.0..(h - 1) as f64 + f64::EPSILON);
            let weight = rng.gen_range(0.3..0.8) * amps[ch];
            hm.add_bump(ch, col, row, sigma, weight);
        }
        let mut pred = Prediction::from_heatmap(sample.sample_id, hm, &sample.bbox, Vec::new());
        pred.embedding = self.embed(&pred.pose, sample);
        Ok(pred)
    }

    fn retrain(&mut self, train_set: &[SampleId], epochs: u32) -> Result<()> {
        for id in train_set {
            if !self.index.contains_key(id) {
                return Err(Error::Missing {
                    what: "training sample",
                    id: *id,
                });
            }
        }
        if epochs == 0 {
            return Ok(());
        }
        let add = epochs as f64 * self.cfg.gain;
        for id in train_set {
            *self.state.skill.entry(*id).or_insert(0.0) += add;
        }
        Ok(())
    }
}

/// Heatmap cell extent of `bbox`, in grid units.
#[cfg(test)]
fn cell_size(bbox: &crate::data::BBox, cfg: &SimConfig) -> (f64, f64) {
    (bbox.w / cfg.heatmap_w as f64, bbox.h / cfg.heatmap_h as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic_video, SynthSpec};
    use crate::metrics::oks;

    fn video(seed: u64) -> VideoDataset {
        generate_synthetic_video(&SynthSpec::default(), seed).unwrap()
    }

    fn oks_of(est: &SimulatedEstimator, ds: &VideoDataset, i: usize) -> f64 {
        let s = &ds.samples[i];
        let p = est.predict(s).unwrap();
        oks(&p.pose, &s.gt_pose, &s.bbox, &ds.keypoint_schema.kappa).unwrap()
    }

    #[test]
    fn untrained_displacement_is_closed_form() {
        let mut ds = video(1);
        ds.samples[0].difficulty = Some(1.0);
        let cfg = SimConfig::default();
        let est = SimulatedEstimator::new(&ds, cfg).unwrap();
        let e = est.displacement(&ds.samples[0]).unwrap();
        assert_eq!(e, cfg.d_max + cfg.noise_floor);
        let s = &ds.samples[0];
        let mut rng = rng_for(&[cfg.seed, s.sample_id, 0]);
        let moved = SimulatedEstimator::displaced_pose(s, e, &mut rng);
        for (p, g) in moved.keypoints.iter().zip(&s.gt_pose.keypoints) {
            assert!((p.dist(g) - e * s.bbox.diagonal()).abs() < 1e-9);
        }
    }

    #[test]
    fn decoded_pose_within_half_cell_of_displaced() {
        let ds = video(2);
        let cfg = SimConfig {
            spurious_rate: 0.0,
            ..SimConfig::default()
        };
        let est = SimulatedEstimator::new(&ds, cfg).unwrap();
        for s in ds.samples.iter().take(10) {
            let p = est.predict(s).unwrap();
            let e = est.displacement(s).unwrap();
            let mut rng = rng_for(&[cfg.seed, s.sample_id, 0]);
            let moved = SimulatedEstimator::displaced_pose(s, e, &mut rng);
            let (cw, ch) = cell_size(&s.bbox, &cfg);
            for (a, b) in p.pose.keypoints.iter().zip(&moved.keypoints) {
                let inside = b.x > s.bbox.x
                    && b.x < s.bbox.x + s.bbox.w
                    && b.y > s.bbox.y
                    && b.y < s.bbox.y + s.bbox.h;
                if inside {
                    assert!((a.x - b.x).abs() <= 0.5 * cw + 1e-9);
                    assert!((a.y - b.y).abs() <= 0.5 * ch + 1e-9);
                }
            }
        }
    }

    #[test]
    fn predictions_are_deterministic() {
        let ds = video(3);
        let est = SimulatedEstimator::new(&ds, SimConfig::default()).unwrap();
        let again = SimulatedEstimator::new(&ds, SimConfig::default()).unwrap();
        for s in &ds.samples[..5] {
            assert_eq!(est.predict(s).unwrap(), again.predict(s).unwrap());
        }
    }

    #[test]
    fn embedding_dimension_is_fixed() {
        let ds = video(3);
        let est = SimulatedEstimator::new(&ds, SimConfig::default()).unwrap();
        for s in &ds.samples {
            assert_eq!(est.predict(s).unwrap().embedding.len(), est.embedding_dim());
        }
    }

    #[test]
    fn zero_epochs_is_identity() {
        let ds = video(4);
        let mut est = SimulatedEstimator::new(&ds, SimConfig::default()).unwrap();
        let before = est.state().clone();
        est.retrain(&[0, 1, 2], 0).unwrap();
        assert_eq!(est.state(), &before);
    }

    #[test]
    fn retraining_a_sample_raises_its_oks() {
        let ds = video(5);
        let hard: Vec<usize> = (0..ds.len())
            .filter(|&i| ds.samples[i].difficulty.unwrap() > 0.3)
            .take(6)
            .collect();
        assert!(!hard.is_empty());
        for i in hard {
            let mut est = SimulatedEstimator::new(&ds, SimConfig::default()).unwrap();
            let before = oks_of(&est, &ds, i);
            est.retrain(&[ds.samples[i].sample_id], 250).unwrap();
            assert!(oks_of(&est, &ds, i) > before, "sample {i}");
        }
    }

    #[test]
    fn large_skill_reaches_noise_floor() {
        let ds = video(6);
        let mut est = SimulatedEstimator::new(&ds, SimConfig::default()).unwrap();
        est.retrain(&[7], 1_000_000).unwrap();
        let e = est.displacement(&ds.samples[7]).unwrap();
        assert!((e - est.state().noise_floor).abs() < 1e-12);
        assert!(oks_of(&est, &ds, 7) > 0.85);
    }

    #[test]
    fn disjoint_retraining_commutes() {
        let ds = video(7);
        let mut a = SimulatedEstimator::new(&ds, SimConfig::default()).unwrap();
        let mut b = a.clone();
        a.retrain(&[1, 2], 40).unwrap();
        a.retrain(&[5, 9], 40).unwrap();
        b.retrain(&[5, 9], 40).unwrap();
        b.retrain(&[1, 2], 40).unwrap();
        assert_eq!(a.state(), b.state());
        assert_eq!(
            a.predict(&ds.samples[3]).unwrap(),
            b.predict(&ds.samples[3]).unwrap()
        );
    }

    #[test]
    fn displacement_non_increasing_in_skill() {
        let ds = video(8);
        let mut est = SimulatedEstimator::new(&ds, SimConfig::default()).unwrap();
        let mut prev: Vec<f64> = ds
            .samples
            .iter()
            .map(|s| est.displacement(s).unwrap())
            .collect();
        for round in 0..5u64 {
            est.retrain(&[round * 7, round * 11 + 3], 30).unwrap();
            let now: Vec<f64> = ds
                .samples
                .iter()
                .map(|s| est.displacement(s).unwrap())
                .collect();
            for (a, b) in now.iter().zip(&prev) {
                assert!(a <= b);
            }
            prev = now;
        }
    }

    #[test]
    fn expected_oks_non_decreasing_in_skill() {
        let ds = video(0);
        for i in [3usize, 40, 71] {
            let expected = |epochs: u32| {
                (0..30u64)
                    .map(|seed| {
                        let mut est = SimulatedEstimator::new(
                            &ds,
                            SimConfig {
                                seed,
                                ..SimConfig::default()
                            },
                        )
                        .unwrap();
                        est.retrain(&[ds.samples[i].sample_id], epochs).unwrap();
                        oks_of(&est, &ds, i)
                    })
                    .sum::<f64>()
                    / 30.0
            };
            let levels: Vec<f64> = [0, 200, 600, 2000, 8000]
                .into_iter()
                .map(expected)
                .collect();
            for w in levels.windows(2) {
                assert!(w[1] >= w[0] - 0.01, "sample {i}: {levels:?}");
            }
        }
    }

    #[test]
    fn heatmap_sharpens_with_skill() {
        let ds = video(1);
        let cfg = SimConfig::default();
        let mut est = SimulatedEstimator::new(&ds, cfg).unwrap();
        let s = &ds.samples[10];
        let mut prev = (f64::INFINITY, usize::MAX);
        for _ in 0..4 {
            let e = est.displacement(s).unwrap();
            let sigma = cfg.sigma0 * (1.0 + cfg.sigma_growth * e);
            let spurious = (cfg.spurious_rate * e * 15.0).round() as usize;
            assert!(sigma <= prev.0 && spurious <= prev.1);
            prev = (sigma, spurious);
            est.retrain(&[s.sample_id], 500).unwrap();
        }
    }

    #[test]
    fn unknown_sample_rejected() {
        let ds = video(9);
        let mut est = SimulatedEstimator::new(&ds, SimConfig::default()).unwrap();
        assert!(est.retrain(&[10_000], 5).is_err());
        let mut other = ds.samples[0].clone();
        other.sample_id = 10_000;
        assert!(est.predict(&other).is_err());
    }
}
