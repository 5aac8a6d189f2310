//! Synthetic videos: smooth per-track articulated motion with a hidden
//! per-sample difficulty.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{BBox, Keypoint, KeypointSchema, Pose, PoseSample, VideoDataset};
use crate::rng::rng_for;
use crate::{Error, Result};

/// Largest allowed per-frame keypoint displacement, as a fraction of the
/// bbox diagonal.
pub const MAX_STEP_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub frames: u32,
    pub tracks: u32,
    pub keypoints: usize,
    pub canvas_w: f64,
    pub canvas_h: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            frames: 30,
            tracks: 3,
            keypoints: 15,
            canvas_w: 320.0,
            canvas_h: 240.0,
        }
    }
}

impl SynthSpec {
    pub fn new(frames: u32, tracks: u32, keypoints: usize) -> Self {
        SynthSpec {
            frames,
            tracks,
            keypoints,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone)]
struct TrackParams {
    height: f64,
    facing: f64,
    nose_dir: f64,
    arm_swing: f64,
    raise: [f64; 2],
    elbow_bend: f64,
    leg_swing: f64,
    knee_bend: f64,
    omega: f64,
    phase: f64,
    lean: f64,
    start: (f64, f64),
    vel: (f64, f64),
    wobble_phase: (f64, f64),
    scale_omega: f64,
    base_difficulty: f64,
    events: Vec<(f64, f64, f64)>,
}

impl TrackParams {
    fn sample<R: Rng>(rng: &mut R, spec: &SynthSpec) -> Self {
        let mut raise = [rng.gen_range(0.0..0.5), rng.gen_range(0.0..0.5)];
        if rng.gen_bool(0.2) {
            raise[rng.gen_range(0..2)] = rng.gen_range(1.5..2.5);
        }
        let n_events = rng.gen_range(0..=2);
        let events = (0..n_events)
            .map(|_| {
                (
                    rng.gen_range(0.0..spec.frames as f64),
                    rng.gen_range(1.5..4.0),
                    rng.gen_range(0.4..1.0),
                )
            })
            .collect();
        TrackParams {
            height: rng.gen_range(70.0..130.0),
            facing: rng.gen_range(0.5..1.0),
            nose_dir: if rng.gen_bool(0.5) { 1.0 } else { -1.0 },
            arm_swing: rng.gen_range(0.15..0.5),
            raise,
            elbow_bend: rng.gen_range(0.1..0.9),
            leg_swing: rng.gen_range(0.1..0.45),
            knee_bend: rng.gen_range(0.0..0.3),
            omega: rng.gen_range(0.08..0.22),
            phase: rng.gen_range(0.0..2.0 * PI),
            lean: rng.gen_range(-0.12..0.12),
            start: (
                rng.gen_range(0.2..0.8) * spec.canvas_w,
                rng.gen_range(0.45..0.65) * spec.canvas_h,
            ),
            vel: (rng.gen_range(-1.2..1.2), rng.gen_range(-0.3..0.3)),
            wobble_phase: (rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.0..2.0 * PI)),
            scale_omega: rng.gen_range(0.05..0.15),
            base_difficulty: rng.gen_range(0.0..0.3),
            events,
        }
    }

    /// Body-frame joints (units of person height, y down, hip center at
    /// the origin, subject's left = +x) in the 15-joint layout.
    fn body(&self, tau: f64) -> [(f64, f64); 15] {
        let phi = self.phase + self.omega * tau;
        let f = self.facing;
        let sc = (0.0, -0.30);
        let mut j = [(0.0, 0.0); 15];
        j[0] = (0.03 * (1.0 - f) * self.nose_dir, -0.41);
        j[1] = (0.0, -0.35);
        j[2] = (0.0, -0.50);
        for (side, s) in [(0usize, 1.0f64), (1, -1.0)] {
            let sh = (sc.0 + s * 0.10 * f, sc.1);
            let hip = (s * 0.07 * f, 0.0);
            let upper = self.raise[side] + s * self.arm_swing * phi.sin();
            let elbow = (sh.0 + 0.16 * s * upper.sin(), sh.1 + 0.16 * upper.cos());
            let fore = upper + self.elbow_bend + 0.15 * (1.0 + (phi + s * 0.7).sin());
            let wrist = (elbow.0 + 0.14 * s * fore.sin(), elbow.1 + 0.14 * fore.cos());
            let leg_phase = phi + if s > 0.0 { PI } else { 0.0 };
            let thigh = self.leg_swing * leg_phase.sin();
            let knee = (
                hip.0 + 0.23 * (thigh.sin() + s * 0.04),
                hip.1 + 0.23 * thigh.cos(),
            );
            let bend = self.knee_bend + 0.35 * (leg_phase + PI / 2.0).sin().max(0.0).powi(2);
            let shin = thigh - bend;
            let ankle = (knee.0 + 0.23 * shin.sin(), knee.1 + 0.23 * shin.cos());
            j[3 + side] = sh;
            j[5 + side] = elbow;
            j[7 + side] = wrist;
            j[9 + side] = hip;
            j[11 + side] = knee;
            j[13 + side] = ankle;
        }
        j
    }

    fn keypoints(&self, tau: f64, k: usize) -> Vec<(f64, f64)> {
        let body = self.body(tau);
        let phi = self.phase + self.omega * tau;
        let psi = self.lean + 0.04 * (0.5 * phi).sin();
        let scale = self.height * (1.0 + 0.04 * (self.scale_omega * tau).sin());
        let root = (
            self.start.0 + self.vel.0 * tau + 3.0 * (0.07 * tau + self.wobble_phase.0).sin(),
            self.start.1 + self.vel.1 * tau + 1.5 * (0.05 * tau + self.wobble_phase.1).sin(),
        );
        let (sin, cos) = psi.sin_cos();
        let place = |(bx, by): (f64, f64)| {
            (
                root.0 + scale * (cos * bx - sin * by),
                root.1 + scale * (sin * bx + cos * by),
            )
        };
        let layout: Vec<(f64, f64)> = match k {
            15 => body.to_vec(),
            17 => {
                let f = self.facing;
                let mut v = vec![
                    body[0],
                    (0.02 * f, -0.43),
                    (-0.02 * f, -0.43),
                    (0.05 * f, -0.42),
                    (-0.05 * f, -0.42),
                ];
                v.extend_from_slice(&body[3..15]);
                v
            }
            _ => (0..k)
                .map(|i| {
                    if i < 15 {
                        body[i]
                    } else {
                        let a = (i - 15) % 14;
                        let (p, q) = (body[a], body[a + 1]);
                        (0.5 * (p.0 + q.0), 0.5 * (p.1 + q.1))
                    }
                })
                .collect(),
        };
        layout.into_iter().map(place).collect()
    }

    fn difficulty(&self, t: f64, jitter: f64) -> f64 {
        let bumps: f64 = self
            .events
            .iter()
            .map(|&(t0, w, peak)| peak * (-(t - t0).powi(2) / (2.0 * w * w)).exp())
            .sum();
        (self.base_difficulty + bumps + jitter).clamp(0.0, 1.0)
    }
}

fn bbox_of(points: &[(f64, f64)], height: f64) -> BBox {
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for &(x, y) in points {
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    let pad = 0.05 * height;
    let w = (x1 - x0) * 1.2 + 2.0 * pad;
    let h = (y1 - y0) * 1.2 + 2.0 * pad;
    BBox::new(x0 - 0.1 * (x1 - x0) - pad, y0 - 0.1 * (y1 - y0) - pad, w, h)
}

/// Keypoint track over all frames, slowed down until no keypoint moves
/// more than [`MAX_STEP_FRACTION`] of the bbox diagonal between frames.
fn track_frames(p: &TrackParams, frames: u32, k: usize) -> Vec<TrackFrame> {
    let mut speed = 1.0;
    loop {
        let seq: Vec<(Vec<(f64, f64)>, BBox)> = (0..frames)
            .map(|t| {
                let kps = p.keypoints(t as f64 * speed, k);
                let bb = bbox_of(&kps, p.height);
                (kps, bb)
            })
            .collect();
        let ok = seq.windows(2).all(|w| {
            let diag = w[0].1.diagonal().min(w[1].1.diagonal());
            w[0].0
                .iter()
                .zip(&w[1].0)
                .all(|(a, b)| (a.0 - b.0).hypot(a.1 - b.1) <= MAX_STEP_FRACTION * diag)
        });
        if ok || speed < 1e-3 {
            return seq;
        }
        speed *= 0.8;
    }
}

/// Joint positions and box of one track in one frame.
type TrackFrame = (Vec<(f64, f64)>, BBox);

/// Deterministic synthetic video for `(spec, seed)`.
pub fn generate_synthetic_video(spec: &SynthSpec, seed: u64) -> Result<VideoDataset> {
    if spec.frames < 1 || spec.tracks < 1 || spec.keypoints < 2 {
        return Err(Error::InvalidArgument(format!(
            "synthetic spec needs frames >= 1, tracks >= 1, keypoints >= 2 (got {}, {}, {})",
            spec.frames, spec.tracks, spec.keypoints
        )));
    }
    if !(spec.canvas_w > 0.0 && spec.canvas_h > 0.0) {
        return Err(Error::InvalidArgument(
            "canvas dimensions must be > 0".into(),
        ));
    }
    let k = spec.keypoints;
    let tracks: Vec<(TrackParams, Vec<TrackFrame>)> = (0..spec.tracks)
        .map(|t| {
            let mut rng = rng_for(&[seed, 0x7472_6163, t as u64]);
            let p = TrackParams::sample(&mut rng, spec);
            let frames = track_frames(&p, spec.frames, k);
            (p, frames)
        })
        .collect();

    let mut samples = Vec::with_capacity((spec.frames * spec.tracks) as usize);
    for frame in 0..spec.frames {
        for (t, (params, seq)) in tracks.iter().enumerate() {
            let mut rng = rng_for(&[seed, 0x6469_6666, t as u64, frame as u64]);
            let jitter = rng.gen_range(-0.03..0.03);
            let (kps, bbox) = &seq[frame as usize];
            samples.push(PoseSample {
                sample_id: samples.len() as u64,
                frame_index: frame,
                track_id: t as i64,
                bbox: *bbox,
                gt_pose: Pose::new(kps.iter().map(|&(x, y)| Keypoint::visible(x, y)).collect()),
                difficulty: Some(params.difficulty(frame as f64, jitter)),
            });
        }
    }
    VideoDataset::new(
        format!("synth-{seed}"),
        spec.frames,
        KeypointSchema::for_keypoints(k),
        samples,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_spec_gives_ninety_samples_deterministically() {
        let spec = SynthSpec::new(30, 3, 15);
        let a = generate_synthetic_video(&spec, 7).unwrap();
        let b = generate_synthetic_video(&spec, 7).unwrap();
        assert_eq!(a.len(), 90);
        assert_eq!(a.to_json_string(), b.to_json_string());
    }

    #[test]
    fn minimal_spec() {
        let d = generate_synthetic_video(&SynthSpec::new(1, 1, 15), 3).unwrap();
        assert_eq!(d.len(), 1);
        d.validate().unwrap();
    }

    #[test]
    fn seeds_differ() {
        let spec = SynthSpec::new(30, 3, 15);
        let a = generate_synthetic_video(&spec, 7).unwrap();
        let b = generate_synthetic_video(&spec, 8).unwrap();
        assert_ne!(
            serde_json::to_string(&a.samples).unwrap(),
            serde_json::to_string(&b.samples).unwrap()
        );
    }

    #[test]
    fn invalid_dimensions_rejected() {
        assert!(generate_synthetic_video(&SynthSpec::new(0, 3, 15), 1).is_err());
        assert!(generate_synthetic_video(&SynthSpec::new(3, 0, 15), 1).is_err());
        assert!(generate_synthetic_video(&SynthSpec::new(3, 3, 1), 1).is_err());
    }

    #[test]
    fn other_keypoint_counts() {
        for k in [2, 5, 17, 20] {
            let d = generate_synthetic_video(&SynthSpec::new(4, 2, k), 11).unwrap();
            assert_eq!(d.num_keypoints(), k);
        }
    }

    #[test]
    fn per_frame_displacement_bounded() {
        for seed in 0..20 {
            let d = generate_synthetic_video(&SynthSpec::new(30, 3, 15), seed).unwrap();
            for track in d.tracks() {
                for w in track.windows(2) {
                    let (a, b) = (&d.samples[w[0]], &d.samples[w[1]]);
                    let diag = a.bbox.diagonal().min(b.bbox.diagonal());
                    for (p, q) in a.gt_pose.keypoints.iter().zip(&b.gt_pose.keypoints) {
                        assert!(p.dist(q) <= MAX_STEP_FRACTION * diag + 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn keypoints_inside_bbox() {
        let d = generate_synthetic_video(&SynthSpec::default(), 5).unwrap();
        for s in &d.samples {
            for kp in &s.gt_pose.keypoints {
                assert!(kp.x > s.bbox.x && kp.x < s.bbox.x + s.bbox.w);
                assert!(kp.y > s.bbox.y && kp.y < s.bbox.y + s.bbox.h);
            }
        }
    }
}
