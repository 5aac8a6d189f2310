//! JSON dataset files: `video_id`, `frame_count`, `keypoint_schema`
//! (`names`, `kappa`) and `samples`.

use std::fs;
use std::path::Path;

use super::VideoDataset;
use crate::{Error, Result};

impl VideoDataset {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let d: VideoDataset =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        d.validate()?;
        Ok(d)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("dataset serializes")
    }
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<VideoDataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    VideoDataset::from_json_str(&text)
}

pub fn save_dataset(dataset: &VideoDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = dataset.to_json_string();
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{BBox, Keypoint, KeypointSchema, Pose, PoseSample};

    fn seven_sample_video() -> String {
        // 3 frames with 2, 4 and 1 persons
        let mut samples = Vec::new();
        let mut id = 0;
        for (frame, persons) in [2, 4, 1].into_iter().enumerate() {
            for track in 0..persons {
                samples.push(serde_json::json!({
                    "sample_id": id,
                    "frame_index": frame,
                    "track_id": track,
                    "bbox": [0.0, 0.0, 10.0, 20.0],
                    "keypoints": [[1.0, 2.0, 2], [3.0, 4.0, 1]],
                }));
                id += 1;
            }
        }
        serde_json::json!({
            "video_id": "toy",
            "frame_count": 3,
            "keypoint_schema": {"names": ["a", "b"], "kappa": [0.05, 0.05]},
            "samples": samples,
        })
        .to_string()
    }

    #[test]
    fn loads_seven_samples() {
        let d = VideoDataset::from_json_str(&seven_sample_video()).unwrap();
        assert_eq!(d.len(), 7);
        assert_eq!(d.samples[0].gt_pose.keypoints[1].v, 1);
    }

    #[test]
    fn empty_samples_rejected() {
        let text = r#"{"video_id":"e","frame_count":1,"keypoint_schema":{"names":["a","b"],"kappa":[0.1,0.1]},"samples":[]}"#;
        let err = VideoDataset::from_json_str(text).unwrap_err();
        assert_eq!(err.to_string(), "schema violation: dataset has no samples");
    }

    #[test]
    fn duplicate_frame_track_rejected() {
        let text = seven_sample_video().replace(r#""track_id":1"#, r#""track_id":0"#);
        let err = VideoDataset::from_json_str(&text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("duplicate (frame, track)"), "{msg}");
        assert!(msg.contains("frame 0, track 0"), "{msg}");
    }

    #[test]
    fn bad_visibility_is_parse_error() {
        let text = seven_sample_video().replacen("[1.0,2.0,2]", "[1.0,2.0,7]", 1);
        assert!(matches!(
            VideoDataset::from_json_str(&text),
            Err(Error::Parse(_))
        ));
    }

    #[test]
    fn file_round_trip() {
        let d = VideoDataset::new(
            "rt",
            2,
            KeypointSchema::for_keypoints(2),
            vec![PoseSample {
                sample_id: 4,
                frame_index: 1,
                track_id: -2,
                bbox: BBox::new(0.5, 1.5, 3.25, 7.0),
                gt_pose: Pose::new(vec![
                    Keypoint::new(0.1, 0.2, 0),
                    Keypoint::visible(1.0 / 3.0, 2.0),
                ]),
                difficulty: Some(0.25),
            }],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rt.json");
        save_dataset(&d, &p).unwrap();
        assert_eq!(load_dataset(&p).unwrap(), d);
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            load_dataset("/nonexistent/x.json"),
            Err(Error::Io { .. })
        ));
    }
}
