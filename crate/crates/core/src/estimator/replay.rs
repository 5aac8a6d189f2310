//! Replay of externally computed heatmaps and embeddings.
//!
//! A store is a directory holding `index.txt` (one sample id per line) and
//! one `<id>.rec` file per sample: magic `HMRC`, version, sample id, K, H, W,
//! D, then K*H*W heatmap values and D embedding values, all little-endian
//! (counts u32, id u64, values f32).

use std::fs;
use std::path::{Path, PathBuf};

use super::{PoseEstimator, Prediction};
use crate::data::{Heatmap, PoseSample};
use crate::{Error, Result, SampleId};

pub const REPLAY_INDEX_FILE: &str = "index.txt";
const MAGIC: &[u8; 4] = b"HMRC";
const VERSION: u32 = 1;

fn record_path(dir: &Path, id: SampleId) -> PathBuf {
    dir.join(format!("{id}.rec"))
}

/// Writes one record per entry and the index file.
pub fn write_replay_store<'a>(
    dir: impl AsRef<Path>,
    records: impl IntoIterator<Item = (SampleId, &'a Heatmap, &'a [f64])>,
) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut index = String::new();
    for (id, hm, embedding) in records {
        let (k, h, w) = hm.dims();
        let mut buf = Vec::with_capacity(32 + 4 * (hm.values().len() + embedding.len()));
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&id.to_le_bytes());
        for n in [k, h, w, embedding.len()] {
            buf.extend_from_slice(&(n as u32).to_le_bytes());
        }
        for v in hm.values().iter().chain(embedding) {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        let path = record_path(dir, id);
        fs::write(&path, buf).map_err(|e| Error::io(&path, e))?;
        index.push_str(&format!("{id}\n"));
    }
    let path = dir.join(REPLAY_INDEX_FILE);
    fs::write(&path, index).map_err(|e| Error::io(&path, e))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    path: &'a Path,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.bytes.len() < n {
            return Err(Error::Parse(format!(
                "{}: truncated record",
                self.path.display()
            )));
        }
        let (head, rest) = self.bytes.split_at(n);
        self.bytes = rest;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(
            n.checked_mul(4)
                .ok_or_else(|| Error::Parse("record too large".into()))?,
        )?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect())
    }
}

/// Loads the stored heatmap and embedding for `sample` and decodes the pose
/// locally. `expected_k` is the dataset's keypoint count.
pub fn replay_predict(
    store: impl AsRef<Path>,
    sample: &PoseSample,
    expected_k: usize,
) -> Result<Prediction> {
    let path = record_path(store.as_ref(), sample.sample_id);
    let bytes = match fs::read(&path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::RecordNotFound(sample.sample_id))
        }
        Err(e) => return Err(Error::io(&path, e)),
    };
    let mut cur = Cursor {
        bytes: &bytes,
        path: &path,
    };
    if cur.take(4)? != MAGIC {
        return Err(Error::Parse(format!(
            "{}: not a heatmap record",
            path.display()
        )));
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(Error::Parse(format!(
            "{}: unsupported record version {version}",
            path.display()
        )));
    }
    let id = cur.u64()?;
    if id != sample.sample_id {
        return Err(Error::Schema(format!(
            "{}: record holds sample {id}, expected {}",
            path.display(),
            sample.sample_id
        )));
    }
    let (k, h, w, d) = (
        cur.u32()? as usize,
        cur.u32()? as usize,
        cur.u32()? as usize,
        cur.u32()? as usize,
    );
    if k != expected_k {
        return Err(Error::Schema(format!(
            "sample {id}: record has {k} keypoints but the dataset schema has {expected_k}"
        )));
    }
    let values = cur.f32s(k * h * w)?;
    let embedding = cur.f32s(d)?;
    let heatmap = Heatmap::from_values(k, h, w, values)?;
    Ok(Prediction::from_heatmap(
        id,
        heatmap,
        &sample.bbox,
        embedding,
    ))
}

/// Serves predictions from a replay store. Retraining has no effect: the
/// stored outputs are fixed.
#[derive(Debug, Clone)]
pub struct ReplayEstimator {
    dir: PathBuf,
    k: usize,
    ids: Vec<SampleId>,
}

impl ReplayEstimator {
    pub fn open(dir: impl Into<PathBuf>, expected_k: usize) -> Result<Self> {
        let dir = dir.into();
        let path = dir.join(REPLAY_INDEX_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let ids = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(|l| {
                l.parse()
                    .map_err(|_| Error::Parse(format!("{}: bad sample id {l:?}", path.display())))
            })
            .collect::<Result<Vec<SampleId>>>()?;
        Ok(ReplayEstimator {
            dir,
            k: expected_k,
            ids,
        })
    }

    pub fn ids(&self) -> &[SampleId] {
        &self.ids
    }
}

impl PoseEstimator for ReplayEstimator {
    fn predict(&self, sample: &PoseSample) -> Result<Prediction> {
        replay_predict(&self.dir, sample, self.k)
    }

    fn retrain(&mut self, _train_set: &[SampleId], _epochs: u32) -> Result<()> {
        Ok(())
    }
}
