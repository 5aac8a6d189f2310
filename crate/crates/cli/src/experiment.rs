//! Building runs from options and executing them, possibly in parallel.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{Context, Result};
use rayon::prelude::*;
use vatl_core::atl::{run_atl, AtlConfig, Criterion, RunLog, StopRule};
use vatl_core::data::{generate_synthetic_video, load_dataset, SynthSpec, VideoDataset};
use vatl_core::estimator::{SimConfig, SimulatedEstimator};
use vatl_core::wpu::{pretrain_autoencoder, AutoEncoder, PretrainConfig};

use crate::opts::{AtlOpts, SimOpts, SynthOpts};

/// Offset between the base seed and the seed of synthetic video 0.
pub const VIDEO_SEED_OFFSET: u64 = 1000;

pub fn synth_spec(opts: &SynthOpts) -> SynthSpec {
    let d = SynthSpec::default();
    SynthSpec::new(
        opts.frames.unwrap_or(d.frames),
        opts.tracks.unwrap_or(d.tracks),
        opts.keypoints.map_or(d.keypoints, |k| k as usize),
    )
}

pub fn video_seed(base: u64, index: u64) -> u64 {
    base.wrapping_add(VIDEO_SEED_OFFSET).wrapping_add(index)
}

pub fn synthetic_videos(spec: &SynthSpec, count: u32, base_seed: u64) -> Result<Vec<VideoDataset>> {
    (0..count as u64)
        .map(|i| {
            let mut ds = generate_synthetic_video(spec, video_seed(base_seed, i))?;
            ds.video_id = format!("video_{i}");
            Ok(ds)
        })
        .collect()
}

pub fn load_datasets(paths: &[PathBuf]) -> Result<Vec<VideoDataset>> {
    paths
        .iter()
        .map(|p| load_dataset(p).with_context(|| format!("loading dataset {}", p.display())))
        .collect()
}

/// Videos from `datasets` when given, else `count` synthetic ones.
pub fn suite(
    datasets: Option<&[PathBuf]>,
    synth: &SynthOpts,
    count: u32,
    base_seed: u64,
) -> Result<Vec<VideoDataset>> {
    match datasets {
        Some(paths) if !paths.is_empty() => load_datasets(paths),
        _ => synthetic_videos(&synth_spec(synth), count, base_seed),
    }
}

/// Loop settings shared by every run of a command.
pub fn base_config(opts: &AtlOpts) -> AtlConfig {
    let mut cfg = AtlConfig::default();
    if let Some(s) = &opts.schedule {
        cfg.schedule = s.clone();
    }
    if let Some(v) = opts.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = opts.lambda {
        cfg.lambda = v;
    }
    if let Some(v) = opts.m {
        cfg.m = v;
    }
    if let Some(v) = opts.weighting {
        cfg.weighting = v;
    }
    if let Some(v) = opts.mpe_rho {
        cfg.mpe_rho = v;
    }
    if let Some(v) = opts.ae_epochs {
        cfg.ae.epochs = v;
    }
    if let Some(v) = opts.pretrain_epochs {
        cfg.pretrain.train.epochs = v;
    }
    if let Some(v) = opts.pretrain_poses {
        cfg.pretrain.poses = v;
    }
    if let Some(v) = opts.record_wall_time {
        cfg.record_wall_time = v;
    }
    cfg
}

pub fn sim_config(opts: &SimOpts) -> SimConfig {
    let mut cfg = SimConfig::default();
    if let Some(v) = opts.noise_floor {
        cfg.noise_floor = v;
    }
    if let Some(v) = opts.d_max {
        cfg.d_max = v;
    }
    if let Some(v) = opts.eta {
        cfg.eta = v;
    }
    if let Some(v) = opts.gain {
        cfg.gain = v;
    }
    if let Some(v) = opts.bandwidth_scale {
        cfg.bandwidth_scale = v;
    }
    cfg
}

/// One pre-trained autoencoder per keypoint count in the suite.
pub struct AeBank {
    by_k: BTreeMap<usize, AutoEncoder>,
}

impl AeBank {
    pub fn pretrain(videos: &[VideoDataset], cfg: &PretrainConfig, seed: u64) -> Result<Self> {
        let mut by_k = BTreeMap::new();
        for ds in videos {
            let k = ds.num_keypoints();
            if let std::collections::btree_map::Entry::Vacant(e) = by_k.entry(k) {
                log::info!("pre-training autoencoder for {k} keypoints");
                let (ae, report) = pretrain_autoencoder(k, cfg, seed)?;
                log::info!(
                    "pre-training loss {:.5} -> {:.5}",
                    report.initial_loss,
                    report.final_loss
                );
                e.insert(ae);
            }
        }
        Ok(AeBank { by_k })
    }

    pub fn get(&self, k: usize) -> &AutoEncoder {
        &self.by_k[&k]
    }
}

/// One run of a sweep.
#[derive(Debug, Clone, Copy)]
pub struct Job {
    pub video: usize,
    pub seed: u64,
    pub criterion: Criterion,
    pub sc: StopRule,
    pub theta: f64,
}

pub fn run_job(
    ds: &VideoDataset,
    job: &Job,
    base: &AtlConfig,
    sim: &SimConfig,
    ae: &AutoEncoder,
) -> Result<RunLog> {
    let cfg = AtlConfig {
        criterion: job.criterion,
        sc: job.sc,
        theta: job.theta,
        seed: job.seed,
        ..base.clone()
    };
    let sim = SimConfig {
        seed: job.seed,
        ..*sim
    };
    let mut estimator = SimulatedEstimator::new(ds, sim)?;
    let mut log = run_atl(ds, &mut estimator, &cfg, ae)
        .with_context(|| format!("{} on {} (seed {})", job.criterion, ds.video_id, job.seed))?;
    log.estimator = Some(serde_json::to_value(sim)?);
    Ok(log)
}

/// Runs `jobs` on a pool of `threads` workers. Results keep job order.
pub fn run_jobs(
    videos: &[VideoDataset],
    jobs: &[Job],
    base: &AtlConfig,
    sim: &SimConfig,
    bank: &AeBank,
    threads: usize,
) -> Result<Vec<RunLog>> {
    base.validate()?;
    sim.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()?;
    let total = jobs.len();
    let done = std::sync::atomic::AtomicUsize::new(0);
    pool.install(|| {
        jobs.par_iter()
            .map(|job| {
                let ds = &videos[job.video];
                let log = run_job(ds, job, base, sim, bank.get(ds.num_keypoints()))?;
                let n = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
                log::info!(
                    "[{n}/{total}] {} {} seed {} sc {} theta {}: alc {:.4}",
                    job.criterion,
                    ds.video_id,
                    job.seed,
                    job.sc,
                    job.theta,
                    log.alc
                );
                Ok(log)
            })
            .collect()
    })
}
