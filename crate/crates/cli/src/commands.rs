use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use vatl_core::atl::{Criterion, StopRule};
use vatl_core::data::save_dataset;

use crate::experiment::{self, AeBank, Job};
use crate::opts::{GenerateArgs, GlobalOpts, RunArgs, ScReportArgs, SweepArgs};
use crate::report;

pub const DEFAULT_VIDEOS: u32 = 4;
pub const DEFAULT_SEEDS: u64 = 5;
pub const DEFAULT_THETA: f64 = 0.6;
pub const DEFAULT_SC_THETAS: [f64; 4] = [0.6, 0.7, 0.8, 0.9];
pub const DEFAULT_SWEEP_CRITERIA: [Criterion; 3] =
    [Criterion::Random, Criterion::Lc, Criterion::ThcWpuDuw];

pub struct Settings {
    pub seed: u64,
    pub jobs: usize,
    pub out_dir: PathBuf,
}

impl Settings {
    pub fn from_opts(g: &GlobalOpts) -> Result<Self> {
        let jobs = g.jobs.unwrap_or(1);
        if jobs == 0 {
            bail!("--jobs must be at least 1");
        }
        Ok(Settings {
            seed: g.seed.unwrap_or(0),
            jobs,
            out_dir: g.out_dir.clone().unwrap_or_else(|| PathBuf::from("out")),
        })
    }

    fn prepare_out_dir(&self) -> Result<&Path> {
        fs::create_dir_all(&self.out_dir)
            .with_context(|| format!("creating {}", self.out_dir.display()))?;
        Ok(&self.out_dir)
    }
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

pub fn generate(args: &GenerateArgs, s: &Settings) -> Result<()> {
    let spec = experiment::synth_spec(&args.synth);
    let videos =
        experiment::synthetic_videos(&spec, args.videos.unwrap_or(DEFAULT_VIDEOS), s.seed)?;
    let dir = s.prepare_out_dir()?;
    for ds in &videos {
        let path = dir.join(format!("{}.json", ds.video_id));
        save_dataset(ds, &path).with_context(|| format!("writing {}", path.display()))?;
        println!("{}\t{}", path.display(), ds.len());
    }
    Ok(())
}

pub fn run(args: &RunArgs, s: &Settings) -> Result<()> {
    let videos = match &args.dataset {
        Some(p) => experiment::load_datasets(std::slice::from_ref(p))?,
        None => experiment::synthetic_videos(&experiment::synth_spec(&args.synth), 1, s.seed)?,
    };
    let base = experiment::base_config(&args.atl);
    let sim = experiment::sim_config(&args.sim);
    let bank = AeBank::pretrain(&videos, &base.pretrain, s.seed)?;
    let job = Job {
        video: 0,
        seed: s.seed,
        criterion: args.criterion.unwrap_or(Criterion::ThcWpuDuw),
        sc: args.sc.unwrap_or(StopRule::None),
        theta: args.theta.unwrap_or(DEFAULT_THETA),
    };
    let log = experiment::run_jobs(&videos, &[job], &base, &sim, &bank, 1)?.remove(0);
    let dir = s.prepare_out_dir()?;
    write(&dir.join("runlog.json"), &log.to_json())?;
    write(
        &dir.join("curve.csv"),
        &report::curves_csv(std::slice::from_ref(&log)),
    )?;
    println!("video_id\t{}", log.video_id);
    println!("criterion\t{}", log.config.criterion);
    println!("cycles\t{}", log.cycles.len());
    println!("final_fraction\t{}", log.final_fraction());
    println!("stopped_early\t{}", log.stopped_early);
    println!("alc\t{}", log.alc);
    Ok(())
}

pub fn sweep(args: &SweepArgs, s: &Settings) -> Result<()> {
    let criteria = args
        .criteria
        .clone()
        .unwrap_or_else(|| DEFAULT_SWEEP_CRITERIA.to_vec());
    if criteria.is_empty() {
        bail!("sweep needs at least one criterion");
    }
    let videos = experiment::suite(
        args.datasets.as_deref(),
        &args.synth,
        args.videos.unwrap_or(DEFAULT_VIDEOS),
        s.seed,
    )?;
    let seeds = args.seeds.unwrap_or(DEFAULT_SEEDS);
    if videos.is_empty() || seeds == 0 {
        bail!("sweep needs at least one video and one seed");
    }
    let base = experiment::base_config(&args.atl);
    let sim = experiment::sim_config(&args.sim);
    let sc = args.sc.unwrap_or(StopRule::None);
    let theta = args.theta.unwrap_or(DEFAULT_THETA);
    let mut jobs = Vec::new();
    for &criterion in &criteria {
        for video in 0..videos.len() {
            for k in 0..seeds {
                jobs.push(Job {
                    video,
                    seed: s.seed.wrapping_add(k),
                    criterion,
                    sc,
                    theta,
                });
            }
        }
    }
    let bank = AeBank::pretrain(&videos, &base.pretrain, s.seed)?;
    let logs = experiment::run_jobs(&videos, &jobs, &base, &sim, &bank, s.jobs)?;
    let summaries = report::summarize(&logs, &base.schedule);
    let dir = s.prepare_out_dir()?;
    write(&dir.join("curves.csv"), &report::curves_csv(&logs))?;
    write(&dir.join("summary.csv"), &report::summary_csv(&summaries))?;
    let alc = report::alc_csv(&summaries);
    write(&dir.join("alc_summary.csv"), &alc)?;
    write(
        &dir.join("learning_curves.svg"),
        &report::learning_curve_svg(&summaries),
    )?;
    print!("{alc}");
    Ok(())
}

pub fn sc_report(args: &ScReportArgs, s: &Settings) -> Result<()> {
    let thetas = args
        .thetas
        .clone()
        .unwrap_or_else(|| DEFAULT_SC_THETAS.to_vec());
    if thetas.is_empty() {
        bail!("sc-report needs at least one theta");
    }
    let videos = experiment::suite(
        args.datasets.as_deref(),
        &args.synth,
        args.videos.unwrap_or(DEFAULT_VIDEOS),
        s.seed,
    )?;
    let seeds = args.seeds.unwrap_or(DEFAULT_SEEDS);
    if videos.is_empty() || seeds == 0 {
        bail!("sc-report needs at least one video and one seed");
    }
    let base = experiment::base_config(&args.atl);
    let sim = experiment::sim_config(&args.sim);
    let criterion = args.criterion.unwrap_or(Criterion::ThcWpuDuw);
    let rules = [StopRule::None, StopRule::Min, StopRule::All];
    let mut jobs = Vec::new();
    for &theta in &thetas {
        for video in 0..videos.len() {
            for k in 0..seeds {
                for sc in rules {
                    jobs.push(Job {
                        video,
                        seed: s.seed.wrapping_add(k),
                        criterion,
                        sc,
                        theta,
                    });
                }
            }
        }
    }
    let bank = AeBank::pretrain(&videos, &base.pretrain, s.seed)?;
    let logs = experiment::run_jobs(&videos, &jobs, &base, &sim, &bank, s.jobs)?;
    let mut runs = Vec::new();
    for (chunk, group) in logs.chunks(rules.len()).zip(jobs.chunks(rules.len())) {
        for (log, job) in chunk.iter().zip(group).skip(1) {
            runs.push(report::ScRun {
                theta: job.theta,
                log,
                reference: &chunk[0],
            });
        }
    }
    let dir = s.prepare_out_dir()?;
    let table = report::sc_table_csv(&runs);
    write(&dir.join("sc_report.csv"), &table)?;
    write(&dir.join("sc_runs.csv"), &report::sc_runs_csv(&runs))?;
    print!("{table}");
    Ok(())
}
