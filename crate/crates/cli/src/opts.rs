//! Command-line flags. Every field is optional so a config file can fill the
//! gaps; defaults are applied after layering.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use vatl_core::atl::{Criterion, StopRule};
use vatl_core::selection::Weighting;

#[derive(Debug, Parser)]
#[command(
    name = "vatl",
    version,
    about = "Active transfer learning for per-video pose estimation"
)]
pub struct Cli {
    /// TOML file with [global], [generate], [run], [sweep] and [sc_report] sections.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write synthetic videos as dataset files.
    Generate(GenerateArgs),
    /// Run the active learning loop on one video.
    Run(RunArgs),
    /// Compare criteria over several videos and seeds.
    Sweep(SweepArgs),
    /// Compare the stopping criteria over a list of target OKS values.
    ScReport(ScReportArgs),
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct GlobalOpts {
    /// Base seed; videos and runs derive their seeds from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for sweeps.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthOpts {
    /// Frames per synthetic video.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub frames: Option<u32>,
    /// Person tracks per synthetic video.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub tracks: Option<u32>,
    /// Keypoints per pose (15 or 17 use named skeletons).
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
    pub keypoints: Option<u64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct AtlOpts {
    /// Comma-separated fractions annotated per cycle; must sum to 1.
    #[arg(long, value_delimiter = ',')]
    pub schedule: Option<Vec<f64>>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Margin of the misestimated set.
    #[arg(long)]
    pub m: Option<f64>,
    /// Weighting of THC against WPU: fixed:<w>, increase, const or decrease.
    #[arg(long)]
    pub weighting: Option<Weighting>,
    /// Relative peak threshold of the MPE criterion.
    #[arg(long)]
    pub mpe_rho: Option<f64>,
    /// Autoencoder fine-tuning epochs per cycle.
    #[arg(long)]
    pub ae_epochs: Option<u32>,
    /// Autoencoder pre-training epochs.
    #[arg(long)]
    pub pretrain_epochs: Option<u32>,
    /// Source poses for autoencoder pre-training.
    #[arg(long)]
    pub pretrain_poses: Option<usize>,
    /// Store per-cycle wall time in run logs (breaks byte reproducibility).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub record_wall_time: Option<bool>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct SimOpts {
    /// Displacement no amount of training removes (fraction of bbox diagonal).
    #[arg(long)]
    pub noise_floor: Option<f64>,
    /// Displacement at difficulty 1 before training.
    #[arg(long)]
    pub d_max: Option<f64>,
    /// Decay rate of the displacement in training effect.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Skill per sample and epoch.
    #[arg(long)]
    pub gain: Option<f64>,
    /// Multiplier of the median-distance kernel bandwidth.
    #[arg(long)]
    pub bandwidth_scale: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerateArgs {
    /// Number of videos.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub videos: Option<u32>,
    #[command(flatten)]
    #[serde(flatten)]
    pub synth: SynthOpts,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct RunArgs {
    /// Dataset file; a synthetic video is generated when absent.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub criterion: Option<Criterion>,
    /// Stopping rule: none, min or all.
    #[arg(long)]
    pub sc: Option<StopRule>,
    /// Target OKS.
    #[arg(long)]
    pub theta: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub synth: SynthOpts,
    #[command(flatten)]
    #[serde(flatten)]
    pub atl: AtlOpts,
    #[command(flatten)]
    #[serde(flatten)]
    pub sim: SimOpts,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepArgs {
    /// Comma-separated criteria.
    #[arg(long, value_delimiter = ',')]
    pub criteria: Option<Vec<Criterion>>,
    /// Number of run seeds per video.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub seeds: Option<u64>,
    /// Number of synthetic videos (ignored with --datasets).
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub videos: Option<u32>,
    /// Comma-separated dataset files to use instead of synthetic videos.
    #[arg(long, value_delimiter = ',')]
    pub datasets: Option<Vec<PathBuf>>,
    #[arg(long)]
    pub sc: Option<StopRule>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub synth: SynthOpts,
    #[command(flatten)]
    #[serde(flatten)]
    pub atl: AtlOpts,
    #[command(flatten)]
    #[serde(flatten)]
    pub sim: SimOpts,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct ScReportArgs {
    /// Comma-separated target OKS values.
    #[arg(long, value_delimiter = ',')]
    pub thetas: Option<Vec<f64>>,
    #[arg(long)]
    pub criterion: Option<Criterion>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub seeds: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub videos: Option<u32>,
    #[arg(long, value_delimiter = ',')]
    pub datasets: Option<Vec<PathBuf>>,
    #[command(flatten)]
    #[serde(flatten)]
    pub synth: SynthOpts,
    #[command(flatten)]
    #[serde(flatten)]
    pub atl: AtlOpts,
    #[command(flatten)]
    #[serde(flatten)]
    pub sim: SimOpts,
}
