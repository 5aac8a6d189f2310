use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{
    budget_schedule, compute_epochs, estimate_generalization, misestimated_set, sc_all, sc_min,
    AtlConfig, Criterion, LabelState, StopRule,
};
use crate::data::VideoDataset;
use crate::estimator::{PoseEstimator, Prediction};
use crate::metrics::{ap_at, ap_thresholds, oks, ApEntry, LearningCurve};
use crate::selection::{
    combine_uncertainty, select_coreset, select_duw, select_kmeans, select_random, select_topk,
    SelectionRequest,
};
use crate::uncertainty::{
    lc_score, mpe_score, normalize_heatmap, thc_score, tpc_score, TrackHeatmap, TrackPose,
};
use crate::wpu::{ae_retrain_cycle, feature_dim, wpu_value, AutoEncoder};
use crate::{Error, Result, SampleId};

pub const RUNLOG_SCHEMA_VERSION: u32 = 1;

/// OKS threshold of the learning curve.
pub const HEADLINE_TAU: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauAp {
    pub tau: f64,
    pub ap: f64,
}

/// Evaluation after a round of predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub labeled_fraction: f64,
    pub ap: Vec<TauAp>,
    /// AP at the curve threshold (0.6).
    pub ap_headline: f64,
    pub ap_at_theta: f64,
    /// Unlabeled samples whose predicted OKS is below theta.
    pub below_theta: usize,
    /// Mean predicted OKS over all samples.
    pub mean_oks: f64,
    pub mean_thc_u: Option<f64>,
    pub mean_wpu_u: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub cycle: usize,
    pub budget: usize,
    /// Selection order.
    pub selected: Vec<SampleId>,
    /// Generalization weight handed to DUW.
    pub g_selection: f64,
    pub g_c: f64,
    pub epochs: u32,
    pub misestimated: Vec<SampleId>,
    pub sc_min: bool,
    pub sc_all: bool,
    pub sc_fired: bool,
    #[serde(flatten)]
    pub eval: EvalRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub schema_version: u32,
    pub video_id: String,
    pub num_samples: usize,
    pub config: AtlConfig,
    /// Estimator settings, when the caller provides them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimator: Option<serde_json::Value>,
    pub initial: EvalRecord,
    pub cycles: Vec<CycleRecord>,
    pub stopped_early: bool,
    pub curve: LearningCurve,
    pub alc: f64,
}

impl RunLog {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run log serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let log: RunLog =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("run log: {e}")))?;
        if log.schema_version != RUNLOG_SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "run log schema version {} (supported: {RUNLOG_SCHEMA_VERSION})",
                log.schema_version
            )));
        }
        Ok(log)
    }

    pub fn write_curve_csv<W: Write>(&self, out: &mut W, header: bool) -> std::io::Result<()> {
        self.curve.write_csv(
            out,
            self.config.criterion.name(),
            self.config.seed,
            &self.video_id,
            header,
        )
    }

    /// Labeled fraction at which the run ended.
    pub fn final_fraction(&self) -> f64 {
        self.cycles.last().map_or(0.0, |c| c.eval.labeled_fraction)
    }

    /// Cycle whose stopping rule ended the run.
    pub fn stop_cycle(&self) -> Option<&CycleRecord> {
        self.cycles.iter().find(|c| c.sc_fired)
    }
}

/// Per-sample quantities derived from one round of predictions.
struct Round {
    preds: Vec<Prediction>,
    oks: Vec<f64>,
    thc: Vec<f64>,
    wpu: Vec<f64>,
}

struct Ctx<'a> {
    ds: &'a VideoDataset,
    cfg: &'a AtlConfig,
    tracks: Vec<Vec<usize>>,
    index: BTreeMap<SampleId, usize>,
}

impl Ctx<'_> {
    fn predict(&self, est: &dyn PoseEstimator, ae: &AutoEncoder) -> Result<Round> {
        let preds = self
            .ds
            .samples
            .iter()
            .map(|s| est.predict(s))
            .collect::<Result<Vec<_>>>()?;
        let kappa = &self.ds.keypoint_schema.kappa;
        let oks = self
            .ds
            .samples
            .iter()
            .zip(&preds)
            .map(|(s, p)| oks(&p.pose, &s.gt_pose, &s.bbox, kappa))
            .collect::<Result<Vec<_>>>()?;
        let thc = self.thc(&preds)?;
        let wpu = self.wpu(&preds, ae)?;
        Ok(Round {
            preds,
            oks,
            thc,
            wpu,
        })
    }

    fn thc(&self, preds: &[Prediction]) -> Result<Vec<f64>> {
        let normalized: Vec<_> = preds
            .iter()
            .map(|p| normalize_heatmap(&p.heatmap).0)
            .collect();
        let mut out = vec![0.0; preds.len()];
        for track in &self.tracks {
            let seq: Vec<TrackHeatmap> = track
                .iter()
                .map(|&i| TrackHeatmap {
                    sample_id: self.ds.samples[i].sample_id,
                    frame_index: self.ds.samples[i].frame_index,
                    heatmap: &normalized[i],
                })
                .collect();
            for (t, &i) in track.iter().enumerate() {
                out[i] = thc_score(&seq, t)?.value;
            }
        }
        Ok(out)
    }

    fn tpc(&self, preds: &[Prediction]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; preds.len()];
        for track in &self.tracks {
            let seq: Vec<TrackPose> = track
                .iter()
                .map(|&i| TrackPose {
                    sample_id: self.ds.samples[i].sample_id,
                    frame_index: self.ds.samples[i].frame_index,
                    pose: &preds[i].pose,
                    bbox: &self.ds.samples[i].bbox,
                })
                .collect();
            for (t, &i) in track.iter().enumerate() {
                out[i] = tpc_score(&seq, t)?.value;
            }
        }
        Ok(out)
    }

    fn wpu(&self, preds: &[Prediction], ae: &AutoEncoder) -> Result<Vec<f64>> {
        self.ds
            .samples
            .iter()
            .zip(preds)
            .map(|(s, p)| wpu_value(ae, &p.pose, &s.bbox))
            .collect()
    }

    fn over<'v>(
        &self,
        ids: impl IntoIterator<Item = &'v SampleId>,
        values: &[f64],
    ) -> BTreeMap<SampleId, f64> {
        ids.into_iter()
            .map(|id| (*id, values[self.index[id]]))
            .collect()
    }

    fn mean_over(&self, ids: &BTreeSet<SampleId>, values: &[f64]) -> Option<f64> {
        (!ids.is_empty())
            .then(|| ids.iter().map(|id| values[self.index[id]]).sum::<f64>() / ids.len() as f64)
    }

    fn evaluate(&self, round: &Round, labels: &LabelState) -> Result<EvalRecord> {
        let entries: Vec<ApEntry> = self
            .ds
            .samples
            .iter()
            .zip(&round.preds)
            .zip(&round.oks)
            .map(|((s, p), &o)| ApEntry {
                id: s.sample_id,
                oks: o,
                confidence: p.confidence(),
                labeled: labels.labeled.contains(&s.sample_id),
            })
            .collect();
        let ap = ap_thresholds()
            .into_iter()
            .map(|tau| {
                Ok(TauAp {
                    tau,
                    ap: ap_at(&entries, tau)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let below = misestimated_set(
            &self.over(&labels.unlabeled, &round.oks),
            self.cfg.theta,
            0.0,
        );
        Ok(EvalRecord {
            labeled_fraction: labels.labeled_fraction(),
            ap_headline: ap_at(&entries, HEADLINE_TAU)?,
            ap_at_theta: ap_at(&entries, self.cfg.theta)?,
            ap,
            below_theta: below.len(),
            mean_oks: round.oks.iter().sum::<f64>() / round.oks.len() as f64,
            mean_thc_u: self.mean_over(&labels.unlabeled, &round.thc),
            mean_wpu_u: self.mean_over(&labels.unlabeled, &round.wpu),
        })
    }

    fn select(
        &self,
        round: &Round,
        labels: &LabelState,
        budget: usize,
        g_sel: f64,
    ) -> Result<Vec<SampleId>> {
        let cfg = self.cfg;
        let u: Vec<SampleId> = labels.unlabeled.iter().copied().collect();
        let mut req = SelectionRequest {
            unlabeled: u.clone(),
            labeled: labels.labeled.iter().copied().collect(),
            budget,
            g_c: g_sel,
            lambda: cfg.lambda,
            seed: crate::rng::derive(&[cfg.seed, labels.labeled.len() as u64]),
            ..Default::default()
        };
        let needs_embeddings = cfg.criterion.is_duw()
            || matches!(cfg.criterion, Criterion::KMeans | Criterion::CoreSet);
        if needs_embeddings {
            req.embeddings = self
                .ds
                .samples
                .iter()
                .zip(&round.preds)
                .map(|(s, p)| (s.sample_id, p.embedding.clone()))
                .collect();
        }
        let fraction = labels.labeled_fraction();
        let uncertainty = match cfg.criterion {
            Criterion::Random | Criterion::KMeans | Criterion::CoreSet => None,
            Criterion::Lc => Some(
                round
                    .preds
                    .iter()
                    .map(|p| lc_score(p).value)
                    .collect::<Vec<_>>(),
            ),
            Criterion::Mpe => Some(
                round
                    .preds
                    .iter()
                    .map(|p| mpe_score(p, cfg.mpe_rho).value)
                    .collect(),
            ),
            Criterion::Tpc => Some(self.tpc(&round.preds)?),
            Criterion::Thc | Criterion::ThcDuw => Some(round.thc.clone()),
            Criterion::Wpu | Criterion::WpuDuw => Some(round.wpu.clone()),
            Criterion::ThcWpu | Criterion::ThcWpuDuw | Criterion::ThcWpuDuwFixed => {
                let c = combine_uncertainty(
                    &self.over(&u, &round.thc),
                    &self.over(&u, &round.wpu),
                    fraction,
                    cfg.weighting,
                )?;
                let mut full = vec![0.0; self.ds.len()];
                for (id, v) in c {
                    full[self.index[&id]] = v;
                }
                Some(full)
            }
        };
        // with lambda = 0 the acquisition is plain Core-Set, including its
        // cycle-0 bootstrap
        let duw_uses_uncertainty = cfg.criterion.is_duw() && cfg.lambda > 0.0;
        if let Some(values) = &uncertainty {
            if !cfg.criterion.is_duw() || duw_uses_uncertainty {
                req.uncertainties = self.over(&u, values);
            }
        }
        match cfg.criterion {
            Criterion::Random => select_random(&req),
            Criterion::KMeans => select_kmeans(&req),
            Criterion::CoreSet => select_coreset(&req),
            c if c.is_duw() => {
                if duw_uses_uncertainty {
                    select_duw(&req)
                } else {
                    select_coreset(&req)
                }
            }
            _ => select_topk(&req),
        }
    }
}

/// Runs the full cycle on one video. `ae` is the pre-trained autoencoder;
/// it is fine-tuned on labeled poses when the criterion uses WPU.
pub fn run_atl(
    dataset: &VideoDataset,
    estimator: &mut dyn PoseEstimator,
    config: &AtlConfig,
    ae: &AutoEncoder,
) -> Result<RunLog> {
    config.validate()?;
    dataset.validate()?;
    let k = dataset.num_keypoints();
    if ae.input_dim() != feature_dim(k) {
        return Err(Error::DimensionMismatch {
            what: "autoencoder input for the dataset's keypoints",
            expected: feature_dim(k),
            found: ae.input_dim(),
        });
    }
    let ctx = Ctx {
        ds: dataset,
        cfg: config,
        tracks: dataset.tracks(),
        index: dataset
            .samples
            .iter()
            .enumerate()
            .map(|(i, s)| (s.sample_id, i))
            .collect(),
    };
    let n = dataset.len();
    let mut ae = ae.clone();
    let mut labels = LabelState::new(dataset.sample_ids());
    let mut round = ctx.predict(estimator, &ae)?;
    let initial = ctx.evaluate(&round, &labels)?;
    let mut curve = vec![(0.0, initial.ap_headline)];
    let mut cycles = Vec::new();
    let mut g_prev = 0.0;
    let mut stopped_early = false;
    let budgets = budget_schedule(&config.schedule, n);

    for (step, &planned) in budgets.iter().enumerate() {
        if planned == 0 || labels.unlabeled.is_empty() {
            continue;
        }
        let started = Instant::now();
        let budget = if planned > labels.unlabeled.len() {
            log::warn!(
                "budget {planned} exceeds {} unlabeled samples; clamped",
                labels.unlabeled.len()
            );
            labels.unlabeled.len()
        } else {
            planned
        };
        let g_selection = if config.criterion == Criterion::ThcWpuDuwFixed {
            0.5
        } else {
            g_prev
        };
        let selected = ctx.select(&round, &labels, budget, g_selection)?;

        let q_oks: Vec<f64> = selected.iter().map(|id| round.oks[ctx.index[id]]).collect();
        let g_c = estimate_generalization(&q_oks);
        let epochs = compute_epochs(g_c, config.alpha);
        let misestimated = misestimated_set(
            &ctx.over(&labels.labeled, &round.oks),
            config.theta,
            config.m,
        );
        labels.annotate(&selected)?;
        labels.misestimated = misestimated.clone();
        labels.check()?;

        let train: BTreeSet<SampleId> = labels.queried.union(&misestimated).copied().collect();
        let train: Vec<SampleId> = train.into_iter().collect();
        estimator.retrain(&train, epochs)?;
        if config.criterion.uses_wpu() {
            let poses: Vec<_> = labels
                .labeled
                .iter()
                .map(|id| {
                    let s = &dataset.samples[ctx.index[id]];
                    (s.gt_pose.clone(), s.bbox)
                })
                .collect();
            let cfg = crate::wpu::AeTrainConfig {
                seed: crate::rng::derive(&[config.ae.seed, step as u64]),
                ..config.ae
            };
            ae = ae_retrain_cycle(&ae, &poses, &cfg)?;
        }
        round = ctx.predict(estimator, &ae)?;
        let eval = ctx.evaluate(&round, &labels)?;

        let q_after: Vec<f64> = labels
            .queried
            .iter()
            .map(|id| round.oks[ctx.index[id]])
            .collect();
        let l_after: Vec<f64> = labels
            .labeled
            .iter()
            .map(|id| round.oks[ctx.index[id]])
            .collect();
        let fired_min = sc_min(&q_after, config.theta);
        let fired_all = sc_all(&l_after, config.theta);
        let sc_fired = match config.sc {
            StopRule::None => false,
            StopRule::Min => fired_min,
            StopRule::All => fired_all,
        };
        log::debug!(
            "{} cycle {}: +{} labeled ({:.0}%), G {:.3}, {} epochs, |R| {}, AP@{HEADLINE_TAU} {:.4}",
            dataset.video_id,
            cycles.len(),
            selected.len(),
            100.0 * eval.labeled_fraction,
            g_c,
            epochs,
            misestimated.len(),
            eval.ap_headline
        );
        curve.push((eval.labeled_fraction, eval.ap_headline));
        cycles.push(CycleRecord {
            cycle: cycles.len(),
            budget,
            selected,
            g_selection,
            g_c,
            epochs,
            misestimated: misestimated.into_iter().collect(),
            sc_min: fired_min,
            sc_all: fired_all,
            sc_fired,
            eval,
            wall_time_ms: config
                .record_wall_time
                .then(|| started.elapsed().as_secs_f64() * 1000.0),
        });
        g_prev = g_c;
        if sc_fired {
            stopped_early = !labels.unlabeled.is_empty();
            break;
        }
    }

    let curve = LearningCurve::new(curve)?;
    let alc = if curve.points.len() >= 2 {
        curve.alc()?
    } else {
        initial.ap_headline
    };
    Ok(RunLog {
        schema_version: RUNLOG_SCHEMA_VERSION,
        video_id: dataset.video_id.clone(),
        num_samples: n,
        config: config.clone(),
        estimator: None,
        initial,
        cycles,
        stopped_early,
        curve,
        alc,
    })
}
