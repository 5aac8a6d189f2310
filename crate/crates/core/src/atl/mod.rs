//! The active transfer learning cycle: scheduling (epochs, generalization
//! estimate, misestimated set), stopping rules, label bookkeeping and the
//! run loop.

mod runner;

pub use runner::{run_atl, CycleRecord, EvalRecord, RunLog, TauAp, RUNLOG_SCHEMA_VERSION};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::selection::Weighting;
use crate::uncertainty::DEFAULT_PEAK_THRESHOLD;
use crate::wpu::{AeTrainConfig, PretrainConfig};
use crate::{Error, Result, SampleId};

/// Mean OKS of the newly annotated samples; 0 when nothing was annotated.
pub fn estimate_generalization(oks_on_q: &[f64]) -> f64 {
    if oks_on_q.is_empty() {
        0.0
    } else {
        oks_on_q.iter().sum::<f64>() / oks_on_q.len() as f64
    }
}

/// Fine-tuning epochs for the cycle: `round(alpha * (1 - g_c))`, at least 0.
pub fn compute_epochs(g_c: f64, alpha: f64) -> u32 {
    (alpha * (1.0 - g_c)).round().max(0.0) as u32
}

/// Labeled samples whose OKS is strictly below `theta + m`.
pub fn misestimated_set(
    labeled_oks: &BTreeMap<SampleId, f64>,
    theta: f64,
    m: f64,
) -> BTreeSet<SampleId> {
    labeled_oks
        .iter()
        .filter(|(_, &v)| v < theta + m)
        .map(|(&id, _)| id)
        .collect()
}

/// Mean OKS over the new annotations exceeds `theta`.
pub fn sc_min(oks_on_q: &[f64], theta: f64) -> bool {
    !oks_on_q.is_empty() && estimate_generalization(oks_on_q) > theta
}

/// Every labeled sample exceeds `theta`.
pub fn sc_all(oks_on_labeled: &[f64], theta: f64) -> bool {
    !oks_on_labeled.is_empty() && oks_on_labeled.iter().all(|&v| v > theta)
}

/// Per-cycle budgets for `n` samples. Cumulative fractions are rounded, so
/// the budgets sum to exactly `n` when the schedule sums to 1.
pub fn budget_schedule(schedule: &[f64], n: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(schedule.len());
    let mut cum = 0.0;
    let mut assigned = 0usize;
    for (c, f) in schedule.iter().enumerate() {
        cum += f;
        let target = if c + 1 == schedule.len() {
            n
        } else {
            (((cum * n as f64) + 0.5 + 1e-9).floor() as usize).min(n)
        };
        let b = target.saturating_sub(assigned);
        assigned += b;
        out.push(b);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StopRule {
    None,
    Min,
    All,
}

impl FromStr for StopRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(StopRule::None),
            "min" => Ok(StopRule::Min),
            "all" => Ok(StopRule::All),
            _ => Err(Error::Parse(format!(
                "stopping rule {s:?}: expected none, min or all"
            ))),
        }
    }
}

impl fmt::Display for StopRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopRule::None => "none",
            StopRule::Min => "min",
            StopRule::All => "all",
        })
    }
}

/// Selection strategy of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Criterion {
    Random,
    Lc,
    Mpe,
    Tpc,
    Thc,
    Wpu,
    ThcWpu,
    KMeans,
    CoreSet,
    ThcDuw,
    WpuDuw,
    ThcWpuDuw,
    /// DUW with the generalization weight pinned at 0.5.
    ThcWpuDuwFixed,
}

impl Criterion {
    pub const ALL: [Criterion; 13] = [
        Criterion::Random,
        Criterion::Lc,
        Criterion::Mpe,
        Criterion::Tpc,
        Criterion::Thc,
        Criterion::Wpu,
        Criterion::ThcWpu,
        Criterion::KMeans,
        Criterion::CoreSet,
        Criterion::ThcDuw,
        Criterion::WpuDuw,
        Criterion::ThcWpuDuw,
        Criterion::ThcWpuDuwFixed,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Criterion::Random => "random",
            Criterion::Lc => "lc",
            Criterion::Mpe => "mpe",
            Criterion::Tpc => "tpc",
            Criterion::Thc => "thc",
            Criterion::Wpu => "wpu",
            Criterion::ThcWpu => "thc+wpu",
            Criterion::KMeans => "kmeans",
            Criterion::CoreSet => "coreset",
            Criterion::ThcDuw => "thc+duw",
            Criterion::WpuDuw => "wpu+duw",
            Criterion::ThcWpuDuw => "thc+wpu+duw",
            Criterion::ThcWpuDuwFixed => "thc+wpu+duw-fixed",
        }
    }

    /// Whether the autoencoder is fine-tuned on labeled poses each cycle.
    pub fn uses_wpu(&self) -> bool {
        matches!(
            self,
            Criterion::Wpu
                | Criterion::ThcWpu
                | Criterion::WpuDuw
                | Criterion::ThcWpuDuw
                | Criterion::ThcWpuDuwFixed
        )
    }

    pub fn uses_thc(&self) -> bool {
        matches!(
            self,
            Criterion::Thc
                | Criterion::ThcWpu
                | Criterion::ThcDuw
                | Criterion::ThcWpuDuw
                | Criterion::ThcWpuDuwFixed
        )
    }

    pub fn is_duw(&self) -> bool {
        matches!(
            self,
            Criterion::ThcDuw
                | Criterion::WpuDuw
                | Criterion::ThcWpuDuw
                | Criterion::ThcWpuDuwFixed
        )
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Criterion {
    type Err = Error;

    /// Accepts the canonical names plus `duw` for `thc+wpu+duw`.
    fn from_str(s: &str) -> Result<Self> {
        if s == "duw" {
            return Ok(Criterion::ThcWpuDuw);
        }
        Criterion::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Criterion::ALL.iter().map(|c| c.name()).collect();
                Error::Parse(format!(
                    "unknown criterion {s:?}; expected one of {}",
                    names.join(", ")
                ))
            })
    }
}

impl TryFrom<String> for Criterion {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Criterion> for String {
    fn from(c: Criterion) -> String {
        c.name().to_string()
    }
}

/// Every hyperparameter of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AtlConfig {
    pub criterion: Criterion,
    /// Fraction of the video annotated in each cycle.
    pub schedule: Vec<f64>,
    /// Epoch scale of the retraining schedule.
    pub alpha: f64,
    /// Uncertainty weight of DUW.
    pub lambda: f64,
    /// Target OKS.
    pub theta: f64,
    /// Margin added to `theta` for the misestimated set.
    pub m: f64,
    pub sc: StopRule,
    pub weighting: Weighting,
    pub mpe_rho: f64,
    /// Seed for selection randomness.
    pub seed: u64,
    /// Per-cycle autoencoder fine-tuning.
    pub ae: AeTrainConfig,
    pub pretrain: PretrainConfig,
    /// Store cycle wall time in the log; off keeps logs byte-reproducible.
    pub record_wall_time: bool,
}

pub const DEFAULT_SCHEDULE: [f64; 9] = [0.05, 0.05, 0.05, 0.05, 0.10, 0.10, 0.20, 0.20, 0.20];

impl Default for AtlConfig {
    fn default() -> Self {
        AtlConfig {
            criterion: Criterion::ThcWpuDuw,
            schedule: DEFAULT_SCHEDULE.to_vec(),
            alpha: 250.0,
            lambda: 0.01,
            theta: 0.6,
            m: 0.05,
            sc: StopRule::None,
            weighting: Weighting::Const,
            mpe_rho: DEFAULT_PEAK_THRESHOLD,
            seed: 0,
            ae: AeTrainConfig::default(),
            pretrain: PretrainConfig::default(),
            record_wall_time: false,
        }
    }
}

impl AtlConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.schedule.is_empty() || self.schedule.iter().any(|f| !(f.is_finite() && *f >= 0.0)) {
            return bad("schedule must be a non-empty list of fractions >= 0".into());
        }
        let total: f64 = self.schedule.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return bad(format!("schedule sums to {total}, expected 1"));
        }
        if self.alpha.is_nan() || self.alpha < 1.0 {
            return bad(format!("alpha must be >= 1, got {}", self.alpha));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return bad(format!("theta must be in (0, 1), got {}", self.theta));
        }
        if self.m.is_nan() || self.m < 0.0 {
            return bad(format!("m must be >= 0, got {}", self.m));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if !(self.mpe_rho > 0.0 && self.mpe_rho < 1.0) {
            return bad(format!("mpe_rho must be in (0, 1), got {}", self.mpe_rho));
        }
        self.ae.validate()
    }
}

/// Partition of a video's samples during a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelState {
    pub unlabeled: BTreeSet<SampleId>,
    pub labeled: BTreeSet<SampleId>,
    /// Annotated in the latest cycle.
    pub queried: BTreeSet<SampleId>,
    /// Labeled samples retrained for being misestimated.
    pub misestimated: BTreeSet<SampleId>,
}

impl LabelState {
    pub fn new(ids: impl IntoIterator<Item = SampleId>) -> Self {
        LabelState {
            unlabeled: ids.into_iter().collect(),
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.unlabeled.len() + self.labeled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn labeled_fraction(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.labeled.len() as f64 / self.len() as f64
        }
    }

    /// Moves `ids` from U to L and makes them the queried set.
    pub fn annotate(&mut self, ids: &[SampleId]) -> Result<()> {
        for id in ids {
            if !self.unlabeled.contains(id) {
                return Err(Error::InvalidArgument(format!(
                    "sample {id} is not unlabeled"
                )));
            }
        }
        self.queried = ids.iter().copied().collect();
        for id in ids {
            self.unlabeled.remove(id);
            self.labeled.insert(*id);
        }
        Ok(())
    }

    pub fn check(&self) -> Result<()> {
        let fail = |what: &str| Err(Error::InvalidArgument(format!("label state: {what}")));
        if !self.unlabeled.is_disjoint(&self.labeled) {
            return fail("U and L overlap");
        }
        if !self.queried.is_subset(&self.labeled) {
            return fail("Q is not a subset of L");
        }
        if !self.misestimated.is_subset(&self.labeled) {
            return fail("R is not a subset of L");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generalization_estimate() {
        assert_eq!(estimate_generalization(&[1.0, 1.0, 1.0]), 1.0);
        assert_eq!(estimate_generalization(&[]), 0.0);
        assert!((estimate_generalization(&[0.8, 0.6]) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn epochs() {
        assert_eq!(compute_epochs(0.0, 250.0), 250);
        assert_eq!(compute_epochs(1.0, 250.0), 0);
        assert_eq!(compute_epochs(0.9, 250.0), 25);
        assert_eq!(compute_epochs(1.0, 7.0), 0);
    }

    #[test]
    fn misestimated() {
        let oks: BTreeMap<_, _> = [(1, 0.64), (2, 0.66)].into_iter().collect();
        assert_eq!(misestimated_set(&oks, 0.6, 0.05), [1].into_iter().collect());
        let perfect: BTreeMap<_, _> = [(1, 1.0), (2, 1.0)].into_iter().collect();
        assert!(misestimated_set(&perfect, 0.6, 0.05).is_empty());
        let edge: BTreeMap<_, _> = [(1, 0.6)].into_iter().collect();
        assert!(misestimated_set(&edge, 0.6, 0.0).is_empty());
    }

    #[test]
    fn stopping_rules() {
        assert!(sc_min(&[0.7, 0.9], 0.6));
        assert!(!sc_min(&[0.5, 0.9], 0.7));
        assert!(!sc_min(&[], 0.5));
        assert!(sc_all(&[0.99; 4], 0.8));
        assert!(!sc_all(&[0.99, 0.79], 0.8));
        assert!(!sc_all(&[], 0.8));
    }

    #[test]
    fn premature_stop_state() {
        let q = [0.9, 0.85];
        let labeled = [0.9, 0.85, 0.55];
        assert!(sc_min(&q, 0.6));
        assert!(!sc_all(&labeled, 0.6));
    }

    #[test]
    fn budgets_hit_total() {
        assert_eq!(
            budget_schedule(&DEFAULT_SCHEDULE, 90),
            vec![5, 4, 5, 4, 9, 9, 18, 18, 18]
        );
        for n in 1..300 {
            assert_eq!(
                budget_schedule(&DEFAULT_SCHEDULE, n).iter().sum::<usize>(),
                n
            );
        }
        assert_eq!(budget_schedule(&[0.5, 0.5], 3).iter().sum::<usize>(), 3);
    }

    #[test]
    fn criterion_names_round_trip() {
        for c in Criterion::ALL {
            assert_eq!(c.name().parse::<Criterion>().unwrap(), c);
        }
        assert_eq!("duw".parse::<Criterion>().unwrap(), Criterion::ThcWpuDuw);
        assert!("nope".parse::<Criterion>().is_err());
    }

    #[test]
    fn config_defaults_and_validation() {
        let cfg = AtlConfig::default();
        cfg.validate().unwrap();
        assert_eq!(
            (cfg.alpha, cfg.m, cfg.lambda, cfg.theta),
            (250.0, 0.05, 0.01, 0.6)
        );
        let bad = AtlConfig {
            schedule: vec![0.5, 0.4],
            ..AtlConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = AtlConfig {
            theta: 1.0,
            ..AtlConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn config_json_round_trip() {
        let cfg = AtlConfig {
            criterion: Criterion::ThcWpuDuwFixed,
            weighting: Weighting::Fixed(0.3),
            sc: StopRule::All,
            ..AtlConfig::default()
        };
        let text = serde_json::to_string(&cfg).unwrap();
        assert!(text.contains("\"thc+wpu+duw-fixed\"") && text.contains("\"m\":0.05"));
        assert_eq!(serde_json::from_str::<AtlConfig>(&text).unwrap(), cfg);
    }

    #[test]
    fn label_state_transitions() {
        let mut s = LabelState::new(0..5);
        s.annotate(&[1, 3]).unwrap();
        s.check().unwrap();
        assert_eq!(s.labeled_fraction(), 0.4);
        assert!(s.annotate(&[1]).is_err());
        s.misestimated.insert(4);
        assert!(s.check().is_err());
    }
}
