//! Sample selection: random, top-k uncertainty, k-means representatives,
//! greedy k-center (Core-Set) and its uncertainty-weighted variant (DUW).
//!
//! Every selector returns exactly `budget` distinct unlabeled ids and breaks
//! ties towards the lower sample id.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::rng_for;
use crate::{Error, Result, SampleId};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SelectionRequest {
    pub unlabeled: Vec<SampleId>,
    pub labeled: Vec<SampleId>,
    pub budget: usize,
    pub embeddings: BTreeMap<SampleId, Vec<f64>>,
    /// Uncertainty per unlabeled sample; empty when the selector ignores it.
    pub uncertainties: BTreeMap<SampleId, f64>,
    /// Estimated generalization `G_c` in `[0, 1]`.
    pub g_c: f64,
    pub lambda: f64,
    pub seed: u64,
}

impl SelectionRequest {
    /// Unlabeled ids in ascending order.
    fn sorted_unlabeled(&self) -> Vec<SampleId> {
        let mut u = self.unlabeled.clone();
        u.sort_unstable();
        u
    }

    fn check_sets(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::InvalidArgument("budget must be >= 1".into()));
        }
        let u: BTreeSet<_> = self.unlabeled.iter().collect();
        if u.len() != self.unlabeled.len() {
            return Err(Error::InvalidArgument(
                "duplicate id in unlabeled set".into(),
            ));
        }
        if self.budget > u.len() {
            return Err(Error::InvalidArgument(format!(
                "budget {} exceeds {} unlabeled samples",
                self.budget,
                u.len()
            )));
        }
        if let Some(id) = self.labeled.iter().find(|id| u.contains(id)) {
            return Err(Error::InvalidArgument(format!(
                "sample {id} is both labeled and unlabeled"
            )));
        }
        Ok(())
    }

    fn check_embeddings(&self) -> Result<usize> {
        let mut dim = None;
        for id in self.unlabeled.iter().chain(&self.labeled) {
            let e = self.embeddings.get(id).ok_or(Error::Missing {
                what: "embedding",
                id: *id,
            })?;
            match dim {
                None => dim = Some(e.len()),
                Some(d) if d != e.len() => {
                    return Err(Error::DimensionMismatch {
                        what: "embedding",
                        expected: d,
                        found: e.len(),
                    })
                }
                _ => {}
            }
        }
        Ok(dim.unwrap_or(0))
    }

    fn check_uncertainties(&self) -> Result<()> {
        for id in &self.unlabeled {
            let v = self.uncertainties.get(id).ok_or(Error::Missing {
                what: "uncertainty",
                id: *id,
            })?;
            if !v.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "uncertainty of sample {id} is {v}"
                )));
            }
        }
        Ok(())
    }

    fn has_uncertainties(&self) -> bool {
        !self.uncertainties.is_empty()
    }
}

/// Uniform sample without replacement.
pub fn select_random(req: &SelectionRequest) -> Result<Vec<SampleId>> {
    req.check_sets()?;
    let mut u = req.sorted_unlabeled();
    u.shuffle(&mut rng_for(&[req.seed, 0x7261_6e64]));
    u.truncate(req.budget);
    Ok(u)
}

/// The `budget` most uncertain samples.
pub fn select_topk(req: &SelectionRequest) -> Result<Vec<SampleId>> {
    req.check_sets()?;
    req.check_uncertainties()?;
    let mut u = req.sorted_unlabeled();
    u.sort_by(|a, b| {
        req.uncertainties[b]
            .total_cmp(&req.uncertainties[a])
            .then(a.cmp(b))
    });
    u.truncate(req.budget);
    Ok(u)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Maximum number of Lloyd iterations in [`select_kmeans`].
pub const KMEANS_MAX_ITERS: usize = 100;
/// Largest centroid movement at which k-means stops early.
pub const KMEANS_TOL: f64 = 1e-6;

/// k-means with `k = budget` over unlabeled embeddings; returns the sample
/// nearest each centroid, falling back to the next nearest when taken.
pub fn select_kmeans(req: &SelectionRequest) -> Result<Vec<SampleId>> {
    req.check_sets()?;
    req.check_embeddings()?;
    let ids = req.sorted_unlabeled();
    let points: Vec<&[f64]> = ids.iter().map(|id| req.embeddings[id].as_slice()).collect();
    let k = req.budget;
    let mut rng = rng_for(&[req.seed, 0x6b6d_6561]);

    // k-means++ seeding
    let mut centroids: Vec<Vec<f64>> = vec![points[rng.gen_range(0..points.len())].to_vec()];
    let mut nearest: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.gen_range(0.0..total);
            let mut chosen = nearest.len() - 1;
            for (i, d) in nearest.iter().enumerate() {
                if r < *d {
                    chosen = i;
                    break;
                }
                r -= d;
            }
            chosen
        } else {
            rng.gen_range(0..points.len())
        };
        centroids.push(points[pick].to_vec());
        for (n, p) in nearest.iter_mut().zip(&points) {
            *n = n.min(sq_dist(p, &centroids[centroids.len() - 1]));
        }
    }

    let dim = points[0].len();
    for _ in 0..KMEANS_MAX_ITERS {
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for p in &points {
            let c = closest(p, &centroids);
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(p.iter()) {
                *s += v;
            }
        }
        let mut shift = 0.0f64;
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            let next: Vec<f64> = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            shift = shift.max(sq_dist(&next, &centroids[c]).sqrt());
            centroids[c] = next;
        }
        if shift < KMEANS_TOL {
            break;
        }
    }

    let mut taken = vec![false; ids.len()];
    let mut out = Vec::with_capacity(k);
    for c in &centroids {
        let mut best: Option<(f64, usize)> = None;
        for (i, p) in points.iter().enumerate() {
            if taken[i] {
                continue;
            }
            let d = sq_dist(p, c);
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, i));
            }
        }
        let (_, i) = best.expect("budget <= |U|");
        taken[i] = true;
        out.push(ids[i]);
    }
    Ok(out)
}

fn closest(p: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(p, centroid);
        if d < best.0 {
            best = (d, c);
        }
    }
    best.1
}

/// Greedy k-center (Core-Set): repeatedly adds the unlabeled sample farthest
/// from everything labeled or already chosen.
pub fn select_coreset(req: &SelectionRequest) -> Result<Vec<SampleId>> {
    greedy(req, 1.0, 0.0)
}

/// Core-Set acquisition plus `g_c * lambda * uncertainty`, with the distance
/// term weighted by `1 - g_c`.
pub fn select_duw(req: &SelectionRequest) -> Result<Vec<SampleId>> {
    if !(0.0..=1.0).contains(&req.g_c) {
        return Err(Error::InvalidArgument(format!(
            "g_c must be in [0, 1], got {}",
            req.g_c
        )));
    }
    if !(req.lambda.is_finite() && req.lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "lambda must be >= 0, got {}",
            req.lambda
        )));
    }
    req.check_uncertainties()?;
    greedy(req, 1.0 - req.g_c, req.g_c * req.lambda)
}

fn greedy(req: &SelectionRequest, w_dist: f64, w_unc: f64) -> Result<Vec<SampleId>> {
    req.check_sets()?;
    req.check_embeddings()?;
    let ids = req.sorted_unlabeled();
    let unc: Vec<f64> = if w_unc > 0.0 {
        ids.iter().map(|id| req.uncertainties[id]).collect()
    } else {
        vec![0.0; ids.len()]
    };
    let emb: Vec<&[f64]> = ids.iter().map(|id| req.embeddings[id].as_slice()).collect();
    let mut min_dist = vec![f64::INFINITY; ids.len()];
    for id in &req.labeled {
        let l = &req.embeddings[id];
        for (m, e) in min_dist.iter_mut().zip(&emb) {
            *m = m.min(sq_dist(e, l).sqrt());
        }
    }
    let mut taken = vec![false; ids.len()];
    let mut out = Vec::with_capacity(req.budget);
    if req.labeled.is_empty() {
        let first = bootstrap_pick(req, &ids);
        out.push(ids[first]);
        taken[first] = true;
        for (m, e) in min_dist.iter_mut().zip(&emb) {
            *m = m.min(sq_dist(e, emb[first]).sqrt());
        }
    }
    while out.len() < req.budget {
        let mut best: Option<(f64, usize)> = None;
        for i in 0..ids.len() {
            if taken[i] {
                continue;
            }
            let score = w_dist * min_dist[i] + w_unc * unc[i];
            if best.is_none_or(|(b, _)| score > b) {
                best = Some((score, i));
            }
        }
        let (_, pick) = best.expect("budget <= |U|");
        taken[pick] = true;
        out.push(ids[pick]);
        for (m, e) in min_dist.iter_mut().zip(&emb) {
            *m = m.min(sq_dist(e, emb[pick]).sqrt());
        }
    }
    Ok(out)
}

/// First pick with nothing labeled: the most uncertain sample when
/// uncertainties are given, otherwise the head of a seeded shuffle.
fn bootstrap_pick(req: &SelectionRequest, ids: &[SampleId]) -> usize {
    if req.has_uncertainties() && ids.iter().all(|id| req.uncertainties.contains_key(id)) {
        let mut best = 0;
        for i in 1..ids.len() {
            if req.uncertainties[&ids[i]] > req.uncertainties[&ids[best]] {
                best = i;
            }
        }
        best
    } else {
        let mut order: Vec<usize> = (0..ids.len()).collect();
        order.shuffle(&mut rng_for(&[req.seed, 0x626f_6f74]));
        order[0]
    }
}

/// Largest distance from any point of `universe` to its nearest center.
pub fn covering_radius(universe: &[&[f64]], centers: &[&[f64]]) -> f64 {
    universe
        .iter()
        .map(|p| {
            centers
                .iter()
                .map(|c| sq_dist(p, c).sqrt())
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

/// Share of THC in the combined THC/WPU score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Weighting {
    /// Constant THC weight.
    Fixed(f64),
    /// THC weight equal to the labeled fraction.
    Increase,
    /// Equal weights.
    Const,
    /// THC weight equal to one minus the labeled fraction.
    Decrease,
}

impl Weighting {
    pub fn thc_weight(&self, labeled_fraction: f64) -> f64 {
        match *self {
            Weighting::Fixed(w) => w,
            Weighting::Increase => labeled_fraction,
            Weighting::Const => 0.5,
            Weighting::Decrease => 1.0 - labeled_fraction,
        }
    }
}

impl fmt::Display for Weighting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Weighting::Fixed(w) => write!(f, "fixed:{w}"),
            Weighting::Increase => f.write_str("increase"),
            Weighting::Const => f.write_str("const"),
            Weighting::Decrease => f.write_str("decrease"),
        }
    }
}

impl FromStr for Weighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "increase" => Ok(Weighting::Increase),
            "const" => Ok(Weighting::Const),
            "decrease" => Ok(Weighting::Decrease),
            _ => {
                let w = s
                    .strip_prefix("fixed:")
                    .and_then(|w| w.parse::<f64>().ok())
                    .ok_or_else(|| {
                        Error::Parse(format!(
                            "weighting {s:?}: expected increase, const, decrease or fixed:<w>"
                        ))
                    })?;
                if !(0.0..=1.0).contains(&w) {
                    return Err(Error::InvalidArgument(format!(
                        "fixed weight {w} outside [0, 1]"
                    )));
                }
                Ok(Weighting::Fixed(w))
            }
        }
    }
}

impl TryFrom<String> for Weighting {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Weighting> for String {
    fn from(w: Weighting) -> String {
        w.to_string()
    }
}

/// Min-max scales `values` to `[0, 1]`; a constant map becomes all zeros.
pub fn min_max_normalize(values: &BTreeMap<SampleId, f64>) -> BTreeMap<SampleId, f64> {
    let lo = values.values().copied().fold(f64::INFINITY, f64::min);
    let hi = values.values().copied().fold(f64::NEG_INFINITY, f64::max);
    values
        .iter()
        .map(|(&id, &v)| (id, if hi > lo { (v - lo) / (hi - lo) } else { 0.0 }))
        .collect()
}

/// `w * norm(thc) + (1 - w) * norm(wpu)` with `w` from the weighting schedule.
pub fn combine_uncertainty(
    thc: &BTreeMap<SampleId, f64>,
    wpu: &BTreeMap<SampleId, f64>,
    labeled_fraction: f64,
    weighting: Weighting,
) -> Result<BTreeMap<SampleId, f64>> {
    if !thc.keys().eq(wpu.keys()) {
        return Err(Error::InvalidArgument(
            "THC and WPU scores cover different samples".into(),
        ));
    }
    if !(0.0..=1.0).contains(&labeled_fraction) {
        return Err(Error::InvalidArgument(format!(
            "labeled fraction {labeled_fraction} outside [0, 1]"
        )));
    }
    let w = weighting.thc_weight(labeled_fraction);
    let (t, p) = (min_max_normalize(thc), min_max_normalize(wpu));
    Ok(t.iter()
        .map(|(id, tv)| (*id, w * tv + (1.0 - w) * p[id]))
        .collect())
}
