//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vatl_core::atl::{
    compute_epochs, misestimated_set, run_atl, sc_all, sc_min, AtlConfig, Criterion, LabelState,
    RunLog,
};
use vatl_core::data::{
    generate_synthetic_video, BBox, Heatmap, Keypoint, Pose, SynthSpec, VideoDataset,
};
use vatl_core::estimator::{SimConfig, SimulatedEstimator};
use vatl_core::metrics::{alc, oks, LearningCurve};
use vatl_core::selection::{covering_radius, select_coreset, select_duw, SelectionRequest};
use vatl_core::stats::{median, spearman};
use vatl_core::uncertainty::{thc_score, TrackHeatmap};
use vatl_core::wpu::{
    pretrain_autoencoder, shoulders_swapped, source_poses, wpu_value, AutoEncoder, PretrainConfig,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn random_request(
    rng: &mut ChaCha8Rng,
    n_max: usize,
    d_max: usize,
    b_max: usize,
) -> SelectionRequest {
    let n = rng.gen_range(2..=n_max);
    let d = rng.gen_range(1..=d_max);
    let n_labeled = rng.gen_range(0..=(n / 4).min(10));
    let ids: Vec<u64> = (0..n as u64).map(|i| i * 3 + 1).collect();
    let (labeled, unlabeled) = ids.split_at(n_labeled);
    let embeddings = ids
        .iter()
        .map(|&id| (id, (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()))
        .collect();
    let uncertainties = unlabeled
        .iter()
        .map(|&id| (id, rng.gen_range(0.0..5.0)))
        .collect();
    SelectionRequest {
        unlabeled: unlabeled.to_vec(),
        labeled: labeled.to_vec(),
        budget: rng.gen_range(1..=b_max.min(unlabeled.len())),
        embeddings,
        uncertainties,
        g_c: rng.gen_range(0.0..=1.0),
        lambda: 0.0,
        seed: rng.gen(),
    }
}

fn c1_duw_reduces_to_coreset() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = Instant::now();
    let mut equal = 0;
    for _ in 0..50 {
        let req = random_request(&mut rng, 200, 8, 30);
        if select_duw(&req).unwrap() == select_coreset(&req).unwrap() {
            equal += 1;
        }
    }
    let t = start.elapsed();
    outcome(
        equal == 50 && t < Duration::from_secs(10),
        format!("{equal}/50 identical sequences in {t:.2?}"),
    )
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    if n < k {
        return vec![];
    }
    let mut out = subsets(n - 1, k);
    for mut s in subsets(n - 1, k - 1) {
        s.push(n - 1);
        out.push(s);
    }
    out
}

fn c2_greedy_two_approximation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut ok = 0;
    for _ in 0..30 {
        let req = random_request(&mut rng, 12, 3, 4);
        let point = |id: &u64| req.embeddings[id].as_slice();
        let universe: Vec<&[f64]> = req
            .labeled
            .iter()
            .chain(&req.unlabeled)
            .map(point)
            .collect();
        let labeled: Vec<&[f64]> = req.labeled.iter().map(point).collect();
        let radius_with = |chosen: &[u64]| {
            let mut centers = labeled.clone();
            centers.extend(chosen.iter().map(point));
            covering_radius(&universe, &centers)
        };
        let greedy = radius_with(&select_coreset(&req).unwrap());
        let optimal = subsets(req.unlabeled.len(), req.budget)
            .into_iter()
            .map(|s| radius_with(&s.iter().map(|&i| req.unlabeled[i]).collect::<Vec<_>>()))
            .fold(f64::INFINITY, f64::min);
        if greedy <= 2.0 * optimal {
            ok += 1;
        }
        if optimal > 0.0 {
            worst = worst.max(greedy / optimal);
        }
    }
    let t = start.elapsed();
    outcome(
        ok == 30 && t < Duration::from_secs(30),
        format!("{ok}/30 within 2x optimum, worst ratio {worst:.3}, {t:.2?}"),
    )
}

fn c3_thc_hand_values() -> Outcome {
    let (k, h, w) = (3, 4, 5);
    let constant = Heatmap::from_values(k, h, w, vec![1.0 / (h * w) as f64; k * h * w]).unwrap();
    let flat: Vec<TrackHeatmap> = (0..3)
        .map(|t| TrackHeatmap {
            sample_id: t,
            frame_index: t as u32,
            heatmap: &constant,
        })
        .collect();
    let zero = thc_score(&flat, 1).unwrap().value;

    let one_hot = |offset: usize| {
        let mut hm = Heatmap::zeros(k, h, w);
        for ch in 0..k {
            hm.set(ch, ch, offset, 1.0);
        }
        hm
    };
    let frames = [one_hot(0), one_hot(1), one_hot(2)];
    let track: Vec<TrackHeatmap> = frames
        .iter()
        .enumerate()
        .map(|(t, hm)| TrackHeatmap {
            sample_id: t as u64,
            frame_index: t as u32,
            heatmap: hm,
        })
        .collect();
    let four = thc_score(&track, 1).unwrap().value;
    outcome(
        zero == 0.0 && four == 4.0,
        format!("constant {zero}, disjoint one-hot {four}"),
    )
}

/// Written from the definition, independently of the library.
fn reference_oks(pred: &[(f64, f64)], gt: &[(f64, f64, u8)], area: f64, kappa: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut n = 0.0;
    for i in 0..gt.len() {
        if gt[i].2 == 0 {
            continue;
        }
        let dx = pred[i].0 - gt[i].0;
        let dy = pred[i].1 - gt[i].1;
        let e = (dx * dx + dy * dy) / (2.0 * area * kappa[i] * kappa[i]);
        sum += (-e).exp();
        n += 1.0;
    }
    sum / n
}

fn c4_oks_oracle() -> Outcome {
    let kappa = vec![0.079; 3];
    let bbox = BBox::new(10.0, 20.0, 40.0, 90.0);
    let gt = Pose::new(vec![
        Keypoint::visible(15.0, 30.0),
        Keypoint::visible(30.0, 60.0),
        Keypoint::visible(40.0, 100.0),
    ]);
    let identical = oks(&gt, &gt, &bbox, &kappa).unwrap();
    let d = bbox.area().sqrt() * kappa[0] * 2f64.sqrt();
    let moved = Pose::new(
        gt.keypoints
            .iter()
            .map(|p| Keypoint::visible(p.x + d * 0.6, p.y + d * 0.8))
            .collect(),
    );
    let at_scale = oks(&moved, &gt, &bbox, &kappa).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut max_err: f64 = 0.0;
    for _ in 0..200 {
        let k = rng.gen_range(1..=17);
        let kappa: Vec<f64> = (0..k).map(|_| rng.gen_range(0.02..0.12)).collect();
        let bbox = BBox::new(
            rng.gen_range(0.0..100.0),
            rng.gen_range(0.0..100.0),
            rng.gen_range(5.0..200.0),
            rng.gen_range(5.0..200.0),
        );
        let mut g: Vec<(f64, f64, u8)> = (0..k)
            .map(|_| {
                (
                    rng.gen_range(0.0..300.0),
                    rng.gen_range(0.0..300.0),
                    rng.gen_range(0..=2),
                )
            })
            .collect();
        g[0].2 = 2;
        let p: Vec<(f64, f64)> = g
            .iter()
            .map(|q| {
                (
                    q.0 + rng.gen_range(-20.0..20.0),
                    q.1 + rng.gen_range(-20.0..20.0),
                )
            })
            .collect();
        let gt = Pose::new(g.iter().map(|q| Keypoint::new(q.0, q.1, q.2)).collect());
        let pred = Pose::new(p.iter().map(|q| Keypoint::visible(q.0, q.1)).collect());
        let lib = oks(&pred, &gt, &bbox, &kappa).unwrap();
        max_err = max_err.max((lib - reference_oks(&p, &g, bbox.w * bbox.h, &kappa)).abs());
    }
    let e_inv = (-1.0f64).exp();
    outcome(
        identical == 1.0 && (at_scale - e_inv).abs() <= 1e-9 && max_err <= 1e-9,
        format!("identity {identical}, at s*kappa*sqrt2 {at_scale:.12} (e^-1 {e_inv:.12}), 200 random max error {max_err:.1e}"),
    )
}

fn c5_alc_replay() -> Outcome {
    let fractions = [0.0, 0.05, 0.10, 0.15, 0.20, 0.30, 0.40, 0.60, 0.80, 1.0];
    let ap = [
        81.82, 93.35, 96.14, 97.37, 97.90, 98.44, 98.77, 99.33, 99.67, 100.00,
    ];
    let curve = LearningCurve::new(
        fractions
            .iter()
            .zip(ap)
            .map(|(&f, a)| (f, a / 100.0))
            .collect(),
    )
    .unwrap();
    let value = alc(&curve).unwrap();
    outcome(
        (value - 0.9821).abs() <= 0.002,
        format!("alc {value:.5}, expected 0.9821 +/- 0.002"),
    )
}

fn c6_autoencoder() -> Outcome {
    let start = Instant::now();
    let (ae, report) = pretrain_autoencoder(15, &PretrainConfig::default(), 6).unwrap();
    let halved = report.final_loss < 0.5 * report.initial_loss;

    let features: Vec<Vec<f64>> = source_poses(15, 4, 61)
        .unwrap()
        .iter()
        .map(|(p, b)| vatl_core::wpu::hybrid_feature(p, b).unwrap().to_vec())
        .collect();
    let batch: Vec<&[f64]> = features.iter().map(|v| v.as_slice()).collect();
    let probe = AutoEncoder::new(features[0].len(), 62);
    let (_, grad) = probe.loss_and_grad(&batch).unwrap();
    let mut worst: f64 = 0.0;
    let step = 1e-5;
    for (i, g) in grad.iter().enumerate() {
        let mut plus = probe.clone();
        plus.params_mut()[i] += step;
        let mut minus = probe.clone();
        minus.params_mut()[i] -= step;
        let numeric = (plus.loss(&batch).unwrap() - minus.loss(&batch).unwrap()) / (2.0 * step);
        let scale = g.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((g - numeric).abs() / scale);
    }

    let held_out = source_poses(15, 200, 999).unwrap();
    let wins = held_out
        .iter()
        .filter(|(p, b)| {
            wpu_value(&ae, &shoulders_swapped(p), b).unwrap() > wpu_value(&ae, p, b).unwrap()
        })
        .count();
    let rate = wins as f64 / held_out.len() as f64;
    let t = start.elapsed();
    outcome(
        halved && worst < 1e-4 && rate >= 0.95 && t < Duration::from_secs(60),
        format!(
            "loss {:.4} -> {:.4}, gradient max rel error {worst:.1e} over {} params, swapped above natural {wins}/{}, {t:.2?}",
            report.initial_loss,
            report.final_loss,
            probe.param_count(),
            held_out.len()
        ),
    )
}

fn c7_scheduler_identities() -> Outcome {
    let epochs_ok = compute_epochs(0.0, 250.0) == 250
        && [1.0, 50.0, 250.0, 1000.0]
            .iter()
            .all(|&a| compute_epochs(1.0, a) == 0);
    let (theta, m) = (0.6f64, 0.05);
    let boundary = theta + m;
    let below = f64::from_bits(boundary.to_bits() - 1);
    let oks: BTreeMap<u64, f64> = [(1, boundary), (2, below), (3, 0.2), (4, 0.99)]
        .into_iter()
        .collect();
    let r = misestimated_set(&oks, theta, m);
    let set_ok = r.into_iter().collect::<Vec<_>>() == vec![2, 3];
    let empty_ok = misestimated_set(&BTreeMap::new(), theta, m).is_empty();
    outcome(
        epochs_ok && set_ok && empty_ok,
        format!("epochs(0,250)=250 and epochs(1,a)=0: {epochs_ok}; OKS exactly theta+m excluded, one ulp below included: {set_ok}"),
    )
}

fn c8_sc_separation() -> Outcome {
    let theta = 0.6;
    let mut state = LabelState::new(1..=10);
    state.annotate(&[1, 2, 3]).unwrap();
    state.annotate(&[4, 5]).unwrap();
    let oks: BTreeMap<u64, f64> = [(1, 0.9), (2, 0.55), (3, 0.8), (4, 0.9), (5, 0.85)]
        .into_iter()
        .collect();
    let q: Vec<f64> = [4, 5].iter().map(|id| oks[id]).collect();
    let labeled: Vec<f64> = state.labeled.iter().map(|id| oks[id]).collect();
    let min = sc_min(&q, theta);
    let all = sc_all(&labeled, theta);
    outcome(
        min && !all,
        format!("sc_min {min}, sc_all {all} with one labeled sample at 0.55"),
    )
}

fn suite_videos() -> Vec<VideoDataset> {
    (0..4)
        .map(|v| generate_synthetic_video(&SynthSpec::new(30, 3, 15), 1000 + v).unwrap())
        .collect()
}

fn run(ds: &VideoDataset, criterion: Criterion, seed: u64, ae: &AutoEncoder) -> RunLog {
    let mut est = SimulatedEstimator::new(
        ds,
        SimConfig {
            seed,
            ..SimConfig::default()
        },
    )
    .unwrap();
    let cfg = AtlConfig {
        criterion,
        seed,
        ..AtlConfig::default()
    };
    run_atl(ds, &mut est, &cfg, ae).unwrap()
}

/// Per-run rank correlation of cycle AP with mean uncertainty over U.
fn trend(log: &RunLog, pick: fn(&vatl_core::atl::EvalRecord) -> Option<f64>) -> f64 {
    let evals = std::iter::once(&log.initial).chain(log.cycles.iter().map(|c| &c.eval));
    let (ap, u): (Vec<f64>, Vec<f64>) = evals
        .filter_map(|e| pick(e).map(|u| (e.ap_headline, u)))
        .unzip();
    spearman(&ap, &u).unwrap_or(0.0)
}

fn c9_c10_end_to_end() -> (Outcome, Outcome) {
    let start = Instant::now();
    let (ae, _) = pretrain_autoencoder(15, &PretrainConfig::default(), 0).unwrap();
    let videos = suite_videos();
    let mut alcs: BTreeMap<Criterion, Vec<f64>> = BTreeMap::new();
    let mut rho_thc = Vec::new();
    let mut rho_wpu = Vec::new();
    for criterion in [Criterion::Random, Criterion::Lc, Criterion::ThcWpuDuw] {
        for ds in &videos {
            for seed in 0..20 {
                let log = run(ds, criterion, seed, &ae);
                alcs.entry(criterion).or_default().push(log.alc);
                if criterion == Criterion::ThcWpuDuw {
                    rho_thc.push(trend(&log, |e| e.mean_thc_u));
                    rho_wpu.push(trend(&log, |e| e.mean_wpu_u));
                }
            }
        }
    }
    let t = start.elapsed();
    let med = |c| median(&alcs[&c]).unwrap();
    let (random, lc, duw) = (
        med(Criterion::Random),
        med(Criterion::Lc),
        med(Criterion::ThcWpuDuw),
    );
    let c9 = outcome(
        duw >= random && duw >= lc && t < Duration::from_secs(300),
        format!(
            "median ALC thc+wpu+duw {duw:.4}, random {random:.4}, lc {lc:.4}; 240 runs in {t:.1?}"
        ),
    );
    let (mt, mw) = (median(&rho_thc).unwrap(), median(&rho_wpu).unwrap());
    let c10 = outcome(
        mt <= -0.5 && mw <= -0.5,
        format!("median Spearman(AP, mean THC over U) {mt:.3}, (AP, mean WPU over U) {mw:.3} over {} runs", rho_thc.len()),
    );
    (c9, c10)
}

fn c11_determinism() -> Outcome {
    let (ae, _) = pretrain_autoencoder(
        15,
        &PretrainConfig {
            poses: 100,
            ..Default::default()
        },
        0,
    )
    .unwrap();
    let ds = generate_synthetic_video(&SynthSpec::new(12, 2, 15), 1011).unwrap();
    let jobs: Vec<(Criterion, u64)> = [
        Criterion::ThcWpuDuw,
        Criterion::Random,
        Criterion::Mpe,
        Criterion::KMeans,
    ]
    .into_iter()
    .flat_map(|c| (0..2).map(move |s| (c, s)))
    .collect();
    let render = |log: &RunLog| {
        let mut csv = Vec::new();
        log.write_curve_csv(&mut csv, true).unwrap();
        (log.to_json(), csv)
    };
    let sequential: Vec<_> = jobs
        .iter()
        .map(|&(c, s)| render(&run(&ds, c, s, &ae)))
        .collect();
    let again: Vec<_> = jobs
        .iter()
        .map(|&(c, s)| render(&run(&ds, c, s, &ae)))
        .collect();
    let threaded: Vec<_> = std::thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .iter()
            .rev()
            .map(|&(c, s)| {
                scope.spawn({
                    let (ds, ae) = (&ds, &ae);
                    move || render(&run(ds, c, s, ae))
                })
            })
            .collect();
        let mut out: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
        out.reverse();
        out
    });
    let same = sequential == again && sequential == threaded;
    outcome(
        same,
        format!(
            "{} run logs and curve CSVs byte-identical across repeats and threads: {same}",
            jobs.len()
        ),
    )
}

fn main() {
    let mut passed = 0;
    let mut failed = 0;
    let mut report = |n: u32, name: &str, o: Outcome| {
        println!(
            "{} criterion {n}: {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        if o.pass {
            passed += 1;
        } else {
            failed += 1;
        }
    };
    report(
        1,
        "DUW with lambda 0 equals Core-Set",
        c1_duw_reduces_to_coreset(),
    );
    report(
        2,
        "greedy covering radius within 2x optimum",
        c2_greedy_two_approximation(),
    );
    report(3, "THC hand values", c3_thc_hand_values());
    report(4, "OKS oracle", c4_oks_oracle());
    report(5, "ALC replay", c5_alc_replay());
    report(6, "autoencoder training", c6_autoencoder());
    report(7, "scheduler identities", c7_scheduler_identities());
    report(8, "stopping criteria separation", c8_sc_separation());
    let (c9, c10) = c9_c10_end_to_end();
    report(9, "end-to-end ordering", c9);
    report(10, "uncertainty falls as AP rises", c10);
    report(11, "determinism", c11_determinism());

    println!("acceptance: {passed} passed, {failed} failed");
    if failed > 0 {
        std::process::exit(1);
    }
}
