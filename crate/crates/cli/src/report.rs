//! Aggregates over many runs: checkpoint summaries, ALC tables, SC tables
//! and the learning-curve chart.

use std::fmt::Write as _;

use vatl_core::atl::{budget_schedule, Criterion, RunLog, StopRule};
use vatl_core::stats::{mean, median};

fn avg(values: &[f64]) -> f64 {
    mean(values).unwrap_or(f64::NAN)
}

pub const SUMMARY_HEADER: &str = "criterion,checkpoint,ap_mean,alc_mean";
pub const ALC_HEADER: &str = "criterion,alc_mean,alc_min,alc_max,runs";
pub const SC_HEADER: &str = "sc,theta,ap_at_theta,stopped_pct,actual_pct,never_stopped,runs";
pub const SC_RUNS_HEADER: &str =
    "sc,theta,video_id,seed,stop_fraction,sc_fired,ap_at_theta,actual_fraction";

/// Nominal cumulative fractions of a schedule, starting at 0.
pub fn checkpoints(schedule: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0];
    let mut cum = 0.0;
    for (i, f) in schedule.iter().enumerate() {
        cum += f;
        out.push(if i + 1 == schedule.len() {
            1.0
        } else {
            (cum * 1e9).round() / 1e9
        });
    }
    out
}

/// AP of `log` at each checkpoint. A run that stopped early carries its last
/// value forward.
pub fn ap_at_checkpoints(log: &RunLog, schedule: &[f64]) -> Vec<f64> {
    let n = log.num_samples;
    let mut targets = vec![0usize];
    for b in budget_schedule(schedule, n) {
        targets.push(targets.last().unwrap() + b);
    }
    let labeled = |f: f64| (f * n as f64).round() as usize;
    targets
        .iter()
        .map(|&t| {
            log.curve
                .points
                .iter()
                .take_while(|&&(f, _)| labeled(f) <= t)
                .last()
                .map_or(log.curve.points[0].1, |p| p.1)
        })
        .collect()
}

pub struct CriterionSummary {
    pub criterion: Criterion,
    pub checkpoints: Vec<(f64, f64)>,
    pub alc_mean: f64,
    pub alc_min: f64,
    pub alc_max: f64,
    pub runs: usize,
}

/// Per-criterion means in the order criteria first appear in `logs`.
pub fn summarize(logs: &[RunLog], schedule: &[f64]) -> Vec<CriterionSummary> {
    let mut order: Vec<Criterion> = Vec::new();
    for l in logs {
        if !order.contains(&l.config.criterion) {
            order.push(l.config.criterion);
        }
    }
    let cps = checkpoints(schedule);
    order
        .into_iter()
        .map(|c| {
            let runs: Vec<&RunLog> = logs.iter().filter(|l| l.config.criterion == c).collect();
            let per_run: Vec<Vec<f64>> = runs
                .iter()
                .map(|l| ap_at_checkpoints(l, schedule))
                .collect();
            let alcs: Vec<f64> = runs.iter().map(|l| l.alc).collect();
            let checkpoints = cps
                .iter()
                .enumerate()
                .map(|(i, &f)| (f, avg(&per_run.iter().map(|r| r[i]).collect::<Vec<_>>())))
                .collect();
            CriterionSummary {
                criterion: c,
                checkpoints,
                alc_mean: avg(&alcs),
                alc_min: alcs.iter().copied().fold(f64::INFINITY, f64::min),
                alc_max: alcs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                runs: runs.len(),
            }
        })
        .collect()
}

pub fn summary_csv(summaries: &[CriterionSummary]) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for s in summaries {
        for &(f, ap) in &s.checkpoints {
            writeln!(out, "{},{f},{ap},{}", s.criterion, s.alc_mean).unwrap();
        }
    }
    out
}

pub fn alc_csv(summaries: &[CriterionSummary]) -> String {
    let mut out = format!("{ALC_HEADER}\n");
    for s in summaries {
        writeln!(
            out,
            "{},{},{},{},{}",
            s.criterion, s.alc_mean, s.alc_min, s.alc_max, s.runs
        )
        .unwrap();
    }
    out
}

pub fn curves_csv(logs: &[RunLog]) -> String {
    let mut buf = Vec::new();
    for (i, l) in logs.iter().enumerate() {
        l.write_curve_csv(&mut buf, i == 0)
            .expect("writing to memory");
    }
    String::from_utf8(buf).expect("csv is utf-8")
}

/// First labeled fraction at which no unlabeled sample is predicted below
/// theta. Annotated samples count as correct.
pub fn actual_fraction(log: &RunLog) -> f64 {
    std::iter::once(&log.initial)
        .chain(log.cycles.iter().map(|c| &c.eval))
        .find(|e| e.below_theta == 0)
        .map_or(1.0, |e| e.labeled_fraction)
}

/// One stopping-rule run next to its reference run without stopping.
pub struct ScRun<'a> {
    pub theta: f64,
    pub log: &'a RunLog,
    pub reference: &'a RunLog,
}

impl ScRun<'_> {
    fn fired(&self) -> bool {
        self.log.stop_cycle().is_some()
    }

    /// Where the run stopped; 1.0 when the rule never fired.
    fn stop_fraction(&self) -> f64 {
        self.log
            .stop_cycle()
            .map_or(1.0, |c| c.eval.labeled_fraction)
    }

    fn ap_at_theta(&self) -> f64 {
        self.log
            .cycles
            .last()
            .map_or(self.log.initial.ap_at_theta, |c| c.eval.ap_at_theta)
    }
}

pub fn sc_runs_csv(runs: &[ScRun]) -> String {
    let mut out = format!("{SC_RUNS_HEADER}\n");
    for r in runs {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.log.config.sc,
            r.theta,
            r.log.video_id,
            r.log.config.seed,
            r.stop_fraction(),
            r.fired(),
            r.ap_at_theta(),
            actual_fraction(r.reference)
        )
        .unwrap();
    }
    out
}

/// Rows grouped by (rule, theta) in first-appearance order.
pub fn sc_table_csv(runs: &[ScRun]) -> String {
    let mut keys: Vec<(StopRule, f64)> = Vec::new();
    for r in runs {
        let k = (r.log.config.sc, r.theta);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    let mut out = format!("{SC_HEADER}\n");
    for (sc, theta) in keys {
        let group: Vec<&ScRun> = runs
            .iter()
            .filter(|r| r.log.config.sc == sc && r.theta == theta)
            .collect();
        let ap = avg(&group.iter().map(|r| r.ap_at_theta()).collect::<Vec<_>>());
        let stopped = median(
            &group
                .iter()
                .map(|r| 100.0 * r.stop_fraction())
                .collect::<Vec<_>>(),
        )
        .unwrap_or(f64::NAN);
        let actual = median(
            &group
                .iter()
                .map(|r| 100.0 * actual_fraction(r.reference))
                .collect::<Vec<_>>(),
        )
        .unwrap_or(f64::NAN);
        let never = group.iter().filter(|r| !r.fired()).count();
        writeln!(
            out,
            "{sc},{theta},{ap},{stopped},{actual},{never},{}",
            group.len()
        )
        .unwrap();
    }
    out
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// Line chart of AP (%) against labeled samples (%), one line per criterion.
pub fn learning_curve_svg(summaries: &[CriterionSummary]) -> String {
    let (w, h) = (640.0, 420.0);
    let (left, right, top, bottom) = (60.0, 170.0, 30.0, 50.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let lowest = summaries
        .iter()
        .flat_map(|s| s.checkpoints.iter().map(|p| p.1))
        .fold(1.0f64, f64::min);
    let y_min = ((lowest * 10.0).floor() * 10.0).clamp(0.0, 90.0);
    let x = |f: f64| left + pw * f;
    let y = |ap: f64| top + ph * (1.0 - (100.0 * ap - y_min) / (100.0 - y_min));

    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#).unwrap();
    writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#).unwrap();
    for i in 0..=10 {
        let f = i as f64 / 10.0;
        let xi = x(f);
        writeln!(
            s,
            r##"<line x1="{xi:.1}" y1="{top}" x2="{xi:.1}" y2="{:.1}" stroke="#e0e0e0"/>"##,
            top + ph
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="{xi:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            top + ph + 18.0,
            i * 10
        )
        .unwrap();
    }
    let steps = 5;
    for i in 0..=steps {
        let v = y_min + (100.0 - y_min) * i as f64 / steps as f64;
        let yi = y(v / 100.0);
        writeln!(
            s,
            r##"<line x1="{left}" y1="{yi:.1}" x2="{:.1}" y2="{yi:.1}" stroke="#e0e0e0"/>"##,
            left + pw
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.0}</text>"#,
            left - 6.0,
            yi + 4.0
        )
        .unwrap();
    }
    writeln!(
        s,
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">Labeled samples (%)</text>"#,
        left + pw / 2.0,
        h - 12.0
    )
    .unwrap();
    writeln!(s, r#"<text transform="translate(16 {:.1}) rotate(-90)" text-anchor="middle">AP@0.6 (%)</text>"#, top + ph / 2.0).unwrap();

    for (i, sum) in summaries.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = sum
            .checkpoints
            .iter()
            .map(|&(f, ap)| format!("{:.1},{:.1}", x(f), y(ap)))
            .collect();
        writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            points.join(" ")
        )
        .unwrap();
        for &(f, ap) in &sum.checkpoints {
            writeln!(
                s,
                r#"<circle cx="{:.1}" cy="{:.1}" r="2.5" fill="{color}"/>"#,
                x(f),
                y(ap)
            )
            .unwrap();
        }
        let ly = top + 10.0 + 20.0 * i as f64;
        let lx = left + pw + 15.0;
        writeln!(s, r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#, lx + 24.0).unwrap();
        writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}">{} ({:.4})</text>"#,
            lx + 30.0,
            ly + 4.0,
            sum.criterion,
            sum.alc_mean
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}
