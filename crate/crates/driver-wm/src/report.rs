//! Structured-text reports.
//!
//! Reports are flat `key = value` files readable with the same parser as run
//! configs. Floats are written in shortest round-trip form, so a report can be
//! parsed back bit-exactly. Metrics that a predictor cannot produce are
//! written as `--`.
//!
//! The per-clip record file is tab-separated with one header line; reading it
//! back and re-aggregating reproduces the metrics report.

use std::fmt::Write as _;

use driver_wm_core::evaluation::{ClipRecord, GeometrySummary, MetricsReport};
use driver_wm_core::interventions::{DeviationReport, LookaheadReport};
use driver_wm_core::objectives::LossBreakdown;
use driver_wm_core::training::{EpochLog, TrainOutcome};

use crate::error::FormatError;

/// Identifies the inputs a report was computed from.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Origin {
    pub command: String,
    pub corpus_id: String,
    pub corpus_sha256: String,
    pub checkpoint_sha256: Option<String>,
    pub split: String,
}

struct Doc(String);

impl Doc {
    fn new(title: &str, p: &Origin) -> Self {
        let mut d = Doc(format!("# driver-wm {}\n", title));
        d.put("command", &p.command);
        d.put("corpus_id", &p.corpus_id);
        d.put("corpus_sha256", &p.corpus_sha256);
        d.put("checkpoint_sha256", p.checkpoint_sha256.as_deref().unwrap_or("none"));
        d.put("split", &p.split);
        d
    }

    fn put(&mut self, key: &str, value: impl std::fmt::Display) {
        let _ = writeln!(self.0, "{} = {}", key, value);
    }

    fn float(&mut self, key: &str, x: f64) {
        self.put(key, format!("{:?}", x));
    }

    fn floats(&mut self, key: &str, xs: &[f64]) {
        self.put(key, join(xs));
    }
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{:?}", x)).collect::<Vec<_>>().join(" ")
}

fn geometry(d: &mut Doc, prefix: &str, g: Option<&GeometrySummary>) {
    match g {
        Some(g) => {
            d.float(&format!("{}.mpjpe", prefix), g.mpjpe);
            d.float(&format!("{}.d_nmpjpe", prefix), g.d_nmpjpe);
            d.float(&format!("{}.pck05", prefix), g.pck05);
            d.float(&format!("{}.pck10", prefix), g.pck10);
            d.floats(&format!("{}.per_horizon", prefix), &g.per_horizon);
            d.put(&format!("{}.joints", prefix), g.joints);
            d.put(&format!("{}.clips", prefix), g.clips);
        }
        None => {
            for k in ["mpjpe", "d_nmpjpe", "pck05", "pck10", "per_horizon"] {
                d.put(&format!("{}.{}", prefix, k), "--");
            }
        }
    }
}

pub fn metrics_text(r: &MetricsReport, p: &Origin) -> String {
    let mut d = Doc::new("metrics report", p);
    d.put("predictor", &r.predictor);
    d.put("clips", r.clips);
    d.put("horizon", r.horizon);
    d.put("frame", format!("{}x{}", r.frame.0, r.frame.1));
    d.put("hm_ids", r.hm_ids.join(" "));
    let g = r.geometry.as_ref();
    match g {
        Some(g) => d.float("hm_threshold", g.hm_threshold),
        None => d.put("hm_threshold", "--"),
    }
    geometry(&mut d, "all", g.map(|g| &g.all));
    geometry(&mut d, "hm", g.and_then(|g| g.hm.as_ref()));
    match g {
        Some(g) => {
            d.float("head.mpjpe", g.head_mpjpe);
            d.float("hands.mpjpe", g.hands_mpjpe);
        }
        None => {
            d.put("head.mpjpe", "--");
            d.put("hands.mpjpe", "--");
        }
    }
    match &r.semantic {
        Some(heads) => {
            for h in heads {
                d.float(&format!("{}.accuracy", h.head), h.accuracy);
                d.float(&format!("{}.macro_f1", h.head), h.macro_f1);
            }
        }
        None => {
            for h in ["dbr", "der", "tcr", "vcr"] {
                d.put(&format!("{}.accuracy", h), "--");
                d.put(&format!("{}.macro_f1", h), "--");
            }
        }
    }
    d.0
}

pub const RECORD_HEADER: &str = "id\thm\tmotion_score\thorizon_sum\thorizon_count\tpck05_hits\tpck10_hits\t\
head_sum\thead_count\thands_sum\thands_count\tpredicted\ttruth";

fn labels(l: &[usize; 4]) -> String {
    l.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

pub fn records_text(records: &[ClipRecord]) -> String {
    let mut s = String::from(RECORD_HEADER);
    s.push('\n');
    for r in records {
        let counts: Vec<String> = r.horizon_count.iter().map(|c| c.to_string()).collect();
        let _ = writeln!(
            s,
            "{}\t{}\t{:?}\t{}\t{}\t{}\t{}\t{:?}\t{}\t{:?}\t{}\t{}\t{}",
            r.id,
            u8::from(r.hm),
            r.motion_score,
            r.horizon_sum.iter().map(|x| format!("{:?}", x)).collect::<Vec<_>>().join(","),
            counts.join(","),
            r.pck_hits[0],
            r.pck_hits[1],
            r.head_sum,
            r.head_count,
            r.hands_sum,
            r.hands_count,
            r.predicted.as_ref().map_or("-".to_string(), labels),
            labels(&r.truth),
        );
    }
    s
}

pub fn parse_records(text: &str) -> Result<Vec<ClipRecord>, FormatError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == RECORD_HEADER => {}
        _ => return Err(FormatError::Header("missing record header".into())),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fail = |m: &str| FormatError::Text {
            line: i + 1,
            message: m.to_string(),
        };
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 13 {
            return Err(fail("expected 13 tab-separated fields"));
        }
        fn p<T: std::str::FromStr>(s: &str) -> Option<T> {
            s.parse().ok()
        }
        fn many<T: std::str::FromStr>(s: &str) -> Option<Vec<T>> {
            if s.is_empty() {
                return Some(Vec::new());
            }
            s.split(',').map(p).collect()
        }
        fn four(s: &str) -> Option<[usize; 4]> {
            many::<usize>(s)?.try_into().ok()
        }
        let rec = (|| {
            Some(ClipRecord {
                id: f[0].to_string(),
                hm: p::<u8>(f[1])? == 1,
                motion_score: p(f[2])?,
                horizon_sum: many(f[3])?,
                horizon_count: many(f[4])?,
                pck_hits: [p(f[5])?, p(f[6])?],
                head_sum: p(f[7])?,
                head_count: p(f[8])?,
                hands_sum: p(f[9])?,
                hands_count: p(f[10])?,
                predicted: if f[11] == "-" { None } else { Some(four(f[11])?) },
                truth: four(f[12])?,
            })
        })();
        out.push(rec.ok_or_else(|| fail("malformed field"))?);
    }
    Ok(out)
}

pub fn deviation_text(rows: &[DeviationReport], p: &Origin, hm: &str) -> String {
    let mut d = Doc::new("deviation report", p);
    d.put("hm", hm);
    d.put("specs", rows.iter().map(|r| r.spec.as_str()).collect::<Vec<_>>().join(" "));
    for r in rows {
        d.float(&format!("{}.all", r.spec), r.all);
        d.float(&format!("{}.hm", r.spec), r.hm);
        d.float(&format!("{}.last", r.spec), r.last);
        d.float(&format!("{}.head", r.spec), r.head);
        d.float(&format!("{}.hands", r.spec), r.hands);
        d.floats(&format!("{}.per_horizon", r.spec), &r.per_horizon);
    }
    d.0
}

pub fn causality_text(reports: &[LookaheadReport], rerun: f64, history: &str, passed: bool, p: &Origin) -> String {
    let mut d = Doc::new("causality verdict", p);
    d.put("history", history);
    d.float("tolerance", driver_wm_core::interventions::LOOKAHEAD_TOLERANCE);
    for r in reports {
        let m = r.mode.name();
        d.float(&format!("{}.max", m), r.max);
        d.floats(&format!("{}.per_horizon", m), &r.per_horizon);
        d.put(&format!("{}.verdict", m), if r.passed() { "PASS" } else { "FAIL" });
    }
    d.float("rerun.max", rerun);
    d.put("verdict", if passed { "PASS" } else { "FAIL" });
    d.0
}

pub fn train_log_text(log: &[EpochLog], metric: &str) -> String {
    let mut s = String::from("epoch");
    for t in LossBreakdown::TERMS {
        let _ = write!(s, "\t{}", t);
    }
    let _ = writeln!(s, "\ttotal\t{}\tlr\tgrad_norm", metric);
    for l in log {
        let _ = write!(s, "{}", l.epoch);
        for t in LossBreakdown::TERMS {
            let _ = write!(s, "\t{:?}", l.train.get(t));
        }
        let _ = writeln!(s, "\t{:?}\t{:?}\t{:?}\t{:?}", l.train.total, l.val_metric, l.lr, l.grad_norm);
    }
    s
}

pub fn train_summary_text(out: &TrainOutcome, best_sha: &str, last_sha: &str, p: &Origin) -> String {
    let mut d = Doc::new("training summary", p);
    d.put("variant", out.best.arch.variant.name());
    d.put("val_metric", out.val_metric_name());
    d.put("best.epoch", out.best.epoch);
    d.float("best.val", out.best.val_metric);
    d.put("best.sha256", best_sha);
    d.put("last.epoch", out.last.epoch);
    d.float("last.val", out.last.val_metric);
    d.put("last.sha256", last_sha);
    d.put("steps", out.last.step);
    d.put(
        "diverged",
        out.diverged.as_ref().map_or("no".to_string(), |e| e.to_string()),
    );
    d.0
}
