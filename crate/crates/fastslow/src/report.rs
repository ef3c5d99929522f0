//! Evaluation reports: accuracy, output length and sample counts per
//! reasoning path and duration bucket, plus the fast-path confidence
//! diagnostics. Reports are pure functions of run records, so replaying a run
//! log reproduces them exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use fastslow_core::world::DurationBucket;
use fastslow_core::{accuracy_above_threshold, confidence_gap_report, GapReport, ScoredPrediction, ThresholdPoint};

use crate::controller::{RoutePath, RunRecord, Strategy};

/// Thresholds of the accuracy-above-threshold curve.
pub const CURVE_THRESHOLDS: [f64; 7] = [0.4, 0.5, 0.6, 0.7, 0.75, 0.8, 0.9];

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BucketCounts {
    pub short: usize,
    pub medium: usize,
    pub long: usize,
    pub total: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BucketAccuracy {
    pub short: Option<f64>,
    pub medium: Option<f64>,
    pub long: Option<f64>,
    pub avg: Option<f64>,
}

/// One row of the fast / slow / overall table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRow {
    pub path: String,
    pub samples: BucketCounts,
    pub accuracy: BucketAccuracy,
    pub mean_output_length: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<Strategy>,
    /// Always three rows: fast, slow, overall.
    pub rows: Vec<PathRow>,
    /// Fine-grained routing counts.
    pub path_counts: BTreeMap<String, usize>,
    /// Records with an empty final answer.
    pub unanswered: usize,
    /// Gap between correct and incorrect fast answers; absent when either class is empty.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap: Option<GapReport>,
    pub threshold_curve: Vec<ThresholdPoint>,
}

#[derive(Default)]
struct Acc {
    n: [usize; 3],
    graded: [usize; 3],
    correct: [usize; 3],
    all_graded: usize,
    all_correct: usize,
    len_sum: usize,
    total: usize,
}

fn bucket_index(b: DurationBucket) -> usize {
    match b {
        DurationBucket::Short => 0,
        DurationBucket::Medium => 1,
        DurationBucket::Long => 2,
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl Acc {
    fn add(&mut self, r: &RunRecord) {
        self.total += 1;
        self.len_sum += r.output_length;
        let correct = r.correct();
        if let Some(c) = correct {
            self.all_graded += 1;
            self.all_correct += usize::from(c);
        }
        if let Some(b) = r.duration_bucket {
            let i = bucket_index(b);
            self.n[i] += 1;
            if let Some(c) = correct {
                self.graded[i] += 1;
                self.correct[i] += usize::from(c);
            }
        }
    }

    fn row(&self, path: &str) -> PathRow {
        PathRow {
            path: path.to_string(),
            samples: BucketCounts { short: self.n[0], medium: self.n[1], long: self.n[2], total: self.total },
            accuracy: BucketAccuracy {
                short: ratio(self.correct[0], self.graded[0]),
                medium: ratio(self.correct[1], self.graded[1]),
                long: ratio(self.correct[2], self.graded[2]),
                avg: ratio(self.all_correct, self.all_graded),
            },
            mean_output_length: (self.total > 0).then(|| self.len_sum as f64 / self.total as f64),
        }
    }
}

impl EvalReport {
    pub fn from_records(records: &[RunRecord]) -> Self {
        let (mut fast, mut slow, mut all) = (Acc::default(), Acc::default(), Acc::default());
        let mut path_counts: BTreeMap<String, usize> =
            RoutePath::ALL.iter().map(|p| (p.as_str().to_string(), 0)).collect();
        let mut scored = Vec::new();
        for r in records {
            if r.decision.path.is_slow() {
                slow.add(r);
            } else {
                fast.add(r);
            }
            all.add(r);
            *path_counts.entry(r.decision.path.as_str().to_string()).or_default() += 1;
            if let (Some(f), Some(c)) = (&r.fast, r.fast_correct()) {
                scored.push(ScoredPrediction::new(f.confidence.value(), c));
            }
        }
        let theta = records.first().map(|r| r.decision.theta);
        let strategy = records.first().map(|r| r.strategy);
        EvalReport {
            n: records.len(),
            theta,
            strategy,
            rows: vec![fast.row("fast"), slow.row("slow"), all.row("overall")],
            path_counts,
            unanswered: records.iter().filter(|r| r.final_answer.is_empty()).count(),
            gap: confidence_gap_report(&scored).ok(),
            threshold_curve: accuracy_above_threshold(&scored, &CURVE_THRESHOLDS),
        }
    }

    pub fn row(&self, path: &str) -> Option<&PathRow> {
        self.rows.iter().find(|r| r.path == path)
    }

    /// Overall accuracy over graded records, 0 when nothing was graded.
    pub fn accuracy(&self) -> f64 {
        self.row("overall").and_then(|r| r.accuracy.avg).unwrap_or(0.0)
    }

    /// Aligned text table: one row per path, samples and accuracy per duration bucket.
    pub fn to_table(&self) -> String {
        let pct = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{:.1}", v * 100.0));
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<8} | {:>6} {:>6} {:>6} {:>6} | {:>6} {:>6} {:>6} {:>6} | {:>8}",
            "Path", "Short", "Medium", "Long", "All", "Short", "Medium", "Long", "Avg", "Out.Len"
        );
        let _ = writeln!(out, "{:<8} | {:^27} | {:^27} |", "", "samples", "accuracy (%)");
        let _ = writeln!(out, "{}", "-".repeat(76));
        for r in &self.rows {
            let s = r.samples;
            let a = r.accuracy;
            let _ = writeln!(
                out,
                "{:<8} | {:>6} {:>6} {:>6} {:>6} | {:>6} {:>6} {:>6} {:>6} | {:>8}",
                r.path,
                s.short,
                s.medium,
                s.long,
                s.total,
                pct(a.short),
                pct(a.medium),
                pct(a.long),
                pct(a.avg),
                r.mean_output_length.map_or("-".to_string(), |l| format!("{l:.1}")),
            );
        }
        if let Some(g) = &self.gap {
            let _ = writeln!(
                out,
                "\nfast confidence: correct {:.4} (n={}), incorrect {:.4} (n={}), gap {:.4}",
                g.mean_correct, g.n_correct, g.mean_incorrect, g.n_incorrect, g.delta
            );
        }
        if !self.threshold_curve.is_empty() {
            let _ = writeln!(out, "\n{:>9} | {:>8} | {:>8}", "threshold", "accuracy", "coverage");
            for p in &self.threshold_curve {
                let _ = writeln!(out, "{:>9.2} | {:>8} | {:>8.1}", p.threshold, pct(p.accuracy), p.coverage * 100.0);
            }
        }
        out
    }
}

/// One point of a threshold sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub theta: f64,
    pub report: EvalReport,
}

pub fn sweep_table(points: &[SweepPoint]) -> String {
    let mut out = format!("{:>6} | {:>8} | {:>5} | {:>5}\n", "theta", "accuracy", "fast", "slow");
    for p in points {
        let count = |path: &str| p.report.row(path).map_or(0, |r| r.samples.total);
        let _ = writeln!(
            out,
            "{:>6.2} | {:>8.2} | {:>5} | {:>5}",
            p.theta,
            p.report.accuracy() * 100.0,
            count("fast"),
            count("slow")
        );
    }
    out
}
