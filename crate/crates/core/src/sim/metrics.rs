use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::protocol::TimingsMs;

pub const CSV_HEADER: [&str; 13] = [
    "experiment",
    "seed",
    "round",
    "n_clients",
    "malicious_frac",
    "tpr",
    "fpr",
    "f1",
    "global_acc",
    "judge_ms_train",
    "judge_ms_feat",
    "judge_ms_forest",
    "accepted_count",
];

/// Screening confusion counts. Positive means "this update was poisoned".
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    /// `attacked[k]` is the ground truth, `rejected[k]` the screening decision.
    pub fn from_decisions(attacked: &[bool], rejected: &[bool]) -> Self {
        let mut c = Self::default();
        for (&a, &r) in attacked.iter().zip(rejected) {
            match (a, r) {
                (true, true) => c.tp += 1,
                (true, false) => c.fn_ += 1,
                (false, true) => c.fp += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    pub fn add(&mut self, other: &Self) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.tn += other.tn;
        self.fn_ += other.fn_;
    }

    /// Absent without positives.
    pub fn tpr(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// Absent without negatives.
    pub fn fpr(&self) -> Option<f64> {
        ratio(self.fp, self.fp + self.tn)
    }

    pub fn precision(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp)
    }

    /// `2PR / (P + R)`, with 0 whenever `P + R = 0` or either is undefined.
    pub fn f1(&self) -> f64 {
        let p = self.precision().unwrap_or(0.0);
        let r = self.tpr().unwrap_or(0.0);
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// One row of the metrics CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub experiment: String,
    pub seed: u64,
    pub round: u32,
    pub n_clients: usize,
    pub malicious_frac: f64,
    pub confusion: Option<Confusion>,
    pub global_acc: Option<f64>,
    pub timings: Option<TimingsMs>,
    pub accepted_count: Option<usize>,
}

impl MetricsRecord {
    pub fn tpr(&self) -> Option<f64> {
        self.confusion.and_then(|c| c.tpr())
    }

    pub fn fpr(&self) -> Option<f64> {
        self.confusion.and_then(|c| c.fpr())
    }

    pub fn f1(&self) -> Option<f64> {
        self.confusion.map(|c| c.f1())
    }

    pub fn csv_fields(&self) -> [String; 13] {
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        let t = self.timings;
        [
            self.experiment.clone(),
            self.seed.to_string(),
            self.round.to_string(),
            self.n_clients.to_string(),
            self.malicious_frac.to_string(),
            opt(self.tpr()),
            opt(self.fpr()),
            opt(self.f1()),
            opt(self.global_acc),
            opt(t.map(|t| t.train)),
            opt(t.map(|t| t.features)),
            opt(t.map(|t| t.forest)),
            self.accepted_count.map(|c| c.to_string()).unwrap_or_default(),
        ]
    }
}

pub fn write_csv<W: Write>(out: W, records: &[MetricsRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| crate::Error::Io(e.into());
    w.write_record(CSV_HEADER).map_err(io)?;
    for r in records {
        w.write_record(r.csv_fields()).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// Mean and sample standard deviation; `None` for an empty input.
pub fn mean_std(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Some((mean, std))
}

/// Least-squares line through `(x, y)`: `(slope, intercept, r_squared)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some((slope, intercept, r2))
}
