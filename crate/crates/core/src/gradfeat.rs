//! Gradient featurization: nine statistics per batch gradient, summarized
//! across batches by mean / std / min / max / range into 45 numbers.
//!
//! Feature order is stat-major: for each statistic in [`STAT_NAMES`] order,
//! its five summaries in [`SUMMARY_NAMES`] order.

use serde::{Deserialize, Serialize};

use crate::error::{input_err, Error, Result};
use crate::nn::GradTrace;
use crate::util::Reader;

pub const FEATURE_DIM: usize = 45;

pub const STAT_NAMES: [&str; 9] = [
    "mean", "std", "min", "max", "range", "skew", "kurtosis", "l1", "l2",
];

pub const SUMMARY_NAMES: [&str; 5] = ["mean", "std", "min", "max", "range"];

/// Below this second central moment, skew and kurtosis are reported as 0.
const DEGENERATE_M2: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchStats9 {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub range: f64,
    pub skew: f64,
    pub kurtosis: f64,
    pub l1: f64,
    pub l2: f64,
}

impl BatchStats9 {
    pub fn as_array(&self) -> [f64; 9] {
        [
            self.mean,
            self.std,
            self.min,
            self.max,
            self.range,
            self.skew,
            self.kurtosis,
            self.l1,
            self.l2,
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradFeature45(#[serde(with = "feature_serde")] pub [f64; FEATURE_DIM]);

impl GradFeature45 {
    pub fn values(&self) -> &[f64; FEATURE_DIM] {
        &self.0
    }

    /// Value of summary `summary` (0..5) for statistic `stat` (0..9).
    pub fn get(&self, stat: usize, summary: usize) -> f64 {
        self.0[stat * 5 + summary]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.0.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() != FEATURE_DIM * 8 {
            return Err(Error::Decode(format!(
                "feature blob has {} bytes, expected {}",
                bytes.len(),
                FEATURE_DIM * 8
            )));
        }
        let mut r = Reader::new(bytes);
        let mut out = [0.0; FEATURE_DIM];
        for v in &mut out {
            *v = r.f64()?;
        }
        Ok(Self(out))
    }
}

mod feature_serde {
    use super::FEATURE_DIM;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64; FEATURE_DIM], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[f64; FEATURE_DIM], D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        let len = v.len();
        v.try_into()
            .map_err(|_| D::Error::custom(format!("expected {FEATURE_DIM} values, got {len}")))
    }
}

/// Rows used to fit a judge forest.
pub type FeatureMatrix = Vec<GradFeature45>;

fn sample_std(values: &[f64], mean: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

pub fn batch_stats9(grad: &[f64]) -> Result<BatchStats9> {
    if grad.is_empty() {
        return input_err("gradient vector is empty");
    }
    let n = grad.len() as f64;
    let mean = grad.iter().sum::<f64>() / n;
    let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    let (mut l1, mut sq) = (0.0, 0.0);
    for &v in grad {
        min = min.min(v);
        max = max.max(v);
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
        l1 += v.abs();
        sq += v * v;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let (skew, kurtosis) = if m2 < DEGENERATE_M2 {
        (0.0, 0.0)
    } else {
        (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    };
    Ok(BatchStats9 {
        mean,
        std: sample_std(grad, mean),
        min,
        max,
        range: max - min,
        skew,
        kurtosis,
        l1,
        l2: sq.sqrt(),
    })
}

pub fn five_stat_summary(per_batch: &[BatchStats9]) -> Result<GradFeature45> {
    if per_batch.is_empty() {
        return input_err("no batch statistics to summarize");
    }
    let rows: Vec<[f64; 9]> = per_batch.iter().map(BatchStats9::as_array).collect();
    let mut out = [0.0; FEATURE_DIM];
    let mut column = Vec::with_capacity(rows.len());
    for stat in 0..9 {
        column.clear();
        column.extend(rows.iter().map(|r| r[stat]));
        let mean = column.iter().sum::<f64>() / column.len() as f64;
        let min = column.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = column.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        out[stat * 5..stat * 5 + 5].copy_from_slice(&[
            mean,
            sample_std(&column, mean),
            min,
            max,
            max - min,
        ]);
    }
    Ok(GradFeature45(out))
}

pub fn features_from_trace(trace: &GradTrace) -> Result<GradFeature45> {
    if trace.is_empty() {
        return input_err("gradient trace is empty");
    }
    let stats = trace
        .per_batch
        .iter()
        .map(|g| batch_stats9(g))
        .collect::<Result<Vec<_>>>()?;
    five_stat_summary(&stats)
}
