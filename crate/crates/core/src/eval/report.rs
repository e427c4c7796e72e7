use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::VideoSample;
use crate::error::{Error, Result};
use crate::network::ModelParams;

/// One test prediction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub video_id: u64,
    pub subject_id: u64,
    pub age: f64,
    pub predicted: f64,
}

impl SampleRecord {
    pub fn abs_error(&self) -> f64 {
        (self.predicted - self.age).abs()
    }
}

/// Ages `lo..=hi`; the last bin also holds anything older.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgeBin {
    pub lo: u32,
    pub hi: u32,
    pub count: usize,
    pub mae: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub count: usize,
    pub mae: f64,
    /// Population standard deviation of the absolute errors.
    pub std_abs_error: f64,
    pub bins: Vec<AgeBin>,
    /// `cumulative[x]` is the fraction of samples with error ≤ x years.
    pub cumulative: Vec<f64>,
    pub records: Vec<SampleRecord>,
}

const BINS: usize = 8;
const CURVE_MIN: usize = 25;

fn mean_std(errors: &[f64]) -> (f64, f64) {
    let n = errors.len() as f64;
    let mean = errors.iter().sum::<f64>() / n;
    let var = errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl EvalReport {
    pub fn from_records(records: Vec<SampleRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::invalid("cannot report on an empty test set"));
        }
        let errors: Vec<f64> = records.iter().map(SampleRecord::abs_error).collect();
        let (mae, std_abs_error) = mean_std(&errors);
        let mut sums = [0.0; BINS];
        let mut counts = [0usize; BINS];
        for (r, e) in records.iter().zip(&errors) {
            let b = ((r.age.max(0.0) / 10.0).floor() as usize).min(BINS - 1);
            sums[b] += e;
            counts[b] += 1;
        }
        let bins = (0..BINS)
            .map(|b| AgeBin {
                lo: 10 * b as u32,
                hi: 10 * b as u32 + 9,
                count: counts[b],
                mae: (counts[b] > 0).then(|| sums[b] / counts[b] as f64),
            })
            .collect();
        let max_err = errors.iter().copied().fold(0.0, f64::max);
        let top = (max_err.ceil() as usize).max(CURVE_MIN);
        let cumulative = (0..=top).map(|x| success_rate(&errors, x as f64)).collect();
        Ok(EvalReport {
            count: records.len(),
            mae,
            std_abs_error,
            bins,
            cumulative,
            records,
        })
    }

    /// Fraction of samples with absolute error ≤ `x`.
    pub fn success_rate(&self, x: f64) -> f64 {
        let errors: Vec<f64> = self.records.iter().map(SampleRecord::abs_error).collect();
        success_rate(&errors, x)
    }

    pub fn bins_csv(&self) -> String {
        let mut out = String::from("age_lo,age_hi,count,mae\n");
        for b in &self.bins {
            let mae = b.mae.map(|m| m.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{}", b.lo, b.hi, b.count, mae);
        }
        out
    }

    pub fn cumulative_csv(&self) -> String {
        let mut out = String::from("error_years,success_rate\n");
        for (x, r) in self.cumulative.iter().enumerate() {
            let _ = writeln!(out, "{x},{r}");
        }
        out
    }

    pub fn records_csv(&self) -> String {
        let mut out = String::from("video_id,subject_id,age,predicted,abs_error\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.video_id,
                r.subject_id,
                r.age,
                r.predicted,
                r.abs_error()
            );
        }
        out
    }
}

fn success_rate(errors: &[f64], x: f64) -> f64 {
    errors.iter().filter(|&&e| e <= x).count() as f64 / errors.len() as f64
}

/// Evaluation-mode predictions on every video.
pub fn evaluate(params: &ModelParams, videos: &[&VideoSample]) -> Result<EvalReport> {
    let records = videos
        .par_iter()
        .map(|v| {
            Ok(SampleRecord {
                video_id: v.id,
                subject_id: v.subject_id,
                age: v.age,
                predicted: params.predict_age(&v.frames)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_records(records)
}

/// Predicts the mean training age for every test video.
pub fn mean_predictor(train: &[&VideoSample], test: &[&VideoSample]) -> Result<EvalReport> {
    if train.is_empty() {
        return Err(Error::invalid("mean predictor needs training labels"));
    }
    let mean = train.iter().map(|v| v.age).sum::<f64>() / train.len() as f64;
    EvalReport::from_records(
        test.iter()
            .map(|v| SampleRecord {
                video_id: v.id,
                subject_id: v.subject_id,
                age: v.age,
                predicted: mean,
            })
            .collect(),
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub min_samples: usize,
    pub count: usize,
    /// `None` when no sample survives the threshold.
    pub mae: Option<f64>,
    pub std_abs_error: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdStudy {
    pub rows: Vec<ThresholdRow>,
}

impl ThresholdStudy {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("min_samples,count,mae,std_abs_error\n");
        for r in &self.rows {
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{}",
                r.min_samples,
                r.count,
                opt(r.mae),
                opt(r.std_abs_error)
            );
        }
        out
    }
}

/// For `m = 1..=max_threshold`, the error over predictions whose integer
/// age occurs at least `m` times in `dataset_ages`.
pub fn threshold_study(
    dataset_ages: &[f64],
    records: &[SampleRecord],
    max_threshold: usize,
) -> ThresholdStudy {
    let mut per_age: BTreeMap<i64, usize> = BTreeMap::new();
    for a in dataset_ages {
        *per_age.entry(a.floor() as i64).or_default() += 1;
    }
    let rows = (1..=max_threshold)
        .map(|m| {
            let errors: Vec<f64> = records
                .iter()
                .filter(|r| {
                    per_age
                        .get(&(r.age.floor() as i64))
                        .is_some_and(|&c| c >= m)
                })
                .map(SampleRecord::abs_error)
                .collect();
            let stats = (!errors.is_empty()).then(|| mean_std(&errors));
            ThresholdRow {
                min_samples: m,
                count: errors.len(),
                mae: stats.map(|s| s.0),
                std_abs_error: stats.map(|s| s.1),
            }
        })
        .collect();
    ThresholdStudy { rows }
}
