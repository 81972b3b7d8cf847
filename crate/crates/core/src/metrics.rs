//! Run reports and the quantities derived from them.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::acquisition::Strategy;
use crate::dataset::{imbalance_ratio, ClassCounts};
use crate::engine::BudgetPlan;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub af: Strategy,
    pub seed: u64,
    pub plan: BudgetPlan,
    pub dataset: String,
    pub cost_sensitive: bool,
}

/// State after the training of iteration `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    /// Cumulative labeled count.
    pub labeled: usize,
    /// Test accuracy.
    pub acc: f64,
    /// Imbalance ratio of the labeled pool.
    pub ir: f64,
    pub class_counts: ClassCounts,
    /// Ids added at this iteration (the seed batch for `k = 0`).
    pub selected: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub meta: RunMeta,
    pub records: Vec<IterationRecord>,
}

impl Report {
    fn sorted_records(&self) -> Vec<&IterationRecord> {
        let mut records: Vec<&IterationRecord> = self.records.iter().collect();
        records.sort_by_key(|r| r.k);
        records
    }

    /// Accuracy per iteration, in iteration order.
    pub fn accuracy_curve(&self) -> Vec<f64> {
        self.sorted_records().iter().map(|r| r.acc).collect()
    }

    pub fn final_record(&self) -> Option<&IterationRecord> {
        self.records.iter().max_by_key(|r| r.k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::InvalidParameter(format!("unknown format `{other}`"))),
        }
    }
}

/// Unweighted mean of the per-iteration accuracies.
pub fn average_accuracy(report: &Report) -> f64 {
    let curve = report.accuracy_curve();
    if curve.is_empty() {
        return 0.0;
    }
    curve.iter().sum::<f64>() / curve.len() as f64
}

/// Average-accuracy difference in percentage points.
pub fn accuracy_gain_points(method: &Report, baseline: &Report) -> f64 {
    100.0 * (average_accuracy(method) - average_accuracy(baseline))
}

/// Smallest labeled count whose accuracy reaches `threshold`, if any.
pub fn samples_to_accuracy(report: &Report, threshold: f64) -> Result<Option<usize>> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "threshold must lie in (0, 1], got {threshold}"
        )));
    }
    Ok(report
        .sorted_records()
        .iter()
        .find(|r| r.acc >= threshold)
        .map(|r| r.labeled))
}

/// Labeled-pool imbalance ratio per iteration.
pub fn imbalance_profile(report: &Report) -> Result<Vec<f64>> {
    report
        .sorted_records()
        .iter()
        .map(|r| imbalance_ratio(&r.class_counts))
        .collect()
}

pub const REPORT_CSV_HEADER: &str = "iteration,labeled_count,accuracy,ir";

pub fn report_to_csv(report: &Report) -> String {
    let mut out = String::from(REPORT_CSV_HEADER);
    out.push('\n');
    for r in report.sorted_records() {
        writeln!(out, "{},{},{:.6},{:.6}", r.k, r.labeled, r.acc, r.ir).unwrap();
    }
    out
}

/// One parsed row of the report CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRecord {
    pub iteration: usize,
    pub labeled_count: usize,
    pub accuracy: f64,
    pub ir: f64,
}

pub fn parse_report_csv(text: &str) -> Result<Vec<CsvRecord>> {
    let origin = Path::new("<report csv>");
    let err = |line: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines();
    if lines.next() != Some(REPORT_CSV_HEADER) {
        return Err(err(1, "missing header".into()));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(err(i + 2, format!("expected 4 fields, found {}", f.len())));
            }
            let bad = |_| err(i + 2, format!("malformed row `{line}`"));
            Ok(CsvRecord {
                iteration: f[0]
                    .parse()
                    .map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
                labeled_count: f[1]
                    .parse()
                    .map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
                accuracy: f[2]
                    .parse()
                    .map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?,
                ir: f[3]
                    .parse()
                    .map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?,
            })
        })
        .collect()
}

pub fn report_to_json(report: &Report) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

pub fn report_from_json(text: &str) -> Result<Report> {
    Ok(serde_json::from_str(text)?)
}

pub fn write_report(report: &Report, path: impl AsRef<Path>, format: Format) -> Result<()> {
    let body = match format {
        Format::Csv => report_to_csv(report),
        Format::Json => report_to_json(report)?,
    };
    fs::write(path, body)?;
    Ok(())
}

pub fn read_report(path: impl AsRef<Path>) -> Result<Report> {
    report_from_json(&fs::read_to_string(path)?)
}

/// Mean and population standard deviation of one quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRecord {
    pub k: usize,
    pub labeled: usize,
    pub acc: MeanStd,
    pub ir: MeanStd,
}

/// Per-iteration statistics over several seeds of the same configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub af: Strategy,
    pub dataset: String,
    pub plan: BudgetPlan,
    pub seeds: Vec<u64>,
    pub average_accuracy: MeanStd,
    pub records: Vec<AggregateRecord>,
}

pub fn aggregate(reports: &[Report]) -> Result<Aggregate> {
    let first = reports.first().ok_or(Error::NoSamples)?;
    let t = first.records.len();
    if reports.iter().any(|r| {
        r.records.len() != t || r.meta.af != first.meta.af || r.meta.plan != first.meta.plan
    }) {
        return Err(Error::InvalidParameter(
            "reports to aggregate must share strategy and plan".into(),
        ));
    }
    let sorted: Vec<Vec<&IterationRecord>> = reports.iter().map(Report::sorted_records).collect();
    let records = (0..t)
        .map(|i| {
            let acc: Vec<f64> = sorted.iter().map(|r| r[i].acc).collect();
            let ir: Vec<f64> = sorted.iter().map(|r| r[i].ir).collect();
            AggregateRecord {
                k: sorted[0][i].k,
                labeled: sorted[0][i].labeled,
                acc: MeanStd::of(&acc),
                ir: MeanStd::of(&ir),
            }
        })
        .collect();
    let averages: Vec<f64> = reports.iter().map(average_accuracy).collect();
    Ok(Aggregate {
        af: first.meta.af,
        dataset: first.meta.dataset.clone(),
        plan: first.meta.plan,
        seeds: reports.iter().map(|r| r.meta.seed).collect(),
        average_accuracy: MeanStd::of(&averages),
        records,
    })
}

pub fn aggregate_to_csv(agg: &Aggregate) -> String {
    let mut out =
        String::from("iteration,labeled_count,accuracy_mean,accuracy_std,ir_mean,ir_std\n");
    for r in &agg.records {
        writeln!(
            out,
            "{},{},{:.6},{:.6},{:.6},{:.6}",
            r.k, r.labeled, r.acc.mean, r.acc.std, r.ir.mean, r.ir.std
        )
        .unwrap();
    }
    out
}

pub fn write_aggregate(agg: &Aggregate, path: impl AsRef<Path>, format: Format) -> Result<()> {
    let body = match format {
        Format::Csv => aggregate_to_csv(agg),
        Format::Json => {
            let mut s = serde_json::to_string_pretty(agg)?;
            s.push('\n');
            s
        }
    };
    fs::write(path, body)?;
    Ok(())
}

/// One line of a strategy comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainRow {
    pub af: Strategy,
    pub average_accuracy: MeanStd,
    /// Mean average accuracy minus random's, in percentage points.
    pub gain_points: Option<f64>,
    pub final_accuracy: f64,
    pub final_ir: f64,
}

/// Summarizes aggregates; gains are relative to the `random` aggregate when
/// one is present.
pub fn gain_table(aggregates: &[Aggregate]) -> Vec<GainRow> {
    let baseline = aggregates
        .iter()
        .find(|a| a.af == Strategy::Random)
        .map(|a| a.average_accuracy.mean);
    aggregates
        .iter()
        .map(|a| {
            let last = a.records.last();
            GainRow {
                af: a.af,
                average_accuracy: a.average_accuracy,
                gain_points: baseline.map(|b| 100.0 * (a.average_accuracy.mean - b)),
                final_accuracy: last.map_or(0.0, |r| r.acc.mean),
                final_ir: last.map_or(0.0, |r| r.ir.mean),
            }
        })
        .collect()
}

pub fn gain_table_to_csv(rows: &[GainRow]) -> String {
    let mut out = String::from(
        "af,average_accuracy_mean,average_accuracy_std,gain_points,final_accuracy,final_ir\n",
    );
    for r in rows {
        let gain = r.gain_points.map_or(String::new(), |g| format!("{g:.6}"));
        writeln!(
            out,
            "{},{:.6},{:.6},{},{:.6},{:.6}",
            r.af,
            r.average_accuracy.mean,
            r.average_accuracy.std,
            gain,
            r.final_accuracy,
            r.final_ir
        )
        .unwrap();
    }
    out
}
