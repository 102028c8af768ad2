//! Ensemble statistics over final accuracies.

use super::document::Document;
use super::train::RunRecord;
use crate::error::{Error, Result};

pub const HIST_LOWER: f64 = 0.9;
pub const HIST_BIN_WIDTH: f64 = 0.002;
pub const HIST_BINS: usize = 50;

/// Midpoint median: the mean of the two central values for even lengths.
pub fn median(values: &[f64]) -> Result<f64> {
    let sorted = sorted(values)?;
    let n = sorted.len();
    Ok(if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    })
}

/// Nearest-rank percentile: the value of rank `⌈P·n/100⌉` (at least 1) in ascending order.
pub fn percentile(values: &[f64], p: f64) -> Result<f64> {
    if !(0.0..=100.0).contains(&p) {
        return Err(Error::Argument(format!("percentile {p} outside [0, 100]")));
    }
    let sorted = sorted(values)?;
    let rank = ((p * sorted.len() as f64 / 100.0).ceil() as usize).max(1);
    Ok(sorted[rank - 1])
}

fn sorted(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::Argument("statistics of an empty sample".into()));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Argument("NaN in statistics sample".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Fixed-width bins over `[0.9, 1.0]`; the top bin is closed, values below 0.9 go to `underflow`.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub lower: f64,
    pub bin_width: f64,
    pub underflow: usize,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn of(values: &[f64]) -> Self {
        let mut h = Histogram {
            lower: HIST_LOWER,
            bin_width: HIST_BIN_WIDTH,
            underflow: 0,
            counts: vec![0; HIST_BINS],
        };
        for &v in values {
            // accuracies sitting on an edge must land in the bin that starts there
            let pos = (v - h.lower) / h.bin_width + 1e-9;
            if pos < 0.0 {
                h.underflow += 1;
            } else {
                h.counts[(pos.floor() as usize).min(HIST_BINS - 1)] += 1;
            }
        }
        h
    }

    pub fn edges(&self) -> Vec<f64> {
        (0..=self.counts.len())
            .map(|i| self.lower + i as f64 * self.bin_width)
            .collect()
    }

    pub fn total(&self) -> usize {
        self.underflow + self.counts.iter().sum::<usize>()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BootstrapSummary {
    pub runs: usize,
    pub failed: usize,
    pub median_val_acc: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Set when fewer than two runs back the interval.
    pub ci_degenerate: bool,
    pub median_train_acc: f64,
    pub tr90: f64,
    pub vr90: f64,
    /// Histogram of final validation accuracies.
    pub histogram: Histogram,
}

pub fn summarize(records: &[RunRecord], failed: usize) -> Result<BootstrapSummary> {
    if records.is_empty() {
        return Err(Error::Argument(format!(
            "no successful runs to summarize ({failed} failed)"
        )));
    }
    let val: Vec<f64> = records.iter().map(|r| r.final_val_acc).collect();
    let train: Vec<f64> = records.iter().map(|r| r.final_train_acc).collect();
    Ok(BootstrapSummary {
        runs: records.len(),
        failed,
        median_val_acc: median(&val)?,
        ci_low: percentile(&val, 16.0)?,
        ci_high: percentile(&val, 84.0)?,
        ci_degenerate: records.len() < 2,
        median_train_acc: median(&train)?,
        tr90: percentile(&train, 90.0)?,
        vr90: percentile(&val, 90.0)?,
        histogram: Histogram::of(&val),
    })
}

fn join<T: ToString>(values: &[T]) -> String {
    values
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(", ")
}

impl BootstrapSummary {
    pub fn to_text(&self) -> String {
        let mut doc = Document::default();
        doc.push(
            "summary",
            &[
                ("runs", self.runs.to_string()),
                ("failed", self.failed.to_string()),
                ("median_val_acc", self.median_val_acc.to_string()),
                ("ci68_low", self.ci_low.to_string()),
                ("ci68_high", self.ci_high.to_string()),
                ("ci_degenerate", self.ci_degenerate.to_string()),
                ("median_train_acc", self.median_train_acc.to_string()),
                ("tr90", self.tr90.to_string()),
                ("vr90", self.vr90.to_string()),
            ],
        );
        let h = &self.histogram;
        doc.push(
            "histogram",
            &[
                ("lower", h.lower.to_string()),
                ("bin_width", h.bin_width.to_string()),
                ("underflow", h.underflow.to_string()),
                ("counts", join(&h.counts)),
            ],
        );
        doc.render()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let doc = Document::parse(text)?;
        let missing = |name: &str| Error::ConfigKey {
            key: name.into(),
            message: "required section is missing".into(),
        };
        let s = doc.section("summary").ok_or_else(|| missing("summary"))?;
        let h = doc
            .section("histogram")
            .ok_or_else(|| missing("histogram"))?;
        let counts = h
            .require::<String>("counts")?
            .split(',')
            .map(|c| {
                c.trim().parse::<usize>().map_err(|e| Error::ConfigKey {
                    key: h.key_path("counts"),
                    message: e.to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BootstrapSummary {
            runs: s.require("runs")?,
            failed: s.require("failed")?,
            median_val_acc: s.require("median_val_acc")?,
            ci_low: s.require("ci68_low")?,
            ci_high: s.require("ci68_high")?,
            ci_degenerate: s.require("ci_degenerate")?,
            median_train_acc: s.require("median_train_acc")?,
            tr90: s.require("tr90")?,
            vr90: s.require("vr90")?,
            histogram: Histogram {
                lower: h.require("lower")?,
                bin_width: h.require("bin_width")?,
                underflow: h.require("underflow")?,
                counts,
            },
        })
    }
}
