//! Result directory layout:
//!
//! ```text
//! <out>/run_<k>/metrics.csv       epoch,train_loss,train_acc,val_acc
//! <out>/run_<k>/record.txt        seed, parameter count, final accuracies
//! <out>/run_<k>/failed.txt        error message of a failed run (no metrics)
//! <out>/aggregate/summary.txt
//! <out>/aggregate/config_echo.txt
//! ```
//!
//! Run `k` trained with seed `base_seed + k`. No file contains timestamps.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use super::config::RunConfig;
use super::document::Document;
use super::stats::BootstrapSummary;
use super::train::{EpochMetrics, RunOutcome, RunRecord};
use crate::error::{Error, Result};

pub const METRICS_HEADER: &str = "epoch,train_loss,train_acc,val_acc";

pub fn run_dir(out_dir: &Path, index: usize) -> PathBuf {
    out_dir.join(format!("run_{index}"))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn metrics_csv(epochs: &[EpochMetrics]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for m in epochs {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            m.epoch, m.train_loss, m.train_acc, m.val_acc
        );
    }
    out
}

pub fn parse_metrics_csv(path: &Path, text: &str) -> Result<Vec<EpochMetrics>> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.into(),
        message: format!("line {line}: {message}"),
    };
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_HEADER) {
        return Err(parse_err(1, format!("expected header `{METRICS_HEADER}`")));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(parse_err(
                    i + 2,
                    format!("expected 4 fields, found {}", f.len()),
                ));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| parse_err(i + 2, format!("`{s}`: {e}")))
            };
            Ok(EpochMetrics {
                epoch: f[0]
                    .parse()
                    .map_err(|e| parse_err(i + 2, format!("`{}`: {e}", f[0])))?,
                train_loss: num(f[1])?,
                train_acc: num(f[2])?,
                val_acc: num(f[3])?,
            })
        })
        .collect()
}

fn record_text(r: &RunRecord) -> String {
    let mut doc = Document::default();
    doc.push(
        "record",
        &[
            ("seed", r.seed.to_string()),
            ("k_tot", r.k_tot.to_string()),
            ("epochs", r.epochs.len().to_string()),
            ("final_train_acc", r.final_train_acc.to_string()),
            ("final_val_acc", r.final_val_acc.to_string()),
        ],
    );
    doc.render()
}

/// Writes every run, the summary and the echoed config below `out_dir`.
pub fn export_metrics(
    outcomes: &[RunOutcome],
    summary: Option<&BootstrapSummary>,
    config: &RunConfig,
    out_dir: &Path,
) -> Result<()> {
    for (k, outcome) in outcomes.iter().enumerate() {
        let dir = run_dir(out_dir, k);
        match outcome {
            Ok(record) => {
                write(&dir.join("metrics.csv"), &metrics_csv(&record.epochs))?;
                write(&dir.join("record.txt"), &record_text(record))?;
            }
            Err(failure) => {
                let mut doc = Document::default();
                doc.push(
                    "failed",
                    &[
                        ("seed", failure.seed.to_string()),
                        ("message", failure.message.replace('\n', " ")),
                    ],
                );
                write(&dir.join("failed.txt"), &doc.render())?;
            }
        }
    }
    let aggregate = out_dir.join("aggregate");
    if let Some(summary) = summary {
        write(&aggregate.join("summary.txt"), &summary.to_text())?;
    }
    write(&aggregate.join("config_echo.txt"), &config.to_text())
}

/// Reads back the runs of a result directory in index order; failed runs are
/// returned as seeds.
pub fn read_results(out_dir: &Path) -> Result<(Vec<RunRecord>, Vec<u64>)> {
    let mut records = Vec::new();
    let mut failed = Vec::new();
    for k in 0.. {
        let dir = run_dir(out_dir, k);
        if !dir.is_dir() {
            break;
        }
        let failed_path = dir.join("failed.txt");
        if failed_path.exists() {
            let doc = Document::parse(&read(&failed_path)?)?;
            let seed = doc
                .section("failed")
                .map(|s| s.require("seed"))
                .transpose()?
                .unwrap_or(0);
            failed.push(seed);
            continue;
        }
        let record_path = dir.join("record.txt");
        let doc = Document::parse(&read(&record_path)?)?;
        let s = doc.section("record").ok_or_else(|| Error::Parse {
            path: record_path.clone(),
            message: "missing `record` section".into(),
        })?;
        let metrics_path = dir.join("metrics.csv");
        let epochs = parse_metrics_csv(&metrics_path, &read(&metrics_path)?)?;
        let expected: usize = s.require("epochs")?;
        if epochs.len() != expected {
            return Err(Error::Parse {
                path: metrics_path,
                message: format!("{} epoch rows, record says {expected}", epochs.len()),
            });
        }
        records.push(RunRecord {
            seed: s.require("seed")?,
            k_tot: s.require("k_tot")?,
            epochs,
            final_train_acc: s.require("final_train_acc")?,
            final_val_acc: s.require("final_val_acc")?,
            wall_clock: Duration::ZERO,
        });
    }
    if records.is_empty() && failed.is_empty() {
        return Err(Error::Parse {
            path: out_dir.into(),
            message: "no run_<k> directories".into(),
        });
    }
    Ok((records, failed))
}
