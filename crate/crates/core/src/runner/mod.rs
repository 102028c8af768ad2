//! Config-driven experiments: single runs, seeded bootstrap ensembles,
//! aggregate statistics, persisted results and the shot-noise study.

pub mod config;
pub mod document;
pub mod export;
pub mod shotnoise;
pub mod stats;
pub mod train;

use std::path::Path;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use config::{
    load_config, parse_config, MiddleConfig, RunConfig, ShotNoiseConfig, TrainConfig,
};
pub use export::{export_metrics, read_results};
pub use shotnoise::{shot_noise_experiment, ShotNoiseReport};
pub use stats::{summarize, BootstrapSummary, Histogram};
pub use train::{run_training, run_training_on, EpochMetrics, RunFailure, RunOutcome, RunRecord};

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct BootstrapOutcome {
    pub outcomes: Vec<RunOutcome>,
    pub summary: BootstrapSummary,
}

impl BootstrapOutcome {
    pub fn records(&self) -> Vec<&RunRecord> {
        self.outcomes
            .iter()
            .filter_map(|o| o.as_ref().ok())
            .collect()
    }

    pub fn failed(&self) -> usize {
        self.outcomes.iter().filter(|o| o.is_err()).count()
    }
}

/// Trains the ensemble with seeds `base_seed, base_seed + 1, …`, summarizes the
/// successful runs and writes everything to `config.out_dir`.
pub fn run_bootstrap(config: &RunConfig) -> Result<BootstrapOutcome> {
    let data = train::load_binary_dataset(config)?;
    let outcomes = train::run_ensemble(config, &data);
    let records: Vec<RunRecord> = outcomes.iter().filter_map(|o| o.clone().ok()).collect();
    let failed = outcomes.len() - records.len();
    if failed > 0 {
        warn!(
            "{failed} of {} runs failed and are excluded from the summary",
            outcomes.len()
        );
    }
    let summary = summarize(&records, failed);
    export_metrics(&outcomes, summary.as_ref().ok(), config, &config.out_dir)?;
    Ok(BootstrapOutcome {
        outcomes,
        summary: summary?,
    })
}

/// Single training run with `base_seed`, persisted as `run_0` plus the config echo.
pub fn run_single(config: &RunConfig) -> Result<RunRecord> {
    let record = run_training(config, config.base_seed)?;
    export_metrics(&[Ok(record.clone())], None, config, &config.out_dir)?;
    Ok(record)
}

/// Shot-noise study of the configured circuit at angles drawn uniformly from
/// `[0, π)` with `base_seed`; the report goes to `<out_dir>/shotnoise/report.txt`.
pub fn run_shotnoise(config: &RunConfig) -> Result<ShotNoiseReport> {
    let (layout, selection) = match (&config.middle, config.layout()) {
        (MiddleConfig::Quantum { selection, .. }, Some(layout)) => (layout?, *selection),
        _ => {
            return Err(Error::ConfigKey {
                key: "model.middle".into(),
                message: "the shot-noise study needs a quantum middle".into(),
            })
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.base_seed);
    let angles: Vec<f64> = (0..layout.num_params())
        .map(|_| rng.random_range(0.0..std::f64::consts::PI))
        .collect();
    let report = shot_noise_experiment(
        &layout,
        &angles,
        selection,
        &config.shotnoise,
        config.base_seed,
    )?;
    let path = config.out_dir.join("shotnoise").join("report.txt");
    let parent = path.parent().expect("joined path");
    std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    std::fs::write(&path, report.to_text()).map_err(|e| Error::io(&path, e))?;
    Ok(report)
}

/// Recomputes the summary of an existing result directory and rewrites
/// `aggregate/summary.txt`.
pub fn summarize_dir(out_dir: &Path) -> Result<BootstrapSummary> {
    let (records, failed) = read_results(out_dir)?;
    let summary = summarize(&records, failed.len())?;
    let path = out_dir.join("aggregate").join("summary.txt");
    let parent = path.parent().expect("joined path");
    std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    std::fs::write(&path, summary.to_text()).map_err(|e| Error::io(&path, e))?;
    Ok(summary)
}
