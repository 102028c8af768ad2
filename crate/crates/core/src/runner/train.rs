use std::time::{Duration, Instant};

use log::{info, warn};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::RunConfig;
use crate::error::{Error, Result};
use crate::hybrid::{MainModel, Optimizers};
use crate::mnist::{self, Dataset};

#[derive(Clone, Debug, PartialEq)]
pub struct EpochMetrics {
    /// 1-based epoch number.
    pub epoch: usize,
    /// Sample-weighted mean of the mini-batch losses.
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
}

#[derive(Clone, Debug)]
pub struct RunRecord {
    pub seed: u64,
    pub k_tot: usize,
    pub epochs: Vec<EpochMetrics>,
    pub final_train_acc: f64,
    pub final_val_acc: f64,
    pub wall_clock: Duration,
}

impl RunRecord {
    /// Equality of everything except the wall-clock time.
    pub fn same_results(&self, other: &RunRecord) -> bool {
        self.seed == other.seed
            && self.k_tot == other.k_tot
            && self.epochs == other.epochs
            && self.final_train_acc.to_bits() == other.final_train_acc.to_bits()
            && self.final_val_acc.to_bits() == other.final_val_acc.to_bits()
    }
}

/// Independent sub-seed of `seed` for one purpose of a run.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.next_u64()
}

const SPLIT_STREAM: u64 = 1;
const INIT_STREAM: u64 = 2;
const SHUFFLE_STREAM: u64 = 3;

/// Loads the IDX files named by the config and keeps digits 3 and 7.
pub fn load_binary_dataset(config: &RunConfig) -> Result<Dataset> {
    let raw = mnist::load_idx(&config.images, &config.labels)?;
    Ok(mnist::filter_digits(&raw))
}

pub fn run_training(config: &RunConfig, seed: u64) -> Result<RunRecord> {
    let data = load_binary_dataset(config)?;
    run_training_on(config, &data, seed)
}

/// Split, initialize, then per epoch: shuffled mini-batches of Adam steps
/// followed by a full evaluation on both splits.
pub fn run_training_on(config: &RunConfig, data: &Dataset, seed: u64) -> Result<RunRecord> {
    let start = Instant::now();
    let t = &config.train;
    let split = mnist::split(
        data,
        t.train_size,
        t.val_size,
        derive_seed(seed, SPLIT_STREAM),
    )?;
    let mut model = MainModel::init(
        &config.model_spec()?,
        &mut ChaCha8Rng::seed_from_u64(derive_seed(seed, INIT_STREAM)),
    )?;
    model.dimension_check(&vec![0.0; data.width()])?;
    let mut optimizers = Optimizers::for_model(&model);
    let (train_x, train_y) = split.train.features();
    let (val_x, val_y) = split.validation.features();
    let shuffle_seed = derive_seed(seed, SHUFFLE_STREAM);

    let mut epochs = Vec::with_capacity(t.epochs);
    for epoch in 0..t.epochs {
        let mut loss_sum = 0.0;
        for batch in mnist::batches(split.train.len(), t.batch_size, shuffle_seed, epoch as u64)? {
            let (x, y) = split.train.batch(&batch);
            let (loss, _) = model
                .train_step(&x, &y, &mut optimizers, t.learning_rate)
                .map_err(|e| match e {
                    Error::NonFinite(msg) => {
                        Error::NonFinite(format!("seed {seed}, epoch {}: {msg}", epoch + 1))
                    }
                    other => other,
                })?;
            loss_sum += loss * batch.len() as f64;
        }
        let metrics = EpochMetrics {
            epoch: epoch + 1,
            train_loss: loss_sum / split.train.len() as f64,
            train_acc: model.evaluate(&train_x, &train_y)?,
            val_acc: model.evaluate(&val_x, &val_y)?,
        };
        info!(
            "seed {seed} epoch {}: loss {:.5} train {:.4} val {:.4}",
            metrics.epoch, metrics.train_loss, metrics.train_acc, metrics.val_acc
        );
        epochs.push(metrics);
    }

    let (final_train_acc, final_val_acc) = match epochs.last() {
        Some(m) => (m.train_acc, m.val_acc),
        None => (
            model.evaluate(&train_x, &train_y)?,
            model.evaluate(&val_x, &val_y)?,
        ),
    };
    Ok(RunRecord {
        seed,
        k_tot: model.num_params(),
        epochs,
        final_train_acc,
        final_val_acc,
        wall_clock: start.elapsed(),
    })
}

#[derive(Clone, Debug)]
pub struct RunFailure {
    pub seed: u64,
    pub message: String,
}

/// One slot per bootstrap run, in seed order.
pub type RunOutcome = std::result::Result<RunRecord, RunFailure>;

/// Trains `bootstrap_count` models with seeds `base_seed + k`, spread over
/// the available cores. Individual failures are kept, not propagated.
pub fn run_ensemble(config: &RunConfig, data: &Dataset) -> Vec<RunOutcome> {
    let count = config.bootstrap_count;
    let workers = std::thread::available_parallelism()
        .map_or(1, usize::from)
        .min(count)
        .max(1);
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut slots: Vec<Option<RunOutcome>> = vec![None; count];
    let results = std::sync::Mutex::new(&mut slots);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if k >= count {
                    break;
                }
                let seed = config.base_seed.wrapping_add(k as u64);
                let outcome = run_training_on(config, data, seed).map_err(|e| {
                    warn!("run {k} (seed {seed}) failed: {e}");
                    RunFailure {
                        seed,
                        message: e.to_string(),
                    }
                });
                results.lock().expect("no worker panicked")[k] = Some(outcome);
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.expect("every run visited"))
        .collect()
}
