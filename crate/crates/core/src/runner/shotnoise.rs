//! Monte-Carlo check of the shot budget for sampled gradients.

use std::fmt::Write as _;

use super::config::ShotNoiseConfig;
use super::train::derive_seed;
use crate::circuit::{sample_bound, CircuitLayout, ComplexityQuery, OutputSelection};
use crate::error::Result;

const VARIANCE_STREAM: u64 = 11;
const TRIAL_STREAM: u64 = 12;

#[derive(Clone, Debug, PartialEq)]
pub struct ShotNoiseReport {
    pub num_qubits: usize,
    pub num_params: usize,
    pub selection: OutputSelection,
    pub epsilon: f64,
    pub angles: Vec<f64>,
    /// Exact gradient, row-major `Q₁ × M`.
    pub exact: Vec<f64>,
    /// Single-shot variance of each gradient component, row-major `Q₁ × M`.
    pub variances: Vec<f64>,
    pub max_variance: f64,
    pub sample_bound: u64,
    pub shots: u64,
    pub trials: usize,
    pub successes: usize,
    /// Mean of `|g − g̃|₂²` over the trials.
    pub mean_squared_error: f64,
}

impl ShotNoiseReport {
    pub fn success_fraction(&self) -> f64 {
        self.successes as f64 / self.trials as f64
    }

    pub fn to_text(&self) -> String {
        let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(", ");
        let mut out = String::new();
        let _ = writeln!(out, "shotnoise:");
        let _ = writeln!(out, "  qubits: {}", self.num_qubits);
        let _ = writeln!(out, "  params: {}", self.num_params);
        let _ = writeln!(out, "  selection: {}", self.selection.as_str());
        let _ = writeln!(out, "  epsilon: {}", self.epsilon);
        let _ = writeln!(out, "  max_variance: {}", self.max_variance);
        let _ = writeln!(out, "  sample_bound: {}", self.sample_bound);
        let _ = writeln!(out, "  shots: {}", self.shots);
        let _ = writeln!(out, "  trials: {}", self.trials);
        let _ = writeln!(out, "  successes: {}", self.successes);
        let _ = writeln!(out, "  success_fraction: {}", self.success_fraction());
        let _ = writeln!(out, "  mean_squared_error: {}", self.mean_squared_error);
        let _ = writeln!(out, "\ncircuit:");
        let _ = writeln!(out, "  angles: {}", join(&self.angles));
        let _ = writeln!(out, "  exact_gradient: {}", join(&self.exact));
        let _ = writeln!(out, "  variances: {}", join(&self.variances));
        out
    }
}

/// Estimates per-component variances from single-shot gradients, sets the
/// shot count to `shot_multiplier × sample_bound`, and counts the trials whose
/// sampled gradient lies within `epsilon` of the exact one.
pub fn shot_noise_experiment(
    layout: &CircuitLayout,
    angles: &[f64],
    selection: OutputSelection,
    settings: &ShotNoiseConfig,
    seed: u64,
) -> Result<ShotNoiseReport> {
    let exact = layout.gradient_exact(angles, selection)?;
    let len = exact.as_slice().len();

    let mut sum = vec![0.0; len];
    let mut sum_sq = vec![0.0; len];
    for s in 0..settings.variance_samples {
        let g = layout.gradient_sampled(
            angles,
            selection,
            1,
            derive_seed(seed, VARIANCE_STREAM) ^ s as u64,
        )?;
        for (j, &v) in g.as_slice().iter().enumerate() {
            sum[j] += v;
            sum_sq[j] += v * v;
        }
    }
    let n = settings.variance_samples as f64;
    let variances: Vec<f64> = sum
        .iter()
        .zip(&sum_sq)
        .map(|(&s, &q)| ((q - s * s / n) / (n - 1.0)).max(0.0))
        .collect();
    let max_variance = variances.iter().copied().fold(0.0, f64::max);

    let bound = sample_bound(&ComplexityQuery {
        num_outputs: exact.rows(),
        num_params: exact.cols(),
        epsilon: settings.epsilon,
        max_variance,
    })?;
    let shots = bound * settings.shot_multiplier;
    let (successes, mse) = trial_errors(layout, angles, selection, shots, settings, seed)?;

    Ok(ShotNoiseReport {
        num_qubits: layout.num_qubits(),
        num_params: layout.num_params(),
        selection,
        epsilon: settings.epsilon,
        angles: angles.to_vec(),
        exact: exact.as_slice().to_vec(),
        variances,
        max_variance,
        sample_bound: bound,
        shots,
        trials: settings.trials,
        successes,
        mean_squared_error: mse,
    })
}

/// Success count and mean squared error of `trials` sampled gradients at a
/// fixed shot count; trial `t` always uses the same seed.
pub fn trial_errors(
    layout: &CircuitLayout,
    angles: &[f64],
    selection: OutputSelection,
    shots: u64,
    settings: &ShotNoiseConfig,
    seed: u64,
) -> Result<(usize, f64)> {
    let exact = layout.gradient_exact(angles, selection)?;
    let mut successes = 0;
    let mut total = 0.0;
    for t in 0..settings.trials {
        let g = layout.gradient_sampled(
            angles,
            selection,
            shots,
            derive_seed(seed, TRIAL_STREAM) ^ t as u64,
        )?;
        let err_sq: f64 = g
            .as_slice()
            .iter()
            .zip(exact.as_slice())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        total += err_sq;
        if err_sq.sqrt() <= settings.epsilon {
            successes += 1;
        }
    }
    Ok((successes, total / settings.trials as f64))
}
