use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::document::{Document, Section};
use crate::circuit::{CircuitLayout, OutputSelection};
use crate::error::{Error, Result};
use crate::hybrid::{MainModel, MiddleSpec, ModelSpec};

/// Pixels per MNIST image.
pub const INPUT_WIDTH: usize = 784;
/// Output classes (digit 3, digit 7).
pub const NUM_CLASSES: usize = 2;

#[derive(Clone, Debug, PartialEq)]
pub enum MiddleConfig {
    Classical {
        units: usize,
    },
    Quantum {
        qubits: usize,
        /// Layout tokens as written in the config.
        tokens: Vec<String>,
        selection: OutputSelection,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub train_size: usize,
    pub val_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 16,
            epochs: 100,
            learning_rate: 1e-4,
            train_size: 9916,
            val_size: 2480,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShotNoiseConfig {
    pub epsilon: f64,
    pub trials: usize,
    /// Single-shot gradient samples used to estimate per-component variances.
    pub variance_samples: usize,
    /// Shots per overlap as a multiple of the sample bound.
    pub shot_multiplier: u64,
}

impl Default for ShotNoiseConfig {
    fn default() -> Self {
        ShotNoiseConfig {
            epsilon: 0.1,
            trials: 100,
            variance_samples: 2000,
            shot_multiplier: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub encoder_units: usize,
    pub middle: MiddleConfig,
    pub train: TrainConfig,
    pub images: PathBuf,
    pub labels: PathBuf,
    pub base_seed: u64,
    pub bootstrap_count: usize,
    pub out_dir: PathBuf,
    pub shotnoise: ShotNoiseConfig,
    /// Trainable parameter count of the configured model.
    pub k_tot: usize,
}

const MODEL_KEYS: &[&str] = &[
    "encoder_units",
    "middle",
    "classical_units",
    "qubits",
    "layout",
    "selection",
];
const TRAIN_KEYS: &[&str] = &[
    "batch_size",
    "epochs",
    "learning_rate",
    "train_size",
    "val_size",
];
const DATA_KEYS: &[&str] = &["images", "labels"];
const RUN_KEYS: &[&str] = &["base_seed", "bootstrap_count", "out_dir"];
const SHOTNOISE_KEYS: &[&str] = &["epsilon", "trials", "variance_samples", "shot_multiplier"];

fn key_error(key: &str, message: impl Into<String>) -> Error {
    Error::ConfigKey {
        key: key.into(),
        message: message.into(),
    }
}

fn split_tokens(value: &str) -> Vec<String> {
    let inner = value
        .trim()
        .strip_prefix('[')
        .and_then(|v| v.strip_suffix(']'))
        .unwrap_or(value);
    inner
        .split(',')
        .map(|t| t.trim().trim_matches(['"', '\'']).to_owned())
        .filter(|t| !t.is_empty())
        .collect()
}

fn positive(section: &Section, key: &str, value: usize) -> Result<usize> {
    if value == 0 {
        return Err(key_error(&section.key_path(key), "must be at least 1"));
    }
    Ok(value)
}

fn parse_middle(model: &Section) -> Result<MiddleConfig> {
    let kind: String = model.require("middle")?;
    let reject = |keys: &[&str]| -> Result<()> {
        match keys.iter().find(|k| model.get(k).is_some()) {
            Some(k) => Err(key_error(
                &model.key_path(k),
                format!("not used by a {kind} middle"),
            )),
            None => Ok(()),
        }
    };
    match kind.as_str() {
        "classical" => {
            reject(&["qubits", "layout", "selection"])?;
            let units = model.parse_value("classical_units")?.unwrap_or(2);
            Ok(MiddleConfig::Classical {
                units: positive(model, "classical_units", units)?,
            })
        }
        "quantum" => {
            reject(&["classical_units"])?;
            let qubits = model.require("qubits")?;
            let tokens = split_tokens(&model.require::<String>("layout")?);
            if tokens.is_empty() {
                return Err(key_error(&model.key_path("layout"), "no layout tokens"));
            }
            CircuitLayout::build(qubits, &tokens)
                .map_err(|e| key_error(&model.key_path("layout"), e.to_string()))?;
            let selection = model
                .parse_value::<OutputSelection>("selection")?
                .unwrap_or(OutputSelection::Full);
            Ok(MiddleConfig::Quantum {
                qubits,
                tokens,
                selection,
            })
        }
        other => Err(key_error(
            &model.key_path("middle"),
            format!("expected `classical` or `quantum`, found `{other}`"),
        )),
    }
}

/// Parses and validates a run configuration, including a dimension check of
/// the configured model on a dummy input.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let doc = Document::parse(text)?;
    for s in &doc.sections {
        let allowed = match s.name.as_str() {
            "model" => MODEL_KEYS,
            "train" => TRAIN_KEYS,
            "data" => DATA_KEYS,
            "run" => RUN_KEYS,
            "shotnoise" => SHOTNOISE_KEYS,
            other => {
                return Err(key_error(
                    other,
                    format!("unknown section on line {}", s.line),
                ));
            }
        };
        s.check_keys(allowed)?;
    }
    let empty = |name: &str| Section {
        name: name.into(),
        line: 0,
        entries: Vec::new(),
    };
    let model = doc
        .section("model")
        .ok_or_else(|| key_error("model", "required section is missing"))?;
    let data = doc
        .section("data")
        .ok_or_else(|| key_error("data", "required section is missing"))?;
    let train = doc
        .section("train")
        .cloned()
        .unwrap_or_else(|| empty("train"));
    let run = doc.section("run").cloned().unwrap_or_else(|| empty("run"));
    let shot = doc
        .section("shotnoise")
        .cloned()
        .unwrap_or_else(|| empty("shotnoise"));

    let encoder_units = positive(model, "encoder_units", model.require("encoder_units")?)?;
    let middle = parse_middle(model)?;

    let d = TrainConfig::default();
    let train_cfg = TrainConfig {
        batch_size: positive(
            &train,
            "batch_size",
            train.parse_value("batch_size")?.unwrap_or(d.batch_size),
        )?,
        epochs: train.parse_value("epochs")?.unwrap_or(d.epochs),
        learning_rate: train
            .parse_value("learning_rate")?
            .unwrap_or(d.learning_rate),
        train_size: positive(
            &train,
            "train_size",
            train.parse_value("train_size")?.unwrap_or(d.train_size),
        )?,
        val_size: positive(
            &train,
            "val_size",
            train.parse_value("val_size")?.unwrap_or(d.val_size),
        )?,
    };
    if !(train_cfg.learning_rate.is_finite() && train_cfg.learning_rate >= 0.0) {
        return Err(key_error(
            "train.learning_rate",
            "must be finite and non-negative",
        ));
    }

    let s = ShotNoiseConfig::default();
    let shotnoise = ShotNoiseConfig {
        epsilon: shot.parse_value("epsilon")?.unwrap_or(s.epsilon),
        trials: positive(
            &shot,
            "trials",
            shot.parse_value("trials")?.unwrap_or(s.trials),
        )?,
        variance_samples: shot
            .parse_value("variance_samples")?
            .unwrap_or(s.variance_samples),
        shot_multiplier: shot
            .parse_value("shot_multiplier")?
            .unwrap_or(s.shot_multiplier),
    };
    if !(shotnoise.epsilon.is_finite() && shotnoise.epsilon > 0.0) {
        return Err(key_error("shotnoise.epsilon", "must be positive"));
    }
    if shotnoise.variance_samples < 2 {
        return Err(key_error(
            "shotnoise.variance_samples",
            "must be at least 2",
        ));
    }
    if shotnoise.shot_multiplier == 0 {
        return Err(key_error("shotnoise.shot_multiplier", "must be at least 1"));
    }

    let mut config = RunConfig {
        encoder_units,
        middle,
        train: train_cfg,
        images: data.require::<String>("images")?.into(),
        labels: data.require::<String>("labels")?.into(),
        base_seed: run.parse_value("base_seed")?.unwrap_or(0),
        bootstrap_count: positive(
            &run,
            "bootstrap_count",
            run.parse_value("bootstrap_count")?.unwrap_or(48),
        )?,
        out_dir: run
            .parse_value::<String>("out_dir")?
            .unwrap_or_else(|| "results".into())
            .into(),
        shotnoise,
        k_tot: 0,
    };

    let model = MainModel::init(&config.model_spec()?, &mut ChaCha8Rng::seed_from_u64(0))
        .and_then(|m| m.dimension_check(&[0.0; INPUT_WIDTH]).map(|()| m))
        .map_err(|e| key_error("model.encoder_units", e.to_string()))?;
    config.k_tot = model.num_params();
    Ok(config)
}

/// Reads a config file; relative data paths are taken relative to the file's directory.
pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut config = parse_config(&text)?;
    let base = path.parent().unwrap_or(Path::new(""));
    for p in [&mut config.images, &mut config.labels] {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
    Ok(config)
}

impl RunConfig {
    pub fn layout(&self) -> Option<Result<CircuitLayout>> {
        match &self.middle {
            MiddleConfig::Quantum { qubits, tokens, .. } => {
                Some(CircuitLayout::build(*qubits, tokens))
            }
            MiddleConfig::Classical { .. } => None,
        }
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        let middle = match &self.middle {
            MiddleConfig::Classical { units } => MiddleSpec::Classical { units: *units },
            MiddleConfig::Quantum { selection, .. } => MiddleSpec::Quantum {
                layout: self.layout().expect("quantum middle")?,
                selection: *selection,
            },
        };
        Ok(ModelSpec {
            input_width: INPUT_WIDTH,
            encoder_units: self.encoder_units,
            middle,
            classes: NUM_CLASSES,
        })
    }

    /// Canonical text form; `parse_config(&c.to_text())` reproduces `c`.
    pub fn to_text(&self) -> String {
        let mut doc = Document::default();
        let mut model = vec![("encoder_units", self.encoder_units.to_string())];
        match &self.middle {
            MiddleConfig::Classical { units } => {
                model.push(("middle", "classical".into()));
                model.push(("classical_units", units.to_string()));
            }
            MiddleConfig::Quantum {
                qubits,
                tokens,
                selection,
            } => {
                model.push(("middle", "quantum".into()));
                model.push(("qubits", qubits.to_string()));
                model.push(("layout", tokens.join(", ")));
                model.push(("selection", selection.as_str().into()));
            }
        }
        doc.push("model", &model);
        let t = &self.train;
        doc.push(
            "train",
            &[
                ("batch_size", t.batch_size.to_string()),
                ("epochs", t.epochs.to_string()),
                ("learning_rate", t.learning_rate.to_string()),
                ("train_size", t.train_size.to_string()),
                ("val_size", t.val_size.to_string()),
            ],
        );
        doc.push(
            "data",
            &[
                ("images", self.images.display().to_string()),
                ("labels", self.labels.display().to_string()),
            ],
        );
        doc.push(
            "run",
            &[
                ("base_seed", self.base_seed.to_string()),
                ("bootstrap_count", self.bootstrap_count.to_string()),
                ("out_dir", self.out_dir.display().to_string()),
            ],
        );
        let s = &self.shotnoise;
        doc.push(
            "shotnoise",
            &[
                ("epsilon", s.epsilon.to_string()),
                ("trials", s.trials.to_string()),
                ("variance_samples", s.variance_samples.to_string()),
                ("shot_multiplier", s.shot_multiplier.to_string()),
            ],
        );
        doc.render()
    }
}
