//! Flat key-value run configuration. Keys mirror the model and training
//! config fields; command-line flags override file values.

use dynamicformer_core::composition::{CompositionVariant, EmbeddingInjection};
use dynamicformer_core::integration::IntegrationOrder;
use dynamicformer_core::interaction::InteractionManner;
use dynamicformer_core::model::ModelConfig;
use dynamicformer_core::numeric::NormMode;
use dynamicformer_core::scene::LabelSpace;
use dynamicformer_core::train::{Precision, TrainConfig};

/// Resolved run settings: architecture, optimization, and data sizing.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub train_clips: usize,
    pub test_clips: usize,
    pub noise_sigma: f64,
}

impl RunConfig {
    /// Desk-scale defaults against a label vocabulary.
    pub fn defaults(labels: LabelSpace) -> Self {
        RunConfig {
            model: ModelConfig::micro_d64(labels),
            train: TrainConfig::desk(),
            train_clips: dynamicformer_core::synth::DEFAULT_TRAIN_CLIPS,
            test_clips: dynamicformer_core::synth::DEFAULT_TEST_CLIPS,
            noise_sigma: dynamicformer_core::synth::DEFAULT_NOISE_SIGMA,
        }
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_file(&mut self, text: &str) -> Result<(), String> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected `key = value`", lineno + 1))?;
            self.apply_key(key.trim(), value.trim())
                .map_err(|e| format!("line {}: {e}", lineno + 1))?;
        }
        Ok(())
    }

    pub fn apply_key(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
            value.parse().map_err(|_| format!("invalid value {value:?} for {key}"))
        }
        match key {
            "dim" => self.model.dim = parse(key, value)?,
            "frames" => self.model.frames = parse(key, value)?,
            "persons" => self.model.max_persons = parse(key, value)?,
            "keypoints" => self.model.keypoints = parse(key, value)?,
            "objects" => self.model.max_objects = parse(key, value)?,
            "subgroups" => self.model.subgroups = parse(key, value)?,
            "heads" => self.model.heads = parse(key, value)?,
            "cycles" => self.model.encoder_cycles = parse(key, value)?,
            "ffn" => self.model.ffn_hidden = parse(key, value)?,
            "dropout" => self.model.dropout = parse(key, value)?,
            "feature_scale" => self.model.feature_scale = parse(key, value)?,
            "residual_on_input" => self.model.residual_on_input = parse(key, value)?,
            "norm" => {
                self.model.norm_mode = match value {
                    "post" => NormMode::Post,
                    "none" => NormMode::None,
                    other => return Err(format!("unknown norm mode {other:?}")),
                }
            }
            "injection" => {
                self.model.embedding_injection = match value {
                    "every_cycle" => EmbeddingInjection::EveryCycle,
                    "first_cycle" => EmbeddingInjection::FirstCycle,
                    other => return Err(format!("unknown injection mode {other:?}")),
                }
            }
            "composition" => {
                self.model.variants.composition = CompositionVariant::parse(value)
                    .ok_or_else(|| format!("unknown composition variant {value:?}"))?
            }
            "interaction" => {
                self.model.variants.interaction = InteractionManner::parse(value)
                    .ok_or_else(|| format!("unknown interaction manner {value:?}"))?
            }
            "order" => {
                self.model.variants.order = IntegrationOrder::parse(value)
                    .ok_or_else(|| format!("unknown integration order {value:?}"))?
            }
            "lr" => self.train.learning_rate = parse(key, value)?,
            "weight_decay" => self.train.weight_decay = parse(key, value)?,
            "batch" => self.train.batch_size = parse(key, value)?,
            "epochs" => self.train.epochs = parse(key, value)?,
            "seed" => self.train.seed = parse(key, value)?,
            "lambda" => self.train.individual_loss_weight = parse(key, value)?,
            "precision" => {
                self.train.precision = match value {
                    "f32" => Precision::F32,
                    "f64" => Precision::F64,
                    other => return Err(format!("unknown precision {other:?}")),
                }
            }
            "train_clips" => self.train_clips = parse(key, value)?,
            "test_clips" => self.test_clips = parse(key, value)?,
            "noise_sigma" => self.noise_sigma = parse(key, value)?,
            other => return Err(format!("unknown config key {other:?}")),
        }
        Ok(())
    }
}
