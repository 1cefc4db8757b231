//! Losses, the Adam optimizer, metrics and confusion matrices, the training
//! loop, and checkpoint serialization.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::TrainError;
use crate::model::{DynamicFormer, ModelConfig, ModelOutput};
use crate::numeric::{no_grad, Ctx, Scalar, Tensor};
use crate::scene::Clip;
use crate::synth::derive_seed;

type Result<T> = std::result::Result<T, TrainError>;

/// Numeric precision of the training computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    F32,
    F64,
}

/// Optimization hyperparameters. `paper()` carries the published regime for
/// reference; `desk()` is the CPU-scale default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Weight of the individual-action term in the joint loss.
    pub individual_loss_weight: f64,
    pub precision: Precision,
}

impl TrainConfig {
    /// Published regime: lr 0.001, weight decay 0.001, batch 384, 60 epochs.
    pub fn paper() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            weight_decay: 0.001,
            batch_size: 384,
            epochs: 60,
            seed: 0,
            individual_loss_weight: 1.0,
            precision: Precision::F32,
        }
    }

    /// Desk-scale override: batch 32, 20 epochs.
    pub fn desk() -> Self {
        TrainConfig { batch_size: 32, epochs: 20, ..Self::paper() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.learning_rate < 0.0
            || self.weight_decay < 0.0
            || self.batch_size == 0
            || !(0.0..=f64::MAX).contains(&self.individual_loss_weight)
        {
            return Err(TrainError::CheckpointMismatch(
                "rates must be non-negative and batch size positive".into(),
            ));
        }
        Ok(())
    }
}

/// Joint classification loss: cross-entropy on the group head plus
/// `lambda` times the mean cross-entropy over valid persons.
pub fn loss<F: Scalar>(
    group_logits: &Tensor<F>,
    individual_logits: Option<&Tensor<F>>,
    group_label: usize,
    individual_labels: &[usize],
    person_mask: &[bool],
    lambda: f64,
) -> Result<Tensor<F>> {
    let classes = group_logits.numel();
    if group_label >= classes {
        return Err(TrainError::BadLabel { id: group_label, classes });
    }
    let logp = group_logits.reshape(&[1, classes])?.log_softmax_last()?;
    let mut pick = vec![F::zero(); classes];
    pick[group_label] = F::one();
    let group_ce = logp.mul(&Tensor::from_vec(pick, &[1, classes])?)?.sum_all().neg();

    let Some(indiv) = individual_logits else {
        return Ok(group_ce);
    };
    if lambda == 0.0 {
        return Ok(group_ce);
    }
    let shape = indiv.shape();
    let (n, c) = (shape[0], shape[1]);
    let valid = person_mask.iter().filter(|&&m| m).count();
    if valid == 0 {
        return Ok(group_ce);
    }
    let mut onehot = vec![F::zero(); n * c];
    for (person, (&label, &mask)) in individual_labels.iter().zip(person_mask).enumerate() {
        if !mask {
            continue;
        }
        if label >= c {
            return Err(TrainError::BadLabel { id: label, classes: c });
        }
        onehot[person * c + label] = F::one();
    }
    let indiv_ce = indiv
        .log_softmax_last()?
        .mul(&Tensor::from_vec(onehot, &[n, c])?)?
        .sum_all()
        .neg()
        .scale(F::from_f64(1.0 / valid as f64));
    Ok(group_ce.add(&indiv_ce.scale(F::from_f64(lambda)))?)
}

/// Adam with L2 weight decay folded into the gradient (the classic form).
/// Moment state is kept in f64 regardless of the parameter precision.
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    step: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new<F: Scalar>(cfg: &TrainConfig, params: &[(String, Tensor<F>)]) -> Self {
        Adam {
            learning_rate: cfg.learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: cfg.weight_decay,
            step: 0,
            first_moment: params.iter().map(|(_, p)| vec![0.0; p.numel()]).collect(),
            second_moment: params.iter().map(|(_, p)| vec![0.0; p.numel()]).collect(),
        }
    }

    /// One update over all parameters; gradients are consumed (zeroed).
    pub fn step<F: Scalar>(&mut self, params: &[(String, Tensor<F>)]) {
        self.step += 1;
        let bias1 = 1.0 - self.beta1.powi(self.step as i32);
        let bias2 = 1.0 - self.beta2.powi(self.step as i32);
        for (idx, (_, param)) in params.iter().enumerate() {
            let m = &mut self.first_moment[idx];
            let v = &mut self.second_moment[idx];
            param.apply_update(|data, grad| {
                for i in 0..data.len() {
                    let g = grad[i].as_f64() + self.weight_decay * data[i].as_f64();
                    m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                    v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                    let m_hat = m[i] / bias1;
                    let v_hat = v[i] / bias2;
                    let update = self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
                    data[i] = F::from_f64(data[i].as_f64() - update);
                }
            });
            param.zero_grad();
        }
    }
}

/// Aggregate accuracy and confusion counts over an evaluation pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub group_accuracy: f64,
    pub individual_accuracy: Option<f64>,
    pub per_class_accuracy: Vec<f64>,
    /// Row-major `[classes x classes]`: row = true class, column = predicted.
    pub confusion: Vec<usize>,
    pub group_classes: usize,
    pub clip_count: usize,
    pub mean_loss: f64,
}

/// One clip's evaluation outcome.
#[derive(Debug, Clone)]
pub struct ClipResult {
    pub group_true: usize,
    pub group_pred: usize,
    /// (true, predicted) for valid persons only.
    pub individual: Vec<(usize, usize)>,
    pub loss: f64,
}

impl Metrics {
    /// Tallies clip results into accuracies and the confusion matrix.
    pub fn from_results(results: &[ClipResult], group_classes: usize, has_individual: bool) -> Self {
        let mut confusion = vec![0usize; group_classes * group_classes];
        let mut group_hits = 0usize;
        let mut indiv_hits = 0usize;
        let mut indiv_total = 0usize;
        let mut loss_sum = 0.0;
        for r in results {
            confusion[r.group_true * group_classes + r.group_pred] += 1;
            if r.group_true == r.group_pred {
                group_hits += 1;
            }
            for &(t, p) in &r.individual {
                indiv_total += 1;
                if t == p {
                    indiv_hits += 1;
                }
            }
            loss_sum += r.loss;
        }
        let count = results.len();
        let per_class_accuracy = (0..group_classes)
            .map(|c| {
                let row_total: usize =
                    confusion[c * group_classes..(c + 1) * group_classes].iter().sum();
                if row_total == 0 {
                    0.0
                } else {
                    confusion[c * group_classes + c] as f64 / row_total as f64
                }
            })
            .collect();
        Metrics {
            group_accuracy: if count == 0 { 0.0 } else { group_hits as f64 / count as f64 },
            individual_accuracy: if has_individual && indiv_total > 0 {
                Some(indiv_hits as f64 / indiv_total as f64)
            } else {
                None
            },
            per_class_accuracy,
            confusion,
            group_classes,
            clip_count: count,
            mean_loss: if count == 0 { 0.0 } else { loss_sum / count as f64 },
        }
    }

    /// Confusion matrix as CSV with a header of predicted-class names.
    pub fn confusion_csv(&self, class_names: &[String]) -> String {
        let mut out = String::from("true\\pred");
        for name in class_names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (row, name) in class_names.iter().enumerate() {
            out.push_str(name);
            for col in 0..self.group_classes {
                out.push_str(&format!(",{}", self.confusion[row * self.group_classes + col]));
            }
            out.push('\n');
        }
        out
    }
}

fn argmax<F: Scalar>(values: &[F]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn clip_result<F: Scalar>(
    output: &ModelOutput<F>,
    clip: &Clip,
    lambda: f64,
) -> Result<ClipResult> {
    let group_pred = argmax(&output.group_logits.to_vec());
    let individual_labels: Vec<usize> = clip.persons.iter().map(|p| p.action).collect();
    let individual = match &output.individual_logits {
        Some(logits) => {
            let data = logits.to_vec();
            let c = logits.shape()[1];
            clip.person_mask
                .iter()
                .enumerate()
                .filter(|(_, &m)| m)
                .map(|(n, _)| (individual_labels[n], argmax(&data[n * c..(n + 1) * c])))
                .collect()
        }
        None => Vec::new(),
    };
    // Padded label vector aligned with the mask length.
    let mut padded_labels = individual_labels;
    padded_labels.resize(output.person_mask.len(), 0);
    let loss_value = loss(
        &output.group_logits,
        output.individual_logits.as_ref(),
        clip.group_label,
        &padded_labels,
        &output.person_mask,
        lambda,
    )?
    .item()
    .map_err(TrainError::from)?
    .as_f64();
    Ok(ClipResult { group_true: clip.group_label, group_pred, individual, loss: loss_value })
}

/// Evaluates a model over clips with dropout disabled and no graph recording.
pub fn evaluate<F: Scalar>(
    model: &DynamicFormer<F>,
    clips: &[Clip],
    lambda: f64,
) -> Result<Metrics> {
    if clips.is_empty() {
        return Err(TrainError::EmptyDataset("evaluation"));
    }
    let mut results = Vec::with_capacity(clips.len());
    for clip in clips {
        let mut ctx = Ctx::eval();
        let output = no_grad(|| model.forward(clip, &mut ctx))?;
        results.push(clip_result(&output, clip, lambda)?);
    }
    Ok(Metrics::from_results(
        &results,
        model.config.labels.group_classes.len(),
        !model.config.labels.individual_classes.is_empty(),
    ))
}

/// One metric-log line: epoch, split, group accuracy, individual accuracy,
/// mean loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub split: String,
    pub group_accuracy: f64,
    pub individual_accuracy: Option<f64>,
    pub loss: f64,
}

impl EpochRecord {
    pub const CSV_HEADER: &'static str = "epoch,split,group_acc,indiv_acc,loss";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.6},{},{:.6}",
            self.epoch,
            self.split,
            self.group_accuracy,
            self.individual_accuracy.map_or_else(|| "-".to_string(), |a| format!("{a:.6}")),
            self.loss
        )
    }
}

/// Renders a full metric log as CSV text.
pub fn metric_log_csv(records: &[EpochRecord]) -> String {
    let mut out = String::from(EpochRecord::CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

/// Result of a training run.
pub struct TrainReport {
    pub log: Vec<EpochRecord>,
    pub final_train: Metrics,
    pub final_test: Option<Metrics>,
}

/// Trains a model in place. Deterministic under a fixed seed: shuffling,
/// dropout, and initialization all derive from `cfg.seed`. The `on_epoch`
/// hook runs after each epoch (checkpointing lives there).
pub fn train<F: Scalar>(
    model: &DynamicFormer<F>,
    train_clips: &[Clip],
    test_clips: Option<&[Clip]>,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, &DynamicFormer<F>, &[EpochRecord]) -> Result<()>,
) -> Result<TrainReport> {
    cfg.validate()?;
    if train_clips.is_empty() {
        return Err(TrainError::EmptyDataset("training"));
    }
    let params = model.params();
    let mut optimizer = Adam::new(cfg, &params);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 101, 0));
    let mut dropout_ctx = Ctx::train(derive_seed(cfg.seed, 102, 0));
    let lambda = cfg.individual_loss_weight;
    let mut log = Vec::new();
    let mut last_finite = 0.0;

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train_clips.len()).collect();
        order.shuffle(&mut shuffle_rng);
        let mut epoch_results = Vec::with_capacity(train_clips.len());
        for (step, batch) in order.chunks(cfg.batch_size).enumerate() {
            model.zero_grads();
            let scale = F::from_f64(1.0 / batch.len() as f64);
            let mut batch_loss = 0.0;
            for &idx in batch {
                let clip = &train_clips[idx];
                let output = model.forward(clip, &mut dropout_ctx)?;
                let mut padded_labels: Vec<usize> =
                    clip.persons.iter().map(|p| p.action).collect();
                padded_labels.resize(output.person_mask.len(), 0);
                let clip_loss = loss(
                    &output.group_logits,
                    output.individual_logits.as_ref(),
                    clip.group_label,
                    &padded_labels,
                    &output.person_mask,
                    lambda,
                )?;
                let value = clip_loss.item().map_err(TrainError::from)?.as_f64();
                if !value.is_finite() {
                    return Err(TrainError::NonFiniteLoss { epoch, step, last_loss: last_finite });
                }
                last_finite = value;
                batch_loss += value;
                clip_loss.scale(scale).backward().map_err(TrainError::from)?;
                // Training-split tallies come from the training passes
                // themselves (dropout active), not a second evaluation.
                epoch_results.push(clip_result(&output, clip, lambda)?);
            }
            let _ = batch_loss;
            optimizer.step(&params);
        }
        let train_metrics = Metrics::from_results(
            &epoch_results,
            model.config.labels.group_classes.len(),
            !model.config.labels.individual_classes.is_empty(),
        );
        log.push(EpochRecord {
            epoch,
            split: "train".into(),
            group_accuracy: train_metrics.group_accuracy,
            individual_accuracy: train_metrics.individual_accuracy,
            loss: train_metrics.mean_loss,
        });
        if let Some(test) = test_clips {
            let m = evaluate(model, test, lambda)?;
            log.push(EpochRecord {
                epoch,
                split: "test".into(),
                group_accuracy: m.group_accuracy,
                individual_accuracy: m.individual_accuracy,
                loss: m.mean_loss,
            });
        }
        on_epoch(epoch, model, &log)?;
    }

    let final_train = evaluate(model, train_clips, lambda)?;
    let final_test = match test_clips {
        Some(test) => Some(evaluate(model, test, lambda)?),
        None => None,
    };
    Ok(TrainReport { log, final_train, final_test })
}

// ── checkpointing ─────────────────────────────────────────────────────

#[derive(Serialize, Deserialize)]
struct ParamRecord {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// Self-describing checkpoint: config echo plus named parameter tensors.
#[derive(Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub dtype: String,
    params: Vec<ParamRecord>,
}

impl Checkpoint {
    pub fn from_model<F: Scalar>(model: &DynamicFormer<F>) -> Self {
        let params = model
            .params()
            .iter()
            .map(|(name, p)| ParamRecord {
                name: name.clone(),
                shape: p.shape(),
                data: p.to_vec().iter().map(|v| v.as_f64()).collect(),
            })
            .collect();
        Checkpoint { config: model.config.clone(), dtype: F::DTYPE.to_string(), params }
    }

    /// Rebuilds a model from the stored config and parameters.
    pub fn into_model<F: Scalar>(&self) -> Result<DynamicFormer<F>> {
        let model = DynamicFormer::new(self.config.clone(), 0)?;
        let live = model.params();
        if live.len() != self.params.len() {
            return Err(TrainError::CheckpointMismatch(format!(
                "parameter count {} vs checkpoint {}",
                live.len(),
                self.params.len()
            )));
        }
        for ((name, tensor), record) in live.iter().zip(&self.params) {
            if name != &record.name || tensor.shape() != record.shape {
                return Err(TrainError::CheckpointMismatch(format!(
                    "parameter {name} {:?} vs checkpoint {} {:?}",
                    tensor.shape(),
                    record.name,
                    record.shape
                )));
            }
            let data: Vec<F> = record.data.iter().map(|&v| F::from_f64(v)).collect();
            tensor.set_data(&data);
        }
        Ok(model)
    }
}

pub fn save_checkpoint<F: Scalar>(path: &Path, model: &DynamicFormer<F>) -> Result<()> {
    let json = serde_json::to_string(&Checkpoint::from_model(model))
        .map_err(|e| TrainError::Parse(e.to_string()))?;
    std::fs::write(path, json)
        .map_err(|e| TrainError::Io { path: path.display().to_string(), source: e })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| TrainError::Io { path: path.display().to_string(), source: e })?;
    serde_json::from_str(&text).map_err(|e| TrainError::Parse(e.to_string()))
}
