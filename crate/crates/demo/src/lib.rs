//! Wasm bindings for the browser demo. Three interactive operations, all
//! JSON-in/JSON-out so the page needs no generated glue beyond wasm-bindgen:
//!
//! - [`generate_clip`]: one synthetic scene for canvas playback.
//! - [`train_demo_model`]: fit a small model on a fresh suite in-page.
//! - [`analyze_clip`]: run the trained (or freshly seeded) model on a clip
//!   and return adjacency frames, importance scores, relation norms, and
//!   logits for rendering.

use std::cell::RefCell;

use serde::Serialize;
use wasm_bindgen::prelude::*;

use dynamicformer_core::model::{DynamicFormer, ModelConfig};
use dynamicformer_core::numeric::{no_grad, Ctx};
use dynamicformer_core::scene::{clip_to_json, parse_clip};
use dynamicformer_core::synth::{
    benchmark_suite_with_noise, generate, suite_scenario, SuiteKind,
};
use dynamicformer_core::train::{evaluate, train, TrainConfig};
use dynamicformer_core::synth::derive_seed;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

thread_local! {
    static MODEL: RefCell<Option<(SuiteKind, DynamicFormer<f32>)>> = const { RefCell::new(None) };
}

fn err_json(message: String) -> String {
    serde_json::json!({ "error": message }).to_string()
}

fn parse_suite(name: &str) -> Result<SuiteKind, String> {
    SuiteKind::parse(name).ok_or_else(|| format!("unknown suite {name:?}"))
}

/// Demo-sized architecture: small enough to train inside the page.
fn demo_config(kind: SuiteKind) -> ModelConfig {
    let mut config = ModelConfig::micro_d64(kind.labels());
    config.dim = 32;
    config.heads = 4;
    config.ffn_hidden = 64;
    config.encoder_cycles = 2;
    config.dropout = 0.1;
    config
}

/// Generates one clip of the given suite and class. Returns the clip JSON
/// wrapped with its scripted metadata (class name, handler index).
#[wasm_bindgen]
pub fn generate_clip(suite: &str, class_id: usize, seed: u64, noise_sigma: f64) -> String {
    let kind = match parse_suite(suite) {
        Ok(k) => k,
        Err(e) => return err_json(e),
    };
    let class_id = class_id % kind.class_count();
    let mut scenario_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 11, class_id as u64));
    // Walk the cycle so `class_id` picks the scenario class.
    let mut spec = suite_scenario(kind, class_id, &mut scenario_rng);
    spec.noise_sigma = noise_sigma;
    let clip = match generate(&spec, derive_seed(seed, 12, class_id as u64)) {
        Ok(c) => c,
        Err(e) => return err_json(e.to_string()),
    };
    let labels = kind.labels();
    let clip_json = match clip_to_json(&clip, &labels) {
        Ok(j) => j,
        Err(e) => return err_json(e.to_string()),
    };
    serde_json::json!({
        "suite": kind.name(),
        "class": labels.group_classes[clip.group_label],
        "handler": spec.handler,
        "clip": serde_json::from_str::<serde_json::Value>(&clip_json).expect("clip json"),
    })
    .to_string()
}

#[derive(Serialize)]
struct TrainSummary {
    suite: String,
    epochs: usize,
    train_clips: usize,
    test_clips: usize,
    test_group_accuracy: f64,
    test_individual_accuracy: Option<f64>,
    log: Vec<(usize, String, f64, f64)>,
}

/// Trains a fresh demo model on a small generated suite and stores it for
/// [`analyze_clip`]. Returns the metric log and final test accuracy.
#[wasm_bindgen]
pub fn train_demo_model(suite: &str, seed: u64, epochs: usize, clips: usize) -> String {
    let kind = match parse_suite(suite) {
        Ok(k) => k,
        Err(e) => return err_json(e),
    };
    let train_count = clips.clamp(12, 300);
    let test_count = (train_count / 3).max(6);
    let bench = match benchmark_suite_with_noise(kind, seed, train_count, test_count, 2.0) {
        Ok(b) => b,
        Err(e) => return err_json(e.to_string()),
    };
    let model = match DynamicFormer::<f32>::new(demo_config(kind), seed) {
        Ok(m) => m,
        Err(e) => return err_json(e.to_string()),
    };
    let cfg = TrainConfig {
        epochs: epochs.clamp(1, 40),
        batch_size: 8,
        seed,
        ..TrainConfig::desk()
    };
    let report = match train(&model, &bench.train, Some(&bench.test), &cfg, |_, _, _| Ok(())) {
        Ok(r) => r,
        Err(e) => return err_json(e.to_string()),
    };
    let metrics = match evaluate(&model, &bench.test, 1.0) {
        Ok(m) => m,
        Err(e) => return err_json(e.to_string()),
    };
    let summary = TrainSummary {
        suite: kind.name().to_string(),
        epochs: cfg.epochs,
        train_clips: bench.train.len(),
        test_clips: bench.test.len(),
        test_group_accuracy: metrics.group_accuracy,
        test_individual_accuracy: metrics.individual_accuracy,
        log: report
            .log
            .iter()
            .map(|r| (r.epoch, r.split.clone(), r.group_accuracy, r.loss))
            .collect(),
    };
    MODEL.with(|slot| *slot.borrow_mut() = Some((kind, model)));
    serde_json::to_string(&summary).unwrap_or_else(|e| err_json(e.to_string()))
}

/// Seeds an untrained model so [`analyze_clip`] works before training.
#[wasm_bindgen]
pub fn init_demo_model(suite: &str, seed: u64) -> String {
    let kind = match parse_suite(suite) {
        Ok(k) => k,
        Err(e) => return err_json(e),
    };
    match DynamicFormer::<f32>::new(demo_config(kind), seed) {
        Ok(model) => {
            MODEL.with(|slot| *slot.borrow_mut() = Some((kind, model)));
            serde_json::json!({ "ok": true, "suite": kind.name() }).to_string()
        }
        Err(e) => err_json(e.to_string()),
    }
}

#[derive(Serialize)]
struct Analysis {
    group_logits: Vec<f64>,
    group_classes: Vec<String>,
    predicted_class: String,
    importance: Vec<f64>,
    key_person: usize,
    adjacency_nodes: usize,
    adjacency_frames: Vec<Vec<f64>>,
    relation_norms: Vec<f64>,
    persons: usize,
}

/// Runs the stored model on a clip JSON (as produced by [`generate_clip`]'s
/// `clip` field) and returns everything the page renders.
#[wasm_bindgen]
pub fn analyze_clip(clip_json: &str) -> String {
    MODEL.with(|slot| {
        let borrow = slot.borrow();
        let Some((kind, model)) = borrow.as_ref() else {
            return err_json("no model: call init_demo_model or train_demo_model first".into());
        };
        let labels = kind.labels();
        let clip = match parse_clip(clip_json, &labels, &kind.limits()) {
            Ok(c) => c,
            Err(e) => return err_json(e.to_string()),
        };
        let mut ctx = Ctx::eval();
        let output = match no_grad(|| model.forward(&clip, &mut ctx)) {
            Ok(o) => o,
            Err(e) => return err_json(e.to_string()),
        };
        let diag = &output.diagnostics;
        let logits: Vec<f64> = output.group_logits.to_vec().iter().map(|&v| v as f64).collect();
        let predicted = logits
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite logits"))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let key_person = diag
            .importance
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite scores"))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let adjacency_frames: Vec<Vec<f64>> =
            (0..diag.adjacency.frames).map(|t| diag.adjacency.frame(t).to_vec()).collect();
        let analysis = Analysis {
            predicted_class: labels.group_classes[predicted].clone(),
            group_classes: labels.group_classes.clone(),
            group_logits: logits,
            importance: diag.importance.clone(),
            key_person,
            adjacency_nodes: diag.adjacency.nodes,
            adjacency_frames,
            relation_norms: diag.relation_norms.clone(),
            persons: output.person_mask.len(),
        };
        serde_json::to_string(&analysis).unwrap_or_else(|e| err_json(e.to_string()))
    })
}
