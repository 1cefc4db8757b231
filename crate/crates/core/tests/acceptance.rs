//! Acceptance suite. Each test checks one criterion at its stated tolerance
//! and prints one `ACCEPTANCE <name>: PASS/FAIL` line (visible with
//! `cargo test --test acceptance -- --nocapture`).
//!
//! The published headline accuracies require the original datasets and GPU
//! budgets and are explicitly out of scope; the property checks below are
//! the substitute exit gate.

use std::sync::{Mutex, MutexGuard};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dynamicformer_core::composition::{
    build_relation, spatial_encode, CompositionSettings, CompositionStack, CompositionVariant,
    EmbeddingInjection,
};
use dynamicformer_core::features::{aggregate_group, aggregate_person, keypoint_channels};
use dynamicformer_core::integration::IntegrationOrder;
use dynamicformer_core::interaction::{
    build_nodes, gcn_apply, normalize_adjacency, similarity_adjacency, similarity_scores,
    InteractionGraph, InteractionManner, InteractionSettings, NodeSet,
};
use dynamicformer_core::model::{DynamicFormer, ModelConfig};
use dynamicformer_core::numeric::gradcheck::{check_parameters, EPSILON, TOLERANCE};
use dynamicformer_core::numeric::{Ctx, NormMode, ResidualMode, Tensor};
use dynamicformer_core::scene::{assign_subgroups, clip_to_json, parse_clip, LabelSpace};
use dynamicformer_core::synth::{
    benchmark_suite, generate, suite_scenario, BallScript, FormationScript, ScenarioSpec,
    SuiteKind,
};
use dynamicformer_core::train::{evaluate, loss, metric_log_csv, train, TrainConfig};

/// Heavy tests serialize on this so timing-sensitive runs get the core.
fn heavy_lock() -> MutexGuard<'static, ()> {
    static LOCK: Mutex<()> = Mutex::new(());
    LOCK.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

fn report(name: &str, pass: bool, details: &str) {
    println!("ACCEPTANCE {name}: {} ({details})", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "{name}: {details}");
}

fn random_tensor(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    Tensor::from_vec((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(), shape).unwrap()
}

#[test]
fn headline_numbers_substituted() {
    report(
        "headline-numbers",
        true,
        "published dataset accuracies are not reproducible at desk scale; property suites below are the substitute gate",
    );
}

#[test]
fn gradient_integrity() {
    let _guard = heavy_lock();
    let start = Instant::now();
    let mut worst: (String, f64) = (String::new(), 0.0);
    let mut track = |scope: &str, reports: Vec<dynamicformer_core::numeric::gradcheck::GradCheckReport>| {
        for r in reports {
            if r.max_rel_error > worst.1 {
                worst = (format!("{scope}/{}", r.name), r.max_rel_error);
            }
        }
    };

    // Unification layer.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mlp = dynamicformer_core::numeric::Mlp::<f64>::new(11, 8, 8, &mut rng);
        let input: Vec<f64> = (0..22).map(|i| ((i * 5 + 1) as f64 * 0.17).sin()).collect();
        let mut params = Vec::new();
        mlp.collect_params("unify", &mut params);
        track(
            "unify",
            check_parameters(&params, EPSILON, || {
                let x = Tensor::from_vec(input.clone(), &[2, 11]).unwrap();
                mlp.forward(&x).unwrap().sum_all()
            }),
        );
    }

    // Full composition circle, L = 3, N = 4, T = 3, D = 8.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let settings = CompositionSettings {
            dim: 8,
            frames: 3,
            persons: 4,
            heads: 2,
            cycles: 3,
            ffn_hidden: 16,
            dropout: 0.0,
            residual: ResidualMode::ValueLiteral,
            norm: NormMode::Post,
        };
        let stack = CompositionStack::<f64>::new(
            &settings,
            CompositionVariant::Full,
            EmbeddingInjection::EveryCycle,
            &mut rng,
        );
        let input = random_tensor(&[4, 3, 8], 3).to_vec();
        let mask = vec![true; 4];
        let mut params = Vec::new();
        stack.collect_params(&mut params);
        track(
            "composition",
            check_parameters(&params, EPSILON, || {
                let p = Tensor::from_vec(input.clone(), &[4, 3, 8]).unwrap();
                stack.forward(&p, &mask, &mut Ctx::eval()).unwrap().sum_all()
            }),
        );
    }

    // Full interaction path: similarity -> refine -> GCN.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let settings = InteractionSettings {
            persons: 3,
            objects: 1,
            ffn_hidden: 16,
            dropout: 0.0,
            residual: ResidualMode::ValueLiteral,
            norm: NormMode::Post,
        };
        let graph = InteractionGraph::<f64>::new(&settings, InteractionManner::Full, &mut rng);
        let persons = random_tensor(&[3, 3, 8], 5).to_vec();
        let objects = random_tensor(&[1, 3, 8], 6).to_vec();
        let mut params = Vec::new();
        graph.collect_params(&mut params);
        track(
            "interaction",
            check_parameters(&params, EPSILON, || {
                let p = Tensor::from_vec(persons.clone(), &[3, 3, 8]).unwrap();
                let o = Tensor::from_vec(objects.clone(), &[1, 3, 8]).unwrap();
                graph
                    .forward(&p, Some(&o), &[true; 3], &[true], &mut Ctx::eval())
                    .unwrap()
                    .tokens
                    .sum_all()
            }),
        );
    }

    // Integration end to end: clip -> loss at the micro config.
    {
        let labels = SuiteKind::Interaction2.labels();
        let config = ModelConfig::tiny(labels);
        let model = DynamicFormer::<f64>::new(config, 7).unwrap();
        let mut srng = ChaCha8Rng::seed_from_u64(8);
        let mut spec = suite_scenario(SuiteKind::Interaction2, 0, &mut srng);
        spec.persons = 3;
        spec.keypoints = 4;
        spec.frames = 3;
        spec.handler = spec.handler.map(|_| 1);
        let clip = generate(&spec, 9).unwrap();
        let params = model.params();
        track(
            "end-to-end",
            check_parameters(&params, EPSILON, || {
                let mut ctx = Ctx::eval();
                let out = model.forward(&clip, &mut ctx).unwrap();
                let mut labels: Vec<usize> = clip.persons.iter().map(|p| p.action).collect();
                labels.resize(out.person_mask.len(), 0);
                loss(
                    &out.group_logits,
                    out.individual_logits.as_ref(),
                    clip.group_label,
                    &labels,
                    &out.person_mask,
                    1.0,
                )
                .unwrap()
            }),
        );
    }

    let elapsed = start.elapsed();
    let pass = worst.1 < TOLERANCE && elapsed.as_secs() < 60;
    report(
        "gradient-integrity",
        pass,
        &format!("worst rel error {:.3e} at {}; suite took {elapsed:?}", worst.1, worst.0),
    );
}

fn volleyball_clip(seed: u64) -> dynamicformer_core::Clip {
    let spec = ScenarioSpec {
        class_id: 3,
        formation: FormationScript::Converge,
        handler: Some(2),
        ball: BallScript::ArcToHandler,
        noise_sigma: 2.0,
        persons: 12,
        keypoints: 17,
        frames: 10,
        objects: 1,
        frame_size: [1280.0, 720.0],
        group_label: 3,
        actions: (6, 8), // spiking vs standing in the volleyball vocabulary
    };
    generate(&spec, seed).unwrap()
}

#[test]
fn structural_fidelity_published_config() {
    let _guard = heavy_lock();
    let clip = volleyball_clip(11);

    // Forward shape check at the published hyperparameters.
    let config = ModelConfig::volleyball();
    let model = DynamicFormer::<f32>::new(config.clone(), 1).unwrap();
    let out = model.forward(&clip, &mut Ctx::eval()).unwrap();
    let group_shape = out.group_logits.shape();
    let indiv_shape = out.individual_logits.as_ref().unwrap().shape();
    assert_eq!(group_shape, vec![8], "group logits length");
    assert_eq!(indiv_shape, vec![12, 9], "individual logits shape");

    // Every manner instantiates and completes one training step.
    let clips = [clip];
    let step_cfg = TrainConfig {
        epochs: 1,
        batch_size: 1,
        seed: 2,
        ..TrainConfig::desk()
    };
    let mut checked = 0;
    for name in CompositionVariant::ALL.iter().map(|v| v.name())
        .chain(InteractionManner::ALL.iter().map(|v| v.name()))
        .chain(IntegrationOrder::ALL.iter().map(|v| v.name()))
    {
        let mut c = config.clone();
        c.variants.apply_named(name).unwrap();
        let m = DynamicFormer::<f32>::new(c, 3).unwrap();
        train(&m, &clips, None, &step_cfg, |_, _, _| Ok(())).unwrap();
        checked += 1;
    }
    report(
        "structural-fidelity",
        checked == 12,
        &format!(
            "logits {group_shape:?}/{indiv_shape:?} at D=256,T=10,N=12,K=17,FFN=1024; {checked}/12 manners completed a training step"
        ),
    );
}

#[test]
fn normalization_invariants() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut adjacency_rows = 0usize;
    let mut attention_rows = 0usize;
    let mut worst = 0.0f64;

    // Adjacency rows through the interaction normalizer.
    while adjacency_rows < 10_000 {
        let (t, c, d) = (5, 10, 6);
        let data: Vec<f64> = (0..t * c * d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mut mask: Vec<bool> = (0..c).map(|_| rng.gen_bool(0.8)).collect();
        if !mask.iter().any(|&m| m) {
            mask[0] = true;
        }
        let nodes = Tensor::from_vec(data, &[t, c, d]).unwrap();
        let set = NodeSet { nodes, node_mask: mask.clone(), persons: c, objects: 0 };
        let adj = similarity_adjacency(&set, &mut Ctx::eval(), 0.0).unwrap();
        let values = adj.to_vec();
        for (row_idx, row) in values.chunks(c).enumerate() {
            let query = row_idx % c;
            if !mask[query] {
                assert!(row.iter().all(|&v| v == 0.0), "masked query row must be zero");
                continue;
            }
            let mut sum = 0.0;
            for (j, &v) in row.iter().enumerate() {
                if mask[j] {
                    sum += v;
                } else {
                    assert_eq!(v, 0.0, "masked column leaked weight");
                }
            }
            worst = worst.max((sum - 1.0).abs());
            adjacency_rows += 1;
        }
    }

    // Attention rows through masked softmax.
    while attention_rows < 10_000 {
        let (rows, cols) = (25, 8);
        let data: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-4.0..4.0)).collect();
        let mut mask: Vec<bool> = (0..cols).map(|_| rng.gen_bool(0.7)).collect();
        if !mask.iter().any(|&m| m) {
            mask[3] = true;
        }
        let x = Tensor::from_vec(data, &[rows, cols]).unwrap();
        let probs = x.softmax_last(Some(&mask)).unwrap().to_vec();
        for row in probs.chunks(cols) {
            let mut sum = 0.0;
            for (j, &v) in row.iter().enumerate() {
                if mask[j] {
                    sum += v;
                } else {
                    assert_eq!(v, 0.0, "masked attention position leaked weight");
                }
            }
            worst = worst.max((sum - 1.0).abs());
            attention_rows += 1;
        }
    }

    report(
        "normalization-invariants",
        worst < 1e-6,
        &format!(
            "{adjacency_rows} adjacency + {attention_rows} attention rows, worst |sum-1| = {worst:.3e}"
        ),
    );
}

#[test]
fn equivariance_suite() {
    let mut worst_spatial = 0.0f64;
    for trial in 0..200 {
        let (t, n, d) = (2, 5, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(3000 + trial);
        let settings = CompositionSettings {
            dim: d,
            frames: t,
            persons: n,
            heads: 2,
            cycles: 1,
            ffn_hidden: 2 * d,
            dropout: 0.0,
            residual: ResidualMode::ValueLiteral,
            norm: NormMode::Post,
        };
        let stack = CompositionStack::<f64>::new(
            &settings,
            CompositionVariant::Full,
            EmbeddingInjection::EveryCycle,
            &mut rng,
        );
        let x = random_tensor(&[t, n, d], 4000 + trial);
        let mask = vec![true; n];
        let y = spatial_encode(&x, Some(&stack.embeddings.position), &stack.spatial_layers[0], &mask, &mut Ctx::eval())
            .unwrap()
            .to_vec();
        // Random permutation of persons.
        let mut perm: Vec<usize> = (0..n).collect();
        use rand::seq::SliceRandom;
        perm.shuffle(&mut rng);
        let permute_rows = |data: &[f64]| -> Vec<f64> {
            let mut out = vec![0.0; data.len()];
            for f in 0..t {
                for (dst, &src) in perm.iter().enumerate() {
                    let to = (f * n + dst) * d;
                    let from = (f * n + src) * d;
                    out[to..to + d].copy_from_slice(&data[from..from + d]);
                }
            }
            out
        };
        let xp = Tensor::from_vec(permute_rows(&x.to_vec()), &[t, n, d]).unwrap();
        let pos = stack.embeddings.position.to_vec();
        let pos_p: Vec<f64> =
            perm.iter().flat_map(|&src| pos[src * d..(src + 1) * d].to_vec()).collect();
        stack.embeddings.position.set_data(&pos_p);
        let yp = spatial_encode(&xp, Some(&stack.embeddings.position), &stack.spatial_layers[0], &mask, &mut Ctx::eval())
            .unwrap()
            .to_vec();
        let expected = permute_rows(&y);
        for (a, b) in yp.iter().zip(&expected) {
            worst_spatial = worst_spatial.max((a - b).abs());
        }
    }

    // Conjugate permutation of the raw similarity adjacency, exact.
    let mut conjugate_exact = true;
    for trial in 0..200 {
        let (t, c, d) = (2, 6, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(5000 + trial);
        let nodes = random_tensor(&[t, c, d], 6000 + trial);
        let set =
            NodeSet { nodes: nodes.clone(), node_mask: vec![true; c], persons: c, objects: 0 };
        let raw = similarity_scores(&set, &mut Ctx::eval(), 0.0).unwrap().to_vec();
        let mut perm: Vec<usize> = (0..c).collect();
        use rand::seq::SliceRandom;
        perm.shuffle(&mut rng);
        let data = nodes.to_vec();
        let mut permuted = vec![0.0; data.len()];
        for f in 0..t {
            for (dst, &src) in perm.iter().enumerate() {
                permuted[(f * c + dst) * d..(f * c + dst + 1) * d]
                    .copy_from_slice(&data[(f * c + src) * d..(f * c + src + 1) * d]);
            }
        }
        let pset = NodeSet {
            nodes: Tensor::from_vec(permuted, &[t, c, d]).unwrap(),
            node_mask: vec![true; c],
            persons: c,
            objects: 0,
        };
        let praw = similarity_scores(&pset, &mut Ctx::eval(), 0.0).unwrap().to_vec();
        for f in 0..t {
            for i in 0..c {
                for j in 0..c {
                    if praw[(f * c + i) * c + j] != raw[(f * c + perm[i]) * c + perm[j]] {
                        conjugate_exact = false;
                    }
                }
            }
        }
    }

    // Relation half-swap identity, exact.
    let mut half_swap_exact = true;
    for trial in 0..200 {
        let n = 4;
        let v = random_tensor(&[n, 3, 4], 7000 + trial);
        let r = build_relation(&v).unwrap();
        for i in 0..n {
            for j in 0..n {
                let rij = r.cell(i, j);
                let rji = r.cell(j, i);
                if rij[..4] != rji[4..] {
                    half_swap_exact = false;
                }
            }
        }
    }

    report(
        "equivariance-suite",
        worst_spatial < 1e-6 && conjugate_exact && half_swap_exact,
        &format!(
            "spatial permutation worst diff {worst_spatial:.3e}; adjacency conjugation exact: {conjugate_exact}; half-swap exact: {half_swap_exact}; 200 trials each"
        ),
    );
}

#[test]
fn oracle_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut worst_gcn = 0.0f64;
    for trial in 0..1000u64 {
        let c = rng.gen_range(1..=5);
        let (t, d) = (2, 3);
        let adj = random_tensor(&[t, c, c], 8000 + trial);
        let nodes = random_tensor(&[t, c, d], 9000 + trial);
        let y = gcn_apply(&adj, &nodes).unwrap().to_vec();
        let a = adj.to_vec();
        let m = nodes.to_vec();
        for f in 0..t {
            for i in 0..c {
                for col in 0..d {
                    let mut brute = 0.0;
                    for j in 0..c {
                        brute += a[(f * c + i) * c + j] * m[(f * c + j) * d + col];
                    }
                    worst_gcn = worst_gcn.max((y[(f * c + i) * d + col] - brute).abs());
                }
            }
        }
    }

    // Aggregations against independent mean recomputation.
    let mut worst_agg = 0.0f64;
    for trial in 0..50u64 {
        let mut srng = ChaCha8Rng::seed_from_u64(10_000 + trial);
        let mut spec = suite_scenario(SuiteKind::Composition3, (trial % 3) as usize, &mut srng);
        spec.keypoints = 5;
        let clip = generate(&spec, 11_000 + trial).unwrap();
        let channels = keypoint_channels(&clip);
        let (n, k, t) = (channels.persons, channels.keypoints, channels.frames);
        let d = 4;
        let s = random_tensor(&[n, k, t, d], 12_000 + trial);
        let p = aggregate_person(&s, &channels).unwrap().to_vec();
        let raw = s.to_vec();
        for person in 0..n {
            for f in 0..t {
                for c0 in 0..d {
                    let valid: Vec<usize> =
                        (0..k).filter(|&j| channels.is_valid(person, j, f)).collect();
                    if valid.is_empty() {
                        continue;
                    }
                    let mean: f64 = valid
                        .iter()
                        .map(|&j| raw[((person * k + j) * t + f) * d + c0])
                        .sum::<f64>()
                        / valid.len() as f64;
                    worst_agg =
                        worst_agg.max((p[(person * t + f) * d + c0] - mean).abs());
                }
            }
        }
        let assignment = assign_subgroups(&clip, 2).unwrap();
        let pt = Tensor::from_vec(p.clone(), &[n, t, d]).unwrap();
        let g = aggregate_group(&pt, &assignment, &clip.person_mask).unwrap().to_vec();
        for m in 0..2 {
            let members: Vec<usize> = (0..n)
                .filter(|&i| clip.person_mask[i] && assignment.membership[i] == m)
                .collect();
            if members.is_empty() {
                continue;
            }
            for f in 0..t {
                for c0 in 0..d {
                    let mean: f64 = members
                        .iter()
                        .map(|&i| p[(i * t + f) * d + c0])
                        .sum::<f64>()
                        / members.len() as f64;
                    worst_agg = worst_agg.max((g[(m * t + f) * d + c0] - mean).abs());
                }
            }
        }
    }

    report(
        "oracle-equivalence",
        worst_gcn < 1e-12 && worst_agg < 1e-12,
        &format!("gcn vs brute force {worst_gcn:.3e} (1000 trials); aggregation vs mean {worst_agg:.3e}"),
    );
}

/// Training settings pinned for the synthetic end-to-end criteria.
fn benchmark_train_config(seed: u64, epochs: usize) -> TrainConfig {
    TrainConfig { epochs, batch_size: 8, seed, ..TrainConfig::desk() }
}

#[test]
fn synthetic_end_to_end_composition() {
    let _guard = heavy_lock();
    let start = Instant::now();
    let suite = benchmark_suite(SuiteKind::Composition3, 7, 300, 100).unwrap();
    let config = ModelConfig::micro_d64(suite.labels.clone());
    let model = DynamicFormer::<f32>::new(config, 7).unwrap();
    let cfg = benchmark_train_config(7, 18);
    train(&model, &suite.train, None, &cfg, |_, _, _| Ok(())).unwrap();
    let metrics = evaluate(&model, &suite.test, 1.0).unwrap();
    let elapsed = start.elapsed();
    report(
        "synthetic-composition3",
        metrics.group_accuracy >= 0.95 && elapsed.as_secs() < 600,
        &format!(
            "test group accuracy {:.3} (need >= 0.95) in {elapsed:?} (budget 10 min)",
            metrics.group_accuracy
        ),
    );
}

#[test]
fn synthetic_end_to_end_interaction() {
    let _guard = heavy_lock();
    let suite = benchmark_suite(SuiteKind::Interaction2, 7, 300, 100).unwrap();
    let config = ModelConfig::micro_d64(suite.labels.clone());
    let mut accuracies = Vec::new();
    for manner in ["full", "erase"] {
        let mut c = config.clone();
        c.variants.apply_named(manner).unwrap();
        let model = DynamicFormer::<f32>::new(c, 7).unwrap();
        let cfg = benchmark_train_config(7, 18);
        train(&model, &suite.train, None, &cfg, |_, _, _| Ok(())).unwrap();
        let metrics = evaluate(&model, &suite.test, 1.0).unwrap();
        accuracies.push(metrics.group_accuracy);
    }
    let (full, erase) = (accuracies[0], accuracies[1]);
    report(
        "synthetic-interaction2",
        full >= 0.90 && erase <= full - 0.10,
        &format!("full {full:.3} (need >= 0.90), erase {erase:.3} (need <= full - 0.10)"),
    );
}

#[test]
fn determinism() {
    // Seeded training is bitwise reproducible.
    let labels = SuiteKind::Composition3.labels();
    let mut config = ModelConfig::tiny(labels);
    config.max_persons = 6;
    let clips: Vec<_> = (0..8)
        .map(|i| {
            let mut srng = ChaCha8Rng::seed_from_u64(13_000 + i);
            let mut spec = suite_scenario(SuiteKind::Composition3, i as usize % 3, &mut srng);
            spec.keypoints = 4;
            spec.frames = 3;
            generate(&spec, 14_000 + i).unwrap()
        })
        .collect();
    let run = || {
        let model = DynamicFormer::<f32>::new(config.clone(), 5).unwrap();
        let cfg = TrainConfig { epochs: 3, batch_size: 4, seed: 5, ..TrainConfig::desk() };
        let report =
            train(&model, &clips[..6], Some(&clips[6..]), &cfg, |_, _, _| Ok(())).unwrap();
        metric_log_csv(&report.log)
    };
    let logs_identical = run() == run();

    // Clip save/load round-trips bit-exactly.
    let suite = benchmark_suite(SuiteKind::Interaction2, 3, 4, 2).unwrap();
    let mut roundtrip_exact = true;
    for clip in suite.train.iter().chain(&suite.test) {
        let json = clip_to_json(clip, &suite.labels).unwrap();
        let back = parse_clip(&json, &suite.labels, &suite.limits).unwrap();
        let json2 = clip_to_json(&back, &suite.labels).unwrap();
        if &back != clip || json != json2 {
            roundtrip_exact = false;
        }
    }

    report(
        "determinism",
        logs_identical && roundtrip_exact,
        &format!("metric logs identical: {logs_identical}; clip round-trip bit-exact: {roundtrip_exact}"),
    );
}

#[test]
fn ablation_report_structure() {
    use dynamicformer_core::ablation::{ablation_csv, run_ablation, AblationSuite};
    let _guard = heavy_lock();
    let suite = benchmark_suite(SuiteKind::Interaction2, 5, 12, 6).unwrap();
    let mut config = ModelConfig::micro_d64(suite.labels.clone());
    config.dim = 16;
    config.heads = 2;
    config.encoder_cycles = 1;
    config.ffn_hidden = 32;
    config.dropout = 0.0;
    let cfg = TrainConfig { epochs: 1, batch_size: 4, seed: 5, ..TrainConfig::desk() };
    let mut all_ok = true;
    let mut total_rows = 0;
    for ablation in AblationSuite::ALL {
        let rows =
            run_ablation::<f32>(ablation, &config, &cfg, &suite.train, &suite.test).unwrap();
        let expected = ablation.manner_names().len();
        if rows.len() != expected {
            all_ok = false;
        }
        for row in &rows {
            if !(0.0..=1.0).contains(&row.group_accuracy) {
                all_ok = false;
            }
        }
        let csv = ablation_csv(&rows);
        if csv.lines().count() != expected + 1 {
            all_ok = false;
        }
        total_rows += rows.len();
    }
    report(
        "ablation-report",
        all_ok && total_rows == 12,
        &format!("three suites, {total_rows} populated rows (5 composition + 4 interaction + 3 integration)"),
    );
}
