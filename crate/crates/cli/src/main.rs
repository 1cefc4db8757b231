//! `dynamicformer` command-line pipeline: generate synthetic benchmark
//! suites, train and evaluate models, run ablation tables, and inspect
//! adjacency/importance artifacts. Every command is seeded and writes a
//! reproducibility manifest next to its artifacts.

mod config;
mod manifest;
mod svg;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use dynamicformer_core::ablation::{ablation_csv, run_ablation, AblationSuite};
use dynamicformer_core::model::DynamicFormer;
use dynamicformer_core::numeric::{no_grad, Ctx};
use dynamicformer_core::scene::{clip_to_json, load_clip, Clip, ClipLimits, LabelSpace};
use dynamicformer_core::synth::{benchmark_suite_with_noise, SuiteKind};
use dynamicformer_core::train::{
    evaluate, load_checkpoint, metric_log_csv, save_checkpoint, train, Checkpoint, Metrics,
    Precision,
};
use dynamicformer_core::Scalar;

use config::RunConfig;
use manifest::ManifestBuilder;

type DynError = Box<dyn std::error::Error>;
type Result<T> = std::result::Result<T, DynError>;

#[derive(Parser)]
#[command(name = "dynamicformer", version, about = "Keypoint-only group activity recognition on synthetic scenes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// Flat key-value config file; flags override file values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for artifacts and the manifest.
    #[arg(long)]
    out: PathBuf,
    /// Master seed for generation, initialization, and training.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Materialize a synthetic benchmark suite on disk.
    Generate {
        #[command(flatten)]
        common: CommonOpts,
        /// Suite kind: composition3 or interaction2.
        #[arg(long)]
        suite: String,
    },
    /// Train a model on a generated suite.
    Train {
        #[command(flatten)]
        common: CommonOpts,
        /// Data directory produced by `generate`.
        #[arg(long)]
        data: PathBuf,
        /// Architecture variant by name (e.g. erase, sum, parallel).
        #[arg(long)]
        variant: Option<String>,
    },
    /// Evaluate a checkpoint on a suite's test split.
    Eval {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Also emit a per-class accuracy bar chart.
        #[arg(long)]
        plot: bool,
    },
    /// Train every manner of an ablation suite and tabulate accuracy.
    Ablate {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        data: PathBuf,
        /// Ablation suite: composition, interaction, or integration.
        #[arg(long)]
        suite: String,
        #[arg(long)]
        variant: Option<String>,
    },
    /// Emit importance scores and adjacency artifacts for one clip.
    Inspect {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        checkpoint: PathBuf,
        /// One clip JSON file.
        #[arg(long)]
        clip: PathBuf,
        #[arg(long)]
        plot: bool,
    },
}

/// On-disk description of a generated suite: vocabulary, bounds, and split
/// file lists (paths relative to the suite directory).
#[derive(Serialize, Deserialize)]
struct SuiteManifest {
    kind: String,
    seed: u64,
    labels: LabelSpace,
    limits: ClipLimits,
    train: Vec<String>,
    test: Vec<String>,
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate { common, suite } => cmd_generate(&common, &suite),
        Command::Train { common, data, variant } => cmd_train(&common, &data, variant.as_deref()),
        Command::Eval { common, data, checkpoint, plot } => {
            cmd_eval(&common, &data, &checkpoint, plot)
        }
        Command::Ablate { common, data, suite, variant } => {
            cmd_ablate(&common, &data, &suite, variant.as_deref())
        }
        Command::Inspect { common, checkpoint, clip, plot } => {
            cmd_inspect(&common, &checkpoint, &clip, plot)
        }
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

/// Loads defaults, then the config file, then applies flag overrides.
fn resolve_config(common: &CommonOpts, labels: LabelSpace) -> Result<RunConfig> {
    let mut cfg = RunConfig::defaults(labels);
    if let Some(path) = &common.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        cfg.apply_file(&text)?;
    }
    if let Some(seed) = common.seed {
        cfg.train.seed = seed;
    }
    Ok(cfg)
}

fn ensure_out_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path)
        .map_err(|e| format!("cannot create output dir {}: {e}", path.display()).into())
}

fn cmd_generate(common: &CommonOpts, suite_name: &str) -> Result<()> {
    let kind = SuiteKind::parse(suite_name).ok_or_else(|| {
        format!("unknown suite {suite_name:?}; usage: --suite <composition3|interaction2>")
    })?;
    let cfg = resolve_config(common, kind.labels())?;
    let seed = cfg.train.seed;
    ensure_out_dir(&common.out)?;
    let clips_dir = common.out.join("clips");
    ensure_out_dir(&clips_dir)?;

    let suite =
        benchmark_suite_with_noise(kind, seed, cfg.train_clips, cfg.test_clips, cfg.noise_sigma)?;
    let mut manifest = ManifestBuilder::new("generate", seed, run_config_echo(&cfg));
    let mut write_split = |clips: &[Clip], split: &str| -> Result<Vec<String>> {
        let mut names = Vec::with_capacity(clips.len());
        for (i, clip) in clips.iter().enumerate() {
            let name = format!("clips/clip_{split}_{i:05}.json");
            let path = common.out.join(&name);
            std::fs::write(&path, clip_to_json(clip, &suite.labels)?)
                .map_err(|e| format!("cannot write {}: {e}", path.display()))?;
            manifest.output(&path);
            names.push(name);
        }
        Ok(names)
    };
    let train_names = write_split(&suite.train, "train")?;
    let test_names = write_split(&suite.test, "test")?;

    let suite_manifest = SuiteManifest {
        kind: kind.name().to_string(),
        seed,
        labels: suite.labels.clone(),
        limits: suite.limits,
        train: train_names,
        test: test_names,
    };
    let suite_path = common.out.join("suite.json");
    std::fs::write(&suite_path, serde_json::to_string_pretty(&suite_manifest)?)?;
    manifest.output(&suite_path);
    manifest.write(&common.out)?;
    println!(
        "generated {} train + {} test clips under {}",
        suite.train.len(),
        suite.test.len(),
        common.out.display()
    );
    Ok(())
}

fn load_suite(data: &Path) -> Result<(SuiteManifest, Vec<Clip>, Vec<Clip>)> {
    let suite_path = data.join("suite.json");
    let text = std::fs::read_to_string(&suite_path)
        .map_err(|e| format!("cannot read {}: {e}", suite_path.display()))?;
    let manifest: SuiteManifest = serde_json::from_str(&text)?;
    let load_split = |names: &[String]| -> Result<Vec<Clip>> {
        names
            .iter()
            .map(|n| Ok(load_clip(&data.join(n), &manifest.labels, &manifest.limits)?))
            .collect()
    };
    let train = load_split(&manifest.train)?;
    let test = load_split(&manifest.test)?;
    Ok((manifest, train, test))
}

/// Aligns the architecture with the data bounds recorded in the suite.
fn fit_model_to_suite(cfg: &mut RunConfig, manifest: &SuiteManifest) {
    cfg.model.frames = manifest.limits.frames;
    cfg.model.keypoints = manifest.limits.keypoints;
    cfg.model.max_persons = manifest.limits.max_persons;
    cfg.model.max_objects = manifest.limits.max_objects;
    cfg.model.labels = manifest.labels.clone();
}

fn run_config_echo(cfg: &RunConfig) -> serde_json::Value {
    serde_json::json!({
        "model": cfg.model,
        "train": cfg.train,
        "train_clips": cfg.train_clips,
        "test_clips": cfg.test_clips,
        "noise_sigma": cfg.noise_sigma,
    })
}

fn cmd_train(common: &CommonOpts, data: &Path, variant: Option<&str>) -> Result<()> {
    let (suite_manifest, train_clips, test_clips) = load_suite(data)?;
    let mut cfg = resolve_config(common, suite_manifest.labels.clone())?;
    fit_model_to_suite(&mut cfg, &suite_manifest);
    if let Some(name) = variant {
        cfg.model.variants.apply_named(name)?;
    }
    ensure_out_dir(&common.out)?;
    match cfg.train.precision {
        Precision::F32 => run_train::<f32>(common, &cfg, data, &train_clips, &test_clips),
        Precision::F64 => run_train::<f64>(common, &cfg, data, &train_clips, &test_clips),
    }
}

fn run_train<F: Scalar>(
    common: &CommonOpts,
    cfg: &RunConfig,
    data: &Path,
    train_clips: &[Clip],
    test_clips: &[Clip],
) -> Result<()> {
    let model: DynamicFormer<F> = DynamicFormer::new(cfg.model.clone(), cfg.train.seed)?;
    let ckpt_path = common.out.join("checkpoint.json");
    let test = (!test_clips.is_empty()).then_some(test_clips);
    let report = train(&model, train_clips, test, &cfg.train, |_, m, _| {
        save_checkpoint(&ckpt_path, m)?;
        Ok(())
    })?;
    save_checkpoint(&ckpt_path, &model)?;
    let metrics_path = common.out.join("metrics.csv");
    std::fs::write(&metrics_path, metric_log_csv(&report.log))?;

    let mut manifest = ManifestBuilder::new("train", cfg.train.seed, run_config_echo(cfg));
    manifest.input(data);
    manifest.output(&ckpt_path);
    manifest.output(&metrics_path);
    manifest.write(&common.out)?;
    println!(
        "trained {} epochs; final train acc {:.3}{}",
        cfg.train.epochs,
        report.final_train.group_accuracy,
        report
            .final_test
            .map(|m| format!(", test acc {:.3}", m.group_accuracy))
            .unwrap_or_default()
    );
    Ok(())
}

fn summary_csv(metrics: &Metrics) -> String {
    format!(
        "split,clips,group_acc,indiv_acc,loss\ntest,{},{:.6},{},{:.6}\n",
        metrics.clip_count,
        metrics.group_accuracy,
        metrics.individual_accuracy.map_or_else(|| "-".to_string(), |a| format!("{a:.6}")),
        metrics.mean_loss
    )
}

fn cmd_eval(common: &CommonOpts, data: &Path, checkpoint: &Path, plot: bool) -> Result<()> {
    let (suite_manifest, _, test_clips) = load_suite(data)?;
    if test_clips.is_empty() {
        return Err("suite has no test clips".into());
    }
    let ckpt = load_checkpoint(checkpoint)?;
    if ckpt.config.labels != suite_manifest.labels {
        return Err(format!(
            "checkpoint labels {:?} do not match suite {:?}",
            ckpt.config.labels.group_classes, suite_manifest.labels.group_classes
        )
        .into());
    }
    ensure_out_dir(&common.out)?;
    let metrics = match ckpt.dtype.as_str() {
        "f64" => evaluate(&ckpt.into_model::<f64>()?, &test_clips, 1.0)?,
        _ => evaluate(&ckpt.into_model::<f32>()?, &test_clips, 1.0)?,
    };

    let metrics_path = common.out.join("metrics.csv");
    std::fs::write(&metrics_path, summary_csv(&metrics))?;
    let confusion_path = common.out.join("confusion.csv");
    std::fs::write(&confusion_path, metrics.confusion_csv(&suite_manifest.labels.group_classes))?;

    let seed = common.seed.unwrap_or(0);
    let mut manifest = ManifestBuilder::new("eval", seed, serde_json::json!({"checkpoint": checkpoint.display().to_string()}));
    manifest.input(data);
    manifest.input(checkpoint);
    manifest.output(&metrics_path);
    manifest.output(&confusion_path);
    if plot {
        let plot_path = common.out.join("per_class.svg");
        std::fs::write(
            &plot_path,
            svg::bar_chart(
                "per-class group accuracy",
                &suite_manifest.labels.group_classes,
                &metrics.per_class_accuracy,
            ),
        )?;
        manifest.output(&plot_path);
    }
    manifest.write(&common.out)?;
    println!(
        "test group accuracy {:.3} over {} clips",
        metrics.group_accuracy, metrics.clip_count
    );
    Ok(())
}

fn cmd_ablate(
    common: &CommonOpts,
    data: &Path,
    suite_name: &str,
    variant: Option<&str>,
) -> Result<()> {
    let suite = AblationSuite::parse(suite_name).ok_or_else(|| {
        format!(
            "unknown ablation suite {suite_name:?}; usage: --suite <composition|interaction|integration>"
        )
    })?;
    let (suite_manifest, train_clips, test_clips) = load_suite(data)?;
    if test_clips.is_empty() {
        return Err("suite has no test clips".into());
    }
    let mut cfg = resolve_config(common, suite_manifest.labels.clone())?;
    fit_model_to_suite(&mut cfg, &suite_manifest);
    if let Some(name) = variant {
        cfg.model.variants.apply_named(name)?;
    }
    ensure_out_dir(&common.out)?;
    let rows = match cfg.train.precision {
        Precision::F32 => {
            run_ablation::<f32>(suite, &cfg.model, &cfg.train, &train_clips, &test_clips)?
        }
        Precision::F64 => {
            run_ablation::<f64>(suite, &cfg.model, &cfg.train, &train_clips, &test_clips)?
        }
    };
    let table_path = common.out.join("ablation.csv");
    std::fs::write(&table_path, ablation_csv(&rows))?;
    let mut manifest = ManifestBuilder::new("ablate", cfg.train.seed, run_config_echo(&cfg));
    manifest.input(data);
    manifest.output(&table_path);
    manifest.write(&common.out)?;
    for row in &rows {
        println!("{:>12}  {:>11}  group acc {:.3}", row.suite, row.manner, row.group_accuracy);
    }
    Ok(())
}

fn cmd_inspect(common: &CommonOpts, checkpoint: &Path, clip_path: &Path, plot: bool) -> Result<()> {
    let ckpt = load_checkpoint(checkpoint)?;
    let limits = ckpt.config.limits();
    let clip = load_clip(clip_path, &ckpt.config.labels, &limits)?;
    ensure_out_dir(&common.out)?;
    match ckpt.dtype.as_str() {
        "f64" => inspect_with::<f64>(&ckpt, &clip, common, checkpoint, clip_path, plot),
        _ => inspect_with::<f32>(&ckpt, &clip, common, checkpoint, clip_path, plot),
    }
}

fn inspect_with<F: Scalar>(
    ckpt: &Checkpoint,
    clip: &Clip,
    common: &CommonOpts,
    checkpoint: &Path,
    clip_path: &Path,
    plot: bool,
) -> Result<()> {
    let model = ckpt.into_model::<F>()?;
    let mut ctx = Ctx::eval();
    let output = no_grad(|| model.forward(clip, &mut ctx))?;
    let diag = &output.diagnostics;
    let mut manifest = ManifestBuilder::new(
        "inspect",
        common.seed.unwrap_or(0),
        serde_json::json!({"checkpoint": checkpoint.display().to_string(), "clip": clip_path.display().to_string()}),
    );
    manifest.input(checkpoint);
    manifest.input(clip_path);

    // Importance: one row per valid person, argmax flagged.
    let valid_scores: Vec<(usize, f64)> = diag
        .importance
        .iter()
        .enumerate()
        .filter(|(n, _)| output.person_mask[*n])
        .map(|(n, &s)| (n, s))
        .collect();
    let key_person = valid_scores
        .iter()
        .max_by(|a, b| a.1.partial_cmp(&b.1).expect("finite scores"))
        .map(|&(n, _)| n);
    let mut importance_csv = String::from("person,score,is_key_person\n");
    for (n, score) in &valid_scores {
        importance_csv.push_str(&format!(
            "{n},{score:.6},{}\n",
            if Some(*n) == key_person { 1 } else { 0 }
        ));
    }
    let importance_path = common.out.join("importance.csv");
    std::fs::write(&importance_path, importance_csv)?;
    manifest.output(&importance_path);

    // Per-frame adjacency matrices.
    let adj = &diag.adjacency;
    for t in 0..adj.frames {
        let mut csv = String::new();
        for i in 0..adj.nodes {
            let row: Vec<String> =
                (0..adj.nodes).map(|j| format!("{:.6}", adj.get(t, i, j))).collect();
            csv.push_str(&row.join(","));
            csv.push('\n');
        }
        let path = common.out.join(format!("adjacency_frame_{t:02}.csv"));
        std::fs::write(&path, csv)?;
        manifest.output(&path);
        if plot {
            let svg_path = common.out.join(format!("adjacency_frame_{t:02}.svg"));
            std::fs::write(
                &svg_path,
                svg::heatmap(&format!("adjacency, frame {t}"), adj.nodes, adj.nodes, adj.frame(t)),
            )?;
            manifest.output(&svg_path);
        }
    }

    // Relation-cell norms.
    let n = output.person_mask.len();
    let mut rel_csv = String::new();
    for i in 0..n {
        let row: Vec<String> =
            (0..n).map(|j| format!("{:.6}", diag.relation_norms[i * n + j])).collect();
        rel_csv.push_str(&row.join(","));
        rel_csv.push('\n');
    }
    let rel_path = common.out.join("relation_norms.csv");
    std::fs::write(&rel_path, rel_csv)?;
    manifest.output(&rel_path);
    if plot {
        let svg_path = common.out.join("relation_norms.svg");
        std::fs::write(
            &svg_path,
            svg::heatmap("relation cell norms", n, n, &diag.relation_norms),
        )?;
        manifest.output(&svg_path);
    }

    manifest.write(&common.out)?;
    if let Some(key) = key_person {
        println!("key person: {key}");
    }
    Ok(())
}
