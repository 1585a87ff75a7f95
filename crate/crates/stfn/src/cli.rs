//! Command-line interface: `gen`, `train`, `eval`, `gradcheck`, `sweep`.
//!
//! Exit codes are a stable contract: 0 success, 1 check failure
//! (gradcheck tolerance exceeded), 2 usage or configuration error.
//!
//! `train` and `sweep` accept an optional TOML config file; command-line
//! flags override file values, and the fully resolved configuration is
//! written next to the outputs (`config.toml`). Unknown config keys are
//! rejected. See the README for the key set.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::data::{
    generate_synthetic, load_checkpoint, load_dataset, save_checkpoint, Coupling, Dataset, Split,
    SyntheticTaskSpec,
};
use crate::error::{Error, Result};
use crate::fusion::{ArchVariant, FusionDirection, FusionOp};
use crate::gradcheck;
use crate::model::{ModelConfig, StfnModel};
use crate::train::{evaluate, predict_split, sig6, train, LrSchedule, OptimizerKind, TrainConfig};

#[derive(Parser)]
#[command(name = "stfn", version, about = "Two-modality temporal fusion head: dataset generation, training, evaluation, gradient checking, ablation sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic two-modality dataset
    Gen(GenArgs),
    /// Train a model on a dataset manifest
    Train(TrainArgs),
    /// Evaluate a checkpoint on one dataset split
    Eval(EvalArgs),
    /// Finite-difference check of every backward pass
    Gradcheck(GradcheckArgs),
    /// Train the full architecture/fusion/direction/segment grid
    Sweep(SweepArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 4)]
    classes: usize,
    /// Feature dimension (multiple of 4)
    #[arg(long = "dim", visible_alias = "d", default_value_t = 16)]
    dim: usize,
    /// Frames per video
    #[arg(long, default_value_t = 20)]
    frames: usize,
    #[arg(long, default_value_t = 5)]
    segments: usize,
    /// Training videos per class
    #[arg(long, default_value_t = 50)]
    per_class: usize,
    #[arg(long, default_value_t = 10)]
    val_per_class: usize,
    #[arg(long, default_value_t = 25)]
    test_per_class: usize,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    /// complementary | redundant
    #[arg(long, default_value = "complementary")]
    coupling: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Default)]
struct ModelFlags {
    /// two_stage_fused | single_stage_fused | concat_first
    #[arg(long)]
    variant: Option<String>,
    /// average | multiply | maximum
    #[arg(long)]
    fusion_op: Option<String>,
    /// a_to_m | m_to_a | bidirectional
    #[arg(long)]
    direction: Option<String>,
    #[arg(long)]
    segments: Option<usize>,
    #[arg(long)]
    blocks_per_stage: Option<usize>,
}

#[derive(Args, Default)]
struct TrainFlags {
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// rms_prop | sgd_momentum
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    rms_decay: Option<f64>,
    #[arg(long)]
    rms_epsilon: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    decay_factor: Option<f64>,
    #[arg(long)]
    floor_lr: Option<f64>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    min_delta: Option<f64>,
    #[arg(long)]
    eval_samples: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset manifest (may instead come from the config file's [data])
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Output directory (may instead come from the config file's [data])
    #[arg(long)]
    out: Option<PathBuf>,
    /// TOML config file; flags override file values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Warm-start from an existing checkpoint (second-phase training);
    /// the architecture then comes from the checkpoint
    #[arg(long)]
    init_checkpoint: Option<PathBuf>,
    #[command(flatten)]
    model: ModelFlags,
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// train | val | test
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long, default_value_t = 5)]
    eval_samples: usize,
    /// Per-video predictions file
    #[arg(long, default_value = "predictions.txt")]
    out: PathBuf,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Flip one analytic gradient to demonstrate failure detection
    #[arg(long, hide = true)]
    sabotage: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated variants (default: all three)
    #[arg(long, value_delimiter = ',')]
    variants: Vec<String>,
    /// Comma-separated fusion ops (default: all three)
    #[arg(long, value_delimiter = ',')]
    ops: Vec<String>,
    /// Comma-separated directions (default: all three)
    #[arg(long, value_delimiter = ',')]
    directions: Vec<String>,
    /// Comma-separated segment counts (default: 5)
    #[arg(long, value_delimiter = ',')]
    segments: Vec<usize>,
    /// train | val | test split scored per cell
    #[arg(long, default_value = "test")]
    split: String,
    #[command(flatten)]
    train: TrainFlags,
}

/// Optional config file contents. Unknown keys are rejected.
#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    data: Option<FileData>,
    model: Option<FileModel>,
    train: Option<FileTrain>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileData {
    manifest: Option<PathBuf>,
    out: Option<PathBuf>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileModel {
    num_segments: Option<usize>,
    variant: Option<ArchVariant>,
    fusion_op: Option<FusionOp>,
    direction: Option<FusionDirection>,
    blocks_per_stage: Option<usize>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileTrain {
    batch_size: Option<usize>,
    max_epochs: Option<usize>,
    seed: Option<u64>,
    eval_samples_per_segment: Option<usize>,
    optimizer: Option<OptimizerKind>,
    schedule: Option<FileSchedule>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileSchedule {
    initial_lr: Option<f64>,
    decay_factor: Option<f64>,
    floor_lr: Option<f64>,
    patience: Option<usize>,
    min_delta: Option<f64>,
}

/// Everything a run depends on, written next to its outputs.
#[derive(Serialize)]
struct ResolvedConfig<'a> {
    data: ResolvedData<'a>,
    model: &'a ModelConfig,
    train: &'a TrainConfig,
}

#[derive(Serialize)]
struct ResolvedData<'a> {
    manifest: &'a Path,
    feature_dim: usize,
    num_classes: usize,
}

fn read_file_config(path: Option<&Path>) -> Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p)?;
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
        }
    }
}

fn parse_opt<T: std::str::FromStr<Err = Error>>(v: &Option<String>) -> Result<Option<T>> {
    v.as_ref().map(|s| s.parse()).transpose()
}

/// defaults <- config file <- command-line flags.
fn resolve_configs(
    dataset: &Dataset,
    file: &FileConfig,
    model_flags: &ModelFlags,
    train_flags: &TrainFlags,
) -> Result<(ModelConfig, TrainConfig)> {
    let fm = file.model.as_ref();
    let ft = file.train.as_ref();
    let fs = ft.and_then(|t| t.schedule.as_ref());

    let mut model = ModelConfig::new(dataset.feature_dim, dataset.num_classes);
    if let Some(v) = fm.and_then(|m| m.num_segments) {
        model.num_segments = v;
    }
    if let Some(v) = fm.and_then(|m| m.variant) {
        model.variant = v;
    }
    if let Some(v) = fm.and_then(|m| m.fusion_op) {
        model.fusion_op = v;
    }
    if let Some(v) = fm.and_then(|m| m.direction) {
        model.direction = v;
    }
    if let Some(v) = fm.and_then(|m| m.blocks_per_stage) {
        model.blocks_per_stage = v;
    }
    if let Some(v) = parse_opt::<ArchVariant>(&model_flags.variant)? {
        model.variant = v;
    }
    if let Some(v) = parse_opt::<FusionOp>(&model_flags.fusion_op)? {
        model.fusion_op = v;
    }
    if let Some(v) = parse_opt::<FusionDirection>(&model_flags.direction)? {
        model.direction = v;
    }
    if let Some(v) = model_flags.segments {
        model.num_segments = v;
    }
    if let Some(v) = model_flags.blocks_per_stage {
        model.blocks_per_stage = v;
    }

    let mut schedule = LrSchedule::default();
    if let Some(v) = fs.and_then(|s| s.initial_lr) {
        schedule.initial_lr = v;
    }
    if let Some(v) = fs.and_then(|s| s.decay_factor) {
        schedule.decay_factor = v;
    }
    if let Some(v) = fs.and_then(|s| s.floor_lr) {
        schedule.floor_lr = v;
    }
    if let Some(v) = fs.and_then(|s| s.patience) {
        schedule.patience = v;
    }
    if let Some(v) = fs.and_then(|s| s.min_delta) {
        schedule.min_delta = v;
    }
    if let Some(v) = train_flags.lr {
        schedule.initial_lr = v;
    }
    if let Some(v) = train_flags.decay_factor {
        schedule.decay_factor = v;
    }
    if let Some(v) = train_flags.floor_lr {
        schedule.floor_lr = v;
    }
    if let Some(v) = train_flags.patience {
        schedule.patience = v;
    }
    if let Some(v) = train_flags.min_delta {
        schedule.min_delta = v;
    }

    let mut optimizer = ft
        .and_then(|t| t.optimizer)
        .unwrap_or_else(OptimizerKind::rms_prop);
    if let Some(name) = &train_flags.optimizer {
        optimizer = match name.as_str() {
            "rms_prop" | "rmsprop" => OptimizerKind::rms_prop(),
            "sgd_momentum" | "sgd" => OptimizerKind::sgd_momentum(),
            other => {
                return Err(Error::Config(format!(
                    "unknown optimizer {other:?} (expected rms_prop|sgd_momentum)"
                )))
            }
        };
    }
    if let Some(m) = train_flags.momentum {
        optimizer = OptimizerKind::SgdMomentum { momentum: m };
    }
    if train_flags.rms_decay.is_some() || train_flags.rms_epsilon.is_some() {
        let (mut decay, mut epsilon) = match optimizer {
            OptimizerKind::RmsProp { decay, epsilon } => (decay, epsilon),
            _ => (0.9, 1e-8),
        };
        if let Some(v) = train_flags.rms_decay {
            decay = v;
        }
        if let Some(v) = train_flags.rms_epsilon {
            epsilon = v;
        }
        optimizer = OptimizerKind::RmsProp { decay, epsilon };
    }

    let mut tc = TrainConfig::new(100, 1);
    if let Some(v) = ft.and_then(|t| t.batch_size) {
        tc.batch_size = v;
    }
    if let Some(v) = ft.and_then(|t| t.max_epochs) {
        tc.max_epochs = v;
    }
    if let Some(v) = ft.and_then(|t| t.seed) {
        tc.seed = v;
    }
    if let Some(v) = ft.and_then(|t| t.eval_samples_per_segment) {
        tc.eval_samples_per_segment = v;
    }
    if let Some(v) = train_flags.batch_size {
        tc.batch_size = v;
    }
    if let Some(v) = train_flags.epochs {
        tc.max_epochs = v;
    }
    if let Some(v) = train_flags.seed {
        tc.seed = v;
    }
    if let Some(v) = train_flags.eval_samples {
        tc.eval_samples_per_segment = v;
    }
    tc.optimizer = optimizer;
    tc.schedule = schedule;
    tc.num_segments = model.num_segments;
    Ok((model, tc))
}

fn cmd_gen(args: &GenArgs) -> Result<()> {
    let spec = SyntheticTaskSpec {
        num_classes: args.classes,
        feature_dim: args.dim,
        frames: args.frames,
        num_segments: args.segments,
        train_per_class: args.per_class,
        val_per_class: args.val_per_class,
        test_per_class: args.test_per_class,
        noise_std: args.noise,
        seed: args.seed,
        coupling: args.coupling.parse::<Coupling>()?,
    };
    let manifest = generate_synthetic(&spec, &args.out)?;
    println!("{}", manifest.display());
    Ok(())
}

fn write_resolved_config(
    out_dir: &Path,
    manifest: &Path,
    dataset: &Dataset,
    model: &ModelConfig,
    tc: &TrainConfig,
) -> Result<()> {
    let resolved = ResolvedConfig {
        data: ResolvedData {
            manifest,
            feature_dim: dataset.feature_dim,
            num_classes: dataset.num_classes,
        },
        model,
        train: tc,
    };
    let text = toml::to_string_pretty(&resolved)
        .map_err(|e| Error::Config(format!("serializing resolved config: {e}")))?;
    fs::write(out_dir.join("config.toml"), text)?;
    Ok(())
}

fn resolve_path(flag: &Option<PathBuf>, file: Option<&PathBuf>, what: &str) -> Result<PathBuf> {
    flag.clone()
        .or_else(|| file.cloned())
        .ok_or_else(|| Error::Config(format!("--{what} required (flag or [data] in the config file)")))
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let file = read_file_config(args.config.as_deref())?;
    let fd = file.data.as_ref();
    let manifest = resolve_path(&args.manifest, fd.and_then(|d| d.manifest.as_ref()), "manifest")?;
    let out = resolve_path(&args.out, fd.and_then(|d| d.out.as_ref()), "out")?;
    let dataset = load_dataset(&manifest)?;
    let (model_config, mut train_config) =
        resolve_configs(&dataset, &file, &args.model, &args.train)?;

    let mut model = match &args.init_checkpoint {
        None => StfnModel::new(model_config, train_config.seed)?,
        Some(ckpt) => {
            let model = load_checkpoint(ckpt)?;
            // The warm-started architecture wins; an explicitly requested
            // segment count that disagrees with it is an error.
            if args.model.segments.is_some()
                && model.config.num_segments != train_config.num_segments
            {
                return Err(Error::ConfigMismatch(format!(
                    "--segments {} but the checkpoint was trained with {}",
                    train_config.num_segments, model.config.num_segments
                )));
            }
            train_config.num_segments = model.config.num_segments;
            model
        }
    };
    fs::create_dir_all(&out)?;
    write_resolved_config(&out, &manifest, &dataset, &model.config, &train_config)?;
    let report = train(&mut model, &dataset, &train_config)?;
    fs::write(out.join("report.txt"), report.to_table())?;
    let ckpt = out.join("checkpoint.stfn");
    save_checkpoint(&model, &ckpt)?;
    if let Some(acc) = report.final_val_accuracy() {
        println!("final_val_accuracy {acc:.4}");
    }
    println!("{}", ckpt.display());
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let mut model = load_checkpoint(&args.checkpoint)?;
    let dataset = load_dataset(&args.manifest)?;
    if dataset.feature_dim != model.config.feature_dim
        || dataset.num_classes != model.config.num_classes
    {
        return Err(Error::ConfigMismatch(format!(
            "checkpoint is d={} C={}, dataset is d={} C={}",
            model.config.feature_dim,
            model.config.num_classes,
            dataset.feature_dim,
            dataset.num_classes
        )));
    }
    let split = args.split.parse::<Split>()?;
    let predictions = predict_split(&mut model, &dataset, split, args.eval_samples)?;
    let correct = predictions.iter().filter(|p| p.predicted == p.label).count();
    let accuracy = correct as f64 / predictions.len() as f64;

    let mut text = String::from("# id label predicted scores...\n");
    for p in &predictions {
        text.push_str(&format!("{} {} {}", p.id, p.label, p.predicted));
        for s in &p.scores {
            text.push(' ');
            text.push_str(&sig6(*s));
        }
        text.push('\n');
    }
    fs::write(&args.out, text)?;
    println!("accuracy {accuracy:.4}");
    Ok(())
}

fn cmd_gradcheck(args: &GradcheckArgs) -> Result<bool> {
    let checks = gradcheck::run_all(args.seed, args.sabotage);
    println!("# component max_rel_error tolerance status");
    let mut all_ok = true;
    for c in &checks {
        let status = if c.passed() { "PASS" } else { "FAIL" };
        println!(
            "{} {} {} {}",
            c.component,
            sig6(c.max_rel_error),
            sig6(c.tolerance),
            status
        );
        all_ok &= c.passed();
    }
    Ok(all_ok)
}

fn parse_list<T: Copy + std::str::FromStr<Err = Error>>(
    values: &[String],
    all: &[T],
) -> Result<Vec<T>> {
    if values.is_empty() {
        Ok(all.to_vec())
    } else {
        values.iter().map(|s| s.parse()).collect()
    }
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let file = read_file_config(args.config.as_deref())?;
    let fd = file.data.as_ref();
    let manifest = resolve_path(&args.manifest, fd.and_then(|d| d.manifest.as_ref()), "manifest")?;
    let out = resolve_path(&args.out, fd.and_then(|d| d.out.as_ref()), "out")?;
    let dataset = load_dataset(&manifest)?;
    let (base_model, base_train) =
        resolve_configs(&dataset, &file, &ModelFlags::default(), &args.train)?;
    let variants = parse_list(&args.variants, &ArchVariant::ALL)?;
    let ops = parse_list(&args.ops, &FusionOp::ALL)?;
    let directions = parse_list(&args.directions, &FusionDirection::ALL)?;
    let segments = if args.segments.is_empty() {
        vec![base_model.num_segments]
    } else {
        args.segments.clone()
    };
    let split = args.split.parse::<Split>()?;

    fs::create_dir_all(&out)?;
    write_resolved_config(&out, &manifest, &dataset, &base_model, &base_train)?;

    let header = "# variant fusion_op direction segments accuracy";
    let mut table = format!("{header}\n");
    println!("{header}");
    for &variant in &variants {
        for &op in &ops {
            for &direction in &directions {
                for &n in &segments {
                    let mut mc = base_model;
                    mc.variant = variant;
                    mc.fusion_op = op;
                    mc.direction = direction;
                    mc.num_segments = n;
                    let mut tc = base_train;
                    tc.num_segments = n;
                    let mut model = StfnModel::new(mc, tc.seed)?;
                    train(&mut model, &dataset, &tc)?;
                    let acc =
                        evaluate(&mut model, &dataset, split, tc.eval_samples_per_segment)?;
                    let row = format!(
                        "{} {} {} {} {}",
                        variant.name(),
                        op.name(),
                        direction.name(),
                        n,
                        sig6(acc)
                    );
                    println!("{row}");
                    table.push_str(&row);
                    table.push('\n');
                }
            }
        }
    }
    fs::write(out.join("sweep.txt"), table)?;
    Ok(())
}

/// Entry point used by the `stfn` binary.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Gen(args) => cmd_gen(args).map(|()| true),
        Command::Train(args) => cmd_train(args).map(|()| true),
        Command::Eval(args) => cmd_eval(args).map(|()| true),
        Command::Gradcheck(args) => cmd_gradcheck(args),
        Command::Sweep(args) => cmd_sweep(args).map(|()| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
