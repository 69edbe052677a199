//! Command-line interface.
//!
//! Every subcommand writes its outputs under `--out` with fixed file names
//! and starts by writing `config_echo.json`, which records every effective
//! parameter of the run.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::augment::{sample_augmentation, AugmentConfig, Interpolation, ParamRange};
use crate::datagen::{
    augment_training, ingest, stratified_split, synthesize, to_samples, write_corpus,
    CorpusManifest, IngestOptions, SynthSpec, MANIFEST_FILE,
};
use crate::error::{Error, Result};
use crate::eval::{
    confusion_matrix, normalize_confusion, roc_curve, ConfusionMatrix, RocAnalysis, RocSummary,
    ScoredSample,
};
use crate::image::Image;
use crate::network::check::{check_model, CheckConfig, CheckRow, TOLERANCE};
use crate::network::{
    build_initialized, extract_features, load_weights, load_weights_as, save_weights,
    train_with_observer, ArchId, FeatureScaler, Model, Optimizer, Sample, TrainConfig,
};
use crate::numerics::gradcheck::DEFAULT_EPSILON;
use crate::numerics::par::init_threads_from_env;
use crate::numerics::{argmax, derive_seed, Exec, Rng, Tensor, DEFAULT_SEED};
use crate::pipeline::{detect_skin, diagnose, render_mask, Classifier, DEFAULT_THRESHOLD};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_VALIDATION: i32 = 4;

pub const CONFIG_ECHO_FILE: &str = "config_echo.json";
pub const REPORT_FILE: &str = "report.json";
pub const ROC_FILE: &str = "roc.csv";
pub const CONFUSION_FILE: &str = "confusion.csv";
pub const CONFUSION_NORM_FILE: &str = "confusion_norm.csv";
pub const MASK_FILE: &str = "mask.ppm";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const WEIGHTS_FILE: &str = "weights.tpwf";
pub const TILES_FILE: &str = "tiles.csv";
pub const HISTOGRAM_FILE: &str = "histogram.csv";
pub const TRANSFORMS_FILE: &str = "transforms.json";

// Child-seed label for training-set augmentation.
const SEED_AUGMENT: u64 = 5;
// Child-seed label for the gradient-check input.
const SEED_GRADCHECK_INPUT: u64 = 1;

const PATCH: usize = crate::network::PATCH_SIZE;

#[derive(Debug, Parser)]
#[command(
    name = "tilepath",
    version,
    about = "Tile-based skin detection and lesion classification"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic class-per-directory corpus.
    Synth(SynthArgs),
    /// Write a freshly initialised model.
    Init(InitArgs),
    /// Train a classifier on a corpus.
    Train(TrainArgs),
    /// Evaluate a classifier (ROC, Youden's index, confusion matrices).
    Eval(EvalArgs),
    /// Skin/non-skin mask of an image.
    Detect(DetectArgs),
    /// Skin mask plus lesion-class proportions of an image.
    Diagnose(DiagnoseArgs),
    /// Finite-difference check of every layer's gradients.
    Gradcheck(GradcheckArgs),
    /// Write randomly augmented copies of one image plus their transforms.
    Augment(AugmentArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    /// 2 (skin vs non-skin) or 7 (lesion classes).
    #[arg(long, default_value_t = 7)]
    pub classes: usize,
    #[arg(long, default_value_t = 200)]
    pub per_class: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Fraction recorded as the training split in manifest.json.
    #[arg(long, default_value_t = 0.7)]
    pub train_fraction: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct InitArgs {
    #[arg(long, value_parser = parse_arch)]
    pub arch: ArchId,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerArg {
    Sgd,
    SgdMomentum,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    /// tiny_cnn, classifier_head_2 or classifier_head_7.
    #[arg(long, value_parser = parse_arch)]
    pub arch: ArchId,
    /// Corpus root (one directory per class).
    #[arg(long)]
    pub data: PathBuf,
    /// Feature extractor weights; required for the classifier heads.
    #[arg(long)]
    pub extractor: Option<PathBuf>,
    /// Start from these weights instead of a seeded initialisation.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, value_enum, default_value_t = OptimizerArg::Sgd)]
    pub optimizer: OptimizerArg,
    /// Used with --optimizer sgd-momentum.
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 0.7)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Augmented copies added per training image.
    #[arg(long, default_value_t = 0)]
    pub augment_copies: usize,
    /// Standardise extracted features during head training (folded back
    /// into the saved head).
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub standardize: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    Val,
    Train,
    All,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long, required_unless_present = "scores", conflicts_with = "scores")]
    pub model: Option<PathBuf>,
    #[arg(long, required_unless_present = "scores")]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub extractor: Option<PathBuf>,
    /// CSV of `score,label` lines (label 1 = positive) instead of a model.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Class whose ROC goes to roc.csv.
    #[arg(long, default_value_t = 0)]
    pub positive_class: usize,
    /// Which split members to evaluate; the split is recomputed from
    /// --seed and --train-fraction exactly as `train` does.
    #[arg(long, value_enum, default_value_t = Subset::Val)]
    pub subset: Subset,
    #[arg(long, default_value_t = 0.7)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct TileArgs {
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long, default_value_t = PATCH)]
    pub window: usize,
    #[arg(long, default_value_t = PATCH)]
    pub stride: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct DetectArgs {
    #[arg(long)]
    pub image: PathBuf,
    /// Feature extractor for a classifier_head_2 gate.
    #[arg(long)]
    pub extractor: Option<PathBuf>,
    /// Skin gate: tiny_cnn or classifier_head_2.
    #[arg(long)]
    pub head2: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub tiles: TileArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub image: PathBuf,
    /// Feature extractor shared by whichever stages are classifier heads.
    #[arg(long)]
    pub extractor: Option<PathBuf>,
    #[arg(long)]
    pub head2: PathBuf,
    /// Seven-way lesion classifier (classifier_head_7).
    #[arg(long)]
    pub head7: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub tiles: TileArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct GradcheckArgs {
    /// Architecture to check; all classifiers when omitted.
    #[arg(long, value_parser = parse_arch)]
    pub arch: Option<ArchId>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub epsilon: f64,
    #[arg(long, default_value_t = TOLERANCE)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 24)]
    pub samples_per_tensor: usize,
    /// Scale every analytic gradient by 1.05 so the check must fail.
    #[arg(long, hide = true)]
    pub corrupt: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum InterpolationArg {
    Nearest,
    Bilinear,
}

#[derive(Debug, Args, Serialize)]
pub struct AugmentArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    /// Rotation range ±degrees.
    #[arg(long, default_value_t = 20.0)]
    pub rotation: f64,
    /// Row shift range ±pixels; 10% of the height when omitted.
    #[arg(long)]
    pub shift_rows: Option<f64>,
    /// Column shift range ±pixels; 10% of the width when omitted.
    #[arg(long)]
    pub shift_cols: Option<f64>,
    /// Shear range ±degrees.
    #[arg(long, default_value_t = 10.0)]
    pub shear: f64,
    /// Zoom factors are drawn from [1 - zoom, 1 + zoom].
    #[arg(long, default_value_t = 0.1)]
    pub zoom: f64,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub flip: bool,
    #[arg(long, value_enum, default_value_t = InterpolationArg::Nearest)]
    pub interpolation: InterpolationArg,
    /// Value for pixels mapped from outside the source, in [0, 1].
    #[arg(long, default_value_t = 0.0)]
    pub fill: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_arch(s: &str) -> std::result::Result<ArchId, String> {
    s.parse::<ArchId>().map_err(|e| e.to_string())
}

/// A failed run: message plus process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    /// Failure to read an input, whatever the underlying cause.
    fn unreadable(what: &str, path: &Path, e: Error) -> Self {
        Self::new(
            EXIT_IO,
            format!("cannot read {what} {}: {e}", path.display()),
        )
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self::new(exit_code(&e), e.to_string())
    }
}

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Configuration(_) => EXIT_USAGE,
        Error::Io { .. } | Error::Json(_) | Error::Format(_) | Error::Corruption(_) => EXIT_IO,
        _ => EXIT_VALIDATION,
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(&cli.command) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {f}");
            f.code
        }
    }
}

pub fn run(command: &Command) -> CliResult<()> {
    let threads = init_threads_from_env();
    match command {
        Command::Synth(a) => with_echo("synth", &a.out, a, threads, || cmd_synth(a)),
        Command::Init(a) => with_echo("init", &a.out, a, threads, || cmd_init(a)),
        Command::Train(a) => with_echo("train", &a.out, a, threads, || cmd_train(a)),
        Command::Eval(a) => with_echo("eval", &a.out, a, threads, || cmd_eval(a)),
        Command::Detect(a) => with_echo("detect", &a.out, a, threads, || cmd_detect(a)),
        Command::Diagnose(a) => with_echo("diagnose", &a.out, a, threads, || cmd_diagnose(a)),
        Command::Gradcheck(a) => with_echo("gradcheck", &a.out, a, threads, || cmd_gradcheck(a)),
        Command::Augment(a) => with_echo("augment", &a.out, a, threads, || cmd_augment(a)),
    }
}

fn with_echo<A: Serialize>(
    name: &str,
    out: &Path,
    args: &A,
    threads: usize,
    body: impl FnOnce() -> CliResult<()>,
) -> CliResult<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let echo = json!({
        "command": name,
        "version": env!("CARGO_PKG_VERSION"),
        "threads": threads,
        "parallel": cfg!(feature = "parallel"),
        "args": args,
    });
    write_text(
        &out.join(CONFIG_ECHO_FILE),
        &serde_json::to_string_pretty(&echo).map_err(Error::from)?,
    )?;
    body()
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &serde_json::to_string_pretty(value)?)
}

fn read_image(path: &Path) -> CliResult<Image> {
    Image::read_pnm(path).map_err(|e| Failure::unreadable("image", path, e))
}

fn read_model(path: &Path) -> CliResult<Model> {
    load_weights(path).map_err(|e| Failure::unreadable("weights", path, e))
}

fn read_extractor(path: Option<&PathBuf>) -> CliResult<Option<Model>> {
    path.map(|p| {
        load_weights_as(p, ArchId::Vgg16Headless)
            .map_err(|e| Failure::unreadable("extractor", p, e))
    })
    .transpose()
}

fn needs_extractor(arch: ArchId) -> bool {
    matches!(arch, ArchId::ClassifierHead2 | ArchId::ClassifierHead7)
}

/// Pairs `head` with the extractor when it consumes features.
fn classifier<'a>(head: &'a Model, extractor: Option<&'a Model>) -> CliResult<Classifier<'a>> {
    if !needs_extractor(head.arch()) {
        return Ok(Classifier::new(None, head)?);
    }
    let ex = extractor
        .ok_or_else(|| Failure::new(EXIT_USAGE, format!("{} needs --extractor", head.arch())))?;
    Ok(Classifier::new(Some(ex), head)?)
}

fn cmd_synth(a: &SynthArgs) -> CliResult<()> {
    let spec = SynthSpec::default_for(a.classes, a.per_class, a.seed)?;
    let patches = synthesize(&spec, Exec::Parallel)?;
    write_corpus(&patches, &a.out)?;
    let labels: Vec<usize> = patches.iter().map(|p| p.label).collect();
    let split_seed = TrainConfig {
        seed: a.seed,
        ..TrainConfig::default()
    }
    .split_seed();
    let split = stratified_split(&labels, a.train_fraction, split_seed)?;
    let ids = |idx: &[usize]| idx.iter().map(|&i| patches[i].source.clone()).collect();
    let manifest = CorpusManifest {
        classes: spec.class_names(),
        counts: vec![a.per_class; spec.classes.len()],
        seed: a.seed,
        train: ids(&split.train),
        val: ids(&split.val),
    };
    write_text(&a.out.join(MANIFEST_FILE), &manifest.to_json()?)?;
    println!(
        "wrote {} patches in {} classes to {}",
        patches.len(),
        spec.classes.len(),
        a.out.display()
    );
    Ok(())
}

fn cmd_init(a: &InitArgs) -> CliResult<()> {
    let model = build_initialized(a.arch, a.seed)?;
    save_weights(&model, a.out.join(WEIGHTS_FILE))?;
    println!("{} with {} parameters", a.arch, model.parameter_count());
    Ok(())
}

fn train_config(a: &TrainArgs) -> TrainConfig {
    TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch,
        learning_rate: a.lr,
        optimizer: match a.optimizer {
            OptimizerArg::Sgd => Optimizer::Sgd,
            OptimizerArg::SgdMomentum => Optimizer::SgdMomentum,
        },
        momentum: a.momentum,
        seed: a.seed,
        train_fraction: a.train_fraction,
    }
}

fn cmd_train(a: &TrainArgs) -> CliResult<()> {
    if a.arch == ArchId::Vgg16Headless {
        return Err(Failure::new(
            EXIT_USAGE,
            "vgg16_headless is a frozen extractor; use `init`",
        ));
    }
    let cfg = train_config(a);
    cfg.validate()?;
    let exec = Exec::Parallel;
    let extractor = read_extractor(a.extractor.as_ref())?;
    if needs_extractor(a.arch) && extractor.is_none() {
        return Err(Failure::new(
            EXIT_USAGE,
            format!("{} needs --extractor", a.arch),
        ));
    }
    let mut model = match &a.init {
        Some(p) => load_weights_as(p, a.arch).map_err(|e| Failure::unreadable("weights", p, e))?,
        None => build_initialized(a.arch, a.seed)?,
    };

    let opts = IngestOptions {
        train_fraction: a.train_fraction,
        seed: cfg.split_seed(),
        class_order: None,
    };
    let corpus = ingest(&a.data, &opts, exec)?;
    for w in &corpus.warnings {
        eprintln!("warning: {w}");
    }
    let classes = corpus.manifest.classes.len();
    if model.num_classes() != Some(classes) {
        return Err(Error::Data(format!(
            "{} expects {:?} classes, corpus has {classes}",
            a.arch,
            model.num_classes()
        ))
        .into());
    }
    let (patches, split) = if a.augment_copies > 0 {
        augment_training(
            &corpus.patches,
            &corpus.split,
            a.augment_copies,
            &AugmentConfig::default_for(PATCH, PATCH),
            derive_seed(a.seed, SEED_AUGMENT),
            exec,
        )?
    } else {
        (corpus.patches.clone(), corpus.split.clone())
    };

    let (samples, scaler) = match &extractor {
        Some(ex) if needs_extractor(a.arch) => {
            let samples = exec
                .map(&patches, |p| -> Result<Sample> {
                    Ok(Sample {
                        input: extract_features(ex, &p.image)?.to_tensor(),
                        label: p.label,
                    })
                })
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
            if a.standardize {
                let scaler = FeatureScaler::fit(&samples, &split.train)?;
                (scaler.apply_all(&samples)?, Some(scaler))
            } else {
                (samples, None)
            }
        }
        _ => (to_samples(&patches), None),
    };

    let log = train_with_observer(&mut model, &samples, &split, &cfg, exec, |e, _| {
        eprintln!(
            "epoch {}/{}: loss {:.4} acc {:.4} val_loss {:.4} val_acc {:.4}",
            e.epoch, cfg.epochs, e.train_loss, e.train_acc, e.val_loss, e.val_acc
        );
    })?;
    if let Some(s) = &scaler {
        s.fold_into(&mut model)?;
    }
    model.round_to_f32();
    save_weights(&model, a.out.join(WEIGHTS_FILE))?;
    write_text(&a.out.join(TRAIN_LOG_FILE), &log.to_csv())?;
    write_text(&a.out.join(MANIFEST_FILE), &corpus.manifest.to_json()?)?;
    if let Some(last) = log.last() {
        println!(
            "final val_acc {:.4} val_loss {:.6}",
            last.val_acc, last.val_loss
        );
    }
    Ok(())
}

/// One class-as-positive row of the binary report.
#[derive(Debug, Clone, Serialize)]
pub struct Orientation {
    pub positive_class: usize,
    pub class_name: String,
    #[serde(flatten)]
    pub summary: RocSummary,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub model: Option<String>,
    pub classes: Vec<String>,
    pub subset: Subset,
    pub samples: usize,
    /// Arg-max accuracy.
    pub accuracy: f64,
    pub positive_class: usize,
    /// Binary models only, one per class.
    pub orientations: Vec<Orientation>,
    /// Diagonal of the row-normalised confusion matrix.
    pub per_class_recall: Vec<f64>,
}

fn print_orientations(rows: &[Orientation]) {
    println!("positive  AUC     Y index  Best T   ACC     SEN     SPE");
    for o in rows {
        let s = &o.summary;
        println!(
            "{:<9} {:.4}  {:.4}   {:.4}   {:.4}  {:.4}  {:.4}",
            format!("c{}", o.positive_class),
            s.auc,
            s.youden_j,
            s.best_threshold,
            s.acc,
            s.sen,
            s.spe
        );
    }
}

fn write_confusion(out: &Path, cm: &ConfusionMatrix) -> Result<Vec<f64>> {
    let norm = normalize_confusion(cm);
    write_text(&out.join(CONFUSION_FILE), &cm.to_csv())?;
    write_text(&out.join(CONFUSION_NORM_FILE), &norm.to_csv())?;
    Ok(norm.diagonal())
}

fn cmd_eval(a: &EvalArgs) -> CliResult<()> {
    if let Some(scores) = &a.scores {
        return eval_scores(a, scores);
    }
    let (Some(model_path), Some(data)) = (&a.model, &a.data) else {
        return Err(Failure::new(
            EXIT_USAGE,
            "--model and --data are required without --scores",
        ));
    };
    let exec = Exec::Parallel;
    let model = read_model(model_path)?;
    let extractor = read_extractor(a.extractor.as_ref())?;
    let clf = classifier(&model, extractor.as_ref())?;
    let split_seed = TrainConfig {
        seed: a.seed,
        ..TrainConfig::default()
    }
    .split_seed();
    let opts = IngestOptions {
        train_fraction: a.train_fraction,
        seed: split_seed,
        class_order: None,
    };
    let corpus = ingest(data, &opts, exec)?;
    for w in &corpus.warnings {
        eprintln!("warning: {w}");
    }
    let k = corpus.manifest.classes.len();
    if clf.classes() != k {
        return Err(Error::Data(format!(
            "model has {} classes, corpus has {k}",
            clf.classes()
        ))
        .into());
    }
    if a.positive_class >= k {
        return Err(Failure::new(
            EXIT_USAGE,
            format!("--positive-class {} out of range", a.positive_class),
        ));
    }
    let indices: Vec<usize> = match a.subset {
        Subset::Val => corpus.split.val.clone(),
        Subset::Train => corpus.split.train.clone(),
        Subset::All => (0..corpus.patches.len()).collect(),
    };
    let probs = exec
        .map(&indices, |&i| clf.probabilities(&corpus.patches[i].image))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let actual: Vec<usize> = indices.iter().map(|&i| corpus.patches[i].label).collect();
    let predicted: Vec<usize> = probs.iter().map(|p| argmax(p)).collect();
    let cm = confusion_matrix(&predicted, &actual, k)?;
    let recall = write_confusion(&a.out, &cm)?;

    let mut orientations = Vec::new();
    if k == 2 {
        for pos in 0..2 {
            let scored: Vec<ScoredSample> = probs
                .iter()
                .zip(&actual)
                .map(|(p, &y)| ScoredSample::new(p[pos], y == pos))
                .collect();
            let roc = roc_curve(&scored)?;
            if pos == a.positive_class {
                write_text(&a.out.join(ROC_FILE), &roc.points_csv())?;
            }
            orientations.push(Orientation {
                positive_class: pos,
                class_name: corpus.manifest.classes[pos].clone(),
                summary: roc.summary(),
            });
        }
        print_orientations(&orientations);
    }
    let report = EvalReport {
        model: Some(model.arch().to_string()),
        classes: corpus.manifest.classes.clone(),
        subset: a.subset,
        samples: indices.len(),
        accuracy: cm.accuracy(),
        positive_class: a.positive_class,
        orientations,
        per_class_recall: recall,
    };
    write_json(&a.out.join(REPORT_FILE), &report)?;
    println!(
        "accuracy {:.4} on {} samples",
        report.accuracy, report.samples
    );
    Ok(())
}

/// Parses `score,label` lines; a non-numeric first line is a header.
pub fn parse_scores_csv(text: &str) -> Result<Vec<ScoredSample>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut cells = line.split(',').map(str::trim);
        let (score, label) = (cells.next().unwrap_or(""), cells.next().unwrap_or(""));
        match (score.parse::<f64>(), label.parse::<f64>()) {
            (Ok(s), Ok(l)) => out.push(ScoredSample::new(s, l != 0.0)),
            _ if n == 0 => continue,
            _ => {
                return Err(Error::Data(format!(
                    "line {}: expected `score,label`, got {line:?}",
                    n + 1
                )))
            }
        }
    }
    Ok(out)
}

fn eval_scores(a: &EvalArgs, path: &Path) -> CliResult<()> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let scored = parse_scores_csv(&text)?;
    let roc: RocAnalysis = roc_curve(&scored)?;
    write_text(&a.out.join(ROC_FILE), &roc.points_csv())?;
    let actual: Vec<usize> = scored.iter().map(|s| usize::from(!s.positive)).collect();
    let predicted: Vec<usize> = scored
        .iter()
        .map(|s| usize::from(s.score < roc.best_threshold))
        .collect();
    let cm = confusion_matrix(&predicted, &actual, 2)?;
    let recall = write_confusion(&a.out, &cm)?;
    let orientations = vec![Orientation {
        positive_class: 0,
        class_name: "positive".into(),
        summary: roc.summary(),
    }];
    print_orientations(&orientations);
    let report = EvalReport {
        model: None,
        classes: vec!["positive".into(), "negative".into()],
        subset: Subset::All,
        samples: scored.len(),
        accuracy: cm.accuracy(),
        positive_class: 0,
        orientations,
        per_class_recall: recall,
    };
    write_json(&a.out.join(REPORT_FILE), &report)?;
    Ok(())
}

fn cmd_detect(a: &DetectArgs) -> CliResult<()> {
    let img = read_image(&a.image)?;
    let gate_model = read_model(&a.head2)?;
    let extractor = read_extractor(a.extractor.as_ref())?;
    let gate = classifier(&gate_model, extractor.as_ref())?;
    let t = &a.tiles;
    let mask = detect_skin(&img, &gate, t.threshold, t.window, t.stride, Exec::Parallel)?;
    render_mask(&img, &mask)?.write_pnm(a.out.join(MASK_FILE))?;
    write_text(&a.out.join(TILES_FILE), &mask.tiles_csv())?;
    let summary = json!({
        "tiles": mask.grid.len(),
        "rows": mask.grid.rows(),
        "cols": mask.grid.cols(),
        "skin_tiles": mask.skin_count(),
        "threshold": mask.threshold,
    });
    write_json(&a.out.join(REPORT_FILE), &summary)?;
    println!(
        "{} of {} tiles are skin",
        mask.skin_count(),
        mask.grid.len()
    );
    Ok(())
}

fn cmd_diagnose(a: &DiagnoseArgs) -> CliResult<()> {
    let img = read_image(&a.image)?;
    let gate_model = read_model(&a.head2)?;
    let lesion_model = read_model(&a.head7)?;
    let extractor = read_extractor(a.extractor.as_ref())?;
    let gate = classifier(&gate_model, extractor.as_ref())?;
    let lesion = classifier(&lesion_model, extractor.as_ref())?;
    let t = &a.tiles;
    let (report, mask) = diagnose(
        &img,
        &gate,
        &lesion,
        t.threshold,
        t.window,
        t.stride,
        Exec::Parallel,
    )?;
    write_text(&a.out.join(REPORT_FILE), &report.to_json()?)?;
    write_text(&a.out.join(HISTOGRAM_FILE), &report.histogram_csv())?;
    write_text(&a.out.join(TILES_FILE), &mask.tiles_csv())?;
    render_mask(&img, &mask)?.write_pnm(a.out.join(MASK_FILE))?;
    if report.empty {
        println!("no skin tiles found; report is empty");
    } else {
        println!("{}", report.format_row());
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct GradcheckReport {
    arch: ArchId,
    passed: bool,
    rows: Vec<CheckRow>,
}

/// Seeded uniform input in `[0, 1)` shaped for `model`.
pub fn gradcheck_input(model: &Model, seed: u64) -> Result<Tensor> {
    let mut rng = Rng::new(derive_seed(seed, SEED_GRADCHECK_INPUT));
    let shape = model.input_shape().to_vec();
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.next_f64()).collect())
}

fn cmd_gradcheck(a: &GradcheckArgs) -> CliResult<()> {
    let archs = match a.arch {
        Some(ArchId::Vgg16Headless) => {
            return Err(Failure::new(
                EXIT_USAGE,
                "gradcheck covers the classifiers only",
            ));
        }
        Some(arch) => vec![arch],
        None => vec![
            ArchId::TinyCnn,
            ArchId::ClassifierHead2,
            ArchId::ClassifierHead7,
        ],
    };
    let cfg = CheckConfig {
        epsilon: a.epsilon,
        tolerance: a.tolerance,
        samples_per_tensor: a.samples_per_tensor,
        seed: a.seed,
        corrupt: a.corrupt,
    };
    let mut reports = Vec::new();
    for arch in archs {
        let model = build_initialized(arch, a.seed)?;
        let input = gradcheck_input(&model, a.seed)?;
        let rows = check_model(&model, &input, 0, &cfg)?;
        println!("{arch}");
        for r in &rows {
            println!(
                "  {:<36} {:<10} {:>11.3e} {:>6}  {}",
                r.target,
                r.kind,
                r.max_rel_error,
                r.checked,
                if r.passed { "PASS" } else { "FAIL" }
            );
        }
        reports.push(GradcheckReport {
            arch,
            passed: rows.iter().all(|r| r.passed),
            rows,
        });
    }
    write_json(&a.out.join(REPORT_FILE), &reports)?;
    let failed: Vec<String> = reports
        .iter()
        .filter(|r| !r.passed)
        .map(|r| r.arch.to_string())
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::new(
            EXIT_VALIDATION,
            format!("gradient check failed for {}", failed.join(", ")),
        ))
    }
}

#[derive(Debug, Serialize)]
struct TransformEntry {
    file: String,
    #[serde(flatten)]
    draw: crate::augment::AugmentDraw,
}

#[derive(Debug, Serialize)]
struct TransformLog {
    source: PathBuf,
    interpolation: Interpolation,
    fill: f64,
    config: AugmentConfig,
    transforms: Vec<TransformEntry>,
}

/// Output name of the `i`-th augmented image.
pub fn augment_file_name(i: usize) -> String {
    format!("aug_{i:05}.ppm")
}

fn cmd_augment(a: &AugmentArgs) -> CliResult<()> {
    let img = read_image(&a.input)?;
    let (h, w) = (img.height(), img.width());
    let cfg = AugmentConfig {
        theta: ParamRange::symmetric(a.rotation),
        tx: ParamRange::symmetric(a.shift_rows.unwrap_or(0.1 * h as f64)),
        ty: ParamRange::symmetric(a.shift_cols.unwrap_or(0.1 * w as f64)),
        shear: ParamRange::symmetric(a.shear),
        zoom: ParamRange::new(1.0 - a.zoom, 1.0 + a.zoom),
        horizontal_flip: a.flip,
        height: h,
        width: w,
    };
    cfg.validate()?;
    if !(0.0..=1.0).contains(&a.fill) {
        return Err(Failure::new(
            EXIT_USAGE,
            format!("--fill {} outside [0, 1]", a.fill),
        ));
    }
    let interpolation = match a.interpolation {
        InterpolationArg::Nearest => Interpolation::Nearest,
        InterpolationArg::Bilinear => Interpolation::Bilinear,
    };
    let mut transforms = Vec::with_capacity(a.count);
    for i in 0..a.count {
        let mut rng = Rng::new(derive_seed(a.seed, i as u64));
        let draw = sample_augmentation(&cfg, &mut rng)?;
        let file = augment_file_name(i);
        draw.apply(&img, interpolation, a.fill)?
            .write_pnm(a.out.join(&file))?;
        transforms.push(TransformEntry { file, draw });
    }
    let log = TransformLog {
        source: a.input.clone(),
        interpolation,
        fill: a.fill,
        config: cfg,
        transforms,
    };
    write_json(&a.out.join(TRANSFORMS_FILE), &log)?;
    println!("wrote {} augmented images", a.count);
    Ok(())
}
