//! The `promptprobe` command line.
//!
//! Hyperparameters come from built-in defaults, then an optional TOML config
//! file (`--config`, keys spelled like the flags), then flags. Every command
//! prints a JSON document on standard output.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::bundle::Bundle;
use crate::curriculum::{
    self, split_registry, CurriculumSchedule, DifficultyScores, SplitParams,
};
use crate::dakl::{ensemble_registry, DaklConfig, DaklRegressor, EnsembleParams, DAKL_KIND};
use crate::dataio::{self, FeatureMatrix, PromptRecord};
use crate::evalkit;
use crate::heads::{self, HeadConfig, HeadVariant, JointHeadModel, TrainingSet, HEADS_KIND};
use crate::linalg::Mat;
use crate::synth::{self, SynthSpec};
use crate::vocab::{self, LabelMatrix, StopwordFilter, Vocabulary};

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "PROMPTPROBE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "promptprobe", version, about = "Predict prompt embeddings from image features")]
pub struct Cli {
    #[command(flatten)]
    pub hyper: HyperFlags,

    #[command(subcommand)]
    pub command: Command,
}

/// Hyperparameter flags, accepted by every subcommand.
#[derive(Debug, Default, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct HyperFlags {
    /// TOML file with defaults for any of these flags.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Weight of the vocabulary loss.
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    #[arg(long, global = true)]
    pub vocab_size: Option<usize>,
    /// separate | class-into-embed | embed-into-class
    #[arg(long, global = true)]
    pub head_config: Option<String>,
    #[arg(long, global = true)]
    pub lr: Option<f64>,
    #[arg(long, global = true)]
    pub batch: Option<usize>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// equal | thresholds
    #[arg(long, global = true)]
    pub curriculum: Option<String>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub tau_easy: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub tau_hard: Option<f64>,
    /// Epochs of the difficulty-scoring run (defaults to --epochs).
    #[arg(long, global = true)]
    pub phase1_epochs: Option<usize>,
    #[arg(long, global = true)]
    pub gamma: Option<f64>,
    #[arg(long, global = true)]
    pub ridge: Option<f64>,
    /// Number of k-means centroids (clipped to the training set size).
    #[arg(long, global = true)]
    pub centroids: Option<usize>,
    #[arg(long, global = true)]
    pub kmeans_iters: Option<usize>,
    /// median | weighted
    #[arg(long, global = true)]
    pub ensemble: Option<String>,
    /// Comma-separated per-model weights for --ensemble weighted.
    #[arg(long, global = true, value_delimiter = ',')]
    pub weights: Option<Vec<f64>>,
    /// Run single-threaded with fixed reduction order.
    #[arg(long, global = true)]
    #[serde(default)]
    pub deterministic: bool,
}

/// Fully resolved settings.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub lambda: f64,
    pub vocab_size: usize,
    pub head_config: HeadVariant,
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub seed: u64,
    pub curriculum: String,
    pub tau_easy: Option<f64>,
    pub tau_hard: Option<f64>,
    pub phase1_epochs: Option<usize>,
    pub gamma: f64,
    pub ridge: f64,
    /// Explicit centroid count; `None` uses the default, clipped to `n`.
    pub centroids: Option<usize>,
    pub kmeans_iters: usize,
    pub ensemble: String,
    pub weights: Option<Vec<f64>>,
    pub deterministic: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let dakl = DaklConfig::default();
        RunConfig {
            lambda: 0.1,
            vocab_size: 1000,
            head_config: HeadVariant::EmbedIntoClass,
            lr: 1e-4,
            batch: 64,
            epochs: 3,
            seed: 0,
            curriculum: "equal".into(),
            tau_easy: None,
            tau_hard: None,
            phase1_epochs: None,
            gamma: dakl.gamma,
            ridge: dakl.ridge,
            centroids: None,
            kmeans_iters: dakl.kmeans_iters,
            ensemble: "median".into(),
            weights: None,
            deterministic: false,
        }
    }
}

impl RunConfig {
    /// Defaults, overridden by the config file, overridden by flags.
    pub fn resolve(flags: &HyperFlags) -> Result<Self> {
        let file: HyperFlags = match &flags.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?
            }
            None => HyperFlags::default(),
        };
        let mut c = RunConfig::default();
        for layer in [&file, flags] {
            macro_rules! take {
                ($($f:ident),*) => {$(
                    if let Some(v) = layer.$f.clone() { c.$f = v; }
                )*};
            }
            take!(lambda, vocab_size, lr, batch, epochs, seed, curriculum, gamma, ridge, kmeans_iters, ensemble);
            if let Some(h) = &layer.head_config {
                c.head_config = h.parse()?;
            }
            if layer.tau_easy.is_some() {
                c.tau_easy = layer.tau_easy;
            }
            if layer.tau_hard.is_some() {
                c.tau_hard = layer.tau_hard;
            }
            if layer.centroids.is_some() {
                c.centroids = layer.centroids;
            }
            if layer.phase1_epochs.is_some() {
                c.phase1_epochs = layer.phase1_epochs;
            }
            if layer.weights.is_some() {
                c.weights = layer.weights.clone();
            }
            c.deterministic |= layer.deterministic;
        }
        if !split_registry().contains(&c.curriculum) {
            bail!("unknown curriculum heuristic `{}` (expected equal or thresholds)", c.curriculum);
        }
        if !ensemble_registry().contains(&c.ensemble) {
            bail!("unknown ensemble mode `{}` (expected median or weighted)", c.ensemble);
        }
        Ok(c)
    }

    pub fn head_config(&self, feature_dim: usize, embed_dim: usize, vocab_size: usize) -> HeadConfig {
        let mut h = HeadConfig::new(self.head_config, feature_dim, embed_dim, vocab_size);
        h.lambda = self.lambda;
        h.learning_rate = self.lr;
        h.batch_size = self.batch;
        h.epochs = self.epochs;
        h.seed = self.seed;
        h
    }

    pub fn dakl_config(&self) -> DaklConfig {
        DaklConfig {
            gamma: self.gamma,
            ridge: self.ridge,
            num_centroids: self.centroids.unwrap_or(DaklConfig::default().num_centroids),
            kmeans_iters: self.kmeans_iters,
            kmeans_seed: self.seed,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Clean a JSON-lines prompt corpus.
    Filter {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Deterministically split corpus ids into train/val/test.
    Split {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [0.9, 0.05, 0.05])]
        fractions: Vec<f64>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Write a synthetic dataset (features, targets, prompts, pool).
    Synth(SynthArgs),
    /// Train the joint heads (vanilla regime).
    Train(TrainArgs),
    /// Two-phase curriculum training.
    Curriculum {
        #[command(flatten)]
        train: TrainArgs,
        /// Reuse precomputed difficulty scores (n x 1 matrix) instead of phase 1.
        #[arg(long)]
        scores: Option<PathBuf>,
        /// Reuse a schedule JSON instead of scoring and splitting.
        #[arg(long, conflicts_with = "scores")]
        schedule: Option<PathBuf>,
    },
    /// Fit the domain-adaptive kernel meta-regressor.
    Dakl {
        /// One feature matrix per base model; combined with --ensemble.
        #[arg(long = "train-features", required = true, num_args = 1..)]
        train_features: Vec<PathBuf>,
        #[arg(long)]
        train_targets: PathBuf,
        /// Unlabeled target-domain rows, one matrix per base model.
        #[arg(long = "pool", num_args = 1..)]
        pool: Vec<PathBuf>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Predict embeddings with a heads or kernel checkpoint.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, required = true, num_args = 1..)]
        features: Vec<PathBuf>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Mean cosine similarity between predictions and targets.
    Eval {
        /// Precomputed prediction matrix.
        #[arg(long, conflicts_with = "checkpoint", required_unless_present = "checkpoint")]
        pred: Option<PathBuf>,
        #[arg(long, requires = "features")]
        checkpoint: Option<PathBuf>,
        #[arg(long, num_args = 1..)]
        features: Vec<PathBuf>,
        #[arg(long)]
        targets: PathBuf,
    },
    /// Nearest-prompt captions with appended vocabulary words.
    Caption {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        prompts: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub targets: PathBuf,
    #[arg(long)]
    pub prompts: PathBuf,
    /// Directory receiving the checkpoint, vocabulary and history.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 16)]
    pub d: usize,
    #[arg(long, default_value_t = 8)]
    pub e: usize,
    #[arg(long, default_value_t = 32)]
    pub m: usize,
    /// Fraction of samples receiving --noise-level label noise.
    #[arg(long, default_value_t = 0.0)]
    pub noisy_fraction: f64,
    #[arg(long, default_value_t = 2.0)]
    pub noise_level: f64,
    /// Rows in the unlabeled target-domain pool.
    #[arg(long, default_value_t = 0)]
    pub pool: usize,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub shift: f64,
}

/// Parses `args` and runs the command, writing its JSON report to `out`.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args)?;
    let config = RunConfig::resolve(&cli.hyper)?;
    let threads = if config.deterministic {
        1
    } else {
        std::env::var(THREADS_ENV)
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
            .filter(|&n| n > 0)
            .unwrap_or(0)
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
    let report = pool.install(|| dispatch(&cli.command, &config))?;
    for line in report {
        writeln!(out, "{line}")?;
    }
    Ok(())
}

fn dispatch(command: &Command, config: &RunConfig) -> Result<Vec<String>> {
    match command {
        Command::Filter { input, output } => cmd_filter(input, output),
        Command::Split {
            input,
            fractions,
            output,
        } => cmd_split(input, fractions, output, config),
        Command::Synth(args) => cmd_synth(args, config),
        Command::Train(args) => cmd_train(args, config),
        Command::Curriculum {
            train,
            scores,
            schedule,
        } => cmd_curriculum(train, scores.as_deref(), schedule.as_deref(), config),
        Command::Dakl {
            train_features,
            train_targets,
            pool,
            output,
        } => cmd_dakl(train_features, train_targets, pool, output, config),
        Command::Predict {
            checkpoint,
            features,
            output,
        } => cmd_predict(checkpoint, features, output, config),
        Command::Eval {
            pred,
            checkpoint,
            features,
            targets,
        } => cmd_eval(pred.as_deref(), checkpoint.as_deref(), features, targets, config),
        Command::Caption {
            checkpoint,
            queries,
            db,
            prompts,
            vocab,
        } => cmd_caption(checkpoint, queries, db, prompts, vocab),
    }
}

fn json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string(value)?)
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut body = serde_json::to_string_pretty(value)?;
    body.push('\n');
    fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

fn load(path: &Path) -> Result<FeatureMatrix> {
    Ok(dataio::load_matrix(path)?)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn cmd_filter(input: &Path, output: &Path) -> Result<Vec<String>> {
    let records = dataio::read_corpus(input)?;
    let (kept, report) = dataio::filter_prompts(&records);
    dataio::write_corpus(&kept, output)?;
    Ok(vec![json(&report)?])
}

fn cmd_split(input: &Path, fractions: &[f64], output: &Path, config: &RunConfig) -> Result<Vec<String>> {
    let &[tr, va, te] = fractions else {
        bail!("--fractions takes exactly three values, got {}", fractions.len());
    };
    let ids: Vec<u64> = dataio::read_corpus(input)?.iter().map(|r| r.id).collect();
    let split = dataio::split_dataset(&ids, (tr, va, te), config.seed)?;
    write_json(&split, output)?;
    Ok(vec![json(&serde_json::json!({
        "train": split.train_ids.len(),
        "val": split.val_ids.len(),
        "test": split.test_ids.len(),
    }))?])
}

fn cmd_synth(args: &SynthArgs, config: &RunConfig) -> Result<Vec<String>> {
    if !(0.0..=1.0).contains(&args.noisy_fraction) {
        bail!("--noisy-fraction must lie in [0, 1]");
    }
    let noisy = (args.n as f64 * args.noisy_fraction).round() as usize;
    let mut spec = SynthSpec::noiseless(args.n, args.d, args.e, args.m, config.seed);
    // Noisy samples are spread evenly through the id range.
    for k in 0..noisy {
        spec.noise[k * args.n / noisy.max(1)] = args.noise_level;
    }
    spec.shift = Some(args.shift);
    let data = synth::generate(&spec)?;
    create_dir(&args.out_dir)?;
    let dir = &args.out_dir;
    dataio::save_matrix(&data.features, dir.join("features.fmat"))?;
    dataio::save_matrix(&data.targets, dir.join("targets.fmat"))?;
    dataio::write_corpus(&data.prompts, dir.join("prompts.jsonl"))?;
    let noise = FeatureMatrix::new(
        args.n,
        1,
        data.noise_levels.iter().map(|&v| v as f32).collect(),
        data.features.row_ids().to_vec(),
    )?;
    dataio::save_matrix(&noise, dir.join("noise.fmat"))?;
    if args.pool > 0 {
        dataio::save_matrix(&synth::generate_pool(&spec, args.pool)?, dir.join("pool.fmat"))?;
    }
    Ok(vec![json(&serde_json::json!({
        "n": args.n, "d": args.d, "e": args.e, "m": args.m,
        "noisy": noisy, "pool": args.pool,
    }))?])
}

/// Features, targets and labels aligned by row id, plus the vocabulary.
struct Prepared {
    data: TrainingSet,
    vocab: Vocabulary,
    feature_dim: usize,
    embed_dim: usize,
}

fn prepare(args: &TrainArgs, config: &RunConfig) -> Result<Prepared> {
    let features = load(&args.features)?;
    let targets = load(&args.targets)?;
    let targets = if targets.row_ids() == features.row_ids() {
        targets
    } else {
        targets
            .select(features.row_ids())
            .context("targets do not cover every feature row")?
    };
    let corpus = dataio::read_corpus(&args.prompts)?;
    let by_id: std::collections::HashMap<u64, &PromptRecord> = corpus.iter().map(|r| (r.id, r)).collect();
    let prompts: Vec<PromptRecord> = features
        .row_ids()
        .iter()
        .map(|id| {
            by_id
                .get(id)
                .map(|r| (*r).clone())
                .with_context(|| format!("no prompt with id {id}"))
        })
        .collect::<Result<_>>()?;
    let vocab = vocab::build_vocabulary_with(&prompts, config.vocab_size, &StopwordFilter::default())?;
    let labels: LabelMatrix = vocab::make_label_matrix(&prompts, &vocab);
    Ok(Prepared {
        data: TrainingSet::new(&features, &targets, &labels)?,
        vocab,
        feature_dim: features.cols(),
        embed_dim: targets.cols(),
    })
}

#[derive(Serialize)]
struct TrainSummary {
    command: &'static str,
    head_config: HeadVariant,
    samples: usize,
    steps: usize,
    final_loss: Option<f64>,
    final_mean_cosine: Option<f64>,
    checkpoint: PathBuf,
}

fn summary(
    command: &'static str,
    config: &RunConfig,
    n: usize,
    history: &heads::TrainHistory,
    checkpoint: PathBuf,
) -> TrainSummary {
    TrainSummary {
        command,
        head_config: config.head_config,
        samples: n,
        steps: history.steps,
        final_loss: history.epoch_loss.last().copied(),
        final_mean_cosine: history
            .similarities
            .last()
            .map(|s| s.iter().sum::<f64>() / s.len() as f64),
        checkpoint,
    }
}

pub fn cmd_train(args: &TrainArgs, config: &RunConfig) -> Result<Vec<String>> {
    let prep = prepare(args, config)?;
    let head = config.head_config(prep.feature_dim, prep.embed_dim, prep.vocab.len());
    let mut model = JointHeadModel::new(head)?;
    let history = heads::train::train_on(&mut model, &prep.data)?;
    create_dir(&args.out_dir)?;
    let ckpt = args.out_dir.join("model.ckpt");
    model.save(&ckpt)?;
    prep.vocab.save(args.out_dir.join("vocab.txt"))?;
    write_json(&history, &args.out_dir.join("history.json"))?;
    Ok(vec![json(&summary("train", config, prep.data.len(), &history, ckpt))?])
}

fn scores_from_matrix(m: &FeatureMatrix, epochs_used: usize) -> Result<DifficultyScores> {
    if m.cols() != 1 {
        bail!("difficulty scores must be an n x 1 matrix, got {} columns", m.cols());
    }
    Ok(DifficultyScores {
        ids: m.row_ids().to_vec(),
        per_sample: m.data().iter().map(|&v| v as f64).collect(),
        epochs_used,
    })
}

pub fn cmd_curriculum(
    args: &TrainArgs,
    scores_path: Option<&Path>,
    schedule_path: Option<&Path>,
    config: &RunConfig,
) -> Result<Vec<String>> {
    let prep = prepare(args, config)?;
    let mut head = config.head_config(prep.feature_dim, prep.embed_dim, prep.vocab.len());
    if let Some(e) = config.phase1_epochs {
        head.epochs = e;
    }
    create_dir(&args.out_dir)?;
    let budget = curriculum::step_budget(&head, prep.data.len());

    let schedule: CurriculumSchedule = if let Some(path) = schedule_path {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing schedule {}", path.display()))?
    } else {
        let scores = match scores_path {
            Some(path) => scores_from_matrix(&load(path)?, 0)?,
            None => {
                let mut scout = JointHeadModel::new(head.clone())?;
                let phase1 = heads::train::train_on(&mut scout, &prep.data)?;
                write_json(&phase1, &args.out_dir.join("phase1_history.json"))?;
                curriculum::score_difficulty(&phase1.similarities, &prep.data.ids)?
            }
        };
        let m = Mat::from_vec(scores.per_sample.len(), 1, scores.per_sample.clone())?;
        dataio::save_matrix(
            &FeatureMatrix::from_mat(&m, scores.ids.clone())?,
            args.out_dir.join("difficulty.fmat"),
        )?;
        let heuristic = split_registry().create(
            &config.curriculum,
            &SplitParams {
                tau_easy: config.tau_easy,
                tau_hard: config.tau_hard,
            },
        )?;
        let (chunks, spec) = heuristic.split(&scores)?;
        CurriculumSchedule::new(chunks, spec, budget)?
    };
    write_json(&schedule, &args.out_dir.join("schedule.json"))?;

    let (model, history) = curriculum::curriculum_train(&head, &prep.data, &schedule)?;
    let ckpt = args.out_dir.join("model.ckpt");
    model.save(&ckpt)?;
    prep.vocab.save(args.out_dir.join("vocab.txt"))?;
    write_json(&history, &args.out_dir.join("history.json"))?;
    let mut s = serde_json::to_value(summary("curriculum", config, prep.data.len(), &history, ckpt))?;
    s["chunks"] = serde_json::json!([
        schedule.chunks.easy.len(),
        schedule.chunks.medium.len(),
        schedule.chunks.hard.len()
    ]);
    s["stage_boundaries"] = serde_json::json!(schedule.stage_boundaries);
    Ok(vec![json(&s)?])
}

/// Loads one matrix per base model and merges them with the configured combiner.
fn combined(paths: &[PathBuf], config: &RunConfig) -> Result<FeatureMatrix> {
    let mats: Vec<FeatureMatrix> = paths.iter().map(|p| load(p)).collect::<Result<_>>()?;
    let first = &mats[0];
    if mats.len() == 1 {
        return Ok(first.clone());
    }
    for (p, m) in paths.iter().zip(&mats) {
        if m.row_ids() != first.row_ids() {
            bail!("{} lists different row ids than {}", p.display(), paths[0].display());
        }
    }
    let combiner = ensemble_registry().create(
        &config.ensemble,
        &EnsembleParams {
            weights: config.weights.clone(),
        },
    )?;
    let merged = combiner.combine(&mats.iter().map(FeatureMatrix::to_mat).collect::<Vec<_>>())?;
    Ok(FeatureMatrix::from_mat(&merged, first.row_ids().to_vec())?)
}

pub fn cmd_dakl(
    train_features: &[PathBuf],
    train_targets: &Path,
    pool: &[PathBuf],
    output: &Path,
    config: &RunConfig,
) -> Result<Vec<String>> {
    let features = combined(train_features, config)?;
    let targets = load(train_targets)?.select(features.row_ids())?;
    let pool_mat = if pool.is_empty() {
        Mat::zeros(0, features.cols())
    } else {
        combined(pool, config)?.to_mat()
    };
    let dakl = config.dakl_config();
    if let Some(r) = config.centroids.filter(|&r| r > features.rows()) {
        bail!("--centroids {r} exceeds the {} training samples", features.rows());
    }
    let reg = DaklRegressor::fit_samples(&features.to_mat(), &targets.to_mat(), &pool_mat, &dakl)?;
    reg.save(output)?;
    Ok(vec![json(&serde_json::json!({
        "command": "dakl",
        "centroids": reg.num_centroids,
        "reference_rows": reg.reference.rows,
        "pool": pool_mat.rows,
        "feature_dim": reg.feature_dim(),
        "embed_dim": reg.embed_dim(),
        "checkpoint": output,
    }))?])
}

enum Predictor {
    Heads(JointHeadModel),
    Kernel(DaklRegressor),
}

fn load_predictor(path: &Path) -> Result<Predictor> {
    let bundle = Bundle::load(path)?;
    Ok(match bundle.kind.as_str() {
        HEADS_KIND => Predictor::Heads(JointHeadModel::from_bundle(bundle)?),
        DAKL_KIND => Predictor::Kernel(DaklRegressor::from_bundle(bundle)?),
        other => bail!("unsupported checkpoint kind `{other}`"),
    })
}

fn predict_with(checkpoint: &Path, features: &[PathBuf], config: &RunConfig) -> Result<FeatureMatrix> {
    let predictor = load_predictor(checkpoint)?;
    let x = combined(features, config)?;
    let pred = match &predictor {
        Predictor::Heads(model) => {
            let rows: Vec<Vec<f64>> = (0..x.rows())
                .map(|i| Ok(model.forward(&x.row_f64(i))?.embedding))
                .collect::<Result<_>>()?;
            if rows.is_empty() {
                Mat::zeros(0, model.dims().embed_dim)
            } else {
                Mat::from_rows(&rows)?
            }
        }
        Predictor::Kernel(reg) => reg.predict(&x.to_mat())?,
    };
    Ok(FeatureMatrix::from_mat(&pred, x.row_ids().to_vec())?)
}

fn cmd_predict(checkpoint: &Path, features: &[PathBuf], output: &Path, config: &RunConfig) -> Result<Vec<String>> {
    let pred = predict_with(checkpoint, features, config)?;
    dataio::save_matrix(&pred, output)?;
    Ok(vec![json(&serde_json::json!({
        "command": "predict",
        "rows": pred.rows(),
        "cols": pred.cols(),
        "output": output,
    }))?])
}

pub fn cmd_eval(
    pred: Option<&Path>,
    checkpoint: Option<&Path>,
    features: &[PathBuf],
    targets: &Path,
    config: &RunConfig,
) -> Result<Vec<String>> {
    let pred = match (pred, checkpoint) {
        (Some(p), _) => load(p)?,
        (None, Some(ck)) => predict_with(ck, features, config)?,
        (None, None) => bail!("eval needs --pred or --checkpoint"),
    };
    let targets = load(targets)?;
    // Align targets to the prediction ids when they cover them; otherwise the
    // shape check in `evaluate` reports the mismatch.
    let targets = match targets.select(pred.row_ids()) {
        Ok(aligned) => aligned,
        Err(_) => targets,
    };
    let report = evalkit::evaluate(&pred.to_mat(), &targets.to_mat())?;
    Ok(vec![json(&report)?])
}

pub fn cmd_caption(
    checkpoint: &Path,
    queries: &Path,
    db_path: &Path,
    prompts: &Path,
    vocab_path: &Path,
) -> Result<Vec<String>> {
    let model = JointHeadModel::load(checkpoint)?;
    let queries = load(queries)?;
    let db = load(db_path)?;
    let corpus = dataio::read_corpus(prompts)?;
    let by_id: std::collections::HashMap<u64, &PromptRecord> = corpus.iter().map(|r| (r.id, r)).collect();
    let aligned: Vec<PromptRecord> = db
        .row_ids()
        .iter()
        .map(|id| {
            by_id
                .get(id)
                .map(|r| (*r).clone())
                .with_context(|| format!("database row id {id} has no prompt"))
        })
        .collect::<Result<_>>()?;
    let vocab = Vocabulary::load(vocab_path)?;
    if db.rows() == 0 {
        bail!("caption database {} is empty", db_path.display());
    }
    let mut lines = Vec::with_capacity(queries.rows());
    for i in 0..queries.rows() {
        let out = model.forward(&queries.row_f64(i))?;
        let result = evalkit::caption(&out.embedding, &out.probs, &db, &aligned, &vocab)?;
        let mut v = serde_json::to_value(&result)?;
        v["query_id"] = serde_json::json!(queries.row_ids()[i]);
        lines.push(json(&v)?);
    }
    Ok(lines)
}
