//! Mini-batch Adam training over staged sample pools.
//!
//! Vanilla training is a single stage whose pool is the full training set.
//! Curriculum training reuses the same loop with growing pools, so a
//! curriculum whose first pool already covers everything replays the vanilla
//! trajectory exactly.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{HeadConfig, HeadParams, JointHeadModel};
use crate::dataio::FeatureMatrix;
use crate::error::{Error, Result};
use crate::linalg::cosine;
use crate::vocab::LabelMatrix;

/// Row-aligned training data in `f64`.
#[derive(Clone, Debug)]
pub struct TrainingSet {
    pub ids: Vec<u64>,
    pub features: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
    pub labels: Vec<Vec<f64>>,
}

impl TrainingSet {
    pub fn new(features: &FeatureMatrix, targets: &FeatureMatrix, labels: &LabelMatrix) -> Result<Self> {
        let n = features.rows();
        if targets.rows() != n || labels.rows() != n {
            return Err(Error::Shape(format!(
                "features have {n} rows, targets {}, labels {}",
                targets.rows(),
                labels.rows()
            )));
        }
        if features.row_ids() != targets.row_ids() {
            return Err(Error::Data(
                "feature and target matrices list different row ids".into(),
            ));
        }
        Ok(TrainingSet {
            ids: features.row_ids().to_vec(),
            features: (0..n).map(|i| features.row_f64(i)).collect(),
            targets: (0..n).map(|i| targets.row_f64(i)).collect(),
            labels: (0..n).map(|i| labels.row_f64(i)).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    fn check_against(&self, config: &HeadConfig) -> Result<()> {
        let d = &config.dims;
        let bad = |what: &str, got: usize, want: usize| {
            Error::Shape(format!("{what} have width {got}, model expects {want}"))
        };
        if let Some(x) = self.features.first() {
            if x.len() != d.feature_dim {
                return Err(bad("features", x.len(), d.feature_dim));
            }
            if self.targets[0].len() != d.embed_dim {
                return Err(bad("targets", self.targets[0].len(), d.embed_dim));
            }
            if self.labels[0].len() != d.vocab_size {
                return Err(bad("labels", self.labels[0].len(), d.vocab_size));
            }
        }
        Ok(())
    }
}

/// A block of optimizer steps drawing batches from `pool` (row positions).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage {
    pub pool: Vec<usize>,
    pub steps: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Mean per-sample training loss over each epoch-length block of steps.
    pub epoch_loss: Vec<f64>,
    /// Cosine similarity of every training sample after each epoch, from a
    /// no-update evaluation pass. Indexed `[epoch][row]`.
    pub similarities: Vec<Vec<f64>>,
    pub steps: usize,
}

pub fn steps_per_epoch(n: usize, batch_size: usize) -> usize {
    n.div_ceil(batch_size)
}

/// Yields shuffled passes over the active pool; a pass continues across a
/// stage boundary when the pool is unchanged.
struct BatchSampler {
    rng: ChaCha8Rng,
    pool: Vec<usize>,
    order: Vec<usize>,
    cursor: usize,
    batch_size: usize,
}

impl BatchSampler {
    fn new(seed: u64, batch_size: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        BatchSampler {
            rng,
            pool: Vec::new(),
            order: Vec::new(),
            cursor: 0,
            batch_size,
        }
    }

    fn set_pool(&mut self, pool: &[usize]) {
        if self.pool != pool {
            self.pool = pool.to_vec();
            self.order.clear();
            self.cursor = 0;
        }
    }

    fn next_batch(&mut self) -> &[usize] {
        if self.cursor >= self.order.len() {
            self.order = self.pool.clone();
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let end = (self.cursor + self.batch_size).min(self.order.len());
        let batch = &self.order[self.cursor..end];
        self.cursor = end;
        batch
    }
}

/// Per-sample cosine similarity of the current model on every training row.
pub fn evaluate_similarities(model: &JointHeadModel, data: &TrainingSet) -> Result<Vec<f64>> {
    data.features
        .par_iter()
        .zip(&data.targets)
        .enumerate()
        .map(|(i, (x, t))| {
            let out = model.forward(x)?;
            cosine(&out.embedding, t).ok_or_else(|| {
                Error::Numeric(format!(
                    "zero-norm embedding for training row {i} (id {})",
                    data.ids[i]
                ))
            })
        })
        .collect()
}

/// One optimizer step on the mean gradient of `batch`. Returns the summed
/// per-sample loss.
fn step(model: &mut JointHeadModel, data: &TrainingSet, batch: &[usize]) -> Result<f64> {
    let per_sample: Vec<_> = batch
        .par_iter()
        .map(|&i| model.backward(&data.features[i], &data.targets[i], &data.labels[i]))
        .collect::<Result<_>>()?;
    // Fixed left-to-right reduction keeps results independent of thread count.
    let mut total = HeadParams::zeros_like(&model.params);
    let mut loss = 0.0;
    for g in &per_sample {
        total.add_assign(&g.grads);
        loss += g.loss.total;
    }
    total.scale(1.0 / batch.len() as f64);
    let lr = model.config.learning_rate;
    model.optimizer.update(&mut model.params, &total, lr);
    Ok(loss)
}

/// Runs `stages` in order, calling `on_batch(stage, batch)` before each step.
pub fn run_stages(
    model: &mut JointHeadModel,
    data: &TrainingSet,
    stages: &[Stage],
    mut on_batch: impl FnMut(usize, &[usize]),
) -> Result<TrainHistory> {
    model.config.validate()?;
    data.check_against(&model.config)?;
    if data.is_empty() {
        return Err(Error::Invalid("training set is empty".into()));
    }
    let epoch_len = steps_per_epoch(data.len(), model.config.batch_size);
    let mut sampler = BatchSampler::new(model.config.seed, model.config.batch_size);
    let mut history = TrainHistory::default();
    let (mut block_loss, mut block_samples) = (0.0, 0usize);

    for (s, stage) in stages.iter().enumerate() {
        if stage.steps > 0 && stage.pool.is_empty() {
            return Err(Error::Invalid(format!("stage {} has an empty sample pool", s + 1)));
        }
        if let Some(&bad) = stage.pool.iter().find(|&&i| i >= data.len()) {
            return Err(Error::Invalid(format!("stage {} references row {bad}", s + 1)));
        }
        sampler.set_pool(&stage.pool);
        for _ in 0..stage.steps {
            let batch = sampler.next_batch().to_vec();
            on_batch(s, &batch);
            let loss = step(model, data, &batch).map_err(|e| {
                Error::Numeric(format!(
                    "step {} (epoch {}, stage {}): {e}",
                    history.steps + 1,
                    history.steps / epoch_len + 1,
                    s + 1
                ))
            })?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "loss became {loss} at step {} (epoch {}, batch of {} rows starting with id {})",
                    history.steps + 1,
                    history.steps / epoch_len + 1,
                    batch.len(),
                    data.ids[batch[0]]
                )));
            }
            block_loss += loss;
            block_samples += batch.len();
            history.steps += 1;
            if history.steps % epoch_len == 0 {
                history.epoch_loss.push(block_loss / block_samples as f64);
                history.similarities.push(evaluate_similarities(model, data)?);
                block_loss = 0.0;
                block_samples = 0;
            }
        }
    }
    if block_samples > 0 {
        history.epoch_loss.push(block_loss / block_samples as f64);
        history.similarities.push(evaluate_similarities(model, data)?);
    }
    Ok(history)
}

/// Vanilla training: `epochs` shuffled passes over the whole set.
pub fn train(
    mut model: JointHeadModel,
    features: &FeatureMatrix,
    targets: &FeatureMatrix,
    labels: &LabelMatrix,
) -> Result<(JointHeadModel, TrainHistory)> {
    let data = TrainingSet::new(features, targets, labels)?;
    let history = train_on(&mut model, &data)?;
    Ok((model, history))
}

pub fn train_on(model: &mut JointHeadModel, data: &TrainingSet) -> Result<TrainHistory> {
    let steps = model.config.epochs * steps_per_epoch(data.len(), model.config.batch_size);
    let stage = Stage {
        pool: (0..data.len()).collect(),
        steps,
    };
    run_stages(model, data, &[stage], |_, _| {})
}
