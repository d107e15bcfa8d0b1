//! Two-phase curriculum: score sample difficulty with a preliminary run,
//! then retrain from scratch introducing easy, medium and hard chunks.

pub mod split;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub use split::{
    percentile, split_registry, Chunks, EqualThirds, HeuristicSpec, SplitHeuristic, SplitParams,
    Thresholds,
};

use crate::error::{Error, Result};
use crate::heads::train::{run_stages, steps_per_epoch, train_on};
use crate::heads::{HeadConfig, JointHeadModel, Stage, TrainHistory, TrainingSet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DifficultyScores {
    pub ids: Vec<u64>,
    /// Mean cosine similarity per sample; higher is easier.
    pub per_sample: Vec<f64>,
    pub epochs_used: usize,
}

/// Averages per-epoch similarities (`history[epoch][sample]`) per sample.
pub fn score_difficulty(history: &[Vec<f64>], ids: &[u64]) -> Result<DifficultyScores> {
    let Some(first) = history.first() else {
        return Err(Error::Invalid("difficulty scoring needs at least one epoch".into()));
    };
    let n = first.len();
    if let Some(e) = history.iter().position(|h| h.len() != n) {
        return Err(Error::Shape(format!(
            "epoch {e} stores {} similarities, epoch 0 stores {n}",
            history[e].len()
        )));
    }
    if ids.len() != n {
        return Err(Error::Shape(format!("{} ids for {n} samples", ids.len())));
    }
    let epochs = history.len() as f64;
    let per_sample: Vec<f64> = (0..n)
        .map(|i| history.iter().map(|h| h[i]).sum::<f64>() / epochs)
        .collect();
    if let Some(i) = per_sample.iter().position(|s| !s.is_finite()) {
        return Err(Error::Numeric(format!("difficulty score of sample {i} is not finite")));
    }
    Ok(DifficultyScores {
        ids: ids.to_vec(),
        per_sample,
        epochs_used: history.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurriculumSchedule {
    pub chunks: Chunks,
    /// Steps at which the medium and hard chunks join the pool.
    pub stage_boundaries: [usize; 2],
    pub total_steps: usize,
    pub heuristic: HeuristicSpec,
}

/// Stage boundaries at one and two thirds of the step budget.
pub fn stage_boundaries(total_steps: usize) -> Result<[usize; 2]> {
    if total_steps < 3 {
        return Err(Error::Invalid(format!(
            "a three-stage curriculum needs at least 3 steps, budget is {total_steps}"
        )));
    }
    Ok([total_steps / 3, 2 * total_steps / 3])
}

impl CurriculumSchedule {
    pub fn new(chunks: Chunks, heuristic: HeuristicSpec, total_steps: usize) -> Result<Self> {
        Ok(CurriculumSchedule {
            chunks,
            stage_boundaries: stage_boundaries(total_steps)?,
            total_steps,
            heuristic,
        })
    }

    pub fn ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.chunks
            .easy
            .iter()
            .chain(&self.chunks.medium)
            .chain(&self.chunks.hard)
            .copied()
    }

    /// Sorted row positions of the cumulative pools for stages 1-3.
    fn pools(&self, data: &TrainingSet) -> Result<[Vec<usize>; 3]> {
        let pos: HashMap<u64, usize> = data.ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
        let mut seen = vec![false; data.len()];
        let mut lookup = |ids: &[u64]| -> Result<Vec<usize>> {
            ids.iter()
                .map(|id| {
                    let p = *pos
                        .get(id)
                        .ok_or_else(|| Error::Invalid(format!("schedule id {id} is not a training id")))?;
                    if std::mem::replace(&mut seen[p], true) {
                        return Err(Error::Invalid(format!("schedule lists id {id} twice")));
                    }
                    Ok(p)
                })
                .collect()
        };
        let easy = lookup(&self.chunks.easy)?;
        let medium = lookup(&self.chunks.medium)?;
        let hard = lookup(&self.chunks.hard)?;
        if let Some(p) = seen.iter().position(|s| !s) {
            return Err(Error::Invalid(format!(
                "training id {} is missing from the schedule",
                data.ids[p]
            )));
        }
        let mut p1 = easy;
        p1.sort_unstable();
        let mut p2 = p1.clone();
        p2.extend(medium);
        p2.sort_unstable();
        let mut p3 = p2.clone();
        p3.extend(hard);
        p3.sort_unstable();
        Ok([p1, p2, p3])
    }
}

pub fn split_equal_thirds(scores: &DifficultyScores) -> Result<(Chunks, HeuristicSpec)> {
    EqualThirds.split(scores)
}

pub fn split_thresholds(
    scores: &DifficultyScores,
    tau_easy: Option<f64>,
    tau_hard: Option<f64>,
) -> Result<(Chunks, HeuristicSpec)> {
    Thresholds { tau_easy, tau_hard }.split(scores)
}

/// Phase-1 step budget for `data` under `config`.
pub fn step_budget(config: &HeadConfig, n: usize) -> usize {
    config.epochs * steps_per_epoch(n, config.batch_size)
}

/// Phase 2: re-initialises the model from `config.seed` and trains on
/// growing pools. `on_batch(stage, rows)` sees every batch.
pub fn curriculum_train_with(
    config: &HeadConfig,
    data: &TrainingSet,
    schedule: &CurriculumSchedule,
    on_batch: impl FnMut(usize, &[usize]),
) -> Result<(JointHeadModel, TrainHistory)> {
    let budget = step_budget(config, data.len());
    if schedule.total_steps != budget {
        return Err(Error::Invalid(format!(
            "schedule budget is {} steps but the training budget is {budget}",
            schedule.total_steps
        )));
    }
    let [b1, b2] = schedule.stage_boundaries;
    if !(0 < b1 && b1 < b2 && b2 < budget) {
        return Err(Error::Invalid(format!(
            "stage boundaries {b1}, {b2} do not fit a budget of {budget}"
        )));
    }
    let [p1, p2, p3] = schedule.pools(data)?;
    let stages = [
        Stage { pool: p1, steps: b1 },
        Stage { pool: p2, steps: b2 - b1 },
        Stage { pool: p3, steps: budget - b2 },
    ];
    let mut model = JointHeadModel::new(config.clone())?;
    let history = run_stages(&mut model, data, &stages, on_batch)?;
    Ok((model, history))
}

pub fn curriculum_train(
    config: &HeadConfig,
    data: &TrainingSet,
    schedule: &CurriculumSchedule,
) -> Result<(JointHeadModel, TrainHistory)> {
    curriculum_train_with(config, data, schedule, |_, _| {})
}

/// Everything produced by the two training phases.
#[derive(Clone, Debug)]
pub struct CurriculumRun {
    pub phase1_history: TrainHistory,
    pub scores: DifficultyScores,
    pub schedule: CurriculumSchedule,
    pub model: JointHeadModel,
    pub history: TrainHistory,
}

/// Phase 1 (vanilla run for `phase1_epochs`, defaulting to `config.epochs`)
/// followed by phase 2 with the same step budget.
pub fn two_phase(
    config: &HeadConfig,
    data: &TrainingSet,
    heuristic: &dyn SplitHeuristic,
    phase1_epochs: Option<usize>,
) -> Result<CurriculumRun> {
    let mut phase1_config = config.clone();
    if let Some(e) = phase1_epochs {
        phase1_config.epochs = e;
    }
    let mut scout = JointHeadModel::new(phase1_config.clone())?;
    let phase1_history = train_on(&mut scout, data)?;
    let scores = score_difficulty(&phase1_history.similarities, &data.ids)?;
    let (chunks, spec) = heuristic.split(&scores)?;
    let budget = step_budget(&phase1_config, data.len());
    let schedule = CurriculumSchedule::new(chunks, spec, budget)?;
    let (model, history) = curriculum_train(&phase1_config, data, &schedule)?;
    Ok(CurriculumRun {
        phase1_history,
        scores,
        schedule,
        model,
        history,
    })
}
