//! Heuristics that cut difficulty-ranked samples into easy/medium/hard chunks.

use serde::{Deserialize, Serialize};

use super::DifficultyScores;
use crate::error::{Error, Result};
use crate::registry::Registry;

/// Default easy threshold: the 40th percentile, so roughly the top 60% is easy.
pub const DEFAULT_EASY_PERCENTILE: f64 = 40.0;
/// Default hard threshold: the 10th percentile.
pub const DEFAULT_HARD_PERCENTILE: f64 = 10.0;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunks {
    pub easy: Vec<u64>,
    pub medium: Vec<u64>,
    pub hard: Vec<u64>,
}

/// Which heuristic produced a schedule, with its resolved parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum HeuristicSpec {
    EqualThirds,
    Thresholds { tau_easy: f64, tau_hard: f64 },
}

pub trait SplitHeuristic {
    fn name(&self) -> &'static str;

    fn split(&self, scores: &DifficultyScores) -> Result<(Chunks, HeuristicSpec)>;
}

/// Parameters the CLI may pass to a heuristic constructor.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SplitParams {
    pub tau_easy: Option<f64>,
    pub tau_hard: Option<f64>,
}

/// Indices sorted easiest first: descending score, ascending id on ties.
pub(crate) fn ranked(scores: &DifficultyScores) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.per_sample.len()).collect();
    order.sort_by(|&a, &b| {
        scores.per_sample[b]
            .total_cmp(&scores.per_sample[a])
            .then(scores.ids[a].cmp(&scores.ids[b]))
    });
    order
}

pub struct EqualThirds;

impl SplitHeuristic for EqualThirds {
    fn name(&self) -> &'static str {
        "equal"
    }

    fn split(&self, scores: &DifficultyScores) -> Result<(Chunks, HeuristicSpec)> {
        let n = scores.per_sample.len();
        if n < 3 {
            return Err(Error::Invalid(format!(
                "equal-thirds split needs at least 3 samples, got {n}"
            )));
        }
        let easy_len = n.div_ceil(3);
        let medium_len = (n - easy_len).div_ceil(2);
        let ids: Vec<u64> = ranked(scores).into_iter().map(|i| scores.ids[i]).collect();
        let chunks = Chunks {
            easy: ids[..easy_len].to_vec(),
            medium: ids[easy_len..easy_len + medium_len].to_vec(),
            hard: ids[easy_len + medium_len..].to_vec(),
        };
        Ok((chunks, HeuristicSpec::EqualThirds))
    }
}

/// Linear-interpolation percentile (`q` in `[0, 100]`) of unsorted values.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = (q / 100.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub struct Thresholds {
    pub tau_easy: Option<f64>,
    pub tau_hard: Option<f64>,
}

impl SplitHeuristic for Thresholds {
    fn name(&self) -> &'static str {
        "thresholds"
    }

    fn split(&self, scores: &DifficultyScores) -> Result<(Chunks, HeuristicSpec)> {
        if scores.per_sample.is_empty() {
            return Err(Error::Invalid("no difficulty scores to split".into()));
        }
        let tau_easy = self
            .tau_easy
            .unwrap_or_else(|| percentile(&scores.per_sample, DEFAULT_EASY_PERCENTILE));
        let tau_hard = self
            .tau_hard
            .unwrap_or_else(|| percentile(&scores.per_sample, DEFAULT_HARD_PERCENTILE));
        if !(tau_easy > tau_hard) {
            return Err(Error::Invalid(format!(
                "easy threshold {tau_easy} must exceed hard threshold {tau_hard}"
            )));
        }
        let mut chunks = Chunks::default();
        for i in ranked(scores) {
            let (id, s) = (scores.ids[i], scores.per_sample[i]);
            if s >= tau_easy {
                chunks.easy.push(id);
            } else if s < tau_hard {
                chunks.hard.push(id);
            } else {
                chunks.medium.push(id);
            }
        }
        if chunks.easy.is_empty() {
            return Err(Error::Invalid(format!(
                "no sample reaches the easy threshold {tau_easy}; training could not start"
            )));
        }
        Ok((chunks, HeuristicSpec::Thresholds { tau_easy, tau_hard }))
    }
}

pub fn split_registry() -> Registry<dyn SplitHeuristic, SplitParams> {
    let mut reg: Registry<dyn SplitHeuristic, SplitParams> = Registry::new("curriculum heuristic");
    reg.register("equal", |_| Ok(Box::new(EqualThirds)))
        .register("thresholds", |p| {
            Ok(Box::new(Thresholds {
                tau_easy: p.tau_easy,
                tau_hard: p.tau_hard,
            }))
        });
    reg
}
