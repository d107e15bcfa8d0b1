//! Mean-cosine evaluation and nearest-neighbour captioning.

use serde::{Deserialize, Serialize};

use crate::dataio::{FeatureMatrix, PromptRecord};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm, Mat};
use crate::vocab::Vocabulary;

/// Number of vocabulary words appended to a retrieved caption.
pub const CAPTION_WORDS: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mean_cosine: f64,
    pub per_sample: Vec<f64>,
    pub n: usize,
}

pub fn evaluate(pred: &Mat, target: &Mat) -> Result<EvalReport> {
    if (pred.rows, pred.cols) != (target.rows, target.cols) {
        return Err(Error::Shape(format!(
            "predictions are {}x{}, targets {}x{}",
            pred.rows, pred.cols, target.rows, target.cols
        )));
    }
    let mut per_sample = Vec::with_capacity(pred.rows);
    for i in 0..pred.rows {
        let (p, t) = (pred.row(i), target.row(i));
        let (np, nt) = (norm(p), norm(t));
        if np == 0.0 {
            return Err(Error::Numeric(format!("prediction row {i} has zero norm")));
        }
        if nt == 0.0 {
            return Err(Error::Numeric(format!("target row {i} has zero norm")));
        }
        per_sample.push((dot(p, t) / (np * nt)).clamp(-1.0, 1.0));
    }
    let n = per_sample.len();
    let mean_cosine = if n == 0 {
        0.0
    } else {
        per_sample.iter().sum::<f64>() / n as f64
    };
    Ok(EvalReport {
        mean_cosine,
        per_sample,
        n,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaptionResult {
    pub retrieved_id: u64,
    pub retrieved_prompt: String,
    pub appended_words: Vec<String>,
    pub neighbor_similarity: f64,
    /// Retrieved prompt followed by the appended words.
    pub caption: String,
}

/// Row index of the most cosine-similar database row (lowest index on ties)
/// and its similarity.
pub fn nearest_neighbor(query: &[f64], db: &FeatureMatrix) -> Result<(usize, f64)> {
    if db.rows() == 0 {
        return Err(Error::Invalid("caption database is empty".into()));
    }
    if query.len() != db.cols() {
        return Err(Error::Shape(format!(
            "query embedding has length {}, database rows have {}",
            query.len(),
            db.cols()
        )));
    }
    let nq = norm(query);
    if nq == 0.0 {
        return Err(Error::Numeric("query embedding has zero norm".into()));
    }
    let mut best: Option<(usize, f64)> = None;
    for i in 0..db.rows() {
        let row = db.row_f64(i);
        let nr = norm(&row);
        if nr == 0.0 {
            return Err(Error::Numeric(format!("database row {i} has zero norm")));
        }
        let sim = dot(query, &row) / (nq * nr);
        if best.is_none_or(|(_, b)| sim > b) {
            best = Some((i, sim));
        }
    }
    Ok(best.expect("database is non-empty"))
}

/// Indices of the `k` largest probabilities, vocabulary order on ties.
pub fn top_words(probs: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]));
    order.truncate(k);
    order
}

pub fn caption(
    query: &[f64],
    probs: &[f64],
    db: &FeatureMatrix,
    prompts: &[PromptRecord],
    vocab: &Vocabulary,
) -> Result<CaptionResult> {
    if prompts.len() != db.rows() {
        return Err(Error::Shape(format!(
            "{} prompts for {} database rows",
            prompts.len(),
            db.rows()
        )));
    }
    if probs.len() != vocab.len() {
        return Err(Error::Shape(format!(
            "{} probabilities for a vocabulary of {}",
            probs.len(),
            vocab.len()
        )));
    }
    let (row, sim) = nearest_neighbor(query, db)?;
    let prompt = &prompts[row];
    if prompt.id != db.row_ids()[row] {
        return Err(Error::Data(format!(
            "database row {row} has id {} but prompt {row} has id {}",
            db.row_ids()[row],
            prompt.id
        )));
    }
    let appended_words: Vec<String> = top_words(probs, CAPTION_WORDS)
        .into_iter()
        .map(|j| vocab.tokens()[j].clone())
        .collect();
    let mut caption = prompt.text.clone();
    for w in &appended_words {
        caption.push_str(", ");
        caption.push_str(w);
    }
    Ok(CaptionResult {
        retrieved_id: prompt.id,
        retrieved_prompt: prompt.text.clone(),
        appended_words,
        neighbor_similarity: sim,
        caption,
    })
}
