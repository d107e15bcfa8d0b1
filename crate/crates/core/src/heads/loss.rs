use crate::error::{Error, Result};
use crate::linalg::{dot, norm};

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before taking logs.
pub const PROB_EPS: f64 = 1e-7;

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// `1 - cos(pred, target)`, in `[0, 2]`.
pub fn cosine_loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    cosine_loss_grad(pred, target).map(|(l, _)| l)
}

/// Cosine loss and its gradient with respect to `pred`.
pub fn cosine_loss_grad(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if pred.len() != target.len() {
        return Err(Error::Shape(format!(
            "prediction has length {}, target {}",
            pred.len(),
            target.len()
        )));
    }
    let np = norm(pred);
    let nt = norm(target);
    if np == 0.0 {
        return Err(Error::Numeric("predicted embedding has zero norm".into()));
    }
    if nt == 0.0 {
        return Err(Error::Numeric("target embedding has zero norm".into()));
    }
    let cos = dot(pred, target) / (np * nt);
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| -(t / (np * nt) - cos * p / (np * np)))
        .collect();
    Ok((1.0 - cos, grad))
}

/// Mean binary cross-entropy over the vocabulary.
pub fn bce_loss(probs: &[f64], labels: &[f64]) -> Result<f64> {
    if probs.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} probabilities for {} labels",
            probs.len(),
            labels.len()
        )));
    }
    if probs.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = probs
        .iter()
        .zip(labels)
        .map(|(&p, &l)| {
            let p = clamp_prob(p);
            -(l * p.ln() + (1.0 - l) * (1.0 - p).ln())
        })
        .sum();
    Ok(total / probs.len() as f64)
}

/// BCE evaluated on sigmoid outputs `s`, with its gradient with respect to
/// the pre-activation logits. Clamped entries have zero gradient.
pub fn bce_from_sigmoid_grad(s: &[f64], labels: &[f64]) -> (f64, Vec<f64>) {
    let m = s.len().max(1) as f64;
    let loss = bce_loss(s, labels).expect("lengths checked by caller");
    let grad = s
        .iter()
        .zip(labels)
        .map(|(&s, &l)| {
            if (PROB_EPS..=1.0 - PROB_EPS).contains(&s) {
                (s - l) / m
            } else {
                0.0
            }
        })
        .collect();
    (loss, grad)
}

pub fn combined_loss(l1: f64, l2: f64, lambda: f64) -> f64 {
    l1 + lambda * l2
}
