//! Combiners that merge per-model embedding predictions into one matrix.

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::registry::Registry;

pub trait EnsembleCombiner {
    fn name(&self) -> &'static str;

    fn combine(&self, per_model: &[Mat]) -> Result<Mat>;
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EnsembleParams {
    /// Per-model weights for `weighted`; uniform when absent.
    pub weights: Option<Vec<f64>>,
}

fn check_shapes(per_model: &[Mat]) -> Result<(usize, usize)> {
    let first = per_model
        .first()
        .ok_or_else(|| Error::Invalid("ensemble needs at least one matrix".into()))?;
    for (k, m) in per_model.iter().enumerate() {
        if (m.rows, m.cols) != (first.rows, first.cols) {
            return Err(Error::Shape(format!(
                "model {k} predicts {}x{}, model 0 predicts {}x{}",
                m.rows, m.cols, first.rows, first.cols
            )));
        }
    }
    Ok((first.rows, first.cols))
}

/// Elementwise median; an even count averages the two middle values.
pub struct Median;

impl EnsembleCombiner for Median {
    fn name(&self) -> &'static str {
        "median"
    }

    fn combine(&self, per_model: &[Mat]) -> Result<Mat> {
        let (rows, cols) = check_shapes(per_model)?;
        let k = per_model.len();
        let mut out = Mat::zeros(rows, cols);
        let mut cell = vec![0.0; k];
        for idx in 0..rows * cols {
            for (c, m) in cell.iter_mut().zip(per_model) {
                *c = m.data[idx];
            }
            cell.sort_by(f64::total_cmp);
            out.data[idx] = if k % 2 == 1 {
                cell[k / 2]
            } else {
                0.5 * (cell[k / 2 - 1] + cell[k / 2])
            };
        }
        Ok(out)
    }
}

/// Weighted mean with weights normalised to sum to one.
pub struct WeightedAverage {
    pub weights: Option<Vec<f64>>,
}

impl EnsembleCombiner for WeightedAverage {
    fn name(&self) -> &'static str {
        "weighted"
    }

    fn combine(&self, per_model: &[Mat]) -> Result<Mat> {
        let (rows, cols) = check_shapes(per_model)?;
        let weights = match &self.weights {
            Some(w) => w.clone(),
            None => vec![1.0; per_model.len()],
        };
        if weights.len() != per_model.len() {
            return Err(Error::Invalid(format!(
                "{} weights for {} models",
                weights.len(),
                per_model.len()
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::Invalid("ensemble weights must be finite and >= 0".into()));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Invalid("ensemble weights must not all be zero".into()));
        }
        let mut out = Mat::zeros(rows, cols);
        for (m, w) in per_model.iter().zip(&weights) {
            if *w == 0.0 {
                continue;
            }
            let w = w / total;
            for (o, v) in out.data.iter_mut().zip(&m.data) {
                *o += w * v;
            }
        }
        Ok(out)
    }
}

pub fn ensemble_registry() -> Registry<dyn EnsembleCombiner, EnsembleParams> {
    let mut reg: Registry<dyn EnsembleCombiner, EnsembleParams> = Registry::new("ensemble mode");
    reg.register("median", |_| Ok(Box::new(Median)))
        .register("weighted", |p| {
            Ok(Box::new(WeightedAverage {
                weights: p.weights.clone(),
            }))
        });
    reg
}

pub fn combine_ensemble(per_model: &[Mat], mode: &dyn EnsembleCombiner) -> Result<Mat> {
    mode.combine(per_model)
}
