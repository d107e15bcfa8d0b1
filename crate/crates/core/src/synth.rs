//! Synthetic fixtures with a known feature-to-embedding map.
//!
//! Features are standard normal, targets are `normalize(A x + sigma_i * eta)`
//! for a fixed random map `A`, and vocabulary labels come from thresholded
//! random projections of the clean embedding `A x` so every head wiring can
//! learn them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataio::{FeatureMatrix, PromptRecord};
use crate::error::{Error, Result};
use crate::linalg::{norm, Mat};
use crate::vocab::LabelMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n: usize,
    pub d: usize,
    pub e: usize,
    pub m: usize,
    /// Per-sample noise magnitude; length `n`.
    pub noise: Vec<f64>,
    /// Mean offset of the target-domain pool from [`generate_pool`].
    pub shift: Option<f64>,
    pub seed: u64,
}

impl SynthSpec {
    pub fn noiseless(n: usize, d: usize, e: usize, m: usize, seed: u64) -> Self {
        SynthSpec {
            n,
            d,
            e,
            m,
            noise: vec![0.0; n],
            shift: None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 || self.e == 0 || self.m == 0 {
            return Err(Error::Invalid(format!(
                "synthetic dimensions must be >= 1 (n={}, d={}, e={}, m={})",
                self.n, self.d, self.e, self.m
            )));
        }
        if self.noise.len() != self.n {
            return Err(Error::Invalid(format!(
                "{} noise levels for {} samples",
                self.noise.len(),
                self.n
            )));
        }
        if self.noise.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(Error::Invalid("noise levels must be finite and >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SynthData {
    pub features: FeatureMatrix,
    pub targets: FeatureMatrix,
    pub labels: LabelMatrix,
    pub noise_levels: Vec<f64>,
    /// The ground-truth `e x d` map.
    pub map: Mat,
    /// Prompts made of the active synthetic vocabulary words.
    pub prompts: Vec<PromptRecord>,
    pub words: Vec<String>,
}

/// Alphabetic, stopword-free name for synthetic vocabulary word `j`.
pub fn synth_word(j: usize) -> String {
    let mut letters = Vec::new();
    let mut k = j + 1;
    while k > 0 {
        k -= 1;
        letters.push(b'a' + (k % 26) as u8);
        k /= 26;
    }
    letters.reverse();
    format!("tok{}", String::from_utf8(letters).unwrap())
}

fn normal_vec(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> Vec<f64> {
    (0..len)
        .map(|_| rng.sample::<f64, _>(StandardNormal) * scale)
        .collect()
}

struct Maps {
    a: Mat,
    b: Mat,
}

fn draw_maps(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Maps {
    let a = Mat {
        rows: spec.e,
        cols: spec.d,
        data: normal_vec(rng, spec.e * spec.d, 1.0 / (spec.d as f64).sqrt()),
    };
    let b = Mat {
        rows: spec.m,
        cols: spec.e,
        data: normal_vec(rng, spec.m * spec.e, 1.0),
    };
    Maps { a, b }
}

fn apply(m: &Mat, x: &[f64]) -> Vec<f64> {
    (0..m.rows).map(|i| crate::linalg::dot(m.row(i), x)).collect()
}

pub fn generate(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let maps = draw_maps(spec, &mut rng);
    let words: Vec<String> = (0..spec.m).map(synth_word).collect();

    let mut features = Vec::with_capacity(spec.n * spec.d);
    let mut targets = Vec::with_capacity(spec.n * spec.e);
    let mut labels = LabelMatrix::zeros(spec.n, spec.m);
    let mut prompts = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let x = normal_vec(&mut rng, spec.d, 1.0);
        let eta = normal_vec(&mut rng, spec.e, 1.0);
        let clean = apply(&maps.a, &x);
        let mut y: Vec<f64> = clean
            .iter()
            .zip(&eta)
            .map(|(c, n)| c + spec.noise[i] * n)
            .collect();
        let ny = norm(&y);
        if ny == 0.0 {
            return Err(Error::Numeric(format!("synthetic target {i} has zero norm")));
        }
        y.iter_mut().for_each(|v| *v /= ny);

        let mut active = Vec::new();
        for (j, score) in apply(&maps.b, &clean).into_iter().enumerate() {
            if score > 0.0 {
                labels.set(i, j, true);
                active.push(words[j].as_str());
            }
        }
        prompts.push(PromptRecord::new(i as u64, active.join(" ")));
        features.extend(x.iter().map(|&v| v as f32));
        targets.extend(y.iter().map(|&v| v as f32));
    }
    Ok(SynthData {
        features: FeatureMatrix::with_sequential_ids(spec.n, spec.d, features)?,
        targets: FeatureMatrix::with_sequential_ids(spec.n, spec.e, targets)?,
        labels,
        noise_levels: spec.noise.clone(),
        map: maps.a,
        prompts,
        words,
    })
}

/// Unlabeled target-domain features: `p` rows drawn around `spec.shift`,
/// with ids continuing after the training ids.
pub fn generate_pool(spec: &SynthSpec, p: usize) -> Result<FeatureMatrix> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(7);
    let shift = spec.shift.unwrap_or(0.0);
    let data: Vec<f32> = (0..p * spec.d)
        .map(|_| (rng.sample::<f64, _>(StandardNormal) + shift) as f32)
        .collect();
    let ids = (spec.n as u64..(spec.n + p) as u64).collect();
    FeatureMatrix::new(p, spec.d, data, ids)
}

/// Clean embedding `normalize(A x)` of each row under the generating map.
pub fn clean_targets(data: &SynthData, features: &FeatureMatrix) -> Vec<Vec<f64>> {
    (0..features.rows())
        .map(|i| {
            let mut y = apply(&data.map, &features.row_f64(i));
            let ny = norm(&y);
            y.iter_mut().for_each(|v| *v /= ny);
            y
        })
        .collect()
}
