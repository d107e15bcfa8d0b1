//! Embedding and vocabulary heads, their joint loss, and training.

pub mod adam;
pub mod loss;
pub mod train;
pub mod wiring;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::{AdamConfig, AdamState};
pub use loss::{bce_loss, combined_loss, cosine_loss, PROB_EPS};
pub use train::{train, Stage, TrainHistory, TrainingSet};
pub use wiring::{head_registry, wiring_for, Activations, HeadWiring};

use crate::bundle::Bundle;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeadVariant {
    /// Configuration 1: independent heads.
    Separate,
    /// Configuration 2: vocabulary probabilities feed the embedding head.
    ClassIntoEmbed,
    /// Configuration 3: the vocabulary head reads the embedding.
    EmbedIntoClass,
}

impl HeadVariant {
    pub const ALL: [HeadVariant; 3] = [
        HeadVariant::Separate,
        HeadVariant::ClassIntoEmbed,
        HeadVariant::EmbedIntoClass,
    ];

    pub fn name(self) -> &'static str {
        match self {
            HeadVariant::Separate => "separate",
            HeadVariant::ClassIntoEmbed => "class-into-embed",
            HeadVariant::EmbedIntoClass => "embed-into-class",
        }
    }
}

impl fmt::Display for HeadVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for HeadVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(head_registry().create(s, &())?.variant())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadDims {
    pub feature_dim: usize,
    pub embed_dim: usize,
    pub vocab_size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub variant: HeadVariant,
    pub dims: HeadDims,
    /// Weight of the vocabulary loss.
    pub lambda: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl HeadConfig {
    pub fn new(variant: HeadVariant, feature_dim: usize, embed_dim: usize, vocab_size: usize) -> Self {
        HeadConfig {
            variant,
            dims: HeadDims {
                feature_dim,
                embed_dim,
                vocab_size,
            },
            lambda: 0.1,
            learning_rate: 1e-4,
            batch_size: 64,
            epochs: 3,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dims;
        if d.feature_dim == 0 || d.embed_dim == 0 || d.vocab_size == 0 {
            return Err(Error::Invalid(format!("head dimensions must be >= 1, got {d:?}")));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::Invalid(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Invalid(format!(
                "learning rate must be >= 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Invalid("batch size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Weights and biases of both heads; also used for gradients and moments.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadParams {
    pub w_e: Vec<f64>,
    pub b_e: Vec<f64>,
    pub w_c: Vec<f64>,
    pub b_c: Vec<f64>,
}

impl HeadParams {
    pub const NAMES: [&'static str; 4] = ["w_e", "b_e", "w_c", "b_c"];

    pub fn zeros(variant: HeadVariant, dims: &HeadDims) -> Self {
        let w = wiring_for(variant);
        HeadParams {
            w_e: vec![0.0; dims.embed_dim * w.embed_input_dim(dims)],
            b_e: vec![0.0; dims.embed_dim],
            w_c: vec![0.0; dims.vocab_size * w.class_input_dim(dims)],
            b_c: vec![0.0; dims.vocab_size],
        }
    }

    pub fn zeros_like(other: &HeadParams) -> Self {
        HeadParams {
            w_e: vec![0.0; other.w_e.len()],
            b_e: vec![0.0; other.b_e.len()],
            w_c: vec![0.0; other.w_c.len()],
            b_c: vec![0.0; other.b_c.len()],
        }
    }

    pub fn tensors(&self) -> [&Vec<f64>; 4] {
        [&self.w_e, &self.b_e, &self.w_c, &self.b_c]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [&mut self.w_e, &mut self.b_e, &mut self.w_c, &mut self.b_c]
    }

    pub fn len(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors().iter().flat_map(|t| t.iter().copied()).collect()
    }

    /// Mutable access to the `k`-th scalar in flattened order.
    pub fn flat_mut(&mut self, mut k: usize) -> &mut f64 {
        for t in self.tensors_mut() {
            if k < t.len() {
                return &mut t[k];
            }
            k -= t.len();
        }
        panic!("parameter index out of range");
    }

    pub fn add_assign(&mut self, other: &HeadParams) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            for x in t.iter_mut() {
                *x *= factor;
            }
        }
    }

    pub fn norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Tensor shapes as (rows, cols); biases are single-column.
    fn shapes(&self, variant: HeadVariant, dims: &HeadDims) -> [[usize; 2]; 4] {
        let w = wiring_for(variant);
        [
            [dims.embed_dim, w.embed_input_dim(dims)],
            [dims.embed_dim, 1],
            [dims.vocab_size, w.class_input_dim(dims)],
            [dims.vocab_size, 1],
        ]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForwardOutput {
    pub embedding: Vec<f64>,
    /// Vocabulary probabilities clamped to `[PROB_EPS, 1 - PROB_EPS]`.
    pub probs: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleLoss {
    pub cosine: f64,
    pub bce: f64,
    pub total: f64,
}

#[derive(Clone, Debug)]
pub struct SampleGradient {
    pub loss: SampleLoss,
    pub grads: HeadParams,
}

#[derive(Clone, Debug, PartialEq)]
pub struct JointHeadModel {
    pub config: HeadConfig,
    pub params: HeadParams,
    pub optimizer: AdamState,
}

impl JointHeadModel {
    /// Uniform `±1/sqrt(fan_in)` initialisation drawn from `config.seed`.
    pub fn new(config: HeadConfig) -> Result<Self> {
        config.validate()?;
        let mut params = HeadParams::zeros(config.variant, &config.dims);
        let shapes = params.shapes(config.variant, &config.dims);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let fan_in = [shapes[0][1], shapes[0][1], shapes[2][1], shapes[2][1]];
        for (t, fan) in params.tensors_mut().into_iter().zip(fan_in) {
            let bound = 1.0 / (fan as f64).sqrt();
            for v in t.iter_mut() {
                *v = rng.random_range(-bound..bound);
            }
        }
        Ok(Self::from_params(config, params))
    }

    pub fn from_params(config: HeadConfig, params: HeadParams) -> Self {
        let optimizer = AdamState::new(&params);
        JointHeadModel {
            config,
            params,
            optimizer,
        }
    }

    pub fn wiring(&self) -> &'static dyn HeadWiring {
        wiring_for(self.config.variant)
    }

    pub fn dims(&self) -> &HeadDims {
        &self.config.dims
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.config.dims.feature_dim {
            return Err(Error::Shape(format!(
                "feature vector has length {}, model expects {}",
                x.len(),
                self.config.dims.feature_dim
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("feature vector is not finite".into()));
        }
        Ok(())
    }

    pub fn activations(&self, x: &[f64]) -> Result<Activations> {
        self.check_input(x)?;
        Ok(self.wiring().forward(&self.params, &self.config.dims, x))
    }

    pub fn forward(&self, x: &[f64]) -> Result<ForwardOutput> {
        let acts = self.activations(x)?;
        Ok(ForwardOutput {
            embedding: acts.embedding,
            probs: acts.sigmoid.into_iter().map(loss::clamp_prob).collect(),
        })
    }

    /// Per-sample combined loss and its exact gradient for every parameter.
    pub fn backward(&self, x: &[f64], target: &[f64], labels: &[f64]) -> Result<SampleGradient> {
        let dims = &self.config.dims;
        if target.len() != dims.embed_dim {
            return Err(Error::Shape(format!(
                "target embedding has length {}, model expects {}",
                target.len(),
                dims.embed_dim
            )));
        }
        if labels.len() != dims.vocab_size {
            return Err(Error::Shape(format!(
                "label vector has length {}, model expects {}",
                labels.len(),
                dims.vocab_size
            )));
        }
        let acts = self.activations(x)?;
        let (cos, d_embed) = loss::cosine_loss_grad(&acts.embedding, target)?;
        let (bce, mut d_logits) = loss::bce_from_sigmoid_grad(&acts.sigmoid, labels);
        let lambda = self.config.lambda;
        for g in d_logits.iter_mut() {
            *g *= lambda;
        }
        let grads = self
            .wiring()
            .backward(&self.params, dims, x, &acts, &d_embed, &d_logits);
        let total = combined_loss(cos, bce, lambda);
        if !total.is_finite() || !grads.is_finite() {
            return Err(Error::Numeric("non-finite loss or gradient".into()));
        }
        Ok(SampleGradient {
            loss: SampleLoss {
                cosine: cos,
                bce,
                total,
            },
            grads,
        })
    }

    pub fn loss(&self, x: &[f64], target: &[f64], labels: &[f64]) -> Result<SampleLoss> {
        let out = self.forward(x)?;
        let cos = cosine_loss(&out.embedding, target)?;
        let bce = bce_loss(&out.probs, labels)?;
        Ok(SampleLoss {
            cosine: cos,
            bce,
            total: combined_loss(cos, bce, self.config.lambda),
        })
    }

    pub fn to_bundle(&self) -> Bundle {
        let header = CheckpointHeader {
            variant_tag: match self.config.variant {
                HeadVariant::Separate => 1,
                HeadVariant::ClassIntoEmbed => 2,
                HeadVariant::EmbedIntoClass => 3,
            },
            config: self.config.clone(),
            adam: self.optimizer.config,
            step: self.optimizer.step,
        };
        let mut b = Bundle::new(HEADS_KIND, &header);
        let shapes = self.params.shapes(self.config.variant, &self.config.dims);
        for (prefix, set) in [
            ("", &self.params),
            ("m_", &self.optimizer.first),
            ("v_", &self.optimizer.second),
        ] {
            for ((name, t), shape) in HeadParams::NAMES.iter().zip(set.tensors()).zip(shapes) {
                b.push(&format!("{prefix}{name}"), &shape, t);
            }
        }
        b
    }

    pub fn from_bundle(mut b: Bundle) -> Result<Self> {
        b.expect_kind(HEADS_KIND)?;
        let header: CheckpointHeader = b.header()?;
        header.config.validate()?;
        let variant = header.config.variant;
        let template = HeadParams::zeros(variant, &header.config.dims);
        let shapes = template.shapes(variant, &header.config.dims);
        let mut read = |prefix: &str| -> Result<HeadParams> {
            let mut out = HeadParams::zeros_like(&template);
            for ((name, t), shape) in HeadParams::NAMES
                .iter()
                .zip(out.tensors_mut())
                .zip(shapes)
            {
                *t = b.take(&format!("{prefix}{name}"), &shape)?;
            }
            Ok(out)
        };
        let params = read("")?;
        let first = read("m_")?;
        let second = read("v_")?;
        Ok(JointHeadModel {
            config: header.config,
            params,
            optimizer: AdamState {
                config: header.adam,
                first,
                second,
                step: header.step,
            },
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_bundle().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        JointHeadModel::from_bundle(Bundle::load(path)?)
    }
}

pub const HEADS_KIND: &str = "joint-heads";

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    variant_tag: u8,
    config: HeadConfig,
    adam: AdamConfig,
    step: u64,
}
