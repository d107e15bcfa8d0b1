//! The three ways of connecting the embedding head and the vocabulary head.
//!
//! Each wiring owns its forward graph and routes upstream loss gradients back
//! to the four parameter tensors. Losses are computed outside the wiring.

use super::loss::sigmoid;
use super::{HeadDims, HeadParams, HeadVariant};
use crate::linalg::affine;
use crate::registry::Registry;

/// Intermediate values of one forward pass.
#[derive(Clone, Debug)]
pub struct Activations {
    pub embedding: Vec<f64>,
    /// Unclamped sigmoid outputs of the vocabulary head.
    pub sigmoid: Vec<f64>,
}

pub trait HeadWiring: Send + Sync {
    fn variant(&self) -> HeadVariant;

    /// Input width of the embedding head.
    fn embed_input_dim(&self, dims: &HeadDims) -> usize;

    /// Input width of the vocabulary head.
    fn class_input_dim(&self, dims: &HeadDims) -> usize;

    fn forward(&self, p: &HeadParams, dims: &HeadDims, x: &[f64]) -> Activations;

    /// `d_embed` is dL/d(embedding) from the embedding loss alone and
    /// `d_logits` is dL/d(vocabulary logits) from the weighted vocabulary
    /// loss alone; the wiring adds the cross terms its graph creates.
    fn backward(
        &self,
        p: &HeadParams,
        dims: &HeadDims,
        x: &[f64],
        acts: &Activations,
        d_embed: &[f64],
        d_logits: &[f64],
    ) -> HeadParams;
}

fn add_outer(g: &mut [f64], left: &[f64], right: &[f64]) {
    for (row, &l) in g.chunks_exact_mut(right.len()).zip(left) {
        if l == 0.0 {
            continue;
        }
        for (gv, &r) in row.iter_mut().zip(right) {
            *gv += l * r;
        }
    }
}

/// `Wᵀ g` for a row-major `W` of shape `g.len() x cols`.
fn transpose_times(w: &[f64], cols: usize, g: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; cols];
    for (row, &gv) in w.chunks_exact(cols).zip(g) {
        for (o, &wv) in out.iter_mut().zip(row) {
            *o += wv * gv;
        }
    }
    out
}

fn grads_from(
    p: &HeadParams,
    d_embed: &[f64],
    embed_in: &[f64],
    d_logits: &[f64],
    class_in: &[f64],
) -> HeadParams {
    let mut g = HeadParams::zeros_like(p);
    add_outer(&mut g.w_e, d_embed, embed_in);
    g.b_e.copy_from_slice(d_embed);
    add_outer(&mut g.w_c, d_logits, class_in);
    g.b_c.copy_from_slice(d_logits);
    g
}

/// Both heads read the features independently.
pub struct Separate;

impl HeadWiring for Separate {
    fn variant(&self) -> HeadVariant {
        HeadVariant::Separate
    }

    fn embed_input_dim(&self, dims: &HeadDims) -> usize {
        dims.feature_dim
    }

    fn class_input_dim(&self, dims: &HeadDims) -> usize {
        dims.feature_dim
    }

    fn forward(&self, p: &HeadParams, dims: &HeadDims, x: &[f64]) -> Activations {
        let mut embedding = vec![0.0; dims.embed_dim];
        affine(&p.w_e, &p.b_e, x, &mut embedding);
        let mut logits = vec![0.0; dims.vocab_size];
        affine(&p.w_c, &p.b_c, x, &mut logits);
        Activations {
            embedding,
            sigmoid: logits.into_iter().map(sigmoid).collect(),
        }
    }

    fn backward(
        &self,
        p: &HeadParams,
        _dims: &HeadDims,
        x: &[f64],
        _acts: &Activations,
        d_embed: &[f64],
        d_logits: &[f64],
    ) -> HeadParams {
        grads_from(p, d_embed, x, d_logits, x)
    }
}

/// Vocabulary probabilities are appended to the features before the
/// embedding head.
pub struct ClassIntoEmbed;

impl ClassIntoEmbed {
    fn concat(x: &[f64], probs: &[f64]) -> Vec<f64> {
        let mut u = Vec::with_capacity(x.len() + probs.len());
        u.extend_from_slice(x);
        u.extend_from_slice(probs);
        u
    }
}

impl HeadWiring for ClassIntoEmbed {
    fn variant(&self) -> HeadVariant {
        HeadVariant::ClassIntoEmbed
    }

    fn embed_input_dim(&self, dims: &HeadDims) -> usize {
        dims.feature_dim + dims.vocab_size
    }

    fn class_input_dim(&self, dims: &HeadDims) -> usize {
        dims.feature_dim
    }

    fn forward(&self, p: &HeadParams, dims: &HeadDims, x: &[f64]) -> Activations {
        let mut logits = vec![0.0; dims.vocab_size];
        affine(&p.w_c, &p.b_c, x, &mut logits);
        let s: Vec<f64> = logits.into_iter().map(sigmoid).collect();
        let u = Self::concat(x, &s);
        let mut embedding = vec![0.0; dims.embed_dim];
        affine(&p.w_e, &p.b_e, &u, &mut embedding);
        Activations {
            embedding,
            sigmoid: s,
        }
    }

    fn backward(
        &self,
        p: &HeadParams,
        dims: &HeadDims,
        x: &[f64],
        acts: &Activations,
        d_embed: &[f64],
        d_logits: &[f64],
    ) -> HeadParams {
        let u = Self::concat(x, &acts.sigmoid);
        let d_u = transpose_times(&p.w_e, u.len(), d_embed);
        let total_logits: Vec<f64> = d_u[dims.feature_dim..]
            .iter()
            .zip(&acts.sigmoid)
            .zip(d_logits)
            .map(|((&du, &s), &dl)| du * s * (1.0 - s) + dl)
            .collect();
        grads_from(p, d_embed, &u, &total_logits, x)
    }
}

/// The vocabulary head reads the predicted embedding.
pub struct EmbedIntoClass;

impl HeadWiring for EmbedIntoClass {
    fn variant(&self) -> HeadVariant {
        HeadVariant::EmbedIntoClass
    }

    fn embed_input_dim(&self, dims: &HeadDims) -> usize {
        dims.feature_dim
    }

    fn class_input_dim(&self, dims: &HeadDims) -> usize {
        dims.embed_dim
    }

    fn forward(&self, p: &HeadParams, dims: &HeadDims, x: &[f64]) -> Activations {
        let mut embedding = vec![0.0; dims.embed_dim];
        affine(&p.w_e, &p.b_e, x, &mut embedding);
        let mut logits = vec![0.0; dims.vocab_size];
        affine(&p.w_c, &p.b_c, &embedding, &mut logits);
        Activations {
            embedding,
            sigmoid: logits.into_iter().map(sigmoid).collect(),
        }
    }

    fn backward(
        &self,
        p: &HeadParams,
        dims: &HeadDims,
        x: &[f64],
        acts: &Activations,
        d_embed: &[f64],
        d_logits: &[f64],
    ) -> HeadParams {
        let from_class = transpose_times(&p.w_c, dims.embed_dim, d_logits);
        let total_embed: Vec<f64> = d_embed.iter().zip(&from_class).map(|(a, b)| a + b).collect();
        grads_from(p, &total_embed, x, d_logits, &acts.embedding)
    }
}

static SEPARATE: Separate = Separate;
static CLASS_INTO_EMBED: ClassIntoEmbed = ClassIntoEmbed;
static EMBED_INTO_CLASS: EmbedIntoClass = EmbedIntoClass;

pub fn wiring_for(variant: HeadVariant) -> &'static dyn HeadWiring {
    match variant {
        HeadVariant::Separate => &SEPARATE,
        HeadVariant::ClassIntoEmbed => &CLASS_INTO_EMBED,
        HeadVariant::EmbedIntoClass => &EMBED_INTO_CLASS,
    }
}

/// All head wirings, keyed by their CLI names.
pub fn head_registry() -> Registry<dyn HeadWiring> {
    let mut reg: Registry<dyn HeadWiring> = Registry::new("head configuration");
    reg.register(HeadVariant::Separate.name(), |_| Ok(Box::new(Separate)))
        .register(HeadVariant::ClassIntoEmbed.name(), |_| {
            Ok(Box::new(ClassIntoEmbed))
        })
        .register(HeadVariant::EmbedIntoClass.name(), |_| {
            Ok(Box::new(EmbedIntoClass))
        });
    reg
}
