use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use super::config::EncoderConfig;
use super::tensor::{AsTensor, TensorMut, TensorRef};
use super::transformer::{EncoderCache, EncoderParams};
use crate::corpus::{hex, TokenId, CLS, SEP};
use crate::error::{Error, Result};

/// Number of BIO tags (B, I, O) scored by the tagging head.
pub const BIO_TAGS: usize = 3;

/// All trainable tensors of the linker.
///
/// `mention_proj` is `d x 2d` and maps `[h_i; h_j]` to a mention vector.
/// `span_start`, `span_end` and `span_inner` score candidate spans. The BIO
/// head (`bio_weight: d x 3`) is only trained in BIO-tagging mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: EncoderConfig,
    pub mention_encoder: EncoderParams,
    /// `None` when the two encoders are tied.
    pub entity_encoder: Option<EncoderParams>,
    pub mention_proj: Array2<f64>,
    pub mention_bias: Array1<f64>,
    pub span_start: Array1<f64>,
    pub span_end: Array1<f64>,
    pub span_inner: Array1<f64>,
    pub bio_weight: Array2<f64>,
    pub bio_bias: Array1<f64>,
}

/// Final-layer token vectors, one row per input position (markers included).
#[derive(Debug, Clone, PartialEq)]
pub struct TokenStates(pub Array2<f64>);

impl TokenStates {
    pub fn len(&self) -> usize {
        self.0.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.0.ncols()
    }
}

/// Deterministic initialization from `config.seed`: normal weights with
/// standard deviation `init_std`, unit norm gains and zero biases.
pub fn init_params(config: &EncoderConfig) -> Result<ModelParams> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let normal = Normal::new(0.0, config.init_std).expect("validated std");
    let d = config.hidden_dim;
    let make_encoder = |rng: &mut ChaCha8Rng| {
        EncoderParams::init(
            config.vocab_size,
            config.max_seq_len,
            d,
            config.ffn_dim,
            config.num_layers,
            config.num_heads,
            &normal,
            rng,
        )
    };
    let mention_encoder = make_encoder(&mut rng);
    let entity_encoder = (!config.tie_encoders).then(|| make_encoder(&mut rng));
    let mut vec = |n: usize| Array1::from_shape_fn(n, |_| normal.sample(&mut rng));
    let span_start = vec(d);
    let span_end = vec(d);
    let span_inner = vec(d);
    let mention_proj = Array2::from_shape_fn((d, 2 * d), |_| normal.sample(&mut rng));
    let bio_weight = Array2::from_shape_fn((d, BIO_TAGS), |_| normal.sample(&mut rng));
    Ok(ModelParams {
        config: config.clone(),
        mention_encoder,
        entity_encoder,
        mention_proj,
        mention_bias: Array1::zeros(d),
        span_start,
        span_end,
        span_inner,
        bio_weight,
        bio_bias: Array1::zeros(BIO_TAGS),
    })
}

impl ModelParams {
    pub fn hidden_dim(&self) -> usize {
        self.config.hidden_dim
    }

    pub fn entity_encoder(&self) -> &EncoderParams {
        self.entity_encoder.as_ref().unwrap_or(&self.mention_encoder)
    }

    /// Gradient target for the entity encoder: the mention encoder when tied.
    pub fn entity_encoder_mut(&mut self) -> &mut EncoderParams {
        match self.entity_encoder.as_mut() {
            Some(e) => e,
            None => &mut self.mention_encoder,
        }
    }

    /// Named-tensor manifest. Every parameter appears exactly once, in a fixed
    /// order.
    pub fn tensors(&self) -> Vec<(String, TensorRef<'_>)> {
        let mut out = Vec::new();
        self.mention_encoder.tensors("mention_encoder", &mut out);
        if let Some(e) = &self.entity_encoder {
            e.tensors("entity_encoder", &mut out);
        }
        out.push(("mention_proj.weight".into(), self.mention_proj.tensor_ref()));
        out.push(("mention_proj.bias".into(), self.mention_bias.tensor_ref()));
        out.push(("span.start".into(), self.span_start.tensor_ref()));
        out.push(("span.end".into(), self.span_end.tensor_ref()));
        out.push(("span.inner".into(), self.span_inner.tensor_ref()));
        out.push(("bio.weight".into(), self.bio_weight.tensor_ref()));
        out.push(("bio.bias".into(), self.bio_bias.tensor_ref()));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, TensorMut<'_>)> {
        let mut out = Vec::new();
        self.mention_encoder.tensors_mut("mention_encoder", &mut out);
        if let Some(e) = &mut self.entity_encoder {
            e.tensors_mut("entity_encoder", &mut out);
        }
        out.push(("mention_proj.weight".into(), self.mention_proj.tensor_mut()));
        out.push(("mention_proj.bias".into(), self.mention_bias.tensor_mut()));
        out.push(("span.start".into(), self.span_start.tensor_mut()));
        out.push(("span.end".into(), self.span_end.tensor_mut()));
        out.push(("span.inner".into(), self.span_inner.tensor_mut()));
        out.push(("bio.weight".into(), self.bio_weight.tensor_mut()));
        out.push(("bio.bias".into(), self.bio_bias.tensor_mut()));
        out
    }

    /// Same shapes, all zeros. Used as a gradient accumulator.
    pub fn zeros_like(&self) -> ModelParams {
        let mut z = self.clone();
        for (_, t) in z.tensors_mut() {
            t.data.fill(0.0);
        }
        z
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.data.len()).sum()
    }

    /// `self += other`, tensor by tensor. Both must share a manifest.
    pub fn add_assign(&mut self, other: &ModelParams) {
        for ((_, a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.data.iter_mut().zip(b.data) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, t) in self.tensors_mut() {
            t.data.iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, t)| t.data.iter().all(|x| x.is_finite()))
    }

    /// Hex SHA-256 over tensor names, shapes and bit patterns.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for (name, t) in self.tensors() {
            hasher.update(name.as_bytes());
            for &s in t.shape {
                hasher.update((s as u64).to_le_bytes());
            }
            for x in t.data {
                hasher.update(x.to_bits().to_le_bytes());
            }
        }
        hex(&hasher.finalize())
    }

    fn check_input(&self, ids: &[TokenId]) -> Result<()> {
        let limit = self.config.max_seq_len;
        if ids.len() > limit {
            return Err(Error::SequenceTooLong {
                len: ids.len(),
                limit,
            });
        }
        if ids.len() < 2 || ids[0] != CLS || ids[ids.len() - 1] != SEP {
            return Err(Error::MalformedInput(
                "sequence must start with [CLS] and end with [SEP]".into(),
            ));
        }
        if let Some(&bad) = ids
            .iter()
            .find(|&&id| id as usize >= self.config.vocab_size)
        {
            return Err(Error::MalformedInput(format!(
                "token id {bad} is outside the vocabulary of {}",
                self.config.vocab_size
            )));
        }
        Ok(())
    }

    /// Mention-encoder forward with activations kept for the reverse pass.
    pub fn mention_forward(&self, ids: &[TokenId]) -> Result<(TokenStates, EncoderCache)> {
        self.check_input(ids)?;
        let (h, cache) = self.mention_encoder.forward(ids);
        Ok((TokenStates(h), cache))
    }

    pub fn entity_forward(&self, ids: &[TokenId]) -> Result<(TokenStates, EncoderCache)> {
        self.check_input(ids)?;
        let (h, cache) = self.entity_encoder().forward(ids);
        Ok((TokenStates(h), cache))
    }
}

/// Contextual token states of a marked sequence from the mention encoder.
pub fn encode_sequence(params: &ModelParams, ids: &[TokenId]) -> Result<TokenStates> {
    params.mention_forward(ids).map(|(s, _)| s)
}

/// Entity vector: the final-layer state at the `[CLS]` position of the
/// entity encoder.
pub fn encode_entity(params: &ModelParams, ids: &[TokenId]) -> Result<Array1<f64>> {
    let (states, _) = params.entity_forward(ids)?;
    Ok(states.0.row(0).to_owned())
}

/// `[CLS] content [SEP]`.
pub fn sequence_input(content: &[TokenId]) -> Vec<TokenId> {
    let mut ids = Vec::with_capacity(content.len() + 2);
    ids.push(CLS);
    ids.extend_from_slice(content);
    ids.push(SEP);
    ids
}

/// Marked entity-name input truncated so the whole sequence fits in
/// `config.entity_limit()` tokens.
pub fn entity_input(name: &[TokenId], config: &EncoderConfig) -> Vec<TokenId> {
    let keep = name.len().min(config.entity_limit() - 2);
    sequence_input(&name[..keep])
}
