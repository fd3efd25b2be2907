//! Fixtures shared by the criterion benchmarks.

use colink::corpus::{generate_synthetic_corpus, SyntheticCorpus, SyntheticSpec, TokenId};
use colink::encoder::{init_params, EncoderConfig, ModelParams};
use colink::index::{build_index, entity_inputs, DecodeConfig, EntityIndex};
use colink::{ContextConfig, Linker};

pub struct Fixture {
    pub corpus: SyntheticCorpus,
    pub encoder: EncoderConfig,
    pub params: ModelParams,
    pub inputs: Vec<Vec<TokenId>>,
    pub index: EntityIndex,
}

impl Fixture {
    /// Default encoder with freshly initialized weights over a synthetic corpus.
    pub fn new(spec: &SyntheticSpec, seed: u64) -> Self {
        let corpus = generate_synthetic_corpus(spec, seed).expect("valid spec");
        let encoder = EncoderConfig {
            vocab_size: corpus.vocab.len(),
            seed,
            ..Default::default()
        };
        let params = init_params(&encoder).expect("valid encoder");
        let inputs = entity_inputs(&corpus.kb, &corpus.vocab, &encoder);
        let index = build_index(&params, &inputs).expect("index");
        Self {
            corpus,
            encoder,
            params,
            inputs,
            index,
        }
    }

    pub fn linker(&self) -> Linker<'_> {
        Linker {
            params: &self.params,
            index: &self.index,
            kb: &self.corpus.kb,
            context: ContextConfig::default(),
            decode: DecodeConfig::default(),
        }
    }
}
