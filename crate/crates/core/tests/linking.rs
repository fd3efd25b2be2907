use std::collections::HashSet;

use proptest::prelude::*;

use colink::corpus::{generate_synthetic_corpus, SyntheticSpec};
use colink::encoder::{encode_entity, encode_sequence, init_params, sequence_input, EncoderConfig};
use colink::index::{build_index, decode_end_to_end, entity_inputs, DecodeConfig, LinkMode, OverlapPolicy};
use colink::linker::mention_rep;
use colink::{ContextConfig, Linker};

fn small_corpus() -> (colink::corpus::SyntheticCorpus, EncoderConfig) {
    let spec = SyntheticSpec {
        docs: 6,
        mentions_per_doc: 4,
        ..Default::default()
    };
    let corpus = generate_synthetic_corpus(&spec, 21).unwrap();
    let encoder = EncoderConfig {
        hidden_dim: 16,
        num_layers: 1,
        num_heads: 2,
        ffn_dim: 32,
        vocab_size: corpus.vocab.len(),
        seed: 21,
        init_std: 0.2,
        ..Default::default()
    };
    (corpus, encoder)
}

#[test]
fn collective_equals_per_mention_when_one_window_covers_the_document() {
    let (corpus, encoder) = small_corpus();
    let params = init_params(&encoder).unwrap();
    let index = build_index(&params, &entity_inputs(&corpus.kb, &corpus.vocab, &encoder)).unwrap();
    let linker = Linker {
        params: &params,
        index: &index,
        kb: &corpus.kb,
        context: ContextConfig::default(),
        decode: DecodeConfig::default(),
    };
    for doc in &corpus.docs {
        assert!(doc.tokens.len() + 2 <= linker.context.context_window);
        let c = linker.link_document(doc, LinkMode::Collective).unwrap();
        let p = linker.link_document(doc, LinkMode::PerMention).unwrap();
        assert_eq!(c, p);
        assert_eq!(c.len(), doc.mentions.len());
    }
}

#[test]
fn linked_score_is_the_dot_product_with_the_chosen_entity() {
    let (corpus, encoder) = small_corpus();
    let params = init_params(&encoder).unwrap();
    let inputs = entity_inputs(&corpus.kb, &corpus.vocab, &encoder);
    let index = build_index(&params, &inputs).unwrap();
    let linker = Linker {
        params: &params,
        index: &index,
        kb: &corpus.kb,
        context: ContextConfig::default(),
        decode: DecodeConfig::default(),
    };
    let doc = &corpus.docs[0];
    let states = encode_sequence(&params, &sequence_input(&doc.tokens)).unwrap();
    for (pred, m) in linker.link_document(doc, LinkMode::Collective).unwrap().iter().zip(&doc.mentions) {
        let u = mention_rep(&states, (m.start + 1, m.end + 1), &params).unwrap().vector;
        let scores: Vec<f64> = inputs.iter().map(|x| u.dot(&encode_entity(&params, x).unwrap())).collect();
        let best = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let row = corpus.kb.row(&pred.entity_id).unwrap();
        assert!((scores[row] - best).abs() < 1e-12);
        assert!((pred.score - best).abs() < 1e-9);
        assert_eq!(pred.ranked[0], pred.entity_id);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn greedy_decoding_is_non_overlapping_and_monotone_in_gamma(
        seed in 0u64..1000,
        len in 1usize..20,
        gamma in 0.05f64..0.95,
        bump in 0.0f64..0.04,
    ) {
        let encoder = EncoderConfig {
            hidden_dim: 8,
            num_layers: 1,
            num_heads: 2,
            ffn_dim: 8,
            max_seq_len: 32,
            vocab_size: 12,
            seed,
            init_std: 0.5,
            ..Default::default()
        };
        let mut params = init_params(&encoder).unwrap();
        params.span_start.fill(0.3);
        params.span_inner.fill(-0.1);
        let ids: Vec<u32> = (0..len).map(|i| 4 + ((seed as usize + 3 * i) % 8) as u32).collect();
        let states = encode_sequence(&params, &sequence_input(&ids)).unwrap();
        let inputs: Vec<Vec<u32>> = (4..12).map(|t| sequence_input(&[t])).collect();
        let index = build_index(&params, &inputs).unwrap();
        let cfg = |g: f64| DecodeConfig { gamma: g, max_span_len: 4, overlap: OverlapPolicy::Greedy, top_k: 3 };
        let low = decode_end_to_end(&states, &params, &index, &cfg(gamma)).unwrap();
        let high = decode_end_to_end(&states, &params, &index, &cfg(gamma + bump)).unwrap();
        for (i, a) in low.iter().enumerate() {
            prop_assert!(a.p > gamma);
            prop_assert!(a.end < len && a.end - a.start < 4);
            for b in &low[i + 1..] {
                prop_assert!(a.end < b.start || b.end < a.start);
            }
        }
        let low_spans: HashSet<(usize, usize)> = low.iter().map(|s| (s.start, s.end)).collect();
        prop_assert!(high.iter().all(|s| low_spans.contains(&(s.start, s.end))));
    }
}
