use serde::{Deserialize, Serialize};

/// All `(i, j)` with `0 <= i <= j < len` and `j - i + 1 <= max_len`, in
/// lexicographic order.
pub fn enumerate_spans(len: usize, max_len: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(span_count(len, max_len));
    for i in 0..len {
        for j in i..len.min(i + max_len) {
            out.push((i, j));
        }
    }
    out
}

/// `sum_{l=1..min(max_len, len)} (len - l + 1)`.
pub fn span_count(len: usize, max_len: usize) -> usize {
    (1..=max_len.min(len)).map(|l| len - l + 1).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BioTag {
    B,
    I,
    O,
}

impl BioTag {
    pub const ALL: [BioTag; 3] = [BioTag::B, BioTag::I, BioTag::O];

    pub fn index(self) -> usize {
        match self {
            BioTag::B => 0,
            BioTag::I => 1,
            BioTag::O => 2,
        }
    }

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i]
    }
}

/// Maximal `B I*` runs as inclusive spans. An `I` that does not continue a
/// `B`/`I` run opens a new mention, as if it were a `B`.
pub fn decode_bio(tags: &[BioTag]) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut open: Option<usize> = None;
    for (t, &tag) in tags.iter().enumerate() {
        match tag {
            BioTag::B => {
                if let Some(s) = open {
                    spans.push((s, t - 1));
                }
                open = Some(t);
            }
            BioTag::I => {
                if open.is_none() {
                    open = Some(t);
                }
            }
            BioTag::O => {
                if let Some(s) = open.take() {
                    spans.push((s, t - 1));
                }
            }
        }
    }
    if let Some(s) = open {
        spans.push((s, tags.len() - 1));
    }
    spans
}

/// Tags for non-overlapping spans over a sequence of `len` tokens.
pub fn encode_bio(spans: &[(usize, usize)], len: usize) -> Vec<BioTag> {
    let mut tags = vec![BioTag::O; len];
    for &(i, j) in spans {
        tags[i] = BioTag::B;
        for tag in &mut tags[i + 1..=j] {
            *tag = BioTag::I;
        }
    }
    tags
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use BioTag::*;

    fn brute_force(len: usize, max_len: usize) -> Vec<(usize, usize)> {
        let mut all = Vec::new();
        for i in 0..len {
            for j in 0..len {
                if i <= j && j - i < max_len {
                    all.push((i, j));
                }
            }
        }
        all.sort();
        all
    }

    #[test]
    fn small_cases() {
        assert_eq!(enumerate_spans(1, 1), vec![(0, 0)]);
        assert_eq!(enumerate_spans(5, 3).len(), 12);
        assert_eq!(brute_force(5, 3).len(), 12);
        assert_eq!(enumerate_spans(3, 10).len(), 6);
        assert_eq!(enumerate_spans(5, 3), brute_force(5, 3));
    }

    #[test]
    fn closed_form_matches_exhaustive_grid() {
        for len in 0..=64 {
            for max_len in 1..=16 {
                let spans = enumerate_spans(len, max_len);
                assert_eq!(spans.len(), span_count(len, max_len));
                assert_eq!(spans, brute_force(len, max_len));
            }
        }
    }

    #[test]
    fn bio_cases() {
        assert_eq!(decode_bio(&[B, I, I, O, B]), vec![(0, 2), (4, 4)]);
        assert!(decode_bio(&[O, O, O]).is_empty());
        assert_eq!(decode_bio(&[I, I, O]), vec![(0, 1)]);
        assert_eq!(decode_bio(&[B, B, I]), vec![(0, 0), (1, 2)]);
        assert_eq!(decode_bio(&[O, I, B]), vec![(1, 1), (2, 2)]);
        assert!(decode_bio(&[]).is_empty());
    }

    proptest! {
        #[test]
        fn bio_round_trip(raw in proptest::collection::vec((0usize..4, 1usize..4), 0..10)) {
            let mut spans = Vec::new();
            let mut pos = 0;
            for (gap, l) in raw {
                let start = pos + gap;
                spans.push((start, start + l - 1));
                pos = start + l;
            }
            let len = pos + 2;
            prop_assert_eq!(decode_bio(&encode_bio(&spans, len)), spans);
        }
    }
}
