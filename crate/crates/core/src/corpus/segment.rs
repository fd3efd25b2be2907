use super::document::{Document, MentionAnnotation};
use crate::error::{Error, Result};

/// A contiguous slice of a source document. `doc.doc_id` is the source id and
/// `offset` is the source index of the segment's first token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub doc: Document,
    pub offset: usize,
}

/// Splits a document into chunks holding at most `max_mentions` mentions and
/// `max_tokens` tokens, cutting greedily left to right.
///
/// A cut falls at whichever cap is hit first. For the mention cap the cut
/// sits right before the first mention that would not fit. A cut that lands
/// inside a mention moves left to that mention's start, so mentions are
/// never split.
pub fn segment_document(
    doc: &Document,
    max_mentions: usize,
    max_tokens: usize,
) -> Result<Vec<Segment>> {
    if max_mentions == 0 {
        return Err(Error::Config("max_mentions must be at least 1".into()));
    }
    if max_tokens < 3 {
        return Err(Error::Config("max_tokens must be at least 3".into()));
    }
    doc.validate(None)?;

    let mut mentions: Vec<&MentionAnnotation> = doc.mentions.iter().collect();
    mentions.sort_by_key(|m| (m.start, m.end));
    if let Some(m) = mentions.iter().find(|m| m.len() > max_tokens - 2) {
        return Err(Error::Unsegmentable {
            doc_id: doc.doc_id.clone(),
            start: m.start,
            end: m.end,
            max_tokens,
        });
    }

    let total = doc.tokens.len();
    let mut segments = Vec::new();
    let mut start = 0;
    // index of the first mention not yet assigned to a segment
    let mut next = 0usize;
    while start < total {
        let mut cut = (start + max_tokens).min(total);
        if let Some(overflow) = mentions.get(next.saturating_add(max_mentions)) {
            cut = cut.min(overflow.start);
        }
        while let Some(m) = mentions[next..]
            .iter()
            .find(|m| m.start < cut && m.end >= cut)
        {
            cut = m.start;
        }
        if cut <= start {
            let m = mentions[next];
            return Err(Error::Unsegmentable {
                doc_id: doc.doc_id.clone(),
                start: m.start,
                end: m.end,
                max_tokens,
            });
        }

        let mut inside = Vec::new();
        while next < mentions.len() && mentions[next].start < cut {
            let m = mentions[next];
            inside.push(MentionAnnotation {
                start: m.start - start,
                end: m.end - start,
                entity_id: m.entity_id.clone(),
            });
            next += 1;
        }
        segments.push(Segment {
            doc: Document {
                doc_id: doc.doc_id.clone(),
                tokens: doc.tokens[start..cut].to_vec(),
                mentions: inside,
            },
            offset: start,
        });
        start = cut;
    }
    Ok(segments)
}
