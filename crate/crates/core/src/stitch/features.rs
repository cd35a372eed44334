//! Hashed binary features for an (asset, query, position) triple.

use serde::{Deserialize, Serialize};
use xxhash_rust::xxh3::xxh3_64_with_seed;

use crate::text::{char_len, tokenize};
use crate::types::{AdAsset, Position, Query};

pub const LENGTH_BUCKETS: usize = 30;

/// Sorted, distinct feature ids; every value is implicitly 1.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureVector {
    indices: Vec<u32>,
}

impl FeatureVector {
    pub fn from_indices(mut indices: Vec<u32>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        FeatureVector { indices }
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Salt for the ranking features of a slot.
pub fn position_salt(pos: Position) -> u64 {
    0xad00 + pos.index() as u64
}

/// Feature families, in emission order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Whole,
    Length,
    Unigram,
    Bigram,
    UnigramCross,
    BigramCross,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::Whole,
        Family::Length,
        Family::Unigram,
        Family::Bigram,
        Family::UnigramCross,
        Family::BigramCross,
    ];

    // Tags keep e.g. the unigram "x" and the whole text "x" apart.
    fn tag(self) -> u8 {
        match self {
            Family::Whole => b'h',
            Family::Length => b'l',
            Family::Unigram => b'u',
            Family::Bigram => b'b',
            Family::UnigramCross => b'x',
            Family::BigramCross => b'y',
        }
    }
}

const SEP: u8 = 0x1f;

/// Calls `sink` with every feature id and its family, before deduplication.
pub fn emit_features(
    text: &str,
    query: &Query,
    salt: u64,
    hash_bits: u32,
    mut sink: impl FnMut(Family, u32),
) {
    let tokens = tokenize(text);
    let bigrams: Vec<String> = tokens
        .windows(2)
        .map(|w| format!("{} {}", w[0], w[1]))
        .collect();
    let bucket = (char_len(text) / 5).min(LENGTH_BUCKETS - 1).to_string();
    let mask = (1u64 << hash_bits) - 1;
    let mut buf: Vec<u8> = Vec::with_capacity(64);
    let mut emit = |family: Family, parts: &[&str]| {
        buf.clear();
        buf.push(family.tag());
        for p in parts {
            buf.push(SEP);
            buf.extend_from_slice(p.as_bytes());
        }
        sink(family, (xxh3_64_with_seed(&buf, salt) & mask) as u32);
    };
    emit(Family::Whole, &[text]);
    emit(Family::Length, &[&bucket]);
    for t in &tokens {
        emit(Family::Unigram, &[t]);
    }
    for b in &bigrams {
        emit(Family::Bigram, &[b]);
    }
    for q in &query.tokens {
        for t in &tokens {
            emit(Family::UnigramCross, &[t, q]);
        }
        for b in &bigrams {
            emit(Family::BigramCross, &[b, q]);
        }
    }
}

/// Feature ids before deduplication, in emission order.
pub fn raw_features(text: &str, query: &Query, salt: u64, hash_bits: u32) -> Vec<u32> {
    let mut out = Vec::with_capacity(32);
    emit_features(text, query, salt, hash_bits, |_, id| out.push(id));
    out
}

pub fn featurize_salted(text: &str, query: &Query, salt: u64, hash_bits: u32) -> FeatureVector {
    FeatureVector::from_indices(raw_features(text, query, salt, hash_bits))
}

/// Ranking features of `asset` placed at `position` for `query`.
pub fn featurize(
    asset: &AdAsset,
    query: &Query,
    position: Position,
    hash_bits: u32,
) -> FeatureVector {
    featurize_salted(&asset.text, query, position_salt(position), hash_bits)
}
