//! Seeded synthetic corpora with planted topics and relevance labels.
//!
//! Every chunk belongs to one topic and names one unique entity in each of
//! its sentences. Sentences mix the topic's keywords with generic filler
//! words. Chunk lengths are chosen so that greedy sentence packing at the
//! default 100-token budget reproduces the planted chunks exactly: each
//! chunk has 78..=94 tokens and opens with a 26..=32 token sentence, so no
//! chunk can absorb its successor's first sentence.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chunker::{Tokenizer, WhitespacePunct};
use crate::corpus::Document;
use crate::providers::Lexicon;
use crate::tree::Tree;

pub const SYNTHETIC_DOC_ID: &str = "synthetic";

const KEYWORDS_PER_TOPIC: usize = 16;
const GENERIC_WORDS: usize = 48;
const CHUNK_TOKENS: (usize, usize) = (78, 94);
const FIRST_SENTENCE_TOKENS: (usize, usize) = (26, 32);
const SENTENCE_TOKENS: (usize, usize) = (8, 20);
const FILLERS: &[&str] = &["the", "of", "and", "with", "in", "on", "for", "to", "a", "by"];
const SYLLABLES: &[&str] = &[
    "ka", "lo", "mi", "ru", "te", "sa", "vo", "ne", "di", "po", "fa", "gu", "ze", "bi", "xo", "qua",
    "len", "tor", "mar", "vin", "sel", "dur", "pax", "rom",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QueryKind {
    /// Names one chunk's entity; one relevant chunk.
    Detail,
    /// Topic keywords only; every chunk of the topic is relevant.
    Thematic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticQuery {
    pub text: String,
    pub kind: QueryKind,
    pub topic: usize,
    /// Chunk ids (positions in the corpus, equal to leaf ids after a build).
    pub relevant: BTreeSet<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticChunk {
    pub text: String,
    pub topic: usize,
    pub entity: String,
    pub token_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCorpus {
    pub seed: u64,
    pub documents: Vec<Document>,
    pub chunks: Vec<SyntheticChunk>,
    pub queries: Vec<SyntheticQuery>,
    /// Topic → chunk ids, ascending.
    pub planted_topics: BTreeMap<usize, Vec<usize>>,
    pub lexicon: Lexicon,
}

impl SyntheticCorpus {
    pub fn topic_of(&self, chunk: usize) -> usize {
        self.chunks[chunk].topic
    }

    pub fn total_tokens(&self) -> usize {
        self.chunks.iter().map(|c| c.token_count).sum()
    }

    /// True when the tree's leaves are exactly the planted chunks, in order.
    pub fn aligned_with(&self, tree: &Tree) -> bool {
        tree.leaves().len() == self.chunks.len()
            && tree
                .leaves()
                .iter()
                .zip(&self.chunks)
                .all(|(&id, c)| tree.nodes[id].text == c.text)
    }
}

/// Distinct pseudo-words.
struct WordSource {
    rng: ChaCha8Rng,
    used: BTreeSet<String>,
}

impl WordSource {
    /// Grows past `syllables` when that length is crowded.
    fn word(&mut self, syllables: usize) -> String {
        for attempt in 0.. {
            let len = syllables + attempt / 64;
            let w: String = (0..len)
                .map(|_| SYLLABLES[self.rng.random_range(0..SYLLABLES.len())])
                .collect();
            if self.used.insert(w.clone()) {
                return w;
            }
        }
        unreachable!()
    }
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Topic order. With `shuffle`, each round visits every topic with remaining
/// chunks in random order, never starting a round with the topic that ended
/// the previous one; otherwise topics are contiguous.
fn topic_order(rng: &mut ChaCha8Rng, n_topics: usize, per_topic: usize, shuffle: bool) -> Vec<usize> {
    if !shuffle {
        return (0..n_topics).flat_map(|t| std::iter::repeat_n(t, per_topic)).collect();
    }
    let mut order: Vec<usize> = Vec::with_capacity(n_topics * per_topic);
    for _ in 0..per_topic {
        let mut round: Vec<usize> = (0..n_topics).collect();
        round.shuffle(rng);
        if n_topics > 1 && order.last() == round.first() {
            let j = rng.random_range(1..n_topics);
            round.swap(0, j);
        }
        order.extend(round);
    }
    order
}

/// Split `total` tokens into a first sentence and follow-up sentence lengths.
fn sentence_lengths(rng: &mut ChaCha8Rng, total: usize) -> Vec<usize> {
    let first = rng.random_range(FIRST_SENTENCE_TOKENS.0..=FIRST_SENTENCE_TOKENS.1);
    let mut out = vec![first];
    let mut rest = total - first;
    while rest > SENTENCE_TOKENS.1 {
        let hi = SENTENCE_TOKENS.1.min(rest - SENTENCE_TOKENS.0);
        let len = rng.random_range(SENTENCE_TOKENS.0..=hi);
        out.push(len);
        rest -= len;
    }
    out.push(rest);
    out
}

fn sentence(
    rng: &mut ChaCha8Rng,
    tokens: usize,
    entity: &str,
    keywords: &[String],
    generic: &[String],
    keyword_rate: f64,
) -> String {
    let words = tokens - 1;
    let entity_at = rng.random_range(0..words);
    let mut out: Vec<String> = (0..words)
        .map(|i| {
            if i == entity_at {
                return entity.to_string();
            }
            let r: f64 = rng.random();
            if r < keyword_rate {
                keywords[rng.random_range(0..keywords.len())].clone()
            } else if r < keyword_rate + (1.0 - keyword_rate) / 2.0 {
                FILLERS[rng.random_range(0..FILLERS.len())].to_string()
            } else {
                generic[rng.random_range(0..generic.len())].clone()
            }
        })
        .collect();
    out[0] = capitalize(&out[0]);
    format!("{}.", out.join(" "))
}

/// Largest set of pairwise non-adjacent positions among sorted `ids`.
fn non_adjacent_span(ids: &[usize]) -> usize {
    let mut count = 0;
    let mut last: Option<usize> = None;
    for &i in ids {
        if last.is_none_or(|l| i > l + 1) {
            count += 1;
            last = Some(i);
        }
    }
    count
}

pub fn generate_corpus(seed: u64, n_topics: usize, chunks_per_topic: usize, shuffle: bool) -> SyntheticCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut words = WordSource {
        rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_0F_0DD5),
        used: FILLERS.iter().map(|s| s.to_string()).collect(),
    };
    let keywords: Vec<Vec<String>> = (0..n_topics)
        .map(|_| (0..KEYWORDS_PER_TOPIC).map(|_| words.word(2)).collect())
        .collect();
    let generic: Vec<String> = (0..GENERIC_WORDS).map(|_| words.word(2)).collect();

    let order = topic_order(&mut rng, n_topics, chunks_per_topic, shuffle);
    let tok = WhitespacePunct;
    let mut chunks = Vec::with_capacity(order.len());
    for &topic in &order {
        let entity = capitalize(&words.word(3));
        let total = rng.random_range(CHUNK_TOKENS.0..=CHUNK_TOKENS.1);
        let sentences: Vec<String> = sentence_lengths(&mut rng, total)
            .into_iter()
            .enumerate()
            .map(|(i, len)| {
                let rate = if i == 0 { 0.6 } else { 0.35 };
                sentence(&mut rng, len, &entity, &keywords[topic], &generic, rate)
            })
            .collect();
        let text = sentences.join(" ");
        let token_count = tok.count(&text);
        debug_assert_eq!(token_count, total);
        chunks.push(SyntheticChunk {
            text,
            topic,
            entity,
            token_count,
        });
    }

    let mut planted_topics: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, c) in chunks.iter().enumerate() {
        planted_topics.entry(c.topic).or_default().push(i);
    }

    let mut queries = Vec::new();
    for (&topic, ids) in &planted_topics {
        for &i in ids.iter().take(3) {
            let c = &chunks[i];
            let kw: Vec<&str> = (0..2)
                .map(|_| keywords[topic][rng.random_range(0..KEYWORDS_PER_TOPIC)].as_str())
                .collect();
            queries.push(SyntheticQuery {
                text: format!("What did {} do with {} {}?", c.entity, kw[0], kw[1]),
                kind: QueryKind::Detail,
                topic,
                relevant: BTreeSet::from([i]),
            });
        }
        if non_adjacent_span(ids) >= 3 {
            for _ in 0..2 {
                let mut kw: Vec<&str> = keywords[topic].iter().map(String::as_str).collect();
                kw.shuffle(&mut rng);
                queries.push(SyntheticQuery {
                    text: format!("What is said overall about {}?", kw[..6].join(" ")),
                    kind: QueryKind::Thematic,
                    topic,
                    relevant: ids.iter().copied().collect(),
                });
            }
        }
    }

    let text = chunks.iter().map(|c| c.text.as_str()).collect::<Vec<_>>().join(" ");
    SyntheticCorpus {
        seed,
        documents: if text.is_empty() {
            Vec::new()
        } else {
            vec![Document::new(SYNTHETIC_DOC_ID, text)]
        },
        chunks,
        queries,
        planted_topics,
        lexicon: Lexicon::new(keywords),
    }
}
