use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{EmbeddingProvider, SummarizationPrompt, SummarizationProvider, Usage, UsageMeter};
use crate::chunker::{split_sentences, Tokenizer, WhitespacePunct};
use crate::error::{Error, Result};

pub(crate) const DEFAULT_MOCK_DIMENSION: usize = 256;

/// Spread of a keyword's vector around its topic centroid.
const KEYWORD_NOISE: f64 = 0.35;

/// Function words ignored by the lexical embedder.
const STOPWORDS: &[&str] = &[
    "a", "an", "and", "as", "at", "by", "for", "from", "in", "is", "it", "of", "on", "that",
    "the", "this", "to", "was", "with",
];

/// Pseudo-random unit vector determined by `(seed, key)`.
///
/// SHA-256 of the seed and key seeds a ChaCha8 stream of standard normals,
/// so the result is identical across runs and platforms.
pub fn hash_unit_vector(seed: u64, key: &str, dimension: usize) -> Vec<f64> {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(key.as_bytes());
    let digest: [u8; 32] = hasher.finalize().into();
    let mut rng = ChaCha8Rng::from_seed(digest);
    loop {
        let v: Vec<f64> = (0..dimension)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let n = crate::vector::norm(&v);
        if n > 0.0 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Keyword lists, one per topic. Keywords are matched case-insensitively
/// against whole tokens.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexicon {
    pub topics: Vec<Vec<String>>,
}

impl Lexicon {
    pub fn new(topics: Vec<Vec<String>>) -> Self {
        Self { topics }
    }

    fn index(&self) -> HashMap<String, usize> {
        let mut map = HashMap::new();
        for (t, words) in self.topics.iter().enumerate() {
            for w in words {
                map.entry(w.to_lowercase()).or_insert(t);
            }
        }
        map
    }
}

#[derive(Debug)]
enum Mode {
    Hashed,
    Lexical {
        keywords: HashMap<String, usize>,
        centroids: Vec<Vec<f64>>,
        cache: Mutex<HashMap<String, Arc<Vec<f64>>>>,
    },
}

/// Deterministic offline embedder.
///
/// In hashed mode each text maps to [`hash_unit_vector`] of the whole text.
/// In lexical mode a text is the normalized sum of per-token vectors: a
/// keyword of topic `t` contributes the topic centroid plus a small
/// token-specific offset, and any other non-stopword token contributes its
/// own hash vector. Texts that share topic keywords therefore land near a
/// shared centroid, and texts with more topic evidence land nearer to it.
#[derive(Debug)]
pub struct MockEmbedder {
    seed: u64,
    dimension: usize,
    mode: Mode,
}

impl MockEmbedder {
    pub fn hashed(seed: u64, dimension: usize) -> Result<Self> {
        check_dimension(dimension)?;
        Ok(Self {
            seed,
            dimension,
            mode: Mode::Hashed,
        })
    }

    pub fn lexical(seed: u64, dimension: usize, lexicon: Lexicon) -> Result<Self> {
        check_dimension(dimension)?;
        let centroids = (0..lexicon.topics.len())
            .map(|t| hash_unit_vector(seed, &format!("\u{0}topic:{t}"), dimension))
            .collect();
        Ok(Self {
            seed,
            dimension,
            mode: Mode::Lexical {
                keywords: lexicon.index(),
                centroids,
                cache: Mutex::new(HashMap::new()),
            },
        })
    }

    fn embed_one(&self, text: &str) -> Vec<f64> {
        let Mode::Lexical {
            keywords,
            centroids,
            cache,
        } = &self.mode
        else {
            return hash_unit_vector(self.seed, text, self.dimension);
        };

        // BTreeMap keeps the summation order independent of hashing.
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for token in WhitespacePunct.tokenize(text) {
            if !token.chars().any(char::is_alphanumeric) {
                continue;
            }
            let token = token.to_lowercase();
            if STOPWORDS.contains(&token.as_str()) {
                continue;
            }
            *counts.entry(token).or_default() += 1;
        }
        if counts.is_empty() {
            return hash_unit_vector(self.seed, text, self.dimension);
        }

        let mut sum = vec![0.0; self.dimension];
        for (token, count) in &counts {
            let v = self.token_vector(token, keywords, centroids, cache);
            for (s, x) in sum.iter_mut().zip(v.iter()) {
                *s += *count as f64 * x;
            }
        }
        crate::vector::normalize(&sum)
            .unwrap_or_else(|_| hash_unit_vector(self.seed, text, self.dimension))
    }

    fn token_vector(
        &self,
        token: &str,
        keywords: &HashMap<String, usize>,
        centroids: &[Vec<f64>],
        cache: &Mutex<HashMap<String, Arc<Vec<f64>>>>,
    ) -> Arc<Vec<f64>> {
        if let Some(v) = cache.lock().expect("embedder cache poisoned").get(token) {
            return Arc::clone(v);
        }
        let own = hash_unit_vector(self.seed, &format!("\u{0}token:{token}"), self.dimension);
        let v = match keywords.get(token) {
            Some(&t) => centroids[t]
                .iter()
                .zip(&own)
                .map(|(c, o)| c + KEYWORD_NOISE * o)
                .collect(),
            None => own,
        };
        let v = Arc::new(v);
        cache
            .lock()
            .expect("embedder cache poisoned")
            .insert(token.to_string(), Arc::clone(&v));
        v
    }
}

fn check_dimension(dimension: usize) -> Result<()> {
    if dimension == 0 {
        return Err(Error::InvalidConfig("embedding dimension must be >= 1".into()));
    }
    Ok(())
}

impl EmbeddingProvider for MockEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SummaryStyle {
    /// The first `max_summary_tokens` tokens of the context.
    Truncate,
    /// The first sentence of each blank-line separated constituent, in order,
    /// while the running total fits the budget.
    Extractive,
}

/// Offline summarizer with the same usage accounting as the HTTP client.
#[derive(Debug)]
pub struct MockSummarizer {
    style: SummaryStyle,
    max_summary_tokens: usize,
    tokenizer: Arc<dyn Tokenizer>,
    prompt: SummarizationPrompt,
    meter: UsageMeter,
}

impl MockSummarizer {
    pub fn new(
        style: SummaryStyle,
        max_summary_tokens: usize,
        tokenizer: Arc<dyn Tokenizer>,
    ) -> Result<Self> {
        if max_summary_tokens == 0 {
            return Err(Error::InvalidConfig("max_summary_tokens must be >= 1".into()));
        }
        Ok(Self {
            style,
            max_summary_tokens,
            tokenizer,
            prompt: SummarizationPrompt::default(),
            meter: UsageMeter::default(),
        })
    }

    fn extract(&self, context: &str) -> String {
        let mut picked: Vec<String> = Vec::new();
        let mut total = 0usize;
        for part in context.split("\n\n").map(str::trim).filter(|p| !p.is_empty()) {
            let Some(first) = split_sentences(part).into_iter().next() else {
                continue;
            };
            let n = self.tokenizer.count(&first);
            if total + n > self.max_summary_tokens {
                if picked.is_empty() {
                    picked.push(self.tokenizer.truncate(&first, self.max_summary_tokens));
                }
                break;
            }
            total += n;
            picked.push(first);
        }
        let joined = picked.join(" ");
        // Guard for tokenizers that are not additive over concatenation.
        if self.tokenizer.count(&joined) > self.max_summary_tokens {
            self.tokenizer.truncate(&joined, self.max_summary_tokens)
        } else {
            joined
        }
    }
}

impl SummarizationProvider for MockSummarizer {
    fn max_summary_tokens(&self) -> usize {
        self.max_summary_tokens
    }

    fn summarize(&self, context: &str) -> Result<String> {
        let summary = match self.style {
            SummaryStyle::Truncate => self.tokenizer.truncate(context, self.max_summary_tokens),
            SummaryStyle::Extractive => self.extract(context),
        };
        let prompt_tokens = self.tokenizer.count(&self.prompt.system)
            + self.tokenizer.count(&self.prompt.user_message(context));
        self.meter
            .record(prompt_tokens as u64, self.tokenizer.count(&summary) as u64);
        Ok(summary)
    }

    fn usage(&self) -> Usage {
        self.meter.snapshot()
    }
}
