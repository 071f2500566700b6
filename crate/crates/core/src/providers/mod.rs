//! Embedding and summarization backends.
//!
//! Two families implement each trait: deterministic offline mocks (the
//! default in tests and benchmarks) and JSON-over-HTTP clients for
//! embeddings and chat-completion services. [`EmbedderSpec`] and
//! [`SummarizerSpec`] are the serializable descriptions stored in a build
//! config; they rebuild an equivalent provider at query time.

mod http;
mod mock;
mod prompt;

use std::fmt::Debug;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use http::{HttpEmbedder, HttpSummarizer, RetryPolicy};
pub use mock::{hash_unit_vector, Lexicon, MockEmbedder, MockSummarizer, SummaryStyle};
pub use prompt::{SummarizationPrompt, SYSTEM_PROMPT, USER_TEMPLATE};

pub use crate::vector::cosine_similarity;

use crate::chunker::Tokenizer;
use crate::error::{Error, Result};

pub const ENV_EMBED_URL: &str = "RAPTOR_EMBED_URL";
pub const ENV_LLM_URL: &str = "RAPTOR_LLM_URL";
pub const ENV_API_KEY: &str = "RAPTOR_API_KEY";

pub const DEFAULT_MAX_SUMMARY_TOKENS: usize = 150;
pub const DEFAULT_EMBED_MODEL: &str = "multi-qa-mpnet-base-cos-v1";
pub const DEFAULT_LLM_MODEL: &str = "gpt-3.5-turbo";

pub trait EmbeddingProvider: Debug + Send + Sync {
    fn dimension(&self) -> usize;

    /// Embed a batch. Implementations return one vector per input, in order;
    /// validation and normalization happen in [`embed_texts`].
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>>;
}

pub trait SummarizationProvider: Debug + Send + Sync {
    fn max_summary_tokens(&self) -> usize;

    fn summarize(&self, context: &str) -> Result<String>;

    /// Cumulative token usage across all calls so far.
    fn usage(&self) -> Usage;
}

/// Embed `texts`, checking the provider contract and returning unit-norm
/// vectors.
pub fn embed_texts(provider: &dyn EmbeddingProvider, texts: &[String]) -> Result<Vec<Vec<f64>>> {
    if texts.is_empty() {
        return Err(Error::InvalidInput("no texts to embed".into()));
    }
    if let Some(i) = texts.iter().position(|t| t.trim().is_empty()) {
        return Err(Error::InvalidInput(format!("text {i} is empty")));
    }
    let vectors = provider.embed_batch(texts)?;
    if vectors.len() != texts.len() {
        return Err(Error::provider(
            format!(
                "embedder returned {} vectors for {} texts",
                vectors.len(),
                texts.len()
            ),
            false,
        ));
    }
    let dim = provider.dimension();
    vectors
        .into_iter()
        .map(|v| {
            if v.len() != dim {
                return Err(Error::provider(
                    format!("embedding has dimension {}, expected {dim}", v.len()),
                    false,
                ));
            }
            crate::vector::normalize(&v)
                .map_err(|_| Error::provider("embedder returned a zero vector", false))
        })
        .collect()
}

/// Summarize `context`, rejecting empty input and empty model output.
pub fn summarize(provider: &dyn SummarizationProvider, context: &str) -> Result<String> {
    if context.trim().is_empty() {
        return Err(Error::InvalidInput("empty summarization context".into()));
    }
    let summary = provider.summarize(context)?;
    if summary.trim().is_empty() {
        return Err(Error::provider("summarizer returned empty output", false));
    }
    Ok(summary)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub calls: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl Usage {
    pub fn total(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }
}

/// Lock-free cumulative usage counters.
#[derive(Debug, Default)]
pub struct UsageMeter {
    calls: AtomicU64,
    prompt: AtomicU64,
    completion: AtomicU64,
}

impl UsageMeter {
    pub fn record(&self, prompt_tokens: u64, completion_tokens: u64) {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.prompt.fetch_add(prompt_tokens, Ordering::Relaxed);
        self.completion.fetch_add(completion_tokens, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> Usage {
        Usage {
            calls: self.calls.load(Ordering::Relaxed),
            prompt_tokens: self.prompt.load(Ordering::Relaxed),
            completion_tokens: self.completion.load(Ordering::Relaxed),
        }
    }
}

/// Serializable embedder description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EmbedderSpec {
    /// Whole-text hash to a pseudo-random unit vector.
    Mock { seed: u64, dimension: usize },
    /// Hashed bag of words; lexicon keywords pull toward per-topic centroids.
    MockLexical {
        seed: u64,
        dimension: usize,
        #[serde(default)]
        lexicon: Lexicon,
    },
    /// OpenAI-style embeddings endpoint. The URL and key come from the
    /// environment (or an explicit override) and are not persisted.
    Http { model: String, dimension: usize },
}

impl EmbedderSpec {
    pub fn mock(seed: u64) -> Self {
        EmbedderSpec::Mock {
            seed,
            dimension: mock::DEFAULT_MOCK_DIMENSION,
        }
    }

    pub fn dimension(&self) -> usize {
        match self {
            EmbedderSpec::Mock { dimension, .. }
            | EmbedderSpec::MockLexical { dimension, .. }
            | EmbedderSpec::Http { dimension, .. } => *dimension,
        }
    }

    /// Instantiate the provider. HTTP embedders read [`ENV_EMBED_URL`] and
    /// [`ENV_API_KEY`] unless `endpoint` is given.
    pub fn build(&self, endpoint: Option<&str>) -> Result<Arc<dyn EmbeddingProvider>> {
        Ok(match self {
            EmbedderSpec::Mock { seed, dimension } => {
                Arc::new(MockEmbedder::hashed(*seed, *dimension)?)
            }
            EmbedderSpec::MockLexical {
                seed,
                dimension,
                lexicon,
            } => Arc::new(MockEmbedder::lexical(*seed, *dimension, lexicon.clone())?),
            EmbedderSpec::Http { model, dimension } => {
                let url = resolve_url(endpoint, ENV_EMBED_URL)?;
                Arc::new(HttpEmbedder::new(
                    url,
                    model.clone(),
                    *dimension,
                    std::env::var(ENV_API_KEY).ok(),
                )?)
            }
        })
    }
}

/// Serializable summarizer description.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SummarizerSpec {
    /// First `max_summary_tokens` tokens of the context.
    MockTruncate { max_summary_tokens: usize },
    /// First sentence of each constituent text, up to the token budget.
    MockExtractive { max_summary_tokens: usize },
    /// OpenAI-style chat-completions endpoint at temperature 0.
    Http {
        model: String,
        max_summary_tokens: usize,
    },
}

impl SummarizerSpec {
    pub fn max_summary_tokens(&self) -> usize {
        match self {
            SummarizerSpec::MockTruncate { max_summary_tokens }
            | SummarizerSpec::MockExtractive { max_summary_tokens }
            | SummarizerSpec::Http {
                max_summary_tokens, ..
            } => *max_summary_tokens,
        }
    }

    pub fn build(
        &self,
        tokenizer: Arc<dyn Tokenizer>,
        endpoint: Option<&str>,
    ) -> Result<Arc<dyn SummarizationProvider>> {
        Ok(match self {
            SummarizerSpec::MockTruncate { max_summary_tokens } => Arc::new(MockSummarizer::new(
                SummaryStyle::Truncate,
                *max_summary_tokens,
                tokenizer,
            )?),
            SummarizerSpec::MockExtractive { max_summary_tokens } => Arc::new(
                MockSummarizer::new(SummaryStyle::Extractive, *max_summary_tokens, tokenizer)?,
            ),
            SummarizerSpec::Http {
                model,
                max_summary_tokens,
            } => {
                let url = resolve_url(endpoint, ENV_LLM_URL)?;
                Arc::new(HttpSummarizer::new(
                    url,
                    model.clone(),
                    *max_summary_tokens,
                    std::env::var(ENV_API_KEY).ok(),
                    tokenizer,
                )?)
            }
        })
    }
}

impl Default for SummarizerSpec {
    fn default() -> Self {
        SummarizerSpec::MockExtractive {
            max_summary_tokens: DEFAULT_MAX_SUMMARY_TOKENS,
        }
    }
}

fn resolve_url(explicit: Option<&str>, var: &str) -> Result<String> {
    match explicit {
        Some(url) => Ok(url.to_string()),
        None => std::env::var(var)
            .map_err(|_| Error::InvalidConfig(format!("{var} is not set"))),
    }
}

#[cfg(test)]
pub(crate) fn default_tokenizer() -> Arc<dyn Tokenizer> {
    Arc::new(crate::chunker::WhitespacePunct)
}

pub(crate) const DEFAULT_RETRY_DELAY: Duration = Duration::from_secs(1);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embed_texts_validates_input() {
        let e = MockEmbedder::hashed(1, 8).unwrap();
        assert!(matches!(embed_texts(&e, &[]), Err(Error::InvalidInput(_))));
        assert!(matches!(
            embed_texts(&e, &["ok".into(), "  ".into()]),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn embed_texts_rejects_wrong_dimension() {
        #[derive(Debug)]
        struct Bad;
        impl EmbeddingProvider for Bad {
            fn dimension(&self) -> usize {
                3
            }
            fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
                Ok(texts.iter().map(|_| vec![1.0, 0.0]).collect())
            }
        }
        assert!(embed_texts(&Bad, &["x".into()]).unwrap_err().is_provider_failure());
    }

    #[test]
    fn summarize_rejects_empty_output() {
        #[derive(Debug)]
        struct Silent;
        impl SummarizationProvider for Silent {
            fn max_summary_tokens(&self) -> usize {
                10
            }
            fn summarize(&self, _: &str) -> Result<String> {
                Ok("   ".into())
            }
            fn usage(&self) -> Usage {
                Usage::default()
            }
        }
        assert!(summarize(&Silent, "text").unwrap_err().is_provider_failure());
        assert!(matches!(summarize(&Silent, ""), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn specs_round_trip_through_json() {
        let spec = EmbedderSpec::MockLexical {
            seed: 3,
            dimension: 16,
            lexicon: Lexicon::new(vec![vec!["alpha".into()], vec!["beta".into()]]),
        };
        let json = serde_json::to_string(&spec).unwrap();
        assert!(json.contains("\"kind\":\"mock-lexical\""));
        assert_eq!(serde_json::from_str::<EmbedderSpec>(&json).unwrap(), spec);
    }

    #[test]
    fn http_spec_without_url_is_config_error() {
        std::env::remove_var(ENV_LLM_URL);
        let spec = SummarizerSpec::Http {
            model: "m".into(),
            max_summary_tokens: 10,
        };
        assert!(matches!(
            spec.build(default_tokenizer(), None),
            Err(Error::InvalidConfig(_))
        ));
    }
}
