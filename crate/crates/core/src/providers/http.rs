//! JSON-over-HTTP clients for OpenAI-compatible embeddings and
//! chat-completions endpoints.
//!
//! Embeddings: `POST {"model", "input": [text...]}` and read
//! `{"data": [{"index", "embedding": [f64...]}]}`.
//! Chat: `POST {"model", "messages": [system, user], "temperature": 0,
//! "max_tokens"}` and read `choices[0].message.content` plus the optional
//! `usage.{prompt_tokens, completion_tokens}` block.

use std::sync::Arc;
use std::thread;
use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};

use super::{
    EmbeddingProvider, SummarizationPrompt, SummarizationProvider, Usage, UsageMeter,
    DEFAULT_RETRY_DELAY,
};
use crate::chunker::Tokenizer;
use crate::error::{Error, Result};

const REQUEST_TIMEOUT: Duration = Duration::from_secs(120);

/// Bounded retries with exponential backoff for transient failures
/// (transport errors, HTTP 429 and 5xx).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            base_delay: DEFAULT_RETRY_DELAY,
        }
    }
}

impl RetryPolicy {
    fn run<T>(&self, mut call: impl FnMut() -> Result<T>) -> Result<T> {
        let attempts = self.attempts.max(1);
        let mut delay = self.base_delay;
        let mut last = None;
        for attempt in 1..=attempts {
            match call() {
                Ok(v) => return Ok(v),
                Err(Error::Provider {
                    message,
                    retryable: true,
                }) => {
                    log::warn!("provider attempt {attempt}/{attempts} failed: {message}");
                    last = Some(message);
                    if attempt < attempts {
                        thread::sleep(delay);
                        delay *= 2;
                    }
                }
                Err(e) => return Err(e),
            }
        }
        Err(Error::provider(
            format!(
                "giving up after {attempts} attempts: {}",
                last.unwrap_or_default()
            ),
            true,
        ))
    }
}

fn client() -> Result<Client> {
    Client::builder()
        .timeout(REQUEST_TIMEOUT)
        .build()
        .map_err(|e| Error::provider(format!("http client: {e}"), false))
}

fn post_json<B: Serialize, R: for<'de> Deserialize<'de>>(
    client: &Client,
    url: &str,
    api_key: Option<&str>,
    body: &B,
) -> Result<R> {
    let mut req = client.post(url).json(body);
    if let Some(key) = api_key {
        req = req.bearer_auth(key);
    }
    let resp = req
        .send()
        .map_err(|e| Error::provider(format!("POST {url}: {e}"), true))?;
    let status = resp.status();
    if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
        return Err(Error::provider(format!("POST {url}: HTTP {status}"), true));
    }
    if !status.is_success() {
        let text = resp.text().unwrap_or_default();
        return Err(Error::provider(
            format!("POST {url}: HTTP {status}: {text}"),
            false,
        ));
    }
    resp.json::<R>()
        .map_err(|e| Error::provider(format!("POST {url}: bad response body: {e}"), false))
}

#[derive(Debug, Serialize)]
struct EmbeddingRequest<'a> {
    model: &'a str,
    input: &'a [String],
}

#[derive(Debug, Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Debug, Deserialize)]
struct EmbeddingDatum {
    #[serde(default)]
    index: Option<usize>,
    embedding: Vec<f64>,
}

#[derive(Debug)]
pub struct HttpEmbedder {
    url: String,
    model: String,
    dimension: usize,
    api_key: Option<String>,
    retry: RetryPolicy,
    client: Client,
}

impl HttpEmbedder {
    pub fn new(
        url: impl Into<String>,
        model: impl Into<String>,
        dimension: usize,
        api_key: Option<String>,
    ) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::InvalidConfig("embedding dimension must be >= 1".into()));
        }
        Ok(Self {
            url: url.into(),
            model: model.into(),
            dimension,
            api_key,
            retry: RetryPolicy::default(),
            client: client()?,
        })
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }
}

impl EmbeddingProvider for HttpEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        let body = EmbeddingRequest {
            model: &self.model,
            input: texts,
        };
        let resp: EmbeddingResponse = self
            .retry
            .run(|| post_json(&self.client, &self.url, self.api_key.as_deref(), &body))?;
        let mut data = resp.data;
        if data.iter().all(|d| d.index.is_some()) {
            data.sort_by_key(|d| d.index);
        }
        Ok(data.into_iter().map(|d| d.embedding).collect())
    }
}

#[derive(Debug, Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Debug, Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 2],
    temperature: f64,
    max_tokens: usize,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
    #[serde(default)]
    usage: Option<ChatUsage>,
}

#[derive(Debug, Deserialize)]
struct ChatChoice {
    message: ChatReply,
}

#[derive(Debug, Deserialize)]
struct ChatReply {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Debug, Deserialize)]
struct ChatUsage {
    prompt_tokens: u64,
    completion_tokens: u64,
}

#[derive(Debug)]
pub struct HttpSummarizer {
    url: String,
    model: String,
    max_summary_tokens: usize,
    api_key: Option<String>,
    tokenizer: Arc<dyn Tokenizer>,
    prompt: SummarizationPrompt,
    retry: RetryPolicy,
    meter: UsageMeter,
    client: Client,
}

impl HttpSummarizer {
    pub fn new(
        url: impl Into<String>,
        model: impl Into<String>,
        max_summary_tokens: usize,
        api_key: Option<String>,
        tokenizer: Arc<dyn Tokenizer>,
    ) -> Result<Self> {
        if max_summary_tokens == 0 {
            return Err(Error::InvalidConfig("max_summary_tokens must be >= 1".into()));
        }
        Ok(Self {
            url: url.into(),
            model: model.into(),
            max_summary_tokens,
            api_key,
            tokenizer,
            prompt: SummarizationPrompt::default(),
            retry: RetryPolicy::default(),
            meter: UsageMeter::default(),
            client: client()?,
        })
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }
}

impl SummarizationProvider for HttpSummarizer {
    fn max_summary_tokens(&self) -> usize {
        self.max_summary_tokens
    }

    fn summarize(&self, context: &str) -> Result<String> {
        let user = self.prompt.user_message(context);
        let body = ChatRequest {
            model: &self.model,
            messages: [
                ChatMessage {
                    role: "system",
                    content: &self.prompt.system,
                },
                ChatMessage {
                    role: "user",
                    content: &user,
                },
            ],
            temperature: 0.0,
            max_tokens: self.max_summary_tokens,
        };
        let resp: ChatResponse = self
            .retry
            .run(|| post_json(&self.client, &self.url, self.api_key.as_deref(), &body))?;
        let text = resp
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .map(|s| s.trim().to_string())
            .unwrap_or_default();
        if text.is_empty() {
            return Err(Error::provider("chat endpoint returned no content", false));
        }
        let (prompt_tokens, completion_tokens) = match resp.usage {
            Some(u) => (u.prompt_tokens, u.completion_tokens),
            None => (
                (self.tokenizer.count(&self.prompt.system) + self.tokenizer.count(&user)) as u64,
                self.tokenizer.count(&text) as u64,
            ),
        };
        self.meter.record(prompt_tokens, completion_tokens);
        Ok(text)
    }

    fn usage(&self) -> Usage {
        self.meter.snapshot()
    }
}
