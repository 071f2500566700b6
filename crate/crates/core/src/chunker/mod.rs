//! Sentence-preserving, token-budgeted chunking of source documents.
//!
//! Chunks are built by greedy packing: whole sentences are appended to the
//! current chunk while its token count stays within the budget. A sentence
//! that would overflow starts the next chunk, and a sentence that alone
//! exceeds the budget becomes a chunk of its own.

mod sentences;
mod tokenizer;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use sentences::{sentence_spans, split_sentences};
pub use tokenizer::{Tokenizer, WhitespacePunct};

use crate::error::{Error, Result};

pub const DEFAULT_CHUNK_BUDGET: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub text: String,
    pub token_count: usize,
    /// Character (not byte) index of the chunk's first sentence in its document.
    pub source_offset: usize,
    pub doc_id: String,
}

impl Chunk {
    /// True when the chunk is a single sentence longer than `budget`.
    pub fn is_oversize(&self, budget: usize) -> bool {
        self.token_count > budget
    }
}

#[derive(Debug, Clone)]
pub struct Chunker {
    budget: usize,
    tokenizer: Arc<dyn Tokenizer>,
}

impl Chunker {
    pub fn new(budget: usize, tokenizer: Arc<dyn Tokenizer>) -> Result<Self> {
        if budget < 1 {
            return Err(Error::InvalidConfig("chunk budget must be >= 1".into()));
        }
        Ok(Self { budget, tokenizer })
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn tokenizer(&self) -> &Arc<dyn Tokenizer> {
        &self.tokenizer
    }

    pub fn chunk_document(&self, doc_id: &str, text: &str) -> Vec<Chunk> {
        let mut chunks = Vec::new();
        // (first sentence char offset, sentence texts, running token count)
        let mut current: Option<(usize, Vec<&str>, usize)> = None;

        let mut char_pos = 0usize;
        let mut byte_pos = 0usize;
        for span in sentence_spans(text) {
            char_pos += text[byte_pos..span.start].chars().count();
            byte_pos = span.start;
            let sentence = &text[span];
            let tokens = self.tokenizer.count(sentence);

            match current.as_mut() {
                Some((_, parts, total)) if *total + tokens <= self.budget => {
                    parts.push(sentence);
                    *total += tokens;
                }
                _ => {
                    if let Some(done) = current.take() {
                        chunks.push(self.finish(doc_id, done));
                    }
                    current = Some((char_pos, vec![sentence], tokens));
                }
            }
        }
        if let Some(done) = current {
            chunks.push(self.finish(doc_id, done));
        }
        chunks
    }

    fn finish(&self, doc_id: &str, (offset, parts, _): (usize, Vec<&str>, usize)) -> Chunk {
        let text = parts.join(" ");
        Chunk {
            token_count: self.tokenizer.count(&text),
            text,
            source_offset: offset,
            doc_id: doc_id.to_string(),
        }
    }
}

/// Chunk `text` with the default tokenizer.
pub fn chunk_text(text: &str, budget: usize) -> Result<Vec<Chunk>> {
    Ok(Chunker::new(budget, Arc::new(WhitespacePunct))?.chunk_document("", text))
}

/// Tokenize with the default tokenizer.
pub fn tokenize(text: &str) -> Vec<String> {
    WhitespacePunct.tokenize(text)
}
